fn main() {
    std::process::exit(rplkg::cli::run(std::env::args_os()));
}
