//! The `rplkg` command line.
//!
//! Exit codes: 0 on success, 1 on usage or validation errors, 2 on I/O or
//! format errors.

use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::baselines::{BaselineKind, DEFAULT_ATTENTIVE_TEMPERATURE};
use crate::embedstore::{
    load_cache, read_cache, save_cache, synth_encode, CacheKind, EmbeddingCache, ImageSet,
    PromptBank, SyntheticWorld,
};
use crate::error::{Error, Result};
use crate::evalharness::{
    baseline_base_to_new, bench_iteration, emit_report, eval_base_to_new, eval_domain_shift,
    evaluate_baseline, evaluate_selector, mean_over_seeds, parse_reports_json, sample_k_shot,
    BaseNewSplit, DomainTarget, EvalReport, ReportFormat, SELECTOR_METHOD,
};
use crate::kgprompt::{build_prompt_set, parse_graph_dump, GraphIndex, PromptSet};
use crate::selector::{read_checkpoint, write_checkpoint, SelectionMode, SelectorParams};
use crate::trainloop::{grid_search, train, HyperGrid, TrainConfig};

pub const THREADS_ENV: &str = "RPLKG_THREADS";

pub const IMAGES_FILE: &str = "images.rpkg";
pub const PROMPTS_FILE: &str = "prompts.rpkg";
pub const TEMPLATE_FILE: &str = "template.rpkg";
pub const CLASSES_FILE: &str = "classes.txt";
pub const PROMPT_SET_FILE: &str = "prompts.jsonl";
pub const WORLD_FILE: &str = "world.json";
pub const SHIFTED_DIR: &str = "shifted";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const EPOCHS_FILE: &str = "epochs.csv";
pub const REPORT_FILE: &str = "report.json";
pub const LEADERBOARD_FILE: &str = "leaderboard.csv";

#[derive(Debug, Parser)]
#[command(
    name = "rplkg",
    version,
    about = "Knowledge-graph prompts and a learned prompt selector"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build a prompt set from a graph dump and a class list.
    BuildPrompts(BuildPromptsArgs),
    /// Generate a synthetic world directory.
    Synth(SynthArgs),
    /// Validate and import an embedding cache (RPKG or CSV).
    ImportCache(ImportCacheArgs),
    /// Train a selector on a k-shot task.
    Train(TrainArgs),
    /// Evaluate a checkpoint and baselines on the k-shot test split.
    Eval(EvalArgs),
    /// Train on base classes, evaluate on base and new classes.
    Base2new(Base2NewArgs),
    /// Evaluate a checkpoint on shifted image sets.
    Domainshift(DomainShiftArgs),
    /// Time one training iteration.
    Bench(BenchArgs),
    /// Merge JSON reports and render them.
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct BuildPromptsArgs {
    #[arg(long)]
    pub graph: PathBuf,
    /// One class name per line.
    #[arg(long)]
    pub classes: PathBuf,
    #[arg(long)]
    pub dataset: String,
    #[arg(long)]
    pub out: PathBuf,
    /// Keep at most this many prompts per class (highest weights first).
    #[arg(long)]
    pub max_prompts: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 5)]
    pub classes: usize,
    #[arg(long, default_value_t = 64)]
    pub dim: usize,
    #[arg(long, default_value_t = 8)]
    pub prompts: usize,
    #[arg(long, default_value_t = 50)]
    pub images_per_class: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Also write a shifted image set with this noise level.
    #[arg(long)]
    pub shift_noise: Option<f64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct ImportCacheArgs {
    /// An RPKG file, or CSV rows `class_id[,prompt_j],v1,...,vd`.
    #[arg(long = "input")]
    pub input: PathBuf,
    /// Record kind for CSV input: image or prompt.
    #[arg(long, default_value = "image")]
    pub kind: String,
    #[arg(long)]
    pub out: PathBuf,
}

/// Selector hyperparameters. Unset flags fall back to `--config`, then to
/// the defaults.
#[derive(Debug, Args, Default)]
pub struct HyperArgs {
    /// TOML file with training settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub tau: Option<f64>,
    #[arg(long)]
    pub dropout: Option<f64>,
    #[arg(long)]
    pub alpha: Option<f64>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub mode: Option<SelectionMode>,
    #[arg(long)]
    pub logit_scale: Option<f64>,
}

impl HyperArgs {
    pub fn resolve(&self) -> Result<TrainConfig> {
        let mut c = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path)?;
                toml::from_str(&text)
                    .map_err(|e| Error::validation(format!("{}: {e}", path.display())))?
            }
            None => TrainConfig::default(),
        };
        macro_rules! overlay {
            ($($flag:ident => $field:ident),*) => {
                $(if let Some(v) = self.$flag { c.$field = v; })*
            };
        }
        overlay!(seed => seed, tau => tau, dropout => dropout, alpha => alpha_blend,
            weight_decay => weight_decay, lr => learning_rate, epochs => epochs,
            batch => batch_size, mode => mode, logit_scale => logit_scale);
        c.validate()?;
        Ok(c)
    }
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Directory with images.rpkg, prompts.rpkg, classes.txt and optionally
    /// template.rpkg.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "synthetic")]
    pub dataset: String,
    #[arg(long, default_value_t = 16)]
    pub k: usize,
    /// Search the default hyperparameter grid and keep the best cell.
    #[arg(long)]
    pub grid: bool,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "synthetic")]
    pub dataset: String,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 16)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// rplkg, zeroshot, random, average, attentive, or all.
    #[arg(long, default_value = "all")]
    pub method: String,
    /// Per-class selected-prompt counts as JSON lines.
    #[arg(long)]
    pub selection_out: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    pub format: ReportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct Base2NewArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value = "synthetic")]
    pub dataset: String,
    #[arg(long, default_value_t = 16)]
    pub k: usize,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long, default_value = "json")]
    pub format: ReportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct DomainShiftArgs {
    /// Source data directory (prompts and class list).
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Target directories with images.rpkg and classes.txt.
    #[arg(long = "target", required = true)]
    pub targets: Vec<PathBuf>,
    #[arg(long, default_value = "json")]
    pub format: ReportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 512)]
    pub dim: usize,
    #[arg(long, default_value_t = 47)]
    pub classes: usize,
    #[arg(long, default_value_t = 8)]
    pub prompts: usize,
    #[arg(long, default_value_t = 64)]
    pub batch: usize,
    #[arg(long, default_value_t = 11)]
    pub reps: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// JSON report files.
    #[arg(long = "input", required = true)]
    pub inputs: Vec<PathBuf>,
    /// Average rows that differ only by seed.
    #[arg(long)]
    pub mean_seeds: bool,
    #[arg(long, default_value = "markdown")]
    pub format: ReportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Parses `args` (program name first), runs the command, and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return e.exit_code();
    }
    match execute(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().ok().filter(|&n| n > 0).ok_or_else(|| {
        Error::validation(format!(
            "{THREADS_ENV} must be a positive integer, got {raw:?}"
        ))
    })?;
    // A pool may already exist when run() is called twice in one process.
    let _ = rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global();
    Ok(())
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::BuildPrompts(a) => build_prompts(a),
        Command::Synth(a) => synth(a),
        Command::ImportCache(a) => import_cache(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval_cmd(a),
        Command::Base2new(a) => base2new_cmd(a),
        Command::Domainshift(a) => domainshift_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::Report(a) => report_cmd(a),
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        let line = line.trim();
        if !line.is_empty() {
            out.push(line.to_string());
        }
    }
    Ok(out)
}

fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for l in lines {
        writeln!(w, "{l}")?;
    }
    w.flush()?;
    Ok(())
}

fn write_output(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes)?,
        None => std::io::stdout().write_all(bytes)?,
    }
    Ok(())
}

fn build_prompts(a: BuildPromptsArgs) -> Result<()> {
    let parsed = parse_graph_dump(BufReader::new(File::open(&a.graph)?))?;
    let classes = read_lines(&a.classes)?;
    let graph = GraphIndex::new(parsed.triplets);
    let (set, stats) = build_prompt_set(&classes, &a.dataset, &graph, a.max_prompts)?;
    set.write_jsonl(BufWriter::new(File::create(&a.out)?))?;
    if parsed.malformed > 0 {
        eprintln!("skipped {} malformed graph lines", parsed.malformed);
    }
    let levels: Vec<String> = stats.level_hits.iter().map(usize::to_string).collect();
    println!(
        "classes {} mean M_c {:.2} level hits {}",
        set.num_classes(),
        stats.mean_prompts,
        levels.join(" ")
    );
    Ok(())
}

/// Stream id for the shifted image draw.
const SHIFT_STREAM: u64 = 1;

fn synth(a: SynthArgs) -> Result<()> {
    let world = SyntheticWorld::new(
        a.seed,
        a.classes,
        a.dim,
        a.prompts,
        a.images_per_class,
        a.noise,
    )?;
    let caches = synth_encode(&world)?;
    fs::create_dir_all(&a.out)?;
    save_cache(&caches.images, a.out.join(IMAGES_FILE))?;
    save_cache(&caches.prompts, a.out.join(PROMPTS_FILE))?;
    save_cache(&caches.templates, a.out.join(TEMPLATE_FILE))?;
    world
        .prompt_set()
        .write_jsonl(BufWriter::new(File::create(a.out.join(PROMPT_SET_FILE))?))?;
    let names = world.class_names();
    write_lines(&a.out.join(CLASSES_FILE), &names)?;
    let mut json = serde_json::to_vec_pretty(&world)?;
    json.push(b'\n');
    fs::write(a.out.join(WORLD_FILE), json)?;
    if let Some(noise) = a.shift_noise {
        let dir = a.out.join(SHIFTED_DIR);
        fs::create_dir_all(&dir)?;
        save_cache(
            &world.images_with(noise, SHIFT_STREAM)?,
            dir.join(IMAGES_FILE),
        )?;
        write_lines(&dir.join(CLASSES_FILE), &names)?;
    }
    println!(
        "wrote {} images, {} prompts to {}",
        caches.images.len(),
        caches.prompts.len(),
        a.out.display()
    );
    Ok(())
}

fn parse_csv_cache(path: &Path, kind: CacheKind) -> Result<EmbeddingCache> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let lead = if kind == CacheKind::Image { 1 } else { 2 };
    let mut raw = Vec::new();
    let mut labels = Vec::new();
    let mut js = Vec::new();
    let mut dim = None;
    for (line, rec) in reader.records().enumerate() {
        let rec = rec?;
        let bad = |what: &str| Error::format(format!("{}:{}: {what}", path.display(), line + 1));
        if rec.len() <= lead {
            return Err(bad("row has no vector"));
        }
        let d = rec.len() - lead;
        if *dim.get_or_insert(d) != d {
            return Err(bad("inconsistent vector length"));
        }
        labels.push(rec[0].parse::<u32>().map_err(|_| bad("bad class id"))?);
        if lead == 2 {
            js.push(rec[1].parse::<u32>().map_err(|_| bad("bad prompt index"))?);
        }
        for field in rec.iter().skip(lead) {
            raw.push(field.parse::<f64>().map_err(|_| bad("bad number"))?);
        }
    }
    let dim = dim.ok_or_else(|| Error::format(format!("{}: no rows", path.display())))?;
    match kind {
        CacheKind::Image => EmbeddingCache::images(dim, &raw, labels),
        CacheKind::Prompt => EmbeddingCache::prompts(dim, &raw, labels, js),
    }
}

fn import_cache(a: ImportCacheArgs) -> Result<()> {
    let is_rpkg = a.input.extension().is_some_and(|e| e == "rpkg");
    let cache = if is_rpkg {
        read_cache(BufReader::new(File::open(&a.input)?))?
    } else {
        let kind = match a.kind.as_str() {
            "image" => CacheKind::Image,
            "prompt" => CacheKind::Prompt,
            other => return Err(Error::validation(format!("unknown cache kind {other:?}"))),
        };
        parse_csv_cache(&a.input, kind)?
    };
    cache.validate()?;
    let bytes = save_cache(&cache, &a.out)?;
    println!("records {} dim {} bytes {}", cache.len(), cache.dim, bytes);
    Ok(())
}

/// Caches and class list of one data directory.
pub struct DataDir {
    pub class_names: Vec<String>,
    pub images: ImageSet,
    pub bank: Option<PromptBank>,
    pub templates: Option<PromptBank>,
}

impl DataDir {
    pub fn load(dir: &Path, with_prompts: bool) -> Result<Self> {
        let class_names = read_lines(&dir.join(CLASSES_FILE))?;
        let c = class_names.len();
        let images = ImageSet::from_cache(&load_cache(dir.join(IMAGES_FILE))?, c)?;
        let bank = if with_prompts {
            Some(PromptBank::from_cache(
                &load_cache(dir.join(PROMPTS_FILE))?,
                c,
            )?)
        } else {
            None
        };
        let template_path = dir.join(TEMPLATE_FILE);
        let templates = if with_prompts && template_path.exists() {
            Some(PromptBank::from_cache(&load_cache(template_path)?, c)?)
        } else {
            None
        };
        Ok(DataDir {
            class_names,
            images,
            bank,
            templates,
        })
    }

    fn bank(&self) -> &PromptBank {
        self.bank.as_ref().expect("loaded with prompts")
    }
}

fn load_checkpoint(path: &Path) -> Result<(SelectorParams, f64)> {
    let (params, header) = read_checkpoint(BufReader::new(File::open(path)?))?;
    Ok((params, header.alpha_blend))
}

fn train_cmd(a: TrainArgs) -> Result<()> {
    let config = a.hyper.resolve()?;
    let data = DataDir::load(&a.data, true)?;
    let task = sample_k_shot(&a.dataset, &data.images, a.k, config.seed)?;
    fs::create_dir_all(&a.out)?;
    let config = if a.grid {
        let grid = grid_search(
            &config,
            &HyperGrid::default(),
            &task,
            &data.images,
            data.bank(),
            data.templates.as_ref(),
        )?;
        grid.write_csv(BufWriter::new(File::create(a.out.join(LEADERBOARD_FILE))?))?;
        grid.best().config.clone()
    } else {
        config
    };
    let result = train(
        &config,
        &task,
        &data.images,
        data.bank(),
        data.templates.as_ref(),
    )?;
    write_checkpoint(
        &result.params,
        config.alpha_blend,
        config.seed,
        BufWriter::new(File::create(a.out.join(CHECKPOINT_FILE))?),
    )?;
    result.write_epochs_csv(BufWriter::new(File::create(a.out.join(EPOCHS_FILE))?))?;
    let report = evaluate_selector(
        &result.params,
        &task,
        &data.images,
        data.bank(),
        data.templates.as_ref(),
        config.alpha_blend,
    )?;
    fs::write(
        a.out.join(REPORT_FILE),
        emit_report(std::slice::from_ref(&report), ReportFormat::Json)?,
    )?;
    eprintln!(
        "{} steps, {:.6} s/iter, {:.3} s total",
        result.steps, result.seconds_per_iter, result.seconds_total
    );
    println!(
        "final train accuracy {:.4} test accuracy {:.4}",
        result.final_train_accuracy().unwrap_or(0.0),
        report.accuracy
    );
    Ok(())
}

fn eval_cmd(a: EvalArgs) -> Result<()> {
    let data = DataDir::load(&a.data, true)?;
    let task = sample_k_shot(&a.dataset, &data.images, a.k, a.seed)?;
    let want = |name: &str| a.method == "all" || a.method == name;
    if a.method != "all" && a.method != SELECTOR_METHOD && a.method.parse::<BaselineKind>().is_err()
    {
        return Err(Error::validation(format!("unknown method {:?}", a.method)));
    }
    let mut reports = Vec::new();
    if want(SELECTOR_METHOD) {
        let path = a
            .checkpoint
            .as_ref()
            .ok_or_else(|| Error::validation("--checkpoint is required to evaluate rplkg"))?;
        let (params, alpha) = load_checkpoint(path)?;
        let report = evaluate_selector(
            &params,
            &task,
            &data.images,
            data.bank(),
            data.templates.as_ref(),
            alpha,
        )?;
        if let Some(p) = &a.selection_out {
            let set =
                PromptSet::read_jsonl(BufReader::new(File::open(a.data.join(PROMPT_SET_FILE))?))?;
            report.write_selection_jsonl(&set, BufWriter::new(File::create(p)?))?;
        }
        reports.push(report);
    }
    for kind in BaselineKind::ALL {
        if !want(kind.name())
            || (kind == BaselineKind::Zeroshot && data.templates.is_none() && a.method == "all")
        {
            continue;
        }
        reports.push(evaluate_baseline(
            kind,
            &task,
            &data.images,
            data.bank(),
            data.templates.as_ref(),
            DEFAULT_ATTENTIVE_TEMPERATURE,
        )?);
    }
    write_output(a.out.as_deref(), &emit_report(&reports, a.format)?)
}

fn base_new_report(
    dataset: &str,
    method: &str,
    k: usize,
    seed: u64,
    b: crate::evalharness::BaseToNew,
) -> EvalReport {
    let mut r = EvalReport::new(dataset, method, b.h);
    r.k = Some(k);
    r.seed = Some(seed);
    r.base = Some(b.base);
    r.new = Some(b.new);
    r.h = Some(b.h);
    r
}

fn base2new_cmd(a: Base2NewArgs) -> Result<()> {
    let config = a.hyper.resolve()?;
    let data = DataDir::load(&a.data, true)?;
    let split = BaseNewSplit::new(data.class_names.len())?;
    let base_images = data.images.restrict_classes(&split.base_class_ids);
    let base_bank = data.bank().restrict(&split.base_class_ids)?;
    let base_templates = data
        .templates
        .as_ref()
        .map(|t| t.restrict(&split.base_class_ids))
        .transpose()?;
    let task = sample_k_shot(&a.dataset, &base_images, a.k, config.seed)?;
    let result = train(
        &config,
        &task,
        &base_images,
        &base_bank,
        base_templates.as_ref(),
    )?;
    let b2n = eval_base_to_new(
        &result.params,
        config.alpha_blend,
        &split,
        &task,
        &data.images,
        data.bank(),
        data.templates.as_ref(),
    )?;
    let mut reports = vec![base_new_report(
        &a.dataset,
        SELECTOR_METHOD,
        a.k,
        config.seed,
        b2n,
    )];
    for kind in BaselineKind::ALL {
        if kind == BaselineKind::Zeroshot && data.templates.is_none() {
            continue;
        }
        let b = baseline_base_to_new(
            kind,
            DEFAULT_ATTENTIVE_TEMPERATURE,
            &split,
            &task,
            &data.images,
            data.bank(),
            data.templates.as_ref(),
        )?;
        reports.push(base_new_report(
            &a.dataset,
            kind.name(),
            a.k,
            config.seed,
            b,
        ));
    }
    write_output(a.out.as_deref(), &emit_report(&reports, a.format)?)
}

fn domainshift_cmd(a: DomainShiftArgs) -> Result<()> {
    let source = DataDir::load(&a.data, true)?;
    let (params, alpha) = load_checkpoint(&a.checkpoint)?;
    let targets: Vec<DomainTarget> = a
        .targets
        .iter()
        .map(|dir| {
            let t = DataDir::load(dir, false)?;
            let name = dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| dir.display().to_string());
            Ok(DomainTarget {
                name,
                class_names: t.class_names,
                images: t.images,
            })
        })
        .collect::<Result<_>>()?;
    let scores = eval_domain_shift(
        &params,
        alpha,
        &source.class_names,
        source.bank(),
        source.templates.as_ref(),
        &targets,
    )?;
    let mut reports = Vec::new();
    for (target, (name, acc)) in targets.iter().zip(scores) {
        reports.push(EvalReport::new(&name, SELECTOR_METHOD, acc));
        if let Some(t) = &source.templates {
            let zs = crate::baselines::zeroshot_scores(target.images.features.view(), t)?;
            let preds: Vec<usize> = zs
                .rows()
                .into_iter()
                .map(|r| crate::selector::predict(&r.to_vec()))
                .collect();
            let acc = crate::evalharness::accuracy(&preds, &target.images.labels);
            reports.push(EvalReport::new(&name, BaselineKind::Zeroshot.name(), acc));
        }
    }
    write_output(a.out.as_deref(), &emit_report(&reports, a.format)?)
}

fn bench_cmd(a: BenchArgs) -> Result<()> {
    let defaults = TrainConfig::default();
    let params = SelectorParams::init(
        a.dim,
        a.seed,
        defaults.tau,
        defaults.dropout,
        defaults.logit_scale,
    )?;
    let rec = bench_iteration(&params, a.batch, a.classes, a.prompts, a.reps, a.seed)?;
    let mut w = csv::Writer::from_writer(Vec::new());
    w.serialize(&rec)?;
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    write_output(a.out.as_deref(), &bytes)
}

fn report_cmd(a: ReportArgs) -> Result<()> {
    let mut reports = Vec::new();
    for p in &a.inputs {
        reports.extend(parse_reports_json(&fs::read(p)?)?);
    }
    if a.mean_seeds {
        reports = mean_over_seeds(&reports);
    }
    write_output(a.out.as_deref(), &emit_report(&reports, a.format)?)
}
