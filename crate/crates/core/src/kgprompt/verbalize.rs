use super::graph::Triplet;

/// Lowercased words of a camel-case relation name: `UsedFor` -> `used for`.
pub fn relation_words(relation: &str) -> String {
    let mut out = String::with_capacity(relation.len() + 4);
    for (i, ch) in relation.chars().enumerate() {
        if ch.is_uppercase() && i > 0 {
            out.push(' ');
        }
        out.extend(ch.to_lowercase());
    }
    out
}

/// The phrase placed between head and tail. `IsA` reads "is a"; every other
/// relation reads "is" followed by its split relation words.
fn connective(relation: &str) -> String {
    if relation == "IsA" {
        "is a".to_string()
    } else {
        format!("is {}", relation_words(relation))
    }
}

/// `{head} is {relation words} {tail}.`
pub fn verbalize(triplet: &Triplet) -> String {
    format!(
        "{} {} {}.",
        triplet.head,
        connective(&triplet.relation),
        triplet.tail
    )
}

/// Inverse of [`verbalize`] for a known relation and tail: recovers the head.
pub(crate) fn head_from_sentence<'a>(text: &'a str, relation: &str, tail: &str) -> Option<&'a str> {
    let suffix = format!(" {} {}.", connective(relation), tail);
    text.strip_suffix(suffix.as_str()).filter(|h| !h.is_empty())
}
