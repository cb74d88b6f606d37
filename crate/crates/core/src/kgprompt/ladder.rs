//! Label normalization rules used to match dataset class names against graph
//! entities. Levels escalate: synonym split, lowercase, space merge, space
//! split. Level 0 is the manual-template fallback and has no candidates.

use super::graph::GraphIndex;

/// Datasets whose labels use "/" as part of the name rather than as a
/// synonym separator.
const SLASH_IN_NAME_DATASETS: [&str; 2] = ["fgvc_aircraft", "stanford_cars"];

pub const MAX_LEVEL: u8 = 4;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelQuery {
    pub raw_label: String,
    pub dataset_id: String,
    pub slash_is_synonym: bool,
}

fn canonical_dataset(id: &str) -> String {
    id.trim().to_lowercase().replace('-', "_")
}

impl LabelQuery {
    pub fn new(raw_label: impl Into<String>, dataset_id: impl Into<String>) -> Self {
        let dataset_id = dataset_id.into();
        let slash_is_synonym =
            !SLASH_IN_NAME_DATASETS.contains(&canonical_dataset(&dataset_id).as_str());
        LabelQuery {
            raw_label: raw_label.into(),
            dataset_id,
            slash_is_synonym,
        }
    }
}

fn push_unique(out: &mut Vec<String>, s: String) {
    if !s.is_empty() && !out.contains(&s) {
        out.push(s);
    }
}

/// Pulls `( ... )` groups out of `label`: the text outside the groups comes
/// first, followed by each group's contents.
fn split_parentheses(label: &str) -> Vec<String> {
    let mut outside = String::new();
    let mut groups = Vec::new();
    let mut rest = label;
    while let Some(open) = rest.find('(') {
        let Some(close) = rest[open..].find(')').map(|c| open + c) else {
            break;
        };
        outside.push_str(&rest[..open]);
        outside.push(' ');
        groups.push(rest[open + 1..close].to_string());
        rest = &rest[close + 1..];
    }
    outside.push_str(rest);
    let mut parts = vec![outside];
    parts.extend(groups);
    parts
}

/// Splits on standalone `or` words and collapses whitespace.
fn split_or(fragment: &str) -> Vec<String> {
    let mut pieces = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    for word in fragment.split_whitespace() {
        if word == "or" {
            pieces.push(current.join(" "));
            current.clear();
        } else {
            current.push(word);
        }
    }
    pieces.push(current.join(" "));
    pieces
}

fn level1(query: &LabelQuery) -> Vec<String> {
    let mut out = Vec::new();
    for part in split_parentheses(&query.raw_label) {
        let slash_parts: Vec<&str> = if query.slash_is_synonym {
            part.split('/').collect()
        } else {
            vec![part.as_str()]
        };
        for piece in slash_parts {
            for word_group in split_or(piece) {
                push_unique(&mut out, word_group.trim().to_string());
            }
        }
    }
    out
}

fn level2(query: &LabelQuery) -> Vec<String> {
    let mut out = Vec::new();
    for c in level1(query) {
        push_unique(&mut out, c.to_lowercase());
    }
    out
}

/// Entity keys to try for `query` at rule `level` (1..=4). Any other level
/// yields no candidates.
pub fn ladder_candidates(query: &LabelQuery, level: u8) -> Vec<String> {
    match level {
        1 => level1(query),
        2 => level2(query),
        3 => {
            let mut out = Vec::new();
            for c in level2(query) {
                push_unique(&mut out, c.chars().filter(|ch| *ch != ' ').collect());
            }
            out
        }
        4 => {
            let mut out = Vec::new();
            for c in level2(query) {
                for word in c.split([' ', '-', '_']) {
                    push_unique(&mut out, word.to_string());
                }
            }
            out
        }
        _ => Vec::new(),
    }
}

/// Matched entity keys and the rule level that produced them. Level 0 with
/// no keys means nothing in the graph matched.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LookupResult {
    pub keys: Vec<String>,
    pub level: u8,
}

/// Tries each rule level in turn and stops at the first one where some
/// candidate heads at least one triplet. Only the candidates with hits are
/// returned.
pub fn lookup(query: &LabelQuery, graph: &GraphIndex) -> LookupResult {
    for level in 1..=MAX_LEVEL {
        let keys: Vec<String> = ladder_candidates(query, level)
            .into_iter()
            .filter(|k| graph.contains(k))
            .collect();
        if !keys.is_empty() {
            return LookupResult { keys, level };
        }
    }
    LookupResult {
        keys: Vec::new(),
        level: 0,
    }
}
