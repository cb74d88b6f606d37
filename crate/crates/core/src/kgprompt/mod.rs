//! Knowledge-graph prompt construction.
//!
//! Class labels are matched against graph head entities through an
//! escalating rule ladder; each matched triplet becomes one sentence.

mod graph;
mod ladder;
mod prompt_set;
mod verbalize;

pub use graph::{parse_graph_dump, GraphIndex, ParsedGraph, Triplet};
pub use ladder::{ladder_candidates, lookup, LabelQuery, LookupResult, MAX_LEVEL};
pub use prompt_set::{build_prompt_set, manual_template, BuildStats, PromptRecord, PromptSet};
pub use verbalize::{relation_words, verbalize};
