//! Per-class prompt sets built from graph lookups, and their JSON-lines form.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use super::graph::{GraphIndex, Triplet};
use super::ladder::{lookup, LabelQuery, MAX_LEVEL};
use super::verbalize::{head_from_sentence, verbalize};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PromptRecord {
    pub class_id: usize,
    pub text: String,
    /// 0 for the manual template, otherwise the rule level that matched.
    pub rule_level: u8,
    pub source: Option<Triplet>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PromptSet {
    pub dataset_id: String,
    pub class_names: Vec<String>,
    pub prompts: Vec<Vec<PromptRecord>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildStats {
    pub prompts_per_class: Vec<usize>,
    pub mean_prompts: f64,
    /// Number of classes whose lookup settled at each level, index 0..=4.
    pub level_hits: [usize; MAX_LEVEL as usize + 1],
}

/// The manual template used when the graph has nothing for a class.
pub fn manual_template(class_name: &str) -> String {
    format!("A photo of a {class_name}.")
}

fn class_prompts(
    class_id: usize,
    class_name: &str,
    dataset_id: &str,
    graph: &GraphIndex,
    max_per_class: Option<usize>,
) -> (Vec<PromptRecord>, u8) {
    let found = lookup(&LabelQuery::new(class_name, dataset_id), graph);

    let mut candidates: Vec<(String, &Triplet)> = Vec::new();
    let mut seen = HashSet::new();
    for key in &found.keys {
        for t in graph.triplets_for(key) {
            let text = verbalize(t);
            if seen.insert(text.clone()) {
                candidates.push((text, t));
            } else if max_per_class.is_some() {
                // Keep the heaviest triplet behind a duplicated sentence so the
                // cap sees the best weight.
                let slot = candidates.iter_mut().find(|(s, _)| *s == text).unwrap();
                if t.weight > slot.1.weight {
                    slot.1 = t;
                }
            }
        }
    }
    if let Some(cap) = max_per_class {
        candidates.sort_by(|a, b| b.1.weight.total_cmp(&a.1.weight));
        candidates.truncate(cap);
    }

    if candidates.is_empty() {
        let record = PromptRecord {
            class_id,
            text: manual_template(class_name),
            rule_level: 0,
            source: None,
        };
        return (vec![record], 0);
    }
    let records = candidates
        .into_iter()
        .map(|(text, t)| PromptRecord {
            class_id,
            text,
            rule_level: found.level,
            source: Some(t.clone()),
        })
        .collect();
    (records, found.level)
}

/// Builds the prompt set for `class_names`. Every class gets at least one
/// prompt: classes with no graph match fall back to [`manual_template`].
/// With `max_per_class`, only the highest-weight prompts are kept.
pub fn build_prompt_set(
    class_names: &[String],
    dataset_id: &str,
    graph: &GraphIndex,
    max_per_class: Option<usize>,
) -> Result<(PromptSet, BuildStats)> {
    if class_names.is_empty() {
        return Err(Error::validation("class list is empty"));
    }
    if max_per_class == Some(0) {
        return Err(Error::validation("max_per_class must be at least 1"));
    }
    let mut prompts = Vec::with_capacity(class_names.len());
    let mut level_hits = [0usize; MAX_LEVEL as usize + 1];
    for (c, name) in class_names.iter().enumerate() {
        let (records, level) = class_prompts(c, name, dataset_id, graph, max_per_class);
        level_hits[level as usize] += 1;
        prompts.push(records);
    }
    let prompts_per_class: Vec<usize> = prompts.iter().map(Vec::len).collect();
    let mean_prompts =
        prompts_per_class.iter().sum::<usize>() as f64 / prompts_per_class.len() as f64;
    let set = PromptSet {
        dataset_id: dataset_id.to_string(),
        class_names: class_names.to_vec(),
        prompts,
    };
    Ok((
        set,
        BuildStats {
            prompts_per_class,
            mean_prompts,
            level_hits,
        },
    ))
}

impl PromptSet {
    pub fn num_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn prompts_per_class(&self) -> Vec<usize> {
        self.prompts.iter().map(Vec::len).collect()
    }

    pub fn text(&self, class_id: usize, j: usize) -> Option<&str> {
        self.prompts.get(class_id)?.get(j).map(|r| r.text.as_str())
    }

    pub fn validate(&self) -> Result<()> {
        if self.prompts.len() != self.class_names.len() {
            return Err(Error::validation("prompt lists do not match class names"));
        }
        for (c, records) in self.prompts.iter().enumerate() {
            if records.is_empty() {
                return Err(Error::validation(format!("class {c} has no prompts")));
            }
            let mut seen = HashSet::new();
            for r in records {
                if r.class_id != c {
                    return Err(Error::validation(format!(
                        "record for class {} filed under {c}",
                        r.class_id
                    )));
                }
                if r.text.is_empty() || !seen.insert(r.text.as_str()) {
                    return Err(Error::validation(format!(
                        "empty or duplicate prompt in class {c}"
                    )));
                }
                if (r.rule_level == 0) != r.source.is_none() || r.rule_level > MAX_LEVEL {
                    return Err(Error::validation(format!(
                        "inconsistent rule level in class {c}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// One JSON object per prompt, classes in order.
    pub fn write_jsonl<W: Write>(&self, mut sink: W) -> Result<()> {
        for (c, records) in self.prompts.iter().enumerate() {
            for r in records {
                let line = PromptLine {
                    dataset: self.dataset_id.clone(),
                    class_id: c,
                    class_name: self.class_names[c].clone(),
                    text: r.text.clone(),
                    rule_level: r.rule_level,
                    relation: r.source.as_ref().map(|t| t.relation.clone()),
                    tail: r.source.as_ref().map(|t| t.tail.clone()),
                    weight: r.source.as_ref().map(|t| t.weight),
                };
                serde_json::to_writer(&mut sink, &line)?;
                sink.write_all(b"\n")?;
            }
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(reader: R) -> Result<Self> {
        let mut set = PromptSet {
            dataset_id: String::new(),
            class_names: Vec::new(),
            prompts: Vec::new(),
        };
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let p: PromptLine = serde_json::from_str(&line)
                .map_err(|e| Error::format(format!("prompt line {}: {e}", lineno + 1)))?;
            if set.class_names.is_empty() {
                set.dataset_id = p.dataset.clone();
            }
            if p.class_id == set.class_names.len() {
                set.class_names.push(p.class_name.clone());
                set.prompts.push(Vec::new());
            } else if p.class_id + 1 != set.class_names.len()
                || set.class_names[p.class_id] != p.class_name
            {
                return Err(Error::format(format!(
                    "prompt line {}: classes must appear contiguously in order",
                    lineno + 1
                )));
            }
            let source = match (p.rule_level, p.relation, p.tail, p.weight) {
                (0, None, None, None) => None,
                (level, Some(relation), Some(tail), Some(weight)) if level > 0 => {
                    let head = head_from_sentence(&p.text, &relation, &tail).ok_or_else(|| {
                        Error::format(format!(
                            "prompt line {}: text does not verbalize its triplet",
                            lineno + 1
                        ))
                    })?;
                    Some(Triplet::new(head, relation, tail, weight)?)
                }
                _ => {
                    return Err(Error::format(format!(
                        "prompt line {}: rule_level and triplet fields disagree",
                        lineno + 1
                    )))
                }
            };
            set.prompts[p.class_id].push(PromptRecord {
                class_id: p.class_id,
                text: p.text,
                rule_level: p.rule_level,
                source,
            });
        }
        if set.class_names.is_empty() {
            return Err(Error::format("prompt set is empty"));
        }
        set.validate()?;
        Ok(set)
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PromptLine {
    dataset: String,
    class_id: usize,
    class_name: String,
    text: String,
    rule_level: u8,
    relation: Option<String>,
    tail: Option<String>,
    weight: Option<f64>,
}
