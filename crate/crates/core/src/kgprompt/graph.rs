//! Tab-separated knowledge-graph dumps and the head-entity index over them.
//!
//! One assertion per line: `relation \t head \t tail \t weight`.

use std::collections::HashMap;
use std::io::BufRead;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Triplet {
    pub head: String,
    pub relation: String,
    pub tail: String,
    pub weight: f64,
}

impl Triplet {
    pub fn new(
        head: impl Into<String>,
        relation: impl Into<String>,
        tail: impl Into<String>,
        weight: f64,
    ) -> Result<Self> {
        let t = Triplet {
            head: head.into(),
            relation: relation.into(),
            tail: tail.into(),
            weight,
        };
        if t.head.is_empty() || t.relation.is_empty() || t.tail.is_empty() {
            return Err(Error::validation("triplet fields must be non-empty"));
        }
        if !(weight.is_finite() && weight >= 0.0) {
            return Err(Error::validation(format!(
                "triplet weight {weight} must be finite and >= 0"
            )));
        }
        Ok(t)
    }
}

#[derive(Debug, Clone, Default)]
pub struct ParsedGraph {
    pub triplets: Vec<Triplet>,
    pub malformed: usize,
}

fn parse_line(line: &str) -> Option<Triplet> {
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 4 {
        return None;
    }
    let relation = fields[0].trim();
    let head = fields[1].trim();
    let tail = fields[2].trim();
    let weight: f64 = fields[3].trim().parse().ok()?;
    Triplet::new(head, relation, tail, weight).ok()
}

/// Reads a graph dump. Blank lines are ignored; any other line that does not
/// parse as a triplet is counted in [`ParsedGraph::malformed`].
pub fn parse_graph_dump<R: BufRead>(reader: R) -> Result<ParsedGraph> {
    let mut parsed = ParsedGraph::default();
    for line in reader.lines() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        match parse_line(line) {
            Some(t) => parsed.triplets.push(t),
            None => parsed.malformed += 1,
        }
    }
    if parsed.triplets.is_empty() {
        return Err(Error::EmptyGraph {
            malformed: parsed.malformed,
        });
    }
    Ok(parsed)
}

/// Immutable lookup from head entity to the triplets it starts.
#[derive(Debug, Clone, Default)]
pub struct GraphIndex {
    triplets: Vec<Triplet>,
    by_head: HashMap<String, Vec<usize>>,
}

impl GraphIndex {
    pub fn new(triplets: Vec<Triplet>) -> Self {
        let mut by_head: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, t) in triplets.iter().enumerate() {
            by_head.entry(t.head.clone()).or_default().push(i);
        }
        GraphIndex { triplets, by_head }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn contains(&self, entity: &str) -> bool {
        self.by_head.contains_key(entity)
    }

    /// Triplets headed by `entity`, in dump order.
    pub fn triplets_for<'a>(&'a self, entity: &str) -> impl Iterator<Item = &'a Triplet> + 'a {
        self.by_head
            .get(entity)
            .map(|v| v.as_slice())
            .unwrap_or(&[])
            .iter()
            .map(move |&i| &self.triplets[i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_line() {
        let g = parse_graph_dump("IsA\tgoldfish\tfish\t2.0".as_bytes()).unwrap();
        assert_eq!(g.malformed, 0);
        assert_eq!(
            g.triplets,
            vec![Triplet {
                head: "goldfish".into(),
                relation: "IsA".into(),
                tail: "fish".into(),
                weight: 2.0
            }]
        );
    }

    #[test]
    fn malformed_lines_are_counted() {
        let g = parse_graph_dump("HasA\tcat\twhiskers\t1.0\nBADLINE".as_bytes()).unwrap();
        assert_eq!(g.triplets.len(), 1);
        assert_eq!(g.malformed, 1);

        let g = parse_graph_dump(
            "IsA\ta\tb\t-1\nIsA\t\tb\t1\nIsA\ta\tb\tNaN\nIsA\ta\tb\tx\nIsA\ta\tb\t1\t9\nIsA\ta\tb\t0\n".as_bytes(),
        )
        .unwrap();
        assert_eq!(g.triplets.len(), 1);
        assert_eq!(g.malformed, 5);
    }

    #[test]
    fn empty_stream_is_an_error() {
        assert!(matches!(
            parse_graph_dump("".as_bytes()),
            Err(Error::EmptyGraph { malformed: 0 })
        ));
        assert!(matches!(
            parse_graph_dump("junk\n\n".as_bytes()),
            Err(Error::EmptyGraph { malformed: 1 })
        ));
    }

    #[test]
    fn invalid_utf8_is_io() {
        let bytes: &[u8] = &[0x49, 0x73, 0x41, 0x09, 0xff, 0xfe, 0x0a];
        assert!(matches!(parse_graph_dump(bytes), Err(Error::Io(_))));
    }

    #[test]
    fn preserves_order_and_indexes_heads() {
        let g = parse_graph_dump(
            "IsA\tcat\tanimal\t1\nIsA\tdog\tanimal\t1\nHasA\tcat\ttail\t2\n".as_bytes(),
        )
        .unwrap();
        let idx = GraphIndex::new(g.triplets);
        let tails: Vec<_> = idx.triplets_for("cat").map(|t| t.tail.as_str()).collect();
        assert_eq!(tails, ["animal", "tail"]);
        assert!(!idx.contains("Cat"));
        assert_eq!(idx.triplets_for("bird").count(), 0);
    }
}
