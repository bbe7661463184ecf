use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Graph, PartitionedGraph};
use crate::error::{Error, Result};

/// Writes `# n=<N>` followed by one `i,j` line (i < j) per edge.
pub fn write_edges_csv(g: &Graph, path: &Path) -> Result<()> {
    let mut out = format!("# n={}\n", g.n());
    for (i, j) in g.edges() {
        let _ = writeln!(out, "{i},{j}");
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

pub fn read_edges_csv(path: &Path) -> Result<Graph> {
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingInput(path.to_path_buf()),
        _ => Error::io(path, e),
    })?;
    parse_edges_csv(&text)
}

pub(crate) fn parse_edges_csv(text: &str) -> Result<Graph> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::parse("edges.csv", "empty file"))?;
    let n: usize = header
        .trim()
        .strip_prefix("# n=")
        .and_then(|v| v.trim().parse().ok())
        .ok_or_else(|| Error::parse("edges.csv:1", format!("expected `# n=<N>`, got `{header}`")))?;
    let mut g = Graph::empty(n);
    for (lineno, line) in lines.enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let field = format!("edges.csv:{}", lineno + 2);
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| Error::parse(&field, format!("expected `i,j`, got `{line}`")))?;
        let i: usize = a.trim().parse().map_err(|_| Error::parse(&field, "bad node index"))?;
        let j: usize = b.trim().parse().map_err(|_| Error::parse(&field, "bad node index"))?;
        if i >= j {
            return Err(Error::parse(&field, "edges must be written with i < j"));
        }
        let inserted = g.add_edge(i, j).map_err(|e| Error::parse(&field, e.to_string()))?;
        if !inserted {
            return Err(Error::parse(&field, "duplicate edge"));
        }
    }
    Ok(g)
}

/// On-disk form of a partition (`partition.json`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionFile {
    pub observed: Vec<usize>,
    pub missing_count: usize,
    pub seed: u64,
}

impl From<&PartitionedGraph> for PartitionFile {
    fn from(p: &PartitionedGraph) -> Self {
        Self {
            observed: p.observed().to_vec(),
            missing_count: p.missing_count,
            seed: p.seed,
        }
    }
}

pub fn write_partition_json(p: &PartitionedGraph, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(&PartitionFile::from(p)).expect("partition serializes");
    fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
}

/// Reads `partition.json` and rebuilds the partition of the (original-label) graph `g`.
pub fn read_partition_json(g: &Graph, path: &Path) -> Result<PartitionedGraph> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let file: PartitionFile =
        serde_json::from_str(&text).map_err(|e| Error::parse("partition.json", e.to_string()))?;
    if file.observed.len() + file.missing_count != g.n() {
        return Err(Error::parse(
            "partition.json:missing_count",
            "observed + missing does not equal node count",
        ));
    }
    PartitionedGraph::from_observed(g, &file.observed, file.seed)
}
