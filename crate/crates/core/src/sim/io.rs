//! Dataset directory: `meta.json`, `states.f32` and `edges.csv`.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetMeta, DatasetSpec, Dynamics, Split};
use crate::error::{Error, Result};
use crate::graph::{read_edges_csv, write_edges_csv};

const META: &str = "meta.json";
const STATES: &str = "states.f32";
const EDGES: &str = "edges.csv";

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetaFile {
    model: Dynamics,
    n: usize,
    d: usize,
    sample_count: usize,
    simulations: usize,
    steps: usize,
    record_length: usize,
    states_per_record: usize,
    seed: u64,
    graph_file: String,
    split: Split,
}

pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let spec = &ds.meta.spec;
    let meta = MetaFile {
        model: spec.dynamics,
        n: ds.n(),
        d: ds.d(),
        sample_count: ds.sample_count(),
        simulations: spec.simulations,
        steps: spec.steps,
        record_length: spec.record_length,
        states_per_record: ds.states_per_record(),
        seed: ds.meta.seed,
        graph_file: EDGES.to_string(),
        split: ds.split.clone(),
    };
    let path = dir.join(META);
    let json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    fs::write(&path, json + "\n").map_err(|e| Error::io(&path, e))?;

    let bytes: Vec<u8> = ds.states().iter().flat_map(|v| v.to_le_bytes()).collect();
    let path = dir.join(STATES);
    fs::write(&path, bytes).map_err(|e| Error::io(&path, e))?;
    write_edges_csv(&ds.graph, &dir.join(EDGES))
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join(META);
    let text = fs::read_to_string(&path).map_err(|e| Error::parse(META, format!("cannot read {}: {e}", path.display())))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    let meta: MetaFile = serde_path_to_error::deserialize(de)
        .map_err(|e| Error::parse(format!("{META}:{}", e.path()), e.inner().to_string()))?;

    let spec = DatasetSpec {
        dynamics: meta.model,
        simulations: meta.simulations,
        steps: meta.steps,
        record_length: meta.record_length,
    };
    spec.validate().map_err(|e| Error::parse(META, e.to_string()))?;
    if spec.sample_count() != meta.sample_count {
        return Err(Error::parse(
            format!("{META}:sample_count"),
            format!("{} does not match {} simulations x {} records", meta.sample_count, meta.simulations, spec.records_per_simulation()),
        ));
    }
    if spec.states_per_record() != meta.states_per_record {
        return Err(Error::parse(format!("{META}:states_per_record"), "inconsistent with model and record_length"));
    }
    if meta.d != spec.dynamics.state_dim() {
        return Err(Error::parse(format!("{META}:d"), format!("model {} has d={}", spec.dynamics.name(), spec.dynamics.state_dim())));
    }

    let graph = read_edges_csv(&dir.join(&meta.graph_file))?;
    if graph.n() != meta.n {
        return Err(Error::parse(format!("{META}:n"), format!("graph file has {} nodes", graph.n())));
    }

    let path = dir.join(STATES);
    let bytes = fs::read(&path).map_err(|e| Error::parse(STATES, format!("cannot read {}: {e}", path.display())))?;
    let expected = meta.sample_count * meta.states_per_record * meta.n * meta.d * 4;
    if bytes.len() != expected {
        return Err(Error::parse(STATES, format!("expected {expected} bytes, found {}", bytes.len())));
    }
    let states = bytes
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    let dmeta = DatasetMeta {
        spec,
        n: meta.n,
        d: meta.d,
        seed: meta.seed,
    };
    Dataset::from_parts(graph, dmeta, meta.split, states).map_err(|e| Error::parse(META, e.to_string()))
}
