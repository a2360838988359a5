//! Dataset splits and their on-disk format.
//!
//! Seeds: `split_seed = derive(master, [label(split name)])`, and graph `i`
//! on attempt `a` uses `derive(split_seed, [i, a])`; its query pair uses
//! `derive(graph_seed, [label("pair")])`. A draw without a reachable pair is
//! retried with the next attempt, at most [`MAX_RETRIES`] times.
//!
//! Split files are little-endian binary:
//!
//! ```text
//! magic      8 bytes  "NARDSET\0"
//! version    u32      DATASET_VERSION
//! header_len u32, header (UTF-8 JSON of SplitHeader)
//! count      u32
//! count x {
//!     node_count u32, edge_count u32
//!     edge_count x { u u32, v u32, weight f64 }
//!     source u32, target u32
//! }
//! sha256     32 bytes over everything above
//! ```

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::graph::{
    generate_graph, sample_instance, DistributionConfig, Family, Graph, GraphError,
    ProblemInstance, DEFAULT_WEIGHT_HIGH, DEFAULT_WEIGHT_LOW,
};
use crate::rng;

pub const DATASET_VERSION: u32 = 1;
pub const MAX_RETRIES: u64 = 100;
const MAGIC: &[u8; 8] = b"NARDSET\0";

pub const TRAIN_COUNT: usize = 1000;
pub const VALIDATION_COUNT: usize = 128;
pub const TEST_COUNT: usize = 128;
pub const TRAIN_NODES: usize = 16;
pub const TEST_SIZES: [usize; 9] = [16, 32, 64, 96, 128, 160, 192, 224, 256];

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("dataset I/O at {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("checksum mismatch in {0}")]
    ChecksumMismatch(PathBuf),
    #[error("{path}: {reason}")]
    Malformed { path: PathBuf, reason: String },
    #[error("split `{split}`: no reachable pair for graph {index} after {MAX_RETRIES} draws")]
    RetriesExhausted { split: String, index: usize },
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// What to draw for one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub name: String,
    pub family: Family,
    pub node_count: usize,
    pub count: usize,
    pub weight_low: f64,
    pub weight_high: f64,
}

impl SplitSpec {
    pub fn new(name: impl Into<String>, family: Family, node_count: usize, count: usize) -> Self {
        Self {
            name: name.into(),
            family,
            node_count,
            count,
            weight_low: DEFAULT_WEIGHT_LOW,
            weight_high: DEFAULT_WEIGHT_HIGH,
        }
    }

    pub fn train() -> Self {
        Self::new("train", Family::Dense, TRAIN_NODES, TRAIN_COUNT)
    }

    pub fn validation() -> Self {
        Self::new("validation", Family::Dense, TRAIN_NODES, VALIDATION_COUNT)
    }

    pub fn test(family: Family, node_count: usize) -> Self {
        Self::new(
            test_split_name(family, node_count),
            family,
            node_count,
            TEST_COUNT,
        )
    }

    pub fn seed(&self, master_seed: u64) -> u64 {
        rng::derive_seed(master_seed, &[rng::label(&self.name)])
    }
}

pub fn test_split_name(family: Family, node_count: usize) -> String {
    format!("test-{}-{node_count}", family.name())
}

/// The training, validation and test splits for the given test families.
pub fn standard_plan(families: &[Family]) -> Vec<SplitSpec> {
    let mut plan = vec![SplitSpec::train(), SplitSpec::validation()];
    for &family in families {
        plan.extend(TEST_SIZES.iter().map(|&n| SplitSpec::test(family, n)));
    }
    plan
}

/// Header echoed into every split file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitHeader {
    pub format_version: u32,
    pub spec: SplitSpec,
    pub edge_probability: f64,
    pub master_seed: u64,
    pub split_seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Split {
    pub header: SplitHeader,
    pub instances: Vec<ProblemInstance>,
}

/// Draw graph `index` of a split, retrying until a reachable pair exists.
pub fn draw_instance(
    spec: &SplitSpec,
    split_seed: u64,
    index: usize,
) -> Result<ProblemInstance, DatasetError> {
    for attempt in 0..MAX_RETRIES {
        let graph_seed = rng::derive_seed(split_seed, &[index as u64, attempt]);
        let config = DistributionConfig {
            node_count: spec.node_count,
            edge_probability: spec.family.edge_probability(),
            weight_low: spec.weight_low,
            weight_high: spec.weight_high,
            seed: graph_seed,
        };
        let graph = generate_graph(&config)?;
        match sample_instance(&graph, rng::derive_seed(graph_seed, &[rng::label("pair")])) {
            Ok(instance) => return Ok(instance),
            Err(GraphError::NoReachablePair) => continue,
            Err(e) => return Err(e.into()),
        }
    }
    Err(DatasetError::RetriesExhausted {
        split: spec.name.clone(),
        index,
    })
}

pub fn build_split(spec: &SplitSpec, master_seed: u64) -> Result<Split, DatasetError> {
    let split_seed = spec.seed(master_seed);
    let instances = (0..spec.count)
        .into_par_iter()
        .map(|i| draw_instance(spec, split_seed, i))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Split {
        header: SplitHeader {
            format_version: DATASET_VERSION,
            spec: spec.clone(),
            edge_probability: spec.family.edge_probability().resolve(spec.node_count),
            master_seed,
            split_seed,
        },
        instances,
    })
}

/// Build every split of `plan`.
pub fn build_dataset(plan: &[SplitSpec], master_seed: u64) -> Result<Vec<Split>, DatasetError> {
    plan.iter()
        .map(|spec| build_split(spec, master_seed))
        .collect()
}

pub fn encode_split(split: &Split) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    let header = serde_json::to_vec(&split.header).expect("header serialises");
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    buf.extend_from_slice(&(split.instances.len() as u32).to_le_bytes());
    for inst in &split.instances {
        let g = &inst.graph;
        buf.extend_from_slice(&(g.node_count() as u32).to_le_bytes());
        buf.extend_from_slice(&(g.edge_count() as u32).to_le_bytes());
        for (u, v, w) in g.edges() {
            buf.extend_from_slice(&(u as u32).to_le_bytes());
            buf.extend_from_slice(&(v as u32).to_le_bytes());
            buf.extend_from_slice(&w.to_le_bytes());
        }
        buf.extend_from_slice(&(inst.source as u32).to_le_bytes());
        buf.extend_from_slice(&(inst.target as u32).to_le_bytes());
    }
    let digest = Sha256::digest(&buf);
    buf.extend_from_slice(&digest);
    buf
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let out = self.bytes.get(self.pos..self.pos + n)?;
        self.pos += n;
        Some(out)
    }

    fn u32(&mut self) -> Option<u32> {
        self.take(4)
            .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
    }

    fn f64(&mut self) -> Option<f64> {
        self.take(8)
            .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
    }
}

pub fn decode_split(bytes: &[u8], path: &Path) -> Result<Split, DatasetError> {
    let malformed = |reason: &str| DatasetError::Malformed {
        path: path.to_owned(),
        reason: reason.to_owned(),
    };
    if bytes.len() < MAGIC.len() + 32 || &bytes[..8] != MAGIC {
        return Err(malformed("not a dataset split (bad magic)"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != digest {
        return Err(DatasetError::ChecksumMismatch(path.to_owned()));
    }
    let mut c = Cursor {
        bytes: body,
        pos: 8,
    };
    let truncated = || malformed("truncated record");
    let version = c.u32().ok_or_else(truncated)?;
    if version != DATASET_VERSION {
        return Err(malformed(&format!("unsupported format version {version}")));
    }
    let header_len = c.u32().ok_or_else(truncated)? as usize;
    let header: SplitHeader = serde_json::from_slice(c.take(header_len).ok_or_else(truncated)?)
        .map_err(|e| malformed(&format!("header: {e}")))?;
    let count = c.u32().ok_or_else(truncated)? as usize;
    let mut instances = Vec::with_capacity(count);
    for _ in 0..count {
        let n = c.u32().ok_or_else(truncated)? as usize;
        let m = c.u32().ok_or_else(truncated)? as usize;
        let mut edges = Vec::with_capacity(m);
        for _ in 0..m {
            let u = c.u32().ok_or_else(truncated)? as usize;
            let v = c.u32().ok_or_else(truncated)? as usize;
            let w = c.f64().ok_or_else(truncated)?;
            edges.push((u, v, w));
        }
        let source = c.u32().ok_or_else(truncated)? as usize;
        let target = c.u32().ok_or_else(truncated)? as usize;
        let graph = Graph::from_edges(n, &edges)?;
        instances.push(ProblemInstance::new(graph, source, target)?);
    }
    if c.pos != body.len() {
        return Err(malformed("trailing bytes after the last record"));
    }
    Ok(Split { header, instances })
}

pub fn split_path(dir: &Path, name: &str) -> PathBuf {
    dir.join(format!("{name}.nards"))
}

pub fn write_split(dir: &Path, split: &Split) -> Result<PathBuf, DatasetError> {
    let path = split_path(dir, &split.header.spec.name);
    fs::create_dir_all(dir).map_err(|source| DatasetError::Io {
        path: dir.to_owned(),
        source,
    })?;
    fs::write(&path, encode_split(split)).map_err(|source| DatasetError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

pub fn read_split(path: &Path) -> Result<Split, DatasetError> {
    let bytes = fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_owned(),
        source,
    })?;
    decode_split(&bytes, path)
}
