//! File formats. Datasets and roadmaps are JSON lines with a leading header
//! record; models and embeddings are single JSON documents; statistics are
//! CSV. Every write goes to a temporary file in the target directory first
//! and is renamed into place.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losslab::ClassStatsReport;
use crate::lsr::{Roadmap, RoadmapEdge, RoadmapNode};
use crate::metric::Metric;
use crate::tuple::{SymbolicTuple, TransitionTuple};

/// Written into every dataset header.
pub const GENERATOR_VERSION: &str = concat!("lsr-core ", env!("CARGO_PKG_VERSION"));

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |source| Error::Io { path: path.to_path_buf(), source }
}

/// Writes `bytes` to `path` through a sibling temporary file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(io_err(path))?;
    tmp.write_all(bytes).map_err(io_err(path))?;
    tmp.as_file().sync_all().map_err(io_err(path))?;
    tmp.persist(path).map_err(|e| Error::Io { path: path.to_path_buf(), source: e.error })?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| Error::InvalidRecord(e.to_string()))?;
    text.push('\n');
    write_atomic(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: e.line(),
        message: e.to_string(),
    })
}

/// Rows of any serializable record as CSV with a header.
pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(|e| Error::InvalidRecord(e.to_string()))?;
    }
    let bytes = w.into_inner().map_err(|e| Error::InvalidRecord(e.to_string()))?;
    write_atomic(path, &bytes)
}

#[derive(Serialize)]
struct StatsRow {
    class_id: usize,
    intra_mean: f64,
    intra_std: f64,
    inter_mean: f64,
    inter_std: f64,
    margin: f64,
}

pub fn write_stats_csv(path: &Path, report: &ClassStatsReport) -> Result<()> {
    let rows: Vec<StatsRow> = report
        .classes
        .iter()
        .map(|c| StatsRow {
            class_id: c.class_id,
            intra_mean: c.intra_mean,
            intra_std: c.intra_std,
            inter_mean: c.inter_mean,
            inter_std: c.inter_std,
            margin: c.margin,
        })
        .collect();
    write_csv(path, &rows)
}

/// One row of an APN accuracy report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub seed: u64,
    pub pick_acc: f64,
    pub release_acc: f64,
    pub both_acc: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    /// `None` for symbolic datasets.
    pub latent_dim: Option<usize>,
    pub metric: Option<Metric>,
    pub seed: u64,
    pub generator: String,
}

impl DatasetHeader {
    pub fn symbolic(seed: u64) -> Self {
        Self { latent_dim: None, metric: None, seed, generator: GENERATOR_VERSION.to_string() }
    }

    pub fn latent(latent_dim: usize, metric: Metric, seed: u64) -> Self {
        Self { latent_dim: Some(latent_dim), metric: Some(metric), seed, generator: GENERATOR_VERSION.to_string() }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct HeaderLine {
    header: DatasetHeader,
}

fn to_line<T: Serialize>(value: &T, out: &mut String) -> Result<()> {
    out.push_str(&serde_json::to_string(value).map_err(|e| Error::InvalidRecord(e.to_string()))?);
    out.push('\n');
    Ok(())
}

fn write_lines<T: Serialize>(path: &Path, header: &DatasetHeader, records: &[T]) -> Result<()> {
    let mut out = String::new();
    to_line(&HeaderLine { header: header.clone() }, &mut out)?;
    for r in records {
        to_line(r, &mut out)?;
    }
    write_atomic(path, out.as_bytes())
}

/// Non-blank lines of a file with their 1-based numbers.
fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(io_err(path))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

fn parse_line<T: DeserializeOwned>(path: &Path, line: usize, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse { path: path.to_path_buf(), line, message: e.to_string() })
}

fn read_with_header<T: DeserializeOwned>(path: &Path) -> Result<(DatasetHeader, Vec<T>)> {
    let lines = read_lines(path)?;
    let Some((first_no, first)) = lines.first() else {
        return Err(Error::Parse { path: path.to_path_buf(), line: 1, message: "missing header record".into() });
    };
    let header: HeaderLine = parse_line(path, *first_no, first)?;
    let records = lines[1..].iter().map(|(n, l)| parse_line(path, *n, l)).collect::<Result<_>>()?;
    Ok((header.header, records))
}

pub fn write_latent_dataset(path: &Path, header: &DatasetHeader, tuples: &[TransitionTuple]) -> Result<()> {
    write_lines(path, header, tuples)
}

/// Reads a latent dataset, checking every point against the header's
/// `latent_dim`.
pub fn read_latent_dataset(path: &Path) -> Result<(DatasetHeader, Vec<TransitionTuple>)> {
    let (header, tuples): (DatasetHeader, Vec<TransitionTuple>) = read_with_header(path)?;
    let Some(dim) = header.latent_dim else {
        return Err(Error::Parse { path: path.to_path_buf(), line: 1, message: "header lacks latent_dim; is this a symbolic dataset?".into() });
    };
    for (i, t) in tuples.iter().enumerate() {
        if t.z1.dim() != dim {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: i + 2,
                message: format!("point has {} coordinates, header says {dim}", t.z1.dim()),
            });
        }
    }
    Ok((header, tuples))
}

pub fn write_symbolic_dataset(path: &Path, header: &DatasetHeader, tuples: &[SymbolicTuple]) -> Result<()> {
    write_lines(path, header, tuples)
}

pub fn read_symbolic_dataset(path: &Path) -> Result<(DatasetHeader, Vec<SymbolicTuple>)> {
    read_with_header(path)
}

#[derive(Serialize, Deserialize)]
struct RoadmapHeader {
    epsilon: f64,
    metric: Metric,
    min_samples: usize,
    latent_dim: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum RoadmapLine {
    Header(RoadmapHeader),
    Node(RoadmapNode),
    Edge(RoadmapEdge),
}

/// Header line followed by one line per node and per edge.
pub fn write_roadmap(path: &Path, roadmap: &Roadmap) -> Result<()> {
    let mut out = String::new();
    to_line(
        &RoadmapLine::Header(RoadmapHeader {
            epsilon: roadmap.epsilon,
            metric: roadmap.metric,
            min_samples: roadmap.min_samples,
            latent_dim: roadmap.latent_dim,
        }),
        &mut out,
    )?;
    for n in &roadmap.nodes {
        to_line(&RoadmapLine::Node(n.clone()), &mut out)?;
    }
    for e in &roadmap.edges {
        to_line(&RoadmapLine::Edge(e.clone()), &mut out)?;
    }
    write_atomic(path, out.as_bytes())
}

pub fn read_roadmap(path: &Path) -> Result<Roadmap> {
    let mut header = None;
    let mut nodes = Vec::new();
    let mut edges = Vec::new();
    for (n, text) in read_lines(path)? {
        match parse_line(path, n, &text)? {
            RoadmapLine::Header(h) if header.is_none() && nodes.is_empty() && edges.is_empty() => header = Some(h),
            RoadmapLine::Header(_) => {
                return Err(Error::Parse { path: path.to_path_buf(), line: n, message: "header must be the first record".into() })
            }
            _ if header.is_none() => {
                return Err(Error::Parse { path: path.to_path_buf(), line: n, message: "missing header record".into() })
            }
            RoadmapLine::Node(node) => nodes.push(node),
            RoadmapLine::Edge(edge) => edges.push(edge),
        }
    }
    let Some(h) = header else {
        return Err(Error::Parse { path: path.to_path_buf(), line: 1, message: "missing header record".into() });
    };
    Roadmap::from_parts(h.epsilon, h.metric, h.min_samples, h.latent_dim, nodes, edges).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        message: e.to_string(),
    })
}
