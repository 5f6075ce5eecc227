//! Dataset directories and run configuration.
//!
//! A dataset directory holds tab-separated files with 0-based node ids:
//!
//! | file           | line format          | required |
//! |----------------|----------------------|----------|
//! | `edges.tsv`    | `u<TAB>v`            | yes      |
//! | `features.tsv` | one row of floats per node | no |
//! | `labels.tsv`   | `node<TAB>label`     | no       |
//! | `splits.tsv`   | `node<TAB>train\|val\|test` | no |
//!
//! Blank lines and lines starting with `#` are ignored, except that
//! `edges.tsv` may declare its node count with a `# nodes <n>` line. Without
//! it the node count is one more than the largest id in any file.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Edge, EdgeSet, Label, LabeledGraph, Split};
use crate::kernel::Metric;
use crate::pipeline::{ClusterSize, EpsilonSpec, Evaluation, RefineConfig};
use crate::reference::{KernelChoice, ReferenceConfig, Symmetrization, DEFAULT_EPSILON_GRID};
use crate::rewire::{Direction, EdgeBudget};

pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.tsv";
pub const LABELS_FILE: &str = "labels.tsv";
pub const SPLITS_FILE: &str = "splits.tsv";

/// What loading found besides the graph itself.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct LoadReport {
    pub nodes: usize,
    pub edge_lines: usize,
    pub edges: usize,
    pub self_loops_dropped: usize,
    /// Lines that repeated an edge already seen in either orientation.
    pub duplicates_merged: usize,
    pub labeled_nodes: usize,
    pub has_features: bool,
    pub has_splits: bool,
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Non-comment lines as `(1-based line number, fields)`.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines().enumerate().filter_map(|(i, line)| {
        let t = line.trim();
        (!t.is_empty() && !t.starts_with('#')).then(|| (i + 1, t.split_whitespace().collect()))
    })
}

fn parse_field<T: FromStr>(path: &Path, line: usize, field: &str, what: &str) -> Result<T> {
    field
        .parse()
        .map_err(|_| parse_err(path, line, format!("invalid {what} {field:?}")))
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| Error::File {
        path: path.to_path_buf(),
        source,
    })
}

fn declared_nodes(path: &Path, text: &str) -> Result<Option<usize>> {
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if let Some(rest) = t.strip_prefix('#') {
            let mut words = rest.split_whitespace();
            if words.next() == Some("nodes") {
                let n = words.next().ok_or_else(|| parse_err(path, i + 1, "missing node count"))?;
                return Ok(Some(parse_field(path, i + 1, n, "node count")?));
            }
        }
    }
    Ok(None)
}

/// Loads a dataset directory. Edges are symmetrized and deduplicated;
/// self-loops are dropped and counted. Without `splits.tsv` every labeled
/// node is tagged `train`.
pub fn load_dataset(dir: &Path) -> Result<(LabeledGraph, LoadReport)> {
    let mut report = LoadReport::default();
    let edges_path = dir.join(EDGES_FILE);
    let text = read(&edges_path)?;
    let mut pairs = Vec::new();
    let mut max_id: Option<usize> = None;
    let bump = |v: usize, max_id: &mut Option<usize>| *max_id = Some(max_id.map_or(v, |m| m.max(v)));
    for (line, fields) in data_lines(&text) {
        if fields.len() != 2 {
            return Err(parse_err(&edges_path, line, format!("expected 2 fields, found {}", fields.len())));
        }
        let u: usize = parse_field(&edges_path, line, fields[0], "node id")?;
        let v: usize = parse_field(&edges_path, line, fields[1], "node id")?;
        report.edge_lines += 1;
        bump(u, &mut max_id);
        bump(v, &mut max_id);
        if u == v {
            report.self_loops_dropped += 1;
        } else {
            pairs.push((u, v));
        }
    }
    let declared = declared_nodes(&edges_path, &text)?;

    let labels_path = dir.join(LABELS_FILE);
    let mut label_entries = Vec::new();
    if labels_path.exists() {
        let text = read(&labels_path)?;
        for (line, fields) in data_lines(&text) {
            if fields.len() != 2 {
                return Err(parse_err(&labels_path, line, "expected node and label"));
            }
            let node: usize = parse_field(&labels_path, line, fields[0], "node id")?;
            let label: Label = parse_field(&labels_path, line, fields[1], "label")?;
            bump(node, &mut max_id);
            label_entries.push((line, node, label));
        }
    }

    let splits_path = dir.join(SPLITS_FILE);
    let mut split_entries = Vec::new();
    if splits_path.exists() {
        report.has_splits = true;
        let text = read(&splits_path)?;
        for (line, fields) in data_lines(&text) {
            if fields.len() != 2 {
                return Err(parse_err(&splits_path, line, "expected node and split"));
            }
            let node: usize = parse_field(&splits_path, line, fields[0], "node id")?;
            let split: Split = fields[1]
                .parse()
                .map_err(|_| parse_err(&splits_path, line, format!("unknown split {:?}", fields[1])))?;
            bump(node, &mut max_id);
            split_entries.push((line, node, split));
        }
    }

    let from_ids = max_id.map_or(0, |m| m + 1);
    let n = match declared {
        Some(d) if d < from_ids => {
            return Err(Error::InconsistentNodeCount(format!(
                "{EDGES_FILE} declares {d} nodes but ids reach {}",
                from_ids - 1
            )))
        }
        Some(d) => d,
        None => from_ids,
    };
    if n == 0 {
        return Err(Error::EmptyGraph);
    }

    let mut edges = EdgeSet::new(n);
    for (u, v) in pairs {
        if !edges.insert(Edge::new(u, v).expect("u != v"))? {
            report.duplicates_merged += 1;
        }
    }

    let mut labels = vec![None; n];
    for (line, node, label) in label_entries {
        if labels[node].replace(label).is_some() {
            return Err(parse_err(&labels_path, line, format!("node {node} labeled twice")));
        }
    }

    let mut splits = vec![Split::None; n];
    if report.has_splits {
        let mut seen = vec![false; n];
        for (line, node, split) in split_entries {
            if std::mem::replace(&mut seen[node], true) {
                return Err(parse_err(&splits_path, line, format!("node {node} listed twice")));
            }
            splits[node] = split;
        }
    } else {
        for (s, l) in splits.iter_mut().zip(&labels) {
            if l.is_some() {
                *s = Split::Train;
            }
        }
    }

    let features_path = dir.join(FEATURES_FILE);
    let features = if features_path.exists() {
        report.has_features = true;
        Some(load_features(&features_path, n)?)
    } else {
        None
    };

    report.nodes = n;
    report.edges = edges.len();
    report.labeled_nodes = labels.iter().filter(|l| l.is_some()).count();
    let graph = LabeledGraph::new(edges, labels, features, splits)?;
    Ok((graph, report))
}

fn load_features(path: &Path, n: usize) -> Result<Array2<f64>> {
    let text = read(path)?;
    let mut values = Vec::new();
    let mut width = None;
    let mut rows = 0;
    for (line, fields) in data_lines(&text) {
        match width {
            None => width = Some(fields.len()),
            Some(w) if w != fields.len() => {
                return Err(parse_err(path, line, format!("expected {w} columns, found {}", fields.len())))
            }
            _ => {}
        }
        for f in fields {
            let x: f64 = parse_field(path, line, f, "feature value")?;
            if !x.is_finite() {
                return Err(parse_err(path, line, format!("non-finite feature value {f:?}")));
            }
            values.push(x);
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::InconsistentNodeCount(format!(
            "{FEATURES_FILE} has {rows} rows for {n} nodes"
        )));
    }
    Array2::from_shape_vec((n, width.unwrap_or(0)), values).map_err(|e| Error::ShapeMismatch(e.to_string()))
}

/// Writes `u<TAB>v` lines, `u < v`, in lexicographic order.
pub fn write_edges<W: Write>(edges: &EdgeSet, out: W) -> Result<()> {
    let mut out = BufWriter::new(out);
    for e in edges {
        writeln!(out, "{}\t{}", e.u(), e.v())?;
    }
    out.flush()?;
    Ok(())
}

pub fn write_edges_file(edges: &EdgeSet, path: &Path) -> Result<()> {
    write_edges(edges, fs::File::create(path)?)
}

/// Writes a dataset directory that [`load_dataset`] reads back unchanged.
pub fn save_dataset(g: &LabeledGraph, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let mut out = BufWriter::new(fs::File::create(dir.join(EDGES_FILE))?);
    writeln!(out, "# nodes {}", g.node_count())?;
    for e in g.edges() {
        writeln!(out, "{}\t{}", e.u(), e.v())?;
    }
    out.flush()?;

    if let Some(x) = g.features() {
        let mut out = BufWriter::new(fs::File::create(dir.join(FEATURES_FILE))?);
        for row in x.rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", cells.join("\t"))?;
        }
        out.flush()?;
    }

    let mut out = BufWriter::new(fs::File::create(dir.join(LABELS_FILE))?);
    for (v, l) in g.labels().iter().enumerate() {
        if let Some(l) = l {
            writeln!(out, "{v}\t{l}")?;
        }
    }
    out.flush()?;

    let mut out = BufWriter::new(fs::File::create(dir.join(SPLITS_FILE))?);
    for (v, s) in g.splits().iter().enumerate() {
        if *s != Split::None {
            writeln!(out, "{v}\t{}", s.as_str())?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Everything a `rewire` run depends on besides the data.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub epsilon: EpsilonSpec,
    pub kernel: KernelChoice,
    pub direction: Direction,
    pub k: EdgeBudget,
    pub cluster_size: ClusterSize,
    pub seed: u64,
    pub metric: Metric,
    pub symmetrization: Symmetrization,
    pub evaluation: Evaluation,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            epsilon: EpsilonSpec::Grid(DEFAULT_EPSILON_GRID.to_vec()),
            kernel: KernelChoice::Pdp,
            direction: Direction::Add,
            k: EdgeBudget::Fraction(0.5),
            cluster_size: ClusterSize::Auto,
            seed: 0,
            metric: Metric::Euclidean,
            symmetrization: Symmetrization::Or,
            evaluation: Evaluation::Sampled,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.k.validate()?;
        match &self.epsilon {
            EpsilonSpec::Value(e) => crate::kernel::KernelConfig::new(*e, self.metric).map(|_| ())?,
            EpsilonSpec::Grid(g) if g.is_empty() => return Err(Error::EmptyGrid),
            EpsilonSpec::Grid(g) => {
                for e in g {
                    crate::kernel::KernelConfig::new(*e, self.metric)?;
                }
            }
        }
        if let ClusterSize::Fixed(c) = self.cluster_size {
            if c < 2 {
                return Err(Error::InvalidParameter(format!("cluster size must be at least 2, got {c}")));
            }
        }
        Ok(())
    }

    pub fn refine_config(&self) -> RefineConfig {
        let first = match &self.epsilon {
            EpsilonSpec::Value(e) => *e,
            EpsilonSpec::Grid(g) => g.first().copied().unwrap_or(1.0),
        };
        RefineConfig {
            reference: ReferenceConfig {
                kernel: self.kernel,
                epsilon: first,
                metric: self.metric,
                symmetrization: self.symmetrization,
            },
            epsilon: self.epsilon.clone(),
            direction: self.direction,
            budget: self.k,
            cluster_size: self.cluster_size,
            evaluation: self.evaluation,
            seed: self.seed,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(&read(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// `"12"` is a count; anything with a `.` or an exponent is a fraction of
/// the pool.
pub fn parse_budget(s: &str) -> Result<EdgeBudget> {
    let t = s.trim();
    let budget = if t.contains(['.', 'e', 'E']) {
        EdgeBudget::Fraction(
            t.parse()
                .map_err(|_| Error::InvalidParameter(format!("invalid k {s:?}")))?,
        )
    } else {
        EdgeBudget::Count(
            t.parse()
                .map_err(|_| Error::InvalidParameter(format!("invalid k {s:?}")))?,
        )
    };
    budget.validate()?;
    Ok(budget)
}

/// A single value, a comma-separated grid, or `grid` for the default grid.
pub fn parse_epsilon(s: &str) -> Result<EpsilonSpec> {
    let t = s.trim();
    if t.eq_ignore_ascii_case("grid") || t.eq_ignore_ascii_case("auto") {
        return Ok(EpsilonSpec::Grid(DEFAULT_EPSILON_GRID.to_vec()));
    }
    let values: Vec<f64> = t
        .split(',')
        .map(|v| {
            v.trim()
                .parse()
                .map_err(|_| Error::InvalidParameter(format!("invalid epsilon {v:?}")))
        })
        .collect::<Result<_>>()?;
    Ok(match values.as_slice() {
        [single] => EpsilonSpec::Value(*single),
        _ => EpsilonSpec::Grid(values),
    })
}

pub fn parse_cluster_size(s: &str) -> Result<ClusterSize> {
    if s.trim().eq_ignore_ascii_case("auto") {
        return Ok(ClusterSize::Auto);
    }
    let c: usize = s
        .trim()
        .parse()
        .map_err(|_| Error::InvalidParameter(format!("invalid cluster size {s:?}")))?;
    if c < 2 {
        return Err(Error::InvalidParameter(format!("cluster size must be at least 2, got {c}")));
    }
    Ok(ClusterSize::Fixed(c))
}

/// Output paths of a run directory.
#[derive(Clone, Debug)]
pub struct OutputPaths {
    pub dir: PathBuf,
}

impl OutputPaths {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        OutputPaths { dir: dir.into() }
    }
    pub fn rewired_edges(&self) -> PathBuf {
        self.dir.join("rewired_edges.tsv")
    }
    pub fn report(&self) -> PathBuf {
        self.dir.join("report.json")
    }
    pub fn reference_edges(&self) -> PathBuf {
        self.dir.join("reference_edges.tsv")
    }
    pub fn kernel_bin(&self) -> PathBuf {
        self.dir.join("kernel.bin")
    }
    pub fn kernel_meta(&self) -> PathBuf {
        self.dir.join("kernel.meta")
    }
}
