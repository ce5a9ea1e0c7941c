//! Plain-text dataset files.
//!
//! - edges: one `u v` pair of 0-based indices per line, `#` starts a comment
//! - features: CSV, one row per node, optional header row
//! - labels: CSV `node,label`, optional header row
//! - split: lines `train: i,j,...`, `val: ...`, `test: ...`

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::nn::DenseMatrix;

use super::{Dataset, FeatureMatrix, FeatureScaling, Graph, Split};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DatasetPaths {
    pub edges: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
    pub split: PathBuf,
}

impl DatasetPaths {
    /// Conventional file names inside `dir`.
    pub fn in_dir(dir: impl AsRef<Path>) -> Self {
        let dir = dir.as_ref();
        Self {
            edges: dir.join("edges.txt"),
            features: dir.join("features.csv"),
            labels: dir.join("labels.csv"),
            split: dir.join("split.txt"),
        }
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_err(path: &Path, line: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

fn is_header(line: &str) -> bool {
    line.split(',')
        .next()
        .map(|t| t.trim().parse::<f64>().is_err())
        .unwrap_or(false)
}

/// Loads a dataset; the node count comes from the feature file.
pub fn load_dataset(paths: &DatasetPaths, scaling: FeatureScaling) -> Result<Dataset> {
    let mut features = read_features(&paths.features)?;
    features.apply_scaling(scaling);
    let n = features.num_nodes();
    let graph = read_edges(&paths.edges, n)?;
    let labels = read_labels(&paths.labels, n)?;
    let split = read_split(&paths.split)?;
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(graph, features, labels, num_classes, split)
}

pub(crate) fn read_features(path: &Path) -> Result<FeatureMatrix> {
    let text = read(path)?;
    let mut rows: Vec<Vec<f64>> = Vec::new();
    let first = first_content_line(&text);
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if idx == first && is_header(line) {
            continue;
        }
        let row = line
            .split(',')
            .map(|t| {
                let t = t.trim();
                t.parse::<f64>()
                    .map_err(|_| parse_err(path, idx + 1, format!("invalid number {t:?}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if let Some(first) = rows.first() {
            if first.len() != row.len() {
                return Err(parse_err(
                    path,
                    idx + 1,
                    format!("expected {} columns, found {}", first.len(), row.len()),
                ));
            }
        }
        if row.iter().any(|v| !v.is_finite()) {
            return Err(parse_err(path, idx + 1, "non-finite feature value"));
        }
        rows.push(row);
    }
    FeatureMatrix::new(DenseMatrix::from_rows(&rows)?)
}

fn first_content_line(text: &str) -> usize {
    text.lines()
        .position(|l| !l.trim().is_empty())
        .unwrap_or(0)
}

pub(crate) fn read_edges(path: &Path, n: usize) -> Result<Graph> {
    let text = read(path)?;
    let mut pairs = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let mut it = line.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(parse_err(path, idx + 1, "expected two node indices"));
        };
        let parse = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| parse_err(path, idx + 1, format!("invalid node index {t:?}")))
        };
        let (u, v) = (parse(a)?, parse(b)?);
        if u == v {
            return Err(parse_err(path, idx + 1, format!("self-loop on node {u}")));
        }
        for x in [u, v] {
            if x >= n {
                return Err(Error::IndexOutOfRange {
                    index: x,
                    n,
                    context: format!("{}:{}", path.display(), idx + 1),
                });
            }
        }
        pairs.push((u, v));
    }
    Graph::from_edges(n, pairs)
}

pub(crate) fn read_labels(path: &Path, n: usize) -> Result<Vec<usize>> {
    let text = read(path)?;
    let mut labels = vec![None; n];
    let first = first_content_line(&text);
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || (idx == first && is_header(line)) {
            continue;
        }
        let mut it = line.split(',').map(str::trim);
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(parse_err(path, idx + 1, "expected `node,label`"));
        };
        let node: usize = a
            .parse()
            .map_err(|_| parse_err(path, idx + 1, format!("invalid node index {a:?}")))?;
        let label: usize = b
            .parse()
            .map_err(|_| parse_err(path, idx + 1, format!("invalid label {b:?}")))?;
        if node >= n {
            return Err(Error::IndexOutOfRange {
                index: node,
                n,
                context: format!("{}:{}", path.display(), idx + 1),
            });
        }
        labels[node] = Some(label);
    }
    labels
        .into_iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| Error::Validation(format!("node {i} has no label"))))
        .collect()
}

pub(crate) fn read_split(path: &Path) -> Result<Split> {
    let text = read(path)?;
    let mut split = Split::default();
    let mut seen = [false; 3];
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((name, rest)) = line.split_once(':') else {
            return Err(parse_err(path, idx + 1, "expected `name: indices`"));
        };
        let (slot, target) = match name.trim() {
            "train" => (0, &mut split.train),
            "val" => (1, &mut split.val),
            "test" => (2, &mut split.test),
            other => return Err(parse_err(path, idx + 1, format!("unknown split {other:?}"))),
        };
        if seen[slot] {
            return Err(parse_err(path, idx + 1, format!("duplicate {} line", name.trim())));
        }
        seen[slot] = true;
        for t in rest.split(',').map(str::trim).filter(|t| !t.is_empty()) {
            target.push(
                t.parse()
                    .map_err(|_| parse_err(path, idx + 1, format!("invalid node index {t:?}")))?,
            );
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::Validation(format!(
            "{}: missing {} line",
            path.display(),
            ["train", "val", "test"][missing]
        )));
    }
    Ok(split)
}

/// Writes the four dataset files into `dir` (created if needed).
pub fn save_dataset(dataset: &Dataset, dir: impl AsRef<Path>) -> Result<DatasetPaths> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = DatasetPaths::in_dir(dir);
    let write = |path: &Path, s: String| fs::write(path, s).map_err(|e| Error::io(path, e));

    let mut s = String::new();
    for &(u, v) in dataset.graph.graph.edges() {
        writeln!(s, "{u} {v}").unwrap();
    }
    write(&paths.edges, s)?;

    let x = &dataset.features.values;
    let mut s = String::with_capacity(x.rows() * x.cols() * 8);
    for i in 0..x.rows() {
        for (j, v) in x.row(i).iter().enumerate() {
            if j > 0 {
                s.push(',');
            }
            // `{}` on f64 prints the shortest string that parses back exactly.
            write!(s, "{v}").unwrap();
        }
        s.push('\n');
    }
    write(&paths.features, s)?;

    let mut s = String::from("node,label\n");
    for (i, l) in dataset.labels.iter().enumerate() {
        writeln!(s, "{i},{l}").unwrap();
    }
    write(&paths.labels, s)?;

    let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
    let sp = &dataset.split;
    write(
        &paths.split,
        format!(
            "train: {}\nval: {}\ntest: {}\n",
            join(&sp.train),
            join(&sp.val),
            join(&sp.test)
        ),
    )?;
    Ok(paths)
}
