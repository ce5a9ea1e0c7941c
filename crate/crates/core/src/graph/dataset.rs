use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::DenseMatrix;

use super::{Graph, PreparedGraph};

/// Preprocessing applied to raw features.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum FeatureScaling {
    #[default]
    None,
    /// Every nonzero row scaled to unit L2 norm.
    UnitRows,
    /// Every column shifted to mean 0 and scaled to standard deviation 1.
    /// Constant columns become zero.
    Standardize,
}

impl FromStr for FeatureScaling {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "none" | "false" | "no" => Ok(Self::None),
            "rows" | "unit_rows" | "true" | "yes" => Ok(Self::UnitRows),
            "standardize" | "columns" | "zscore" => Ok(Self::Standardize),
            other => Err(Error::Config(format!("unknown feature scaling {other:?}"))),
        }
    }
}

/// Node feature matrix `X` (`n × K`).
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub values: DenseMatrix,
    /// Preprocessing already applied; reset to `None` once the values are
    /// perturbed.
    pub scaling: FeatureScaling,
}

impl FeatureMatrix {
    pub fn new(values: DenseMatrix) -> Result<Self> {
        if !values.is_finite() {
            return Err(Error::NonFinite("feature matrix".into()));
        }
        Ok(Self {
            values,
            scaling: FeatureScaling::None,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.values.rows()
    }

    pub fn dim(&self) -> usize {
        self.values.cols()
    }

    /// Scales every nonzero row to unit L2 norm. Zero rows stay zero.
    pub fn row_normalize(&mut self) {
        for i in 0..self.values.rows() {
            let row = self.values.row_mut(i);
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm > 0.0 {
                row.iter_mut().for_each(|v| *v /= norm);
            }
        }
        self.scaling = FeatureScaling::UnitRows;
    }

    /// Column-wise z-scores (population standard deviation).
    pub fn standardize(&mut self) {
        let (n, k) = self.values.shape();
        if n == 0 {
            return;
        }
        for j in 0..k {
            let mean = (0..n).map(|i| self.values.get(i, j)).sum::<f64>() / n as f64;
            let var = (0..n).map(|i| (self.values.get(i, j) - mean).powi(2)).sum::<f64>() / n as f64;
            let sd = var.sqrt();
            for i in 0..n {
                let v = self.values.get(i, j) - mean;
                self.values.set(i, j, if sd > 0.0 { v / sd } else { 0.0 });
            }
        }
        self.scaling = FeatureScaling::Standardize;
    }

    pub fn apply_scaling(&mut self, scaling: FeatureScaling) {
        match scaling {
            FeatureScaling::None => {}
            FeatureScaling::UnitRows => self.row_normalize(),
            FeatureScaling::Standardize => self.standardize(),
        }
    }
}

/// Train / validation / test node index sets.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    pub fn validate(&self, n: usize) -> Result<()> {
        let mut owner = vec![None::<&str>; n];
        for (name, set) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &i in set {
                if i >= n {
                    return Err(Error::IndexOutOfRange {
                        index: i,
                        n,
                        context: format!("{name} split"),
                    });
                }
                if let Some(prev) = owner[i] {
                    return Err(Error::Validation(format!(
                        "node {i} appears in both {prev} and {name} splits"
                    )));
                }
                owner[i] = Some(name);
            }
        }
        Ok(())
    }
}

/// A node classification problem on a single graph.
#[derive(Clone, Debug)]
pub struct Dataset {
    pub graph: PreparedGraph,
    pub features: FeatureMatrix,
    pub labels: Vec<usize>,
    pub num_classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(
        graph: Graph,
        features: FeatureMatrix,
        labels: Vec<usize>,
        num_classes: usize,
        split: Split,
    ) -> Result<Self> {
        let n = graph.num_nodes();
        if features.num_nodes() != n {
            return Err(Error::dim(format!(
                "graph has {n} nodes, feature matrix has {} rows",
                features.num_nodes()
            )));
        }
        if labels.len() != n {
            return Err(Error::dim(format!("{} labels for {n} nodes", labels.len())));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::Validation(format!(
                "node {i} has label {l}, but there are only {num_classes} classes"
            )));
        }
        split.validate(n)?;
        Ok(Self {
            graph: PreparedGraph::new(graph),
            features,
            labels,
            num_classes,
            split,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.graph.num_nodes()
    }

    /// Same dataset on a different graph over the same nodes.
    pub fn with_graph(&self, graph: Graph) -> Result<Self> {
        Self::new(
            graph,
            self.features.clone(),
            self.labels.clone(),
            self.num_classes,
            self.split.clone(),
        )
    }

    /// Same dataset with replaced features.
    pub fn with_features(&self, features: FeatureMatrix) -> Result<Self> {
        if features.num_nodes() != self.num_nodes() {
            return Err(Error::dim("replacement features have a different node count"));
        }
        let mut d = self.clone();
        d.features = features;
        Ok(d)
    }
}
