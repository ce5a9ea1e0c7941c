//! Stochastic block model datasets with block-conditional features.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::DenseMatrix;
use crate::rng;

use super::{Dataset, FeatureMatrix, FeatureScaling, Graph, Split};

#[derive(Clone, Debug, PartialEq)]
pub enum FeatureModel {
    /// `x = separation·std·e_b + std·N(0, I)` for a node in block `b`
    /// (`e_b` the unit vector on coordinate `b mod dim`).
    Gaussian {
        dim: usize,
        separation: f64,
        std: f64,
    },
    /// Bag-of-words style binary features. Each block owns a contiguous
    /// band of `dim / blocks` coordinates that fire with probability
    /// `p_signal`; all other coordinates fire with probability `p_noise`.
    SparseBinary {
        dim: usize,
        p_signal: f64,
        p_noise: f64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct SbmConfig {
    pub block_sizes: Vec<usize>,
    pub p_in: f64,
    pub p_out: f64,
    pub features: FeatureModel,
    /// Preprocessing applied after sampling.
    pub scaling: FeatureScaling,
    pub train_per_class: usize,
    pub val_per_class: usize,
    pub seed: u64,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            block_sizes: vec![20, 20],
            p_in: 0.5,
            p_out: 0.05,
            features: FeatureModel::Gaussian {
                dim: 2,
                separation: 3.0,
                std: 1.0,
            },
            scaling: FeatureScaling::None,
            train_per_class: 5,
            val_per_class: 5,
            seed: 0,
        }
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Validation(format!("{name} = {p} is not a probability")));
    }
    Ok(())
}

/// Samples an SBM graph with features and a per-class split.
/// The result depends only on the configuration (including the seed).
pub fn generate_sbm(cfg: &SbmConfig) -> Result<Dataset> {
    check_probability("p_in", cfg.p_in)?;
    check_probability("p_out", cfg.p_out)?;
    if cfg.block_sizes.is_empty() || cfg.block_sizes.contains(&0) {
        return Err(Error::Validation("every block needs at least one node".into()));
    }
    let blocks = cfg.block_sizes.len();
    let labels: Vec<usize> = cfg
        .block_sizes
        .iter()
        .enumerate()
        .flat_map(|(b, &s)| std::iter::repeat_n(b, s))
        .collect();
    let n = labels.len();

    let mut edge_rng = rng::substream(cfg.seed, 0, 0);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { cfg.p_in } else { cfg.p_out };
            if edge_rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    let graph = Graph::from_edges(n, edges)?;

    let mut feat_rng = rng::substream(cfg.seed, 1, 0);
    let values = match cfg.features {
        FeatureModel::Gaussian {
            dim,
            separation,
            std,
        } => {
            if dim == 0 || std <= 0.0 || !separation.is_finite() {
                return Err(Error::Validation("invalid Gaussian feature model".into()));
            }
            DenseMatrix::from_fn(n, dim, |i, j| {
                let mean = if j == labels[i] % dim { separation * std } else { 0.0 };
                let z: f64 = StandardNormal.sample(&mut feat_rng);
                mean + std * z
            })
        }
        FeatureModel::SparseBinary {
            dim,
            p_signal,
            p_noise,
        } => {
            check_probability("p_signal", p_signal)?;
            check_probability("p_noise", p_noise)?;
            if dim < blocks {
                return Err(Error::Validation(format!(
                    "feature dimension {dim} is smaller than the block count {blocks}"
                )));
            }
            let band = dim / blocks;
            DenseMatrix::from_fn(n, dim, |i, j| {
                let b = labels[i];
                let p = if j >= b * band && j < (b + 1) * band { p_signal } else { p_noise };
                if feat_rng.random::<f64>() < p {
                    1.0
                } else {
                    0.0
                }
            })
        }
    };
    let mut features = FeatureMatrix::new(values)?;
    features.apply_scaling(cfg.scaling);

    let mut split_rng = rng::substream(cfg.seed, 2, 0);
    let mut split = Split::default();
    let mut start = 0;
    for &size in &cfg.block_sizes {
        let mut members: Vec<usize> = (start..start + size).collect();
        members.shuffle(&mut split_rng);
        let t = cfg.train_per_class.min(size);
        let v = cfg.val_per_class.min(size - t);
        split.train.extend_from_slice(&members[..t]);
        split.val.extend_from_slice(&members[t..t + v]);
        split.test.extend_from_slice(&members[t + v..]);
        start += size;
    }
    split.train.sort_unstable();
    split.val.sort_unstable();
    split.test.sort_unstable();

    Dataset::new(graph, features, labels, blocks, split)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_under_seed() {
        let cfg = SbmConfig {
            seed: 7,
            ..SbmConfig::default()
        };
        let a = generate_sbm(&cfg).unwrap();
        let b = generate_sbm(&cfg).unwrap();
        assert_eq!(a.graph.graph, b.graph.graph);
        assert_eq!(a.features, b.features);
        assert_eq!(a.split, b.split);
        let c = generate_sbm(&SbmConfig { seed: 8, ..cfg }).unwrap();
        assert_ne!(a.graph.graph, c.graph.graph);
    }

    #[test]
    fn extreme_probabilities_give_disjoint_cliques() {
        let d = generate_sbm(&SbmConfig {
            p_in: 1.0,
            p_out: 0.0,
            ..SbmConfig::default()
        })
        .unwrap();
        let g = &d.graph.graph;
        assert_eq!(g.num_edges(), 2 * (20 * 19 / 2));
        for &(u, v) in g.edges() {
            assert_eq!(d.labels[u], d.labels[v]);
        }
        for u in 0..40 {
            assert_eq!(g.degree(u), 19);
        }
    }

    #[test]
    fn invalid_probability_is_rejected() {
        for (p_in, p_out) in [(1.5, 0.1), (0.5, -0.1)] {
            let r = generate_sbm(&SbmConfig {
                p_in,
                p_out,
                ..SbmConfig::default()
            });
            assert!(matches!(r, Err(Error::Validation(_))));
        }
    }

    #[test]
    fn sparse_binary_features_favor_own_band() {
        let d = generate_sbm(&SbmConfig {
            block_sizes: vec![50, 50],
            features: FeatureModel::SparseBinary {
                dim: 40,
                p_signal: 0.3,
                p_noise: 0.02,
            },
            ..SbmConfig::default()
        })
        .unwrap();
        let x = &d.features.values;
        let band_mass = |i: usize, b: usize| x.row(i)[b * 20..(b + 1) * 20].iter().sum::<f64>();
        let own: f64 = (0..100).map(|i| band_mass(i, d.labels[i])).sum();
        let other: f64 = (0..100).map(|i| band_mass(i, 1 - d.labels[i])).sum();
        assert!(own > 5.0 * other);
    }
}
