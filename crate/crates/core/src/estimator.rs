//! Monte-Carlo estimate of expected vulnerability under feature noise.
//!
//! A perturbation is drawn in two stages: a radius `r ∈ [0, ε]` from the
//! density `K r^{K−1} / ε^K`, then a matrix `Z` whose largest row norm is
//! exactly `r`. One row (the pivot) sits on the sphere of radius `r`; the
//! others get their own radius from the same density rescaled to `[0, r]`.
//! A sample counts as a success for the adversary when the normalized
//! output distance exceeds `σ`. The graph itself is never perturbed.

use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::graph::{Dataset, PreparedGraph};
use crate::nn::{softmax_rows, DenseMatrix, Model};
use crate::ortho::exact_spectral_norm;
use crate::rng::{substream, Rng};

/// Order `p ∈ (0, ∞]` of the row norm.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum NormOrder {
    Finite(f64),
    Infinity,
}

impl NormOrder {
    pub fn validate(self) -> Result<Self> {
        match self {
            Self::Finite(p) if !(p > 0.0 && p.is_finite()) => {
                Err(Error::Validation(format!("norm order p = {p} must be positive")))
            }
            _ => Ok(self),
        }
    }

    /// `‖v‖_p`.
    pub fn norm(self, v: &[f64]) -> f64 {
        match self {
            Self::Infinity => v.iter().fold(0.0, |m, x| m.max(x.abs())),
            Self::Finite(2.0) => v.iter().map(|x| x * x).sum::<f64>().sqrt(),
            Self::Finite(1.0) => v.iter().map(|x| x.abs()).sum(),
            Self::Finite(p) => v.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p),
        }
    }
}

impl fmt::Display for NormOrder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(p) => write!(f, "{p}"),
            Self::Infinity => f.write_str("inf"),
        }
    }
}

impl FromStr for NormOrder {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if matches!(s.to_ascii_lowercase().as_str(), "inf" | "infinity") {
            return Ok(Self::Infinity);
        }
        let p: f64 = s
            .parse()
            .map_err(|_| Error::Config(format!("invalid norm order {s:?}")))?;
        if p.is_infinite() && p > 0.0 {
            return Ok(Self::Infinity);
        }
        Self::Finite(p).validate()
    }
}

impl Serialize for NormOrder {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Finite(p) => s.serialize_f64(*p),
            Self::Infinity => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for NormOrder {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        let parsed = match Raw::deserialize(d)? {
            Raw::Num(p) => Self::Finite(p).validate(),
            Raw::Text(t) => t.parse(),
        };
        parsed.map_err(serde::de::Error::custom)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SampleConfig {
    /// Radius of the perturbation ball.
    pub epsilon: f64,
    /// Samples per graph.
    pub l_max: usize,
    pub p: NormOrder,
    /// Output-distance threshold on the normalized `[0, 1]` scale.
    pub sigma: f64,
    pub seed: u64,
    /// Confidence level for [`required_samples`].
    pub alpha: f64,
    /// Relative sub-ball radius for [`required_samples`].
    pub r_ratio: Option<f64>,
}

impl Default for SampleConfig {
    fn default() -> Self {
        Self {
            epsilon: 10.0,
            l_max: 100,
            p: NormOrder::Finite(2.0),
            sigma: 0.5,
            seed: 0,
            alpha: 0.05,
            r_ratio: None,
        }
    }
}

impl SampleConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Validation(format!("ball radius ε = {} must be positive", self.epsilon)));
        }
        if self.l_max == 0 {
            return Err(Error::Validation("at least one sample per graph is required".into()));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::Validation(format!("threshold σ = {} must be positive", self.sigma)));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(Error::Validation(format!("confidence α = {} outside (0, 1]", self.alpha)));
        }
        self.p.validate().map(|_| ())
    }
}

/// `r = ε·U^{1/K}`, the inverse CDF of the density `K r^{K−1} / ε^K`.
pub fn sample_radius(epsilon: f64, k: usize, rng: &mut Rng) -> f64 {
    let u: f64 = rng.random();
    epsilon * u.powf(1.0 / k as f64)
}

/// A vector of `p`-norm `r` with random signs.
///
/// For finite `p` the magnitudes are `r·O_j^{1/p}`, where the `O_j` are the
/// spacings of `K − 1` sorted uniforms (so they sum to one). For `p = ∞` one
/// random coordinate gets magnitude `r` and the rest are uniform on `[0, r]`.
pub fn sample_sphere_row(r: f64, k: usize, p: NormOrder, rng: &mut Rng) -> Vec<f64> {
    let mut out = match p {
        NormOrder::Finite(p) => {
            let mut cuts: Vec<f64> = (0..k.saturating_sub(1)).map(|_| rng.random()).collect();
            cuts.sort_by(f64::total_cmp);
            let mut prev = 0.0;
            let mut mags = Vec::with_capacity(k);
            for c in cuts.into_iter().chain(std::iter::once(1.0)) {
                mags.push(r * (c - prev).powf(1.0 / p));
                prev = c;
            }
            mags
        }
        NormOrder::Infinity => {
            let pivot = rng.random_range(0..k);
            (0..k)
                .map(|j| if j == pivot { r } else { r * rng.random::<f64>() })
                .collect()
        }
    };
    for v in &mut out {
        if rng.random::<bool>() {
            *v = -*v;
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct PerturbationSample {
    pub z: DenseMatrix,
    pub row_radii: Vec<f64>,
    pub pivot_row: usize,
    /// Largest row norm, equal to `row_radii[pivot_row]`.
    pub radius: f64,
}

/// One draw of `Z ∈ R^{n×K}` with `max_i ‖Z_i‖_p = r`, `r` from the
/// radius density on `[0, ε]`.
pub fn sample_perturbation(epsilon: f64, n: usize, k: usize, p: NormOrder, rng: &mut Rng) -> Result<PerturbationSample> {
    if n == 0 || k == 0 {
        return Err(Error::Validation("perturbations need at least one row and one column".into()));
    }
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::Validation(format!("ball radius ε = {epsilon} must be positive")));
    }
    let radius = sample_radius(epsilon, k, rng);
    let pivot_row = rng.random_range(0..n);
    let row_radii: Vec<f64> = (0..n)
        .map(|i| if i == pivot_row { radius } else { sample_radius(radius, k, rng) })
        .collect();
    let mut z = DenseMatrix::zeros(n, k);
    for (i, &ri) in row_radii.iter().enumerate() {
        z.row_mut(i).copy_from_slice(&sample_sphere_row(ri, k, p, rng));
    }
    Ok(PerturbationSample {
        z,
        row_radii,
        pivot_row,
        radius,
    })
}

/// Spectral norm of the difference of two probability matrices, divided
/// by `2√N`, which keeps the value in `[0, 1]`.
pub fn output_distance(a: &DenseMatrix, b: &DenseMatrix, n_nodes: usize) -> Result<f64> {
    if n_nodes == 0 {
        return Err(Error::Validation("output distance over zero nodes".into()));
    }
    let diff = a.sub(b)?;
    let scale = 2.0 * (n_nodes as f64).sqrt();
    Ok((exact_spectral_norm(&diff) / scale).min(1.0))
}

/// Anything whose outputs can be compared before and after a feature
/// perturbation.
pub trait Predictor: Sync {
    fn predict(&self, x: &DenseMatrix) -> Result<DenseMatrix>;

    /// Distance between clean and perturbed outputs; defaults to
    /// [`output_distance`].
    fn distance(&self, clean: &DenseMatrix, perturbed: &DenseMatrix) -> Result<f64> {
        output_distance(clean, perturbed, clean.rows())
    }
}

/// Class probabilities of a model on a fixed graph.
pub struct ModelPredictor<'a> {
    pub model: &'a Model,
    pub graph: &'a PreparedGraph,
}

impl Predictor for ModelPredictor<'_> {
    fn predict(&self, x: &DenseMatrix) -> Result<DenseMatrix> {
        Ok(softmax_rows(&self.model.predict_logits(self.graph, x)?))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GraphEstimate {
    pub adv: f64,
    pub stderr: f64,
    pub hits: u64,
    pub samples: u64,
}

impl GraphEstimate {
    fn from_counts(hits: u64, samples: u64) -> Self {
        let adv = hits as f64 / samples as f64;
        Self {
            adv,
            stderr: (adv * (1.0 - adv) / samples as f64).sqrt(),
            hits,
            samples,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RobustnessEstimate {
    pub adv: f64,
    /// Binomial standard error `√(adv(1 − adv)/L)`.
    pub stderr: f64,
    pub samples: u64,
    pub per_graph: Vec<GraphEstimate>,
    pub config: SampleConfig,
}

/// Fraction of sampled perturbations that move the output by more than
/// `σ`, averaged per graph and then across graphs.
///
/// Sample `l` of graph `g` draws from the substream `(seed, g, l)`, so the
/// result is independent of evaluation order. Because the radius and the
/// row shapes come from separate uniforms, two configurations that differ
/// only in `ε` see perturbations that are exact rescalings of each other.
pub fn estimate_adv<P: Predictor>(predictor: &P, graphs: &[&DenseMatrix], cfg: &SampleConfig) -> Result<RobustnessEstimate> {
    cfg.validate()?;
    if graphs.is_empty() {
        return Err(Error::Validation("no graphs to estimate on".into()));
    }
    let per_graph = graphs
        .iter()
        .enumerate()
        .map(|(g, x)| {
            let clean = predictor.predict(x)?;
            let hits = (0..cfg.l_max)
                .into_par_iter()
                .map(|l| {
                    let mut rng = substream(cfg.seed, g as u64, l as u64);
                    let sample = sample_perturbation(cfg.epsilon, x.rows(), x.cols(), cfg.p, &mut rng)?;
                    let out = predictor.predict(&x.add(&sample.z)?)?;
                    let d = predictor.distance(&clean, &out)?;
                    Ok::<u64, Error>(u64::from(d > cfg.sigma))
                })
                .try_reduce(|| 0, |a, b| Ok(a + b))?;
            Ok(GraphEstimate::from_counts(hits, cfg.l_max as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    let adv = per_graph.iter().map(|e| e.adv).sum::<f64>() / per_graph.len() as f64;
    let samples = cfg.l_max as u64 * per_graph.len() as u64;
    Ok(RobustnessEstimate {
        adv,
        stderr: (adv * (1.0 - adv) / samples as f64).sqrt(),
        samples,
        per_graph,
        config: *cfg,
    })
}

/// [`estimate_adv`] for a node-classification model on its single graph.
pub fn estimate_model_adv(model: &Model, dataset: &Dataset, cfg: &SampleConfig) -> Result<RobustnessEstimate> {
    let predictor = ModelPredictor {
        model,
        graph: &dataset.graph,
    };
    estimate_adv(&predictor, &[&dataset.features.values], cfg)
}

/// Smallest `L` with `(1 − ratio^K)^L ≤ α`: enough samples that a sub-ball
/// of relative radius `ratio` is hit at least once with confidence `1 − α`.
pub fn required_samples(alpha: f64, r_ratio: f64, k: usize) -> Result<u64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Validation(format!("confidence α = {alpha} outside (0, 1)")));
    }
    if !(r_ratio > 0.0 && r_ratio <= 1.0) || k == 0 {
        return Err(Error::Validation(format!("radius ratio {r_ratio} outside (0, 1]")));
    }
    if r_ratio == 1.0 {
        return Ok(1);
    }
    let miss = (-r_ratio.powi(k as i32)).ln_1p();
    if miss == 0.0 {
        return Err(Error::Validation(format!(
            "radius ratio {r_ratio} with K = {k} is too small for a finite sample count"
        )));
    }
    let l = (alpha.ln() / miss).ceil();
    if !l.is_finite() || l > u64::MAX as f64 {
        return Err(Error::Validation("required sample count overflows".into()));
    }
    Ok((l as u64).max(1))
}
