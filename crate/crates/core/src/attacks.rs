//! Feature and structural attacks, and accuracy under attack.

use std::str::FromStr;

use rand::seq::index;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::NormKind;
use crate::error::{Error, Result};
use crate::graph::{Dataset, FeatureMatrix, FeatureScaling, Graph};
use crate::nn::{accuracy_from_logits, backward, cross_entropy, DenseMatrix, Model};
use crate::rng::{substream, Rng};

/// Substream tag for per-trial attack randomness.
const ATTACK_STREAM: u64 = 0xA77A;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    /// Additive Gaussian noise on every feature.
    RandomFeature,
    /// Projected gradient ascent on the test cross-entropy.
    PgdFeature,
    /// Uniformly random edge flips.
    RandomStructural,
}

impl FromStr for AttackKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "random_feature" | "random" | "gaussian" => Ok(Self::RandomFeature),
            "pgd_feature" | "pgd" => Ok(Self::PgdFeature),
            "random_structural" | "structural" | "dice" => Ok(Self::RandomStructural),
            other => Err(Error::Config(format!("unknown attack kind {other:?}"))),
        }
    }
}

impl AttackKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::RandomFeature => "random_feature",
            Self::PgdFeature => "pgd_feature",
            Self::RandomStructural => "random_structural",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Noise scale ψ of the random feature attack.
    pub scale: f64,
    /// Per-row budget of the PGD attack.
    pub epsilon: f64,
    /// Fraction of rows PGD may modify.
    pub rate: f64,
    /// Edge flips as a fraction of the current edge count.
    pub flip_budget: f64,
    pub steps: usize,
    /// PGD step length; `None` means `2.5·ε/steps`.
    pub step_size: Option<f64>,
    /// Norm of the PGD ball.
    pub norm: NormKind,
    pub seed: u64,
}

impl Default for AttackSpec {
    fn default() -> Self {
        Self {
            kind: AttackKind::RandomFeature,
            scale: 1.0,
            epsilon: 0.5,
            rate: 0.15,
            flip_budget: 0.1,
            steps: 40,
            step_size: None,
            norm: NormKind::Infinity,
            seed: 0,
        }
    }
}

impl AttackSpec {
    pub fn random_feature(scale: f64) -> Self {
        Self {
            kind: AttackKind::RandomFeature,
            scale,
            ..Self::default()
        }
    }

    pub fn pgd_feature(epsilon: f64, rate: f64) -> Self {
        Self {
            kind: AttackKind::PgdFeature,
            epsilon,
            rate,
            ..Self::default()
        }
    }

    pub fn random_structural(flip_budget: f64) -> Self {
        Self {
            kind: AttackKind::RandomStructural,
            flip_budget,
            ..Self::default()
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: String| Err(Error::Validation(what));
        if !(self.scale >= 0.0 && self.scale.is_finite()) {
            return bad(format!("noise scale ψ = {} must be finite and non-negative", self.scale));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return bad(format!("attack budget ε = {} must be finite and non-negative", self.epsilon));
        }
        if !(0.0..=1.0).contains(&self.rate) {
            return bad(format!("perturbation rate {} outside [0, 1]", self.rate));
        }
        if !(0.0..=1.0).contains(&self.flip_budget) {
            return bad(format!("flip budget {} outside [0, 1]", self.flip_budget));
        }
        if self.steps == 0 {
            return bad("PGD needs at least one step".into());
        }
        if let Some(s) = self.step_size {
            if !(s > 0.0 && s.is_finite()) {
                return bad(format!("PGD step size {s} must be positive"));
            }
        }
        Ok(())
    }

    pub fn effective_step(&self) -> f64 {
        self.step_size
            .unwrap_or(2.5 * self.epsilon / self.steps as f64)
    }
}

/// `X + ψ·Z` with `Z` i.i.d. standard normal.
pub fn random_feature_attack(x: &FeatureMatrix, spec: &AttackSpec, rng: &mut Rng) -> Result<FeatureMatrix> {
    spec.validate()?;
    if spec.scale == 0.0 {
        return Ok(x.clone());
    }
    let mut values = x.values.clone();
    for v in values.as_mut_slice() {
        let z: f64 = StandardNormal.sample(rng);
        *v += spec.scale * z;
    }
    Ok(FeatureMatrix {
        values,
        scaling: FeatureScaling::None,
    })
}

/// Projected gradient ascent on the mean cross-entropy of the test nodes.
///
/// The rows allowed to move are the `⌈rate·n⌉` rows with the largest
/// gradient norm at the clean input. Each step moves those rows along the
/// steepest-ascent direction of the chosen norm and projects back onto the
/// per-row ball of radius `ε` around the clean features.
pub fn pgd_feature_attack(model: &Model, dataset: &Dataset, spec: &AttackSpec) -> Result<FeatureMatrix> {
    spec.validate()?;
    let x0 = &dataset.features.values;
    let n = x0.rows();
    let budget = (spec.rate * n as f64).ceil() as usize;
    if spec.epsilon == 0.0 || budget == 0 {
        return Ok(dataset.features.clone());
    }
    if dataset.split.test.is_empty() {
        return Err(Error::Validation("PGD attacks the test nodes, but the test split is empty".into()));
    }
    let grad_at = |x: &DenseMatrix| -> Result<DenseMatrix> {
        let (logits, cache) = model.forward(&dataset.graph, x)?;
        let (_, d_logits) = cross_entropy(&logits, &dataset.labels, &dataset.split.test)?;
        let g = backward(model, &dataset.graph, &cache, &d_logits)?.features;
        if !g.is_finite() {
            return Err(Error::NonFinite("feature gradient during PGD".into()));
        }
        Ok(g)
    };

    let g0 = grad_at(x0)?;
    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|i| crate::nn::dense::dot(g0.row(i), g0.row(i))).collect();
    order.sort_by(|&a, &b| norms[b].total_cmp(&norms[a]).then(a.cmp(&b)));
    order.truncate(budget.min(n));
    order.sort_unstable();

    let step = spec.effective_step();
    let mut x = x0.clone();
    let mut g = g0;
    for it in 0..spec.steps {
        if it > 0 {
            g = grad_at(&x)?;
        }
        for &u in &order {
            let dir = ascent_direction(g.row(u), spec.norm);
            let clean = x0.row(u);
            let row = x.row_mut(u);
            let mut delta: Vec<f64> = row
                .iter()
                .zip(clean)
                .zip(&dir)
                .map(|((xi, ci), di)| xi - ci + step * di)
                .collect();
            project_ball(&mut delta, spec.epsilon, spec.norm);
            for ((xi, ci), di) in row.iter_mut().zip(clean).zip(&delta) {
                *xi = ci + di;
            }
            debug_assert!(row_norm(&delta, spec.norm) <= spec.epsilon * (1.0 + 1e-12) + 1e-12);
        }
    }
    FeatureMatrix::new(x).map(|mut f| {
        f.scaling = FeatureScaling::None;
        f
    })
}

/// Unit-norm direction maximizing `⟨g, d⟩` over the given norm ball.
fn ascent_direction(g: &[f64], norm: NormKind) -> Vec<f64> {
    match norm {
        NormKind::Infinity => g.iter().map(|v| sign(*v)).collect(),
        NormKind::Two => {
            let len = crate::nn::dense::dot(g, g).sqrt();
            if len == 0.0 {
                vec![0.0; g.len()]
            } else {
                g.iter().map(|v| v / len).collect()
            }
        }
        NormKind::One => {
            let mut d = vec![0.0; g.len()];
            if let Some((j, v)) = g
                .iter()
                .enumerate()
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()).then(b.0.cmp(&a.0)))
            {
                d[j] = sign(*v);
            }
            d
        }
    }
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

pub(crate) fn row_norm(v: &[f64], norm: NormKind) -> f64 {
    match norm {
        NormKind::One => v.iter().map(|x| x.abs()).sum(),
        NormKind::Two => crate::nn::dense::dot(v, v).sqrt(),
        NormKind::Infinity => v.iter().fold(0.0, |m, x| m.max(x.abs())),
    }
}

/// Euclidean projection of `v` onto the ball `‖v‖ ≤ radius`.
fn project_ball(v: &mut [f64], radius: f64, norm: NormKind) {
    match norm {
        NormKind::Infinity => v.iter_mut().for_each(|x| *x = x.clamp(-radius, radius)),
        NormKind::Two => {
            let len = row_norm(v, NormKind::Two);
            if len > radius {
                let s = radius / len;
                v.iter_mut().for_each(|x| *x *= s);
            }
        }
        NormKind::One => {
            if row_norm(v, NormKind::One) <= radius {
                return;
            }
            let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
            mags.sort_by(|a, b| b.total_cmp(a));
            let mut cum = 0.0;
            let mut theta = 0.0;
            for (j, m) in mags.iter().enumerate() {
                cum += m;
                let t = (cum - radius) / (j + 1) as f64;
                if *m > t {
                    theta = t;
                }
            }
            v.iter_mut().for_each(|x| *x = sign(*x) * (x.abs() - theta).max(0.0));
        }
    }
}

/// Flips exactly `⌊budget·|E|⌋` distinct node pairs, chosen uniformly among
/// all `n(n−1)/2` pairs: present edges are removed, absent ones added.
pub fn random_structural_attack(g: &Graph, flip_budget: f64, rng: &mut Rng) -> Result<Graph> {
    if !(0.0..=1.0).contains(&flip_budget) {
        return Err(Error::Validation(format!("flip budget {flip_budget} outside [0, 1]")));
    }
    let flips = (flip_budget * g.num_edges() as f64).floor() as usize;
    if flips == 0 {
        return Ok(g.clone());
    }
    let n = g.num_nodes();
    let pairs = n * (n - 1) / 2;
    let chosen: Vec<(usize, usize)> = index::sample(rng, pairs, flips)
        .into_iter()
        .map(|t| decode_pair(n, t))
        .collect();
    g.with_flipped(&chosen)
}

/// Maps `t ∈ [0, n(n−1)/2)` to the `t`-th pair `(u, v)`, `u < v`, in
/// row-major order.
fn decode_pair(n: usize, t: usize) -> (usize, usize) {
    // pairs before row u: u(2n − u − 1)/2; before(n − 1) exceeds every t
    let before = |u: usize| u * (2 * n - u - 1) / 2;
    let (mut lo, mut hi) = (0, n - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if before(mid) <= t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo, lo + 1 + t - before(lo))
}

/// The dataset an attack produces; `rng` drives the random attacks.
pub fn apply_attack(model: &Model, dataset: &Dataset, spec: &AttackSpec, rng: &mut Rng) -> Result<Dataset> {
    spec.validate()?;
    match spec.kind {
        AttackKind::RandomFeature => dataset.with_features(random_feature_attack(&dataset.features, spec, rng)?),
        AttackKind::PgdFeature => dataset.with_features(pgd_feature_attack(model, dataset, spec)?),
        AttackKind::RandomStructural => {
            dataset.with_graph(random_structural_attack(&dataset.graph.graph, spec.flip_budget, rng)?)
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AttackSummary {
    pub mean: f64,
    /// Sample standard deviation across trials; 0 for a single trial.
    pub std: f64,
    pub trials: usize,
    pub accuracies: Vec<f64>,
}

/// Test accuracy under `trials` independent attacks.
///
/// Trial `t` draws from the substream `(spec.seed, t)`, so the result does
/// not depend on how trials are scheduled.
pub fn attacked_accuracy(model: &Model, dataset: &Dataset, spec: &AttackSpec, trials: usize) -> Result<AttackSummary> {
    spec.validate()?;
    if trials == 0 {
        return Err(Error::Validation("at least one attack trial is required".into()));
    }
    if dataset.split.test.is_empty() {
        return Err(Error::Validation("test split is empty".into()));
    }
    let accuracies = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = substream(spec.seed, ATTACK_STREAM, t as u64);
            let attacked = apply_attack(model, dataset, spec, &mut rng)?;
            let logits = model.predict_logits(&attacked.graph, &attacked.features.values)?;
            accuracy_from_logits(&logits, &attacked.labels, &attacked.split.test)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = accuracies.iter().sum::<f64>() / trials as f64;
    let std = if trials > 1 {
        (accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (trials - 1) as f64).sqrt()
    } else {
        0.0
    };
    Ok(AttackSummary {
        mean,
        std,
        trials,
        accuracies,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_sbm, SbmConfig};
    use crate::nn::{accuracy, ModelKind};
    use crate::rng::seeded;

    #[test]
    fn decode_pair_enumerates_in_order() {
        for n in 2..8 {
            let mut t = 0;
            for u in 0..n {
                for v in u + 1..n {
                    assert_eq!(decode_pair(n, t), (u, v));
                    t += 1;
                }
            }
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let ds = generate_sbm(&SbmConfig::default()).unwrap();
        let out = random_feature_attack(&ds.features, &AttackSpec::random_feature(0.0), &mut seeded(1)).unwrap();
        assert_eq!(out, ds.features);
    }

    #[test]
    fn structural_budget_edge_cases() {
        let g = Graph::from_edges(2, [(0, 1)]).unwrap();
        assert_eq!(random_structural_attack(&g, 0.0, &mut seeded(0)).unwrap(), g);
        let out = random_structural_attack(&g, 1.0, &mut seeded(0)).unwrap();
        assert_eq!(out.num_edges(), 0);
        assert!(random_structural_attack(&g, 1.5, &mut seeded(0)).is_err());
    }

    #[test]
    fn l1_projection_lands_on_ball() {
        let mut v = vec![3.0, -1.0, 0.5];
        project_ball(&mut v, 2.0, NormKind::One);
        assert!((row_norm(&v, NormKind::One) - 2.0).abs() < 1e-12);
        assert_eq!(v, vec![2.0, 0.0, 0.0]);
        let mut w = vec![0.3, -0.2];
        project_ball(&mut w, 2.0, NormKind::One);
        assert_eq!(w, vec![0.3, -0.2]);
    }

    #[test]
    fn pgd_respects_budget_and_row_count() {
        let ds = generate_sbm(&SbmConfig::default()).unwrap();
        let model = Model::standard(ModelKind::Gcn, 2, 8, 2, false, 3).unwrap();
        for norm in [NormKind::One, NormKind::Two, NormKind::Infinity] {
            let spec = AttackSpec {
                norm,
                ..AttackSpec::pgd_feature(0.3, 0.2)
            };
            let out = pgd_feature_attack(&model, &ds, &spec).unwrap();
            let mut changed = 0;
            for u in 0..ds.num_nodes() {
                let d: Vec<f64> = out.values.row(u).iter().zip(ds.features.values.row(u)).map(|(a, b)| a - b).collect();
                assert!(row_norm(&d, norm) <= 0.3 + 1e-9);
                changed += usize::from(d.iter().any(|v| *v != 0.0));
            }
            assert!(changed <= 8);
        }
    }

    #[test]
    fn zero_noise_trials_equal_clean_accuracy() {
        let ds = generate_sbm(&SbmConfig::default()).unwrap();
        let model = Model::standard(ModelKind::Gcn, 2, 8, 2, false, 3).unwrap();
        let clean = accuracy(&model, &ds, &ds.split.test).unwrap();
        let s = attacked_accuracy(&model, &ds, &AttackSpec::random_feature(0.0), 3).unwrap();
        assert_eq!(s.mean, clean);
        assert_eq!(s.std, 0.0);
    }
}
