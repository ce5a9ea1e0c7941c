//! Closed-form upper bounds on expected vulnerability.
//!
//! Every bound has the shape `γ = (Lipschitz-type constant) / σ`: by
//! Markov's inequality the probability that the output moves by more than
//! `σ` under a perturbation of size at most `ε` is at most `γ`.
//!
//! Layer norms are operator norms of the map `h ↦ h·W` acting on node
//! representations stored as rows, which is the orientation the forward pass
//! uses. For the ∞-norm that is the largest absolute column sum of `W`; for
//! the 1-norm the largest absolute row sum.

use std::collections::BTreeMap;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{walk_sums, FeatureMatrix, PreparedGraph};
use crate::nn::{DenseMatrix, Model, ModelKind};
use crate::ortho::exact_spectral_norm;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    One,
    Infinity,
    Two,
}

impl FromStr for NormKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "one" | "1" | "l1" => Ok(Self::One),
            "infinity" | "inf" | "max" | "linf" => Ok(Self::Infinity),
            "two" | "2" | "l2" | "spectral" => Ok(Self::Two),
            other => Err(Error::Config(format!("unknown norm {other:?}"))),
        }
    }
}

/// Which part of the input the adversary may change.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceKind {
    /// Node features only.
    Feature,
    /// Edges only.
    Structural,
    /// Both at once.
    Combined,
}

impl FromStr for DistanceKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "feature" => Ok(Self::Feature),
            "structural" | "structure" => Ok(Self::Structural),
            "combined" => Ok(Self::Combined),
            other => Err(Error::Config(format!("unknown distance kind {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundQuery {
    pub epsilon: f64,
    pub sigma: f64,
    pub norm: NormKind,
    /// `B` with `‖X‖ ≤ B`, needed by the GIN and combined bounds.
    pub feature_bound: Option<f64>,
    pub distance: DistanceKind,
}

impl BoundQuery {
    pub fn feature(epsilon: f64, sigma: f64, norm: NormKind) -> Self {
        Self {
            epsilon,
            sigma,
            norm,
            feature_bound: None,
            distance: DistanceKind::Feature,
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::Validation(format!("ε = {} must be finite and non-negative", self.epsilon)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::Validation(format!("σ = {} must be positive", self.sigma)));
        }
        if let Some(b) = self.feature_bound {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Validation(format!("feature bound B = {b} must be positive")));
            }
        }
        Ok(())
    }

    fn require_bound(&self) -> Result<f64> {
        self.feature_bound
            .ok_or_else(|| Error::Validation("this bound needs a feature bound B".into()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Theorem {
    /// GCN, feature perturbations, 1- or ∞-norm output distance.
    GcnFeature,
    /// GCN, edge perturbations, spectral norms.
    GcnStructural,
    /// GIN with ζ = 0, feature perturbations, ∞-norm.
    GinFeature,
    /// GCN, simultaneous edge and feature perturbations.
    Combined,
}

/// `γ` together with the factors it was computed from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub theorem: Theorem,
    pub gamma: f64,
    pub factors: BTreeMap<String, f64>,
}

impl BoundReport {
    fn build(theorem: Theorem, factors: BTreeMap<String, f64>) -> Result<Self> {
        let gamma = evaluate(theorem, &factors)?;
        Ok(Self {
            theorem,
            gamma,
            factors,
        })
    }

    /// Re-evaluates `γ` from the reported factors alone.
    pub fn recompute(&self) -> Result<f64> {
        evaluate(self.theorem, &self.factors)
    }

    pub fn factor(&self, name: &str) -> Option<f64> {
        self.factors.get(name).copied()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn evaluate(theorem: Theorem, f: &BTreeMap<String, f64>) -> Result<f64> {
    let get = |k: &str| {
        f.get(k)
            .copied()
            .ok_or_else(|| Error::Validation(format!("bound report is missing factor {k:?}")))
    };
    let (np, eps, sigma) = (get("norm_product")?, get("epsilon")?, get("sigma")?);
    Ok(match theorem {
        Theorem::GcnFeature => np * eps * get("walk_sum")? / sigma,
        Theorem::GcnStructural => {
            let l = get("layers")?;
            np * get("feature_norm")? * eps * (1.0 + l * np) / sigma
        }
        Theorem::GinFeature => {
            np * (get("feature_bound")? * get("layers")? * get("max_degree")? + eps) / sigma
        }
        Theorem::Combined => {
            let s = get("walk_sum")?;
            let l = get("layers")?;
            np * (s * s + get("feature_bound")? * (1.0 + l * np)) * eps / sigma
        }
    })
}

/// Induced matrix norm: `One` is the largest absolute column sum,
/// `Infinity` the largest absolute row sum, `Two` the spectral norm.
pub fn matrix_norm(w: &DenseMatrix, which: NormKind) -> f64 {
    match which {
        NormKind::One => (0..w.cols())
            .map(|j| (0..w.rows()).map(|i| w.get(i, j).abs()).sum::<f64>())
            .fold(0.0, f64::max),
        NormKind::Infinity => (0..w.rows())
            .map(|i| w.row(i).iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max),
        NormKind::Two => exact_spectral_norm(w),
    }
}

/// Operator norm of `h ↦ h·W` for row vectors `h`, i.e. `‖Wᵀ‖`.
pub fn layer_operator_norm(w: &DenseMatrix, which: NormKind) -> f64 {
    match which {
        NormKind::One => matrix_norm(w, NormKind::Infinity),
        NormKind::Infinity => matrix_norm(w, NormKind::One),
        NormKind::Two => matrix_norm(w, NormKind::Two),
    }
}

/// `∏_ℓ ‖W_ℓ‖` over the weights the model actually applies.
pub fn norm_product(model: &Model, which: NormKind) -> Result<f64> {
    Ok(model
        .effective_weights()?
        .iter()
        .map(|w| layer_operator_norm(w, which))
        .product())
}

fn base_factors(np: f64, q: &BoundQuery) -> BTreeMap<String, f64> {
    BTreeMap::from([
        ("norm_product".to_string(), np),
        ("epsilon".to_string(), q.epsilon),
        ("sigma".to_string(), q.sigma),
    ])
}

fn require_kind(model: &Model, kind: ModelKind, what: &str) -> Result<()> {
    if model.kind != kind {
        return Err(Error::Validation(format!("{what} requires a {kind:?} model")));
    }
    Ok(())
}

/// Feature-perturbation bound for GCNs.
///
/// `γ = ∏‖W‖₁ · ε · Σ_u ŵ_u / σ` for the 1-norm and
/// `γ = ∏‖W‖_∞ · ε · max_u ŵ_u / σ` for the ∞-norm, where `ŵ_u` sums the
/// normalized walks from `u` whose length is the number of message-passing
/// layers (one less than the layer count for models with a readout).
pub fn gcn_feature_bound(model: &Model, graph: &PreparedGraph, q: &BoundQuery) -> Result<BoundReport> {
    q.validate()?;
    require_kind(model, ModelKind::Gcn, "the GCN feature bound")?;
    if q.distance != DistanceKind::Feature {
        return Err(Error::Validation("the GCN feature bound needs distance = feature".into()));
    }
    let walks = walk_sums(&graph.adjacency, model.message_passing_layers());
    let walk = match q.norm {
        NormKind::One => walks.sum(),
        NormKind::Infinity => walks.max(),
        NormKind::Two => {
            return Err(Error::Unsupported(
                "the GCN feature bound is stated for the 1- and ∞-norms only".into(),
            ))
        }
    };
    let mut f = base_factors(norm_product(model, q.norm)?, q);
    f.insert("walk_sum".into(), walk);
    f.insert("walk_length".into(), walks.length as f64);
    f.insert("layers".into(), model.num_layers() as f64);
    BoundReport::build(Theorem::GcnFeature, f)
}

/// Edge-perturbation bound for GCNs:
/// `γ = ∏‖W‖₂ · ‖X‖₂ · ε · (1 + L ∏‖W‖₂) / σ`.
pub fn gcn_structural_bound(model: &Model, x: Option<&FeatureMatrix>, q: &BoundQuery) -> Result<BoundReport> {
    q.validate()?;
    require_kind(model, ModelKind::Gcn, "the structural bound")?;
    if q.distance != DistanceKind::Structural {
        return Err(Error::Validation("the structural bound needs distance = structural".into()));
    }
    if q.norm != NormKind::Two {
        return Err(Error::Unsupported("the structural bound uses spectral norms only".into()));
    }
    let x = x.ok_or_else(|| Error::Validation("the structural bound needs the feature matrix".into()))?;
    let mut f = base_factors(norm_product(model, NormKind::Two)?, q);
    f.insert("feature_norm".into(), matrix_norm(&x.values, NormKind::Two));
    f.insert("layers".into(), model.num_layers() as f64);
    BoundReport::build(Theorem::GcnStructural, f)
}

/// Feature-perturbation bound for GINs with `ζ = 0`:
/// `γ = ∏‖W‖_∞ · (B · L · Δ_G + ε) / σ`.
pub fn gin_feature_bound(model: &Model, graph: &PreparedGraph, q: &BoundQuery) -> Result<BoundReport> {
    q.validate()?;
    require_kind(model, ModelKind::Gin, "the GIN bound")?;
    if model.gin_zeta != 0.0 {
        return Err(Error::Validation(format!(
            "the GIN bound holds for ζ = 0, model has ζ = {}",
            model.gin_zeta
        )));
    }
    if q.distance != DistanceKind::Feature {
        return Err(Error::Validation("the GIN bound needs distance = feature".into()));
    }
    if q.norm != NormKind::Infinity {
        return Err(Error::Unsupported("the GIN bound is stated for the ∞-norm".into()));
    }
    let b = q.require_bound()?;
    let mut f = base_factors(norm_product(model, NormKind::Infinity)?, q);
    f.insert("feature_bound".into(), b);
    f.insert("layers".into(), model.num_layers() as f64);
    f.insert("max_degree".into(), graph.graph.max_degree() as f64);
    BoundReport::build(Theorem::GinFeature, f)
}

/// Simultaneous edge and feature perturbations, spectral norms:
/// `γ = ∏‖W‖ · ((Σ_u ŵ_u)² + B(1 + L ∏‖W‖)) · ε / σ`.
pub fn combined_bound(model: &Model, graph: &PreparedGraph, q: &BoundQuery) -> Result<BoundReport> {
    q.validate()?;
    require_kind(model, ModelKind::Gcn, "the combined bound")?;
    if q.distance != DistanceKind::Combined {
        return Err(Error::Validation("the combined bound needs distance = combined".into()));
    }
    if q.norm != NormKind::Two {
        return Err(Error::Unsupported("the combined bound uses spectral norms only".into()));
    }
    let b = q.require_bound()?;
    let walks = walk_sums(&graph.adjacency, model.message_passing_layers());
    let mut f = base_factors(norm_product(model, NormKind::Two)?, q);
    f.insert("walk_sum".into(), walks.sum());
    f.insert("walk_length".into(), walks.length as f64);
    f.insert("feature_bound".into(), b);
    f.insert("layers".into(), model.num_layers() as f64);
    BoundReport::build(Theorem::Combined, f)
}

/// Dispatches on the query's distance kind and the model kind.
pub fn bound_for(
    model: &Model,
    graph: &PreparedGraph,
    x: Option<&FeatureMatrix>,
    q: &BoundQuery,
) -> Result<BoundReport> {
    match (q.distance, model.kind) {
        (DistanceKind::Feature, ModelKind::Gcn) => gcn_feature_bound(model, graph, q),
        (DistanceKind::Feature, ModelKind::Gin) => gin_feature_bound(model, graph, q),
        (DistanceKind::Structural, _) => gcn_structural_bound(model, x, q),
        (DistanceKind::Combined, _) => combined_bound(model, graph, q),
    }
}

/// Target of a norm conversion for an L2 feature-distance guarantee.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum TargetNorm {
    /// Any `p > 2`.
    P(f64),
    One,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct NormConversion {
    pub epsilon: f64,
    pub gamma: f64,
    pub note: Option<String>,
}

/// Turns an `(ε, γ)` guarantee for the row-wise L2 feature distance into one
/// for another `L_p` distance in dimension `K`.
///
/// - `p > 2`: `(ε / √K, γ)`
/// - `p = 1`: `(ε / K, √K · γ)`
pub fn convert_norm_guarantee(gamma: f64, epsilon: f64, to: TargetNorm, k: usize) -> Result<NormConversion> {
    if k == 0 {
        return Err(Error::Validation("feature dimension K must be at least 1".into()));
    }
    let kf = k as f64;
    match to {
        TargetNorm::P(p) if p > 2.0 => Ok(NormConversion {
            epsilon: epsilon / kf.sqrt(),
            gamma,
            note: None,
        }),
        TargetNorm::One => Ok(NormConversion {
            epsilon: epsilon / kf,
            gamma: gamma * kf.sqrt(),
            note: Some(
                "budget scaled by K^-1 as derived in the proof; the published statement reads K^-2".into(),
            ),
        }),
        TargetNorm::P(p) => Err(Error::Unsupported(format!(
            "conversion from the 2-norm to the {p}-norm"
        ))),
    }
}
