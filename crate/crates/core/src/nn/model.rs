use std::hash::{Hash, Hasher};

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, NormalizedAdjacency, PreparedGraph};
use crate::ortho::{bjorck_with_tape, bjorck_project, BjorckTape, OrthoConfig};

use super::DenseMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    Gcn,
    Gin,
}

impl std::str::FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gcn" => Ok(Self::Gcn),
            "gin" => Ok(Self::Gin),
            other => Err(Error::Config(format!("unknown model kind {other:?}"))),
        }
    }
}

/// Activation between layers. The output layer is always left linear; the
/// softmax is applied by the loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, v: f64) -> f64 {
        match self {
            Activation::Relu => v.max(0.0),
            Activation::Identity => v,
        }
    }

    #[inline]
    fn derivative(self, pre: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }
}

/// A stack of message-passing layers, optionally closed by a linear readout.
///
/// Layer `ℓ` computes `φ(Agg(H W_ℓ))` where `Agg` is `Ã·` for GCN and
/// `(1+ζ)h_u + Σ_{v∈N(u)} h_v` for GIN. With `readout` set, the last weight
/// matrix is applied without aggregation. With `gcorn` set, every weight is
/// replaced by its Björck projection on each forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct Model {
    pub kind: ModelKind,
    pub layers: Vec<DenseMatrix>,
    pub activation: Activation,
    pub readout: bool,
    pub gcorn: bool,
    pub ortho: OrthoConfig,
    pub gin_zeta: f64,
}

impl Model {
    /// Wraps explicit weights after checking that dimensions chain.
    pub fn from_layers(kind: ModelKind, layers: Vec<DenseMatrix>) -> Result<Self> {
        let m = Self {
            kind,
            layers,
            activation: Activation::Relu,
            readout: false,
            gcorn: false,
            ortho: OrthoConfig::default(),
            gin_zeta: 0.0,
        };
        m.validate()?;
        Ok(m)
    }

    /// Glorot-uniform initialized model with layer widths `dims`
    /// (`dims.len() - 1` weight matrices).
    pub fn glorot(kind: ModelKind, dims: &[usize], readout: bool, rng: &mut crate::rng::Rng) -> Result<Self> {
        if dims.len() < 2 {
            return Err(Error::Validation("a model needs at least one layer".into()));
        }
        let layers = dims
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                DenseMatrix::from_fn(w[0], w[1], |_, _| rng.random_range(-limit..limit))
            })
            .collect();
        let mut m = Self::from_layers(kind, layers)?;
        m.readout = readout;
        Ok(m)
    }

    /// Two message-passing layers of width `hidden` followed by a linear readout.
    pub fn standard(
        kind: ModelKind,
        in_dim: usize,
        hidden: usize,
        classes: usize,
        gcorn: bool,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = crate::rng::seeded(seed);
        let mut m = Self::glorot(kind, &[in_dim, hidden, hidden, classes], true, &mut rng)?;
        m.gcorn = gcorn;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Validation("a model needs at least one layer".into()));
        }
        for (i, w) in self.layers.iter().enumerate() {
            if w.rows() == 0 || w.cols() == 0 {
                return Err(Error::dim(format!("layer {i} has an empty weight matrix")));
            }
            if !w.is_finite() {
                return Err(Error::NonFinite(format!("layer {i} weights")));
            }
        }
        for (i, pair) in self.layers.windows(2).enumerate() {
            if pair[0].cols() != pair[1].rows() {
                return Err(Error::dim(format!(
                    "layer {} outputs {} columns but layer {} expects {} rows",
                    i,
                    pair[0].cols(),
                    i + 1,
                    pair[1].rows()
                )));
            }
        }
        if !self.gin_zeta.is_finite() {
            return Err(Error::Validation("GIN ζ must be finite".into()));
        }
        self.ortho.validate()
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    /// Number of layers that aggregate over neighbors.
    pub fn message_passing_layers(&self) -> usize {
        self.layers.len() - usize::from(self.readout)
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].rows()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().cols()
    }

    /// The weights the forward pass actually multiplies by.
    pub fn effective_weights(&self) -> Result<Vec<DenseMatrix>> {
        if !self.gcorn {
            return Ok(self.layers.clone());
        }
        self.layers
            .iter()
            .enumerate()
            .map(|(layer, w)| bjorck_project(w, &self.ortho).map_err(|e| tag_layer(e, layer)))
            .collect()
    }

    /// Copy whose raw weights are the effective ones and `gcorn` is off;
    /// same outputs, no per-call projection.
    pub fn materialized(&self) -> Result<Self> {
        let mut m = self.clone();
        m.layers = self.effective_weights()?;
        m.gcorn = false;
        Ok(m)
    }

    /// Logits without recording a cache.
    pub fn predict_logits(&self, graph: &PreparedGraph, x: &DenseMatrix) -> Result<DenseMatrix> {
        let weights = self.effective_weights()?;
        let agg = self.aggregator(graph);
        let mut h = self.check_input(graph.num_nodes(), x)?.clone();
        for (l, w) in weights.iter().enumerate() {
            let mut pre = h.matmul(w)?;
            if self.aggregates(l) {
                pre = agg.apply(&pre)?;
            }
            h = if l + 1 < weights.len() {
                pre.map(|v| self.activation.apply(v))
            } else {
                pre
            };
        }
        Ok(h)
    }

    /// Forward pass recording everything [`backward`] needs.
    pub fn forward(&self, graph: &PreparedGraph, x: &DenseMatrix) -> Result<(DenseMatrix, ForwardCache)> {
        run_forward(self, &self.aggregator(graph), x)
    }

    fn aggregates(&self, layer: usize) -> bool {
        !(self.readout && layer + 1 == self.layers.len())
    }

    fn aggregator<'a>(&self, graph: &'a PreparedGraph) -> Aggregator<'a> {
        match self.kind {
            ModelKind::Gcn => Aggregator::Normalized(&graph.adjacency),
            ModelKind::Gin => Aggregator::Sum {
                graph: &graph.graph,
                self_weight: 1.0 + self.gin_zeta,
            },
        }
    }

    fn check_input<'x>(&self, n: usize, x: &'x DenseMatrix) -> Result<&'x DenseMatrix> {
        self.validate()?;
        if x.rows() != n {
            return Err(Error::dim(format!("graph has {n} nodes, features have {} rows", x.rows())));
        }
        if x.cols() != self.in_dim() {
            return Err(Error::dim(format!(
                "features have {} columns, first layer expects {}",
                x.cols(),
                self.in_dim()
            )));
        }
        Ok(x)
    }

    fn digest(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.gcorn.hash(&mut h);
        self.readout.hash(&mut h);
        self.gin_zeta.to_bits().hash(&mut h);
        for w in &self.layers {
            w.shape().hash(&mut h);
            for v in w.as_slice() {
                v.to_bits().hash(&mut h);
            }
        }
        h.finish()
    }
}

fn tag_layer(e: Error, layer: usize) -> Error {
    match e {
        Error::Convergence {
            iteration, defect, ..
        } => Error::Convergence {
            layer,
            iteration,
            defect,
        },
        other => other,
    }
}

/// Neighborhood aggregation; both variants are symmetric linear operators,
/// so the same operator also carries gradients backwards.
#[derive(Clone, Copy)]
enum Aggregator<'a> {
    Normalized(&'a NormalizedAdjacency),
    Sum { graph: &'a Graph, self_weight: f64 },
}

impl Aggregator<'_> {
    fn apply(&self, h: &DenseMatrix) -> Result<DenseMatrix> {
        match *self {
            Aggregator::Normalized(adj) => adj.apply(h),
            Aggregator::Sum { graph, self_weight } => {
                let n = graph.num_nodes();
                if h.rows() != n {
                    return Err(Error::dim(format!("graph has {n} nodes, input has {} rows", h.rows())));
                }
                let mut out = h.scale(self_weight);
                for u in 0..n {
                    for &v in graph.neighbors(u) {
                        for (o, x) in out.row_mut(u).iter_mut().zip(h.row(v)) {
                            *o += x;
                        }
                    }
                }
                Ok(out)
            }
        }
    }
}

/// Per-layer intermediates from a forward pass.
#[derive(Clone, Debug)]
pub struct ForwardCache {
    digest: u64,
    inputs: Vec<DenseMatrix>,
    pre: Vec<DenseMatrix>,
    weights: Vec<DenseMatrix>,
    tapes: Vec<Option<BjorckTape>>,
}

/// Gradients with respect to the raw weights and the input features.
#[derive(Clone, Debug)]
pub struct Gradients {
    pub weights: Vec<DenseMatrix>,
    pub features: DenseMatrix,
}

fn run_forward(model: &Model, agg: &Aggregator<'_>, x: &DenseMatrix) -> Result<(DenseMatrix, ForwardCache)> {
    let n = match agg {
        Aggregator::Normalized(a) => a.num_nodes(),
        Aggregator::Sum { graph, .. } => graph.num_nodes(),
    };
    model.check_input(n, x)?;
    let mut weights = Vec::with_capacity(model.layers.len());
    let mut tapes = Vec::with_capacity(model.layers.len());
    for (layer, w) in model.layers.iter().enumerate() {
        if model.gcorn {
            let (p, tape) = bjorck_with_tape(w, &model.ortho).map_err(|e| tag_layer(e, layer))?;
            weights.push(p);
            tapes.push(Some(tape));
        } else {
            weights.push(w.clone());
            tapes.push(None);
        }
    }
    let mut inputs = Vec::with_capacity(weights.len());
    let mut pres = Vec::with_capacity(weights.len());
    let mut h = x.clone();
    for (l, w) in weights.iter().enumerate() {
        let mut pre = h.matmul(w)?;
        if model.aggregates(l) {
            pre = agg.apply(&pre)?;
        }
        let next = if l + 1 < weights.len() {
            pre.map(|v| model.activation.apply(v))
        } else {
            pre.clone()
        };
        inputs.push(h);
        pres.push(pre);
        h = next;
    }
    Ok((
        h,
        ForwardCache {
            digest: model.digest(),
            inputs,
            pre: pres,
            weights,
            tapes,
        },
    ))
}

/// GCN forward pass: `H_ℓ = φ(Ã H_{ℓ-1} W_ℓ)`.
pub fn gcn_forward(model: &Model, adj: &NormalizedAdjacency, x: &DenseMatrix) -> Result<(DenseMatrix, ForwardCache)> {
    if model.kind != ModelKind::Gcn {
        return Err(Error::Validation("gcn_forward called on a GIN model".into()));
    }
    run_forward(model, &Aggregator::Normalized(adj), x)
}

/// GIN forward pass: `h_u ← φ(((1+ζ)h_u + Σ_{v∈N(u)} h_v) W_ℓ)`.
pub fn gin_forward(model: &Model, graph: &Graph, x: &DenseMatrix) -> Result<(DenseMatrix, ForwardCache)> {
    if model.kind != ModelKind::Gin {
        return Err(Error::Validation("gin_forward called on a GCN model".into()));
    }
    run_forward(
        model,
        &Aggregator::Sum {
            graph,
            self_weight: 1.0 + model.gin_zeta,
        },
        x,
    )
}

/// Reverse-mode pass from `d_logits` back to the raw weights and `X`.
///
/// The cache must come from a forward pass of this exact model; anything
/// else is reported as a stale cache.
pub fn backward(
    model: &Model,
    graph: &PreparedGraph,
    cache: &ForwardCache,
    d_logits: &DenseMatrix,
) -> Result<Gradients> {
    if cache.digest != model.digest() || cache.weights.len() != model.layers.len() {
        return Err(Error::Validation("stale forward cache: model changed since the forward pass".into()));
    }
    let agg = model.aggregator(graph);
    let last = cache.pre.len() - 1;
    if d_logits.shape() != cache.pre[last].shape() {
        return Err(Error::dim("upstream gradient does not match the logits"));
    }
    let mut grads = vec![DenseMatrix::zeros(0, 0); model.layers.len()];
    let mut d_h = d_logits.clone();
    for l in (0..=last).rev() {
        let d_pre = if l == last {
            d_h
        } else {
            d_h.zip_with(&cache.pre[l], |g, p| g * model.activation.derivative(p))?
        };
        let d_z = if model.aggregates(l) {
            agg.apply(&d_pre)?
        } else {
            d_pre
        };
        let d_w_eff = cache.inputs[l].t_matmul(&d_z)?;
        d_h = d_z.matmul_t(&cache.weights[l])?;
        grads[l] = match &cache.tapes[l] {
            Some(tape) => tape.backward(&d_w_eff)?,
            None => d_w_eff,
        };
    }
    Ok(Gradients {
        weights: grads,
        features: d_h,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_model(kind: ModelKind, w: f64) -> Model {
        let mut m = Model::from_layers(kind, vec![DenseMatrix::from_vec(1, 1, vec![w]).unwrap()]).unwrap();
        m.activation = Activation::Identity;
        m
    }

    fn path2() -> PreparedGraph {
        PreparedGraph::new(Graph::from_edges(2, [(0, 1)]).unwrap())
    }

    #[test]
    fn identity_chain_on_single_node() {
        let g = PreparedGraph::new(Graph::empty(1));
        let x = DenseMatrix::from_rows(&[vec![0.3, -1.2, 4.0]]).unwrap();
        for kind in [ModelKind::Gcn, ModelKind::Gin] {
            let mut m = Model::from_layers(kind, vec![DenseMatrix::identity(3)]).unwrap();
            m.activation = Activation::Identity;
            assert_eq!(m.predict_logits(&g, &x).unwrap(), x);
        }
    }

    #[test]
    fn two_node_path_examples() {
        let g = path2();
        let x = DenseMatrix::from_vec(2, 1, vec![1.0, 0.0]).unwrap();
        let gcn = scalar_model(ModelKind::Gcn, 1.0);
        let (logits, _) = gcn_forward(&gcn, &g.adjacency, &x).unwrap();
        assert_eq!(logits.as_slice(), &[0.5, 0.5]);

        let x = DenseMatrix::from_vec(2, 1, vec![0.7, -0.2]).unwrap();
        let gin = scalar_model(ModelKind::Gin, 1.0);
        let (logits, _) = gin_forward(&gin, &g.graph, &x).unwrap();
        assert_eq!(logits.as_slice(), &[0.5, 0.5].map(|_| 0.7 + -0.2));
    }

    #[test]
    fn readout_layer_skips_aggregation() {
        let g = path2();
        let x = DenseMatrix::from_vec(2, 1, vec![1.0, 0.0]).unwrap();
        let mut m = scalar_model(ModelKind::Gcn, 2.0);
        m.readout = true;
        assert_eq!(m.message_passing_layers(), 0);
        assert_eq!(m.predict_logits(&g, &x).unwrap().as_slice(), &[2.0, 0.0]);
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let g = path2();
        let m = Model::from_layers(ModelKind::Gcn, vec![DenseMatrix::zeros(3, 2)]).unwrap();
        assert!(matches!(m.predict_logits(&g, &DenseMatrix::zeros(2, 2)), Err(Error::Dimension(_))));
        assert!(Model::from_layers(ModelKind::Gcn, vec![DenseMatrix::zeros(3, 2), DenseMatrix::zeros(3, 2)]).is_err());
    }

    #[test]
    fn zero_upstream_gradient_gives_zero_gradients() {
        let g = path2();
        let mut rng = crate::rng::seeded(3);
        let m = Model::glorot(ModelKind::Gcn, &[2, 3, 2], false, &mut rng).unwrap();
        let x = DenseMatrix::from_fn(2, 2, |i, j| (i + j) as f64 - 0.5);
        let (logits, cache) = m.forward(&g, &x).unwrap();
        let grads = backward(&m, &g, &cache, &DenseMatrix::zeros(logits.rows(), logits.cols())).unwrap();
        assert!(grads.weights.iter().all(|w| w.max_abs() == 0.0));
        assert_eq!(grads.features.max_abs(), 0.0);
    }

    #[test]
    fn stale_cache_is_rejected() {
        let g = path2();
        let mut rng = crate::rng::seeded(4);
        let mut m = Model::glorot(ModelKind::Gin, &[1, 2, 1], false, &mut rng).unwrap();
        let x = DenseMatrix::from_vec(2, 1, vec![1.0, 2.0]).unwrap();
        let (logits, cache) = m.forward(&g, &x).unwrap();
        m.layers[0].set(0, 0, 9.0);
        assert!(backward(&m, &g, &cache, &logits).is_err());
    }

    #[test]
    fn linear_gcn_squared_loss_gradient_closed_form() {
        // loss = ½‖ÃXW − Y‖², so ∂/∂W = (ÃX)ᵀ(ÃXW − Y) and ∂/∂X = Ãᵀ(ÃXW − Y)Wᵀ.
        let g = PreparedGraph::new(Graph::from_edges(3, [(0, 1), (1, 2)]).unwrap());
        let x = DenseMatrix::from_rows(&[vec![1.0, 0.5], vec![-0.3, 2.0], vec![0.0, 1.0]]).unwrap();
        let w = DenseMatrix::from_rows(&[vec![0.2, -0.7], vec![1.1, 0.4]]).unwrap();
        let y = DenseMatrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap();
        let mut m = Model::from_layers(ModelKind::Gcn, vec![w.clone()]).unwrap();
        m.activation = Activation::Identity;
        let (logits, cache) = m.forward(&g, &x).unwrap();
        let resid = logits.sub(&y).unwrap();
        let grads = backward(&m, &g, &cache, &resid).unwrap();

        let a = g.adjacency.to_dense();
        let ax = a.matmul(&x).unwrap();
        let r = ax.matmul(&w).unwrap().sub(&y).unwrap();
        let want_w = ax.t_matmul(&r).unwrap();
        let want_x = a.t_matmul(&r).unwrap().matmul_t(&w).unwrap();
        assert!(grads.weights[0].sub(&want_w).unwrap().max_abs() < 1e-12);
        assert!(grads.features.sub(&want_x).unwrap().max_abs() < 1e-12);
    }

    #[test]
    fn relu_is_one_lipschitz() {
        let mut rng = crate::rng::seeded(11);
        for _ in 0..1000 {
            let a: f64 = rng.random_range(-5.0..5.0);
            let b: f64 = rng.random_range(-5.0..5.0);
            assert!((Activation::Relu.apply(a) - Activation::Relu.apply(b)).abs() <= (a - b).abs());
        }
    }
}
