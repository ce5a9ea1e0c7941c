//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls into the library's numerical kernels: forward passes,
//! walk sums and polar factors are recomputed from their definitions.

#![allow(dead_code)]

use gcorn::graph::{Graph, PreparedGraph};
use gcorn::nn::{cross_entropy, DenseMatrix, Model, ModelKind};
use gcorn::rng::Rng;
use nalgebra::DMatrix;
use rand::Rng as _;

pub fn random_graph(n: usize, p: f64, rng: &mut Rng) -> Graph {
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            if rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }
    Graph::from_edges(n, edges).unwrap()
}

pub fn random_matrix(rows: usize, cols: usize, scale: f64, rng: &mut Rng) -> DenseMatrix {
    DenseMatrix::from_fn(rows, cols, |_, _| rng.random_range(-scale..scale))
}

pub fn to_na(m: &DenseMatrix) -> DMatrix<f64> {
    DMatrix::from_fn(m.rows(), m.cols(), |i, j| m.get(i, j))
}

pub fn from_na(m: &DMatrix<f64>) -> DenseMatrix {
    DenseMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// `Ã` built entry by entry from `1/√((1+d_u)(1+d_v))`.
pub fn dense_normalized_adjacency(g: &Graph) -> DMatrix<f64> {
    let n = g.num_nodes();
    DMatrix::from_fn(n, n, |u, v| {
        if u == v || g.has_edge(u, v) {
            1.0 / (((1 + g.degree(u)) * (1 + g.degree(v))) as f64).sqrt()
        } else {
            0.0
        }
    })
}

/// Dense `(1+ζ)I + A`.
pub fn dense_gin_operator(g: &Graph, zeta: f64) -> DMatrix<f64> {
    let n = g.num_nodes();
    DMatrix::from_fn(n, n, |u, v| {
        if u == v {
            1.0 + zeta
        } else if g.has_edge(u, v) {
            1.0
        } else {
            0.0
        }
    })
}

/// Straight-line forward pass using the weights the model says it applies.
pub fn oracle_logits(model: &Model, g: &Graph, x: &DenseMatrix) -> DMatrix<f64> {
    let op = match model.kind {
        ModelKind::Gcn => dense_normalized_adjacency(g),
        ModelKind::Gin => dense_gin_operator(g, model.gin_zeta),
    };
    let weights = model.effective_weights().unwrap();
    let last = weights.len() - 1;
    let mut h = to_na(x);
    for (l, w) in weights.iter().enumerate() {
        let agg = if model.readout && l == last { h.clone() } else { &op * &h };
        let mut z = agg * to_na(w);
        if l != last {
            z.iter_mut().for_each(|v| *v = model.activation.apply(*v));
        }
        h = z;
    }
    h
}

/// `ŵ_u`: sum over all walks of exactly `m` steps starting at `u` of the
/// product of `Ã` entries along the walk, self-loop steps included.
pub fn enumerate_walk_sums(g: &Graph, m: usize) -> Vec<f64> {
    let a = dense_normalized_adjacency(g);
    let n = g.num_nodes();
    fn go(a: &DMatrix<f64>, n: usize, at: usize, left: usize, weight: f64) -> f64 {
        if left == 0 {
            return weight;
        }
        (0..n)
            .filter(|&v| a[(at, v)] != 0.0)
            .map(|v| go(a, n, v, left - 1, weight * a[(at, v)]))
            .sum()
    }
    (0..n).map(|u| go(&a, n, u, m, 1.0)).collect()
}

/// Orthogonal polar factor `U Vᵀ` of a tall matrix.
pub fn polar_factor(w: &DenseMatrix) -> DenseMatrix {
    let svd = to_na(w).svd(true, true);
    from_na(&(svd.u.unwrap() * svd.v_t.unwrap()))
}

pub fn singular_values(w: &DenseMatrix) -> Vec<f64> {
    to_na(w).singular_values().iter().copied().collect()
}

/// A matrix with prescribed singular values and random singular vectors.
pub fn with_singular_values(rows: usize, cols: usize, sv: &[f64], rng: &mut Rng) -> DenseMatrix {
    let g1 = to_na(&random_matrix(rows, rows, 1.0, rng));
    let g2 = to_na(&random_matrix(cols, cols, 1.0, rng));
    let u = g1.qr().q();
    let v = g2.qr().q();
    let k = rows.min(cols);
    let mut s = DMatrix::zeros(rows, cols);
    for i in 0..k {
        s[(i, i)] = sv[i];
    }
    from_na(&(u * s * v.transpose()))
}

/// Mean cross-entropy on `mask`, recomputed from logits.
pub fn loss_of(model: &Model, graph: &PreparedGraph, x: &DenseMatrix, labels: &[usize], mask: &[usize]) -> f64 {
    let logits = model.predict_logits(graph, x).unwrap();
    cross_entropy(&logits, labels, mask).unwrap().0
}

/// Norm-wise relative error `‖a − b‖ / max(‖a‖, ‖b‖)`, 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale < 1e-12 {
        0.0
    } else {
        diff / scale
    }
}
