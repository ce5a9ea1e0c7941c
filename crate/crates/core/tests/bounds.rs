mod common;

use gcorn::attacks::{pgd_feature_attack, AttackSpec};
use gcorn::bounds::{
    bound_for, combined_bound, gcn_feature_bound, gcn_structural_bound, gin_feature_bound, layer_operator_norm,
    BoundQuery, DistanceKind, NormKind,
};
use gcorn::graph::{Dataset, FeatureMatrix, Graph, PreparedGraph, Split};
use gcorn::nn::{Model, ModelKind};
use gcorn::rng::substream;
use rand::Rng as _;

use common::*;

fn star(leaves: usize) -> Graph {
    Graph::from_edges(leaves + 1, (1..=leaves).map(|v| (0, v))).unwrap()
}

fn query(distance: DistanceKind, norm: NormKind, eps: f64, sigma: f64) -> BoundQuery {
    BoundQuery {
        epsilon: eps,
        sigma,
        norm,
        feature_bound: Some(1.5),
        distance,
    }
}

/// Spectral norm from the SVD oracle.
fn spec2(w: &gcorn::DenseMatrix) -> f64 {
    singular_values(w)[0]
}

#[test]
fn star_feature_bound_uses_enumerated_walks() {
    let mut rng = substream(41, 0, 0);
    let g = PreparedGraph::new(star(3));
    // one aggregating layer and a readout: walks of length 1
    let model = Model::glorot(ModelKind::Gcn, &[3, 4, 2], true, &mut rng).unwrap();
    let r = gcn_feature_bound(&model, &g, &BoundQuery::feature(0.1, 1.0, NormKind::Infinity)).unwrap();
    // ∞ operator norm of x ↦ xW is the largest absolute column sum of W
    let col = |w: &gcorn::DenseMatrix| {
        (0..w.cols()).map(|j| (0..w.rows()).map(|i| w.get(i, j).abs()).sum::<f64>()).fold(0.0, f64::max)
    };
    let walk = enumerate_walk_sums(&g.graph, 1).into_iter().fold(0.0, f64::max);
    let expected = col(&model.layers[0]) * col(&model.layers[1]) * 0.1 * walk;
    assert!((r.gamma - expected).abs() <= 1e-12 * expected);
    assert!((walk - (0.25 + 3.0 / (2.0 * 2f64.sqrt()))).abs() <= 1e-12);
}

#[test]
fn structural_and_combined_match_hand_formulas() {
    for case in 0..10u64 {
        let mut rng = substream(42, case, 0);
        let n = rng.random_range(2..=8);
        let g = PreparedGraph::new(random_graph(n, 0.4, &mut rng));
        let model = Model::glorot(ModelKind::Gcn, &[3, 4, 4, 2], true, &mut rng).unwrap();
        let x = FeatureMatrix::new(random_matrix(n, 3, 1.0, &mut rng)).unwrap();
        let (eps, sigma, b) = (0.3, 0.7, 1.5);
        let prod: f64 = model.layers.iter().map(spec2).product();
        let layers = model.layers.len() as f64;

        let s = gcn_structural_bound(&model, Some(&x), &query(DistanceKind::Structural, NormKind::Two, eps, sigma))
            .unwrap();
        let expected = prod * spec2(&x.values) * eps * (1.0 + layers * prod) / sigma;
        assert!((s.gamma - expected).abs() <= 1e-6 * expected);

        let c = combined_bound(&model, &g, &query(DistanceKind::Combined, NormKind::Two, eps, sigma)).unwrap();
        let walk: f64 = enumerate_walk_sums(&g.graph, 2).iter().sum();
        let expected = prod * (walk * walk + b * (1.0 + layers * prod)) * eps / sigma;
        assert!((c.gamma - expected).abs() <= 1e-6 * expected);
    }
}

#[test]
fn every_bound_is_homogeneous_in_epsilon_and_sigma() {
    let mut rng = substream(43, 0, 0);
    let g = PreparedGraph::new(random_graph(7, 0.4, &mut rng));
    let x = FeatureMatrix::new(random_matrix(7, 3, 1.0, &mut rng)).unwrap();
    let gcn = Model::glorot(ModelKind::Gcn, &[3, 4, 4, 2], true, &mut rng).unwrap();
    let gin = Model::glorot(ModelKind::Gin, &[3, 4, 2], false, &mut rng).unwrap();
    let cases = [
        (&gcn, DistanceKind::Feature, NormKind::One),
        (&gcn, DistanceKind::Feature, NormKind::Infinity),
        (&gcn, DistanceKind::Structural, NormKind::Two),
        (&gcn, DistanceKind::Combined, NormKind::Two),
    ];
    for (model, distance, norm) in cases {
        let gamma = |eps, sigma| bound_for(model, &g, Some(&x), &query(distance, norm, eps, sigma)).unwrap().gamma;
        let base = gamma(0.2, 1.0);
        assert!((gamma(0.6, 1.0) - 3.0 * base).abs() <= 1e-12 * base);
        assert!((gamma(0.2, 4.0) - base / 4.0).abs() <= 1e-12 * base);
    }
    // GIN: γ is affine in ε (B·L·Δ + ε), linear in 1/σ and degree-L in the weights
    let q = |eps, sigma| query(DistanceKind::Feature, NormKind::Infinity, eps, sigma);
    let base = gin_feature_bound(&gin, &g, &q(0.2, 1.0)).unwrap().gamma;
    assert!((gin_feature_bound(&gin, &g, &q(0.2, 4.0)).unwrap().gamma - base / 4.0).abs() <= 1e-12 * base);
    let scaled = Model {
        layers: gin.layers.iter().map(|w| w.scale(2.0)).collect(),
        ..gin.clone()
    };
    let s = gin_feature_bound(&scaled, &g, &q(0.2, 1.0)).unwrap().gamma;
    assert!((s - 4.0 * base).abs() <= 1e-12 * s);
}

#[test]
fn reports_recompute_exactly_from_factors() {
    let mut rng = substream(44, 0, 0);
    let g = PreparedGraph::new(random_graph(6, 0.5, &mut rng));
    let model = Model::glorot(ModelKind::Gcn, &[2, 3, 2], false, &mut rng).unwrap();
    let r = gcn_feature_bound(&model, &g, &BoundQuery::feature(0.5, 0.5, NormKind::One)).unwrap();
    assert_eq!(r.recompute().unwrap(), r.gamma);
    let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
    assert_eq!(json["theorem"], "gcn_feature");
    assert!(json["factors"]["walk_sum"].is_number());
}

/// Björck projection of a trained-like model (weights with norm above 1)
/// must shrink both the ∞ feature bound and the structural bound.
#[test]
fn projection_shrinks_feature_and_structural_bounds() {
    for case in 0..20u64 {
        let mut rng = substream(45, case, 0);
        let n = rng.random_range(3..=10);
        let g = PreparedGraph::new(random_graph(n, 0.4, &mut rng));
        let x = FeatureMatrix::new(random_matrix(n, 4, 1.0, &mut rng)).unwrap();
        let mut model = Model::glorot(ModelKind::Gcn, &[4, 6, 6, 3], true, &mut rng).unwrap();
        let c = rng.random_range(1.5..4.0);
        model.layers.iter_mut().for_each(|w| *w = w.scale(c));
        let projected = Model {
            gcorn: true,
            ..model.clone()
        }
        .materialized()
        .unwrap();
        for w in &projected.layers {
            assert!(spec2(w) <= 1.0 + 1e-3);
        }
        assert!(model.layers.iter().any(|w| layer_operator_norm(w, NormKind::Infinity) > 1.0));
        let fq = BoundQuery::feature(0.1, 1.0, NormKind::Infinity);
        assert!(gcn_feature_bound(&projected, &g, &fq).unwrap().gamma < gcn_feature_bound(&model, &g, &fq).unwrap().gamma);
        let sq = query(DistanceKind::Structural, NormKind::Two, 0.1, 1.0);
        assert!(
            gcn_structural_bound(&projected, Some(&x), &sq).unwrap().gamma
                < gcn_structural_bound(&model, Some(&x), &sq).unwrap().gamma
        );
    }
}

/// The strongest perturbation PGD finds inside the ∞-ball never moves the
/// logits further than the bound allows (σ = 1, so γ is the logit budget).
#[test]
fn pgd_worst_case_stays_inside_the_feature_bound() {
    for case in 0..10u64 {
        let mut rng = substream(46, case, 0);
        let n = 12;
        let graph = random_graph(n, 0.3, &mut rng);
        let x = FeatureMatrix::new(random_matrix(n, 3, 1.0, &mut rng)).unwrap();
        let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let split = Split {
            train: vec![],
            val: vec![],
            test: (0..n).collect(),
        };
        let data = Dataset::new(graph, x, labels, 3, split).unwrap();
        let model = Model::glorot(ModelKind::Gcn, &[3, 5, 5, 3], true, &mut rng).unwrap();
        let eps = 0.4;
        let spec = AttackSpec::pgd_feature(eps, 1.0);
        let attacked = pgd_feature_attack(&model, &data, &spec).unwrap();
        let clean = model.predict_logits(&data.graph, &data.features.values).unwrap();
        let moved = model.predict_logits(&data.graph, &attacked.values).unwrap();
        let change = moved.sub(&clean).unwrap().max_abs();
        let gamma = gcn_feature_bound(&model, &data.graph, &BoundQuery::feature(eps, 1.0, NormKind::Infinity))
            .unwrap()
            .gamma;
        assert!(change <= gamma + 1e-9, "change {change} above bound {gamma}");
    }
}

/// Edge flips on models with orthonormal layers: the spectral logit change
/// stays below the structural bound evaluated at ε = ‖Ã − Ã'‖₂.
#[test]
fn edge_flips_stay_inside_the_structural_bound() {
    for case in 0..20u64 {
        let mut rng = substream(47, case, 0);
        let n = 10;
        let g = random_graph(n, 0.3, &mut rng);
        let flips: Vec<(usize, usize)> = (0..3)
            .map(|_| {
                let u = rng.random_range(0..n - 1);
                (u, rng.random_range(u + 1..n))
            })
            .collect();
        let mut flips = flips;
        flips.sort_unstable();
        flips.dedup();
        let h = g.with_flipped(&flips).unwrap();
        let x = FeatureMatrix::new(random_matrix(n, 4, 1.0, &mut rng)).unwrap();
        let model = Model {
            gcorn: true,
            ..Model::glorot(ModelKind::Gcn, &[4, 5, 5, 3], true, &mut rng).unwrap()
        }
        .materialized()
        .unwrap();
        let eps = (dense_normalized_adjacency(&g) - dense_normalized_adjacency(&h)).singular_values()[0];
        let (pg, ph) = (PreparedGraph::new(g), PreparedGraph::new(h));
        let diff = model
            .predict_logits(&pg, &x.values)
            .unwrap()
            .sub(&model.predict_logits(&ph, &x.values).unwrap())
            .unwrap();
        let change = singular_values(&diff)[0];
        let gamma = gcn_structural_bound(&model, Some(&x), &query(DistanceKind::Structural, NormKind::Two, eps, 1.0))
            .unwrap()
            .gamma;
        assert!(change <= gamma + 1e-9, "change {change} above bound {gamma}");
    }
}
