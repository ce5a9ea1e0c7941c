mod common;

use gcorn::graph::{
    generate_sbm, load_dataset, save_dataset, walk_sums, DatasetPaths, FeatureModel, FeatureScaling,
    NormalizedAdjacency, SbmConfig,
};
use gcorn::rng::substream;
use proptest::prelude::*;
use statrs::distribution::{ContinuousCDF, Normal};

use common::*;

#[test]
fn save_then_load_is_bit_exact() {
    let data = generate_sbm(&SbmConfig {
        block_sizes: vec![15, 25, 10],
        seed: 3,
        ..SbmConfig::default()
    })
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = save_dataset(&data, dir.path()).unwrap();
    assert_eq!(paths, DatasetPaths::in_dir(dir.path()));
    let back = load_dataset(&paths, FeatureScaling::None).unwrap();
    assert_eq!(back.graph.graph, data.graph.graph);
    assert_eq!(back.labels, data.labels);
    assert_eq!(back.split, data.split);
    assert_eq!(back.num_classes, data.num_classes);
    let bits = |m: &gcorn::DenseMatrix| m.as_slice().iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back.features.values), bits(&data.features.values));
}

#[test]
fn normalized_adjacency_matches_entry_formula() {
    for case in 0..30u64 {
        let mut rng = substream(31, case, 0);
        let g = random_graph(12, 0.3, &mut rng);
        let fast = NormalizedAdjacency::from_graph(&g).to_dense();
        let slow = from_na(&dense_normalized_adjacency(&g));
        assert!(fast.sub(&slow).unwrap().max_abs() <= 1e-15);
        for u in 0..12 {
            for v in 0..12 {
                assert_eq!(fast.get(u, v).to_bits(), fast.get(v, u).to_bits());
            }
        }
    }
}

#[test]
fn one_step_walk_sums_are_bounded_by_degree() {
    for case in 0..30u64 {
        let mut rng = substream(32, case, 0);
        let g = random_graph(15, 0.25, &mut rng);
        let w = walk_sums(&NormalizedAdjacency::from_graph(&g), 1);
        for (u, &s) in w.values.iter().enumerate() {
            assert!(s > 0.0 && s <= (1.0 + g.degree(u) as f64).sqrt() + 1e-12);
        }
    }
}

/// Nearest-mean classification of the Gaussian SBM features. The two class
/// means sit `separation` standard deviations apart along orthogonal axes,
/// so the Bayes error is `Φ(−separation/√2)`.
#[test]
fn gaussian_features_are_separable_as_predicted() {
    let separation = 3.0;
    let data = generate_sbm(&SbmConfig {
        block_sizes: vec![1000, 1000],
        p_in: 0.0,
        p_out: 0.0,
        features: FeatureModel::Gaussian {
            dim: 2,
            separation,
            std: 1.0,
        },
        seed: 11,
        ..SbmConfig::default()
    })
    .unwrap();
    let x = &data.features.values;
    let hits = (0..data.num_nodes())
        .filter(|&u| usize::from(x.get(u, 1) > x.get(u, 0)) == data.labels[u])
        .count();
    let acc = hits as f64 / data.num_nodes() as f64;
    let expected = Normal::standard().cdf(separation / 2f64.sqrt());
    let se = (expected * (1.0 - expected) / data.num_nodes() as f64).sqrt();
    assert!(acc > 0.95, "accuracy {acc}");
    assert!((acc - expected).abs() <= 4.0 * se, "accuracy {acc} vs {expected}");
}

#[test]
fn sbm_edge_density_matches_probabilities() {
    let data = generate_sbm(&SbmConfig {
        block_sizes: vec![200, 200],
        p_in: 0.05,
        p_out: 0.01,
        seed: 5,
        ..SbmConfig::default()
    })
    .unwrap();
    let g = &data.graph.graph;
    let within = g.edges().iter().filter(|&&(u, v)| data.labels[u] == data.labels[v]).count() as f64;
    let across = g.num_edges() as f64 - within;
    let pairs_in = 2.0 * 200.0 * 199.0 / 2.0;
    let pairs_out = 200.0 * 200.0;
    assert!((within / pairs_in - 0.05).abs() <= 4.0 * (0.05 * 0.95 / pairs_in).sqrt());
    assert!((across / pairs_out - 0.01).abs() <= 4.0 * (0.01 * 0.99 / pairs_out).sqrt());
}

proptest! {
    #[test]
    fn walk_sums_match_enumeration(n in 1usize..7, m in 0usize..4, seed in 0u64..10_000) {
        let mut rng = substream(33, seed, 0);
        let g = random_graph(n, 0.5, &mut rng);
        let fast = walk_sums(&NormalizedAdjacency::from_graph(&g), m);
        let slow = enumerate_walk_sums(&g, m);
        for (a, b) in fast.values.iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
    }

    #[test]
    fn flips_are_involutions(seed in 0u64..10_000) {
        let mut rng = substream(34, seed, 0);
        let g = random_graph(8, 0.4, &mut rng);
        let flips = [(0, 1), (2, 5), (7, 3)];
        let back = g.with_flipped(&flips).unwrap().with_flipped(&flips).unwrap();
        prop_assert_eq!(back, g);
    }
}
