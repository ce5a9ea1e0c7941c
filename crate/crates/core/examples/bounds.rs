//! Closed-form vulnerability bounds for a GCN before and after projecting
//! its weights.
//!
//!     cargo run --example bounds

use gcorn::bounds::{bound_for, convert_norm_guarantee, BoundQuery, DistanceKind, NormKind, TargetNorm};
use gcorn::graph::{generate_sbm, SbmConfig};
use gcorn::nn::{Model, ModelKind};

fn main() -> gcorn::Result<()> {
    let data = generate_sbm(&SbmConfig {
        block_sizes: vec![30, 30],
        seed: 2,
        ..SbmConfig::default()
    })?;
    let mut raw = Model::standard(ModelKind::Gcn, data.features.dim(), 16, 2, false, 0)?;
    raw.layers.iter_mut().for_each(|w| *w = w.scale(3.0));
    let projected = Model {
        gcorn: true,
        ..raw.clone()
    }
    .materialized()?;

    let queries = [
        BoundQuery::feature(0.1, 0.5, NormKind::Infinity),
        BoundQuery::feature(0.1, 0.5, NormKind::One),
        BoundQuery {
            norm: NormKind::Two,
            distance: DistanceKind::Structural,
            ..BoundQuery::feature(0.1, 0.5, NormKind::Two)
        },
        BoundQuery {
            norm: NormKind::Two,
            distance: DistanceKind::Combined,
            feature_bound: Some(1.0),
            ..BoundQuery::feature(0.1, 0.5, NormKind::Two)
        },
    ];
    for q in &queries {
        let a = bound_for(&raw, &data.graph, Some(&data.features), q)?;
        let b = bound_for(&projected, &data.graph, Some(&data.features), q)?;
        println!("{:?}/{:?}: raw γ = {:.4e}, projected γ = {:.4e}", q.distance, q.norm, a.gamma, b.gamma);
    }
    println!("{}", bound_for(&projected, &data.graph, None, &queries[0])?.to_json()?);

    let c = convert_norm_guarantee(0.8, 0.1, TargetNorm::One, 9)?;
    println!("L2 guarantee (ε 0.1, γ 0.8) as an L1 guarantee with K = 9: ε {:.4}, γ {:.4}", c.epsilon, c.gamma);
    Ok(())
}
