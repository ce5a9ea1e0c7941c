//! Monte-Carlo estimate of expected vulnerability over a radius sweep, plus
//! the number of samples needed to hit a sub-ball with 95% confidence.
//!
//!     cargo run --release --example estimator

use gcorn::estimator::{estimate_model_adv, required_samples, NormOrder, SampleConfig};
use gcorn::graph::{generate_sbm, FeatureModel, SbmConfig};
use gcorn::nn::{train, Model, ModelKind, TrainConfig};

fn main() -> gcorn::Result<()> {
    let data = generate_sbm(&SbmConfig {
        block_sizes: vec![40, 40, 40],
        p_in: 0.15,
        p_out: 0.01,
        features: FeatureModel::Gaussian {
            dim: 4,
            separation: 2.0,
            std: 1.0,
        },
        seed: 5,
        ..SbmConfig::default()
    })?;
    for gcorn in [false, true] {
        let init = Model::standard(ModelKind::Gcn, 4, 16, 3, gcorn, 0)?;
        let model = train(&init, &data, &TrainConfig::default())?.model;
        print!("{:<6}", if gcorn { "GCORN" } else { "GCN" });
        for epsilon in [0.5, 1.0, 2.0, 4.0, 8.0] {
            let cfg = SampleConfig {
                epsilon,
                sigma: 0.05,
                p: NormOrder::Finite(2.0),
                ..SampleConfig::default()
            };
            let e = estimate_model_adv(&model, &data, &cfg)?;
            print!("  ε={epsilon}: {:.2}±{:.2}", e.adv, e.stderr);
        }
        println!();
    }
    println!("samples for α = 0.05, r/ε = 0.5, K = 4: {}", required_samples(0.05, 0.5, 4)?);
    Ok(())
}
