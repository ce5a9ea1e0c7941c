//! Random noise, PGD and random edge flips against a trained GCN.
//!
//!     cargo run --release --example attacks

use gcorn::attacks::{attacked_accuracy, AttackSpec};
use gcorn::graph::{generate_sbm, FeatureModel, SbmConfig};
use gcorn::nn::{accuracy, train, Model, ModelKind, TrainConfig};

fn main() -> gcorn::Result<()> {
    let data = generate_sbm(&SbmConfig {
        block_sizes: vec![60, 60, 60],
        p_in: 0.1,
        p_out: 0.01,
        features: FeatureModel::Gaussian {
            dim: 6,
            separation: 2.0,
            std: 1.0,
        },
        train_per_class: 15,
        val_per_class: 15,
        seed: 4,
        ..SbmConfig::default()
    })?;
    let init = Model::standard(ModelKind::Gcn, 6, 16, 3, false, 0)?;
    let model = train(&init, &data, &TrainConfig::default())?.model;
    println!("clean test accuracy {:.3}", accuracy(&model, &data, &data.split.test)?);
    let specs = [
        ("noise ψ=0.5", AttackSpec::random_feature(0.5)),
        ("noise ψ=1.0", AttackSpec::random_feature(1.0)),
        ("pgd ε=0.5, 15% rows", AttackSpec::pgd_feature(0.5, 0.15)),
        ("flip 10% of edges", AttackSpec::random_structural(0.1)),
    ];
    for (label, spec) in specs {
        let s = attacked_accuracy(&model, &data, &spec.with_seed(1), 10)?;
        println!("{label:<20} {:.3} ± {:.3} over {} trials", s.mean, s.std, s.trials);
    }
    Ok(())
}
