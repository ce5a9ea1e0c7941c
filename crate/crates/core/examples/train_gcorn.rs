//! Train a GCN and its orthonormal counterpart on a synthetic graph and
//! compare clean accuracy.
//!
//!     cargo run --release --example train_gcorn

use gcorn::graph::{generate_sbm, FeatureModel, SbmConfig};
use gcorn::nn::{accuracy, train, Model, ModelKind, TrainConfig};

fn main() -> gcorn::Result<()> {
    let data = generate_sbm(&SbmConfig {
        block_sizes: vec![80, 80, 80, 80],
        p_in: 0.08,
        p_out: 0.005,
        features: FeatureModel::Gaussian {
            dim: 8,
            separation: 2.0,
            std: 1.0,
        },
        train_per_class: 20,
        val_per_class: 20,
        seed: 1,
        ..SbmConfig::default()
    })?;
    let cfg = TrainConfig::default();
    for gcorn in [false, true] {
        let init = Model::standard(ModelKind::Gcn, data.features.dim(), cfg.hidden, data.num_classes, gcorn, 0)?;
        let trained = train(&init, &data, &cfg)?;
        let last = trained.history.last().expect("at least one epoch");
        println!(
            "{:<6} final loss {:.4}, val {:.3}, test {:.3}",
            if gcorn { "GCORN" } else { "GCN" },
            last.loss,
            last.val_accuracy.unwrap_or(f64::NAN),
            accuracy(&trained.model, &data, &data.split.test)?
        );
    }
    Ok(())
}
