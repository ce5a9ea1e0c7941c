//! Generate a stochastic block model dataset and write it in the on-disk
//! format the CLI reads.
//!
//!     cargo run --example gen_sbm -- /tmp/sbm

use gcorn::graph::{generate_sbm, load_dataset, save_dataset, FeatureModel, FeatureScaling, SbmConfig};

fn main() -> gcorn::Result<()> {
    let dir = std::env::args().nth(1).unwrap_or_else(|| "sbm_data".into());
    let data = generate_sbm(&SbmConfig {
        block_sizes: vec![50, 30, 20],
        p_in: 0.2,
        p_out: 0.01,
        features: FeatureModel::SparseBinary {
            dim: 30,
            p_signal: 0.3,
            p_noise: 0.02,
        },
        scaling: FeatureScaling::UnitRows,
        seed: 8,
        ..SbmConfig::default()
    })?;
    let paths = save_dataset(&data, &dir)?;
    let back = load_dataset(&paths, FeatureScaling::None)?;
    println!(
        "{} nodes, {} edges, max degree {}, {} features, splits {}/{}/{} -> {}",
        back.num_nodes(),
        back.graph.graph.num_edges(),
        back.graph.graph.max_degree(),
        back.features.dim(),
        back.split.train.len(),
        back.split.val.len(),
        back.split.test.len(),
        dir
    );
    Ok(())
}
