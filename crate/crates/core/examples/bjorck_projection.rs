//! Björck orthonormalization of a random weight matrix, with the defect
//! after every iteration.
//!
//!     cargo run --example bjorck_projection

use gcorn::nn::DenseMatrix;
use gcorn::ortho::{bjorck_trace, exact_spectral_norm, OrthoConfig};
use gcorn::rng::seeded;
use rand::Rng as _;

fn main() -> gcorn::Result<()> {
    let mut rng = seeded(3);
    let w = DenseMatrix::from_fn(6, 4, |_, _| rng.random_range(-2.0..2.0));
    println!("input spectral norm {:.4}", exact_spectral_norm(&w));
    for order in [1, 2] {
        let cfg = OrthoConfig {
            order,
            iterations: 12,
            ..OrthoConfig::default()
        };
        let trace = bjorck_trace(&w, &cfg)?;
        let defects: Vec<String> = trace.defects.iter().map(|d| format!("{d:.2e}")).collect();
        println!("order {order}: prescale {:.4}, defects {}", trace.scale.unwrap_or(1.0), defects.join(" "));
        println!("  output spectral norm {:.6}", exact_spectral_norm(&trace.output));
    }
    Ok(())
}
