//! The full GCN vs GCORN pipeline through the command-line entry point,
//! on a small synthetic graph. Outputs land in `experiment_out/`.
//!
//!     cargo run --release --example experiment

fn main() {
    let args = [
        "gcorn",
        "experiment",
        "--out",
        "experiment_out",
        "--set",
        "sbm.blocks=60,60,60",
        "--set",
        "sbm.dim=3",
        "--set",
        "sbm.p_in=0.1",
        "--set",
        "sbm.p_out=0.01",
        "--set",
        "experiment.seeds=3",
        "--set",
        "attack.scale=1.0",
        "--set",
        "estimate.sweep=0.5,1,2,4",
        "--set",
        "estimate.sigma=0.05",
    ];
    std::process::exit(gcorn::cli::run(args));
}
