//! Normalized adjacency and walk sums on a small star graph.
//!
//!     cargo run --example walk_sums

use gcorn::graph::{walk_sums, Graph, NormalizedAdjacency};

fn main() -> gcorn::Result<()> {
    let star = Graph::from_edges(4, [(0, 1), (0, 2), (0, 3)])?;
    let adj = NormalizedAdjacency::from_graph(&star);
    println!("Ã (with self-loops):");
    let dense = adj.to_dense();
    for u in 0..dense.rows() {
        let row: Vec<String> = dense.row(u).iter().map(|v| format!("{v:.4}")).collect();
        println!("  [{}]", row.join(", "));
    }
    for m in 0..=3 {
        let w = walk_sums(&adj, m);
        println!("m = {m}: per-node {:?}, max {:.4}, sum {:.4}", w.values, w.max(), w.sum());
    }
    Ok(())
}
