//! Exact optimality gap of the decentralized strategy against the
//! sharing optimum for a few population sizes.

use std::path::PathBuf;

use meanfield_teams::dp::{optimality_gap, Caps};
use meanfield_teams::model::load_model;

fn main() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("models/benchmark.json");
    let model = load_model(path).unwrap();
    let caps = Caps::default();

    println!("{:>5} {:>16} {:>16} {:>12} {:>12}", "n", "J_g", "J_star", "gap", "gap*sqrt(n)");
    for n in [4usize, 8, 16, 32, 64] {
        let rec = optimality_gap(&model, n, n, &caps).unwrap();
        println!(
            "{:>5} {:>16.10} {:>16.10} {:>12.3e} {:>12.3e}",
            n,
            rec.j_g,
            rec.j_star,
            rec.gap,
            rec.gap * (n as f64).sqrt()
        );
    }
}
