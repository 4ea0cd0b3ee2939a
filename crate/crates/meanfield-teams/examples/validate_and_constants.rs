//! Load a model file, validate its admissibility invariants, and print
//! the stage-wise Lipschitz constant ledger.

use std::path::PathBuf;

use meanfield_teams::model::{lipschitz_constants, load_model, validate_model};

fn main() {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("models/benchmark.json")
    });
    let model = load_model(&path).expect("model file loads");
    println!("loaded {} ({} states, {} actions, horizon {})",
        path.display(), model.num_states, model.num_actions, model.horizon);

    let report = validate_model(&model);
    if report.is_admissible() {
        println!("model is admissible");
    } else {
        for v in &report.violations {
            println!("violation: {v}");
        }
        std::process::exit(1);
    }

    let k = lipschitz_constants(&model);
    println!("\nstage-wise constants:");
    println!("{:>5} {:>10} {:>10} {:>10} {:>10} {:>10} {:>10}", "t", "K1", "K2", "K3", "K4", "K5", "lmax");
    for t in 0..model.horizon {
        println!(
            "{:>5} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4}",
            t, k.k1[t], k.k2[t], k.k3[t], k.k4[t], k.k5[t], k.lmax[t]
        );
    }
}
