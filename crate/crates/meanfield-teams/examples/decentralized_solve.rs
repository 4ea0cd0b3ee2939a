//! Solve the decentralized problem two ways: the exact tree over policy
//! sequences and the quantized grid DP, showing the quantization error
//! shrink as the grid is refined.

use std::path::PathBuf;

use meanfield_teams::dp::{solve_decentralized_grid, solve_decentralized_tree, Caps};
use meanfield_teams::model::load_model;

fn main() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("models/benchmark.json");
    let model = load_model(path).unwrap();
    let caps = Caps::default();

    let tree = solve_decentralized_tree(&model, &caps).unwrap();
    println!("exact tree value: {}", tree.value);
    for (t, p) in tree.policies.iter().enumerate() {
        println!("  stage {t}: policy {:?}", p.actions());
    }

    println!("\ngrid refinement:");
    for nu in [4usize, 8, 16, 32, 64, 128] {
        let grid = solve_decentralized_grid(&model, nu, &caps).unwrap();
        println!(
            "  nu {:>4}: value {:.12}  |delta| {:.3e}",
            nu,
            grid.value,
            (grid.value - tree.value).abs()
        );
    }

    println!("\nmean-field trajectory under the optimal policies:");
    for (t, z) in tree.trajectory.iter().enumerate() {
        println!("  z_{}: {:?}", t + 1, z.values());
    }
}
