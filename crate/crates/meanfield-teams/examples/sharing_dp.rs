//! Solve the mean-field-sharing DP for a small population and print the
//! optimal value and policy tables over the empirical simplex M_n.

use std::path::PathBuf;

use meanfield_teams::dp::{solve_sharing, Caps};
use meanfield_teams::model::load_model;

fn main() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("models/benchmark.json");
    let model = load_model(path).unwrap();
    let n = 6;
    let sol = solve_sharing(&model, n, &Caps::default()).unwrap();

    println!("n = {n}, J* = {}", sol.j_star);
    for t in 0..model.horizon {
        println!("\nstage {t}:");
        for mi in 0..sol.space.len() {
            let m = sol.space.point(mi);
            println!(
                "  m = {:?}  V = {:.6}  policy {:?}",
                m.values(),
                sol.values[t][mi],
                sol.policies[t][mi].actions()
            );
        }
    }
}
