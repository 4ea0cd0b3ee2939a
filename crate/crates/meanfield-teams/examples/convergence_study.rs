//! Full gap-convergence experiment: exact gap over a ladder of population
//! sizes, written as CSV, with a log-log rate fit.

use std::path::PathBuf;

use meanfield_teams::cli::{fit_rate, run_convergence, NuPolicy};
use meanfield_teams::dp::Caps;
use meanfield_teams::model::load_model;

fn main() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("models/benchmark.json");
    let model = load_model(path).unwrap();
    let table = run_convergence(
        &model,
        &[4, 8, 16, 32, 64, 128, 256],
        NuPolicy::FollowN,
        0,
        10_000,
        1_000_000,
        &Caps::default(),
    )
    .unwrap();

    print!("{}", table.to_csv());
    match fit_rate(&table) {
        Ok(fit) => println!(
            "\nlog-log fit: slope {:.4}, intercept {:.4}, r^2 {:.4}",
            fit.slope, fit.intercept, fit.r_squared
        ),
        Err(e) => println!("\nno rate fit: {e}"),
    }
}
