//! Simulate a finite population under the decentralized strategy and
//! compare the Monte Carlo cost estimate against the exact evaluation.

use std::path::PathBuf;

use meanfield_teams::dp::{evaluate_strategy_exact, solve_decentralized_grid, Caps, Strategy};
use meanfield_teams::model::load_model;
use meanfield_teams::sim::simulate_population;

fn main() {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("models/benchmark.json");
    let model = load_model(path).unwrap();
    let caps = Caps::default();
    let n = 32;
    let reps = 20_000;

    let sol = solve_decentralized_grid(&model, n, &caps).unwrap();
    let strategy = Strategy::Decentralized(sol.policies);

    let exact = evaluate_strategy_exact(&model, n, &strategy, &caps).unwrap();
    let runs = simulate_population(&model, n, &strategy, 42, reps).unwrap();
    let mean = runs.iter().map(|r| r.total_cost).sum::<f64>() / runs.len() as f64;
    let var = runs.iter().map(|r| (r.total_cost - mean).powi(2)).sum::<f64>()
        / (runs.len() as f64 - 1.0);
    let se = (var / runs.len() as f64).sqrt();

    println!("n = {n}, reps = {reps}");
    println!("exact J_g      : {exact}");
    println!("Monte Carlo J_g: {mean} (stderr {se:.2e})");
    println!("difference     : {:.2e} ({:.2} stderrs)", (mean - exact).abs(), (mean - exact).abs() / se);

    let run = &runs[0];
    println!("\nfirst replication trace:");
    for t in 0..model.horizon {
        println!(
            "  t {t}: mean-field {:?}  stage cost {:.6}",
            run.mean_fields[t].values(),
            run.stage_costs[t]
        );
    }
}
