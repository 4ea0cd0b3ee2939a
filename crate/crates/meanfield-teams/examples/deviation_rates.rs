//! Empirical-frequency concentration: i.i.d. deviation of the empirical
//! pmf from its law, and one-step mean-field deviation from the lifted
//! flow, both shrinking like 1/sqrt(n).

use std::path::PathBuf;

use meanfield_teams::lift::LocalPolicy;
use meanfield_teams::model::load_model;
use meanfield_teams::sim::{exact_binomial_deviation, iid_deviation, one_step_deviation};
use meanfield_teams::simplex::DistVector;

fn main() {
    println!("i.i.d. deviation, binary alphabet p = 0.5:");
    println!("{:>6} {:>12} {:>12} {:>12}", "n", "mean", "sqrt(n)*mean", "exact");
    for n in [4usize, 16, 64, 256, 1000] {
        let stats = iid_deviation(&[0.5, 0.5], n, 1, 100_000);
        let exact = exact_binomial_deviation(0.5, n).unwrap();
        println!(
            "{:>6} {:>12.6} {:>12.6} {:>12.6}",
            n,
            stats[0].mean,
            stats[0].mean * (n as f64).sqrt(),
            exact
        );
    }

    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("models/benchmark.json");
    let model = load_model(path).unwrap();
    let gamma = LocalPolicy::new(vec![0, 1], 2);
    println!("\none-step mean-field deviation from the lifted flow:");
    println!("{:>6} {:>12} {:>12}", "n", "mean", "sqrt(n)*mean");
    for n in [16usize, 64, 256, 1024] {
        let m = DistVector::empirical(vec![0.5, 0.5], n).unwrap();
        let stat = one_step_deviation(&model, n, &m, 0, &gamma, 2, 10_000);
        println!("{:>6} {:>12.6} {:>12.6}", n, stat.mean, stat.mean * (n as f64).sqrt());
    }
}
