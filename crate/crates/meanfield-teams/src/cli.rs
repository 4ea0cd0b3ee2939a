//! Command-line entry point and the convergence-rate experiment: for a
//! ladder of population sizes, solve the quantized decentralized DP,
//! compare its exact performance against the sharing optimum J*, and fit
//! the decay rate of the gap on a log-log scale.

use std::fmt::Write as _;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::dp::{
    brute_force_sharing_value, next_meanfield_pmf, optimality_gap, solve_decentralized_grid,
    solve_decentralized_tree, solve_sharing, Caps, DpError, Strategy,
};
use crate::lift::{enumerate_policies_with_cap, lift_cost, lift_dynamics};
use crate::model::{
    cost_eval, kernel_eval, lipschitz_constants, load_model, validate_model, ModelSpec,
};
use crate::rng::key_hash;
use crate::sim::{exact_binomial_deviation, iid_deviation, simulate_population};
use crate::simplex::{
    empirical_count, linf, quantize, random_box_point, random_simplex_point, EmpiricalSpace,
};

#[derive(Debug, Error)]
pub enum ConvergenceError {
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
    #[error("no fit-eligible rows: no population size admits an exact J_star")]
    NoFitEligibleRows,
    #[error("agents list must be non-empty and ascending")]
    BadAgentsList,
}

#[derive(Debug, Error)]
pub enum FitError {
    #[error("insufficient rows: need >= 3 exact rows with gap > 1e-12, found {0}")]
    InsufficientRows(usize),
    #[error("rate vacuously satisfied: all exact gaps are zero")]
    VacuouslySatisfied,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Exact,
    Mc,
}

impl std::fmt::Display for Method {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Method::Exact => write!(f, "exact"),
            Method::Mc => write!(f, "mc"),
        }
    }
}

/// One experiment row: gap between the decentralized strategy's
/// performance J_g and the sharing optimum J* at population size n.
#[derive(Clone, Debug)]
pub struct ConvergenceRow {
    pub n: usize,
    pub nu: usize,
    pub j_g: f64,
    /// None when the sharing DP was infeasible at this n.
    pub j_star: Option<f64>,
    pub gap: Option<f64>,
    pub gap_sqrt_n: Option<f64>,
    pub method: Method,
    pub std_error: Option<f64>,
    pub seed: u64,
}

#[derive(Clone, Debug, Default)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// CSV with the fixed column set; byte-stable given identical inputs.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,nu,J_g,J_star,gap,gap_sqrt_n,method,stderr,seed\n");
        for r in &self.rows {
            let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                r.n,
                r.nu,
                r.j_g,
                opt(r.j_star),
                opt(r.gap),
                opt(r.gap_sqrt_n),
                r.method,
                opt(r.std_error),
                r.seed
            );
        }
        out
    }
}

/// How the grid resolution tracks the population size.
#[derive(Clone, Copy, Debug)]
pub enum NuPolicy {
    /// ν = n (the quantization step 1/n coupling).
    FollowN,
    Fixed(usize),
}

impl NuPolicy {
    fn resolve(&self, n: usize) -> usize {
        match self {
            NuPolicy::FollowN => n,
            NuPolicy::Fixed(nu) => *nu,
        }
    }
}

/// Run the gap experiment over an ascending ladder of population sizes.
///
/// Exact rows (|M_n| within `exact_cap`) carry no randomness; Monte Carlo
/// rows estimate J_g by simulation with a sub-seed derived from
/// `(seed, n)` and carry a standard error.
pub fn run_convergence(
    model: &ModelSpec,
    n_list: &[usize],
    nu_policy: NuPolicy,
    seed: u64,
    mc_reps: usize,
    exact_cap: usize,
    caps: &Caps,
) -> Result<ConvergenceTable, ConvergenceError> {
    if n_list.is_empty() || n_list.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ConvergenceError::BadAgentsList);
    }
    let mut table = ConvergenceTable::default();
    for &n in n_list {
        let nu = nu_policy.resolve(n);
        let decentralized = solve_decentralized_grid(model, nu, caps)?;
        let strategy = Strategy::Decentralized(decentralized.policies);
        let m_count = empirical_count(n, model.num_states).unwrap_or(u128::MAX);
        let exact = m_count <= exact_cap as u128;
        let (j_g, method, std_error) = if exact {
            (crate::dp::evaluate_strategy_exact(model, n, &strategy, caps)?, Method::Exact, None)
        } else {
            let sub_seed = key_hash(&[seed, 0x636f6e76, n as u64]);
            let runs = simulate_population(model, n, &strategy, sub_seed, mc_reps)?;
            let mean = runs.iter().map(|r| r.total_cost).sum::<f64>() / runs.len() as f64;
            let var = runs
                .iter()
                .map(|r| (r.total_cost - mean) * (r.total_cost - mean))
                .sum::<f64>()
                / (runs.len() as f64 - 1.0).max(1.0);
            (mean, Method::Mc, Some((var / runs.len() as f64).sqrt()))
        };
        let j_star = match solve_sharing(model, n, caps) {
            Ok(sol) if exact => Some(sol.j_star),
            Ok(sol) => Some(sol.j_star),
            Err(DpError::Simplex(_)) | Err(DpError::CapExceeded(_)) => None,
            Err(e) => return Err(e.into()),
        };
        let gap = j_star.map(|js| j_g - js);
        table.rows.push(ConvergenceRow {
            n,
            nu,
            j_g,
            j_star,
            gap,
            gap_sqrt_n: gap.map(|g| g * (n as f64).sqrt()),
            method,
            std_error,
            seed,
        });
    }
    if table.rows.iter().all(|r| r.j_star.is_none()) {
        return Err(ConvergenceError::NoFitEligibleRows);
    }
    Ok(table)
}

/// Least-squares fit of log(gap) against log(n).
#[derive(Clone, Copy, Debug)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Fit the gap decay rate over exact rows with gap > 1e-12.
pub fn fit_rate(table: &ConvergenceTable) -> Result<RateFit, FitError> {
    let exact_rows: Vec<&ConvergenceRow> = table
        .rows
        .iter()
        .filter(|r| r.method == Method::Exact && r.gap.is_some())
        .collect();
    let eligible: Vec<(f64, f64)> = exact_rows
        .iter()
        .filter(|r| r.gap.unwrap() > 1e-12)
        .map(|r| ((r.n as f64).ln(), r.gap.unwrap().ln()))
        .collect();
    if eligible.is_empty() && !exact_rows.is_empty() {
        return Err(FitError::VacuouslySatisfied);
    }
    if eligible.len() < 3 {
        return Err(FitError::InsufficientRows(eligible.len()));
    }
    let n = eligible.len() as f64;
    let mean_x = eligible.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = eligible.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = eligible.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let syy: f64 = eligible.iter().map(|p| (p.1 - mean_y).powi(2)).sum();
    let sxy: f64 = eligible.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let slope = sxy / sxx;
    let intercept = mean_y - slope * mean_x;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(RateFit { slope, intercept, r_squared })
}

// ---------------------------------------------------------------------------
// command-line surface

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_IO: i32 = 2;
pub const EXIT_CAP: i32 = 3;
pub const EXIT_CHECK_FAILED: i32 = 4;

#[derive(Parser, Debug)]
#[command(name = "mft", about = "Mean-field team solvers and experiments", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct ModelArg {
    /// Path to a model JSON file.
    #[arg(long)]
    model: PathBuf,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Check a model file against the admissibility invariants.
    Validate {
        #[command(flatten)]
        model: ModelArg,
    },
    /// Solve the quantized decentralized DP at a fixed grid resolution.
    Solve {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long = "grid-res")]
        grid_res: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Solve the mean-field-sharing DP for n agents.
    Sharing {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        agents: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Optimality gap of the grid-DP strategy for n agents.
    Gap {
        #[command(flatten)]
        model: ModelArg,
        #[arg(long)]
        agents: usize,
        #[arg(long = "grid-res")]
        grid_res: usize,
        /// Evaluate J_g exactly over the M_n chain.
        #[arg(long, conflicts_with = "mc")]
        exact: bool,
        /// Estimate J_g by Monte Carlo (requires --reps).
        #[arg(long)]
        mc: bool,
        #[arg(long, default_value_t = 10_000)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Gap ladder over populations, written as CSV.
    Convergence {
        #[command(flatten)]
        model: ModelArg,
        /// Comma-separated ascending population sizes.
        #[arg(long, value_delimiter = ',')]
        agents: Vec<usize>,
        #[arg(long = "grid-res", conflicts_with = "grid_follows_n")]
        grid_res: Option<usize>,
        /// Couple the grid resolution to the population (ν = n); the default.
        #[arg(long = "grid-follows-n")]
        grid_follows_n: bool,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 10_000)]
        reps: usize,
        /// Largest |M_n| evaluated exactly; larger rows fall back to Monte Carlo.
        #[arg(long = "exact-cap", default_value_t = 100_000)]
        exact_cap: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// i.i.d. empirical-frequency deviation rates on a binary alphabet.
    Deviation {
        /// Success probability of the binary alphabet.
        #[arg(long)]
        p: f64,
        #[arg(long, value_delimiter = ',')]
        agents: Vec<usize>,
        #[arg(long, default_value_t = 10_000)]
        reps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Run the model-level acceptance battery.
    Check {
        #[command(flatten)]
        model: ModelArg,
    },
}

/// Entry point with explicit argv; returns the process exit code.
pub fn main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // help/version are not usage errors
            use clap::error::ErrorKind;
            let _ = e.print();
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_IO,
            };
        }
    };
    match run_command(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code_for(&e)
        }
    }
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Dp(#[from] DpError),
    #[error(transparent)]
    Sim(#[from] crate::sim::SimError),
    #[error(transparent)]
    Convergence(#[from] ConvergenceError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("usage error: {0}")]
    Usage(String),
}

fn exit_code_for(e: &CliError) -> i32 {
    match e {
        CliError::Dp(DpError::CapExceeded(_)) | CliError::Dp(DpError::Simplex(_)) => EXIT_CAP,
        CliError::Convergence(ConvergenceError::Dp(DpError::CapExceeded(_)))
        | CliError::Convergence(ConvergenceError::Dp(DpError::Simplex(_))) => EXIT_CAP,
        _ => EXIT_IO,
    }
}

fn load_admissible(path: &PathBuf) -> Result<Result<ModelSpec, i32>, CliError> {
    let model = load_model(path)?;
    let report = validate_model(&model);
    if !report.is_admissible() {
        for v in &report.violations {
            eprintln!("violation: {v}");
        }
        return Ok(Err(EXIT_VALIDATION));
    }
    Ok(Ok(model))
}

fn run_command(command: Command) -> Result<i32, CliError> {
    match command {
        Command::Validate { model } => {
            let loaded = load_model(&model.model)?;
            let report = validate_model(&loaded);
            if report.is_admissible() {
                println!("OK");
                Ok(EXIT_OK)
            } else {
                for v in &report.violations {
                    println!("violation: {v}");
                }
                Ok(EXIT_VALIDATION)
            }
        }
        Command::Solve { model, grid_res, out } => {
            if grid_res == 0 {
                return Err(CliError::Usage("--grid-res must be >= 1".into()));
            }
            let spec = match load_admissible(&model.model)? {
                Ok(s) => s,
                Err(code) => return Ok(code),
            };
            let sol = solve_decentralized_grid(&spec, grid_res, &Caps::default())?;
            println!("value {}", sol.value);
            for (t, p) in sol.policies.iter().enumerate() {
                println!("stage {t}: policy index {} actions {:?}", p.index(spec.num_actions), p.actions());
            }
            if let Some(path) = out {
                std::fs::write(path, serde_json::to_string_pretty(&sol.to_json()).unwrap())?;
            }
            Ok(EXIT_OK)
        }
        Command::Sharing { model, agents, out } => {
            if agents == 0 {
                return Err(CliError::Usage("--agents must be >= 1".into()));
            }
            let spec = match load_admissible(&model.model)? {
                Ok(s) => s,
                Err(code) => return Ok(code),
            };
            let sol = solve_sharing(&spec, agents, &Caps::default())?;
            println!("J_star {}", sol.j_star);
            if let Some(path) = out {
                std::fs::write(path, serde_json::to_string_pretty(&sol.to_json(10_000)).unwrap())?;
            }
            Ok(EXIT_OK)
        }
        Command::Gap { model, agents, grid_res, exact, mc, reps, seed } => {
            if grid_res == 0 || agents == 0 {
                return Err(CliError::Usage("--grid-res and --agents must be >= 1".into()));
            }
            if exact == mc {
                return Err(CliError::Usage("choose exactly one of --exact or --mc".into()));
            }
            let spec = match load_admissible(&model.model)? {
                Ok(s) => s,
                Err(code) => return Ok(code),
            };
            let caps = Caps::default();
            if exact {
                let rec = optimality_gap(&spec, agents, grid_res, &caps)?;
                println!("J_g {}", rec.j_g);
                println!("J_star {}", rec.j_star);
                println!("gap {}", rec.gap);
            } else {
                let sol = solve_decentralized_grid(&spec, grid_res, &caps)?;
                let strategy = Strategy::Decentralized(sol.policies);
                let sub_seed = key_hash(&[seed, 0x676170, agents as u64]);
                let runs = simulate_population(&spec, agents, &strategy, sub_seed, reps)?;
                let mean = runs.iter().map(|r| r.total_cost).sum::<f64>() / runs.len() as f64;
                let var = runs
                    .iter()
                    .map(|r| (r.total_cost - mean) * (r.total_cost - mean))
                    .sum::<f64>()
                    / (runs.len() as f64 - 1.0).max(1.0);
                let se = (var / runs.len() as f64).sqrt();
                let sharing = solve_sharing(&spec, agents, &caps)?;
                println!("J_g {mean} (stderr {se})");
                println!("J_star {}", sharing.j_star);
                println!("gap {}", mean - sharing.j_star);
            }
            Ok(EXIT_OK)
        }
        Command::Convergence {
            model,
            agents,
            grid_res,
            grid_follows_n: _,
            seed,
            reps,
            exact_cap,
            out,
        } => {
            if let Some(0) = grid_res {
                return Err(CliError::Usage("--grid-res must be >= 1".into()));
            }
            let spec = match load_admissible(&model.model)? {
                Ok(s) => s,
                Err(code) => return Ok(code),
            };
            let nu_policy = match grid_res {
                Some(nu) => NuPolicy::Fixed(nu),
                None => NuPolicy::FollowN,
            };
            let table =
                run_convergence(&spec, &agents, nu_policy, seed, reps, exact_cap, &Caps::default())?;
            std::fs::write(&out, table.to_csv())?;
            println!("wrote {} rows to {}", table.rows.len(), out.display());
            match fit_rate(&table) {
                Ok(fit) => println!(
                    "rate fit: slope {} intercept {} r2 {}",
                    fit.slope, fit.intercept, fit.r_squared
                ),
                Err(e) => println!("rate fit: {e}"),
            }
            Ok(EXIT_OK)
        }
        Command::Deviation { p, agents, reps, seed } => {
            if !(0.0..=1.0).contains(&p) {
                return Err(CliError::Usage("--p must be in [0, 1]".into()));
            }
            if agents.is_empty() {
                return Err(CliError::Usage("--agents must be non-empty".into()));
            }
            println!("n,mean_dev,stderr,sqrt_n_dev,exact");
            for &n in &agents {
                let sub_seed = key_hash(&[seed, 0x646576, n as u64]);
                let stats = iid_deviation(&[p, 1.0 - p], n, sub_seed, reps);
                let exact = if n <= 1000 {
                    exact_binomial_deviation(p, n)
                        .map(|v| v.to_string())
                        .unwrap_or_default()
                } else {
                    String::new()
                };
                println!(
                    "{},{},{},{},{}",
                    n,
                    stats[0].mean,
                    stats[0].std_error,
                    stats[0].mean * (n as f64).sqrt(),
                    exact
                );
            }
            Ok(EXIT_OK)
        }
        Command::Check { model } => {
            let spec = match load_admissible(&model.model)? {
                Ok(s) => s,
                Err(code) => return Ok(code),
            };
            Ok(run_check_battery(&spec))
        }
    }
}

fn check_line(name: &str, pass: bool) -> bool {
    println!("{} {name}", if pass { "PASS" } else { "FAIL" });
    pass
}

/// Model-level battery: sampled certificate checks plus solver
/// cross-validation at small scale. Prints one line per check.
fn run_check_battery(model: &ModelSpec) -> i32 {
    let caps = Caps::default();
    let dim = model.num_states;
    let k = lipschitz_constants(model);
    let mut all = true;

    // kernel rows are probability vectors on random simplex points
    let mut ok = true;
    for i in 0..2_000u64 {
        let z = random_simplex_point(dim, &[1, i]);
        let t = (i as usize) % model.horizon;
        for x in 0..dim {
            for u in 0..model.num_actions {
                ok &= kernel_eval(model, t, x, u, &z).is_probability(1e-12);
            }
        }
    }
    all &= check_line("kernel rows stochastic on simplex samples", ok);

    // Lipschitz certificates on box samples
    let policies = match enumerate_policies_with_cap(dim, model.num_actions, 4096) {
        Ok(p) => p,
        Err(_) => {
            println!("SKIP lipschitz certificates (policy space too large)");
            return if all { EXIT_OK } else { EXIT_CHECK_FAILED };
        }
    };
    let mut ok = true;
    for i in 0..10_000u64 {
        let z1 = random_box_point(dim, &[2, i]);
        let z2 = random_box_point(dim, &[3, i]);
        let d = linf(&z1, &z2);
        let t = (i as usize) % model.horizon;
        let x = (i as usize) % dim;
        let u = (i as usize / dim) % model.num_actions;
        let r1 = kernel_eval(model, t, x, u, &z1);
        let r2 = kernel_eval(model, t, x, u, &z2);
        ok &= (0..dim).all(|y| (r1[y] - r2[y]).abs() <= k.k1[t] * d + 1e-12);
        ok &= (cost_eval(model, t, x, u, &z1) - cost_eval(model, t, x, u, &z2)).abs()
            <= k.k2[t] * d + 1e-12;
        let gamma = &policies[(i as usize) % policies.len()];
        let f1 = lift_dynamics(model, t, &z1, gamma);
        let f2 = lift_dynamics(model, t, &z2, gamma);
        ok &= linf(&f1, &f2) <= k.k3[t] * d + 1e-12;
        ok &= (lift_cost(model, t, &z1, gamma) - lift_cost(model, t, &z2, gamma)).abs()
            <= k.k4[t] * d + 1e-12;
    }
    all &= check_line("lipschitz certificates (K1/K2/K3/K4)", ok);

    // first-moment identity of the one-step mean-field law
    let mut ok = true;
    if let Ok(space) = EmpiricalSpace::with_cap(5, dim, 10_000) {
        for mi in 0..space.len() {
            for gamma in policies.iter().take(8) {
                let pmf = next_meanfield_pmf(model, &space, space.counts(mi), 0, gamma);
                let flow = lift_dynamics(model, 0, &space.point(mi), gamma);
                for y in 0..dim {
                    let moment: f64 =
                        (0..space.len()).map(|j| pmf[j] * space.point(j)[y]).sum();
                    ok &= (moment - flow[y]).abs() < 1e-10;
                }
            }
        }
        all &= check_line("first-moment identity of one-step law", ok);
    } else {
        println!("SKIP first-moment identity (M_n too large)");
    }

    // grid DP converges to the exact tree value
    let sequences = (policies.len() as u128).checked_pow(model.horizon as u32);
    if matches!(sequences, Some(s) if s <= 65_536) {
        match solve_decentralized_tree(model, &caps) {
            Ok(tree) => {
                let mut ok = true;
                let mut prev = f64::INFINITY;
                for nu in [8usize, 16, 32, 64] {
                    match solve_decentralized_grid(model, nu, &caps) {
                        Ok(grid) => {
                            let delta = (grid.value - tree.value).abs();
                            let kv_sum: f64 = k.kv.iter().sum();
                            ok &= delta <= kv_sum / (2.0 * nu as f64) + 1e-12;
                            ok &= delta <= prev + 1e-12;
                            prev = delta;
                        }
                        Err(_) => {
                            println!("SKIP grid convergence (grid too large)");
                            ok = true;
                            break;
                        }
                    }
                }
                all &= check_line("grid DP within Kv quantization bound of tree DP", ok);
            }
            Err(_) => println!("SKIP grid convergence (tree too large)"),
        }
    } else {
        println!("SKIP grid convergence (policy tree too large)");
    }

    // sharing DP against the exhaustive oracle at tiny scale
    match (solve_sharing(model, 2, &caps), brute_force_sharing_value(model, 2, &caps)) {
        (Ok(sol), Ok(brute)) => {
            all &= check_line(
                "sharing DP equals exhaustive oracle (n=2)",
                (sol.j_star - brute).abs() < 1e-12,
            );
        }
        _ => println!("SKIP sharing oracle (instance too large)"),
    }

    // nonnegative optimality gap at small n
    match optimality_gap(model, 4, 32, &caps) {
        Ok(rec) => {
            all &= check_line("optimality gap nonnegative (n=4)", rec.gap >= -1e-10);
        }
        Err(_) => println!("SKIP gap check (instance too large)"),
    }

    // quantizer contract on random simplex points
    let mut ok = true;
    for i in 0..10_000u64 {
        let z = random_simplex_point(dim, &[4, i]);
        let nu = 8 + (i as usize % 57);
        let q = quantize(&z, nu);
        ok &= linf(&z, &q) <= 0.5 / nu as f64 + 1e-12;
        let q2 = quantize(&q, nu);
        ok &= q2 == q;
    }
    all &= check_line("quantizer within half-step and idempotent", ok);

    if all {
        EXIT_OK
    } else {
        EXIT_CHECK_FAILED
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::random_admissible_model;

    fn synthetic_table(gaps: &[(usize, f64)]) -> ConvergenceTable {
        ConvergenceTable {
            rows: gaps
                .iter()
                .map(|&(n, gap)| ConvergenceRow {
                    n,
                    nu: n,
                    j_g: 1.0 + gap,
                    j_star: Some(1.0),
                    gap: Some(gap),
                    gap_sqrt_n: Some(gap * (n as f64).sqrt()),
                    method: Method::Exact,
                    std_error: None,
                    seed: 0,
                })
                .collect(),
        }
    }

    #[test]
    fn fit_rate_recovers_inverse_sqrt() {
        let rows: Vec<(usize, f64)> =
            [4usize, 8, 16, 32, 64].iter().map(|&n| (n, 1.0 / (n as f64).sqrt())).collect();
        let fit = fit_rate(&synthetic_table(&rows)).unwrap();
        assert!((fit.slope + 0.5).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rate_recovers_inverse_n() {
        let rows: Vec<(usize, f64)> =
            [4usize, 8, 16, 32].iter().map(|&n| (n, 1.0 / n as f64)).collect();
        let fit = fit_rate(&synthetic_table(&rows)).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_rate_error_cases() {
        assert!(matches!(
            fit_rate(&synthetic_table(&[(4, 0.1), (8, 0.05)])),
            Err(FitError::InsufficientRows(2))
        ));
        assert!(matches!(
            fit_rate(&synthetic_table(&[(4, 0.0), (8, 0.0), (16, 0.0)])),
            Err(FitError::VacuouslySatisfied)
        ));
    }

    #[test]
    fn convergence_rejects_bad_ladder() {
        let model = random_admissible_model(1, 2, 2, 1);
        let err = run_convergence(
            &model,
            &[8, 4],
            NuPolicy::FollowN,
            0,
            10,
            1000,
            &Caps::default(),
        );
        assert!(matches!(err, Err(ConvergenceError::BadAgentsList)));
    }

    #[test]
    fn convergence_identity_model_all_gaps_zero() {
        let model = crate::model::identity_model(2, 2);
        let table = run_convergence(
            &model,
            &[2, 4, 8],
            NuPolicy::FollowN,
            0,
            10,
            1000,
            &Caps::default(),
        )
        .unwrap();
        for row in &table.rows {
            assert!(row.gap.unwrap().abs() < 1e-12);
            assert_eq!(row.method, Method::Exact);
        }
    }

    #[test]
    fn convergence_single_stage_gap_by_hand() {
        // T=1: the decentralized value is min_γ ĉ(ẑ1, γ); both sides are a
        // one-stage minimization, computable directly
        let model = random_admissible_model(3, 2, 2, 1);
        let table = run_convergence(
            &model,
            &[4],
            NuPolicy::Fixed(64),
            0,
            10,
            1000,
            &Caps::default(),
        )
        .unwrap();
        let row = &table.rows[0];
        assert!(row.gap.unwrap() >= -1e-10);
        // J_g for a fixed γ: expected lifted cost under the multinomial m1 law
        let space = EmpiricalSpace::new(4, 2).unwrap();
        let init = crate::dp::initial_meanfield_pmf(&model.initial_dist, &space);
        let sol = solve_decentralized_grid(&model, 64, &Caps::default()).unwrap();
        let by_hand: f64 = (0..space.len())
            .map(|mi| init[mi] * lift_cost(&model, 0, &space.point(mi), &sol.policies[0]))
            .sum();
        assert!((row.j_g - by_hand).abs() < 1e-12);
    }

    #[test]
    fn csv_is_stable_and_has_exact_columns() {
        let model = random_admissible_model(5, 2, 2, 2);
        let args = (
            &model,
            &[2usize, 4][..],
            0u64,
        );
        let t1 = run_convergence(args.0, args.1, NuPolicy::FollowN, args.2, 10, 1000, &Caps::default()).unwrap();
        let t2 = run_convergence(args.0, args.1, NuPolicy::FollowN, args.2, 10, 1000, &Caps::default()).unwrap();
        let csv1 = t1.to_csv();
        assert_eq!(csv1, t2.to_csv());
        assert!(csv1.starts_with("n,nu,J_g,J_star,gap,gap_sqrt_n,method,stderr,seed\n"));
    }
}
