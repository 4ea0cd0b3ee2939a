//! Seeded Monte Carlo simulation of the n-agent population and the
//! statistical deviation-rate estimators.
//!
//! All randomness is counter-based: a draw is keyed by
//! `(seed, rep, stage, agent)`, so identical seeds give bit-identical runs
//! regardless of thread count. Stage key 0 is reserved for initial-state
//! draws; transitions at stage t use key t+1.

use rayon::prelude::*;
use thiserror::Error;

use crate::dp::Strategy;
use crate::lift::{lift_cost, lift_dynamics, LocalPolicy};
use crate::model::MeanFieldModel;
use crate::rng::{inverse_cdf, keyed_uniform};
use crate::simplex::{mean_field_of, DistVector, EmpiricalSpace, SimplexError};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Simplex(#[from] SimplexError),
    #[error("invalid strategy shape: {0}")]
    InvalidStrategy(String),
    #[error("exact binomial deviation limited to n <= 1000, got {0}")]
    BinomialTooLarge(usize),
}

/// One simulated trajectory of the n-agent population.
#[derive(Clone, Debug)]
pub struct SimRun {
    pub seed: u64,
    pub rep: u64,
    pub n: usize,
    /// states[t][i] for t in 0..T.
    pub states: Vec<Vec<usize>>,
    /// Realized mean-field m_t at each stage.
    pub mean_fields: Vec<DistVector>,
    /// actions[t][i].
    pub actions: Vec<Vec<usize>>,
    pub stage_costs: Vec<f64>,
    pub total_cost: f64,
}

/// Simulate `reps` independent population trajectories under a homogeneous
/// state-feedback strategy. Replications run in parallel; output order and
/// contents depend only on `(seed, rep index)`.
pub fn simulate_population<M: MeanFieldModel + ?Sized>(
    model: &M,
    n: usize,
    strategy: &Strategy,
    seed: u64,
    reps: usize,
) -> Result<Vec<SimRun>, SimError> {
    let horizon = model.horizon();
    match strategy {
        Strategy::Decentralized(ps) => {
            if ps.len() != horizon {
                return Err(SimError::InvalidStrategy(format!(
                    "{} stage policies, expected {horizon}",
                    ps.len()
                )));
            }
        }
        Strategy::MeanFieldFeedback { n: sn, tables } => {
            if *sn != n {
                return Err(SimError::InvalidStrategy(format!(
                    "feedback table built for n={sn}, simulating n={n}"
                )));
            }
            if tables.len() != horizon {
                return Err(SimError::InvalidStrategy("wrong number of stage tables".into()));
            }
        }
    }
    let space = match strategy {
        Strategy::MeanFieldFeedback { .. } => Some(EmpiricalSpace::new(n, model.num_states())?),
        Strategy::Decentralized(_) => None,
    };

    let runs: Vec<SimRun> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let dim = model.num_states();
            let mut states: Vec<usize> = (0..n)
                .map(|i| {
                    inverse_cdf(model.initial_dist(), keyed_uniform(&[seed, rep, 0, i as u64]))
                })
                .collect();
            let mut run = SimRun {
                seed,
                rep,
                n,
                states: Vec::with_capacity(horizon),
                mean_fields: Vec::with_capacity(horizon),
                actions: Vec::with_capacity(horizon),
                stage_costs: Vec::with_capacity(horizon),
                total_cost: 0.0,
            };
            for t in 0..horizon {
                let m = mean_field_of(&states, dim).expect("nonempty population");
                let gamma: &LocalPolicy = match strategy {
                    Strategy::Decentralized(ps) => &ps[t],
                    Strategy::MeanFieldFeedback { tables, .. } => {
                        &tables[t][space.as_ref().unwrap().rank_of(&m)]
                    }
                };
                let actions: Vec<usize> = states.iter().map(|&x| gamma.action(x)).collect();
                // per-agent average cost collapses to the lifted cost
                let cost = lift_cost(model, t, &m, gamma);
                let next: Vec<usize> = states
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| {
                        let u = keyed_uniform(&[seed, rep, t as u64 + 1, i as u64]);
                        model.sample_next(t, x, gamma.action(x), m.values(), u)
                    })
                    .collect();
                run.states.push(states.clone());
                run.mean_fields.push(m);
                run.actions.push(actions);
                run.stage_costs.push(cost);
                run.total_cost += cost;
                states = next;
            }
            run
        })
        .collect();
    Ok(runs)
}

/// A Monte Carlo estimate with its standard error.
#[derive(Clone, Copy, Debug)]
pub struct DeviationStat {
    pub mean: f64,
    pub std_error: f64,
    pub reps: usize,
}

fn stats_of(samples: &[f64]) -> DeviationStat {
    let reps = samples.len();
    let mean = samples.iter().sum::<f64>() / reps as f64;
    let var = if reps > 1 {
        samples.iter().map(|&s| (s - mean) * (s - mean)).sum::<f64>() / (reps as f64 - 1.0)
    } else {
        0.0
    };
    DeviationStat { mean, std_error: (var / reps as f64).sqrt(), reps }
}

/// Monte Carlo estimate of E‖m_{t+1} − f̂_t(m,γ)‖∞ where m_{t+1} is the
/// agent-wise realized one-step update from the empirical point `m`.
pub fn one_step_deviation<M: MeanFieldModel + ?Sized>(
    model: &M,
    n: usize,
    m: &DistVector,
    t: usize,
    gamma: &LocalPolicy,
    seed: u64,
    reps: usize,
) -> DeviationStat {
    let dim = model.num_states();
    let flow = lift_dynamics(model, t, m, gamma);
    // fixed agent-to-state assignment: state 0 agents first
    let counts: Vec<usize> = m
        .values()
        .iter()
        .map(|&v| (v * n as f64).round() as usize)
        .collect();
    let samples: Vec<f64> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut next_counts = vec![0usize; dim];
            let mut agent = 0u64;
            for (x, &c) in counts.iter().enumerate() {
                for _ in 0..c {
                    let u = keyed_uniform(&[seed, rep, t as u64 + 1, agent]);
                    let y = model.sample_next(t, x, gamma.action(x), m.values(), u);
                    next_counts[y] += 1;
                    agent += 1;
                }
            }
            let realized: Vec<f64> =
                next_counts.iter().map(|&c| c as f64 / n as f64).collect();
            crate::simplex::linf_slices(&realized, flow.values())
        })
        .collect();
    stats_of(&samples)
}

/// Monte Carlo estimate, per symbol, of E|(1/n)Σ 1(Wⁱ=w) − p(w)| for n
/// i.i.d. draws from `p`.
pub fn iid_deviation(p: &[f64], n: usize, seed: u64, reps: usize) -> Vec<DeviationStat> {
    let dim = p.len();
    let per_rep: Vec<Vec<f64>> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let mut counts = vec![0usize; dim];
            for i in 0..n as u64 {
                counts[inverse_cdf(p, keyed_uniform(&[seed, rep, 0, i]))] += 1;
            }
            counts
                .iter()
                .zip(p)
                .map(|(&c, &pw)| (c as f64 / n as f64 - pw).abs())
                .collect()
        })
        .collect();
    (0..dim)
        .map(|w| {
            let samples: Vec<f64> = per_rep.iter().map(|r| r[w]).collect();
            stats_of(&samples)
        })
        .collect()
}

/// Closed-form E|K/n − p| for K ~ Binomial(n, p), by direct summation of
/// the binomial pmf. Oracle for [`iid_deviation`] on binary alphabets.
pub fn exact_binomial_deviation(p: f64, n: usize) -> Result<f64, SimError> {
    assert!((0.0..=1.0).contains(&p));
    if n > 1000 {
        return Err(SimError::BinomialTooLarge(n));
    }
    if p == 0.0 || p == 1.0 {
        return Ok(0.0);
    }
    // pmf recurrence: P(k+1) = P(k) · (n-k)/(k+1) · p/(1-p)
    let q = 1.0 - p;
    let mut pmf = q.powi(n as i32);
    let mut total = 0.0;
    for k in 0..=n {
        total += pmf * (k as f64 / n as f64 - p).abs();
        if k < n {
            pmf *= (n - k) as f64 / (k + 1) as f64 * (p / q);
        }
    }
    Ok(total)
}

/// Check the stage-cost identity on a run: the simulated per-step cost must
/// equal ĉ_t(m_t, γ_t) exactly for homogeneous state feedback.
pub fn stage_cost_identity_holds<M: MeanFieldModel + ?Sized>(
    model: &M,
    run: &SimRun,
    strategy: &Strategy,
) -> bool {
    let space = match strategy {
        Strategy::MeanFieldFeedback { .. } => {
            EmpiricalSpace::new(run.n, model.num_states()).ok()
        }
        _ => None,
    };
    run.mean_fields.iter().enumerate().all(|(t, m)| {
        let rank = space.as_ref().map(|s| s.rank_of(m)).unwrap_or(0);
        let gamma = strategy.policy_at(t, rank);
        run.stage_costs[t] == lift_cost(model, t, m, gamma)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{evaluate_strategy_exact, Caps};
    use crate::lift::factorized_update;
    use crate::model::{identity_model, random_admissible_model, FunctionalModel};
    use crate::simplex::{linf, Flavor};

    fn const_policy_strategy(horizon: usize) -> Strategy {
        Strategy::Decentralized(vec![LocalPolicy::new(vec![0, 1], 2); horizon])
    }

    #[test]
    fn deterministic_kernel_follows_flow() {
        let model = identity_model(2, 3);
        let runs = simulate_population(&model, 6, &const_policy_strategy(3), 9, 4).unwrap();
        for run in &runs {
            for t in 1..3 {
                assert_eq!(run.states[t], run.states[0]);
            }
            assert_eq!(run.total_cost, 0.0);
        }
    }

    #[test]
    fn single_agent_identity_state_constant() {
        let model = identity_model(2, 4);
        let runs = simulate_population(&model, 1, &const_policy_strategy(4), 3, 8).unwrap();
        for run in &runs {
            let x0 = run.states[0][0];
            assert!(run.states.iter().all(|s| s[0] == x0));
        }
    }

    #[test]
    fn runs_reproducible_and_thread_independent() {
        let model = random_admissible_model(5, 2, 2, 3);
        let strategy = const_policy_strategy(3);
        let a = simulate_population(&model, 8, &strategy, 42, 16).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| simulate_population(&model, 8, &strategy, 42, 16).unwrap());
        for (ra, rb) in a.iter().zip(&b) {
            assert_eq!(ra.states, rb.states);
            assert_eq!(ra.actions, rb.actions);
            assert_eq!(ra.stage_costs, rb.stage_costs);
            assert_eq!(ra.total_cost, rb.total_cost);
        }
    }

    #[test]
    fn mean_fields_match_states_and_costs_are_lifted() {
        let model = random_admissible_model(15, 2, 2, 2);
        let strategy = const_policy_strategy(2);
        for run in simulate_population(&model, 5, &strategy, 7, 10).unwrap() {
            for (t, m) in run.mean_fields.iter().enumerate() {
                let recomputed = mean_field_of(&run.states[t], 2).unwrap();
                assert_eq!(m.values(), recomputed.values());
                assert_eq!(m.flavor(), Flavor::Empirical(5));
            }
            assert!(stage_cost_identity_holds(&model, &run, &strategy));
        }
    }

    #[test]
    fn sample_mean_matches_exact_evaluation() {
        let model = random_admissible_model(25, 2, 2, 2);
        let strategy = const_policy_strategy(2);
        let exact = evaluate_strategy_exact(&model, 8, &strategy, &Caps::default()).unwrap();
        let runs = simulate_population(&model, 8, &strategy, 11, 100_000).unwrap();
        let samples: Vec<f64> = runs.iter().map(|r| r.total_cost).collect();
        let stat = stats_of(&samples);
        assert!(
            (stat.mean - exact).abs() <= 4.0 * stat.std_error,
            "mc {} vs exact {exact} (se {})",
            stat.mean,
            stat.std_error
        );
    }

    #[test]
    fn one_step_deviation_zero_for_deterministic_kernel() {
        let model = identity_model(2, 1);
        let m = DistVector::empirical(vec![0.5, 0.5], 4).unwrap();
        let gamma = LocalPolicy::new(vec![0, 1], 2);
        let stat = one_step_deviation(&model, 4, &m, 0, &gamma, 1, 200);
        assert_eq!(stat.mean, 0.0);
    }

    #[test]
    fn one_step_deviation_sqrt_scaling() {
        let model = random_admissible_model(35, 2, 2, 1);
        let gamma = LocalPolicy::new(vec![0, 1], 2);
        let reps = 10_000;
        let small = {
            let m = DistVector::empirical(vec![0.5, 0.5], 16).unwrap();
            one_step_deviation(&model, 16, &m, 0, &gamma, 2, reps)
        };
        let large = {
            let m = DistVector::empirical(vec![0.5, 0.5], 64).unwrap();
            one_step_deviation(&model, 64, &m, 0, &gamma, 2, reps)
        };
        let ratio = small.mean / large.mean;
        assert!((1.5..=2.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn one_step_deviation_matches_factorized_update_in_expectation() {
        // with noise-driven dynamics the agent-wise update equals the
        // factorized one, so the two deviation means agree
        let fm = FunctionalModel::new(
            2, 2, 1,
            vec![0.5, 0.5],
            vec![0.3, 0.7],
            |_t, _x, _u, w, _z| w,
            |_t, _x, _u, _z| 0.0,
        )
        .unwrap();
        let n = 64;
        let m = DistVector::empirical(vec![0.5, 0.5], n).unwrap();
        let gamma = LocalPolicy::new(vec![0, 0], 2);
        let reps = 20_000u64;
        // mean of ‖f̄(m,γ,noise_emp) − f̂(m,γ)‖∞ over realized noise draws
        let flow = lift_dynamics(&fm, 0, &m, &gamma);
        let factorized_samples: Vec<f64> = (0..reps)
            .map(|rep| {
                let mut counts = [0usize; 2];
                for i in 0..n as u64 {
                    counts[inverse_cdf(&fm.noise_pmf, keyed_uniform(&[91, rep, 1, i]))] += 1;
                }
                let emp = DistVector::empirical(
                    counts.iter().map(|&c| c as f64 / n as f64).collect(),
                    n,
                )
                .unwrap();
                let bar = factorized_update(&fm, 0, &m, &gamma, &emp).unwrap();
                linf(&bar, &flow)
            })
            .collect();
        let factorized = stats_of(&factorized_samples);
        let agentwise = one_step_deviation(&fm, n, &m, 0, &gamma, 91, reps as usize);
        let combined = (factorized.std_error.powi(2) + agentwise.std_error.powi(2)).sqrt();
        assert!(
            (factorized.mean - agentwise.mean).abs() <= 4.0 * combined,
            "factorized {} vs agentwise {}",
            factorized.mean,
            agentwise.mean
        );
    }

    #[test]
    fn agentwise_update_unbiased_for_lifted_flow() {
        // for any dynamics the realized next mean field has expectation
        // f̂(m,γ) coordinate-wise, even when the pooled factorized form
        // differs from the agent-wise update pointwise
        let fm = FunctionalModel::new(
            2, 2, 1,
            vec![0.5, 0.5],
            vec![0.5, 0.5],
            |_t, x, _u, w, _z| if w == 1 { 1 - x } else { x },
            |_t, _x, _u, _z| 0.0,
        )
        .unwrap();
        let n = 64usize;
        let m = DistVector::empirical(vec![0.5, 0.5], n).unwrap();
        let gamma = LocalPolicy::new(vec![0, 0], 2);
        let flow = lift_dynamics(&fm, 0, &m, &gamma);
        let reps = 20_000u64;
        let samples: Vec<f64> = (0..reps)
            .map(|rep| {
                let mut next0 = 0usize;
                for i in 0..n as u64 {
                    let x = if (i as usize) < n / 2 { 0 } else { 1 };
                    let w = inverse_cdf(&fm.noise_pmf, keyed_uniform(&[93, rep, 1, i]));
                    if fm.next_state(0, x, gamma.action(x), w, m.values()) == 0 {
                        next0 += 1;
                    }
                }
                next0 as f64 / n as f64
            })
            .collect();
        let stat = stats_of(&samples);
        assert!(
            (stat.mean - flow[0]).abs() <= 4.0 * stat.std_error,
            "mean {} vs flow {}",
            stat.mean,
            flow[0]
        );
    }

    #[test]
    fn iid_deviation_degenerate_and_n1() {
        let stats = iid_deviation(&[1.0, 0.0], 16, 1, 500);
        assert_eq!(stats[0].mean, 0.0);
        assert_eq!(stats[1].mean, 0.0);
        let stats = iid_deviation(&[0.5, 0.5], 1, 1, 500);
        for s in &stats {
            assert_eq!(s.mean, 0.5);
        }
    }

    #[test]
    fn exact_binomial_examples() {
        assert_eq!(exact_binomial_deviation(0.0, 10).unwrap(), 0.0);
        assert_eq!(exact_binomial_deviation(0.5, 1).unwrap(), 0.5);
        assert!((exact_binomial_deviation(0.5, 4).unwrap() - 0.1875).abs() < 1e-15);
        assert!(exact_binomial_deviation(0.5, 2000).is_err());
    }

    #[test]
    fn iid_deviation_matches_exact_binomial() {
        let n = 4;
        let exact = exact_binomial_deviation(0.5, n).unwrap();
        let stats = iid_deviation(&[0.5, 0.5], n, 13, 100_000);
        for s in &stats {
            assert!(
                (s.mean - exact).abs() <= 4.0 * s.std_error,
                "mc {} vs exact {exact}",
                s.mean
            );
        }
    }
}
