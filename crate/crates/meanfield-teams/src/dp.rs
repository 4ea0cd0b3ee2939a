//! Dynamic programs: the lifted decentralized DP (exact policy-sequence
//! tree and quantized grid), the mean-field-sharing DP over M_n, exact
//! strategy evaluation by forward propagation of the mean-field law, and
//! the exhaustive brute-force oracle.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde_json::json;
use thiserror::Error;

use crate::lift::{enumerate_policies_with_cap, lift_cost, lift_dynamics, LiftError, LocalPolicy};
use crate::model::MeanFieldModel;
use crate::simplex::{
    quantize, DistVector, EmpiricalSpace, Flavor, GridSpace, SimplexError, DEFAULT_ENUM_CAP,
};

#[derive(Debug, Error)]
pub enum DpError {
    #[error(transparent)]
    Simplex(#[from] SimplexError),
    #[error(transparent)]
    Lift(#[from] LiftError),
    #[error("compute cap exceeded: {0}")]
    CapExceeded(String),
    #[error("invalid strategy: {0}")]
    InvalidStrategy(String),
}

/// Resource limits for the solvers. Exceeding a cap is an explicit error,
/// never silent truncation.
#[derive(Clone, Copy, Debug)]
pub struct Caps {
    /// Max enumerated points in M_n or Q_ν.
    pub enumeration: usize,
    /// Max (points × policies × stages) table entries in a DP pass.
    pub dp_entries: u128,
    /// Max strategy tables in the brute-force oracle.
    pub brute_force: u128,
}

impl Default for Caps {
    fn default() -> Self {
        Self {
            enumeration: DEFAULT_ENUM_CAP,
            dp_entries: 100_000_000,
            brute_force: 10_000_000,
        }
    }
}

/// Exact distribution of count vectors produced by independent categorical
/// trials: for each `(row, trials)` group, `trials` i.i.d. draws from `row`,
/// convolved across groups. Computed trial by trial, so every atom is an
/// exact sum of products.
fn counts_convolution(groups: &[(Vec<f64>, u32)], dim: usize) -> BTreeMap<Vec<u32>, f64> {
    if dim == 2 {
        return counts_convolution_dim2(groups);
    }
    let mut dist = BTreeMap::new();
    dist.insert(vec![0u32; dim], 1.0);
    for (row, trials) in groups {
        for _ in 0..*trials {
            let mut next: BTreeMap<Vec<u32>, f64> = BTreeMap::new();
            for (counts, &p) in &dist {
                for (y, &py) in row.iter().enumerate() {
                    if py > 0.0 {
                        let mut c = counts.clone();
                        c[y] += 1;
                        *next.entry(c).or_insert(0.0) += p * py;
                    }
                }
            }
            dist = next;
        }
    }
    dist
}

// Two-state fast path: track only the count of state 0 in a flat vector.
fn counts_convolution_dim2(groups: &[(Vec<f64>, u32)]) -> BTreeMap<Vec<u32>, f64> {
    let total: u32 = groups.iter().map(|(_, t)| *t).sum();
    let mut dist = vec![0.0f64; total as usize + 1];
    dist[0] = 1.0;
    let mut placed: u32 = 0;
    for (row, trials) in groups {
        let (p0, p1) = (row[0], row[1]);
        for _ in 0..*trials {
            placed += 1;
            let mut next = vec![0.0f64; total as usize + 1];
            for k in 0..placed as usize {
                let p = dist[k];
                if p != 0.0 {
                    next[k + 1] += p * p0;
                    next[k] += p * p1;
                }
            }
            dist = next;
        }
    }
    dist.into_iter()
        .enumerate()
        .filter(|(_, p)| *p != 0.0)
        .map(|(k, p)| (vec![k as u32, total - k as u32], p))
        .collect()
}

fn counts_to_pmf(dist: BTreeMap<Vec<u32>, f64>, space: &EmpiricalSpace) -> Vec<f64> {
    let mut out = vec![0.0; space.len()];
    let mut total = 0.0;
    for (counts, p) in dist {
        total += p;
        out[space.rank(&counts)] = p;
    }
    for v in &mut out {
        *v /= total;
    }
    out
}

/// Exact one-step law of the mean-field: from empirical point `counts`,
/// the `counts[x]` agents in state `x` transition i.i.d. with the row
/// P_t(·|x,γ(x),m); per-state multinomial counts are convolved.
pub fn next_meanfield_pmf<M: MeanFieldModel + ?Sized>(
    model: &M,
    space: &EmpiricalSpace,
    counts: &[u32],
    t: usize,
    gamma: &LocalPolicy,
) -> Vec<f64> {
    let m_values: Vec<f64> = counts
        .iter()
        .map(|&c| c as f64 / space.n() as f64)
        .collect();
    let groups: Vec<(Vec<f64>, u32)> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(x, &c)| (model.kernel_row(t, x, gamma.action(x), &m_values), c))
        .collect();
    counts_to_pmf(counts_convolution(&groups, space.dim()), space)
}

/// Convenience wrapper around [`next_meanfield_pmf`]: builds the M_n space
/// and returns the pmf in its enumeration order.
pub fn next_meanfield_distribution<M: MeanFieldModel + ?Sized>(
    model: &M,
    n: usize,
    m: &DistVector,
    t: usize,
    gamma: &LocalPolicy,
) -> Result<(EmpiricalSpace, Vec<f64>), DpError> {
    let space = EmpiricalSpace::new(n, model.num_states())?;
    let counts: Vec<u32> = m
        .values()
        .iter()
        .map(|&v| (v * n as f64).round() as u32)
        .collect();
    let pmf = next_meanfield_pmf(model, &space, &counts, t, gamma);
    Ok((space, pmf))
}

/// Law of m_1 under n i.i.d. initial states drawn from `initial`.
pub fn initial_meanfield_pmf(initial: &[f64], space: &EmpiricalSpace) -> Vec<f64> {
    let groups = vec![(initial.to_vec(), space.n() as u32)];
    counts_to_pmf(counts_convolution(&groups, space.dim()), space)
}

/// Which lifted DP produced a decentralized solution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolveMode {
    ExactTree,
    Grid(usize),
}

/// A fully decentralized strategy: the deterministic mean-field trajectory,
/// one local policy per stage, and the value V̂₁(z₁).
#[derive(Clone, Debug)]
pub struct DecentralizedSolution {
    pub mode: SolveMode,
    pub num_actions: usize,
    /// z_1..z_{T+1}; quantized trajectory in grid mode.
    pub trajectory: Vec<DistVector>,
    pub policies: Vec<LocalPolicy>,
    pub value: f64,
    /// Per-stage value tables over Q_ν (grid mode only), `tables[t][q]`.
    pub value_tables: Option<Vec<Vec<f64>>>,
}

impl DecentralizedSolution {
    pub fn to_json(&self) -> serde_json::Value {
        let (mode, nu) = match self.mode {
            SolveMode::ExactTree => ("exact-tree", serde_json::Value::Null),
            SolveMode::Grid(nu) => ("grid", json!(nu)),
        };
        json!({
            "mode": mode,
            "nu": nu,
            "value": self.value,
            "trajectory": self.trajectory.iter().map(|z| z.values().to_vec()).collect::<Vec<_>>(),
            "policies": self.policies.iter().map(|p| p.index(self.num_actions)).collect::<Vec<_>>(),
        })
    }
}

/// The optimal mean-field-sharing solution: per-stage value and policy
/// tables over M_n, and J* = E[V₁(m₁)] under the multinomial initial law.
#[derive(Clone, Debug)]
pub struct SharingSolution {
    pub n: usize,
    pub num_actions: usize,
    pub space: EmpiricalSpace,
    /// `values[t][m_rank]`, t in 0..T.
    pub values: Vec<Vec<f64>>,
    /// `policies[t][m_rank]`.
    pub policies: Vec<Vec<LocalPolicy>>,
    pub j_star: f64,
}

impl SharingSolution {
    /// Tables larger than `elide_threshold` entries are omitted from the
    /// JSON and flagged.
    pub fn to_json(&self, elide_threshold: usize) -> serde_json::Value {
        let entries = self.values.len() * self.space.len();
        let elided = entries > elide_threshold;
        let mut doc = json!({
            "n": self.n,
            "J_star": self.j_star,
            "tables_elided": elided,
        });
        if !elided {
            doc["tables"] = json!({
                "values": self.values,
                "policies": self.policies.iter().map(|stage| {
                    stage.iter().map(|p| p.index(self.num_actions)).collect::<Vec<_>>()
                }).collect::<Vec<_>>(),
            });
        }
        doc
    }
}

/// A strategy usable by exact evaluation and simulation.
#[derive(Clone, Debug)]
pub enum Strategy {
    /// One local policy per stage, applied regardless of the realized
    /// mean-field (fully decentralized).
    Decentralized(Vec<LocalPolicy>),
    /// Mean-field feedback: `tables[t][m_rank]` over M_n (sharing).
    MeanFieldFeedback { n: usize, tables: Vec<Vec<LocalPolicy>> },
}

impl Strategy {
    pub fn policy_at(&self, t: usize, m_rank: usize) -> &LocalPolicy {
        match self {
            Strategy::Decentralized(ps) => &ps[t],
            Strategy::MeanFieldFeedback { tables, .. } => &tables[t][m_rank],
        }
    }

    fn check_shape<M: MeanFieldModel + ?Sized>(
        &self,
        model: &M,
        n: usize,
        space_len: usize,
    ) -> Result<(), DpError> {
        let horizon = model.horizon();
        match self {
            Strategy::Decentralized(ps) => {
                if ps.len() != horizon {
                    return Err(DpError::InvalidStrategy(format!(
                        "{} stage policies, expected {horizon}",
                        ps.len()
                    )));
                }
            }
            Strategy::MeanFieldFeedback { n: sn, tables } => {
                if *sn != n {
                    return Err(DpError::InvalidStrategy(format!(
                        "strategy built for n={sn}, evaluated at n={n}"
                    )));
                }
                if tables.len() != horizon || tables.iter().any(|t| t.len() != space_len) {
                    return Err(DpError::InvalidStrategy("feedback table shape mismatch".into()));
                }
            }
        }
        for t in 0..horizon {
            for mi in 0..space_len {
                let p = self.policy_at(t, mi);
                if p.num_states() != model.num_states() {
                    return Err(DpError::InvalidStrategy("policy dimension mismatch".into()));
                }
            }
        }
        Ok(())
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn check_dp_cap(points: usize, policies: usize, stages: usize, caps: &Caps) -> Result<(), DpError> {
    let entries = points as u128 * policies as u128 * stages as u128;
    if entries > caps.dp_entries {
        return Err(DpError::CapExceeded(format!(
            "{entries} DP entries exceed cap {}",
            caps.dp_entries
        )));
    }
    Ok(())
}

/// Backward induction over M_n (mean-field sharing): V_t(m) =
/// min_γ (ĉ_t(m,γ) + E[V_{t+1}(m_{t+1})|m,γ]), argmin ties to the lowest
/// policy index.
pub fn solve_sharing<M: MeanFieldModel + ?Sized>(
    model: &M,
    n: usize,
    caps: &Caps,
) -> Result<SharingSolution, DpError> {
    let dim = model.num_states();
    let horizon = model.horizon();
    let space = EmpiricalSpace::with_cap(n, dim, caps.enumeration)?;
    let policies = enumerate_policies_with_cap(dim, model.num_actions(), caps.enumeration)?;
    check_dp_cap(space.len(), policies.len(), horizon, caps)?;

    let mut values = vec![Vec::new(); horizon];
    let mut stage_policies = vec![Vec::new(); horizon];
    let mut v_next = vec![0.0; space.len()];
    for t in (0..horizon).rev() {
        let terminal = t + 1 == horizon;
        let results: Vec<(f64, usize)> = (0..space.len())
            .into_par_iter()
            .map(|mi| {
                let m = space.point(mi);
                let mut best_value = f64::INFINITY;
                let mut best_gamma = 0;
                for (gi, gamma) in policies.iter().enumerate() {
                    let mut q = lift_cost(model, t, &m, gamma);
                    if !terminal {
                        let pmf = next_meanfield_pmf(model, &space, space.counts(mi), t, gamma);
                        q += dot(&pmf, &v_next);
                    }
                    if q < best_value {
                        best_value = q;
                        best_gamma = gi;
                    }
                }
                (best_value, best_gamma)
            })
            .collect();
        let v_t: Vec<f64> = results.iter().map(|r| r.0).collect();
        stage_policies[t] = results.iter().map(|r| policies[r.1].clone()).collect();
        values[t] = v_t.clone();
        v_next = v_t;
    }
    let init = initial_meanfield_pmf(model.initial_dist(), &space);
    let j_star = dot(&init, &values[0]);
    Ok(SharingSolution {
        n,
        num_actions: model.num_actions(),
        space,
        values,
        policies: stage_policies,
        j_star,
    })
}

/// Exhaustive oracle: enumerate every mapping (t, m) → γ, evaluate each
/// exactly through the Markov chain over M_n, return the minimum expected
/// total cost. Only feasible for tiny instances.
pub fn brute_force_sharing_value<M: MeanFieldModel + ?Sized>(
    model: &M,
    n: usize,
    caps: &Caps,
) -> Result<f64, DpError> {
    let dim = model.num_states();
    let horizon = model.horizon();
    let space = EmpiricalSpace::with_cap(n, dim, caps.enumeration)?;
    let policies = enumerate_policies_with_cap(dim, model.num_actions(), caps.enumeration)?;
    let slots = horizon * space.len();
    let tables = (policies.len() as u128)
        .checked_pow(slots as u32)
        .unwrap_or(u128::MAX);
    if tables > caps.brute_force {
        return Err(DpError::CapExceeded(format!(
            "{tables} strategy tables exceed brute-force cap {}",
            caps.brute_force
        )));
    }

    // precompute per-(t, m, γ) lifted costs and transition rows
    let mut cost = vec![vec![vec![0.0; policies.len()]; space.len()]; horizon];
    let mut trans: Vec<Vec<Vec<Vec<f64>>>> = vec![Vec::new(); horizon];
    for t in 0..horizon {
        let mut stage_trans = Vec::with_capacity(space.len());
        for mi in 0..space.len() {
            let m = space.point(mi);
            let mut rows = Vec::with_capacity(policies.len());
            for (gi, gamma) in policies.iter().enumerate() {
                cost[t][mi][gi] = lift_cost(model, t, &m, gamma);
                if t + 1 < horizon {
                    rows.push(next_meanfield_pmf(model, &space, space.counts(mi), t, gamma));
                }
            }
            stage_trans.push(rows);
        }
        trans[t] = stage_trans;
    }

    let init = initial_meanfield_pmf(model.initial_dist(), &space);
    let base = policies.len();
    let mut digits = vec![0usize; slots]; // digits[t * |M| + mi]
    let mut best = f64::INFINITY;
    loop {
        let mut p = init.clone();
        let mut total = 0.0;
        for t in 0..horizon {
            let mut p_next = vec![0.0; space.len()];
            for (mi, &pm) in p.iter().enumerate() {
                if pm == 0.0 {
                    continue;
                }
                let gi = digits[t * space.len() + mi];
                total += pm * cost[t][mi][gi];
                if t + 1 < horizon {
                    for (j, &q) in trans[t][mi][gi].iter().enumerate() {
                        p_next[j] += pm * q;
                    }
                }
            }
            p = p_next;
        }
        best = best.min(total);

        // next table in mixed radix
        let mut carry = true;
        for d in digits.iter_mut() {
            *d += 1;
            if *d < base {
                carry = false;
                break;
            }
            *d = 0;
        }
        if carry {
            break;
        }
    }
    Ok(best)
}

/// Exhaustive search over policy sequences (γ_1..γ_T) along the
/// deterministic lifted flow from z₁. Oracle for the grid DP; feasible for
/// small |𝒢|^T only. Ties go to the lexicographically first sequence.
pub fn solve_decentralized_tree<M: MeanFieldModel + ?Sized>(
    model: &M,
    caps: &Caps,
) -> Result<DecentralizedSolution, DpError> {
    let dim = model.num_states();
    let horizon = model.horizon();
    let policies = enumerate_policies_with_cap(dim, model.num_actions(), caps.enumeration)?;
    let count = (policies.len() as u128)
        .checked_pow(horizon as u32)
        .unwrap_or(u128::MAX);
    if count > caps.brute_force {
        return Err(DpError::CapExceeded(format!(
            "{count} policy sequences exceed cap {}",
            caps.brute_force
        )));
    }
    let z1 = DistVector::unchecked(model.initial_dist().to_vec(), Flavor::Simplex);
    let mut best_value = f64::INFINITY;
    let mut best_seq: Vec<usize> = Vec::new();
    // sequence index in lex order, stage 0 most significant
    for s in 0..count as usize {
        let mut seq = vec![0usize; horizon];
        let mut rest = s;
        for t in (0..horizon).rev() {
            seq[t] = rest % policies.len();
            rest /= policies.len();
        }
        let mut z = z1.clone();
        let mut value = 0.0;
        for (t, &gi) in seq.iter().enumerate() {
            value += lift_cost(model, t, &z, &policies[gi]);
            z = lift_dynamics(model, t, &z, &policies[gi]);
        }
        if value < best_value {
            best_value = value;
            best_seq = seq;
        }
    }
    let mut trajectory = vec![z1];
    let mut chosen = Vec::with_capacity(horizon);
    for (t, &gi) in best_seq.iter().enumerate() {
        chosen.push(policies[gi].clone());
        let z = lift_dynamics(model, t, trajectory.last().unwrap(), &policies[gi]);
        trajectory.push(z);
    }
    Ok(DecentralizedSolution {
        mode: SolveMode::ExactTree,
        num_actions: model.num_actions(),
        trajectory,
        policies: chosen,
        value: best_value,
        value_tables: None,
    })
}

/// Quantized backward recursion over Q_ν with nearest-point projection of
/// the lifted flow, then a forward pass recording the argmin policies along
/// the quantized trajectory from ẑ₁ = Q(z₁).
pub fn solve_decentralized_grid<M: MeanFieldModel + ?Sized>(
    model: &M,
    nu: usize,
    caps: &Caps,
) -> Result<DecentralizedSolution, DpError> {
    let dim = model.num_states();
    let horizon = model.horizon();
    let grid = GridSpace::with_cap(nu, dim, caps.enumeration)?;
    let policies = enumerate_policies_with_cap(dim, model.num_actions(), caps.enumeration)?;
    check_dp_cap(grid.len(), policies.len(), horizon, caps)?;

    let mut tables: Vec<Vec<f64>> = vec![Vec::new(); horizon];
    let mut v_next = vec![0.0; grid.len()];
    for t in (0..horizon).rev() {
        let terminal = t + 1 == horizon;
        let v_t: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|qi| {
                let z = grid.point(qi);
                let mut best = f64::INFINITY;
                for gamma in &policies {
                    let mut q = lift_cost(model, t, &z, gamma);
                    if !terminal {
                        let image = lift_dynamics(model, t, &z, gamma);
                        q += v_next[grid.quantize_index(&image)];
                    }
                    if q < best {
                        best = q;
                    }
                }
                best
            })
            .collect();
        tables[t] = v_t.clone();
        v_next = v_t;
    }

    // forward pass along the quantized flow
    let z1 = DistVector::unchecked(model.initial_dist().to_vec(), Flavor::Simplex);
    let mut z_hat = quantize(&z1, nu);
    let value = tables[0][grid.quantize_index(&z_hat)];
    let mut trajectory = vec![z_hat.clone()];
    let mut chosen = Vec::with_capacity(horizon);
    for t in 0..horizon {
        let terminal = t + 1 == horizon;
        let mut best = f64::INFINITY;
        let mut best_gamma = 0;
        for (gi, gamma) in policies.iter().enumerate() {
            let mut q = lift_cost(model, t, &z_hat, gamma);
            if !terminal {
                let image = lift_dynamics(model, t, &z_hat, gamma);
                q += tables[t + 1][grid.quantize_index(&image)];
            }
            if q < best {
                best = q;
                best_gamma = gi;
            }
        }
        let gamma = policies[best_gamma].clone();
        z_hat = quantize(&lift_dynamics(model, t, &z_hat, &gamma), nu);
        trajectory.push(z_hat.clone());
        chosen.push(gamma);
    }
    Ok(DecentralizedSolution {
        mode: SolveMode::Grid(nu),
        num_actions: model.num_actions(),
        trajectory,
        policies: chosen,
        value,
        value_tables: Some(tables),
    })
}

/// Exact expected total cost of a strategy for the n-agent system, by
/// forward propagation of the mean-field law over M_n. Exact because the
/// per-step cost collapses to ĉ(m, γ) for homogeneous state feedback.
pub fn evaluate_strategy_exact<M: MeanFieldModel + ?Sized>(
    model: &M,
    n: usize,
    strategy: &Strategy,
    caps: &Caps,
) -> Result<f64, DpError> {
    let space = EmpiricalSpace::with_cap(n, model.num_states(), caps.enumeration)?;
    strategy.check_shape(model, n, space.len())?;
    let horizon = model.horizon();
    let mut p = initial_meanfield_pmf(model.initial_dist(), &space);
    let mut total = 0.0;
    for t in 0..horizon {
        let terminal = t + 1 == horizon;
        let contributions: Vec<(f64, Option<Vec<f64>>)> = (0..space.len())
            .into_par_iter()
            .map(|mi| {
                let pm = p[mi];
                if pm == 0.0 {
                    return (0.0, None);
                }
                let gamma = strategy.policy_at(t, mi);
                let m = space.point(mi);
                let c = pm * lift_cost(model, t, &m, gamma);
                let next = if terminal {
                    None
                } else {
                    Some(next_meanfield_pmf(model, &space, space.counts(mi), t, gamma))
                };
                (c, next)
            })
            .collect();
        let mut p_next = vec![0.0; space.len()];
        for (mi, (c, next)) in contributions.iter().enumerate() {
            total += c;
            if let Some(row) = next {
                let pm = p[mi];
                for (j, &q) in row.iter().enumerate() {
                    p_next[j] += pm * q;
                }
            }
        }
        p = p_next;
    }
    Ok(total)
}

/// Gap record: decentralized performance, sharing optimum, and their
/// difference (nonnegative up to arithmetic noise, since the decentralized
/// strategy is a feasible sharing strategy).
#[derive(Clone, Copy, Debug)]
pub struct GapRecord {
    pub j_g: f64,
    pub j_star: f64,
    pub gap: f64,
}

/// Solve the grid DP at resolution ν, evaluate its strategy exactly for n
/// agents, and compare against the sharing optimum J*.
pub fn optimality_gap<M: MeanFieldModel + ?Sized>(
    model: &M,
    n: usize,
    nu: usize,
    caps: &Caps,
) -> Result<GapRecord, DpError> {
    let decentralized = solve_decentralized_grid(model, nu, caps)?;
    let j_g = evaluate_strategy_exact(model, n, &Strategy::Decentralized(decentralized.policies), caps)?;
    let sharing = solve_sharing(model, n, caps)?;
    Ok(GapRecord { j_g, j_star: sharing.j_star, gap: j_g - sharing.j_star })
}

/// Exact lifted value V̂_t(z) by recursive minimization over policy
/// sequences; cost |𝒢|^(T−t), so a small-horizon oracle only.
pub fn exact_lifted_value<M: MeanFieldModel + ?Sized>(model: &M, t: usize, z: &DistVector) -> f64 {
    if t >= model.horizon() {
        return 0.0;
    }
    let policies =
        enumerate_policies_with_cap(model.num_states(), model.num_actions(), DEFAULT_ENUM_CAP)
            .expect("policy cap");
    policies
        .iter()
        .map(|gamma| {
            lift_cost(model, t, z, gamma)
                + exact_lifted_value(model, t + 1, &lift_dynamics(model, t, z, gamma))
        })
        .fold(f64::INFINITY, f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lift::enumerate_policies;
    use crate::model::{identity_model, random_admissible_model, ModelSpec, StageParams};
    use crate::rng::keyed_uniform;
    use crate::simplex::linf;

    fn caps() -> Caps {
        Caps::default()
    }

    #[test]
    fn next_distribution_deterministic_kernel_is_point_mass() {
        let model = identity_model(2, 1);
        let space = EmpiricalSpace::new(4, 2).unwrap();
        let gamma = LocalPolicy::new(vec![0, 1], 2);
        for mi in 0..space.len() {
            let pmf = next_meanfield_pmf(&model, &space, space.counts(mi), 0, &gamma);
            assert_eq!(pmf[mi], 1.0);
            assert_eq!(pmf.iter().filter(|&&p| p > 0.0).count(), 1);
        }
    }

    #[test]
    fn next_distribution_binomial_case() {
        // n=2, m=(1,0), P(1|0,·,m)=p: counts follow a binomial
        let p = 0.3;
        let mut model = identity_model(2, 1);
        model.stages[0].kernel_base[0][0] = vec![1.0 - p, p];
        let m = DistVector::empirical(vec![1.0, 0.0], 2).unwrap();
        let gamma = LocalPolicy::new(vec![0, 0], 2);
        let (space, pmf) = next_meanfield_distribution(&model, 2, &m, 0, &gamma).unwrap();
        let expect = |counts: &[u32]| pmf[space.rank(counts)];
        assert!((expect(&[2, 0]) - (1.0 - p) * (1.0 - p)).abs() < 1e-15);
        assert!((expect(&[1, 1]) - 2.0 * p * (1.0 - p)).abs() < 1e-15);
        assert!((expect(&[0, 2]) - p * p).abs() < 1e-15);
    }

    #[test]
    fn next_distribution_matches_monte_carlo() {
        let model = random_admissible_model(31, 2, 2, 1);
        let n = 3;
        let space = EmpiricalSpace::new(n, 2).unwrap();
        let gamma = LocalPolicy::new(vec![0, 1], 2);
        let counts = [2u32, 1u32];
        let pmf = next_meanfield_pmf(&model, &space, &counts, 0, &gamma);
        let m_values = [2.0 / 3.0, 1.0 / 3.0];
        let reps = 1_000_000u64;
        let mut freq = vec![0u64; space.len()];
        for rep in 0..reps {
            let mut next_counts = [0u32; 2];
            let mut agent = 0u64;
            for (x, &c) in counts.iter().enumerate() {
                for _ in 0..c {
                    let u = keyed_uniform(&[77, rep, agent]);
                    let y = model.sample_next(0, x, gamma.action(x), &m_values, u);
                    next_counts[y] += 1;
                    agent += 1;
                }
            }
            freq[space.rank(&next_counts)] += 1;
        }
        for (i, &p) in pmf.iter().enumerate() {
            let est = freq[i] as f64 / reps as f64;
            let sigma = (p * (1.0 - p) / reps as f64).sqrt().max(1e-9);
            assert!(
                (est - p).abs() <= 4.0 * sigma,
                "atom {i}: est {est} vs pmf {p} (sigma {sigma})"
            );
        }
    }

    #[test]
    fn first_moment_identity() {
        for seed in 0..20u64 {
            let model = random_admissible_model(seed, 3, 2, 1);
            let n = 5;
            let space = EmpiricalSpace::new(n, 3).unwrap();
            let gamma = LocalPolicy::new(vec![0, 1, 0], 2);
            for mi in (0..space.len()).step_by(3) {
                let pmf = next_meanfield_pmf(&model, &space, space.counts(mi), 0, &gamma);
                let m = space.point(mi);
                let flow = lift_dynamics(&model, 0, &m, &gamma);
                for y in 0..3 {
                    let moment: f64 = (0..space.len())
                        .map(|j| pmf[j] * space.point(j)[y])
                        .sum();
                    assert!(
                        (moment - flow[y]).abs() < 1e-10,
                        "seed {seed} mi {mi} y {y}: {moment} vs {}",
                        flow[y]
                    );
                }
            }
        }
    }

    #[test]
    fn solve_sharing_terminal_case_is_stage_min() {
        let model = random_admissible_model(41, 2, 2, 1);
        let sol = solve_sharing(&model, 4, &caps()).unwrap();
        let policies = enumerate_policies(2, 2).unwrap();
        for mi in 0..sol.space.len() {
            let m = sol.space.point(mi);
            let direct = policies
                .iter()
                .map(|g| lift_cost(&model, 0, &m, g))
                .fold(f64::INFINITY, f64::min);
            assert!((sol.values[0][mi] - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn zero_cost_model_gives_zero_values() {
        let mut model = random_admissible_model(43, 2, 2, 2);
        for stage in &mut model.stages {
            stage.cost_base = vec![vec![0.0; 2]; 2];
            stage.cost_coeff = vec![vec![vec![0.0; 2]; 2]; 2];
        }
        let sol = solve_sharing(&model, 3, &caps()).unwrap();
        assert_eq!(sol.j_star, 0.0);
        assert!(sol.values.iter().flatten().all(|&v| v == 0.0));
        assert_eq!(brute_force_sharing_value(&model, 3, &caps()).unwrap(), 0.0);
        let grid = solve_decentralized_grid(&model, 8, &caps()).unwrap();
        assert_eq!(grid.value, 0.0);
    }

    #[test]
    fn sharing_matches_brute_force_oracle() {
        let model = random_admissible_model(47, 2, 2, 2);
        let sol = solve_sharing(&model, 3, &caps()).unwrap();
        let brute = brute_force_sharing_value(&model, 3, &caps()).unwrap();
        assert!(
            (sol.j_star - brute).abs() < 1e-12,
            "dp {} vs brute {brute}",
            sol.j_star
        );
    }

    #[test]
    fn tree_identity_kernel_zero_cost() {
        let model = identity_model(2, 3);
        let sol = solve_decentralized_tree(&model, &caps()).unwrap();
        assert_eq!(sol.value, 0.0);
        for p in &sol.policies {
            assert_eq!(p.actions(), &[0, 1]);
        }
        for z in &sol.trajectory {
            assert!(linf(z, &sol.trajectory[0]) < 1e-15);
        }
    }

    #[test]
    fn tree_t1_is_single_stage_min() {
        let model = random_admissible_model(53, 2, 2, 1);
        let sol = solve_decentralized_tree(&model, &caps()).unwrap();
        let z1 = DistVector::simplex(model.initial_dist.clone()).unwrap();
        let direct = enumerate_policies(2, 2)
            .unwrap()
            .iter()
            .map(|g| lift_cost(&model, 0, &z1, g))
            .fold(f64::INFINITY, f64::min);
        assert!((sol.value - direct).abs() < 1e-14);
    }

    #[test]
    fn grid_identity_kernel_zero_cost() {
        let model = identity_model(2, 2);
        let sol = solve_decentralized_grid(&model, 16, &caps()).unwrap();
        assert_eq!(sol.value, 0.0);
        for p in &sol.policies {
            assert_eq!(p.actions(), &[0, 1]);
        }
        assert!(linf(&sol.trajectory[0], &sol.trajectory[2]) < 1e-15);
    }

    #[test]
    fn grid_value_approaches_tree_value() {
        let model = random_admissible_model(59, 2, 2, 2);
        let tree = solve_decentralized_tree(&model, &caps()).unwrap();
        let mut last = f64::INFINITY;
        for nu in [8usize, 64, 512] {
            let grid = solve_decentralized_grid(&model, nu, &caps()).unwrap();
            let delta = (grid.value - tree.value).abs();
            assert!(delta <= last + 1e-12, "nu {nu}: {delta} > {last}");
            last = delta;
        }
        assert!(last < 1e-2);
    }

    #[test]
    fn grid_value_consistent_with_trajectory_costs() {
        let model = random_admissible_model(61, 2, 2, 3);
        let sol = solve_decentralized_grid(&model, 32, &caps()).unwrap();
        let total: f64 = (0..3)
            .map(|t| lift_cost(&model, t, &sol.trajectory[t], &sol.policies[t]))
            .sum();
        assert!((total - sol.value).abs() < 1e-12);
    }

    #[test]
    fn grid_backward_values_bounded_by_remaining_cost() {
        let model = random_admissible_model(67, 2, 2, 2);
        let k = crate::model::lipschitz_constants(&model);
        let sol = solve_decentralized_grid(&model, 16, &caps()).unwrap();
        let tables = sol.value_tables.unwrap();
        for t in 0..2 {
            let bound: f64 = (t..2).map(|s| k.lmax[s]).sum();
            for &v in &tables[t] {
                assert!(v >= 0.0 && v <= bound + 1e-12, "t={t} v={v} bound={bound}");
            }
        }
    }

    #[test]
    fn evaluate_sharing_strategy_recovers_j_star() {
        let model = random_admissible_model(71, 2, 2, 2);
        let sol = solve_sharing(&model, 4, &caps()).unwrap();
        let strategy = Strategy::MeanFieldFeedback { n: 4, tables: sol.policies.clone() };
        let value = evaluate_strategy_exact(&model, 4, &strategy, &caps()).unwrap();
        assert!((value - sol.j_star).abs() < 1e-12);
    }

    #[test]
    fn evaluate_single_agent_reduces_to_mdp() {
        // n=1: the mean-field is the state indicator; compare against a
        // direct single-chain evaluation
        let model = random_admissible_model(73, 2, 2, 2);
        let gammas = vec![LocalPolicy::new(vec![0, 1], 2), LocalPolicy::new(vec![1, 0], 2)];
        let strategy = Strategy::Decentralized(gammas.clone());
        let value = evaluate_strategy_exact(&model, 1, &strategy, &caps()).unwrap();
        let mut p = model.initial_dist.clone();
        let mut direct = 0.0;
        for t in 0..2 {
            let mut p_next = vec![0.0; 2];
            for x in 0..2 {
                let vertex: Vec<f64> = (0..2).map(|y| if y == x { 1.0 } else { 0.0 }).collect();
                let u = gammas[t].action(x);
                direct += p[x] * model.stage_cost(t, x, u, &vertex);
                let row = model.kernel_row(t, x, u, &vertex);
                for y in 0..2 {
                    p_next[y] += p[x] * row[y];
                }
            }
            p = p_next;
        }
        assert!((value - direct).abs() < 1e-12);
    }

    #[test]
    fn gap_zero_for_identity_model() {
        let model = identity_model(2, 2);
        let rec = optimality_gap(&model, 4, 16, &caps()).unwrap();
        assert_eq!(rec.j_g, 0.0);
        assert_eq!(rec.j_star, 0.0);
    }

    #[test]
    fn gap_nonnegative_on_random_models() {
        for seed in [79u64, 83, 89] {
            let model = random_admissible_model(seed, 2, 2, 2);
            let rec = optimality_gap(&model, 6, 32, &caps()).unwrap();
            assert!(rec.gap >= -1e-10, "seed {seed}: gap {}", rec.gap);
        }
    }

    #[test]
    fn invalid_strategy_shapes_rejected() {
        let model = random_admissible_model(97, 2, 2, 2);
        let strategy = Strategy::Decentralized(vec![LocalPolicy::new(vec![0, 1], 2)]);
        assert!(matches!(
            evaluate_strategy_exact(&model, 2, &strategy, &caps()),
            Err(DpError::InvalidStrategy(_))
        ));
    }

    #[test]
    fn caps_are_enforced() {
        let model = random_admissible_model(101, 2, 2, 4);
        let tight = Caps { enumeration: 2, ..Caps::default() };
        assert!(matches!(solve_sharing(&model, 8, &tight), Err(DpError::Simplex(_))));
        let tight = Caps { brute_force: 2, ..Caps::default() };
        assert!(matches!(
            solve_decentralized_tree(&model, &tight),
            Err(DpError::CapExceeded(_))
        ));
        let tight = Caps { dp_entries: 2, ..Caps::default() };
        assert!(matches!(
            solve_decentralized_grid(&model, 8, &tight),
            Err(DpError::CapExceeded(_))
        ));
    }

    #[test]
    fn exact_lifted_value_matches_tree_at_z1() {
        let model = random_admissible_model(103, 2, 2, 2);
        let tree = solve_decentralized_tree(&model, &caps()).unwrap();
        let z1 = DistVector::simplex(model.initial_dist.clone()).unwrap();
        assert!((exact_lifted_value(&model, 0, &z1) - tree.value).abs() < 1e-12);
    }

    #[test]
    fn convolution_dim3_matches_dim2_embedding() {
        // a 3-state model whose third state is unreachable behaves like the
        // 2-state fast path
        let model2 = random_admissible_model(107, 2, 2, 1);
        let mut kernel_base = vec![vec![vec![0.0; 3]; 2]; 3];
        let mut kernel_coeff = vec![vec![vec![vec![0.0; 3]; 3]; 2]; 3];
        let mut cost_base = vec![vec![0.0; 2]; 3];
        let mut cost_coeff = vec![vec![vec![0.0; 3]; 2]; 3];
        for x in 0..2 {
            for u in 0..2 {
                kernel_base[x][u][..2].copy_from_slice(&model2.stages[0].kernel_base[x][u]);
                cost_base[x][u] = model2.stages[0].cost_base[x][u];
                for xp in 0..2 {
                    kernel_coeff[x][u][xp][..2]
                        .copy_from_slice(&model2.stages[0].kernel_coeff[x][u][xp]);
                    cost_coeff[x][u][xp] = model2.stages[0].cost_coeff[x][u][xp];
                }
            }
        }
        for u in 0..2 {
            kernel_base[2][u][2] = 1.0;
        }
        let model3 = ModelSpec {
            num_states: 3,
            num_actions: 2,
            horizon: 1,
            initial_dist: vec![model2.initial_dist[0], model2.initial_dist[1], 0.0],
            stages: vec![StageParams { kernel_base, kernel_coeff, cost_base, cost_coeff }],
        };
        let n = 4;
        let space2 = EmpiricalSpace::new(n, 2).unwrap();
        let space3 = EmpiricalSpace::new(n, 3).unwrap();
        let gamma2 = LocalPolicy::new(vec![0, 1], 2);
        let gamma3 = LocalPolicy::new(vec![0, 1, 0], 2);
        let pmf2 = next_meanfield_pmf(&model2, &space2, &[3, 1], 0, &gamma2);
        let pmf3 = next_meanfield_pmf(&model3, &space3, &[3, 1, 0], 0, &gamma3);
        for i2 in 0..space2.len() {
            let c2 = space2.counts(i2);
            let i3 = space3.rank(&[c2[0], c2[1], 0]);
            assert!((pmf2[i2] - pmf3[i3]).abs() < 1e-12);
        }
    }
}
