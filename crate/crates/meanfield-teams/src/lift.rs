//! Local policies and the lifted (infinite-population) operators: the
//! deterministic mean-field flow f̂, the lifted cost ĉ, and the realized
//! update f̄ expressed through the empirical noise distribution.

use thiserror::Error;

use crate::model::{FunctionalModel, MeanFieldModel};
use crate::simplex::{DistVector, Flavor};

/// Default cap on |U|^|X| when enumerating policies.
pub const DEFAULT_POLICY_CAP: usize = 1_000_000;

#[derive(Debug, Error)]
pub enum LiftError {
    #[error("policy space of {count} mappings exceeds cap {cap}")]
    PolicyCap { count: u128, cap: usize },
    #[error("noise empirical is not a pmf: {0}")]
    BadNoiseEmpirical(String),
}

/// A map γ: X → U applied identically by every agent at one stage.
///
/// Policies are totally ordered by their base-|U| index with state 0 as the
/// most significant digit; that order is the tie-break rule everywhere.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct LocalPolicy {
    actions: Vec<usize>,
}

impl LocalPolicy {
    pub fn new(actions: Vec<usize>, num_actions: usize) -> Self {
        assert!(actions.iter().all(|&u| u < num_actions), "action out of range");
        Self { actions }
    }

    pub fn action(&self, x: usize) -> usize {
        self.actions[x]
    }

    pub fn actions(&self) -> &[usize] {
        &self.actions
    }

    pub fn num_states(&self) -> usize {
        self.actions.len()
    }

    /// Base-|U| encoding, state 0 most significant.
    pub fn index(&self, num_actions: usize) -> usize {
        self.actions.iter().fold(0, |acc, &u| acc * num_actions + u)
    }

    pub fn from_index(index: usize, num_states: usize, num_actions: usize) -> Self {
        let mut actions = vec![0; num_states];
        let mut rest = index;
        for x in (0..num_states).rev() {
            actions[x] = rest % num_actions;
            rest /= num_actions;
        }
        assert_eq!(rest, 0, "policy index out of range");
        Self { actions }
    }
}

/// All |U|^|X| local policies in increasing index order.
pub fn enumerate_policies(
    num_states: usize,
    num_actions: usize,
) -> Result<Vec<LocalPolicy>, LiftError> {
    enumerate_policies_with_cap(num_states, num_actions, DEFAULT_POLICY_CAP)
}

pub fn enumerate_policies_with_cap(
    num_states: usize,
    num_actions: usize,
    cap: usize,
) -> Result<Vec<LocalPolicy>, LiftError> {
    assert!(num_states >= 1 && num_actions >= 1);
    let count = (num_actions as u128)
        .checked_pow(num_states as u32)
        .unwrap_or(u128::MAX);
    if count > cap as u128 {
        return Err(LiftError::PolicyCap { count, cap });
    }
    Ok((0..count as usize)
        .map(|i| LocalPolicy::from_index(i, num_states, num_actions))
        .collect())
}

/// The lifted flow f̂_t(z, γ)(y) = Σ_x z(x)·P_t(y|x,γ(x),z).
///
/// Mass is preserved: the output sums to the input sum (within f64
/// accumulation), so simplex points map to simplex points.
pub fn lift_dynamics<M: MeanFieldModel + ?Sized>(
    model: &M,
    t: usize,
    z: &DistVector,
    gamma: &LocalPolicy,
) -> DistVector {
    let zv = z.values();
    let mut out = vec![0.0; model.num_states()];
    for (x, &zx) in zv.iter().enumerate() {
        if zx != 0.0 {
            let row = model.kernel_row(t, x, gamma.action(x), zv);
            for (y, &p) in row.iter().enumerate() {
                out[y] += zx * p;
            }
        }
    }
    let flavor = match z.flavor() {
        Flavor::Simplex | Flavor::Empirical(_) => Flavor::Simplex,
        _ => Flavor::Box,
    };
    DistVector::unchecked(out, flavor)
}

/// The lifted cost ĉ_t(z, γ) = Σ_x z(x)·ℓ_t(x,γ(x),z).
pub fn lift_cost<M: MeanFieldModel + ?Sized>(
    model: &M,
    t: usize,
    z: &DistVector,
    gamma: &LocalPolicy,
) -> f64 {
    let zv = z.values();
    zv.iter()
        .enumerate()
        .filter(|(_, &zx)| zx != 0.0)
        .map(|(x, &zx)| zx * model.stage_cost(t, x, gamma.action(x), zv))
        .sum()
}

/// The realized update f̄_t(m, γ, w)(y) = Σ_x Σ_w 1(f_t(x,γ(x),w,m)=y)
/// · m(x) · noise_emp(w), where `noise_emp` is the empirical pmf of the
/// realized noises. Substituting the true noise pmf recovers f̂.
pub fn factorized_update(
    fm: &FunctionalModel,
    t: usize,
    m: &DistVector,
    gamma: &LocalPolicy,
    noise_emp: &DistVector,
) -> Result<DistVector, LiftError> {
    if noise_emp.dim() != fm.num_noises() {
        return Err(LiftError::BadNoiseEmpirical(format!(
            "length {} != noise alphabet size {}",
            noise_emp.dim(),
            fm.num_noises()
        )));
    }
    if !noise_emp.is_probability(1e-12) {
        return Err(LiftError::BadNoiseEmpirical("entries do not form a pmf".into()));
    }
    let mv = m.values();
    let mut out = vec![0.0; fm.num_states];
    for (x, &mx) in mv.iter().enumerate() {
        if mx == 0.0 {
            continue;
        }
        for w in 0..fm.num_noises() {
            let pw = noise_emp[w];
            if pw > 0.0 {
                let y = fm.next_state(t, x, gamma.action(x), w, mv);
                out[y] += mx * pw;
            }
        }
    }
    Ok(DistVector::unchecked(out, Flavor::Simplex))
}
