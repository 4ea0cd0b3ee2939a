//! Mean-field coupled Markov chain models.
//!
//! Two representations are supported. [`ModelSpec`] is the file-loadable
//! family where kernel and cost are affine in the mean-field: vertex checks
//! then certify admissibility on the whole simplex, and Lipschitz constants
//! are computable in closed form. [`FunctionalModel`] carries user code
//! `f_t(x, u, w, z)` over a finite noise alphabet for dynamics that do not
//! fit the affine family.
//!
//! Stages are indexed `0..horizon` throughout.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{inverse_cdf, KeyedStream};
use crate::simplex::{DistVector, Flavor, SUM_TOL};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("i/o error reading model: {0}")]
    Io(#[from] std::io::Error),
    #[error("model file does not parse: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("invalid functional model: {0}")]
    Functional(String),
}

/// Common surface of both model representations, used by the lifted
/// operators, the dynamic programs, and the simulator.
pub trait MeanFieldModel: Sync {
    fn num_states(&self) -> usize;
    fn num_actions(&self) -> usize;
    fn horizon(&self) -> usize;
    fn initial_dist(&self) -> &[f64];

    /// Transition row P_t(· | x, u, z), defined on all of I(X).
    fn kernel_row(&self, t: usize, x: usize, u: usize, z: &[f64]) -> Vec<f64>;

    /// Per-step cost ℓ_t(x, u, z).
    fn stage_cost(&self, t: usize, x: usize, u: usize, z: &[f64]) -> f64;

    /// Sample the next state from one uniform draw via inverse CDF over the
    /// kernel row with fixed state ordering.
    fn sample_next(&self, t: usize, x: usize, u: usize, z: &[f64], unif: f64) -> usize {
        inverse_cdf(&self.kernel_row(t, x, u, z), unif)
    }
}

/// Per-stage parameters of the affine family.
///
/// Kernel: `P_t(y|x,u,z) = kernel_base[x][u][y] + Σ_x' z(x')·kernel_coeff[x][u][x'][y]`.
/// Cost: `ℓ_t(x,u,z) = cost_base[x][u] + Σ_x' z(x')·cost_coeff[x][u][x']`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StageParams {
    pub kernel_base: Vec<Vec<Vec<f64>>>,
    pub kernel_coeff: Vec<Vec<Vec<Vec<f64>>>>,
    pub cost_base: Vec<Vec<f64>>,
    pub cost_coeff: Vec<Vec<Vec<f64>>>,
}

/// A finite-state, finite-action, finite-horizon model with kernel and cost
/// affine in the mean-field.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelSpec {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub initial_dist: Vec<f64>,
    /// One block per stage (broadcast from a single block when the file is
    /// time-invariant).
    pub stages: Vec<StageParams>,
}

/// On-disk schema; `stages` has length 1 when `time_invariant`.
#[derive(Debug, Serialize, Deserialize)]
struct ModelFile {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    initial_dist: Vec<f64>,
    time_invariant: bool,
    stages: Vec<StageParams>,
}

/// Load a model file, check array shapes, and broadcast time-invariant
/// files to `horizon` stage blocks. Admissibility (row sums, nonnegativity)
/// is checked separately by [`validate_model`].
pub fn load_model(path: impl AsRef<Path>) -> Result<ModelSpec, ModelError> {
    let text = std::fs::read_to_string(path)?;
    let file: ModelFile = serde_json::from_str(&text)?;
    model_from_file(file)
}

fn model_from_file(file: ModelFile) -> Result<ModelSpec, ModelError> {
    if file.num_states == 0 || file.num_actions == 0 || file.horizon == 0 {
        return Err(ModelError::Shape(
            "num_states, num_actions, and horizon must all be >= 1".into(),
        ));
    }
    let expected_blocks = if file.time_invariant { 1 } else { file.horizon };
    if file.stages.len() != expected_blocks {
        return Err(ModelError::Shape(format!(
            "expected {expected_blocks} stage block(s), found {}",
            file.stages.len()
        )));
    }
    if file.initial_dist.len() != file.num_states {
        return Err(ModelError::Shape(format!(
            "initial_dist has length {}, expected {}",
            file.initial_dist.len(),
            file.num_states
        )));
    }
    for (t, stage) in file.stages.iter().enumerate() {
        check_stage_shape(stage, file.num_states, file.num_actions, t)?;
    }
    let stages = if file.time_invariant {
        vec![file.stages[0].clone(); file.horizon]
    } else {
        file.stages
    };
    Ok(ModelSpec {
        num_states: file.num_states,
        num_actions: file.num_actions,
        horizon: file.horizon,
        initial_dist: file.initial_dist,
        stages,
    })
}

fn check_stage_shape(
    stage: &StageParams,
    nx: usize,
    nu: usize,
    t: usize,
) -> Result<(), ModelError> {
    let shape = |ok: bool, what: &str| {
        if ok {
            Ok(())
        } else {
            Err(ModelError::Shape(format!("stage {t}: {what} has wrong shape")))
        }
    };
    shape(stage.kernel_base.len() == nx, "kernel_base")?;
    for row_u in &stage.kernel_base {
        shape(row_u.len() == nu, "kernel_base")?;
        for row in row_u {
            shape(row.len() == nx, "kernel_base")?;
        }
    }
    shape(stage.kernel_coeff.len() == nx, "kernel_coeff")?;
    for a in &stage.kernel_coeff {
        shape(a.len() == nu, "kernel_coeff")?;
        for b in a {
            shape(b.len() == nx, "kernel_coeff")?;
            for c in b {
                shape(c.len() == nx, "kernel_coeff")?;
            }
        }
    }
    shape(stage.cost_base.len() == nx, "cost_base")?;
    for row in &stage.cost_base {
        shape(row.len() == nu, "cost_base")?;
    }
    shape(stage.cost_coeff.len() == nx, "cost_coeff")?;
    for a in &stage.cost_coeff {
        shape(a.len() == nu, "cost_coeff")?;
        for b in a {
            shape(b.len() == nx, "cost_coeff")?;
        }
    }
    Ok(())
}

/// Write a model back out in the file schema (always time-varying form).
pub fn save_model(spec: &ModelSpec, path: impl AsRef<Path>) -> Result<(), ModelError> {
    let file = ModelFile {
        num_states: spec.num_states,
        num_actions: spec.num_actions,
        horizon: spec.horizon,
        initial_dist: spec.initial_dist.clone(),
        time_invariant: false,
        stages: spec.stages.clone(),
    };
    let text = serde_json::to_string_pretty(&file)?;
    std::fs::write(path, text)?;
    Ok(())
}

/// Result of checking a model against the admissibility invariants.
/// Empty report means the model is admissible.
#[derive(Clone, Debug, Default)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_admissible(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check every admissibility invariant, reporting each violation with its
/// indices. Violations are report entries, never errors.
pub fn validate_model(spec: &ModelSpec) -> ValidationReport {
    let mut report = ValidationReport::default();
    let nx = spec.num_states;
    let nu = spec.num_actions;

    for (i, &v) in spec.initial_dist.iter().enumerate() {
        if !(0.0..=1.0 + SUM_TOL).contains(&v) {
            report
                .violations
                .push(format!("initial_dist[{i}] = {v} outside [0, 1]"));
        }
    }
    let s: f64 = spec.initial_dist.iter().sum();
    if (s - 1.0).abs() > SUM_TOL {
        report.violations.push(format!("initial_dist sums to {s}, not 1"));
    }

    for (t, stage) in spec.stages.iter().enumerate() {
        for x in 0..nx {
            for u in 0..nu {
                let row_sum: f64 = stage.kernel_base[x][u].iter().sum();
                if (row_sum - 1.0).abs() > SUM_TOL {
                    report.violations.push(format!(
                        "kernel base row-sum {row_sum} != 1 at t={t}, x={x}, u={u}"
                    ));
                }
                for xp in 0..nx {
                    let coeff_sum: f64 = stage.kernel_coeff[x][u][xp].iter().sum();
                    if coeff_sum.abs() > SUM_TOL {
                        report.violations.push(format!(
                            "kernel coefficient row-sum nonzero ({coeff_sum}) at t={t}, x={x}, u={u}, x'={xp}"
                        ));
                    }
                    for y in 0..nx {
                        let vertex = stage.kernel_base[x][u][y] + stage.kernel_coeff[x][u][xp][y];
                        if vertex < -SUM_TOL {
                            report.violations.push(format!(
                                "negative kernel at simplex vertex: {vertex} at t={t}, x={x}, u={u}, x'={xp}, y={y}"
                            ));
                        }
                    }
                    let vertex_cost = stage.cost_base[x][u] + stage.cost_coeff[x][u][xp];
                    if vertex_cost < -SUM_TOL {
                        report.violations.push(format!(
                            "negative cost at simplex vertex: {vertex_cost} at t={t}, x={x}, u={u}, x'={xp}"
                        ));
                    }
                }
            }
        }
    }
    report
}

impl ModelSpec {
    fn kernel_row_values(&self, t: usize, x: usize, u: usize, z: &[f64]) -> Vec<f64> {
        let stage = &self.stages[t];
        let mut row = stage.kernel_base[x][u].clone();
        for (xp, &zx) in z.iter().enumerate() {
            if zx != 0.0 {
                for (y, r) in row.iter_mut().enumerate() {
                    *r += zx * stage.kernel_coeff[x][u][xp][y];
                }
            }
        }
        row
    }
}

impl MeanFieldModel for ModelSpec {
    fn num_states(&self) -> usize {
        self.num_states
    }
    fn num_actions(&self) -> usize {
        self.num_actions
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }
    fn kernel_row(&self, t: usize, x: usize, u: usize, z: &[f64]) -> Vec<f64> {
        self.kernel_row_values(t, x, u, z)
    }
    fn stage_cost(&self, t: usize, x: usize, u: usize, z: &[f64]) -> f64 {
        let stage = &self.stages[t];
        let mut c = stage.cost_base[x][u];
        for (xp, &zx) in z.iter().enumerate() {
            c += zx * stage.cost_coeff[x][u][xp];
        }
        c
    }
}

/// Evaluate the transition row P_t(·|x,u,z). When `z` is a probability
/// vector the result is one too.
pub fn kernel_eval(model: &ModelSpec, t: usize, x: usize, u: usize, z: &DistVector) -> DistVector {
    let row = model.kernel_row_values(t, x, u, z.values());
    wrap_row(row, z)
}

fn wrap_row(row: Vec<f64>, z: &DistVector) -> DistVector {
    let flavor = match z.flavor() {
        Flavor::Simplex | Flavor::Empirical(_) => Flavor::Simplex,
        _ => Flavor::Box,
    };
    DistVector::unchecked(row, flavor)
}

/// Evaluate the per-step cost ℓ_t(x,u,z).
pub fn cost_eval(model: &ModelSpec, t: usize, x: usize, u: usize, z: &DistVector) -> f64 {
    model.stage_cost(t, x, u, z.values())
}

type DynamicsFn = dyn Fn(usize, usize, usize, usize, &[f64]) -> usize + Send + Sync;
type CostFn = dyn Fn(usize, usize, usize, &[f64]) -> f64 + Send + Sync;

/// A model given by explicit dynamics `f_t(x, u, w, z)` over a finite noise
/// alphabet with pmf `noise_pmf`, plus a cost callback.
#[derive(Clone)]
pub struct FunctionalModel {
    pub num_states: usize,
    pub num_actions: usize,
    pub horizon: usize,
    pub initial_dist: Vec<f64>,
    pub noise_pmf: Vec<f64>,
    dynamics: Arc<DynamicsFn>,
    cost: Arc<CostFn>,
}

impl FunctionalModel {
    /// `dynamics(t, x, u, w, z) -> y` must return a valid state for every
    /// input; this is asserted at each call.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        initial_dist: Vec<f64>,
        noise_pmf: Vec<f64>,
        dynamics: impl Fn(usize, usize, usize, usize, &[f64]) -> usize + Send + Sync + 'static,
        cost: impl Fn(usize, usize, usize, &[f64]) -> f64 + Send + Sync + 'static,
    ) -> Result<Self, ModelError> {
        if num_states == 0 || num_actions == 0 || horizon == 0 {
            return Err(ModelError::Functional("empty state/action space or horizon".into()));
        }
        for (label, pmf, len) in [
            ("initial_dist", &initial_dist, num_states),
            ("noise_pmf", &noise_pmf, noise_pmf.len().max(1)),
        ] {
            if pmf.len() != len {
                return Err(ModelError::Functional(format!("{label} has wrong length")));
            }
            if pmf.iter().any(|&p| !(0.0..=1.0 + SUM_TOL).contains(&p)) {
                return Err(ModelError::Functional(format!("{label} entry outside [0, 1]")));
            }
            let s: f64 = pmf.iter().sum();
            if (s - 1.0).abs() > SUM_TOL {
                return Err(ModelError::Functional(format!("{label} sums to {s}, not 1")));
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            horizon,
            initial_dist,
            noise_pmf,
            dynamics: Arc::new(dynamics),
            cost: Arc::new(cost),
        })
    }

    pub fn num_noises(&self) -> usize {
        self.noise_pmf.len()
    }

    /// Apply the dynamics callback, asserting totality.
    pub fn next_state(&self, t: usize, x: usize, u: usize, w: usize, z: &[f64]) -> usize {
        let y = (self.dynamics)(t, x, u, w, z);
        assert!(
            y < self.num_states,
            "dynamics returned state {y} >= num_states {} at t={t}, x={x}, u={u}, w={w}",
            self.num_states
        );
        y
    }
}

impl MeanFieldModel for FunctionalModel {
    fn num_states(&self) -> usize {
        self.num_states
    }
    fn num_actions(&self) -> usize {
        self.num_actions
    }
    fn horizon(&self) -> usize {
        self.horizon
    }
    fn initial_dist(&self) -> &[f64] {
        &self.initial_dist
    }
    fn kernel_row(&self, t: usize, x: usize, u: usize, z: &[f64]) -> Vec<f64> {
        let mut row = vec![0.0; self.num_states];
        for (w, &pw) in self.noise_pmf.iter().enumerate() {
            if pw > 0.0 {
                row[self.next_state(t, x, u, w, z)] += pw;
            }
        }
        row
    }
    fn stage_cost(&self, t: usize, x: usize, u: usize, z: &[f64]) -> f64 {
        (self.cost)(t, x, u, z)
    }
    fn sample_next(&self, t: usize, x: usize, u: usize, z: &[f64], unif: f64) -> usize {
        let w = inverse_cdf(&self.noise_pmf, unif);
        self.next_state(t, x, u, w, z)
    }
}

/// Pushforward of the noise pmf through the dynamics: the kernel row
/// induced by a functional model.
pub fn kernel_from_functional(
    fm: &FunctionalModel,
    t: usize,
    x: usize,
    u: usize,
    z: &DistVector,
) -> DistVector {
    let row = fm.kernel_row(t, x, u, z.values());
    wrap_row(row, z)
}

/// Stage-wise Lipschitz constants of an admissible model, valid on all of
/// I(X). K5 and Kv follow the backward recursion K_t = K4_t + K_{t+1}·K3_t.
#[derive(Clone, Debug)]
pub struct LipschitzConstants {
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    pub k3: Vec<f64>,
    pub k4: Vec<f64>,
    pub k5: Vec<f64>,
    pub kv: Vec<f64>,
    pub lmax: Vec<f64>,
}

/// Compute the Lipschitz-constant ledger of an admissible model.
pub fn lipschitz_constants(model: &ModelSpec) -> LipschitzConstants {
    let horizon = model.horizon;
    let nx = model.num_states;
    let nu = model.num_actions;
    let mut k1 = vec![0.0f64; horizon];
    let mut k2 = vec![0.0f64; horizon];
    let mut lmax = vec![0.0f64; horizon];
    for (t, stage) in model.stages.iter().enumerate() {
        for x in 0..nx {
            for u in 0..nu {
                for y in 0..nx {
                    let col: f64 = (0..nx).map(|xp| stage.kernel_coeff[x][u][xp][y].abs()).sum();
                    k1[t] = k1[t].max(col);
                }
                let c_abs: f64 = (0..nx).map(|xp| stage.cost_coeff[x][u][xp].abs()).sum();
                k2[t] = k2[t].max(c_abs);
                for xp in 0..nx {
                    lmax[t] = lmax[t].max(stage.cost_base[x][u] + stage.cost_coeff[x][u][xp]);
                }
            }
        }
    }
    let k3: Vec<f64> = k1.iter().map(|&v| nx as f64 * (1.0 + v)).collect();
    let k4: Vec<f64> = k2
        .iter()
        .zip(&lmax)
        .map(|(&c, &l)| nx as f64 * (l + c))
        .collect();
    let mut k5 = vec![0.0; horizon];
    k5[horizon - 1] = k4[horizon - 1];
    for t in (0..horizon - 1).rev() {
        k5[t] = k4[t] + k5[t + 1] * k3[t];
    }
    let kv = k5.clone();
    LipschitzConstants { k1, k2, k3, k4, k5, kv, lmax }
}

/// Generate a random admissible model: kernel rows are convex mixtures of
/// two random stochastic rows (admissible by construction), costs are
/// affine with nonnegative vertex values.
pub fn random_admissible_model(
    seed: u64,
    num_states: usize,
    num_actions: usize,
    horizon: usize,
) -> ModelSpec {
    let mut rng = KeyedStream::new(&[seed, 0x6d6f64656c]);
    let prob_row = |rng: &mut KeyedStream| -> Vec<f64> {
        let mut row: Vec<f64> = (0..num_states)
            .map(|_| -rng.next_uniform().max(1e-300).ln())
            .collect();
        let s: f64 = row.iter().sum();
        for v in &mut row {
            *v /= s;
        }
        row
    };
    let mut stages = Vec::with_capacity(horizon);
    for _ in 0..horizon {
        let mut kernel_base = vec![vec![vec![0.0; num_states]; num_actions]; num_states];
        let mut kernel_coeff =
            vec![vec![vec![vec![0.0; num_states]; num_states]; num_actions]; num_states];
        let mut cost_base = vec![vec![0.0; num_actions]; num_states];
        let mut cost_coeff = vec![vec![vec![0.0; num_states]; num_actions]; num_states];
        for x in 0..num_states {
            for u in 0..num_actions {
                let base = prob_row(&mut rng);
                kernel_base[x][u] = base.clone();
                for xp in 0..num_states {
                    let alt = prob_row(&mut rng);
                    let beta = rng.next_range(0.0, 0.9);
                    for y in 0..num_states {
                        kernel_coeff[x][u][xp][y] = beta * (alt[y] - base[y]);
                    }
                }
                cost_base[x][u] = rng.next_range(0.5, 1.5);
                for xp in 0..num_states {
                    cost_coeff[x][u][xp] = rng.next_range(-0.5, 0.5);
                }
            }
        }
        stages.push(StageParams { kernel_base, kernel_coeff, cost_base, cost_coeff });
    }
    let initial = {
        let mut row: Vec<f64> = (0..num_states)
            .map(|_| -rng.next_uniform().max(1e-300).ln())
            .collect();
        let s: f64 = row.iter().sum();
        for v in &mut row {
            *v /= s;
        }
        row
    };
    ModelSpec {
        num_states,
        num_actions,
        horizon,
        initial_dist: initial,
        stages,
    }
}

/// Identity-kernel model with mismatch cost 1(u != x); admissible and
/// useful as a known-zero-cost fixture.
pub fn identity_model(num_states: usize, horizon: usize) -> ModelSpec {
    let mut kernel_base = vec![vec![vec![0.0; num_states]; num_states]; num_states];
    let mut cost_base = vec![vec![0.0; num_states]; num_states];
    for x in 0..num_states {
        for u in 0..num_states {
            kernel_base[x][u][x] = 1.0;
            cost_base[x][u] = if u == x { 0.0 } else { 1.0 };
        }
    }
    let stage = StageParams {
        kernel_base,
        kernel_coeff: vec![
            vec![vec![vec![0.0; num_states]; num_states]; num_states];
            num_states
        ],
        cost_base,
        cost_coeff: vec![vec![vec![0.0; num_states]; num_states]; num_states],
    };
    ModelSpec {
        num_states,
        num_actions: num_states,
        horizon,
        initial_dist: vec![1.0 / num_states as f64; num_states],
        stages: vec![stage; horizon],
    }
}
