//! The four distribution spaces: the probability simplex Δ(X), empirical
//! distributions M_n, the unit box I(X), and the uniform grid Q_ν, together
//! with enumeration, quantization, and the sup distance.

use thiserror::Error;

/// Tolerance for sum-to-one and multiple-of-1/n checks.
pub const SUM_TOL: f64 = 1e-12;

/// Default cap on enumerated point counts.
pub const DEFAULT_ENUM_CAP: usize = 10_000_000;

#[derive(Debug, Error)]
pub enum SimplexError {
    #[error("vector is not in the required space: {0}")]
    InvalidVector(String),
    #[error("population must be nonempty")]
    EmptyPopulation,
    #[error("enumeration of {count} points exceeds cap {cap}")]
    EnumerationCap { count: u128, cap: usize },
    #[error("state {state} out of range for dimension {dim}")]
    StateOutOfRange { state: usize, dim: usize },
}

/// Which space a [`DistVector`] lives in.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Flavor {
    /// Δ(X): nonnegative, sums to one.
    Simplex,
    /// M_n: entries are multiples of 1/n, sums to one.
    Empirical(usize),
    /// Q_ν: entries are multiples of 1/ν; sum unconstrained.
    Grid(usize),
    /// I(X): entries in [0, 1].
    Box,
}

/// A length-|X| vector of reals in [0, 1], tagged with its space.
#[derive(Clone, Debug, PartialEq)]
pub struct DistVector {
    values: Vec<f64>,
    flavor: Flavor,
}

impl DistVector {
    pub fn simplex(values: Vec<f64>) -> Result<Self, SimplexError> {
        check_box(&values)?;
        check_sum_one(&values)?;
        Ok(Self { values, flavor: Flavor::Simplex })
    }

    pub fn empirical(values: Vec<f64>, n: usize) -> Result<Self, SimplexError> {
        check_box(&values)?;
        check_sum_one(&values)?;
        check_multiples(&values, n)?;
        Ok(Self { values, flavor: Flavor::Empirical(n) })
    }

    pub fn grid(values: Vec<f64>, nu: usize) -> Result<Self, SimplexError> {
        check_box(&values)?;
        check_multiples(&values, nu)?;
        Ok(Self { values, flavor: Flavor::Grid(nu) })
    }

    pub fn box_point(values: Vec<f64>) -> Result<Self, SimplexError> {
        check_box(&values)?;
        Ok(Self { values, flavor: Flavor::Box })
    }

    /// Construct without checks; used where the invariant is structural
    /// (e.g. outputs of exact convolutions).
    pub(crate) fn unchecked(values: Vec<f64>, flavor: Flavor) -> Self {
        Self { values, flavor }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn flavor(&self) -> Flavor {
        self.flavor
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Whether the vector is a probability vector within `tol`.
    pub fn is_probability(&self, tol: f64) -> bool {
        self.values.iter().all(|&v| v >= -tol)
            && (self.values.iter().sum::<f64>() - 1.0).abs() <= tol
    }
}

impl std::ops::Index<usize> for DistVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

fn check_box(values: &[f64]) -> Result<(), SimplexError> {
    for (i, &v) in values.iter().enumerate() {
        if !v.is_finite() || !(-SUM_TOL..=1.0 + SUM_TOL).contains(&v) {
            return Err(SimplexError::InvalidVector(format!(
                "entry {i} = {v} outside [0, 1]"
            )));
        }
    }
    Ok(())
}

fn check_sum_one(values: &[f64]) -> Result<(), SimplexError> {
    let s: f64 = values.iter().sum();
    if (s - 1.0).abs() > SUM_TOL {
        return Err(SimplexError::InvalidVector(format!("sum {s} != 1")));
    }
    Ok(())
}

fn check_multiples(values: &[f64], denom: usize) -> Result<(), SimplexError> {
    if denom == 0 {
        return Err(SimplexError::InvalidVector("denominator 0".into()));
    }
    for (i, &v) in values.iter().enumerate() {
        let scaled = v * denom as f64;
        if (scaled - scaled.round()).abs() > SUM_TOL * denom as f64 {
            return Err(SimplexError::InvalidVector(format!(
                "entry {i} = {v} is not a multiple of 1/{denom}"
            )));
        }
    }
    Ok(())
}

/// Empirical distribution of a population's states.
pub fn mean_field_of(states: &[usize], dim: usize) -> Result<DistVector, SimplexError> {
    if states.is_empty() {
        return Err(SimplexError::EmptyPopulation);
    }
    let n = states.len();
    let mut counts = vec![0usize; dim];
    for &s in states {
        if s >= dim {
            return Err(SimplexError::StateOutOfRange { state: s, dim });
        }
        counts[s] += 1;
    }
    let values = counts.iter().map(|&c| c as f64 / n as f64).collect();
    Ok(DistVector::unchecked(values, Flavor::Empirical(n)))
}

fn binomial(n: u128, k: u128) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)?;
        acc /= i + 1;
    }
    Some(acc)
}

/// Number of points in M_n over `dim` states: C(n+dim-1, dim-1).
pub fn empirical_count(n: usize, dim: usize) -> Option<u128> {
    binomial(n as u128 + dim as u128 - 1, dim as u128 - 1)
}

/// The space M_n: count vectors over `dim` states summing to `n`, in
/// lexicographic order, with O(dim·n) ranking.
#[derive(Clone, Debug)]
pub struct EmpiricalSpace {
    n: usize,
    dim: usize,
    points: Vec<Vec<u32>>,
}

impl EmpiricalSpace {
    pub fn new(n: usize, dim: usize) -> Result<Self, SimplexError> {
        Self::with_cap(n, dim, DEFAULT_ENUM_CAP)
    }

    pub fn with_cap(n: usize, dim: usize, cap: usize) -> Result<Self, SimplexError> {
        assert!(n >= 1 && dim >= 1);
        let count = empirical_count(n, dim).unwrap_or(u128::MAX);
        if count > cap as u128 {
            return Err(SimplexError::EnumerationCap { count, cap });
        }
        let mut points = Vec::with_capacity(count as usize);
        let mut current = vec![0u32; dim];
        fill_compositions(n as u32, 0, &mut current, &mut points);
        Ok(Self { n, dim, points })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn counts(&self, index: usize) -> &[u32] {
        &self.points[index]
    }

    pub fn point(&self, index: usize) -> DistVector {
        let values = self.points[index]
            .iter()
            .map(|&c| c as f64 / self.n as f64)
            .collect();
        DistVector::unchecked(values, Flavor::Empirical(self.n))
    }

    /// Lexicographic rank of a count vector.
    pub fn rank(&self, counts: &[u32]) -> usize {
        debug_assert_eq!(counts.len(), self.dim);
        let mut rank: u128 = 0;
        let mut remaining = self.n as u128;
        for (j, &c) in counts.iter().enumerate().take(self.dim - 1) {
            // compositions of (remaining - v) into the positions after j
            let parts = (self.dim - j - 1) as u128;
            for v in 0..c as u128 {
                rank += binomial(remaining - v + parts - 1, parts - 1).expect("rank overflow");
            }
            remaining -= c as u128;
        }
        rank as usize
    }

    /// Rank of an empirical `DistVector` (entries multiples of 1/n).
    pub fn rank_of(&self, m: &DistVector) -> usize {
        let counts: Vec<u32> = m
            .values()
            .iter()
            .map(|&v| (v * self.n as f64).round() as u32)
            .collect();
        self.rank(&counts)
    }
}

fn fill_compositions(remaining: u32, pos: usize, current: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    let dim = current.len();
    if pos == dim - 1 {
        current[pos] = remaining;
        out.push(current.clone());
        return;
    }
    for v in 0..=remaining {
        current[pos] = v;
        fill_compositions(remaining - v, pos + 1, current, out);
    }
}

/// All points of M_n in lexicographic order of count vectors.
pub fn enumerate_empirical(n: usize, dim: usize) -> Result<Vec<DistVector>, SimplexError> {
    let space = EmpiricalSpace::new(n, dim)?;
    Ok((0..space.len()).map(|i| space.point(i)).collect())
}

/// The grid Q_ν over `dim` coordinates: integer coordinates 0..=ν in
/// row-major order (last coordinate fastest).
#[derive(Clone, Copy, Debug)]
pub struct GridSpace {
    nu: usize,
    dim: usize,
}

impl GridSpace {
    pub fn new(nu: usize, dim: usize) -> Result<Self, SimplexError> {
        Self::with_cap(nu, dim, DEFAULT_ENUM_CAP)
    }

    pub fn with_cap(nu: usize, dim: usize, cap: usize) -> Result<Self, SimplexError> {
        assert!(nu >= 1 && dim >= 1);
        let count = (nu as u128 + 1).checked_pow(dim as u32).unwrap_or(u128::MAX);
        if count > cap as u128 {
            return Err(SimplexError::EnumerationCap { count, cap });
        }
        Ok(Self { nu, dim })
    }

    pub fn nu(&self) -> usize {
        self.nu
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        (self.nu + 1).pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn point(&self, index: usize) -> DistVector {
        let mut values = vec![0.0; self.dim];
        let mut rest = index;
        for k in (0..self.dim).rev() {
            let coord = rest % (self.nu + 1);
            rest /= self.nu + 1;
            values[k] = coord as f64 / self.nu as f64;
        }
        DistVector::unchecked(values, Flavor::Grid(self.nu))
    }

    /// Index of the nearest grid point to `z` (ties round up per coordinate).
    pub fn quantize_index(&self, z: &DistVector) -> usize {
        debug_assert_eq!(z.dim(), self.dim);
        let mut index = 0usize;
        for &v in z.values() {
            let coord = round_half_up(v * self.nu as f64).clamp(0, self.nu as i64) as usize;
            index = index * (self.nu + 1) + coord;
        }
        index
    }
}

fn round_half_up(v: f64) -> i64 {
    (v + 0.5).floor() as i64
}

/// All points of Q_ν in row-major order.
pub fn enumerate_grid(nu: usize, dim: usize) -> Result<Vec<DistVector>, SimplexError> {
    let space = GridSpace::new(nu, dim)?;
    Ok((0..space.len()).map(|i| space.point(i)).collect())
}

/// Nearest point of Q_ν to `z` under the sup norm, coordinate-wise,
/// rounding ties up. The result may be off-simplex.
pub fn quantize(z: &DistVector, nu: usize) -> DistVector {
    let values = z
        .values()
        .iter()
        .map(|&v| round_half_up(v * nu as f64).clamp(0, nu as i64) as f64 / nu as f64)
        .collect();
    DistVector::unchecked(values, Flavor::Grid(nu))
}

/// Sup distance between two equal-dimension vectors.
pub fn linf(z1: &DistVector, z2: &DistVector) -> f64 {
    linf_slices(z1.values(), z2.values())
}

pub(crate) fn linf_slices(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dimension mismatch");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// A random point of Δ(X) (Dirichlet(1,...,1) via exponential spacings).
pub fn random_simplex_point(dim: usize, key: &[u64]) -> DistVector {
    let mut values: Vec<f64> = (0..dim)
        .map(|k| {
            let mut parts = key.to_vec();
            parts.push(k as u64);
            -crate::rng::keyed_uniform(&parts).max(1e-300).ln()
        })
        .collect();
    let s: f64 = values.iter().sum();
    for v in &mut values {
        *v /= s;
    }
    DistVector::unchecked(values, Flavor::Simplex)
}

/// A random point of the unit box I(X).
pub fn random_box_point(dim: usize, key: &[u64]) -> DistVector {
    let values = (0..dim)
        .map(|k| {
            let mut parts = key.to_vec();
            parts.push(k as u64);
            crate::rng::keyed_uniform(&parts)
        })
        .collect();
    DistVector::unchecked(values, Flavor::Box)
}
