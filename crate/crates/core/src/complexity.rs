//! Rademacher complexity of interval-threshold classes and the closed-form
//! uniform-convergence bounds built on it.
//!
//! For a fixed scorer `f` the class `H` holds the indicators
//! `1{p1 < f(x) <= p2}`; `H1` restricts them to positive labels and `H2`
//! weights them by `f(x)`. On a sample, the supremum over a class of
//! `sum_i sigma_i h(x_i)` is a maximum-subarray problem over the
//! score-sorted, tie-pooled weights, floored at zero by the empty interval.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{group_by_score, ScoredDataset};
use crate::error::{Error, Result};
use crate::rng::{domain, substream};

/// Largest sample size for which all `2^n` sign vectors are enumerated.
pub const EXACT_LIMIT: usize = 20;

const CHUNK: u64 = 1 << 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassVariant {
    /// `1{p1 < f(x) <= p2}`
    H,
    /// `1{p1 < f(x) <= p2, y = 1}`
    H1,
    /// `f(x) 1{p1 < f(x) <= p2}`
    H2,
}

impl std::str::FromStr for ClassVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "H" | "h" => Ok(Self::H),
            "H1" | "h1" => Ok(Self::H1),
            "H2" | "h2" => Ok(Self::H2),
            other => Err(Error::InvalidArguments(format!(
                "unknown class variant `{other}` (expected H, H1 or H2)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RademacherEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub num_sigma: u64,
    pub class_variant: ClassVariant,
    pub exact: bool,
}

/// Per-sample weights in ascending-score order plus the group each belongs to.
struct PooledSample {
    weights: Vec<f64>,
    group_of: Vec<usize>,
    groups: usize,
}

impl PooledSample {
    fn new(dataset: &ScoredDataset, variant: ClassVariant) -> Result<Self> {
        let groups = group_by_score(dataset)?;
        let sorted = dataset.sorted();
        let mut group_of = Vec::with_capacity(sorted.len());
        for (g, group) in groups.groups().iter().enumerate() {
            group_of.extend(std::iter::repeat_n(g, group.count));
        }
        let weights = sorted
            .iter()
            .map(|s| match variant {
                ClassVariant::H => 1.0,
                ClassVariant::H1 => f64::from(s.label()),
                ClassVariant::H2 => s.score(),
            })
            .collect();
        Ok(Self {
            weights,
            group_of,
            groups: groups.len(),
        })
    }

    /// `sup_h sum_i sigma_i h(x_i)` for the sign vector `positive(i)`.
    fn supremum(&self, positive: impl Fn(usize) -> bool, buffer: &mut Vec<f64>) -> f64 {
        buffer.clear();
        buffer.resize(self.groups, 0.0);
        for (i, (&w, &g)) in self.weights.iter().zip(&self.group_of).enumerate() {
            buffer[g] += if positive(i) { w } else { -w };
        }
        max_subarray_nonneg(buffer)
    }
}

/// Largest sum over contiguous runs, with the empty run worth zero.
pub(crate) fn max_subarray_nonneg(values: &[f64]) -> f64 {
    let (mut prefix, mut lowest, mut best) = (0.0_f64, 0.0_f64, 0.0_f64);
    for v in values {
        prefix += v;
        best = best.max(prefix - lowest);
        lowest = lowest.min(prefix);
    }
    best
}

/// Estimates `R_D` of the chosen class on `dataset`.
///
/// Enumerates all sign vectors when `n <= 20` and `num_sigma >= 2^n`;
/// otherwise draws `num_sigma` vectors, vector `k` from substream `k` of
/// `seed`.
pub fn estimate_interval_rademacher(
    dataset: &ScoredDataset,
    variant: ClassVariant,
    num_sigma: u64,
    seed: u64,
) -> Result<RademacherEstimate> {
    if num_sigma == 0 {
        return Err(Error::InvalidArguments("num_sigma must be positive".into()));
    }
    let pooled = PooledSample::new(dataset, variant)?;
    let n = dataset.len();
    let scale = 1.0 / n as f64;
    let exact = n <= EXACT_LIMIT && num_sigma >= 1u64 << n;
    let total = if exact { 1u64 << n } else { num_sigma };

    let chunks = total.div_ceil(CHUNK);
    let partial: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut buffer = Vec::with_capacity(pooled.groups);
            let (mut sum, mut sum_sq) = (0.0, 0.0);
            for k in c * CHUNK..((c + 1) * CHUNK).min(total) {
                let value = if exact {
                    pooled.supremum(|i| k >> i & 1 == 1, &mut buffer)
                } else {
                    let mut rng = substream(seed, domain::SIGMA, k);
                    let signs: Vec<bool> = (0..n).map(|_| rng.random()).collect();
                    pooled.supremum(|i| signs[i], &mut buffer)
                } * scale;
                sum += value;
                sum_sq += value * value;
            }
            (sum, sum_sq)
        })
        .collect();
    let (sum, sum_sq) = partial
        .iter()
        .fold((0.0, 0.0), |(a, b), (s, q)| (a + s, b + q));
    let count = total as f64;
    let mean = sum / count;
    let std_error = if exact || total < 2 {
        0.0
    } else {
        let var = ((sum_sq - count * mean * mean) / (count - 1.0)).max(0.0);
        (var / count).sqrt()
    };
    Ok(RademacherEstimate {
        mean,
        std_error,
        num_sigma: total,
        class_variant: variant,
        exact,
    })
}

/// Sign vector, weights and sigmoid outputs showing that a linear-sigmoid
/// class can match any labeling of linearly independent inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmWitness {
    pub sigma: Vec<i8>,
    /// Unit-norm direction `w*`.
    pub weights: Vec<f64>,
    /// The (negative) saturation parameter.
    pub lambda: f64,
    /// Slope applied to `w* . x`, equal to `lambda * ||w||`.
    pub slope: f64,
    /// `sum_i sigma_i f(x_i)`.
    pub achieved: f64,
    /// Number of `+1` entries in `sigma`.
    pub target: usize,
}

/// Relative eigenvalue floor for the Gram matrix.
pub const RANK_TOLERANCE: f64 = 1e-8;

pub const DEFAULT_LAMBDA_MAGNITUDE: f64 = 50.0;

fn stable_logistic_of_negative(margin: f64) -> f64 {
    // 1 / (1 + exp(margin))
    if margin > 0.0 {
        let e = (-margin).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + margin.exp())
    }
}

struct GramSolver {
    x: DMatrix<f64>,
    eigen: SymmetricEigen<f64, nalgebra::Dyn>,
}

impl GramSolver {
    fn new(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::DimensionMismatch("no rows".into()));
        }
        let d = rows[0].len();
        if let Some(r) = rows.iter().find(|r| r.len() != d) {
            return Err(Error::DimensionMismatch(format!(
                "row of length {} in a {d}-column matrix",
                r.len()
            )));
        }
        if n >= d {
            return Err(Error::DimensionMismatch(format!(
                "need fewer rows than columns, got {n} x {d}"
            )));
        }
        for (i, r) in rows.iter().enumerate() {
            let norm = r.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() || norm > 1.0 + 1e-12 {
                return Err(Error::InvalidArguments(format!(
                    "row {i} has norm {norm} > 1"
                )));
            }
        }
        let x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
        let eigen = SymmetricEigen::new(&x * x.transpose());
        let max = eigen.eigenvalues.max();
        let min = eigen.eigenvalues.min();
        if max.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) || min <= RANK_TOLERANCE * max
        {
            return Err(Error::RankDeficient {
                ratio: if max > 0.0 { min / max } else { 0.0 },
            });
        }
        Ok(Self { x, eigen })
    }

    /// Minimum-norm `w` with `X w = rhs`.
    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let v = &self.eigen.eigenvectors;
        let mut coeffs = v.transpose() * rhs;
        for (c, l) in coeffs.iter_mut().zip(self.eigen.eigenvalues.iter()) {
            *c /= l;
        }
        self.x.transpose() * (v * coeffs)
    }

    fn witness(&self, sigma: &[i8], lambda_magnitude: f64) -> Result<SvmWitness> {
        let n = self.x.nrows();
        if sigma.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "sigma has length {} for {n} rows",
                sigma.len()
            )));
        }
        if sigma.iter().any(|&s| s != 1 && s != -1) {
            return Err(Error::InvalidArguments(
                "sigma entries must be +1 or -1".into(),
            ));
        }
        if !(lambda_magnitude.is_finite() && lambda_magnitude > 0.0) {
            return Err(Error::InvalidArguments(format!(
                "lambda magnitude {lambda_magnitude} must be positive"
            )));
        }
        let rhs = DVector::from_iterator(n, sigma.iter().map(|&s| f64::from(s)));
        let w = self.solve(&rhs);
        let norm = w.norm();
        let direction = &w / norm;
        let lambda = -lambda_magnitude;
        let slope = lambda * norm;
        let margins = &self.x * &direction * slope;
        let achieved = sigma
            .iter()
            .zip(margins.iter())
            .map(|(&s, &m)| f64::from(s) * stable_logistic_of_negative(m))
            .sum();
        Ok(SvmWitness {
            sigma: sigma.to_vec(),
            weights: direction.iter().copied().collect(),
            lambda,
            slope,
            achieved,
            target: sigma.iter().filter(|&&s| s == 1).count(),
        })
    }
}

/// Builds the witness for one sign vector.
///
/// `rows` is an `n x d` matrix with `n < d`, linearly independent rows of
/// norm at most one.
pub fn svm_witness(rows: &[Vec<f64>], sigma: &[i8], lambda_magnitude: f64) -> Result<SvmWitness> {
    GramSolver::new(rows)?.witness(sigma, lambda_magnitude)
}

/// Mean of `achieved / n` over all `2^n` sign vectors.
pub fn svm_witness_mean(rows: &[Vec<f64>], lambda_magnitude: f64) -> Result<f64> {
    let solver = GramSolver::new(rows)?;
    let n = rows.len();
    if n > EXACT_LIMIT {
        return Err(Error::InvalidArguments(format!(
            "exhaustive enumeration needs n <= {EXACT_LIMIT}, got {n}"
        )));
    }
    let mut total = 0.0;
    for mask in 0u64..1 << n {
        let sigma: Vec<i8> = (0..n)
            .map(|i| if mask >> i & 1 == 1 { 1 } else { -1 })
            .collect();
        total += solver.witness(&sigma, lambda_magnitude)?.achieved;
    }
    Ok(total / (n as f64 * (1u64 << n) as f64))
}

/// Smallest `epsilon` with `R + sqrt(2 ln(8/delta) / n) <= epsilon / 2`.
pub fn theorem2_epsilon(rademacher: f64, n: usize, delta: f64) -> Result<f64> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::InvalidDelta(delta));
    }
    if n == 0 || !(rademacher.is_finite() && rademacher >= 0.0) {
        return Err(Error::InvalidArguments(format!(
            "need n >= 1 and a finite nonnegative complexity, got n = {n}, R = {rademacher}"
        )));
    }
    Ok(2.0 * (rademacher + (2.0 * (8.0 / delta).ln() / n as f64).sqrt()))
}

/// `sqrt((2d (ln(n/d) + 1) + 4 ln(|P*| + 1)) / n)` for scorers with finitely
/// many output values.
pub fn finite_output_bound(d: usize, n: usize, p_star_size: usize) -> Result<f64> {
    if d == 0 || p_star_size == 0 || n <= d + 1 {
        return Err(Error::InvalidArguments(format!(
            "need d >= 1, |P*| >= 1 and n > d + 1; got d = {d}, n = {n}, |P*| = {p_star_size}"
        )));
    }
    let (d, n, p) = (d as f64, n as f64, p_star_size as f64);
    Ok(((2.0 * d * ((n / d).ln() + 1.0) + 4.0 * (p + 1.0).ln()) / n).sqrt())
}
