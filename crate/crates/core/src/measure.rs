//! The interval-supremum calibration measure and the l1 distance.
//!
//! For a scored sample the empirical measure is
//!
//! ```text
//! c_emp = (1/n) sup_{p1 < p2} | sum_i 1{p1 < f_i <= p2} (y_i - f_i) |
//! ```
//!
//! Deviations only change at distinct score values, so after pooling ties
//! the supremum is `max prefix - min prefix` of the per-group deviations
//! (the empty prefix included), which is exact and `O(n log n)`.

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::data::{check_score, group_by_score, DiscreteDistribution, ScoredDataset};
use crate::error::{Error, Result};

/// The interval `(p1, p2]` realizing the supremum and its signed deviation
/// (positive-label mass minus score mass; positive means under-confident).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorstInterval {
    #[serde(serialize_with = "ser_lower", deserialize_with = "de_lower")]
    pub p1: f64,
    pub p2: f64,
    pub deviation: f64,
}

fn ser_lower<S: Serializer>(p1: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if *p1 == f64::NEG_INFINITY {
        s.serialize_str("-inf")
    } else {
        s.serialize_f64(*p1)
    }
}

fn de_lower<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Lower {
        Value(f64),
        Text(String),
    }
    match Lower::deserialize(d)? {
        Lower::Value(v) => Ok(v),
        Lower::Text(t) if t == "-inf" => Ok(f64::NEG_INFINITY),
        Lower::Text(t) => Err(serde::de::Error::custom(format!(
            "expected a number or \"-inf\", found {t:?}"
        ))),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub c_emp: f64,
    pub n: usize,
    pub worst_interval: WorstInterval,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueCalibrationReport {
    pub c: f64,
    pub worst_interval: WorstInterval,
}

/// Sup of `|prefix_j - prefix_i|` over `i < j` for prefixes of `deviations`
/// (with `prefix_0 = 0`).
///
/// Returns `(i, j, prefix_j - prefix_i)`; among optimal pairs the smallest
/// `i`, then the smallest `j`, is chosen.
pub(crate) fn widest_prefix_gap(deviations: &[f64]) -> (usize, usize, f64) {
    debug_assert!(!deviations.is_empty());
    let mut prefix = 0.0;
    let (mut max, mut min) = (0.0_f64, 0.0_f64);
    let (mut arg_max, mut arg_min) = (0, 0);
    let mut prefixes = Vec::with_capacity(deviations.len() + 1);
    prefixes.push(0.0);
    for (k, d) in deviations.iter().enumerate() {
        prefix += d;
        prefixes.push(prefix);
        if prefix > max {
            max = prefix;
            arg_max = k + 1;
        }
        if prefix < min {
            min = prefix;
            arg_min = k + 1;
        }
    }
    if max == min {
        return (0, 1, prefixes[1] - prefixes[0]);
    }
    let (i, j) = if arg_min < arg_max {
        (arg_min, arg_max)
    } else {
        (arg_max, arg_min)
    };
    (i, j, prefixes[j] - prefixes[i])
}

fn interval_from(scores: &[f64], i: usize, j: usize, deviation: f64) -> WorstInterval {
    WorstInterval {
        p1: if i == 0 {
            f64::NEG_INFINITY
        } else {
            scores[i - 1]
        },
        p2: scores[j - 1],
        deviation,
    }
}

/// Exact `c_emp(f, D)` with the interval attaining it.
pub fn empirical_calibration(dataset: &ScoredDataset) -> Result<CalibrationReport> {
    let groups = group_by_score(dataset)?;
    let deviations: Vec<f64> = groups.groups().iter().map(|g| g.deviation()).collect();
    let scores: Vec<f64> = groups.groups().iter().map(|g| g.score).collect();
    let (i, j, deviation) = widest_prefix_gap(&deviations);
    let n = groups.n();
    Ok(CalibrationReport {
        c_emp: deviation.abs() / n as f64,
        n,
        worst_interval: interval_from(&scores, i, j, deviation),
    })
}

/// `c_emp` by enumerating every `(p1, p2)` pair of distinct-score boundaries
/// and summing raw samples. `O(n * m)`; intended as an oracle for small `n`.
pub fn empirical_calibration_bruteforce(dataset: &ScoredDataset) -> Result<CalibrationReport> {
    dataset.ensure_nonempty()?;
    let sorted = dataset.sorted();
    let mut distinct: Vec<f64> = sorted.iter().map(|s| s.score()).collect();
    distinct.dedup();
    let lowers = std::iter::once(f64::NEG_INFINITY).chain(distinct.iter().copied());
    let mut best: Option<WorstInterval> = None;
    for p1 in lowers {
        let mut running = 0.0;
        let inside: Vec<_> = sorted.iter().filter(|s| s.score() > p1).collect();
        for (k, sample) in inside.iter().enumerate() {
            running += f64::from(sample.label()) - sample.score();
            let closes_group = inside
                .get(k + 1)
                .is_none_or(|next| next.score() != sample.score());
            if closes_group {
                let better = best.is_none_or(|b| running.abs() > b.deviation.abs());
                if better {
                    best = Some(WorstInterval {
                        p1,
                        p2: sample.score(),
                        deviation: running,
                    });
                }
            }
        }
    }
    let worst = best.expect("nonempty dataset has at least one interval");
    let n = sorted.len();
    Ok(CalibrationReport {
        c_emp: worst.deviation.abs() / n as f64,
        n,
        worst_interval: worst,
    })
}

/// `sum_i 1{p1 < f_i <= p2} (y_i - f_i)` evaluated directly on raw samples.
pub fn interval_deviation(dataset: &ScoredDataset, p1: f64, p2: f64) -> f64 {
    dataset
        .samples()
        .iter()
        .filter(|s| p1 < s.score() && s.score() <= p2)
        .map(|s| f64::from(s.label()) - s.score())
        .sum()
}

/// Population measure `c(f)` for an explicit finite distribution.
pub fn true_calibration(dist: &DiscreteDistribution) -> TrueCalibrationReport {
    let atoms = dist.atoms();
    let deviations: Vec<f64> = atoms
        .iter()
        .map(|a| a.mass * (a.positive_rate - a.f_value))
        .collect();
    let scores: Vec<f64> = atoms.iter().map(|a| a.f_value).collect();
    let (i, j, deviation) = widest_prefix_gap(&deviations);
    TrueCalibrationReport {
        c: deviation.abs(),
        worst_interval: interval_from(&scores, i, j, deviation),
    }
}

/// Monte Carlo form of `E|f(X) - P(Y=1|X)|`.
pub fn l1_empirical(scores: &[f64], true_probs: &[f64]) -> Result<f64> {
    if scores.len() != true_probs.len() {
        return Err(Error::LengthMismatch {
            left: scores.len(),
            right: true_probs.len(),
        });
    }
    if scores.is_empty() {
        return Err(Error::EmptyInput);
    }
    for (i, (&s, &p)) in scores.iter().zip(true_probs).enumerate() {
        check_score(i, s)?;
        check_score(i, p)?;
    }
    let total: f64 = scores
        .iter()
        .zip(true_probs)
        .map(|(s, p)| (s - p).abs())
        .sum();
    Ok(total / scores.len() as f64)
}
