//! Cost-sensitive decisions from probability estimates.
//!
//! With cost `a` per false positive and `b` per false negative, a calibrated
//! estimate is acted on by predicting positive iff it reaches `a / (a + b)`.

use serde::{Deserialize, Serialize};

use crate::data::{DiscreteDistribution, ScoredDataset};
use crate::error::{Error, Result};
use crate::pav::{apply_link, calibrate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostPair {
    false_positive: f64,
    false_negative: f64,
}

impl CostPair {
    pub fn new(false_positive: f64, false_negative: f64) -> Result<Self> {
        let ok = |c: f64| c.is_finite() && c > 0.0;
        if !(ok(false_positive) && ok(false_negative)) {
            return Err(Error::InvalidCost {
                a: false_positive,
                b: false_negative,
            });
        }
        Ok(Self {
            false_positive,
            false_negative,
        })
    }

    /// Costs `(p, 1 - p)` used by the loss-ratio experiment.
    pub fn from_loss_parameter(p: f64) -> Result<Self> {
        Self::new(p, 1.0 - p)
    }

    pub fn false_positive(&self) -> f64 {
        self.false_positive
    }

    pub fn false_negative(&self) -> f64 {
        self.false_negative
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossSummary {
    pub threshold: f64,
    pub total_loss: f64,
    pub mean_loss: f64,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

/// `a / (a + b)`; predict positive iff the estimate is at least this.
pub fn bayes_threshold(costs: CostPair) -> f64 {
    costs.false_positive / (costs.false_positive + costs.false_negative)
}

fn check_threshold(threshold: f64) -> Result<()> {
    if (0.0..=1.0).contains(&threshold) {
        Ok(())
    } else {
        Err(Error::InvalidThreshold(threshold))
    }
}

pub fn empirical_loss(
    dataset: &ScoredDataset,
    threshold: f64,
    costs: CostPair,
) -> Result<LossSummary> {
    dataset.ensure_nonempty()?;
    check_threshold(threshold)?;
    let (mut fp, mut fn_) = (0usize, 0usize);
    for s in dataset.samples() {
        let predicted = s.score() >= threshold;
        match (predicted, s.is_positive()) {
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            _ => {}
        }
    }
    let total_loss = costs.false_positive * fp as f64 + costs.false_negative * fn_ as f64;
    Ok(LossSummary {
        threshold,
        total_loss,
        mean_loss: total_loss / dataset.len() as f64,
        fp,
        fn_,
    })
}

/// `sum_j mass_j [a (1 - rate_j) 1{f_j >= t} + b rate_j 1{f_j < t}]`.
pub fn expected_loss_on_distribution(
    dist: &DiscreteDistribution,
    threshold: f64,
    costs: CostPair,
) -> Result<f64> {
    check_threshold(threshold)?;
    Ok(dist
        .atoms()
        .iter()
        .map(|atom| {
            if atom.f_value >= threshold {
                atom.mass * costs.false_positive * (1.0 - atom.positive_rate)
            } else {
                atom.mass * costs.false_negative * atom.positive_rate
            }
        })
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossRatio {
    pub p: f64,
    pub loss_before: f64,
    pub loss_after: f64,
    pub ratio: f64,
}

/// Fits PAV on `validation`, recalibrates `test`, and compares the mean loss
/// under costs `(p, 1 - p)` at threshold `p` before and after.
pub fn loss_ratio_experiment(
    validation: &ScoredDataset,
    test: &ScoredDataset,
    p_grid: &[f64],
) -> Result<Vec<LossRatio>> {
    validation.ensure_nonempty()?;
    test.ensure_nonempty()?;
    let link = calibrate(validation)?;
    let calibrated = test.with_scores(&apply_link(&link, &test.scores())?)?;
    p_grid
        .iter()
        .map(|&p| {
            if !(p > 0.0 && p < 1.0) {
                return Err(Error::InvalidArguments(format!(
                    "loss parameter {p} outside (0, 1)"
                )));
            }
            let costs = CostPair::from_loss_parameter(p)?;
            let before = empirical_loss(test, p, costs)?.mean_loss;
            let after = empirical_loss(&calibrated, p, costs)?.mean_loss;
            let ratio = if before > 0.0 {
                after / before
            } else if after == 0.0 {
                1.0
            } else {
                return Err(Error::PreLossZero { p, after });
            };
            Ok(LossRatio {
                p,
                loss_before: before,
                loss_after: after,
                ratio,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Atom;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn ds(scores: &[f64], labels: &[u8]) -> ScoredDataset {
        ScoredDataset::from_parts(scores, labels).unwrap()
    }

    #[test]
    fn thresholds() {
        assert_eq!(bayes_threshold(CostPair::new(1.0, 1.0).unwrap()), 0.5);
        assert_eq!(bayes_threshold(CostPair::new(1.0, 3.0).unwrap()), 0.25);
        for p in [0.1, 0.37, 0.5, 0.9] {
            let t = bayes_threshold(CostPair::from_loss_parameter(p).unwrap());
            assert_abs_diff_eq!(t, p, epsilon = 1e-15);
        }
        assert!(CostPair::new(0.0, 1.0).is_err());
        assert!(CostPair::new(1.0, f64::INFINITY).is_err());
    }

    #[test]
    fn empirical_loss_examples() {
        let perfect = ds(&[1.0, 0.0, 1.0], &[1, 0, 1]);
        let costs = CostPair::new(1.0, 1.0).unwrap();
        for t in [0.1, 0.5, 1.0] {
            assert_eq!(empirical_loss(&perfect, t, costs).unwrap().total_loss, 0.0);
        }

        let missed = ds(&[0.0; 4], &[1; 4]);
        let r = empirical_loss(&missed, 0.5, costs).unwrap();
        assert_eq!(r.fn_, 4);
        assert_eq!(r.mean_loss, 1.0);

        let r = empirical_loss(
            &ds(&[0.2, 0.6, 0.9], &[0, 0, 1]),
            0.5,
            CostPair::new(1.0, 4.0).unwrap(),
        )
        .unwrap();
        assert_eq!((r.fp, r.fn_, r.total_loss), (1, 0, 1.0));

        // score equal to the threshold predicts positive
        let r = empirical_loss(&ds(&[0.5], &[0]), 0.5, costs).unwrap();
        assert_eq!(r.fp, 1);

        assert!(empirical_loss(&ScoredDataset::default(), 0.5, costs).is_err());
        assert!(empirical_loss(&perfect, 1.5, costs).is_err());
    }

    #[test]
    fn distribution_loss_examples() {
        let dist = DiscreteDistribution::new(vec![
            Atom::new(0.1, 0.2, 0.1),
            Atom::new(0.4, 0.3, 0.4),
            Atom::new(0.7, 0.5, 0.7),
        ])
        .unwrap();
        let costs = CostPair::new(1.0, 1.0).unwrap();
        let plug_in: f64 = dist
            .atoms()
            .iter()
            .map(|a| a.mass * a.f_value.min(1.0 - a.f_value))
            .sum();
        assert_abs_diff_eq!(
            expected_loss_on_distribution(&dist, 0.5, costs).unwrap(),
            plug_in,
            epsilon = 1e-15
        );
        let p1 = dist.positive_probability();
        assert_abs_diff_eq!(
            expected_loss_on_distribution(&dist, 0.0, costs).unwrap(),
            1.0 - p1,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            expected_loss_on_distribution(&dist, 0.8, costs).unwrap(),
            p1,
            epsilon = 1e-15
        );
    }

    #[test]
    fn identity_link_keeps_loss() {
        // validation already calibrated: every score is its own block mean
        let validation = ds(&[0.0, 0.5, 0.5, 1.0], &[0, 0, 1, 1]);
        let test = ds(&[0.0, 0.5, 1.0, 0.5], &[0, 1, 1, 0]);
        let grid: Vec<f64> = (1..10).map(|k| f64::from(k) / 10.0).collect();
        for r in loss_ratio_experiment(&validation, &test, &grid).unwrap() {
            assert_eq!(r.ratio, 1.0);
        }
    }

    #[test]
    fn zero_loss_edge_cases() {
        let validation = ds(&[0.2, 0.8], &[0, 1]);
        let test = ds(&[0.0, 1.0], &[0, 1]);
        let r = loss_ratio_experiment(&validation, &test, &[0.5]).unwrap();
        assert_eq!(r[0].ratio, 1.0);

        // perfect before, but the link flattens everything to 0.5
        let validation = ds(&[0.2, 0.8], &[1, 0]);
        assert!(matches!(
            loss_ratio_experiment(&validation, &test, &[0.4]),
            Err(Error::PreLossZero { .. })
        ));
        assert!(loss_ratio_experiment(&ScoredDataset::default(), &test, &[0.5]).is_err());
    }

    proptest! {
        #[test]
        fn counts_match_direct_loop(
            v in prop::collection::vec((0u32..=10, any::<bool>()), 1..40),
            t in 0u32..=10,
        ) {
            let scores: Vec<f64> = v.iter().map(|(s, _)| f64::from(*s) / 10.0).collect();
            let labels: Vec<u8> = v.iter().map(|(_, y)| u8::from(*y)).collect();
            let d = ds(&scores, &labels);
            let t = f64::from(t) / 10.0;
            let r = empirical_loss(&d, t, CostPair::new(2.0, 3.0).unwrap()).unwrap();
            let mut fp = 0;
            let mut fn_ = 0;
            for i in 0..scores.len() {
                if scores[i] >= t && labels[i] == 0 { fp += 1; }
                if scores[i] < t && labels[i] == 1 { fn_ += 1; }
            }
            prop_assert_eq!((r.fp, r.fn_), (fp, fn_));
            prop_assert_eq!(r.total_loss, 2.0 * fp as f64 + 3.0 * fn_ as f64);
        }

        #[test]
        fn pav_on_same_data_never_hurts(
            v in prop::collection::vec((0u32..=10, any::<bool>()), 1..60),
        ) {
            let scores: Vec<f64> = v.iter().map(|(s, _)| f64::from(*s) / 10.0).collect();
            let labels: Vec<u8> = v.iter().map(|(_, y)| u8::from(*y)).collect();
            let d = ds(&scores, &labels);
            let grid: Vec<f64> = (1..100).map(|k| f64::from(k) / 100.0).collect();
            match loss_ratio_experiment(&d, &d, &grid) {
                Ok(ratios) => {
                    for r in ratios {
                        prop_assert!(r.loss_after <= r.loss_before + 1e-12, "{:?}", r);
                    }
                }
                Err(e) => prop_assert!(false, "{e}"),
            }
        }
    }
}
