//! Isotonic recalibration through the greatest convex minorant of the
//! cumulative-sum diagram.
//!
//! Samples are sorted by score and tied scores are pooled into indivisible
//! blocks. The diagram has points `(i, S_i)` where `S_i` counts positive
//! labels among the first `i` samples; the calibrated value of a sample is
//! the slope of the lower hull segment above it.

use serde::{Deserialize, Serialize};

use crate::data::{check_score, group_by_score, DiscreteDistribution, ScoredDataset};
use crate::error::{Error, Result};
use crate::measure::widest_prefix_gap;

/// Points `(i, S_i)` of the cumulative-sum diagram, one per sample plus the
/// origin, over samples sorted by score.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CumulativeDiagram {
    pub points: Vec<(usize, usize)>,
}

impl CumulativeDiagram {
    pub fn new(dataset: &ScoredDataset) -> Result<Self> {
        dataset.ensure_nonempty()?;
        let mut points = Vec::with_capacity(dataset.len() + 1);
        points.push((0, 0));
        let mut positives = 0;
        for (i, s) in dataset.sorted().iter().enumerate() {
            positives += usize::from(s.label());
            points.push((i + 1, positives));
        }
        Ok(Self { points })
    }
}

/// Output of [`fit_pav`]: calibrated values in ascending-score order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsotonicFit {
    /// `z_i` for the `i`-th sample in ascending score order (stable on ties).
    pub z: Vec<f64>,
    /// x-coordinates (sample counts) of the lower hull vertices, from 0 to n.
    pub hull_vertices: Vec<usize>,
    /// `S_i` at every hull vertex.
    pub hull_heights: Vec<usize>,
}

impl IsotonicFit {
    /// `Z_0, ..., Z_n`: the hull evaluated at every integer abscissa.
    pub fn cumulative(&self) -> Vec<f64> {
        let n = *self.hull_vertices.last().unwrap_or(&0);
        let mut out = Vec::with_capacity(n + 1);
        out.push(0.0);
        for w in 0..self.hull_vertices.len().saturating_sub(1) {
            let (x0, x1) = (self.hull_vertices[w], self.hull_vertices[w + 1]);
            let (y0, y1) = (self.hull_heights[w] as f64, self.hull_heights[w + 1] as f64);
            for x in x0 + 1..=x1 {
                out.push(if x == x1 {
                    y1
                } else {
                    y0 + (y1 - y0) * (x - x0) as f64 / (x1 - x0) as f64
                });
            }
        }
        out
    }
}

fn cross(o: (u64, u64), a: (u64, u64), b: (u64, u64)) -> i128 {
    let (ox, oy) = (o.0 as i128, o.1 as i128);
    (a.0 as i128 - ox) * (b.1 as i128 - oy) - (a.1 as i128 - oy) * (b.0 as i128 - ox)
}

/// Fits the isotonic (PAV) calibration of `dataset`.
pub fn fit_pav(dataset: &ScoredDataset) -> Result<IsotonicFit> {
    let groups = group_by_score(dataset)?;
    // Only block boundaries are hull candidates: a tie block is one segment.
    let mut hull: Vec<(u64, u64)> = vec![(0, 0)];
    let (mut x, mut y) = (0u64, 0u64);
    for g in groups.groups() {
        x += g.count as u64;
        y += g.positives as u64;
        let p = (x, y);
        while hull.len() >= 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], p) <= 0 {
            hull.pop();
        }
        hull.push(p);
    }
    let mut z = Vec::with_capacity(groups.n());
    for w in hull.windows(2) {
        let (dx, dy) = (w[1].0 - w[0].0, w[1].1 - w[0].1);
        let slope = dy as f64 / dx as f64;
        z.extend(std::iter::repeat_n(slope, dx as usize));
    }
    Ok(IsotonicFit {
        z,
        hull_vertices: hull.iter().map(|p| p.0 as usize).collect(),
        hull_heights: hull.iter().map(|p| p.1 as usize).collect(),
    })
}

/// Continuous nondecreasing map `[0,1] -> [0,1]` through the fitted knots,
/// linear between knots and constant outside them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "LinkRepr", into = "LinkRepr")]
pub struct LinkFunction {
    knots: Vec<(f64, f64)>,
}

pub const INTERPOLATION: &str = "linear-clamped";

#[derive(Serialize, Deserialize)]
struct LinkRepr {
    interpolation: String,
    knots: Vec<[f64; 2]>,
}

impl TryFrom<LinkRepr> for LinkFunction {
    type Error = Error;

    fn try_from(repr: LinkRepr) -> Result<Self> {
        if repr.interpolation != INTERPOLATION {
            return Err(Error::InvalidArguments(format!(
                "unsupported interpolation `{}`",
                repr.interpolation
            )));
        }
        Self::new(repr.knots.into_iter().map(|[s, v]| (s, v)).collect())
    }
}

impl From<LinkFunction> for LinkRepr {
    fn from(link: LinkFunction) -> Self {
        LinkRepr {
            interpolation: INTERPOLATION.to_string(),
            knots: link.knots.into_iter().map(|(s, v)| [s, v]).collect(),
        }
    }
}

impl LinkFunction {
    pub fn new(knots: Vec<(f64, f64)>) -> Result<Self> {
        if knots.is_empty() {
            return Err(Error::InvalidArguments(
                "link needs at least one knot".into(),
            ));
        }
        for (i, &(s, v)) in knots.iter().enumerate() {
            check_score(i, s)?;
            check_score(i, v)?;
        }
        for w in knots.windows(2) {
            if w[0].0 >= w[1].0 || w[0].1 > w[1].1 {
                return Err(Error::InvalidArguments(format!(
                    "knots must ascend in score and not decrease in value: {:?} then {:?}",
                    w[0], w[1]
                )));
            }
        }
        Ok(Self { knots })
    }

    pub fn knots(&self) -> &[(f64, f64)] {
        &self.knots
    }

    pub fn evaluate(&self, x: f64) -> f64 {
        let k = self.knots.partition_point(|&(s, _)| s < x);
        if k == self.knots.len() {
            return self.knots[k - 1].1;
        }
        let (s1, v1) = self.knots[k];
        if s1 == x || k == 0 {
            return v1;
        }
        let (s0, v0) = self.knots[k - 1];
        let t = (x - s0) / (s1 - s0);
        (v0 + (v1 - v0) * t).clamp(v0, v1)
    }
}

/// Link function whose knots are the distinct training scores and their `z`.
pub fn build_link(fit: &IsotonicFit, dataset: &ScoredDataset) -> Result<LinkFunction> {
    if fit.z.len() != dataset.len() {
        return Err(Error::FitDatasetMismatch {
            fit: fit.z.len(),
            dataset: dataset.len(),
        });
    }
    let sorted = dataset.sorted();
    let mut knots: Vec<(f64, f64)> = Vec::new();
    for (sample, &z) in sorted.iter().zip(&fit.z) {
        match knots.last() {
            Some(&(s, v)) if s == sample.score() => {
                if v != z {
                    return Err(Error::InvalidArguments(
                        "fit assigns different values to tied scores".into(),
                    ));
                }
            }
            _ => knots.push((sample.score(), z)),
        }
    }
    LinkFunction::new(knots)
}

/// Fits PAV on `dataset` and returns its link function.
pub fn calibrate(dataset: &ScoredDataset) -> Result<LinkFunction> {
    build_link(&fit_pav(dataset)?, dataset)
}

pub fn apply_link(link: &LinkFunction, scores: &[f64]) -> Result<Vec<f64>> {
    scores
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            check_score(i, s)?;
            Ok(link.evaluate(s))
        })
        .collect()
}

/// `(1/n) max_{a<b} |sum_{a<i<=b} (y_i - z_i)|` over contiguous positions.
pub fn calibration_objective(z: &[f64], labels: &[u8]) -> Result<f64> {
    if z.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: z.len(),
            right: labels.len(),
        });
    }
    if z.is_empty() {
        return Err(Error::EmptyInput);
    }
    let deviations: Vec<f64> = labels
        .iter()
        .zip(z)
        .map(|(&y, &zi)| f64::from(y) - zi)
        .collect();
    let (_, _, gap) = widest_prefix_gap(&deviations);
    Ok(gap.abs() / z.len() as f64)
}

/// Population curves comparing a fitted link against the true conditional
/// probabilities of a finite distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceDiagnostics {
    pub grid: Vec<f64>,
    /// `P(f(X) <= t)`
    pub f: Vec<f64>,
    /// `P(f(X) <= t, Y = 1)`
    pub g: Vec<f64>,
    /// `E[1{f(X) <= t} link(f(X))]`
    pub g_e: Vec<f64>,
    /// Greatest convex minorant of `(F, G)` evaluated at `F(t)`.
    pub cv_f: Vec<f64>,
}

impl ConvergenceDiagnostics {
    /// `sup_t |G_e(t) - G(t)|` over the grid.
    pub fn sup_gap(&self) -> f64 {
        self.g_e
            .iter()
            .zip(&self.g)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    /// `sup_t |G_e(t) - cv(F(t))|` over the grid.
    pub fn sup_gap_to_minorant(&self) -> f64 {
        self.g_e
            .iter()
            .zip(&self.cv_f)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

/// Lower convex hull of points sorted by x (duplicates in x keep the lowest y).
pub(crate) fn lower_hull(points: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut hull: Vec<(f64, f64)> = Vec::with_capacity(points.len());
    for &p in points {
        match hull.last() {
            Some(last) if last.0 == p.0 && last.1 <= p.1 => continue,
            Some(last) if last.0 == p.0 => {
                hull.pop();
            }
            _ => {}
        }
        push_lower(&mut hull, p);
    }
    hull
}

fn push_lower(hull: &mut Vec<(f64, f64)>, p: (f64, f64)) {
    while hull.len() >= 2 {
        let (o, a) = (hull[hull.len() - 2], hull[hull.len() - 1]);
        let turn = (a.0 - o.0) * (p.1 - o.1) - (a.1 - o.1) * (p.0 - o.0);
        if turn <= 0.0 {
            hull.pop();
        } else {
            break;
        }
    }
    hull.push(p);
}

pub(crate) fn evaluate_hull(hull: &[(f64, f64)], x: f64) -> f64 {
    let k = hull.partition_point(|&(hx, _)| hx < x);
    if k == hull.len() {
        return hull[k - 1].1;
    }
    let (x1, y1) = hull[k];
    if x1 == x || k == 0 {
        return y1;
    }
    let (x0, y0) = hull[k - 1];
    y0 + (y1 - y0) * (x - x0) / (x1 - x0)
}

/// Evaluates `F`, `G`, `G_e` and the convex minorant of `(F, G)` on `grid`.
///
/// The minorant is taken over the origin together with the grid points, so
/// it mirrors the diagram's starting point `(0, 0)`.
pub fn convergence_diagnostics(
    dist: &DiscreteDistribution,
    link: &LinkFunction,
    grid: &[f64],
) -> Result<ConvergenceDiagnostics> {
    if grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    for (i, &t) in grid.iter().enumerate() {
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::InvalidGrid(format!("t = {t} outside [0, 1]")));
        }
        if i > 0 && grid[i - 1] > t {
            return Err(Error::InvalidGrid("grid must be ascending".into()));
        }
    }
    let atoms = dist.atoms();
    let mut f = Vec::with_capacity(grid.len());
    let mut g = Vec::with_capacity(grid.len());
    let mut g_e = Vec::with_capacity(grid.len());
    for &t in grid {
        let below = atoms.iter().take_while(|a| a.f_value <= t);
        let (mut ft, mut gt, mut get) = (0.0, 0.0, 0.0);
        for a in below {
            ft += a.mass;
            gt += a.mass * a.positive_rate;
            get += a.mass * link.evaluate(a.f_value);
        }
        f.push(ft);
        g.push(gt);
        g_e.push(get);
    }
    let mut points = Vec::with_capacity(grid.len() + 1);
    points.push((0.0, 0.0));
    points.extend(f.iter().copied().zip(g.iter().copied()));
    let hull = lower_hull(&points);
    let cv_f = f.iter().map(|&x| evaluate_hull(&hull, x)).collect();
    Ok(ConvergenceDiagnostics {
        grid: grid.to_vec(),
        f,
        g,
        g_e,
        cv_f,
    })
}
