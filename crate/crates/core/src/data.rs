//! Scored, labeled samples and the tie-pooled view every measure runs on.

use std::io::{Read, Write};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{domain, substream};

/// A classifier output `f(X)` in `[0, 1]` paired with a label in `{0, 1}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabeledScore {
    score: f64,
    label: u8,
}

impl LabeledScore {
    pub fn new(score: f64, label: u8) -> Result<Self> {
        Self::at(0, score, label)
    }

    fn at(index: usize, score: f64, label: u8) -> Result<Self> {
        check_score(index, score)?;
        if label > 1 {
            return Err(Error::InvalidLabel {
                index,
                value: f64::from(label),
            });
        }
        Ok(Self { score, label })
    }

    pub fn score(&self) -> f64 {
        self.score
    }

    pub fn label(&self) -> u8 {
        self.label
    }

    pub fn is_positive(&self) -> bool {
        self.label == 1
    }
}

pub(crate) fn check_score(index: usize, score: f64) -> Result<()> {
    if score.is_finite() && (0.0..=1.0).contains(&score) {
        Ok(())
    } else {
        Err(Error::ScoreOutOfRange {
            index,
            value: score,
        })
    }
}

/// An ordered collection of [`LabeledScore`]s.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoredDataset {
    samples: Vec<LabeledScore>,
}

impl ScoredDataset {
    pub fn new(samples: Vec<LabeledScore>) -> Self {
        Self { samples }
    }

    /// Builds a dataset from parallel score and `{0,1}` label slices.
    pub fn from_parts(scores: &[f64], labels: &[u8]) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::LengthMismatch {
                left: scores.len(),
                right: labels.len(),
            });
        }
        let samples = scores
            .iter()
            .zip(labels)
            .enumerate()
            .map(|(i, (&s, &y))| LabeledScore::at(i, s, y))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { samples })
    }

    pub fn samples(&self) -> &[LabeledScore] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn scores(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.score).collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.samples.iter().map(|s| s.label).collect()
    }

    pub fn positives(&self) -> usize {
        self.samples.iter().filter(|s| s.is_positive()).count()
    }

    /// Same labels, new scores.
    pub fn with_scores(&self, scores: &[f64]) -> Result<Self> {
        Self::from_parts(scores, &self.labels())
    }

    pub(crate) fn ensure_nonempty(&self) -> Result<()> {
        if self.samples.is_empty() {
            Err(Error::EmptyDataset)
        } else {
            Ok(())
        }
    }

    /// Samples sorted ascending by score; ties keep their input order.
    pub fn sorted(&self) -> Vec<LabeledScore> {
        let mut sorted = self.samples.clone();
        sorted.sort_by(|a, b| a.score.total_cmp(&b.score));
        sorted
    }
}

/// All samples sharing one exact score value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoreGroup {
    pub score: f64,
    pub count: usize,
    pub positives: usize,
}

impl ScoreGroup {
    /// Positive-label count minus the score mass of the group.
    pub fn deviation(&self) -> f64 {
        self.positives as f64 - self.count as f64 * self.score
    }
}

/// Score groups in strictly ascending score order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SortedGroups {
    groups: Vec<ScoreGroup>,
    n: usize,
}

impl SortedGroups {
    pub fn groups(&self) -> &[ScoreGroup] {
        &self.groups
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }
}

/// Pools samples with exactly equal scores.
pub fn group_by_score(dataset: &ScoredDataset) -> Result<SortedGroups> {
    dataset.ensure_nonempty()?;
    let sorted = dataset.sorted();
    let mut groups: Vec<ScoreGroup> = Vec::new();
    for sample in &sorted {
        match groups.last_mut() {
            Some(last) if last.score == sample.score => {
                last.count += 1;
                last.positives += usize::from(sample.label);
            }
            _ => groups.push(ScoreGroup {
                score: sample.score,
                count: 1,
                positives: usize::from(sample.label),
            }),
        }
    }
    Ok(SortedGroups {
        groups,
        n: sorted.len(),
    })
}

/// Maps raw labels to `{0,1}`: `-1 -> 0`, `0 -> 0`, `1 -> 1`.
pub fn canonicalize_labels(raw: &[f64]) -> Result<Vec<u8>> {
    let mut saw_minus = false;
    let mut saw_zero = false;
    let mut out = Vec::with_capacity(raw.len());
    for (index, &value) in raw.iter().enumerate() {
        let label = if value == 1.0 {
            1
        } else if value == -1.0 {
            saw_minus = true;
            0
        } else if value == 0.0 {
            saw_zero = true;
            0
        } else {
            return Err(Error::InvalidLabel { index, value });
        };
        out.push(label);
    }
    if saw_minus && saw_zero {
        return Err(Error::MixedLabelConvention);
    }
    Ok(out)
}

/// One level set of a classifier: where `f` outputs `f_value`, with
/// probability `mass` and `P(Y=1 | region) = positive_rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub f_value: f64,
    pub mass: f64,
    pub positive_rate: f64,
}

impl Atom {
    pub fn new(f_value: f64, mass: f64, positive_rate: f64) -> Self {
        Self {
            f_value,
            mass,
            positive_rate,
        }
    }
}

/// An explicit finite joint distribution of `(f(X), Y)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Atom>", into = "Vec<Atom>")]
pub struct DiscreteDistribution {
    atoms: Vec<Atom>,
}

pub const MASS_TOLERANCE: f64 = 1e-12;

impl DiscreteDistribution {
    pub fn new(atoms: Vec<Atom>) -> Result<Self> {
        if atoms.is_empty() {
            return Err(Error::InvalidDistribution("no atoms".into()));
        }
        for (i, atom) in atoms.iter().enumerate() {
            if !(atom.f_value.is_finite() && (0.0..=1.0).contains(&atom.f_value)) {
                return Err(Error::InvalidDistribution(format!(
                    "atom {i}: f value {} outside [0, 1]",
                    atom.f_value
                )));
            }
            if !(atom.mass > 0.0 && atom.mass <= 1.0) {
                return Err(Error::InvalidDistribution(format!(
                    "atom {i}: mass {} outside (0, 1]",
                    atom.mass
                )));
            }
            if !(0.0..=1.0).contains(&atom.positive_rate) {
                return Err(Error::InvalidDistribution(format!(
                    "atom {i}: positive rate {} outside [0, 1]",
                    atom.positive_rate
                )));
            }
        }
        if let Some(w) = atoms.windows(2).find(|w| w[0].f_value >= w[1].f_value) {
            return Err(Error::InvalidDistribution(format!(
                "f values not strictly ascending at {}",
                w[1].f_value
            )));
        }
        let total: f64 = atoms.iter().map(|a| a.mass).sum();
        if (total - 1.0).abs() > MASS_TOLERANCE {
            return Err(Error::InvalidDistribution(format!("masses sum to {total}")));
        }
        Ok(Self { atoms })
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// `P(Y = 1)`.
    pub fn positive_probability(&self) -> f64 {
        self.atoms.iter().map(|a| a.mass * a.positive_rate).sum()
    }

    /// True when `P(Y=1 | f)` is nondecreasing in `f`.
    pub fn is_monotone(&self) -> bool {
        self.atoms
            .windows(2)
            .all(|w| w[0].positive_rate <= w[1].positive_rate)
    }
}

impl TryFrom<Vec<Atom>> for DiscreteDistribution {
    type Error = Error;

    fn try_from(atoms: Vec<Atom>) -> Result<Self> {
        Self::new(atoms)
    }
}

impl From<DiscreteDistribution> for Vec<Atom> {
    fn from(dist: DiscreteDistribution) -> Self {
        dist.atoms
    }
}

/// Draws `n` i.i.d. samples: atom by mass, label ~ Bernoulli(positive rate).
///
/// Sample `i` uses its own substream of `seed`, so the output is identical
/// for any thread count.
pub fn sample_dataset(dist: &DiscreteDistribution, n: usize, seed: u64) -> Result<ScoredDataset> {
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    let mut cumulative = Vec::with_capacity(dist.atoms.len());
    let mut acc = 0.0;
    for atom in &dist.atoms {
        acc += atom.mass;
        cumulative.push(acc);
    }
    let last = dist.atoms.len() - 1;
    let samples = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(seed, domain::SAMPLE, i as u64);
            let u: f64 = rng.random::<f64>() * acc;
            let k = cumulative.partition_point(|&c| c <= u).min(last);
            let atom = &dist.atoms[k];
            let label = u8::from(rng.random::<f64>() < atom.positive_rate);
            LabeledScore {
                score: atom.f_value,
                label,
            }
        })
        .collect();
    Ok(ScoredDataset { samples })
}

/// Reads `score,label` CSV. Labels may use `{0,1}` or `{-1,1}`.
pub fn read_scored_csv<R: Read>(reader: R) -> Result<ScoredDataset> {
    let (scores, labels) = parse_score_csv(reader, true)?;
    ScoredDataset::from_parts(&scores, &labels)
}

/// Like [`read_scored_csv`], but scores may be any finite reals (raw
/// margins to be rescaled).
pub fn read_raw_scores_csv<R: Read>(reader: R) -> Result<(Vec<f64>, Vec<u8>)> {
    parse_score_csv(reader, false)
}

fn parse_score_csv<R: Read>(reader: R, unit_scores: bool) -> Result<(Vec<f64>, Vec<u8>)> {
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = csv.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    if headers.len() != 2 || &headers[0] != "score" || &headers[1] != "label" {
        return Err(Error::Parse {
            line: 1,
            message: "expected header `score,label`".into(),
        });
    }
    let mut scores = Vec::new();
    let mut raw_labels = Vec::new();
    let mut saw_minus = None;
    let mut saw_zero = None;
    for record in csv.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let parse = |field: &str, what: &str| -> Result<f64> {
            field.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("invalid {what} `{field}`"),
            })
        };
        if record.len() != 2 {
            return Err(Error::Parse {
                line,
                message: format!("expected 2 fields, found {}", record.len()),
            });
        }
        let score = parse(&record[0], "score")?;
        if !score.is_finite() || (unit_scores && !(0.0..=1.0).contains(&score)) {
            return Err(Error::Parse {
                line,
                message: format!("score {score} outside [0, 1]"),
            });
        }
        let label = parse(&record[1], "label")?;
        if label == -1.0 {
            saw_minus.get_or_insert(line);
        } else if label == 0.0 {
            saw_zero.get_or_insert(line);
        } else if label != 1.0 {
            return Err(Error::Parse {
                line,
                message: format!("label {label} not in {{-1, 0, 1}}"),
            });
        }
        if let (Some(a), Some(b)) = (saw_minus, saw_zero) {
            return Err(Error::Parse {
                line: a.max(b),
                message: Error::MixedLabelConvention.to_string(),
            });
        }
        scores.push(score);
        raw_labels.push(label);
    }
    Ok((scores, canonicalize_labels(&raw_labels)?))
}

/// Writes `score,label` CSV with shortest round-trip float formatting.
pub fn write_scored_csv<W: Write>(dataset: &ScoredDataset, mut writer: W) -> Result<()> {
    writeln!(writer, "score,label")?;
    for s in &dataset.samples {
        writeln!(writer, "{:?},{}", s.score, s.label)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ds(scores: &[f64], labels: &[u8]) -> ScoredDataset {
        ScoredDataset::from_parts(scores, labels).unwrap()
    }

    #[test]
    fn canonicalize_examples() {
        assert_eq!(
            canonicalize_labels(&[-1.0, 1.0, 1.0]).unwrap(),
            vec![0, 1, 1]
        );
        assert_eq!(
            canonicalize_labels(&[0.0, 1.0, 0.0]).unwrap(),
            vec![0, 1, 0]
        );
        assert_eq!(
            canonicalize_labels(&[-1.0, 0.0, 1.0]),
            Err(Error::MixedLabelConvention)
        );
        assert!(matches!(
            canonicalize_labels(&[1.0, 2.0]),
            Err(Error::InvalidLabel { index: 1, .. })
        ));
    }

    #[test]
    fn group_examples() {
        let g = group_by_score(&ds(&[0.5, 0.5, 0.2], &[1, 0, 1])).unwrap();
        assert_eq!(
            g.groups(),
            &[
                ScoreGroup {
                    score: 0.2,
                    count: 1,
                    positives: 1
                },
                ScoreGroup {
                    score: 0.5,
                    count: 2,
                    positives: 1
                },
            ]
        );
        assert_eq!(g.n(), 3);

        let g = group_by_score(&ds(&[0.7], &[1])).unwrap();
        assert_eq!(
            g.groups(),
            &[ScoreGroup {
                score: 0.7,
                count: 1,
                positives: 1
            }]
        );

        let g = group_by_score(&ds(&[0.9, 0.1, 0.4], &[0, 1, 1])).unwrap();
        let scores: Vec<f64> = g.groups().iter().map(|g| g.score).collect();
        assert_eq!(scores, vec![0.1, 0.4, 0.9]);
        assert!(g.groups().iter().all(|g| g.count == 1));

        assert_eq!(
            group_by_score(&ScoredDataset::default()),
            Err(Error::EmptyDataset)
        );
    }

    #[test]
    fn rejects_out_of_range_scores() {
        assert!(matches!(
            ScoredDataset::from_parts(&[0.2, 1.5], &[0, 1]),
            Err(Error::ScoreOutOfRange { index: 1, .. })
        ));
        assert!(LabeledScore::new(f64::NAN, 0).is_err());
        assert!(LabeledScore::new(0.5, 2).is_err());
    }

    #[test]
    fn degenerate_sampling() {
        let d = DiscreteDistribution::new(vec![Atom::new(0.5, 1.0, 1.0)]).unwrap();
        let s = sample_dataset(&d, 3, 1).unwrap();
        assert_eq!(s.scores(), vec![0.5; 3]);
        assert_eq!(s.labels(), vec![1; 3]);

        let d = DiscreteDistribution::new(vec![Atom::new(0.3, 1.0, 0.0)]).unwrap();
        let s = sample_dataset(&d, 2, 1).unwrap();
        assert_eq!(s.scores(), vec![0.3; 2]);
        assert_eq!(s.labels(), vec![0; 2]);
    }

    #[test]
    fn sampling_frequency_matches_mixture() {
        let d = DiscreteDistribution::new(vec![Atom::new(0.2, 0.5, 0.2), Atom::new(0.8, 0.5, 0.8)])
            .unwrap();
        let s = sample_dataset(&d, 100_000, 42).unwrap();
        let freq = s.positives() as f64 / s.len() as f64;
        assert!((freq - 0.5).abs() < 0.01, "{freq}");
        let low = s.samples().iter().filter(|x| x.score() == 0.2).count() as f64;
        assert!((low / 1e5 - 0.5).abs() < 0.01);
    }

    #[test]
    fn sampling_independent_of_thread_count() {
        let d = DiscreteDistribution::new(vec![Atom::new(0.1, 0.3, 0.4), Atom::new(0.6, 0.7, 0.5)])
            .unwrap();
        let one = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| sample_dataset(&d, 5000, 9).unwrap());
        let many = rayon::ThreadPoolBuilder::new()
            .num_threads(4)
            .build()
            .unwrap()
            .install(|| sample_dataset(&d, 5000, 9).unwrap());
        assert_eq!(one, many);
    }

    #[test]
    fn distribution_validation() {
        assert!(DiscreteDistribution::new(vec![]).is_err());
        assert!(DiscreteDistribution::new(vec![Atom::new(0.5, 0.5, 0.5)]).is_err());
        assert!(DiscreteDistribution::new(vec![
            Atom::new(0.5, 0.5, 0.5),
            Atom::new(0.5, 0.5, 0.5)
        ])
        .is_err());
        assert!(DiscreteDistribution::new(vec![Atom::new(1.2, 1.0, 0.5)]).is_err());
        assert!(DiscreteDistribution::new(vec![Atom::new(0.2, 1.0, 1.5)]).is_err());
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let text = "score,label\n0.25,-1\n0.75,1\n";
        let d = read_scored_csv(text.as_bytes()).unwrap();
        assert_eq!(d.labels(), vec![0, 1]);
        let mut out = Vec::new();
        write_scored_csv(&d, &mut out).unwrap();
        assert_eq!(read_scored_csv(out.as_slice()).unwrap(), d);

        let bad = "score,label\n0.25,1\n1.5,0\n";
        assert!(matches!(
            read_scored_csv(bad.as_bytes()),
            Err(Error::Parse { line: 3, .. })
        ));
        let mixed = "score,label\n0.25,-1\n0.5,1\n0.75,0\n";
        assert!(matches!(
            read_scored_csv(mixed.as_bytes()),
            Err(Error::Parse { line: 4, .. })
        ));
        let junk = "score,label\n0.25,yes\n";
        assert!(matches!(
            read_scored_csv(junk.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(read_scored_csv("s,l\n0.1,1\n".as_bytes()).is_err());
    }
}
