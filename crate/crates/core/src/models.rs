//! Small sparse scorers: logistic regression and multinomial naive Bayes.

use std::io::BufRead;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::data::canonicalize_labels;
use crate::error::{Error, Result};
use crate::rng::{domain, substream, DEFAULT_SEED};
use crate::synthlda::CorpusRecord;

/// Sparse feature vector (index, value) with a `{0,1}` label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseExample {
    pub features: Vec<(u32, f64)>,
    pub label: u8,
}

impl SparseExample {
    /// Bag-of-words view of a corpus document, raw counts as values.
    pub fn from_record(record: &CorpusRecord) -> Self {
        Self {
            features: record
                .word_counts
                .iter()
                .map(|(&w, &c)| (w, f64::from(c)))
                .collect(),
            label: record.label,
        }
    }
}

fn check_dimension(features: &[(u32, f64)], dimension: usize) -> Result<()> {
    match features.iter().find(|(i, _)| *i as usize >= dimension) {
        Some((i, _)) => Err(Error::DimensionMismatch(format!(
            "feature index {i} outside dimension {dimension}"
        ))),
        None => Ok(()),
    }
}

/// Smallest dimension covering every feature index.
pub fn infer_dimension(examples: &[SparseExample]) -> usize {
    examples
        .iter()
        .flat_map(|e| e.features.iter().map(|(i, _)| *i as usize + 1))
        .max()
        .unwrap_or(0)
}

const UPPER: f64 = 1.0 - f64::EPSILON / 2.0;

/// `1 / (1 + exp(-margin))`, kept strictly inside `(0, 1)`.
pub fn sigmoid(margin: f64) -> f64 {
    let p = if margin >= 0.0 {
        1.0 / (1.0 + (-margin).exp())
    } else {
        let e = margin.exp();
        e / (1.0 + e)
    };
    p.clamp(f64::MIN_POSITIVE, UPPER)
}

/// `log(1 + exp(x))` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SparseWeights", into = "SparseWeights")]
pub struct LogisticModel {
    pub weights: Vec<f64>,
    pub bias: f64,
}

#[derive(Serialize, Deserialize)]
struct SparseWeights {
    dimension: usize,
    bias: f64,
    weights: Vec<(u32, f64)>,
}

impl TryFrom<SparseWeights> for LogisticModel {
    type Error = Error;

    fn try_from(repr: SparseWeights) -> Result<Self> {
        check_dimension(&repr.weights, repr.dimension)?;
        let mut weights = vec![0.0; repr.dimension];
        for (i, w) in repr.weights {
            weights[i as usize] = w;
        }
        Ok(Self {
            weights,
            bias: repr.bias,
        })
    }
}

impl From<LogisticModel> for SparseWeights {
    fn from(model: LogisticModel) -> Self {
        SparseWeights {
            dimension: model.weights.len(),
            bias: model.bias,
            weights: model
                .weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(i, &w)| (i as u32, w))
                .collect(),
        }
    }
}

impl LogisticModel {
    pub fn zeros(dimension: usize) -> Self {
        Self {
            weights: vec![0.0; dimension],
            bias: 0.0,
        }
    }

    pub fn dimension(&self) -> usize {
        self.weights.len()
    }

    fn margin(&self, features: &[(u32, f64)]) -> f64 {
        self.bias
            + features
                .iter()
                .map(|&(i, v)| self.weights[i as usize] * v)
                .sum::<f64>()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub l2: f64,
    pub seed: u64,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learning_rate: 0.1,
            epochs: 30,
            l2: 1e-4,
            seed: DEFAULT_SEED,
            batch_size: None,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "learning rate {} must be positive",
                self.learning_rate
            )));
        }
        if self.epochs == 0 {
            return Err(Error::InvalidConfig("epochs must be at least 1".into()));
        }
        if !(self.l2.is_finite() && self.l2 >= 0.0) {
            return Err(Error::InvalidConfig(format!("l2 {} must be >= 0", self.l2)));
        }
        if self.batch_size == Some(0) {
            return Err(Error::InvalidConfig("batch size must be positive".into()));
        }
        Ok(())
    }
}

fn validate_examples(examples: &[SparseExample], dimension: usize) -> Result<()> {
    if examples.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    for e in examples {
        check_dimension(&e.features, dimension)?;
        if e.label > 1 {
            return Err(Error::InvalidLabel {
                index: 0,
                value: f64::from(e.label),
            });
        }
        if e.features.iter().any(|(_, v)| !v.is_finite()) {
            return Err(Error::InvalidArguments("non-finite feature value".into()));
        }
    }
    Ok(())
}

/// Mean negative log-likelihood plus `l2 / 2 * ||w||^2` (bias unpenalized).
pub fn logistic_objective(model: &LogisticModel, examples: &[SparseExample], l2: f64) -> f64 {
    let nll: f64 = examples
        .iter()
        .map(|e| {
            let m = model.margin(&e.features);
            if e.label == 1 {
                softplus(-m)
            } else {
                softplus(m)
            }
        })
        .sum::<f64>()
        / examples.len() as f64;
    let penalty: f64 = model.weights.iter().map(|w| w * w).sum::<f64>() * l2 / 2.0;
    nll + penalty
}

/// Gradient of [`logistic_objective`] over `examples`: `(d/dw, d/db)`.
pub fn logistic_gradient(
    model: &LogisticModel,
    examples: &[&SparseExample],
    l2: f64,
) -> (Vec<f64>, f64) {
    let mut grad: Vec<f64> = model.weights.iter().map(|w| l2 * w).collect();
    let mut grad_bias = 0.0;
    let scale = 1.0 / examples.len() as f64;
    for e in examples {
        let m = model.margin(&e.features);
        let p = if m >= 0.0 {
            1.0 / (1.0 + (-m).exp())
        } else {
            let t = m.exp();
            t / (1.0 + t)
        };
        let residual = (p - f64::from(e.label)) * scale;
        grad_bias += residual;
        for &(i, v) in &e.features {
            grad[i as usize] += residual * v;
        }
    }
    (grad, grad_bias)
}

/// Trains by (mini-)batch gradient descent and records the objective before
/// the first epoch and after each one (`epochs + 1` values).
pub fn train_logistic_traced(
    examples: &[SparseExample],
    dimension: usize,
    config: &TrainConfig,
) -> Result<(LogisticModel, Vec<f64>)> {
    config.validate()?;
    validate_examples(examples, dimension)?;
    let mut model = LogisticModel::zeros(dimension);
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let batch = config
        .batch_size
        .unwrap_or(examples.len())
        .min(examples.len());
    let mut history = Vec::with_capacity(config.epochs + 1);
    history.push(logistic_objective(&model, examples, config.l2));
    for epoch in 0..config.epochs {
        if batch < examples.len() {
            order.shuffle(&mut substream(config.seed, domain::SHUFFLE, epoch as u64));
        }
        for chunk in order.chunks(batch) {
            let members: Vec<&SparseExample> = chunk.iter().map(|&i| &examples[i]).collect();
            let (grad, grad_bias) = logistic_gradient(&model, &members, config.l2);
            for (w, g) in model.weights.iter_mut().zip(&grad) {
                *w -= config.learning_rate * g;
            }
            model.bias -= config.learning_rate * grad_bias;
        }
        history.push(logistic_objective(&model, examples, config.l2));
    }
    Ok((model, history))
}

pub fn train_logistic(
    examples: &[SparseExample],
    dimension: usize,
    config: &TrainConfig,
) -> Result<LogisticModel> {
    train_logistic_traced(examples, dimension, config).map(|(m, _)| m)
}

pub fn predict_logistic(model: &LogisticModel, features: &[(u32, f64)]) -> Result<f64> {
    check_dimension(features, model.dimension())?;
    Ok(sigmoid(model.margin(features)))
}

/// Multinomial naive Bayes with additive smoothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    /// `[log P(y=0), log P(y=1)]`
    pub log_prior: [f64; 2],
    /// Per class, `log P(word | y)` over the vocabulary.
    pub log_likelihood: [Vec<f64>; 2],
    pub smoothing: f64,
}

impl NaiveBayesModel {
    pub fn dimension(&self) -> usize {
        self.log_likelihood[0].len()
    }
}

pub fn train_naive_bayes(
    examples: &[SparseExample],
    dimension: usize,
    smoothing: f64,
) -> Result<NaiveBayesModel> {
    if !(smoothing.is_finite() && smoothing > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "smoothing {smoothing} must be positive"
        )));
    }
    validate_examples(examples, dimension)?;
    let mut counts = [vec![0.0; dimension], vec![0.0; dimension]];
    let mut docs = [0usize; 2];
    for e in examples {
        let c = usize::from(e.label);
        docs[c] += 1;
        for &(i, v) in &e.features {
            counts[c][i as usize] += v;
        }
    }
    let n = examples.len() as f64;
    let log_prior = [0, 1].map(|c| ((docs[c] as f64 + smoothing) / (n + 2.0 * smoothing)).ln());
    let log_likelihood = counts.map(|row| {
        let total: f64 = row.iter().sum();
        let denom = total + smoothing * dimension as f64;
        row.iter()
            .map(|&c| ((c + smoothing) / denom).ln())
            .collect()
    });
    Ok(NaiveBayesModel {
        log_prior,
        log_likelihood,
        smoothing,
    })
}

pub fn predict_naive_bayes(model: &NaiveBayesModel, features: &[(u32, f64)]) -> Result<f64> {
    check_dimension(features, model.dimension())?;
    let score = |c: usize| {
        model.log_prior[c]
            + features
                .iter()
                .map(|&(i, v)| v * model.log_likelihood[c][i as usize])
                .sum::<f64>()
    };
    Ok(sigmoid(score(1) - score(0)))
}

/// A trained scorer of either family, tagged by `kind` when serialized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Model {
    Logistic(LogisticModel),
    NaiveBayes(NaiveBayesModel),
}

impl Model {
    pub fn predict(&self, features: &[(u32, f64)]) -> Result<f64> {
        match self {
            Model::Logistic(m) => predict_logistic(m, features),
            Model::NaiveBayes(m) => predict_naive_bayes(m, features),
        }
    }
}

/// Affine map of raw margins onto `[0, 1]`: min to 0, max to 1.
pub fn rescale_scores(raw: &[f64]) -> Result<Vec<f64>> {
    if raw.is_empty() {
        return Err(Error::EmptyInput);
    }
    if let Some(v) = raw.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidArguments(format!("non-finite score {v}")));
    }
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if min == max {
        return Err(Error::ConstantScores(min));
    }
    Ok(raw.iter().map(|x| (x - min) / (max - min)).collect())
}

/// Reads `label idx:val idx:val ...` lines; labels in `{0,1}` or `{-1,1}`.
pub fn read_sparse_examples<R: BufRead>(reader: R) -> Result<Vec<SparseExample>> {
    let mut raw_labels = Vec::new();
    let mut feature_rows = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        let number = index + 1;
        let err = |message: String| Error::Parse {
            line: number,
            message,
        };
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_ascii_whitespace();
        let label: f64 = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| err("missing label".into()))?;
        canonicalize_labels(&[label]).map_err(|e| err(e.to_string()))?;
        let mut features = Vec::new();
        for pair in fields {
            let (i, v) = pair
                .split_once(':')
                .ok_or_else(|| err(format!("expected idx:val, found `{pair}`")))?;
            let i: u32 = i.parse().map_err(|_| err(format!("invalid index `{i}`")))?;
            let v: f64 = v
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| err(format!("invalid value `{v}`")))?;
            features.push((i, v));
        }
        features.sort_by_key(|(i, _)| *i);
        raw_labels.push((number, label));
        feature_rows.push(features);
    }
    let labels = canonicalize_labels(&raw_labels.iter().map(|(_, l)| *l).collect::<Vec<_>>())
        .map_err(|e| {
            let line = match e {
                Error::InvalidLabel { index, .. } => raw_labels[index].0,
                _ => raw_labels.last().map_or(0, |(l, _)| *l),
            };
            Error::Parse {
                line,
                message: e.to_string(),
            }
        })?;
    Ok(feature_rows
        .into_iter()
        .zip(labels)
        .map(|(features, label)| SparseExample { features, label })
        .collect())
}
