//! Synthetic LDA corpora with exactly known conditional probabilities.
//!
//! Each document draws a topic mixture `theta ~ Dirichlet(1, ..., 1)` and a
//! bag of words from it. Its label is positive when the target topic shows
//! up among `labels_per_doc` topics drawn from `theta` with replacement, so
//! `P(Y = 1 | theta) = 1 - (1 - theta_target)^labels_per_doc`.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::weighted::WeightedAliasIndex;
use rand_distr::{Exp1, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{domain, substream, DEFAULT_SEED};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaConfig {
    pub num_docs: usize,
    pub num_topics: usize,
    pub vocab_size: usize,
    pub avg_doc_len: f64,
    pub labels_per_doc: usize,
    pub target_topic: usize,
    pub power_law_exponent: f64,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self {
            num_docs: 20_000,
            num_topics: 20,
            vocab_size: 1000,
            avg_doc_len: 200.0,
            labels_per_doc: 10,
            target_topic: 0,
            power_law_exponent: 1.0,
            seed: DEFAULT_SEED,
        }
    }
}

impl LdaConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.num_docs == 0 || self.num_topics == 0 || self.vocab_size == 0 {
            return bad("document, topic and vocabulary counts must be positive".into());
        }
        if self.vocab_size > u32::MAX as usize {
            return bad(format!("vocabulary size {} too large", self.vocab_size));
        }
        if self.labels_per_doc == 0 {
            return bad("labels_per_doc must be positive".into());
        }
        if self.target_topic >= self.num_topics {
            return bad(format!(
                "target topic {} not below num_topics {}",
                self.target_topic, self.num_topics
            ));
        }
        if !(self.avg_doc_len.is_finite() && self.avg_doc_len > 0.0) {
            return bad(format!("avg_doc_len {} must be positive", self.avg_doc_len));
        }
        if !(self.power_law_exponent.is_finite() && self.power_law_exponent > 0.0) {
            return bad(format!(
                "power_law_exponent {} must be positive",
                self.power_law_exponent
            ));
        }
        Ok(())
    }

    /// `P(Y = 1 | theta)` for this configuration.
    pub fn true_probability(&self, theta: &[f64]) -> f64 {
        1.0 - (1.0 - theta[self.target_topic]).powi(self.labels_per_doc as i32)
    }
}

/// The observable part of a document: what the corpus file stores.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusRecord {
    pub label: u8,
    pub true_prob: f64,
    pub word_counts: BTreeMap<u32, u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaDocument {
    pub word_counts: BTreeMap<u32, u32>,
    pub theta: Vec<f64>,
    pub true_prob: f64,
    pub label: u8,
}

impl LdaDocument {
    pub fn record(&self) -> CorpusRecord {
        CorpusRecord {
            label: self.label,
            true_prob: self.true_prob,
            word_counts: self.word_counts.clone(),
        }
    }

    pub fn len(&self) -> u32 {
        self.word_counts.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.word_counts.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaCorpus {
    pub config: LdaConfig,
    /// Row-stochastic `num_topics x vocab_size` word distributions.
    pub topic_word: Vec<Vec<f64>>,
    pub documents: Vec<LdaDocument>,
}

impl LdaCorpus {
    pub fn records(&self) -> Vec<CorpusRecord> {
        self.documents.iter().map(LdaDocument::record).collect()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.documents.iter().map(|d| d.label).collect()
    }

    pub fn true_probs(&self) -> Vec<f64> {
        self.documents.iter().map(|d| d.true_prob).collect()
    }
}

/// Word probabilities proportional to `rank^-exponent`, ranks assigned by a
/// random permutation of the vocabulary.
fn power_law_topic(config: &LdaConfig, topic: usize) -> Vec<f64> {
    let mut rng = substream(config.seed, domain::TOPIC, topic as u64);
    let mut order: Vec<usize> = (0..config.vocab_size).collect();
    order.shuffle(&mut rng);
    let mut row = vec![0.0; config.vocab_size];
    for (rank, &word) in order.iter().enumerate() {
        row[word] = ((rank + 1) as f64).powf(-config.power_law_exponent);
    }
    let total: f64 = row.iter().sum();
    row.iter_mut().for_each(|p| *p /= total);
    row
}

fn sample_dirichlet_flat<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    draws.into_iter().map(|x| x / total).collect()
}

/// Generates a corpus; document `i` uses its own substream of the seed.
pub fn generate_corpus(config: &LdaConfig) -> Result<LdaCorpus> {
    config.validate()?;
    let topic_word: Vec<Vec<f64>> = (0..config.num_topics)
        .into_par_iter()
        .map(|t| power_law_topic(config, t))
        .collect();
    let samplers = topic_word
        .iter()
        .map(|row| WeightedAliasIndex::new(row.clone()))
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let length_dist =
        Poisson::new(config.avg_doc_len).map_err(|e| Error::InvalidConfig(e.to_string()))?;

    let documents = (0..config.num_docs)
        .into_par_iter()
        .map(|i| {
            let mut rng = substream(config.seed, domain::DOCUMENT, i as u64);
            let theta = sample_dirichlet_flat(&mut rng, config.num_topics);
            let topic_dist = WeightedIndex::new(&theta).expect("theta is a probability vector");
            let length = (length_dist.sample(&mut rng) as u64).max(1);
            let mut word_counts = BTreeMap::new();
            for _ in 0..length {
                let topic = topic_dist.sample(&mut rng);
                let word = samplers[topic].sample(&mut rng) as u32;
                *word_counts.entry(word).or_insert(0) += 1;
            }
            let hit = (0..config.labels_per_doc)
                .map(|_| topic_dist.sample(&mut rng))
                .fold(false, |hit, t| hit | (t == config.target_topic));
            LdaDocument {
                word_counts,
                true_prob: config.true_probability(&theta),
                theta,
                label: u8::from(hit),
            }
        })
        .collect();
    Ok(LdaCorpus {
        config: config.clone(),
        topic_word,
        documents,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusBaselines {
    pub label_frequency: f64,
    /// l1 error of always predicting `label_frequency`.
    pub trivial_l1: f64,
}

fn baselines<I>(pairs: I) -> Result<CorpusBaselines>
where
    I: Iterator<Item = (u8, f64)> + Clone,
{
    let n = pairs.clone().count();
    if n == 0 {
        return Err(Error::EmptyCorpus);
    }
    let freq = pairs.clone().map(|(y, _)| f64::from(y)).sum::<f64>() / n as f64;
    let l1 = pairs.map(|(_, p)| (freq - p).abs()).sum::<f64>() / n as f64;
    Ok(CorpusBaselines {
        label_frequency: freq,
        trivial_l1: l1,
    })
}

pub fn corpus_baselines(corpus: &LdaCorpus) -> Result<CorpusBaselines> {
    baselines(corpus.documents.iter().map(|d| (d.label, d.true_prob)))
}

pub fn record_baselines(records: &[CorpusRecord]) -> Result<CorpusBaselines> {
    baselines(records.iter().map(|r| (r.label, r.true_prob)))
}

const HEADER_TAG: &str = "# synthlda ";

/// Writes the corpus, one `label true_prob word:count ...` line per document
/// after a header comment holding the configuration.
pub fn export_corpus<W: Write>(corpus: &LdaCorpus, mut writer: W) -> Result<()> {
    let config = serde_json::to_string(&corpus.config).map_err(|e| Error::Io(e.to_string()))?;
    writeln!(writer, "{HEADER_TAG}{config}")?;
    for doc in &corpus.documents {
        write!(writer, "{} {:?}", doc.label, doc.true_prob)?;
        for (word, count) in &doc.word_counts {
            write!(writer, " {word}:{count}")?;
        }
        writeln!(writer)?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImportedCorpus {
    pub config: Option<LdaConfig>,
    pub records: Vec<CorpusRecord>,
}

/// Reads the format written by [`export_corpus`]. Lines starting with `#`
/// other than the header are ignored, as are blank lines.
pub fn import_corpus<R: BufRead>(reader: R) -> Result<ImportedCorpus> {
    let mut config = None;
    let mut records = Vec::new();
    for (index, line) in reader.lines().enumerate() {
        let line = line?;
        let number = index + 1;
        let err = |message: String| Error::Parse {
            line: number,
            message,
        };
        if let Some(json) = line.strip_prefix(HEADER_TAG) {
            config = Some(serde_json::from_str(json).map_err(|e| err(e.to_string()))?);
            continue;
        }
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let mut fields = trimmed.split_ascii_whitespace();
        let label = match fields.next() {
            Some("1") => 1,
            Some("0") => 0,
            other => return Err(err(format!("invalid label {other:?}"))),
        };
        let true_prob: f64 = fields
            .next()
            .and_then(|f| f.parse().ok())
            .filter(|p: &f64| (0.0..=1.0).contains(p))
            .ok_or_else(|| err("missing or invalid true probability".into()))?;
        let mut word_counts = BTreeMap::new();
        for pair in fields {
            let (w, c) = pair
                .split_once(':')
                .ok_or_else(|| err(format!("expected word:count, found `{pair}`")))?;
            let w: u32 = w.parse().map_err(|_| err(format!("invalid word `{w}`")))?;
            let c: u32 = c.parse().map_err(|_| err(format!("invalid count `{c}`")))?;
            *word_counts.entry(w).or_insert(0) += c;
        }
        records.push(CorpusRecord {
            label,
            true_prob,
            word_counts,
        });
    }
    Ok(ImportedCorpus { config, records })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> LdaConfig {
        LdaConfig {
            num_docs: 400,
            num_topics: 5,
            vocab_size: 60,
            avg_doc_len: 30.0,
            labels_per_doc: 3,
            target_topic: 2,
            power_law_exponent: 1.0,
            seed,
        }
    }

    #[test]
    fn single_topic_is_always_positive() {
        let cfg = LdaConfig {
            num_topics: 1,
            ..small(1)
        };
        let corpus = generate_corpus(&LdaConfig {
            target_topic: 0,
            ..cfg
        })
        .unwrap();
        for doc in &corpus.documents {
            assert_eq!(doc.theta, vec![1.0]);
            assert_eq!(doc.true_prob, 1.0);
            assert_eq!(doc.label, 1);
        }
        let b = corpus_baselines(&corpus).unwrap();
        assert_eq!((b.label_frequency, b.trivial_l1), (1.0, 0.0));
    }

    #[test]
    fn single_draw_probability_is_theta() {
        let cfg = LdaConfig {
            labels_per_doc: 1,
            ..small(2)
        };
        let corpus = generate_corpus(&cfg).unwrap();
        for doc in &corpus.documents {
            assert!((doc.true_prob - doc.theta[2]).abs() <= 1e-15);
        }
    }

    #[test]
    fn document_invariants() {
        let cfg = small(3);
        let corpus = generate_corpus(&cfg).unwrap();
        assert_eq!(corpus.documents.len(), cfg.num_docs);
        for row in &corpus.topic_word {
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
            let mut sorted = row.clone();
            sorted.sort_by(|a, b| b.total_cmp(a));
            // power law: p(rank r) / p(rank 1) = 1 / r
            assert!((sorted[1] / sorted[0] - 0.5).abs() <= 1e-12);
            assert!((sorted[9] / sorted[0] - 0.1).abs() <= 1e-12);
        }
        assert_ne!(corpus.topic_word[0], corpus.topic_word[1]);
        for doc in &corpus.documents {
            assert!((doc.theta.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            let expected = 1.0 - (1.0 - doc.theta[2]).powi(3);
            assert!((doc.true_prob - expected).abs() <= 1e-12);
            assert!(!doc.is_empty());
            assert!(doc
                .word_counts
                .keys()
                .all(|&w| (w as usize) < cfg.vocab_size));
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let cfg = small(4);
        let a = generate_corpus(&cfg).unwrap();
        let b = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap()
            .install(|| generate_corpus(&cfg).unwrap());
        assert_eq!(a, b);
        assert_ne!(a, generate_corpus(&small(5)).unwrap());
    }

    #[test]
    fn baselines_of_constant_probabilities() {
        let records = vec![
            CorpusRecord {
                label: 1,
                true_prob: 0.5,
                word_counts: BTreeMap::new(),
            },
            CorpusRecord {
                label: 0,
                true_prob: 0.5,
                word_counts: BTreeMap::new(),
            },
        ];
        let b = record_baselines(&records).unwrap();
        assert_eq!((b.label_frequency, b.trivial_l1), (0.5, 0.0));
        assert_eq!(record_baselines(&[]), Err(Error::EmptyCorpus));
    }

    #[test]
    fn export_import_round_trip() {
        let corpus = generate_corpus(&small(6)).unwrap();
        let mut buffer = Vec::new();
        export_corpus(&corpus, &mut buffer).unwrap();
        let text = String::from_utf8(buffer.clone()).unwrap();
        assert_eq!(text.lines().count(), corpus.documents.len() + 1);
        assert!(text.lines().skip(1).all(|l| l.contains(':')));
        let imported = import_corpus(buffer.as_slice()).unwrap();
        assert_eq!(imported.config.as_ref(), Some(&corpus.config));
        assert_eq!(imported.records, corpus.records());
        assert_eq!(
            record_baselines(&imported.records).unwrap(),
            corpus_baselines(&corpus).unwrap()
        );
    }

    #[test]
    fn import_errors_carry_line_numbers() {
        let text = "# synthlda {bad json}\n";
        assert!(matches!(
            import_corpus(text.as_bytes()),
            Err(Error::Parse { line: 1, .. })
        ));
        let text = "1 0.5 3:1\n2 0.5 3:1\n";
        assert!(matches!(
            import_corpus(text.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        let text = "1 0.5 3:1 4-2\n";
        assert!(import_corpus(text.as_bytes()).is_err());
        let text = "1 1.5 3:1\n";
        assert!(import_corpus(text.as_bytes()).is_err());
    }

    #[test]
    fn invalid_configs() {
        for cfg in [
            LdaConfig {
                num_docs: 0,
                ..small(0)
            },
            LdaConfig {
                target_topic: 5,
                ..small(0)
            },
            LdaConfig {
                power_law_exponent: 0.0,
                ..small(0)
            },
            LdaConfig {
                avg_doc_len: -1.0,
                ..small(0)
            },
            LdaConfig {
                labels_per_doc: 0,
                ..small(0)
            },
        ] {
            assert!(matches!(
                generate_corpus(&cfg),
                Err(Error::InvalidConfig(_))
            ));
        }
    }
}
