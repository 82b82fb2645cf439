//! Measuring and repairing the calibration of binary probability estimates.
//!
//! The crate covers the empirical interval-calibration measure, isotonic
//! recalibration by pool-adjacent-violators, cost-sensitive decisions,
//! Rademacher-complexity estimates for interval classes, a synthetic topic
//! model corpus, and two small sparse scorers used to produce raw scores.

pub mod complexity;
pub mod data;
pub mod decision;
pub mod error;
pub mod experiments;
pub mod measure;
pub mod models;
pub mod pav;
pub mod rng;
pub mod synthlda;

pub use complexity::{
    estimate_interval_rademacher, finite_output_bound, svm_witness, svm_witness_mean,
    theorem2_epsilon, ClassVariant, RademacherEstimate, SvmWitness,
};
pub use data::{
    canonicalize_labels, group_by_score, read_raw_scores_csv, read_scored_csv, sample_dataset,
    write_scored_csv, Atom, DiscreteDistribution, LabeledScore, ScoreGroup, ScoredDataset,
    SortedGroups,
};
pub use decision::{
    bayes_threshold, empirical_loss, expected_loss_on_distribution, loss_ratio_experiment,
    CostPair, LossRatio, LossSummary,
};
pub use error::{Error, Result};
pub use experiments::{
    holdout_train_config, lda_loss_ratio, reproduce_table1, table1_train_config,
    LdaLossRatioReport, Table1Report, TABLE1_REFERENCE,
};
pub use measure::{
    empirical_calibration, empirical_calibration_bruteforce, interval_deviation, l1_empirical,
    true_calibration, CalibrationReport, TrueCalibrationReport, WorstInterval,
};
pub use models::{
    predict_logistic, predict_naive_bayes, read_sparse_examples, rescale_scores, train_logistic,
    train_logistic_traced, train_naive_bayes, LogisticModel, Model, NaiveBayesModel, SparseExample,
    TrainConfig,
};
pub use pav::{
    apply_link, build_link, calibrate, convergence_diagnostics, fit_pav, ConvergenceDiagnostics,
    CumulativeDiagram, IsotonicFit, LinkFunction,
};
pub use rng::DEFAULT_SEED;
pub use synthlda::{
    corpus_baselines, export_corpus, generate_corpus, import_corpus, record_baselines,
    CorpusBaselines, CorpusRecord, ImportedCorpus, LdaConfig, LdaCorpus,
};
