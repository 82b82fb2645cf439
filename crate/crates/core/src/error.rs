use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("input is empty")]
    EmptyInput,
    #[error("invalid label {value} at index {index}: expected -1, 0 or 1")]
    InvalidLabel { index: usize, value: f64 },
    #[error("labels mix the {{0,1}} and {{-1,1}} conventions")]
    MixedLabelConvention,
    #[error("score {value} at index {index} is outside [0, 1]")]
    ScoreOutOfRange { index: usize, value: f64 },
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("isotonic fit has {fit} values but the dataset has {dataset} samples")]
    FitDatasetMismatch { fit: usize, dataset: usize },
    #[error("evaluation grid is empty")]
    EmptyGrid,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("loss before calibration is zero at p = {p} but {after} after calibration")]
    PreLossZero { p: f64, after: f64 },
    #[error("invalid cost pair: a = {a}, b = {b}")]
    InvalidCost { a: f64, b: f64 },
    #[error("threshold {0} is outside [0, 1]")]
    InvalidThreshold(f64),
    #[error("delta {0} is outside (0, 1)")]
    InvalidDelta(f64),
    #[error("invalid arguments: {0}")]
    InvalidArguments(String),
    #[error("rows are linearly dependent (min/max Gram eigenvalue ratio {ratio:e})")]
    RankDeficient { ratio: f64 },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("all scores are equal ({0}); cannot rescale")]
    ConstantScores(f64),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o failure: {0}")]
    Io(String),
}

impl Error {
    /// Whether the error stems from reading or writing files rather than from
    /// invalid input values.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}

impl From<std::io::Error> for Error {
    fn from(err: std::io::Error) -> Self {
        Error::Io(err.to_string())
    }
}
