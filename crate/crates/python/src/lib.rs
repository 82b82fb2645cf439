//! Python bindings: calibration measure, PAV recalibration, decisions,
//! complexity bounds, the synthetic corpus and the sparse scorers.

use calmeasure as cm;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyDict, PyList};
use serde_json::Value;

fn to_py_err(err: cm::Error) -> PyErr {
    if err.is_io() {
        PyIOError::new_err(err.to_string())
    } else {
        PyValueError::new_err(err.to_string())
    }
}

trait IntoPyResult<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPyResult<T> for cm::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(to_py_err)
    }
}

/// Converts a serialized report into plain Python objects.
fn json_to_py<'py>(py: Python<'py>, value: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match value {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match (n.as_i64(), n.as_u64()) {
            (Some(i), _) => i.into_pyobject(py)?.into_any(),
            (None, Some(u)) => u.into_pyobject(py)?.into_any(),
            _ => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(json_to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, v) in map {
                dict.set_item(k, json_to_py(py, v)?)?;
            }
            dict.into_any()
        }
    })
}

fn report<'py, T: serde::Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let json = serde_json::to_value(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    json_to_py(py, &json)
}

fn dataset(scores: &[f64], labels: &[f64]) -> PyResult<cm::ScoredDataset> {
    let labels = cm::canonicalize_labels(labels).py()?;
    cm::ScoredDataset::from_parts(scores, &labels).py()
}

fn distribution(atoms: Vec<(f64, f64, f64)>) -> PyResult<cm::DiscreteDistribution> {
    cm::DiscreteDistribution::new(
        atoms
            .into_iter()
            .map(|(f, m, r)| cm::Atom::new(f, m, r))
            .collect(),
    )
    .py()
}

/// Labeled scores; labels may be given as {0, 1} or {-1, 1}.
#[pyclass(name = "ScoredDataset", frozen)]
struct PyScoredDataset {
    inner: cm::ScoredDataset,
}

#[pymethods]
impl PyScoredDataset {
    #[new]
    fn new(scores: Vec<f64>, labels: Vec<f64>) -> PyResult<Self> {
        Ok(Self {
            inner: dataset(&scores, &labels)?,
        })
    }

    #[staticmethod]
    fn read_csv(path: std::path::PathBuf) -> PyResult<Self> {
        let file = std::fs::File::open(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        Ok(Self {
            inner: cm::read_scored_csv(file).py()?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn scores(&self) -> Vec<f64> {
        self.inner.scores()
    }

    #[getter]
    fn labels(&self) -> Vec<u8> {
        self.inner.labels()
    }

    /// The empirical calibration report as a dict.
    fn calibration<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        report(py, &cm::empirical_calibration(&self.inner).py()?)
    }

    fn c_emp(&self) -> PyResult<f64> {
        Ok(cm::empirical_calibration(&self.inner).py()?.c_emp)
    }
}

/// Monotone piecewise-linear recalibration map.
#[pyclass(name = "LinkFunction", frozen)]
struct PyLinkFunction {
    inner: cm::LinkFunction,
}

#[pymethods]
impl PyLinkFunction {
    #[new]
    fn new(knots: Vec<(f64, f64)>) -> PyResult<Self> {
        Ok(Self {
            inner: cm::LinkFunction::new(knots).py()?,
        })
    }

    #[getter]
    fn knots(&self) -> Vec<(f64, f64)> {
        self.inner.knots().to_vec()
    }

    fn __call__(&self, score: f64) -> f64 {
        self.inner.evaluate(score)
    }

    fn apply(&self, scores: Vec<f64>) -> PyResult<Vec<f64>> {
        cm::apply_link(&self.inner, &scores).py()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let inner = serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?;
        Ok(Self { inner })
    }
}

/// Fits PAV on the dataset and returns the link.
#[pyfunction]
fn calibrate(data: &PyScoredDataset) -> PyResult<PyLinkFunction> {
    Ok(PyLinkFunction {
        inner: cm::calibrate(&data.inner).py()?,
    })
}

#[pyfunction]
fn empirical_calibration<'py>(
    py: Python<'py>,
    scores: Vec<f64>,
    labels: Vec<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    report(
        py,
        &cm::empirical_calibration(&dataset(&scores, &labels)?).py()?,
    )
}

/// Population measure of a distribution given as `(f_value, mass, positive_rate)` atoms.
#[pyfunction]
fn true_calibration<'py>(
    py: Python<'py>,
    atoms: Vec<(f64, f64, f64)>,
) -> PyResult<Bound<'py, PyAny>> {
    report(py, &cm::true_calibration(&distribution(atoms)?))
}

#[pyfunction]
fn sample_dataset(atoms: Vec<(f64, f64, f64)>, n: usize, seed: u64) -> PyResult<PyScoredDataset> {
    Ok(PyScoredDataset {
        inner: cm::sample_dataset(&distribution(atoms)?, n, seed).py()?,
    })
}

#[pyfunction]
fn l1_empirical(scores: Vec<f64>, true_probs: Vec<f64>) -> PyResult<f64> {
    cm::l1_empirical(&scores, &true_probs).py()
}

#[pyfunction]
fn bayes_threshold(fp_cost: f64, fn_cost: f64) -> PyResult<f64> {
    Ok(cm::bayes_threshold(
        cm::CostPair::new(fp_cost, fn_cost).py()?,
    ))
}

#[pyfunction]
fn empirical_loss<'py>(
    py: Python<'py>,
    data: &PyScoredDataset,
    threshold: f64,
    fp_cost: f64,
    fn_cost: f64,
) -> PyResult<Bound<'py, PyAny>> {
    let costs = cm::CostPair::new(fp_cost, fn_cost).py()?;
    report(py, &cm::empirical_loss(&data.inner, threshold, costs).py()?)
}

#[pyfunction]
fn loss_ratio_experiment<'py>(
    py: Python<'py>,
    validation: &PyScoredDataset,
    test: &PyScoredDataset,
    p_grid: Vec<f64>,
) -> PyResult<Bound<'py, PyAny>> {
    report(
        py,
        &cm::loss_ratio_experiment(&validation.inner, &test.inner, &p_grid).py()?,
    )
}

#[pyfunction]
#[pyo3(signature = (data, variant = "H", num_sigma = 1000, seed = cm::DEFAULT_SEED))]
fn estimate_interval_rademacher<'py>(
    py: Python<'py>,
    data: &PyScoredDataset,
    variant: &str,
    num_sigma: u64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let variant: cm::ClassVariant = variant.parse().py()?;
    let est = py
        .detach(|| cm::estimate_interval_rademacher(&data.inner, variant, num_sigma, seed))
        .py()?;
    report(py, &est)
}

#[pyfunction]
fn theorem2_epsilon(rademacher: f64, n: usize, delta: f64) -> PyResult<f64> {
    cm::theorem2_epsilon(rademacher, n, delta).py()
}

#[pyfunction]
fn finite_output_bound(d: usize, n: usize, p_star_size: usize) -> PyResult<f64> {
    cm::finite_output_bound(d, n, p_star_size).py()
}

#[pyfunction]
fn svm_witness_mean(rows: Vec<Vec<f64>>, lambda_magnitude: f64) -> PyResult<f64> {
    cm::svm_witness_mean(&rows, lambda_magnitude).py()
}

#[pyfunction]
fn rescale_scores(raw: Vec<f64>) -> PyResult<Vec<f64>> {
    cm::rescale_scores(&raw).py()
}

/// Generates a corpus and returns its labels, true probabilities, word
/// counts and baselines.
#[pyfunction]
#[pyo3(signature = (num_docs = 20000, num_topics = 20, vocab_size = 1000, avg_doc_len = 200.0,
    labels_per_doc = 10, target_topic = 0, power_law_exponent = 1.0, seed = cm::DEFAULT_SEED))]
#[allow(clippy::too_many_arguments)]
fn simulate_lda<'py>(
    py: Python<'py>,
    num_docs: usize,
    num_topics: usize,
    vocab_size: usize,
    avg_doc_len: f64,
    labels_per_doc: usize,
    target_topic: usize,
    power_law_exponent: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let config = cm::LdaConfig {
        num_docs,
        num_topics,
        vocab_size,
        avg_doc_len,
        labels_per_doc,
        target_topic,
        power_law_exponent,
        seed,
    };
    let corpus = py.detach(|| cm::generate_corpus(&config)).py()?;
    let out = PyDict::new(py);
    out.set_item("labels", corpus.labels())?;
    out.set_item("true_probs", corpus.true_probs())?;
    let docs = PyList::empty(py);
    for d in &corpus.documents {
        docs.append(
            d.word_counts
                .iter()
                .map(|(&w, &c)| (w, c))
                .collect::<Vec<_>>(),
        )?;
    }
    out.set_item("word_counts", docs)?;
    out.set_item(
        "baselines",
        report(py, &cm::corpus_baselines(&corpus).py()?)?,
    )?;
    out.set_item("config", report(py, &config)?)?;
    Ok(out.into_any())
}

/// Logistic regression over sparse `{index: value}` features.
#[pyclass(name = "LogisticModel", frozen)]
struct PyLogisticModel {
    inner: cm::LogisticModel,
}

#[pymethods]
impl PyLogisticModel {
    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights.clone()
    }

    #[getter]
    fn bias(&self) -> f64 {
        self.inner.bias
    }

    fn predict(&self, features: Vec<(u32, f64)>) -> PyResult<f64> {
        cm::predict_logistic(&self.inner, &features).py()
    }

    fn to_json(&self) -> PyResult<String> {
        serde_json::to_string(&self.inner).map_err(|e| PyValueError::new_err(e.to_string()))
    }
}

fn examples(features: Vec<Vec<(u32, f64)>>, labels: Vec<f64>) -> PyResult<Vec<cm::SparseExample>> {
    if features.len() != labels.len() {
        return Err(to_py_err(cm::Error::LengthMismatch {
            left: features.len(),
            right: labels.len(),
        }));
    }
    let labels = cm::canonicalize_labels(&labels).py()?;
    Ok(features
        .into_iter()
        .zip(labels)
        .map(|(mut features, label)| {
            features.sort_by_key(|(i, _)| *i);
            cm::SparseExample { features, label }
        })
        .collect())
}

#[pyfunction]
#[pyo3(signature = (features, labels, dimension, learning_rate = 0.1, epochs = 30, l2 = 1e-4,
    seed = cm::DEFAULT_SEED, batch_size = None))]
#[allow(clippy::too_many_arguments)]
fn train_logistic(
    py: Python<'_>,
    features: Vec<Vec<(u32, f64)>>,
    labels: Vec<f64>,
    dimension: usize,
    learning_rate: f64,
    epochs: usize,
    l2: f64,
    seed: u64,
    batch_size: Option<usize>,
) -> PyResult<PyLogisticModel> {
    let examples = examples(features, labels)?;
    let config = cm::TrainConfig {
        learning_rate,
        epochs,
        l2,
        seed,
        batch_size,
    };
    let inner = py
        .detach(|| cm::train_logistic(&examples, dimension, &config))
        .py()?;
    Ok(PyLogisticModel { inner })
}

/// Multinomial naive Bayes with additive smoothing.
#[pyclass(name = "NaiveBayesModel", frozen)]
struct PyNaiveBayesModel {
    inner: cm::NaiveBayesModel,
}

#[pymethods]
impl PyNaiveBayesModel {
    #[getter]
    fn log_prior(&self) -> (f64, f64) {
        (self.inner.log_prior[0], self.inner.log_prior[1])
    }

    fn predict(&self, features: Vec<(u32, f64)>) -> PyResult<f64> {
        cm::predict_naive_bayes(&self.inner, &features).py()
    }
}

#[pyfunction]
#[pyo3(signature = (features, labels, dimension, smoothing = 1.0))]
fn train_naive_bayes(
    features: Vec<Vec<(u32, f64)>>,
    labels: Vec<f64>,
    dimension: usize,
    smoothing: f64,
) -> PyResult<PyNaiveBayesModel> {
    let examples = examples(features, labels)?;
    Ok(PyNaiveBayesModel {
        inner: cm::train_naive_bayes(&examples, dimension, smoothing).py()?,
    })
}

/// Runs the topic-model benchmark (corpus, logistic fit, l1 and `c_emp`).
#[pyfunction]
#[pyo3(signature = (num_docs = 20000, seed = cm::DEFAULT_SEED))]
fn reproduce_table1<'py>(
    py: Python<'py>,
    num_docs: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    let lda = cm::LdaConfig {
        num_docs,
        seed,
        ..Default::default()
    };
    let result = py
        .detach(|| cm::reproduce_table1(&lda, &cm::table1_train_config(seed)))
        .py()?;
    report(py, &result)
}

#[pymodule]
pub fn calmeasure_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScoredDataset>()?;
    m.add_class::<PyLinkFunction>()?;
    m.add_class::<PyLogisticModel>()?;
    m.add_class::<PyNaiveBayesModel>()?;
    m.add_function(wrap_pyfunction!(calibrate, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_calibration, m)?)?;
    m.add_function(wrap_pyfunction!(true_calibration, m)?)?;
    m.add_function(wrap_pyfunction!(sample_dataset, m)?)?;
    m.add_function(wrap_pyfunction!(l1_empirical, m)?)?;
    m.add_function(wrap_pyfunction!(bayes_threshold, m)?)?;
    m.add_function(wrap_pyfunction!(empirical_loss, m)?)?;
    m.add_function(wrap_pyfunction!(loss_ratio_experiment, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_interval_rademacher, m)?)?;
    m.add_function(wrap_pyfunction!(theorem2_epsilon, m)?)?;
    m.add_function(wrap_pyfunction!(finite_output_bound, m)?)?;
    m.add_function(wrap_pyfunction!(svm_witness_mean, m)?)?;
    m.add_function(wrap_pyfunction!(rescale_scores, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_lda, m)?)?;
    m.add_function(wrap_pyfunction!(train_logistic, m)?)?;
    m.add_function(wrap_pyfunction!(train_naive_bayes, m)?)?;
    m.add_function(wrap_pyfunction!(reproduce_table1, m)?)?;
    m.add("DEFAULT_SEED", cm::DEFAULT_SEED)?;
    Ok(())
}
