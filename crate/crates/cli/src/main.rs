mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::result::Result;

use calmeasure::decision::bayes_threshold;
use calmeasure::models::{infer_dimension, logistic_objective, Model};
use calmeasure::*;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use output::{num, open, to_value, write_atomic, Envelope, ErrorBody, Failure, Meta, Table, TOOL};

#[derive(Debug, Parser)]
#[command(
    name = "calmeasure",
    version,
    about = "Measure and repair calibration of probability scores"
)]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args, Serialize)]
struct Global {
    /// Write the JSON report here instead of standard output
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Flatten the report's main array into this CSV file
    #[arg(long, global = true)]
    emit_csv: Option<PathBuf>,
    /// Seed for every random choice (decimal or 0x-prefixed hex)
    #[arg(long, global = true, default_value = "0xC0FFEE", value_parser = parse_seed)]
    seed: u64,
}

fn parse_seed(s: &str) -> Result<u64, String> {
    match s.strip_prefix("0x").or_else(|| s.strip_prefix("0X")) {
        Some(hex) => u64::from_str_radix(hex, 16),
        None => s.parse(),
    }
    .map_err(|e| format!("invalid seed `{s}`: {e}"))
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Empirical calibration measure of a `score,label` CSV
    Measure(MeasureArgs),
    /// Fit an isotonic link on a validation CSV
    Calibrate(CalibrateArgs),
    /// Apply a saved link to a CSV
    Apply(ApplyArgs),
    /// Cost-sensitive decision loss at the Bayes threshold
    Decide(DecideArgs),
    /// Loss before and after recalibration over a grid of cost ratios
    LossRatio(LossRatioArgs),
    /// Rademacher complexity of the interval classes on a sample
    Rademacher(RademacherArgs),
    /// Closed-form uniform convergence bounds
    Bound(BoundArgs),
    /// Generate a synthetic topic-model corpus
    SimulateLda(SimulateArgs),
    /// Train logistic regression or naive Bayes on sparse counts
    Train(TrainArgs),
    /// Rescale raw margins to [0, 1]
    Rescale(RescaleArgs),
    /// Run the topic-model l1-versus-calibration benchmark end to end
    #[command(name = "reproduce-table1")]
    ReproduceTable1(Table1Args),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Measure(_) => "measure",
            Command::Calibrate(_) => "calibrate",
            Command::Apply(_) => "apply",
            Command::Decide(_) => "decide",
            Command::LossRatio(_) => "loss-ratio",
            Command::Rademacher(_) => "rademacher",
            Command::Bound(_) => "bound",
            Command::SimulateLda(_) => "simulate-lda",
            Command::Train(_) => "train",
            Command::Rescale(_) => "rescale",
            Command::ReproduceTable1(_) => "reproduce-table1",
        }
    }

    fn flags(&self) -> Value {
        match self {
            Command::Measure(a) => to_value(a),
            Command::Calibrate(a) => to_value(a),
            Command::Apply(a) => to_value(a),
            Command::Decide(a) => to_value(a),
            Command::LossRatio(a) => to_value(a),
            Command::Rademacher(a) => to_value(a),
            Command::Bound(a) => to_value(a),
            Command::SimulateLda(a) => to_value(a),
            Command::Train(a) => to_value(a),
            Command::Rescale(a) => to_value(a),
            Command::ReproduceTable1(a) => to_value(a),
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct MeasureArgs {
    /// `score,label` CSV
    #[arg(long)]
    input: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct CalibrateArgs {
    /// Validation `score,label` CSV
    #[arg(long)]
    train: PathBuf,
    /// Save the fitted link as JSON
    #[arg(long)]
    emit_link: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct ApplyArgs {
    #[arg(long)]
    link: PathBuf,
    #[arg(long)]
    input: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct DecideArgs {
    #[arg(long)]
    input: PathBuf,
    /// Cost of a false positive
    #[arg(long)]
    fp_cost: f64,
    /// Cost of a false negative
    #[arg(long)]
    fn_cost: f64,
    /// Override the Bayes threshold `a / (a + b)`
    #[arg(long)]
    threshold: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct LossRatioArgs {
    /// CSV the link is fitted on
    #[arg(long)]
    validation: PathBuf,
    /// CSV the losses are measured on
    #[arg(long)]
    test: PathBuf,
    /// Comma-separated cost parameters in (0, 1)
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9"
    )]
    p_grid: Vec<f64>,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
enum VariantArg {
    H,
    H1,
    H2,
}

impl From<VariantArg> for ClassVariant {
    fn from(v: VariantArg) -> Self {
        match v {
            VariantArg::H => ClassVariant::H,
            VariantArg::H1 => ClassVariant::H1,
            VariantArg::H2 => ClassVariant::H2,
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct RademacherArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "h", ignore_case = true)]
    variant: VariantArg,
    /// Sign vectors to draw (all 2^n are enumerated when this many suffice)
    #[arg(long, default_value_t = 1000)]
    num_sigma: u64,
    /// Also report the deviation bound at this confidence level
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct BoundArgs {
    /// Bound for scorers with finitely many outputs (needs --d, --n, --pstar)
    #[arg(long)]
    finite_output: bool,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    /// Number of distinct scorer outputs
    #[arg(long)]
    pstar: Option<usize>,
    /// Rademacher complexity for the interval-class bound (needs --n, --delta)
    #[arg(long)]
    rademacher: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    /// Corpus file to write
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value_t = LdaConfig::default().num_docs)]
    num_docs: usize,
    #[arg(long, default_value_t = LdaConfig::default().num_topics)]
    num_topics: usize,
    #[arg(long, default_value_t = LdaConfig::default().vocab_size)]
    vocab_size: usize,
    #[arg(long, default_value_t = LdaConfig::default().avg_doc_len)]
    avg_doc_len: f64,
    #[arg(long, default_value_t = LdaConfig::default().labels_per_doc)]
    labels_per_doc: usize,
    #[arg(long, default_value_t = LdaConfig::default().target_topic)]
    target_topic: usize,
    #[arg(long, default_value_t = LdaConfig::default().power_law_exponent)]
    power_law_exponent: f64,
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModelKind {
    Logistic,
    NaiveBayes,
}

#[derive(Debug, Args, Serialize)]
struct TrainArgs {
    /// Corpus written by `simulate-lda`
    #[arg(long, conflicts_with = "sparse", required_unless_present = "sparse")]
    corpus: Option<PathBuf>,
    /// Lines of `label idx:val idx:val ...`
    #[arg(long)]
    sparse: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "logistic")]
    model: ModelKind,
    /// Feature dimension (defaults to the corpus vocabulary or the largest index + 1)
    #[arg(long)]
    dimension: Option<usize>,
    #[arg(long, default_value_t = TrainConfig::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = TrainConfig::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = TrainConfig::default().l2)]
    l2: f64,
    /// Mini-batch size (full batch when absent)
    #[arg(long)]
    batch_size: Option<usize>,
    /// Naive Bayes additive smoothing
    #[arg(long, default_value_t = 1.0)]
    smoothing: f64,
    /// Save the trained model as JSON
    #[arg(long)]
    emit_model: Option<PathBuf>,
    /// Save training-set predictions as `score,label` CSV
    #[arg(long)]
    emit_scores: Option<PathBuf>,
}

#[derive(Debug, Args, Serialize)]
struct RescaleArgs {
    /// `score,label` CSV with arbitrary real scores
    #[arg(long)]
    input: PathBuf,
}

#[derive(Debug, Args, Serialize)]
struct Table1Args {
    #[arg(long, default_value_t = LdaConfig::default().num_docs)]
    num_docs: usize,
}

struct Outcome {
    result: Value,
    table: Option<Table>,
}

fn outcome(result: impl Serialize, table: Table) -> Result<Outcome, Failure> {
    Ok(Outcome {
        result: to_value(&result),
        table: Some(table),
    })
}

fn read_dataset(path: &Path) -> Result<ScoredDataset, Failure> {
    read_scored_csv(open(path)?).map_err(|e| with_path(path, e))
}

fn with_path(path: &Path, err: calmeasure::Error) -> Failure {
    match Failure::from(err) {
        Failure::Validation(m) => Failure::Validation(format!("{}: {m}", path.display())),
        Failure::Io(m) => Failure::Io(format!("{}: {m}", path.display())),
    }
}

fn dataset_table(d: &ScoredDataset) -> Table {
    let mut t = Table::new(&["score", "label"]);
    for s in d.samples() {
        t.push(vec![num(s.score()), s.label().to_string()]);
    }
    t
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), Failure> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value).map_err(|e| Failure::Io(e.to_string()))?;
        writeln!(w)?;
        Ok(())
    })
}

fn measure(args: &MeasureArgs) -> Result<Outcome, Failure> {
    let d = read_dataset(&args.input)?;
    let report = empirical_calibration(&d)?;
    let w = &report.worst_interval;
    let mut t = Table::new(&["c_emp", "n", "p1", "p2", "deviation"]);
    t.push(vec![
        num(report.c_emp),
        report.n.to_string(),
        num(w.p1),
        num(w.p2),
        num(w.deviation),
    ]);
    outcome(report, t)
}

fn calibrate_cmd(args: &CalibrateArgs) -> Result<Outcome, Failure> {
    let d = read_dataset(&args.train)?;
    let link = calibrate(&d)?;
    let calibrated = d.with_scores(&apply_link(&link, &d.scores())?)?;
    if let Some(path) = &args.emit_link {
        write_json(path, &link)?;
    }
    let mut t = Table::new(&["x", "y"]);
    for &(x, y) in link.knots() {
        t.push(vec![num(x), num(y)]);
    }
    outcome(
        json!({
            "n": d.len(),
            "c_emp_before": empirical_calibration(&d)?.c_emp,
            "c_emp_after": empirical_calibration(&calibrated)?.c_emp,
            "link": link,
        }),
        t,
    )
}

fn apply_cmd(args: &ApplyArgs) -> Result<Outcome, Failure> {
    let link: LinkFunction = serde_json::from_reader(open(&args.link)?)
        .map_err(|e| Failure::validation(format!("{}: {e}", args.link.display())))?;
    let d = read_dataset(&args.input)?;
    let calibrated = d.with_scores(&apply_link(&link, &d.scores())?)?;
    outcome(
        json!({
            "n": d.len(),
            "c_emp_before": empirical_calibration(&d)?.c_emp,
            "c_emp_after": empirical_calibration(&calibrated)?.c_emp,
        }),
        dataset_table(&calibrated),
    )
}

fn decide(args: &DecideArgs) -> Result<Outcome, Failure> {
    let d = read_dataset(&args.input)?;
    let costs = CostPair::new(args.fp_cost, args.fn_cost)?;
    let threshold = args.threshold.unwrap_or_else(|| bayes_threshold(costs));
    let s = empirical_loss(&d, threshold, costs)?;
    let mut t = Table::new(&["threshold", "total_loss", "mean_loss", "fp", "fn"]);
    t.push(vec![
        num(s.threshold),
        num(s.total_loss),
        num(s.mean_loss),
        s.fp.to_string(),
        s.fn_.to_string(),
    ]);
    outcome(s, t)
}

fn loss_ratio(args: &LossRatioArgs) -> Result<Outcome, Failure> {
    let validation = read_dataset(&args.validation)?;
    let test = read_dataset(&args.test)?;
    let ratios = loss_ratio_experiment(&validation, &test, &args.p_grid)?;
    let mut t = Table::new(&["p", "loss_before", "loss_after", "ratio"]);
    for r in &ratios {
        t.push(vec![
            num(r.p),
            num(r.loss_before),
            num(r.loss_after),
            num(r.ratio),
        ]);
    }
    outcome(json!({ "ratios": ratios }), t)
}

fn rademacher(args: &RademacherArgs, seed: u64) -> Result<Outcome, Failure> {
    let d = read_dataset(&args.input)?;
    let est = estimate_interval_rademacher(&d, args.variant.into(), args.num_sigma, seed)?;
    let epsilon = args
        .delta
        .map(|delta| theorem2_epsilon(est.mean, d.len(), delta))
        .transpose()?;
    let mut t = Table::new(&["variant", "mean", "std_error", "num_sigma", "exact"]);
    t.push(vec![
        format!("{:?}", est.class_variant),
        num(est.mean),
        num(est.std_error),
        est.num_sigma.to_string(),
        est.exact.to_string(),
    ]);
    let mut result = to_value(&est);
    if let Some(eps) = epsilon {
        result["epsilon"] = json!(eps);
    }
    Ok(Outcome {
        result,
        table: Some(t),
    })
}

fn bound(args: &BoundArgs) -> Result<Outcome, Failure> {
    let missing = |flag: &str| Failure::validation(format!("missing --{flag}"));
    let (kind, value) = if args.finite_output {
        if args.rademacher.is_some() {
            return Err(Failure::validation(
                "--finite-output conflicts with --rademacher",
            ));
        }
        let d = args.d.ok_or_else(|| missing("d"))?;
        let n = args.n.ok_or_else(|| missing("n"))?;
        let pstar = args.pstar.ok_or_else(|| missing("pstar"))?;
        ("finite-output", finite_output_bound(d, n, pstar)?)
    } else {
        let r = args
            .rademacher
            .ok_or_else(|| Failure::validation("give --finite-output or --rademacher"))?;
        let n = args.n.ok_or_else(|| missing("n"))?;
        let delta = args.delta.ok_or_else(|| missing("delta"))?;
        ("rademacher", theorem2_epsilon(r, n, delta)?)
    };
    let mut t = Table::new(&["kind", "value"]);
    t.push(vec![kind.to_string(), num(value)]);
    outcome(json!({ "kind": kind, "value": value }), t)
}

fn simulate(args: &SimulateArgs, seed: u64) -> Result<Outcome, Failure> {
    let config = LdaConfig {
        num_docs: args.num_docs,
        num_topics: args.num_topics,
        vocab_size: args.vocab_size,
        avg_doc_len: args.avg_doc_len,
        labels_per_doc: args.labels_per_doc,
        target_topic: args.target_topic,
        power_law_exponent: args.power_law_exponent,
        seed,
    };
    let corpus = generate_corpus(&config)?;
    let baselines = corpus_baselines(&corpus)?;
    write_atomic(&args.corpus, |w| Ok(export_corpus(&corpus, w)?))?;
    let mut t = Table::new(&["label_frequency", "trivial_l1"]);
    t.push(vec![
        num(baselines.label_frequency),
        num(baselines.trivial_l1),
    ]);
    outcome(json!({ "config": config, "baselines": baselines }), t)
}

fn train(args: &TrainArgs, seed: u64) -> Result<Outcome, Failure> {
    let (examples, true_probs, corpus_dim) = match (&args.corpus, &args.sparse) {
        (Some(path), _) => {
            let imported = import_corpus(open(path)?).map_err(|e| with_path(path, e))?;
            let examples: Vec<SparseExample> = imported
                .records
                .iter()
                .map(SparseExample::from_record)
                .collect();
            let probs: Vec<f64> = imported.records.iter().map(|r| r.true_prob).collect();
            (examples, Some(probs), imported.config.map(|c| c.vocab_size))
        }
        (None, Some(path)) => {
            let examples = read_sparse_examples(open(path)?).map_err(|e| with_path(path, e))?;
            (examples, None, None)
        }
        (None, None) => return Err(Failure::validation("give --corpus or --sparse")),
    };
    let dimension = args
        .dimension
        .or(corpus_dim)
        .unwrap_or_else(|| infer_dimension(&examples));
    let config = TrainConfig {
        learning_rate: args.learning_rate,
        epochs: args.epochs,
        l2: args.l2,
        seed,
        batch_size: args.batch_size,
    };
    let mut t = Table::new(&["epoch", "objective"]);
    let (model, final_objective) = match args.model {
        ModelKind::Logistic => {
            let (m, history) = train_logistic_traced(&examples, dimension, &config)?;
            for (epoch, loss) in history.iter().enumerate() {
                t.push(vec![epoch.to_string(), num(*loss)]);
            }
            let objective = logistic_objective(&m, &examples, config.l2);
            (Model::Logistic(m), Some(objective))
        }
        ModelKind::NaiveBayes => (
            Model::NaiveBayes(train_naive_bayes(&examples, dimension, args.smoothing)?),
            None,
        ),
    };
    let scores = examples
        .iter()
        .map(|e| model.predict(&e.features))
        .collect::<calmeasure::Result<Vec<f64>>>()?;
    let labels: Vec<u8> = examples.iter().map(|e| e.label).collect();
    let scored = ScoredDataset::from_parts(&scores, &labels)?;
    let l1 = true_probs
        .as_ref()
        .map(|p| l1_empirical(&scores, p))
        .transpose()?;
    if let Some(path) = &args.emit_model {
        write_json(path, &model)?;
    }
    if let Some(path) = &args.emit_scores {
        write_atomic(path, |w| Ok(write_scored_csv(&scored, w)?))?;
    }
    outcome(
        json!({
            "model": args.model,
            "n": examples.len(),
            "dimension": dimension,
            "train_config": config,
            "final_objective": final_objective,
            "c_emp": empirical_calibration(&scored)?.c_emp,
            "l1": l1,
        }),
        t,
    )
}

fn rescale(args: &RescaleArgs) -> Result<Outcome, Failure> {
    let (raw, labels) =
        read_raw_scores_csv(open(&args.input)?).map_err(|e| with_path(&args.input, e))?;
    let scores = rescale_scores(&raw)?;
    let d = ScoredDataset::from_parts(&scores, &labels)?;
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    outcome(
        json!({ "n": d.len(), "raw_min": min, "raw_max": max }),
        dataset_table(&d),
    )
}

fn table1(args: &Table1Args, seed: u64) -> Result<Outcome, Failure> {
    let lda = LdaConfig {
        num_docs: args.num_docs,
        seed,
        ..LdaConfig::default()
    };
    let report = reproduce_table1(&lda, &table1_train_config(seed))?;
    let r = &report.reference;
    let mut t = Table::new(&["metric", "measured", "reference"]);
    for (name, measured, reference) in [
        ("label_frequency", report.label_frequency, r.label_frequency),
        ("trivial_l1", report.trivial_l1, r.trivial_l1),
        ("logistic_l1", report.logistic_l1, r.logistic_l1),
        ("logistic_c_emp", report.logistic_c_emp, r.logistic_c_emp),
    ] {
        t.push(vec![name.to_string(), num(measured), num(reference)]);
    }
    outcome(report, t)
}

fn run(cli: &Cli) -> Result<Value, Failure> {
    let seed = cli.global.seed;
    let out = match &cli.command {
        Command::Measure(a) => measure(a),
        Command::Calibrate(a) => calibrate_cmd(a),
        Command::Apply(a) => apply_cmd(a),
        Command::Decide(a) => decide(a),
        Command::LossRatio(a) => loss_ratio(a),
        Command::Rademacher(a) => rademacher(a, seed),
        Command::Bound(a) => bound(a),
        Command::SimulateLda(a) => simulate(a, seed),
        Command::Train(a) => train(a, seed),
        Command::Rescale(a) => rescale(a),
        Command::ReproduceTable1(a) => table1(a, seed),
    }?;
    if let (Some(path), Some(table)) = (&cli.global.emit_csv, &out.table) {
        write_atomic(path, |w| Ok(table.write_to(w)?))?;
    }
    Ok(out.result)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut flags = cli.command.flags();
    if let Value::Object(map) = &mut flags {
        map.insert("output".into(), to_value(&cli.global.output));
        map.insert("emit_csv".into(), to_value(&cli.global.emit_csv));
    }
    let meta = Meta {
        tool: TOOL,
        version: env!("CARGO_PKG_VERSION"),
        command: cli.command.name(),
        flags,
        seed: cli.global.seed,
    };
    let failure = match run(&cli) {
        Ok(result) => {
            let envelope = Envelope {
                meta: &meta,
                result: Some(&result),
                error: None,
            };
            let text = serde_json::to_string_pretty(&envelope).expect("report serializes");
            let written = match &cli.global.output {
                Some(path) => write_atomic(path, |w| Ok(writeln!(w, "{text}")?)),
                None => {
                    println!("{text}");
                    Ok(())
                }
            };
            match written {
                Ok(()) => return ExitCode::SUCCESS,
                Err(f) => f,
            }
        }
        Err(f) => f,
    };
    let envelope = Envelope {
        meta: &meta,
        result: None,
        error: Some(ErrorBody {
            kind: failure.kind(),
            message: failure.message(),
        }),
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&envelope).expect("report serializes")
    );
    eprintln!("error: {}", failure.message());
    ExitCode::from(failure.exit_code() as u8)
}
