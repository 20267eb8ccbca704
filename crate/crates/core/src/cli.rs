//! Implementations of the `calign` subcommands.
//!
//! Each command reads its inputs, writes its outputs into a directory, and
//! returns the in-memory report so callers (and tests) can inspect it
//! without re-reading files.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::align::{
    grid_search_temperature, optimize, GridSpec, Objective, OptimizationTrace, OptimizerConfig,
    ScalingParams, Shape,
};
use crate::error::{CalibError, Result};
use crate::io::{read_logits_jsonl, write_logits_jsonl};
use crate::metrics::{self, Evaluation};
use crate::prob::{Dataset, Split};
use crate::synthetic::{
    generate_split, temperature_trace, verify_aligned_ece, verify_divergent_temperature,
    MixtureConfig, Subset, SubsetTrace, TheoryCheck,
};
use crate::TOOLKIT_VERSION;

pub const REPORT_FILE: &str = "report.json";
pub const RELIABILITY_CSV: &str = "reliability.csv";
pub const SELECTIVE_CSV: &str = "selective.csv";
pub const TRACE_CSV: &str = "trace.csv";

/// Settings for `calibrate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub val: PathBuf,
    pub test: PathBuf,
    pub objective: Objective,
    pub shape: Shape,
    pub optimizer: OptimizerConfig,
    pub bins: usize,
    pub thresholds: Vec<f64>,
    #[serde(skip)]
    pub out: PathBuf,
}

impl RunConfig {
    pub fn new(val: impl Into<PathBuf>, test: impl Into<PathBuf>, out: impl Into<PathBuf>) -> Self {
        Self {
            val: val.into(),
            test: test.into(),
            objective: Objective::Daca,
            shape: Shape::Scalar,
            optimizer: OptimizerConfig::default(),
            bins: metrics::DEFAULT_BINS,
            thresholds: metrics::default_thresholds(),
            out: out.into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(CalibError::config("bins", "must be at least 1"));
        }
        if self.thresholds.windows(2).any(|w| w[1] < w[0]) {
            return Err(CalibError::config("thresholds", "must be ascending"));
        }
        for (field, path) in [("val", &self.val), ("test", &self.test)] {
            if !path.is_file() {
                return Err(CalibError::config(
                    field,
                    format!("{} does not exist", path.display()),
                ));
            }
        }
        self.optimizer.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Counts {
    pub total: usize,
    pub agreement: usize,
    pub disagreement: usize,
}

impl Counts {
    pub fn of(ds: &Dataset) -> Self {
        let agreement = ds.agreement_count();
        Self {
            total: ds.len(),
            agreement,
            disagreement: ds.len() - agreement,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub epochs_run: usize,
    pub final_loss: f64,
    pub diverged: bool,
    pub examples_used: usize,
    pub filtered_out: usize,
}

impl From<&OptimizationTrace> for TraceSummary {
    fn from(t: &OptimizationTrace) -> Self {
        Self {
            epochs_run: t.epochs_run(),
            final_loss: t.final_loss,
            diverged: t.diverged,
            examples_used: t.examples_used,
            filtered_out: t.filtered_out,
        }
    }
}

/// Output of `calibrate`: learned parameters and test-split metrics before
/// and after rescaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub toolkit_version: String,
    pub config: RunConfig,
    pub params: ScalingParams,
    /// Agreement counts on the validation split.
    pub counts: Counts,
    pub optimizer: TraceSummary,
    pub pre: Evaluation,
    pub post: Evaluation,
}

/// Output of `evaluate`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub toolkit_version: String,
    pub test: PathBuf,
    pub params: ScalingParams,
    pub counts: Counts,
    pub pre: Evaluation,
    pub post: Evaluation,
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_evaluation_csvs(out: &Path, pre: &Evaluation, post: &Evaluation) -> Result<()> {
    let mut w = csv::Writer::from_path(out.join(RELIABILITY_CSV))?;
    w.write_record([
        "stage",
        "bin",
        "lower",
        "upper",
        "count",
        "confidence",
        "accuracy",
    ])?;
    for (stage, eval) in [("pre", pre), ("post", post)] {
        for row in &eval.reliability {
            w.write_record([
                stage.to_string(),
                row.bin.to_string(),
                row.lower.to_string(),
                row.upper.to_string(),
                row.count.to_string(),
                opt(row.confidence),
                opt(row.accuracy),
            ])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join(SELECTIVE_CSV))?;
    w.write_record(["stage", "threshold", "coverage", "accuracy"])?;
    for (stage, eval) in [("pre", pre), ("post", post)] {
        for p in &eval.selective {
            w.write_record([
                stage.to_string(),
                p.threshold.to_string(),
                p.coverage.to_string(),
                opt(p.accuracy),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn write_fit_trace(path: &Path, trace: &OptimizationTrace) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let width = trace.final_params.to_raw().len();
    let mut header = vec!["epoch".to_string(), "loss".to_string()];
    header.extend((0..width).map(|i| format!("param_{i}")));
    w.write_record(&header)?;
    for e in &trace.entries {
        let mut row = vec![e.epoch.to_string(), e.loss.to_string()];
        let values: Vec<f64> = match &e.params {
            ScalingParams::Scalar(t) => vec![*t],
            ScalingParams::Vector(v) => v.clone(),
            ScalingParams::Matrix(m) => m.iter().flatten().copied().collect(),
        };
        row.extend(values.iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Fits on the validation file, evaluates on the test file, and writes
/// `report.json`, `reliability.csv`, `selective.csv` and `trace.csv`.
///
/// A diverged fit still produces a report; callers decide how to surface
/// `report.optimizer.diverged`.
pub fn run_calibrate(cfg: &RunConfig) -> Result<CalibrationReport> {
    cfg.validate()?;
    let val = read_logits_jsonl(&cfg.val)?;
    let test = read_logits_jsonl(&cfg.test)?;
    if test.k() != val.k() {
        return Err(CalibError::Input(format!(
            "validation has k = {} but test has k = {}",
            val.k(),
            test.k()
        )));
    }
    let counts = Counts::of(&val);
    log::info!(
        "fitting {} {} on {} records ({} agree)",
        cfg.objective,
        cfg.shape,
        counts.total,
        counts.agreement
    );
    let trace = optimize(&val, cfg.objective, cfg.shape, &cfg.optimizer)?;
    let pre = metrics::evaluate(
        &test,
        &ScalingParams::Scalar(1.0),
        cfg.bins,
        &cfg.thresholds,
    )?;
    let post = metrics::evaluate(&test, &trace.final_params, cfg.bins, &cfg.thresholds)?;

    let report = CalibrationReport {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        config: cfg.clone(),
        params: trace.final_params.clone(),
        counts,
        optimizer: TraceSummary::from(&trace),
        pre,
        post,
    };

    fs::create_dir_all(&cfg.out)?;
    write_json(&cfg.out.join(REPORT_FILE), &report)?;
    write_evaluation_csvs(&cfg.out, &report.pre, &report.post)?;
    write_fit_trace(&cfg.out.join(TRACE_CSV), &trace)?;
    Ok(report)
}

/// Applies stored parameters to a labelled test file.
pub fn run_evaluate(
    test: &Path,
    params_path: &Path,
    out: &Path,
    bins: usize,
    thresholds: &[f64],
) -> Result<EvaluationReport> {
    let text = fs::read_to_string(params_path)?;
    let params: ScalingParams =
        serde_json::from_str(&text).map_err(|e| CalibError::config("params", e.to_string()))?;
    let ds = read_logits_jsonl(test)?;
    let report = EvaluationReport {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        test: test.to_path_buf(),
        params: params.clone(),
        counts: Counts::of(&ds),
        pre: metrics::evaluate(&ds, &ScalingParams::Scalar(1.0), bins, thresholds)?,
        post: metrics::evaluate(&ds, &params, bins, thresholds)?,
    };
    fs::create_dir_all(out)?;
    write_json(&out.join(REPORT_FILE), &report)?;
    write_evaluation_csvs(out, &report.pre, &report.post)?;
    Ok(report)
}

/// Contents of a `simulate` config file: mixture fields at the top level,
/// plus optional optimizer settings for the temperature traces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    #[serde(flatten)]
    pub mixture: MixtureConfig,
    #[serde(default)]
    pub optimizer: OptimizerConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub toolkit_version: String,
    pub config: SimulationConfig,
    pub counts: Counts,
    pub checks: Vec<TheoryCheck>,
    pub traces: Vec<SubsetTraceSummary>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetTraceSummary {
    pub subset: Subset,
    pub final_tau: Option<f64>,
    pub summary: Option<TraceSummary>,
    pub warning: Option<String>,
}

pub fn load_simulation_config(path: &Path) -> Result<SimulationConfig> {
    let text = fs::read_to_string(path)?;
    let cfg: SimulationConfig =
        serde_json::from_str(&text).map_err(|e| CalibError::config("config", e.to_string()))?;
    cfg.mixture.validate()?;
    cfg.optimizer.validate()?;
    Ok(cfg)
}

fn write_subset_traces(path: &Path, traces: &[SubsetTrace]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["series", "epoch", "tau", "loss"])?;
    for st in traces {
        let Some(trace) = &st.trace else { continue };
        let series = serde_json::to_value(st.subset)?;
        let series = series.as_str().unwrap_or_default().to_string();
        for e in &trace.entries {
            w.write_record([
                series.clone(),
                e.epoch.to_string(),
                e.params
                    .temperature()
                    .map(|t| t.to_string())
                    .unwrap_or_default(),
                e.loss.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Generates validation/test mixtures, checks both closed-form predictions and traces
/// naive temperature fits on the agreement, disagreement and full sets.
///
/// Writes `validation.jsonl`, `test.jsonl`, `report.json` and `trace.csv`.
pub fn run_simulate(cfg: &SimulationConfig, out: &Path) -> Result<SimulationReport> {
    cfg.mixture.validate()?;
    let val = generate_split(&cfg.mixture, Split::Validation)?;
    let test = generate_split(&cfg.mixture, Split::Test)?;

    let mut checks = vec![verify_aligned_ece(&cfg.mixture)?];
    if let Some(r) = verify_divergent_temperature(&val)? {
        checks.push(r);
    }
    let traces = temperature_trace(
        &val,
        &[Subset::Agreement, Subset::Disagreement, Subset::All],
        &cfg.optimizer,
    )?;

    fs::create_dir_all(out)?;
    write_logits_jsonl(out.join("validation.jsonl"), &val)?;
    write_logits_jsonl(out.join("test.jsonl"), &test)?;
    write_subset_traces(&out.join(TRACE_CSV), &traces)?;

    let report = SimulationReport {
        toolkit_version: TOOLKIT_VERSION.to_string(),
        config: cfg.clone(),
        counts: Counts::of(&val),
        checks,
        traces: traces
            .iter()
            .map(|st| SubsetTraceSummary {
                subset: st.subset,
                final_tau: st.trace.as_ref().and_then(|t| t.final_params.temperature()),
                summary: st.trace.as_ref().map(TraceSummary::from),
                warning: st.warning.clone(),
            })
            .collect(),
    };
    write_json(&out.join(REPORT_FILE), &report)?;
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleCheck {
    pub objective: Objective,
    pub adam_tau: f64,
    pub adam_loss: f64,
    pub grid_tau: f64,
    pub grid_loss: f64,
    pub relative_tau_gap: f64,
    pub loss_gap: f64,
    pub diverged: bool,
}

/// Grid used by `oracle-check`.
pub fn oracle_grid() -> GridSpec {
    GridSpec::log(1e-2, 1e2, 2000)
}

/// Fits a scalar temperature with Adam and with an exhaustive grid, and
/// reports how far apart they land.
pub fn run_oracle_check(
    ds: &Dataset,
    objective: Objective,
    optimizer: &OptimizerConfig,
    grid: &GridSpec,
) -> Result<OracleCheck> {
    let trace = optimize(ds, objective, Shape::Scalar, optimizer)?;
    let adam_tau = trace.final_params.temperature().unwrap_or(f64::NAN);
    let (grid_tau, grid_loss) = grid_search_temperature(ds, objective, grid)?;
    Ok(OracleCheck {
        objective,
        adam_tau,
        adam_loss: trace.final_loss,
        grid_tau,
        grid_loss,
        relative_tau_gap: (adam_tau - grid_tau).abs() / grid_tau,
        loss_gap: (trace.final_loss - grid_loss).abs(),
        diverged: trace.diverged,
    })
}
