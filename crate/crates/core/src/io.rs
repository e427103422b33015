//! Data plumbing for the command-line front end: CSV ingestion, analysis
//! configuration, the pcm → calibrate → fit pipeline and report types.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::calibration::{emit_curve, power_from_s, solve_sigmoid, CalibrationConfig, CalibrationCurve, CalibrationMode};
use crate::congruence::{pcm, CongruenceEstimate, EndpointModel, Estimator, Statistic, DEFAULT_MC_DRAWS};
use crate::data::{Arm, Dataset};
use crate::error::{domain, Error, Result};
use crate::posterior::{
    assign_pointwise_powers, fit_linear_regression, fit_normal_known_var, fit_normal_unknown_var,
    fit_poisson_regression_mh, PosteriorDraws, PosteriorSummary, PowerAssignment, SamplerSettings,
};
use crate::stats::RngStream;

/// Column names to read from a CSV file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsvSchema {
    pub response: String,
    #[serde(default)]
    pub covariates: Vec<String>,
}

impl CsvSchema {
    pub fn new(response: &str, covariates: &[&str]) -> Self {
        Self {
            response: response.to_string(),
            covariates: covariates.iter().map(|c| c.to_string()).collect(),
        }
    }
}

fn csv_error(path: &Path, row: usize, column: &str, message: impl Into<String>) -> Error {
    Error::Csv {
        path: path.display().to_string(),
        row,
        column: column.to_string(),
        message: message.into(),
    }
}

/// Read one arm from a headed CSV file.
///
/// Rows are numbered from 1 excluding the header. An intercept column is
/// prepended whenever covariates are declared.
pub fn ingest_csv(path: &Path, schema: &CsvSchema, arm: Arm) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| {
        Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))
    })?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = reader
        .headers()
        .map_err(|e| csv_error(path, 0, "", e.to_string()))?
        .clone();
    if headers.is_empty() || (headers.len() == 1 && headers[0].is_empty()) {
        return Err(csv_error(path, 0, "", "empty file: no header row"));
    }
    let locate = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| csv_error(path, 0, name, "column not found in header"))
    };
    let response = locate(&schema.response)?;
    let covariates = schema
        .covariates
        .iter()
        .map(|c| locate(c).map(|j| (c.as_str(), j)))
        .collect::<Result<Vec<_>>>()?;

    let mut y = Vec::new();
    let mut xs = Vec::new();
    for (k, record) in reader.records().enumerate() {
        let row = k + 1;
        let record = record.map_err(|e| csv_error(path, row, "", e.to_string()))?;
        let cell = |name: &str, j: usize| -> Result<f64> {
            let raw = record.get(j).unwrap_or("");
            if raw.is_empty() {
                return Err(csv_error(path, row, name, "empty cell"));
            }
            match raw.parse::<f64>() {
                Ok(v) if v.is_finite() => Ok(v),
                _ => Err(csv_error(path, row, name, format!("non-numeric value `{raw}`"))),
            }
        };
        y.push(cell(&schema.response, response)?);
        xs.push(covariates.iter().map(|&(name, j)| cell(name, j)).collect::<Result<Vec<_>>>()?);
    }
    if y.is_empty() {
        return Err(csv_error(path, 0, "", "empty file: header but no data rows"));
    }
    if covariates.is_empty() {
        Dataset::responses(y, arm)
    } else {
        Dataset::with_covariates(y, &xs, arm)
    }
}

/// Write a dataset in the layout `ingest_csv` reads back bit-for-bit.
pub fn write_dataset_csv(ds: &Dataset, schema: &CsvSchema, path: &Path) -> Result<()> {
    let p = ds.x.as_ref().map_or(0, |x| x.ncols() - 1);
    if p != schema.covariates.len() {
        return domain(format!(
            "schema names {} covariates, dataset has {p}",
            schema.covariates.len()
        ));
    }
    let mut out = String::new();
    out.push_str(&schema.response);
    for c in &schema.covariates {
        let _ = write!(out, ",{c}");
    }
    out.push('\n');
    for (i, y) in ds.y.iter().enumerate() {
        let _ = write!(out, "{y:?}");
        if let Some(x) = &ds.x {
            for j in 1..x.ncols() {
                let _ = write!(out, ",{:?}", x[(i, j)]);
            }
        }
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// Deserialize JSON, naming the offending field path on failure.
pub fn parse_json<T: DeserializeOwned>(text: &str, what: &str) -> Result<T> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::Schema(format!("{what}: at `{path}`: {}", e.inner()))
    })
}

/// Deserialize an already-parsed JSON value, naming the offending field path.
pub fn parse_value<T: DeserializeOwned>(value: serde_json::Value, what: &str) -> Result<T> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let path = e.path().to_string();
        Error::Schema(format!("{what}: at `{path}`: {}", e.inner()))
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum BorrowMode {
    #[default]
    Global,
    Pointwise,
}

fn default_response() -> String {
    "y".into()
}
fn default_mc_draws() -> usize {
    DEFAULT_MC_DRAWS
}
fn default_proposal_scale() -> f64 {
    1.0
}

/// Everything needed to run congruence measurement and a borrowing analysis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    pub endpoint: EndpointModel,
    #[serde(default)]
    pub statistic: Statistic,
    #[serde(default)]
    pub estimator: Estimator,
    #[serde(default)]
    pub mode: BorrowMode,
    /// `n_current` is replaced by the size of the current data.
    #[serde(default)]
    pub calibration: CalibrationConfig,
    #[serde(default = "default_mc_draws")]
    pub mc_draws: usize,
    #[serde(default)]
    pub sampler: SamplerSettings,
    /// Multiplier on the Poisson sampler's starting proposal scales.
    #[serde(default = "default_proposal_scale")]
    pub proposal_scale: f64,
    /// Cap the power at n/m.
    #[serde(default)]
    pub cap: bool,
    pub seed: Option<u64>,
    pub historical: PathBuf,
    pub current: PathBuf,
    #[serde(default = "default_response")]
    pub response: String,
    #[serde(default)]
    pub covariates: Vec<String>,
    /// Alternative current data used only for measuring congruence.
    #[serde(default)]
    pub congruence_current: Option<PathBuf>,
    /// Covariates used only for measuring congruence; empty means intercept only.
    #[serde(default)]
    pub congruence_covariates: Option<Vec<String>>,
    /// Skip congruence and calibration and use this global power.
    #[serde(default)]
    pub power: Option<f64>,
}

impl AnalysisConfig {
    pub fn new(endpoint: EndpointModel, historical: PathBuf, current: PathBuf) -> Self {
        Self {
            endpoint,
            statistic: Statistic::default(),
            estimator: Estimator::default(),
            mode: BorrowMode::default(),
            calibration: CalibrationConfig::default(),
            mc_draws: DEFAULT_MC_DRAWS,
            sampler: SamplerSettings::default(),
            proposal_scale: 1.0,
            cap: false,
            seed: None,
            historical,
            current,
            response: default_response(),
            covariates: Vec::new(),
            congruence_current: None,
            congruence_covariates: None,
            power: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.endpoint.validate()?;
        let regression = self.endpoint.is_regression();
        if self.mode == BorrowMode::Pointwise && self.endpoint != EndpointModel::LinearRegression {
            return domain("pointwise mode requires the linear_regression endpoint");
        }
        if self.endpoint == EndpointModel::PoissonRegression && self.estimator != Estimator::Sim && self.power.is_none() {
            return domain("the poisson_regression endpoint has no closed form; use estimator = sim");
        }
        if !regression && (!self.covariates.is_empty() || self.congruence_covariates.as_ref().is_some_and(|c| !c.is_empty())) {
            return domain("normal endpoints take responses only; declare covariates with a regression endpoint");
        }
        if let Some(a) = self.power {
            if !(0.0..=1.0).contains(&a) {
                return domain(format!("power override {a} outside [0, 1]"));
            }
        }
        if self.mc_draws == 0 {
            return domain("mc_draws must be at least 1");
        }
        if !(self.proposal_scale > 0.0 && self.proposal_scale.is_finite()) {
            return domain("proposal_scale must be positive");
        }
        self.sampler.validate()
    }

    fn schema(&self) -> CsvSchema {
        CsvSchema {
            response: self.response.clone(),
            covariates: self.covariates.clone(),
        }
    }

    fn congruence_schema(&self) -> CsvSchema {
        CsvSchema {
            response: self.response.clone(),
            covariates: self.congruence_covariates.clone().unwrap_or_else(|| self.covariates.clone()),
        }
    }
}

/// Audit block attached to every JSON output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
}

impl Provenance {
    pub fn new<C: Serialize>(command: &str, seed: Option<u64>, config: &C) -> Result<Self> {
        Ok(Self {
            tool: "powerprior".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config: serde_json::to_value(config).map_err(|e| Error::Schema(e.to_string()))?,
        })
    }
}

/// Prefix an error with the pipeline stage it came from, keeping its class.
fn at_stage(stage: &str, e: Error) -> Error {
    match e {
        Error::Domain(m) => Error::Domain(format!("{stage}: {m}")),
        Error::Degenerate(m) => Error::Degenerate(format!("{stage}: {m}")),
        Error::Rank(m) => Error::Rank(format!("{stage}: {m}")),
        Error::Infeasible(m) => Error::Infeasible(format!("{stage}: {m}")),
        Error::Improper(m) => Error::Improper(format!("{stage}: {m}")),
        Error::Sampler { acceptance, message } => Error::Sampler {
            acceptance,
            message: format!("{stage}: {message}"),
        },
        Error::Scenario(m) => Error::Scenario(format!("{stage}: {m}")),
        Error::Schema(m) => Error::Schema(format!("{stage}: {m}")),
        Error::Io(io) => Error::Io(std::io::Error::new(io.kind(), format!("{stage}: {io}"))),
        other @ Error::Csv { .. } => other,
    }
}

trait Stage<T> {
    fn stage(self, label: &str) -> Result<T>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, label: &str) -> Result<T> {
        self.map_err(|e| at_stage(label, e))
    }
}

struct Inputs {
    hist: Dataset,
    curr: Dataset,
    hist_cong: Dataset,
    curr_cong: Dataset,
}

fn load_inputs(config: &AnalysisConfig) -> Result<Inputs> {
    let schema = config.schema();
    let hist = ingest_csv(&config.historical, &schema, Arm::Historical)?;
    let curr = ingest_csv(&config.current, &schema, Arm::Current)?;
    let cschema = config.congruence_schema();
    let separate = config.congruence_current.is_some() || cschema != schema;
    let (hist_cong, curr_cong) = if separate {
        let cpath = config.congruence_current.as_ref().unwrap_or(&config.current);
        (
            ingest_csv(&config.historical, &cschema, Arm::Historical)?,
            ingest_csv(cpath, &cschema, Arm::Current)?,
        )
    } else {
        (hist.clone(), curr.clone())
    };
    Ok(Inputs { hist, curr, hist_cong, curr_cong })
}

fn require_seed(seed: Option<u64>) -> Result<u64> {
    seed.ok_or_else(|| Error::Domain("a seed is required; the command line generates one when omitted".into()))
}

fn measure(config: &AnalysisConfig, inputs: &Inputs, seed: u64) -> Result<CongruenceEstimate> {
    pcm(
        &inputs.hist_cong,
        &inputs.curr_cong,
        &config.endpoint,
        config.statistic,
        config.estimator,
        config.mc_draws,
        RngStream::new(seed, 0).child(0),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PcmReport {
    pub provenance: Provenance,
    pub n_historical: usize,
    pub n_current: usize,
    pub p_cm: f64,
    pub s: f64,
    pub congruence: CongruenceEstimate,
}

/// Congruence only.
pub fn run_pcm(config: &AnalysisConfig) -> Result<PcmReport> {
    config.validate().stage("config")?;
    let seed = require_seed(config.seed)?;
    let inputs = load_inputs(config)?;
    let est = measure(config, &inputs, seed).stage("congruence")?;
    Ok(PcmReport {
        provenance: Provenance::new("pcm", Some(seed), config)?,
        n_historical: inputs.hist_cong.len(),
        n_current: inputs.curr_cong.len(),
        p_cm: est.p_cm,
        s: est.distance_s,
        congruence: est,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSummary {
    pub mean: f64,
    pub min: f64,
    pub median: f64,
    pub max: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub provenance: Provenance,
    pub n_historical: usize,
    pub n_current: usize,
    pub congruence: Option<CongruenceEstimate>,
    pub curve: Option<CalibrationCurve>,
    pub power: PowerAssignment,
    pub power_summary: PowerSummary,
    pub posterior: PosteriorSummary,
}

/// Congruence, calibration and the power-prior fit, with every intermediate kept.
pub fn run_analysis(config: &AnalysisConfig) -> Result<(AnalysisReport, Option<PosteriorDraws>)> {
    config.validate().stage("config")?;
    let seed = require_seed(config.seed)?;
    let inputs = load_inputs(config)?;
    let (hist, curr) = (&inputs.hist, &inputs.curr);
    let cap = config
        .cap
        .then(|| (curr.len() as f64 / hist.len() as f64).min(1.0));

    let (congruence, curve, power) = match config.power {
        Some(a) => (None, None, PowerAssignment::Global(a)),
        None => {
            let cal = CalibrationConfig {
                n_current: inputs.curr_cong.len() as u64,
                ..config.calibration
            };
            let curve = solve_sigmoid(&cal).stage("calibration")?;
            match config.mode {
                BorrowMode::Global => {
                    let est = measure(config, &inputs, seed).stage("congruence")?;
                    let a = power_from_s(&curve, est.distance_s, cap);
                    (Some(est), Some(curve), PowerAssignment::Global(a))
                }
                BorrowMode::Pointwise => {
                    let power = assign_pointwise_powers(hist, curr, &curve, config.statistic, cap).stage("congruence")?;
                    (None, Some(curve), power)
                }
            }
        }
    };

    let fit_stream = RngStream::new(seed, 0).child(1);
    let (summary, draws) = match config.endpoint {
        EndpointModel::NormalKnownVar { sigma2_h, sigma2_c } => {
            (fit_normal_known_var(hist, curr, sigma2_h, sigma2_c, &power).stage("posterior")?, None)
        }
        EndpointModel::NormalUnknownVar => {
            let (d, s) = fit_normal_unknown_var(hist, curr, &power, &config.sampler, fit_stream).stage("posterior")?;
            (s, Some(d))
        }
        EndpointModel::LinearRegression => {
            let (d, s) = fit_linear_regression(hist, curr, &power, &config.sampler, fit_stream).stage("posterior")?;
            (s, Some(d))
        }
        EndpointModel::PoissonRegression => {
            let (d, s) = fit_poisson_regression_mh(hist, curr, &power, &config.sampler, config.proposal_scale, fit_stream)
                .stage("posterior")?;
            (s, Some(d))
        }
    };
    let (min, median, max) = power.spread();
    let report = AnalysisReport {
        provenance: Provenance::new("analyze", Some(seed), config)?,
        n_historical: hist.len(),
        n_current: curr.len(),
        congruence,
        curve,
        power_summary: PowerSummary { mean: power.mean(), min, median, max },
        power,
        posterior: summary,
    };
    Ok((report, draws))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveReport {
    pub provenance: Provenance,
    pub k_adjusted: CalibrationCurve,
    pub unadjusted: CalibrationCurve,
}

/// Both calibration modes on a shared grid, as CSV (s, alpha_k_adjusted,
/// alpha_unadjusted) plus the solved curves.
pub fn run_curve(config: &CalibrationConfig, grid_points: usize) -> Result<(CurveReport, String)> {
    let adjusted = solve_sigmoid(&CalibrationConfig {
        mode: CalibrationMode::KAdjusted,
        ..*config
    })?;
    let unadjusted = solve_sigmoid(&CalibrationConfig {
        mode: CalibrationMode::Unadjusted,
        ..*config
    })?;
    let ta = emit_curve(&adjusted, grid_points)?;
    let tu = emit_curve(&unadjusted, grid_points)?;
    let mut csv = String::from("s,alpha_k_adjusted,alpha_unadjusted\n");
    for ((s, a), u) in ta.s.iter().zip(&ta.alpha).zip(&tu.alpha) {
        let _ = writeln!(csv, "{s:?},{a:?},{u:?}");
    }
    let report = CurveReport {
        provenance: Provenance::new("calibrate", None, config)?,
        k_adjusted: adjusted,
        unadjusted,
    };
    Ok((report, csv))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn ingest_responses_only() {
        let dir = tempfile::tempdir().unwrap();
        let body: String = std::iter::once("y\n".to_string())
            .chain((0..50).map(|i| format!("{}\n", i as f64 * 0.5)))
            .collect();
        let p = write(dir.path(), "a.csv", &body);
        let ds = ingest_csv(&p, &CsvSchema::new("y", &[]), Arm::Historical).unwrap();
        assert_eq!(ds.len(), 50);
        assert!(ds.x.is_none());
    }

    #[test]
    fn ingest_prepends_intercept() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "y,x1,x2\n1,0,3\n2,1,4\n3,0,5\n");
        let ds = ingest_csv(&p, &CsvSchema::new("y", &["x1", "x2"]), Arm::Current).unwrap();
        let x = ds.x.unwrap();
        assert_eq!(x.ncols(), 3);
        assert_eq!(x.column(0).iter().copied().collect::<Vec<_>>(), vec![1.0; 3]);
        assert_eq!(x[(1, 1)], 1.0);
        assert_eq!(x[(2, 2)], 5.0);
    }

    #[test]
    fn blank_cell_names_row_and_column() {
        let dir = tempfile::tempdir().unwrap();
        let mut body = String::from("y,x1\n");
        for i in 1..=9 {
            body.push_str(&if i == 7 { "3.0,\n".to_string() } else { format!("{i},1\n") });
        }
        let p = write(dir.path(), "a.csv", &body);
        match ingest_csv(&p, &CsvSchema::new("y", &["x1"]), Arm::Current) {
            Err(Error::Csv { row, column, .. }) => assert_eq!((row, column.as_str()), (7, "x1")),
            other => panic!("expected a CSV error, got {other:?}"),
        }
    }

    #[test]
    fn missing_column_and_empty_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(dir.path(), "a.csv", "y\n1\n2\n");
        let err = ingest_csv(&p, &CsvSchema::new("resp", &[]), Arm::Current).unwrap_err();
        assert!(err.to_string().contains("resp"));
        let p = write(dir.path(), "b.csv", "");
        assert!(matches!(ingest_csv(&p, &CsvSchema::new("y", &[]), Arm::Current), Err(Error::Csv { .. })));
        let p = write(dir.path(), "c.csv", "y,x\n1,abc\n2,3\n");
        let err = ingest_csv(&p, &CsvSchema::new("y", &["x"]), Arm::Current).unwrap_err();
        assert!(err.to_string().contains("abc"));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let y = vec![0.1 + 0.2, -1e-300, 1.0 / 3.0, 7.0];
        let cov = vec![vec![1e17, 0.5], vec![-2.25, 1.0 / 7.0], vec![0.0, 3.0], vec![5.0, 6.0]];
        let ds = Dataset::with_covariates(y, &cov, Arm::Historical).unwrap();
        let schema = CsvSchema::new("y", &["a", "b"]);
        let p = dir.path().join("rt.csv");
        write_dataset_csv(&ds, &schema, &p).unwrap();
        assert_eq!(ingest_csv(&p, &schema, Arm::Historical).unwrap(), ds);
    }

    #[test]
    fn schema_errors_name_the_path() {
        let err = parse_json::<AnalysisConfig>(
            r#"{"endpoint": {"kind": "normal_unknown_var"}, "historical": "h", "current": "c", "calibration": {"tau": "two"}}"#,
            "config",
        )
        .unwrap_err();
        assert!(err.to_string().contains("calibration.tau"), "{err}");
    }

    #[test]
    fn config_combinations() {
        let base = AnalysisConfig::new(EndpointModel::PoissonRegression, "h".into(), "c".into());
        assert!(base.validate().is_err());
        let sim = AnalysisConfig { estimator: Estimator::Sim, ..base.clone() };
        assert!(sim.validate().is_ok());
        let pw = AnalysisConfig {
            mode: BorrowMode::Pointwise,
            ..AnalysisConfig::new(EndpointModel::NormalUnknownVar, "h".into(), "c".into())
        };
        assert!(pw.validate().is_err());
    }
}
