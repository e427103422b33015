//! `powerprior`: measure congruence, calibrate the power and fit power-prior
//! posteriors from CSV data, and run simulation scenarios.
//!
//! JSON results go to stdout, files to `--out` (default `$POWERPRIOR_OUT_DIR`
//! or the working directory). Exit codes: 0 success, 2 validation, 3 numerical
//! failure, 4 I/O.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use powerprior::io::{parse_json, run_analysis, run_curve, run_pcm};
use powerprior::sim::{self, load_scenario, run_uniformity_demo, ScenarioFile, UniformitySpec};
use powerprior::{
    AnalysisConfig, BorrowMode, CalibrationConfig, CalibrationMode, CiMethod, EndpointModel, Error, ErrorClass,
    Estimator, Statistic,
};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "powerprior", version, about = "Congruence-calibrated power priors for historical borrowing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Measure congruence between historical and current data.
    Pcm(AnalysisArgs),
    /// Tabulate the calibrated power curve for both calibration modes.
    Calibrate(CalibrateArgs),
    /// Congruence, calibration and the power-prior posterior in one run.
    Analyze(AnalyzeArgs),
    /// Run a scenario file (replicated, batch or uniformity).
    Simulate(SimulateArgs),
    /// Null distribution of the whole-vector measure on congruent pairs.
    Uniformity(UniformityArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum EndpointArg {
    NormalKnownVar,
    NormalUnknownVar,
    LinearRegression,
    PoissonRegression,
}

#[derive(Clone, Copy, ValueEnum)]
enum StatisticArg {
    Lik,
    Obs,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Thm,
    Sim,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Global,
    Pointwise,
}

#[derive(Clone, Copy, ValueEnum)]
enum CiArg {
    Wald,
    ClopperPearson,
}

#[derive(Clone, Copy, ValueEnum)]
enum CalibrationModeArg {
    KAdjusted,
    Unadjusted,
}

#[derive(Args, Clone)]
struct OutArgs {
    /// Output directory.
    #[arg(long, env = "POWERPRIOR_OUT_DIR", default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Clone, Default)]
struct CalibrationFlags {
    #[arg(long)]
    alpha_c: Option<f64>,
    #[arg(long)]
    alpha_ic: Option<f64>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, value_enum)]
    ci_method: Option<CiArg>,
    #[arg(long)]
    ci_level: Option<f64>,
    #[arg(long, value_enum)]
    calibration_mode: Option<CalibrationModeArg>,
    /// Conservative k1 = 0 variant.
    #[arg(long)]
    zero_k1: bool,
}

impl CalibrationFlags {
    fn apply(&self, c: &mut CalibrationConfig) {
        if let Some(v) = self.alpha_c {
            c.alpha_c = v;
        }
        if let Some(v) = self.alpha_ic {
            c.alpha_ic = v;
        }
        if let Some(v) = self.tau {
            c.tau = v;
        }
        if let Some(v) = self.ci_method {
            c.ci_method = match v {
                CiArg::Wald => CiMethod::Wald,
                CiArg::ClopperPearson => CiMethod::ClopperPearson,
            };
        }
        if let Some(v) = self.ci_level {
            c.ci_level = v;
        }
        if let Some(v) = self.calibration_mode {
            c.mode = match v {
                CalibrationModeArg::KAdjusted => CalibrationMode::KAdjusted,
                CalibrationModeArg::Unadjusted => CalibrationMode::Unadjusted,
            };
        }
        c.zero_k1 |= self.zero_k1;
    }
}

#[derive(Args, Clone)]
struct AnalysisArgs {
    /// JSON analysis configuration; flags given on the command line override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    historical: Option<PathBuf>,
    #[arg(long)]
    current: Option<PathBuf>,
    #[arg(long, value_enum)]
    endpoint: Option<EndpointArg>,
    /// Known historical variance (normal-known-var).
    #[arg(long)]
    sigma2_h: Option<f64>,
    /// Known current variance (normal-known-var).
    #[arg(long)]
    sigma2_c: Option<f64>,
    #[arg(long, value_enum)]
    statistic: Option<StatisticArg>,
    #[arg(long, value_enum)]
    estimator: Option<EstimatorArg>,
    #[arg(long)]
    response: Option<String>,
    /// Covariate column; repeat for several.
    #[arg(long = "covariate")]
    covariates: Vec<String>,
    /// Current data used only for measuring congruence.
    #[arg(long)]
    congruence_current: Option<PathBuf>,
    /// Covariate used only for measuring congruence; repeat for several.
    #[arg(long = "congruence-covariate")]
    congruence_covariates: Vec<String>,
    /// Measure congruence with an intercept-only model.
    #[arg(long)]
    congruence_intercept_only: bool,
    #[arg(long)]
    mc_draws: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Clone)]
struct AnalyzeArgs {
    #[command(flatten)]
    common: AnalysisArgs,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    #[command(flatten)]
    calibration: CalibrationFlags,
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burn_in: Option<usize>,
    #[arg(long)]
    proposal_scale: Option<f64>,
    /// Cap the power at n/m.
    #[arg(long)]
    cap: bool,
    /// Use this global power instead of measuring congruence.
    #[arg(long)]
    power: Option<f64>,
    /// Also write the retained posterior draws as CSV.
    #[arg(long)]
    write_draws: bool,
}

#[derive(Args, Clone)]
struct CalibrateArgs {
    /// Current sample size.
    #[arg(long)]
    n: u64,
    #[command(flatten)]
    calibration: CalibrationFlags,
    /// Number of grid points on [0, 1/2].
    #[arg(long, default_value_t = 101)]
    grid: usize,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Clone)]
struct SimulateArgs {
    scenario: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the replicate count (pair count for uniformity scenarios).
    #[arg(long)]
    replicates: Option<usize>,
    #[command(flatten)]
    out: OutArgs,
}

#[derive(Args, Clone)]
struct UniformityArgs {
    #[arg(long, default_value_t = 50)]
    n: usize,
    #[arg(long, default_value_t = 50)]
    m: usize,
    #[arg(long, default_value_t = 500)]
    pairs: usize,
    #[arg(long, default_value_t = 5000)]
    mc_draws: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    out: OutArgs,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            emit_error("usage", "validation", &e.to_string());
            return ExitCode::from(2);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (class, code) = match e.class() {
                ErrorClass::Validation => ("validation", 2),
                ErrorClass::Numerical => ("numerical", 3),
                ErrorClass::Io => ("io", 4),
            };
            emit_error(e.kind(), class, &e.to_string());
            ExitCode::from(code)
        }
    }
}

fn emit_error(kind: &str, class: &str, message: &str) {
    let body = serde_json::json!({ "error": { "kind": kind, "class": class, "message": message.trim_end() } });
    println!("{body}");
}

fn dispatch(command: Command) -> Result<(), Error> {
    match command {
        Command::Pcm(args) => cmd_pcm(args),
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Simulate(args) => cmd_simulate(args),
        Command::Uniformity(args) => cmd_uniformity(args),
    }
}

fn seed_or_fresh(seed: Option<u64>) -> u64 {
    seed.unwrap_or_else(|| {
        let s = rand::random::<u32>() as u64;
        eprintln!("seed: {s}");
        s
    })
}

fn read_text(path: &Path) -> Result<String, Error> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn to_json<T: Serialize>(value: &T) -> Result<String, Error> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Schema(e.to_string()))
}

fn write_file(dir: &Path, name: &str, body: &str) -> Result<PathBuf, Error> {
    std::fs::create_dir_all(dir)?;
    let path = dir.join(name);
    std::fs::write(&path, body)?;
    Ok(path)
}

fn build_config(args: &AnalysisArgs) -> Result<AnalysisConfig, Error> {
    let mut cfg: Option<AnalysisConfig> = match &args.config {
        Some(path) => Some(parse_json(&read_text(path)?, &path.display().to_string())?),
        None => None,
    };
    let endpoint = match args.endpoint {
        Some(EndpointArg::NormalKnownVar) => {
            let (Some(sigma2_h), Some(sigma2_c)) = (args.sigma2_h, args.sigma2_c) else {
                return Err(Error::Domain("normal-known-var needs --sigma2-h and --sigma2-c".into()));
            };
            Some(EndpointModel::NormalKnownVar { sigma2_h, sigma2_c })
        }
        Some(EndpointArg::NormalUnknownVar) => Some(EndpointModel::NormalUnknownVar),
        Some(EndpointArg::LinearRegression) => Some(EndpointModel::LinearRegression),
        Some(EndpointArg::PoissonRegression) => Some(EndpointModel::PoissonRegression),
        None => None,
    };
    if cfg.is_none() {
        let missing = |what: &str| Error::Domain(format!("--{what} is required without --config"));
        cfg = Some(AnalysisConfig::new(
            endpoint.ok_or_else(|| missing("endpoint"))?,
            args.historical.clone().ok_or_else(|| missing("historical"))?,
            args.current.clone().ok_or_else(|| missing("current"))?,
        ));
    }
    let mut cfg = cfg.expect("config built above");
    if let Some(e) = endpoint {
        cfg.endpoint = e;
    }
    if let Some(p) = &args.historical {
        cfg.historical = p.clone();
    }
    if let Some(p) = &args.current {
        cfg.current = p.clone();
    }
    if let Some(s) = args.statistic {
        cfg.statistic = match s {
            StatisticArg::Lik => Statistic::Lik,
            StatisticArg::Obs => Statistic::Obs,
        };
    }
    if let Some(e) = args.estimator {
        cfg.estimator = match e {
            EstimatorArg::Thm => Estimator::Thm,
            EstimatorArg::Sim => Estimator::Sim,
        };
    }
    if let Some(r) = &args.response {
        cfg.response = r.clone();
    }
    if !args.covariates.is_empty() {
        cfg.covariates = args.covariates.clone();
    }
    if args.congruence_current.is_some() {
        cfg.congruence_current = args.congruence_current.clone();
    }
    if args.congruence_intercept_only {
        cfg.congruence_covariates = Some(Vec::new());
    } else if !args.congruence_covariates.is_empty() {
        cfg.congruence_covariates = Some(args.congruence_covariates.clone());
    }
    if let Some(r) = args.mc_draws {
        cfg.mc_draws = r;
    }
    cfg.seed = Some(seed_or_fresh(args.seed.or(cfg.seed)));
    Ok(cfg)
}

fn cmd_pcm(args: AnalysisArgs) -> Result<(), Error> {
    let cfg = build_config(&args)?;
    let report = run_pcm(&cfg)?;
    let json = to_json(&report)?;
    write_file(&args.out.out, &format!("pcm-{}.json", cfg.seed.unwrap_or_default()), &json)?;
    println!("{json}");
    Ok(())
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<(), Error> {
    let mut cfg = build_config(&args.common)?;
    if let Some(m) = args.mode {
        cfg.mode = match m {
            ModeArg::Global => BorrowMode::Global,
            ModeArg::Pointwise => BorrowMode::Pointwise,
        };
    }
    args.calibration.apply(&mut cfg.calibration);
    if let Some(v) = args.iters {
        cfg.sampler.iters = v;
    }
    if let Some(v) = args.burn_in {
        cfg.sampler.burn_in = v;
    }
    if let Some(v) = args.proposal_scale {
        cfg.proposal_scale = v;
    }
    cfg.cap |= args.cap;
    if args.power.is_some() {
        cfg.power = args.power;
    }
    let (report, draws) = run_analysis(&cfg)?;
    let seed = cfg.seed.unwrap_or_default();
    let json = to_json(&report)?;
    let dir = &args.common.out.out;
    write_file(dir, &format!("analysis-{seed}.json"), &json)?;
    if let (true, Some(d)) = (args.write_draws, draws) {
        std::fs::create_dir_all(dir)?;
        d.write_csv(&dir.join(format!("draws-{seed}.csv")))?;
    }
    println!("{json}");
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<(), Error> {
    let mut cfg = CalibrationConfig::new(args.n);
    args.calibration.apply(&mut cfg);
    let (report, csv) = run_curve(&cfg, args.grid)?;
    let json = to_json(&report)?;
    write_file(&args.out.out, &format!("curve-n{}.csv", args.n), &csv)?;
    write_file(&args.out.out, &format!("curve-n{}.json", args.n), &json)?;
    println!("{json}");
    Ok(())
}

fn print_outputs(files: &[PathBuf]) {
    let names: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
    println!("{}", serde_json::json!({ "outputs": names }));
}

fn run_uniformity(spec: &UniformitySpec, out: &Path) -> Result<(), Error> {
    let report = run_uniformity_demo(spec)?;
    eprintln!(
        "pairs={} ks={:.4} ks_p={:.4} naive_sd={:.4} marginal_sd={:.4}",
        report.naive.len(),
        report.ks_statistic,
        report.ks_p_value,
        report.naive_sd,
        report.marginal_sd
    );
    print_outputs(&report.write_outputs(spec, out)?);
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), Error> {
    let text = read_text(&args.scenario)?;
    let out = &args.out.out;
    match load_scenario(&text)? {
        ScenarioFile::Replicated(mut spec) => {
            spec.seed = args.seed.unwrap_or(spec.seed);
            spec.replicates = args.replicates.unwrap_or(spec.replicates);
            let report = sim::run(&spec)?;
            for line in report.digest() {
                eprintln!("{line}");
            }
            print_outputs(&report.write_outputs(out)?);
        }
        ScenarioFile::Batch(mut batch) => {
            batch.seed = args.seed.unwrap_or(batch.seed);
            if let Some(r) = args.replicates {
                batch.scenarios.iter_mut().for_each(|s| s.replicates = r);
            }
            let reports = batch.run()?;
            for r in &reports {
                for line in r.digest() {
                    eprintln!("{}: {line}", r.scenario);
                }
            }
            print_outputs(&batch.write_outputs(&reports, out)?);
        }
        ScenarioFile::Uniformity(mut spec) => {
            spec.seed = args.seed.unwrap_or(spec.seed);
            spec.pairs = args.replicates.unwrap_or(spec.pairs);
            run_uniformity(&spec, out)?;
        }
    }
    Ok(())
}

fn cmd_uniformity(args: UniformityArgs) -> Result<(), Error> {
    let mut spec: UniformitySpec = parse_json(
        &serde_json::json!({ "n": args.n, "m": args.m, "pairs": args.pairs, "mc_draws": args.mc_draws, "seed": 0 })
            .to_string(),
        "uniformity",
    )?;
    spec.seed = seed_or_fresh(args.seed);
    run_uniformity(&spec, &args.out.out)
}
