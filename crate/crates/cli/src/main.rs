//! `cpsurv`: fit change-point survival models, predict from fits, compare
//! against standard families, and run simulation studies.
//!
//! Exit codes: 0 success, 2 validation, 3 convergence failure, 4 numerical error.

mod output;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use cpsurv::comparators::{league_table, write_league_csv, LeagueRow};
use cpsurv::data::{
    load_dataset, split_counting_process, standardize_covariate, write_counting_process,
    write_dataset, ColumnMapping, Dataset, INTERCEPT,
};
use cpsurv::mcmc::{fit_changepoint, read_draws_csv, FitSummary, SamplerConfig};
use cpsurv::predict::{
    changepoint_density, hr_curve, rmst, rmst_diff, survival_curve, write_density_csv, CurveRequest,
    PosteriorSummary,
};
use cpsurv::scenario::{expand_preset, Family, ModelSpec, ScenarioPreset};
use cpsurv::simstudy::{derive_seed, run_study, simulate_dataset, true_rmst_diff, SimScenario, StudyConfig, StudyModel};
use serde::Serialize;

use output::{Manifest, OutDir, SeedSource};

const RHAT_LIMIT: f64 = 1.1;
const DEFAULT_T_MAX: f64 = 15.0;
const DENSITY_POINTS: usize = 200;

#[derive(Parser)]
#[command(name = "cpsurv", version, about = "Bayesian change-point survival models")]
struct Cli {
    /// Worker threads for chains and replicates (default: available cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a change-point model and write draws, summary and manifest.
    Fit(FitArgs),
    /// Survival, hazard-ratio, RMST and change-point density from a fit directory.
    Predict(PredictArgs),
    /// Fit several models to one dataset and rank them by WAIC.
    Compare(CompareArgs),
    /// Generate replicate datasets from a scenario.
    Simulate(SimulateArgs),
    /// Run a simulation study over a scenario grid.
    SimStudy(SimStudyArgs),
    /// Export the counting-process expansion of a dataset.
    Split(SplitArgs),
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "time")]
    time_col: String,
    #[arg(long, default_value = "status")]
    status_col: String,
    #[arg(long)]
    id_col: Option<String>,
    /// Covariates to standardize into `<name>_scale` columns.
    #[arg(long, value_delimiter = ',')]
    standardize: Vec<String>,
}

#[derive(Args, Clone)]
struct SamplerArgs {
    #[arg(long)]
    chains: Option<usize>,
    /// Iterations per chain, burn-in included.
    #[arg(long)]
    iters: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    /// Seed for all randomness; drawn and recorded when absent.
    #[arg(long)]
    seed: Option<u64>,
}

impl SamplerArgs {
    fn apply(&self, base: SamplerConfig) -> SamplerConfig {
        let mut cfg = SamplerConfig {
            n_chains: self.chains.unwrap_or(base.n_chains),
            ..base
        };
        if self.iters.is_some() || self.burnin.is_some() || self.thin.is_some() {
            cfg = cfg.with_lengths(
                self.iters.unwrap_or(base.iterations),
                self.burnin.unwrap_or(base.burnin),
                self.thin.unwrap_or(base.thin),
            );
        }
        cfg
    }

    fn seed(&self) -> (u64, SeedSource) {
        match self.seed {
            Some(s) => (s, SeedSource::Flag),
            None => (rand::random(), SeedSource::Drawn),
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Model specification JSON.
    #[arg(long, conflicts_with_all = ["preset", "k"])]
    model: Option<PathBuf>,
    /// Scenario preset, used when no model file is given.
    #[arg(long)]
    preset: Option<String>,
    /// Number of change-points for a preset.
    #[arg(long)]
    k: Option<usize>,
    #[arg(long, default_value = "weibull")]
    family: String,
    /// Covariates for a preset; must include the treatment `trt`.
    #[arg(long, value_delimiter = ',', default_value = "trt")]
    covariates: Vec<String>,
    /// Upper bound of the change-point prior (default: largest follow-up time).
    #[arg(long)]
    tau_max: Option<f64>,
    /// Also report the RMST difference over `[0, tmax]`.
    #[arg(long)]
    tmax: Option<f64>,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PredictArgs {
    /// Directory written by `cpsurv fit`.
    #[arg(long)]
    fit: PathBuf,
    /// Curve request JSON (profile, arms, times, t_max).
    #[arg(long)]
    request: Option<PathBuf>,
    /// Horizon; overrides the request's `t_max`.
    #[arg(long)]
    tmax: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Comma-separated models, e.g. `changepoint:loss_of_effect:k1,weibull,royston-parmar-nph`.
    #[arg(long, value_delimiter = ',', required = true)]
    models: Vec<String>,
    #[arg(long, default_value_t = DEFAULT_T_MAX)]
    tmax: f64,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Scenario JSON.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimStudyArgs {
    /// Study JSON: grid, models and optional sampler settings.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    replicates: Option<usize>,
    #[command(flatten)]
    sampler: SamplerArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Design covariates, excluding the intercept.
    #[arg(long, value_delimiter = ',', default_value = "trt")]
    covariates: Vec<String>,
    /// Strictly increasing change-points.
    #[arg(long, value_delimiter = ',', required = true)]
    taus: Vec<f64>,
    #[arg(long)]
    out: PathBuf,
}

/// Sampler diagnostics failed after outputs were written.
#[derive(Debug)]
struct Unconverged(String);

impl std::fmt::Display for Unconverged {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Unconverged {}

fn exit_code(err: &anyhow::Error) -> (u8, &'static str) {
    if err.downcast_ref::<Unconverged>().is_some() {
        return (3, "convergence");
    }
    match err.chain().find_map(|e| e.downcast_ref::<cpsurv::Error>()) {
        Some(cpsurv::Error::Convergence(_)) => (3, "convergence"),
        Some(cpsurv::Error::Domain(_)) | Some(cpsurv::Error::Evaluation(_)) => (4, "numerical"),
        _ => (2, "validation"),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let (code, kind) = exit_code(&err);
            let message = format!("{err:#}");
            let line = serde_json::json!({ "error": kind, "exit_code": code, "message": message });
            eprintln!("{line}");
            ExitCode::from(code)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(cpsurv::Error::Validation("--threads must be at least 1".into()).into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match cli.command {
        Command::Fit(a) => cmd_fit(a),
        Command::Predict(a) => cmd_predict(a),
        Command::Compare(a) => cmd_compare(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::SimStudy(a) => cmd_sim_study(a),
        Command::Split(a) => cmd_split(a),
    }
}

/// Loads the columns needed for `covariates`, deriving `<name>_scale`
/// columns listed in `--standardize`.
fn load(args: &DataArgs, covariates: &[String]) -> Result<Dataset> {
    let derived: Vec<String> = args.standardize.iter().map(|s| format!("{s}_scale")).collect();
    let mut columns: Vec<&str> = Vec::new();
    for c in covariates.iter().filter(|c| *c != INTERCEPT) {
        let source = match derived.iter().position(|d| d == c) {
            Some(i) => args.standardize[i].as_str(),
            None => c.as_str(),
        };
        if !columns.contains(&source) {
            columns.push(source);
        }
    }
    for s in &args.standardize {
        if !columns.contains(&s.as_str()) {
            columns.push(s);
        }
    }
    let mut mapping = ColumnMapping::new(&args.time_col, &args.status_col, &columns);
    mapping.id = args.id_col.clone();
    let mut ds = load_dataset(&args.data, &mapping)
        .with_context(|| format!("loading {}", args.data.display()))?;
    for s in &args.standardize {
        ds = standardize_covariate(&ds, s)?;
    }
    Ok(ds)
}

fn data_config(args: &DataArgs) -> serde_json::Value {
    serde_json::json!({
        "data": args.data.display().to_string(),
        "time_col": args.time_col,
        "status_col": args.status_col,
        "id_col": args.id_col,
        "standardize": args.standardize,
    })
}

fn resolve_spec(a: &FitArgs) -> Result<ModelSpec> {
    let mut spec = match (&a.model, &a.preset) {
        (Some(path), _) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ModelSpec::from_json(&text)?
        }
        (None, Some(preset)) => {
            let preset: ScenarioPreset = preset.parse()?;
            let family = match a.family.as_str() {
                "weibull" => Family::Weibull,
                "exponential" => Family::Exponential,
                other => bail!(cpsurv::Error::Validation(format!("unknown family `{other}`"))),
            };
            let covs: Vec<&str> = a.covariates.iter().map(String::as_str).collect();
            expand_preset(preset, family, &covs, a.k.unwrap_or(1))?
        }
        (None, None) => bail!(cpsurv::Error::Validation(
            "either --model or --preset is required".into()
        )),
    };
    if a.tau_max.is_some() {
        spec.tau_max = a.tau_max;
    }
    spec.validate()?;
    Ok(spec)
}

#[derive(Serialize)]
struct FitReport {
    #[serde(flatten)]
    summary: FitSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    rmst_diff: Option<RmstDiffReport>,
}

#[derive(Serialize)]
struct RmstDiffReport {
    t_max: f64,
    #[serde(flatten)]
    summary: PosteriorSummary,
}

fn cmd_fit(a: FitArgs) -> Result<()> {
    let spec = resolve_spec(&a)?;
    let ds = load(&a.data, &spec.covariates)?;
    let (seed, source) = a.sampler.seed();
    let cfg = a.sampler.apply(SamplerConfig::application(seed));
    cfg.validate()?;
    let config = serde_json::json!({
        "data": data_config(&a.data),
        "model": spec,
        "sampler": cfg,
        "tmax": a.tmax,
    });
    let mut manifest = Manifest::new("fit", config, seed, source)?;
    manifest.add_input(&a.data.data)?;
    if let Some(m) = &a.model {
        manifest.add_input(m)?;
    }

    let fit = fit_changepoint(&spec, &ds, &cfg)?;
    let rmst_diff = match a.tmax {
        Some(t_max) => Some(RmstDiffReport {
            t_max,
            summary: rmst_diff(&fit.draws, &spec, &CurveRequest::new(t_max))?,
        }),
        None => None,
    };

    let mut out = OutDir::create(&a.out)?;
    let mut draws = Vec::new();
    fit.draws.write_csv(&mut draws)?;
    out.write("draws.csv", &draws)?;
    out.write_json("model.json", &spec)?;
    out.write_json(
        "summary.json",
        &FitReport {
            summary: fit.summary(),
            rmst_diff,
        },
    )?;
    out.finish(manifest)?;

    match fit.diagnostics.max_rhat() {
        Some(r) if r > RHAT_LIMIT => Err(Unconverged(format!(
            "max split-R̂ {r:.3} exceeds {RHAT_LIMIT}; outputs written to {}",
            a.out.display()
        ))
        .into()),
        _ => Ok(()),
    }
}

fn read_fit_dir(dir: &Path) -> Result<(ModelSpec, cpsurv::mcmc::PosteriorDraws, FitSummary)> {
    let need = |name: &str| -> Result<PathBuf> {
        let p = dir.join(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(cpsurv::Error::Validation(format!("fit directory lacks {name}: {}", p.display())).into())
        }
    };
    let spec = ModelSpec::from_json(&fs::read_to_string(need("model.json")?)?)?;
    let draws = read_draws_csv(fs::File::open(need("draws.csv")?)?)?;
    let summary: FitSummary = serde_json::from_str(&fs::read_to_string(need("summary.json")?)?)
        .map_err(cpsurv::Error::from)?;
    let expected = cpsurv::likelihood::ParamLayout::new(&spec).names;
    if draws.names != expected {
        bail!(cpsurv::Error::Validation(
            "draws.csv columns do not match model.json".into()
        ));
    }
    Ok((spec, draws, summary))
}

#[derive(Serialize)]
struct RmstRow {
    quantity: String,
    arm: String,
    mean: f64,
    median: f64,
    lo95: f64,
    hi95: f64,
}

fn cmd_predict(a: PredictArgs) -> Result<()> {
    let (spec, draws, summary) = read_fit_dir(&a.fit)?;
    let mut req = match &a.request {
        Some(p) => serde_json::from_str::<CurveRequest>(
            &fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )
        .map_err(cpsurv::Error::from)?,
        None => CurveRequest::new(a.tmax.unwrap_or(DEFAULT_T_MAX)),
    };
    if let Some(t) = a.tmax {
        req.t_max = t;
    }
    req.validate()?;
    let config = serde_json::json!({ "fit": a.fit.display().to_string(), "request": req });
    let mut manifest = Manifest::new("predict", config, summary.metadata.sampler.seed, SeedSource::Config)?;
    for f in ["model.json", "draws.csv", "summary.json"] {
        manifest.add_input(&a.fit.join(f))?;
    }
    if let Some(p) = &a.request {
        manifest.add_input(p)?;
    }

    let mut out = OutDir::create(&a.out)?;
    let mut buf = Vec::new();
    survival_curve(&draws, &spec, &req)?.write_csv(&mut buf)?;
    out.write("curves.csv", &buf)?;

    if spec.treatment_row().is_some() && req.arms.len() >= 2 {
        let mut buf = Vec::new();
        hr_curve(&draws, &spec, &req)?.write_csv(&mut buf)?;
        out.write("hr.csv", &buf)?;
    }

    let mut rows = Vec::new();
    for &arm in &req.arms {
        let s = rmst(&draws, &spec, &req, arm)?;
        rows.push(RmstRow {
            quantity: "rmst".into(),
            arm: arm.to_string(),
            mean: s.mean,
            median: s.median,
            lo95: s.lo95,
            hi95: s.hi95,
        });
    }
    if req.arms.len() >= 2 {
        let s = rmst_diff(&draws, &spec, &req)?;
        rows.push(RmstRow {
            quantity: "rmst_diff".into(),
            arm: format!("{}-{}", req.arms[1], req.arms[0]),
            mean: s.mean,
            median: s.median,
            lo95: s.lo95,
            hi95: s.hi95,
        });
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in &rows {
        w.serialize(r)?;
    }
    out.write("rmst.csv", &w.into_inner()?)?;

    let tau_max = summary.metadata.tau_max.unwrap_or(req.t_max);
    let times: Vec<f64> = (0..DENSITY_POINTS)
        .map(|i| tau_max * i as f64 / (DENSITY_POINTS - 1) as f64)
        .collect();
    let density = changepoint_density(&draws, &spec, &times);
    let mut buf = Vec::new();
    if density.is_empty() {
        write_density_csv(&[], &[], &mut buf)?;
    } else {
        write_density_csv(&times, &density, &mut buf)?;
    }
    out.write("cpdensity.csv", &buf)?;
    out.finish(manifest)
}

fn cmd_compare(a: CompareArgs) -> Result<()> {
    let models = a
        .models
        .iter()
        .map(|m| m.parse::<StudyModel>())
        .collect::<cpsurv::Result<Vec<_>>>()?;
    let ds = load(&a.data, &[cpsurv::scenario::DEFAULT_TREATMENT.to_string()])?;
    let (seed, source) = a.sampler.seed();
    let cfg = a.sampler.apply(SamplerConfig::application(seed));
    cfg.validate()?;
    let config = serde_json::json!({
        "data": data_config(&a.data),
        "models": models,
        "sampler": cfg,
        "tmax": a.tmax,
    });
    let mut manifest = Manifest::new("compare", config, seed, source)?;
    manifest.add_input(&a.data.data)?;
    let mut rows = Vec::new();
    let mut summaries = BTreeMap::new();
    for m in &models {
        let (fit, diff) = m.evaluate(&ds, &cfg, a.tmax)?;
        rows.push(LeagueRow {
            model: m.label(),
            rmst_diff_median: diff,
            waic: fit.waic.waic,
        });
        summaries.insert(m.label(), fit.summary());
    }
    let mut out = OutDir::create(&a.out)?;
    let mut buf = Vec::new();
    write_league_csv(&league_table(rows), &mut buf)?;
    out.write("league.csv", &buf)?;
    out.write_json("fits.json", &summaries)?;
    out.finish(manifest)
}

#[derive(Serialize)]
struct Truth {
    scenario: SimScenario,
    true_rmst_diff: f64,
    replicate_seeds: Vec<u64>,
}

fn cmd_simulate(a: SimulateArgs) -> Result<()> {
    let text = fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let mut sc: SimScenario = serde_json::from_str(&text).map_err(cpsurv::Error::from)?;
    let source = match a.seed {
        Some(s) => {
            sc.seed = s;
            SeedSource::Flag
        }
        None => SeedSource::Config,
    };
    if let Some(r) = a.replicates {
        sc.replicates = r;
    }
    sc.validate()?;
    if sc.replicates == 0 {
        bail!(cpsurv::Error::Validation("at least one replicate is required".into()));
    }
    let mut manifest = Manifest::new("simulate", serde_json::to_value(sc)?, sc.seed, source)?;
    manifest.add_input(&a.config)?;
    let width = sc.replicates.to_string().len().max(3);
    let mut out = OutDir::create(&a.out)?;
    let mut seeds = Vec::new();
    for rep in 0..sc.replicates {
        let seed = derive_seed(sc.seed, rep as u64);
        seeds.push(seed);
        let mut buf = Vec::new();
        write_dataset(&simulate_dataset(&sc, seed)?, &mut buf)?;
        out.write(&format!("replicate_{:0width$}.csv", rep + 1), &buf)?;
    }
    out.write_json(
        "truth.json",
        &Truth {
            scenario: sc,
            true_rmst_diff: true_rmst_diff(&sc)?,
            replicate_seeds: seeds,
        },
    )?;
    out.finish(manifest)
}

fn cmd_sim_study(a: SimStudyArgs) -> Result<()> {
    let text = fs::read_to_string(&a.config).with_context(|| format!("reading {}", a.config.display()))?;
    let mut study: StudyConfig = serde_json::from_str(&text).map_err(cpsurv::Error::from)?;
    let source = match a.sampler.seed {
        Some(s) => {
            study.grid.seed = s;
            SeedSource::Flag
        }
        None => SeedSource::Config,
    };
    if let Some(r) = a.replicates {
        study.grid.replicates = r;
    }
    let cfg = a.sampler.apply(study.sampler());
    study.sampler = Some(cfg);
    study.models = study.models();
    let mut manifest = Manifest::new("sim-study", serde_json::to_value(&study)?, study.grid.seed, source)?;
    manifest.add_input(&a.config)?;
    let result = run_study(&study.grid.scenarios(), &study.models, &cfg)?;
    let mut out = OutDir::create(&a.out)?;
    let mut buf = Vec::new();
    result.write_csv(&mut buf)?;
    out.write("study.csv", &buf)?;
    out.write_json("study.json", &result)?;
    out.finish(manifest)
}

fn cmd_split(a: SplitArgs) -> Result<()> {
    let ds = load(&a.data, &a.covariates)?;
    let design: Vec<String> = a.covariates.iter().filter(|c| *c != INTERCEPT).cloned().collect();
    let rows = split_counting_process(&ds, &a.taus, &design)?;
    let config = serde_json::json!({
        "data": data_config(&a.data),
        "covariates": design,
        "taus": a.taus,
    });
    let mut manifest = Manifest::new("split", config, 0, SeedSource::Config)?;
    manifest.add_input(&a.data.data)?;
    let mut out = OutDir::create(&a.out)?;
    let mut buf = Vec::new();
    write_counting_process(&rows, &design, &mut buf)?;
    out.write("counting_process.csv", &buf)?;
    out.finish(manifest)
}
