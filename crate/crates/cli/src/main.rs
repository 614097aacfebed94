//! Command-line front end for the external-control borrowing pipeline.
//!
//! Subcommands: `generate` (simulated datasets), `analyze` (the full
//! borrowing workflow on CSV inputs), `mc` (Monte Carlo studies), and
//! `aic` (per-arm forward-stepwise covariate selection).

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use ecborrow::data::{read_ec_csv, read_rct_csv, write_ec_csv, write_rct_csv, OutcomeKind};
use ecborrow::glm::{select_covariates_aic, Family};
use ecborrow::influence::InfluenceScores;
use ecborrow::pipeline::{run_analysis, AnalysisOptions, CalibrationKind, ReferenceSpec};
use ecborrow::selection::KGrid;
use ecborrow::simgen::{acceptance_checks, monte_carlo, McConfig, McReference, Mechanism};

#[derive(Parser)]
#[command(name = "ecborrow", version, about = "Adaptive influence-based borrowing of external controls")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a simulated RCT/EC dataset pair.
    Generate(GenerateArgs),
    /// Run the borrowing workflow on CSV inputs and write reports.
    Analyze(AnalyzeArgs),
    /// Run a Monte Carlo study of all estimators on one mechanism.
    Mc(McArgs),
    /// Forward-stepwise AIC covariate selection per RCT arm.
    Aic(AicArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Gaussian,
    Binomial,
}

impl From<FamilyArg> for Family {
    fn from(value: FamilyArg) -> Self {
        match value {
            FamilyArg::Gaussian => Family::GaussianIdentity,
            FamilyArg::Binomial => Family::BinomialLogit,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CalibrationArg {
    Off,
    Linear,
    Kernel,
}

impl From<CalibrationArg> for CalibrationKind {
    fn from(value: CalibrationArg) -> Self {
        match value {
            CalibrationArg::Off => CalibrationKind::Off,
            CalibrationArg::Linear => CalibrationKind::Linear,
            CalibrationArg::Kernel => CalibrationKind::Kernel,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Mechanism: demo, mech1, mech2, or exchangeable.
    #[arg(long)]
    mech: String,
    #[arg(long, default_value_t = 100)]
    n_rct: usize,
    #[arg(long, default_value_t = 200)]
    n_ec: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory for rct.csv, ec.csv, meta.json.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AnalyzeArgs {
    /// RCT CSV (covariates..., a, y).
    #[arg(long)]
    rct: Option<PathBuf>,
    /// EC CSV (covariates..., y).
    #[arg(long)]
    ec: Option<PathBuf>,
    /// Outcome family; inferred from the RCT outcome when omitted.
    #[arg(long)]
    family: Option<FamilyArg>,
    /// Propensity trimming bound in (0, 0.5).
    #[arg(long)]
    trim: Option<f64>,
    /// Candidate subset sizes: `auto`, a comma list `0,5,10`, or a
    /// range `start:end:step`.
    #[arg(long)]
    k_vector: Option<String>,
    /// `aipw` or a numeric reference value.
    #[arg(long, allow_hyphen_values = true)]
    reference: Option<String>,
    #[arg(long)]
    calibration: Option<CalibrationArg>,
    /// Known randomization probability for the RCT propensity.
    #[arg(long)]
    known_ps: Option<f64>,
    /// Run per-arm AIC covariate selection first and analyze on the union.
    #[arg(long)]
    aic: bool,
    /// Reserved for resampling extensions; recorded in the report.
    #[arg(long)]
    seed: Option<u64>,
    /// JSON config file supplying any of the above; flags win.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

/// JSON mirror of the analyze flags.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    rct: Option<PathBuf>,
    ec: Option<PathBuf>,
    family: Option<String>,
    trim: Option<f64>,
    k_vector: Option<String>,
    reference: Option<String>,
    calibration: Option<String>,
    known_ps: Option<f64>,
    aic: Option<bool>,
    seed: Option<u64>,
}

#[derive(Args)]
struct McArgs {
    #[arg(long)]
    mech: String,
    #[arg(long, default_value_t = 200)]
    reps: usize,
    #[arg(long)]
    n_rct: Option<usize>,
    #[arg(long)]
    n_ec: Option<usize>,
    #[arg(long, default_value_t = 2026)]
    seed: u64,
    #[arg(long)]
    k_vector: Option<String>,
    /// `aipw` (per-replicate RCT AIPW) or `true-ate`.
    #[arg(long)]
    reference: Option<String>,
    #[arg(long)]
    calibration: Option<CalibrationArg>,
    #[arg(long)]
    trim: Option<f64>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct AicArgs {
    #[arg(long)]
    rct: PathBuf,
    #[arg(long)]
    family: Option<FamilyArg>,
    /// Optional output directory for aic_selection.json.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn main() -> Result<()> {
    configure_threads()?;
    let cli = Cli::parse();
    match cli.command {
        Command::Generate(args) => cmd_generate(args),
        Command::Analyze(args) => cmd_analyze(args),
        Command::Mc(args) => cmd_mc(args),
        Command::Aic(args) => cmd_aic(args),
    }
}

/// ECBORROW_THREADS caps the rayon pool used for per-k and per-replicate
/// parallelism.
fn configure_threads() -> Result<()> {
    if let Ok(raw) = std::env::var("ECBORROW_THREADS") {
        let threads: usize = raw
            .parse()
            .with_context(|| format!("ECBORROW_THREADS must be a positive integer, got `{raw}`"))?;
        if threads == 0 {
            bail!("ECBORROW_THREADS must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .context("failed to configure the thread pool")?;
    }
    Ok(())
}

fn parse_k_vector(raw: &str, n_ec: usize) -> Result<Option<Vec<usize>>> {
    let raw = raw.trim();
    if raw == "auto" {
        return Ok(None);
    }
    let mut ks: Vec<usize> = if raw.contains(':') {
        let parts: Vec<&str> = raw.split(':').collect();
        if parts.len() != 3 {
            bail!("k-vector range must be start:end:step, got `{raw}`");
        }
        let start: usize = parts[0].parse().context("k-vector start")?;
        let end: usize = parts[1].parse().context("k-vector end")?;
        let step: usize = parts[2].parse().context("k-vector step")?;
        if step == 0 || end < start {
            bail!("k-vector range must have step ≥ 1 and end ≥ start");
        }
        (start..=end).step_by(step).collect()
    } else {
        raw.split(',')
            .map(|t| t.trim().parse::<usize>().with_context(|| format!("k-vector entry `{t}`")))
            .collect::<Result<Vec<usize>>>()?
    };
    ks.sort_unstable();
    ks.dedup();
    if let Some(&bad) = ks.iter().find(|&&k| k > n_ec) {
        bail!("k-vector entry {bad} exceeds the EC count {n_ec}");
    }
    Ok(Some(ks))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let body = serde_json::to_string_pretty(value).context("serializing JSON")?;
    fs::write(path, body + "\n").with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

// ---------------------------------------------------------------------------
// generate
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct GenerateMeta {
    mechanism: String,
    n_rct: usize,
    n_ec: usize,
    seed: u64,
    true_ate: f64,
}

fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let mechanism: Mechanism = args.mech.parse().context("parsing --mech")?;
    let data = ecborrow::simgen::generate(mechanism, args.n_rct, args.n_ec, args.seed)
        .context("generating data")?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_rct_csv(&data.rct, args.out.join("rct.csv")).context("writing rct.csv")?;
    write_ec_csv(&data.ec, args.out.join("ec.csv")).context("writing ec.csv")?;
    write_json(
        &args.out.join("meta.json"),
        &GenerateMeta {
            mechanism: mechanism.name().to_string(),
            n_rct: args.n_rct,
            n_ec: args.n_ec,
            seed: args.seed,
            true_ate: data.true_ate,
        },
    )?;
    println!(
        "wrote rct.csv ({} rows), ec.csv ({} rows), meta.json to {}",
        data.rct.n(),
        data.ec.n(),
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct AicReport {
    treated: Vec<String>,
    control: Vec<String>,
    union: Vec<String>,
    union_indices: Vec<usize>,
}

#[derive(Serialize)]
struct AnalysisReport {
    schema_version: u32,
    reference: String,
    reference_value: f64,
    family: String,
    trim: f64,
    calibration: String,
    known_ps: Option<f64>,
    seed: Option<u64>,
    n_rct: usize,
    n_ec: usize,
    k_star: usize,
    caib_k_star: Option<usize>,
    rows: Vec<ecborrow::pipeline::TableRow>,
    selected_ec_indices: Vec<usize>,
    caib_selected_ec_indices: Option<Vec<usize>>,
    selection_failures: Vec<ecborrow::selection::KFailure>,
    aic: Option<AicReport>,
    bias_coefficients: Option<Vec<f64>>,
}

fn family_name(family: Family) -> &'static str {
    match family {
        Family::GaussianIdentity => "gaussian",
        Family::BinomialLogit => "binomial",
    }
}

fn calibration_name(kind: CalibrationKind) -> &'static str {
    match kind {
        CalibrationKind::Off => "off",
        CalibrationKind::Linear => "linear",
        CalibrationKind::Kernel => "kernel",
    }
}

fn write_grid_csv(path: &Path, grid: &KGrid) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    writer.write_record(["top_k", "estimate", "bias", "variance", "mse"])?;
    for row in &grid.rows {
        writer.write_record([
            row.top_k.to_string(),
            row.estimate.to_string(),
            row.bias.to_string(),
            row.variance.to_string(),
            row.mse.to_string(),
        ])?;
    }
    writer.flush()?;
    Ok(())
}

fn write_influences_csv(path: &Path, influences: &InfluenceScores) -> Result<()> {
    // rank[i] = position of EC i in the ascending ordering.
    let mut rank = vec![0usize; influences.n()];
    for (pos, &idx) in influences.ranking.iter().enumerate() {
        rank[idx] = pos;
    }
    let mut writer = csv::Writer::from_path(path)
        .with_context(|| format!("opening {}", path.display()))?;
    writer.write_record(["ec_index", "score", "rank"])?;
    for (i, score) in influences.scores.iter().enumerate() {
        writer.write_record([i.to_string(), score.to_string(), rank[i].to_string()])?;
    }
    writer.flush()?;
    Ok(())
}

fn merge_config(args: &AnalyzeArgs) -> Result<(PathBuf, PathBuf, AnalyzeSettings)> {
    let file: ConfigFile = match &args.config {
        Some(path) => {
            let body = fs::read_to_string(path)
                .with_context(|| format!("reading config {}", path.display()))?;
            serde_json::from_str(&body)
                .with_context(|| format!("parsing config {}", path.display()))?
        }
        None => ConfigFile::default(),
    };
    let rct = args
        .rct
        .clone()
        .or(file.rct)
        .context("an RCT CSV is required (--rct or config `rct`)")?;
    let ec = args
        .ec
        .clone()
        .or(file.ec)
        .context("an EC CSV is required (--ec or config `ec`)")?;

    let family = match (&args.family, &file.family) {
        (Some(f), _) => Some(Family::from(*f)),
        (None, Some(name)) => Some(match name.as_str() {
            "gaussian" => Family::GaussianIdentity,
            "binomial" => Family::BinomialLogit,
            other => bail!("config family must be gaussian or binomial, got `{other}`"),
        }),
        (None, None) => None,
    };
    let calibration = match (&args.calibration, &file.calibration) {
        (Some(c), _) => CalibrationKind::from(*c),
        (None, Some(name)) => match name.as_str() {
            "off" => CalibrationKind::Off,
            "linear" => CalibrationKind::Linear,
            "kernel" => CalibrationKind::Kernel,
            other => bail!("config calibration must be off, linear, or kernel, got `{other}`"),
        },
        (None, None) => CalibrationKind::Off,
    };
    let settings = AnalyzeSettings {
        family,
        trim: args.trim.or(file.trim).unwrap_or(ecborrow::estimators::DEFAULT_TRIM),
        k_vector: args.k_vector.clone().or(file.k_vector).unwrap_or_else(|| "auto".into()),
        reference: args.reference.clone().or(file.reference).unwrap_or_else(|| "aipw".into()),
        calibration,
        known_ps: args.known_ps.or(file.known_ps),
        aic: args.aic || file.aic.unwrap_or(false),
        seed: args.seed.or(file.seed),
    };
    Ok((rct, ec, settings))
}

struct AnalyzeSettings {
    family: Option<Family>,
    trim: f64,
    k_vector: String,
    reference: String,
    calibration: CalibrationKind,
    known_ps: Option<f64>,
    aic: bool,
    seed: Option<u64>,
}

fn cmd_analyze(args: AnalyzeArgs) -> Result<()> {
    let (rct_path, ec_path, settings) = merge_config(&args)?;
    let mut rct = read_rct_csv(&rct_path)
        .with_context(|| format!("stage data-load: reading {}", rct_path.display()))?;
    let mut ec = read_ec_csv(&ec_path)
        .with_context(|| format!("stage data-load: reading {}", ec_path.display()))?;

    let family = settings.family.unwrap_or(match rct.outcome_kind() {
        OutcomeKind::Binary => Family::BinomialLogit,
        OutcomeKind::Continuous => Family::GaussianIdentity,
    });

    let aic_report = if settings.aic {
        let (report, union_indices) =
            run_aic_union(&rct, family).context("stage aic-selection")?;
        rct = rct.with_columns(&union_indices).context("stage aic-selection: restricting RCT")?;
        ec = ec.with_columns(&union_indices).context("stage aic-selection: restricting EC")?;
        Some(report)
    } else {
        None
    };

    let reference = if settings.reference == "aipw" {
        ReferenceSpec::RctAipw
    } else {
        let value: f64 = settings
            .reference
            .parse()
            .with_context(|| format!("--reference must be `aipw` or a number, got `{}`", settings.reference))?;
        ReferenceSpec::Value(value)
    };
    let k_vector = parse_k_vector(&settings.k_vector, ec.n())?;
    let sensitivity_delta = ((ec.n() as f64 * 0.1).round() as usize).max(1);

    let options = AnalysisOptions {
        family,
        trim: settings.trim,
        k_vector,
        reference,
        calibration: settings.calibration,
        known_ps: settings.known_ps,
        regressor: ecborrow::estimators::OutcomeRegressor::Glm,
        sensitivity_delta: Some(sensitivity_delta),
    };
    let result = run_analysis(&rct, &ec, &options).context("stage analysis")?;

    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;
    write_grid_csv(&args.out.join("mse_curve.csv"), &result.aib.grid)
        .context("stage output: mse_curve.csv")?;
    write_influences_csv(&args.out.join("influences.csv"), &result.influences)
        .context("stage output: influences.csv")?;
    if let Some(sweep) = &result.sensitivity {
        write_grid_csv(&args.out.join("sensitivity.csv"), sweep)
            .context("stage output: sensitivity.csv")?;
    }
    if let Some(calibrated) = &result.calibrated_ec {
        write_ec_csv(calibrated, args.out.join("calibrated_ec.csv"))
            .context("stage output: calibrated_ec.csv")?;
    }

    let report = AnalysisReport {
        schema_version: 1,
        reference: settings.reference.clone(),
        reference_value: result.reference_value,
        family: family_name(family).to_string(),
        trim: settings.trim,
        calibration: calibration_name(settings.calibration).to_string(),
        known_ps: settings.known_ps,
        seed: settings.seed,
        n_rct: rct.n(),
        n_ec: ec.n(),
        k_star: result.aib.k_star,
        caib_k_star: result.caib.as_ref().map(|c| c.k_star),
        rows: result.table_rows(ec.n()),
        selected_ec_indices: result.aib.selected_ec_indices.clone(),
        caib_selected_ec_indices: result.caib.as_ref().map(|c| c.selected_ec_indices.clone()),
        selection_failures: result.aib.failures.clone(),
        aic: aic_report,
        bias_coefficients: result
            .bias_model
            .as_ref()
            .and_then(|m| m.linear_coefficients())
            .map(|beta| beta.iter().copied().collect()),
    };
    write_json(&args.out.join("report.json"), &report).context("stage output: report.json")?;

    println!("reference value: {:.6}", result.reference_value);
    println!(
        "{:<8} {:>12} {:>10} {:>10} {:>10} {:>6}",
        "", "estimate", "bias", "sd", "mse", "k"
    );
    for row in report.rows {
        println!(
            "{:<8} {:>12.4} {:>10.4} {:>10.4} {:>10.4} {:>6}",
            row.estimator, row.estimate, row.bias, row.se, row.mse, row.k
        );
    }
    println!("outputs written to {}", args.out.display());
    Ok(())
}

fn run_aic_union(rct: &ecborrow::data::RctDataset, family: Family) -> Result<(AicReport, Vec<usize>)> {
    let treated = rct.treated_only();
    let controls = rct.controls_only();
    let sel_treated = select_covariates_aic(&treated.x, &treated.y, family)
        .context("AIC on the treated arm")?;
    let sel_control = select_covariates_aic(&controls.x, &controls.y, family)
        .context("AIC on the control arm")?;
    let union: BTreeSet<usize> = sel_treated.iter().chain(sel_control.iter()).copied().collect();
    let union_indices: Vec<usize> = union.into_iter().collect();
    let names = |idx: &[usize]| -> Vec<String> {
        idx.iter().map(|&j| rct.columns()[j].clone()).collect()
    };
    Ok((
        AicReport {
            treated: names(&sel_treated),
            control: names(&sel_control),
            union: names(&union_indices),
            union_indices: union_indices.clone(),
        },
        union_indices,
    ))
}

// ---------------------------------------------------------------------------
// mc
// ---------------------------------------------------------------------------

#[derive(Serialize)]
struct McChecksReport {
    mechanism: String,
    reps: usize,
    failures: usize,
    all_passed: bool,
    checks: Vec<ecborrow::simgen::McCheck>,
    ordering_fraction: Option<f64>,
}

fn cmd_mc(args: McArgs) -> Result<()> {
    let mechanism: Mechanism = args.mech.parse().context("parsing --mech")?;
    let mut config = McConfig::for_mechanism(mechanism, args.reps, args.seed);
    if let Some(n) = args.n_rct {
        config.n_rct = n;
    }
    if let Some(n) = args.n_ec {
        config.n_ec = n;
    }
    if let Some(trim) = args.trim {
        config.trim = trim;
    }
    if let Some(raw) = &args.k_vector {
        config.k_vector = parse_k_vector(raw, config.n_ec)?;
    }
    if let Some(reference) = &args.reference {
        config.reference = match reference.as_str() {
            "aipw" => McReference::RctAipw,
            "true-ate" => McReference::TrueAte,
            other => bail!("--reference must be aipw or true-ate, got `{other}`"),
        };
    }
    if let Some(calibration) = args.calibration {
        config.calibration = calibration.into();
    }

    let summary = monte_carlo(mechanism, &config).context("stage monte-carlo")?;
    fs::create_dir_all(&args.out)
        .with_context(|| format!("creating {}", args.out.display()))?;

    let csv_path = args.out.join("mc_summary.csv");
    let mut writer = csv::Writer::from_path(&csv_path)
        .with_context(|| format!("opening {}", csv_path.display()))?;
    writer.write_record(["estimator", "estimate", "bias", "sd", "mse", "k_star"])?;
    for row in &summary.rows {
        writer.write_record([
            row.estimator.clone(),
            row.mean_estimate.to_string(),
            row.mean_bias.to_string(),
            row.sd.to_string(),
            row.mse.to_string(),
            row.mean_k.to_string(),
        ])?;
    }
    writer.flush()?;

    let checks = acceptance_checks(mechanism, &summary);
    let all_passed = checks.iter().all(|c| c.passed);
    write_json(
        &args.out.join("mc_checks.json"),
        &McChecksReport {
            mechanism: mechanism.name().to_string(),
            reps: summary.reps_used,
            failures: summary.failures,
            all_passed,
            checks: checks.clone(),
            ordering_fraction: summary.ordering_fraction,
        },
    )?;

    println!(
        "{} over {} replicates ({} failures), true ATE {:.4}",
        mechanism.name(),
        summary.reps_used,
        summary.failures,
        summary.true_ate
    );
    println!(
        "{:<8} {:>12} {:>10} {:>10} {:>10} {:>10} {:>8}",
        "", "estimate", "bias", "sd", "mse", "rep-mse", "k*"
    );
    for row in &summary.rows {
        println!(
            "{:<8} {:>12.4} {:>10.4} {:>10.4} {:>10.4} {:>10.4} {:>8.1}",
            row.estimator,
            row.mean_estimate,
            row.mean_bias,
            row.sd,
            row.mse,
            row.mean_pipeline_mse,
            row.mean_k
        );
    }
    if let Some(legs) = summary.leg_fractions {
        println!(
            "per-seed legs: caib<aib {:.1}%, aib<min(full,aipw) {:.1}%, min<direct {:.1}%",
            legs[0] * 100.0,
            legs[1] * 100.0,
            legs[2] * 100.0
        );
    }
    for check in &checks {
        println!("[{}] {}: {}", if check.passed { "pass" } else { "FAIL" }, check.name, check.detail);
    }
    println!("outputs written to {}", args.out.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// aic
// ---------------------------------------------------------------------------

fn cmd_aic(args: AicArgs) -> Result<()> {
    let rct = read_rct_csv(&args.rct)
        .with_context(|| format!("reading {}", args.rct.display()))?;
    let family = args.family.map(Family::from).unwrap_or(match rct.outcome_kind() {
        OutcomeKind::Binary => Family::BinomialLogit,
        OutcomeKind::Continuous => Family::GaussianIdentity,
    });
    let (report, _) = run_aic_union(&rct, family)?;
    let body = serde_json::to_string_pretty(&report)?;
    println!("{body}");
    if let Some(out) = args.out {
        fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
        write_json(&out.join("aic_selection.json"), &report)?;
    }
    Ok(())
}
