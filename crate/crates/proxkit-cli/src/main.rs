//! Command-line front end for the proximity toolkit.
//!
//! Exit codes: 0 on success, 1 on usage errors (bad flags, unknown names),
//! 2 on data errors (unreadable files, malformed rows, invalid parameter
//! values). Subcommands that draw randomness print their effective seed as
//! `seed=<n> rng=<algorithm>`; rerunning with that seed reproduces the
//! output bitwise.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use proxkit::evaluate::{
    derive_anchor_table, run_experiment, run_sweep, write_report_csv, write_sweep_csv, FilterKind,
    FilterParams, FilterRunner, SweepConfig, SweepParam,
};
use proxkit::nifilter::{read_anchor_csv, write_anchor_csv, AnchorTable};
use proxkit::pathloss::{
    average_by_distance, calibrate, read_calibration_csv, CalibratedModel, CalibrationSample,
    PathLossModel,
};
use proxkit::rng::{entropy_seed, RNG_ALGORITHM};
use proxkit::simulate::{generate_trace, preset_model, SimConfig, PRESET_MODELS};
use proxkit::trace::{read_trace_csv, write_trace_csv, RssiTrace};

mod config;
use config::{resolve, FileConfig};

/// Proximity estimation from BLE RSSI: calibrate a path-loss model,
/// simulate traces, filter signal streams, and score accuracy.
#[derive(Parser)]
#[command(name = "proxkit", version)]
struct Cli {
    /// Config file of `key=value` defaults (overrides $PROXKIT_CONFIG)
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a path-loss model to distance-labeled RSSI samples
    Calibrate(CalibrateArgs),
    /// Generate a synthetic labeled RSSI trace
    Simulate(SimulateArgs),
    /// Stream a trace through one filter
    Filter(FilterArgs),
    /// Score every filter on a labeled trace
    Evaluate(EvaluateArgs),
    /// Tabulate accuracy and output spread across a parameter range
    Sweep(SweepArgs),
}

#[derive(Args)]
struct CalibrateArgs {
    /// Calibration samples CSV (`distance_m,rssi_dbm`)
    samples: PathBuf,
    /// Output model file (`key=value`)
    #[arg(short, long, value_name = "FILE")]
    output: PathBuf,
    /// Read the input as a labeled trace CSV instead of calibration samples
    #[arg(long)]
    from_trace: bool,
    /// Also write the per-distance anchor table used by the ni filter
    #[arg(long, value_name = "FILE")]
    emit_anchors: Option<PathBuf>,
    /// Average samples per distance before fitting
    #[arg(long)]
    pre_average: bool,
}

/// Where the path-loss model comes from: a calibration file or a named
/// built-in.
#[derive(Args)]
#[group(required = true, multiple = false)]
struct ModelSource {
    /// Calibrated model file (from `proxkit calibrate`)
    #[arg(short, long, value_name = "FILE")]
    model: Option<PathBuf>,
    /// Built-in illustrative model
    #[arg(long, value_name = "NAME", value_parser = parse_preset)]
    preset: Option<String>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    source: ModelSource,
    /// Output trace CSV
    #[arg(short, long, value_name = "FILE")]
    output: PathBuf,
    #[command(flatten)]
    sim: SimFlags,
    /// Seed for the noise stream (default: OS entropy)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct FilterArgs {
    /// Calibrated model file
    #[arg(short, long, value_name = "FILE")]
    model: PathBuf,
    /// Filter to run
    #[arg(short, long, value_parser = parse_filter_kind, value_name = "NAME")]
    filter: FilterKind,
    /// Input trace CSV
    #[arg(short, long, value_name = "FILE")]
    input: PathBuf,
    /// Output CSV of filtered readings
    #[arg(short, long, value_name = "FILE")]
    output: PathBuf,
    /// Anchor table CSV for the ni filter (default: derived from the
    /// input's distance labels)
    #[arg(long, value_name = "FILE")]
    anchors: Option<PathBuf>,
    #[command(flatten)]
    knobs: FilterFlags,
    /// Seed for the particle filter (default: OS entropy)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Calibrated model file
    #[arg(short, long, value_name = "FILE")]
    model: PathBuf,
    /// Labeled trace CSV
    #[arg(short, long, value_name = "FILE")]
    input: PathBuf,
    /// Directory for report files
    #[arg(short, long, value_name = "DIR", default_value = ".")]
    out_dir: PathBuf,
    /// Anchor table CSV for the ni filter (default: derived from the
    /// input's distance labels)
    #[arg(long, value_name = "FILE")]
    anchors: Option<PathBuf>,
    /// Keep filter state across dwell segments instead of resetting
    #[arg(long)]
    carry_state: bool,
    #[command(flatten)]
    knobs: FilterFlags,
    /// Base seed for per-segment filter streams (default: OS entropy)
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    /// Swept parameter
    #[arg(long, value_parser = parse_sweep_param, value_name = "NAME")]
    param: SweepParam,
    /// Values as `start:end[:step]` (inclusive) or a single value
    #[arg(long, value_parser = parse_range, value_name = "RANGE")]
    range: RangeValues,
    #[command(flatten)]
    source: ModelSource,
    /// Output CSV table
    #[arg(short, long, value_name = "FILE")]
    output: PathBuf,
    /// Filter scored by noise-sigma sweeps; window-size and particle-count
    /// sweeps pin their own filter
    #[arg(short, long, value_parser = parse_filter_kind, value_name = "NAME")]
    filter: Option<FilterKind>,
    /// Keep filter state across dwell segments instead of resetting
    #[arg(long)]
    carry_state: bool,
    #[command(flatten)]
    sim: SimFlags,
    #[command(flatten)]
    knobs: FilterFlags,
    /// Base seed for trace generation and derived filter streams
    /// (default: OS entropy)
    #[arg(long)]
    seed: Option<u64>,
}

/// Simulation knobs; unset flags fall back to `sim.*` config keys, then to
/// the benchmark defaults.
#[derive(Args)]
struct SimFlags {
    /// Gaussian channel noise sigma in dB
    #[arg(long, value_name = "DB")]
    noise_sigma: Option<f64>,
    /// Probability that a reading is an outlier
    #[arg(long, value_name = "P")]
    outlier_prob: Option<f64>,
    /// Noise sigma in dB applied to outlier readings
    #[arg(long, value_name = "DB")]
    outlier_sigma: Option<f64>,
    /// Readings per dwell distance
    #[arg(long, value_name = "N")]
    samples_per_distance: Option<usize>,
    /// Milliseconds between readings
    #[arg(long, value_name = "MS")]
    interval_ms: Option<u64>,
    /// Dwell distances in meters
    #[arg(long, value_delimiter = ',', value_name = "M,M,...")]
    distances: Option<Vec<f64>>,
    /// Beacon label written into the trace
    #[arg(long, value_name = "ID")]
    beacon_id: Option<String>,
}

/// Filter knobs; unset flags fall back to their config keys, then to the
/// built-in defaults.
#[derive(Args)]
struct FilterFlags {
    /// Moving-average window length
    #[arg(long, value_name = "N")]
    sma_window: Option<usize>,
    /// History length for the kf-dn rolling variance
    #[arg(long, value_name = "N")]
    kalman_history: Option<usize>,
    /// Measurement noise sigma in dB for kf-st, kf-dn, and pf
    /// (default: the model's residual_sigma)
    #[arg(long, value_name = "DB")]
    meas_sigma: Option<f64>,
    /// Particle count for pf
    #[arg(long, value_name = "N")]
    n_particles: Option<usize>,
    /// Random-walk sigma in dB for pf propagation
    #[arg(long, value_name = "DB")]
    process_sigma: Option<f64>,
    /// ESS fraction below which pf resamples
    #[arg(long, value_name = "F")]
    ess_threshold: Option<f64>,
    /// Kernel variance for ni
    #[arg(long, value_name = "V")]
    kde_sigma: Option<f64>,
    /// Prediction-step variance inflation for ni
    #[arg(long, value_name = "V")]
    ni_process_noise: Option<f64>,
}

/// A runtime error that is the caller's usage mistake, not a data problem.
#[derive(Debug)]
struct UsageError(String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<UsageError>() => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let file = FileConfig::load(cli.config.as_deref())?;
    match cli.command {
        Command::Calibrate(args) => cmd_calibrate(args),
        Command::Simulate(args) => cmd_simulate(args, &file),
        Command::Filter(args) => cmd_filter(args, &file),
        Command::Evaluate(args) => cmd_evaluate(args, &file),
        Command::Sweep(args) => cmd_sweep(args, &file),
    }
}

fn cmd_calibrate(args: CalibrateArgs) -> Result<()> {
    let samples = if args.from_trace {
        let trace = load_trace(&args.samples)?;
        let labeled: Vec<CalibrationSample> = trace
            .samples
            .iter()
            .filter_map(|s| {
                s.true_distance_m
                    .map(|d| CalibrationSample { distance_m: d, rssi_dbm: s.rssi_dbm })
            })
            .collect();
        if labeled.is_empty() {
            anyhow::bail!("{} has no distance-labeled samples", args.samples.display());
        }
        labeled
    } else {
        let reader = File::open(&args.samples)
            .with_context(|| format!("cannot open {}", args.samples.display()))?;
        read_calibration_csv(reader).with_context(|| format!("in {}", args.samples.display()))?
    };
    let fit = if args.pre_average {
        calibrate(&average_by_distance(&samples))?
    } else {
        calibrate(&samples)?
    };
    fs::write(&args.output, fit.to_kv())
        .with_context(|| format!("cannot write {}", args.output.display()))?;
    if let Some(path) = &args.emit_anchors {
        let table = AnchorTable::from_samples(&average_by_distance(&samples))?;
        let out = File::create(path).with_context(|| format!("cannot write {}", path.display()))?;
        write_anchor_csv(BufWriter::new(out), &table)?;
    }
    println!(
        "wrote {}: c0={} n={} residual_sigma={} ({} samples)",
        args.output.display(),
        fit.model.c0_dbm,
        fit.model.n,
        fit.residual_sigma_dbm,
        samples.len()
    );
    Ok(())
}

fn cmd_simulate(args: SimulateArgs, file: &FileConfig) -> Result<()> {
    let (model, _) = load_model_source(&args.source)?;
    let seed = resolve_seed(args.seed, file, "sim.seed")?;
    let cfg = resolve_sim_config(model, &args.sim, file, seed)?;
    let trace = generate_trace(&cfg)?;
    let out = File::create(&args.output)
        .with_context(|| format!("cannot write {}", args.output.display()))?;
    write_trace_csv(BufWriter::new(out), &trace)?;
    print_seed(seed);
    println!(
        "wrote {}: {} samples across {} distances",
        args.output.display(),
        trace.samples.len(),
        cfg.distances_m.len()
    );
    Ok(())
}

fn cmd_filter(args: FilterArgs, file: &FileConfig) -> Result<()> {
    let fit = load_model(&args.model)?;
    let trace = load_trace(&args.input)?;
    let seed = resolve_seed(args.seed, file, "pf.seed")?;
    let params = resolve_filter_params(&args.knobs, file, fit.residual_sigma_dbm, seed)?;
    let anchors = load_or_derive_anchors(args.anchors.as_deref(), args.filter, &trace)?;
    let mut runner = FilterRunner::new(args.filter, &params, &fit.model, anchors.as_ref())?;

    let out = File::create(&args.output)
        .with_context(|| format!("cannot write {}", args.output.display()))?;
    let mut w = BufWriter::new(out);
    writeln!(w, "t_ms,beacon_id,filtered_rssi_dbm,estimated_distance_m,true_distance_m")?;
    for s in &trace.samples {
        let o = runner.step(s.rssi_dbm)?;
        let filtered = o.filtered_rssi_dbm.map(|v| v.to_string()).unwrap_or_default();
        let label = s.true_distance_m.map(|v| v.to_string()).unwrap_or_default();
        writeln!(w, "{},{},{},{},{}", s.t_ms, trace.beacon_id, filtered, o.distance_m, label)?;
    }
    w.flush()?;

    if args.filter == FilterKind::Pf {
        print_seed(seed);
    }
    println!(
        "wrote {}: {} readings through {}",
        args.output.display(),
        trace.samples.len(),
        args.filter.name()
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs, file: &FileConfig) -> Result<()> {
    let fit = load_model(&args.model)?;
    let trace = load_trace(&args.input)?;
    let seed = resolve_seed(args.seed, file, "pf.seed")?;
    let params = resolve_filter_params(&args.knobs, file, fit.residual_sigma_dbm, seed)?;
    let carry = args.carry_state || file.get::<bool>("eval.carry_state")?.unwrap_or(false);
    let anchors = match &args.anchors {
        Some(path) => {
            let reader =
                File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
            Some(read_anchor_csv(reader).with_context(|| format!("in {}", path.display()))?)
        }
        None => None,
    };
    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("cannot create {}", args.out_dir.display()))?;

    print_seed(seed);
    println!("{:<6} {:>10} {:>10}", "filter", "mae_m", "rmse_m");
    for kind in FilterKind::ALL {
        let report = run_experiment(&trace, &fit.model, kind, &params, anchors.as_ref(), carry)?;
        let json_path = args.out_dir.join(format!("report-{}.json", kind.name()));
        let json = File::create(&json_path)
            .with_context(|| format!("cannot write {}", json_path.display()))?;
        report.write_json(BufWriter::new(json))?;
        let csv_path = args.out_dir.join(format!("errors-{}.csv", kind.name()));
        let csv = File::create(&csv_path)
            .with_context(|| format!("cannot write {}", csv_path.display()))?;
        write_report_csv(BufWriter::new(csv), &report)?;
        println!("{:<6} {:>10.4} {:>10.4}", kind.name(), report.mae_m, report.rmse_m);
    }
    println!("wrote {} reports to {}", FilterKind::ALL.len(), args.out_dir.display());
    Ok(())
}

fn cmd_sweep(args: SweepArgs, file: &FileConfig) -> Result<()> {
    if args.param != SweepParam::NoiseSigma && args.filter.is_some() {
        return Err(UsageError(format!(
            "--filter only applies to noise-sigma sweeps; {} sweeps pin their own filter",
            args.param.name()
        ))
        .into());
    }
    let (model, residual) = load_model_source(&args.source)?;
    let seed = resolve_seed(args.seed, file, "sim.seed")?;
    let sim = resolve_sim_config(model, &args.sim, file, seed)?;

    // Measurement sigma defaults to the model file's residual; with a preset
    // there is no fit on record, so calibrate on the base trace instead.
    let meas_default = match residual {
        Some(r) => r,
        None => trace_residual_sigma(&generate_trace(&sim)?)?,
    };
    let filter_params = resolve_filter_params(&args.knobs, file, meas_default, seed)?;
    let carry = args.carry_state || file.get::<bool>("eval.carry_state")?.unwrap_or(false);

    let cfg = SweepConfig {
        param: args.param,
        values: args.range.0.clone(),
        sim,
        filter_params,
        filter: args.filter.unwrap_or(FilterKind::Sma),
        carry_state: carry,
    };
    let points = run_sweep(&cfg)?;
    let out = File::create(&args.output)
        .with_context(|| format!("cannot write {}", args.output.display()))?;
    write_sweep_csv(BufWriter::new(out), &points)?;
    print_seed(seed);
    println!(
        "wrote {}: {} rows ({} sweep)",
        args.output.display(),
        points.len(),
        args.param.name()
    );
    Ok(())
}

fn load_model(path: &Path) -> Result<CalibratedModel> {
    let text =
        fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
    CalibratedModel::from_kv(&text).with_context(|| format!("in {}", path.display()))
}

fn load_trace(path: &Path) -> Result<RssiTrace> {
    let reader = File::open(path).with_context(|| format!("cannot open {}", path.display()))?;
    read_trace_csv(reader).with_context(|| format!("in {}", path.display()))
}

fn load_model_source(source: &ModelSource) -> Result<(PathLossModel, Option<f64>)> {
    if let Some(path) = &source.model {
        let fit = load_model(path)?;
        Ok((fit.model, Some(fit.residual_sigma_dbm)))
    } else {
        let name = source.preset.as_deref().expect("clap guarantees one model source");
        Ok((preset_model(name).expect("preset names are validated at parse time"), None))
    }
}

fn load_or_derive_anchors(
    path: Option<&Path>,
    kind: FilterKind,
    trace: &RssiTrace,
) -> Result<Option<AnchorTable>> {
    match path {
        Some(p) => {
            let reader = File::open(p).with_context(|| format!("cannot open {}", p.display()))?;
            Ok(Some(read_anchor_csv(reader).with_context(|| format!("in {}", p.display()))?))
        }
        None if kind == FilterKind::Ni => {
            let table = derive_anchor_table(trace)
                .context("the ni filter needs --anchors or a distance-labeled input trace")?;
            Ok(Some(table))
        }
        None => Ok(None),
    }
}

fn trace_residual_sigma(trace: &RssiTrace) -> Result<f64> {
    let samples: Vec<CalibrationSample> = trace
        .samples
        .iter()
        .filter_map(|s| {
            s.true_distance_m.map(|d| CalibrationSample { distance_m: d, rssi_dbm: s.rssi_dbm })
        })
        .collect();
    Ok(calibrate(&samples)?.residual_sigma_dbm)
}

fn resolve_seed(flag: Option<u64>, file: &FileConfig, key: &str) -> Result<u64> {
    Ok(match flag.or(file.get(key)?) {
        Some(seed) => seed,
        None => entropy_seed(),
    })
}

fn print_seed(seed: u64) {
    println!("seed={seed} rng={RNG_ALGORITHM}");
}

fn resolve_sim_config(
    model: PathLossModel,
    flags: &SimFlags,
    file: &FileConfig,
    seed: u64,
) -> Result<SimConfig> {
    let mut cfg = SimConfig::new(model, seed);
    cfg.noise_sigma_dbm = resolve(flags.noise_sigma, file, "sim.noise_sigma", cfg.noise_sigma_dbm)?;
    cfg.outlier_prob = resolve(flags.outlier_prob, file, "sim.outlier_prob", cfg.outlier_prob)?;
    cfg.outlier_sigma_dbm =
        resolve(flags.outlier_sigma, file, "sim.outlier_sigma", cfg.outlier_sigma_dbm)?;
    cfg.samples_per_distance = resolve(
        flags.samples_per_distance,
        file,
        "sim.samples_per_distance",
        cfg.samples_per_distance,
    )?;
    cfg.interval_ms = resolve(flags.interval_ms, file, "sim.interval_ms", cfg.interval_ms)?;
    cfg.beacon_id = resolve(flags.beacon_id.clone(), file, "sim.beacon_id", cfg.beacon_id)?;
    let distances = match &flags.distances {
        Some(list) => Some(list.clone()),
        None => file
            .get::<String>("sim.distances")?
            .map(|s| parse_distance_list(&s))
            .transpose()?,
    };
    if let Some(d) = distances {
        cfg.distances_m = d;
    }
    Ok(cfg)
}

fn parse_distance_list(text: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|tok| {
            let tok = tok.trim();
            tok.parse::<f64>()
                .with_context(|| format!("config key `sim.distances`: `{tok}` is not a number"))
        })
        .collect()
}

fn resolve_filter_params(
    flags: &FilterFlags,
    file: &FileConfig,
    default_meas_sigma: f64,
    seed: u64,
) -> Result<FilterParams> {
    let meas = resolve(flags.meas_sigma, file, "pf.meas_sigma", default_meas_sigma)?;
    let mut p = FilterParams::new(meas, seed);
    p.sma_window = resolve(flags.sma_window, file, "sma.window", p.sma_window)?;
    p.kalman_history = resolve(flags.kalman_history, file, "kf.history", p.kalman_history)?;
    p.n_particles = resolve(flags.n_particles, file, "pf.n_particles", p.n_particles)?;
    p.process_sigma_dbm =
        resolve(flags.process_sigma, file, "pf.process_sigma", p.process_sigma_dbm)?;
    p.ess_threshold_fraction = resolve(
        flags.ess_threshold,
        file,
        "pf.ess_threshold_fraction",
        p.ess_threshold_fraction,
    )?;
    p.kde_sigma = resolve(flags.kde_sigma, file, "ni.kde_sigma", p.kde_sigma)?;
    p.ni_process_noise =
        resolve(flags.ni_process_noise, file, "ni.process_noise", p.ni_process_noise)?;
    Ok(p)
}

fn parse_filter_kind(s: &str) -> Result<FilterKind, String> {
    FilterKind::from_name(s)
        .ok_or_else(|| format!("unknown filter `{s}` (expected one of: sma, kf-st, kf-dn, pf, ni)"))
}

fn parse_sweep_param(s: &str) -> Result<SweepParam, String> {
    SweepParam::from_name(s).ok_or_else(|| {
        format!("unknown parameter `{s}` (expected one of: window-size, particle-count, noise-sigma)")
    })
}

fn parse_preset(s: &str) -> Result<String, String> {
    if preset_model(s).is_some() {
        Ok(s.to_string())
    } else {
        let names: Vec<&str> = PRESET_MODELS.iter().map(|(n, _, _)| *n).collect();
        Err(format!("unknown preset `{s}` (available: {})", names.join(", ")))
    }
}

/// The expansion of a `--range` argument.
#[derive(Debug, Clone)]
struct RangeValues(Vec<f64>);

fn parse_range(s: &str) -> Result<RangeValues, String> {
    let parts: Vec<&str> = s.split(':').collect();
    let nums: Vec<f64> = parts
        .iter()
        .map(|p| p.trim().parse::<f64>().map_err(|_| format!("`{p}` is not a number")))
        .collect::<Result<_, _>>()?;
    let values = match nums[..] {
        [v] => vec![v],
        [a, b] => step_range(a, b, 1.0)?,
        [a, b, step] => step_range(a, b, step)?,
        _ => return Err("expected `value`, `start:end`, or `start:end:step`".to_string()),
    };
    Ok(RangeValues(values))
}

fn step_range(a: f64, b: f64, step: f64) -> Result<Vec<f64>, String> {
    if !a.is_finite() || !b.is_finite() || !step.is_finite() || step <= 0.0 {
        return Err("range bounds must be finite with a positive step".to_string());
    }
    if b < a {
        return Err(format!("range end {b} is below start {a}"));
    }
    let n = ((b - a) / step + 1e-9).floor() as usize;
    if n > 100_000 {
        return Err("range expands to more than 100000 values".to_string());
    }
    Ok((0..=n).map(|i| a + step * i as f64).collect())
}
