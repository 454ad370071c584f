//! Experiment harness: streams labeled traces through the filters and scores
//! proximity accuracy.
//!
//! A labeled trace divides into *dwell segments* — maximal runs of
//! consecutive samples sharing the same true distance. Each segment is
//! filtered independently (fresh state, since a dwell change teleports the
//! receiver) and scored by the filter's output at the segment's final
//! sample, i.e. its steady-state reading after the full dwell. Segment
//! errors aggregate into MAE and RMSE over the distance set.
//!
//! RSSI-domain filters (SMA, both Kalman variants, the particle filter) are
//! converted to meters through the path-loss model; the NI filter estimates
//! meters directly.

use std::io;
use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::filters::{
    population_variance, FilterError, ScalarKalman, SimpleMovingAverage, DEFAULT_KALMAN_HISTORY,
    DEFAULT_SMA_WINDOW,
};
use crate::nifilter::{AnchorTable, NiFilter, DEFAULT_KDE_SIGMA, DEFAULT_NI_PROCESS_NOISE};
use crate::particle::{
    ParticleFilter, ParticleParams, DEFAULT_ESS_THRESHOLD_FRACTION, DEFAULT_PARTICLE_COUNT,
    DEFAULT_PROCESS_SIGMA,
};
use crate::pathloss::{average_by_distance, CalibrationSample, PathLossError, PathLossModel};
use crate::rng::derive_seed;
use crate::simulate::{generate_trace, SimConfig, SimError};
use crate::trace::{RssiSample, RssiTrace};

/// Smallest measurement sigma fed to the Kalman and particle filters, in dB.
/// A perfect calibration fit reports residual sigma 0, which would make the
/// measurement model degenerate; this floor keeps it merely very confident.
pub const MEAS_SIGMA_FLOOR_DBM: f64 = 1e-6;

/// Outputs skipped at the start of each segment when computing the output
/// standard deviation, so initialization transients don't pollute the
/// precision measure. Segments shorter than twice this use every output.
pub const OUTPUT_STD_WARMUP: usize = 100;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("trace has no samples")]
    EmptyTrace,
    #[error("every sample must carry a true distance label")]
    UnlabeledTrace,
    #[error("true distance at t={t_ms} ms must be positive and finite, got {value}")]
    InvalidLabel { t_ms: u64, value: f64 },
    #[error("the NI filter requires an anchor table")]
    MissingAnchors,
    #[error("error list must not be empty")]
    EmptyErrors,
    #[error("sweep range must not be empty")]
    EmptyRange,
    #[error("{param} sweep value {value} is not usable (integer bounds apply)")]
    InvalidSweepValue { param: &'static str, value: f64 },
    #[error(transparent)]
    Filter(#[from] FilterError),
    #[error(transparent)]
    PathLoss(#[from] PathLossError),
    #[error(transparent)]
    Sim(#[from] SimError),
}

/// The five streaming estimators under evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FilterKind {
    Sma,
    KfStatic,
    KfDynamic,
    Pf,
    Ni,
}

impl FilterKind {
    pub const ALL: [FilterKind; 5] =
        [FilterKind::Sma, FilterKind::KfStatic, FilterKind::KfDynamic, FilterKind::Pf, FilterKind::Ni];

    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Sma => "sma",
            FilterKind::KfStatic => "kf-st",
            FilterKind::KfDynamic => "kf-dn",
            FilterKind::Pf => "pf",
            FilterKind::Ni => "ni",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// Tuning knobs shared by every filter instantiation.
///
/// Build through [`FilterParams::new`] so the measurement sigma floor is
/// applied; the fields stay public for ad-hoc experimentation.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterParams {
    pub sma_window: usize,
    pub kalman_history: usize,
    /// Measurement noise sigma in dB, usually the calibration residual.
    pub meas_sigma_dbm: f64,
    pub n_particles: usize,
    pub process_sigma_dbm: f64,
    pub ess_threshold_fraction: f64,
    pub kde_sigma: f64,
    pub ni_process_noise: f64,
    /// Base seed; per-segment filter streams are derived from it.
    pub seed: u64,
}

impl FilterParams {
    pub fn new(meas_sigma_dbm: f64, seed: u64) -> Self {
        Self {
            sma_window: DEFAULT_SMA_WINDOW,
            kalman_history: DEFAULT_KALMAN_HISTORY,
            meas_sigma_dbm: meas_sigma_dbm.max(MEAS_SIGMA_FLOOR_DBM),
            n_particles: DEFAULT_PARTICLE_COUNT,
            process_sigma_dbm: DEFAULT_PROCESS_SIGMA,
            ess_threshold_fraction: DEFAULT_ESS_THRESHOLD_FRACTION,
            kde_sigma: DEFAULT_KDE_SIGMA,
            ni_process_noise: DEFAULT_NI_PROCESS_NOISE,
            seed,
        }
    }
}

/// One filtered reading: the smoothed RSSI (absent for the NI filter, which
/// never leaves the distance domain) and the distance estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterOutput {
    pub filtered_rssi_dbm: Option<f64>,
    pub distance_m: f64,
}

enum RunnerState {
    Sma(SimpleMovingAverage),
    Kalman(ScalarKalman),
    Pf(ParticleFilter),
    Ni(NiFilter),
}

/// A filter wired to its conversion path: feed RSSI, get distance.
pub struct FilterRunner<'a> {
    kind: FilterKind,
    model: &'a PathLossModel,
    anchors: Option<&'a AnchorTable>,
    state: RunnerState,
}

impl<'a> FilterRunner<'a> {
    pub fn new(
        kind: FilterKind,
        params: &FilterParams,
        model: &'a PathLossModel,
        anchors: Option<&'a AnchorTable>,
    ) -> Result<Self, EvalError> {
        let r_meas = params.meas_sigma_dbm * params.meas_sigma_dbm;
        let state = match kind {
            FilterKind::Sma => RunnerState::Sma(SimpleMovingAverage::new(params.sma_window)?),
            FilterKind::KfStatic => RunnerState::Kalman(ScalarKalman::new_static(r_meas)?),
            FilterKind::KfDynamic => {
                RunnerState::Kalman(ScalarKalman::new_dynamic(r_meas, params.kalman_history)?)
            }
            FilterKind::Pf => {
                let pp = ParticleParams {
                    n_particles: params.n_particles,
                    process_sigma: params.process_sigma_dbm,
                    ess_threshold_fraction: params.ess_threshold_fraction,
                    ..ParticleParams::new(params.meas_sigma_dbm)
                };
                RunnerState::Pf(ParticleFilter::new(pp, params.seed)?)
            }
            FilterKind::Ni => {
                if anchors.is_none() {
                    return Err(EvalError::MissingAnchors);
                }
                RunnerState::Ni(NiFilter::new(params.kde_sigma, params.ni_process_noise)?)
            }
        };
        Ok(Self { kind, model, anchors, state })
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    pub fn step(&mut self, rssi_dbm: f64) -> Result<FilterOutput, EvalError> {
        let out = match &mut self.state {
            RunnerState::Sma(f) => rssi_output(self.model, f.step(rssi_dbm)?),
            RunnerState::Kalman(f) => rssi_output(self.model, f.step(rssi_dbm)?),
            RunnerState::Pf(f) => rssi_output(self.model, f.step(rssi_dbm)?),
            RunnerState::Ni(f) => {
                let table = self.anchors.expect("checked at construction");
                FilterOutput {
                    filtered_rssi_dbm: None,
                    distance_m: f.step(table, rssi_dbm)?,
                }
            }
        };
        Ok(out)
    }
}

fn rssi_output(model: &PathLossModel, filtered: f64) -> FilterOutput {
    FilterOutput {
        filtered_rssi_dbm: Some(filtered),
        distance_m: model.estimate_distance(filtered),
    }
}

/// Absolute proximity error for one dwell segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerDistanceError {
    pub distance_m: f64,
    pub abs_error_m: f64,
}

/// Accuracy summary of one filter over one labeled trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub filter_name: String,
    pub per_distance: Vec<PerDistanceError>,
    pub mae_m: f64,
    pub rmse_m: f64,
    pub n_samples: usize,
}

impl ErrorReport {
    pub fn write_json<W: io::Write>(&self, writer: W) -> io::Result<()> {
        serde_json::to_writer_pretty(writer, self).map_err(io::Error::from)
    }

    pub fn read_json<R: io::Read>(reader: R) -> io::Result<Self> {
        serde_json::from_reader(reader).map_err(io::Error::from)
    }
}

/// Mean absolute error of a list of signed errors.
pub fn mae(errors: &[f64]) -> Result<f64, EvalError> {
    if errors.is_empty() {
        return Err(EvalError::EmptyErrors);
    }
    Ok(errors.iter().map(|e| e.abs()).sum::<f64>() / errors.len() as f64)
}

/// Root mean squared error of a list of signed errors.
pub fn rmse(errors: &[f64]) -> Result<f64, EvalError> {
    if errors.is_empty() {
        return Err(EvalError::EmptyErrors);
    }
    Ok((errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt())
}

/// Dwell segments of a labeled trace: maximal runs of consecutive samples
/// whose true distance is identical. Unlabeled samples are the caller's
/// problem; this only walks `Some` labels.
pub fn segments(samples: &[RssiSample]) -> Vec<(f64, Range<usize>)> {
    let mut out: Vec<(f64, Range<usize>)> = Vec::new();
    for (i, s) in samples.iter().enumerate() {
        let Some(d) = s.true_distance_m else { continue };
        match out.last_mut() {
            Some((last_d, range)) if last_d.to_bits() == d.to_bits() && range.end == i => {
                range.end = i + 1;
            }
            _ => out.push((d, i..i + 1)),
        }
    }
    out
}

/// Builds an NI anchor table from a labeled trace: one anchor per distinct
/// distance, at the mean RSSI observed there.
pub fn derive_anchor_table(trace: &RssiTrace) -> Result<AnchorTable, EvalError> {
    let samples: Vec<CalibrationSample> = trace
        .samples
        .iter()
        .filter_map(|s| {
            s.true_distance_m
                .map(|d| CalibrationSample { distance_m: d, rssi_dbm: s.rssi_dbm })
        })
        .collect();
    Ok(AnchorTable::from_samples(&average_by_distance(&samples))?)
}

/// Runs one filter over a labeled trace and reports per-distance accuracy.
///
/// With `carry_state` false (the normal protocol) the filter restarts at
/// every dwell change, with its random stream derived from
/// `params.seed` and the segment index; `true` keeps one filter running
/// across the whole trace instead.
///
/// The NI filter uses `anchors` when given, otherwise a table derived from
/// the trace itself via [`derive_anchor_table`].
pub fn run_experiment(
    trace: &RssiTrace,
    model: &PathLossModel,
    kind: FilterKind,
    params: &FilterParams,
    anchors: Option<&AnchorTable>,
    carry_state: bool,
) -> Result<ErrorReport, EvalError> {
    run_experiment_full(trace, model, kind, params, anchors, carry_state).map(|o| o.report)
}

pub(crate) struct ExperimentOutcome {
    pub report: ErrorReport,
    /// Mean within-segment standard deviation of the filter's outputs
    /// (RSSI domain when available, distance domain for the NI filter),
    /// excluding the per-segment warmup. This is the precision measure the
    /// window-size sweep plots.
    pub output_std: f64,
}

pub(crate) fn run_experiment_full(
    trace: &RssiTrace,
    model: &PathLossModel,
    kind: FilterKind,
    params: &FilterParams,
    anchors: Option<&AnchorTable>,
    carry_state: bool,
) -> Result<ExperimentOutcome, EvalError> {
    if trace.samples.is_empty() {
        return Err(EvalError::EmptyTrace);
    }
    if !trace.is_labeled() {
        return Err(EvalError::UnlabeledTrace);
    }
    for s in &trace.samples {
        let d = s.true_distance_m.expect("labeled");
        if !d.is_finite() || d <= 0.0 {
            return Err(EvalError::InvalidLabel { t_ms: s.t_ms, value: d });
        }
    }

    let derived;
    let anchors = match (kind, anchors) {
        (FilterKind::Ni, None) => {
            derived = derive_anchor_table(trace)?;
            Some(&derived)
        }
        (_, a) => a,
    };

    let segs = segments(&trace.samples);
    let mut errors = Vec::with_capacity(segs.len());
    let mut per_distance = Vec::with_capacity(segs.len());
    let mut segment_stds = Vec::with_capacity(segs.len());

    let mut carried = if carry_state {
        Some(FilterRunner::new(kind, params, model, anchors)?)
    } else {
        None
    };

    for (seg_idx, (distance_m, range)) in segs.iter().enumerate() {
        let mut fresh;
        let runner = match carried.as_mut() {
            Some(r) => r,
            None => {
                let seg_params = FilterParams {
                    seed: derive_seed(params.seed, seg_idx as u64),
                    ..params.clone()
                };
                fresh = FilterRunner::new(kind, &seg_params, model, anchors)?;
                &mut fresh
            }
        };

        let mut outputs = Vec::with_capacity(range.len());
        let mut last = None;
        for s in &trace.samples[range.clone()] {
            let out = runner.step(s.rssi_dbm)?;
            outputs.push(out.filtered_rssi_dbm.unwrap_or(out.distance_m));
            last = Some(out);
        }
        let last = last.expect("segments are non-empty");

        errors.push(last.distance_m - distance_m);
        per_distance.push(PerDistanceError {
            distance_m: *distance_m,
            abs_error_m: (last.distance_m - distance_m).abs(),
        });
        let steady =
            if outputs.len() >= 2 * OUTPUT_STD_WARMUP { &outputs[OUTPUT_STD_WARMUP..] } else { &outputs[..] };
        segment_stds.push(population_variance(steady).sqrt());
    }

    let report = ErrorReport {
        filter_name: kind.name().to_string(),
        mae_m: mae(&errors)?,
        rmse_m: rmse(&errors)?,
        per_distance,
        n_samples: trace.samples.len(),
    };
    let output_std = segment_stds.iter().sum::<f64>() / segment_stds.len() as f64;
    Ok(ExperimentOutcome { report, output_std })
}

/// Which knob a sweep varies.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    /// Rolling-variance history length of the dynamic Kalman filter.
    WindowSize,
    /// Particle count of the particle filter.
    ParticleCount,
    /// Channel noise sigma of the simulation, any filter.
    NoiseSigma,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::WindowSize => "window-size",
            SweepParam::ParticleCount => "particle-count",
            SweepParam::NoiseSigma => "noise-sigma",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        [SweepParam::WindowSize, SweepParam::ParticleCount, SweepParam::NoiseSigma]
            .into_iter()
            .find(|p| p.name() == name)
    }
}

/// One row of a sweep table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub param: f64,
    pub mae_m: f64,
    pub rmse_m: f64,
    pub std_dbm: f64,
}

/// A parameter sweep over a shared simulated benchmark.
#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub param: SweepParam,
    pub values: Vec<f64>,
    /// Base simulation; its seed anchors both trace generation and the
    /// per-value filter streams.
    pub sim: SimConfig,
    pub filter_params: FilterParams,
    /// Filter used by noise-sigma sweeps. Window-size sweeps always run the
    /// dynamic Kalman filter and particle-count sweeps the particle filter.
    pub filter: FilterKind,
    pub carry_state: bool,
}

/// Runs one experiment per sweep value (in parallel) and tabulates accuracy
/// and output spread. Per-value filter seeds are derived from the base seed
/// and the value's index, so the table is reproducible as a whole.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepPoint>, EvalError> {
    if cfg.values.is_empty() {
        return Err(EvalError::EmptyRange);
    }

    // One shared trace unless the sweep itself perturbs the channel.
    let base_trace = match cfg.param {
        SweepParam::NoiseSigma => None,
        _ => Some(generate_trace(&cfg.sim)?),
    };

    let run_one = |(idx, &value): (usize, &f64)| -> Result<SweepPoint, EvalError> {
        let mut params = cfg.filter_params.clone();
        params.seed = derive_seed(cfg.sim.seed, idx as u64);

        let kind = match cfg.param {
            SweepParam::WindowSize => {
                params.kalman_history = integer_value("window-size", value, 1)?;
                FilterKind::KfDynamic
            }
            SweepParam::ParticleCount => {
                params.n_particles = integer_value("particle-count", value, 2)?;
                FilterKind::Pf
            }
            SweepParam::NoiseSigma => {
                if !value.is_finite() || value < 0.0 {
                    return Err(EvalError::InvalidSweepValue { param: "noise-sigma", value });
                }
                cfg.filter
            }
        };

        let local_trace;
        let trace = match (&base_trace, cfg.param) {
            (Some(t), _) => t,
            (None, _) => {
                let sim = SimConfig { noise_sigma_dbm: value, ..cfg.sim.clone() };
                local_trace = generate_trace(&sim)?;
                &local_trace
            }
        };

        let outcome =
            run_experiment_full(trace, &cfg.sim.model, kind, &params, None, cfg.carry_state)?;
        Ok(SweepPoint {
            param: value,
            mae_m: outcome.report.mae_m,
            rmse_m: outcome.report.rmse_m,
            std_dbm: outcome.output_std,
        })
    };

    cfg.values.par_iter().enumerate().map(run_one).collect()
}

fn integer_value(param: &'static str, value: f64, min: usize) -> Result<usize, EvalError> {
    if !value.is_finite() || value.fract() != 0.0 || value < min as f64 || value > u32::MAX as f64
    {
        return Err(EvalError::InvalidSweepValue { param, value });
    }
    Ok(value as usize)
}

/// Writes the per-distance rows of a report as `distance_m,abs_error_m` CSV.
pub fn write_report_csv<W: io::Write>(mut writer: W, report: &ErrorReport) -> io::Result<()> {
    writeln!(writer, "distance_m,abs_error_m")?;
    for row in &report.per_distance {
        writeln!(writer, "{},{}", row.distance_m, row.abs_error_m)?;
    }
    Ok(())
}

/// Writes a sweep table as `param,mae_m,rmse_m,std_dbm` CSV.
pub fn write_sweep_csv<W: io::Write>(mut writer: W, points: &[SweepPoint]) -> io::Result<()> {
    writeln!(writer, "param,mae_m,rmse_m,std_dbm")?;
    for p in points {
        writeln!(writer, "{},{},{},{}", p.param, p.mae_m, p.rmse_m, p.std_dbm)?;
    }
    Ok(())
}
