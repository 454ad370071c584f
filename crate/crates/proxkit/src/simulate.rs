//! Synthetic RSSI trace generation.
//!
//! Produces the labeled traces the evaluation harness runs on: a receiver
//! dwelling at each configured distance in turn while the beacon transmits
//! on a fixed interval. Readings are the path-loss prediction plus i.i.d.
//! Gaussian noise; with probability [`SimConfig::outlier_prob`] a reading's
//! perturbation is drawn from the wider outlier distribution instead,
//! emulating the multipath spikes that plague real indoor captures.
//!
//! Generation is a pure function of the config: the same seed reproduces the
//! same trace bit for bit.

use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::pathloss::{PathLossError, PathLossModel};
use crate::rng::rng_from_seed;
use crate::trace::{RssiSample, RssiTrace};

/// Receiver dwell points in meters: a dense walk out to 1 m, then half-meter
/// hops to 3 m.
pub const DEFAULT_DISTANCES_M: [f64; 14] =
    [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 1.5, 2.0, 2.5, 3.0];

/// Two minutes of dwell at the default interval.
pub const DEFAULT_SAMPLES_PER_DISTANCE: usize = 1200;

/// BLE advertising interval in milliseconds.
pub const DEFAULT_INTERVAL_MS: u64 = 100;

/// Core Gaussian noise level of the benchmark channel, in dB.
pub const DEFAULT_NOISE_SIGMA_DBM: f64 = 4.0;

/// Fraction of readings hit by a multipath outlier in the benchmark channel.
pub const DEFAULT_OUTLIER_PROB: f64 = 0.1;

/// Perturbation scale of outlier readings, in dB.
pub const DEFAULT_OUTLIER_SIGMA_DBM: f64 = 20.0;

/// Illustrative `(name, c0_dbm, n)` parameter sets for two rooms × three
/// beacon products; handy starting points, not measurements of your space.
pub const PRESET_MODELS: [(&str, f64, f64); 6] = [
    ("env1-estimote", -72.25, 1.601),
    ("env1-kontakt", -79.35, 1.885),
    ("env1-gimbal", -82.42, 1.960),
    ("env2-estimote", -75.39, 1.224),
    ("env2-kontakt", -77.07, 1.523),
    ("env2-gimbal", -81.61, 1.637),
];

/// Looks up one of [`PRESET_MODELS`] by name.
pub fn preset_model(name: &str) -> Option<PathLossModel> {
    PRESET_MODELS.iter().find(|(n, _, _)| *n == name).map(|&(_, c0, n)| {
        PathLossModel::new(c0, n).expect("preset parameters are valid")
    })
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error("noise sigma must be non-negative and finite, got {0}")]
    InvalidNoiseSigma(f64),
    #[error("outlier probability must lie in [0, 1), got {0}")]
    InvalidOutlierProb(f64),
    #[error("outlier sigma must be non-negative and finite, got {0}")]
    InvalidOutlierSigma(f64),
    #[error("at least one dwell distance is required")]
    NoDistances,
    #[error("samples per distance must be at least 1")]
    ZeroSamples,
    #[error(transparent)]
    PathLoss(#[from] PathLossError),
}

/// Full description of one simulated capture.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub model: PathLossModel,
    pub beacon_id: String,
    pub distances_m: Vec<f64>,
    pub samples_per_distance: usize,
    pub interval_ms: u64,
    pub noise_sigma_dbm: f64,
    pub outlier_prob: f64,
    pub outlier_sigma_dbm: f64,
    pub seed: u64,
}

impl SimConfig {
    /// Benchmark defaults: the standard dwell walk, 2 minutes per point at
    /// 10 Hz, moderately noisy channel with occasional outliers.
    pub fn new(model: PathLossModel, seed: u64) -> Self {
        Self {
            model,
            beacon_id: "sim".to_string(),
            distances_m: DEFAULT_DISTANCES_M.to_vec(),
            samples_per_distance: DEFAULT_SAMPLES_PER_DISTANCE,
            interval_ms: DEFAULT_INTERVAL_MS,
            noise_sigma_dbm: DEFAULT_NOISE_SIGMA_DBM,
            outlier_prob: DEFAULT_OUTLIER_PROB,
            outlier_sigma_dbm: DEFAULT_OUTLIER_SIGMA_DBM,
            seed,
        }
    }

    /// A clean channel: no noise, no outliers.
    pub fn noiseless(model: PathLossModel, seed: u64) -> Self {
        Self { noise_sigma_dbm: 0.0, outlier_prob: 0.0, ..Self::new(model, seed) }
    }

    fn validate(&self) -> Result<(), SimError> {
        if !self.noise_sigma_dbm.is_finite() || self.noise_sigma_dbm < 0.0 {
            return Err(SimError::InvalidNoiseSigma(self.noise_sigma_dbm));
        }
        if !self.outlier_prob.is_finite() || !(0.0..1.0).contains(&self.outlier_prob) {
            return Err(SimError::InvalidOutlierProb(self.outlier_prob));
        }
        if !self.outlier_sigma_dbm.is_finite() || self.outlier_sigma_dbm < 0.0 {
            return Err(SimError::InvalidOutlierSigma(self.outlier_sigma_dbm));
        }
        if self.distances_m.is_empty() {
            return Err(SimError::NoDistances);
        }
        if self.samples_per_distance == 0 {
            return Err(SimError::ZeroSamples);
        }
        Ok(())
    }
}

/// Generates the labeled trace described by `cfg`.
///
/// Per reading, one uniform draw picks the noise regime and one normal draw
/// scales into it, so the random stream stays aligned across configs that
/// differ only in noise parameters.
pub fn generate_trace(cfg: &SimConfig) -> Result<RssiTrace, SimError> {
    cfg.validate()?;
    let mut rng = rng_from_seed(cfg.seed);
    let mut samples = Vec::with_capacity(cfg.distances_m.len() * cfg.samples_per_distance);
    let mut t_ms = 0u64;
    for &distance_m in &cfg.distances_m {
        let level = cfg.model.predict_rssi(distance_m)?;
        for _ in 0..cfg.samples_per_distance {
            let is_outlier = rng.random::<f64>() < cfg.outlier_prob;
            let z: f64 = rng.sample(StandardNormal);
            let sigma = if is_outlier { cfg.outlier_sigma_dbm } else { cfg.noise_sigma_dbm };
            samples.push(RssiSample {
                t_ms,
                rssi_dbm: level + sigma * z,
                true_distance_m: Some(distance_m),
            });
            t_ms += cfg.interval_ms;
        }
    }
    Ok(RssiTrace::new(cfg.beacon_id.clone(), samples))
}
