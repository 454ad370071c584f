//! RSSI smoothing filters: simple moving average and a scalar Kalman filter.
//!
//! Both consume one RSSI reading per call and return the smoothed RSSI, so
//! they can be dropped into the same streaming pipeline. The Kalman filter
//! models the signal as a locally constant level: the state transition is
//! identity, prediction only inflates the variance by the process noise `q`.
//!
//! Two Kalman variants differ solely in `q`:
//!
//! * static: `q = 0`; the estimate converges to the running mean of
//!   everything seen since the last reset.
//! * dynamic: `q` is recomputed every step as the population variance of a
//!   FIFO window of the most recent raw readings (newest reading inserted
//!   before the variance is taken), so the filter loosens its smoothing when
//!   the channel gets noisy.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("filter input must be finite, got {0}")]
    NonFiniteInput(f64),
    #[error("window capacity must be at least 1")]
    ZeroWindow,
    #[error("history capacity must be at least 1")]
    ZeroHistory,
    #[error("measurement noise variance must be positive and finite, got {0}")]
    InvalidMeasurementNoise(f64),
    #[error("at least two particles are required, got {0}")]
    TooFewParticles(usize),
    #[error("{name} must be non-negative and finite, got {value}")]
    InvalidSigma { name: &'static str, value: f64 },
    #[error("ESS threshold fraction must be in (0, 1], got {0}")]
    InvalidEssFraction(f64),
    #[error("weights must be non-negative, finite, and sum to a positive value")]
    DegenerateWeights,
    #[error("resampling offset must lie in [0, 1), got {0}")]
    InvalidOffset(f64),
    #[error("kernel smoothing variance must be positive and finite, got {0}")]
    InvalidKernelSigma(f64),
    #[error("process noise must be non-negative and finite, got {0}")]
    InvalidProcessNoise(f64),
    #[error("anchor table must not be empty")]
    EmptyAnchorTable,
    #[error("anchor distances must be positive, finite, and strictly increasing \
             (anchor {index}: {distance_m})")]
    UnsortedAnchors { index: usize, distance_m: f64 },
    #[error("anchor RSSI must be finite (anchor {index}: {rssi_dbm})")]
    InvalidAnchorRssi { index: usize, rssi_dbm: f64 },
    #[error("malformed anchor file, line {line}: {reason}")]
    MalformedAnchorCsv { line: usize, reason: String },
    #[error("internal invariant violated: {0}")]
    InternalInvariant(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Population variance `sum((x - mean)^2) / len` of a window of readings.
///
/// Empty input yields 0, matching the "no evidence of motion yet" state of a
/// freshly reset dynamic Kalman filter.
pub fn population_variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// Fixed-capacity simple moving average over the most recent readings.
#[derive(Debug, Clone)]
pub struct SimpleMovingAverage {
    window: Vec<f64>,
    capacity: usize,
}

/// Default window length for RSSI smoothing.
pub const DEFAULT_SMA_WINDOW: usize = 20;

impl SimpleMovingAverage {
    pub fn new(capacity: usize) -> Result<Self, FilterError> {
        if capacity == 0 {
            return Err(FilterError::ZeroWindow);
        }
        Ok(Self { window: Vec::with_capacity(capacity), capacity })
    }

    /// Pushes a reading (evicting the oldest once full) and returns the mean
    /// of the current window. Non-finite input is rejected without touching
    /// the window.
    pub fn step(&mut self, rssi_dbm: f64) -> Result<f64, FilterError> {
        if !rssi_dbm.is_finite() {
            return Err(FilterError::NonFiniteInput(rssi_dbm));
        }
        if self.window.len() == self.capacity {
            self.window.remove(0);
        }
        self.window.push(rssi_dbm);
        Ok(self.window.iter().sum::<f64>() / self.window.len() as f64)
    }

    pub fn len(&self) -> usize {
        self.window.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }
}

/// Process-noise policy for [`ScalarKalman`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProcessNoise {
    /// `q = 0`: the level is assumed constant.
    Static,
    /// `q` tracks the population variance of the last `capacity` raw
    /// readings.
    Rolling { capacity: usize },
}

/// Default FIFO length for the dynamic process-noise window.
pub const DEFAULT_KALMAN_HISTORY: usize = 10;

/// Nominal spacing of the measurement stream in seconds. The identity state
/// transition does not consume it, but it documents the rate the defaults
/// were chosen for and is reported alongside filter metadata.
pub const KALMAN_STEP_SECONDS: f64 = 0.1;

/// Scalar Kalman filter over the RSSI level.
///
/// The first reading initializes the state (`x = rssi`, `p = r_meas`) and is
/// returned unchanged. Every later step runs
///
/// ```text
/// predict:  x- = x         p- = p + q
/// gain:     g  = p- / (p- + r)
/// update:   x  = x- + g (rssi - x-)
///           p  = (1 - g) p-
/// ```
#[derive(Debug, Clone)]
pub struct ScalarKalman {
    process: ProcessNoise,
    r_meas: f64,
    history: Vec<f64>,
    state: Option<KalmanState>,
}

#[derive(Debug, Clone, Copy)]
struct KalmanState {
    x_hat: f64,
    p: f64,
    predicted_p: f64,
    gain: f64,
    q: f64,
}

impl ScalarKalman {
    /// `r_meas` is the measurement noise variance in dB²; calibration
    /// residual variance is the usual source.
    pub fn new(process: ProcessNoise, r_meas: f64) -> Result<Self, FilterError> {
        if !r_meas.is_finite() || r_meas <= 0.0 {
            return Err(FilterError::InvalidMeasurementNoise(r_meas));
        }
        if let ProcessNoise::Rolling { capacity: 0 } = process {
            return Err(FilterError::ZeroHistory);
        }
        Ok(Self { process, r_meas, history: Vec::new(), state: None })
    }

    pub fn new_static(r_meas: f64) -> Result<Self, FilterError> {
        Self::new(ProcessNoise::Static, r_meas)
    }

    pub fn new_dynamic(r_meas: f64, history_capacity: usize) -> Result<Self, FilterError> {
        Self::new(ProcessNoise::Rolling { capacity: history_capacity }, r_meas)
    }

    pub fn step(&mut self, rssi_dbm: f64) -> Result<f64, FilterError> {
        if !rssi_dbm.is_finite() {
            return Err(FilterError::NonFiniteInput(rssi_dbm));
        }
        let Some(prev) = self.state else {
            self.state = Some(KalmanState {
                x_hat: rssi_dbm,
                p: self.r_meas,
                predicted_p: self.r_meas,
                gain: 1.0,
                q: 0.0,
            });
            return Ok(rssi_dbm);
        };

        let q = match self.process {
            ProcessNoise::Static => 0.0,
            ProcessNoise::Rolling { capacity } => {
                if self.history.len() == capacity {
                    self.history.remove(0);
                }
                self.history.push(rssi_dbm);
                population_variance(&self.history)
            }
        };

        let predicted_p = prev.p + q;
        let gain = predicted_p / (predicted_p + self.r_meas);
        let x_hat = prev.x_hat + gain * (rssi_dbm - prev.x_hat);
        let p = (1.0 - gain) * predicted_p;
        self.state = Some(KalmanState { x_hat, p, predicted_p, gain, q });
        Ok(x_hat)
    }

    /// Posterior variance `p(k|k)`; `None` before the first reading.
    pub fn variance(&self) -> Option<f64> {
        self.state.map(|s| s.p)
    }

    /// Prior variance `p(k|k-1)` of the most recent step.
    pub fn predicted_variance(&self) -> Option<f64> {
        self.state.map(|s| s.predicted_p)
    }

    /// Gain of the most recent update (1.0 right after initialization).
    pub fn gain(&self) -> Option<f64> {
        self.state.map(|s| s.gain)
    }

    /// Process noise used by the most recent step.
    pub fn process_noise(&self) -> Option<f64> {
        self.state.map(|s| s.q)
    }

    pub fn estimate(&self) -> Option<f64> {
        self.state.map(|s| s.x_hat)
    }

    /// Raw readings currently in the dynamic window (empty for static).
    pub fn history(&self) -> &[f64] {
        &self.history
    }
}
