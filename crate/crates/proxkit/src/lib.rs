//! Proximity estimation from BLE beacon RSSI streams.
//!
//! The crate covers the whole desk workflow:
//!
//! * [`pathloss`] — log-distance path-loss model: calibration from
//!   (distance, RSSI) samples, RSSI prediction, and distance inversion.
//! * [`filters`] — streaming RSSI smoothers: simple moving average and a
//!   scalar Kalman filter with static or rolling-variance process noise.
//! * [`particle`] — bootstrap particle filter over the RSSI level with
//!   systematic resampling.
//! * [`nifilter`] — nonparametric information filter: kernel density
//!   estimation over calibration anchors, fused in information form;
//!   estimates distance directly.
//! * [`simulate`] — seeded synthetic trace generator with a
//!   Gaussian-plus-outlier channel model.
//! * [`evaluate`] — the experiment harness: per-dwell segment scoring,
//!   MAE/RMSE reports, and parameter sweeps.
//! * [`trace`] — trace container and CSV I/O.
//! * [`rng`] — the deterministic RNG policy shared by everything random.
//!
//! ```
//! use proxkit::evaluate::{run_experiment, FilterKind, FilterParams};
//! use proxkit::pathloss::PathLossModel;
//! use proxkit::simulate::{generate_trace, SimConfig};
//!
//! let model = PathLossModel::new(-70.0, 2.0)?;
//! let trace = generate_trace(&SimConfig::new(model, 42))?;
//! let params = FilterParams::new(4.0, 42);
//! let report = run_experiment(&trace, &model, FilterKind::Pf, &params, None, false)?;
//! assert!(report.mae_m <= report.rmse_m);
//! # Ok::<(), Box<dyn std::error::Error>>(())
//! ```

pub mod evaluate;
pub mod filters;
pub mod nifilter;
pub mod particle;
pub mod pathloss;
pub mod rng;
pub mod simulate;
pub mod trace;

pub use evaluate::{run_experiment, run_sweep, ErrorReport, FilterKind, FilterParams};
pub use nifilter::{AnchorTable, NiFilter};
pub use pathloss::{calibrate, CalibratedModel, PathLossModel};
pub use simulate::{generate_trace, SimConfig};
pub use trace::{RssiSample, RssiTrace};
