//! Log-distance path-loss model and its least-squares calibration.
//!
//! Received power over distance follows
//!
//! ```text
//! rssi(d) = c0 - 10 * n * log10(d / d0)
//! ```
//!
//! with `c0` the RSSI at the reference distance `d0` (fixed at 1 m) and `n`
//! the path-loss exponent. The model is linear in `log10(d)`, so calibration
//! is ordinary least squares on `(log10(distance), rssi)` pairs, and distance
//! recovery inverts the fit:
//!
//! ```text
//! d(rssi) = 10 ^ ((c0 - rssi) / (10 * n))
//! ```

use std::collections::BTreeMap;
use std::io;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Reference distance `d0` in metres. All `c0` values are anchored here.
pub const REFERENCE_DISTANCE_M: f64 = 1.0;

/// `c0` values outside this range are almost certainly a unit mistake
/// (BLE hardware reports roughly -100..-40 dBm at one metre); calibration
/// still succeeds but callers may want to warn.
pub const TYPICAL_C0_RANGE_DBM: (f64, f64) = (-100.0, -40.0);

#[derive(Debug, Error)]
pub enum PathLossError {
    #[error("distance must be positive and finite, got {0}")]
    InvalidDistance(f64),
    #[error("rssi must be finite, got {0}")]
    InvalidRssi(f64),
    #[error("c0 must be finite, got {0}")]
    InvalidC0(f64),
    #[error("path-loss exponent must be positive and finite, got {0}")]
    InvalidExponent(f64),
    #[error("residual sigma must be non-negative and finite, got {0}")]
    InvalidResidualSigma(f64),
    #[error("calibration needs at least two samples, got {0}")]
    TooFewSamples(usize),
    #[error("calibration needs at least two distinct distances (all {0} samples share one)")]
    RankDeficient(usize),
    #[error("calibration produced a non-physical exponent n = {n:.4}; \
             the data shows RSSI rising with distance, check sample labels")]
    NonPhysicalFit { n: f64 },
    #[error("model file line {line}: {reason}")]
    MalformedModelFile { line: usize, reason: String },
    #[error("model file is missing key `{0}`")]
    MissingModelKey(&'static str),
    #[error("calibration CSV line {line}: {reason}")]
    MalformedCsv { line: usize, reason: String },
    #[error("failed to read calibration CSV: {0}")]
    Io(#[from] io::Error),
}

/// Log-distance path-loss model with the reference distance fixed at 1 m.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathLossModel {
    /// Expected RSSI in dBm at the reference distance.
    pub c0_dbm: f64,
    /// Path-loss exponent (2 in free space, higher indoors).
    pub n: f64,
}

impl PathLossModel {
    pub fn new(c0_dbm: f64, n: f64) -> Result<Self, PathLossError> {
        if !c0_dbm.is_finite() {
            return Err(PathLossError::InvalidC0(c0_dbm));
        }
        if !n.is_finite() || n <= 0.0 {
            return Err(PathLossError::InvalidExponent(n));
        }
        Ok(Self { c0_dbm, n })
    }

    /// Expected RSSI in dBm at `distance_m` metres.
    pub fn predict_rssi(&self, distance_m: f64) -> Result<f64, PathLossError> {
        if !distance_m.is_finite() || distance_m <= 0.0 {
            return Err(PathLossError::InvalidDistance(distance_m));
        }
        Ok(self.c0_dbm - 10.0 * self.n * (distance_m / REFERENCE_DISTANCE_M).log10())
    }

    /// Distance in metres implied by a finite RSSI reading.
    ///
    /// Always strictly positive; RSSI above `c0` simply lands inside the
    /// reference distance.
    pub fn estimate_distance(&self, rssi_dbm: f64) -> f64 {
        debug_assert!(rssi_dbm.is_finite());
        REFERENCE_DISTANCE_M * 10f64.powf((self.c0_dbm - rssi_dbm) / (10.0 * self.n))
    }

    /// Whether `c0` sits in the range BLE hardware plausibly reports.
    pub fn c0_is_typical(&self) -> bool {
        let (lo, hi) = TYPICAL_C0_RANGE_DBM;
        (lo..=hi).contains(&self.c0_dbm)
    }
}

/// One calibration observation: a known distance and the RSSI read there.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationSample {
    pub distance_m: f64,
    pub rssi_dbm: f64,
}

/// A fitted model together with the scatter of the data around it.
///
/// `residual_sigma_dbm` is the standard error of the fit residuals
/// (`sqrt(SSR / (N - 2))`, zero when the fit is exact or has no spare
/// degrees of freedom). Downstream filters use its square as the default
/// measurement-noise variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibratedModel {
    pub model: PathLossModel,
    pub residual_sigma_dbm: f64,
}

/// Fits the model to `(distance, rssi)` samples by least squares in
/// `x = log10(distance)`.
///
/// Requires at least two samples covering two distinct distances, and the
/// fitted slope must correspond to a positive exponent; signal strength that
/// rises with distance means mislabelled data, not a usable model.
pub fn calibrate(samples: &[CalibrationSample]) -> Result<CalibratedModel, PathLossError> {
    if samples.len() < 2 {
        return Err(PathLossError::TooFewSamples(samples.len()));
    }
    let mut xs = Vec::with_capacity(samples.len());
    let mut ys = Vec::with_capacity(samples.len());
    for s in samples {
        if !s.distance_m.is_finite() || s.distance_m <= 0.0 {
            return Err(PathLossError::InvalidDistance(s.distance_m));
        }
        if !s.rssi_dbm.is_finite() {
            return Err(PathLossError::InvalidRssi(s.rssi_dbm));
        }
        xs.push((s.distance_m / REFERENCE_DISTANCE_M).log10());
        ys.push(s.rssi_dbm);
    }

    let nf = samples.len() as f64;
    let x_mean = xs.iter().sum::<f64>() / nf;
    let y_mean = ys.iter().sum::<f64>() / nf;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        sxx += (x - x_mean) * (x - x_mean);
        sxy += (x - x_mean) * (y - y_mean);
    }
    if sxx == 0.0 {
        return Err(PathLossError::RankDeficient(samples.len()));
    }

    let slope = sxy / sxx;
    let intercept = y_mean - slope * x_mean;
    let n = -slope / 10.0;
    if !n.is_finite() || n <= 0.0 {
        return Err(PathLossError::NonPhysicalFit { n });
    }

    let mut ssr = 0.0;
    for (x, y) in xs.iter().zip(&ys) {
        let r = y - (intercept + slope * x);
        ssr += r * r;
    }
    let residual_sigma_dbm = if samples.len() > 2 {
        (ssr / (samples.len() as f64 - 2.0)).sqrt()
    } else {
        0.0
    };

    Ok(CalibratedModel {
        model: PathLossModel::new(intercept, n)?,
        residual_sigma_dbm,
    })
}

/// Collapses samples to one mean-RSSI point per distinct distance, sorted by
/// distance. Feeding the result to [`calibrate`] reproduces the common
/// "average first, then fit" calibration procedure; the points double as
/// anchor tables for the kernel-density filter.
pub fn average_by_distance(samples: &[CalibrationSample]) -> Vec<CalibrationSample> {
    let mut groups: BTreeMap<u64, (f64, f64, usize)> = BTreeMap::new();
    for s in samples {
        // Positive finite f64 bit patterns order the same way as the values.
        let e = groups.entry(s.distance_m.to_bits()).or_insert((s.distance_m, 0.0, 0));
        e.1 += s.rssi_dbm;
        e.2 += 1;
    }
    groups
        .into_values()
        .map(|(distance_m, sum, count)| CalibrationSample {
            distance_m,
            rssi_dbm: sum / count as f64,
        })
        .collect()
}

impl CalibratedModel {
    /// Serializes to the `key=value` model format:
    ///
    /// ```text
    /// c0=<float>
    /// n=<float>
    /// residual_sigma=<float>
    /// ```
    pub fn to_kv(&self) -> String {
        format!(
            "c0={}\nn={}\nresidual_sigma={}\n",
            self.model.c0_dbm, self.model.n, self.residual_sigma_dbm
        )
    }

    /// Parses the `key=value` model format written by [`Self::to_kv`].
    ///
    /// Blank lines and `#` comments are tolerated; all three keys must appear
    /// exactly once and satisfy the model invariants.
    pub fn from_kv(text: &str) -> Result<Self, PathLossError> {
        let mut c0 = None;
        let mut n = None;
        let mut residual_sigma = None;
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let trimmed = raw.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let (key, value) = trimmed.split_once('=').ok_or_else(|| {
                PathLossError::MalformedModelFile {
                    line,
                    reason: format!("expected key=value, got `{trimmed}`"),
                }
            })?;
            let value: f64 = value.trim().parse().map_err(|_| {
                PathLossError::MalformedModelFile {
                    line,
                    reason: format!("`{}` is not a number", value.trim()),
                }
            })?;
            let slot = match key.trim() {
                "c0" => &mut c0,
                "n" => &mut n,
                "residual_sigma" => &mut residual_sigma,
                other => {
                    return Err(PathLossError::MalformedModelFile {
                        line,
                        reason: format!("unknown key `{other}`"),
                    })
                }
            };
            if slot.replace(value).is_some() {
                return Err(PathLossError::MalformedModelFile {
                    line,
                    reason: format!("duplicate key `{}`", key.trim()),
                });
            }
        }
        let c0 = c0.ok_or(PathLossError::MissingModelKey("c0"))?;
        let n = n.ok_or(PathLossError::MissingModelKey("n"))?;
        let residual_sigma = residual_sigma.ok_or(PathLossError::MissingModelKey("residual_sigma"))?;
        if !residual_sigma.is_finite() || residual_sigma < 0.0 {
            return Err(PathLossError::InvalidResidualSigma(residual_sigma));
        }
        Ok(Self {
            model: PathLossModel::new(c0, n)?,
            residual_sigma_dbm: residual_sigma,
        })
    }
}

/// Reads calibration samples from CSV with the header
/// `distance_m,rssi_dbm`. Errors carry the 1-based line number.
pub fn read_calibration_csv<R: io::Read>(reader: R) -> Result<Vec<CalibrationSample>, PathLossError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let headers = rdr.headers().map_err(|e| csv_err(1, e))?;
        let expected = ["distance_m", "rssi_dbm"];
        if headers.iter().map(str::trim).ne(expected) {
            return Err(PathLossError::MalformedCsv {
                line: 1,
                reason: format!("expected header `distance_m,rssi_dbm`, got `{}`", headers.iter().collect::<Vec<_>>().join(",")),
            });
        }
    }
    let mut out = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 2; // 1-based, after the header
        let record = record.map_err(|e| csv_err(line, e))?;
        if record.len() != 2 {
            return Err(PathLossError::MalformedCsv {
                line,
                reason: format!("expected 2 fields, got {}", record.len()),
            });
        }
        let parse = |i: usize, what: &str| -> Result<f64, PathLossError> {
            record[i].trim().parse().map_err(|_| PathLossError::MalformedCsv {
                line,
                reason: format!("{what} `{}` is not a number", &record[i]),
            })
        };
        out.push(CalibrationSample {
            distance_m: parse(0, "distance")?,
            rssi_dbm: parse(1, "rssi")?,
        });
    }
    Ok(out)
}

/// Writes calibration samples in the format accepted by
/// [`read_calibration_csv`].
pub fn write_calibration_csv<W: io::Write>(
    mut writer: W,
    samples: &[CalibrationSample],
) -> io::Result<()> {
    writeln!(writer, "distance_m,rssi_dbm")?;
    for s in samples {
        writeln!(writer, "{},{}", s.distance_m, s.rssi_dbm)?;
    }
    Ok(())
}

fn csv_err(line: usize, e: csv::Error) -> PathLossError {
    PathLossError::MalformedCsv { line, reason: e.to_string() }
}
