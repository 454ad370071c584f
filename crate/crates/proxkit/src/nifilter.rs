//! Nonparametric information filter: estimates proximity in meters directly
//! from RSSI, without inverting a path-loss model.
//!
//! The measurement model is a kernel density estimate over *anchors* —
//! calibration pairs of (known distance, mean RSSI at that distance). Each
//! incoming reading is scored against every anchor's mean with a Gaussian
//! kernel; the normalized kernel weights turn the anchor distances into a
//! measurement estimate `x̂_r` (their weighted mean) with variance `p_r`
//! (kernel variance plus the weighted spread of the anchors around `x̂_r`).
//!
//! That per-reading estimate is fused with the running state in information
//! form, `Y = 1/p` and `y = x̂/p`. Starting from `Y = 0` makes the prior
//! uninformative, so the first reading passes through as pure measurement
//! and every later reading tightens the state by `1/p_r`.

use std::io;

use crate::filters::FilterError;
use crate::pathloss::CalibrationSample;

/// Default kernel smoothing variance in dB², applied in RSSI space.
pub const DEFAULT_KDE_SIGMA: f64 = 1.0;

/// Default process noise in m² for the prediction stage; zero models a
/// stationary receiver.
pub const DEFAULT_NI_PROCESS_NOISE: f64 = 0.0;

/// One calibration pair: the mean RSSI observed at a known distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Anchor {
    pub distance_m: f64,
    pub mean_rssi_dbm: f64,
}

/// Immutable set of anchors, sorted by distance.
#[derive(Debug, Clone, PartialEq)]
pub struct AnchorTable {
    anchors: Vec<Anchor>,
}

impl AnchorTable {
    /// Validates that distances are positive, finite, and strictly
    /// increasing, and that every mean RSSI is finite.
    pub fn new(anchors: Vec<Anchor>) -> Result<Self, FilterError> {
        if anchors.is_empty() {
            return Err(FilterError::EmptyAnchorTable);
        }
        let mut prev = 0.0;
        for (index, a) in anchors.iter().enumerate() {
            if !a.distance_m.is_finite() || a.distance_m <= prev {
                return Err(FilterError::UnsortedAnchors { index, distance_m: a.distance_m });
            }
            if !a.mean_rssi_dbm.is_finite() {
                return Err(FilterError::InvalidAnchorRssi { index, rssi_dbm: a.mean_rssi_dbm });
            }
            prev = a.distance_m;
        }
        Ok(Self { anchors })
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (f64, f64)>) -> Result<Self, FilterError> {
        Self::new(
            pairs
                .into_iter()
                .map(|(distance_m, mean_rssi_dbm)| Anchor { distance_m, mean_rssi_dbm })
                .collect(),
        )
    }

    /// Builds a table from per-distance averaged calibration samples, e.g.
    /// the output of [`crate::pathloss::average_by_distance`].
    pub fn from_samples(samples: &[CalibrationSample]) -> Result<Self, FilterError> {
        Self::from_pairs(samples.iter().map(|s| (s.distance_m, s.rssi_dbm)))
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    pub fn min_distance(&self) -> f64 {
        self.anchors[0].distance_m
    }

    pub fn max_distance(&self) -> f64 {
        self.anchors[self.anchors.len() - 1].distance_m
    }
}

/// Gaussian kernel with variance-style smoothing parameter `sigma`:
/// `(2π)^(−d/2) · sigma^(−1/2) · exp(−(r − r_bar)² / (2·sigma))`.
///
/// Callers guarantee `sigma > 0`; `d` is the state dimension (1 here).
pub fn gaussian_kernel(r: f64, r_bar: f64, sigma: f64, d: u32) -> f64 {
    debug_assert!(sigma > 0.0);
    let dz = r - r_bar;
    std::f64::consts::TAU.powf(-0.5 * d as f64) * sigma.powf(-0.5) * (-dz * dz / (2.0 * sigma)).exp()
}

/// Measurement estimate produced by [`kde_update`].
#[derive(Debug, Clone, PartialEq)]
pub struct KdeEstimate {
    /// Weighted mean of the anchor distances, in meters.
    pub x_hat_r: f64,
    /// Variance of the estimate in m²: kernel variance plus the weighted
    /// squared spread of the anchors around `x_hat_r`.
    pub p_r: f64,
    /// Normalized kernel weight of each anchor, for diagnostics.
    pub weights: Vec<f64>,
    /// True when every kernel underflowed and the estimate fell back to the
    /// anchor nearest the observation in RSSI.
    pub degenerate: bool,
}

/// Scores `rssi_dbm` against every anchor and returns the weighted-mean
/// distance estimate with its variance.
///
/// If the observation is so far from all anchor means that every kernel
/// underflows to zero, the nearest anchor (in RSSI) takes weight 1 and the
/// result is flagged [`KdeEstimate::degenerate`].
pub fn kde_update(
    table: &AnchorTable,
    rssi_dbm: f64,
    sigma: f64,
) -> Result<KdeEstimate, FilterError> {
    if !rssi_dbm.is_finite() {
        return Err(FilterError::NonFiniteInput(rssi_dbm));
    }
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(FilterError::InvalidKernelSigma(sigma));
    }

    let anchors = table.anchors();
    let mut weights: Vec<f64> =
        anchors.iter().map(|a| gaussian_kernel(rssi_dbm, a.mean_rssi_dbm, sigma, 1)).collect();
    let total: f64 = weights.iter().sum();

    let degenerate = !(total > 0.0 && total.is_finite());
    if degenerate {
        let nearest = anchors
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                let da = (rssi_dbm - a.mean_rssi_dbm).abs();
                let db = (rssi_dbm - b.mean_rssi_dbm).abs();
                da.total_cmp(&db)
            })
            .map(|(i, _)| i)
            .expect("table is never empty");
        weights.fill(0.0);
        weights[nearest] = 1.0;
    } else {
        for w in &mut weights {
            *w /= total;
        }
    }

    let x_hat_r: f64 =
        weights.iter().zip(anchors).map(|(w, a)| w * a.distance_m).sum();
    let p_r: f64 = weights
        .iter()
        .zip(anchors)
        .map(|(w, a)| {
            let dx = x_hat_r - a.distance_m;
            w * (sigma + dx * dx)
        })
        .sum();

    Ok(KdeEstimate { x_hat_r, p_r, weights, degenerate })
}

/// Recursive proximity estimator fusing [`kde_update`] measurements in
/// information form. One instance per trace; see the module docs.
#[derive(Debug, Clone)]
pub struct NiFilter {
    kde_sigma: f64,
    q: f64,
    x_hat: Option<f64>,
    p: f64,
    last_degenerate: bool,
}

impl NiFilter {
    pub fn new(kde_sigma: f64, q: f64) -> Result<Self, FilterError> {
        if !kde_sigma.is_finite() || kde_sigma <= 0.0 {
            return Err(FilterError::InvalidKernelSigma(kde_sigma));
        }
        if !q.is_finite() || q < 0.0 {
            return Err(FilterError::InvalidProcessNoise(q));
        }
        Ok(Self { kde_sigma, q, x_hat: None, p: 0.0, last_degenerate: false })
    }

    pub fn with_defaults() -> Self {
        Self::new(DEFAULT_KDE_SIGMA, DEFAULT_NI_PROCESS_NOISE)
            .expect("default parameters are valid")
    }

    /// Consumes one RSSI reading and returns the distance estimate in meters.
    ///
    /// The update is written in gain form: with prior variance inflated to
    /// `p⁻ = p + q`, the posterior is `x̂ += W·(x̂_r − x̂)` and
    /// `p = (1 − W)·p⁻` where `W = p⁻/(p⁻ + p_r)`. This is the information
    /// update `Y ← Y⁻ + 1/p_r`, `y ← y⁻ + x̂_r/p_r` rearranged so that a
    /// measurement agreeing with the state leaves the mean untouched. The
    /// zero-information initial state makes the first step pure measurement.
    pub fn step(&mut self, table: &AnchorTable, rssi_dbm: f64) -> Result<f64, FilterError> {
        let kde = kde_update(table, rssi_dbm, self.kde_sigma)?;
        self.last_degenerate = kde.degenerate;
        if !(kde.p_r > 0.0) || !kde.p_r.is_finite() {
            return Err(FilterError::InternalInvariant("KDE variance must be positive"));
        }
        let x_hat = match self.x_hat {
            None => {
                self.p = kde.p_r;
                kde.x_hat_r
            }
            Some(x) => {
                let p_pred = self.p + self.q;
                let gain = p_pred / (p_pred + kde.p_r);
                self.p = (1.0 - gain) * p_pred;
                x + gain * (kde.x_hat_r - x)
            }
        };
        self.x_hat = Some(x_hat);
        Ok(x_hat)
    }

    /// Current distance estimate, `None` before the first reading.
    pub fn estimate(&self) -> Option<f64> {
        self.x_hat
    }

    /// Posterior variance in m², `None` before the first reading.
    pub fn variance(&self) -> Option<f64> {
        self.x_hat.map(|_| self.p)
    }

    /// Information matrix `Y = 1/p`; zero before the first reading.
    pub fn info_y(&self) -> f64 {
        match self.x_hat {
            None => 0.0,
            Some(_) => 1.0 / self.p,
        }
    }

    /// Information vector `y = x̂/p`; zero before the first reading.
    pub fn info_vec(&self) -> f64 {
        match self.x_hat {
            None => 0.0,
            Some(x) => x / self.p,
        }
    }

    pub fn kde_sigma(&self) -> f64 {
        self.kde_sigma
    }

    pub fn process_noise(&self) -> f64 {
        self.q
    }

    /// Whether the most recent step fell back to the nearest anchor because
    /// every kernel underflowed.
    pub fn last_degenerate(&self) -> bool {
        self.last_degenerate
    }
}

/// Reads an anchor table from `distance_m,mean_rssi_dbm` CSV.
pub fn read_anchor_csv<R: io::Read>(reader: R) -> Result<AnchorTable, FilterError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    {
        let headers = rdr.headers().map_err(|e| csv_err(1, e))?;
        let expected = ["distance_m", "mean_rssi_dbm"];
        if headers.iter().map(str::trim).ne(expected) {
            return Err(FilterError::MalformedAnchorCsv {
                line: 1,
                reason: format!(
                    "expected header `distance_m,mean_rssi_dbm`, got `{}`",
                    headers.iter().collect::<Vec<_>>().join(",")
                ),
            });
        }
    }
    let mut anchors = Vec::new();
    for (idx, record) in rdr.records().enumerate() {
        let line = idx + 2; // 1-based, after the header
        let record = record.map_err(|e| csv_err(line, e))?;
        if record.len() != 2 {
            return Err(FilterError::MalformedAnchorCsv {
                line,
                reason: format!("expected 2 fields, got {}", record.len()),
            });
        }
        let parse = |i: usize, what: &str| -> Result<f64, FilterError> {
            record[i].trim().parse().map_err(|_| FilterError::MalformedAnchorCsv {
                line,
                reason: format!("{what} `{}` is not a number", &record[i]),
            })
        };
        anchors.push(Anchor {
            distance_m: parse(0, "distance")?,
            mean_rssi_dbm: parse(1, "mean RSSI")?,
        });
    }
    AnchorTable::new(anchors)
}

/// Writes an anchor table in the format accepted by [`read_anchor_csv`].
pub fn write_anchor_csv<W: io::Write>(mut writer: W, table: &AnchorTable) -> io::Result<()> {
    writeln!(writer, "distance_m,mean_rssi_dbm")?;
    for a in table.anchors() {
        writeln!(writer, "{},{}", a.distance_m, a.mean_rssi_dbm)?;
    }
    Ok(())
}

fn csv_err(line: usize, e: csv::Error) -> FilterError {
    FilterError::MalformedAnchorCsv { line, reason: e.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn two_anchor_table() -> AnchorTable {
        AnchorTable::from_pairs([(1.0, -70.0), (2.0, -76.0)]).unwrap()
    }

    #[test]
    fn kernel_peaks_at_the_mean() {
        let k = gaussian_kernel(-70.0, -70.0, 1.0, 1);
        assert!((k - 0.3989422804014327).abs() < 1e-12);
    }

    #[test]
    fn kernel_is_symmetric_and_vanishes_in_the_tails() {
        for delta in [0.5, 2.0, 7.5] {
            let lo = gaussian_kernel(-70.0 - delta, -70.0, 2.5, 1);
            let hi = gaussian_kernel(-70.0 + delta, -70.0, 2.5, 1);
            assert_eq!(lo.to_bits(), hi.to_bits());
        }
        assert!(gaussian_kernel(-30.0, -70.0, 1.0, 1) < 1e-300);
        assert_eq!(gaussian_kernel(-120.0, -70.0, 1.0, 1), 0.0);
    }

    #[test]
    fn kernel_dimension_scales_the_normalizer() {
        let k1 = gaussian_kernel(-70.0, -70.0, 1.0, 1);
        let k2 = gaussian_kernel(-70.0, -70.0, 1.0, 2);
        assert!((k2 - k1 / std::f64::consts::TAU.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn kde_symmetric_observation_splits_weights_exactly() {
        let kde = kde_update(&two_anchor_table(), -73.0, 1.0).unwrap();
        assert_eq!(kde.weights, vec![0.5, 0.5]);
        assert_eq!(kde.x_hat_r, 1.5);
        assert_eq!(kde.p_r, 1.25);
        assert!(!kde.degenerate);
    }

    #[test]
    fn kde_observation_at_an_anchor_mean_dominates() {
        let table = AnchorTable::from_pairs([(1.0, -60.0), (2.0, -85.0)]).unwrap();
        let kde = kde_update(&table, -60.0, 1.0).unwrap();
        assert!(kde.weights[0] > 0.999);
        assert!((kde.x_hat_r - 1.0).abs() < 1e-3);
    }

    #[test]
    fn kde_weights_sum_to_one() {
        let table = fourteen_anchor_table();
        let mut rng = rng_from_seed(31);
        for _ in 0..500 {
            let r = -95.0 + 45.0 * rng.random::<f64>();
            let kde = kde_update(&table, r, 1.0).unwrap();
            let sum: f64 = kde.weights.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn kde_underflow_falls_back_to_nearest_anchor() {
        let table = AnchorTable::from_pairs([(1.0, -60.0), (2.0, -66.0)]).unwrap();
        let kde = kde_update(&table, -200.0, 1.0).unwrap();
        assert!(kde.degenerate);
        assert_eq!(kde.weights, vec![0.0, 1.0]);
        assert_eq!(kde.x_hat_r, 2.0);
        assert_eq!(kde.p_r, 1.0);
    }

    #[test]
    fn kde_variance_never_below_kernel_sigma() {
        let table = fourteen_anchor_table();
        let mut rng = rng_from_seed(77);
        for _ in 0..200 {
            let r = -95.0 + 45.0 * rng.random::<f64>();
            let sigma = 0.25 + 4.0 * rng.random::<f64>();
            let kde = kde_update(&table, r, sigma).unwrap();
            assert!(kde.p_r >= sigma);
        }
    }

    #[test]
    fn first_step_is_pure_measurement() {
        let table = two_anchor_table();
        let mut ni = NiFilter::with_defaults();
        assert_eq!(ni.info_y(), 0.0);
        assert_eq!(ni.info_vec(), 0.0);
        let out = ni.step(&table, -74.5).unwrap();
        let kde = kde_update(&table, -74.5, DEFAULT_KDE_SIGMA).unwrap();
        assert_eq!(out, kde.x_hat_r);
        assert_eq!(ni.variance(), Some(kde.p_r));
    }

    #[test]
    fn symmetric_stream_holds_midpoint_exactly() {
        let table = two_anchor_table();
        let mut ni = NiFilter::with_defaults();
        let mut last_y = 0.0;
        for _ in 0..10 {
            let out = ni.step(&table, -73.0).unwrap();
            assert_eq!(out, 1.5);
            assert!(ni.info_y() > last_y);
            last_y = ni.info_y();
        }
    }

    #[test]
    fn constant_stream_pins_the_estimate_and_shrinks_variance() {
        let table = fourteen_anchor_table();
        let mut ni = NiFilter::with_defaults();
        let first = ni.step(&table, -71.3).unwrap();
        let mut prev_var = ni.variance().unwrap();
        for _ in 0..20 {
            let out = ni.step(&table, -71.3).unwrap();
            assert_eq!(out, first);
            let var = ni.variance().unwrap();
            assert!(var < prev_var);
            prev_var = var;
        }
    }

    #[test]
    fn single_anchor_table_reduces_to_that_distance() {
        let table = AnchorTable::from_pairs([(2.5, -70.0)]).unwrap();
        let mut ni = NiFilter::with_defaults();
        for r in [-40.0, -70.0, -99.5, -200.0] {
            assert_eq!(ni.step(&table, r).unwrap(), 2.5);
        }
    }

    #[test]
    fn estimates_stay_inside_the_anchor_hull() {
        let table = fourteen_anchor_table();
        let mut ni = NiFilter::new(1.0, 0.05).unwrap();
        let mut rng = rng_from_seed(9);
        for _ in 0..1000 {
            let r = -100.0 + 60.0 * rng.random::<f64>();
            let out = ni.step(&table, r).unwrap();
            assert!(out >= table.min_distance() && out <= table.max_distance());
            assert!(ni.info_y() > 0.0);
        }
    }

    #[test]
    fn information_is_nondecreasing_without_process_noise() {
        let table = fourteen_anchor_table();
        let mut ni = NiFilter::with_defaults();
        let mut rng = rng_from_seed(15);
        let mut last_y = 0.0;
        for _ in 0..300 {
            let r = -95.0 + 45.0 * rng.random::<f64>();
            ni.step(&table, r).unwrap();
            assert!(ni.info_y() >= last_y);
            last_y = ni.info_y();
        }
    }

    #[test]
    fn table_validation_rejects_bad_input() {
        assert!(matches!(
            AnchorTable::from_pairs([]),
            Err(FilterError::EmptyAnchorTable)
        ));
        assert!(matches!(
            AnchorTable::from_pairs([(2.0, -70.0), (1.0, -76.0)]),
            Err(FilterError::UnsortedAnchors { index: 1, .. })
        ));
        assert!(matches!(
            AnchorTable::from_pairs([(1.0, -70.0), (1.0, -76.0)]),
            Err(FilterError::UnsortedAnchors { index: 1, .. })
        ));
        assert!(matches!(
            AnchorTable::from_pairs([(0.0, -70.0)]),
            Err(FilterError::UnsortedAnchors { index: 0, .. })
        ));
        assert!(matches!(
            AnchorTable::from_pairs([(1.0, f64::NAN)]),
            Err(FilterError::InvalidAnchorRssi { index: 0, .. })
        ));
    }

    #[test]
    fn anchor_csv_round_trips() {
        let table = fourteen_anchor_table();
        let mut buf = Vec::new();
        write_anchor_csv(&mut buf, &table).unwrap();
        let parsed = read_anchor_csv(buf.as_slice()).unwrap();
        assert_eq!(parsed, table);
    }

    #[test]
    fn anchor_csv_errors_name_the_line() {
        let text = "distance_m,mean_rssi_dbm\n1.0,-70\nbogus,-72\n";
        match read_anchor_csv(text.as_bytes()) {
            Err(FilterError::MalformedAnchorCsv { line, .. }) => assert_eq!(line, 3),
            other => panic!("expected a line-3 parse error, got {other:?}"),
        }
        assert!(read_anchor_csv("d,r\n1,-70\n".as_bytes()).is_err());
    }

    fn fourteen_anchor_table() -> AnchorTable {
        // roughly a log-distance profile over 0.5..8.5 m
        let pairs: Vec<(f64, f64)> = (0..14)
            .map(|i| {
                let d = 0.5 + i as f64 * 0.6;
                (d, -62.0 - 20.0 * d.log10())
            })
            .collect();
        AnchorTable::from_pairs(pairs).unwrap()
    }
}
