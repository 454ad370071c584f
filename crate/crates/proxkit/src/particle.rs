//! Bootstrap particle filter over the RSSI level.
//!
//! The state is the underlying signal level in dBm, carried by `N_s` weighted
//! particles. Each step:
//!
//! 1. propagate every particle by a random walk, `x += N(0, process_sigma²)`
//! 2. reweight by the Gaussian measurement likelihood of the new reading
//! 3. normalize the weights
//! 4. if the effective sample size `1 / sum(w²)` drops below a threshold
//!    fraction of `N_s`, systematically resample back to uniform weights
//! 5. report the weighted particle mean
//!
//! All randomness comes from the filter's own seeded stream (see
//! [`crate::rng`]): the same seed and input sequence reproduce the exact same
//! particle history on any platform.

use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::StandardNormal;

use crate::filters::FilterError;
use crate::rng::rng_from_seed;

/// Default particle count; enough for a 1-D state, cheap to run at 10 Hz.
pub const DEFAULT_PARTICLE_COUNT: usize = 100;

/// Default random-walk step, in dB, for the propagation stage.
pub const DEFAULT_PROCESS_SIGMA: f64 = 0.5;

/// Resample when ESS falls below this fraction of the particle count.
pub const DEFAULT_ESS_THRESHOLD_FRACTION: f64 = 0.5;

const INV_SQRT_TWO_PI: f64 = 0.3989422804014327;

/// Tuning parameters for [`ParticleFilter`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParticleParams {
    pub n_particles: usize,
    /// Random-walk standard deviation in dB per step.
    pub process_sigma: f64,
    /// Measurement noise standard deviation in dB; calibration residual
    /// sigma is the usual source.
    pub meas_sigma: f64,
    /// Standard deviation of the initial cloud around the first reading.
    /// `None` spreads by `meas_sigma`.
    pub init_spread_sigma: Option<f64>,
    /// Fraction of `n_particles` below which ESS triggers resampling.
    pub ess_threshold_fraction: f64,
}

impl ParticleParams {
    pub fn new(meas_sigma: f64) -> Self {
        Self {
            n_particles: DEFAULT_PARTICLE_COUNT,
            process_sigma: DEFAULT_PROCESS_SIGMA,
            meas_sigma,
            init_spread_sigma: None,
            ess_threshold_fraction: DEFAULT_ESS_THRESHOLD_FRACTION,
        }
    }

    fn validate(&self) -> Result<(), FilterError> {
        if self.n_particles < 2 {
            return Err(FilterError::TooFewParticles(self.n_particles));
        }
        if !self.meas_sigma.is_finite() || self.meas_sigma <= 0.0 {
            return Err(FilterError::InvalidSigma {
                name: "meas_sigma",
                value: self.meas_sigma,
            });
        }
        if !self.process_sigma.is_finite() || self.process_sigma < 0.0 {
            return Err(FilterError::InvalidSigma {
                name: "process_sigma",
                value: self.process_sigma,
            });
        }
        if let Some(s) = self.init_spread_sigma {
            if !s.is_finite() || s < 0.0 {
                return Err(FilterError::InvalidSigma { name: "init_spread_sigma", value: s });
            }
        }
        if !(self.ess_threshold_fraction > 0.0 && self.ess_threshold_fraction <= 1.0) {
            return Err(FilterError::InvalidEssFraction(self.ess_threshold_fraction));
        }
        Ok(())
    }
}

/// Bootstrap particle filter; see the module docs for the update cycle.
#[derive(Debug, Clone)]
pub struct ParticleFilter {
    params: ParticleParams,
    rng: ChaCha12Rng,
    particles: Vec<f64>,
    weights: Vec<f64>,
    initialized: bool,
    last_degenerate: bool,
    degenerate_steps: u64,
}

impl ParticleFilter {
    pub fn new(params: ParticleParams, seed: u64) -> Result<Self, FilterError> {
        params.validate()?;
        Ok(Self {
            rng: rng_from_seed(seed),
            particles: Vec::new(),
            weights: Vec::new(),
            initialized: false,
            last_degenerate: false,
            degenerate_steps: 0,
            params,
        })
    }

    /// Builds a filter with an explicit initial cloud and uniform weights.
    /// Useful for diagnostics and for pinning down the update arithmetic.
    pub fn with_particles(
        particles: Vec<f64>,
        params: ParticleParams,
        seed: u64,
    ) -> Result<Self, FilterError> {
        let mut params = params;
        params.n_particles = particles.len();
        params.validate()?;
        if particles.iter().any(|x| !x.is_finite()) {
            return Err(FilterError::NonFiniteInput(f64::NAN));
        }
        let n = particles.len();
        Ok(Self {
            rng: rng_from_seed(seed),
            weights: vec![1.0 / n as f64; n],
            particles,
            initialized: true,
            last_degenerate: false,
            degenerate_steps: 0,
            params,
        })
    }

    /// Seeds the particle cloud around `rssi_dbm` with uniform weights.
    /// Called implicitly by the first [`Self::step`].
    pub fn init_at(&mut self, rssi_dbm: f64) -> Result<(), FilterError> {
        if !rssi_dbm.is_finite() {
            return Err(FilterError::NonFiniteInput(rssi_dbm));
        }
        let n = self.params.n_particles;
        let spread = self.params.init_spread_sigma.unwrap_or(self.params.meas_sigma);
        self.particles.clear();
        for _ in 0..n {
            let z: f64 = self.rng.sample(StandardNormal);
            self.particles.push(rssi_dbm + spread * z);
        }
        self.weights = vec![1.0 / n as f64; n];
        self.initialized = true;
        Ok(())
    }

    pub fn step(&mut self, rssi_dbm: f64) -> Result<f64, FilterError> {
        if !rssi_dbm.is_finite() {
            return Err(FilterError::NonFiniteInput(rssi_dbm));
        }
        if !self.initialized {
            self.init_at(rssi_dbm)?;
        }
        let n = self.params.n_particles;

        // 1. random-walk propagation
        for x in &mut self.particles {
            let z: f64 = self.rng.sample(StandardNormal);
            *x += self.params.process_sigma * z;
        }

        // 2. Gaussian likelihood reweighting
        let inv_sigma = 1.0 / self.params.meas_sigma;
        for (w, x) in self.weights.iter_mut().zip(&self.particles) {
            let dz = (rssi_dbm - x) * inv_sigma;
            *w *= INV_SQRT_TWO_PI * inv_sigma * (-0.5 * dz * dz).exp();
        }

        // 3. normalize; if every likelihood underflowed there is no
        //    information left in the weights, so fall back to uniform
        let sum: f64 = self.weights.iter().sum();
        self.last_degenerate = !(sum > 0.0 && sum.is_finite());
        if self.last_degenerate {
            self.degenerate_steps += 1;
            self.weights.fill(1.0 / n as f64);
        } else {
            for w in &mut self.weights {
                *w /= sum;
            }
        }

        // 4. conditional systematic resampling
        if self.ess() < self.params.ess_threshold_fraction * n as f64 {
            let idx = systematic_resample(&self.weights, &mut self.rng)?;
            self.particles = idx.iter().map(|&i| self.particles[i]).collect();
            self.weights.fill(1.0 / n as f64);
        }

        // 5. weighted mean
        Ok(self.estimate())
    }

    /// Weighted particle mean, computed around a pivot so that a degenerate
    /// cloud (all particles equal) is returned exactly.
    pub fn estimate(&self) -> f64 {
        let pivot = self.particles[0];
        let dev: f64 = self
            .weights
            .iter()
            .zip(&self.particles)
            .map(|(w, x)| w * (x - pivot))
            .sum();
        pivot + dev
    }

    /// Effective sample size `1 / sum(w²)` of the current weights.
    pub fn ess(&self) -> f64 {
        1.0 / self.weights.iter().map(|w| w * w).sum::<f64>()
    }

    pub fn particles(&self) -> &[f64] {
        &self.particles
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn n_particles(&self) -> usize {
        self.params.n_particles
    }

    /// Whether the most recent step hit the all-underflow fallback.
    pub fn last_degenerate(&self) -> bool {
        self.last_degenerate
    }

    /// Total steps that hit the all-underflow fallback.
    pub fn degenerate_steps(&self) -> u64 {
        self.degenerate_steps
    }
}

/// Systematic resampling with the stratified offset drawn from `rng`.
///
/// Returns the selected ancestor index for each of the `weights.len()` output
/// slots. The replication count of index `j` differs from `N · w_j / sum(w)`
/// by less than one, which is the variance-minimizing property that makes
/// this scheme preferable to multinomial resampling.
pub fn systematic_resample<R: Rng + ?Sized>(
    weights: &[f64],
    rng: &mut R,
) -> Result<Vec<usize>, FilterError> {
    let u: f64 = rng.random();
    systematic_resample_with_offset(weights, u)
}

/// Deterministic core of [`systematic_resample`]: `offset` in `[0, 1)` places
/// the comb of `N` equally spaced selection points.
pub fn systematic_resample_with_offset(
    weights: &[f64],
    offset: f64,
) -> Result<Vec<usize>, FilterError> {
    if !(0.0..1.0).contains(&offset) {
        return Err(FilterError::InvalidOffset(offset));
    }
    if weights.is_empty() || weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(FilterError::DegenerateWeights);
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(FilterError::DegenerateWeights);
    }

    let n = weights.len();
    let mut out = Vec::with_capacity(n);
    let mut i = 0;
    let mut cum = weights[0];
    for j in 0..n {
        let point = (j as f64 + offset) / n as f64 * total;
        while point >= cum && i < n - 1 {
            i += 1;
            cum += weights[i];
        }
        out.push(i);
    }
    Ok(out)
}
