//! End-to-end acceptance gates for the toolkit.
//!
//! Each test prints one `criterion NN (...): PASS/FAIL — detail` line and
//! then asserts, so a plain `cargo test --test acceptance -- --nocapture`
//! doubles as a scorecard. Tolerances and budgets are pinned below.
//!
//! Criterion 03 currently FAILS on one clause: the dynamic Kalman variant
//! does not reach the moving average's accuracy on this benchmark. Its
//! rolling-variance process noise tracks the raw channel variance, which
//! pins the steady-state gain near 0.6 and leaves far more measurement
//! noise in the output than a 20-sample mean. The clause is asserted
//! anyway rather than tuned around; see README "Benchmark notes".

use std::time::{Duration, Instant};

use rayon::prelude::*;

use proxkit::evaluate::{
    run_experiment, run_sweep, FilterKind, FilterParams, SweepConfig, SweepParam,
};
use proxkit::filters::ScalarKalman;
use proxkit::nifilter::{kde_update, AnchorTable, NiFilter};
use proxkit::particle::{systematic_resample_with_offset, ParticleFilter, ParticleParams};
use proxkit::pathloss::{calibrate, CalibratedModel, CalibrationSample, PathLossModel};
use proxkit::rng::{derive_seed, rng_from_seed};
use proxkit::simulate::{generate_trace, preset_model, SimConfig, PRESET_MODELS};
use proxkit::trace::RssiTrace;
use rand::Rng;
use rand_distr::StandardNormal;

// criterion 1: calibration recovery
const C01_RUNS: u64 = 100;
const C01_MIN_RECOVERIES: usize = 95;
const C01_C0_TOL_DB: f64 = 0.5;
const C01_N_TOL: f64 = 0.05;
const C01_BUDGET: Duration = Duration::from_secs(5);

// criterion 2: model inversion identity
const C02_PAIRS: usize = 10_000;
const C02_REL_TOL: f64 = 1e-9;

// criteria 3 and 9: Monte Carlo benchmarks
const BENCH_SEEDS: u64 = 50;
const C03_MIN_BEST_REDUCTION: f64 = 0.15;
const C03_BUDGET: Duration = Duration::from_secs(60);
const C09_MIN_MONOTONE: usize = 26; // majority of BENCH_SEEDS

// criterion 6: rolling-variance oracle
const C06_STEPS: usize = 10_000;
const C06_Q_TOL: f64 = 1e-12;

// criteria 7 and 8: filter invariants
const C07_WEIGHT_VECTORS: usize = 1_000;
const WEIGHT_SUM_TOL: f64 = 1e-9;

// criterion 10: full-volume scale check
const C10_BUDGET: Duration = Duration::from_secs(60);

/// Prints the scorecard line for a criterion, then enforces it.
fn verdict(id: u32, label: &str, pass: bool, detail: &str) {
    let word = if pass { "PASS" } else { "FAIL" };
    println!("criterion {id:02} ({label}): {word} — {detail}");
    assert!(pass, "criterion {id:02} ({label}): {detail}");
}

fn benchmark_model() -> PathLossModel {
    preset_model("env1-kontakt").unwrap()
}

fn fit_trace(trace: &RssiTrace) -> CalibratedModel {
    let samples: Vec<CalibrationSample> = trace
        .samples
        .iter()
        .map(|s| CalibrationSample {
            distance_m: s.true_distance_m.unwrap(),
            rssi_dbm: s.rssi_dbm,
        })
        .collect();
    calibrate(&samples).unwrap()
}

#[test]
fn c01_calibration_recovery() {
    let start = Instant::now();
    let truth = benchmark_model();
    let hits = (0..C01_RUNS)
        .filter(|&seed| {
            let mut cfg = SimConfig::noiseless(truth, seed);
            cfg.noise_sigma_dbm = 2.0;
            cfg.samples_per_distance = 70;
            let fit = fit_trace(&generate_trace(&cfg).unwrap());
            (fit.model.c0_dbm - truth.c0_dbm).abs() <= C01_C0_TOL_DB
                && (fit.model.n - truth.n).abs() <= C01_N_TOL
        })
        .count();
    let elapsed = start.elapsed();
    verdict(
        1,
        "path-loss recovery",
        hits >= C01_MIN_RECOVERIES && elapsed < C01_BUDGET,
        &format!("{hits}/{C01_RUNS} fits within ±{C01_C0_TOL_DB} dB / ±{C01_N_TOL}, {elapsed:?}"),
    );
}

#[test]
fn c02_inversion_round_trip() {
    let mut rng = rng_from_seed(0xD15A);
    let mut worst = 0.0f64;
    for _ in 0..C02_PAIRS {
        let c0 = -100.0 + 60.0 * rng.random::<f64>();
        let n = 0.5 + 3.5 * rng.random::<f64>();
        let d = 0.05 + 49.95 * rng.random::<f64>();
        let model = PathLossModel::new(c0, n).unwrap();
        let back = model.estimate_distance(model.predict_rssi(d).unwrap());
        worst = worst.max((back - d).abs() / d);
    }
    verdict(
        2,
        "inversion round trip",
        worst <= C02_REL_TOL,
        &format!("worst relative error {worst:.3e} over {C02_PAIRS} random (model, distance) pairs"),
    );
}

/// Benchmark MAE of every filter, averaged over the seeded runs. Each run
/// generates the default simulated walk, calibrates on it, and scores all
/// five filters with the fitted model and its residual sigma.
fn benchmark_mean_maes() -> [f64; 5] {
    let truth = benchmark_model();
    let per_seed: Vec<[f64; 5]> = (0..BENCH_SEEDS)
        .into_par_iter()
        .map(|seed| {
            let cfg = SimConfig::new(truth, derive_seed(1000, seed));
            let trace = generate_trace(&cfg).unwrap();
            let fit = fit_trace(&trace);
            let params = FilterParams::new(fit.residual_sigma_dbm, derive_seed(2000, seed));
            let mut maes = [0.0; 5];
            for (i, kind) in FilterKind::ALL.into_iter().enumerate() {
                let report =
                    run_experiment(&trace, &fit.model, kind, &params, None, false).unwrap();
                assert!(report.mae_m <= report.rmse_m + 1e-12);
                maes[i] = report.mae_m;
            }
            maes
        })
        .collect();
    let mut mean = [0.0; 5];
    for maes in &per_seed {
        for i in 0..5 {
            mean[i] += maes[i] / per_seed.len() as f64;
        }
    }
    mean
}

#[test]
fn c03_filter_improvement_trend() {
    let start = Instant::now();
    let [sma, kf_st, kf_dn, pf, ni] = benchmark_mean_maes();
    let elapsed = start.elapsed();

    let ratios = [kf_st / sma, kf_dn / sma, pf / sma, ni / sma];
    let best_reduction = 1.0 - (pf / sma).min(ni / sma);
    let all_beat_sma = ratios.iter().all(|r| *r <= 1.0);
    let pass = all_beat_sma && best_reduction >= C03_MIN_BEST_REDUCTION && elapsed < C03_BUDGET;
    verdict(
        3,
        "filter improvement trend",
        pass,
        &format!(
            "SMA MAE {sma:.4} m; MAE ratios vs SMA: kf-st {:.3}, kf-dn {:.3}, pf {:.3}, ni {:.3}; \
             best Bayesian reduction {:.1}% (need ≥ {:.0}%); {} seeds in {elapsed:?}",
            ratios[0],
            ratios[1],
            ratios[2],
            ratios[3],
            best_reduction * 100.0,
            C03_MIN_BEST_REDUCTION * 100.0,
            BENCH_SEEDS,
        ),
    );
}

#[test]
fn c04_mae_never_exceeds_rmse() {
    let truth = benchmark_model();
    let mut checked = 0;
    let mut jensen_ok = true;
    for seed in 0..5u64 {
        let mut cfg = SimConfig::new(truth, derive_seed(8000, seed));
        cfg.samples_per_distance = 200;
        let trace = generate_trace(&cfg).unwrap();
        let fit = fit_trace(&trace);
        let params = FilterParams::new(fit.residual_sigma_dbm, seed);
        for kind in FilterKind::ALL {
            let report = run_experiment(&trace, &fit.model, kind, &params, None, false).unwrap();
            jensen_ok &= report.mae_m <= report.rmse_m + 1e-12;
            checked += 1;
        }
    }
    verdict(
        4,
        "MAE ≤ RMSE",
        jensen_ok,
        &format!("held on all {checked} reports here (and is asserted wherever reports are made)"),
    );
}

#[test]
fn c05_kalman_properties() {
    // gain and variance discipline on a noisy stream
    let mut kf = ScalarKalman::new_dynamic(4.0, 10).unwrap();
    let mut rng = rng_from_seed(51);
    let mut ok = true;
    kf.step(-75.0).unwrap();
    for _ in 0..5000 {
        let z = -75.0 + 3.0 * rng.sample::<f64, _>(StandardNormal);
        kf.step(z).unwrap();
        let g = kf.gain().unwrap();
        ok &= g > 0.0 && g < 1.0;
        ok &= kf.variance().unwrap() <= kf.predicted_variance().unwrap();
    }

    // constant input is a fixed point, bit for bit
    let mut fixed = ScalarKalman::new_static(4.0).unwrap();
    for _ in 0..1000 {
        ok &= fixed.step(-70.25).unwrap() == -70.25;
    }
    verdict(
        5,
        "Kalman properties",
        ok,
        "gain ∈ (0,1), posterior ≤ predicted variance over 5000 noisy steps; constant input exact for 1000 steps",
    );
}

#[test]
fn c06_rolling_variance_oracle() {
    let mut kf = ScalarKalman::new_dynamic(9.0, 10).unwrap();
    let mut rng = rng_from_seed(66);
    let mut shadow: Vec<f64> = Vec::new();
    let mut worst = 0.0f64;
    kf.step(-80.0).unwrap(); // first call initializes without touching history
    for i in 0..C06_STEPS {
        let spread = if i % 37 == 0 { 18.0 } else { 3.0 };
        let z = -80.0 + spread * rng.sample::<f64, _>(StandardNormal);
        kf.step(z).unwrap();

        shadow.push(z);
        if shadow.len() > 10 {
            shadow.remove(0);
        }
        let mean = shadow.iter().sum::<f64>() / shadow.len() as f64;
        let brute = shadow.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
            / shadow.len() as f64;
        worst = worst.max((kf.process_noise().unwrap() - brute).abs());
    }
    verdict(
        6,
        "rolling variance oracle",
        worst <= C06_Q_TOL,
        &format!("worst |q − brute force| = {worst:.3e} over {C06_STEPS} steps"),
    );
}

#[test]
fn c07_particle_filter_invariants() {
    let mut ok = true;
    let mut detail = String::new();

    // weight normalization on a noisy stream
    let params = ParticleParams::new(4.0);
    let mut pf = ParticleFilter::new(params, 7).unwrap();
    let mut rng = rng_from_seed(71);
    let mut worst_sum = 0.0f64;
    for _ in 0..2000 {
        let z = -75.0 + 5.0 * rng.sample::<f64, _>(StandardNormal);
        pf.step(z).unwrap();
        worst_sum = worst_sum.max((pf.weights().iter().sum::<f64>() - 1.0).abs());
    }
    ok &= worst_sum < WEIGHT_SUM_TOL;
    detail.push_str(&format!("worst |Σw − 1| = {worst_sum:.2e}; "));

    // bitwise determinism under a fixed seed
    let run = || {
        let mut pf = ParticleFilter::new(ParticleParams::new(4.0), 99).unwrap();
        let mut rng = rng_from_seed(17);
        (0..500)
            .map(|_| {
                let z = -70.0 + 4.0 * rng.sample::<f64, _>(StandardNormal);
                pf.step(z).unwrap().to_bits()
            })
            .collect::<Vec<u64>>()
    };
    ok &= run() == run();
    detail.push_str("seeded reruns bitwise identical; ");

    // systematic resampling replication counts
    let mut rng = rng_from_seed(72);
    let mut worst_dev = 0.0f64;
    for _ in 0..C07_WEIGHT_VECTORS {
        let n = 2 + (rng.random::<u64>() % 127) as usize;
        let mut w: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let total: f64 = w.iter().sum();
        for v in &mut w {
            *v /= total;
        }
        let idx = systematic_resample_with_offset(&w, rng.random::<f64>()).unwrap();
        let mut counts = vec![0usize; n];
        for &i in &idx {
            counts[i] += 1;
        }
        for (j, &c) in counts.iter().enumerate() {
            worst_dev = worst_dev.max((c as f64 - n as f64 * w[j]).abs());
        }
    }
    ok &= worst_dev <= 1.0 + 1e-9;
    detail.push_str(&format!(
        "worst |count − N·w| = {worst_dev:.6} over {C07_WEIGHT_VECTORS} weight vectors"
    ));

    verdict(7, "particle filter invariants", ok, &detail);
}

#[test]
fn c08_ni_filter_invariants() {
    let mut ok = true;
    let mut detail = String::new();

    // weights normalize for arbitrary observations
    let table = AnchorTable::from_pairs(
        (0..14).map(|i| (0.5 + 0.6 * i as f64, -60.0 - 2.2 * i as f64)),
    )
    .unwrap();
    let mut rng = rng_from_seed(81);
    let mut worst_sum = 0.0f64;
    let mut hull_ok = true;
    let mut ni = NiFilter::with_defaults();
    for _ in 0..2000 {
        let r = -100.0 + 55.0 * rng.random::<f64>();
        let kde = kde_update(&table, r, 1.0).unwrap();
        worst_sum = worst_sum.max((kde.weights.iter().sum::<f64>() - 1.0).abs());
        let est = ni.step(&table, r).unwrap();
        hull_ok &= est >= table.min_distance() && est <= table.max_distance();
    }
    ok &= worst_sum < WEIGHT_SUM_TOL && hull_ok;
    detail.push_str(&format!("worst |Σω − 1| = {worst_sum:.2e}, hull held over 2000 steps; "));

    // single-anchor reduction
    let single = AnchorTable::from_pairs([(2.5, -70.0)]).unwrap();
    let mut ni = NiFilter::with_defaults();
    let reduction_exact = (0..50).all(|i| {
        let r = -90.0 + i as f64;
        ni.step(&single, r).unwrap() == 2.5
    });
    ok &= reduction_exact;
    detail.push_str("single-anchor output exact; ");

    // symmetric two-anchor case
    let two = AnchorTable::from_pairs([(1.0, -70.0), (2.0, -76.0)]).unwrap();
    let mut ni = NiFilter::with_defaults();
    let midpoint_exact = (0..10).all(|_| ni.step(&two, -73.0).unwrap() == 1.5);
    ok &= midpoint_exact;
    detail.push_str("symmetric two-anchor output exactly 1.5 m for 10 steps");

    verdict(8, "NI filter invariants", ok, &detail);
}

#[test]
fn c09_window_size_precision_trend() {
    // A channel whose outliers dominate the rolling-variance estimate: the
    // regime where growing the history window dilutes the spikes and the
    // dynamic Kalman output tightens monotonically.
    let truth = benchmark_model();
    let votes: usize = (0..BENCH_SEEDS)
        .into_par_iter()
        .map(|seed| {
            let mut sim = SimConfig::new(truth, derive_seed(3000, seed));
            sim.noise_sigma_dbm = 2.0;
            sim.outlier_prob = 0.1;
            sim.outlier_sigma_dbm = 16.0;
            let fit = fit_trace(&generate_trace(&sim).unwrap());
            let cfg = SweepConfig {
                param: SweepParam::WindowSize,
                values: (2..=10).map(f64::from).collect(),
                sim,
                filter_params: FilterParams::new(
                    fit.residual_sigma_dbm,
                    derive_seed(4000, seed),
                ),
                filter: FilterKind::KfDynamic,
                carry_state: false,
            };
            let points = run_sweep(&cfg).unwrap();
            let monotone = points
                .windows(2)
                .all(|w| w[1].std_dbm <= w[0].std_dbm + 1e-12);
            usize::from(monotone)
        })
        .sum();
    verdict(
        9,
        "window-size precision trend",
        votes >= C09_MIN_MONOTONE,
        &format!(
            "{votes}/{BENCH_SEEDS} seeds have non-increasing output std over history sizes 2..=10 \
             (majority needed: {C09_MIN_MONOTONE})"
        ),
    );
}

#[test]
fn c10_full_volume_scale_check() {
    let start = Instant::now();
    let mut reports = 0usize;
    for (i, (name, _, _)) in PRESET_MODELS.into_iter().enumerate() {
        let model = preset_model(name).unwrap();
        let cfg = SimConfig::new(model, derive_seed(7000, i as u64));
        let trace = generate_trace(&cfg).unwrap();
        assert_eq!(trace.samples.len(), 16_800);
        let fit = fit_trace(&trace);
        let params = FilterParams::new(fit.residual_sigma_dbm, i as u64);
        for kind in FilterKind::ALL {
            let report = run_experiment(&trace, &fit.model, kind, &params, None, false).unwrap();
            assert!(report.mae_m <= report.rmse_m + 1e-12);
            reports += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        10,
        "full-volume scale check",
        reports == 30 && elapsed < C10_BUDGET,
        &format!(
            "{} preset walks × 5 filters = {reports} reports in {elapsed:?} (budget {C10_BUDGET:?})",
            PRESET_MODELS.len()
        ),
    );
}
