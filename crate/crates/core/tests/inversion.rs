use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use insar_ts::geomodel::RadarConstants;
use insar_ts::pairnet::{connected_components, design_matrix, select_pairs, AcquisitionCatalog, PairSet, DAYS_PER_YEAR};
use insar_ts::synthstack::SceneConfig;
use insar_ts::tsinvert::{fit_network_velocity, fit_velocity, invert_pixel, InversionConfig, TimeSeries};

const RATE_MM_YR: f64 = -25.7;

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, var.sqrt())
}

fn regular_dates(n: usize, step_days: u64) -> Vec<NaiveDate> {
    let t0 = NaiveDate::from_ymd_opt(2017, 1, 4).unwrap();
    (0..n as u64).map(|k| t0 + Days::new(step_days * k)).collect()
}

/// Monte Carlo of reported versus empirical velocity spread on a pair network.
fn network_monte_carlo(catalog: &AcquisitionCatalog, trials: usize, seed: u64) -> (f64, f64, f64) {
    let radar = RadarConstants::new(insar_ts::geomodel::SENTINEL1_WAVELENGTH_M).unwrap();
    let pairs = select_pairs(catalog, 150.0, 400.0).unwrap();
    let dm = design_matrix(&pairs, catalog.len(), 0).unwrap();
    let years = catalog.decimal_years();
    let cm_per_rad = radar.phase_to_displacement_cm(1.0);
    let rate_rad = RATE_MM_YR / 10.0 / cm_per_rad;
    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let weights = vec![1.0; dm.rows()];
    let mut rates = Vec::new();
    let mut sigmas = Vec::new();
    for _ in 0..trials {
        let y: Vec<f64> = pairs
            .pairs()
            .iter()
            .map(|&(i, j)| rate_rad * (years[j] - years[i]) + noise.sample(&mut rng))
            .collect();
        let inv = invert_pixel(&y, &dm, &weights, &InversionConfig::default()).unwrap();
        let v = fit_network_velocity(&y, &dm, &inv, &years, cm_per_rad).unwrap();
        rates.push(v.rate_mm_yr);
        sigmas.push(v.std_mm_yr);
    }
    let (mean, spread) = mean_std(&rates);
    let reported = sigmas.iter().sum::<f64>() / sigmas.len() as f64;
    (mean, spread, reported)
}

#[test]
fn reported_sigma_matches_spread_on_default_network() {
    let catalog = SceneConfig::default().build_catalog().unwrap();
    let (mean, spread, reported) = network_monte_carlo(&catalog, 200, 11);
    assert!((mean - RATE_MM_YR).abs() < 3.0 * spread / (200f64).sqrt() + 1e-9, "mean {mean}");
    let ratio = reported / spread;
    assert!((0.5..=2.0).contains(&ratio), "reported {reported} spread {spread}");
}

#[test]
fn reported_sigma_matches_spread_on_dense_network() {
    let dates = regular_dates(183, 12);
    let catalog = AcquisitionCatalog::from_parts(&dates, &[0.0; 183]).unwrap();
    let (mean, spread, reported) = network_monte_carlo(&catalog, 200, 12);
    assert!((mean - RATE_MM_YR).abs() < 3.0 * spread, "mean {mean}");
    let ratio = reported / spread;
    assert!((0.5..=2.0).contains(&ratio), "reported {reported} spread {spread}");
}

#[test]
fn time_series_fit_sigma_matches_spread() {
    let radar = RadarConstants::new(insar_ts::geomodel::SENTINEL1_WAVELENGTH_M).unwrap();
    let sigma_cm = radar.phase_to_displacement_cm(0.5).abs();
    let dates = regular_dates(183, 12);
    let t: Vec<f64> = dates.iter().map(|d| (*d - dates[0]).num_days() as f64 / DAYS_PER_YEAR).collect();
    let noise = Normal::new(0.0, sigma_cm).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut rates = Vec::new();
    let mut sigmas = Vec::new();
    for _ in 0..200 {
        let mut d: Vec<f64> = t.iter().map(|t| RATE_MM_YR / 10.0 * t + noise.sample(&mut rng)).collect();
        d[0] = 0.0;
        let mut s = vec![sigma_cm; t.len()];
        s[0] = 0.0;
        let v = fit_velocity(&TimeSeries {
            epochs: dates.clone(),
            displacement_cm: d,
            sigma_cm: s,
        })
        .unwrap();
        rates.push(v.rate_mm_yr);
        sigmas.push(v.std_mm_yr);
    }
    let (mean, spread) = mean_std(&rates);
    let reported = sigmas.iter().sum::<f64>() / 200.0;
    assert!(sigmas.iter().all(|s| *s > 0.0));
    assert!((mean - RATE_MM_YR).abs() < 3.0 * reported, "mean {mean}");
    let ratio = reported / spread;
    assert!((0.5..=2.0).contains(&ratio), "reported {reported} spread {spread}");
}

#[test]
fn sigma_shrinks_with_root_epoch_count() {
    // Fixed four-year span, denser sampling.
    let t0 = NaiveDate::from_ymd_opt(2016, 1, 1).unwrap();
    let counts = [16usize, 32, 64, 128, 256];
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let noise = Normal::new(0.0, 0.3).unwrap();
    let mut points = Vec::new();
    for &n in &counts {
        let step = 1460 / (n as u64 - 1);
        let dates: Vec<NaiveDate> = (0..n as u64).map(|k| t0 + Days::new(step * k)).collect();
        let mut total = 0.0;
        for _ in 0..200 {
            let d: Vec<f64> = (0..n).map(|_| noise.sample(&mut rng)).collect();
            let v = fit_velocity(&TimeSeries {
                epochs: dates.clone(),
                displacement_cm: d,
                sigma_cm: vec![0.3; n],
            })
            .unwrap();
            total += v.std_mm_yr;
        }
        points.push(((n as f64).ln(), (total / 200.0).ln()));
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / points.len() as f64;
    let my = points.iter().map(|p| p.1).sum::<f64>() / points.len() as f64;
    let sxy: f64 = points.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = points.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    let slope = sxy / sxx;
    assert!((slope + 0.5).abs() <= 0.5 * 0.15, "slope {slope}");
}

#[test]
fn single_gross_outlier_is_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let cfg = InversionConfig::default();
    for _ in 0..100 {
        let n = 8;
        let mut pairs: Vec<(usize, usize)> = (0..n - 1).map(|k| (k, k + 1)).collect();
        while pairs.len() < 20 {
            let i = rng.random_range(0..n - 1);
            let j = rng.random_range(i + 1..n);
            if !pairs.contains(&(i, j)) {
                pairs.push((i, j));
            }
        }
        let ps = PairSet::from_pairs(pairs).unwrap();
        let dm = design_matrix(&ps, n, 0).unwrap();
        let mut truth: Vec<f64> = (0..n).map(|_| rng.random_range(-20.0..20.0)).collect();
        truth[0] = 0.0;
        let mut y = dm.forward(&truth);
        // The outlier must not sit in a cut of two pairs, or the data cannot
        // tell it from its partner.
        let connected_without = |drop: [usize; 2]| {
            let reduced = PairSet::from_pairs((0..ps.len()).filter(|r| !drop.contains(r)).map(|r| ps.pairs()[r])).unwrap();
            connected_components(&reduced, n).len() == 1
        };
        let bad = loop {
            let k = rng.random_range(0..y.len());
            if (0..ps.len()).all(|other| connected_without([k, other])) {
                break k;
            }
        };
        y[bad] += if rng.random_bool(0.5) { 10.0 } else { -10.0 };

        let inv = invert_pixel(&y, &dm, &vec![1.0; y.len()], &cfg).unwrap();
        let clean = invert_pixel(&dm.forward(&truth), &dm, &vec![1.0; y.len()], &cfg).unwrap();
        let clean_err = clean.epoch_phase.iter().zip(&truth).fold(0.0f64, |a, (x, t)| a.max((x - t).abs()));
        let tol = 3.0 * clean_err.max(1e-10);
        for (x, t) in inv.epoch_phase.iter().zip(&truth) {
            assert!((x - t).abs() <= tol, "epoch error {} > {tol}", (x - t).abs());
        }
        let mut sorted = inv.weights.clone();
        sorted.sort_by(f64::total_cmp);
        let median = sorted[sorted.len() / 2];
        assert!(inv.weights[bad] < 0.1 * median, "outlier weight {}", inv.weights[bad]);
    }
}
