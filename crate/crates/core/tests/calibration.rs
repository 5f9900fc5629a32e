use chrono::{Days, NaiveDate};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use insar_ts::geomodel::ViewGeometry;
use insar_ts::georef::{calibrate_to_gnss, field_stats, stats_of, subtract_gia, GiaGrid, GnssTie};
use insar_ts::tsinvert::{DisplacementProduct, ProductPixel};

const INCIDENCE: f64 = 38.9;

fn product(rng: &mut ChaCha8Rng, n: usize) -> DisplacementProduct {
    let t0 = NaiveDate::from_ymd_opt(2017, 1, 1).unwrap();
    let epochs: Vec<NaiveDate> = (0..6u64).map(|k| t0 + Days::new(60 * k)).collect();
    let pixels = (0..n)
        .map(|id| {
            let rate = rng.random_range(-25.0..9.0);
            ProductPixel {
                id,
                lon: -74.05 + rng.random_range(0.0..0.2),
                lat: 40.60 + rng.random_range(0.0..0.2),
                incidence_deg: INCIDENCE,
                rate_mm_yr: rate,
                std_mm_yr: rng.random_range(0.05..0.5),
                displacement_cm: (0..6).map(|k| rate * 0.1 * 60.0 * k as f64 / 365.25).collect(),
                sigma_cm: vec![0.01; 6],
                flag: None,
            }
        })
        .collect();
    DisplacementProduct { epochs, pixels }
}

fn geometry() -> ViewGeometry {
    ViewGeometry::new(INCIDENCE, 348.0).unwrap()
}

#[test]
fn tie_pixel_matches_projected_gnss_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(38);
    for _ in 0..50 {
        let mut p = product(&mut rng, 300);
        let tie_pixel = rng.random_range(0..300);
        let (lon, lat) = (p.pixels[tie_pixel].lon, p.pixels[tie_pixel].lat);
        let gnss_rate = rng.random_range(-5.0..5.0);
        let tie = GnssTie::new("TIE1", lon, lat, gnss_rate, 0.3).unwrap();
        // A radius small enough to hold the tie pixel alone.
        calibrate_to_gnss(&mut p, &tie, &geometry(), 1e-3).unwrap();
        let expected = INCIDENCE.to_radians().cos() * gnss_rate;
        assert!((p.pixels[tie_pixel].rate_mm_yr - expected).abs() < 1e-9);
    }
}

#[test]
fn uniform_gia_shifts_every_rate_by_its_projection() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for value in [-2.0, 0.0, 0.75, 3.3] {
        let mut p = product(&mut rng, 200);
        let before = p.clone();
        let grid = GiaGrid::uniform(-74.1, 40.55, -73.8, 40.85, 7, 5, value).unwrap();
        subtract_gia(&mut p, &grid, &geometry()).unwrap();
        let shift = -INCIDENCE.to_radians().cos() * value;
        for (a, b) in before.pixels.iter().zip(&p.pixels) {
            assert!((b.rate_mm_yr - a.rate_mm_yr - shift).abs() < 1e-12);
            assert_eq!(a.std_mm_yr, b.std_mm_yr);
        }
    }
    let mut p = product(&mut rng, 10);
    let grid = GiaGrid::uniform(-74.1, 40.55, -73.8, 40.85, 2, 2, -2.0).unwrap();
    let before = p.clone();
    subtract_gia(&mut p, &grid, &geometry()).unwrap();
    assert!((p.pixels[0].rate_mm_yr - before.pixels[0].rate_mm_yr - 1.55648).abs() < 1e-5);
}

#[test]
fn median_convention() {
    assert_eq!(stats_of(&[-3.0, -1.5, 0.0]).unwrap().median, -1.5);
    assert_eq!(stats_of(&[4.0, -1.0, 2.0, 0.5]).unwrap().median, 0.5);
    let one = stats_of(&[-7.25]).unwrap();
    assert_eq!((one.median, one.min, one.max), (-7.25, -7.25, -7.25));
}

proptest! {
    #[test]
    fn calibration_preserves_pairwise_differences(seed in any::<u64>(), gnss in -10.0f64..10.0, radius in 200.0f64..20_000.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = product(&mut rng, 120);
        let before = p.clone();
        let tie = GnssTie::new("TIE1", -73.95, 40.70, gnss, 0.3).unwrap();
        if calibrate_to_gnss(&mut p, &tie, &geometry(), radius).is_ok() {
            let worst = (0..120).flat_map(|i| (0..120).map(move |j| (i, j))).fold(0.0f64, |w, (i, j)| {
                let d0 = before.pixels[i].rate_mm_yr - before.pixels[j].rate_mm_yr;
                let d1 = p.pixels[i].rate_mm_yr - p.pixels[j].rate_mm_yr;
                w.max((d0 - d1).abs())
            });
            prop_assert!(worst < 1e-12, "worst change {}", worst);
        }
    }

    #[test]
    fn gia_never_touches_sigmas(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut p = product(&mut rng, 50);
        let values: Vec<f64> = (0..35).map(|_| rng.random_range(-3.0..3.0)).collect();
        let grid = GiaGrid::new(-74.1, 40.55, 0.05, 0.075, 7, 5, values).unwrap();
        let before = p.clone();
        subtract_gia(&mut p, &grid, &geometry()).unwrap();
        for (a, b) in before.pixels.iter().zip(&p.pixels) {
            prop_assert_eq!(a.std_mm_yr, b.std_mm_yr);
            prop_assert_eq!(&a.sigma_cm, &b.sigma_cm);
        }
    }

    #[test]
    fn cdf_is_monotone_and_closes_at_one(rates in prop::collection::vec(-30.0f64..10.0, 1..300)) {
        let mut rng = ChaCha8Rng::seed_from_u64(rates.len() as u64);
        let mut p = product(&mut rng, rates.len());
        for (px, r) in p.pixels.iter_mut().zip(&rates) {
            px.rate_mm_yr = *r;
        }
        let s = field_stats(&p).unwrap();
        prop_assert!(s.cdf.windows(2).all(|w| w[0].0 < w[1].0 && w[0].1 <= w[1].1));
        prop_assert_eq!(s.cdf.last().unwrap().1, 1.0);
        prop_assert_eq!(s.count, rates.len());
    }
}
