//! Acceptance criteria on synthetic data, one PASS/FAIL line each.
//!
//! Built without the libtest harness so the table is always printed:
//! `cargo test -p insar-ts --test acceptance`.

use std::f64::consts::{PI, TAU};
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use chrono::{Days, NaiveDate};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use insar_ts::atmorb::{estimate_ramp, estimate_topo_delay, RampOptions};
use insar_ts::geomodel::{RadarConstants, ViewGeometry, SENTINEL1_WAVELENGTH_M};
use insar_ts::georef::{calibrate_to_gnss, stats_of, subtract_gia, GiaGrid, GnssTie};
use insar_ts::mcfunwrap::{compute_residues, edge_costs, solve_mcf, triangulate, unwrap_phase, CostModel, TriNetwork};
use insar_ts::pairnet::{design_matrix, select_pairs, AcquisitionCatalog};
use insar_ts::pipeline::{run_pipeline, PipelineConfig, PipelineOutcome, RunOptions, VELOCITY_CSV};
use insar_ts::synthstack::{wrap, SceneConfig};
use insar_ts::tsinvert::{fit_network_velocity, invert_pixel, DisplacementProduct, InversionConfig, ProductPixel};

struct Outcome {
    id: &'static str,
    title: &'static str,
    checks: Vec<(String, bool)>,
    elapsed: Duration,
    limit: Option<Duration>,
}

impl Outcome {
    fn passed(&self) -> bool {
        self.checks.iter().all(|(_, ok)| *ok) && self.limit.is_none_or(|l| self.elapsed < l)
    }

    fn line(&self) -> String {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        let limit = self.limit.map_or(String::new(), |l| format!(" (limit {:.0?})", l));
        let details: Vec<String> =
            self.checks.iter().map(|(d, ok)| if *ok { d.clone() } else { format!("{d} [failed]") }).collect();
        format!("{verdict} {} {}: {}; {:.2?}{limit}", self.id, self.title, details.join("; "), self.elapsed)
    }
}

fn timed(
    id: &'static str,
    title: &'static str,
    limit: Option<Duration>,
    body: impl FnOnce() -> Vec<(String, bool)>,
) -> Outcome {
    let start = Instant::now();
    let checks = body();
    Outcome {
        id,
        title,
        checks,
        elapsed: start.elapsed(),
        limit,
    }
}

fn check(ok: bool, detail: String) -> (String, bool) {
    (detail, ok)
}

// Pair selection.

fn brute_force_pairs(cat: &AcquisitionCatalog, perp: f64, temp: f64) -> Vec<(usize, usize)> {
    let a = cat.acquisitions();
    let mut out = Vec::new();
    for i in 0..a.len() {
        for j in i + 1..a.len() {
            if ((a[j].date - a[i].date).num_days() as f64) <= temp && (a[j].perp_baseline_m - a[i].perp_baseline_m).abs() <= perp {
                out.push((i, j));
            }
        }
    }
    out
}

fn pair_selection() -> Vec<(String, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let t0 = NaiveDate::from_ymd_opt(2014, 10, 3).unwrap();
    let mut mismatches = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=200);
        let mut day = 0;
        let dates: Vec<NaiveDate> = (0..n)
            .map(|_| {
                day += rng.random_range(1..40);
                t0 + Days::new(day)
            })
            .collect();
        let perp: Vec<f64> = (0..n).map(|_| rng.random_range(-250.0..250.0)).collect();
        let cat = AcquisitionCatalog::from_parts(&dates, &perp).unwrap();
        if select_pairs(&cat, 150.0, 400.0).unwrap().pairs() != brute_force_pairs(&cat, 150.0, 400.0).as_slice() {
            mismatches += 1;
        }
    }
    let dense: Vec<NaiveDate> = (0..183).map(|k| t0 + Days::new(12 * k)).collect();
    let cat = AcquisitionCatalog::from_parts(&dense, &[0.0; 183]).unwrap();
    let count = select_pairs(&cat, 150.0, 400.0).unwrap().len();
    let oracle = brute_force_pairs(&cat, 150.0, 400.0).len();
    vec![
        check(mismatches == 0, format!("{mismatches} of 1000 random catalogs differ from the double loop")),
        check(count == 5478 && oracle == 5478, format!("183 dates every 12 days give {count} pairs (oracle {oracle})")),
    ]
}

// Unwrapping.

fn exhaustive_objective(net: &TriNetwork, residues: &[i32], costs: &[f64]) -> Option<f64> {
    let m = net.edges().len();
    let n_t = net.triangles().len();
    let mut best: Option<f64> = None;
    let mut k = vec![-2i32; m];
    // Odometer over {-2..2}^m; networks here have at most 9 edges.
    loop {
        let feasible = (0..n_t).all(|t| {
            net.triangle_edges(t).iter().map(|&(e, s)| i32::from(s) * k[e]).sum::<i32>() + residues[t] == 0
        });
        if feasible {
            let cost: f64 = k.iter().zip(costs).map(|(v, c)| c * f64::from(v.abs())).sum();
            best = Some(best.map_or(cost, |b| b.min(cost)));
        }
        let mut pos = 0;
        loop {
            if pos == m {
                return best;
            }
            if k[pos] < 2 {
                k[pos] += 1;
                break;
            }
            k[pos] = -2;
            pos += 1;
        }
    }
}

fn unwrapping() -> Vec<(String, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_field = 0.0f64;
    for _ in 0..20 {
        let pts: Vec<[f64; 2]> = (0..400).map(|_| [rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)]).collect();
        let net = triangulate(&pts).unwrap();
        let longest = (0..net.edges().len()).map(|e| net.edge_length(e)).fold(0.0, f64::max);
        let g = 0.95 * PI / longest / 2f64.sqrt();
        let (gx, gy) = (g * rng.random_range(-1.0..1.0), g * rng.random_range(-1.0..1.0));
        let truth: Vec<f64> = pts.iter().map(|p| 7.0 + gx * p[0] + gy * p[1]).collect();
        let wrapped: Vec<f64> = truth.iter().map(|&v| wrap(v)).collect();
        let out = unwrap_phase(&net, &wrapped, &edge_costs(&net, CostModel::InverseLength), 0).unwrap();
        let shift = out.phase[0] - truth[0];
        let cycles = shift / TAU;
        worst_field = worst_field.max((cycles - cycles.round()).abs() * TAU);
        for (u, t) in out.phase.iter().zip(&truth) {
            worst_field = worst_field.max((u - t - shift).abs());
        }
    }

    let mut compared = 0;
    let mut disagreements = 0;
    while compared < 500 {
        let n = rng.random_range(3..=6);
        let pts: Vec<[f64; 2]> = (0..n).map(|_| [rng.random_range(0.0..10.0), rng.random_range(0.0..10.0)]).collect();
        let Ok(net) = triangulate(&pts) else { continue };
        if net.triangles().len() > 8 || net.edges().len() > 9 {
            continue;
        }
        let phase: Vec<f64> = (0..n).map(|_| rng.random_range(-PI..PI)).collect();
        let residues = compute_residues(&net, &phase).unwrap();
        let costs: Vec<f64> = (0..net.edges().len()).map(|_| rng.random_range(0.1..3.0)).collect();
        let flow = solve_mcf(&net, &residues, &costs).unwrap();
        let oracle = exhaustive_objective(&net, &residues.residues, &costs).unwrap();
        if (flow.objective - oracle).abs() > 1e-9 {
            disagreements += 1;
        }
        compared += 1;
    }
    vec![
        check(worst_field < 1e-9, format!("residue-free fields recovered to {worst_field:.1e} rad up to 2πk")),
        check(disagreements == 0, format!("{disagreements} of {compared} small networks differ from enumeration")),
    ]
}

// Corrections.

fn corrections() -> Vec<(String, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pts: Vec<[f64; 2]> = (0..1500).map(|_| [rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)]).collect();
    let net = triangulate(&pts).unwrap();
    let elevation: Vec<f64> = pts
        .iter()
        .map(|p| 5.0 + 60.0 * (-((p[0] - 25.0).powi(2) + (p[1] - 40.0).powi(2)) / 300.0).exp())
        .collect();
    let phase: Vec<f64> = elevation.iter().map(|e| 0.05 * e).collect();
    let topo = estimate_topo_delay(&phase, &elevation, &net, 4).unwrap().aggregate_coeff;
    let topo_err = (topo - 0.05).abs() / 0.05;

    let mut worst_clean = 0.0f64;
    let mut worst_dirty = 0.0f64;
    for _ in 0..100 {
        let coords: Vec<[f64; 2]> = (0..400).map(|_| [rng.random_range(0.0..100.0), rng.random_range(0.0..100.0)]).collect();
        let c = [rng.random_range(-3.0..3.0), rng.random_range(-0.05..0.05), rng.random_range(-0.05..0.05)];
        let clean: Vec<f64> = coords.iter().map(|p| c[0] + c[1] * p[0] + c[2] * p[1]).collect();
        let dirty: Vec<f64> = clean
            .iter()
            .enumerate()
            .map(|(k, v)| if k % 5 == 0 { v + if rng.random_bool(0.5) { 10.0 } else { -10.0 } } else { *v })
            .collect();
        let err = |phase: &[f64], robust: bool| {
            let r = estimate_ramp(phase, &coords, RampOptions { robust, cross_term: false }).unwrap();
            [r.a0 - c[0], r.a1 - c[1], r.a2 - c[2]].iter().fold(0.0f64, |a, e| a.max(e.abs()))
        };
        worst_clean = worst_clean.max(err(&clean, false));
        worst_dirty = worst_dirty.max(err(&dirty, true));
    }
    vec![
        check(topo_err < 0.01, format!("topo coefficient {topo:.8} rad/m ({:.1e} relative)", topo_err)),
        check(worst_clean < 1e-9, format!("noiseless ramp error {worst_clean:.1e}")),
        check(worst_dirty < 1e-8, format!("ramp error with 20% outliers {worst_dirty:.1e} over 100 trials")),
    ]
}

// Inversion.

fn scene_config_at(scene: &SceneConfig, dir: &Path) -> PipelineConfig {
    fs::create_dir_all(dir).unwrap();
    let path = dir.join("scene.toml");
    fs::write(&path, scene.to_toml()).unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.input.scene = Some(path);
    cfg.output = dir.join("out");
    cfg
}

fn velocity_errors(out: &PipelineOutcome) -> Vec<f64> {
    let truth = out.truth.as_ref().unwrap();
    out.product_no_gia.valid_pixels().map(|p| p.rate_mm_yr - truth.velocity_mm_yr[p.id]).collect()
}

fn sigma_monte_carlo() -> (f64, f64) {
    let catalog = SceneConfig::default().build_catalog().unwrap();
    let radar = RadarConstants::new(SENTINEL1_WAVELENGTH_M).unwrap();
    let pairs = select_pairs(&catalog, 150.0, 400.0).unwrap();
    let dm = design_matrix(&pairs, catalog.len(), 0).unwrap();
    let years = catalog.decimal_years();
    let cm_per_rad = radar.phase_to_displacement_cm(1.0);
    let rate_rad = -2.57 / cm_per_rad;
    let noise = Normal::new(0.0, 0.5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let (mut rates, mut sigmas) = (Vec::new(), Vec::new());
    for _ in 0..200 {
        let y: Vec<f64> =
            pairs.pairs().iter().map(|&(i, j)| rate_rad * (years[j] - years[i]) + noise.sample(&mut rng)).collect();
        let inv = invert_pixel(&y, &dm, &vec![1.0; y.len()], &InversionConfig::default()).unwrap();
        let v = fit_network_velocity(&y, &dm, &inv, &years, cm_per_rad).unwrap();
        rates.push(v.rate_mm_yr);
        sigmas.push(v.std_mm_yr);
    }
    let mean = rates.iter().sum::<f64>() / 200.0;
    let spread = (rates.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / 199.0).sqrt();
    (sigmas.iter().sum::<f64>() / 200.0, spread)
}

fn inversion(noisy: &PipelineOutcome, root: &Path) -> Vec<(String, bool)> {
    let clean = run_pipeline(&scene_config_at(&SceneConfig::noiseless(), &root.join("noiseless")), RunOptions::default()).unwrap();
    let worst_clean = velocity_errors(&clean).iter().fold(0.0f64, |a, e| a.max(e.abs()));
    let errors = velocity_errors(noisy);
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt();
    let (reported, spread) = sigma_monte_carlo();
    let ratio = reported / spread;
    vec![
        check(worst_clean < 1e-6, format!("noiseless worst error {worst_clean:.1e} mm/yr")),
        check(rmse <= 0.5, format!("noisy RMSE {rmse:.3} mm/yr over {} elite pixels", errors.len())),
        check((2500..=3500).contains(&noisy.elite.len()), format!("{} elite pixels", noisy.elite.len())),
        check((0.5..=2.0).contains(&ratio), format!("reported σ {reported:.4} vs spread {spread:.4} mm/yr (ratio {ratio:.2})")),
    ]
}

// Calibration and GIA.

fn calibration() -> Vec<(String, bool)> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let geom = ViewGeometry::new(38.9, 347.0).unwrap();
    let t0 = NaiveDate::from_ymd_opt(2017, 1, 1).unwrap();
    let pixels: Vec<ProductPixel> = (0..500)
        .map(|id| ProductPixel {
            id,
            lon: -74.0 + rng.random_range(0.0..0.05),
            lat: 40.7 + rng.random_range(0.0..0.05),
            incidence_deg: 38.9,
            rate_mm_yr: rng.random_range(-25.0..9.0),
            std_mm_yr: 0.2,
            displacement_cm: vec![0.0, 0.1],
            sigma_cm: vec![0.0, 0.01],
            flag: None,
        })
        .collect();
    let base = DisplacementProduct {
        epochs: vec![t0, t0 + Days::new(365)],
        pixels,
    };

    let mut p = base.clone();
    let tie = GnssTie::new("TIE1", p.pixels[17].lon, p.pixels[17].lat, -1.7, 0.3).unwrap();
    calibrate_to_gnss(&mut p, &tie, &geom, 1e-3).unwrap();
    let tie_err = (p.pixels[17].rate_mm_yr - 38.9f64.to_radians().cos() * -1.7).abs();
    let mut pair_change = 0.0f64;
    for i in 0..p.pixels.len() {
        for j in 0..p.pixels.len() {
            let before = base.pixels[i].rate_mm_yr - base.pixels[j].rate_mm_yr;
            let after = p.pixels[i].rate_mm_yr - p.pixels[j].rate_mm_yr;
            pair_change = pair_change.max((before - after).abs());
        }
    }

    let mut g = base.clone();
    let grid = GiaGrid::uniform(-74.1, 40.6, -73.9, 40.8, 5, 5, -2.0).unwrap();
    subtract_gia(&mut g, &grid, &geom).unwrap();
    let gia_err = g
        .pixels
        .iter()
        .zip(&base.pixels)
        .map(|(a, b)| (a.rate_mm_yr - b.rate_mm_yr - 2.0 * 38.9f64.to_radians().cos()).abs())
        .fold(0.0f64, f64::max);
    vec![
        check(tie_err < 1e-9, format!("tie pixel error {tie_err:.1e} mm/yr")),
        check(pair_change < 1e-12, format!("pairwise differences change by {pair_change:.1e}")),
        check(gia_err < 1e-12, format!("uniform -2 mm/yr grid shifts by cos(i)·2 within {gia_err:.1e}")),
    ]
}

// Statistics and product.

fn stats_and_product(noisy: &PipelineOutcome, noisy_dir: &Path, root: &Path) -> Vec<(String, bool)> {
    let median = stats_of(&[-3.0, -1.5, 0.0]).unwrap().median;
    let rates = noisy.product_no_gia.rates_mm_yr();
    let min = rates.iter().copied().fold(f64::INFINITY, f64::min);
    let max = rates.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let golden_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden");
    let golden = fs::read(golden_dir.join("small_scene_velocity.csv")).unwrap();
    let small = small_scene();
    let produced = {
        let dir = root.join("golden");
        run_pipeline(&scene_config_at(&small, &dir), RunOptions::default()).unwrap();
        fs::read(dir.join("out").join(VELOCITY_CSV)).unwrap()
    };
    let five_columns = String::from_utf8(produced.clone()).unwrap().lines().all(|l| l.split(',').count() == 5);

    let again = root.join("again");
    run_pipeline(&scene_config_at(&SceneConfig::default(), &again), RunOptions::default()).unwrap();
    let identical = fs::read(noisy_dir.join(VELOCITY_CSV)).unwrap() == fs::read(again.join("out").join(VELOCITY_CSV)).unwrap();
    vec![
        check(median == -1.5, format!("median of {{-3, -1.5, 0}} is {median}")),
        check((min + 25.7).abs() <= 0.5, format!("min {min:.3} mm/yr against -25.7")),
        check((max - 8.7).abs() <= 0.5, format!("max {max:.3} mm/yr against 8.7")),
        check(produced == golden && five_columns, format!("golden CSV byte-exact: {}", produced == golden)),
        check(identical, format!("two seeded runs byte-identical: {identical}")),
    ]
}

/// Mirrors the small scene of the pipeline tests.
fn small_scene() -> SceneConfig {
    let mut s = SceneConfig::default();
    s.seed = 4242;
    s.grid.width = 40;
    s.grid.height = 40;
    s.deformation.features[0].x = 18.0;
    s.deformation.features[0].y = 20.0;
    s.deformation.features[0].radius_px = 12.0;
    s.deformation.features[1].x = 33.0;
    s.deformation.features[1].y = 7.0;
    s.deformation.features[1].radius_px = 5.0;
    s.topography.hills = 3;
    s.gnss.x = 5.0;
    s.gnss.y = 35.0;
    s
}

fn main() {
    let root = tempfile::tempdir().unwrap();
    let mut outcomes = vec![
        timed("C1", "pair selection", Some(Duration::from_secs(1)), pair_selection),
        timed("C2", "unwrapping", Some(Duration::from_secs(30)), unwrapping),
        timed("C3", "corrections", None, corrections),
    ];

    let start = Instant::now();
    let noisy_cfg = scene_config_at(&SceneConfig::default(), &root.path().join("default"));
    let noisy = run_pipeline(&noisy_cfg, RunOptions::default()).unwrap();
    let run_time = start.elapsed();
    let mut c4 = timed("C4", "inversion", Some(Duration::from_secs(120)), || inversion(&noisy, root.path()));
    c4.elapsed += run_time;
    outcomes.push(c4);
    outcomes.push(timed("C5", "calibration and GIA", None, calibration));
    outcomes.push(timed("C6", "statistics and product", None, || {
        stats_and_product(&noisy, &noisy_cfg.output, root.path())
    }));

    println!();
    for o in &outcomes {
        println!("{}", o.line());
    }
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.passed()).map(|o| o.id).collect();
    if !failed.is_empty() {
        eprintln!("failed criteria: {failed:?}");
        std::process::exit(1);
    }
}
