use std::fs;
use std::path::{Path, PathBuf};

use insar_ts::pipeline::{run_pipeline, PipelineConfig, PipelineOutcome, RunOptions, VELOCITY_CSV, VELOCITY_NO_GIA_CSV};
use insar_ts::product::read_csv;
use insar_ts::synthstack::{Feature, SceneConfig};

/// 40 × 40 pixels, both deformation features scaled into the smaller grid.
fn small_scene() -> SceneConfig {
    let mut s = SceneConfig::default();
    s.seed = 4242;
    s.grid.width = 40;
    s.grid.height = 40;
    s.deformation.features = vec![
        Feature {
            x: 18.0,
            y: 20.0,
            radius_px: 12.0,
            peak_mm_yr: -25.7,
        },
        Feature {
            x: 33.0,
            y: 7.0,
            radius_px: 5.0,
            peak_mm_yr: 8.7,
        },
    ];
    s.topography.hills = 3;
    s.gnss.x = 5.0;
    s.gnss.y = 35.0;
    s
}

fn run(scene: &SceneConfig, dir: &Path) -> PipelineOutcome {
    let scene_path = dir.join("scene.toml");
    fs::create_dir_all(dir).unwrap();
    fs::write(&scene_path, scene.to_toml()).unwrap();
    let mut cfg = PipelineConfig::default();
    cfg.input.scene = Some(scene_path);
    cfg.output = dir.join("out");
    run_pipeline(&cfg, RunOptions::default()).unwrap()
}

fn golden(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(name)
}

#[test]
fn csv_matches_golden_file() {
    let dir = tempfile::tempdir().unwrap();
    run(&small_scene(), dir.path());
    for name in [VELOCITY_CSV, VELOCITY_NO_GIA_CSV] {
        let produced = fs::read(dir.path().join("out").join(name)).unwrap();
        let path = golden(&format!("small_scene_{name}"));
        if std::env::var_os("INSAR_TS_BLESS").is_some() {
            fs::create_dir_all(path.parent().unwrap()).unwrap();
            fs::write(&path, &produced).unwrap();
        }
        let expected = fs::read(&path).unwrap_or_else(|e| panic!("{}: {e}; set INSAR_TS_BLESS=1 to create it", path.display()));
        assert!(produced == expected, "{name} differs from {}", path.display());
    }
}

#[test]
fn seeded_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(&small_scene(), a.path());
    run(&small_scene(), b.path());
    for name in [VELOCITY_CSV, VELOCITY_NO_GIA_CSV, "timeseries.txt", "stats.json", "corrections.txt", "product.json"] {
        let x = fs::read(a.path().join("out").join(name)).unwrap();
        let y = fs::read(b.path().join("out").join(name)).unwrap();
        assert!(x == y, "{name} differs between runs");
    }
}

#[test]
fn csv_rows_follow_the_elite_set() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&small_scene(), dir.path());
    let rows = read_csv(&dir.path().join("out").join(VELOCITY_CSV)).unwrap();
    assert_eq!(rows.len(), out.csv_rows);
    assert_eq!(rows.len(), out.elite.len());
    let text = fs::read_to_string(dir.path().join("out").join(VELOCITY_CSV)).unwrap();
    for line in text.lines() {
        assert_eq!(line.split(',').count(), 5);
    }
    assert!(text.ends_with('\n') && !text.contains('\r'));
}

#[test]
fn stage_reports_count_down() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&small_scene(), dir.path());
    assert!(out.reports.len() >= 8);
    for (k, r) in out.reports.iter().enumerate() {
        assert!(r.pixels_out <= r.pixels_in, "{} grows pixels", r.stage);
        assert!(r.pairs_out <= r.pairs_in, "{} grows pairs", r.stage);
        let file = dir.path().join("out/reports").join(format!("{:02}_{}.json", k + 1, r.stage));
        let on_disk: serde_json::Value = serde_json::from_str(&fs::read_to_string(&file).unwrap()).unwrap();
        assert_eq!(on_disk["pixels_out"], r.pixels_out);
    }
    for w in out.reports.windows(2) {
        assert!(w[1].pixels_in <= w[0].pixels_out, "{} after {}", w[1].stage, w[0].stage);
    }
}

#[test]
fn null_scene_gives_zero_rates() {
    let mut scene = SceneConfig::noiseless();
    scene.grid.width = 30;
    scene.grid.height = 30;
    scene.deformation.features.clear();
    scene.deformation.gia_vertical_mm_yr = 0.0;
    scene.topography.hills = 0;
    scene.noise.coherent_fraction = 1.0;
    scene.gnss.x = 10.0;
    scene.gnss.y = 10.0;
    let dir = tempfile::tempdir().unwrap();
    let out = run(&scene, dir.path());
    assert_eq!(out.elite.len(), 900);
    let text = fs::read_to_string(dir.path().join("out").join(VELOCITY_CSV)).unwrap();
    for line in text.lines() {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols[3], "0.000000", "{line}");
    }
}

#[test]
fn noiseless_scene_recovers_truth() {
    let mut scene = small_scene();
    scene.noise.sigma_rad = 0.0;
    scene.nuisance.atmo_sigma_rad_per_m = 0.0;
    scene.nuisance.ramp_sigma_rad_per_px = 0.0;
    scene.nuisance.ramp_offset_sigma_rad = 0.0;
    let dir = tempfile::tempdir().unwrap();
    let out = run(&scene, dir.path());
    let truth = out.truth.as_ref().unwrap();
    let worst = out
        .product_no_gia
        .valid_pixels()
        .map(|p| (p.rate_mm_yr - truth.velocity_mm_yr[p.id]).abs())
        .fold(0.0f64, f64::max);
    assert!(worst < 1e-6, "worst error {worst}");
}
