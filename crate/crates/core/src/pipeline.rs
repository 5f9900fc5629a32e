//! End-to-end orchestration: configuration, stage sequencing, reports and
//! product files.
//!
//! Stages run in a fixed order: pairs, stack, elite, unwrap, atmosphere,
//! orbit, reference, invert, calibrate, gia, stats, product. Each stage
//! writes `reports/NN_<stage>.json` with its pair and pixel counts.

use std::fmt;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::atmorb::{correct_interferogram, correction_report, CorrectionConfig};
use crate::elitepix::{assess_quality, select_elite, EliteConfig, PixelQuality};
use crate::error::{Error, Result};
use crate::geomodel::{RadarConstants, ViewGeometry, SENTINEL1_WAVELENGTH_M};
use crate::georef::{calibrate_to_gnss, field_stats, haversine_m, subtract_gia, FieldStats, GiaGrid, GnssTie, DEFAULT_TIE_RADIUS_M};
use crate::mcfunwrap::{edge_costs, triangulate, unwrap_phase, CostModel};
use crate::pairnet::{design_matrix, largest_component, select_pairs, AcquisitionCatalog, PairSet};
use crate::product::{write_atomic, write_csv};
use crate::synthstack::{
    generate_stack, read_pixels, read_stack, write_pixels, write_stack, InterferogramStack, SceneConfig, ScenePixel,
    SceneTruth, Wrapping,
};
use crate::tsinvert::{invert_stack, DisplacementProduct, InversionConfig, Reweighting};

pub const VELOCITY_CSV: &str = "velocity.csv";
pub const VELOCITY_NO_GIA_CSV: &str = "velocity_no_gia_correction.csv";

/// Where the interferograms come from.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    /// Scene description to simulate. Used when no stack is given; without
    /// either, the built-in default scene is simulated.
    pub scene: Option<PathBuf>,
    pub catalog: Option<PathBuf>,
    pub stack: Option<PathBuf>,
    pub pixels: Option<PathBuf>,
    pub gnss: Option<PathBuf>,
    pub gia: Option<PathBuf>,
    /// Viewing geometry of a loaded stack.
    pub geometry: Option<GeometryInput>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryInput {
    pub incidence_deg: f64,
    pub heading_deg: f64,
    #[serde(default = "default_wavelength")]
    pub wavelength_m: f64,
}

fn default_wavelength() -> f64 {
    SENTINEL1_WAVELENGTH_M
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub perp_max_m: f64,
    pub temp_max_days: f64,
    pub coherence: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            perp_max_m: 150.0,
            temp_max_days: 400.0,
            coherence: 0.7,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct UnwrapSettings {
    pub costs: CostModel,
    /// Multiply edge costs by the mean temporal coherence of their ends.
    pub quality_weighted: bool,
    /// Write `triangulation.txt` with the first interferogram's residues.
    pub debug_dump: bool,
}

impl Default for UnwrapSettings {
    fn default() -> Self {
        UnwrapSettings {
            costs: CostModel::InverseLength,
            quality_weighted: false,
            debug_dump: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InversionSettings {
    pub reweighting: Reweighting,
}

impl Default for InversionSettings {
    fn default() -> Self {
        InversionSettings {
            reweighting: Reweighting::Tukey,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CalibrationSettings {
    pub tie_radius_m: f64,
    /// Remove the GIA model from the primary product.
    pub gia: bool,
}

impl Default for CalibrationSettings {
    fn default() -> Self {
        CalibrationSettings {
            tie_radius_m: DEFAULT_TIE_RADIUS_M,
            gia: true,
        }
    }
}

/// Full run configuration, read from TOML. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Overrides the scene seed when simulating.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub input: InputConfig,
    #[serde(default)]
    pub thresholds: Thresholds,
    #[serde(default)]
    pub unwrap: UnwrapSettings,
    #[serde(default)]
    pub corrections: CorrectionConfig,
    #[serde(default)]
    pub inversion: InversionSettings,
    #[serde(default)]
    pub calibration: CalibrationSettings,
}

fn default_output() -> PathBuf {
    PathBuf::from("insar-ts-out")
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: None,
            output: default_output(),
            input: InputConfig::default(),
            thresholds: Thresholds::default(),
            unwrap: UnwrapSettings::default(),
            corrections: CorrectionConfig::default(),
            inversion: InversionSettings::default(),
            calibration: CalibrationSettings::default(),
        }
    }
}

fn resolve(base: &Path, p: &mut Option<PathBuf>) {
    if let Some(path) = p {
        if path.is_relative() {
            *path = base.join(&*path);
        }
    }
}

impl PipelineConfig {
    /// Parses TOML; relative paths are taken relative to `base`.
    pub fn parse(text: &str, origin: &Path, base: &Path) -> Result<Self> {
        let mut cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::parse(origin, e.to_string()))?;
        let i = &mut cfg.input;
        for p in [&mut i.scene, &mut i.catalog, &mut i.stack, &mut i.pixels, &mut i.gnss, &mut i.gia] {
            resolve(base, p);
        }
        if cfg.output.is_relative() && !cfg.output.as_os_str().is_empty() {
            cfg.output = base.join(&cfg.output);
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, path, base)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("pipeline config is always representable as TOML")
    }

    /// True when the input section names a stack rather than a scene.
    pub fn is_stack_mode(&self) -> bool {
        self.input.stack.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.thresholds;
        if !(t.perp_max_m > 0.0 && t.perp_max_m.is_finite()) {
            return Err(Error::invalid("thresholds.perp_max_m", format!("{} must be a positive number", t.perp_max_m)));
        }
        if !(t.temp_max_days > 0.0 && t.temp_max_days.is_finite()) {
            return Err(Error::invalid("thresholds.temp_max_days", format!("{} must be a positive number", t.temp_max_days)));
        }
        if !(0.0..=1.0).contains(&t.coherence) {
            return Err(Error::invalid("thresholds.coherence", format!("{} is outside [0, 1]", t.coherence)));
        }
        if self.output.as_os_str().is_empty() {
            return Err(Error::invalid("output", "path is empty"));
        }
        let i = &self.input;
        let all = [&i.scene, &i.catalog, &i.stack, &i.pixels, &i.gnss, &i.gia];
        if all.iter().any(|p| p.as_ref().is_some_and(|p| p.as_os_str().is_empty())) {
            return Err(Error::invalid("input", "paths must be non-empty"));
        }
        if self.is_stack_mode() {
            if i.scene.is_some() {
                return Err(Error::invalid("input.scene", "give either a scene or a stack, not both"));
            }
            for (name, p) in [("input.catalog", &i.catalog), ("input.pixels", &i.pixels), ("input.gnss", &i.gnss)] {
                if p.is_none() {
                    return Err(Error::invalid(name, "required when input.stack is set"));
                }
            }
            if i.gia.is_none() && self.calibration.gia {
                return Err(Error::invalid("input.gia", "required unless calibration.gia = false"));
            }
            let g = i.geometry.ok_or_else(|| Error::invalid("input.geometry", "required when input.stack is set"))?;
            ViewGeometry::new(g.incidence_deg, g.heading_deg)?;
            RadarConstants::new(g.wavelength_m)?;
        } else if i.catalog.is_some() || i.pixels.is_some() || i.gnss.is_some() || i.gia.is_some() || i.geometry.is_some() {
            return Err(Error::invalid("input.stack", "catalog, pixels, gnss, gia and geometry need a stack"));
        }
        if self.corrections.levels == 0 {
            return Err(Error::invalid("corrections.levels", "must be at least 1"));
        }
        if !(self.calibration.tie_radius_m > 0.0) {
            return Err(Error::invalid("calibration.tie_radius_m", "must be > 0"));
        }
        Ok(())
    }
}

/// Run-time switches that sit outside the config file.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub skip_gia: bool,
}

/// Everything the stages need, from a scene or from files.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub catalog: AcquisitionCatalog,
    /// Wrapped stack; pairs index `catalog`.
    pub stack: InterferogramStack,
    pub pixels: Vec<ScenePixel>,
    pub gnss: GnssTie,
    pub gia: Option<GiaGrid>,
    pub geometry: ViewGeometry,
    pub radar: RadarConstants,
    /// Present when the stack was simulated.
    pub truth: Option<SceneTruth>,
}

/// Scene configuration with the run seed applied.
pub fn scene_config(cfg: &PipelineConfig) -> Result<SceneConfig> {
    let mut scene = match &cfg.input.scene {
        Some(path) => SceneConfig::load(path)?,
        None => SceneConfig::default(),
    };
    if let Some(seed) = cfg.seed {
        scene.seed = seed;
    }
    Ok(scene)
}

/// Simulates the configured scene over the pairs the thresholds select.
pub fn simulate(cfg: &PipelineConfig) -> Result<Inputs> {
    let scene_cfg = scene_config(cfg)?;
    let scene = scene_cfg.build()?;
    let ps = select_pairs(&scene.catalog, cfg.thresholds.perp_max_m, cfg.thresholds.temp_max_days)?;
    let (stack, _) = generate_stack(&scene.truth, &scene.catalog, &ps, Wrapping::Wrapped)?;
    Ok(Inputs {
        catalog: scene.catalog,
        stack,
        pixels: scene.truth.pixels.clone(),
        gnss: scene.gnss,
        gia: Some(scene.gia),
        geometry: scene.truth.geometry,
        radar: scene.truth.radar,
        truth: Some(scene.truth),
    })
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads a stack-mode input set.
pub fn load_inputs(cfg: &PipelineConfig) -> Result<Inputs> {
    let i = &cfg.input;
    let missing = |name: &'static str| Error::invalid(name, "missing from stack-mode input");
    let catalog = AcquisitionCatalog::load(i.catalog.as_deref().ok_or_else(|| missing("input.catalog"))?)?;
    let stack_path = i.stack.as_deref().ok_or_else(|| missing("input.stack"))?;
    let file = std::fs::File::open(stack_path).map_err(|e| Error::io(stack_path, e))?;
    let (stack, _) = read_stack(&mut std::io::BufReader::new(file), stack_path)?;
    let pixels_path = i.pixels.as_deref().ok_or_else(|| missing("input.pixels"))?;
    let pixels = read_pixels(&read_text(pixels_path)?, pixels_path)?;
    let gnss = GnssTie::load(i.gnss.as_deref().ok_or_else(|| missing("input.gnss"))?)?;
    let gia = i.gia.as_deref().map(GiaGrid::load).transpose()?;
    let g = i.geometry.ok_or_else(|| missing("input.geometry"))?;
    if !stack.is_wrapped() {
        return Err(Error::invalid("input.stack", "expected a wrapped stack"));
    }
    if stack.n_pixels() != pixels.len() {
        return Err(Error::DimensionMismatch {
            context: "stack columns vs pixel table",
            expected: pixels.len(),
            actual: stack.n_pixels(),
        });
    }
    if let Some(&(_, j)) = stack.pairs().pairs().iter().find(|&&(_, j)| j >= catalog.len()) {
        return Err(Error::invalid("input.stack", format!("pair refers to epoch {j}, catalog has {}", catalog.len())));
    }
    Ok(Inputs {
        catalog,
        stack,
        pixels,
        gnss,
        gia,
        geometry: ViewGeometry::new(g.incidence_deg, g.heading_deg)?,
        radar: RadarConstants::new(g.wavelength_m)?,
        truth: None,
    })
}

/// Files written by [`write_inputs`].
pub const INPUT_FILES: [&str; 6] = ["catalog.txt", "stack.bin", "pixels.txt", "gnss.txt", "gia.txt", "pipeline.toml"];

/// Writes `inputs` as a stack-mode input set in `dir`, plus a
/// `pipeline.toml` that processes it with `cfg`'s settings. Returns that
/// configuration.
pub fn write_inputs(inputs: &Inputs, cfg: &PipelineConfig, dir: &Path) -> Result<PipelineConfig> {
    write_atomic(&dir.join("catalog.txt"), inputs.catalog.to_text().as_bytes())?;
    let mut bin = Vec::new();
    write_stack(&mut bin, &inputs.stack, None).map_err(|e| Error::io(dir.join("stack.bin"), e))?;
    write_atomic(&dir.join("stack.bin"), &bin)?;
    write_atomic(&dir.join("pixels.txt"), write_pixels(&inputs.pixels).as_bytes())?;
    write_atomic(&dir.join("gnss.txt"), inputs.gnss.to_text().as_bytes())?;
    if let Some(gia) = &inputs.gia {
        write_atomic(&dir.join("gia.txt"), gia.to_text().as_bytes())?;
    }
    if let Some(truth) = &inputs.truth {
        write_atomic(&dir.join("truth.txt"), truth_table(truth).as_bytes())?;
    }
    let mut out = cfg.clone();
    out.seed = None;
    out.output = PathBuf::from("run");
    out.input = InputConfig {
        scene: None,
        catalog: Some("catalog.txt".into()),
        stack: Some("stack.bin".into()),
        pixels: Some("pixels.txt".into()),
        gnss: Some("gnss.txt".into()),
        gia: inputs.gia.as_ref().map(|_| "gia.txt".into()),
        geometry: Some(GeometryInput {
            incidence_deg: inputs.geometry.incidence_deg(),
            heading_deg: inputs.geometry.heading_deg(),
            wavelength_m: inputs.radar.wavelength_m(),
        }),
    };
    if inputs.gia.is_none() {
        out.calibration.gia = false;
    }
    write_atomic(&dir.join("pipeline.toml"), out.to_toml().as_bytes())?;
    Ok(out)
}

/// `# insar-ts truth v1`, then `id,velocity_mm_yr,coherent`.
pub fn truth_table(truth: &SceneTruth) -> String {
    use std::fmt::Write as _;
    let mut out = String::from("# insar-ts truth v1\n");
    for (k, v) in truth.velocity_mm_yr.iter().enumerate() {
        let _ = writeln!(out, "{k},{v},{}", u8::from(!truth.decorrelated[k]));
    }
    out
}

/// Machine-readable summary of one stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub pairs_in: usize,
    pub pairs_out: usize,
    pub pixels_in: usize,
    pub pixels_out: usize,
    pub details: serde_json::Value,
}

/// A failed stage, with a hint on what to change.
#[derive(Debug)]
pub struct StageError {
    pub stage: &'static str,
    pub hint: &'static str,
    pub source: Error,
}

impl StageError {
    /// Whether the failure is due to the inputs or configuration rather
    /// than to processing. Any failure to load the inputs counts.
    pub fn is_validation(&self) -> bool {
        matches!(
            self.source,
            Error::InvalidParameter { .. } | Error::Parse { .. } | Error::EmptyCatalog | Error::DimensionMismatch { .. }
        ) || self.stage == "config"
            || self.stage == "inputs"
    }
}

impl fmt::Display for StageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "stage `{}` failed: {}\nhint: {}", self.stage, self.source, self.hint)
    }
}

impl std::error::Error for StageError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

fn at(stage: &'static str, hint: &'static str) -> impl FnOnce(Error) -> StageError {
    move |source| StageError { stage, hint, source }
}

/// Results of a full run; the same data as the files in the output folder.
#[derive(Debug, Clone)]
pub struct PipelineOutcome {
    pub reports: Vec<StageReport>,
    /// Scene pixel ids of the elite pixels, in stack order.
    pub elite: Vec<usize>,
    pub quality: Vec<PixelQuality>,
    /// Calibrated product without GIA removal.
    pub product_no_gia: DisplacementProduct,
    /// Primary product: GIA removed unless skipped.
    pub product: DisplacementProduct,
    pub stats: FieldStats,
    pub calibration_offset_mm_yr: f64,
    /// Scene pixel id of the reference pixel.
    pub reference_pixel: usize,
    pub csv_rows: usize,
    pub truth: Option<SceneTruth>,
}

struct Reporter<'a> {
    dir: &'a Path,
    reports: Vec<StageReport>,
}

impl Reporter<'_> {
    fn record(&mut self, stage: &'static str, counts: [usize; 4], details: serde_json::Value) -> Result<(), StageError> {
        let report = StageReport {
            stage: stage.to_string(),
            pairs_in: counts[0],
            pairs_out: counts[1],
            pixels_in: counts[2],
            pixels_out: counts[3],
            details,
        };
        let name = format!("{:02}_{stage}.json", self.reports.len() + 1);
        let text = serde_json::to_string_pretty(&report).expect("reports serialise");
        write_atomic(&self.dir.join("reports").join(name), format!("{text}\n").as_bytes())
            .map_err(at(stage, "check that the output folder is writable"))?;
        log::info!("{stage}: pairs {} -> {}, pixels {} -> {}", counts[0], counts[1], counts[2], counts[3]);
        self.reports.push(report);
        Ok(())
    }
}

/// Loads or simulates the inputs, then runs every stage.
pub fn run_pipeline(cfg: &PipelineConfig, opts: RunOptions) -> Result<PipelineOutcome, StageError> {
    cfg.validate().map_err(at("config", "fix the named configuration field"))?;
    let inputs = if cfg.is_stack_mode() {
        load_inputs(cfg).map_err(at("inputs", "check the input file paths and formats (docs/formats.md)"))?
    } else {
        simulate(cfg).map_err(at("inputs", "check the scene configuration"))?
    };
    run_with_inputs(cfg, opts, inputs)
}

/// Runs every stage on already loaded inputs.
pub fn run_with_inputs(cfg: &PipelineConfig, opts: RunOptions, inputs: Inputs) -> Result<PipelineOutcome, StageError> {
    let out_dir = cfg.output.as_path();
    let mut rep = Reporter {
        dir: out_dir,
        reports: Vec::new(),
    };
    let Inputs {
        catalog,
        stack,
        pixels,
        gnss,
        gia,
        geometry,
        radar,
        truth,
    } = inputs;
    let n_pixels = pixels.len();

    // pairs
    let hint = "relax thresholds.perp_max_m / thresholds.temp_max_days";
    let selected = select_pairs(&catalog, cfg.thresholds.perp_max_m, cfg.thresholds.temp_max_days).map_err(at("pairs", hint))?;
    let rows: Vec<usize> = (0..stack.n_pairs())
        .filter(|&r| selected.pairs().binary_search(&stack.pairs().pairs()[r]).is_ok())
        .collect();
    let kept = PairSet::from_pairs(rows.iter().map(|&r| stack.pairs().pairs()[r])).map_err(at("pairs", hint))?;
    let component = largest_component(&kept, catalog.len());
    let final_pairs = kept.restrict(&component);
    let final_rows: Vec<usize> = rows
        .iter()
        .copied()
        .filter(|&r| {
            let (i, j) = stack.pairs().pairs()[r];
            component.binary_search(&i).is_ok() && component.binary_search(&j).is_ok()
        })
        .collect();
    if final_pairs.is_empty() {
        return Err(at("pairs", hint)(Error::invalid("thresholds", "no interferometric pair satisfies the thresholds")));
    }
    let mut final_pairs = final_pairs;
    final_pairs.perp_max_m = cfg.thresholds.perp_max_m;
    final_pairs.temp_max_days = cfg.thresholds.temp_max_days;
    if component.len() < catalog.len() {
        log::warn!("pair network is disconnected; keeping the largest component ({} acquisitions)", component.len());
    }
    let catalog = catalog.subset(&component).map_err(at("pairs", hint))?;
    rep.record(
        "pairs",
        [stack.n_pairs(), final_pairs.len(), n_pixels, n_pixels],
        json!({
            "perp_max_m": cfg.thresholds.perp_max_m,
            "temp_max_days": cfg.thresholds.temp_max_days,
            "epochs_kept": component.len(),
        }),
    )?;

    // stack
    let stack = stack
        .select_pairs(&final_rows, final_pairs.clone())
        .map_err(at("stack", "the stack does not match the catalog"))?;
    rep.record(
        "stack",
        [final_pairs.len(), stack.n_pairs(), n_pixels, stack.n_pixels()],
        json!({ "wrapped": stack.is_wrapped(), "simulated": truth.is_some() }),
    )?;

    // elite
    let elite_cfg = EliteConfig {
        threshold: cfg.thresholds.coherence,
        ..EliteConfig::default()
    };
    let quality = assess_quality(&stack, &catalog, &elite_cfg).map_err(at("elite", "check thresholds.coherence"))?;
    let elite = select_elite(&quality, elite_cfg.threshold);
    if elite.len() < 3 {
        return Err(at("elite", "lower thresholds.coherence")(Error::DegenerateInput(format!(
            "only {} elite pixels selected",
            elite.len()
        ))));
    }
    let stack = stack.select_pixels(&elite);
    let elite_px: Vec<ScenePixel> = elite.iter().map(|&k| pixels[k]).collect();
    let coherence: Vec<f64> = elite.iter().map(|&k| quality[k].temporal_coherence).collect();
    rep.record(
        "elite",
        [stack.n_pairs(), stack.n_pairs(), n_pixels, elite.len()],
        json!({ "threshold": elite_cfg.threshold, "selected": elite.len() }),
    )?;

    // unwrap
    let hint = "elite pixels must not be collinear or duplicated";
    let coords: Vec<[f64; 2]> = elite_px.iter().map(|p| [p.x, p.y]).collect();
    let net = triangulate(&coords).map_err(at("unwrap", hint))?;
    let mut costs = edge_costs(&net, cfg.unwrap.costs);
    if cfg.unwrap.quality_weighted {
        for (c, &(u, v)) in costs.iter_mut().zip(net.edges()) {
            *c *= (0.5 * (coherence[u] + coherence[v])).max(1e-3);
        }
    }
    let reference = elite_px
        .iter()
        .enumerate()
        .map(|(k, p)| (haversine_m(p.lon, p.lat, gnss.lon, gnss.lat), k))
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)))
        .map(|(_, k)| k)
        .expect("at least three elite pixels");
    let unwrapped: Vec<_> = (0..stack.n_pairs())
        .into_par_iter()
        .map(|r| unwrap_phase(&net, &stack.pair_row(r), &costs, reference))
        .collect::<Result<_>>()
        .map_err(at("unwrap", hint))?;
    if cfg.unwrap.debug_dump {
        let residues = crate::mcfunwrap::compute_residues(&net, &stack.pair_row(0)).map_err(at("unwrap", hint))?;
        write_atomic(&out_dir.join("triangulation.txt"), net.debug_dump(Some(&residues)).as_bytes())
            .map_err(at("unwrap", "check that the output folder is writable"))?;
    }
    let residue_total: usize = unwrapped.iter().map(|u| u.residues).sum();
    let phase = DMatrix::from_fn(stack.n_pairs(), stack.n_pixels(), |r, p| unwrapped[r].phase[p]);
    rep.record(
        "unwrap",
        [stack.n_pairs(), stack.n_pairs(), elite.len(), elite.len()],
        json!({
            "triangles": net.triangles().len(),
            "edges": net.edges().len(),
            "residues": residue_total,
            "objective": unwrapped.iter().map(|u| u.objective).sum::<f64>(),
        }),
    )?;

    // atmosphere, orbit
    let elevation: Vec<f64> = elite_px.iter().map(|p| p.elevation_m).collect();
    // Corrections are estimated on the phase minus a preliminary linear
    // deformation model, so a ramp or elevation fit cannot absorb
    // deformation that grows with the pair span.
    let years = catalog.decimal_years();
    let spans: Vec<f64> = stack.pairs().pairs().iter().map(|&(i, j)| years[j] - years[i]).collect();
    let stt: f64 = spans.iter().map(|t| t * t).sum();
    let rates: Vec<f64> = (0..phase.ncols())
        .map(|p| phase.column(p).iter().zip(&spans).map(|(y, t)| y * t).sum::<f64>() / stt)
        .collect();
    let mut work = DMatrix::from_fn(phase.nrows(), phase.ncols(), |r, p| phase[(r, p)] - rates[p] * spans[r]);
    let mut corrected = phase.clone();
    let mut records = Vec::new();
    for (stage, atmo, orbit) in [("atmosphere", true, false), ("orbit", false, true)] {
        let step = CorrectionConfig {
            atmosphere: atmo && cfg.corrections.atmosphere,
            orbit: orbit && cfg.corrections.orbit,
            ..cfg.corrections
        };
        let results: Vec<_> = (0..stack.n_pairs())
            .into_par_iter()
            .map(|r| {
                let row: Vec<f64> = work.row(r).iter().copied().collect();
                correct_interferogram(stack.pairs().pairs()[r], &row, &elevation, &net, &step)
            })
            .collect::<Result<_>>()
            .map_err(at(stage, "disable this correction or check pixel geometry"))?;
        for (r, (row, _)) in results.iter().enumerate() {
            for (p, v) in row.iter().enumerate() {
                corrected[(r, p)] -= work[(r, p)] - v;
                work[(r, p)] = *v;
            }
        }
        let enabled = step.atmosphere || step.orbit;
        let details = if stage == "atmosphere" {
            json!({
                "enabled": enabled,
                "levels": cfg.corrections.levels,
                "unidentifiable": results.iter().filter(|(_, rec)| !rec.atmo_identifiable).count(),
            })
        } else {
            json!({ "enabled": enabled, "robust": cfg.corrections.robust_ramp, "cross_term": cfg.corrections.ramp_cross_term })
        };
        if stage == "atmosphere" {
            records = results.into_iter().map(|(_, rec)| rec).collect();
        } else {
            for (rec, (_, o)) in records.iter_mut().zip(results) {
                rec.ramp = o.ramp;
                rec.rms_after = o.rms_after;
            }
        }
        rep.record(stage, [stack.n_pairs(), stack.n_pairs(), elite.len(), elite.len()], details)?;
    }
    write_atomic(&out_dir.join("corrections.txt"), correction_report(&records).as_bytes())
        .map_err(at("orbit", "check that the output folder is writable"))?;

    // reference
    for r in 0..corrected.nrows() {
        let base = corrected[(r, reference)];
        for p in 0..corrected.ncols() {
            corrected[(r, p)] -= base;
        }
    }
    rep.record(
        "reference",
        [stack.n_pairs(), stack.n_pairs(), elite.len(), elite.len()],
        json!({ "reference_pixel": elite[reference] }),
    )?;

    // invert
    let hint = "the pair network must connect every kept acquisition";
    let unwrapped_stack = stack.with_phase(corrected, false).map_err(at("invert", hint))?;
    let dm = design_matrix(unwrapped_stack.pairs(), catalog.len(), 0).map_err(at("invert", hint))?;
    let inv_cfg = InversionConfig {
        reweighting: cfg.inversion.reweighting,
        ..InversionConfig::default()
    };
    let table: Vec<(usize, ScenePixel)> = elite.iter().copied().zip(elite_px.iter().copied()).collect();
    let mut product =
        invert_stack(&unwrapped_stack, &dm, &catalog.dates(), &table, &radar, &inv_cfg).map_err(at("invert", hint))?;
    let failed = product.pixels.len() - product.valid_count();
    rep.record(
        "invert",
        [stack.n_pairs(), stack.n_pairs(), elite.len(), product.valid_count()],
        json!({ "epochs": catalog.len(), "failed_pixels": failed, "reweighting": cfg.inversion.reweighting }),
    )?;

    // calibrate
    let offset = calibrate_to_gnss(&mut product, &gnss, &geometry, cfg.calibration.tie_radius_m)
        .map_err(at("calibrate", "increase calibration.tie_radius_m or check the station position"))?;
    rep.record(
        "calibrate",
        [stack.n_pairs(), stack.n_pairs(), product.valid_count(), product.valid_count()],
        json!({
            "station": gnss.station_id,
            "offset_mm_yr": offset,
            "station_los_mm_yr": geometry.project_vertical_to_los(gnss.vertical_rate_mm_yr),
        }),
    )?;
    let product_no_gia = product.clone();

    // gia
    let apply_gia = cfg.calibration.gia && !opts.skip_gia;
    if apply_gia {
        let grid = gia
            .as_ref()
            .ok_or_else(|| at("gia", "provide input.gia or pass --skip-gia")(Error::invalid("input.gia", "no GIA grid")))?;
        subtract_gia(&mut product, grid, &geometry).map_err(at("gia", "the GIA grid must cover every pixel"))?;
    }
    rep.record(
        "gia",
        [stack.n_pairs(), stack.n_pairs(), product.valid_count(), product.valid_count()],
        json!({ "applied": apply_gia }),
    )?;

    // stats
    let stats = field_stats(&product).map_err(at("stats", "no valid pixels survived inversion"))?;
    rep.record(
        "stats",
        [stack.n_pairs(), stack.n_pairs(), product.valid_count(), product.valid_count()],
        json!({ "count": stats.count, "median_mm_yr": stats.median, "min_mm_yr": stats.min, "max_mm_yr": stats.max }),
    )?;
    let stats_json = serde_json::to_string_pretty(&stats).expect("stats serialise");
    write_atomic(&out_dir.join("stats.json"), format!("{stats_json}\n").as_bytes())
        .map_err(at("stats", "check that the output folder is writable"))?;

    // product
    let hint = "check that the output folder is writable";
    let csv_rows = write_csv(&product, &out_dir.join(VELOCITY_CSV)).map_err(at("product", hint))?;
    write_csv(&product_no_gia, &out_dir.join(VELOCITY_NO_GIA_CSV)).map_err(at("product", hint))?;
    write_atomic(&out_dir.join("timeseries.txt"), product.timeseries_table().as_bytes()).map_err(at("product", hint))?;
    let valid = DisplacementProduct {
        epochs: product.epochs.clone(),
        pixels: product.valid_pixels().cloned().collect(),
    };
    let product_json = serde_json::to_string(&valid).expect("product serialises");
    write_atomic(&out_dir.join("product.json"), product_json.as_bytes()).map_err(at("product", hint))?;
    rep.record(
        "product",
        [stack.n_pairs(), stack.n_pairs(), product.valid_count(), csv_rows],
        json!({ "csv": VELOCITY_CSV, "csv_no_gia": VELOCITY_NO_GIA_CSV, "rows": csv_rows, "gia_removed": apply_gia }),
    )?;

    Ok(PipelineOutcome {
        reports: rep.reports,
        elite,
        quality,
        product_no_gia,
        product,
        stats,
        calibration_offset_mm_yr: offset,
        reference_pixel: table[reference].0,
        csv_rows,
        truth,
    })
}

/// Reads `product.json` written by a run.
pub fn load_product(path: &Path) -> Result<DisplacementProduct> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| Error::parse(path, e.to_string()))
}
