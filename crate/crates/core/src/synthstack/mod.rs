//! Synthetic interferogram stacks with known ground truth.
//!
//! Every downstream stage is validated against scenes produced here: the
//! per-epoch phase is assembled from deformation, a topography-correlated
//! delay, an orbital ramp and a DEM-error term, pairs are differenced, noise
//! is added and the result is optionally wrapped.
//!
//! Noise is drawn from a ChaCha8 stream per pixel (stream index = pixel id),
//! so the stack does not depend on how many threads generate it.

mod io;
mod scene;

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geomodel::{RadarConstants, ViewGeometry};
use crate::pairnet::{AcquisitionCatalog, PairSet, DAYS_PER_YEAR};

pub use io::{read_pixels, read_stack, write_pixels, write_stack, PIXELS_HEADER, STACK_MAGIC};
pub use scene::{Feature, SceneConfig, SyntheticScene};

/// Principal value of `phi` in `[-π, π)`.
pub fn wrap(phi: f64) -> f64 {
    let r = (phi + PI).rem_euclid(TAU) - PI;
    if r >= PI {
        r - TAU
    } else {
        r
    }
}

/// A scatterer location. `x`/`y` are image coordinates in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScenePixel {
    pub x: f64,
    pub y: f64,
    pub lon: f64,
    pub lat: f64,
    pub elevation_m: f64,
    pub incidence_deg: f64,
}

/// Everything needed to synthesise a stack, and the reference answer for it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub pixels: Vec<ScenePixel>,
    /// LOS velocity per pixel (positive toward the sensor).
    pub velocity_mm_yr: Vec<f64>,
    /// Annual sinusoid amplitude per pixel; empty means none.
    pub seasonal_amplitude_mm: Vec<f64>,
    pub seasonal_phase_rad: f64,
    /// DEM height error per pixel; empty means none.
    pub dem_error_m: Vec<f64>,
    /// Topography-correlated delay coefficient per epoch (rad/m).
    pub atmo_coeff_per_epoch: Vec<f64>,
    /// Orbital ramp `(a0, a1, a2)` per epoch: `a0 + a1 x + a2 y` radians.
    pub ramp_coeffs_per_epoch: Vec<[f64; 3]>,
    pub noise_sigma_rad: f64,
    /// Pixels whose pair phases are replaced by uniform noise.
    pub decorrelated: Vec<bool>,
    pub seed: u64,
    pub radar: RadarConstants,
    pub geometry: ViewGeometry,
    /// Slant range used for the DEM-error sensitivity.
    pub slant_range_m: f64,
}

impl SceneTruth {
    /// A scene with the given pixels and every nuisance term switched off.
    pub fn quiet(pixels: Vec<ScenePixel>, n_epochs: usize) -> Self {
        let n = pixels.len();
        SceneTruth {
            pixels,
            velocity_mm_yr: vec![0.0; n],
            seasonal_amplitude_mm: Vec::new(),
            seasonal_phase_rad: 0.0,
            dem_error_m: Vec::new(),
            atmo_coeff_per_epoch: vec![0.0; n_epochs],
            ramp_coeffs_per_epoch: vec![[0.0; 3]; n_epochs],
            noise_sigma_rad: 0.0,
            decorrelated: vec![false; n],
            seed: 0,
            radar: RadarConstants::default(),
            geometry: ViewGeometry::default(),
            slant_range_m: 880_000.0,
        }
    }

    pub fn validate(&self, n_epochs: usize) -> Result<()> {
        let n = self.pixels.len();
        let check = |context, actual: usize, expected: usize| {
            if actual == expected {
                Ok(())
            } else {
                Err(Error::DimensionMismatch {
                    context,
                    expected,
                    actual,
                })
            }
        };
        check("truth velocity", self.velocity_mm_yr.len(), n)?;
        check("truth decorrelation flags", self.decorrelated.len(), n)?;
        if !self.seasonal_amplitude_mm.is_empty() {
            check("truth seasonal amplitude", self.seasonal_amplitude_mm.len(), n)?;
        }
        if !self.dem_error_m.is_empty() {
            check("truth DEM error", self.dem_error_m.len(), n)?;
        }
        check("truth atmosphere", self.atmo_coeff_per_epoch.len(), n_epochs)?;
        check("truth ramps", self.ramp_coeffs_per_epoch.len(), n_epochs)?;
        if !(self.noise_sigma_rad >= 0.0) {
            return Err(Error::invalid("noise_sigma_rad", "must be >= 0"));
        }
        let mut coords: Vec<(u64, u64)> = self
            .pixels
            .iter()
            .map(|p| (p.x.to_bits(), p.y.to_bits()))
            .collect();
        coords.sort_unstable();
        if coords.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid("pixels", "duplicate pixel coordinates"));
        }
        Ok(())
    }

    /// LOS deformation of every pixel at decimal year `t` in millimeters.
    pub fn deformation_mm(&self, pixel: usize, t_years: f64) -> f64 {
        let mut d = self.velocity_mm_yr[pixel] * t_years;
        if !self.seasonal_amplitude_mm.is_empty() {
            let a = self.seasonal_amplitude_mm[pixel];
            d += a * ((TAU * t_years + self.seasonal_phase_rad).sin() - self.seasonal_phase_rad.sin());
        }
        d
    }
}

/// Per-epoch phase before differencing; `epochs × pixels`.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochPhaseRecord {
    pub total: DMatrix<f64>,
    pub deformation: DMatrix<f64>,
    pub atmosphere: DMatrix<f64>,
    pub ramp: DMatrix<f64>,
    pub dem: DMatrix<f64>,
}

/// Pair phases over a sparse pixel set; `pairs × pixels`.
#[derive(Debug, Clone, PartialEq)]
pub struct InterferogramStack {
    pairs: PairSet,
    phase: DMatrix<f64>,
    wrapped: bool,
    weights: DMatrix<f64>,
}

impl InterferogramStack {
    pub fn new(pairs: PairSet, phase: DMatrix<f64>, wrapped: bool, weights: DMatrix<f64>) -> Result<Self> {
        if phase.nrows() != pairs.len() {
            return Err(Error::DimensionMismatch {
                context: "stack rows vs pairs",
                expected: pairs.len(),
                actual: phase.nrows(),
            });
        }
        if weights.shape() != phase.shape() {
            return Err(Error::DimensionMismatch {
                context: "stack weights",
                expected: phase.len(),
                actual: weights.len(),
            });
        }
        if wrapped && phase.iter().any(|&p| !(-PI..PI).contains(&p)) {
            return Err(Error::invalid("phase", "wrapped stack has values outside [-π, π)"));
        }
        if weights.iter().any(|&w| !(w > 0.0 && w <= 1.0)) {
            return Err(Error::invalid("weights", "quality weights must lie in (0, 1]"));
        }
        Ok(InterferogramStack {
            pairs,
            phase,
            wrapped,
            weights,
        })
    }

    pub fn pairs(&self) -> &PairSet {
        &self.pairs
    }

    pub fn phase(&self) -> &DMatrix<f64> {
        &self.phase
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn is_wrapped(&self) -> bool {
        self.wrapped
    }

    pub fn n_pairs(&self) -> usize {
        self.phase.nrows()
    }

    pub fn n_pixels(&self) -> usize {
        self.phase.ncols()
    }

    /// Phase of one interferogram across all pixels.
    pub fn pair_row(&self, pair: usize) -> Vec<f64> {
        self.phase.row(pair).iter().copied().collect()
    }

    /// Stack restricted to the given pixel columns, in that order.
    pub fn select_pixels(&self, pixels: &[usize]) -> InterferogramStack {
        InterferogramStack {
            pairs: self.pairs.clone(),
            phase: self.phase.select_columns(pixels),
            wrapped: self.wrapped,
            weights: self.weights.select_columns(pixels),
        }
    }

    /// Keeps the listed pair rows; `pairs` is the matching (reindexed) set.
    pub fn select_pairs(&self, rows: &[usize], pairs: PairSet) -> Result<InterferogramStack> {
        InterferogramStack::new(
            pairs,
            self.phase.select_rows(rows),
            self.wrapped,
            self.weights.select_rows(rows),
        )
    }

    /// Replaces the phase matrix, e.g. after unwrapping or correction.
    pub fn with_phase(&self, phase: DMatrix<f64>, wrapped: bool) -> Result<InterferogramStack> {
        InterferogramStack::new(self.pairs.clone(), phase, wrapped, self.weights.clone())
    }

    pub fn wrapped_copy(&self) -> InterferogramStack {
        InterferogramStack {
            pairs: self.pairs.clone(),
            phase: self.phase.map(wrap),
            wrapped: true,
            weights: self.weights.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wrapping {
    Wrapped,
    Unwrapped,
}

/// Synthesises the stack for `truth` over the pairs `ps` of `catalog`.
pub fn generate_stack(
    truth: &SceneTruth,
    catalog: &AcquisitionCatalog,
    ps: &PairSet,
    wrapping: Wrapping,
) -> Result<(InterferogramStack, EpochPhaseRecord)> {
    let n_epochs = catalog.len();
    truth.validate(n_epochs)?;
    if let Some(&(i, j)) = ps.pairs().iter().find(|&&(i, j)| j >= n_epochs || i >= n_epochs) {
        return Err(Error::DimensionMismatch {
            context: "pair index vs catalog",
            expected: n_epochs,
            actual: i.max(j) + 1,
        });
    }
    let record = epoch_phases(truth, catalog);
    let n_pixels = truth.pixels.len();
    let pairs = ps.pairs();

    let noise = Normal::new(0.0, truth.noise_sigma_rad.max(0.0))
        .map_err(|e| Error::invalid("noise_sigma_rad", e.to_string()))?;
    let columns: Vec<Vec<f64>> = (0..n_pixels)
        .into_par_iter()
        .map(|p| {
            let mut rng = ChaCha8Rng::seed_from_u64(truth.seed);
            rng.set_stream(p as u64);
            pairs
                .iter()
                .map(|&(i, j)| {
                    if truth.decorrelated[p] {
                        rng.random_range(-PI..PI)
                    } else {
                        let clean = record.total[(j, p)] - record.total[(i, p)];
                        if truth.noise_sigma_rad > 0.0 {
                            clean + noise.sample(&mut rng)
                        } else {
                            clean
                        }
                    }
                })
                .collect()
        })
        .collect();

    let mut phase = DMatrix::from_fn(pairs.len(), n_pixels, |r, c| columns[c][r]);
    let wrapped = wrapping == Wrapping::Wrapped;
    if wrapped {
        phase.apply(|v| *v = wrap(*v));
    }
    let weights = DMatrix::from_element(pairs.len(), n_pixels, 1.0);
    let stack = InterferogramStack::new(ps.clone(), phase, wrapped, weights)?;
    Ok((stack, record))
}

fn epoch_phases(truth: &SceneTruth, catalog: &AcquisitionCatalog) -> EpochPhaseRecord {
    let years = catalog.decimal_years();
    let n_epochs = years.len();
    let n_pixels = truth.pixels.len();
    let per_mm = truth.radar.phase_per_mm();

    let deformation = DMatrix::from_fn(n_epochs, n_pixels, |e, p| per_mm * truth.deformation_mm(p, years[e]));
    let atmosphere = DMatrix::from_fn(n_epochs, n_pixels, |e, p| {
        truth.atmo_coeff_per_epoch[e] * truth.pixels[p].elevation_m
    });
    let ramp = DMatrix::from_fn(n_epochs, n_pixels, |e, p| {
        let [a0, a1, a2] = truth.ramp_coeffs_per_epoch[e];
        a0 + a1 * truth.pixels[p].x + a2 * truth.pixels[p].y
    });
    let dem = if truth.dem_error_m.is_empty() {
        DMatrix::zeros(n_epochs, n_pixels)
    } else {
        let lambda = truth.radar.wavelength_m();
        let sin_inc = truth.geometry.incidence_deg().to_radians().sin();
        let per_m_baseline = 4.0 * PI / (lambda * truth.slant_range_m * sin_inc);
        DMatrix::from_fn(n_epochs, n_pixels, |e, p| {
            per_m_baseline * catalog.acquisitions()[e].perp_baseline_m * truth.dem_error_m[p]
        })
    };
    let total = &deformation + &atmosphere + &ramp + &dem;
    EpochPhaseRecord {
        total,
        deformation,
        atmosphere,
        ramp,
        dem,
    }
}

/// Expected pair phase for pure linear deformation: the `Δt` in years times the
/// rate converted to phase.
pub fn linear_pair_phase(catalog: &AcquisitionCatalog, radar: &RadarConstants, pair: (usize, usize), rate_mm_yr: f64) -> f64 {
    let dt = catalog.days_between(pair.0, pair.1) as f64 / DAYS_PER_YEAR;
    radar.phase_per_mm() * rate_mm_yr * dt
}
