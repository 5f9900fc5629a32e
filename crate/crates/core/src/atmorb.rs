//! Per-interferogram corrections applied after unwrapping: topography
//! correlated atmospheric delay, then an orbital ramp.
//!
//! The sparse pixel set rules out a dyadic transform, so the multiresolution
//! split is built from repeated neighbour averaging on the triangulation.
//! Smoothing step counts grow 4× per level, doubling the diffusion length.
//! Band `l` is `S_{l-1} - S_l` and the last band is the coarsest `S_L`, so
//! the bands telescope back to the input.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mcfunwrap::TriNetwork;
use crate::robust::{irls, weighted_lstsq, IrlsConfig};

pub const DEFAULT_LEVELS: usize = 4;

/// Fraction of the neighbour mean mixed in per smoothing step.
const SMOOTHING_ALPHA: f64 = 0.5;

/// Detail bands from fine to coarse, then the coarse residual.
#[derive(Debug, Clone, PartialEq)]
pub struct Multires {
    pub details: Vec<Vec<f64>>,
    pub coarse: Vec<f64>,
}

impl Multires {
    /// All bands, coarse last.
    pub fn bands(&self) -> impl Iterator<Item = &[f64]> {
        self.details.iter().map(Vec::as_slice).chain(std::iter::once(self.coarse.as_slice()))
    }

    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = self.coarse.clone();
        for band in &self.details {
            for (o, b) in out.iter_mut().zip(band) {
                *o += b;
            }
        }
        out
    }
}

fn smooth_step(net: &TriNetwork, signal: &[f64]) -> Vec<f64> {
    (0..signal.len())
        .map(|v| {
            let (sum, count) = net.neighbours(v).fold((0.0, 0usize), |(s, c), u| (s + signal[u], c + 1));
            if count == 0 {
                signal[v]
            } else {
                (1.0 - SMOOTHING_ALPHA) * signal[v] + SMOOTHING_ALPHA * sum / count as f64
            }
        })
        .collect()
}

/// Smallest pixel count accepted for `levels` levels.
pub fn min_pixels(levels: usize) -> usize {
    1usize << levels.min(usize::BITS as usize - 1)
}

/// Additive multiresolution split of `signal` over the network nodes.
pub fn multires_decompose(signal: &[f64], net: &TriNetwork, levels: usize) -> Result<Multires> {
    if levels == 0 {
        return Err(Error::invalid("levels", "at least one level is required"));
    }
    let n = net.nodes().len();
    if signal.len() != n {
        return Err(Error::DimensionMismatch {
            context: "signal vs network nodes",
            expected: n,
            actual: signal.len(),
        });
    }
    if n < min_pixels(levels) {
        return Err(Error::InsufficientPixels {
            levels,
            have: n,
            need: min_pixels(levels),
        });
    }
    let mut details = Vec::with_capacity(levels);
    let mut current = signal.to_vec();
    let mut steps_done = 0usize;
    for level in 0..levels {
        let target = 1usize << (2 * level);
        let mut next = current.clone();
        while steps_done < target {
            next = smooth_step(net, &next);
            steps_done += 1;
        }
        details.push(current.iter().zip(&next).map(|(a, b)| a - b).collect());
        current = next;
    }
    Ok(Multires {
        details,
        coarse: current,
    })
}

/// Topography-correlated delay estimated band by band.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtmoModel {
    /// `K_b` in rad/m, detail bands then coarse.
    pub band_coeffs: Vec<f64>,
    /// `Σ_b K_b · elevation_b` per pixel.
    pub delay: Vec<f64>,
    /// Least-squares slope of the delay against elevation, rad/m.
    pub aggregate_coeff: f64,
}

impl AtmoModel {
    /// Zero delay for unidentifiable cases.
    pub fn zero(n_pixels: usize, n_bands: usize) -> Self {
        AtmoModel {
            band_coeffs: vec![0.0; n_bands],
            delay: vec![0.0; n_pixels],
            aggregate_coeff: 0.0,
        }
    }

    /// Rebuilds the delay from the coefficients and elevation bands.
    pub fn delay_from(&self, elevation_bands: &Multires) -> Vec<f64> {
        let mut out = vec![0.0; elevation_bands.coarse.len()];
        for (band, k) in elevation_bands.bands().zip(&self.band_coeffs) {
            for (o, e) in out.iter_mut().zip(band) {
                *o += k * e;
            }
        }
        out
    }
}

fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn spread(values: &[f64]) -> f64 {
    let m = mean(values);
    (values.iter().map(|v| (v - m).powi(2)).sum::<f64>() / values.len() as f64).sqrt()
}

fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx > 0.0 {
        sxy / sxx
    } else {
        0.0
    }
}

/// Robust regression of `phase` on the elevation bands.
pub fn estimate_topo_delay(phase: &[f64], elevation: &[f64], net: &TriNetwork, levels: usize) -> Result<AtmoModel> {
    if elevation.len() != phase.len() {
        return Err(Error::DimensionMismatch {
            context: "elevation vs phase",
            expected: phase.len(),
            actual: elevation.len(),
        });
    }
    let elev_scale = spread(elevation);
    let elev_size = elevation.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if !(elev_scale > 1e-9 * (1.0 + elev_size)) {
        return Err(Error::ConstantElevation);
    }
    let elev_bands = multires_decompose(elevation, net, levels)?;

    // Smoothing differences are not orthogonal, so the bands are fitted
    // jointly: phase ≈ c + Σ_b K_b·elevation_b. For orthogonal bands this is
    // the same as regressing each phase band on its elevation band, and the
    // residual has zero coefficients when fitted again.
    let active: Vec<usize> = elev_bands
        .bands()
        .enumerate()
        .filter(|(_, eb)| spread(eb) > 1e-9 * elev_scale)
        .map(|(b, _)| b)
        .collect();
    let bands: Vec<&[f64]> = elev_bands.bands().collect();
    let design = DMatrix::from_fn(phase.len(), active.len() + 1, |r, c| if c == 0 { 1.0 } else { bands[active[c - 1]][r] });
    // Convex loss: a repeated fit lands on the same minimum.
    let ones = vec![1.0; phase.len()];
    let mut band_coeffs = vec![0.0; levels + 1];
    match irls(&design, phase, &ones, &IrlsConfig::huber()) {
        Ok(fit) => {
            for (k, &b) in active.iter().enumerate() {
                band_coeffs[b] = fit.coeffs[k + 1];
            }
        }
        // Nearly dependent bands: one coefficient shared by all of them.
        Err(Error::RankDeficient) => {
            let design = DMatrix::from_fn(phase.len(), 2, |r, c| if c == 0 { 1.0 } else { elevation[r] });
            let k = irls(&design, phase, &ones, &IrlsConfig::huber())?.coeffs[1];
            band_coeffs.iter_mut().for_each(|b| *b = k);
        }
        Err(e) => return Err(e),
    }
    let mut model = AtmoModel {
        band_coeffs,
        delay: Vec::new(),
        aggregate_coeff: 0.0,
    };
    model.delay = model.delay_from(&elev_bands);
    model.aggregate_coeff = ls_slope(elevation, &model.delay);
    Ok(model)
}

/// Orbital ramp `a0 + a1·x + a2·y (+ a3·x·y)`, pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RampModel {
    pub a0: f64,
    pub a1: f64,
    pub a2: f64,
    pub a3: Option<f64>,
}

impl RampModel {
    pub const ZERO: RampModel = RampModel {
        a0: 0.0,
        a1: 0.0,
        a2: 0.0,
        a3: None,
    };

    pub fn evaluate(&self, x: f64, y: f64) -> f64 {
        self.a0 + self.a1 * x + self.a2 * y + self.a3.map_or(0.0, |a3| a3 * x * y)
    }

    pub fn max_abs_coeff(&self) -> f64 {
        [self.a0, self.a1, self.a2, self.a3.unwrap_or(0.0)]
            .iter()
            .fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RampOptions {
    pub robust: bool,
    pub cross_term: bool,
}

impl Default for RampOptions {
    fn default() -> Self {
        RampOptions {
            robust: true,
            cross_term: false,
        }
    }
}

/// Fits the ramp in centred, scaled coordinates and maps it back.
pub fn estimate_ramp(phase: &[f64], coords: &[[f64; 2]], opts: RampOptions) -> Result<RampModel> {
    if coords.len() != phase.len() {
        return Err(Error::DimensionMismatch {
            context: "coords vs phase",
            expected: phase.len(),
            actual: coords.len(),
        });
    }
    let n_coeffs = if opts.cross_term { 4 } else { 3 };
    if phase.len() < 4.max(n_coeffs) {
        return Err(Error::DegenerateGeometry);
    }
    let xs: Vec<f64> = coords.iter().map(|c| c[0]).collect();
    let ys: Vec<f64> = coords.iter().map(|c| c[1]).collect();
    let (mx, my) = (mean(&xs), mean(&ys));
    let (sx, sy) = (spread(&xs), spread(&ys));
    if !(sx > 0.0 && sy > 0.0) {
        return Err(Error::DegenerateGeometry);
    }
    let u: Vec<f64> = xs.iter().map(|x| (x - mx) / sx).collect();
    let v: Vec<f64> = ys.iter().map(|y| (y - my) / sy).collect();
    // Collinear points have a singular (u, v) covariance; correlation ±1.
    let corr = u.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / u.len() as f64;
    if 1.0 - corr.abs() < 1e-10 {
        return Err(Error::DegenerateGeometry);
    }
    let design = DMatrix::from_fn(phase.len(), n_coeffs, |r, c| match c {
        0 => 1.0,
        1 => u[r],
        2 => v[r],
        _ => u[r] * v[r],
    });
    let ones = vec![1.0; phase.len()];
    let fit = if opts.robust {
        irls(&design, phase, &ones, &IrlsConfig::default()).map(|f| f.coeffs)
    } else {
        weighted_lstsq(&design, phase, &ones)
    };
    let b = fit.map_err(|e| match e {
        Error::RankDeficient => Error::DegenerateGeometry,
        other => other,
    })?;
    let b3 = if opts.cross_term { b[3] } else { 0.0 };
    // b0 + b1 (x-mx)/sx + b2 (y-my)/sy + b3 (x-mx)(y-my)/(sx sy)
    let k = b3 / (sx * sy);
    Ok(RampModel {
        a0: b[0] - b[1] * mx / sx - b[2] * my / sy + k * mx * my,
        a1: b[1] / sx - k * my,
        a2: b[2] / sy - k * mx,
        a3: opts.cross_term.then_some(k),
    })
}

/// Which corrections run, and how.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CorrectionConfig {
    pub atmosphere: bool,
    pub orbit: bool,
    pub levels: usize,
    pub robust_ramp: bool,
    pub ramp_cross_term: bool,
}

impl Default for CorrectionConfig {
    fn default() -> Self {
        CorrectionConfig {
            atmosphere: true,
            orbit: true,
            levels: DEFAULT_LEVELS,
            robust_ramp: true,
            ramp_cross_term: false,
        }
    }
}

/// Outcome of correcting one interferogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRecord {
    pub pair: (usize, usize),
    pub atmo_coeff: f64,
    /// False when elevation was constant and no delay was removed.
    pub atmo_identifiable: bool,
    pub ramp: RampModel,
    pub rms_before: f64,
    pub rms_after: f64,
}

fn rms(values: &[f64]) -> f64 {
    (values.iter().map(|v| v * v).sum::<f64>() / values.len().max(1) as f64).sqrt()
}

/// Removes the topographic delay and then the ramp from one interferogram.
pub fn correct_interferogram(
    pair: (usize, usize),
    phase: &[f64],
    elevation: &[f64],
    net: &TriNetwork,
    cfg: &CorrectionConfig,
) -> Result<(Vec<f64>, CorrectionRecord)> {
    let mut out = phase.to_vec();
    let mut record = CorrectionRecord {
        pair,
        atmo_coeff: 0.0,
        atmo_identifiable: true,
        ramp: RampModel::ZERO,
        rms_before: rms(phase),
        rms_after: 0.0,
    };
    if cfg.atmosphere {
        match estimate_topo_delay(&out, elevation, net, cfg.levels) {
            Ok(model) => {
                for (o, d) in out.iter_mut().zip(&model.delay) {
                    *o -= d;
                }
                record.atmo_coeff = model.aggregate_coeff;
            }
            Err(Error::ConstantElevation) => {
                log::warn!("pair {pair:?}: constant elevation, atmospheric correction skipped");
                record.atmo_identifiable = false;
            }
            Err(e) => return Err(e),
        }
    }
    if cfg.orbit {
        let ramp = estimate_ramp(
            &out,
            net.nodes(),
            RampOptions {
                robust: cfg.robust_ramp,
                cross_term: cfg.ramp_cross_term,
            },
        )?;
        for (o, p) in out.iter_mut().zip(net.nodes()) {
            *o -= ramp.evaluate(p[0], p[1]);
        }
        record.ramp = ramp;
    }
    record.rms_after = rms(&out);
    Ok((out, record))
}

pub const CORRECTION_REPORT_HEADER: &str = "# insar-ts corrections v1";

/// One CSV row per interferogram; `a3` is empty without a cross term.
pub fn correction_report(records: &[CorrectionRecord]) -> String {
    let mut out = format!("{CORRECTION_REPORT_HEADER}\nreference,secondary,atmo_coeff_rad_per_m,a0,a1,a2,a3,rms_before,rms_after\n");
    for r in records {
        let a3 = r.ramp.a3.map(|v| format!("{v:e}")).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{:e},{:e},{:e},{:e},{},{:e},{:e}",
            r.pair.0, r.pair.1, r.atmo_coeff, r.ramp.a0, r.ramp.a1, r.ramp.a2, a3, r.rms_before, r.rms_after
        );
    }
    out
}
