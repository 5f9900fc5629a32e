//! Elite pixel selection by temporal coherence.
//!
//! The model phase of a pixel is a linear rate in pair time span, found by a
//! periodogram search and then refined twice by least squares on wrapped
//! residuals. Before the search, each pair's scene-wide common phase is
//! removed, so per-pair constant offsets do not affect the result.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pairnet::AcquisitionCatalog;
use crate::synthstack::{wrap, InterferogramStack};

pub const DEFAULT_THRESHOLD: f64 = 0.7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PixelQuality {
    pub pixel_id: usize,
    pub temporal_coherence: f64,
    pub selected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EliteConfig {
    pub threshold: f64,
    /// Search range of the model rate, rad/yr, symmetric about zero.
    pub max_rate_rad_yr: f64,
    pub rate_step_rad_yr: f64,
    pub refinements: usize,
}

impl Default for EliteConfig {
    fn default() -> Self {
        EliteConfig {
            threshold: DEFAULT_THRESHOLD,
            max_rate_rad_yr: 12.0,
            rate_step_rad_yr: 0.1,
            refinements: 2,
        }
    }
}

impl EliteConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(Error::invalid("threshold", format!("{} is outside [0, 1]", self.threshold)));
        }
        if !(self.max_rate_rad_yr >= 0.0 && self.max_rate_rad_yr.is_finite()) {
            return Err(Error::invalid("max_rate_rad_yr", "must be finite and non-negative"));
        }
        if !(self.rate_step_rad_yr > 0.0) {
            return Err(Error::invalid("rate_step_rad_yr", "must be positive"));
        }
        Ok(())
    }
}

fn coherence_of(obs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = obs.fold((Complex64::new(0.0, 0.0), 0usize), |(s, n), d| (s + Complex64::from_polar(1.0, d), n + 1));
    if n == 0 {
        0.0
    } else {
        (sum.norm() / n as f64).min(1.0)
    }
}

/// `|mean over pairs of exp(i(φ_obs - φ_model))|` for every pixel.
pub fn temporal_coherence(stack: &InterferogramStack, model_phase: &DMatrix<f64>) -> Result<Vec<f64>> {
    if model_phase.shape() != stack.phase().shape() {
        return Err(Error::DimensionMismatch {
            context: "model phase vs stack",
            expected: stack.phase().len(),
            actual: model_phase.len(),
        });
    }
    let phase = stack.phase();
    Ok((0..stack.n_pixels())
        .into_par_iter()
        .map(|p| coherence_of(phase.column(p).iter().zip(model_phase.column(p).iter()).map(|(o, m)| o - m)))
        .collect())
}

/// Pixels with coherence at or above `threshold`, in input order.
pub fn select_elite(quality: &[PixelQuality], threshold: f64) -> Vec<usize> {
    quality
        .iter()
        .filter(|q| q.temporal_coherence >= threshold)
        .map(|q| q.pixel_id)
        .collect()
}

/// Argument of the complex scene mean of each pair.
pub fn common_phase(stack: &InterferogramStack) -> Vec<f64> {
    stack
        .phase()
        .row_iter()
        .map(|row| {
            let s: Complex64 = row.iter().map(|&v| Complex64::from_polar(1.0, v)).sum();
            if s.norm() == 0.0 {
                0.0
            } else {
                s.arg()
            }
        })
        .collect()
}

fn pair_spans(stack: &InterferogramStack, catalog: &AcquisitionCatalog) -> Result<Vec<f64>> {
    let years = catalog.decimal_years();
    stack
        .pairs()
        .pairs()
        .iter()
        .map(|&(i, j)| {
            if j >= years.len() {
                return Err(Error::invalid("stack pairs", format!("epoch {j} is not in the catalog")));
            }
            Ok(years[j] - years[i])
        })
        .collect()
}

fn fit_rate(obs: &[f64], dt: &[f64], cfg: &EliteConfig) -> f64 {
    let steps = (cfg.max_rate_rad_yr / cfg.rate_step_rad_yr).floor() as i64;
    let mut best = (f64::NEG_INFINITY, 0.0);
    for k in -steps..=steps {
        let rate = k as f64 * cfg.rate_step_rad_yr;
        let c = coherence_of(obs.iter().zip(dt).map(|(o, t)| o - rate * t));
        if c > best.0 {
            best = (c, rate);
        }
    }
    let mut rate = best.1;
    let sxx: f64 = dt.iter().map(|t| t * t).sum();
    if sxx == 0.0 {
        return rate;
    }
    for _ in 0..cfg.refinements {
        let offset = {
            let s: Complex64 = obs.iter().zip(dt).map(|(o, t)| Complex64::from_polar(1.0, o - rate * t)).sum();
            s.arg()
        };
        let step: f64 = obs
            .iter()
            .zip(dt)
            .map(|(o, t)| t * wrap(o - rate * t - offset))
            .sum::<f64>()
            / sxx;
        // A step of more than half a cycle over the longest span is not a refinement.
        let t_max = dt.iter().fold(0.0f64, |a, t| a.max(t.abs()));
        if (step * t_max).abs() > PI {
            break;
        }
        rate += step;
    }
    rate
}

/// Model phase `rate · Δt` per pair and pixel, from common-phase-free data.
pub fn model_phase(stack: &InterferogramStack, catalog: &AcquisitionCatalog, cfg: &EliteConfig) -> Result<DMatrix<f64>> {
    cfg.validate()?;
    let dt = pair_spans(stack, catalog)?;
    let common = common_phase(stack);
    let phase = stack.phase();
    let rates: Vec<f64> = (0..stack.n_pixels())
        .into_par_iter()
        .map(|p| {
            let obs: Vec<f64> = phase.column(p).iter().zip(&common).map(|(v, c)| v - c).collect();
            fit_rate(&obs, &dt, cfg)
        })
        .collect();
    Ok(DMatrix::from_fn(stack.n_pairs(), stack.n_pixels(), |r, p| common[r] + rates[p] * dt[r]))
}

/// Coherence and selection flag of every pixel.
pub fn assess_quality(stack: &InterferogramStack, catalog: &AcquisitionCatalog, cfg: &EliteConfig) -> Result<Vec<PixelQuality>> {
    let model = model_phase(stack, catalog, cfg)?;
    let coherence = temporal_coherence(stack, &model)?;
    Ok(coherence
        .into_iter()
        .enumerate()
        .map(|(pixel_id, c)| PixelQuality {
            pixel_id,
            temporal_coherence: c,
            selected: c >= cfg.threshold,
        })
        .collect())
}
