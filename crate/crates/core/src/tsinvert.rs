//! Reweighted least-squares inversion of pair phases into per-epoch
//! displacement, followed by a linear velocity fit.
//!
//! Each iteration solves the weighted normal equations of the pair network,
//! standardises the residuals by their leverage, normalises them by their
//! MAD scale and applies Tukey weights.
//! Robust weights are rescaled so the largest equals one; the solution and
//! the covariance do not depend on that scale.

use std::fmt::Write as _;

use chrono::NaiveDate;
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geomodel::RadarConstants;
use crate::pairnet::{DesignMatrix, DAYS_PER_YEAR};
use crate::robust::{huber_weight, mad_scale, tukey_weight, Loss, HUBER_C, TUKEY_C};
use crate::synthstack::{InterferogramStack, ScenePixel};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Reweighting {
    /// Tukey biweight on MAD-normalised residuals.
    Tukey,
    /// Plain weighted least squares with the quality weights.
    None,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InversionConfig {
    pub reweighting: Reweighting,
    pub tukey_c: f64,
    pub max_iter: usize,
    /// Stop when no weight moves by more than this.
    pub weight_tol: f64,
    /// Lower bound on initial weights, and the fallback floor if the robust
    /// weights leave the network singular.
    pub weight_floor: f64,
}

impl Default for InversionConfig {
    fn default() -> Self {
        InversionConfig {
            reweighting: Reweighting::Tukey,
            tukey_c: TUKEY_C,
            max_iter: 30,
            weight_tol: 1e-6,
            weight_floor: 1e-3,
        }
    }
}

const PHASE_SCALE_FLOOR: f64 = 1e-8;
const MAX_SCALE_DOUBLINGS: usize = 64;

/// Result of inverting one pixel.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelInversion {
    /// Phase per epoch; the reference epoch is exactly zero.
    pub epoch_phase: Vec<f64>,
    /// One-sigma phase uncertainty per epoch (zero at the reference).
    pub epoch_sigma: Vec<f64>,
    /// Posterior covariance of the epoch phases, rad²; the reference row
    /// and column are zero.
    pub covariance: DMatrix<f64>,
    /// Final weight of each pair (prior × robust).
    pub weights: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Posterior unit-weight variance.
    pub variance_factor: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Robust weights for the given residuals, normalised to a maximum of one.
///
/// Residuals are scaled by `sqrt(prior)` before the MAD estimate, so a pair
/// with a larger prior weight is held to a tighter tolerance.
pub fn reweight(residuals: &[f64], prior: &[f64], c: f64, floor_scale: f64) -> Vec<f64> {
    let s = mad_scale(&prior_scaled(residuals, prior), floor_scale);
    reweight_with(Loss::Tukey, residuals, prior, c, s)
}

fn prior_scaled(residuals: &[f64], prior: &[f64]) -> Vec<f64> {
    residuals.iter().zip(prior).map(|(r, p)| r * p.sqrt()).collect()
}

fn reweight_with(loss: Loss, residuals: &[f64], prior: &[f64], c: f64, s: f64) -> Vec<f64> {
    let normalised = prior_scaled(residuals, prior);
    let w: Vec<f64> = normalised
        .iter()
        .map(|u| match loss {
            Loss::Tukey => tukey_weight(u / s, c),
            Loss::Huber => huber_weight(u / s, HUBER_C),
        })
        .collect();
    let top = w.iter().cloned().fold(0.0, f64::max);
    if top > 0.0 {
        w.into_iter().map(|x| x / top).collect()
    } else {
        vec![1.0; residuals.len()]
    }
}

fn normal_equations(dm: &DesignMatrix, y: &[f64], w: &[f64]) -> (DMatrix<f64>, DVector<f64>) {
    let n = dm.cols();
    let mut ata = DMatrix::<f64>::zeros(n, n);
    let mut aty = DVector::<f64>::zeros(n);
    for (row, &(i, j)) in dm.pairs().iter().enumerate() {
        let wk = w[row];
        if wk == 0.0 {
            continue;
        }
        let ci = dm.column_of(i);
        let cj = dm.column_of(j);
        if let Some(a) = cj {
            ata[(a, a)] += wk;
            aty[a] += wk * y[row];
        }
        if let Some(b) = ci {
            ata[(b, b)] += wk;
            aty[b] -= wk * y[row];
        }
        if let (Some(a), Some(b)) = (cj, ci) {
            ata[(a, b)] -= wk;
            ata[(b, a)] -= wk;
        }
    }
    (ata, aty)
}

fn expand(dm: &DesignMatrix, x: &DVector<f64>) -> Vec<f64> {
    (0..dm.n_epochs())
        .map(|e| dm.column_of(e).map_or(0.0, |c| x[c]))
        .collect()
}

fn solve(dm: &DesignMatrix, y: &[f64], w: &[f64]) -> Option<(Vec<f64>, nalgebra::Cholesky<f64, nalgebra::Dyn>)> {
    let (ata, aty) = normal_equations(dm, y, w);
    let chol = ata.cholesky()?;
    // Weights that cut the network off the reference leave a numerically
    // singular system that Cholesky may still factor.
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag.iter().fold((f64::INFINITY, 0.0f64), |(lo, hi), d| (lo.min(*d), hi.max(*d)));
    if !(lo > 0.0 && lo * lo >= 1e-12 * hi * hi) {
        return None;
    }
    let x = chol.solve(&aty);
    Some((expand(dm, &x), chol))
}

/// Standardises residuals by `sqrt(1 - h)`, with `h` the leverage of each
/// pair under weights `w`.
fn standardised(dm: &DesignMatrix, chol: &nalgebra::Cholesky<f64, nalgebra::Dyn>, w: &[f64], residuals: &[f64]) -> Vec<f64> {
    let q = chol.inverse();
    let at = |a: Option<usize>, b: Option<usize>| match (a, b) {
        (Some(a), Some(b)) => q[(a, b)],
        _ => 0.0,
    };
    dm.pairs()
        .iter()
        .zip(w)
        .zip(residuals)
        .map(|((&(i, j), wk), r)| {
            let (ci, cj) = (dm.column_of(i), dm.column_of(j));
            let h = wk * (at(cj, cj) + at(ci, ci) - 2.0 * at(ci, cj));
            r / (1.0 - h).max(1e-6).sqrt()
        })
        .collect()
}

/// Inverts the pair phases of one pixel into epoch phases.
pub fn invert_pixel(
    pair_phase: &[f64],
    dm: &DesignMatrix,
    weights: &[f64],
    cfg: &InversionConfig,
) -> Result<PixelInversion> {
    let m = dm.rows();
    if pair_phase.len() != m || weights.len() != m {
        return Err(Error::DimensionMismatch {
            context: "pair phases vs design matrix",
            expected: m,
            actual: pair_phase.len().min(weights.len()),
        });
    }
    if weights.iter().any(|&w| !(w > 0.0)) {
        return Err(Error::invalid("weights", "pair weights must be > 0"));
    }
    let prior: Vec<f64> = weights.iter().map(|&w| w.max(cfg.weight_floor)).collect();
    // Residuals below this are treated as exact. Far under any phase noise,
    // far over rounding error.
    let floor = PHASE_SCALE_FLOOR * (1.0 + pair_phase.iter().fold(0.0f64, |a, v| a.max(v.abs())));

    let mut w = prior.clone();
    let (mut epoch_phase, mut chol) = solve(dm, pair_phase, &w).ok_or(Error::RankDeficient)?;
    let mut residuals = residuals_of(dm, pair_phase, &epoch_phase);
    let mut iterations = 0;
    let mut converged = cfg.reweighting == Reweighting::None;
    // Up to `max_iter` Huber steps, then up to `max_iter` Tukey steps. The
    // convex loss moves the start away from the least-squares smear of a
    // gross outlier, which the redescending loss alone can lock in.
    let mut loss = Loss::Huber;
    let mut stage_iter = 0;

    while !converged {
        iterations += 1;
        stage_iter += 1;
        let std_res = standardised(dm, &chol, &w, &residuals);
        let mut scale = mad_scale(&prior_scaled(&std_res, &prior), floor);
        // A scale that rejects every pair of some epoch is too small for the
        // data; widen it until the network is solvable again.
        let mut attempt = 0;
        let (next, solved) = loop {
            let robust = reweight_with(loss, &std_res, &prior, cfg.tukey_c, scale);
            let mut next: Vec<f64> = robust.iter().zip(&prior).map(|(a, b)| a * b).collect();
            if let Some(s) = solve(dm, pair_phase, &next) {
                break (next, s);
            }
            attempt += 1;
            if attempt > MAX_SCALE_DOUBLINGS {
                for (n, p) in next.iter_mut().zip(&prior) {
                    *n = n.max(cfg.weight_floor * p);
                }
                let s = solve(dm, pair_phase, &next).ok_or(Error::RankDeficient)?;
                break (next, s);
            }
            scale *= 2.0;
        };
        let change = w
            .iter()
            .zip(&next)
            .fold(0.0f64, |acc, (a, b)| acc.max((a - b).abs()));
        w = next;
        (epoch_phase, chol) = solved;
        residuals = residuals_of(dm, pair_phase, &epoch_phase);
        let settled = change < cfg.weight_tol;
        if settled || stage_iter >= cfg.max_iter {
            if loss == Loss::Huber {
                loss = Loss::Tukey;
                stage_iter = 0;
            } else {
                converged = settled;
                break;
            }
        }
    }

    let n = dm.cols();
    let variance_factor = if m > n {
        residuals.iter().zip(&w).map(|(r, wk)| wk * r * r).sum::<f64>() / (m - n) as f64
    } else {
        1.0
    };
    let inv = chol.inverse();
    let n_epochs = dm.n_epochs();
    let covariance = DMatrix::from_fn(n_epochs, n_epochs, |a, b| match (dm.column_of(a), dm.column_of(b)) {
        (Some(ca), Some(cb)) => variance_factor * inv[(ca, cb)],
        _ => 0.0,
    });
    let epoch_sigma = (0..n_epochs).map(|e| covariance[(e, e)].max(0.0).sqrt()).collect();

    Ok(PixelInversion {
        epoch_phase,
        epoch_sigma,
        covariance,
        weights: w,
        residuals,
        variance_factor,
        iterations,
        converged,
    })
}

fn residuals_of(dm: &DesignMatrix, y: &[f64], epoch_phase: &[f64]) -> Vec<f64> {
    dm.forward(epoch_phase)
        .into_iter()
        .zip(y)
        .map(|(pred, obs)| obs - pred)
        .collect()
}

/// LOS displacement history of one pixel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    pub epochs: Vec<NaiveDate>,
    pub displacement_cm: Vec<f64>,
    pub sigma_cm: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VelocityEstimate {
    pub rate_mm_yr: f64,
    pub std_mm_yr: f64,
}

/// Weighted straight-line fit of displacement against decimal years.
///
/// Epoch weights are `1/σ²`; an epoch with zero sigma (the reference) gets
/// the largest weight of the others, and if every sigma is zero the fit is
/// unweighted. The rate uncertainty is scaled by the residual variance with
/// `n - 2` degrees of freedom.
pub fn fit_velocity(ts: &TimeSeries) -> Result<VelocityEstimate> {
    let n = ts.epochs.len();
    if n < 2 {
        return Err(Error::InsufficientEpochs { need: 2, have: n });
    }
    if ts.displacement_cm.len() != n || ts.sigma_cm.len() != n {
        return Err(Error::DimensionMismatch {
            context: "time series lengths",
            expected: n,
            actual: ts.displacement_cm.len().min(ts.sigma_cm.len()),
        });
    }
    let t0 = ts.epochs[0];
    let t: Vec<f64> = ts
        .epochs
        .iter()
        .map(|d| (*d - t0).num_days() as f64 / DAYS_PER_YEAR)
        .collect();
    let positive_max = ts
        .sigma_cm
        .iter()
        .filter(|s| **s > 0.0)
        .map(|s| 1.0 / (s * s))
        .fold(0.0f64, f64::max);
    let w: Vec<f64> = ts
        .sigma_cm
        .iter()
        .map(|&s| {
            if s > 0.0 {
                1.0 / (s * s)
            } else if positive_max > 0.0 {
                positive_max
            } else {
                1.0
            }
        })
        .collect();

    let sw: f64 = w.iter().sum();
    let tbar = w.iter().zip(&t).map(|(a, b)| a * b).sum::<f64>() / sw;
    let dbar = w.iter().zip(&ts.displacement_cm).map(|(a, b)| a * b).sum::<f64>() / sw;
    let stt: f64 = w.iter().zip(&t).map(|(a, b)| a * (b - tbar).powi(2)).sum();
    if !(stt > 0.0) {
        return Err(Error::InsufficientEpochs { need: 2, have: 1 });
    }
    let std_: f64 = w
        .iter()
        .zip(&t)
        .zip(&ts.displacement_cm)
        .map(|((a, b), d)| a * (b - tbar) * (d - dbar))
        .sum();
    let slope_cm = std_ / stt;
    let intercept = dbar - slope_cm * tbar;
    let std_cm = if n > 2 {
        let rss: f64 = w
            .iter()
            .zip(&t)
            .zip(&ts.displacement_cm)
            .map(|((a, b), d)| a * (d - intercept - slope_cm * b).powi(2))
            .sum();
        (rss / (n - 2) as f64 / stt).sqrt()
    } else {
        0.0
    };
    Ok(VelocityEstimate {
        rate_mm_yr: slope_cm * 10.0,
        std_mm_yr: std_cm * 10.0,
    })
}

/// Velocity fitted directly to the pair phases of an inverted pixel.
///
/// Each pair contributes `rate · Δt` with the final weights of `inv`, so the
/// fit is the generalised least-squares line through the epoch phases
/// anchored at the reference epoch, using their full covariance. Epoch errors
/// of a network of short pairs are strongly correlated, which a fit to the
/// time series alone ignores. The rate uncertainty is scaled by the residual
/// variance of the pair fit with `m - 1` degrees of freedom.
pub fn fit_network_velocity(
    pair_phase: &[f64],
    dm: &DesignMatrix,
    inv: &PixelInversion,
    epoch_years: &[f64],
    cm_per_rad: f64,
) -> Result<VelocityEstimate> {
    let m = dm.rows();
    if pair_phase.len() != m || inv.weights.len() != m {
        return Err(Error::DimensionMismatch {
            context: "pair phases vs design matrix",
            expected: m,
            actual: pair_phase.len().min(inv.weights.len()),
        });
    }
    if epoch_years.len() != dm.n_epochs() {
        return Err(Error::DimensionMismatch {
            context: "epoch times vs design matrix",
            expected: dm.n_epochs(),
            actual: epoch_years.len(),
        });
    }
    let spans: Vec<f64> = dm.pairs().iter().map(|&(i, j)| epoch_years[j] - epoch_years[i]).collect();
    let stt: f64 = inv.weights.iter().zip(&spans).map(|(w, t)| w * t * t).sum();
    if !(stt > 0.0) {
        return Err(Error::InsufficientEpochs { need: 2, have: 1 });
    }
    let sty: f64 = inv.weights.iter().zip(&spans).zip(pair_phase).map(|((w, t), y)| w * t * y).sum();
    let rate = sty / stt;
    let std = if m > 1 {
        let rss: f64 = inv
            .weights
            .iter()
            .zip(&spans)
            .zip(pair_phase)
            .map(|((w, t), y)| w * (y - rate * t).powi(2))
            .sum();
        (rss / (m - 1) as f64 / stt).sqrt()
    } else {
        0.0
    };
    Ok(VelocityEstimate {
        rate_mm_yr: rate * cm_per_rad * 10.0,
        std_mm_yr: std * cm_per_rad.abs() * 10.0,
    })
}

/// One pixel of the velocity product.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProductPixel {
    /// Index into the scene pixel table.
    pub id: usize,
    pub lon: f64,
    pub lat: f64,
    pub incidence_deg: f64,
    pub rate_mm_yr: f64,
    pub std_mm_yr: f64,
    pub displacement_cm: Vec<f64>,
    pub sigma_cm: Vec<f64>,
    /// Set when the pixel could not be inverted; such pixels carry NaN rates.
    pub flag: Option<String>,
}

impl ProductPixel {
    pub fn is_valid(&self) -> bool {
        self.flag.is_none()
    }
}

/// LOS time series and velocities for a pixel set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplacementProduct {
    pub epochs: Vec<NaiveDate>,
    pub pixels: Vec<ProductPixel>,
}

impl DisplacementProduct {
    pub fn valid_pixels(&self) -> impl Iterator<Item = &ProductPixel> {
        self.pixels.iter().filter(|p| p.is_valid())
    }

    pub fn valid_count(&self) -> usize {
        self.valid_pixels().count()
    }

    pub fn rates_mm_yr(&self) -> Vec<f64> {
        self.valid_pixels().map(|p| p.rate_mm_yr).collect()
    }

    /// Decimal years of each epoch since the first.
    pub fn decimal_years(&self) -> Vec<f64> {
        let Some(&t0) = self.epochs.first() else {
            return Vec::new();
        };
        self.epochs
            .iter()
            .map(|d| (*d - t0).num_days() as f64 / DAYS_PER_YEAR)
            .collect()
    }

    /// Text table `pixel_id,epoch,displacement_cm,sigma_cm`, valid pixels only.
    pub fn timeseries_table(&self) -> String {
        let mut out = String::from("# insar-ts timeseries v1\n");
        for p in self.valid_pixels() {
            for (k, date) in self.epochs.iter().enumerate() {
                let _ = writeln!(
                    out,
                    "{},{},{:.6},{:.6}",
                    p.id,
                    date.format("%Y-%m-%d"),
                    p.displacement_cm[k],
                    p.sigma_cm[k]
                );
            }
        }
        out
    }
}

/// Inverts every pixel of an unwrapped, corrected stack.
///
/// `pixels[k]` describes column `k` of the stack. Pixels that fail are kept
/// with a flag and NaN rates rather than aborting the stack.
pub fn invert_stack(
    stack: &InterferogramStack,
    dm: &DesignMatrix,
    epochs: &[NaiveDate],
    pixels: &[(usize, ScenePixel)],
    radar: &RadarConstants,
    cfg: &InversionConfig,
) -> Result<DisplacementProduct> {
    if stack.is_wrapped() {
        return Err(Error::invalid("stack", "inversion needs unwrapped phases"));
    }
    if stack.pairs().pairs() != dm.pairs() {
        return Err(Error::invalid("design matrix", "pairs differ from the stack's pairs"));
    }
    if epochs.len() != dm.n_epochs() {
        return Err(Error::DimensionMismatch {
            context: "epochs vs design matrix",
            expected: dm.n_epochs(),
            actual: epochs.len(),
        });
    }
    if pixels.len() != stack.n_pixels() {
        return Err(Error::DimensionMismatch {
            context: "pixel table vs stack columns",
            expected: stack.n_pixels(),
            actual: pixels.len(),
        });
    }
    let cm_per_rad = radar.phase_to_displacement_cm(1.0);
    let years: Vec<f64> = epochs
        .iter()
        .map(|d| (*d - epochs[0]).num_days() as f64 / DAYS_PER_YEAR)
        .collect();
    let out: Vec<ProductPixel> = (0..stack.n_pixels())
        .into_par_iter()
        .map(|col| {
            let (id, px) = pixels[col];
            let y: Vec<f64> = stack.phase().column(col).iter().copied().collect();
            let q: Vec<f64> = stack.weights().column(col).iter().copied().collect();
            let result = invert_pixel(&y, dm, &q, cfg).and_then(|inv| {
                let ts = TimeSeries {
                    epochs: epochs.to_vec(),
                    displacement_cm: inv.epoch_phase.iter().map(|p| p * cm_per_rad).collect(),
                    sigma_cm: inv.epoch_sigma.iter().map(|s| s * cm_per_rad.abs()).collect(),
                };
                let v = fit_network_velocity(&y, dm, &inv, &years, cm_per_rad)?;
                Ok((ts, v))
            });
            match result {
                Ok((ts, v)) => ProductPixel {
                    id,
                    lon: px.lon,
                    lat: px.lat,
                    incidence_deg: px.incidence_deg,
                    rate_mm_yr: v.rate_mm_yr,
                    std_mm_yr: v.std_mm_yr,
                    displacement_cm: ts.displacement_cm,
                    sigma_cm: ts.sigma_cm,
                    flag: None,
                },
                Err(e) => ProductPixel {
                    id,
                    lon: px.lon,
                    lat: px.lat,
                    incidence_deg: px.incidence_deg,
                    rate_mm_yr: f64::NAN,
                    std_mm_yr: f64::NAN,
                    displacement_cm: vec![f64::NAN; epochs.len()],
                    sigma_cm: vec![f64::NAN; epochs.len()],
                    flag: Some(e.to_string()),
                },
            }
        })
        .collect();
    Ok(DisplacementProduct {
        epochs: epochs.to_vec(),
        pixels: out,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pairnet::{design_matrix, PairSet};

    fn dates(days: &[u64]) -> Vec<NaiveDate> {
        let d0 = NaiveDate::from_ymd_opt(2016, 1, 1).unwrap();
        days.iter().map(|&d| d0 + chrono::Days::new(d)).collect()
    }

    #[test]
    fn triangle_network_example() {
        let ps = PairSet::from_pairs([(0, 1), (1, 2), (0, 2)]).unwrap();
        let dm = design_matrix(&ps, 3, 0).unwrap();
        // rows are sorted: (0,1), (0,2), (1,2)
        let inv = invert_pixel(&[1.0, 3.0, 2.0], &dm, &[1.0; 3], &InversionConfig::default()).unwrap();
        assert_eq!(inv.epoch_phase[0], 0.0);
        assert!((inv.epoch_phase[1] - 1.0).abs() < 1e-12);
        assert!((inv.epoch_phase[2] - 3.0).abs() < 1e-12);
        assert!(inv.residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn reweighting_fixed_point_for_equal_residuals() {
        let w = reweight(&[0.3, -0.3, 0.3, -0.3], &[1.0; 4], TUKEY_C, 1e-12);
        assert_eq!(w, vec![1.0; 4]);
    }

    #[test]
    fn non_positive_weights_are_rejected() {
        let ps = PairSet::from_pairs([(0, 1), (1, 2)]).unwrap();
        let dm = design_matrix(&ps, 3, 0).unwrap();
        assert!(invert_pixel(&[1.0, 1.0], &dm, &[1.0, 0.0], &InversionConfig::default()).is_err());
    }

    #[test]
    fn velocity_examples() {
        let epochs = dates(&[0, 365, 730, 1096, 1461]);
        let t: Vec<f64> = epochs
            .iter()
            .map(|d| (*d - epochs[0]).num_days() as f64 / DAYS_PER_YEAR)
            .collect();
        let ts = TimeSeries {
            epochs: epochs.clone(),
            displacement_cm: t.iter().map(|x| 0.2 * x).collect(),
            sigma_cm: vec![0.0; 5],
        };
        let v = fit_velocity(&ts).unwrap();
        assert!((v.rate_mm_yr - 2.0).abs() < 1e-12);
        assert!(v.std_mm_yr < 1e-12);

        let flat = TimeSeries {
            epochs,
            displacement_cm: vec![0.7; 5],
            sigma_cm: vec![0.1; 5],
        };
        assert!(fit_velocity(&flat).unwrap().rate_mm_yr.abs() < 1e-12);
    }

    #[test]
    fn velocity_needs_two_epochs() {
        let ts = TimeSeries {
            epochs: dates(&[0]),
            displacement_cm: vec![0.0],
            sigma_cm: vec![0.0],
        };
        assert!(matches!(fit_velocity(&ts), Err(Error::InsufficientEpochs { .. })));
    }

    #[test]
    fn velocity_is_equivariant() {
        let epochs = dates(&[0, 40, 100, 250, 400, 800]);
        let t: Vec<f64> = epochs
            .iter()
            .map(|d| (*d - epochs[0]).num_days() as f64 / DAYS_PER_YEAR)
            .collect();
        let base = vec![0.0, 0.13, -0.05, 0.2, 0.11, -0.3];
        let sig = vec![0.0, 0.1, 0.12, 0.1, 0.15, 0.1];
        let v0 = fit_velocity(&TimeSeries { epochs: epochs.clone(), displacement_cm: base.clone(), sigma_cm: sig.clone() }).unwrap();
        let c = 0.37; // cm/yr
        let shifted: Vec<f64> = base.iter().zip(&t).map(|(d, x)| d + c * x).collect();
        let v1 = fit_velocity(&TimeSeries { epochs, displacement_cm: shifted, sigma_cm: sig }).unwrap();
        assert!((v1.rate_mm_yr - v0.rate_mm_yr - 3.7).abs() < 1e-10);
        assert!((v1.std_mm_yr - v0.std_mm_yr).abs() < 1e-10);
    }

    #[test]
    fn wrapped_stack_is_refused() {
        let ps = PairSet::from_pairs([(0, 1)]).unwrap();
        let dm = design_matrix(&ps, 2, 0).unwrap();
        let stack = InterferogramStack::new(
            ps,
            DMatrix::zeros(1, 1),
            true,
            DMatrix::from_element(1, 1, 1.0),
        )
        .unwrap();
        let px = ScenePixel { x: 0.0, y: 0.0, lon: 0.0, lat: 0.0, elevation_m: 0.0, incidence_deg: 38.9 };
        let r = invert_stack(&stack, &dm, &dates(&[0, 12]), &[(0, px)], &RadarConstants::default(), &InversionConfig::default());
        assert!(r.is_err());
    }
}
