//! Iteratively reweighted least squares with Tukey or Huber weights.
//!
//! Residuals are normalised by a MAD scale estimate, `s = median|r| / 0.6745`,
//! recomputed every iteration. The scale is floored relative to the data
//! magnitude so an exact fit (all inlier residuals at rounding level) still
//! produces a hard cut between inliers and outliers.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Tuning constant giving 95% efficiency under Gaussian noise.
pub const TUKEY_C: f64 = 4.685;

/// Huber tuning constant, 95% efficiency under Gaussian noise.
pub const HUBER_C: f64 = 1.345;

/// Consistency factor turning a median absolute residual into a Gaussian sigma.
pub const MAD_TO_SIGMA: f64 = 0.6745;

/// Tukey biweight for a normalised residual `u`.
pub fn tukey_weight(u: f64, c: f64) -> f64 {
    let t = u / c;
    if t.abs() >= 1.0 {
        0.0
    } else {
        let s = 1.0 - t * t;
        s * s
    }
}

/// Huber weight for a normalised residual `u`.
pub fn huber_weight(u: f64, c: f64) -> f64 {
    if u.abs() <= c {
        1.0
    } else {
        c / u.abs()
    }
}

/// Robust loss used by [`irls`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Loss {
    /// Redescending; rejects gross outliers outright.
    Tukey,
    /// Convex, so the fit has a single minimum.
    Huber,
}

/// Lower median of `values` (the smaller middle element for even counts).
/// NaNs sort last. Returns `None` for an empty slice.
pub fn lower_median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    let k = (v.len() - 1) / 2;
    let (_, m, _) = v.select_nth_unstable_by(k, |a, b| a.total_cmp(b));
    Some(*m)
}

/// Robust residual scale: `median|r| / 0.6745`, never below `floor`.
pub fn mad_scale(residuals: &[f64], floor: f64) -> f64 {
    let abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
    match lower_median(&abs) {
        Some(m) => (m / MAD_TO_SIGMA).max(floor),
        None => floor,
    }
}

/// Scale floor for data of magnitude `max_abs`.
pub fn scale_floor(max_abs: f64) -> f64 {
    1e-12 * (1.0 + max_abs)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IrlsConfig {
    pub loss: Loss,
    pub c: f64,
    pub max_iter: usize,
    /// Stop once `max|Δβ| <= tol * (1 + max|β|)`.
    pub tol: f64,
}

impl Default for IrlsConfig {
    fn default() -> Self {
        IrlsConfig {
            loss: Loss::Tukey,
            c: TUKEY_C,
            max_iter: 50,
            tol: 1e-8,
        }
    }
}

impl IrlsConfig {
    pub fn huber() -> Self {
        IrlsConfig {
            loss: Loss::Huber,
            c: HUBER_C,
            ..IrlsConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IrlsFit {
    pub coeffs: DVector<f64>,
    /// Final robustness weights (excluding prior weights), in `[0, 1]`.
    pub weights: Vec<f64>,
    pub residuals: Vec<f64>,
    pub scale: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Weighted least squares through the normal equations.
pub fn weighted_lstsq(design: &DMatrix<f64>, y: &[f64], w: &[f64]) -> Result<DVector<f64>> {
    let (m, n) = design.shape();
    if y.len() != m || w.len() != m {
        return Err(Error::DimensionMismatch {
            context: "weighted least squares",
            expected: m,
            actual: y.len().min(w.len()),
        });
    }
    let mut ata = DMatrix::<f64>::zeros(n, n);
    let mut aty = DVector::<f64>::zeros(n);
    for r in 0..m {
        if w[r] == 0.0 {
            continue;
        }
        for a in 0..n {
            let xa = design[(r, a)] * w[r];
            if xa == 0.0 {
                continue;
            }
            aty[a] += xa * y[r];
            for b in a..n {
                ata[(a, b)] += xa * design[(r, b)];
            }
        }
    }
    for a in 0..n {
        for b in 0..a {
            ata[(a, b)] = ata[(b, a)];
        }
    }
    let chol = ata.cholesky().ok_or(Error::RankDeficient)?;
    Ok(chol.solve(&aty))
}

/// Robust linear regression `y ≈ design · β` with Tukey reweighting.
///
/// `prior` holds per-observation weights (use ones for none). The first pass
/// is ordinary weighted least squares.
pub fn irls(design: &DMatrix<f64>, y: &[f64], prior: &[f64], cfg: &IrlsConfig) -> Result<IrlsFit> {
    let m = design.nrows();
    if prior.len() != m {
        return Err(Error::DimensionMismatch {
            context: "irls prior weights",
            expected: m,
            actual: prior.len(),
        });
    }
    let floor = scale_floor(y.iter().fold(0.0f64, |a, v| a.max(v.abs())));
    let mut robust_w = vec![1.0; m];
    let mut coeffs = weighted_lstsq(design, y, prior)?;
    let mut residuals = residuals_of(design, y, &coeffs);
    let mut scale = floor;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < cfg.max_iter {
        iterations += 1;
        let normalised: Vec<f64> = residuals
            .iter()
            .zip(prior)
            .filter(|(_, &p)| p > 0.0)
            .map(|(r, p)| r * p.sqrt())
            .collect();
        scale = mad_scale(&normalised, floor);
        for k in 0..m {
            let u = residuals[k] * prior[k].sqrt() / scale;
            robust_w[k] = match cfg.loss {
                Loss::Tukey => tukey_weight(u, cfg.c),
                Loss::Huber => huber_weight(u, cfg.c),
            };
        }
        let combined: Vec<f64> = robust_w.iter().zip(prior).map(|(a, b)| a * b).collect();
        let next = weighted_lstsq(design, y, &combined)?;
        let step = (&next - &coeffs).amax();
        let size = next.amax();
        coeffs = next;
        residuals = residuals_of(design, y, &coeffs);
        if step <= cfg.tol * (1.0 + size) {
            converged = true;
            break;
        }
    }

    Ok(IrlsFit {
        coeffs,
        weights: robust_w,
        residuals,
        scale,
        iterations,
        converged,
    })
}

fn residuals_of(design: &DMatrix<f64>, y: &[f64], coeffs: &DVector<f64>) -> Vec<f64> {
    let fitted = design * coeffs;
    y.iter().zip(fitted.iter()).map(|(a, b)| a - b).collect()
}
