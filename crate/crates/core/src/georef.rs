//! Absolute calibration of the velocity field and its summary statistics.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geomodel::ViewGeometry;
use crate::robust::lower_median;
use crate::tsinvert::DisplacementProduct;

const EARTH_RADIUS_M: f64 = 6_371_008.8;
const GIA_HEADER: &str = "# insar-ts gia grid v1";

/// Default search radius around the GNSS station.
pub const DEFAULT_TIE_RADIUS_M: f64 = 200.0;

/// Great-circle distance in meters.
pub fn haversine_m(lon1: f64, lat1: f64, lon2: f64, lat2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * a.sqrt().min(1.0).asin()
}

/// A GNSS station with a known vertical rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnssTie {
    pub station_id: String,
    pub lon: f64,
    pub lat: f64,
    pub vertical_rate_mm_yr: f64,
    pub sigma_mm_yr: f64,
}

impl GnssTie {
    pub fn new(station_id: &str, lon: f64, lat: f64, vertical_rate_mm_yr: f64, sigma_mm_yr: f64) -> Result<Self> {
        if station_id.is_empty() || station_id.contains([',', '\n']) {
            return Err(Error::invalid("station_id", "must be non-empty without commas"));
        }
        if !(lon.is_finite() && lat.is_finite() && vertical_rate_mm_yr.is_finite()) {
            return Err(Error::invalid("gnss tie", "position and rate must be finite"));
        }
        if !(sigma_mm_yr > 0.0) {
            return Err(Error::invalid("sigma_mm_yr", "must be > 0"));
        }
        Ok(GnssTie {
            station_id: station_id.to_string(),
            lon,
            lat,
            vertical_rate_mm_yr,
            sigma_mm_yr,
        })
    }

    /// One-line record `station,lon,lat,vertical_rate_mm_yr,sigma_mm_yr`.
    /// Blank lines and `#` comments around it are ignored.
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut records = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let line = records
            .next()
            .ok_or_else(|| Error::parse(origin, "no GNSS record"))?;
        if records.next().is_some() {
            return Err(Error::parse(origin, "expected exactly one GNSS record"));
        }
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(Error::parse(origin, format!("expected 5 fields, found {}", f.len())));
        }
        let num = |k: usize, name: &str| {
            f[k].parse::<f64>()
                .map_err(|_| Error::parse(origin, format!("bad {name} `{}`", f[k])))
        };
        Self::new(f[0], num(1, "lon")?, num(2, "lat")?, num(3, "rate")?, num(4, "sigma")?)
            .map_err(|e| Error::parse(origin, e.to_string()))
    }

    pub fn to_text(&self) -> String {
        format!(
            "{},{},{},{},{}\n",
            self.station_id, self.lon, self.lat, self.vertical_rate_mm_yr, self.sigma_mm_yr
        )
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

/// Regular lon/lat grid of vertical GIA rates. Row `r` lies at
/// `lat_min + r * lat_step`, column `c` at `lon_min + c * lon_step`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GiaGrid {
    lon_min: f64,
    lat_min: f64,
    lon_step: f64,
    lat_step: f64,
    n_lon: usize,
    n_lat: usize,
    /// Row-major, south to north.
    values: Vec<f64>,
}

impl GiaGrid {
    pub fn new(lon_min: f64, lat_min: f64, lon_step: f64, lat_step: f64, n_lon: usize, n_lat: usize, values: Vec<f64>) -> Result<Self> {
        if !(lon_step > 0.0 && lat_step > 0.0) {
            return Err(Error::invalid("gia grid steps", "must be > 0 (grid monotone)"));
        }
        if n_lon < 2 || n_lat < 2 {
            return Err(Error::invalid("gia grid size", "need at least 2 × 2 nodes"));
        }
        if values.len() != n_lon * n_lat {
            return Err(Error::DimensionMismatch {
                context: "gia grid values",
                expected: n_lon * n_lat,
                actual: values.len(),
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("gia grid values", "must be finite"));
        }
        Ok(GiaGrid {
            lon_min,
            lat_min,
            lon_step,
            lat_step,
            n_lon,
            n_lat,
            values,
        })
    }

    /// A constant-valued grid spanning the given box.
    pub fn uniform(lon_min: f64, lat_min: f64, lon_max: f64, lat_max: f64, n_lon: usize, n_lat: usize, value: f64) -> Result<Self> {
        let lon_step = (lon_max - lon_min) / (n_lon.max(2) - 1) as f64;
        let lat_step = (lat_max - lat_min) / (n_lat.max(2) - 1) as f64;
        Self::new(lon_min, lat_min, lon_step, lat_step, n_lon, n_lat, vec![value; n_lon * n_lat])
    }

    pub fn node(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.n_lon + col]
    }

    /// Bilinear interpolation; `None` outside the grid.
    pub fn bilinear(&self, lon: f64, lat: f64) -> Option<f64> {
        let (max_x, max_y) = ((self.n_lon - 1) as f64, (self.n_lat - 1) as f64);
        // Points on the outer edge may land a rounding step outside.
        let snap = |f: f64, max: f64| if f < 0.0 && f > -1e-9 { 0.0 } else if f > max && f < max + 1e-9 { max } else { f };
        let fx = snap((lon - self.lon_min) / self.lon_step, max_x);
        let fy = snap((lat - self.lat_min) / self.lat_step, max_y);
        if !(fx >= 0.0 && fx <= max_x && fy >= 0.0 && fy <= max_y) {
            return None;
        }
        let c0 = (fx.floor() as usize).min(self.n_lon - 2);
        let r0 = (fy.floor() as usize).min(self.n_lat - 2);
        let (tx, ty) = (fx - c0 as f64, fy - r0 as f64);
        let v00 = self.node(c0, r0);
        let v10 = self.node(c0 + 1, r0);
        let v01 = self.node(c0, r0 + 1);
        let v11 = self.node(c0 + 1, r0 + 1);
        Some(
            v00 * (1.0 - tx) * (1.0 - ty)
                + v10 * tx * (1.0 - ty)
                + v01 * (1.0 - tx) * ty
                + v11 * tx * ty,
        )
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .enumerate()
            .filter(|(_, l)| !l.is_empty());
        match lines.next() {
            Some((_, l)) if l == GIA_HEADER => {}
            _ => return Err(Error::parse(origin, format!("missing `{GIA_HEADER}` header"))),
        }
        let mut data = lines.filter(|(_, l)| !l.starts_with('#'));
        let (_, dims) = data
            .next()
            .ok_or_else(|| Error::parse(origin, "missing grid geometry line"))?;
        let g: Vec<&str> = dims.split(',').map(str::trim).collect();
        if g.len() != 6 {
            return Err(Error::parse(origin, "geometry line needs 6 fields"));
        }
        let f = |k: usize| {
            g[k].parse::<f64>()
                .map_err(|_| Error::parse(origin, format!("bad geometry field `{}`", g[k])))
        };
        let u = |k: usize| {
            g[k].parse::<usize>()
                .map_err(|_| Error::parse(origin, format!("bad grid size `{}`", g[k])))
        };
        let (n_lon, n_lat) = (u(4)?, u(5)?);
        let mut values = Vec::with_capacity(n_lon * n_lat);
        for (lineno, row) in data {
            let before = values.len();
            for v in row.split(',') {
                values.push(v.trim().parse::<f64>().map_err(|_| {
                    Error::parse(origin, format!("line {}: bad value `{}`", lineno + 1, v.trim()))
                })?);
            }
            if values.len() - before != n_lon {
                return Err(Error::parse(origin, format!("line {}: expected {n_lon} values", lineno + 1)));
            }
        }
        Self::new(f(0)?, f(1)?, f(2)?, f(3)?, n_lon, n_lat, values).map_err(|e| Error::parse(origin, e.to_string()))
    }

    pub fn to_text(&self) -> String {
        let mut out = format!("{GIA_HEADER}\n");
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            self.lon_min, self.lat_min, self.lon_step, self.lat_step, self.n_lon, self.n_lat
        );
        for row in self.values.chunks(self.n_lon) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            out.push_str(&line.join(","));
            out.push('\n');
        }
        out
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }
}

/// Shifts every rate by one constant so the mean of valid pixels within
/// `radius_m` of the station equals the station's LOS-projected rate.
/// Time series are shifted by the same rate. Returns the offset in mm/yr.
pub fn calibrate_to_gnss(
    product: &mut DisplacementProduct,
    tie: &GnssTie,
    geom: &ViewGeometry,
    radius_m: f64,
) -> Result<f64> {
    let near: Vec<f64> = product
        .valid_pixels()
        .filter(|p| haversine_m(p.lon, p.lat, tie.lon, tie.lat) <= radius_m)
        .map(|p| p.rate_mm_yr)
        .collect();
    if near.is_empty() {
        return Err(Error::NoPixelsNearStation {
            station: tie.station_id.clone(),
            radius_m,
        });
    }
    let mean = near.iter().sum::<f64>() / near.len() as f64;
    let offset = geom.project_vertical_to_los(tie.vertical_rate_mm_yr) - mean;
    shift_rates(product, |_| Some(offset))?;
    Ok(offset)
}

/// Removes the LOS projection of a vertical GIA model, pixel by pixel.
/// Standard deviations are untouched.
pub fn subtract_gia(product: &mut DisplacementProduct, grid: &GiaGrid, geom: &ViewGeometry) -> Result<()> {
    for p in product.valid_pixels() {
        if grid.bilinear(p.lon, p.lat).is_none() {
            return Err(Error::PixelOutsideGrid {
                pixel: p.id,
                lon: p.lon,
                lat: p.lat,
            });
        }
    }
    shift_rates(product, |p| {
        grid.bilinear(p.lon, p.lat)
            .map(|gia| -geom.project_vertical_to_los(gia))
    })
}

fn shift_rates(
    product: &mut DisplacementProduct,
    offset_of: impl Fn(&crate::tsinvert::ProductPixel) -> Option<f64>,
) -> Result<()> {
    let years = product.decimal_years();
    for p in product.pixels.iter_mut().filter(|p| p.is_valid()) {
        let Some(offset) = offset_of(p) else { continue };
        p.rate_mm_yr += offset;
        for (d, t) in p.displacement_cm.iter_mut().zip(&years) {
            *d += offset * 0.1 * t;
        }
    }
    Ok(())
}

/// Order statistics of a velocity field (mm/yr).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldStats {
    pub count: usize,
    /// Lower median for even counts.
    pub median: f64,
    pub min: f64,
    pub max: f64,
    /// Sorted `(value, fraction of pixels <= value)`; one entry per distinct value.
    pub cdf: Vec<(f64, f64)>,
}

pub fn field_stats(product: &DisplacementProduct) -> Result<FieldStats> {
    stats_of(&product.rates_mm_yr())
}

/// [`field_stats`] for a bare list of rates.
pub fn stats_of(rates: &[f64]) -> Result<FieldStats> {
    if rates.is_empty() {
        return Err(Error::EmptyProduct);
    }
    if rates.iter().any(|r| !r.is_finite()) {
        return Err(Error::invalid("rates", "non-finite velocity in product"));
    }
    let mut sorted = rates.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let mut cdf: Vec<(f64, f64)> = Vec::new();
    for (k, &v) in sorted.iter().enumerate() {
        let frac = if k + 1 == n { 1.0 } else { (k + 1) as f64 / n as f64 };
        match cdf.last_mut() {
            Some(last) if last.0 == v => last.1 = frac,
            _ => cdf.push((v, frac)),
        }
    }
    Ok(FieldStats {
        count: n,
        median: lower_median(&sorted).expect("non-empty"),
        min: sorted[0],
        max: sorted[n - 1],
        cdf,
    })
}
