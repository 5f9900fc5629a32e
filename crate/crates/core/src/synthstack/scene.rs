//! Parametric description of a synthetic scene.
//!
//! A scene file names the grid, geometry, acquisition cadence, deformation
//! features and nuisance magnitudes; [`SceneConfig::build`] expands it into
//! a full [`SceneTruth`] deterministically from the seed.

use std::path::Path;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{ScenePixel, SceneTruth};
use crate::error::{Error, Result};
use crate::geomodel::{RadarConstants, ViewGeometry};
use crate::georef::{GiaGrid, GnssTie};
use crate::pairnet::AcquisitionCatalog;

const METERS_PER_DEG_LAT: f64 = 110_540.0;
const METERS_PER_DEG_LON_EQUATOR: f64 = 111_320.0;

// Random streams for scene construction. Stack noise uses streams 0..n_pixels.
const STREAM_CATALOG: u64 = 1 << 40;
const STREAM_TOPO: u64 = STREAM_CATALOG + 1;
const STREAM_NUISANCE: u64 = STREAM_CATALOG + 2;
const STREAM_COHERENCE: u64 = STREAM_CATALOG + 3;
const STREAM_DEM: u64 = STREAM_CATALOG + 4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub seed: u64,
    pub grid: GridConfig,
    pub geometry: GeometryConfig,
    pub catalog: CatalogConfig,
    pub deformation: DeformationConfig,
    pub topography: TopographyConfig,
    pub nuisance: NuisanceConfig,
    pub noise: NoiseConfig,
    pub gnss: GnssConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub width: usize,
    pub height: usize,
    pub spacing_m: f64,
    /// Longitude/latitude of pixel (0, 0), the north-west corner.
    pub origin_lon: f64,
    pub origin_lat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryConfig {
    pub incidence_deg: f64,
    pub heading_deg: f64,
    pub wavelength_m: f64,
    pub slant_range_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CatalogConfig {
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub epochs: usize,
    /// Baseline coordinates are drawn uniformly from `±perp_spread_m`.
    pub perp_spread_m: f64,
}

/// A compact deformation feature: `peak_mm_yr` at the center, blending to the
/// background with the biweight profile `(1 - (r/R)^2)^2` for `r < R`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Feature {
    pub x: f64,
    pub y: f64,
    pub radius_px: f64,
    pub peak_mm_yr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeformationConfig {
    /// Uniform vertical GIA rate; its LOS projection is the background rate.
    pub gia_vertical_mm_yr: f64,
    pub features: Vec<Feature>,
    pub seasonal_amplitude_mm: f64,
    pub seasonal_phase_rad: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopographyConfig {
    pub base_m: f64,
    pub hills: usize,
    pub max_hill_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NuisanceConfig {
    pub atmo_sigma_rad_per_m: f64,
    pub ramp_sigma_rad_per_px: f64,
    pub ramp_offset_sigma_rad: f64,
    pub dem_error_sigma_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    pub sigma_rad: f64,
    /// Fraction of pixels that stay coherent; the rest get uniform phase.
    pub coherent_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GnssConfig {
    pub station_id: String,
    /// Station position in pixel coordinates; snapped to the nearest pixel.
    pub x: f64,
    pub y: f64,
    pub sigma_mm_yr: f64,
}

impl Default for SceneConfig {
    /// 100 × 100 pixels at 25 m, 30 acquisitions over 2015-03 .. 2022-08, a
    /// subsidence bowl peaking at -25.7 mm/yr and an uplift spot at +8.7 mm/yr.
    fn default() -> Self {
        SceneConfig {
            seed: 20230826,
            grid: GridConfig {
                width: 100,
                height: 100,
                spacing_m: 25.0,
                origin_lon: -73.99,
                origin_lat: 40.76,
            },
            geometry: GeometryConfig {
                incidence_deg: 38.9,
                heading_deg: 347.0,
                wavelength_m: crate::geomodel::SENTINEL1_WAVELENGTH_M,
                slant_range_m: 880_000.0,
            },
            catalog: CatalogConfig {
                start: NaiveDate::from_ymd_opt(2015, 3, 12).unwrap(),
                end: NaiveDate::from_ymd_opt(2022, 8, 26).unwrap(),
                epochs: 30,
                perp_spread_m: 70.0,
            },
            deformation: DeformationConfig {
                gia_vertical_mm_yr: -1.5,
                features: vec![
                    Feature {
                        x: 48.0,
                        y: 52.0,
                        radius_px: 30.0,
                        peak_mm_yr: -25.7,
                    },
                    Feature {
                        x: 82.0,
                        y: 18.0,
                        radius_px: 10.0,
                        peak_mm_yr: 8.7,
                    },
                ],
                seasonal_amplitude_mm: 0.0,
                seasonal_phase_rad: 0.0,
            },
            topography: TopographyConfig {
                base_m: 5.0,
                hills: 6,
                max_hill_m: 60.0,
            },
            nuisance: NuisanceConfig {
                atmo_sigma_rad_per_m: 0.004,
                ramp_sigma_rad_per_px: 0.003,
                ramp_offset_sigma_rad: 0.5,
                dem_error_sigma_m: 0.0,
            },
            noise: NoiseConfig {
                sigma_rad: 0.5,
                coherent_fraction: 0.3,
            },
            gnss: GnssConfig {
                station_id: "SYN1".to_string(),
                x: 12.0,
                y: 88.0,
                sigma_mm_yr: 0.3,
            },
        }
    }
}

/// Output of [`SceneConfig::build`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticScene {
    pub catalog: AcquisitionCatalog,
    pub truth: SceneTruth,
    pub gnss: GnssTie,
    pub gia: GiaGrid,
    /// Index of the pixel the GNSS station sits on.
    pub station_pixel: usize,
}

impl SceneConfig {
    /// The default scene with every nuisance and noise term switched off.
    pub fn noiseless() -> Self {
        let mut cfg = SceneConfig::default();
        cfg.nuisance = NuisanceConfig {
            atmo_sigma_rad_per_m: 0.0,
            ramp_sigma_rad_per_px: 0.0,
            ramp_offset_sigma_rad: 0.0,
            dem_error_sigma_m: 0.0,
        };
        cfg.noise.sigma_rad = 0.0;
        cfg
    }

    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let cfg: SceneConfig = toml::from_str(text).map_err(|e| Error::parse(origin, e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("scene config is always representable as TOML")
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.width < 2 || g.height < 2 {
            return Err(Error::invalid("grid.width/height", "need at least 2 × 2 pixels"));
        }
        if !(g.spacing_m > 0.0) {
            return Err(Error::invalid("grid.spacing_m", "must be > 0"));
        }
        ViewGeometry::new(self.geometry.incidence_deg, self.geometry.heading_deg)?;
        RadarConstants::new(self.geometry.wavelength_m)?;
        if !(self.geometry.slant_range_m > 0.0) {
            return Err(Error::invalid("geometry.slant_range_m", "must be > 0"));
        }
        let c = &self.catalog;
        if c.epochs < 2 {
            return Err(Error::invalid("catalog.epochs", "need at least 2 acquisitions"));
        }
        if (c.end - c.start).num_days() < (c.epochs as i64 - 1) {
            return Err(Error::invalid("catalog.end", "span too short for one acquisition per day"));
        }
        if !(c.perp_spread_m >= 0.0) {
            return Err(Error::invalid("catalog.perp_spread_m", "must be >= 0"));
        }
        for f in &self.deformation.features {
            if !(f.radius_px > 0.0) {
                return Err(Error::invalid("deformation.features.radius_px", "must be > 0"));
            }
        }
        let n = &self.nuisance;
        for (field, v) in [
            ("nuisance.atmo_sigma_rad_per_m", n.atmo_sigma_rad_per_m),
            ("nuisance.ramp_sigma_rad_per_px", n.ramp_sigma_rad_per_px),
            ("nuisance.ramp_offset_sigma_rad", n.ramp_offset_sigma_rad),
            ("nuisance.dem_error_sigma_m", n.dem_error_sigma_m),
            ("noise.sigma_rad", self.noise.sigma_rad),
            ("topography.max_hill_m", self.topography.max_hill_m),
        ] {
            if !(v >= 0.0) {
                return Err(Error::invalid(field, format!("{v} must be >= 0")));
            }
        }
        if !(0.0..=1.0).contains(&self.noise.coherent_fraction) {
            return Err(Error::invalid("noise.coherent_fraction", "must lie in [0, 1]"));
        }
        if !(self.gnss.sigma_mm_yr > 0.0) {
            return Err(Error::invalid("gnss.sigma_mm_yr", "must be > 0"));
        }
        Ok(())
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(stream);
        rng
    }

    pub fn geometry(&self) -> Result<ViewGeometry> {
        ViewGeometry::new(self.geometry.incidence_deg, self.geometry.heading_deg)
    }

    /// Pixel coordinates to (lon, lat).
    pub fn lonlat(&self, x: f64, y: f64) -> (f64, f64) {
        let g = &self.grid;
        let lon_step = g.spacing_m / (METERS_PER_DEG_LON_EQUATOR * g.origin_lat.to_radians().cos());
        let lat_step = g.spacing_m / METERS_PER_DEG_LAT;
        (g.origin_lon + x * lon_step, g.origin_lat - y * lat_step)
    }

    pub fn build_catalog(&self) -> Result<AcquisitionCatalog> {
        let c = &self.catalog;
        let span = (c.end - c.start).num_days();
        let mut rng = self.rng(STREAM_CATALOG);
        let mut dates = Vec::with_capacity(c.epochs);
        let mut perp = Vec::with_capacity(c.epochs);
        for k in 0..c.epochs {
            let offset = (k as f64 * span as f64 / (c.epochs - 1) as f64).round() as u64;
            dates.push(c.start + chrono::Days::new(offset));
            perp.push(if c.perp_spread_m > 0.0 {
                rng.random_range(-c.perp_spread_m..=c.perp_spread_m)
            } else {
                0.0
            });
        }
        AcquisitionCatalog::from_parts(&dates, &perp)
    }

    pub fn build(&self) -> Result<SyntheticScene> {
        self.validate()?;
        let catalog = self.build_catalog()?;
        let geometry = self.geometry()?;
        let radar = RadarConstants::new(self.geometry.wavelength_m)?;
        let (w, h) = (self.grid.width, self.grid.height);
        let n = w * h;

        let mut rng = self.rng(STREAM_TOPO);
        let hills: Vec<(f64, f64, f64, f64)> = (0..self.topography.hills)
            .map(|_| {
                (
                    rng.random_range(0.0..w as f64),
                    rng.random_range(0.0..h as f64),
                    rng.random_range(0.08..0.25) * w.max(h) as f64,
                    rng.random_range(0.0..=1.0) * self.topography.max_hill_m,
                )
            })
            .collect();

        let pixels: Vec<ScenePixel> = (0..n)
            .map(|k| {
                let (x, y) = ((k % w) as f64, (k / w) as f64);
                let (lon, lat) = self.lonlat(x, y);
                let elevation_m = self.topography.base_m
                    + hills
                        .iter()
                        .map(|&(cx, cy, s, a)| {
                            a * (-((x - cx).powi(2) + (y - cy).powi(2)) / (2.0 * s * s)).exp()
                        })
                        .sum::<f64>();
                ScenePixel {
                    x,
                    y,
                    lon,
                    lat,
                    elevation_m,
                    incidence_deg: geometry.incidence_deg(),
                }
            })
            .collect();

        let background = geometry.project_vertical_to_los(self.deformation.gia_vertical_mm_yr);
        let velocity_mm_yr: Vec<f64> = pixels
            .iter()
            .map(|p| {
                let mut v = background;
                for f in &self.deformation.features {
                    let s2 = ((p.x - f.x).powi(2) + (p.y - f.y).powi(2)) / (f.radius_px * f.radius_px);
                    if s2 < 1.0 {
                        v += (f.peak_mm_yr - background) * (1.0 - s2) * (1.0 - s2);
                    }
                }
                v
            })
            .collect();

        let n_epochs = catalog.len();
        let nz = &self.nuisance;
        let mut rng = self.rng(STREAM_NUISANCE);
        let atmo = normal(nz.atmo_sigma_rad_per_m);
        let slope = normal(nz.ramp_sigma_rad_per_px);
        let offset = normal(nz.ramp_offset_sigma_rad);
        let atmo_coeff_per_epoch: Vec<f64> = (0..n_epochs).map(|_| atmo.sample(&mut rng)).collect();
        let ramp_coeffs_per_epoch: Vec<[f64; 3]> = (0..n_epochs)
            .map(|_| [offset.sample(&mut rng), slope.sample(&mut rng), slope.sample(&mut rng)])
            .collect();

        let station_pixel = nearest_pixel(&pixels, self.gnss.x, self.gnss.y);
        let forced: Vec<usize> = self
            .deformation
            .features
            .iter()
            .map(|f| nearest_pixel(&pixels, f.x, f.y))
            .chain(std::iter::once(station_pixel))
            .collect();
        let mut rng = self.rng(STREAM_COHERENCE);
        let mut decorrelated: Vec<bool> = (0..n)
            .map(|_| rng.random_range(0.0..1.0) >= self.noise.coherent_fraction)
            .collect();
        for &k in &forced {
            decorrelated[k] = false;
        }

        let dem_error_m = if nz.dem_error_sigma_m > 0.0 {
            let mut rng = self.rng(STREAM_DEM);
            let dist = normal(nz.dem_error_sigma_m);
            (0..n).map(|_| dist.sample(&mut rng)).collect()
        } else {
            Vec::new()
        };

        let seasonal_amplitude_mm = if self.deformation.seasonal_amplitude_mm != 0.0 {
            vec![self.deformation.seasonal_amplitude_mm; n]
        } else {
            Vec::new()
        };

        let station = pixels[station_pixel];
        let gnss = GnssTie::new(
            &self.gnss.station_id,
            station.lon,
            station.lat,
            velocity_mm_yr[station_pixel] / geometry.incidence_deg().to_radians().cos(),
            self.gnss.sigma_mm_yr,
        )?;

        let (lon_a, lat_a) = self.lonlat(-2.0, -2.0);
        let (lon_b, lat_b) = self.lonlat(w as f64 + 1.0, h as f64 + 1.0);
        let gia = GiaGrid::uniform(
            lon_a.min(lon_b),
            lat_a.min(lat_b),
            lon_a.max(lon_b),
            lat_a.max(lat_b),
            5,
            5,
            self.deformation.gia_vertical_mm_yr,
        )?;

        let truth = SceneTruth {
            pixels,
            velocity_mm_yr,
            seasonal_amplitude_mm,
            seasonal_phase_rad: self.deformation.seasonal_phase_rad,
            dem_error_m,
            atmo_coeff_per_epoch,
            ramp_coeffs_per_epoch,
            noise_sigma_rad: self.noise.sigma_rad,
            decorrelated,
            seed: self.seed,
            radar,
            geometry,
            slant_range_m: self.geometry.slant_range_m,
        };
        truth.validate(n_epochs)?;

        Ok(SyntheticScene {
            catalog,
            truth,
            gnss,
            gia,
            station_pixel,
        })
    }
}

fn normal(sigma: f64) -> Normal<f64> {
    Normal::new(0.0, sigma).expect("sigma validated non-negative")
}

fn nearest_pixel(pixels: &[ScenePixel], x: f64, y: f64) -> usize {
    pixels
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| {
            let da = (a.x - x).powi(2) + (a.y - y).powi(2);
            let db = (b.x - x).powi(2) + (b.y - y).powi(2);
            da.total_cmp(&db)
        })
        .map(|(k, _)| k)
        .unwrap_or(0)
}
