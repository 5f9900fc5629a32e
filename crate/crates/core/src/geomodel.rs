//! Viewing geometry and the phase/displacement conversions.
//!
//! Sign convention throughout the crate: positive line-of-sight displacement
//! is motion toward the sensor, so a subsiding pixel has a negative rate.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sentinel-1 C-band carrier wavelength in meters.
pub const SENTINEL1_WAVELENGTH_M: f64 = 0.0554658;

/// Scene-wide viewing geometry.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawGeometry", into = "RawGeometry")]
pub struct ViewGeometry {
    incidence_deg: f64,
    heading_deg: f64,
}

#[derive(Serialize, Deserialize)]
struct RawGeometry {
    incidence_deg: f64,
    heading_deg: f64,
}

impl TryFrom<RawGeometry> for ViewGeometry {
    type Error = Error;

    fn try_from(raw: RawGeometry) -> Result<Self> {
        ViewGeometry::new(raw.incidence_deg, raw.heading_deg)
    }
}

impl From<ViewGeometry> for RawGeometry {
    fn from(g: ViewGeometry) -> Self {
        RawGeometry {
            incidence_deg: g.incidence_deg,
            heading_deg: g.heading_deg,
        }
    }
}

impl ViewGeometry {
    pub fn new(incidence_deg: f64, heading_deg: f64) -> Result<Self> {
        if !(0.0..90.0).contains(&incidence_deg) {
            return Err(Error::invalid(
                "incidence_deg",
                format!("{incidence_deg} outside [0, 90)"),
            ));
        }
        if !(0.0..360.0).contains(&heading_deg) {
            return Err(Error::invalid(
                "heading_deg",
                format!("{heading_deg} outside [0, 360)"),
            ));
        }
        Ok(ViewGeometry {
            incidence_deg,
            heading_deg,
        })
    }

    pub fn incidence_deg(&self) -> f64 {
        self.incidence_deg
    }

    pub fn heading_deg(&self) -> f64 {
        self.heading_deg
    }

    /// Unit vector (east, north, up) pointing from the ground to the sensor.
    ///
    /// The sensor is assumed right-looking, so the look direction has azimuth
    /// `heading + 90°` and the ground-to-sensor vector has azimuth
    /// `heading - 90°`. That gives
    ///
    /// ```text
    /// east  = -sin(inc) * cos(heading)
    /// north =  sin(inc) * sin(heading)
    /// up    =  cos(inc)
    /// ```
    pub fn los_unit_vector(&self) -> [f64; 3] {
        let inc = self.incidence_deg.to_radians();
        let head = self.heading_deg.to_radians();
        [
            -inc.sin() * head.cos(),
            inc.sin() * head.sin(),
            inc.cos(),
        ]
    }

    /// Projects a purely vertical rate onto the line of sight.
    pub fn project_vertical_to_los(&self, v_up: f64) -> f64 {
        v_up * self.incidence_deg.to_radians().cos()
    }
}

impl Default for ViewGeometry {
    /// Ascending-track geometry close to a mid-swath Sentinel-1 IW pixel.
    fn default() -> Self {
        ViewGeometry {
            incidence_deg: 38.9,
            heading_deg: 347.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadarConstants {
    wavelength_m: f64,
}

impl RadarConstants {
    pub fn new(wavelength_m: f64) -> Result<Self> {
        if !(wavelength_m > 0.0 && wavelength_m.is_finite()) {
            return Err(Error::invalid(
                "wavelength_m",
                format!("{wavelength_m} is not a positive finite length"),
            ));
        }
        Ok(RadarConstants { wavelength_m })
    }

    pub fn wavelength_m(&self) -> f64 {
        self.wavelength_m
    }

    /// Interferometric phase (radians) to LOS displacement in centimeters.
    pub fn phase_to_displacement_cm(&self, phi: f64) -> f64 {
        -phi * self.wavelength_m / (4.0 * PI) * 100.0
    }

    /// Inverse of [`phase_to_displacement_cm`](Self::phase_to_displacement_cm).
    pub fn displacement_cm_to_phase(&self, d_cm: f64) -> f64 {
        -d_cm / 100.0 * 4.0 * PI / self.wavelength_m
    }

    /// Radians of phase per millimeter of LOS motion (negative: toward-sensor
    /// motion shortens the range).
    pub fn phase_per_mm(&self) -> f64 {
        -4.0 * PI / (self.wavelength_m * 1000.0)
    }
}

impl Default for RadarConstants {
    fn default() -> Self {
        RadarConstants {
            wavelength_m: SENTINEL1_WAVELENGTH_M,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn nadir_looks_straight_up() {
        for heading in [0.0, 90.0, 347.0] {
            let v = ViewGeometry::new(0.0, heading).unwrap().los_unit_vector();
            assert!(v[0].abs() < 1e-15 && v[1].abs() < 1e-15);
            assert_eq!(v[2], 1.0);
        }
    }

    #[test]
    fn up_component_matches_cosine() {
        let g = ViewGeometry::new(38.9, 347.0).unwrap();
        assert!((g.los_unit_vector()[2] - 0.77824).abs() < 5e-6);
        let g = ViewGeometry::new(89.9, 0.0).unwrap();
        assert!((g.los_unit_vector()[2] - 0.001745).abs() < 5e-7);
    }

    #[test]
    fn ascending_right_looking_sensor_sits_west() {
        let v = ViewGeometry::default().los_unit_vector();
        assert!(v[0] < 0.0);
    }

    #[test]
    fn vertical_projection() {
        let nadir = ViewGeometry::new(0.0, 0.0).unwrap();
        assert_eq!(nadir.project_vertical_to_los(1.0), 1.0);
        let g = ViewGeometry::new(38.9, 347.0).unwrap();
        assert!((g.project_vertical_to_los(-2.0) + 1.55648).abs() < 1e-5);
        assert_eq!(g.project_vertical_to_los(0.0), 0.0);
    }

    #[test]
    fn phase_conversion_examples() {
        let c = RadarConstants::default();
        assert_eq!(c.phase_to_displacement_cm(0.0), 0.0);
        assert!((c.phase_to_displacement_cm(4.0 * PI) + 5.54658).abs() < 1e-12);
        assert!((c.phase_to_displacement_cm(-2.0 * PI) - 2.77329).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_geometry() {
        assert!(ViewGeometry::new(90.0, 0.0).is_err());
        assert!(ViewGeometry::new(-0.1, 0.0).is_err());
        assert!(ViewGeometry::new(30.0, 360.0).is_err());
        assert!(RadarConstants::new(0.0).is_err());
        assert!(RadarConstants::new(f64::NAN).is_err());
    }

    proptest! {
        #[test]
        fn los_vector_is_unit(inc in 0.0f64..89.999, head in 0.0f64..359.999) {
            let v = ViewGeometry::new(inc, head).unwrap().los_unit_vector();
            let norm = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-12);
        }

        #[test]
        fn projection_is_linear(inc in 0.0f64..89.9, v in -100.0f64..100.0, a in -10.0f64..10.0) {
            let g = ViewGeometry::new(inc, 0.0).unwrap();
            let lhs = g.project_vertical_to_los(a * v);
            let rhs = a * g.project_vertical_to_los(v);
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + rhs.abs()));
        }

        #[test]
        fn displacement_is_odd(phi in -1e3f64..1e3) {
            let c = RadarConstants::default();
            prop_assert_eq!(c.phase_to_displacement_cm(phi) + c.phase_to_displacement_cm(-phi), 0.0);
        }

        #[test]
        fn phase_roundtrip(d in -50.0f64..50.0) {
            let c = RadarConstants::default();
            let back = c.phase_to_displacement_cm(c.displacement_cm_to_phase(d));
            prop_assert!((back - d).abs() < 1e-12);
        }
    }
}
