//! WGS84 poses and the local metric frames shared by map and camera data.
//!
//! Two frames are used throughout the crate:
//!
//! - [`LocalPoint`]: east/north meters on a tangent plane anchored at an
//!   origin pose (equirectangular approximation, valid for scenes of a few
//!   hundred meters).
//! - [`VehiclePoint`]: forward/left meters, i.e. the local frame rotated so
//!   that `forward` points along the vehicle heading.
//!
//! Headings are compass headings: degrees clockwise from true north.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Meters per degree of latitude used by the tangent-plane projection.
pub const METERS_PER_DEG_LAT: f64 = 111_320.0;

/// Largest latitude distance (degrees) from the origin that
/// [`wgs84_to_local`] accepts.
pub const MAX_LOCAL_SPAN_DEG: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeodesyError {
    #[error("latitude {0} outside [-90, 90]")]
    InvalidLatitude(f64),
    #[error("longitude {0} outside [-180, 180]")]
    InvalidLongitude(f64),
    #[error("non-finite pose value in field `{0}`")]
    NonFinite(&'static str),
    #[error(
        "point at lat {lat} is {span:.4} deg from origin lat {origin_lat}; re-anchor the origin \
         (local projection limited to {MAX_LOCAL_SPAN_DEG} deg)"
    )]
    OutOfRegime {
        lat: f64,
        origin_lat: f64,
        span: f64,
    },
}

/// Wraps any finite angle in degrees into `[0, 360)`.
pub fn normalize_heading(deg: f64) -> f64 {
    let h = deg.rem_euclid(360.0);
    // rem_euclid can round up to exactly 360 for tiny negative inputs
    if h >= 360.0 {
        0.0
    } else {
        h
    }
}

/// Vehicle position and heading, plus manual localization corrections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPose {
    pub lat: f64,
    pub lon: f64,
    pub heading: f64,
    #[serde(default)]
    pub correction_east: f64,
    #[serde(default)]
    pub correction_north: f64,
    #[serde(default)]
    pub correction_heading: f64,
}

impl GeoPose {
    /// Validated pose without corrections. The heading is normalized.
    pub fn new(lat: f64, lon: f64, heading: f64) -> Result<Self, GeodesyError> {
        Self {
            lat,
            lon,
            heading,
            correction_east: 0.0,
            correction_north: 0.0,
            correction_heading: 0.0,
        }
        .validated()
    }

    pub fn with_corrections(mut self, east: f64, north: f64, heading: f64) -> Self {
        self.correction_east = east;
        self.correction_north = north;
        self.correction_heading = heading;
        self
    }

    /// Checks ranges and finiteness and normalizes the heading.
    pub fn validated(mut self) -> Result<Self, GeodesyError> {
        for (name, v) in [
            ("lat", self.lat),
            ("lon", self.lon),
            ("heading", self.heading),
            ("correction_east", self.correction_east),
            ("correction_north", self.correction_north),
            ("correction_heading", self.correction_heading),
        ] {
            if !v.is_finite() {
                return Err(GeodesyError::NonFinite(name));
            }
        }
        if !(-90.0..=90.0).contains(&self.lat) {
            return Err(GeodesyError::InvalidLatitude(self.lat));
        }
        if !(-180.0..=180.0).contains(&self.lon) {
            return Err(GeodesyError::InvalidLongitude(self.lon));
        }
        self.heading = normalize_heading(self.heading);
        Ok(self)
    }

    pub fn has_corrections(&self) -> bool {
        self.correction_east != 0.0
            || self.correction_north != 0.0
            || self.correction_heading != 0.0
    }
}

/// East/north meters relative to an origin pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalPoint {
    pub east: f64,
    pub north: f64,
}

impl LocalPoint {
    pub const fn new(east: f64, north: f64) -> Self {
        Self { east, north }
    }

    pub fn norm(&self) -> f64 {
        self.east.hypot(self.north)
    }
}

/// Forward/left meters in the vehicle frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehiclePoint {
    pub forward: f64,
    pub left: f64,
}

impl VehiclePoint {
    pub const fn new(forward: f64, left: f64) -> Self {
        Self { forward, left }
    }

    pub fn norm(&self) -> f64 {
        self.forward.hypot(self.left)
    }
}

fn wrap_lon_delta(d: f64) -> f64 {
    (d + 180.0).rem_euclid(360.0) - 180.0
}

/// Projects a WGS84 coordinate onto the tangent plane at `origin`.
///
/// Only the origin's position is used; its heading and corrections are
/// ignored (fold corrections in first with [`apply_corrections`]).
pub fn wgs84_to_local(lat: f64, lon: f64, origin: &GeoPose) -> Result<LocalPoint, GeodesyError> {
    let span = (lat - origin.lat).abs();
    if span.is_nan() || span >= MAX_LOCAL_SPAN_DEG {
        return Err(GeodesyError::OutOfRegime {
            lat,
            origin_lat: origin.lat,
            span,
        });
    }
    let north = (lat - origin.lat) * METERS_PER_DEG_LAT;
    let east =
        wrap_lon_delta(lon - origin.lon) * METERS_PER_DEG_LAT * origin.lat.to_radians().cos();
    Ok(LocalPoint { east, north })
}

/// Inverse of [`wgs84_to_local`]: returns `(lat, lon)` in degrees.
pub fn local_to_wgs84(p: LocalPoint, origin: &GeoPose) -> (f64, f64) {
    let lat = origin.lat + p.north / METERS_PER_DEG_LAT;
    let lon = origin.lon + p.east / (METERS_PER_DEG_LAT * origin.lat.to_radians().cos());
    (lat, wrap_lon_delta(lon))
}

/// Rotates a local point into the frame of a vehicle with the pose's heading.
pub fn local_to_vehicle(p: LocalPoint, pose: &GeoPose) -> VehiclePoint {
    let (s, c) = pose.heading.to_radians().sin_cos();
    VehiclePoint {
        forward: p.east * s + p.north * c,
        left: p.north * s - p.east * c,
    }
}

/// Inverse rotation of [`local_to_vehicle`].
pub fn vehicle_to_local(p: VehiclePoint, pose: &GeoPose) -> LocalPoint {
    let (s, c) = pose.heading.to_radians().sin_cos();
    LocalPoint {
        east: p.forward * s - p.left * c,
        north: p.forward * c + p.left * s,
    }
}

/// Folds the metric and heading corrections into the pose.
///
/// The metric shift uses the inverse of the tangent-plane linearization at
/// the uncorrected latitude. Correction fields are zero in the result, so a
/// second application is a no-op.
pub fn apply_corrections(pose: &GeoPose) -> GeoPose {
    let (lat, lon) = if pose.correction_east == 0.0 && pose.correction_north == 0.0 {
        (pose.lat, pose.lon)
    } else {
        local_to_wgs84(
            LocalPoint::new(pose.correction_east, pose.correction_north),
            pose,
        )
    };
    GeoPose {
        lat,
        lon,
        heading: normalize_heading(pose.heading + pose.correction_heading),
        correction_east: 0.0,
        correction_north: 0.0,
        correction_heading: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn pose(lat: f64, lon: f64, heading: f64) -> GeoPose {
        GeoPose::new(lat, lon, heading).unwrap()
    }

    #[test]
    fn origin_maps_to_zero() {
        let o = pose(49.0, 7.0, 12.0);
        let p = wgs84_to_local(49.0, 7.0, &o).unwrap();
        assert_eq!(p, LocalPoint::new(0.0, 0.0));
    }

    #[test]
    fn north_offset_scales_by_meters_per_degree() {
        let o = pose(49.0, 7.0, 0.0);
        let p = wgs84_to_local(49.001, 7.0, &o).unwrap();
        assert!((p.north - 111.32).abs() < 1e-6, "{p:?}");
        assert_eq!(p.east, 0.0);
    }

    #[test]
    fn east_offset_scales_by_cos_latitude() {
        let o = pose(60.0, 7.0, 0.0);
        let p = wgs84_to_local(60.0, 7.001, &o).unwrap();
        assert!((p.east - 55.66).abs() < 1e-3, "{p:?}");
        assert_eq!(p.north, 0.0);
    }

    #[test]
    fn far_points_are_out_of_regime() {
        let o = pose(49.0, 7.0, 0.0);
        assert!(matches!(
            wgs84_to_local(49.2, 7.0, &o),
            Err(GeodesyError::OutOfRegime { .. })
        ));
        assert!(wgs84_to_local(49.0999, 7.0, &o).is_ok());
    }

    #[test]
    fn longitude_delta_wraps_across_antimeridian() {
        let o = pose(0.0, 179.9995, 0.0);
        let p = wgs84_to_local(0.0, -179.9995, &o).unwrap();
        assert!((p.east - 0.001 * METERS_PER_DEG_LAT).abs() < 1e-6, "{p:?}");
    }

    #[test]
    fn rotation_examples() {
        let north = local_to_vehicle(LocalPoint::new(0.0, 10.0), &pose(0.0, 0.0, 0.0));
        assert!((north.forward - 10.0).abs() < 1e-12 && north.left.abs() < 1e-12);

        let east = local_to_vehicle(LocalPoint::new(10.0, 0.0), &pose(0.0, 0.0, 90.0));
        assert!((east.forward - 10.0).abs() < 1e-12 && east.left.abs() < 1e-12);

        let diag = local_to_vehicle(LocalPoint::new(1.0, 0.0), &pose(0.0, 0.0, 45.0));
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((diag.forward - h).abs() < 1e-9);
        assert!((diag.left + h).abs() < 1e-9);
    }

    #[test]
    fn zero_corrections_are_identity() {
        let p = pose(49.0, 7.0, 123.0);
        assert_eq!(apply_corrections(&p), p);
    }

    #[test]
    fn north_correction_shifts_latitude() {
        let p = pose(49.0, 7.0, 0.0).with_corrections(0.0, 111.32, 0.0);
        let c = apply_corrections(&p);
        assert!((c.lat - 49.001).abs() < 1e-8, "{}", c.lat);
        assert_eq!(c.lon, 7.0);
        assert!(!c.has_corrections());
    }

    #[test]
    fn heading_correction_wraps() {
        let p = pose(49.0, 7.0, 5.0).with_corrections(0.0, 0.0, -10.0);
        assert_eq!(apply_corrections(&p).heading, 355.0);
    }

    #[test]
    fn pose_validation() {
        assert!(matches!(
            GeoPose::new(91.0, 0.0, 0.0),
            Err(GeodesyError::InvalidLatitude(_))
        ));
        assert!(matches!(
            GeoPose::new(0.0, 181.0, 0.0),
            Err(GeodesyError::InvalidLongitude(_))
        ));
        assert!(matches!(
            GeoPose::new(f64::NAN, 0.0, 0.0),
            Err(GeodesyError::NonFinite("lat"))
        ));
        assert_eq!(GeoPose::new(0.0, 0.0, -90.0).unwrap().heading, 270.0);
        assert_eq!(GeoPose::new(0.0, 0.0, 720.0).unwrap().heading, 0.0);
    }

    proptest! {
        #[test]
        fn vehicle_rotation_round_trips(
            heading in 0.0f64..360.0,
            east in -500.0f64..500.0,
            north in -500.0f64..500.0,
        ) {
            let pose = pose(49.0, 7.0, heading);
            let p = LocalPoint::new(east, north);
            let v = local_to_vehicle(p, &pose);
            let back = vehicle_to_local(v, &pose);
            prop_assert!((back.east - east).abs() <= 1e-9);
            prop_assert!((back.north - north).abs() <= 1e-9);
            let n = p.norm();
            prop_assert!((v.norm() - n).abs() <= 1e-9 * n.max(1.0));
        }

        #[test]
        fn corrections_are_idempotent(
            lat in -60.0f64..60.0,
            lon in -170.0f64..170.0,
            heading in 0.0f64..360.0,
            ce in -50.0f64..50.0,
            cn in -50.0f64..50.0,
            ch in -30.0f64..30.0,
        ) {
            let once = apply_corrections(&pose(lat, lon, heading).with_corrections(ce, cn, ch));
            prop_assert_eq!(apply_corrections(&once), once);
            prop_assert!((0.0..360.0).contains(&once.heading));
        }

        #[test]
        fn local_projection_inverts(
            lat in -60.0f64..60.0,
            lon in -170.0f64..170.0,
            east in -300.0f64..300.0,
            north in -300.0f64..300.0,
        ) {
            let o = pose(lat, lon, 0.0);
            let (plat, plon) = local_to_wgs84(LocalPoint::new(east, north), &o);
            let p = wgs84_to_local(plat, plon, &o).unwrap();
            prop_assert!((p.east - east).abs() < 1e-6);
            prop_assert!((p.north - north).abs() < 1e-6);
        }
    }
}
