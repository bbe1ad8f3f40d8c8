//! Flat-ground pinhole camera model.
//!
//! Vehicle frame: x forward, y left, z up, origin on the ground plane below
//! the camera. Camera frame: x right, y down, z along the optical axis.
//! The camera sits `height` meters above the vehicle origin. Its orientation
//! is built from a level forward-looking camera by pitching it down about its
//! right axis, yawing about the vehicle up axis (positive turns left) and
//! finally rolling about the optical axis (positive turns the image x axis
//! toward image y).
//!
//! Pixel `(i, j)` covers `[i, i + 1) × [j, j + 1)` in continuous pixel
//! coordinates; its center is `(i + 0.5, j + 0.5)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::VehiclePoint;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CameraError {
    #[error("invalid camera: {0}")]
    Invalid(String),
    #[error("ground point ({forward:.3}, {left:.3}) is behind the camera (depth {depth:.3})")]
    BehindCamera { forward: f64, left: f64, depth: f64 },
}

/// Intrinsics and mounting of the camera. Angles are degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    #[serde(rename = "width")]
    pub image_width: u32,
    #[serde(rename = "height")]
    pub image_height: u32,
    #[serde(rename = "height_m")]
    pub height: f64,
    #[serde(rename = "pitch_deg")]
    pub pitch: f64,
    #[serde(rename = "yaw_deg", default)]
    pub yaw: f64,
    #[serde(rename = "roll_deg", default)]
    pub roll: f64,
}

impl Default for CameraModel {
    /// A 1920×1080 forward camera 1.5 m above ground, pitched 10° down.
    fn default() -> Self {
        Self {
            fx: 1000.0,
            fy: 1000.0,
            cx: 960.0,
            cy: 540.0,
            image_width: 1920,
            image_height: 1080,
            height: 1.5,
            pitch: 10.0,
            yaw: 0.0,
            roll: 0.0,
        }
    }
}

impl CameraModel {
    pub fn validate(&self) -> Result<(), CameraError> {
        let fin = [
            self.fx,
            self.fy,
            self.cx,
            self.cy,
            self.height,
            self.pitch,
            self.yaw,
            self.roll,
        ]
        .iter()
        .all(|v| v.is_finite());
        let problem = if !fin {
            Some("non-finite parameter".to_owned())
        } else if self.fx <= 0.0 || self.fy <= 0.0 {
            Some(format!(
                "focal lengths must be positive (fx {}, fy {})",
                self.fx, self.fy
            ))
        } else if self.height <= 0.0 {
            Some(format!("mounting height {} must be positive", self.height))
        } else if !(0.0..f64::from(self.image_width)).contains(&self.cx) {
            Some(format!("cx {} outside [0, {})", self.cx, self.image_width))
        } else if !(0.0..f64::from(self.image_height)).contains(&self.cy) {
            Some(format!("cy {} outside [0, {})", self.cy, self.image_height))
        } else if self.pitch.abs() >= 90.0 && self.pitch != 90.0 {
            // straight down is accepted as the nadir limit
            Some(format!("|pitch| {} must be below 90", self.pitch))
        } else {
            None
        };
        match problem {
            Some(msg) => Err(CameraError::Invalid(msg)),
            None => Ok(()),
        }
    }
}

type Mat3 = [[f64; 3]; 3];

fn mat_mul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for (i, row) in out.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            *v = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

/// Rotation whose columns are the camera axes expressed in the vehicle frame.
pub fn camera_to_vehicle_rotation(camera: &CameraModel) -> [[f64; 3]; 3] {
    let (sp, cp) = camera.pitch.to_radians().sin_cos();
    let (sy, cy) = camera.yaw.to_radians().sin_cos();
    let (sr, cr) = camera.roll.to_radians().sin_cos();
    // columns: right = (0, -1, 0), down = (-sin p, 0, -cos p), optical = (cos p, 0, -sin p)
    let base = [[0.0, -sp, cp], [-1.0, 0.0, 0.0], [0.0, -cp, -sp]];
    let yaw = [[cy, -sy, 0.0], [sy, cy, 0.0], [0.0, 0.0, 1.0]];
    let roll = [[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]];
    mat_mul(&mat_mul(&yaw, &base), &roll)
}

/// Camera with its rotation precomputed, for per-pixel and per-cell loops.
#[derive(Debug, Clone, Copy)]
pub struct CameraGeometry {
    camera: CameraModel,
    c2v: Mat3,
}

impl CameraGeometry {
    pub fn new(camera: &CameraModel) -> Self {
        Self {
            camera: *camera,
            c2v: camera_to_vehicle_rotation(camera),
        }
    }

    pub fn camera(&self) -> &CameraModel {
        &self.camera
    }

    /// Projects a ground point; returns `(u, v, depth)`.
    #[inline]
    pub fn project(&self, p: VehiclePoint) -> (f64, f64, f64) {
        let x = [p.forward, p.left, -self.camera.height];
        let m = &self.c2v;
        // camera coordinates = c2v^T * x
        let xc = m[0][0] * x[0] + m[1][0] * x[1] + m[2][0] * x[2];
        let yc = m[0][1] * x[0] + m[1][1] * x[1] + m[2][1] * x[2];
        let zc = m[0][2] * x[0] + m[1][2] * x[1] + m[2][2] * x[2];
        let cam = &self.camera;
        (cam.fx * xc / zc + cam.cx, cam.fy * yc / zc + cam.cy, zc)
    }

    pub fn ground_to_pixel(&self, p: VehiclePoint) -> Result<(f64, f64, f64), CameraError> {
        let (u, v, depth) = self.project(p);
        if depth <= 0.0 {
            return Err(CameraError::BehindCamera {
                forward: p.forward,
                left: p.left,
                depth,
            });
        }
        Ok((u, v, depth))
    }

    /// Viewing ray of a pixel, in the vehicle frame (unnormalized).
    #[inline]
    pub fn pixel_ray(&self, u: f64, v: f64) -> [f64; 3] {
        let cam = &self.camera;
        let d = [(u - cam.cx) / cam.fx, (v - cam.cy) / cam.fy, 1.0];
        let m = &self.c2v;
        [
            m[0][0] * d[0] + m[0][1] * d[1] + m[0][2] * d[2],
            m[1][0] * d[0] + m[1][1] * d[1] + m[1][2] * d[2],
            m[2][0] * d[0] + m[2][1] * d[1] + m[2][2] * d[2],
        ]
    }

    /// True when the pixel's ray descends toward the ground plane.
    #[inline]
    pub fn below_horizon(&self, u: f64, v: f64) -> bool {
        self.pixel_ray(u, v)[2] < 0.0
    }

    /// Ray-cast inverse of [`ground_to_pixel`](Self::ground_to_pixel): the
    /// ground point imaged at `(u, v)`, or `None` at or above the horizon.
    pub fn pixel_to_ground(&self, u: f64, v: f64) -> Option<VehiclePoint> {
        let d = self.pixel_ray(u, v);
        if d[2] >= 0.0 {
            return None;
        }
        let s = self.camera.height / -d[2];
        Some(VehiclePoint::new(s * d[0], s * d[1]))
    }

    /// Continuous pixel position of a ground point if the camera images it:
    /// positive depth, inside the image, below the horizon.
    #[inline]
    pub fn visible_pixel(&self, p: VehiclePoint) -> Option<(f64, f64)> {
        let (u, v, depth) = self.project(p);
        let cam = &self.camera;
        let inside = depth > 0.0
            && u >= 0.0
            && u < f64::from(cam.image_width)
            && v >= 0.0
            && v < f64::from(cam.image_height);
        (inside && self.below_horizon(u, v)).then_some((u, v))
    }
}

/// Projects a ground point through the camera; see [`CameraGeometry::project`].
pub fn ground_to_pixel(
    p: VehiclePoint,
    camera: &CameraModel,
) -> Result<(f64, f64, f64), CameraError> {
    CameraGeometry::new(camera).ground_to_pixel(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn nadir_camera_images_point_below_at_principal_point() {
        let cam = CameraModel {
            pitch: 90.0,
            height: 2.0,
            ..CameraModel::default()
        };
        let (u, v, d) = ground_to_pixel(VehiclePoint::new(0.0, 0.0), &cam).unwrap();
        assert!((u - cam.cx).abs() < 1e-9 && (v - cam.cy).abs() < 1e-9);
        assert!((d - 2.0).abs() < 1e-12);
    }

    #[test]
    fn level_camera_approaches_horizon() {
        let cam = CameraModel {
            pitch: 0.0,
            ..CameraModel::default()
        };
        let g = CameraGeometry::new(&cam);
        let mut last = f64::INFINITY;
        for f in [10.0, 100.0, 1e4, 1e7] {
            let (_, v, _) = g.ground_to_pixel(VehiclePoint::new(f, 0.0)).unwrap();
            assert!(v > cam.cy && v < last);
            last = v;
        }
        assert!(last - cam.cy < 1e-3);
    }

    #[test]
    fn default_camera_hand_projection() {
        // pitch 10 deg, h 1.5, point 10 m ahead on axis:
        // depth = 10 cos p + 1.5 sin p, y_c = -10 sin p + 1.5 cos p
        let p = 10f64.to_radians();
        let depth = 10.0 * p.cos() + 1.5 * p.sin();
        let v = 540.0 + 1000.0 * (1.5 * p.cos() - 10.0 * p.sin()) / depth;
        let (pu, pv, pd) =
            ground_to_pixel(VehiclePoint::new(10.0, 0.0), &CameraModel::default()).unwrap();
        assert!((pu - 960.0).abs() < 1e-6);
        assert!((pv - v).abs() < 1e-6, "{pv} vs {v}");
        assert!((pd - depth).abs() < 1e-9);
    }

    #[test]
    fn points_behind_are_rejected() {
        let err =
            ground_to_pixel(VehiclePoint::new(-5.0, 0.0), &CameraModel::default()).unwrap_err();
        assert!(matches!(err, CameraError::BehindCamera { .. }));
        let g = CameraGeometry::new(&CameraModel::default());
        assert!(g.visible_pixel(VehiclePoint::new(-5.0, 0.0)).is_none());
    }

    #[test]
    fn left_points_image_left_of_center() {
        let (u, _, _) =
            ground_to_pixel(VehiclePoint::new(20.0, 3.0), &CameraModel::default()).unwrap();
        assert!(u < 960.0);
    }

    #[test]
    fn pixel_ray_inverts_projection_with_yaw_and_roll() {
        let cam = CameraModel {
            yaw: 7.0,
            roll: -3.0,
            pitch: 14.0,
            ..CameraModel::default()
        };
        let g = CameraGeometry::new(&cam);
        let p = VehiclePoint::new(23.0, -4.5);
        let (u, v, _) = g.ground_to_pixel(p).unwrap();
        let back = g.pixel_to_ground(u, v).unwrap();
        assert!((back.forward - p.forward).abs() < 1e-9 && (back.left - p.left).abs() < 1e-9);
        assert!(g.pixel_to_ground(960.0, 0.0).is_none());
    }

    #[test]
    fn validation() {
        assert!(CameraModel::default().validate().is_ok());
        let bad = CameraModel {
            fx: 0.0,
            ..CameraModel::default()
        };
        assert!(bad.validate().is_err());
        let bad = CameraModel {
            cx: 1920.0,
            ..CameraModel::default()
        };
        assert!(bad.validate().is_err());
        let bad = CameraModel {
            pitch: -95.0,
            ..CameraModel::default()
        };
        assert!(bad.validate().is_err());
    }
}
