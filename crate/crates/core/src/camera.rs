//! Two-degree-of-freedom camera: azimuth/elevation on a sphere around the
//! origin, always pointing at the origin with +y up, perspective pinhole.

use crate::error::{Error, Result};
use crate::float::Real;
use crate::vec3::Vec3;

#[derive(Clone, Copy, Debug)]
pub struct Camera<T> {
    pub azimuth: T,
    pub elevation: T,
    pub distance: T,
    pub fov: T,
    pub width: usize,
    pub height: usize,
}

/// Orthonormal camera frame and center, derived from the pose.
#[derive(Clone, Copy, Debug)]
pub struct CameraFrame<T> {
    pub center: Vec3<T>,
    pub right: Vec3<T>,
    pub up: Vec3<T>,
    pub forward: Vec3<T>,
    /// Focal length in pixels (square pixels, vertical field of view).
    pub focal: T,
}

/// Derivatives of the camera frame with respect to azimuth and elevation.
#[derive(Clone, Copy, Debug)]
pub struct CameraFrameGrad<T> {
    pub d_center: [Vec3<T>; 2],
    pub d_right: [Vec3<T>; 2],
    pub d_up: [Vec3<T>; 2],
    pub d_forward: [Vec3<T>; 2],
}

impl<T: Real> Camera<T> {
    pub fn new(
        azimuth: T,
        elevation: T,
        distance: T,
        fov: T,
        width: usize,
        height: usize,
    ) -> Result<Self> {
        let half_pi = T::FRAC_PI_2();
        if !(elevation > -half_pi && elevation < half_pi) {
            return Err(Error::InvalidParameter(format!(
                "elevation must be in (-pi/2, pi/2), got {elevation}"
            )));
        }
        if !(distance > T::of(3.0).sqrt()) {
            return Err(Error::InvalidParameter(format!(
                "distance must exceed sqrt(3), got {distance}"
            )));
        }
        if !(fov > T::zero() && fov < T::PI()) {
            return Err(Error::InvalidParameter(format!(
                "fov must be in (0, pi), got {fov}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::InvalidParameter(
                "image dimensions must be >= 1".into(),
            ));
        }
        Ok(Self {
            azimuth,
            elevation,
            distance,
            fov,
            width,
            height,
        })
    }

    /// Conventional defaults: distance 2.5, vertical FOV 30 degrees.
    pub fn canonical(azimuth: T, elevation: T, width: usize, height: usize) -> Result<Self> {
        Self::new(
            azimuth,
            elevation,
            T::of(2.5),
            T::of(30.0).to_radians(),
            width,
            height,
        )
    }

    pub fn with_pose(&self, azimuth: T, elevation: T) -> Self {
        Self {
            azimuth,
            elevation,
            ..*self
        }
    }

    /// Camera center `C_v`.
    pub fn center(&self) -> Vec3<T> {
        let (ca, sa) = (self.azimuth.cos(), self.azimuth.sin());
        let (ce, se) = (self.elevation.cos(), self.elevation.sin());
        Vec3::new(ce * ca, se, ce * sa) * self.distance
    }

    pub fn frame(&self) -> CameraFrame<T> {
        let (ca, sa) = (self.azimuth.cos(), self.azimuth.sin());
        let (ce, se) = (self.elevation.cos(), self.elevation.sin());
        let center = Vec3::new(ce * ca, se, ce * sa) * self.distance;
        // Look-at the origin with world up +y; elevation != +-pi/2 keeps the
        // frame well defined.
        let forward = Vec3::new(-ce * ca, -se, -ce * sa);
        let right = Vec3::new(sa, T::zero(), -ca);
        let up = Vec3::new(-se * ca, ce, -se * sa);
        let focal = T::from_usize(self.height).unwrap() * T::of(0.5)
            / (self.fov * T::of(0.5)).tan();
        CameraFrame {
            center,
            right,
            up,
            forward,
            focal,
        }
    }

    /// Analytic pose derivatives of the frame; index 0 is azimuth, 1 elevation.
    pub fn frame_gradient(&self) -> CameraFrameGrad<T> {
        let (ca, sa) = (self.azimuth.cos(), self.azimuth.sin());
        let (ce, se) = (self.elevation.cos(), self.elevation.sin());
        let rho = self.distance;
        let z = T::zero();
        CameraFrameGrad {
            d_center: [
                Vec3::new(-ce * sa, z, ce * ca) * rho,
                Vec3::new(-se * ca, ce, -se * sa) * rho,
            ],
            d_right: [Vec3::new(ca, z, sa), Vec3::zero()],
            d_up: [
                Vec3::new(se * sa, z, -se * ca),
                Vec3::new(-ce * ca, -se, -ce * sa),
            ],
            d_forward: [
                Vec3::new(ce * sa, z, -ce * ca),
                Vec3::new(se * ca, -ce, se * sa),
            ],
        }
    }

    /// Ray through the center of pixel `(px, py)`; returns `(origin, unit dir)`.
    ///
    /// `px`/`py` are pixel indices (0-based, py down); fractional values address
    /// positions between pixel centers.
    pub fn ray(&self, px: T, py: T) -> (Vec3<T>, Vec3<T>) {
        let f = self.frame();
        let half = T::of(0.5);
        let w = T::from_usize(self.width).unwrap();
        let h = T::from_usize(self.height).unwrap();
        let u = (px + half - w * half) / f.focal;
        let v = (h * half - (py + half)) / f.focal;
        let dir = (f.right * u + f.up * v + f.forward).normalized();
        (f.center, dir)
    }

    /// Perspective projection consistent with [`Self::ray`].
    ///
    /// Returns pixel-center coordinates (a point on the ray of integer pixel
    /// `(px, py)` projects back to exactly `(px, py)`) and the depth along the
    /// optical axis. `None` for points at or behind the camera plane.
    pub fn project(&self, point: Vec3<T>) -> Option<([T; 2], T)> {
        let f = self.frame();
        let rel = point - f.center;
        let zc = rel.dot(f.forward);
        if zc <= T::of(1e-9) {
            return None;
        }
        let xc = rel.dot(f.right);
        let yc = rel.dot(f.up);
        let half = T::of(0.5);
        let w = T::from_usize(self.width).unwrap();
        let h = T::from_usize(self.height).unwrap();
        let sx = f.focal * xc / zc + w * half;
        let sy = h * half - f.focal * yc / zc;
        Some(([sx - half, sy - half], zc))
    }
}
