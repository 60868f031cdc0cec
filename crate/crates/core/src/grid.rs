//! Canonical-frame voxel grids and differentiable trilinear sampling.
//!
//! Grids live on the cube [-1,1]^3; the cell with index `i` along an axis has
//! its center at `2(i+0.5)/R - 1`. Values are stored x-fastest, then y, then z
//! (`index = (iz*R + iy)*R + ix`).

use crate::error::{Error, Result};
use crate::float::Real;
use crate::vec3::Vec3;

/// Explicit occupancy grid: `R^3` values in `[0,1]`.
#[derive(Clone, Debug)]
pub struct OccupancyGrid<T> {
    resolution: usize,
    values: Vec<T>,
}

/// Feature grid with `C` channels, stored channel-major (`C` blocks of `R^3`).
#[derive(Clone, Debug)]
pub struct FeatureGrid<T> {
    resolution: usize,
    channels: usize,
    values: Vec<T>,
}

/// Paired occupancy and feature grids over the same canonical extent.
#[derive(Clone, Debug)]
pub struct SemiImplicitVolume<T> {
    pub occupancy: OccupancyGrid<T>,
    pub feature: FeatureGrid<T>,
}

/// Coordinate of the cell center with index `i` along one axis.
pub fn cell_center<T: Real>(i: usize, resolution: usize) -> T {
    T::of(2.0) * (T::from_usize(i).unwrap() + T::of(0.5)) / T::from_usize(resolution).unwrap()
        - T::one()
}

/// Linear index of cell `(ix, iy, iz)`.
pub fn cell_index(ix: usize, iy: usize, iz: usize, resolution: usize) -> usize {
    (iz * resolution + iy) * resolution + ix
}

impl<T: Real> OccupancyGrid<T> {
    /// Builds a grid, validating the resolution and the `[0,1]` value range.
    pub fn new(resolution: usize, values: Vec<T>) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid resolution must be >= 2, got {resolution}"
            )));
        }
        let expected = resolution * resolution * resolution;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected: format!("{expected} values"),
                actual: format!("{}", values.len()),
            });
        }
        for (i, &v) in values.iter().enumerate() {
            if !(v >= T::zero() && v <= T::one()) {
                return Err(Error::ValueOutOfRange {
                    index: i,
                    value: v.to_f64_lossy(),
                });
            }
        }
        Ok(Self { resolution, values })
    }

    /// Uniform grid of a constant occupancy.
    pub fn constant(resolution: usize, value: T) -> Result<Self> {
        Self::new(resolution, vec![value; resolution * resolution * resolution])
    }

    /// Fills cell values from a predicate/field evaluated at cell centers.
    /// The field output is clamped to `[0,1]`.
    pub fn from_fn(resolution: usize, mut f: impl FnMut(Vec3<T>) -> T) -> Result<Self> {
        let mut values = Vec::with_capacity(resolution * resolution * resolution);
        for iz in 0..resolution {
            for iy in 0..resolution {
                for ix in 0..resolution {
                    let p = Vec3::new(
                        cell_center(ix, resolution),
                        cell_center(iy, resolution),
                        cell_center(iz, resolution),
                    );
                    values.push(f(p).max(T::zero()).min(T::one()));
                }
            }
        }
        Self::new(resolution, values)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, ix: usize, iy: usize, iz: usize) -> T {
        self.values[cell_index(ix, iy, iz, self.resolution)]
    }

    /// Trilinear sample; zero outside the canonical extent.
    pub fn sample(&self, point: Vec3<T>) -> T {
        match Stencil::at(self.resolution, point) {
            None => T::zero(),
            Some(st) => st
                .corners
                .iter()
                .map(|&(idx, w)| self.values[idx] * w)
                .sum(),
        }
    }

    /// Sample value plus its gradient with respect to the query point.
    pub fn sample_with_point_gradient(&self, point: Vec3<T>) -> (T, Vec3<T>) {
        match Stencil::at(self.resolution, point) {
            None => (T::zero(), Vec3::zero()),
            Some(st) => {
                let mut v = T::zero();
                let mut g = Vec3::zero();
                for (k, &(idx, w)) in st.corners.iter().enumerate() {
                    let cv = self.values[idx];
                    v += cv * w;
                    g += Vec3::from_array(st.dw_dp[k]) * cv;
                }
                (v, g)
            }
        }
    }

    /// Averages every cell with its mirror (about x = 0) partner.
    pub fn symmetrize(&self) -> Self {
        let r = self.resolution;
        let mut out = self.values.clone();
        for iz in 0..r {
            for iy in 0..r {
                for ix in 0..r {
                    let a = cell_index(ix, iy, iz, r);
                    let b = cell_index(r - 1 - ix, iy, iz, r);
                    out[a] = (self.values[a] + self.values[b]) * T::of(0.5);
                }
            }
        }
        Self {
            resolution: r,
            values: out,
        }
    }

    /// Binarizes at a threshold: cell is set iff value > tau.
    pub fn binarize(&self, tau: T) -> Vec<bool> {
        self.values.iter().map(|&v| v > tau).collect()
    }
}

impl<T: Real> FeatureGrid<T> {
    pub fn new(resolution: usize, channels: usize, values: Vec<T>) -> Result<Self> {
        if resolution < 2 {
            return Err(Error::InvalidParameter(format!(
                "grid resolution must be >= 2, got {resolution}"
            )));
        }
        if channels == 0 {
            return Err(Error::InvalidParameter("channels must be >= 1".into()));
        }
        let expected = channels * resolution * resolution * resolution;
        if values.len() != expected {
            return Err(Error::DimensionMismatch {
                expected: format!("{expected} values"),
                actual: format!("{}", values.len()),
            });
        }
        Ok(Self {
            resolution,
            channels,
            values,
        })
    }

    pub fn constant(resolution: usize, channels: usize, value: T) -> Result<Self> {
        Self::new(
            resolution,
            channels,
            vec![value; channels * resolution * resolution * resolution],
        )
    }

    /// Fills an RGB grid from a color field evaluated at cell centers.
    pub fn from_color_fn(resolution: usize, mut f: impl FnMut(Vec3<T>) -> [T; 3]) -> Result<Self> {
        let n = resolution * resolution * resolution;
        let mut values = vec![T::zero(); 3 * n];
        for iz in 0..resolution {
            for iy in 0..resolution {
                for ix in 0..resolution {
                    let p = Vec3::new(
                        cell_center(ix, resolution),
                        cell_center(iy, resolution),
                        cell_center(iz, resolution),
                    );
                    let c = f(p);
                    let idx = cell_index(ix, iy, iz, resolution);
                    for ch in 0..3 {
                        values[ch * n + idx] = c[ch].max(T::zero()).min(T::one());
                    }
                }
            }
        }
        Self::new(resolution, 3, values)
    }

    pub fn resolution(&self) -> usize {
        self.resolution
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn get(&self, channel: usize, ix: usize, iy: usize, iz: usize) -> T {
        let n = self.resolution * self.resolution * self.resolution;
        self.values[channel * n + cell_index(ix, iy, iz, self.resolution)]
    }

    /// Trilinear sample of every channel; zeros outside the extent.
    pub fn sample(&self, point: Vec3<T>) -> Vec<T> {
        let mut out = vec![T::zero(); self.channels];
        self.sample_into(point, &mut out);
        out
    }

    /// Like [`Self::sample`] but writing into a caller-provided buffer.
    pub fn sample_into(&self, point: Vec3<T>, out: &mut [T]) {
        debug_assert_eq!(out.len(), self.channels);
        out.fill(T::zero());
        let n = self.resolution * self.resolution * self.resolution;
        if let Some(st) = Stencil::at(self.resolution, point) {
            for &(idx, w) in &st.corners {
                for (ch, o) in out.iter_mut().enumerate() {
                    *o += self.values[ch * n + idx] * w;
                }
            }
        }
    }

    pub fn symmetrize(&self) -> Self {
        let r = self.resolution;
        let n = r * r * r;
        let mut out = self.values.clone();
        for ch in 0..self.channels {
            for iz in 0..r {
                for iy in 0..r {
                    for ix in 0..r {
                        let a = ch * n + cell_index(ix, iy, iz, r);
                        let b = ch * n + cell_index(r - 1 - ix, iy, iz, r);
                        out[a] = (self.values[a] + self.values[b]) * T::of(0.5);
                    }
                }
            }
        }
        Self {
            resolution: r,
            channels: self.channels,
            values: out,
        }
    }
}

impl<T: Real> SemiImplicitVolume<T> {
    pub fn new(occupancy: OccupancyGrid<T>, feature: FeatureGrid<T>) -> Self {
        Self { occupancy, feature }
    }

    /// Symmetrizes both grids about the x = 0 plane.
    pub fn symmetrize(&self) -> Self {
        Self {
            occupancy: self.occupancy.symmetrize(),
            feature: self.feature.symmetrize(),
        }
    }
}

/// The 8-corner trilinear stencil at a query point.
///
/// Inside the extent the continuous cell coordinate is clamped to the cell
/// center range, so samples between the outermost cell centers and the extent
/// faces hold the boundary value; outside the extent there is no stencil and
/// samples are zero.
pub(crate) struct Stencil<T> {
    /// (linear cell index, trilinear weight) for each of the 8 corners.
    pub corners: [(usize, T); 8],
    /// Per-corner weight gradient with respect to the query point.
    pub dw_dp: [[T; 3]; 8],
}

impl<T: Real> Stencil<T> {
    pub fn at(resolution: usize, p: Vec3<T>) -> Option<Self> {
        let one = T::one();
        if p.x.abs() > one || p.y.abs() > one || p.z.abs() > one {
            return None;
        }
        let r = T::from_usize(resolution).unwrap();
        let half = T::of(0.5);
        let max_u = r - one;
        let mut i0 = [0usize; 3];
        let mut f = [T::zero(); 3];
        let mut live = [T::zero(); 3];
        for (axis, &coord) in [p.x, p.y, p.z].iter().enumerate() {
            let u = (coord + one) * half * r - half;
            let uc = u.max(T::zero()).min(max_u);
            // d(u)/d(coord) = R/2 where the clamp is inactive, 0 where it is.
            live[axis] = if u > T::zero() && u < max_u {
                half * r
            } else {
                T::zero()
            };
            let base = uc.floor().min(r - T::of(2.0)).max(T::zero());
            i0[axis] = base.to_usize().unwrap();
            f[axis] = uc - base;
        }
        let mut corners = [(0usize, T::zero()); 8];
        let mut dw_dp = [[T::zero(); 3]; 8];
        let mut k = 0;
        for dz in 0..2usize {
            for dy in 0..2usize {
                for dx in 0..2usize {
                    let wx = if dx == 0 { one - f[0] } else { f[0] };
                    let wy = if dy == 0 { one - f[1] } else { f[1] };
                    let wz = if dz == 0 { one - f[2] } else { f[2] };
                    let sx = if dx == 0 { -one } else { one };
                    let sy = if dy == 0 { -one } else { one };
                    let sz = if dz == 0 { -one } else { one };
                    let idx =
                        cell_index(i0[0] + dx, i0[1] + dy, i0[2] + dz, resolution);
                    corners[k] = (idx, wx * wy * wz);
                    dw_dp[k] = [
                        sx * wy * wz * live[0],
                        wx * sy * wz * live[1],
                        wx * wy * sz * live[2],
                    ];
                    k += 1;
                }
            }
        }
        Some(Self { corners, dw_dp })
    }
}
