//! Differentiable mesh rasterizer.
//!
//! Pixel coverage of a face is a sigmoid of the signed squared distance to
//! the projected triangle boundary (positive inside), measured in normalized
//! image coordinates (pixel position divided by image width). The silhouette
//! is the probabilistic union of face coverages and colors are aggregated by
//! a coverage-weighted softmax over inverse depth, blended with the
//! background by the mask. Gradients are available with respect to vertex
//! positions, vertex colors, and the camera pose (azimuth, elevation).
//!
//! Faces farther than `CULL * sigma` in squared distance from a pixel
//! contribute less than ~2e-35 coverage and are skipped.

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::float::Real;
use crate::image::{Image, Mask};
use crate::mesh::TexturedMesh;
use crate::vec3::Vec3;
use rayon::prelude::*;

const CULL: f64 = 80.0;
const Z_EPS: f64 = 1e-4;

#[derive(Clone, Copy, Debug)]
pub struct SoftRasterConfig<T> {
    /// Sharpness of the per-face coverage sigmoid, in squared normalized
    /// image units.
    pub sigma: T,
    /// Temperature of the inverse-depth softmax color aggregation.
    pub gamma: T,
    pub background: [T; 3],
}

impl<T: Real> Default for SoftRasterConfig<T> {
    fn default() -> Self {
        Self {
            sigma: T::of(1e-4),
            gamma: T::of(1e-4),
            background: [T::zero(); 3],
        }
    }
}

impl<T: Real> SoftRasterConfig<T> {
    pub fn validated(self) -> Result<Self> {
        if !(self.sigma > T::zero()) || !(self.gamma > T::zero()) {
            return Err(Error::InvalidParameter(
                "sigma and gamma must be positive".into(),
            ));
        }
        Ok(self)
    }

    /// Near-hard settings used to produce reference renders.
    pub fn near_hard() -> Self {
        Self {
            sigma: T::of(1e-6),
            gamma: T::of(1e-6),
            background: [T::zero(); 3],
        }
    }
}

/// Gradients of a rasterized view.
#[derive(Clone, Debug)]
pub struct RasterGrads<T> {
    pub d_vertices: Vec<Vec3<T>>,
    pub d_colors: Vec<[T; 3]>,
    pub d_azimuth: T,
    pub d_elevation: T,
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// log(sigmoid(x)), stable for large |x|.
fn log_sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        -(-x).exp().ln_1p()
    } else {
        x - x.exp().ln_1p()
    }
}

/// Soft coverage of a 2D triangle footprint at a pixel position.
///
/// 0.5 exactly on the boundary, ->1 deep inside, ->0 far outside. Degenerate
/// footprints have empty interior, so their coverage never exceeds 0.5.
pub fn face_coverage<T: Real>(tri: &[[T; 2]; 3], pixel: [T; 2], sigma: T) -> T {
    let q = TriQuery::at(tri, pixel);
    sigmoid(q.signed_d2() / sigma)
}

/// Screen-space query of one triangle at one pixel.
struct TriQuery<T> {
    inside: bool,
    d2: T,
    /// Closest boundary edge (vertex e to vertex (e+1)%3) and its parameters.
    edge: usize,
    t: T,
    t_interior: bool,
    /// Pixel minus closest boundary point.
    r: [T; 2],
    bary: [T; 3],
}

fn cross2<T: Real>(a: [T; 2], b: [T; 2]) -> T {
    a[0] * b[1] - a[1] * b[0]
}

fn sub2<T: Real>(a: [T; 2], b: [T; 2]) -> [T; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

impl<T: Real> TriQuery<T> {
    fn at(v: &[[T; 2]; 3], p: [T; 2]) -> Self {
        // Inside test: all edge cross products strictly on the same side.
        let area = cross2(sub2(v[1], v[0]), sub2(v[2], v[0]));
        let c0 = cross2(sub2(v[1], v[0]), sub2(p, v[0]));
        let c1 = cross2(sub2(v[2], v[1]), sub2(p, v[1]));
        let c2 = cross2(sub2(v[0], v[2]), sub2(p, v[2]));
        let inside = (c0 > T::zero() && c1 > T::zero() && c2 > T::zero())
            || (c0 < T::zero() && c1 < T::zero() && c2 < T::zero());

        // Closest point on the boundary over the three edge segments.
        let mut best = (T::infinity(), 0usize, T::zero(), [T::zero(); 2], false);
        for e in 0..3 {
            let a = v[e];
            let b = v[(e + 1) % 3];
            let eab = sub2(b, a);
            let m = sub2(p, a);
            let ee = eab[0] * eab[0] + eab[1] * eab[1];
            let (t, t_interior) = if ee > T::zero() {
                let t_raw = (m[0] * eab[0] + m[1] * eab[1]) / ee;
                (
                    t_raw.max(T::zero()).min(T::one()),
                    t_raw > T::zero() && t_raw < T::one(),
                )
            } else {
                (T::zero(), false)
            };
            let r = [m[0] - eab[0] * t, m[1] - eab[1] * t];
            let d2 = r[0] * r[0] + r[1] * r[1];
            if d2 < best.0 {
                best = (d2, e, t, r, t_interior);
            }
        }
        let (d2, edge, t, r, t_interior) = best;

        let bary = if inside && area != T::zero() {
            // Exact barycentrics of the pixel.
            let a0 = cross2(sub2(v[1], p), sub2(v[2], p));
            let a1 = cross2(sub2(v[2], p), sub2(v[0], p));
            let a2 = cross2(sub2(v[0], p), sub2(v[1], p));
            [a0 / area, a1 / area, a2 / area]
        } else {
            // Barycentrics of the closest boundary point.
            let mut b = [T::zero(); 3];
            b[edge] = T::one() - t;
            b[(edge + 1) % 3] = t;
            b
        };

        Self {
            inside,
            d2,
            edge,
            t,
            t_interior,
            r,
            bary,
        }
    }

    fn sign(&self) -> T {
        if self.inside {
            T::one()
        } else {
            -T::one()
        }
    }

    fn signed_d2(&self) -> T {
        self.sign() * self.d2
    }

    /// Distributes a cotangent on d2 to the three 2D vertices (envelope form:
    /// the segment parameter is stationary, so only the endpoints move).
    fn scatter_d2(&self, d_d2: T, out: &mut [[T; 2]; 3]) {
        let i = self.edge;
        let j = (self.edge + 1) % 3;
        let two = T::of(2.0);
        let wa = -two * (T::one() - self.t);
        let wb = -two * self.t;
        for k in 0..2 {
            out[i][k] += d_d2 * wa * self.r[k];
            out[j][k] += d_d2 * wb * self.r[k];
        }
    }

    /// Distributes cotangents on the barycentrics to the three 2D vertices.
    fn scatter_bary(&self, v: &[[T; 2]; 3], p: [T; 2], d_bary: [T; 3], out: &mut [[T; 2]; 3]) {
        if self.inside {
            let area = cross2(sub2(v[1], v[0]), sub2(v[2], v[0]));
            if area == T::zero() {
                return;
            }
            let perp = |u: [T; 2]| [u[1], -u[0]];
            let a = [
                cross2(sub2(v[1], p), sub2(v[2], p)),
                cross2(sub2(v[2], p), sub2(v[0], p)),
                cross2(sub2(v[0], p), sub2(v[1], p)),
            ];
            // dA/dv_j for the full area and each sub-area.
            let d_area = [
                perp(sub2(v[1], v[2])),
                perp(sub2(v[2], v[0])),
                perp(sub2(v[0], v[1])),
            ];
            // d a_i/d v_j, zero when i == j.
            let d_sub = |i: usize, j: usize| -> [T; 2] {
                if i == j {
                    return [T::zero(); 2];
                }
                // a_i = cross(v_{i+1} - p, v_{i+2} - p)
                let i1 = (i + 1) % 3;
                let i2 = (i + 2) % 3;
                if j == i1 {
                    perp(sub2(v[i2], p))
                } else {
                    let q = perp(sub2(v[i1], p));
                    [-q[0], -q[1]]
                }
            };
            for i in 0..3 {
                if d_bary[i] == T::zero() {
                    continue;
                }
                let bi = a[i] / area;
                for j in 0..3 {
                    let ds = d_sub(i, j);
                    for k in 0..2 {
                        out[j][k] += d_bary[i] * (ds[k] - d_area[j][k] * bi) / area;
                    }
                }
            }
        } else if self.t_interior {
            // bary = (1-t, t) on the closest edge; chain through t.
            let i = self.edge;
            let j = (self.edge + 1) % 3;
            let d_t = d_bary[j] - d_bary[i];
            if d_t == T::zero() {
                return;
            }
            let a = v[i];
            let b = v[j];
            let e = sub2(b, a);
            let m = sub2(p, a);
            let ee = e[0] * e[0] + e[1] * e[1];
            if ee == T::zero() {
                return;
            }
            let two = T::of(2.0);
            for k in 0..2 {
                let dt_da = (two * self.t * e[k] - e[k] - m[k]) / ee;
                let dt_db = (m[k] - two * self.t * e[k]) / ee;
                out[i][k] += d_t * dt_da;
                out[j][k] += d_t * dt_db;
            }
        }
        // Closest point at a vertex: barycentrics are constant one-hot.
    }
}

/// Per-vertex screen data shared by all faces.
struct ScreenVertex<T> {
    /// Normalized screen position (pixel position / image width).
    n: [T; 2],
    inv_z: T,
    xc: T,
    yc: T,
    zc: T,
    z_clamped: bool,
    in_front: bool,
}

struct PreparedScene<T> {
    verts: Vec<ScreenVertex<T>>,
    /// Faces that survive the in-front check, with pixel bounding boxes.
    faces: Vec<(usize, [usize; 4])>, // (face index, [x0, x1, y0, y1] inclusive)
    /// Face ids overlapping each pixel row, in face order.
    rows: Vec<Vec<u32>>,
}

fn prepare_scene<T: Real>(
    mesh: &TexturedMesh<T>,
    camera: &Camera<T>,
    sigma: T,
) -> PreparedScene<T> {
    let frame = camera.frame();
    let w = T::from_usize(camera.width).unwrap();
    let h = T::from_usize(camera.height).unwrap();
    let half = T::of(0.5);
    let z_eps = T::of(Z_EPS);

    let verts: Vec<ScreenVertex<T>> = mesh
        .vertices
        .iter()
        .map(|&v| {
            let rel = v - frame.center;
            let xc = rel.dot(frame.right);
            let yc = rel.dot(frame.up);
            let zc_raw = rel.dot(frame.forward);
            let in_front = zc_raw > z_eps;
            let zc = zc_raw.max(z_eps);
            let sx = frame.focal * xc / zc + w * half;
            let sy = h * half - frame.focal * yc / zc;
            ScreenVertex {
                n: [sx / w, sy / w],
                inv_z: T::one() / zc,
                xc,
                yc,
                zc,
                z_clamped: !in_front,
                in_front,
            }
        })
        .collect();

    let r_cull = (T::of(CULL) * sigma).sqrt();
    let mut faces = Vec::new();
    let mut rows = vec![Vec::new(); camera.height];
    for (fi, f) in mesh.faces.iter().enumerate() {
        if !f.iter().any(|&vi| verts[vi].in_front) {
            continue;
        }
        let xs = f.map(|vi| verts[vi].n[0]);
        let ys = f.map(|vi| verts[vi].n[1]);
        let min = |a: &[T; 3]| a.iter().fold(T::infinity(), |m, &v| m.min(v));
        let max = |a: &[T; 3]| a.iter().fold(T::neg_infinity(), |m, &v| m.max(v));
        // Normalized coords back to pixel indices: px = n*W - 0.5.
        let to_px = |n: T| n * w - half;
        let x0 = (to_px(min(&xs) - r_cull)).floor().to_f64_lossy();
        let x1 = (to_px(max(&xs) + r_cull)).ceil().to_f64_lossy();
        let y0 = (to_px(min(&ys) - r_cull)).floor().to_f64_lossy();
        let y1 = (to_px(max(&ys) + r_cull)).ceil().to_f64_lossy();
        if x1 < 0.0 || y1 < 0.0 || x0 >= camera.width as f64 || y0 >= camera.height as f64 {
            continue;
        }
        let bbox = [
            x0.max(0.0) as usize,
            (x1.max(0.0) as usize).min(camera.width - 1),
            y0.max(0.0) as usize,
            (y1.max(0.0) as usize).min(camera.height - 1),
        ];
        for row in rows.iter_mut().take(bbox[3] + 1).skip(bbox[2]) {
            row.push(fi as u32);
        }
        faces.push((fi, bbox));
    }
    // Index from face id to position in `faces`.
    PreparedScene { verts, faces, rows }
}

impl<T: Real> PreparedScene<T> {
    fn face_bbox(&self) -> std::collections::HashMap<u32, [usize; 4]> {
        self.faces
            .iter()
            .map(|&(fi, bbox)| (fi as u32, bbox))
            .collect()
    }

    fn footprint(&self, mesh: &TexturedMesh<T>, fi: usize) -> ([[T; 2]; 3], [T; 3], [usize; 3]) {
        let f = mesh.faces[fi];
        (
            f.map(|vi| self.verts[vi].n),
            f.map(|vi| self.verts[vi].inv_z),
            f,
        )
    }
}

/// Renders a textured mesh to an image and soft silhouette mask.
pub fn rasterize<T: Real>(
    mesh: &TexturedMesh<T>,
    camera: &Camera<T>,
    config: &SoftRasterConfig<T>,
) -> Result<(Image<T>, Mask<T>)> {
    let config = config.validated()?;
    let scene = prepare_scene(mesh, camera, config.sigma);
    let bboxes = scene.face_bbox();
    let (w, h) = (camera.width, camera.height);
    let wt = T::from_usize(w).unwrap();
    let half = T::of(0.5);

    let mut image = Image::new(w, h);
    let mut mask = Mask::new(w, h);
    image
        .data
        .par_chunks_mut(w * 3)
        .zip(mask.data.par_chunks_mut(w))
        .enumerate()
        .for_each(|(y, (img_row, mask_row))| {
            let faces_here = &scene.rows[y];
            let py = (T::from_usize(y).unwrap() + half) / wt;
            for x in 0..w {
                let mut acc = RowAccum::new();
                let px = (T::from_usize(x).unwrap() + half) / wt;
                for &fid in faces_here {
                    let bbox = bboxes[&fid];
                    if x < bbox[0] || x > bbox[1] {
                        continue;
                    }
                    let (tri, inv_z, vidx) = scene.footprint(mesh, fid as usize);
                    let q = TriQuery::at(&tri, [px, py]);
                    let xarg = q.signed_d2() / config.sigma;
                    if !q.inside && q.d2 > T::of(CULL) * config.sigma {
                        continue;
                    }
                    let iz = q.bary[0] * inv_z[0] + q.bary[1] * inv_z[1] + q.bary[2] * inv_z[2];
                    let color = interp_color(mesh, vidx, q.bary);
                    acc.add(xarg, iz / config.gamma, color);
                }
                let (m, c) = acc.finish(config.background);
                mask_row[x] = m;
                img_row[x * 3..x * 3 + 3].copy_from_slice(&c);
            }
        });
    Ok((image, mask))
}

/// Online accumulator over the faces covering one pixel.
struct RowAccum<T> {
    log_transparent: T,
    a_max: T,
    wsum: T,
    color: [T; 3],
    hits: usize,
}

impl<T: Real> RowAccum<T> {
    fn new() -> Self {
        Self {
            log_transparent: T::zero(),
            a_max: T::neg_infinity(),
            wsum: T::zero(),
            color: [T::zero(); 3],
            hits: 0,
        }
    }

    /// `xarg` = signed d^2 / sigma; `zval` = inverse depth / gamma.
    fn add(&mut self, xarg: T, zval: T, color: [T; 3]) {
        self.log_transparent += log_sigmoid(-xarg);
        let a = log_sigmoid(xarg) + zval;
        if a > self.a_max {
            let scale = if self.a_max.is_finite() {
                (self.a_max - a).exp()
            } else {
                T::zero()
            };
            self.wsum *= scale;
            for c in &mut self.color {
                *c *= scale;
            }
            self.a_max = a;
        }
        let w = (a - self.a_max).exp();
        self.wsum += w;
        for (acc, c) in self.color.iter_mut().zip(color) {
            *acc += c * w;
        }
        self.hits += 1;
    }

    fn mask(&self) -> T {
        -self.log_transparent.exp_m1()
    }

    fn finish(&self, background: [T; 3]) -> (T, [T; 3]) {
        let m = self.mask();
        if self.hits == 0 || self.wsum <= T::zero() {
            return (m, background);
        }
        let mut out = [T::zero(); 3];
        for ch in 0..3 {
            out[ch] = (m * self.color[ch] / self.wsum + (T::one() - m) * background[ch])
                .max(T::zero())
                .min(T::one());
        }
        (m, out)
    }
}

fn interp_color<T: Real>(mesh: &TexturedMesh<T>, vidx: [usize; 3], bary: [T; 3]) -> [T; 3] {
    let mut out = [T::zero(); 3];
    for k in 0..3 {
        let c = mesh.colors[vidx[k]];
        for ch in 0..3 {
            out[ch] += c[ch] * bary[k];
        }
    }
    out
}

/// Analytic adjoint of [`rasterize`]: gradients of
/// `<d_image, image> + <d_mask, mask>` with respect to vertex positions,
/// vertex colors and the camera pose. Row bands accumulate in a fixed order,
/// so results are reproducible regardless of thread count.
pub fn rasterize_backward<T: Real>(
    mesh: &TexturedMesh<T>,
    camera: &Camera<T>,
    config: &SoftRasterConfig<T>,
    d_image: &Image<T>,
    d_mask: &Mask<T>,
) -> Result<RasterGrads<T>> {
    let config = config.validated()?;
    if d_image.width != camera.width || d_image.height != camera.height {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{}", camera.width, camera.height),
            actual: format!("{}x{}", d_image.width, d_image.height),
        });
    }
    let scene = prepare_scene(mesh, camera, config.sigma);
    let bboxes = scene.face_bbox();
    let nv = mesh.vertices.len();
    let (w, h) = (camera.width, camera.height);
    let wt = T::from_usize(w).unwrap();
    let half = T::of(0.5);

    let bands = h.min(16);
    let rows_per_band = h.div_ceil(bands);
    let band_grads: Vec<(Vec<[T; 2]>, Vec<T>, Vec<[T; 3]>)> = (0..bands)
        .into_par_iter()
        .map(|band| {
            let mut d_n = vec![[T::zero(); 2]; nv];
            let mut d_iz = vec![T::zero(); nv];
            let mut d_col = vec![[T::zero(); 3]; nv];
            let y0 = band * rows_per_band;
            let y1 = ((band + 1) * rows_per_band).min(h);
            for y in y0..y1 {
                let faces_here = &scene.rows[y];
                let py = (T::from_usize(y).unwrap() + half) / wt;
                for x in 0..w {
                    let cot_img = d_image.pixel(x, y);
                    let cot_m = d_mask.get(x, y);
                    if cot_m.is_zero() && cot_img.iter().all(|v| v.is_zero()) {
                        continue;
                    }
                    let px = (T::from_usize(x).unwrap() + half) / wt;
                    backward_pixel(
                        mesh, &scene, &bboxes, faces_here, &config, [px, py], x, cot_img, cot_m,
                        &mut d_n, &mut d_iz, &mut d_col,
                    );
                }
            }
            (d_n, d_iz, d_col)
        })
        .collect();

    let mut d_n = vec![[T::zero(); 2]; nv];
    let mut d_iz = vec![T::zero(); nv];
    let mut d_colors = vec![[T::zero(); 3]; nv];
    for (bn, biz, bc) in band_grads {
        for i in 0..nv {
            d_n[i][0] += bn[i][0];
            d_n[i][1] += bn[i][1];
            d_iz[i] += biz[i];
            for ch in 0..3 {
                d_colors[i][ch] += bc[i][ch];
            }
        }
    }

    // Chain normalized-screen and inverse-depth gradients to world space
    // and pose.
    let frame = camera.frame();
    let fgrad = camera.frame_gradient();
    let focal = frame.focal;
    let mut d_vertices = vec![Vec3::zero(); nv];
    let mut d_az = T::zero();
    let mut d_el = T::zero();
    for i in 0..nv {
        let sv = &scene.verts[i];
        let gnx = d_n[i][0];
        let gny = d_n[i][1];
        let giz = d_iz[i];
        if gnx.is_zero() && gny.is_zero() && giz.is_zero() {
            continue;
        }
        let zc = sv.zc;
        // n.x = (F*xc/zc + W/2)/W, n.y = (H/2 - F*yc/zc)/W, iz = 1/zc.
        let d_xc = gnx * focal / (wt * zc);
        let d_yc = -gny * focal / (wt * zc);
        let d_zc = if sv.z_clamped {
            T::zero()
        } else {
            (-gnx * focal * sv.xc + gny * focal * sv.yc) / (wt * zc * zc) - giz / (zc * zc)
        };
        d_vertices[i] =
            frame.right * d_xc + frame.up * d_yc + frame.forward * d_zc;
        let rel = mesh.vertices[i] - frame.center;
        for (axis, out) in [(0usize, &mut d_az), (1usize, &mut d_el)] {
            let dxc = rel.dot(fgrad.d_right[axis]) - fgrad.d_center[axis].dot(frame.right);
            let dyc = rel.dot(fgrad.d_up[axis]) - fgrad.d_center[axis].dot(frame.up);
            let dzc = rel.dot(fgrad.d_forward[axis]) - fgrad.d_center[axis].dot(frame.forward);
            *out += d_xc * dxc + d_yc * dyc + d_zc * dzc;
        }
    }
    Ok(RasterGrads {
        d_vertices,
        d_colors,
        d_azimuth: d_az,
        d_elevation: d_el,
    })
}

#[allow(clippy::too_many_arguments)]
fn backward_pixel<T: Real>(
    mesh: &TexturedMesh<T>,
    scene: &PreparedScene<T>,
    bboxes: &std::collections::HashMap<u32, [usize; 4]>,
    faces_here: &[u32],
    config: &SoftRasterConfig<T>,
    p: [T; 2],
    x: usize,
    cot_img: [T; 3],
    cot_m: T,
    d_n: &mut [[T; 2]],
    d_iz: &mut [T],
    d_col: &mut [[T; 3]],
) {
    // Pass 1: reproduce the forward accumulators.
    let mut acc = RowAccum::new();
    let mut touched: Vec<u32> = Vec::new();
    for &fid in faces_here {
        let bbox = bboxes[&fid];
        if x < bbox[0] || x > bbox[1] {
            continue;
        }
        let (tri, inv_z, vidx) = scene.footprint(mesh, fid as usize);
        let q = TriQuery::at(&tri, p);
        if !q.inside && q.d2 > T::of(CULL) * config.sigma {
            continue;
        }
        let xarg = q.signed_d2() / config.sigma;
        let iz = q.bary[0] * inv_z[0] + q.bary[1] * inv_z[1] + q.bary[2] * inv_z[2];
        acc.add(xarg, iz / config.gamma, interp_color(mesh, vidx, q.bary));
        touched.push(fid);
    }
    if acc.hits == 0 || acc.wsum <= T::zero() {
        return;
    }
    let m = acc.mask();
    let cbar = [
        acc.color[0] / acc.wsum,
        acc.color[1] / acc.wsum,
        acc.color[2] / acc.wsum,
    ];
    // d out / d mask, through the background blend.
    let mut d_m = cot_m;
    for ch in 0..3 {
        d_m += cot_img[ch] * (cbar[ch] - config.background[ch]);
    }

    // Pass 2: distribute to each touched face.
    for &fid in &touched {
        let (tri, inv_z, vidx) = scene.footprint(mesh, fid as usize);
        let q = TriQuery::at(&tri, p);
        let xarg = q.signed_d2() / config.sigma;
        let iz = q.bary[0] * inv_z[0] + q.bary[1] * inv_z[1] + q.bary[2] * inv_z[2];
        let a = log_sigmoid(xarg) + iz / config.gamma;
        let w_soft = (a - acc.a_max).exp() / acc.wsum;
        let color = interp_color(mesh, vidx, q.bary);
        let cov = sigmoid(xarg);

        // Softmax-weight path: d out / d a.
        let mut d_a = T::zero();
        for ch in 0..3 {
            d_a += cot_img[ch] * m * w_soft * (color[ch] - cbar[ch]);
        }
        // Mask path: d mask / d cov = prod_{k != f} (1 - cov_k).
        let others = (acc.log_transparent - log_sigmoid(-xarg)).exp();
        let d_cov = d_m * others;

        // d out / d xarg, combining both paths:
        // d cov/d xarg = cov(1-cov), d a/d xarg = 1 - cov.
        let one_minus_cov = sigmoid(-xarg);
        let d_xarg = d_cov * cov * one_minus_cov + d_a * one_minus_cov;
        let d_d2 = d_xarg * q.sign() / config.sigma;

        // d out / d iz via the softmax logit.
        let d_iz_face = d_a / config.gamma;

        // Color cotangent: d out / d color_f = m * w_soft * cot_img.
        let mut d_color_face = [T::zero(); 3];
        for ch in 0..3 {
            d_color_face[ch] = cot_img[ch] * m * w_soft;
        }

        // Barycentric cotangents from color interpolation and depth interp.
        let mut d_bary = [T::zero(); 3];
        for k in 0..3 {
            let c = mesh.colors[vidx[k]];
            for ch in 0..3 {
                d_bary[k] += d_color_face[ch] * c[ch];
            }
            d_bary[k] += d_iz_face * inv_z[k];
            d_iz[vidx[k]] += d_iz_face * q.bary[k];
            for ch in 0..3 {
                d_col[vidx[k]][ch] += d_color_face[ch] * q.bary[k];
            }
        }

        let mut d_tri = [[T::zero(); 2]; 3];
        q.scatter_d2(d_d2, &mut d_tri);
        q.scatter_bary(&tri, p, d_bary, &mut d_tri);
        for k in 0..3 {
            d_n[vidx[k]][0] += d_tri[k][0];
            d_n[vidx[k]][1] += d_tri[k][1];
        }
    }
}

/// Mask of pixels whose squared distance to some face boundary is below
/// `factor * sigma` (1 inside the band). Finite-difference gradient checks
/// exclude this band, where the coverage sigmoid is steep.
pub fn boundary_band<T: Real>(
    mesh: &TexturedMesh<T>,
    camera: &Camera<T>,
    config: &SoftRasterConfig<T>,
    factor: T,
) -> Mask<T> {
    let scene = prepare_scene(mesh, camera, config.sigma * factor);
    let (w, h) = (camera.width, camera.height);
    let wt = T::from_usize(w).unwrap();
    let half = T::of(0.5);
    let mut band = Mask::new(w, h);
    for y in 0..h {
        let py = (T::from_usize(y).unwrap() + half) / wt;
        for x in 0..w {
            let px = (T::from_usize(x).unwrap() + half) / wt;
            let hit = scene.faces.iter().any(|&(fi, _)| {
                let (tri, _, _) = scene.footprint(mesh, fi);
                TriQuery::at(&tri, [px, py]).d2 < factor * config.sigma
            });
            if hit {
                band.set(x, y, T::one());
            }
        }
    }
    band
}

/// Hard z-buffer rasterization: nearest covering face wins each pixel.
/// Returns the image, binary mask, and per-pixel camera depth
/// (infinity where empty).
pub fn hard_rasterize<T: Real>(
    mesh: &TexturedMesh<T>,
    camera: &Camera<T>,
    background: [T; 3],
) -> (Image<T>, Mask<T>, Vec<T>) {
    let scene = prepare_scene(mesh, camera, T::of(1e-12));
    let (w, h) = (camera.width, camera.height);
    let wt = T::from_usize(w).unwrap();
    let half = T::of(0.5);
    let mut image = Image::constant(w, h, T::zero());
    for y in 0..h {
        for x in 0..w {
            image.set_pixel(x, y, background);
        }
    }
    let mut mask = Mask::new(w, h);
    let mut depth = vec![T::infinity(); w * h];

    for &(fi, bbox) in &scene.faces {
        let (tri, inv_z, vidx) = scene.footprint(mesh, fi);
        for y in bbox[2]..=bbox[3] {
            let py = (T::from_usize(y).unwrap() + half) / wt;
            for x in bbox[0]..=bbox[1] {
                let px = (T::from_usize(x).unwrap() + half) / wt;
                let q = TriQuery::at(&tri, [px, py]);
                if !q.inside {
                    continue;
                }
                let iz = q.bary[0] * inv_z[0] + q.bary[1] * inv_z[1] + q.bary[2] * inv_z[2];
                if iz <= T::zero() {
                    continue;
                }
                let z = T::one() / iz;
                let idx = y * w + x;
                if z < depth[idx] {
                    depth[idx] = z;
                    mask.data[idx] = T::one();
                    image.set_pixel(x, y, interp_color(mesh, vidx, q.bary));
                }
            }
        }
    }
    (image, mask, depth)
}
