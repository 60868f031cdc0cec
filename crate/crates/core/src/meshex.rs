//! Volumetric-to-mesh conversion: iso-surface extraction from an occupancy
//! grid, per-vertex visibility, and texture sampling with symmetric fusion.

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::float::Real;
use crate::grid::OccupancyGrid;
use crate::image::Image;
use crate::mc_tables::{CORNER_OFFSETS, EDGE_CORNERS, TRI_TABLE};
use crate::mesh::TexturedMesh;
use crate::softras::hard_rasterize;
use crate::vec3::Vec3;
use std::collections::HashMap;

/// Depth tolerance for the visibility z-test, as a fraction of the camera
/// distance.
const VISIBILITY_EPS: f64 = 1e-3;

/// Denominator guard of the symmetric texture fusion.
const FUSION_EPS: f64 = 1e-4;

/// Marching cubes over the occupancy field at iso level `iso`.
///
/// The field is padded with a zero shell, so every iso-surface closes and
/// each resulting edge is shared by exactly two faces. Vertex positions are
/// linearly interpolated along lattice edges in canonical coordinates;
/// colors initialize to 0.5 gray.
pub fn extract_mesh<T: Real>(occupancy: &OccupancyGrid<T>, iso: T) -> Result<TexturedMesh<T>> {
    if !(iso > T::zero() && iso < T::one()) {
        return Err(Error::InvalidParameter(format!(
            "iso must be in (0,1), got {iso}"
        )));
    }
    let r = occupancy.resolution();
    let padded = r + 2;
    // Padded lattice sample: zero outside the grid, cell value inside.
    let sample = |ix: usize, iy: usize, iz: usize| -> T {
        if ix == 0 || iy == 0 || iz == 0 || ix > r || iy > r || iz > r {
            T::zero()
        } else {
            occupancy.get(ix - 1, iy - 1, iz - 1)
        }
    };
    let coord = |i: usize| -> T {
        // Padded lattice point i sits at the center of cell i-1.
        (T::from_usize(i).unwrap() - T::of(0.5)) * T::of(2.0) / T::from_usize(r).unwrap()
            - T::one()
    };

    let mut vertices: Vec<Vec3<T>> = Vec::new();
    let mut faces: Vec<[usize; 3]> = Vec::new();
    let mut edge_cache: HashMap<(u32, u32), usize> = HashMap::new();
    let lattice_id = |ix: usize, iy: usize, iz: usize| -> u32 {
        ((iz * padded + iy) * padded + ix) as u32
    };

    for cz in 0..padded - 1 {
        for cy in 0..padded - 1 {
            for cx in 0..padded - 1 {
                let corner_vals: [T; 8] = std::array::from_fn(|k| {
                    let [dx, dy, dz] = CORNER_OFFSETS[k];
                    sample(cx + dx, cy + dy, cz + dz)
                });
                let mut case = 0usize;
                for (k, &v) in corner_vals.iter().enumerate() {
                    if v < iso {
                        case |= 1 << k;
                    }
                }
                if case == 0 || case == 255 {
                    continue;
                }
                let tri_row = &TRI_TABLE[case];
                let mut edge_vertex = [usize::MAX; 12];
                let mut needed = [false; 12];
                for &e in tri_row.iter().take_while(|&&e| e >= 0) {
                    needed[e as usize] = true;
                }
                for (e, need) in needed.iter().enumerate() {
                    if !need {
                        continue;
                    }
                    let [c0, c1] = EDGE_CORNERS[e];
                    let [ax, ay, az] = CORNER_OFFSETS[c0];
                    let [bx, by, bz] = CORNER_OFFSETS[c1];
                    let pa = (cx + ax, cy + ay, cz + az);
                    let pb = (cx + bx, cy + by, cz + bz);
                    let ka = lattice_id(pa.0, pa.1, pa.2);
                    let kb = lattice_id(pb.0, pb.1, pb.2);
                    let key = (ka.min(kb), ka.max(kb));
                    let idx = *edge_cache.entry(key).or_insert_with(|| {
                        let va = corner_vals[c0];
                        let vb = corner_vals[c1];
                        let t = if va == vb {
                            T::of(0.5)
                        } else {
                            ((iso - va) / (vb - va)).max(T::zero()).min(T::one())
                        };
                        let a = Vec3::new(coord(pa.0), coord(pa.1), coord(pa.2));
                        let b = Vec3::new(coord(pb.0), coord(pb.1), coord(pb.2));
                        vertices.push(a + (b - a) * t);
                        vertices.len() - 1
                    });
                    edge_vertex[e] = idx;
                }
                let mut i = 0;
                while i + 2 < tri_row.len() && tri_row[i] >= 0 {
                    let v0 = edge_vertex[tri_row[i] as usize];
                    let v1 = edge_vertex[tri_row[i + 1] as usize];
                    let v2 = edge_vertex[tri_row[i + 2] as usize];
                    if v0 != v1 && v1 != v2 && v0 != v2 {
                        faces.push([v0, v1, v2]);
                    }
                    i += 3;
                }
            }
        }
    }

    if faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    TexturedMesh::new(vertices, faces)
}

/// Per-vertex visibility from a camera: a vertex is visible when it projects
/// inside the image and its camera depth is within a small tolerance of the
/// front-most surface depth around the landing pixel (z-buffer rasterized
/// from the same mesh). The depth buffer is probed over the pixel's 3x3
/// neighborhood, taking the farthest covered value, so a vertex is not
/// rejected just because its own facet slopes across the pixel.
pub fn vertex_visibility<T: Real>(mesh: &TexturedMesh<T>, camera: &Camera<T>) -> Result<Vec<bool>> {
    if mesh.faces.is_empty() {
        return Err(Error::EmptyMesh);
    }
    let (_, _, depth) = hard_rasterize(mesh, camera, [T::zero(); 3]);
    let eps_z = T::of(VISIBILITY_EPS) * camera.distance;
    let w = camera.width;
    let h = camera.height;
    Ok(mesh
        .vertices
        .iter()
        .map(|&v| {
            let Some(([px, py], z)) = camera.project(v) else {
                return false;
            };
            // The containing pixel of the projected point.
            let half = T::of(0.5);
            let xi = (px + half).floor().to_f64_lossy();
            let yi = (py + half).floor().to_f64_lossy();
            if xi < 0.0 || yi < 0.0 || xi >= w as f64 || yi >= h as f64 {
                return false;
            }
            let (xi, yi) = (xi as i64, yi as i64);
            let mut front = T::neg_infinity();
            for dy in -1..=1i64 {
                for dx in -1..=1i64 {
                    let (qx, qy) = (xi + dx, yi + dy);
                    if qx < 0 || qy < 0 || qx >= w as i64 || qy >= h as i64 {
                        continue;
                    }
                    let d = depth[qy as usize * w + qx as usize];
                    if d.is_finite() && d > front {
                        front = d;
                    }
                }
            }
            // Nothing rasterized nearby: the vertex faces empty space.
            if front == T::neg_infinity() {
                return true;
            }
            z <= front + eps_z
        })
        .collect())
}

/// Samples per-vertex colors from a posed image, fusing each vertex with its
/// reflective symmetric partner: `t_i = (w_i t_i + w_s t_s)/(w_i + w_s + eps)`
/// where `s` is the nearest vertex to the x-mirrored position. Vertex pairs
/// that are both invisible fall back to 0.5 gray.
pub fn sample_textures<T: Real>(
    mesh: &TexturedMesh<T>,
    image: &Image<T>,
    camera: &Camera<T>,
    visibility: &[bool],
) -> Result<Vec<[T; 3]>> {
    if visibility.len() != mesh.vertices.len() {
        return Err(Error::DimensionMismatch {
            expected: format!("{} visibility flags", mesh.vertices.len()),
            actual: format!("{}", visibility.len()),
        });
    }
    if image.width != camera.width || image.height != camera.height {
        return Err(Error::DimensionMismatch {
            expected: format!("{}x{} image", camera.width, camera.height),
            actual: format!("{}x{}", image.width, image.height),
        });
    }
    let mirror_partner = nearest_mirrored(&mesh.vertices);
    let sampled: Vec<[T; 3]> = mesh
        .vertices
        .iter()
        .map(|&v| match camera.project(v) {
            Some(([px, py], _)) => image.sample_bilinear(px, py),
            None => [T::zero(); 3],
        })
        .collect();
    let eps = T::of(FUSION_EPS);
    let gray = [T::of(0.5); 3];
    Ok((0..mesh.vertices.len())
        .map(|i| {
            let s = mirror_partner[i];
            let wi = if visibility[i] { T::one() } else { T::zero() };
            let ws = if visibility[s] { T::one() } else { T::zero() };
            if wi.is_zero() && ws.is_zero() {
                return gray;
            }
            let denom = wi + ws + eps;
            std::array::from_fn(|ch| (wi * sampled[i][ch] + ws * sampled[s][ch]) / denom)
        })
        .collect())
}

/// For each vertex, the index of the nearest vertex to its x-mirrored
/// position (may be itself for on-plane vertices).
pub fn nearest_mirrored<T: Real>(vertices: &[Vec3<T>]) -> Vec<usize> {
    vertices
        .iter()
        .map(|&v| {
            let target = v.mirror_x();
            let mut best = (T::infinity(), 0usize);
            for (j, &u) in vertices.iter().enumerate() {
                let d = (u - target).norm_sq();
                if d < best.0 {
                    best = (d, j);
                }
            }
            best.1
        })
        .collect()
}
