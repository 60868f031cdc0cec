//! Procedural ground-truth shapes, volumes and reference renders used by
//! tests and demos.

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::eval::voxelize;
use crate::float::Real;
use crate::grid::OccupancyGrid;
use crate::image::{Image, Mask};
use crate::mesh::TexturedMesh;
use crate::meshex::extract_mesh;
use crate::softras::{rasterize, SoftRasterConfig};
use crate::vec3::Vec3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::HashMap;

/// Resolution of the voxel union used to merge compound shapes.
const UNION_RESOLUTION: usize = 48;

#[derive(Clone, Copy, Debug)]
pub enum Shape {
    Sphere {
        radius: f64,
        subdivisions: usize,
    },
    Box {
        half_extents: [f64; 3],
    },
    Cylinder {
        radius: f64,
        half_height: f64,
        segments: usize,
    },
    Torus {
        major_radius: f64,
        minor_radius: f64,
        major_segments: usize,
        minor_segments: usize,
    },
    /// A box with a spherical bump poking out of its +x face and a comb of
    /// three thin teeth standing on top; merged by a voxelize/extract round
    /// trip. Each tooth is thinner than a 16-cell voxel, so coarse
    /// voxelizations lose the comb entirely.
    BoxPlusBump,
    /// Seat, back and four legs, merged by a voxelize/extract round trip.
    ChairProxy,
}

impl Shape {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "sphere" => Some(Self::Sphere {
                radius: 0.6,
                subdivisions: 3,
            }),
            "box" => Some(Self::Box {
                half_extents: [0.5, 0.5, 0.5],
            }),
            "cylinder" => Some(Self::Cylinder {
                radius: 0.4,
                half_height: 0.6,
                segments: 32,
            }),
            "torus" => Some(Self::Torus {
                major_radius: 0.5,
                minor_radius: 0.2,
                major_segments: 32,
                minor_segments: 16,
            }),
            "box-plus-bump" | "box_plus_bump" => Some(Self::BoxPlusBump),
            "chair-proxy" | "chair_proxy" => Some(Self::ChairProxy),
            _ => None,
        }
    }
}

/// Builds a watertight triangulated mesh with position-derived vertex colors.
pub fn make_shape<T: Real>(shape: &Shape) -> Result<TexturedMesh<T>> {
    let mesh = match *shape {
        Shape::Sphere {
            radius,
            subdivisions,
        } => {
            check_param(radius > 0.0 && radius <= 0.9, "sphere radius in (0, 0.9]")?;
            check_param(subdivisions <= 6, "sphere subdivisions <= 6")?;
            icosphere(radius, subdivisions)
        }
        Shape::Box { half_extents } => {
            check_param(
                half_extents.iter().all(|&h| h > 0.0 && h <= 0.9),
                "box half extents in (0, 0.9]",
            )?;
            box_mesh(Vec3::zero(), half_extents)
        }
        Shape::Cylinder {
            radius,
            half_height,
            segments,
        } => {
            check_param(
                radius > 0.0 && radius <= 0.9 && half_height > 0.0 && half_height <= 0.9,
                "cylinder dimensions in (0, 0.9]",
            )?;
            check_param(segments >= 3, "cylinder needs >= 3 segments")?;
            cylinder(radius, half_height, segments)
        }
        Shape::Torus {
            major_radius,
            minor_radius,
            major_segments,
            minor_segments,
        } => {
            check_param(
                major_radius > 0.0
                    && minor_radius > 0.0
                    && major_radius + minor_radius <= 0.9,
                "torus radii with major+minor <= 0.9",
            )?;
            check_param(
                major_segments >= 3 && minor_segments >= 3,
                "torus needs >= 3 segments per ring",
            )?;
            torus(major_radius, minor_radius, major_segments, minor_segments)
        }
        Shape::BoxPlusBump => {
            let mut parts = vec![
                box_mesh(Vec3::zero(), [0.45, 0.3, 0.35]),
                icosphere_at(0.28, 3, Vec3::new(T::of(0.45), T::zero(), T::zero())),
            ];
            // Comb teeth: half-thickness 0.03 around x in {-0.25, 0, 0.25}
            // keeps each tooth inside the 48-cell centers (nearest offset
            // 0.0208) but outside the 16-cell ones (nearest 0.0625 away or
            // more).
            for tx in [-0.25, 0.0, 0.25] {
                parts.push(box_mesh(
                    Vec3::new(T::of(tx), T::of(0.5), T::zero()),
                    [0.03, 0.25, 0.3],
                ));
            }
            union_by_voxels(&parts, UNION_RESOLUTION)?
        }
        Shape::ChairProxy => {
            let at = |x: f64, y: f64, z: f64| Vec3::new(T::of(x), T::of(y), T::of(z));
            let mut parts = vec![
                // Seat and back.
                box_mesh(at(0.0, 0.0, 0.0), [0.45, 0.05, 0.45]),
                box_mesh(at(0.0, 0.35, -0.4), [0.45, 0.35, 0.05]),
            ];
            for sx in [-1.0, 1.0] {
                for sz in [-1.0, 1.0] {
                    parts.push(box_mesh(at(0.36 * sx, -0.35, 0.36 * sz), [0.07, 0.35, 0.07]));
                }
            }
            union_by_voxels(&parts, UNION_RESOLUTION)?
        }
    };
    Ok(apply_procedural_colors(mesh))
}

/// Convenience accessor for the refinement fixture shape.
pub fn box_plus_bump_mesh<T: Real>() -> Result<TexturedMesh<T>> {
    make_shape(&Shape::BoxPlusBump)
}

fn check_param(ok: bool, what: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("expected {what}")))
    }
}

/// Position-derived color gradient so texture losses have signal.
pub fn procedural_color<T: Real>(p: Vec3<T>) -> [T; 3] {
    let half = T::of(0.5);
    let one = T::one();
    [
        ((p.x + one) * half).max(T::zero()).min(one),
        ((p.y + one) * half).max(T::zero()).min(one),
        ((p.z + one) * half).max(T::zero()).min(one),
    ]
}

fn apply_procedural_colors<T: Real>(mut mesh: TexturedMesh<T>) -> TexturedMesh<T> {
    mesh.colors = mesh.vertices.iter().map(|&v| procedural_color(v)).collect();
    mesh
}

fn box_mesh<T: Real>(center: Vec3<T>, half_extents: [f64; 3]) -> TexturedMesh<T> {
    let h = half_extents.map(T::of);
    let corner = |sx: f64, sy: f64, sz: f64| {
        center + Vec3::new(h[0] * T::of(sx), h[1] * T::of(sy), h[2] * T::of(sz))
    };
    let vertices = vec![
        corner(-1.0, -1.0, -1.0), // 0
        corner(1.0, -1.0, -1.0),  // 1
        corner(1.0, 1.0, -1.0),   // 2
        corner(-1.0, 1.0, -1.0),  // 3
        corner(-1.0, -1.0, 1.0),  // 4
        corner(1.0, -1.0, 1.0),   // 5
        corner(1.0, 1.0, 1.0),    // 6
        corner(-1.0, 1.0, 1.0),   // 7
    ];
    let faces = vec![
        [0, 2, 1],
        [0, 3, 2], // -z
        [4, 5, 6],
        [4, 6, 7], // +z
        [0, 1, 5],
        [0, 5, 4], // -y
        [3, 6, 2],
        [3, 7, 6], // +y
        [0, 7, 3],
        [0, 4, 7], // -x
        [1, 2, 6],
        [1, 6, 5], // +x
    ];
    TexturedMesh::new(vertices, faces).expect("box construction is valid")
}

fn icosphere<T: Real>(radius: f64, subdivisions: usize) -> TexturedMesh<T> {
    icosphere_at(radius, subdivisions, Vec3::zero())
}

fn icosphere_at<T: Real>(radius: f64, subdivisions: usize, center: Vec3<T>) -> TexturedMesh<T> {
    let phi = (1.0 + 5f64.sqrt()) / 2.0;
    let raw = [
        [-1.0, phi, 0.0],
        [1.0, phi, 0.0],
        [-1.0, -phi, 0.0],
        [1.0, -phi, 0.0],
        [0.0, -1.0, phi],
        [0.0, 1.0, phi],
        [0.0, -1.0, -phi],
        [0.0, 1.0, -phi],
        [phi, 0.0, -1.0],
        [phi, 0.0, 1.0],
        [-phi, 0.0, -1.0],
        [-phi, 0.0, 1.0],
    ];
    let mut vertices: Vec<Vec3<f64>> = raw
        .iter()
        .map(|v| Vec3::new(v[0], v[1], v[2]).normalized() * radius)
        .collect();
    let mut faces: Vec<[usize; 3]> = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    for _ in 0..subdivisions {
        let mut midpoint: HashMap<(usize, usize), usize> = HashMap::new();
        let mut next = Vec::with_capacity(faces.len() * 4);
        for f in &faces {
            let mids: [usize; 3] = std::array::from_fn(|k| {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                let key = (a.min(b), a.max(b));
                *midpoint.entry(key).or_insert_with(|| {
                    let m = ((vertices[a] + vertices[b]) * 0.5).normalized() * radius;
                    vertices.push(m);
                    vertices.len() - 1
                })
            });
            next.push([f[0], mids[0], mids[2]]);
            next.push([f[1], mids[1], mids[0]]);
            next.push([f[2], mids[2], mids[1]]);
            next.push([mids[0], mids[1], mids[2]]);
        }
        faces = next;
    }
    let vertices = vertices
        .into_iter()
        .map(|v| center + Vec3::new(T::of(v.x), T::of(v.y), T::of(v.z)))
        .collect();
    TexturedMesh::new(vertices, faces).expect("icosphere construction is valid")
}

fn cylinder<T: Real>(radius: f64, half_height: f64, segments: usize) -> TexturedMesh<T> {
    let mut vertices: Vec<Vec3<T>> = Vec::new();
    let mut faces = Vec::new();
    for i in 0..segments {
        let a = std::f64::consts::TAU * i as f64 / segments as f64;
        let (x, z) = (radius * a.cos(), radius * a.sin());
        vertices.push(Vec3::new(T::of(x), T::of(-half_height), T::of(z)));
        vertices.push(Vec3::new(T::of(x), T::of(half_height), T::of(z)));
    }
    let bottom_center = vertices.len();
    vertices.push(Vec3::new(T::zero(), T::of(-half_height), T::zero()));
    let top_center = vertices.len();
    vertices.push(Vec3::new(T::zero(), T::of(half_height), T::zero()));
    for i in 0..segments {
        let j = (i + 1) % segments;
        let (b0, t0, b1, t1) = (2 * i, 2 * i + 1, 2 * j, 2 * j + 1);
        faces.push([b0, b1, t1]);
        faces.push([b0, t1, t0]);
        faces.push([bottom_center, b1, b0]);
        faces.push([top_center, t0, t1]);
    }
    TexturedMesh::new(vertices, faces).expect("cylinder construction is valid")
}

fn torus<T: Real>(
    major_radius: f64,
    minor_radius: f64,
    major_segments: usize,
    minor_segments: usize,
) -> TexturedMesh<T> {
    let mut vertices = Vec::with_capacity(major_segments * minor_segments);
    for i in 0..major_segments {
        let a = std::f64::consts::TAU * i as f64 / major_segments as f64;
        for j in 0..minor_segments {
            let b = std::f64::consts::TAU * j as f64 / minor_segments as f64;
            let r = major_radius + minor_radius * b.cos();
            vertices.push(Vec3::new(
                T::of(r * a.cos()),
                T::of(minor_radius * b.sin()),
                T::of(r * a.sin()),
            ));
        }
    }
    let mut faces = Vec::with_capacity(2 * major_segments * minor_segments);
    let at = |i: usize, j: usize| (i % major_segments) * minor_segments + (j % minor_segments);
    for i in 0..major_segments {
        for j in 0..minor_segments {
            let v00 = at(i, j);
            let v10 = at(i + 1, j);
            let v01 = at(i, j + 1);
            let v11 = at(i + 1, j + 1);
            faces.push([v00, v10, v11]);
            faces.push([v00, v11, v01]);
        }
    }
    TexturedMesh::new(vertices, faces).expect("torus construction is valid")
}

/// Merges watertight parts by maxing their voxelizations and re-extracting.
fn union_by_voxels<T: Real>(
    parts: &[TexturedMesh<T>],
    resolution: usize,
) -> Result<TexturedMesh<T>> {
    let mut union: Option<Vec<T>> = None;
    for part in parts {
        let g = voxelize(part, resolution)?;
        match &mut union {
            None => union = Some(g.values().to_vec()),
            Some(u) => {
                for (a, &b) in u.iter_mut().zip(g.values()) {
                    *a = a.max(b);
                }
            }
        }
    }
    let grid = OccupancyGrid::new(resolution, union.expect("at least one part"))?;
    extract_mesh(&grid, T::of(0.5))
}

/// Coverage sharpness of the near-hard dataset renders. Small enough that
/// the union dips along projected shared edges stay below one percent of
/// mask pixels at desk-scale resolutions.
const DATASET_SIGMA: f64 = 1e-9;

/// Renders `n_views` posed views of a mesh with near-hard rasterization.
/// Azimuths and elevations sample uniformly from the given ranges;
/// reproducible for a fixed seed.
pub fn render_dataset<T: Real>(
    mesh: &TexturedMesh<T>,
    n_views: usize,
    azimuth_range: (T, T),
    elevation_range: (T, T),
    seed: u64,
    base_camera: &Camera<T>,
) -> Result<Vec<(Image<T>, Mask<T>, Camera<T>)>> {
    if n_views == 0 {
        return Err(Error::InvalidParameter("n_views must be >= 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample_range = |lo: T, hi: T| -> T {
        if hi > lo {
            lo + (hi - lo) * T::of(rng.gen::<f64>())
        } else {
            lo
        }
    };
    let config = SoftRasterConfig::<T> {
        sigma: T::of(DATASET_SIGMA),
        ..SoftRasterConfig::near_hard()
    };
    let mut out = Vec::with_capacity(n_views);
    for _ in 0..n_views {
        let az = sample_range(azimuth_range.0, azimuth_range.1);
        let el = sample_range(elevation_range.0, elevation_range.1);
        let camera = base_camera.with_pose(az, el);
        let (image, mask) = rasterize(mesh, &camera, &config)?;
        out.push((image, mask, camera));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sphere_vertices_sit_on_the_radius() {
        let m: TexturedMesh<f64> = make_shape(&Shape::Sphere {
            radius: 0.6,
            subdivisions: 3,
        })
        .unwrap();
        assert!(m.is_edge_watertight());
        for v in &m.vertices {
            assert!((v.norm() - 0.6).abs() < 1e-6);
        }
    }

    #[test]
    fn torus_has_euler_characteristic_zero() {
        let m: TexturedMesh<f64> = make_shape(&Shape::Torus {
            major_radius: 0.5,
            minor_radius: 0.2,
            major_segments: 24,
            minor_segments: 12,
        })
        .unwrap();
        assert!(m.is_edge_watertight());
        assert_eq!(m.euler_characteristic(), 0);
    }

    #[test]
    fn box_volume_checks_out_at_64() {
        let m: TexturedMesh<f64> = make_shape(&Shape::Box {
            half_extents: [0.5, 0.5, 0.5],
        })
        .unwrap();
        let g = voxelize(&m, 64).unwrap();
        let volume =
            g.values().iter().filter(|&&v| v > 0.5).count() as f64 * (2.0f64 / 64.0).powi(3);
        assert!((volume - 1.0).abs() < 0.01, "volume {volume}");
    }

    #[test]
    fn every_kind_is_watertight() {
        for shape in [
            Shape::Sphere {
                radius: 0.6,
                subdivisions: 2,
            },
            Shape::Box {
                half_extents: [0.4, 0.3, 0.5],
            },
            Shape::Cylinder {
                radius: 0.4,
                half_height: 0.5,
                segments: 24,
            },
            Shape::Torus {
                major_radius: 0.5,
                minor_radius: 0.18,
                major_segments: 20,
                minor_segments: 10,
            },
            Shape::BoxPlusBump,
            Shape::ChairProxy,
        ] {
            let m: TexturedMesh<f64> = make_shape(&shape).unwrap();
            assert!(m.is_edge_watertight(), "{shape:?} not watertight");
            // And the voxelizer's parity consistency check agrees.
            assert!(voxelize(&m, 24).is_ok(), "{shape:?} parity check failed");
            let (lo, hi) = m.bounding_box();
            for k in 0..3 {
                assert!(lo[k] >= -0.9 - 1e-9 && hi[k] <= 0.9 + 1e-9);
            }
        }
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(make_shape::<f64>(&Shape::Sphere {
            radius: 1.5,
            subdivisions: 2
        })
        .is_err());
        assert!(make_shape::<f64>(&Shape::Cylinder {
            radius: 0.4,
            half_height: 0.5,
            segments: 2
        })
        .is_err());
    }

    #[test]
    fn dataset_respects_ranges_and_seed() {
        let m: TexturedMesh<f64> = make_shape(&Shape::Sphere {
            radius: 0.5,
            subdivisions: 2,
        })
        .unwrap();
        let cam = Camera::canonical(0.0, 0.0, 32, 32).unwrap();
        let el_lim = 60f64.to_radians();
        let views =
            render_dataset(&m, 20, (0.0, std::f64::consts::TAU), (-el_lim, el_lim), 7, &cam)
                .unwrap();
        assert_eq!(views.len(), 20);
        for (_, _, c) in &views {
            assert!((0.0..std::f64::consts::TAU).contains(&c.azimuth));
            assert!((-el_lim..=el_lim).contains(&c.elevation));
        }
        let again =
            render_dataset(&m, 20, (0.0, std::f64::consts::TAU), (-el_lim, el_lim), 7, &cam)
                .unwrap();
        for ((i1, m1, c1), (i2, m2, c2)) in views.iter().zip(&again) {
            assert_eq!(c1.azimuth, c2.azimuth);
            assert_eq!(i1.data, i2.data);
            assert_eq!(m1.data, m2.data);
        }

        // Collapsed ranges give a deterministic single camera.
        let one = render_dataset(&m, 1, (0.3, 0.3), (0.1, 0.1), 9, &cam).unwrap();
        assert_eq!(one[0].2.azimuth, 0.3);
        assert_eq!(one[0].2.elevation, 0.1);
    }

    #[test]
    fn near_hard_masks_are_essentially_binary() {
        let shapes: [TexturedMesh<f64>; 2] = [
            make_shape(&Shape::Box {
                half_extents: [0.45, 0.3, 0.35],
            })
            .unwrap(),
            make_shape(&Shape::Sphere {
                radius: 0.6,
                subdivisions: 3,
            })
            .unwrap(),
        ];
        let cam = Camera::canonical(0.0, 0.0, 48, 48).unwrap();
        for m in &shapes {
            let views = render_dataset(m, 4, (0.0, 6.0), (-0.8, 0.8), 11, &cam).unwrap();
            for (_, mask, _) in &views {
                let binary = mask
                    .data
                    .iter()
                    .filter(|&&v| v < 0.01 || v > 0.99)
                    .count() as f64
                    / mask.data.len() as f64;
                assert!(binary >= 0.99, "mask binariness {binary}");
            }
        }
    }
}
