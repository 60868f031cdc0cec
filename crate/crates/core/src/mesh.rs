//! Triangle meshes with per-vertex colors.

use crate::error::{Error, Result};
use crate::float::Real;
use crate::vec3::Vec3;
use std::collections::HashMap;

/// Triangle mesh: vertex positions, faces, per-vertex RGB colors and an
/// optional visibility flag per vertex.
#[derive(Clone, Debug)]
pub struct TexturedMesh<T> {
    pub vertices: Vec<Vec3<T>>,
    pub faces: Vec<[usize; 3]>,
    pub colors: Vec<[T; 3]>,
    pub visibility: Option<Vec<bool>>,
}

impl<T: Real> TexturedMesh<T> {
    /// Builds a mesh with uniform 0.5 gray colors, validating face indices.
    pub fn new(vertices: Vec<Vec3<T>>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let gray = [T::of(0.5); 3];
        let colors = vec![gray; vertices.len()];
        Self::with_colors(vertices, faces, colors)
    }

    pub fn with_colors(
        vertices: Vec<Vec3<T>>,
        faces: Vec<[usize; 3]>,
        colors: Vec<[T; 3]>,
    ) -> Result<Self> {
        if colors.len() != vertices.len() {
            return Err(Error::DimensionMismatch {
                expected: format!("{} colors", vertices.len()),
                actual: format!("{}", colors.len()),
            });
        }
        for (fi, f) in faces.iter().enumerate() {
            for &v in f {
                if v >= vertices.len() {
                    return Err(Error::InvalidParameter(format!(
                        "face {fi} references vertex {v} of {}",
                        vertices.len()
                    )));
                }
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(Error::InvalidParameter(format!(
                    "face {fi} is degenerate: {f:?}"
                )));
            }
        }
        Ok(Self {
            vertices,
            faces,
            colors,
            visibility: None,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    /// Undirected edge list (each edge once), derived from the faces.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut seen = HashMap::new();
        let mut edges = Vec::new();
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                let key = (a.min(b), a.max(b));
                if seen.insert(key, ()).is_none() {
                    edges.push(key);
                }
            }
        }
        edges
    }

    /// Neighbor lists over the undirected edge graph.
    pub fn vertex_neighbors(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.vertices.len()];
        for (a, b) in self.edges() {
            nb[a].push(b);
            nb[b].push(a);
        }
        nb
    }

    /// True when every undirected edge is shared by exactly two faces.
    pub fn is_edge_watertight(&self) -> bool {
        let mut count: HashMap<(usize, usize), usize> = HashMap::new();
        for f in &self.faces {
            for (a, b) in [(f[0], f[1]), (f[1], f[2]), (f[2], f[0])] {
                *count.entry((a.min(b), a.max(b))).or_insert(0) += 1;
            }
        }
        !count.is_empty() && count.values().all(|&c| c == 2)
    }

    /// V - E + F.
    pub fn euler_characteristic(&self) -> i64 {
        self.vertices.len() as i64 - self.edges().len() as i64 + self.faces.len() as i64
    }

    pub fn face_area(&self, f: [usize; 3]) -> T {
        let e1 = self.vertices[f[1]] - self.vertices[f[0]];
        let e2 = self.vertices[f[2]] - self.vertices[f[0]];
        e1.cross(e2).norm() * T::of(0.5)
    }

    pub fn bounding_box(&self) -> (Vec3<T>, Vec3<T>) {
        let mut lo = Vec3::splat(T::infinity());
        let mut hi = Vec3::splat(T::neg_infinity());
        for v in &self.vertices {
            lo.x = lo.x.min(v.x);
            lo.y = lo.y.min(v.y);
            lo.z = lo.z.min(v.z);
            hi.x = hi.x.max(v.x);
            hi.y = hi.y.max(v.y);
            hi.z = hi.z.max(v.z);
        }
        (lo, hi)
    }

    /// Mesh with the same topology and displaced vertex positions.
    pub fn with_vertices(&self, vertices: Vec<Vec3<T>>) -> Self {
        debug_assert_eq!(vertices.len(), self.vertices.len());
        Self {
            vertices,
            faces: self.faces.clone(),
            colors: self.colors.clone(),
            visibility: self.visibility.clone(),
        }
    }
}
