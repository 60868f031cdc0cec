//! Scalar objectives with analytic gradients, shared by the renderer tests
//! and the refinement loop. All losses are means, so weights are independent
//! of image resolution and vertex count.

use crate::error::{Error, Result};
use crate::float::Real;
use crate::image::{Image, Mask};
use crate::vec3::Vec3;

const DENOM_GUARD: f64 = 1e-8;

fn check_dims(aw: usize, ah: usize, bw: usize, bh: usize) -> Result<()> {
    if aw != bw || ah != bh {
        return Err(Error::DimensionMismatch {
            expected: format!("{bw}x{bh}"),
            actual: format!("{aw}x{ah}"),
        });
    }
    Ok(())
}

/// Mean absolute color difference.
pub fn l_rgb<T: Real>(pred: &Image<T>, target: &Image<T>) -> Result<T> {
    check_dims(pred.width, pred.height, target.width, target.height)?;
    let n = T::from_usize(pred.data.len()).unwrap();
    Ok(pred
        .data
        .iter()
        .zip(&target.data)
        .map(|(&a, &b)| (a - b).abs())
        .sum::<T>()
        / n)
}

/// Gradient of [`l_rgb`] with respect to the prediction (zero at exact ties).
pub fn l_rgb_grad<T: Real>(pred: &Image<T>, target: &Image<T>) -> Result<Image<T>> {
    check_dims(pred.width, pred.height, target.width, target.height)?;
    let n = T::from_usize(pred.data.len()).unwrap();
    let data = pred
        .data
        .iter()
        .zip(&target.data)
        .map(|(&a, &b)| {
            if a > b {
                T::one() / n
            } else if a < b {
                -T::one() / n
            } else {
                T::zero()
            }
        })
        .collect();
    Image::from_data(pred.width, pred.height, data)
}

/// Soft silhouette loss: one minus the soft intersection-over-union,
/// `1 - sum(pred*target) / sum(pred + target - pred*target)`. Equals 1 - IoU
/// for binary masks. The denominator is floored at 1e-8 so a pair of empty
/// masks is well defined.
pub fn l_mask<T: Real>(pred: &Mask<T>, target: &Mask<T>) -> Result<T> {
    check_dims(pred.width, pred.height, target.width, target.height)?;
    let (inter, union) = mask_sums(pred, target);
    Ok(T::one() - inter / union.max(T::of(DENOM_GUARD)))
}

/// Gradient of [`l_mask`] with respect to the prediction.
pub fn l_mask_grad<T: Real>(pred: &Mask<T>, target: &Mask<T>) -> Result<Mask<T>> {
    check_dims(pred.width, pred.height, target.width, target.height)?;
    let (inter, union) = mask_sums(pred, target);
    let u = union.max(T::of(DENOM_GUARD));
    // L = 1 - I/U with dI/dp = t and dU/dp = 1 - t.
    let data = pred
        .data
        .iter()
        .zip(&target.data)
        .map(|(_, &t)| -(t * u - inter * (T::one() - t)) / (u * u))
        .collect();
    Mask::from_data(pred.width, pred.height, data)
}

fn mask_sums<T: Real>(pred: &Mask<T>, target: &Mask<T>) -> (T, T) {
    let mut inter = T::zero();
    let mut union = T::zero();
    for (&p, &t) in pred.data.iter().zip(&target.data) {
        inter += p * t;
        union += p + t - p * t;
    }
    (inter, union)
}

/// Mean squared displacement norm.
pub fn l_disp<T: Real>(displacements: &[Vec3<T>]) -> T {
    if displacements.is_empty() {
        return T::zero();
    }
    let n = T::from_usize(displacements.len()).unwrap();
    displacements.iter().map(|d| d.norm_sq()).sum::<T>() / n
}

pub fn l_disp_grad<T: Real>(displacements: &[Vec3<T>]) -> Vec<Vec3<T>> {
    let n = T::from_usize(displacements.len().max(1)).unwrap();
    displacements
        .iter()
        .map(|&d| d * (T::of(2.0) / n))
        .collect()
}

/// Mean squared uniform-Laplacian norm: each vertex's offset from the
/// centroid of its graph neighbors.
pub fn l_laplacian<T: Real>(vertices: &[Vec3<T>], neighbors: &[Vec<usize>]) -> Result<T> {
    let lap = laplacian(vertices, neighbors)?;
    let n = T::from_usize(vertices.len()).unwrap();
    Ok(lap.iter().map(|d| d.norm_sq()).sum::<T>() / n)
}

pub fn l_laplacian_grad<T: Real>(
    vertices: &[Vec3<T>],
    neighbors: &[Vec<usize>],
) -> Result<Vec<Vec3<T>>> {
    let lap = laplacian(vertices, neighbors)?;
    let n = T::from_usize(vertices.len()).unwrap();
    let scale = T::of(2.0) / n;
    let mut grad: Vec<Vec3<T>> = lap.iter().map(|&d| d * scale).collect();
    for (i, nb) in neighbors.iter().enumerate() {
        let w = scale / T::from_usize(nb.len()).unwrap();
        for &j in nb {
            grad[j] -= lap[i] * w;
        }
    }
    Ok(grad)
}

fn laplacian<T: Real>(vertices: &[Vec3<T>], neighbors: &[Vec<usize>]) -> Result<Vec<Vec3<T>>> {
    debug_assert_eq!(vertices.len(), neighbors.len());
    let mut out = Vec::with_capacity(vertices.len());
    for (i, nb) in neighbors.iter().enumerate() {
        if nb.is_empty() {
            return Err(Error::IsolatedVertex(i));
        }
        let mut centroid = Vec3::zero();
        for &j in nb {
            centroid += vertices[j];
        }
        out.push(vertices[i] - centroid / T::from_usize(nb.len()).unwrap());
    }
    Ok(out)
}
