//! RGB images and scalar masks with values in `[0,1]`.

use crate::error::{Error, Result};
use crate::float::Real;

/// H x W x 3 image, interleaved RGB, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Image<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

/// H x W scalar mask, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Mask<T> {
    pub width: usize,
    pub height: usize,
    pub data: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![T::zero(); width * height * 3],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height * 3 {
            return Err(Error::DimensionMismatch {
                expected: format!("{} values", width * height * 3),
                actual: format!("{}", data.len()),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height * 3],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> [T; 3] {
        let i = (y * self.width + x) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, c: [T; 3]) {
        let i = (y * self.width + x) * 3;
        self.data[i] = c[0];
        self.data[i + 1] = c[1];
        self.data[i + 2] = c[2];
    }

    /// Bilinear sample in pixel-center coordinates (integer coordinates land
    /// on pixel centers); clamps to the image border.
    pub fn sample_bilinear(&self, x: T, y: T) -> [T; 3] {
        let (ix, fx) = split_clamped(x, self.width);
        let (iy, fy) = split_clamped(y, self.height);
        let one = T::one();
        let mut out = [T::zero(); 3];
        for (dy, wy) in [(0usize, one - fy), (1, fy)] {
            for (dx, wx) in [(0usize, one - fx), (1, fx)] {
                let p = self.pixel(
                    (ix + dx).min(self.width - 1),
                    (iy + dy).min(self.height - 1),
                );
                for c in 0..3 {
                    out[c] += p[c] * wx * wy;
                }
            }
        }
        out
    }

    /// Horizontal mirror (px -> W-1-px).
    pub fn flip_horizontal(&self) -> Self {
        let mut out = Self::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                out.set_pixel(x, y, self.pixel(self.width - 1 - x, y));
            }
        }
        out
    }
}

impl<T: Real> Mask<T> {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![T::zero(); width * height],
        }
    }

    pub fn from_data(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch {
                expected: format!("{} values", width * height),
                actual: format!("{}", data.len()),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn constant(width: usize, height: usize, value: T) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> T {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: T) {
        self.data[y * self.width + x] = v;
    }

    pub fn flip_horizontal(&self) -> Self {
        let mut out = Self::new(self.width, self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                out.set(x, y, self.get(self.width - 1 - x, y));
            }
        }
        out
    }
}

fn split_clamped<T: Real>(v: T, n: usize) -> (usize, T) {
    let max = T::from_usize(n - 1).unwrap();
    let vc = v.max(T::zero()).min(max);
    let base = vc.floor().min(max - T::one()).max(T::zero());
    if n == 1 {
        return (0, T::zero());
    }
    (base.to_usize().unwrap(), vc - base)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_interpolates_between_centers() {
        let mut img = Image::<f64>::new(2, 1);
        img.set_pixel(0, 0, [0.0, 0.2, 1.0]);
        img.set_pixel(1, 0, [1.0, 0.6, 0.0]);
        let c = img.sample_bilinear(0.5, 0.0);
        assert!((c[0] - 0.5).abs() < 1e-14);
        assert!((c[1] - 0.4).abs() < 1e-14);
        assert!((c[2] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn bilinear_clamps_at_border() {
        let mut img = Image::<f64>::new(2, 2);
        img.set_pixel(0, 0, [1.0, 1.0, 1.0]);
        let c = img.sample_bilinear(-3.0, -3.0);
        assert_eq!(c, [1.0, 1.0, 1.0]);
    }

    #[test]
    fn flip_round_trips() {
        let mut m = Mask::<f64>::new(3, 2);
        m.set(0, 1, 0.7);
        let f = m.flip_horizontal();
        assert_eq!(f.get(2, 1), 0.7);
        assert_eq!(f.flip_horizontal(), m);
    }
}
