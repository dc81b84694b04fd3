//! Dense 2-D grids used for en-face maps, masks and polar rasters.

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// Row-major 2-D grid. `nx` is the number of columns (fast axis), `ny` the
/// number of rows (slow axis); element `(x, y)` lives at `y * nx + x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid2<T> {
    nx: usize,
    ny: usize,
    data: Vec<T>,
}

impl<T: Clone> Grid2<T> {
    pub fn filled(nx: usize, ny: usize, value: T) -> Self {
        Self { nx, ny, data: vec![value; nx * ny] }
    }

    pub fn from_vec(nx: usize, ny: usize, data: Vec<T>) -> Option<Self> {
        (data.len() == nx * ny).then_some(Self { nx, ny, data })
    }

    pub fn from_fn(nx: usize, ny: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(nx * ny);
        for y in 0..ny {
            for x in 0..nx {
                data.push(f(x, y));
            }
        }
        Self { nx, ny, data }
    }

    #[inline]
    pub fn nx(&self) -> usize {
        self.nx
    }

    #[inline]
    pub fn ny(&self) -> usize {
        self.ny
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.data.len()
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn index(&self, x: usize, y: usize) -> usize {
        debug_assert!(x < self.nx && y < self.ny);
        y * self.nx + x
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> &T {
        &self.data[y * self.nx + x]
    }

    #[inline]
    pub fn get_mut(&mut self, x: usize, y: usize) -> &mut T {
        &mut self.data[y * self.nx + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: T) {
        self.data[y * self.nx + x] = value;
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    pub fn row(&self, y: usize) -> &[T] {
        &self.data[y * self.nx..(y + 1) * self.nx]
    }

    pub fn row_mut(&mut self, y: usize) -> &mut [T] {
        &mut self.data[y * self.nx..(y + 1) * self.nx]
    }

    pub fn same_shape<U>(&self, other: &Grid2<U>) -> bool {
        self.nx == other.nx && self.ny == other.ny
    }

    pub fn map<U>(&self, f: impl FnMut(&T) -> U) -> Grid2<U> {
        Grid2 { nx: self.nx, ny: self.ny, data: self.data.iter().map(f).collect() }
    }

    /// Mirrors the grid left-right (reverses every row).
    pub fn flip_x(&self) -> Self {
        let mut out = self.clone();
        for y in 0..self.ny {
            out.row_mut(y).reverse();
        }
        out
    }
}

impl Grid2<bool> {
    pub fn count_true(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }
}

impl<T: Scalar> Grid2<T> {
    /// Bilinear interpolation at fractional index coordinates `(fx, fy)`,
    /// where integer values hit sample centres. Returns `None` outside the
    /// sample lattice.
    pub fn bilinear(&self, fx: T, fy: T) -> Option<T> {
        let (x0, y0, wx, wy) = self.lattice_cell(fx, fy)?;
        let one = T::one();
        let v00 = *self.get(x0, y0);
        let v10 = *self.get(x0 + 1, y0);
        let v01 = *self.get(x0, y0 + 1);
        let v11 = *self.get(x0 + 1, y0 + 1);
        Some((one - wy) * ((one - wx) * v00 + wx * v10) + wy * ((one - wx) * v01 + wx * v11))
    }

    /// Bilinear interpolation that ignores invalid corners. Returns `None`
    /// when any corner with positive weight is invalid.
    pub fn bilinear_masked(&self, valid: &Grid2<bool>, fx: T, fy: T) -> Option<T> {
        let (x0, y0, wx, wy) = self.lattice_cell(fx, fy)?;
        let one = T::one();
        let corners = [
            (x0, y0, (one - wx) * (one - wy)),
            (x0 + 1, y0, wx * (one - wy)),
            (x0, y0 + 1, (one - wx) * wy),
            (x0 + 1, y0 + 1, wx * wy),
        ];
        let mut acc = T::zero();
        for (x, y, w) in corners {
            if w > T::zero() {
                if !*valid.get(x, y) {
                    return None;
                }
                acc += w * *self.get(x, y);
            }
        }
        Some(acc)
    }

    fn lattice_cell(&self, fx: T, fy: T) -> Option<(usize, usize, T, T)> {
        if self.nx < 2 || self.ny < 2 || !fx.is_finite() || !fy.is_finite() {
            return None;
        }
        let max_x = T::lit((self.nx - 1) as f64);
        let max_y = T::lit((self.ny - 1) as f64);
        if fx < T::zero() || fy < T::zero() || fx > max_x || fy > max_y {
            return None;
        }
        let x0 = fx.floor().to_usize()?.min(self.nx - 2);
        let y0 = fy.floor().to_usize()?.min(self.ny - 2);
        let wx = fx - T::lit(x0 as f64);
        let wy = fy - T::lit(y0 as f64);
        Some((x0, y0, wx, wy))
    }

    /// Mean over cells where `mask` is true.
    pub fn masked_mean(&self, mask: &Grid2<bool>) -> Option<T> {
        let mut sum = T::zero();
        let mut n = 0usize;
        for (v, &m) in self.data.iter().zip(mask.as_slice()) {
            if m {
                sum += *v;
                n += 1;
            }
        }
        (n > 0).then(|| sum / T::lit(n as f64))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bilinear_reproduces_planes() {
        let g = Grid2::from_fn(4, 3, |x, y| 2.0 * x as f64 - 3.0 * y as f64 + 1.0);
        let v = g.bilinear(1.25, 0.5).unwrap();
        assert!((v - (2.0 * 1.25 - 1.5 + 1.0)).abs() < 1e-12);
        assert_eq!(g.bilinear(3.0, 2.0), Some(2.0 * 3.0 - 6.0 + 1.0));
        assert!(g.bilinear(3.01, 0.0).is_none());
        assert!(g.bilinear(-0.01, 0.0).is_none());
    }

    #[test]
    fn masked_bilinear_rejects_invalid_corner() {
        let g = Grid2::filled(3, 3, 1.0f64);
        let mut valid = Grid2::filled(3, 3, true);
        valid.set(1, 1, false);
        assert!(g.bilinear_masked(&valid, 0.5, 0.5).is_none());
        assert_eq!(g.bilinear_masked(&valid, 0.0, 0.0), Some(1.0));
        // Zero weight on the invalid corner is fine.
        assert_eq!(g.bilinear_masked(&valid, 0.0, 2.0), Some(1.0));
    }

    #[test]
    fn flip_reverses_rows() {
        let g = Grid2::from_fn(3, 2, |x, y| (x + 10 * y) as i32);
        let f = g.flip_x();
        assert_eq!(f.row(0), &[2, 1, 0]);
        assert_eq!(f.row(1), &[12, 11, 10]);
        assert_eq!(f.flip_x(), g);
    }
}
