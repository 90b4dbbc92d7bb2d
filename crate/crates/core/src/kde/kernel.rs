//! Weighted isotropic Gaussian KDE in the plane.

use std::f64::consts::PI;

use rayon::prelude::*;

use crate::error::{invalid_arg, Error, Result};
use crate::geom::Point;
use crate::grid::{DensityField, GridSpec};

/// Kernel support is cut at this many bandwidths along each axis.
pub const TRUNCATE: f64 = 6.0;

/// A weighted sum of Gaussian bumps `Σ w_k K_h(x - X_k)`.
///
/// Points are stored in a canonical `(y, x, w)` order so that every sum is
/// taken in the same order no matter how the input was arranged; this makes
/// results bit-identical under reordering of days or observations.
#[derive(Clone, Debug)]
pub struct WeightedKde {
    points: Vec<Point>,
    weights: Vec<f64>,
    h: f64,
}

impl WeightedKde {
    /// Zero-weight points are dropped.
    pub fn new(items: impl IntoIterator<Item = (Point, f64)>, h: f64) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(invalid_arg(format!(
                "spatial bandwidth must be positive, got {h}"
            )));
        }
        let mut items: Vec<(Point, f64)> = items.into_iter().collect();
        if let Some((p, w)) = items
            .iter()
            .find(|(p, w)| !(p.is_finite() && w.is_finite() && *w >= 0.0))
        {
            return Err(Error::InvalidData(format!(
                "bad kernel point ({}, {}) with weight {w}",
                p.x, p.y
            )));
        }
        items.retain(|(_, w)| *w > 0.0);
        items.sort_by(|a, b| {
            a.0.y
                .total_cmp(&b.0.y)
                .then(a.0.x.total_cmp(&b.0.x))
                .then(a.1.total_cmp(&b.1))
        });
        let (points, weights) = items.into_iter().unzip();
        Ok(WeightedKde { points, weights, h })
    }

    pub fn bandwidth(&self) -> f64 {
        self.h
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn points(&self) -> impl Iterator<Item = (Point, f64)> + '_ {
        self.points
            .iter()
            .copied()
            .zip(self.weights.iter().copied())
    }

    /// Indices of points with `|y - Y_k| <= reach`.
    fn y_band(&self, y: f64, reach: f64) -> std::ops::Range<usize> {
        let lo = self.points.partition_point(|p| p.y < y - reach);
        let hi = self.points.partition_point(|p| p.y <= y + reach);
        lo..hi.max(lo)
    }

    fn norm(&self) -> f64 {
        1.0 / (2.0 * PI * self.h * self.h)
    }

    /// Density at a single location.
    pub fn density_at(&self, x: Point) -> f64 {
        let reach = TRUNCATE * self.h;
        let c = -0.5 / (self.h * self.h);
        let mut s = 0.0;
        for k in self.y_band(x.y, reach) {
            let p = self.points[k];
            let dx = p.x - x.x;
            if dx.abs() <= reach {
                let dy = p.y - x.y;
                s += self.weights[k] * ((dx * dx + dy * dy) * c).exp();
            }
        }
        s * self.norm()
    }

    /// Densities at many locations, in parallel.
    pub fn densities_at(&self, xs: &[Point]) -> Vec<f64> {
        xs.par_iter().map(|&x| self.density_at(x)).collect()
    }

    /// Evaluate at every cell center, one grid row per task.
    pub fn eval_grid(&self, grid: &GridSpec) -> DensityField {
        let reach = TRUNCATE * self.h;
        let c = -0.5 / (self.h * self.h);
        let norm = self.norm();
        let mut values = vec![0.0; grid.len()];
        values
            .par_chunks_mut(grid.n_x)
            .enumerate()
            .for_each(|(j, row)| {
                let yc = grid.y_center(j);
                for k in self.y_band(yc, reach) {
                    let p = self.points[k];
                    let Some((i0, i1)) = grid.x_range(p.x - reach, p.x + reach) else {
                        continue;
                    };
                    let dy = p.y - yc;
                    let wy = self.weights[k] * (dy * dy * c).exp();
                    for (i, v) in row.iter_mut().enumerate().take(i1 + 1).skip(i0) {
                        let dx = p.x - grid.x_center(i);
                        *v += wy * (dx * dx * c).exp();
                    }
                }
                row.iter_mut().for_each(|v| *v *= norm);
            });
        DensityField::from_raw(*grid, values)
    }

    /// One mean-shift update: the kernel-weighted mean of the points around
    /// `x`. `None` when no point is within reach.
    pub fn mean_shift_step(&self, x: Point) -> Option<Point> {
        let reach = TRUNCATE * self.h;
        let c = -0.5 / (self.h * self.h);
        let (mut sw, mut sx, mut sy) = (0.0, 0.0, 0.0);
        for k in self.y_band(x.y, reach) {
            let p = self.points[k];
            let dx = p.x - x.x;
            if dx.abs() <= reach {
                let dy = p.y - x.y;
                let w = self.weights[k] * ((dx * dx + dy * dy) * c).exp();
                sw += w;
                sx += w * p.x;
                sy += w * p.y;
            }
        }
        (sw > 0.0).then(|| Point::new(sx / sw, sy / sw))
    }

    /// Central finite-difference Hessian `[[fxx, fxy], [fxy, fyy]]` with step `s`.
    pub fn hessian_at(&self, x: Point, s: f64) -> [[f64; 2]; 2] {
        let f = |dx: f64, dy: f64| self.density_at(Point::new(x.x + dx, x.y + dy));
        let f0 = f(0.0, 0.0);
        let fxx = (f(s, 0.0) - 2.0 * f0 + f(-s, 0.0)) / (s * s);
        let fyy = (f(0.0, s) - 2.0 * f0 + f(0.0, -s)) / (s * s);
        let fxy = (f(s, s) - f(s, -s) - f(-s, s) + f(-s, -s)) / (4.0 * s * s);
        [[fxx, fxy], [fxy, fyy]]
    }
}

/// Largest eigenvalue of a symmetric 2×2 matrix.
pub fn max_eigenvalue(m: [[f64; 2]; 2]) -> f64 {
    let mean = 0.5 * (m[0][0] + m[1][1]);
    let half = 0.5 * (m[0][0] - m[1][1]);
    mean + half.hypot(m[0][1])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_peak_and_mass() {
        let h = 0.3;
        let kde = WeightedKde::new([(Point::new(0.0, 0.0), 1.0)], h).unwrap();
        let peak = 1.0 / (2.0 * PI * h * h);
        assert!((kde.density_at(Point::new(0.0, 0.0)) - peak).abs() < 1e-12);
        let grid = GridSpec::centered(Point::new(0.0, 0.0), 101, 101, 0.05, 0.05).unwrap();
        let f = kde.eval_grid(&grid);
        assert!((f.integral() - 1.0).abs() < 1e-6);
        assert_eq!(f.argmax(), (50, 50));
        assert!((f.max() - peak).abs() < 1e-12);
    }

    #[test]
    fn grid_matches_point_evaluation() {
        let pts = [
            (Point::new(0.1, 0.2), 0.5),
            (Point::new(-0.4, 0.3), 0.25),
            (Point::new(0.7, -0.6), 0.25),
        ];
        let kde = WeightedKde::new(pts, 0.2).unwrap();
        let grid = GridSpec::new(-1.0, -1.0, 23, 19, 0.1, 0.1).unwrap();
        let f = kde.eval_grid(&grid);
        for j in 0..grid.n_y {
            for i in 0..grid.n_x {
                let want = kde.density_at(grid.center(i, j));
                assert!((f.get(i, j) - want).abs() <= 1e-12 * want.max(1.0));
            }
        }
    }

    #[test]
    fn input_order_does_not_matter() {
        let pts = vec![
            (Point::new(0.1, 0.2), 0.1),
            (Point::new(0.3, 0.2), 0.7),
            (Point::new(-0.2, 0.5), 0.2),
        ];
        let mut rev = pts.clone();
        rev.reverse();
        let grid = GridSpec::new(-1.0, -1.0, 20, 20, 0.1, 0.1).unwrap();
        let a = WeightedKde::new(pts, 0.15).unwrap().eval_grid(&grid);
        let b = WeightedKde::new(rev, 0.15).unwrap().eval_grid(&grid);
        assert_eq!(a, b);
    }

    #[test]
    fn mean_shift_and_hessian_at_a_bump() {
        let p = Point::new(1.0, -2.0);
        let kde = WeightedKde::new([(p, 1.0)], 0.5).unwrap();
        let q = kde.mean_shift_step(Point::new(1.2, -1.9)).unwrap();
        assert!(q.dist(p) < 1e-12);
        let hess = kde.hessian_at(p, 0.05);
        // exact: -f(p)/h² on the diagonal
        let want = -kde.density_at(p) / 0.25;
        assert!((hess[0][0] - want).abs() < 1e-2 * want.abs());
        assert!(hess[0][1].abs() < 1e-9);
        assert!(max_eigenvalue(hess) < 0.0);
        assert!(kde.mean_shift_step(Point::new(50.0, 50.0)).is_none());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(WeightedKde::new([(Point::new(0.0, 0.0), 1.0)], 0.0).is_err());
        assert!(WeightedKde::new([(Point::new(0.0, 0.0), -1.0)], 1.0).is_err());
        assert!(WeightedKde::new([(Point::new(f64::NAN, 0.0), 1.0)], 1.0).is_err());
        assert!(WeightedKde::new([(Point::new(0.0, 0.0), 0.0)], 1.0)
            .unwrap()
            .is_empty());
    }

    #[test]
    fn eigenvalues() {
        assert_eq!(max_eigenvalue([[-1.0, 0.0], [0.0, -3.0]]), -1.0);
        assert!((max_eigenvalue([[0.0, 1.0], [1.0, 0.0]]) - 1.0).abs() < 1e-15);
    }
}
