//! Rectangular evaluation lattices and density values on them.

use crate::error::{invalid_arg, Error, Result};
use crate::geom::{BoundingBox, Point};

/// A regular lattice of `n_x × n_y` cells. Values are evaluated at cell
/// centers `(x_min + (i + 0.5) dx, y_min + (j + 0.5) dy)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GridSpec {
    pub x_min: f64,
    pub y_min: f64,
    pub n_x: usize,
    pub n_y: usize,
    pub dx: f64,
    pub dy: f64,
}

impl GridSpec {
    pub fn new(x_min: f64, y_min: f64, n_x: usize, n_y: usize, dx: f64, dy: f64) -> Result<Self> {
        if n_x == 0 || n_y == 0 {
            return Err(invalid_arg("grid needs at least one cell per axis"));
        }
        if !(dx > 0.0 && dy > 0.0 && dx.is_finite() && dy.is_finite()) {
            return Err(invalid_arg(format!(
                "grid cell sizes must be positive, got {dx} x {dy}"
            )));
        }
        if !(x_min.is_finite() && y_min.is_finite()) {
            return Err(invalid_arg("grid origin must be finite"));
        }
        Ok(GridSpec {
            x_min,
            y_min,
            n_x,
            n_y,
            dx,
            dy,
        })
    }

    /// Grid of the given shape whose extent is centered on `center`.
    pub fn centered(center: Point, n_x: usize, n_y: usize, dx: f64, dy: f64) -> Result<Self> {
        GridSpec::new(
            center.x - 0.5 * n_x as f64 * dx,
            center.y - 0.5 * n_y as f64 * dy,
            n_x,
            n_y,
            dx,
            dy,
        )
    }

    /// Smallest grid with square cells of side `cell` covering `bb` grown by `margin`.
    pub fn covering(bb: BoundingBox, margin: f64, cell: f64) -> Result<Self> {
        if !(cell > 0.0) || !(margin >= 0.0) {
            return Err(invalid_arg(
                "cell size must be positive and margin nonnegative",
            ));
        }
        let n_x = (((bb.width() + 2.0 * margin) / cell).ceil() as usize).max(1);
        let n_y = (((bb.height() + 2.0 * margin) / cell).ceil() as usize).max(1);
        GridSpec::centered(bb.center(), n_x, n_y, cell, cell)
    }

    pub fn len(&self) -> usize {
        self.n_x * self.n_y
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_area(&self) -> f64 {
        self.dx * self.dy
    }

    pub fn x_center(&self, i: usize) -> f64 {
        self.x_min + (i as f64 + 0.5) * self.dx
    }

    pub fn y_center(&self, j: usize) -> f64 {
        self.y_min + (j as f64 + 0.5) * self.dy
    }

    pub fn center(&self, i: usize, j: usize) -> Point {
        Point::new(self.x_center(i), self.y_center(j))
    }

    /// Row-major index (rows run along y).
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.n_x + i
    }

    pub fn coords(&self, idx: usize) -> (usize, usize) {
        (idx % self.n_x, idx / self.n_x)
    }

    pub fn x_max(&self) -> f64 {
        self.x_min + self.n_x as f64 * self.dx
    }

    pub fn y_max(&self) -> f64 {
        self.y_min + self.n_y as f64 * self.dy
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x_min && p.x < self.x_max() && p.y >= self.y_min && p.y < self.y_max()
    }

    /// Cell containing `p`, if any.
    pub fn cell_of(&self, p: Point) -> Option<(usize, usize)> {
        if !self.contains(p) {
            return None;
        }
        let i = (((p.x - self.x_min) / self.dx) as usize).min(self.n_x - 1);
        let j = (((p.y - self.y_min) / self.dy) as usize).min(self.n_y - 1);
        Some((i, j))
    }

    /// Inclusive range of cell indices along x whose centers lie within `[lo, hi]`.
    pub(crate) fn x_range(&self, lo: f64, hi: f64) -> Option<(usize, usize)> {
        axis_range(self.x_min, self.dx, self.n_x, lo, hi)
    }

    pub(crate) fn y_range(&self, lo: f64, hi: f64) -> Option<(usize, usize)> {
        axis_range(self.y_min, self.dy, self.n_y, lo, hi)
    }
}

fn axis_range(min: f64, d: f64, n: usize, lo: f64, hi: f64) -> Option<(usize, usize)> {
    // center_k = min + (k + 0.5) d
    let first = ((lo - min) / d - 0.5).ceil().max(0.0);
    let last = ((hi - min) / d - 0.5).floor().min(n as f64 - 1.0);
    if first > last || !first.is_finite() || !last.is_finite() {
        return None;
    }
    Some((first as usize, last as usize))
}

/// Density values on a grid, per unit area, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityField {
    grid: GridSpec,
    values: Vec<f64>,
}

impl DensityField {
    pub fn new(grid: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(invalid_arg(format!(
                "field has {} values for a grid of {} cells",
                values.len(),
                grid.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::InvalidData(format!(
                "density value {v} is negative or non-finite"
            )));
        }
        Ok(DensityField { grid, values })
    }

    pub(crate) fn from_raw(grid: GridSpec, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        DensityField { grid, values }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        DensityField {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[self.grid.index(i, j)]
    }

    /// Midpoint-rule integral over the grid.
    pub fn integral(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.grid.cell_area()
    }

    /// Midpoint-rule integral over cells whose centers satisfy `inside`.
    pub fn integral_where(&self, mut inside: impl FnMut(Point) -> bool) -> f64 {
        let g = &self.grid;
        let mut s = 0.0;
        for j in 0..g.n_y {
            for i in 0..g.n_x {
                if inside(g.center(i, j)) {
                    s += self.values[g.index(i, j)];
                }
            }
        }
        s * g.cell_area()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Cell with the largest value; the lowest index wins ties.
    pub fn argmax(&self) -> (usize, usize) {
        let mut best = 0;
        for (k, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = k;
            }
        }
        self.grid.coords(best)
    }

    pub fn argmax_point(&self) -> Point {
        let (i, j) = self.argmax();
        self.grid.center(i, j)
    }

    pub(crate) fn check_same_grid(&self, other: &DensityField) -> Result<()> {
        if self.grid != other.grid {
            return Err(Error::GridMismatch);
        }
        Ok(())
    }

    /// Largest absolute cell-wise difference.
    pub fn sup_diff(&self, other: &DensityField) -> Result<f64> {
        self.check_same_grid(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    /// Scale all values so the grid integral is one. Fields with zero mass are returned unchanged.
    pub fn normalized(mut self) -> Self {
        let mass = self.integral();
        if mass > 0.0 {
            self.values.iter_mut().for_each(|v| *v /= mass);
        }
        self
    }

    /// Cell-wise average of fields sharing one grid.
    pub fn mean_of(fields: &[DensityField]) -> Result<DensityField> {
        let first = fields
            .first()
            .ok_or_else(|| invalid_arg("no fields to average"))?;
        let mut acc = vec![0.0; first.values.len()];
        for f in fields {
            first.check_same_grid(f)?;
            acc.iter_mut().zip(&f.values).for_each(|(a, v)| *a += v);
        }
        let k = fields.len() as f64;
        acc.iter_mut().for_each(|a| *a /= k);
        Ok(DensityField::from_raw(first.grid, acc))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centers_and_indexing() {
        let g = GridSpec::new(0.0, 10.0, 3, 2, 0.5, 2.0).unwrap();
        assert_eq!(g.center(0, 0), Point::new(0.25, 11.0));
        assert_eq!(g.center(2, 1), Point::new(1.25, 13.0));
        assert_eq!(g.index(2, 1), 5);
        assert_eq!(g.coords(5), (2, 1));
        assert_eq!(g.cell_of(Point::new(1.4, 12.5)), Some((2, 1)));
        assert_eq!(g.cell_of(Point::new(1.6, 12.5)), None);
    }

    #[test]
    fn axis_ranges_clip_to_grid() {
        let g = GridSpec::new(0.0, 0.0, 10, 10, 1.0, 1.0).unwrap();
        assert_eq!(g.x_range(2.0, 4.6), Some((2, 4)));
        assert_eq!(g.x_range(-5.0, 0.4), None);
        assert_eq!(g.x_range(-5.0, 0.5), Some((0, 0)));
        assert_eq!(g.x_range(9.4, 100.0), Some((9, 9)));
        assert_eq!(g.x_range(9.6, 100.0), None);
    }

    #[test]
    fn rejects_degenerate_grids() {
        assert!(GridSpec::new(0.0, 0.0, 0, 1, 1.0, 1.0).is_err());
        assert!(GridSpec::new(0.0, 0.0, 1, 1, 0.0, 1.0).is_err());
    }

    #[test]
    fn field_rejects_negative_values() {
        let g = GridSpec::new(0.0, 0.0, 2, 1, 1.0, 1.0).unwrap();
        assert!(DensityField::new(g, vec![0.0, -1.0]).is_err());
        assert!(DensityField::new(g, vec![0.0, f64::NAN]).is_err());
        assert!(DensityField::new(g, vec![0.0]).is_err());
    }

    #[test]
    fn covering_grid_contains_box() {
        let bb = BoundingBox {
            min: Point::new(-1.0, 2.0),
            max: Point::new(3.0, 3.0),
        };
        let g = GridSpec::covering(bb, 0.5, 0.25).unwrap();
        assert!(g.x_min <= -1.5 + 1e-12 && g.x_max() >= 3.5 - 1e-12);
        assert!(g.y_min <= 1.5 + 1e-12 && g.y_max() >= 3.5 - 1e-12);
    }
}
