//! Level sets, anchor locations, activity spaces and identification bounds.

use std::f64::consts::PI;

use serde::Serialize;

use crate::data::GpsDataset;
use crate::error::{invalid_arg, Error, Result};
use crate::geom::Point;
use crate::grid::{DensityField, GridSpec};
use crate::kde::{max_eigenvalue, DayWeights, WeightedKde};

/// CDF of the χ² distribution with two degrees of freedom, `1 - e^{-t/2}`.
pub fn chi2_2_cdf(t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(invalid_arg(format!(
            "chi-square argument must be nonnegative, got {t}"
        )));
    }
    Ok(-(-0.5 * t).exp_m1())
}

/// Density level `λ / (2πσ²)` that every anchor holding a time share of at
/// least `λ` must reach under isotropic Gaussian noise of std `σ`.
pub fn anchor_level_threshold(lambda: f64, sigma: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda <= 1.0) {
        return Err(invalid_arg(format!(
            "time share must lie in (0, 1], got {lambda}"
        )));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid_arg(format!(
            "noise std must be positive, got {sigma}"
        )));
    }
    Ok(lambda / (2.0 * PI * sigma * sigma))
}

/// A set of grid cells.
#[derive(Clone, Debug, PartialEq)]
pub struct RegionMask {
    grid: GridSpec,
    inside: Vec<bool>,
}

impl RegionMask {
    pub fn new(grid: GridSpec, inside: Vec<bool>) -> Result<Self> {
        if inside.len() != grid.len() {
            return Err(invalid_arg("mask length does not match grid"));
        }
        Ok(RegionMask { grid, inside })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn cells(&self) -> &[bool] {
        &self.inside
    }

    pub fn count(&self) -> usize {
        self.inside.iter().filter(|&&b| b).count()
    }

    pub fn area(&self) -> f64 {
        self.count() as f64 * self.grid.cell_area()
    }

    pub fn contains_cell(&self, i: usize, j: usize) -> bool {
        self.inside[self.grid.index(i, j)]
    }

    /// Whether the cell containing `p` is in the mask.
    pub fn contains_point(&self, p: Point) -> bool {
        self.grid
            .cell_of(p)
            .is_some_and(|(i, j)| self.contains_cell(i, j))
    }

    pub fn is_subset_of(&self, other: &RegionMask) -> bool {
        self.grid == other.grid
            && self
                .inside
                .iter()
                .zip(&other.inside)
                .all(|(&a, &b)| !a || b)
    }

    /// Grid mass of `field` inside the mask.
    pub fn mass(&self, field: &DensityField) -> Result<f64> {
        if field.grid() != &self.grid {
            return Err(Error::GridMismatch);
        }
        let s: f64 = field
            .values()
            .iter()
            .zip(&self.inside)
            .filter(|e| *e.1)
            .map(|e| e.0)
            .sum();
        Ok(s * self.grid.cell_area())
    }
}

/// Cells whose center value is at least `level`. A zero level keeps only
/// cells with positive density.
pub fn level_set(field: &DensityField, level: f64) -> RegionMask {
    let inside = field
        .values()
        .iter()
        .map(|&v| if level <= 0.0 { v > 0.0 } else { v >= level })
        .collect();
    RegionMask {
        grid: *field.grid(),
        inside,
    }
}

/// How the anchor density threshold is specified.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum AnchorLevel {
    /// Time share `λ` at an anchor, converted with [`anchor_level_threshold`].
    TimeShare { lambda: f64, sigma: f64 },
    /// A raw density threshold.
    Density(f64),
}

impl AnchorLevel {
    pub fn threshold(self) -> Result<f64> {
        match self {
            AnchorLevel::TimeShare { lambda, sigma } => anchor_level_threshold(lambda, sigma),
            AnchorLevel::Density(d) if d >= 0.0 && d.is_finite() => Ok(d),
            AnchorLevel::Density(d) => Err(invalid_arg(format!(
                "density threshold must be nonnegative, got {d}"
            ))),
        }
    }
}

/// A detected anchor location.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct AnchorEstimate {
    pub location: Point,
    pub density: f64,
    /// The density threshold the anchor cleared.
    pub level: f64,
}

const MEAN_SHIFT_ITERS: usize = 50;

fn grid_local_maxima(field: &DensityField, threshold: f64) -> Vec<(usize, usize)> {
    let g = field.grid();
    let v = field.values();
    let mut out = Vec::new();
    for j in 0..g.n_y {
        for i in 0..g.n_x {
            let c = g.index(i, j);
            let x = v[c];
            if x < threshold || x <= 0.0 {
                continue;
            }
            let mut is_max = true;
            'nb: for dj in -1i64..=1 {
                for di in -1i64..=1 {
                    if di == 0 && dj == 0 {
                        continue;
                    }
                    let (ni, nj) = (i as i64 + di, j as i64 + dj);
                    if ni < 0 || nj < 0 || ni >= g.n_x as i64 || nj >= g.n_y as i64 {
                        continue;
                    }
                    let n = g.index(ni as usize, nj as usize);
                    // equal neighbors: only the first cell in row-major order survives
                    if v[n] > x || (v[n] == x && n < c) {
                        is_max = false;
                        break 'nb;
                    }
                }
            }
            if is_max {
                out.push((i, j));
            }
        }
    }
    out
}

/// Runs mean shift from `start` until the step is below `1e-6 h`.
pub fn mean_shift(kde: &WeightedKde, start: Point) -> Point {
    let tol = 1e-6 * kde.bandwidth();
    let mut x = start;
    for _ in 0..MEAN_SHIFT_ITERS {
        let Some(next) = kde.mean_shift_step(x) else {
            break;
        };
        let step = next.dist(x);
        x = next;
        if step < tol {
            break;
        }
    }
    x
}

/// Local modes of `kde` above the anchor threshold.
///
/// Grid local maxima of `field` (which must be `kde` evaluated on a grid)
/// inside the level set seed mean shift on `kde`. Converged points must
/// still clear the threshold and have a negative-definite finite-difference
/// Hessian; modes closer than `h/2` are merged, keeping the higher one.
/// Results are sorted by decreasing density.
pub fn detect_anchors(
    kde: &WeightedKde,
    field: &DensityField,
    level: AnchorLevel,
) -> Result<Vec<AnchorEstimate>> {
    let threshold = level.threshold()?;
    let h = kde.bandwidth();
    let g = field.grid();
    let mut modes: Vec<AnchorEstimate> = grid_local_maxima(field, threshold)
        .into_iter()
        .map(|(i, j)| {
            let x = mean_shift(kde, g.center(i, j));
            AnchorEstimate {
                location: x,
                density: kde.density_at(x),
                level: threshold,
            }
        })
        .filter(|a| {
            a.density >= threshold && max_eigenvalue(kde.hessian_at(a.location, h / 10.0)) < 0.0
        })
        .collect();
    modes.sort_by(|a, b| {
        b.density
            .total_cmp(&a.density)
            .then(a.location.y.total_cmp(&b.location.y))
            .then(a.location.x.total_cmp(&b.location.x))
    });
    let mut kept: Vec<AnchorEstimate> = Vec::new();
    for m in modes {
        if kept.iter().all(|k| k.location.dist(m.location) >= 0.5 * h) {
            kept.push(m);
        }
    }
    Ok(kept)
}

/// Point masses `W†_ij / n` of the time-weighted empirical distribution.
#[derive(Clone, Debug)]
pub struct WeightedEdf {
    points: Vec<Point>,
    masses: Vec<f64>,
}

impl WeightedEdf {
    /// Builds the EDF from per-day weights: mid-point weights (summing to
    /// one per day) or integrated conditional weights (summing to `n`).
    pub fn new(data: &GpsDataset, weights: &DayWeights) -> Result<Self> {
        weights.check_shape(data)?;
        let (points, masses): (Vec<Point>, Vec<f64>) = weights.masses(data).unzip();
        let total: f64 = masses.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidData(format!(
                "EDF weights sum to {total}, expected 1"
            )));
        }
        Ok(WeightedEdf { points, masses })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn masses(&self) -> &[f64] {
        &self.masses
    }

    pub fn total(&self) -> f64 {
        self.masses.iter().sum()
    }

    /// Total mass of observations satisfying `inside`.
    pub fn mass_where(&self, mut inside: impl FnMut(Point) -> bool) -> f64 {
        self.points
            .iter()
            .zip(&self.masses)
            .filter(|(p, _)| inside(**p))
            .map(|(_, m)| m)
            .sum()
    }
}

/// An estimated activity space.
#[derive(Clone, Debug)]
pub struct ActivitySpace {
    pub mask: RegionMask,
    /// Density level `p_(k*)` defining the region.
    pub level: f64,
    /// EDF mass of observations with density at least `level`.
    pub covered: f64,
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(invalid_arg(format!("rho must lie in (0, 1), got {rho}")));
    }
    Ok(())
}

/// Estimated densities `p_ij = f̂(X_ij)` at the EDF's observations.
pub fn observation_densities(kde: &WeightedKde, edf: &WeightedEdf) -> Vec<f64> {
    kde.densities_at(edf.points())
}

/// Tail masses within this of `ρ` count as reaching it. EDF masses such as
/// `1/m` carry rounding error, so `17 · (1/34)` may land just below `0.5`
/// depending on summation order.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Smallest upper level set of the estimate holding EDF mass `ρ`.
///
/// Observations are sorted by their density `p`; the level is `p_(k*)` for
/// the largest `k*` whose upper tail `Σ_{ℓ ≥ k*} W†_(ℓ)/n` still reaches `ρ`.
/// Observations tied with `p_(k*)` are all inside, so coverage is at least `ρ`
/// up to [`MASS_TOLERANCE`].
pub fn activity_space(
    field: &DensityField,
    densities: &[f64],
    edf: &WeightedEdf,
    rho: f64,
) -> Result<ActivitySpace> {
    check_rho(rho)?;
    if densities.len() != edf.len() {
        return Err(invalid_arg("need one density per EDF observation"));
    }
    if edf.is_empty() {
        return Err(Error::InvalidData("empty EDF".into()));
    }
    let mut order: Vec<usize> = (0..densities.len()).collect();
    order.sort_by(|&a, &b| densities[a].total_cmp(&densities[b]).then(a.cmp(&b)));
    // tail[k] = mass of sorted entries k.. plus every entry tied with entry k
    let mut level = densities[order[0]];
    let mut tail = 0.0;
    let mut k = order.len();
    while k > 0 {
        // take the whole block of ties ending at k - 1
        let p = densities[order[k - 1]];
        let mut start = k - 1;
        while start > 0 && densities[order[start - 1]] == p {
            start -= 1;
        }
        tail += order[start..k]
            .iter()
            .map(|&o| edf.masses()[o])
            .sum::<f64>();
        level = p;
        if tail >= rho - MASS_TOLERANCE {
            break;
        }
        k = start;
    }
    let mask = level_set(field, level);
    let covered = edf
        .masses()
        .iter()
        .zip(densities)
        .filter(|(_, &p)| p >= level)
        .map(|(m, _)| m)
        .sum();
    Ok(ActivitySpace {
        mask,
        level,
        covered,
    })
}

/// Lower bound on `∫_{C ⊕ r} f_GPS` when the latent trajectory spends a
/// share `ρ_C` of the day in `C`: `ρ_C F_χ²₂(r²/σ²)`. With `C = {a}` this is
/// the ball-mass bound around an anchor.
pub fn high_activity_bound(rho_c: f64, r: f64, sigma: f64) -> Result<f64> {
    check_radius(r, sigma)?;
    if !(0.0..=1.0).contains(&rho_c) {
        return Err(invalid_arg(format!(
            "probability must lie in [0, 1], got {rho_c}"
        )));
    }
    Ok(rho_c * chi2_2_cdf(r * r / (sigma * sigma))?)
}

/// Lower bound on `P(S(U) ∈ C ⊕ r)` given `∫_C f_GPS ≥ G_C`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActivityBound {
    /// `max(0, 1 - (1 - G_C) / F_χ²₂(r²/σ²))`.
    pub bound: f64,
    /// The unclamped bound is not positive.
    pub vacuous: bool,
}

pub fn density_to_activity_bound(g_c: f64, r: f64, sigma: f64) -> Result<ActivityBound> {
    check_radius(r, sigma)?;
    if !(0.0..=1.0).contains(&g_c) {
        return Err(invalid_arg(format!(
            "probability must lie in [0, 1], got {g_c}"
        )));
    }
    let f = chi2_2_cdf(r * r / (sigma * sigma))?;
    let raw = 1.0 - (1.0 - g_c) / f;
    Ok(ActivityBound {
        bound: raw.max(0.0),
        vacuous: raw <= 0.0,
    })
}

fn check_radius(r: f64, sigma: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(invalid_arg(format!("radius must be positive, got {r}")));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid_arg(format!(
            "noise std must be positive, got {sigma}"
        )));
    }
    Ok(())
}
