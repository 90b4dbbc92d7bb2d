//! GPS density estimators.
//!
//! All estimators reduce to a weighted planar KDE with observation masses
//! summing to one:
//!
//! | estimator | mass of `X_ij` |
//! |---|---|
//! | naive | `1 / Σ m_i` |
//! | time-weighted `f̂_w` | `W_ij / n`, mid-point weights |
//! | conditional `f̂(·|t)` | `v_ij(t) = (1/m_i) K_T(i,j,t) / Σ (1/m_i') K_T(i',j',t)` |
//! | integrated conditional `f̂_c` | `W̃_ij / n`, the time-grid average of `v_ij` |

mod kernel;
mod time;
mod tkernel;

use std::fmt;
use std::str::FromStr;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::data::GpsDataset;
use crate::error::{invalid_arg, Error, Result};
use crate::geom::Point;
use crate::grid::{DensityField, GridSpec};

pub use kernel::{max_eigenvalue, WeightedKde, TRUNCATE};
pub use time::{cyclic_time_distance, time_weights, TimeArc, TimeGrid};

use tkernel::TimeIndex;

/// Spatial and temporal smoothing bandwidths.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bandwidths {
    pub spatial: f64,
    pub temporal: f64,
}

impl Bandwidths {
    pub fn new(spatial: f64, temporal: f64) -> Result<Self> {
        if !(spatial > 0.0 && spatial.is_finite()) {
            return Err(invalid_arg(format!(
                "spatial bandwidth must be positive, got {spatial}"
            )));
        }
        if !(temporal > 0.0 && temporal <= 0.5) {
            return Err(invalid_arg(format!(
                "time bandwidth must lie in (0, 0.5], got {temporal}"
            )));
        }
        Ok(Bandwidths { spatial, temporal })
    }
}

/// Which observation weights a [`DayWeights`] holds.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum WeightKind {
    /// Mid-point weights `W_ij`, summing to one per day.
    TimeWeighted,
    /// Integrated conditional weights `W̃_ij`, summing to `n` overall.
    IntegratedConditional,
}

/// Per-observation weights, laid out like the dataset's days.
#[derive(Clone, Debug, PartialEq)]
pub struct DayWeights {
    kind: WeightKind,
    per_day: Vec<Vec<f64>>,
}

impl DayWeights {
    pub fn new(kind: WeightKind, per_day: Vec<Vec<f64>>) -> Result<Self> {
        if per_day
            .iter()
            .flatten()
            .any(|w| !(w.is_finite() && *w >= 0.0))
        {
            return Err(Error::InvalidData(
                "weights must be finite and nonnegative".into(),
            ));
        }
        Ok(DayWeights { kind, per_day })
    }

    /// Mid-point time weights for every day.
    pub fn time_weighted(data: &GpsDataset) -> Result<Self> {
        let per_day = data
            .days()
            .iter()
            .map(|d| time_weights(d.times()))
            .collect::<Result<_>>()?;
        Ok(DayWeights {
            kind: WeightKind::TimeWeighted,
            per_day,
        })
    }

    pub fn kind(&self) -> WeightKind {
        self.kind
    }

    pub fn n_days(&self) -> usize {
        self.per_day.len()
    }

    pub fn day(&self, i: usize) -> &[f64] {
        &self.per_day[i]
    }

    pub fn per_day(&self) -> &[Vec<f64>] {
        &self.per_day
    }

    pub fn total(&self) -> f64 {
        self.per_day.iter().flatten().sum()
    }

    /// Fails unless the layout matches `data`.
    pub fn check_shape(&self, data: &GpsDataset) -> Result<()> {
        let ok = self.per_day.len() == data.n_days()
            && self
                .per_day
                .iter()
                .zip(data.days())
                .all(|(w, d)| w.len() == d.len());
        if ok {
            Ok(())
        } else {
            Err(invalid_arg("weights do not match the dataset's day layout"))
        }
    }

    /// Planar point masses `w_ij / n`.
    pub fn masses<'a>(&'a self, data: &'a GpsDataset) -> impl Iterator<Item = (Point, f64)> + 'a {
        let n = self.per_day.len() as f64;
        data.days()
            .iter()
            .zip(&self.per_day)
            .flat_map(move |(d, w)| d.points().iter().copied().zip(w.iter().map(move |x| x / n)))
    }

    fn from_flat(data: &GpsDataset, kind: WeightKind, flat: Vec<f64>) -> Self {
        let mut it = flat.into_iter();
        let per_day = data
            .days()
            .iter()
            .map(|d| it.by_ref().take(d.len()).collect())
            .collect();
        DayWeights { kind, per_day }
    }
}

/// The three full-day estimators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Estimator {
    #[serde(rename = "naive")]
    Naive,
    #[serde(rename = "fw")]
    TimeWeighted,
    #[serde(rename = "fc")]
    IntegratedConditional,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [
        Estimator::Naive,
        Estimator::TimeWeighted,
        Estimator::IntegratedConditional,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Estimator::Naive => "naive",
            Estimator::TimeWeighted => "fw",
            Estimator::IntegratedConditional => "fc",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "naive" => Ok(Estimator::Naive),
            "fw" | "weighted" | "time-weighted" => Ok(Estimator::TimeWeighted),
            "fc" | "conditional" | "integrated-conditional" => Ok(Estimator::IntegratedConditional),
            _ => Err(invalid_arg(format!(
                "unknown estimator '{s}' (expected naive, fw or fc)"
            ))),
        }
    }
}

fn flat_points(data: &GpsDataset) -> Vec<Point> {
    data.points().collect()
}

/// `(1 / Σ m_i) Σ K_h(x - X_ij)`, ignoring timestamps.
pub fn naive_kde(data: &GpsDataset, h: f64, grid: &GridSpec) -> Result<DensityField> {
    Ok(naive_kernel(data, h)?.eval_grid(grid))
}

pub fn naive_kernel(data: &GpsDataset, h: f64) -> Result<WeightedKde> {
    let w = 1.0 / data.n_obs() as f64;
    WeightedKde::new(data.points().map(|p| (p, w)), h)
}

/// `(1/n) Σ_i Σ_j W_ij K_h(x - X_ij)` with mid-point time weights.
pub fn time_weighted_kde(data: &GpsDataset, h: f64, grid: &GridSpec) -> Result<DensityField> {
    Ok(weighted_kernel(data, &DayWeights::time_weighted(data)?, h)?.eval_grid(grid))
}

/// Planar KDE with masses `w_ij / n`.
pub fn weighted_kernel(data: &GpsDataset, weights: &DayWeights, h: f64) -> Result<WeightedKde> {
    weights.check_shape(data)?;
    WeightedKde::new(weights.masses(data), h)
}

fn check_time(t: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&t) {
        return Err(invalid_arg(format!("time {t} outside [0, 1]")));
    }
    Ok(())
}

/// Conditional weights `v_ij(t)` for all observations, in dataset order.
/// They sum to one. Fails when the largest time-kernel value at `t` is below
/// `1e-300`.
pub fn conditional_weights(data: &GpsDataset, h_t: f64, t: f64) -> Result<Vec<f64>> {
    check_time(t)?;
    Bandwidths::new(1.0, h_t)?;
    let idx = TimeIndex::pooled(data, h_t);
    let (nz, entries) = idx.weights_at(t);
    if !nz.supported() {
        return Err(Error::UnsupportedTime { t });
    }
    let mut v = vec![0.0; data.n_obs()];
    for (k, w) in entries {
        v[idx.flat(k)] = w;
    }
    Ok(v)
}

/// The conditional KDE `f̂(x|t)` as a kernel object.
pub fn conditional_kernel(data: &GpsDataset, bw: Bandwidths, t: f64) -> Result<WeightedKde> {
    let v = conditional_weights(data, bw.temporal, t)?;
    WeightedKde::new(flat_points(data).into_iter().zip(v), bw.spatial)
}

/// Conditional GPS density estimate `f̂(x|t)` on a grid.
pub fn conditional_kde(
    data: &GpsDataset,
    bw: Bandwidths,
    grid: &GridSpec,
    t: f64,
) -> Result<DensityField> {
    Ok(conditional_kernel(data, bw, t)?.eval_grid(grid))
}

/// Kernel-weighted mean location `Σ v_ij(t) X_ij` at time `t`.
pub fn conditional_mean(data: &GpsDataset, h_t: f64, t: f64) -> Result<Point> {
    let v = conditional_weights(data, h_t, t)?;
    // summing in a fixed (y, x) order keeps the result independent of day order
    let mut terms: Vec<(Point, f64)> = flat_points(data)
        .into_iter()
        .zip(v)
        .filter(|e| e.1 > 0.0)
        .collect();
    terms.sort_by(|a, b| {
        a.0.y
            .total_cmp(&b.0.y)
            .then(a.0.x.total_cmp(&b.0.x))
            .then(a.1.total_cmp(&b.1))
    });
    let (mut x, mut y) = (0.0, 0.0);
    for (p, w) in terms {
        x += w * p.x;
        y += w * p.y;
    }
    Ok(Point::new(x, y))
}

fn averaged_conditional_weights(
    data: &GpsDataset,
    h_t: f64,
    grid: TimeGrid,
    arc: &TimeArc,
) -> Result<DayWeights> {
    Bandwidths::new(1.0, h_t)?;
    let idx = TimeIndex::pooled(data, h_t);
    let (avg, unsupported, count) = idx.averaged_weights(grid, arc);
    if count == 0 {
        return Err(Error::EmptyInterval(arc.to_string()));
    }
    if unsupported > 0 {
        warn!(
            "{unsupported} of {count} time-grid points have no observation within kernel support"
        );
    }
    let n = data.n_days() as f64;
    let mut flat = vec![0.0; data.n_obs()];
    for (k, a) in avg.into_iter().enumerate() {
        flat[idx.flat(k)] = n * a;
    }
    Ok(DayWeights::from_flat(
        data,
        WeightKind::IntegratedConditional,
        flat,
    ))
}

/// `W̃_ij = n · (1/n_t) Σ_l v_ij(t_l)`, the midpoint-rule version of
/// `n ∫ v_ij(t) dt`. The weights sum to `n`.
pub fn integrated_conditional_weights(
    data: &GpsDataset,
    h_t: f64,
    grid: TimeGrid,
) -> Result<DayWeights> {
    averaged_conditional_weights(data, h_t, grid, &TimeArc::full_day())
}

/// Interval version: `n` times the average of `v_ij` over grid times in `arc`.
pub fn interval_conditional_weights(
    data: &GpsDataset,
    h_t: f64,
    grid: TimeGrid,
    arc: &TimeArc,
) -> Result<DayWeights> {
    averaged_conditional_weights(data, h_t, grid, arc)
}

/// Integrated conditional estimator `f̂_c = ∫ f̂(x|t) dt`.
pub fn integrated_conditional_kde(
    data: &GpsDataset,
    bw: Bandwidths,
    grid: &GridSpec,
    times: TimeGrid,
) -> Result<DensityField> {
    let w = integrated_conditional_weights(data, bw.temporal, times)?;
    Ok(weighted_kernel(data, &w, bw.spatial)?.eval_grid(grid))
}

/// Full-day estimate by any of the three estimators.
pub fn estimate(
    data: &GpsDataset,
    estimator: Estimator,
    bw: Bandwidths,
    grid: &GridSpec,
    times: TimeGrid,
) -> Result<DensityField> {
    Ok(estimator_kernel(data, estimator, bw, times)?.eval_grid(grid))
}

/// Kernel object behind [`estimate`].
pub fn estimator_kernel(
    data: &GpsDataset,
    estimator: Estimator,
    bw: Bandwidths,
    times: TimeGrid,
) -> Result<WeightedKde> {
    match estimator {
        Estimator::Naive => naive_kernel(data, bw.spatial),
        Estimator::TimeWeighted => {
            weighted_kernel(data, &DayWeights::time_weighted(data)?, bw.spatial)
        }
        Estimator::IntegratedConditional => weighted_kernel(
            data,
            &integrated_conditional_weights(data, bw.temporal, times)?,
            bw.spatial,
        ),
    }
}

/// Interval-specific estimate of the GPS density over `arc`.
///
/// * `Naive` and `TimeWeighted` keep the observations whose timestamps lie in
///   the arc and renormalize their (equal or mid-point) weights to unit total.
/// * `IntegratedConditional` averages `f̂(x|t)` over the time-grid points in the arc.
pub fn interval_kde(
    data: &GpsDataset,
    estimator: Estimator,
    bw: Bandwidths,
    grid: &GridSpec,
    arc: &TimeArc,
    times: TimeGrid,
) -> Result<DensityField> {
    Ok(interval_kernel(data, estimator, bw, arc, times)?.eval_grid(grid))
}

pub fn interval_kernel(
    data: &GpsDataset,
    estimator: Estimator,
    bw: Bandwidths,
    arc: &TimeArc,
    times: TimeGrid,
) -> Result<WeightedKde> {
    if arc.is_full_day() {
        return estimator_kernel(data, estimator, bw, times);
    }
    let base = match estimator {
        Estimator::IntegratedConditional => {
            let w = interval_conditional_weights(data, bw.temporal, times, arc)?;
            return weighted_kernel(data, &w, bw.spatial);
        }
        Estimator::Naive => data.days().iter().map(|d| vec![1.0; d.len()]).collect(),
        Estimator::TimeWeighted => DayWeights::time_weighted(data)?.per_day,
    };
    let mut items = Vec::new();
    for (day, w) in data.days().iter().zip(&base) {
        for ((&t, &p), &w) in day.times().iter().zip(day.points()).zip(w) {
            if arc.contains(t) {
                items.push((p, w));
            }
        }
    }
    if items.is_empty() {
        return Err(Error::EmptyInterval(arc.to_string()));
    }
    let total: f64 = items.iter().map(|e| e.1).sum();
    WeightedKde::new(items.into_iter().map(|(p, w)| (p, w / total)), bw.spatial)
}

/// Day-averaged conditional estimator `f̃(x|t) = (1/n) Σ_i f̃_i(x|t)`, where
/// `f̃_i` normalizes the time kernel within day `i` alone.
pub fn daily_average_conditional(
    data: &GpsDataset,
    bw: Bandwidths,
    grid: &GridSpec,
    t: f64,
) -> Result<DensityField> {
    check_time(t)?;
    Bandwidths::new(bw.spatial, bw.temporal)?;
    let n = data.n_days() as f64;
    let mut items = Vec::with_capacity(data.n_obs());
    for (i, day) in data.days().iter().enumerate() {
        let single = data.subset(&[i])?;
        let idx = TimeIndex::pooled(&single, bw.temporal);
        let (nz, entries) = idx.weights_at(t);
        if !nz.supported() {
            return Err(Error::UnsupportedTime { t });
        }
        // pooled() scales by 1/m_i, which cancels within one day
        items.extend(
            entries
                .into_iter()
                .map(|(k, v)| (day.points()[idx.flat(k)], v / n)),
        );
    }
    Ok(WeightedKde::new(items, bw.spatial)?.eval_grid(grid))
}

/// Weights of `∫ f̃(x|t) dt`: each day's own integrated weights, which sum
/// to one per day.
pub fn daily_average_integrated_weights(
    data: &GpsDataset,
    h_t: f64,
    times: TimeGrid,
) -> Result<DayWeights> {
    let per_day = (0..data.n_days())
        .map(|i| {
            Ok(
                integrated_conditional_weights(&data.subset(&[i])?, h_t, times)?
                    .per_day
                    .remove(0),
            )
        })
        .collect::<Result<_>>()?;
    Ok(DayWeights {
        kind: WeightKind::IntegratedConditional,
        per_day,
    })
}

/// `∫ f̃(x|t) dt` on a grid.
pub fn daily_average_integrated_kde(
    data: &GpsDataset,
    bw: Bandwidths,
    grid: &GridSpec,
    times: TimeGrid,
) -> Result<DensityField> {
    let w = daily_average_integrated_weights(data, bw.temporal, times)?;
    Ok(weighted_kernel(data, &w, bw.spatial)?.eval_grid(grid))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Day;

    fn even_day(id: i64, m: usize, at: impl Fn(usize) -> Point) -> Day {
        let ts = (0..m)
            .map(|j| (2 * j + 1) as f64 / (2 * m) as f64)
            .collect();
        Day::new(id, ts, (0..m).map(at).collect()).unwrap()
    }

    #[test]
    fn bandwidth_validation() {
        assert!(Bandwidths::new(0.1, 0.5).is_ok());
        assert!(Bandwidths::new(0.1, 0.51).is_err());
        assert!(Bandwidths::new(0.0, 0.1).is_err());
        assert!(Bandwidths::new(0.1, 0.0).is_err());
    }

    #[test]
    fn single_observation_day_pair_is_a_bump_for_every_t() {
        let p = Point::new(1.0, 2.0);
        let day = Day::new(0, vec![0.3, 0.31], vec![p, p]).unwrap();
        let data = GpsDataset::new(vec![day]).unwrap();
        let bw = Bandwidths::new(0.2, 0.005).unwrap();
        let grid = GridSpec::centered(p, 41, 41, 0.05, 0.05).unwrap();
        let bump = naive_kde(&data, 0.2, &grid).unwrap();
        for t in [0.29, 0.3, 0.32, 0.8] {
            let f = conditional_kde(&data, bw, &grid, t);
            if t == 0.8 {
                // 0.49 from the nearest observation at h_T = 0.005: unsupported
                assert!(matches!(f, Err(Error::UnsupportedTime { .. })));
                continue;
            }
            assert!(f.unwrap().sup_diff(&bump).unwrap() < 1e-12);
        }
    }

    #[test]
    fn conditional_day_weights_are_one_over_n_under_even_spacing() {
        let days: Vec<Day> = (0..4)
            .map(|i| even_day(i, 24, move |j| Point::new(i as f64, j as f64)))
            .collect();
        let data = GpsDataset::new(days).unwrap();
        for t in [0.05, 0.4, 0.77] {
            let v = conditional_weights(&data, 0.02, t).unwrap();
            for d in v.chunks(24) {
                assert!((d.iter().sum::<f64>() - 0.25).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn integrated_weights_sum_to_n() {
        let days: Vec<Day> = (0..3)
            .map(|i| {
                let ts: Vec<f64> = (0..10 + i)
                    .map(|j| (j as f64 + 0.3) / (10 + i) as f64)
                    .collect();
                let m = ts.len();
                Day::new(i as i64, ts, vec![Point::new(0.0, 0.0); m]).unwrap()
            })
            .collect();
        let data = GpsDataset::new(days).unwrap();
        let w = integrated_conditional_weights(&data, 0.03, TimeGrid::MINUTES).unwrap();
        assert!((w.total() - 3.0).abs() < 1e-9);
        let full =
            interval_conditional_weights(&data, 0.03, TimeGrid::MINUTES, &TimeArc::full_day())
                .unwrap();
        assert_eq!(w, full);
    }

    #[test]
    fn estimator_names_round_trip() {
        for e in Estimator::ALL {
            assert_eq!(e.label().parse::<Estimator>().unwrap(), e);
        }
        assert!("bogus".parse::<Estimator>().is_err());
    }
}
