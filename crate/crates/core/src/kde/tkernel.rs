//! Gaussian time-kernel sums over all observations of a dataset.
//!
//! Kernel values `exp(-d_T² / 2h_T²)` are handled in log space relative to
//! the largest value at each query time, so sparse times never divide by an
//! underflowed zero. Sums only visit observations whose scaled term can be
//! nonzero in double precision; every skipped term is exactly `0.0`, so the
//! result is bit-identical to a full scan in the same order.

use rayon::prelude::*;

use crate::data::GpsDataset;

use super::time::{cyclic_time_distance, TimeArc, TimeGrid};

/// Terms below `exp(-CUTOFF)` relative to the maximum underflow to zero.
const CUTOFF: f64 = 760.0;

/// `ln(1e-300)`: below this the largest kernel value is flagged as unsupported.
pub(crate) const LN_SUPPORT: f64 = -690.7755278982137;

/// Observations in increasing time order, with per-day weights.
pub(crate) struct TimeIndex {
    t: Vec<f64>,
    /// Per-observation factor, `1/m_i` for pooled sums.
    scale: Vec<f64>,
    /// Position of each entry in dataset (day-major) order.
    flat: Vec<usize>,
    inv_2h2: f64,
    h: f64,
}

/// Log-space normalizer at one query time.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Normalizer {
    /// Largest log kernel value.
    pub log_max: f64,
    /// `Σ scale_k exp(a_k - log_max)`.
    pub sum: f64,
    /// Every observation farther than this contributes exactly zero.
    pub radius: f64,
}

impl Normalizer {
    pub fn supported(&self) -> bool {
        self.log_max >= LN_SUPPORT
    }
}

impl TimeIndex {
    /// Pools every day with factor `1/m_i`.
    pub fn pooled(data: &GpsDataset, h: f64) -> Self {
        let mut entries = Vec::with_capacity(data.n_obs());
        let mut base = 0;
        for day in data.days() {
            let s = 1.0 / day.len() as f64;
            entries.extend(
                day.times()
                    .iter()
                    .enumerate()
                    .map(|(j, &t)| (t, s, base + j)),
            );
            base += day.len();
        }
        // Ties in time are broken by the day factor only: entries that tie on
        // both contribute identical terms, so the sum does not depend on
        // which one comes first.
        entries.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        TimeIndex {
            t: entries.iter().map(|e| e.0).collect(),
            scale: entries.iter().map(|e| e.1).collect(),
            flat: entries.iter().map(|e| e.2).collect(),
            inv_2h2: 0.5 / (h * h),
            h,
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn flat(&self, k: usize) -> usize {
        self.flat[k]
    }

    fn log_kernel(&self, k: usize, t: f64) -> f64 {
        let d = cyclic_time_distance(self.t[k], t);
        -d * d * self.inv_2h2
    }

    fn nearest_distance(&self, t: f64) -> f64 {
        let n = self.t.len();
        let p = self.t.partition_point(|&x| x < t);
        let mut best = f64::INFINITY;
        for k in [p.wrapping_sub(1), p, 0, n - 1] {
            if k < n {
                best = best.min(cyclic_time_distance(self.t[k], t));
            }
        }
        best
    }

    /// Index ranges (ascending) of entries within cyclic distance `r` of `t`.
    fn window(&self, t: f64, r: f64) -> [std::ops::Range<usize>; 2] {
        let n = self.t.len();
        if r >= 0.5 {
            return [0..n, n..n];
        }
        let pp = |x: f64| self.t.partition_point(|&s| s < x);
        let ppe = |x: f64| self.t.partition_point(|&s| s <= x);
        let (lo, hi) = (t - r, t + r);
        if lo < 0.0 {
            [0..ppe(hi), pp(lo + 1.0).max(ppe(hi))..n]
        } else if hi >= 1.0 {
            let a = ppe(hi - 1.0);
            [0..a, pp(lo).max(a)..n]
        } else {
            let a = pp(lo);
            [a..ppe(hi).max(a), n..n]
        }
    }

    fn window_radius(&self, nearest: f64) -> f64 {
        (nearest * nearest + 2.0 * CUTOFF * self.h * self.h).sqrt() + 1e-9
    }

    pub fn normalizer(&self, t: f64) -> Normalizer {
        let d = self.nearest_distance(t);
        let log_max = -d * d * self.inv_2h2;
        let radius = self.window_radius(d);
        let mut sum = 0.0;
        for k in self.window(t, radius).into_iter().flatten() {
            sum += self.scale[k] * (self.log_kernel(k, t) - log_max).exp();
        }
        Normalizer {
            log_max,
            sum,
            radius,
        }
    }

    /// `(entry, v_k(t))` for every entry with a nonzero conditional weight
    /// `v_k = scale_k K_T / Σ scale K_T`; the weights sum to one.
    pub fn weights_at(&self, t: f64) -> (Normalizer, Vec<(usize, f64)>) {
        let nz = self.normalizer(t);
        let out = self
            .window(t, nz.radius)
            .into_iter()
            .flatten()
            .map(|k| {
                (
                    k,
                    self.scale[k] * (self.log_kernel(k, t) - nz.log_max).exp() / nz.sum,
                )
            })
            .filter(|&(_, v)| v > 0.0)
            .collect();
        (nz, out)
    }

    /// Per-entry average of `v_k(t_l)` over the grid times inside `arc`
    /// (the time-grid midpoint rule for `(1/|A|) ∫_A v_k`), together with the
    /// number of grid times whose kernel maximum was below the support floor.
    pub fn averaged_weights(&self, grid: TimeGrid, arc: &TimeArc) -> (Vec<f64>, usize, usize) {
        let ls = grid.indices_in(arc);
        let norms: Vec<Normalizer> = ls
            .par_iter()
            .map(|&l| self.normalizer(grid.time(l)))
            .collect();
        let unsupported = norms.iter().filter(|n| !n.supported()).count();
        let reach = norms.iter().map(|n| n.radius).fold(0.0, f64::max);
        let count = ls.len() as f64;
        let avg = (0..self.len())
            .into_par_iter()
            .map(|k| {
                let mut s = 0.0;
                for (&l, nz) in ls.iter().zip(&norms) {
                    let t = grid.time(l);
                    if cyclic_time_distance(self.t[k], t) <= reach {
                        s += (self.log_kernel(k, t) - nz.log_max).exp() / nz.sum;
                    }
                }
                self.scale[k] * s / count
            })
            .collect();
        (avg, unsupported, ls.len())
    }
}
