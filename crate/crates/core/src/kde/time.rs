//! Time-of-day geometry: cyclic distance, mid-point weights, evaluation grids and arcs.

use crate::error::{invalid_arg, Error, Result};

/// Distance between two times of day on the unit circle: `min(|a - b|, 1 - |a - b|)`.
pub fn cyclic_time_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).abs().rem_euclid(1.0);
    d.min(1.0 - d)
}

/// Mid-point time weights `W_j = (t_{j+1} - t_{j-1}) / 2`, wrapping the day
/// around so that `t_0 = t_m - 1` and `t_{m+1} = 1 + t_1`. They sum to one.
pub fn time_weights(times: &[f64]) -> Result<Vec<f64>> {
    let m = times.len();
    if m < 2 {
        return Err(invalid_arg(format!(
            "mid-point weights need at least 2 timestamps, got {m}"
        )));
    }
    if times.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::InvalidData(
            "timestamps must be strictly increasing".into(),
        ));
    }
    Ok((0..m)
        .map(|j| {
            let prev = if j == 0 {
                times[m - 1] - 1.0
            } else {
                times[j - 1]
            };
            let next = if j + 1 == m {
                1.0 + times[0]
            } else {
                times[j + 1]
            };
            0.5 * (next - prev)
        })
        .collect())
}

/// `n` equally spaced evaluation times `(l + 0.5) / n`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TimeGrid {
    n: usize,
}

impl TimeGrid {
    pub const MINUTES: TimeGrid = TimeGrid { n: 1440 };

    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(invalid_arg(format!(
                "time grid needs at least 2 points, got {n}"
            )));
        }
        Ok(TimeGrid { n })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn time(&self, l: usize) -> f64 {
        (l as f64 + 0.5) / self.n as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n).map(|l| self.time(l))
    }

    /// Grid indices whose times fall inside `arc`.
    pub fn indices_in(&self, arc: &TimeArc) -> Vec<usize> {
        (0..self.n)
            .filter(|&l| arc.contains(self.time(l)))
            .collect()
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        TimeGrid::MINUTES
    }
}

/// A closed arc of the day circle starting at `start` and spanning `length`.
/// Arcs may cross midnight.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeArc {
    start: f64,
    length: f64,
}

impl TimeArc {
    pub fn new(start: f64, length: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&start) {
            return Err(invalid_arg(format!("arc start {start} outside [0, 1)")));
        }
        if !(length > 0.0 && length <= 1.0) {
            return Err(invalid_arg(format!("arc length {length} outside (0, 1]")));
        }
        Ok(TimeArc { start, length })
    }

    /// Arc from `a` to `b`, wrapping through midnight when `b < a`.
    pub fn between(a: f64, b: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&a) || !(0.0..=1.0).contains(&b) {
            return Err(invalid_arg(format!("interval [{a}, {b}] outside [0, 1]")));
        }
        let a = if a == 1.0 { 0.0 } else { a };
        let len = if b > a { b - a } else { 1.0 - a + b };
        TimeArc::new(a, len.min(1.0))
    }

    pub fn full_day() -> Self {
        TimeArc {
            start: 0.0,
            length: 1.0,
        }
    }

    pub fn start(&self) -> f64 {
        self.start
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn is_full_day(&self) -> bool {
        self.length >= 1.0
    }

    pub fn contains(&self, t: f64) -> bool {
        self.is_full_day() || (t - self.start).rem_euclid(1.0) <= self.length
    }

    /// Time at fraction `u ∈ [0, 1)` along the arc.
    pub fn at_fraction(&self, u: f64) -> f64 {
        let t = (self.start + u * self.length).rem_euclid(1.0);
        if t >= 1.0 {
            0.0
        } else {
            t
        }
    }
}

impl std::fmt::Display for TimeArc {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "[{}, {}]",
            self.start,
            (self.start + self.length).rem_euclid(1.0)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cyclic_distance_examples() {
        assert!((cyclic_time_distance(0.1, 0.9) - 0.2).abs() < 1e-15);
        assert_eq!(cyclic_time_distance(0.3, 0.3), 0.0);
        assert_eq!(cyclic_time_distance(0.25, 0.75), 0.5);
        assert_eq!(cyclic_time_distance(0.0, 1.0), 0.0);
    }

    #[test]
    fn mid_point_weights() {
        let w = time_weights(&[0.125, 0.375, 0.625, 0.875]).unwrap();
        assert!(w.iter().all(|&x| (x - 0.25).abs() < 1e-15));
        // wrap: t0 = 0.9 - 1 = -0.1, t4 = 1.1
        let w = time_weights(&[0.1, 0.5, 0.9]).unwrap();
        for (a, b) in w.iter().zip([0.3, 0.4, 0.3]) {
            assert!((a - b).abs() < 1e-15, "{w:?}");
        }
        assert_eq!(time_weights(&[0.2, 0.7]).unwrap(), vec![0.5, 0.5]);
        assert!(time_weights(&[0.5]).is_err());
        assert!(time_weights(&[0.5, 0.5]).is_err());
        assert!(time_weights(&[0.6, 0.5]).is_err());
    }

    #[test]
    fn arcs() {
        let a = TimeArc::between(8.0 / 24.0, 10.0 / 24.0).unwrap();
        assert!(a.contains(9.0 / 24.0));
        assert!(!a.contains(11.0 / 24.0));
        let night = TimeArc::between(22.0 / 24.0, 2.0 / 24.0).unwrap();
        assert!((night.length() - 4.0 / 24.0).abs() < 1e-12);
        assert!(night.contains(23.5 / 24.0) && night.contains(0.01));
        assert!(!night.contains(0.5));
        assert!(TimeArc::full_day().contains(0.77));
        assert!(TimeArc::new(0.2, 0.0).is_err());
        assert_eq!(
            TimeGrid::new(4)
                .unwrap()
                .indices_in(&TimeArc::new(0.0, 0.5).unwrap()),
            vec![0, 1]
        );
    }

    proptest! {
        #[test]
        fn weights_sum_to_one(mut ts in proptest::collection::vec(0.0001f64..0.9999, 2..60)) {
            ts.sort_by(f64::total_cmp);
            ts.dedup();
            prop_assume!(ts.len() >= 2);
            let w = time_weights(&ts).unwrap();
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(w.iter().all(|&x| x > 0.0));
        }

        #[test]
        fn cyclic_distance_is_symmetric_and_bounded(a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
            let d = cyclic_time_distance(a, b);
            prop_assert_eq!(d, cyclic_time_distance(b, a));
            prop_assert!((0.0..=0.5).contains(&d));
        }
    }
}
