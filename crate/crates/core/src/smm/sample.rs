//! Drawing day schedules and turning them into trajectories.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

use super::trajectory::{Segment, Trajectory};
use super::world::{DurationParams, MovementModel, Step};

/// One simulated day before observation.
#[derive(Clone, Debug)]
pub struct SampledDay {
    pub pattern: usize,
    /// Hours per step; the last entry is the absorbing final stay.
    pub durations_h: Vec<f64>,
    pub trajectory: Trajectory,
}

/// Draw from `N(mu, eta²)` truncated to the open interval `(mu - q, mu + q)`.
///
/// Rejection from a normal proposal when the window is wide, from a uniform
/// proposal on the window when it is narrow; both are exact.
pub fn sample_truncated_normal<R: Rng + ?Sized>(rng: &mut R, d: DurationParams) -> f64 {
    if d.q_h == 0.0 {
        return d.mu_h;
    }
    if d.q_h > d.eta_h {
        loop {
            let z: f64 = rng.sample(StandardNormal);
            let x = d.eta_h * z;
            if x.abs() < d.q_h {
                return d.mu_h + x;
            }
        }
    }
    loop {
        let u: f64 = rng.random();
        let x = d.q_h * (2.0 * u - 1.0);
        if x.abs() >= d.q_h {
            continue;
        }
        let accept = (-0.5 * (x / d.eta_h).powi(2)).exp();
        if rng.random::<f64>() < accept {
            return d.mu_h + x;
        }
    }
}

impl MovementModel {
    /// Draw a pattern index according to the pattern probabilities.
    pub fn sample_pattern<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let patterns = self.patterns();
        for (k, p) in patterns.iter().enumerate() {
            acc += p.probability;
            if u < acc {
                return k;
            }
        }
        // rounding left u above the cumulative total; pick the last nonzero pattern
        patterns
            .iter()
            .rposition(|p| p.probability > 0.0)
            .unwrap_or(patterns.len() - 1)
    }

    /// Draw a schedule for a given pattern and build its trajectory.
    pub fn sample_schedule<R: Rng + ?Sized>(
        &self,
        pattern: usize,
        rng: &mut R,
    ) -> Result<SampledDay> {
        let pat = &self.patterns()[pattern];
        let mut durations_h: Vec<f64> = pat
            .steps
            .iter()
            .filter_map(Step::duration)
            .map(|d| sample_truncated_normal(rng, d))
            .collect();
        let used: f64 = durations_h.iter().sum();
        if used >= 24.0 {
            return Err(Error::ScheduleOverflow { total_h: used });
        }
        durations_h.push(24.0 - used);

        let world = self.world();
        let mut segments = Vec::with_capacity(pat.steps.len());
        let mut elapsed_h = 0.0;
        for (k, (step, dur)) in pat.steps.iter().zip(&durations_h).enumerate() {
            let start = elapsed_h / 24.0;
            elapsed_h += dur;
            let end = if k + 1 == pat.steps.len() {
                1.0
            } else {
                elapsed_h / 24.0
            };
            segments.push(match step {
                Step::Stay { anchor, .. } => Segment::Hold {
                    at: world.anchors()[*anchor].pos,
                    start,
                    end,
                },
                Step::Move { road, reversed, .. } => Segment::Traverse {
                    path: world.roads()[*road].path.clone(),
                    reversed: *reversed,
                    start,
                    end,
                },
            });
        }
        Ok(SampledDay {
            pattern,
            durations_h,
            trajectory: Trajectory::new(segments),
        })
    }

    /// Draw a pattern, then its schedule.
    pub fn sample_day<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<SampledDay> {
        let pattern = self.sample_pattern(rng);
        self.sample_schedule(pattern, rng)
    }
}
