//! Simple movement model: a subject alternates stays at anchor locations and
//! constant-speed moves along roads, following one of a finite set of day
//! patterns with truncated-normal durations. Used to generate synthetic GPS
//! data and ground-truth densities.

mod oracle;
mod sample;
mod timestamps;
mod trajectory;
mod world;

pub use oracle::{
    average_density_oracle, conditional_density_oracle, density_at_oracle,
    integrated_conditional_oracle, interval_density_oracle, latent_mass_oracle, noisy_mass_oracle,
    McEstimate, OracleField, DEFAULT_ORACLE_DRAWS,
};
pub use sample::{sample_truncated_normal, SampledDay};
pub use timestamps::{
    even_timestamps, generate_timestamps, silverman_bandwidth, EvenSpacing, TimestampMode,
    TimestampTemplate,
};
pub use trajectory::{Segment, Trajectory};
pub use world::{
    ActionPattern, Anchor, DurationParams, MovementModel, Polyline, Road, Step, World,
    DEFAULT_WORLD_JSON,
};

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::data::{Day, GpsDataset};
use crate::error::{invalid_arg, Result};
use crate::geom::Point;
use crate::rng::{self, purpose};

/// Noisy fixes `S(t_j) + ε_j` with isotropic Gaussian `ε_j` of std `sigma` per axis.
pub fn observe<R: Rng + ?Sized>(
    traj: &Trajectory,
    times: &[f64],
    sigma: f64,
    day_id: i64,
    rng: &mut R,
) -> Result<Day> {
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(invalid_arg(format!(
            "noise std must be nonnegative, got {sigma}"
        )));
    }
    let points = times
        .iter()
        .map(|&t| {
            let s = traj.eval(t);
            if sigma == 0.0 {
                return s;
            }
            let ex: f64 = rng.sample(StandardNormal);
            let ey: f64 = rng.sample(StandardNormal);
            Point::new(s.x + sigma * ex, s.y + sigma * ey)
        })
        .collect();
    Day::new(day_id, times.to_vec(), points)
}

#[derive(Clone, Debug)]
pub struct SimulationConfig {
    pub n_days: usize,
    /// Fixes per day.
    pub m: usize,
    pub sigma: f64,
    pub timestamps: TimestampMode,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct Simulation {
    /// Observed days; each carries its true pattern index.
    pub dataset: GpsDataset,
    pub days: Vec<SampledDay>,
}

/// Simulate `n_days` independent days. Day `i` draws from streams keyed by
/// `(seed, i)`, so the result does not depend on evaluation order.
pub fn simulate(model: &MovementModel, cfg: &SimulationConfig) -> Result<Simulation> {
    if cfg.n_days == 0 {
        return Err(invalid_arg("need at least one day"));
    }
    let results: Vec<Result<(Day, SampledDay)>> = (0..cfg.n_days)
        .into_par_iter()
        .map(|i| {
            let key = i as u64;
            let sampled =
                model.sample_day(&mut rng::stream(cfg.seed, &[purpose::SCHEDULE, key]))?;
            let times = generate_timestamps(
                &cfg.timestamps,
                cfg.m,
                &mut rng::stream(cfg.seed, &[purpose::TIMESTAMPS, key]),
            )?;
            let day = observe(
                &sampled.trajectory,
                &times,
                cfg.sigma,
                i as i64,
                &mut rng::stream(cfg.seed, &[purpose::NOISE, key]),
            )?
            .with_pattern(sampled.pattern);
            Ok((day, sampled))
        })
        .collect();
    let mut days = Vec::with_capacity(cfg.n_days);
    let mut sampled = Vec::with_capacity(cfg.n_days);
    for r in results {
        let (d, s) = r?;
        days.push(d);
        sampled.push(s);
    }
    Ok(Simulation {
        dataset: GpsDataset::new(days)?,
        days: sampled,
    })
}
