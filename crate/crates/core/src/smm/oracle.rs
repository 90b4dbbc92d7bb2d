//! Monte Carlo ground truth for the GPS densities of a movement model.
//!
//! Each draw samples a day, a time `U` and deposits the exact noise density
//! `N(S(U), σ² I)` on the grid, so the only error left is Monte Carlo error.
//! Per-cell standard errors are reported alongside the field.

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{invalid_arg, Result};
use crate::geom::Point;
use crate::grid::{DensityField, GridSpec};
use crate::kde::{TimeArc, TimeGrid};
use crate::rng::{self, purpose};

use super::world::MovementModel;

/// Default number of day draws for grid oracles.
pub const DEFAULT_ORACLE_DRAWS: usize = 200_000;

const CHUNK: usize = 2048;
const TRUNCATE_SD: f64 = 6.0;

/// An oracle density with its per-cell Monte Carlo standard error.
#[derive(Clone, Debug)]
pub struct OracleField {
    pub field: DensityField,
    pub std_err: Vec<f64>,
    pub draws: usize,
}

impl OracleField {
    pub fn max_std_err(&self) -> f64 {
        self.std_err.iter().copied().fold(0.0, f64::max)
    }

    /// Monte Carlo variance of the grid integral of squared error, `Σ se² · area`.
    pub fn integrated_variance(&self) -> f64 {
        self.std_err.iter().map(|s| s * s).sum::<f64>() * self.field.grid().cell_area()
    }
}

/// A scalar Monte Carlo estimate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct McEstimate {
    pub mean: f64,
    pub std_err: f64,
    pub draws: usize,
}

#[derive(Clone, Copy)]
enum TimeDraw {
    Uniform,
    Arc(TimeArc),
    Fixed(f64),
    Grid { grid: TimeGrid, per_point: usize },
}

impl TimeDraw {
    fn time<R: Rng + ?Sized>(&self, k: usize, rng: &mut R) -> f64 {
        match *self {
            TimeDraw::Uniform => rng.random(),
            TimeDraw::Arc(arc) => arc.at_fraction(rng.random()),
            TimeDraw::Fixed(t) => t,
            TimeDraw::Grid { grid, per_point } => grid.time(k / per_point),
        }
    }
}

fn gauss_1d(u: f64, sigma: f64) -> f64 {
    (-0.5 * (u / sigma).powi(2)).exp() / (sigma * (2.0 * std::f64::consts::PI).sqrt())
}

fn check_sigma(sigma: f64) -> Result<()> {
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(invalid_arg(format!(
            "oracle noise std must be positive, got {sigma}"
        )));
    }
    Ok(())
}

fn chunks(draws: usize) -> impl IndexedParallelIterator<Item = (usize, std::ops::Range<usize>)> {
    let n_chunks = draws.div_ceil(CHUNK);
    (0..n_chunks)
        .into_par_iter()
        .map(move |c| (c, c * CHUNK..((c + 1) * CHUNK).min(draws)))
}

fn deposit_oracle(
    model: &MovementModel,
    sigma: f64,
    grid: &GridSpec,
    draws: usize,
    times: TimeDraw,
    seed: u64,
) -> Result<OracleField> {
    check_sigma(sigma)?;
    if draws == 0 {
        return Err(invalid_arg("oracle needs at least one draw"));
    }
    let reach = TRUNCATE_SD * sigma;
    let partials: Vec<Result<(Vec<f64>, Vec<f64>)>> = chunks(draws)
        .map(|(c, range)| {
            let mut rng = rng::stream(seed, &[purpose::ORACLE, c as u64]);
            let mut sum = vec![0.0; grid.len()];
            let mut sumsq = vec![0.0; grid.len()];
            let mut gx = Vec::new();
            for k in range {
                let t = times.time(k, &mut rng);
                let s = model.sample_day(&mut rng)?.trajectory.eval(t);
                let (Some((i0, i1)), Some((j0, j1))) = (
                    grid.x_range(s.x - reach, s.x + reach),
                    grid.y_range(s.y - reach, s.y + reach),
                ) else {
                    continue;
                };
                gx.clear();
                gx.extend((i0..=i1).map(|i| gauss_1d(grid.x_center(i) - s.x, sigma)));
                for j in j0..=j1 {
                    let gy = gauss_1d(grid.y_center(j) - s.y, sigma);
                    let row = grid.index(0, j);
                    for (i, g) in (i0..=i1).zip(&gx) {
                        let v = g * gy;
                        sum[row + i] += v;
                        sumsq[row + i] += v * v;
                    }
                }
            }
            Ok((sum, sumsq))
        })
        .collect();

    let mut sum = vec![0.0; grid.len()];
    let mut sumsq = vec![0.0; grid.len()];
    for p in partials {
        let (s, q) = p?;
        sum.iter_mut().zip(&s).for_each(|(a, b)| *a += b);
        sumsq.iter_mut().zip(&q).for_each(|(a, b)| *a += b);
    }
    let n = draws as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std_err = mean
        .iter()
        .zip(&sumsq)
        .map(|(m, q)| ((q / n - m * m).max(0.0) / n).sqrt())
        .collect();
    Ok(OracleField {
        field: DensityField::from_raw(*grid, mean),
        std_err,
        draws,
    })
}

/// Average GPS density: `U ~ Uniform[0, 1]`.
pub fn average_density_oracle(
    model: &MovementModel,
    sigma: f64,
    grid: &GridSpec,
    draws: usize,
    seed: u64,
) -> Result<OracleField> {
    deposit_oracle(model, sigma, grid, draws, TimeDraw::Uniform, seed)
}

/// Interval-specific GPS density: `U ~ Uniform(arc)`.
pub fn interval_density_oracle(
    model: &MovementModel,
    sigma: f64,
    grid: &GridSpec,
    arc: TimeArc,
    draws: usize,
    seed: u64,
) -> Result<OracleField> {
    deposit_oracle(model, sigma, grid, draws, TimeDraw::Arc(arc), seed)
}

/// Conditional GPS density at a fixed time of day.
pub fn conditional_density_oracle(
    model: &MovementModel,
    sigma: f64,
    grid: &GridSpec,
    t: f64,
    draws: usize,
    seed: u64,
) -> Result<OracleField> {
    if !(0.0..=1.0).contains(&t) {
        return Err(invalid_arg(format!("time {t} outside [0, 1]")));
    }
    deposit_oracle(model, sigma, grid, draws, TimeDraw::Fixed(t), seed)
}

/// Midpoint-rule time integral of the conditional oracle: `per_point` day
/// draws at each time-grid point, averaged.
pub fn integrated_conditional_oracle(
    model: &MovementModel,
    sigma: f64,
    grid: &GridSpec,
    times: TimeGrid,
    per_point: usize,
    seed: u64,
) -> Result<OracleField> {
    if per_point == 0 {
        return Err(invalid_arg("need at least one draw per time point"));
    }
    deposit_oracle(
        model,
        sigma,
        grid,
        times.len() * per_point,
        TimeDraw::Grid {
            grid: times,
            per_point,
        },
        seed,
    )
}

fn scalar_oracle(
    draws: usize,
    seed: u64,
    stream: u64,
    sample: impl Fn(&mut rng::StreamRng) -> Result<f64> + Sync,
) -> Result<McEstimate> {
    if draws == 0 {
        return Err(invalid_arg("oracle needs at least one draw"));
    }
    let partials: Vec<Result<(f64, f64)>> = chunks(draws)
        .map(|(c, range)| {
            let mut rng = rng::stream(seed, &[purpose::ORACLE, stream, c as u64]);
            let mut s = 0.0;
            let mut q = 0.0;
            for _ in range {
                let v = sample(&mut rng)?;
                s += v;
                q += v * v;
            }
            Ok((s, q))
        })
        .collect();
    let (mut s, mut q) = (0.0, 0.0);
    for p in partials {
        let (a, b) = p?;
        s += a;
        q += b;
    }
    let n = draws as f64;
    let mean = s / n;
    Ok(McEstimate {
        mean,
        std_err: ((q / n - mean * mean).max(0.0) / n).sqrt(),
        draws,
    })
}

/// Average GPS density evaluated at a single point.
pub fn density_at_oracle(
    model: &MovementModel,
    sigma: f64,
    at: Point,
    draws: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_sigma(sigma)?;
    scalar_oracle(draws, seed, 1, |rng| {
        let u: f64 = rng.random();
        let s = model.sample_day(rng)?.trajectory.eval(u);
        Ok(gauss_1d(s.x - at.x, sigma) * gauss_1d(s.y - at.y, sigma))
    })
}

/// `P(S(U) + ε ∈ region)`, the average GPS density's mass on `region`.
pub fn noisy_mass_oracle(
    model: &MovementModel,
    sigma: f64,
    region: &(dyn Fn(Point) -> bool + Sync),
    draws: usize,
    seed: u64,
) -> Result<McEstimate> {
    check_sigma(sigma)?;
    scalar_oracle(draws, seed, 2, |rng| {
        let u: f64 = rng.random();
        let s = model.sample_day(rng)?.trajectory.eval(u);
        let ex: f64 = rng.sample(StandardNormal);
        let ey: f64 = rng.sample(StandardNormal);
        Ok(f64::from(u8::from(region(Point::new(
            s.x + sigma * ex,
            s.y + sigma * ey,
        )))))
    })
}

/// `P(S(U) ∈ region)`, time share of the latent trajectory inside `region`.
pub fn latent_mass_oracle(
    model: &MovementModel,
    region: &(dyn Fn(Point) -> bool + Sync),
    draws: usize,
    seed: u64,
) -> Result<McEstimate> {
    scalar_oracle(draws, seed, 3, |rng| {
        let u: f64 = rng.random();
        let s = model.sample_day(rng)?.trajectory.eval(u);
        Ok(f64::from(u8::from(region(s))))
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::smm::MovementModel;

    fn single_stay(at: Point) -> MovementModel {
        let json = format!(
            r#"{{"anchors":[{{"name":"p","x":{},"y":{}}}],"roads":[],
               "patterns":[{{"prob":1,"steps":[{{"type":"stay","ref":"p"}}]}}]}}"#,
            at.x, at.y
        );
        MovementModel::from_json(&json).unwrap()
    }

    #[test]
    fn stationary_world_gives_exact_gaussian() {
        let p = Point::new(0.3, -0.1);
        let model = single_stay(p);
        let grid = GridSpec::centered(p, 41, 41, 0.05, 0.05).unwrap();
        let sigma = 0.2;
        let o = average_density_oracle(&model, sigma, &grid, 10, 1).unwrap();
        // only rounding noise in the variance
        assert!(o.max_std_err() < 1e-6);
        for j in 0..grid.n_y {
            for i in 0..grid.n_x {
                let c = grid.center(i, j);
                let want = gauss_1d(c.x - p.x, sigma) * gauss_1d(c.y - p.y, sigma);
                assert!((o.field.get(i, j) - want).abs() < 1e-12);
            }
        }
        assert!((o.field.integral() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn default_world_oracle_integrates_to_one() {
        let model = MovementModel::default_world();
        let bb = model.world().bounding_box();
        let grid = GridSpec::covering(bb, 1.0, 0.2).unwrap();
        let o = average_density_oracle(&model, 0.2, &grid, 20_000, 3).unwrap();
        let mass = o.field.integral();
        assert!((0.99..=1.0 + 1e-6).contains(&mass), "{mass}");
    }

    #[test]
    fn latent_mass_matches_stay_fraction() {
        let model = MovementModel::default_world();
        let home = model.world().anchor("home").unwrap().pos;
        let est = latent_mass_oracle(&model, &|p| p == home, 100_000, 4).unwrap();
        let want = model.stay_fraction(model.world().anchor_index("home").unwrap());
        assert!(
            (est.mean - want).abs() < 4.0 * est.std_err,
            "{} vs {want}",
            est.mean
        );
    }
}
