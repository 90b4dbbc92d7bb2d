//! Reference bandwidths, integrated squared error and the simulation study.

use std::collections::BTreeMap;

use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::data::GpsDataset;
use crate::error::{invalid_arg, Result};
use crate::grid::{DensityField, GridSpec};
use crate::kde::{self, time_weights, Bandwidths, Estimator, TimeArc, TimeGrid};
use crate::rng::{self, purpose};
use crate::smm::{
    average_density_oracle, interval_density_oracle, simulate, EvenSpacing, MovementModel,
    OracleField, SimulationConfig, TimestampMode, TimestampTemplate,
};

/// Smallest spatial bandwidth returned by [`reference_bandwidths`].
pub const MIN_SPATIAL_BANDWIDTH: f64 = 1e-6;

/// Reference rule
/// `h_X = 0.065 (√(s₁² + s₂²) / N)^{1/6}`, `h_T = 0.05 (n / N)^{1/3}`,
/// where `N = Σ m_i` and `s_l` is the spread of coordinate `l` under the
/// time weights `w_ij = W_ij / n`.
pub fn reference_bandwidths(data: &GpsDataset) -> Result<Bandwidths> {
    let n = data.n_days() as f64;
    let big_n = data.n_obs() as f64;
    let mut w = Vec::with_capacity(data.n_obs());
    for d in data.days() {
        w.extend(time_weights(d.times())?.into_iter().map(|x| x / n));
    }
    let pts: Vec<_> = data.points().collect();
    let mx: f64 = pts.iter().zip(&w).map(|(p, w)| w * p.x).sum();
    let my: f64 = pts.iter().zip(&w).map(|(p, w)| w * p.y).sum();
    let s1: f64 = pts
        .iter()
        .zip(&w)
        .map(|(p, w)| w * (p.x - mx).powi(2))
        .sum();
    let s2: f64 = pts
        .iter()
        .zip(&w)
        .map(|(p, w)| w * (p.y - my).powi(2))
        .sum();
    // s_l² are the weighted variances
    let h_x = (0.065 * ((s1 + s2).sqrt() / big_n).powf(1.0 / 6.0)).max(MIN_SPATIAL_BANDWIDTH);
    let h_t = (0.05 * (n / big_n).cbrt()).min(0.5);
    Bandwidths::new(h_x, h_t)
}

/// Integrated squared error `Σ (est - truth)² · cell area`.
pub fn mise(estimate: &DensityField, truth: &DensityField) -> Result<f64> {
    estimate.check_same_grid(truth)?;
    let s: f64 = estimate
        .values()
        .iter()
        .zip(truth.values())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    Ok(s * truth.grid().cell_area())
}

/// What is being estimated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Target {
    FullDay,
    Interval(TimeArc),
}

impl Target {
    /// The morning rush hour, 8 to 10 AM.
    pub fn morning() -> Self {
        Target::Interval(TimeArc::between(8.0 / 24.0, 10.0 / 24.0).expect("valid arc"))
    }

    pub fn label(&self) -> String {
        match self {
            Target::FullDay => "full".into(),
            Target::Interval(a) => {
                let end = (a.start() + a.length()).rem_euclid(1.0);
                format!(
                    "interval:{:.6}-{:.6}",
                    a.start(),
                    if end == 0.0 { 1.0 } else { end }
                )
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum ModeKind {
    Even,
    Realistic,
}

/// Settings of a simulation study.
#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    pub ns: Vec<usize>,
    pub ms: Vec<usize>,
    pub sigmas: Vec<f64>,
    pub modes: Vec<ModeKind>,
    pub estimators: Vec<Estimator>,
    pub targets: Vec<Target>,
    pub reps: usize,
    pub seed: u64,
    pub oracle_draws: usize,
    /// Template for realistic timestamps; the synthetic skewed template by default.
    pub template: Option<TimestampTemplate>,
    /// Evaluation grid; defaults to [`default_mise_grid`].
    pub grid: Option<GridSpec>,
    pub time_grid: TimeGrid,
}

impl ExperimentConfig {
    /// Desk-scale study: `n ∈ {7, 30}`, `m ∈ {159, 479}`, both noise levels,
    /// both timestamp modes, full day and morning targets, 20 repetitions.
    pub fn desk(seed: u64) -> Self {
        ExperimentConfig {
            ns: vec![7, 30],
            ms: vec![159, 479],
            sigmas: vec![0.1, 0.2],
            modes: vec![ModeKind::Even, ModeKind::Realistic],
            estimators: Estimator::ALL.to_vec(),
            targets: vec![Target::FullDay, Target::morning()],
            reps: 20,
            seed,
            oracle_draws: crate::smm::DEFAULT_ORACLE_DRAWS,
            template: None,
            grid: None,
            time_grid: TimeGrid::MINUTES,
        }
    }

    /// The full matrix `n ∈ {7, 30, 90}`, `m ∈ {159, 479, 1439}` with 100 repetitions.
    pub fn full(seed: u64) -> Self {
        ExperimentConfig {
            ns: vec![7, 30, 90],
            ms: vec![159, 479, 1439],
            reps: 100,
            ..ExperimentConfig::desk(seed)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.reps == 0 {
            return Err(invalid_arg("need at least one repetition"));
        }
        if self.ns.is_empty() || self.ns.contains(&0) {
            return Err(invalid_arg("day counts must be positive"));
        }
        if self.ms.is_empty() || self.ms.iter().any(|&m| m < 2) {
            return Err(invalid_arg("fixes per day must be at least 2"));
        }
        if self.sigmas.is_empty() || self.sigmas.iter().any(|&s| !(s > 0.0 && s.is_finite())) {
            return Err(invalid_arg("noise levels must be positive"));
        }
        if self.modes.is_empty() || self.estimators.is_empty() || self.targets.is_empty() {
            return Err(invalid_arg(
                "modes, estimators and targets must be nonempty",
            ));
        }
        if self.oracle_draws == 0 {
            return Err(invalid_arg("oracle needs at least one draw"));
        }
        Ok(())
    }
}

/// The 121 × 99 grid of 0.2 cells centered on the world's bounding box.
pub fn default_mise_grid(model: &MovementModel) -> Result<GridSpec> {
    GridSpec::centered(model.world().bounding_box().center(), 121, 99, 0.2, 0.2)
}

/// One cell of the results table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MiseRow {
    pub n: usize,
    pub m: usize,
    pub sigma: f64,
    pub mode: &'static str,
    pub estimator: Estimator,
    pub target: String,
    pub mise_mean: f64,
    /// Standard deviation of the per-repetition errors.
    pub mise_std: f64,
    pub reps: usize,
    pub seed: u64,
    #[serde(skip)]
    pub ise: Vec<f64>,
}

impl MiseRow {
    /// Monte Carlo standard error of `mise_mean`.
    pub fn std_err(&self) -> f64 {
        self.mise_std / (self.reps as f64).sqrt()
    }
}

/// Oracle quality for one (σ, target) pair.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleSummary {
    pub sigma: f64,
    pub target: String,
    pub draws: usize,
    /// `Σ se² · area`, the oracle's own contribution to every ISE.
    pub integrated_variance: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MiseTable {
    pub rows: Vec<MiseRow>,
    pub oracles: Vec<OracleSummary>,
}

impl MiseTable {
    pub fn find(
        &self,
        n: usize,
        m: usize,
        sigma: f64,
        mode: &str,
        estimator: Estimator,
        target: &str,
    ) -> Option<&MiseRow> {
        self.rows.iter().find(|r| {
            r.n == n
                && r.m == m
                && r.sigma == sigma
                && r.mode == mode
                && r.estimator == estimator
                && r.target == target
        })
    }
}

fn mode_of(kind: ModeKind, template: &TimestampTemplate) -> TimestampMode {
    match kind {
        ModeKind::Even => TimestampMode::Even(EvenSpacing::Midpoint),
        ModeKind::Realistic => TimestampMode::Realistic(template.clone()),
    }
}

/// Seed of the skewed template used when none is configured.
pub const DEFAULT_TEMPLATE_SEED: u64 = 2024;

/// Run the study. Repetition `r` uses the same simulated days across all
/// `n`, `m`, `σ` and estimators (common random numbers), so trends are
/// compared on matched data.
pub fn run_experiment(cfg: &ExperimentConfig, model: &MovementModel) -> Result<MiseTable> {
    cfg.validate()?;
    let grid = match cfg.grid {
        Some(g) => g,
        None => default_mise_grid(model)?,
    };
    let template = cfg
        .template
        .clone()
        .unwrap_or_else(|| TimestampTemplate::synthetic_skewed(DEFAULT_TEMPLATE_SEED));

    let mut oracles: BTreeMap<(usize, usize), OracleField> = BTreeMap::new();
    let mut summaries = Vec::new();
    for (si, &sigma) in cfg.sigmas.iter().enumerate() {
        for (ti, target) in cfg.targets.iter().enumerate() {
            let seed = rng::derive_seed(cfg.seed, &[purpose::ORACLE, si as u64, ti as u64]);
            let o = match target {
                Target::FullDay => {
                    average_density_oracle(model, sigma, &grid, cfg.oracle_draws, seed)?
                }
                Target::Interval(arc) => {
                    interval_density_oracle(model, sigma, &grid, *arc, cfg.oracle_draws, seed)?
                }
            };
            info!(
                "oracle sigma={sigma} target={}: integrated MC variance {:.3e}",
                target.label(),
                o.integrated_variance()
            );
            summaries.push(OracleSummary {
                sigma,
                target: target.label(),
                draws: o.draws,
                integrated_variance: o.integrated_variance(),
            });
            oracles.insert((si, ti), o);
        }
    }

    let mut rows = Vec::new();
    for &n in &cfg.ns {
        for &m in &cfg.ms {
            for (si, &sigma) in cfg.sigmas.iter().enumerate() {
                for &kind in &cfg.modes {
                    let mode = mode_of(kind, &template);
                    // ise[rep][target][estimator]
                    let per_rep: Vec<Vec<Vec<f64>>> = (0..cfg.reps)
                        .into_par_iter()
                        .map(|rep| {
                            let sim = simulate(
                                model,
                                &SimulationConfig {
                                    n_days: n,
                                    m,
                                    sigma,
                                    timestamps: mode.clone(),
                                    seed: rng::derive_seed(
                                        cfg.seed,
                                        &[purpose::REPETITION, rep as u64],
                                    ),
                                },
                            )?;
                            let data = &sim.dataset;
                            let bw = reference_bandwidths(data)?;
                            cfg.targets
                                .iter()
                                .enumerate()
                                .map(|(ti, target)| {
                                    let truth = &oracles[&(si, ti)].field;
                                    cfg.estimators
                                        .iter()
                                        .map(|&e| {
                                            let est = match target {
                                                Target::FullDay => kde::estimate(
                                                    data,
                                                    e,
                                                    bw,
                                                    &grid,
                                                    cfg.time_grid,
                                                )?,
                                                Target::Interval(arc) => kde::interval_kde(
                                                    data,
                                                    e,
                                                    bw,
                                                    &grid,
                                                    arc,
                                                    cfg.time_grid,
                                                )?,
                                            };
                                            mise(&est, truth)
                                        })
                                        .collect()
                                })
                                .collect()
                        })
                        .collect::<Result<_>>()?;
                    for (ti, target) in cfg.targets.iter().enumerate() {
                        for (ei, &estimator) in cfg.estimators.iter().enumerate() {
                            let ise: Vec<f64> = per_rep.iter().map(|r| r[ti][ei]).collect();
                            let (mean, sd) = mean_sd(&ise);
                            rows.push(MiseRow {
                                n,
                                m,
                                sigma,
                                mode: kind_label(kind),
                                estimator,
                                target: target.label(),
                                mise_mean: mean,
                                mise_std: sd,
                                reps: cfg.reps,
                                seed: cfg.seed,
                                ise,
                            });
                        }
                    }
                    info!(
                        "finished n={n} m={m} sigma={sigma} mode={}",
                        kind_label(kind)
                    );
                }
            }
        }
    }
    Ok(MiseTable {
        rows,
        oracles: summaries,
    })
}

fn kind_label(kind: ModeKind) -> &'static str {
    match kind {
        ModeKind::Even => "even",
        ModeKind::Realistic => "realistic",
    }
}

/// Sample mean and standard deviation (zero for a single value).
pub fn mean_sd(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Day;
    use crate::geom::Point;

    #[test]
    fn mise_basics() {
        let g = GridSpec::new(0.0, 0.0, 2, 2, 0.5, 0.5).unwrap();
        let a = DensityField::new(g, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = DensityField::new(g, vec![1.5, 2.5, 3.5, 4.5]).unwrap();
        assert_eq!(mise(&a, &a).unwrap(), 0.0);
        assert!((mise(&a, &b).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(mise(&a, &b).unwrap(), mise(&b, &a).unwrap());
        let other = DensityField::zeros(GridSpec::new(0.0, 0.0, 1, 4, 0.5, 0.5).unwrap());
        assert!(mise(&a, &other).is_err());
    }

    #[test]
    fn zero_spread_hits_the_floor() {
        let m = 10;
        let ts: Vec<f64> = (0..m)
            .map(|j| (2 * j + 1) as f64 / (2 * m) as f64)
            .collect();
        let day = Day::new(0, ts, vec![Point::new(3.0, 4.0); m]).unwrap();
        let bw = reference_bandwidths(&GpsDataset::new(vec![day]).unwrap()).unwrap();
        assert_eq!(bw.spatial, MIN_SPATIAL_BANDWIDTH);
        assert!((bw.temporal - 0.05 * (1.0f64 / m as f64).cbrt()).abs() < 1e-15);
    }

    #[test]
    fn mean_and_sd() {
        assert_eq!(mean_sd(&[2.0]), (2.0, 0.0));
        let (m, s) = mean_sd(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }
}
