//! `mobscope`: GPS density estimation, activity spaces and day clustering
//! from the command line. Every command writes CSV; failures print one JSON
//! line `{"error": kind, "message": ...}` to stderr and exit nonzero.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use mobscope::activity::{self, AnchorLevel, WeightedEdf};
use mobscope::cluster::{self, ClusterLabels};
use mobscope::eval::{self, ExperimentConfig, Target};
use mobscope::io::{self, CenterRow, CsvSchema, RunConfig};
use mobscope::kde::{self, DayWeights, Estimator};
use mobscope::smm::{
    self, EvenSpacing, MovementModel, SimulationConfig, TimestampMode, TimestampTemplate,
};
use mobscope::{GpsDataset, GridSpec};

#[derive(Parser)]
#[command(
    name = "mobscope",
    version,
    about = "GPS density estimation, activity spaces and day clustering"
)]
struct Cli {
    /// Run configuration (JSON). Defaults apply to any missing key.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Input {
    /// Input CSV with columns day_id,t,x,y (or day_id,epoch_s,x,y with --epoch).
    #[arg(long, short)]
    input: PathBuf,

    /// Read Unix timestamps from an `epoch_s` column.
    #[arg(long)]
    epoch: bool,

    /// Local hour at which a day starts, for --epoch.
    #[arg(long, default_value_t = 0.0)]
    day_start_hour: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    Naive,
    Fw,
    Fc,
}

impl From<EstimatorArg> for Estimator {
    fn from(e: EstimatorArg) -> Self {
        match e {
            EstimatorArg::Naive => Estimator::Naive,
            EstimatorArg::Fw => Estimator::TimeWeighted,
            EstimatorArg::Fc => Estimator::IntegratedConditional,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TimestampArg {
    /// (2j - 1) / (2m)
    Even,
    /// j / (m + 1)
    EvenInterval,
    /// Resampled from a template of real recording times.
    Realistic,
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Desk,
    Full,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate days from a movement model.
    Simulate {
        /// World and pattern JSON; the built-in world when omitted.
        #[arg(long)]
        world: Option<PathBuf>,
        /// Keep only these pattern indices (renormalized).
        #[arg(long, value_delimiter = ',')]
        patterns: Vec<usize>,
        #[arg(long, default_value_t = 30)]
        days: usize,
        #[arg(long, default_value_t = 479)]
        m: usize,
        #[arg(long, default_value_t = 0.2)]
        sigma: f64,
        #[arg(long, value_enum, default_value_t = TimestampArg::Even)]
        timestamps: TimestampArg,
        /// Template CSV (columns day_id,t) for realistic timestamps; a
        /// synthetic skewed template when omitted.
        #[arg(long)]
        template: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Full-day or interval density estimate on a grid.
    Estimate {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value_t = EstimatorArg::Fc)]
        estimator: EstimatorArg,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Conditional density at a time of day.
    Conditional {
        #[command(flatten)]
        input: Input,
        /// Time of day in [0, 1].
        #[arg(long)]
        t: f64,
        /// Average per-day conditional estimates instead of pooling.
        #[arg(long)]
        daily_average: bool,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Anchor locations as high local modes of the density estimate.
    Anchors {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value_t = EstimatorArg::Fc)]
        estimator: EstimatorArg,
        /// Minimum time share at an anchor; the threshold is λ/(2πσ²) with σ from the config.
        #[arg(long, conflicts_with = "density_threshold")]
        lambda: Option<f64>,
        /// Raw density threshold.
        #[arg(long)]
        density_threshold: Option<f64>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Smallest density level set covering a share of the time.
    ActivitySpace {
        #[command(flatten)]
        input: Input,
        #[arg(long, value_enum, default_value_t = EstimatorArg::Fc)]
        estimator: EstimatorArg,
        #[arg(long)]
        rho: f64,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Single-linkage clustering of days by log-density distance.
    Cluster {
        #[command(flatten)]
        input: Input,
        /// Number of clusters.
        #[arg(long, conflicts_with = "height")]
        k: Option<usize>,
        /// Cut height.
        #[arg(long)]
        height: Option<f64>,
        /// Labels CSV (day,label,singleton).
        #[arg(long, short)]
        out: PathBuf,
        /// Merge list CSV.
        #[arg(long)]
        dendrogram: Option<PathBuf>,
        /// Pairwise distance matrix CSV.
        #[arg(long)]
        distances: Option<PathBuf>,
    },
    /// Conditional centers of each cluster over the day.
    Centers {
        #[command(flatten)]
        input: Input,
        /// Labels CSV written by `cluster`.
        #[arg(long)]
        labels: PathBuf,
        /// Times of day; every 15 minutes when omitted.
        #[arg(long, value_delimiter = ',')]
        times: Vec<f64>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Simulation study of estimator accuracy.
    Evaluate {
        #[arg(long, value_enum, default_value_t = Preset::Desk)]
        preset: Preset,
        #[arg(long)]
        world: Option<PathBuf>,
        #[arg(long)]
        reps: Option<usize>,
        #[arg(long)]
        oracle_draws: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            print!("{e}");
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            report("usage", &e.to_string());
            return ExitCode::from(2);
        }
    };
    if let Err(e) = configure_threads() {
        report("invalid_argument", &format!("{e:#}"));
        return ExitCode::from(2);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .downcast_ref::<mobscope::Error>()
                .map_or("error", |m| m.kind());
            report(kind, &format!("{e:#}"));
            ExitCode::FAILURE
        }
    }
}

fn report(kind: &str, message: &str) {
    let line = serde_json::json!({ "error": kind, "message": message.trim_end() });
    eprintln!("{line}");
}

fn configure_threads() -> anyhow::Result<()> {
    let Ok(v) = std::env::var("MOBSCOPE_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .with_context(|| format!("MOBSCOPE_THREADS must be a positive integer, got '{v}'"))?;
    if n == 0 {
        bail!("MOBSCOPE_THREADS must be a positive integer, got '{v}'");
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()?;
    Ok(())
}

fn create(path: &Path) -> anyhow::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| {
        format!("cannot create {}", path.display())
    })?))
}

fn load_model(path: Option<&Path>) -> anyhow::Result<MovementModel> {
    Ok(match path {
        Some(p) => MovementModel::from_json(
            &std::fs::read_to_string(p).with_context(|| format!("cannot read {}", p.display()))?,
        )?,
        None => MovementModel::default_world(),
    })
}

fn load_data(input: &Input) -> anyhow::Result<GpsDataset> {
    let schema = CsvSchema {
        epoch: input.epoch,
        day_start_hour: input.day_start_hour,
    };
    let got = io::ingest_csv(&input.input, schema)
        .with_context(|| format!("cannot read {}", input.input.display()))?;
    info!(
        "read {} days ({} fixes); dropped {} short days, merged {} duplicate rows, {} day ids missing",
        got.dataset.n_days(),
        got.dataset.n_obs(),
        got.dropped_days,
        got.collapsed_rows,
        got.missing_day_ids
    );
    Ok(got.dataset)
}

fn load_template(path: &Path) -> anyhow::Result<TimestampTemplate> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(File::open(path)?));
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .with_context(|| format!("template lacks column '{name}'"))
    };
    let (cd, ct) = (col("day_id")?, col("t")?);
    let mut days: std::collections::BTreeMap<i64, Vec<f64>> = Default::default();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |c: usize| rec.get(c).unwrap_or("").to_string();
        let d: i64 = parse(cd)
            .parse()
            .with_context(|| format!("template row {}: bad day_id", k + 2))?;
        let t: f64 = parse(ct)
            .parse()
            .with_context(|| format!("template row {}: bad t", k + 2))?;
        days.entry(d).or_default().push(t);
    }
    Ok(TimestampTemplate::new(days.into_values().collect())?)
}

struct Run {
    cfg: RunConfig,
}

impl Run {
    fn grid(&self, data: &GpsDataset) -> anyhow::Result<GridSpec> {
        Ok(self.cfg.grid.resolve(data.bounding_box())?)
    }
}

fn kernel_for(
    data: &GpsDataset,
    ctx: &Run,
    estimator: Estimator,
) -> anyhow::Result<(mobscope::kde::WeightedKde, Option<DayWeights>)> {
    let bw = ctx.cfg.bandwidths_for(data)?;
    let times = ctx.cfg.time_grid()?;
    Ok(match estimator {
        Estimator::Naive => (kde::naive_kernel(data, bw.spatial)?, None),
        Estimator::TimeWeighted => {
            let w = DayWeights::time_weighted(data)?;
            (kde::weighted_kernel(data, &w, bw.spatial)?, Some(w))
        }
        Estimator::IntegratedConditional => {
            let w = kde::integrated_conditional_weights(data, bw.temporal, times)?;
            (kde::weighted_kernel(data, &w, bw.spatial)?, Some(w))
        }
    })
}

fn run(cli: Cli) -> anyhow::Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p).with_context(|| format!("config {}", p.display()))?,
        None => RunConfig::default(),
    };
    let ctx = Run { cfg };
    match cli.command {
        Command::Simulate {
            world,
            patterns,
            days,
            m,
            sigma,
            timestamps,
            template,
            seed,
            out,
        } => {
            let mut model = load_model(world.as_deref())?;
            if !patterns.is_empty() {
                model = model.restricted(&patterns)?;
            }
            let mode = match timestamps {
                TimestampArg::Even => TimestampMode::Even(EvenSpacing::Midpoint),
                TimestampArg::EvenInterval => TimestampMode::Even(EvenSpacing::Interval),
                TimestampArg::Realistic => TimestampMode::Realistic(match template {
                    Some(p) => load_template(&p)?,
                    None => TimestampTemplate::synthetic_skewed(eval::DEFAULT_TEMPLATE_SEED),
                }),
            };
            let sim = smm::simulate(
                &model,
                &SimulationConfig {
                    n_days: days,
                    m,
                    sigma,
                    timestamps: mode,
                    seed: seed.unwrap_or(ctx.cfg.seed),
                },
            )?;
            let mut w = create(&out)?;
            io::write_dataset(&mut w, &sim.dataset)?;
            w.flush()?;
        }
        Command::Estimate {
            input,
            estimator,
            out,
        } => {
            let data = load_data(&input)?;
            let grid = ctx.grid(&data)?;
            let bw = ctx.cfg.bandwidths_for(&data)?;
            let times = ctx.cfg.time_grid()?;
            let field = match ctx.cfg.arc()? {
                Some(arc) => kde::interval_kde(&data, estimator.into(), bw, &grid, &arc, times)?,
                None => kde::estimate(&data, estimator.into(), bw, &grid, times)?,
            };
            let mut w = create(&out)?;
            io::write_density(&mut w, &field)?;
            w.flush()?;
        }
        Command::Conditional {
            input,
            t,
            daily_average,
            out,
        } => {
            let data = load_data(&input)?;
            let grid = ctx.grid(&data)?;
            let bw = ctx.cfg.bandwidths_for(&data)?;
            let field = if daily_average {
                kde::daily_average_conditional(&data, bw, &grid, t)?
            } else {
                kde::conditional_kde(&data, bw, &grid, t)?
            };
            let mut w = create(&out)?;
            io::write_density(&mut w, &field)?;
            w.flush()?;
        }
        Command::Anchors {
            input,
            estimator,
            lambda,
            density_threshold,
            out,
        } => {
            let (level, lambda_out) = match (lambda, density_threshold) {
                (Some(l), None) => {
                    let sigma = ctx
                        .cfg
                        .sigma
                        .context("--lambda needs the noise level: set \"sigma\" in the config")?;
                    (AnchorLevel::TimeShare { lambda: l, sigma }, l)
                }
                (None, Some(d)) => (AnchorLevel::Density(d), d),
                _ => bail!("give exactly one of --lambda or --density-threshold"),
            };
            level.threshold()?;
            let data = load_data(&input)?;
            let grid = ctx.grid(&data)?;
            let (kde, _) = kernel_for(&data, &ctx, estimator.into())?;
            let anchors = activity::detect_anchors(&kde, &kde.eval_grid(&grid), level)?;
            let mut w = create(&out)?;
            io::write_anchors(&mut w, &anchors, lambda_out)?;
            w.flush()?;
        }
        Command::ActivitySpace {
            input,
            estimator,
            rho,
            out,
        } => {
            if !(rho > 0.0 && rho < 1.0) {
                bail!(mobscope::Error::InvalidArgument(format!(
                    "rho must lie in (0, 1), got {rho}"
                )));
            }
            let data = load_data(&input)?;
            let grid = ctx.grid(&data)?;
            let (kde, weights) = kernel_for(&data, &ctx, estimator.into())?;
            let weights = match weights {
                Some(w) => w,
                // equal weights: the ordinary empirical distribution
                None => DayWeights::new(
                    kde::WeightKind::TimeWeighted,
                    data.days()
                        .iter()
                        .map(|d| vec![data.n_days() as f64 / data.n_obs() as f64; d.len()])
                        .collect(),
                )?,
            };
            let edf = WeightedEdf::new(&data, &weights)?;
            let p = activity::observation_densities(&kde, &edf);
            let space = activity::activity_space(&kde.eval_grid(&grid), &p, &edf, rho)?;
            info!(
                "level {:.6e} covers EDF mass {:.6}",
                space.level, space.covered
            );
            let mut w = create(&out)?;
            io::write_mask(&mut w, &space.mask, space.level)?;
            w.flush()?;
        }
        Command::Cluster {
            input,
            k,
            height,
            out,
            dendrogram,
            distances,
        } => {
            if k.is_none() && height.is_none() {
                bail!(mobscope::Error::InvalidArgument(
                    "give --k or --height".into()
                ));
            }
            let data = load_data(&input)?;
            let grid = ctx.grid(&data)?;
            let bw = ctx.cfg.bandwidths_for(&data)?;
            let d = cluster::distance_matrix(&data, bw, &grid, ctx.cfg.time_grid()?, ctx.cfg.xi)?;
            let dend = cluster::single_linkage(&d)?;
            let labels = match (k, height) {
                (Some(k), _) => dend.cut_k(k)?,
                (None, Some(h)) => dend.cut_height(h),
                (None, None) => unreachable!(),
            };
            let mut w = create(&out)?;
            io::write_labels(&mut w, &data, &labels)?;
            w.flush()?;
            if let Some(p) = dendrogram {
                let mut w = create(&p)?;
                io::write_dendrogram(&mut w, &dend)?;
                w.flush()?;
            }
            if let Some(p) = distances {
                let mut w = create(&p)?;
                io::write_distance_matrix(&mut w, &data, &d)?;
                w.flush()?;
            }
        }
        Command::Centers {
            input,
            labels,
            times,
            out,
        } => {
            let data = load_data(&input)?;
            let labels = read_labels(&labels, &data)?;
            let bw = ctx.cfg.bandwidths_for(&data)?;
            let times = if times.is_empty() {
                (0..96).map(|k| (k as f64 + 0.5) / 96.0).collect()
            } else {
                times
            };
            let mut rows = Vec::new();
            for g in 1..=labels.n_clusters() {
                for &t in &times {
                    let c = cluster::conditional_center(&data, &labels, g, bw.temporal, t)?;
                    rows.push(CenterRow {
                        cluster: g,
                        t,
                        x: c.x,
                        y: c.y,
                    });
                }
            }
            let mut w = create(&out)?;
            io::write_centers(&mut w, &rows)?;
            w.flush()?;
        }
        Command::Evaluate {
            preset,
            world,
            reps,
            oracle_draws,
            seed,
            out,
        } => {
            let model = load_model(world.as_deref())?;
            let seed = seed.unwrap_or(ctx.cfg.seed);
            let mut cfg = match preset {
                Preset::Desk => ExperimentConfig::desk(seed),
                Preset::Full => ExperimentConfig::full(seed),
            };
            cfg.time_grid = ctx.cfg.time_grid()?;
            if let Some(arc) = ctx.cfg.arc()? {
                cfg.targets = vec![Target::FullDay, Target::Interval(arc)];
            }
            if let Some(r) = reps {
                cfg.reps = r;
            }
            if let Some(d) = oracle_draws {
                cfg.oracle_draws = d;
            }
            cfg.validate()?;
            let table = eval::run_experiment(&cfg, &model)?;
            for o in &table.oracles {
                info!(
                    "oracle sigma={} target={} integrated MC variance {:.3e}",
                    o.sigma, o.target, o.integrated_variance
                );
            }
            let mut w = create(&out)?;
            io::write_mise(&mut w, &table)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn read_labels(path: &Path, data: &GpsDataset) -> anyhow::Result<ClusterLabels> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(BufReader::new(File::open(path)?));
    let mut by_day = std::collections::HashMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let day: i64 = rec
            .get(0)
            .unwrap_or("")
            .parse()
            .context("labels: bad day")?;
        let label: usize = rec
            .get(1)
            .unwrap_or("")
            .parse()
            .context("labels: bad label")?;
        by_day.insert(day, label);
    }
    let assign = data
        .days()
        .iter()
        .map(|d| {
            by_day
                .get(&d.id())
                .copied()
                .with_context(|| format!("labels file has no entry for day {}", d.id()))
        })
        .collect::<anyhow::Result<Vec<_>>>()?;
    Ok(ClusterLabels::from_assignments(&assign))
}
