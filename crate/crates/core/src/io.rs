//! CSV ingestion and export, and the JSON run configuration.
//!
//! Input rows are `day_id,t,x,y` with `t` the fraction of the day, or
//! `day_id,epoch_s,x,y` with Unix seconds. Extra columns are ignored except
//! an optional integer `pattern`, which is kept as day metadata.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::activity::{AnchorEstimate, RegionMask};
use crate::cluster::{ClusterLabels, Dendrogram, DistanceMatrix};
use crate::data::{Day, GpsDataset};
use crate::error::{invalid_arg, Error, Result};
use crate::eval::MiseTable;
use crate::geom::{BoundingBox, Point};
use crate::grid::{DensityField, GridSpec};
use crate::kde::{Bandwidths, TimeArc, TimeGrid};

/// Timestamps of exactly 0 are moved to this interior value.
pub const T_FLOOR: f64 = 1e-9;

/// How the time column is read.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CsvSchema {
    /// Read `epoch_s` (Unix seconds) instead of normalized `t`.
    pub epoch: bool,
    /// Local hour at which a day starts, for epoch input.
    pub day_start_hour: f64,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            epoch: false,
            day_start_hour: 0.0,
        }
    }
}

/// A parsed dataset and what was cleaned on the way in.
#[derive(Clone, Debug)]
pub struct Ingested {
    pub dataset: GpsDataset,
    /// Days dropped for having fewer than two distinct timestamps.
    pub dropped_days: usize,
    /// Rows merged into another row with the same day and time.
    pub collapsed_rows: usize,
    /// Day ids absent between the smallest and largest id present.
    pub missing_day_ids: u64,
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse {
        line,
        message: message.into(),
    }
}

fn column(headers: &csv::StringRecord, name: &str) -> Option<usize> {
    headers.iter().position(|h| h.trim() == name)
}

/// Parse fixes from CSV text.
pub fn ingest_csv_reader<R: Read>(reader: R, schema: CsvSchema) -> Result<Ingested> {
    if !(0.0..24.0).contains(&schema.day_start_hour) {
        return Err(invalid_arg(format!(
            "day start hour must lie in [0, 24), got {}",
            schema.day_start_hour
        )));
    }
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let time_col = if schema.epoch { "epoch_s" } else { "t" };
    let mut missing = Vec::new();
    let mut col = |name: &str| {
        let c = column(&headers, name);
        if c.is_none() {
            missing.push(name.to_string());
        }
        c.unwrap_or(0)
    };
    let (c_day, c_t, c_x, c_y) = (col("day_id"), col(time_col), col("x"), col("y"));
    if !missing.is_empty() {
        return Err(parse_err(
            1,
            format!("missing required column(s): {}", missing.join(", ")),
        ));
    }
    let c_pattern = column(&headers, "pattern");

    // day id -> (t, x, y) rows, and the day's pattern if given
    let mut days: BTreeMap<i64, (Vec<(f64, f64, f64)>, Option<usize>)> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |c: usize, name: &str| {
            rec.get(c)
                .ok_or_else(|| parse_err(line, format!("row has no '{name}' field")))
        };
        let num = |c: usize, name: &str| -> Result<f64> {
            let s = field(c, name)?;
            let v: f64 = s
                .parse()
                .map_err(|_| parse_err(line, format!("cannot parse {name} '{s}'")))?;
            if !v.is_finite() {
                return Err(parse_err(line, format!("{name} must be finite, got '{s}'")));
            }
            Ok(v)
        };
        let day_s = field(c_day, "day_id")?;
        let day: i64 = day_s
            .parse()
            .map_err(|_| parse_err(line, format!("cannot parse day_id '{day_s}'")))?;
        let t = if schema.epoch {
            let secs = num(c_t, "epoch_s")?;
            (secs - schema.day_start_hour * 3600.0).rem_euclid(86_400.0) / 86_400.0
        } else {
            let t = num(c_t, "t")?;
            if !(0.0..=1.0).contains(&t) {
                return Err(parse_err(line, format!("t = {t} outside [0, 1]")));
            }
            t
        };
        // both ends of the day are the same instant; keep times interior
        let t = if t <= 0.0 || t >= 1.0 { T_FLOOR } else { t };
        let (x, y) = (num(c_x, "x")?, num(c_y, "y")?);
        let entry = days.entry(day).or_default();
        entry.0.push((t, x, y));
        if let Some(c) = c_pattern {
            let s = field(c, "pattern")?;
            if !s.is_empty() {
                let p: usize = s
                    .parse()
                    .map_err(|_| parse_err(line, format!("cannot parse pattern '{s}'")))?;
                entry.1 = Some(p);
            }
        }
    }

    let mut out = Vec::new();
    let mut dropped = 0;
    let mut collapsed = 0;
    let ids: Vec<i64> = days.keys().copied().collect();
    for (id, (mut rows, pattern)) in days {
        rows.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut times = Vec::with_capacity(rows.len());
        let mut points = Vec::with_capacity(rows.len());
        let mut k = 0;
        while k < rows.len() {
            let t = rows[k].0;
            let mut end = k;
            while end < rows.len() && rows[end].0 == t {
                end += 1;
            }
            let c = (end - k) as f64;
            let x = rows[k..end].iter().map(|r| r.1).sum::<f64>() / c;
            let y = rows[k..end].iter().map(|r| r.2).sum::<f64>() / c;
            collapsed += end - k - 1;
            times.push(t);
            points.push(Point::new(x, y));
            k = end;
        }
        if times.len() < 2 {
            dropped += 1;
            continue;
        }
        let mut day = Day::new(id, times, points)?;
        if let Some(p) = pattern {
            day = day.with_pattern(p);
        }
        out.push(day);
    }
    if dropped > 0 {
        warn!("dropped {dropped} day(s) with fewer than two distinct timestamps");
    }
    if out.is_empty() {
        return Err(Error::InvalidData("no day with at least two fixes".into()));
    }
    let missing_day_ids = match (ids.first(), ids.last()) {
        (Some(&a), Some(&b)) => (b - a) as u64 + 1 - ids.len() as u64,
        _ => 0,
    };
    Ok(Ingested {
        dataset: GpsDataset::new(out)?,
        dropped_days: dropped,
        collapsed_rows: collapsed,
        missing_day_ids,
    })
}

pub fn ingest_csv(path: &Path, schema: CsvSchema) -> Result<Ingested> {
    ingest_csv_reader(std::fs::File::open(path)?, schema)
}

fn writer<W: Write>(w: W) -> csv::Writer<W> {
    csv::WriterBuilder::new().from_writer(w)
}

/// Rows `day_id,t,x,y[,pattern]`; floats use the shortest exact representation.
pub fn write_dataset<W: Write>(w: W, data: &GpsDataset) -> Result<()> {
    let with_pattern = data.days().iter().all(|d| d.pattern().is_some());
    let mut wr = writer(w);
    if with_pattern {
        wr.write_record(["day_id", "t", "x", "y", "pattern"])?;
    } else {
        wr.write_record(["day_id", "t", "x", "y"])?;
    }
    for d in data.days() {
        for (t, p) in d.times().iter().zip(d.points()) {
            let mut rec = vec![
                d.id().to_string(),
                t.to_string(),
                p.x.to_string(),
                p.y.to_string(),
            ];
            if let (true, Some(pat)) = (with_pattern, d.pattern()) {
                rec.push(pat.to_string());
            }
            wr.write_record(&rec)?;
        }
    }
    wr.flush()?;
    Ok(())
}

/// Rows `x_center,y_center,value`, row-major.
pub fn write_density<W: Write>(w: W, field: &DensityField) -> Result<()> {
    let g = field.grid();
    let mut wr = writer(w);
    wr.write_record(["x_center", "y_center", "value"])?;
    for (idx, v) in field.values().iter().enumerate() {
        let c = g.center(idx % g.n_x, idx / g.n_x);
        wr.write_record([c.x.to_string(), c.y.to_string(), v.to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

/// Rows `cell,x_center,y_center,in_region,level`.
pub fn write_mask<W: Write>(w: W, mask: &RegionMask, level: f64) -> Result<()> {
    let g = mask.grid();
    let mut wr = writer(w);
    wr.write_record(["cell", "x_center", "y_center", "in_region", "level"])?;
    for (idx, &inside) in mask.cells().iter().enumerate() {
        let c = g.center(idx % g.n_x, idx / g.n_x);
        wr.write_record([
            idx.to_string(),
            c.x.to_string(),
            c.y.to_string(),
            u8::from(inside).to_string(),
            level.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Rows `x,y,density,lambda`; `lambda` is the threshold parameter used.
pub fn write_anchors<W: Write>(w: W, anchors: &[AnchorEstimate], lambda: f64) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["x", "y", "density", "lambda"])?;
    for a in anchors {
        wr.write_record([
            a.location.x.to_string(),
            a.location.y.to_string(),
            a.density.to_string(),
            lambda.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Rows `id_a,id_b,height,size`. Leaves are `0..n`, merge `k` creates `n + k`.
pub fn write_dendrogram<W: Write>(w: W, dend: &Dendrogram) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["id_a", "id_b", "height", "size"])?;
    for m in dend.merges() {
        wr.write_record([
            m.a.to_string(),
            m.b.to_string(),
            m.height.to_string(),
            m.size.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Rows `day,label,singleton`; `day` is the input day id.
pub fn write_labels<W: Write>(w: W, data: &GpsDataset, labels: &ClusterLabels) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["day", "label", "singleton"])?;
    for (i, (d, l)) in data.days().iter().zip(labels.labels()).enumerate() {
        wr.write_record([
            d.id().to_string(),
            l.to_string(),
            u8::from(labels.is_singleton(i)).to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Square matrix with a leading `day` column.
pub fn write_distance_matrix<W: Write>(w: W, data: &GpsDataset, d: &DistanceMatrix) -> Result<()> {
    let mut wr = writer(w);
    let mut header = vec!["day".to_string()];
    header.extend(data.days().iter().map(|d| d.id().to_string()));
    wr.write_record(&header)?;
    for (a, day) in data.days().iter().enumerate() {
        let mut rec = vec![day.id().to_string()];
        rec.extend((0..d.len()).map(|b| d.get(a, b).to_string()));
        wr.write_record(&rec)?;
    }
    wr.flush()?;
    Ok(())
}

/// One conditional center per cluster and time.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CenterRow {
    pub cluster: usize,
    pub t: f64,
    pub x: f64,
    pub y: f64,
}

pub fn write_centers<W: Write>(w: W, rows: &[CenterRow]) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record(["cluster", "t", "x", "y"])?;
    for r in rows {
        wr.write_record([
            r.cluster.to_string(),
            r.t.to_string(),
            r.x.to_string(),
            r.y.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Rows `n,m,sigma,mode,estimator,target,mise_mean,mise_std,reps,seed`.
pub fn write_mise<W: Write>(w: W, table: &MiseTable) -> Result<()> {
    let mut wr = writer(w);
    wr.write_record([
        "n",
        "m",
        "sigma",
        "mode",
        "estimator",
        "target",
        "mise_mean",
        "mise_std",
        "reps",
        "seed",
    ])?;
    for r in &table.rows {
        wr.write_record([
            r.n.to_string(),
            r.m.to_string(),
            r.sigma.to_string(),
            r.mode.to_string(),
            r.estimator.to_string(),
            r.target.clone(),
            r.mise_mean.to_string(),
            r.mise_std.to_string(),
            r.reps.to_string(),
            r.seed.to_string(),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Bandwidth choice: `"reference"` or explicit values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BandwidthSpec {
    Named(BandwidthRule),
    Explicit { spatial: f64, temporal: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BandwidthRule {
    Reference,
}

/// Evaluation grid: explicit, or fitted around the data.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GridChoice {
    Explicit {
        x_min: f64,
        y_min: f64,
        n_x: usize,
        n_y: usize,
        dx: f64,
        dy: f64,
    },
    Auto {
        margin: f64,
        cell: f64,
    },
}

impl GridChoice {
    pub fn resolve(&self, bb: BoundingBox) -> Result<GridSpec> {
        match *self {
            GridChoice::Explicit {
                x_min,
                y_min,
                n_x,
                n_y,
                dx,
                dy,
            } => GridSpec::new(x_min, y_min, n_x, n_y, dx, dy),
            GridChoice::Auto { margin, cell } => GridSpec::covering(bb, margin, cell),
        }
    }
}

/// Settings shared by the command-line workflow.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub bandwidths: BandwidthSpec,
    pub grid: GridChoice,
    /// Number of time-grid points for conditional integrals.
    pub time_grid: usize,
    /// Stabilizer of the log-density distance.
    pub xi: f64,
    /// Known GPS noise std, for anchor thresholds.
    pub sigma: Option<f64>,
    /// Time interval `[start, end]` as fractions of the day; `end < start` wraps.
    pub interval: Option<[f64; 2]>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            bandwidths: BandwidthSpec::Named(BandwidthRule::Reference),
            grid: GridChoice::Auto {
                margin: 1.0,
                cell: 0.1,
            },
            time_grid: 1440,
            xi: 1e-4,
            sigma: None,
            interval: None,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        RunConfig::from_json(&std::fs::read_to_string(path)?)
    }

    /// Reports every problem at once.
    pub fn validate(&self) -> Result<()> {
        let mut errs = Vec::new();
        if let BandwidthSpec::Explicit { spatial, temporal } = self.bandwidths {
            if let Err(e) = Bandwidths::new(spatial, temporal) {
                errs.push(e.to_string());
            }
        }
        match self.grid {
            GridChoice::Explicit {
                x_min,
                y_min,
                n_x,
                n_y,
                dx,
                dy,
            } => {
                if let Err(e) = GridSpec::new(x_min, y_min, n_x, n_y, dx, dy) {
                    errs.push(e.to_string());
                }
            }
            GridChoice::Auto { margin, cell } => {
                if !(cell > 0.0 && cell.is_finite()) || !(margin >= 0.0 && margin.is_finite()) {
                    errs.push("auto grid needs a positive cell size and nonnegative margin".into());
                }
            }
        }
        if self.time_grid < 2 {
            errs.push(format!(
                "time_grid must be at least 2, got {}",
                self.time_grid
            ));
        }
        if !(self.xi > 0.0 && self.xi.is_finite()) {
            errs.push(format!("xi must be positive, got {}", self.xi));
        }
        if let Some(s) = self.sigma {
            if !(s > 0.0 && s.is_finite()) {
                errs.push(format!("sigma must be positive, got {s}"));
            }
        }
        if let Some([a, b]) = self.interval {
            if let Err(e) = TimeArc::between(a, b) {
                errs.push(e.to_string());
            }
        }
        if errs.is_empty() {
            Ok(())
        } else {
            Err(invalid_arg(errs.join("; ")))
        }
    }

    pub fn time_grid(&self) -> Result<TimeGrid> {
        TimeGrid::new(self.time_grid)
    }

    pub fn arc(&self) -> Result<Option<TimeArc>> {
        self.interval
            .map(|[a, b]| TimeArc::between(a, b))
            .transpose()
    }

    pub fn bandwidths_for(&self, data: &GpsDataset) -> Result<Bandwidths> {
        match self.bandwidths {
            BandwidthSpec::Named(BandwidthRule::Reference) => {
                crate::eval::reference_bandwidths(data)
            }
            BandwidthSpec::Explicit { spatial, temporal } => Bandwidths::new(spatial, temporal),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ingest(text: &str, schema: CsvSchema) -> Result<Ingested> {
        ingest_csv_reader(text.as_bytes(), schema)
    }

    #[test]
    fn two_days_of_three() {
        let csv =
            "day_id,t,x,y\n1,0.1,0,0\n1,0.5,1,1\n1,0.9,2,2\n2,0.2,0,0\n2,0.4,0,1\n2,0.6,1,0\n";
        let got = ingest(csv, CsvSchema::default()).unwrap();
        let lens: Vec<usize> = got.dataset.days().iter().map(|d| d.len()).collect();
        assert_eq!(lens, vec![3, 3]);
        assert_eq!(got.dropped_days, 0);
    }

    #[test]
    fn single_fix_days_are_dropped() {
        let csv = "day_id,t,x,y\n1,0.1,0,0\n1,0.5,1,1\n2,0.3,0,0\n";
        let got = ingest(csv, CsvSchema::default()).unwrap();
        assert_eq!(got.dataset.n_days(), 1);
        assert_eq!(got.dropped_days, 1);
        assert!(ingest("day_id,t,x,y\n2,0.3,0,0\n", CsvSchema::default()).is_err());
    }

    #[test]
    fn epoch_times_map_to_fractions() {
        // 2024-01-01 00:00, 12:00, 18:00 UTC
        let csv = "day_id,epoch_s,x,y\n0,1704067200,0,0\n0,1704110400,1,0\n0,1704132000,2,0\n";
        let got = ingest(
            csv,
            CsvSchema {
                epoch: true,
                day_start_hour: 0.0,
            },
        )
        .unwrap();
        assert_eq!(got.dataset.days()[0].times(), &[T_FLOOR, 0.5, 0.75]);
        let shifted = ingest(
            csv,
            CsvSchema {
                epoch: true,
                day_start_hour: 6.0,
            },
        )
        .unwrap();
        assert_eq!(shifted.dataset.days()[0].times(), &[0.25, 0.5, 0.75]);
    }

    #[test]
    fn duplicates_collapse_to_mean() {
        let csv = "day_id,t,x,y\n1,0.5,0,0\n1,0.5,2,4\n1,0.7,1,1\n";
        let got = ingest(csv, CsvSchema::default()).unwrap();
        assert_eq!(got.collapsed_rows, 1);
        assert_eq!(got.dataset.days()[0].points()[0], Point::new(1.0, 2.0));
    }

    #[test]
    fn errors_carry_line_numbers() {
        let e = ingest("day_id,t,x,y\n1,0.1,0,0\n1,zz,0,0\n", CsvSchema::default()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 3, .. }), "{e:?}");
        let e = ingest("day_id,time,x,y\n1,0.1,0,0\n", CsvSchema::default()).unwrap_err();
        assert!(e.to_string().contains("missing required column"), "{e}");
        let e = ingest("day_id,t,x,y\n1,1.5,0,0\n", CsvSchema::default()).unwrap_err();
        assert!(matches!(e, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn dataset_round_trip_is_exact() {
        let day = Day::new(
            3,
            vec![0.123456789012345, 0.5, 0.999],
            vec![
                Point::new(1.0 / 3.0, -2.5e-7),
                Point::new(1e6, 0.1),
                Point::new(-0.0, 7.0),
            ],
        )
        .unwrap()
        .with_pattern(2);
        let data = GpsDataset::new(vec![day]).unwrap();
        let mut buf = Vec::new();
        write_dataset(&mut buf, &data).unwrap();
        let back = ingest_csv_reader(buf.as_slice(), CsvSchema::default())
            .unwrap()
            .dataset;
        assert_eq!(back.days()[0].times(), data.days()[0].times());
        assert_eq!(back.days()[0].points(), data.days()[0].points());
        assert_eq!(back.days()[0].pattern(), Some(2));
    }

    #[test]
    fn config_validation_collects_all_problems() {
        let cfg = RunConfig::from_json(r#"{"bandwidths": "reference"}"#).unwrap();
        assert_eq!(cfg.time_grid, 1440);
        let cfg = RunConfig::from_json(
            r#"{"bandwidths": {"spatial": 0.3, "temporal": 0.02}, "interval": [0.9, 0.1]}"#,
        )
        .unwrap();
        assert!(cfg.arc().unwrap().unwrap().contains(0.95));
        let e = RunConfig::from_json(r#"{"xi": -1, "time_grid": 1, "sigma": 0}"#)
            .unwrap_err()
            .to_string();
        assert!(
            e.contains("xi") && e.contains("time_grid") && e.contains("sigma"),
            "{e}"
        );
        assert!(RunConfig::from_json(r#"{"bogus": 1}"#).is_err());
    }
}
