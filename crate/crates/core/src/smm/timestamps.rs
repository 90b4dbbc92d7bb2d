//! Observation-time designs: evenly spaced or resampled from template days.

use rand::seq::index;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{invalid_arg, Error, Result};

/// Interior clip margin used when template-based samples fall outside (0, 1).
const CLIP: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum EvenSpacing {
    /// `(2j - 1) / (2m)`: each fix sits at the middle of its slot.
    #[default]
    Midpoint,
    /// `j / (m + 1)`: a fix every `1440 / (m + 1)` minutes.
    Interval,
}

/// Pool of template days whose (typically skewed) timestamp patterns are
/// reused to generate realistic designs.
#[derive(Clone, Debug, PartialEq)]
pub struct TimestampTemplate {
    days: Vec<Vec<f64>>,
}

impl TimestampTemplate {
    /// Each template day is sorted and deduplicated; days must be nonempty with times in (0, 1).
    pub fn new(days: Vec<Vec<f64>>) -> Result<Self> {
        if days.is_empty() {
            return Err(invalid_arg("timestamp template has no days"));
        }
        let mut clean = Vec::with_capacity(days.len());
        for mut d in days {
            if d.is_empty() {
                return Err(invalid_arg("timestamp template contains an empty day"));
            }
            if let Some(t) = d.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
                return Err(invalid_arg(format!(
                    "template timestamp {t} outside (0, 1)"
                )));
            }
            d.sort_by(f64::total_cmp);
            d.dedup();
            clean.push(d);
        }
        Ok(TimestampTemplate { days: clean })
    }

    pub fn days(&self) -> &[Vec<f64>] {
        &self.days
    }

    /// Synthetic stand-in for a real subject's recording habits: most fixes
    /// fall in an afternoon burst or an evening burst, with sparse coverage of
    /// the rest of the day.
    pub fn synthetic_skewed(seed: u64) -> Self {
        let mut rng = crate::rng::stream(seed, &[0x7e_3a_11]);
        let days = (0..40)
            .map(|_| {
                let count = rng.random_range(150..=450);
                let mut d: Vec<f64> = (0..count)
                    .map(|_| loop {
                        let u: f64 = rng.random();
                        let t = if u < 0.55 {
                            14.0 / 24.0 + (1.5 / 24.0) * rng.sample::<f64, _>(StandardNormal)
                        } else if u < 0.85 {
                            20.5 / 24.0 + (1.0 / 24.0) * rng.sample::<f64, _>(StandardNormal)
                        } else {
                            rng.random()
                        };
                        if t > 0.0 && t < 1.0 {
                            break t;
                        }
                    })
                    .collect();
                d.sort_by(f64::total_cmp);
                d.dedup();
                d
            })
            .collect();
        TimestampTemplate { days }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TimestampMode {
    Even(EvenSpacing),
    Realistic(TimestampTemplate),
}

impl TimestampMode {
    pub fn label(&self) -> &'static str {
        match self {
            TimestampMode::Even(_) => "even",
            TimestampMode::Realistic(_) => "realistic",
        }
    }
}

pub fn even_timestamps(m: usize, spacing: EvenSpacing) -> Vec<f64> {
    let mf = m as f64;
    (1..=m)
        .map(|j| match spacing {
            EvenSpacing::Midpoint => (2.0 * j as f64 - 1.0) / (2.0 * mf),
            EvenSpacing::Interval => j as f64 / (mf + 1.0),
        })
        .collect()
}

/// Silverman's rule-of-thumb bandwidth for a 1-D Gaussian KDE.
pub fn silverman_bandwidth(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return 0.0;
    }
    let mean = xs.iter().sum::<f64>() / n;
    let sd = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let q = |p: f64| {
        let pos = p * (n - 1.0);
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    };
    let iqr = q(0.75) - q(0.25);
    let spread = if iqr > 0.0 { sd.min(iqr / 1.34) } else { sd };
    0.9 * spread * n.powf(-0.2)
}

/// Generate `m` sorted, strictly increasing timestamps in (0, 1).
///
/// Realistic mode picks a template day at random, subsamples it uniformly
/// without replacement when it has more than `m` times, and otherwise adds
/// draws from a Gaussian KDE of that day's times (Silverman bandwidth,
/// clipped into the unit interval).
pub fn generate_timestamps<R: Rng + ?Sized>(
    mode: &TimestampMode,
    m: usize,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if m < 2 {
        return Err(invalid_arg(format!(
            "need at least 2 timestamps per day, got {m}"
        )));
    }
    let template = match mode {
        TimestampMode::Even(spacing) => return Ok(even_timestamps(m, *spacing)),
        TimestampMode::Realistic(t) => t,
    };
    if template.days.is_empty() {
        return Err(Error::InvalidArgument("empty timestamp template".into()));
    }
    let day = &template.days[rng.random_range(0..template.days.len())];
    if day.len() >= m {
        let mut picked: Vec<f64> = index::sample(rng, day.len(), m)
            .into_iter()
            .map(|k| day[k])
            .collect();
        picked.sort_by(f64::total_cmp);
        return Ok(picked);
    }

    let bw = silverman_bandwidth(day).max(1e-4);
    let mut out = day.clone();
    while out.len() < m {
        let need = m - out.len();
        for _ in 0..need {
            let base = day[rng.random_range(0..day.len())];
            let z: f64 = rng.sample(StandardNormal);
            out.push((base + bw * z).clamp(CLIP, 1.0 - CLIP));
        }
        out.sort_by(f64::total_cmp);
        out.dedup();
    }
    Ok(out)
}
