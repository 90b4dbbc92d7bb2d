//! Observed GPS data: days of timestamped planar fixes.

use crate::error::{Error, Result};
use crate::geom::{BoundingBox, Point};

/// One day of fixes. Times are fractions of the day, strictly increasing and
/// inside the open interval (0, 1).
#[derive(Clone, Debug, PartialEq)]
pub struct Day {
    id: i64,
    times: Vec<f64>,
    points: Vec<Point>,
    /// Generating pattern index, known only for simulated days.
    pattern: Option<usize>,
}

impl Day {
    pub fn new(id: i64, times: Vec<f64>, points: Vec<Point>) -> Result<Self> {
        if times.len() != points.len() {
            return Err(Error::InvalidData(format!(
                "day {id}: {} timestamps but {} points",
                times.len(),
                points.len()
            )));
        }
        if times.len() < 2 {
            return Err(Error::InvalidData(format!(
                "day {id}: needs at least 2 fixes, got {}",
                times.len()
            )));
        }
        for (j, &t) in times.iter().enumerate() {
            if !(t > 0.0 && t < 1.0) {
                return Err(Error::InvalidData(format!(
                    "day {id}: timestamp {t} outside (0, 1)"
                )));
            }
            if j > 0 && t <= times[j - 1] {
                return Err(Error::InvalidData(format!(
                    "day {id}: timestamps not strictly increasing at index {j}"
                )));
            }
        }
        if let Some(p) = points.iter().find(|p| !p.is_finite()) {
            return Err(Error::InvalidData(format!(
                "day {id}: non-finite coordinate {p:?}"
            )));
        }
        Ok(Day {
            id,
            times,
            points,
            pattern: None,
        })
    }

    pub fn with_pattern(mut self, pattern: usize) -> Self {
        self.pattern = Some(pattern);
        self
    }

    pub fn id(&self) -> i64 {
        self.id
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn pattern(&self) -> Option<usize> {
        self.pattern
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

/// A collection of days from a single subject.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GpsDataset {
    days: Vec<Day>,
}

impl GpsDataset {
    pub fn new(days: Vec<Day>) -> Result<Self> {
        if days.is_empty() {
            return Err(Error::InvalidData("dataset has no days".into()));
        }
        Ok(GpsDataset { days })
    }

    pub fn days(&self) -> &[Day] {
        &self.days
    }

    pub fn n_days(&self) -> usize {
        self.days.len()
    }

    /// Total number of fixes across days.
    pub fn n_obs(&self) -> usize {
        self.days.iter().map(Day::len).sum()
    }

    /// Sub-dataset with the selected days, in the given order.
    pub fn subset(&self, indices: &[usize]) -> Result<Self> {
        let days = indices
            .iter()
            .map(|&i| {
                self.days
                    .get(i)
                    .cloned()
                    .ok_or_else(|| Error::InvalidArgument(format!("day index {i} out of range")))
            })
            .collect::<Result<Vec<_>>>()?;
        GpsDataset::new(days)
    }

    /// Sub-dataset of days whose index satisfies `keep`.
    pub fn filter(&self, mut keep: impl FnMut(usize, &Day) -> bool) -> Result<Self> {
        let idx: Vec<usize> = (0..self.days.len())
            .filter(|&i| keep(i, &self.days[i]))
            .collect();
        self.subset(&idx)
    }

    pub fn points(&self) -> impl Iterator<Item = Point> + '_ {
        self.days.iter().flat_map(|d| d.points.iter().copied())
    }

    pub fn bounding_box(&self) -> BoundingBox {
        BoundingBox::of(self.points()).expect("dataset is never empty")
    }
}
