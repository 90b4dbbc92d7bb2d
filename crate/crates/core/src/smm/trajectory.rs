//! Latent day trajectories: holds at anchors and constant-speed road traversals.

use std::sync::Arc;

use crate::geom::Point;

use super::world::Polyline;

#[derive(Clone, Debug, PartialEq)]
pub enum Segment {
    Hold {
        at: Point,
        start: f64,
        end: f64,
    },
    /// Constant-speed traversal of `path` (backwards when `reversed`).
    Traverse {
        path: Arc<Polyline>,
        reversed: bool,
        start: f64,
        end: f64,
    },
}

impl Segment {
    pub fn start(&self) -> f64 {
        match self {
            Segment::Hold { start, .. } | Segment::Traverse { start, .. } => *start,
        }
    }

    pub fn end(&self) -> f64 {
        match self {
            Segment::Hold { end, .. } | Segment::Traverse { end, .. } => *end,
        }
    }

    fn eval(&self, t: f64) -> Point {
        match self {
            Segment::Hold { at, .. } => *at,
            Segment::Traverse {
                path,
                reversed,
                start,
                end,
            } => {
                let span = end - start;
                let u = if span > 0.0 {
                    ((t - start) / span).clamp(0.0, 1.0)
                } else {
                    1.0
                };
                path.point_at_fraction(if *reversed { 1.0 - u } else { u })
            }
        }
    }
}

/// A continuous path over the unit day `[0, 1]`, built from segments that
/// tile the day without gaps.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    segments: Vec<Segment>,
}

impl Trajectory {
    /// Segments must be ordered, start at 0, end at 1 and share boundaries.
    pub fn new(segments: Vec<Segment>) -> Self {
        debug_assert!(!segments.is_empty());
        debug_assert_eq!(segments[0].start(), 0.0);
        debug_assert_eq!(segments.last().unwrap().end(), 1.0);
        debug_assert!(segments.windows(2).all(|w| w[0].end() == w[1].start()));
        Trajectory { segments }
    }

    /// Stay at one point all day.
    pub fn stationary(at: Point) -> Self {
        Trajectory {
            segments: vec![Segment::Hold {
                at,
                start: 0.0,
                end: 1.0,
            }],
        }
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    /// Location at time `t` (clamped into `[0, 1]`).
    pub fn eval(&self, t: f64) -> Point {
        let t = t.clamp(0.0, 1.0);
        let k = self.segments.partition_point(|s| s.start() <= t).max(1) - 1;
        self.segments[k].eval(t)
    }

    /// Location at `t` evaluated from the segment that starts at `t` (right limit).
    pub fn eval_right(&self, t: f64) -> Point {
        self.eval(t)
    }

    /// Location at `t` evaluated from the segment that ends at `t` (left limit).
    pub fn eval_left(&self, t: f64) -> Point {
        let t = t.clamp(0.0, 1.0);
        let k = self
            .segments
            .partition_point(|s| s.end() < t)
            .min(self.segments.len() - 1);
        self.segments[k].eval(t)
    }
}
