//! Worlds (anchors + roads) and probabilistic day schedules.

use std::collections::HashMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{BoundingBox, Point};

const ENDPOINT_TOL: f64 = 1e-9;
const PROB_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct Anchor {
    pub name: String,
    pub pos: Point,
}

/// A polyline with cached cumulative arc lengths.
#[derive(Clone, Debug, PartialEq)]
pub struct Polyline {
    vertices: Vec<Point>,
    cum: Vec<f64>,
}

impl Polyline {
    pub fn new(vertices: Vec<Point>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::InvalidWorld(
                "polyline needs at least 2 vertices".into(),
            ));
        }
        if vertices.iter().any(|p| !p.is_finite()) {
            return Err(Error::InvalidWorld(
                "polyline has a non-finite vertex".into(),
            ));
        }
        let mut cum = Vec::with_capacity(vertices.len());
        cum.push(0.0);
        for w in vertices.windows(2) {
            let last = *cum.last().unwrap();
            cum.push(last + w[0].dist(w[1]));
        }
        if !(*cum.last().unwrap() > 0.0) {
            return Err(Error::InvalidWorld("polyline has zero length".into()));
        }
        Ok(Polyline { vertices, cum })
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn length(&self) -> f64 {
        *self.cum.last().unwrap()
    }

    pub fn start(&self) -> Point {
        self.vertices[0]
    }

    pub fn end(&self) -> Point {
        *self.vertices.last().unwrap()
    }

    pub fn reversed(&self) -> Polyline {
        let mut v = self.vertices.clone();
        v.reverse();
        Polyline::new(v).expect("reversal preserves validity")
    }

    /// Point at arc length `s`, clamped to the polyline.
    pub fn point_at(&self, s: f64) -> Point {
        let s = s.clamp(0.0, self.length());
        // first k with cum[k] >= s
        let k = self
            .cum
            .partition_point(|&c| c < s)
            .clamp(1, self.cum.len() - 1);
        let seg = self.cum[k] - self.cum[k - 1];
        if seg == 0.0 {
            return self.vertices[k];
        }
        let frac = (s - self.cum[k - 1]) / seg;
        self.vertices[k - 1].lerp(self.vertices[k], frac)
    }

    /// Point at fraction `u ∈ [0, 1]` of the total length.
    pub fn point_at_fraction(&self, u: f64) -> Point {
        if u >= 1.0 {
            return self.end();
        }
        self.point_at(u * self.length())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Road {
    pub name: String,
    pub from: usize,
    pub to: usize,
    pub path: Arc<Polyline>,
}

/// Named anchor locations and the roads between them.
#[derive(Clone, Debug, PartialEq)]
pub struct World {
    anchors: Vec<Anchor>,
    roads: Vec<Road>,
}

impl World {
    pub fn new(anchors: Vec<Anchor>, roads: Vec<Road>) -> Result<Self> {
        let mut seen = HashMap::new();
        for (k, a) in anchors.iter().enumerate() {
            if !a.pos.is_finite() {
                return Err(Error::InvalidWorld(format!(
                    "anchor {} has non-finite position",
                    a.name
                )));
            }
            if seen.insert(a.name.as_str(), k).is_some() {
                return Err(Error::InvalidWorld(format!(
                    "duplicate anchor name {}",
                    a.name
                )));
            }
        }
        let mut seen_roads = HashMap::new();
        for r in &roads {
            if seen_roads.insert(r.name.as_str(), ()).is_some() {
                return Err(Error::InvalidWorld(format!(
                    "duplicate road name {}",
                    r.name
                )));
            }
            let (Some(from), Some(to)) = (anchors.get(r.from), anchors.get(r.to)) else {
                return Err(Error::InvalidWorld(format!(
                    "road {} references a missing anchor",
                    r.name
                )));
            };
            if r.path.start().dist(from.pos) > ENDPOINT_TOL
                || r.path.end().dist(to.pos) > ENDPOINT_TOL
            {
                return Err(Error::InvalidWorld(format!(
                    "road {} does not start at {} and end at {}",
                    r.name, from.name, to.name
                )));
            }
        }
        Ok(World { anchors, roads })
    }

    pub fn anchors(&self) -> &[Anchor] {
        &self.anchors
    }

    pub fn roads(&self) -> &[Road] {
        &self.roads
    }

    pub fn anchor_index(&self, name: &str) -> Option<usize> {
        self.anchors.iter().position(|a| a.name == name)
    }

    pub fn road_index(&self, name: &str) -> Option<usize> {
        self.roads.iter().position(|r| r.name == name)
    }

    pub fn anchor(&self, name: &str) -> Option<&Anchor> {
        self.anchors.iter().find(|a| a.name == name)
    }

    /// Bounding box of anchors and every road vertex.
    pub fn bounding_box(&self) -> BoundingBox {
        let pts = self.anchors.iter().map(|a| a.pos).chain(
            self.roads
                .iter()
                .flat_map(|r| r.path.vertices().iter().copied()),
        );
        BoundingBox::of(pts).unwrap_or(BoundingBox {
            min: Point::default(),
            max: Point::default(),
        })
    }
}

/// Truncated-normal duration law, in hours: `N(mu, eta²)` restricted to `(mu - q, mu + q)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DurationParams {
    pub mu_h: f64,
    pub eta_h: f64,
    pub q_h: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub enum Step {
    /// Stay at an anchor. The final stay has no duration law and absorbs the rest of the day.
    Stay {
        anchor: usize,
        duration: Option<DurationParams>,
    },
    /// Move along a road, reversed when `reversed` is set.
    Move {
        road: usize,
        reversed: bool,
        duration: DurationParams,
    },
}

impl Step {
    pub fn duration(&self) -> Option<DurationParams> {
        match self {
            Step::Stay { duration, .. } => *duration,
            Step::Move { duration, .. } => Some(*duration),
        }
    }
}

/// One possible day schedule (an action vector) and its probability.
#[derive(Clone, Debug, PartialEq)]
pub struct ActionPattern {
    pub name: String,
    pub probability: f64,
    pub steps: Vec<Step>,
}

impl ActionPattern {
    fn validate(&self, world: &World) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidPattern(format!("{}: {msg}", self.name)));
        if !(self.probability >= 0.0 && self.probability.is_finite()) {
            return bad(format!(
                "probability {} is not a nonnegative number",
                self.probability
            ));
        }
        if self.steps.len().is_multiple_of(2) {
            return bad("steps must alternate stay/move and start and end with a stay".into());
        }
        let mut total_mu = 0.0;
        for (k, step) in self.steps.iter().enumerate() {
            let last = k + 1 == self.steps.len();
            match (k % 2, step) {
                (0, Step::Stay { duration, .. }) => {
                    if last && duration.is_some() {
                        return bad(
                            "the final stay absorbs the remaining time and takes no duration"
                                .into(),
                        );
                    }
                    if !last && duration.is_none() {
                        return bad(format!("stay at step {k} needs a duration"));
                    }
                }
                (1, Step::Move { road, reversed, .. }) => {
                    let r = &world.roads()[*road];
                    let (from, to) = if *reversed {
                        (r.to, r.from)
                    } else {
                        (r.from, r.to)
                    };
                    let prev = self.stay_anchor(k - 1);
                    let next = self.stay_anchor(k + 1);
                    if prev != Some(from) || next != Some(to) {
                        return bad(format!(
                            "road {} does not join the stays around step {k}",
                            r.name
                        ));
                    }
                }
                _ => return bad(format!("step {k} breaks the stay/move alternation")),
            }
            if let Some(d) = step.duration() {
                if !(d.q_h >= 0.0 && d.eta_h > 0.0 && d.mu_h.is_finite() && d.q_h.is_finite()) {
                    return bad(format!("step {k} needs eta > 0 and q >= 0"));
                }
                if d.mu_h - d.q_h < 0.0 {
                    return bad(format!("step {k} allows negative durations (mu - q < 0)"));
                }
                total_mu += d.mu_h;
            }
        }
        if total_mu >= 24.0 {
            return bad(format!(
                "mean durations sum to {total_mu} h, leaving nothing for the final stay"
            ));
        }
        Ok(())
    }

    fn stay_anchor(&self, k: usize) -> Option<usize> {
        match self.steps.get(k) {
            Some(Step::Stay { anchor, .. }) => Some(*anchor),
            _ => None,
        }
    }

    /// Expected hours spent staying at `anchor` over a day.
    pub fn expected_stay_hours(&self, anchor: usize) -> f64 {
        let fixed: f64 = self
            .steps
            .iter()
            .filter_map(Step::duration)
            .map(|d| d.mu_h)
            .sum();
        self.steps
            .iter()
            .filter_map(|s| match s {
                Step::Stay {
                    anchor: a,
                    duration,
                } if *a == anchor => {
                    // symmetric truncation keeps the mean at mu
                    Some(duration.map_or(24.0 - fixed, |d| d.mu_h))
                }
                _ => None,
            })
            .sum()
    }

    pub fn visits(&self, anchor: usize) -> bool {
        self.expected_stay_hours(anchor) > 0.0
    }
}

/// A world together with its pattern distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct MovementModel {
    world: World,
    patterns: Vec<ActionPattern>,
}

impl MovementModel {
    pub fn new(world: World, patterns: Vec<ActionPattern>) -> Result<Self> {
        if patterns.is_empty() {
            return Err(Error::InvalidPattern("pattern set is empty".into()));
        }
        for p in &patterns {
            p.validate(&world)?;
        }
        let total: f64 = patterns.iter().map(|p| p.probability).sum();
        if (total - 1.0).abs() > PROB_TOL {
            return Err(Error::InvalidPattern(format!(
                "pattern probabilities sum to {total}, not 1"
            )));
        }
        Ok(MovementModel { world, patterns })
    }

    pub fn world(&self) -> &World {
        &self.world
    }

    pub fn patterns(&self) -> &[ActionPattern] {
        &self.patterns
    }

    pub fn pattern_index(&self, name: &str) -> Option<usize> {
        self.patterns.iter().position(|p| p.name == name)
    }

    /// `P(S(U) = anchor)`: expected fraction of the day spent staying there.
    pub fn stay_fraction(&self, anchor: usize) -> f64 {
        self.patterns
            .iter()
            .map(|p| p.probability * p.expected_stay_hours(anchor) / 24.0)
            .sum()
    }

    /// Anchors with a positive expected stay under the given patterns.
    pub fn visited_anchors(&self, patterns: &[usize]) -> Vec<usize> {
        (0..self.world.anchors().len())
            .filter(|&a| patterns.iter().any(|&p| self.patterns[p].visits(a)))
            .collect()
    }

    /// Restrict to a subset of patterns, renormalizing their probabilities.
    pub fn restricted(&self, patterns: &[usize]) -> Result<MovementModel> {
        let total: f64 = patterns.iter().map(|&p| self.patterns[p].probability).sum();
        if !(total > 0.0) {
            return Err(Error::InvalidPattern(
                "selected patterns have zero probability".into(),
            ));
        }
        let ps = patterns
            .iter()
            .map(|&p| {
                let mut q = self.patterns[p].clone();
                q.probability /= total;
                q
            })
            .collect();
        MovementModel::new(self.world.clone(), ps)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ModelDoc = serde_json::from_str(text)?;
        doc.into_model()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDoc::from_model(self))?)
    }

    /// The bundled six-anchor commuter world with five day patterns.
    pub fn default_world() -> Self {
        Self::from_json(DEFAULT_WORLD_JSON).expect("bundled world is valid")
    }
}

pub const DEFAULT_WORLD_JSON: &str = include_str!("../../data/default_world.json");

// JSON document shapes.

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    anchors: Vec<AnchorDoc>,
    roads: Vec<RoadDoc>,
    patterns: Vec<PatternDoc>,
}

#[derive(Serialize, Deserialize)]
struct AnchorDoc {
    name: String,
    x: f64,
    y: f64,
}

#[derive(Serialize, Deserialize)]
struct RoadDoc {
    name: String,
    from: String,
    to: String,
    vertices: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct PatternDoc {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    prob: Probability,
    steps: Vec<StepDoc>,
}

/// A probability written either as a number or as a `"num/den"` fraction.
#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Probability {
    Number(f64),
    Fraction(String),
}

impl Probability {
    fn value(&self) -> Result<f64> {
        match self {
            Probability::Number(p) => Ok(*p),
            Probability::Fraction(s) => {
                let parse = |t: &str| t.trim().parse::<f64>().ok();
                let v = match s.split_once('/') {
                    Some((a, b)) => parse(a).zip(parse(b)).map(|(a, b)| a / b),
                    None => parse(s),
                };
                v.filter(|v| v.is_finite())
                    .ok_or_else(|| Error::InvalidPattern(format!("cannot read probability {s:?}")))
            }
        }
    }
}

#[derive(Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
enum StepKind {
    Stay,
    Move,
}

#[derive(Serialize, Deserialize)]
struct StepDoc {
    #[serde(rename = "type")]
    kind: StepKind,
    #[serde(rename = "ref")]
    reference: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    mu_h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    eta_h: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    q_h: Option<f64>,
}

impl ModelDoc {
    fn into_model(self) -> Result<MovementModel> {
        let anchors: Vec<Anchor> = self
            .anchors
            .into_iter()
            .map(|a| Anchor {
                name: a.name,
                pos: Point::new(a.x, a.y),
            })
            .collect();
        let find_anchor = |name: &str| {
            anchors
                .iter()
                .position(|a| a.name == name)
                .ok_or_else(|| Error::InvalidWorld(format!("unknown anchor {name}")))
        };
        let mut roads = Vec::with_capacity(self.roads.len());
        for r in self.roads {
            let path = Polyline::new(r.vertices.iter().map(|v| Point::new(v[0], v[1])).collect())
                .map_err(|e| Error::InvalidWorld(format!("road {}: {e}", r.name)))?;
            roads.push(Road {
                from: find_anchor(&r.from)?,
                to: find_anchor(&r.to)?,
                name: r.name,
                path: Arc::new(path),
            });
        }
        let world = World::new(anchors, roads)?;

        let mut patterns = Vec::with_capacity(self.patterns.len());
        for (k, p) in self.patterns.into_iter().enumerate() {
            let name = p.name.unwrap_or_else(|| format!("pattern{}", k + 1));
            let n_steps = p.steps.len();
            let mut steps = Vec::with_capacity(n_steps);
            for (s, st) in p.steps.into_iter().enumerate() {
                let duration = match (st.mu_h, st.eta_h, st.q_h) {
                    (None, None, None) => None,
                    (Some(mu_h), Some(eta_h), Some(q_h)) => {
                        Some(DurationParams { mu_h, eta_h, q_h })
                    }
                    _ => {
                        return Err(Error::InvalidPattern(format!(
                            "{name}: step {s} must give all of mu_h, eta_h, q_h or none"
                        )))
                    }
                };
                steps.push(match st.kind {
                    StepKind::Stay => Step::Stay {
                        anchor: world.anchor_index(&st.reference).ok_or_else(|| {
                            Error::InvalidPattern(format!(
                                "{name}: unknown anchor {}",
                                st.reference
                            ))
                        })?,
                        duration,
                    },
                    StepKind::Move => {
                        let road = world.road_index(&st.reference).ok_or_else(|| {
                            Error::InvalidPattern(format!("{name}: unknown road {}", st.reference))
                        })?;
                        let duration = duration.ok_or_else(|| {
                            Error::InvalidPattern(format!(
                                "{name}: move at step {s} needs a duration"
                            ))
                        })?;
                        // direction is decided by the surrounding stays
                        Step::Move {
                            road,
                            reversed: false,
                            duration,
                        }
                    }
                });
            }
            orient_moves(&world, &mut steps);
            patterns.push(ActionPattern {
                name,
                probability: p.prob.value()?,
                steps,
            });
        }
        MovementModel::new(world, patterns)
    }

    fn from_model(m: &MovementModel) -> Self {
        let w = &m.world;
        ModelDoc {
            anchors: w
                .anchors
                .iter()
                .map(|a| AnchorDoc {
                    name: a.name.clone(),
                    x: a.pos.x,
                    y: a.pos.y,
                })
                .collect(),
            roads: w
                .roads
                .iter()
                .map(|r| RoadDoc {
                    name: r.name.clone(),
                    from: w.anchors[r.from].name.clone(),
                    to: w.anchors[r.to].name.clone(),
                    vertices: r.path.vertices().iter().map(|p| [p.x, p.y]).collect(),
                })
                .collect(),
            patterns: m
                .patterns
                .iter()
                .map(|p| PatternDoc {
                    name: Some(p.name.clone()),
                    prob: Probability::Number(p.probability),
                    steps: p
                        .steps
                        .iter()
                        .map(|s| {
                            let (kind, reference) = match s {
                                Step::Stay { anchor, .. } => {
                                    (StepKind::Stay, w.anchors[*anchor].name.clone())
                                }
                                Step::Move { road, .. } => {
                                    (StepKind::Move, w.roads[*road].name.clone())
                                }
                            };
                            let d = s.duration();
                            StepDoc {
                                kind,
                                reference,
                                mu_h: d.map(|d| d.mu_h),
                                eta_h: d.map(|d| d.eta_h),
                                q_h: d.map(|d| d.q_h),
                            }
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

/// Traverse a road backwards when it is declared in the opposite direction
/// of the stays around it.
fn orient_moves(world: &World, steps: &mut [Step]) {
    for k in (1..steps.len().saturating_sub(1)).step_by(2) {
        let prev = match steps[k - 1] {
            Step::Stay { anchor, .. } => anchor,
            _ => continue,
        };
        let next = match steps[k + 1] {
            Step::Stay { anchor, .. } => anchor,
            _ => continue,
        };
        if let Step::Move { road, reversed, .. } = &mut steps[k] {
            let r = &world.roads()[*road];
            *reversed = !(r.from == prev && r.to == next) && r.from == next && r.to == prev;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polyline_arc_length_interpolation() {
        let p = Polyline::new(vec![
            Point::new(0.0, 0.0),
            Point::new(3.0, 0.0),
            Point::new(3.0, 4.0),
        ])
        .unwrap();
        assert_eq!(p.length(), 7.0);
        assert_eq!(p.point_at(1.5), Point::new(1.5, 0.0));
        assert_eq!(p.point_at(5.0), Point::new(3.0, 2.0));
        assert_eq!(p.point_at(99.0), Point::new(3.0, 4.0));
        assert_eq!(p.point_at_fraction(0.0), Point::new(0.0, 0.0));
        assert!(Polyline::new(vec![Point::new(1.0, 1.0), Point::new(1.0, 1.0)]).is_err());
        assert!(Polyline::new(vec![Point::new(1.0, 1.0)]).is_err());
    }

    #[test]
    fn default_world_loads() {
        let m = MovementModel::default_world();
        assert_eq!(m.world().anchors().len(), 6);
        assert_eq!(m.patterns().len(), 5);
        let total: f64 = m.patterns().iter().map(|p| p.probability).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let probs: Vec<f64> = m.patterns().iter().map(|p| p.probability * 28.0).collect();
        for (got, want) in probs.iter().zip([15.0, 5.0, 4.0, 1.0, 3.0]) {
            assert!((got - want).abs() < 1e-12);
        }
        // park is only passed through
        let park = m.world().anchor_index("park").unwrap();
        assert_eq!(m.stay_fraction(park), 0.0);
        assert_eq!(m.visited_anchors(&[0, 1, 2, 3, 4]).len(), 5);
    }

    #[test]
    fn json_round_trip() {
        let m = MovementModel::default_world();
        let again = MovementModel::from_json(&m.to_json().unwrap()).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn home_stay_fraction_matches_table() {
        let m = MovementModel::default_world();
        let home = m.world().anchor_index("home").unwrap();
        // pattern hours at home: 13.9, 12.35, 20, 16.7, 24
        let want = (15.0 * 13.9 + 5.0 * 12.35 + 4.0 * 20.0 + 16.7 + 3.0 * 24.0) / 28.0 / 24.0;
        assert!((m.stay_fraction(home) - want).abs() < 1e-12);
    }

    fn tiny(extra: &str) -> String {
        format!(
            r#"{{"anchors":[{{"name":"a","x":0,"y":0}},{{"name":"b","x":1,"y":0}}],
               "roads":[{{"name":"ab","from":"a","to":"b","vertices":[[0,0],[1,0]]}}],
               "patterns":[{extra}]}}"#
        )
    }

    #[test]
    fn rejects_bad_patterns() {
        // ends with a move
        let bad = tiny(
            r#"{"prob":1,"steps":[{"type":"stay","ref":"a","mu_h":1,"eta_h":0.1,"q_h":0.1},{"type":"move","ref":"ab","mu_h":1,"eta_h":0.1,"q_h":0.1}]}"#,
        );
        assert!(MovementModel::from_json(&bad).is_err());
        // road does not join the stays
        let bad = tiny(
            r#"{"prob":1,"steps":[{"type":"stay","ref":"a","mu_h":1,"eta_h":0.1,"q_h":0.1},{"type":"move","ref":"ab","mu_h":1,"eta_h":0.1,"q_h":0.1},{"type":"stay","ref":"a"}]}"#,
        );
        assert!(MovementModel::from_json(&bad).is_err());
        // probabilities do not sum to one
        let bad = tiny(r#"{"prob":0.5,"steps":[{"type":"stay","ref":"a"}]}"#);
        assert!(MovementModel::from_json(&bad).is_err());
        // mean durations leave no time
        let bad = tiny(
            r#"{"prob":1,"steps":[{"type":"stay","ref":"a","mu_h":20,"eta_h":0.1,"q_h":0.1},{"type":"move","ref":"ab","mu_h":4,"eta_h":0.1,"q_h":0.1},{"type":"stay","ref":"b"}]}"#,
        );
        assert!(MovementModel::from_json(&bad).is_err());
        let ok = tiny(
            r#"{"prob":"1/1","steps":[{"type":"stay","ref":"b","mu_h":2,"eta_h":0.1,"q_h":0.1},{"type":"move","ref":"ab","mu_h":1,"eta_h":0.1,"q_h":0.1},{"type":"stay","ref":"a"}]}"#,
        );
        let m = MovementModel::from_json(&ok).unwrap();
        assert!(matches!(
            m.patterns()[0].steps[1],
            Step::Move { reversed: true, .. }
        ));
    }

    #[test]
    fn rejects_bad_worlds() {
        let dup = r#"{"anchors":[{"name":"a","x":0,"y":0},{"name":"a","x":1,"y":0}],"roads":[],"patterns":[]}"#;
        assert!(matches!(
            MovementModel::from_json(dup),
            Err(Error::InvalidWorld(_))
        ));
        let off = r#"{"anchors":[{"name":"a","x":0,"y":0},{"name":"b","x":1,"y":0}],
            "roads":[{"name":"ab","from":"a","to":"b","vertices":[[0,0],[1,0.5]]}],"patterns":[]}"#;
        assert!(matches!(
            MovementModel::from_json(off),
            Err(Error::InvalidWorld(_))
        ));
    }
}
