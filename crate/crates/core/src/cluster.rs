//! Day clustering by log-density distance and per-cluster dynamics.

use rayon::prelude::*;
use serde::Serialize;

use crate::data::GpsDataset;
use crate::error::{invalid_arg, Error, Result};
use crate::geom::Point;
use crate::grid::{DensityField, GridSpec};
use crate::kde::{self, Bandwidths, DayWeights, TimeGrid, WeightedKde};

/// Per-day integrated conditional densities `f̂_{c,i}`, each renormalized to
/// unit grid mass so that the distance compares shapes only.
///
/// Weights `W̃_ij` come from the pooled time-kernel denominator over all days.
pub fn per_day_densities(
    data: &GpsDataset,
    bw: Bandwidths,
    grid: &GridSpec,
    times: TimeGrid,
) -> Result<Vec<DensityField>> {
    let w = kde::integrated_conditional_weights(data, bw.temporal, times)?;
    per_day_fields(data, &w, bw.spatial, grid)
}

/// Renormalized per-day weighted KDEs for arbitrary weights.
pub fn per_day_fields(
    data: &GpsDataset,
    weights: &DayWeights,
    h: f64,
    grid: &GridSpec,
) -> Result<Vec<DensityField>> {
    weights.check_shape(data)?;
    data.days()
        .par_iter()
        .zip(weights.per_day())
        .map(|(day, w)| {
            let kde = WeightedKde::new(day.points().iter().copied().zip(w.iter().copied()), h)?;
            let f = kde.eval_grid(grid);
            if f.integral() <= 0.0 {
                return Err(Error::InvalidData(format!(
                    "day {} has no mass on the grid",
                    day.id()
                )));
            }
            Ok(f.normalized())
        })
        .collect()
}

/// `∫ (log(f_a + ξ) - log(f_b + ξ))² dx` by cell quadrature.
pub fn log_density_distance(fa: &DensityField, fb: &DensityField, xi: f64) -> Result<f64> {
    if !(xi > 0.0 && xi.is_finite()) {
        return Err(invalid_arg(format!(
            "stabilizer xi must be positive, got {xi}"
        )));
    }
    fa.check_same_grid(fb)?;
    let s: f64 = fa
        .values()
        .iter()
        .zip(fb.values())
        .map(|(&a, &b)| {
            let d = (a + xi).ln() - (b + xi).ln();
            d * d
        })
        .sum();
    Ok(s * fa.grid().cell_area())
}

/// Symmetric matrix of pairwise day distances.
#[derive(Clone, Debug, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    d: Vec<f64>,
}

impl DistanceMatrix {
    /// Validates symmetry (within 1e-9), a zero diagonal and nonnegativity.
    pub fn new(n: usize, d: Vec<f64>) -> Result<Self> {
        if d.len() != n * n {
            return Err(invalid_arg(format!(
                "distance matrix needs {} entries, got {}",
                n * n,
                d.len()
            )));
        }
        for a in 0..n {
            if d[a * n + a] != 0.0 {
                return Err(Error::InvalidData(format!("nonzero diagonal at {a}")));
            }
            for b in 0..a {
                let (x, y) = (d[a * n + b], d[b * n + a]);
                if !(x >= 0.0 && x.is_finite()) || (x - y).abs() > 1e-9 {
                    return Err(Error::InvalidData(format!(
                        "bad distance between {a} and {b}"
                    )));
                }
            }
        }
        Ok(DistanceMatrix { n, d })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, a: usize, b: usize) -> f64 {
        self.d[a * self.n + b]
    }

    pub fn values(&self) -> &[f64] {
        &self.d
    }
}

/// Pairwise log-density distances between per-day fields.
pub fn distance_matrix_of(fields: &[DensityField], xi: f64) -> Result<DistanceMatrix> {
    let n = fields.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|a| (a + 1..n).map(move |b| (a, b)))
        .collect();
    let ds: Vec<f64> = pairs
        .par_iter()
        .map(|&(a, b)| log_density_distance(&fields[a], &fields[b], xi))
        .collect::<Result<_>>()?;
    let mut d = vec![0.0; n * n];
    for (&(a, b), v) in pairs.iter().zip(ds) {
        d[a * n + b] = v;
        d[b * n + a] = v;
    }
    DistanceMatrix::new(n, d)
}

/// Distance matrix of the per-day densities of `data`.
pub fn distance_matrix(
    data: &GpsDataset,
    bw: Bandwidths,
    grid: &GridSpec,
    times: TimeGrid,
    xi: f64,
) -> Result<DistanceMatrix> {
    distance_matrix_of(&per_day_densities(data, bw, grid, times)?, xi)
}

/// One agglomeration step. Leaves are `0..n`; the cluster formed by merge
/// `k` has id `n + k`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Merge {
    pub a: usize,
    pub b: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dendrogram {
    n: usize,
    merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn n_leaves(&self) -> usize {
        self.n
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    fn labels_after(&self, n_merges: usize) -> ClusterLabels {
        let mut uf: Vec<usize> = (0..self.n + n_merges).collect();
        fn find(uf: &mut [usize], mut x: usize) -> usize {
            while uf[x] != x {
                uf[x] = uf[uf[x]];
                x = uf[x];
            }
            x
        }
        for (k, m) in self.merges[..n_merges].iter().enumerate() {
            let id = self.n + k;
            let ra = find(&mut uf, m.a);
            let rb = find(&mut uf, m.b);
            uf[ra] = id;
            uf[rb] = id;
        }
        let roots: Vec<usize> = (0..self.n).map(|i| find(&mut uf, i)).collect();
        ClusterLabels::from_keys(&roots)
    }

    /// Cut into exactly `k` clusters.
    pub fn cut_k(&self, k: usize) -> Result<ClusterLabels> {
        if k < 1 || k > self.n {
            return Err(invalid_arg(format!(
                "cluster count must lie in [1, {}], got {k}",
                self.n
            )));
        }
        Ok(self.labels_after(self.n - k))
    }

    /// Apply every merge with height at most `h`.
    pub fn cut_height(&self, h: f64) -> ClusterLabels {
        self.labels_after(self.merges.iter().take_while(|m| m.height <= h).count())
    }
}

/// Single-linkage clustering by Prim's minimum spanning tree.
///
/// Ties in merge height are resolved toward the pair of lowest cluster ids,
/// so the dendrogram is fully determined by the matrix.
pub fn single_linkage(d: &DistanceMatrix) -> Result<Dendrogram> {
    let n = d.len();
    if n < 2 {
        return Err(invalid_arg("single linkage needs at least two days"));
    }
    // MST edges (height, a, b) with a < b
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    in_tree[0] = true;
    for v in 1..n {
        best[v] = d.get(0, v);
    }
    let mut edges = Vec::with_capacity(n - 1);
    for _ in 1..n {
        let mut pick: Option<usize> = None;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            pick = match pick {
                None => Some(v),
                Some(u) if best[v] < best[u] => Some(v),
                Some(u) => Some(u),
            };
        }
        let v = pick.expect("a vertex remains");
        in_tree[v] = true;
        edges.push((best[v], from[v].min(v), from[v].max(v)));
        for u in 0..n {
            if !in_tree[u] {
                let x = d.get(v, u);
                if x < best[u] || (x == best[u] && v < from[u]) {
                    best[u] = x;
                    from[u] = v;
                }
            }
        }
    }
    edges.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));

    // replay the MST edges as merges (Kruskal order)
    let mut cluster_of: Vec<usize> = (0..n).collect();
    let mut size = vec![1usize; 2 * n - 1];
    let mut parent: Vec<usize> = (0..2 * n - 1).collect();
    fn root(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut merges = Vec::with_capacity(n - 1);
    for (k, (h, a, b)) in edges.into_iter().enumerate() {
        let ca = root(&mut parent, cluster_of[a]);
        let cb = root(&mut parent, cluster_of[b]);
        let id = n + k;
        parent[ca] = id;
        parent[cb] = id;
        size[id] = size[ca] + size[cb];
        merges.push(Merge {
            a: ca.min(cb),
            b: ca.max(cb),
            height: h,
            size: size[id],
        });
        cluster_of[a] = id;
        cluster_of[b] = id;
    }
    Ok(Dendrogram { n, merges })
}

/// Cluster labels `1..=M`, numbered by first appearance in day order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ClusterLabels {
    labels: Vec<usize>,
    sizes: Vec<usize>,
}

impl ClusterLabels {
    fn from_keys<K: PartialEq + Copy>(keys: &[K]) -> Self {
        let mut seen: Vec<K> = Vec::new();
        let labels: Vec<usize> = keys
            .iter()
            .map(|k| match seen.iter().position(|s| s == k) {
                Some(p) => p + 1,
                None => {
                    seen.push(*k);
                    seen.len()
                }
            })
            .collect();
        let mut sizes = vec![0; seen.len()];
        for &l in &labels {
            sizes[l - 1] += 1;
        }
        ClusterLabels { labels, sizes }
    }

    /// Relabels arbitrary integer labels by first appearance.
    pub fn from_assignments(assign: &[usize]) -> Self {
        ClusterLabels::from_keys(assign)
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn n_clusters(&self) -> usize {
        self.sizes.len()
    }

    pub fn size(&self, g: usize) -> usize {
        self.sizes.get(g.wrapping_sub(1)).copied().unwrap_or(0)
    }

    /// Whether the day's cluster has only that day.
    pub fn is_singleton(&self, day: usize) -> bool {
        self.size(self.labels[day]) == 1
    }

    /// Day indices with label `g`.
    pub fn members(&self, g: usize) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, &l)| l == g)
            .map(|(i, _)| i)
            .collect()
    }

    /// Whether two labelings define the same partition.
    pub fn same_partition(&self, other: &ClusterLabels) -> bool {
        self.labels.len() == other.labels.len()
            && ClusterLabels::from_keys(&other.labels).labels == self.labels
    }
}

fn cluster_days(data: &GpsDataset, labels: &ClusterLabels, g: usize) -> Result<GpsDataset> {
    if labels.labels().len() != data.n_days() {
        return Err(invalid_arg("one label per day required"));
    }
    let members = labels.members(g);
    if members.is_empty() {
        return Err(Error::EmptyCluster(g));
    }
    data.subset(&members)
}

/// Conditional KDE restricted to the days of cluster `g`.
pub fn cluster_conditional_density(
    data: &GpsDataset,
    labels: &ClusterLabels,
    g: usize,
    bw: Bandwidths,
    grid: &GridSpec,
    t: f64,
) -> Result<DensityField> {
    kde::conditional_kde(&cluster_days(data, labels, g)?, bw, grid, t)
}

/// Kernel-regression center `μ̂_g(t)` of cluster `g`.
pub fn conditional_center(
    data: &GpsDataset,
    labels: &ClusterLabels,
    g: usize,
    h_t: f64,
    t: f64,
) -> Result<Point> {
    kde::conditional_mean(&cluster_days(data, labels, g)?, h_t, t)
}
