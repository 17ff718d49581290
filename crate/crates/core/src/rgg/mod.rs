//! Random geometric graphs: seeded point clouds, radius graphs with strict
//! distance comparisons, induced-motif counts anchored at lexicographic
//! minima, the limiting coefficient those counts scale to, thermodynamic
//! scaling tables, greedy nearest-point walks, and randomized search for
//! unit-radius realizations of a motif.

mod grid;
mod motif;

pub use motif::{Motif, MAX_MOTIF_VERTICES};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::jessen::Z_99;
use crate::numeric::Kahan;
use grid::UniformGrid;

/// Largest motif order accepted by [`scaled_count_limit`]; the inner integral
/// dimension grows as `d * (k - 1)` and plain Monte Carlo degrades fast
/// beyond this.
pub const MAX_LIMIT_MOTIF_VERTICES: usize = 4;

/// Samples per parallel Monte Carlo chunk; each chunk draws from its own
/// counter-based stream, so estimates do not depend on the thread schedule.
const MC_CHUNK: u64 = 4096;

#[derive(Debug, Error)]
pub enum RggError {
    #[error("invalid parameter: {reason}")]
    InvalidParameter { reason: String },
    #[error("unsupported density: {reason}")]
    UnsupportedDensity { reason: String },
    #[error("motif on {k} vertices exceeds the supported maximum of {max}")]
    MotifTooLarge { k: usize, max: usize },
    #[error("motif is not connected")]
    DisconnectedMotif,
    #[error("precondition violated: {reason}")]
    PreconditionViolated { reason: String },
}

/// An axis-aligned box used as the anchoring region for motif counts. The box
/// is treated as open: membership is strict on every face, and infinite
/// bounds make the box the whole space.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AxisBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl AxisBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, RggError> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(RggError::InvalidParameter {
                reason: format!(
                    "box needs matching nonempty bounds, got {} lower and {} upper",
                    lower.len(),
                    upper.len()
                ),
            });
        }
        for (axis, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if lo.is_nan() || hi.is_nan() || !(lo < hi) {
                return Err(RggError::InvalidParameter {
                    reason: format!("axis {axis} bounds [{lo}, {hi}] are not an interval"),
                });
            }
        }
        Ok(AxisBox { lower, upper })
    }

    /// The whole space in dimension `d` (all bounds infinite).
    pub fn everything(d: usize) -> Result<Self, RggError> {
        Self::new(vec![f64::NEG_INFINITY; d], vec![f64::INFINITY; d])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Strict interior membership on every axis.
    pub fn contains_interior(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&v, (&lo, &hi))| lo < v && v < hi)
    }
}

/// The sampling density of a point cloud. Both variants are constant on an
/// axis-aligned support box, which keeps every integral of a power of the
/// density in closed form.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum DensityDescriptor {
    /// Uniform on the box `[lower, upper]`.
    UniformBox { lower: Vec<f64>, upper: Vec<f64> },
    /// Product of independent uniform marginals, one `(lo, hi)` interval per
    /// coordinate; lets a single axis be made Dirac-like narrow.
    ProductUniform { intervals: Vec<(f64, f64)> },
}

impl DensityDescriptor {
    pub fn unit_cube(d: usize) -> Self {
        DensityDescriptor::UniformBox {
            lower: vec![0.0; d],
            upper: vec![1.0; d],
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            DensityDescriptor::UniformBox { lower, .. } => lower.len(),
            DensityDescriptor::ProductUniform { intervals } => intervals.len(),
        }
    }

    fn axis_bounds(&self, axis: usize) -> (f64, f64) {
        match self {
            DensityDescriptor::UniformBox { lower, upper } => (lower[axis], upper[axis]),
            DensityDescriptor::ProductUniform { intervals } => intervals[axis],
        }
    }

    pub fn validate(&self) -> Result<(), RggError> {
        let d = self.dim();
        if d == 0 {
            return Err(RggError::InvalidParameter {
                reason: "density needs at least one coordinate".into(),
            });
        }
        if let DensityDescriptor::UniformBox { lower, upper } = self {
            if lower.len() != upper.len() {
                return Err(RggError::InvalidParameter {
                    reason: format!(
                        "box bounds disagree: {} lower vs {} upper",
                        lower.len(),
                        upper.len()
                    ),
                });
            }
        }
        for axis in 0..d {
            let (lo, hi) = self.axis_bounds(axis);
            if !lo.is_finite() || !hi.is_finite() || !(lo < hi) {
                return Err(RggError::InvalidParameter {
                    reason: format!("axis {axis} support [{lo}, {hi}] is not a bounded interval"),
                });
            }
        }
        Ok(())
    }

    /// Lebesgue volume of the support box.
    pub fn support_volume(&self) -> f64 {
        (0..self.dim())
            .map(|axis| {
                let (lo, hi) = self.axis_bounds(axis);
                hi - lo
            })
            .product()
    }

    /// The constant value the density takes on its support.
    pub fn density_value(&self) -> f64 {
        1.0 / self.support_volume()
    }
}

/// A finite point set in `R^d` together with the density and seed that
/// produced it, so the exact same cloud can be regenerated from the
/// descriptor alone.
#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    d: usize,
    n: usize,
    points: Vec<f64>,
    descriptor: DensityDescriptor,
    seed: u64,
}

impl PointCloud {
    /// Wraps explicit points (row per point). The descriptor records the
    /// bounding box, with degenerate axes widened so the box has volume.
    pub fn from_points(rows: &[Vec<f64>]) -> Result<Self, RggError> {
        let n = rows.len();
        if n == 0 {
            return Err(RggError::InvalidParameter {
                reason: "need at least one point".into(),
            });
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(RggError::InvalidParameter {
                reason: "points need at least one coordinate".into(),
            });
        }
        let mut points = Vec::with_capacity(n * d);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != d {
                return Err(RggError::InvalidParameter {
                    reason: format!("point {i} has {} coordinates, expected {d}", row.len()),
                });
            }
            for &x in row {
                if !x.is_finite() {
                    return Err(RggError::InvalidParameter {
                        reason: format!("point {i} has a non-finite coordinate"),
                    });
                }
                points.push(x);
            }
        }
        let mut lower = vec![f64::INFINITY; d];
        let mut upper = vec![f64::NEG_INFINITY; d];
        for row in rows {
            for k in 0..d {
                lower[k] = lower[k].min(row[k]);
                upper[k] = upper[k].max(row[k]);
            }
        }
        for k in 0..d {
            if upper[k] <= lower[k] {
                upper[k] = lower[k] + 1.0;
            }
        }
        Ok(PointCloud {
            d,
            n,
            points,
            descriptor: DensityDescriptor::UniformBox { lower, upper },
            seed: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i * self.d..(i + 1) * self.d]
    }

    pub fn points_flat(&self) -> &[f64] {
        &self.points
    }

    pub fn descriptor(&self) -> &DensityDescriptor {
        &self.descriptor
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }
}

/// Draws `n` points from `descriptor` in dimension `d`. The same arguments
/// always produce bit-identical clouds.
pub fn sample_points(
    descriptor: &DensityDescriptor,
    n: usize,
    d: usize,
    seed: u64,
) -> Result<PointCloud, RggError> {
    descriptor.validate()?;
    if n == 0 {
        return Err(RggError::InvalidParameter {
            reason: "need at least one point".into(),
        });
    }
    if d != descriptor.dim() {
        return Err(RggError::InvalidParameter {
            reason: format!("requested dimension {d} but density has {}", descriptor.dim()),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = Vec::with_capacity(n * d);
    for _ in 0..n {
        for axis in 0..d {
            let (lo, hi) = descriptor.axis_bounds(axis);
            points.push(lo + (hi - lo) * rng.random::<f64>());
        }
    }
    Ok(PointCloud {
        d,
        n,
        points,
        descriptor: descriptor.clone(),
        seed,
    })
}

/// Parses a plain-text point list: one point per line, whitespace-separated
/// coordinates, blank lines and `#` comments ignored.
pub fn parse_point_list(text: &str, d: usize) -> Result<Vec<Vec<f64>>, RggError> {
    if d == 0 {
        return Err(RggError::InvalidParameter {
            reason: "points need at least one coordinate".into(),
        });
    }
    let mut rows = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut row = Vec::with_capacity(d);
        for token in line.split_whitespace() {
            let value: f64 = token.parse().map_err(|_| RggError::InvalidParameter {
                reason: format!("line {}: '{token}' is not a number", lineno + 1),
            })?;
            row.push(value);
        }
        if row.len() != d {
            return Err(RggError::InvalidParameter {
                reason: format!(
                    "line {}: expected {d} coordinates, found {}",
                    lineno + 1,
                    row.len()
                ),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Renders points in the format [`parse_point_list`] reads back.
pub fn format_point_list(rows: &[Vec<f64>]) -> String {
    let mut out = String::new();
    for row in rows {
        let line: Vec<String> = row.iter().map(|x| format!("{x}")).collect();
        out.push_str(&line.join(" "));
        out.push('\n');
    }
    out
}

/// Connection-radius schedules, classified by the limit of `n * r_n^d`
/// (the expected number of points in a radius ball, up to the ball volume).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum RegimeSchedule {
    /// `n * r_n^d -> 0`; concretely `r_n = n^{-2/d}`.
    Sparse,
    /// `r_n = c * n^{-1/d}`, so `n * r_n^d = c^d` stays constant.
    Thermodynamic { c: f64 },
    /// `r_n = c * ((ln n) / n)^{1/d}`, the connectivity-threshold scaling.
    Connectivity { c: f64 },
    /// `n * r_n^d -> infinity`; concretely `r_n = n^{-1/(2d)}`.
    Dense,
}

impl RegimeSchedule {
    pub fn radius(&self, n: usize, d: usize) -> Result<f64, RggError> {
        if n == 0 || d == 0 {
            return Err(RggError::InvalidParameter {
                reason: format!("radius schedule needs n >= 1 and d >= 1, got n={n}, d={d}"),
            });
        }
        let c = match self {
            RegimeSchedule::Thermodynamic { c } | RegimeSchedule::Connectivity { c } => *c,
            _ => 1.0,
        };
        if !c.is_finite() || c <= 0.0 {
            return Err(RggError::InvalidParameter {
                reason: format!("schedule constant must be positive and finite, got {c}"),
            });
        }
        let nf = n as f64;
        let df = d as f64;
        Ok(match self {
            RegimeSchedule::Sparse => nf.powf(-2.0 / df),
            RegimeSchedule::Thermodynamic { c } => c * nf.powf(-1.0 / df),
            RegimeSchedule::Connectivity { c } => c * (nf.ln() / nf).powf(1.0 / df),
            RegimeSchedule::Dense => nf.powf(-1.0 / (2.0 * df)),
        })
    }
}

/// Undirected graph on point indices: `i ~ j` iff the Euclidean distance is
/// strictly below the radius. Adjacency lists are sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    n: usize,
    radius: f64,
    adj: Vec<Vec<u32>>,
    edge_count: u64,
}

impl Graph {
    pub fn vertex_count(&self) -> usize {
        self.n
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn edge_count(&self) -> u64 {
        self.edge_count
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    /// Neighbours of `v` in ascending index order.
    pub fn neighbors(&self, v: usize) -> &[u32] {
        &self.adj[v]
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adj[u].binary_search(&(v as u32)).is_ok()
    }
}

fn euclid2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Builds the radius graph over a cloud using a uniform-grid index, so the
/// cost is near-linear in the number of points for bounded expected degree.
pub fn build_graph(cloud: &PointCloud, radius: f64) -> Result<Graph, RggError> {
    if !radius.is_finite() || radius <= 0.0 {
        return Err(RggError::InvalidParameter {
            reason: format!("radius must be positive and finite, got {radius}"),
        });
    }
    let n = cloud.len();
    let d = cloud.dim();
    let r2 = radius * radius;
    let index = UniformGrid::build(cloud.points_flat(), d, radius);
    let mut adj: Vec<Vec<u32>> = vec![Vec::new(); n];
    for i in 0..n {
        let xi = cloud.point(i);
        index.for_each_candidate(xi, radius, |j| {
            let j = j as usize;
            if j > i && euclid2(xi, cloud.point(j)) < r2 {
                adj[i].push(j as u32);
                adj[j].push(i as u32);
            }
        });
    }
    let mut edge_count = 0u64;
    for list in &mut adj {
        list.sort_unstable();
        edge_count += list.len() as u64;
    }
    Ok(Graph {
        n,
        radius,
        adj,
        edge_count: edge_count / 2,
    })
}

/// Enumerates every connected `k`-vertex subset of the graph exactly once
/// (extension enumeration: grow from each root using only higher-indexed
/// vertices outside the subset's closed neighbourhood).
fn for_each_connected_k_subset<F: FnMut(&[u32])>(g: &Graph, k: usize, mut visit: F) {
    fn extend<F: FnMut(&[u32])>(
        g: &Graph,
        k: usize,
        root: u32,
        sub: &mut Vec<u32>,
        mut ext: Vec<u32>,
        covered: &mut [bool],
        visit: &mut F,
    ) {
        if sub.len() == k {
            visit(sub);
            return;
        }
        while let Some(w) = ext.pop() {
            let mut branch_ext = ext.clone();
            for &u in g.neighbors(w as usize) {
                if u > root && !covered[u as usize] {
                    branch_ext.push(u);
                }
            }
            let mut newly = Vec::new();
            for &u in g.neighbors(w as usize) {
                if !covered[u as usize] {
                    covered[u as usize] = true;
                    newly.push(u);
                }
            }
            sub.push(w);
            extend(g, k, root, sub, branch_ext, covered, visit);
            sub.pop();
            for u in newly {
                covered[u as usize] = false;
            }
        }
    }

    let n = g.vertex_count();
    if k == 0 || k > n {
        return;
    }
    let mut covered = vec![false; n];
    let mut sub = Vec::with_capacity(k);
    for v in 0..n {
        let v32 = v as u32;
        covered[v] = true;
        let mut newly = Vec::new();
        let mut ext = Vec::new();
        for &u in g.neighbors(v) {
            if !covered[u as usize] {
                covered[u as usize] = true;
                newly.push(u);
            }
            if u > v32 {
                ext.push(u);
            }
        }
        sub.push(v32);
        extend(g, k, v32, &mut sub, ext, &mut covered, &mut visit);
        sub.pop();
        for u in newly {
            covered[u as usize] = false;
        }
        covered[v] = false;
    }
}

fn lex_less(a: &[f64], b: &[f64]) -> bool {
    for (x, y) in a.iter().zip(b) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    false
}

/// Counts induced copies of `motif` in the graph, each vertex subset counted
/// once, anchored by requiring the subset's lexicographically smallest point
/// to lie in the open box `anchor`.
pub fn count_induced_motifs(
    cloud: &PointCloud,
    graph: &Graph,
    motif: &Motif,
    anchor: &AxisBox,
) -> Result<u64, RggError> {
    if graph.vertex_count() != cloud.len() {
        return Err(RggError::InvalidParameter {
            reason: format!(
                "graph has {} vertices but cloud has {} points",
                graph.vertex_count(),
                cloud.len()
            ),
        });
    }
    if anchor.dim() != cloud.dim() {
        return Err(RggError::InvalidParameter {
            reason: format!(
                "anchor box dimension {} does not match cloud dimension {}",
                anchor.dim(),
                cloud.dim()
            ),
        });
    }
    let k = motif.vertex_count();
    let mut count = 0u64;
    for_each_connected_k_subset(graph, k, |sub| {
        let mut rows = [0u8; MAX_MOTIF_VERTICES];
        for a in 0..k {
            for b in a + 1..k {
                if graph.has_edge(sub[a] as usize, sub[b] as usize) {
                    rows[a] |= 1 << b;
                    rows[b] |= 1 << a;
                }
            }
        }
        if !motif.matches_adjacency(&rows[..k]) {
            return;
        }
        let mut best = sub[0] as usize;
        for &v in &sub[1..] {
            if lex_less(cloud.point(v as usize), cloud.point(best)) {
                best = v as usize;
            }
        }
        if anchor.contains_interior(cloud.point(best)) {
            count += 1;
        }
    });
    Ok(count)
}

/// The limiting coefficient for scaled induced-motif counts: the exact
/// prefactor `(1/k!) * integral over the anchor of the density^k` times a
/// Monte Carlo estimate of the pair-configuration integral (the probability,
/// scaled by the sampling cube volume, that `k` points containing the origin
/// form the motif at unit radius).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountLimit {
    pub motif_vertices: usize,
    /// `(1/k!) * integral_A f^k`, evaluated in closed form.
    pub prefactor_exact: f64,
    pub inner_mean: f64,
    pub inner_std_error: f64,
    /// 99% confidence interval for the inner integral.
    pub inner_ci: (f64, f64),
    pub value: f64,
    /// 99% confidence interval for the full coefficient.
    pub ci: (f64, f64),
    pub n_samples: u64,
    pub seed: u64,
}

/// Estimates the limit coefficient for `motif` anchored in `anchor` under
/// `descriptor`. Supported up to 4-vertex motifs; the inner integral runs
/// over `(k - 1)` free points truncated to the cube `[-k, k]^d`, which
/// contains the radius-`k` ball every connected configuration lies in.
pub fn scaled_count_limit(
    motif: &Motif,
    anchor: &AxisBox,
    descriptor: &DensityDescriptor,
    n_samples: u64,
    seed: u64,
) -> Result<CountLimit, RggError> {
    let k = motif.vertex_count();
    if k > MAX_LIMIT_MOTIF_VERTICES {
        return Err(RggError::MotifTooLarge {
            k,
            max: MAX_LIMIT_MOTIF_VERTICES,
        });
    }
    descriptor.validate()?;
    let d = descriptor.dim();
    if anchor.dim() != d {
        return Err(RggError::InvalidParameter {
            reason: format!(
                "anchor box dimension {} does not match density dimension {d}",
                anchor.dim()
            ),
        });
    }
    if n_samples == 0 {
        return Err(RggError::InvalidParameter {
            reason: "need at least one Monte Carlo sample".into(),
        });
    }

    let mut overlap = 1.0f64;
    for axis in 0..d {
        let (lo, hi) = descriptor.axis_bounds(axis);
        let span = hi.min(anchor.upper()[axis]) - lo.max(anchor.lower()[axis]);
        overlap *= span.max(0.0);
    }
    let factorial: f64 = (1..=k).map(|i| i as f64).product();
    let prefactor = overlap * descriptor.density_value().powi(k as i32) / factorial;

    let free = k - 1;
    let cube_half = k as f64;
    let volume = (2.0 * cube_half).powi((free * d) as i32);
    let n_chunks = n_samples.div_ceil(MC_CHUNK);
    let hits: Vec<u64> = (0..n_chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk + 1);
            let count = MC_CHUNK.min(n_samples - chunk * MC_CHUNK);
            let mut coords = vec![0.0f64; free * d];
            let origin = vec![0.0f64; d];
            let mut hits = 0u64;
            for _ in 0..count {
                for slot in coords.iter_mut() {
                    *slot = cube_half * (2.0 * rng.random::<f64>() - 1.0);
                }
                let point = |i: usize| -> &[f64] {
                    if i == 0 {
                        &origin
                    } else {
                        &coords[(i - 1) * d..i * d]
                    }
                };
                let mut rows = [0u8; MAX_MOTIF_VERTICES];
                for a in 0..k {
                    for b in a + 1..k {
                        if euclid2(point(a), point(b)) < 1.0 {
                            rows[a] |= 1 << b;
                            rows[b] |= 1 << a;
                        }
                    }
                }
                if motif.matches_adjacency(&rows[..k]) {
                    hits += 1;
                }
            }
            hits
        })
        .collect();
    let mut total = Kahan::new();
    for h in hits {
        total.add(h as f64);
    }
    let n = n_samples as f64;
    let p = total.value() / n;
    let variance = (p * (1.0 - p)).max(0.0) * n / (n - 1.0).max(1.0);
    let inner_std_error = volume * (variance / n).sqrt();
    let inner_mean = volume * p;
    let half = Z_99 * inner_std_error;
    let inner_ci = (inner_mean - half, inner_mean + half);
    Ok(CountLimit {
        motif_vertices: k,
        prefactor_exact: prefactor,
        inner_mean,
        inner_std_error,
        inner_ci,
        value: prefactor * inner_mean,
        ci: (prefactor * inner_ci.0, prefactor * inner_ci.1),
        n_samples,
        seed,
    })
}

/// One row of a scaling table: counts at a fixed cloud size across seeds,
/// and the scaled statistic `r^{-d(k-1)} n^{-k} * count` they average to.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticRow {
    pub n: usize,
    pub radius: f64,
    /// Anchored motif count per seed, in input seed order.
    pub counts: Vec<u64>,
    pub mean_count: f64,
    pub scaled_mean: f64,
    pub scaled_std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AsymptoticReport {
    pub rows: Vec<AsymptoticRow>,
}

impl AsymptoticReport {
    /// Settling indicator: true when at least half of the consecutive scaled
    /// means do not increase. A single row is trivially settled.
    pub fn majority_nonincreasing(&self) -> bool {
        if self.rows.len() < 2 {
            return true;
        }
        let pairs = self.rows.len() - 1;
        let good = self
            .rows
            .windows(2)
            .filter(|w| w[1].scaled_mean <= w[0].scaled_mean)
            .count();
        good * 2 >= pairs
    }
}

/// Builds the scaled-count table over increasing cloud sizes. Requires the
/// thermodynamic schedule: that is the regime in which the scaled statistic
/// has a finite nonzero limit. Replications across seeds run in parallel and
/// are aggregated in seed order, so the report is schedule-independent.
pub fn asymptotic_scaled_counts(
    motif: &Motif,
    anchor: &AxisBox,
    descriptor: &DensityDescriptor,
    schedule: RegimeSchedule,
    sizes: &[usize],
    seeds: &[u64],
) -> Result<AsymptoticReport, RggError> {
    if !matches!(schedule, RegimeSchedule::Thermodynamic { .. }) {
        return Err(RggError::PreconditionViolated {
            reason: "scaling table is defined for the thermodynamic schedule r_n = c n^{-1/d}"
                .into(),
        });
    }
    if sizes.is_empty() || seeds.is_empty() {
        return Err(RggError::InvalidParameter {
            reason: "need at least one size and one seed".into(),
        });
    }
    descriptor.validate()?;
    let d = descriptor.dim();
    if anchor.dim() != d {
        return Err(RggError::InvalidParameter {
            reason: format!(
                "anchor box dimension {} does not match density dimension {d}",
                anchor.dim()
            ),
        });
    }
    let k = motif.vertex_count();
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let radius = schedule.radius(n, d)?;
        let counts: Vec<u64> = seeds
            .par_iter()
            .map(|&seed| -> Result<u64, RggError> {
                let cloud = sample_points(descriptor, n, d, seed)?;
                let graph = build_graph(&cloud, radius)?;
                count_induced_motifs(&cloud, &graph, motif, anchor)
            })
            .collect::<Result<_, _>>()?;
        let scale = radius.powi(-((d * (k - 1)) as i32)) * (n as f64).powi(-(k as i32));
        let m = counts.len() as f64;
        let mut mean_count = Kahan::new();
        for &c in &counts {
            mean_count.add(c as f64);
        }
        let mean_count = mean_count.value() / m;
        let scaled: Vec<f64> = counts.iter().map(|&c| c as f64 * scale).collect();
        let scaled_mean = scaled.iter().sum::<f64>() / m;
        let scaled_std_error = if counts.len() < 2 {
            0.0
        } else {
            let var = scaled
                .iter()
                .map(|s| (s - scaled_mean) * (s - scaled_mean))
                .sum::<f64>()
                / (m - 1.0);
            (var / m).sqrt()
        };
        rows.push(AsymptoticRow {
            n,
            radius,
            counts,
            mean_count,
            scaled_mean,
            scaled_std_error,
        });
    }
    Ok(AsymptoticReport { rows })
}

/// Result of a greedy descent toward a query point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WalkOutcome {
    /// Visited vertices, starting vertex first.
    pub path: Vec<usize>,
    pub terminal: usize,
    pub terminal_distance: f64,
    /// Whether the terminal is the globally nearest point to the query
    /// (lowest index on exact ties).
    pub is_global_nearest: bool,
}

/// Walks from `start` toward `query`: repeatedly moves to the lowest-indexed
/// neighbour strictly closer to the query, stopping when none exists. The
/// strict decrease guarantees termination without a visited set.
pub fn greedy_walk(
    cloud: &PointCloud,
    graph: &Graph,
    start: usize,
    query: &[f64],
) -> Result<WalkOutcome, RggError> {
    if graph.vertex_count() != cloud.len() {
        return Err(RggError::InvalidParameter {
            reason: format!(
                "graph has {} vertices but cloud has {} points",
                graph.vertex_count(),
                cloud.len()
            ),
        });
    }
    if start >= cloud.len() {
        return Err(RggError::InvalidParameter {
            reason: format!("start vertex {start} out of range 0..{}", cloud.len()),
        });
    }
    if query.len() != cloud.dim() || query.iter().any(|x| !x.is_finite()) {
        return Err(RggError::InvalidParameter {
            reason: format!(
                "query needs {} finite coordinates, got {:?}",
                cloud.dim(),
                query
            ),
        });
    }
    let dist = |i: usize| euclid2(cloud.point(i), query).sqrt();
    let mut current = start;
    let mut current_dist = dist(start);
    let mut path = vec![start];
    loop {
        let step = graph
            .neighbors(current)
            .iter()
            .map(|&u| u as usize)
            .find(|&u| dist(u) < current_dist);
        match step {
            Some(u) => {
                current = u;
                current_dist = dist(u);
                path.push(u);
            }
            None => break,
        }
    }
    let mut best = 0usize;
    let mut best_dist = dist(0);
    for i in 1..cloud.len() {
        let di = dist(i);
        if di < best_dist {
            best = i;
            best_dist = di;
        }
    }
    Ok(WalkOutcome {
        path,
        terminal: current,
        terminal_distance: current_dist,
        is_global_nearest: current == best,
    })
}

/// Whether the labelled points realize the motif at unit radius with strict
/// comparisons: pairs at distance `< 1` exactly where the motif has an edge.
pub fn labelled_realization_matches(motif: &Motif, d: usize, points: &[Vec<f64>]) -> bool {
    let k = motif.vertex_count();
    if points.len() != k || points.iter().any(|p| p.len() != d) {
        return false;
    }
    for u in 0..k {
        for v in u + 1..k {
            let close = euclid2(&points[u], &points[v]) < 1.0;
            if close != motif.has_edge(u, v) {
                return false;
            }
        }
    }
    true
}

/// Outcome of [`feasibility_search`].
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum SearchOutcome {
    /// A labelled unit-radius realization: vertex `i` sits at `points[i]`.
    Found {
        points: Vec<Vec<f64>>,
        evaluations: u64,
        attempts: u64,
    },
    /// The evaluation budget ran out without a witness. Absence of a witness
    /// is evidence only, never a proof of infeasibility.
    NotFound {
        evaluations: u64,
        attempts: u64,
        note: String,
    },
}

/// Searches for point positions in `R^d` realizing the motif as a unit-radius
/// graph: random restarts plus local perturbation descent on a margin
/// penalty (edges want distance below `1 - margin`, non-edges above
/// `1 + margin`). Deterministic in `seed`; consumes exactly `budget` penalty
/// evaluations unless a witness appears first.
pub fn feasibility_search(
    motif: &Motif,
    d: usize,
    budget: u64,
    seed: u64,
) -> Result<SearchOutcome, RggError> {
    if d == 0 {
        return Err(RggError::InvalidParameter {
            reason: "need at least one spatial dimension".into(),
        });
    }
    if budget == 0 {
        return Err(RggError::InvalidParameter {
            reason: "need a positive evaluation budget".into(),
        });
    }
    const MARGIN: f64 = 1e-3;
    const STEPS_PER_RESTART: u64 = 600;
    const STALL_LIMIT: u32 = 60;
    let k = motif.vertex_count();
    let penalty = |pts: &[f64]| -> f64 {
        let mut e = 0.0;
        for u in 0..k {
            for v in u + 1..k {
                let dist = euclid2(&pts[u * d..(u + 1) * d], &pts[v * d..(v + 1) * d]).sqrt();
                let gap = if motif.has_edge(u, v) {
                    (dist - (1.0 - MARGIN)).max(0.0)
                } else {
                    ((1.0 + MARGIN) - dist).max(0.0)
                };
                e += gap * gap;
            }
        }
        e
    };
    let as_rows = |pts: &[f64]| -> Vec<Vec<f64>> {
        (0..k).map(|v| pts[v * d..(v + 1) * d].to_vec()).collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut evaluations = 0u64;
    let mut attempts = 0u64;
    'outer: while evaluations < budget {
        attempts += 1;
        // Vertex 0 pinned at the origin; translation freedom costs nothing.
        let mut config = vec![0.0f64; k * d];
        for slot in config.iter_mut().skip(d) {
            *slot = 3.0 * rng.random::<f64>() - 1.5;
        }
        let mut energy = penalty(&config);
        evaluations += 1;
        let mut sigma = 0.35f64;
        let mut stall = 0u32;
        let mut displaced = vec![0.0f64; d];
        for _ in 0..STEPS_PER_RESTART {
            if energy == 0.0 {
                let rows = as_rows(&config);
                if labelled_realization_matches(motif, d, &rows) {
                    return Ok(SearchOutcome::Found {
                        points: rows,
                        evaluations,
                        attempts,
                    });
                }
                break;
            }
            if evaluations >= budget {
                break 'outer;
            }
            let v = 1 + (rng.random::<u64>() as usize) % (k - 1);
            let segment = v * d..(v + 1) * d;
            displaced.copy_from_slice(&config[segment.clone()]);
            for slot in config[segment.clone()].iter_mut() {
                *slot += sigma * (2.0 * rng.random::<f64>() - 1.0);
            }
            let proposed = penalty(&config);
            evaluations += 1;
            if proposed < energy {
                energy = proposed;
                stall = 0;
            } else {
                config[segment].copy_from_slice(&displaced);
                stall += 1;
                if stall >= STALL_LIMIT {
                    sigma *= 0.5;
                    stall = 0;
                    if sigma < 1e-4 {
                        break;
                    }
                }
            }
        }
        if energy == 0.0 {
            let rows = as_rows(&config);
            if labelled_realization_matches(motif, d, &rows) {
                return Ok(SearchOutcome::Found {
                    points: rows,
                    evaluations,
                    attempts,
                });
            }
        }
    }
    Ok(SearchOutcome::NotFound {
        evaluations,
        attempts,
        note: "budget exhausted without finding a realization; this is evidence, not a proof of \
               infeasibility"
            .into(),
    })
}
