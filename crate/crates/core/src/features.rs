//! The 55 instance features: 47 geometric features on coordinates min-max
//! normalized to the unit square, and 8 values copied from the header.

use std::collections::{BTreeMap, HashMap};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::instance::{Point, TtpInstance};

/// Catalogue order; also the CSV column order.
pub const FEATURE_NAMES: [&str; 55] = [
    "distance_min",
    "distance_max",
    "distance_mean",
    "distance_median",
    "distance_frac_shorter_than_mean",
    "distance_frac_distinct",
    "distance_std",
    "distance_mode_frequency",
    "distance_mode_quantity",
    "distance_mode_mean",
    "distance_expected_random_tour_length",
    "modes_count",
    "cluster_01_count",
    "cluster_01_mean_centroid_dist",
    "cluster_05_count",
    "cluster_05_mean_centroid_dist",
    "cluster_10_count",
    "cluster_10_mean_centroid_dist",
    "nnd_min",
    "nnd_max",
    "nnd_mean",
    "nnd_median",
    "nnd_std",
    "nnd_cv",
    "centroid_x",
    "centroid_y",
    "centroid_min_dist",
    "centroid_mean_dist",
    "centroid_max_dist",
    "mst_depth_min",
    "mst_depth_mean",
    "mst_depth_median",
    "mst_depth_max",
    "mst_depth_std",
    "mst_dist_min",
    "mst_dist_mean",
    "mst_dist_median",
    "mst_dist_max",
    "mst_dist_std",
    "mst_dist_sum_norm",
    "angle_min",
    "angle_mean",
    "angle_median",
    "angle_max",
    "angle_std",
    "hull_area",
    "hull_frac",
    "capacity_of_knapsack",
    "knapsack_data_type",
    "number_of_items",
    "items_per_city",
    "dimension",
    "renting_ratio",
    "min_speed",
    "max_speed",
];

pub const NUM_GEOMETRIC: usize = 47;

/// Features read straight from the instance header.
pub const HEADER_FEATURES: [&str; 8] = [
    "capacity_of_knapsack",
    "knapsack_data_type",
    "number_of_items",
    "items_per_city",
    "dimension",
    "renting_ratio",
    "min_speed",
    "max_speed",
];

/// The five most important header features, most important first.
pub const TOP5_HEADER: [&str; 5] = [
    "capacity_of_knapsack",
    "renting_ratio",
    "number_of_items",
    "knapsack_data_type",
    "dimension",
];

/// Feature groups in extraction order; keys of the timing map.
pub const GROUPS: [&str; 9] = [
    "distance", "mode", "cluster", "nnd", "centroid", "mst", "angle", "hull", "header",
];

/// Above this many city pairs, order statistics of the edge-cost
/// distribution come from a seeded sample of this many pairs.
pub const EXACT_PAIR_LIMIT: usize = 2_000_000;
const SAMPLE_SEED: u64 = 0x5eed_d157;
const DISTINCT_TOL: f64 = 1e-9;
const MAX_BINS: usize = 10_000;

pub const CLUSTER_MIN_PTS: usize = 3;
pub const CLUSTER_EPS: [(f64, &str); 3] = [(0.01, "01"), (0.05, "05"), (0.1, "10")];

#[derive(Debug, Error, PartialEq)]
pub enum FeatureError {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    /// In [`FEATURE_NAMES`] order.
    pub values: Vec<f64>,
    pub extraction_ms: BTreeMap<String, f64>,
    /// Set when the edge-cost order statistics were sampled.
    pub approximate: bool,
}

impl FeatureVector {
    pub fn get(&self, name: &str) -> Option<f64> {
        feature_index(name).map(|i| self.values[i])
    }

    pub fn iter(&self) -> impl Iterator<Item = (&'static str, f64)> + '_ {
        FEATURE_NAMES
            .iter()
            .copied()
            .zip(self.values.iter().copied())
    }

    pub fn to_json(&self) -> Value {
        let values: Map<String, Value> = self
            .iter()
            .map(|(k, v)| (k.to_string(), json!(v)))
            .collect();
        json!({
            "values": values,
            "extraction_ms": self.extraction_ms,
            "approximate": self.approximate,
            "mst_root": 1,
        })
    }

    pub fn from_json(v: &Value) -> Result<Self, FeatureError> {
        let obj = v
            .get("values")
            .and_then(Value::as_object)
            .unwrap_or_else(|| v.as_object().expect("object"));
        let mut values = vec![f64::NAN; FEATURE_NAMES.len()];
        for (k, val) in obj {
            let i = feature_index(k).ok_or_else(|| FeatureError::UnknownFeature(k.clone()))?;
            values[i] = val.as_f64().unwrap_or(f64::NAN);
        }
        let extraction_ms = v
            .get("extraction_ms")
            .and_then(Value::as_object)
            .map(|m| {
                m.iter()
                    .map(|(k, x)| (k.clone(), x.as_f64().unwrap_or(0.0)))
                    .collect()
            })
            .unwrap_or_default();
        let approximate = v
            .get("approximate")
            .and_then(Value::as_bool)
            .unwrap_or(false);
        Ok(FeatureVector {
            values,
            extraction_ms,
            approximate,
        })
    }

    pub fn csv_header() -> String {
        FEATURE_NAMES.join(",")
    }

    pub fn to_csv_row(&self) -> String {
        self.values
            .iter()
            .map(|v| v.to_string())
            .collect::<Vec<_>>()
            .join(",")
    }
}

pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|&n| n == name)
}

/// The 8 processing-free features, in catalogue order.
pub fn extract_header_features(inst: &TtpInstance) -> Vec<(&'static str, f64)> {
    let n = inst.dimension();
    let m = inst.num_items();
    let per_city = if n > 1 {
        m as f64 / (n - 1) as f64
    } else {
        0.0
    };
    let vals = [
        inst.capacity,
        inst.kp_type.code() as f64,
        m as f64,
        per_city,
        n as f64,
        inst.renting_rate,
        inst.min_speed,
        inst.max_speed,
    ];
    HEADER_FEATURES.iter().copied().zip(vals).collect()
}

pub fn extract_features(inst: &TtpInstance) -> Result<FeatureVector, FeatureError> {
    let n = inst.dimension();
    if n < 3 {
        return Err(FeatureError::DegenerateGeometry(format!(
            "need at least 3 cities, got {n}"
        )));
    }
    let pts = normalize(&inst.coords);
    let mut values = Vec::with_capacity(FEATURE_NAMES.len());
    let mut timing = BTreeMap::new();
    let mut timed = |group: &str, t: Instant| {
        timing.insert(group.to_string(), t.elapsed().as_secs_f64() * 1e3);
    };

    let t = Instant::now();
    let dist = distance_summary(&pts);
    values.extend([
        dist.min,
        dist.max,
        dist.mean,
        dist.median,
        dist.frac_shorter,
        dist.frac_distinct,
        dist.std,
    ]);
    timed("distance", t);

    let t = Instant::now();
    let modes = mode_stats(&dist.sorted_sample);
    values.extend([
        modes.frequency,
        modes.quantity,
        modes.mean,
        dist.expected_tour,
        modes.count,
    ]);
    timed("mode", t);

    let t = Instant::now();
    for (eps, _) in CLUSTER_EPS {
        let labels = density_cluster(&pts, eps, CLUSTER_MIN_PTS);
        let (count, mean) = cluster_stats(&pts, &labels);
        values.extend([count, mean]);
    }
    timed("cluster", t);

    let t = Instant::now();
    let nn = two_nearest(&pts);
    let nnd: Vec<f64> = nn.iter().map(|x| x.0 .1).collect();
    let s = Stats::of(&nnd);
    let cv = if s.mean > 0.0 { s.std / s.mean } else { 0.0 };
    values.extend([s.min, s.max, s.mean, s.median, s.std, cv]);
    timed("nnd", t);

    let t = Instant::now();
    let cx = pts.iter().map(|p| p.x).sum::<f64>() / n as f64;
    let cy = pts.iter().map(|p| p.y).sum::<f64>() / n as f64;
    let c = Point::new(cx, cy);
    let s = Stats::of(&pts.iter().map(|p| p.euclidean(&c)).collect::<Vec<_>>());
    values.extend([cx, cy, s.min, s.mean, s.max]);
    timed("centroid", t);

    let t = Instant::now();
    let mst = minimum_spanning_tree(&pts, |a, b| a.euclidean(b));
    let depth = Stats::of(&mst.depths.iter().map(|&d| d as f64).collect::<Vec<_>>());
    let lens: Vec<f64> = mst.edges.iter().map(|e| e.2).collect();
    let len = Stats::of(&lens);
    let norm = if dist.sum > 0.0 {
        lens.iter().sum::<f64>() / dist.sum
    } else {
        0.0
    };
    values.extend([depth.min, depth.mean, depth.median, depth.max, depth.std]);
    values.extend([len.min, len.mean, len.median, len.max, len.std, norm]);
    timed("mst", t);

    let t = Instant::now();
    let angles: Vec<f64> = nn
        .iter()
        .enumerate()
        .map(|(i, &((a, _), (b, _)))| angle_at(&pts, i, a, b))
        .collect();
    let s = Stats::of(&angles);
    values.extend([s.min, s.mean, s.median, s.max, s.std]);
    timed("angle", t);

    let t = Instant::now();
    let hull = convex_hull(&pts);
    values.extend([polygon_area(&hull), hull.len() as f64 / n as f64]);
    timed("hull", t);

    let t = Instant::now();
    values.extend(extract_header_features(inst).into_iter().map(|(_, v)| v));
    timed("header", t);

    debug_assert_eq!(values.len(), FEATURE_NAMES.len());
    Ok(FeatureVector {
        values,
        extraction_ms: timing,
        approximate: dist.approximate,
    })
}

/// Min-max scaling of each axis to [0, 1]; a constant axis maps to 0.
pub fn normalize(coords: &[Point]) -> Vec<Point> {
    let (mut x0, mut x1, mut y0, mut y1) = (
        f64::INFINITY,
        f64::NEG_INFINITY,
        f64::INFINITY,
        f64::NEG_INFINITY,
    );
    for p in coords {
        x0 = x0.min(p.x);
        x1 = x1.max(p.x);
        y0 = y0.min(p.y);
        y1 = y1.max(p.y);
    }
    let scale = |v: f64, lo: f64, hi: f64| if hi > lo { (v - lo) / (hi - lo) } else { 0.0 };
    coords
        .iter()
        .map(|p| Point::new(scale(p.x, x0, x1), scale(p.y, y0, y1)))
        .collect()
}

/// Summary statistics with population standard deviation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    pub std: f64,
}

impl Stats {
    pub fn of(xs: &[f64]) -> Stats {
        if xs.is_empty() {
            return Stats {
                min: 0.0,
                max: 0.0,
                mean: 0.0,
                median: 0.0,
                std: 0.0,
            };
        }
        let mut sorted = xs.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self::of_sorted(&sorted)
    }

    fn of_sorted(sorted: &[f64]) -> Stats {
        let n = sorted.len() as f64;
        let mean = sorted.iter().sum::<f64>() / n;
        let var = sorted.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
        Stats {
            min: sorted[0],
            max: sorted[sorted.len() - 1],
            mean,
            median: median_sorted(sorted),
            std: var.sqrt(),
        }
    }
}

fn median_sorted(s: &[f64]) -> f64 {
    let k = s.len();
    if k % 2 == 1 {
        s[k / 2]
    } else {
        (s[k / 2 - 1] + s[k / 2]) / 2.0
    }
}

struct DistanceSummary {
    min: f64,
    max: f64,
    mean: f64,
    median: f64,
    std: f64,
    frac_shorter: f64,
    frac_distinct: f64,
    sum: f64,
    expected_tour: f64,
    /// All pair costs, or a sample of them, sorted.
    sorted_sample: Vec<f64>,
    approximate: bool,
}

fn pair_count(n: usize) -> usize {
    n * (n - 1) / 2
}

fn distance_summary(pts: &[Point]) -> DistanceSummary {
    let n = pts.len();
    let pairs = pair_count(n);
    // exact streaming moments over all pairs
    let rows: Vec<(f64, f64, f64)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let (mut lo, mut hi, mut s) = (f64::INFINITY, f64::NEG_INFINITY, 0.0);
            for j in i + 1..n {
                let d = pts[i].euclidean(&pts[j]);
                lo = lo.min(d);
                hi = hi.max(d);
                s += d;
            }
            (lo, hi, s)
        })
        .collect();
    let min = rows.iter().map(|r| r.0).fold(f64::INFINITY, f64::min);
    let max = rows.iter().map(|r| r.1).fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = rows.iter().map(|r| r.2).sum();
    let mean = sum / pairs as f64;
    let (sq, shorter): (f64, usize) = (0..n)
        .into_par_iter()
        .map(|i| {
            let (mut sq, mut c) = (0.0, 0usize);
            for j in i + 1..n {
                let d = pts[i].euclidean(&pts[j]);
                sq += (d - mean) * (d - mean);
                c += (d < mean) as usize;
            }
            (sq, c)
        })
        .collect::<Vec<_>>()
        .into_iter()
        .fold((0.0, 0), |a, b| (a.0 + b.0, a.1 + b.1));

    let approximate = pairs > EXACT_PAIR_LIMIT;
    let mut sample = if approximate {
        let mut rng = ChaCha8Rng::seed_from_u64(SAMPLE_SEED);
        (0..EXACT_PAIR_LIMIT)
            .map(|_| {
                let i = rng.random_range(0..n);
                let mut j = rng.random_range(0..n - 1);
                if j >= i {
                    j += 1;
                }
                pts[i].euclidean(&pts[j])
            })
            .collect()
    } else {
        let mut all = Vec::with_capacity(pairs);
        for i in 0..n {
            for j in i + 1..n {
                all.push(pts[i].euclidean(&pts[j]));
            }
        }
        all
    };
    sample.sort_by(f64::total_cmp);
    let distinct = 1 + sample
        .windows(2)
        .filter(|w| w[1] - w[0] > DISTINCT_TOL)
        .count();
    DistanceSummary {
        min,
        max,
        mean,
        median: median_sorted(&sample),
        std: (sq / pairs as f64).sqrt(),
        frac_shorter: shorter as f64 / pairs as f64,
        frac_distinct: distinct as f64 / sample.len() as f64,
        sum,
        expected_tour: sum * 2.0 / (n - 1) as f64,
        sorted_sample: sample,
        approximate,
    }
}

struct ModeStats {
    frequency: f64,
    quantity: f64,
    mean: f64,
    count: f64,
}

/// Histogram modes with Freedman-Diaconis bins. A mode is a bin strictly
/// higher than each existing neighbour. `quantity` counts bins tied for the
/// highest count.
fn mode_stats(sorted: &[f64]) -> ModeStats {
    let k = sorted.len();
    let (lo, hi) = (sorted[0], sorted[k - 1]);
    let q1 = sorted[k / 4];
    let q3 = sorted[(3 * k) / 4];
    let width = 2.0 * (q3 - q1) / (k as f64).cbrt();
    let bins = if hi > lo && width > 0.0 {
        (((hi - lo) / width).ceil() as usize).clamp(1, MAX_BINS)
    } else {
        1
    };
    let bw = if hi > lo {
        (hi - lo) / bins as f64
    } else {
        1.0
    };
    let mut hist = vec![0usize; bins];
    for &d in sorted {
        let b = (((d - lo) / bw) as usize).min(bins - 1);
        hist[b] += 1;
    }
    let top = *hist.iter().max().expect("at least one bin");
    let modes: Vec<usize> = (0..bins)
        .filter(|&b| (b == 0 || hist[b] > hist[b - 1]) && (b + 1 == bins || hist[b] > hist[b + 1]))
        .collect();
    let centre = |b: usize| lo + (b as f64 + 0.5) * bw;
    let mean = if modes.is_empty() {
        0.0
    } else {
        modes.iter().map(|&b| centre(b)).sum::<f64>() / modes.len() as f64
    };
    ModeStats {
        frequency: top as f64,
        quantity: hist.iter().filter(|&&h| h == top).count() as f64,
        mean,
        count: modes.len() as f64,
    }
}

/// Density-based clustering. Core points have at least `min_pts` points
/// (themselves included) within `eps`. Labels are cluster ids from 0 in
/// discovery order, or -1 for noise.
pub fn density_cluster(points: &[Point], eps: f64, min_pts: usize) -> Vec<i32> {
    let n = points.len();
    let cell = |p: &Point| ((p.x / eps).floor() as i64, (p.y / eps).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, p) in points.iter().enumerate() {
        grid.entry(cell(p)).or_default().push(i);
    }
    let neighbours = |i: usize| -> Vec<usize> {
        let (cx, cy) = cell(&points[i]);
        let mut out = Vec::new();
        for dx in -1..=1 {
            for dy in -1..=1 {
                if let Some(v) = grid.get(&(cx + dx, cy + dy)) {
                    out.extend(
                        v.iter()
                            .copied()
                            .filter(|&j| points[i].euclidean(&points[j]) <= eps),
                    );
                }
            }
        }
        out.sort_unstable();
        out
    };

    const UNSEEN: i32 = -2;
    let mut labels = vec![UNSEEN; n];
    let mut next = 0;
    for i in 0..n {
        if labels[i] != UNSEEN {
            continue;
        }
        let nb = neighbours(i);
        if nb.len() < min_pts {
            labels[i] = -1;
            continue;
        }
        labels[i] = next;
        let mut queue = nb;
        let mut head = 0;
        while head < queue.len() {
            let j = queue[head];
            head += 1;
            if labels[j] == -1 {
                labels[j] = next;
            }
            if labels[j] != UNSEEN {
                continue;
            }
            labels[j] = next;
            let nj = neighbours(j);
            if nj.len() >= min_pts {
                queue.extend(nj);
            }
        }
        next += 1;
    }
    labels
}

/// Cluster count and mean distance of clustered points to their cluster
/// centroid; noise is ignored.
fn cluster_stats(pts: &[Point], labels: &[i32]) -> (f64, f64) {
    let k = labels.iter().copied().max().unwrap_or(-1) + 1;
    if k <= 0 {
        return (0.0, 0.0);
    }
    let mut sums = vec![(0.0, 0.0, 0usize); k as usize];
    for (p, &l) in pts.iter().zip(labels) {
        if l >= 0 {
            let s = &mut sums[l as usize];
            s.0 += p.x;
            s.1 += p.y;
            s.2 += 1;
        }
    }
    let centroids: Vec<Point> = sums
        .iter()
        .map(|s| Point::new(s.0 / s.2 as f64, s.1 / s.2 as f64))
        .collect();
    let (mut total, mut count) = (0.0, 0usize);
    for (p, &l) in pts.iter().zip(labels) {
        if l >= 0 {
            total += p.euclidean(&centroids[l as usize]);
            count += 1;
        }
    }
    (k as f64, total / count as f64)
}

/// For each point, its nearest and second-nearest other points as
/// `(index, distance)`, ties by lower index.
fn two_nearest(pts: &[Point]) -> Vec<((usize, f64), (usize, f64))> {
    (0..pts.len())
        .into_par_iter()
        .map(|i| {
            let mut best = (usize::MAX, f64::INFINITY);
            let mut second = (usize::MAX, f64::INFINITY);
            for (j, q) in pts.iter().enumerate() {
                if j == i {
                    continue;
                }
                let d = pts[i].euclidean(q);
                if d < best.1 {
                    second = best;
                    best = (j, d);
                } else if d < second.1 {
                    second = (j, d);
                }
            }
            (best, second)
        })
        .collect()
}

fn angle_at(pts: &[Point], i: usize, a: usize, b: usize) -> f64 {
    let (ux, uy) = (pts[a].x - pts[i].x, pts[a].y - pts[i].y);
    let (vx, vy) = (pts[b].x - pts[i].x, pts[b].y - pts[i].y);
    (ux * vy - uy * vx).abs().atan2(ux * vx + uy * vy)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpanningTree {
    /// `(parent, child, cost)` in the order Prim added them.
    pub edges: Vec<(usize, usize, f64)>,
    /// Edge count from the root (point 0).
    pub depths: Vec<usize>,
}

impl SpanningTree {
    pub fn total_cost(&self) -> f64 {
        self.edges.iter().map(|e| e.2).sum()
    }
}

/// Prim's algorithm on the complete graph, rooted at point 0.
pub fn minimum_spanning_tree(
    points: &[Point],
    cost: impl Fn(&Point, &Point) -> f64,
) -> SpanningTree {
    let n = points.len();
    let mut in_tree = vec![false; n];
    let mut key = vec![f64::INFINITY; n];
    let mut parent = vec![0usize; n];
    let mut depths = vec![0usize; n];
    let mut edges = Vec::with_capacity(n.saturating_sub(1));
    if n == 0 {
        return SpanningTree { edges, depths };
    }
    key[0] = 0.0;
    for step in 0..n {
        let mut u = usize::MAX;
        for v in 0..n {
            if !in_tree[v] && (u == usize::MAX || key[v] < key[u]) {
                u = v;
            }
        }
        in_tree[u] = true;
        if step > 0 {
            edges.push((parent[u], u, key[u]));
            depths[u] = depths[parent[u]] + 1;
        }
        for v in 0..n {
            if !in_tree[v] {
                let c = cost(&points[u], &points[v]);
                if c < key[v] {
                    key[v] = c;
                    parent[v] = u;
                }
            }
        }
    }
    SpanningTree { edges, depths }
}

fn cross(o: &Point, a: &Point, b: &Point) -> f64 {
    (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
}

/// Hull vertices counter-clockwise, collinear boundary points and duplicates
/// excluded.
pub fn convex_hull(points: &[Point]) -> Vec<Point> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for p in iter {
            while hull.len() >= start + 2
                && cross(&hull[hull.len() - 2], &hull[hull.len() - 1], p) <= 0.0
            {
                hull.pop();
            }
            hull.push(*p);
        }
        hull.pop();
    }
    hull
}

pub fn polygon_area(poly: &[Point]) -> f64 {
    if poly.len() < 3 {
        return 0.0;
    }
    let mut a = 0.0;
    for i in 0..poly.len() {
        let (p, q) = (&poly[i], &poly[(i + 1) % poly.len()]);
        a += p.x * q.y - q.x * p.y;
    }
    a.abs() / 2.0
}

/// Deterministic cost estimate per feature group in abstract work units,
/// used instead of wall-clock timing where outputs must be reproducible.
pub fn estimated_work(inst: &TtpInstance) -> BTreeMap<String, f64> {
    let n = inst.dimension() as f64;
    let pairs = n * (n - 1.0) / 2.0;
    let sampled = pairs.min(EXACT_PAIR_LIMIT as f64);
    let sort = sampled * sampled.max(2.0).log2();
    [
        ("distance", 2.0 * pairs + sort),
        ("mode", sampled),
        ("cluster", 3.0 * 9.0 * n),
        ("nnd", n * n),
        ("centroid", n),
        ("mst", n * n),
        ("angle", n),
        ("hull", n * n.max(2.0).log2()),
        ("header", 8.0),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v / 1e6))
    .collect()
}
