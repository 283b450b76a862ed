//! Portfolio complementarity: rank correlation between algorithms with Ward
//! clustering, standalone performance, marginal contributions and Shapley
//! values of the oracle game.
//!
//! The oracle game assigns to a set `S` of algorithms the mean over instances
//! of the best scaled score within `S`, with failures (`-1`) floored at 0 so
//! that the empty set is worth 0.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmark::ScaledMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("unknown algorithm `{0}`")]
    UnknownAlgorithm(String),
    #[error("need at least {need} instances, have {have}")]
    TooFewInstances { need: usize, have: usize },
    #[error("empty roster")]
    EmptyRoster,
}

/// Ranks starting at 1; tied values share the mean of their ranks.
pub fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

/// Spearman coefficient, `None` if either input is constant.
pub fn spearman(a: &[f64], b: &[f64]) -> Option<f64> {
    pearson(&average_ranks(a), &average_ranks(b))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationMatrix {
    pub algorithms: Vec<String>,
    pub rho: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl CorrelationMatrix {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("algorithm");
        for a in &self.algorithms {
            write!(out, ",{a}").unwrap();
        }
        out.push('\n');
        for (a, row) in self.algorithms.iter().zip(&self.rho) {
            out.push_str(a);
            for v in row {
                write!(out, ",{v}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Pairwise Spearman coefficients between algorithm columns. Failures stay at
/// their scaled value of -1. A constant column correlates 0 with every other
/// column (1 with itself) and produces a warning.
pub fn spearman_matrix(scaled: &ScaledMatrix) -> Result<CorrelationMatrix, AnalysisError> {
    let n = scaled.instances.len();
    if n < 2 {
        return Err(AnalysisError::TooFewInstances { need: 2, have: n });
    }
    let a = scaled.algorithms.len();
    let ranks: Vec<Vec<f64>> = (0..a)
        .map(|j| average_ranks(&scaled.scaled.iter().map(|r| r[j]).collect::<Vec<_>>()))
        .collect();
    let mut warnings = Vec::new();
    for (j, r) in ranks.iter().enumerate() {
        if r.iter().all(|&v| v == r[0]) {
            warnings.push(format!(
                "constant column `{}`: correlations set to 0",
                scaled.algorithms[j]
            ));
        }
    }
    let mut rho = vec![vec![0.0; a]; a];
    for i in 0..a {
        rho[i][i] = 1.0;
        for j in i + 1..a {
            let v = pearson(&ranks[i], &ranks[j]).unwrap_or(0.0);
            rho[i][j] = v;
            rho[j][i] = v;
        }
    }
    Ok(CorrelationMatrix {
        algorithms: scaled.algorithms.clone(),
        rho,
        warnings,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Merge {
    /// Cluster ids: `0..n` are leaves, `n + s` is the cluster formed at step `s`.
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WardTree {
    pub labels: Vec<String>,
    pub merges: Vec<Merge>,
    /// Leaf indices in dendrogram order, for laying out a heatmap.
    pub leaf_order: Vec<usize>,
}

impl WardTree {
    pub fn ordered_labels(&self) -> Vec<&str> {
        self.leaf_order
            .iter()
            .map(|&i| self.labels[i].as_str())
            .collect()
    }
}

/// Ward agglomeration on the dissimilarity `1 - rho`.
pub fn ward_order(corr: &CorrelationMatrix) -> WardTree {
    let n = corr.algorithms.len();
    let labels = corr.algorithms.clone();
    if n < 2 {
        return WardTree {
            labels,
            merges: Vec::new(),
            leaf_order: (0..n).collect(),
        };
    }
    let mut condensed = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in i + 1..n {
            condensed.push((1.0 - corr.rho[i][j]).max(0.0));
        }
    }
    let dend = kodama::linkage(&mut condensed, n, kodama::Method::Ward);
    let merges: Vec<Merge> = dend
        .steps()
        .iter()
        .map(|s| Merge {
            left: s.cluster1.min(s.cluster2),
            right: s.cluster1.max(s.cluster2),
            height: s.dissimilarity,
            size: s.size,
        })
        .collect();
    let mut leaf_order = Vec::with_capacity(n);
    let mut stack = vec![n + merges.len() - 1];
    while let Some(c) = stack.pop() {
        if c < n {
            leaf_order.push(c);
        } else {
            let m = &merges[c - n];
            stack.push(m.right);
            stack.push(m.left);
        }
    }
    WardTree {
        labels,
        merges,
        leaf_order,
    }
}

/// The oracle game over a scaled matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CoalitionGame {
    pub algorithms: Vec<String>,
    /// Instance-major scores floored at 0.
    scores: Vec<Vec<f64>>,
}

impl CoalitionGame {
    pub fn new(scaled: &ScaledMatrix) -> Self {
        Self::from_scores(scaled.algorithms.clone(), &scaled.scaled)
    }

    pub fn from_scores(algorithms: Vec<String>, rows: &[Vec<f64>]) -> Self {
        let scores = rows
            .iter()
            .map(|r| r.iter().map(|v| v.max(0.0)).collect())
            .collect();
        CoalitionGame { algorithms, scores }
    }

    pub fn players(&self) -> usize {
        self.algorithms.len()
    }

    pub fn instances(&self) -> usize {
        self.scores.len()
    }

    pub fn index(&self, name: &str) -> Result<usize, AnalysisError> {
        self.algorithms
            .iter()
            .position(|a| a == name)
            .ok_or_else(|| AnalysisError::UnknownAlgorithm(name.into()))
    }

    /// `v(S)` for a coalition given by player indices.
    pub fn value(&self, coalition: &[usize]) -> f64 {
        if self.scores.is_empty() {
            return 0.0;
        }
        let total: f64 = self
            .scores
            .iter()
            .map(|r| coalition.iter().map(|&a| r[a]).fold(0.0, f64::max))
            .sum();
        total / self.scores.len() as f64
    }

    pub fn full_value(&self) -> f64 {
        self.value(&(0..self.players()).collect::<Vec<_>>())
    }
}

/// `v(N) - v(N \ {a})`: how much the oracle loses without `name`.
pub fn marginal_contribution(game: &CoalitionGame, name: &str) -> Result<f64, AnalysisError> {
    let a = game.index(name)?;
    let rest: Vec<usize> = (0..game.players()).filter(|&b| b != a).collect();
    Ok(game.full_value() - game.value(&rest))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ShapleyMethod {
    Exact,
    MonteCarlo { samples: usize, seed: u64 },
}

impl ShapleyMethod {
    pub fn monte_carlo(seed: u64) -> Self {
        ShapleyMethod::MonteCarlo {
            samples: 10_000,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyEntry {
    pub algorithm: String,
    /// `v({a})`, the mean of the floored column.
    pub standalone: f64,
    pub shapley: f64,
    pub marginal_to_full: f64,
    /// Standard error of the estimate; 0 in exact mode.
    pub std_error: f64,
    /// 95% normal-approximation half-width; 0 in exact mode.
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShapleyReport {
    pub method: ShapleyMethod,
    pub full_value: f64,
    pub entries: Vec<ShapleyEntry>,
}

impl ShapleyReport {
    pub fn shapley(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.shapley).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("algorithm,standalone,shapley,marginal_to_full,std_error\n");
        for e in &self.entries {
            writeln!(
                out,
                "{},{},{},{},{}",
                e.algorithm, e.standalone, e.shapley, e.marginal_to_full, e.std_error
            )
            .unwrap();
        }
        out
    }
}

/// Exact values of one instance's max game: with scores sorted descending
/// `s_1 >= .. >= s_A` and `s_{A+1} = 0`, the player at rank `r` receives
/// `sum_{j >= r} (s_j - s_{j+1}) / j`.
fn instance_shapley(row: &[f64], out: &mut [f64]) {
    let a = row.len();
    let mut idx: Vec<usize> = (0..a).collect();
    idx.sort_by(|&x, &y| row[y].total_cmp(&row[x]).then(x.cmp(&y)));
    let mut suffix = 0.0;
    for r in (0..a).rev() {
        let next = if r + 1 < a { row[idx[r + 1]] } else { 0.0 };
        suffix += (row[idx[r]] - next) / (r + 1) as f64;
        out[idx[r]] = suffix;
    }
}

fn exact_shapley(game: &CoalitionGame) -> Vec<f64> {
    let a = game.players();
    let per: Vec<Vec<f64>> = game
        .scores
        .par_iter()
        .map(|row| {
            let mut v = vec![0.0; a];
            instance_shapley(row, &mut v);
            v
        })
        .collect();
    let n = per.len().max(1) as f64;
    (0..a)
        .map(|j| per.iter().map(|v| v[j]).sum::<f64>() / n)
        .collect()
}

/// Marginal of each player when inserted in `perm` order, averaged over instances.
fn permutation_marginals(game: &CoalitionGame, perm: &[usize]) -> Vec<f64> {
    let mut marg = vec![0.0; game.players()];
    for row in &game.scores {
        let mut best = 0.0f64;
        for &p in perm {
            let v = row[p];
            if v > best {
                marg[p] += v - best;
                best = v;
            }
        }
    }
    let n = game.instances().max(1) as f64;
    marg.iter_mut().for_each(|m| *m /= n);
    marg
}

fn monte_carlo_shapley(game: &CoalitionGame, samples: usize, seed: u64) -> (Vec<f64>, Vec<f64>) {
    let a = game.players();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let perms: Vec<Vec<usize>> = (0..samples)
        .map(|_| {
            let mut p: Vec<usize> = (0..a).collect();
            p.shuffle(&mut rng);
            p
        })
        .collect();
    let marg: Vec<Vec<f64>> = perms
        .par_iter()
        .map(|p| permutation_marginals(game, p))
        .collect();
    let k = samples.max(1) as f64;
    let mean: Vec<f64> = (0..a)
        .map(|j| marg.iter().map(|m| m[j]).sum::<f64>() / k)
        .collect();
    let se: Vec<f64> = (0..a)
        .map(|j| {
            if samples < 2 {
                return 0.0;
            }
            let var = marg.iter().map(|m| (m[j] - mean[j]).powi(2)).sum::<f64>() / (k - 1.0);
            (var / k).sqrt()
        })
        .collect();
    (mean, se)
}

pub fn shapley_values(
    game: &CoalitionGame,
    method: ShapleyMethod,
) -> Result<ShapleyReport, AnalysisError> {
    let a = game.players();
    if a == 0 {
        return Err(AnalysisError::EmptyRoster);
    }
    let (phi, se) = match method {
        ShapleyMethod::Exact => (exact_shapley(game), vec![0.0; a]),
        ShapleyMethod::MonteCarlo { samples, seed } => monte_carlo_shapley(game, samples, seed),
    };
    let full = game.full_value();
    let entries = (0..a)
        .map(|j| {
            let rest: Vec<usize> = (0..a).filter(|&b| b != j).collect();
            ShapleyEntry {
                algorithm: game.algorithms[j].clone(),
                standalone: game.value(&[j]),
                shapley: phi[j],
                marginal_to_full: full - game.value(&rest),
                std_error: se[j],
                half_width: 1.96 * se[j],
            }
        })
        .collect();
    Ok(ShapleyReport {
        method,
        full_value: full,
        entries,
    })
}

/// Algorithms by scaled column mean, descending, ties by name.
pub fn standalone_ranking(scaled: &ScaledMatrix) -> Vec<(String, f64)> {
    let means = scaled.column_means();
    let mut out: Vec<(String, f64)> = scaled.algorithms.iter().cloned().zip(means).collect();
    out.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    out
}

/// Everything the complementarity analysis produces for one scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub spearman: CorrelationMatrix,
    pub ward: WardTree,
    pub standalone: Vec<(String, f64)>,
    pub shapley: ShapleyReport,
}

pub fn analyze(
    scaled: &ScaledMatrix,
    method: ShapleyMethod,
) -> Result<AnalysisReport, AnalysisError> {
    let spearman = spearman_matrix(scaled)?;
    let ward = ward_order(&spearman);
    let shapley = shapley_values(&CoalitionGame::new(scaled), method)?;
    Ok(AnalysisReport {
        spearman,
        ward,
        standalone: standalone_ranking(scaled),
        shapley,
    })
}

impl AnalysisReport {
    /// Writes `spearman.csv`, `ward.json`, `standalone.csv`, `shapley.csv`
    /// and `analysis.json` into `dir`.
    pub fn write(&self, dir: &Path) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("spearman.csv"), self.spearman.to_csv())?;
        std::fs::write(dir.join("ward.json"), to_json(&self.ward))?;
        let mut st = String::from("algorithm,mean_scaled\n");
        for (a, v) in &self.standalone {
            writeln!(st, "{a},{v}").unwrap();
        }
        std::fs::write(dir.join("standalone.csv"), st)?;
        std::fs::write(dir.join("shapley.csv"), self.shapley.to_csv())?;
        std::fs::write(dir.join("analysis.json"), to_json(self))
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scaled(algorithms: &[&str], rows: Vec<Vec<f64>>) -> ScaledMatrix {
        ScaledMatrix {
            instances: (0..rows.len()).map(|i| format!("i{i}")).collect(),
            algorithms: algorithms.iter().map(|s| s.to_string()).collect(),
            scaled: rows,
        }
    }

    #[test]
    fn ranks_average_ties() {
        assert_eq!(
            average_ranks(&[3.0, 1.0, 3.0, 2.0]),
            vec![3.5, 1.0, 3.5, 2.0]
        );
    }

    #[test]
    fn spearman_signs() {
        let a = [0.1, 0.5, 0.3, 0.9];
        let b: Vec<f64> = a.iter().map(|v: &f64| -v.exp()).collect();
        assert_eq!(spearman(&a, &a), Some(1.0));
        assert_eq!(spearman(&a, &b), Some(-1.0));
        assert_eq!(spearman(&a, &[2.0; 4]), None);
    }

    #[test]
    fn constant_column_warns() {
        let s = scaled(
            &["A", "B"],
            vec![vec![1.0, 0.0], vec![0.0, 0.0], vec![0.5, 0.0]],
        );
        let c = spearman_matrix(&s).unwrap();
        assert_eq!(c.rho, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert_eq!(c.warnings.len(), 1);
    }

    #[test]
    fn ward_merges_correlated_pair_first() {
        // A and B nearly agree; C is unrelated
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|i| {
                let x = i as f64 / 40.0;
                let c = ((i * 17) % 40) as f64 / 40.0;
                vec![x, if i == 3 { 0.0 } else { x }, c]
            })
            .collect();
        let corr = spearman_matrix(&scaled(&["A", "B", "C"], rows)).unwrap();
        assert!(corr.rho[0][1] > 0.99);
        let tree = ward_order(&corr);
        assert_eq!((tree.merges[0].left, tree.merges[0].right), (0, 1));
        let mut order = tree.leaf_order.clone();
        order.sort();
        assert_eq!(order, vec![0, 1, 2]);
    }

    #[test]
    fn two_player_shapley() {
        let g = CoalitionGame::from_scores(
            vec!["A".into(), "B".into()],
            &[vec![1.0, 0.0], vec![1.0, 0.0]],
        );
        let r = shapley_values(&g, ShapleyMethod::Exact).unwrap();
        assert_eq!(r.shapley(), vec![1.0, 0.0]);
        assert_eq!(r.full_value, 1.0);
    }

    #[test]
    fn failures_are_floored() {
        let g = CoalitionGame::from_scores(
            vec!["A".into(), "B".into()],
            &[vec![-1.0, 1.0], vec![1.0, 0.0]],
        );
        assert_eq!(g.value(&[]), 0.0);
        assert_eq!(g.value(&[0]), 0.5);
        let r = shapley_values(&g, ShapleyMethod::Exact).unwrap();
        assert_eq!(r.entries[0].marginal_to_full, 0.5);
        assert!((r.shapley().iter().sum::<f64>() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn marginal_of_a_niche_algorithm() {
        // C is best by 0.5 on one row in ten
        let rows: Vec<Vec<f64>> = (0..10)
            .map(|i| {
                if i == 0 {
                    vec![0.5, 0.2, 1.0]
                } else {
                    vec![1.0, 0.5, 0.0]
                }
            })
            .collect();
        let g = CoalitionGame::from_scores(vec!["A".into(), "B".into(), "C".into()], &rows);
        assert!((marginal_contribution(&g, "C").unwrap() - 0.05).abs() < 1e-15);
        assert_eq!(
            marginal_contribution(&g, "Z"),
            Err(AnalysisError::UnknownAlgorithm("Z".into()))
        );
    }

    #[test]
    fn twins_share_equally_and_contribute_nothing_at_the_margin() {
        let rows = vec![
            vec![0.3, 0.9, 0.9],
            vec![1.0, 0.2, 0.2],
            vec![0.0, 0.6, 0.6],
        ];
        let g = CoalitionGame::from_scores(vec!["A".into(), "B".into(), "B2".into()], &rows);
        let r = shapley_values(&g, ShapleyMethod::Exact).unwrap();
        assert_eq!(r.entries[1].shapley, r.entries[2].shapley);
        assert_eq!(r.entries[1].marginal_to_full, 0.0);
    }

    #[test]
    fn monte_carlo_is_seeded_and_efficient() {
        let rows: Vec<Vec<f64>> = (0..15)
            .map(|i| {
                (0..5)
                    .map(|j| ((i * 7 + j * 3) % 11) as f64 / 10.0)
                    .collect()
            })
            .collect();
        let g = CoalitionGame::from_scores((0..5).map(|j| format!("a{j}")).collect(), &rows);
        let m = ShapleyMethod::MonteCarlo {
            samples: 500,
            seed: 4,
        };
        let a = shapley_values(&g, m).unwrap();
        assert_eq!(a, shapley_values(&g, m).unwrap());
        assert!((a.shapley().iter().sum::<f64>() - g.full_value()).abs() < 1e-12);
    }

    #[test]
    fn standalone_sorted_with_name_ties() {
        let s = scaled(
            &["B", "A", "C"],
            vec![vec![1.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
        );
        let r = standalone_ranking(&s);
        assert_eq!(
            r.iter().map(|p| p.0.as_str()).collect::<Vec<_>>(),
            vec!["A", "B", "C"]
        );
    }
}
