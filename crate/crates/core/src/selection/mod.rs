//! Per-instance algorithm selection: Lasso regression, pairwise random-forest
//! classification, k-means clustering and k-nearest neighbours, evaluated by
//! cross-validation on scaled performance data.

pub mod cluster;
pub mod forest;
pub mod linear;

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::benchmark::Scenario;
use crate::features::FeatureVector;
use cluster::{k_nearest, kmeans, nearest};
use forest::{ForestParams, RandomForest};
use linear::{fit_lasso_cv, LassoModel};

pub const MODEL_VERSION: &str = "ttp-folio-selector/1";

#[derive(Debug, Error, PartialEq)]
pub enum SelectionError {
    #[error("unknown feature `{0}`")]
    UnknownFeature(String),
    #[error("unknown selector family `{0}`")]
    UnknownFamily(String),
    #[error("training fold is empty")]
    EmptyTraining,
    #[error("need at least {need} training instances, have {have}")]
    TooFewTraining { need: usize, have: usize },
    #[error("operation needs a {0} selector")]
    WrongFamily(&'static str),
    #[error("bad model file: {0}")]
    Model(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Family {
    Regression,
    PairwiseRF,
    Clustering,
    KNN,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::Regression,
        Family::PairwiseRF,
        Family::Clustering,
        Family::KNN,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Regression => "regression",
            Family::PairwiseRF => "pairwise_rf",
            Family::Clustering => "clustering",
            Family::KNN => "knn",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = SelectionError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "regression" | "lasso" => Ok(Family::Regression),
            "pairwise_rf" | "pairwise" | "rf" => Ok(Family::PairwiseRF),
            "clustering" | "kmeans" | "isac" => Ok(Family::Clustering),
            "knn" => Ok(Family::KNN),
            _ => Err(SelectionError::UnknownFamily(s.to_string())),
        }
    }
}

/// Features and scaled scores aligned by instance, with fold labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub instances: Vec<String>,
    pub feature_names: Vec<String>,
    /// May contain NaN; imputed per training fold.
    pub x: Vec<Vec<f64>>,
    pub algorithms: Vec<String>,
    pub y: Vec<Vec<f64>>,
    /// 1-based fold of each instance.
    pub folds: Vec<usize>,
    pub k: usize,
}

impl Dataset {
    pub fn from_scenario(s: &Scenario) -> Self {
        Dataset {
            instances: s.matrix.instances.clone(),
            feature_names: crate::features::FEATURE_NAMES
                .iter()
                .map(|f| f.to_string())
                .collect(),
            x: s.features.iter().map(|f| f.values.clone()).collect(),
            algorithms: s.matrix.algorithms.clone(),
            y: s.scaled.scaled.clone(),
            folds: s.splits.folds.clone(),
            k: s.splits.k,
        }
    }

    /// Keeps only the named feature columns, in the given order.
    pub fn with_features(&self, names: &[&str]) -> Result<Dataset, SelectionError> {
        let cols = names
            .iter()
            .map(|n| {
                self.feature_names
                    .iter()
                    .position(|f| f == n)
                    .ok_or_else(|| SelectionError::UnknownFeature(n.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let mut d = self.clone();
        d.feature_names = names.iter().map(|s| s.to_string()).collect();
        d.x = self
            .x
            .iter()
            .map(|r| cols.iter().map(|&c| r[c]).collect())
            .collect();
        Ok(d)
    }

    /// Rows outside `fold`; all rows when `fold` is `None`.
    pub fn train_rows(&self, fold: Option<usize>) -> Vec<usize> {
        (0..self.instances.len())
            .filter(|&i| fold.is_none_or(|f| self.folds[i] != f))
            .collect()
    }

    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.instances.len())
            .filter(|&i| self.folds[i] == fold)
            .collect()
    }

    fn column_means(&self, rows: &[usize]) -> Vec<f64> {
        let n = rows.len().max(1) as f64;
        (0..self.algorithms.len())
            .map(|a| rows.iter().map(|&i| self.y[i][a]).sum::<f64>() / n)
            .collect()
    }

    /// Algorithm with the best mean over all instances, and that mean.
    pub fn single_best(&self) -> (usize, f64) {
        let all: Vec<usize> = (0..self.instances.len()).collect();
        let means = self.column_means(&all);
        let a = forest::argmax(&means);
        (a, means[a])
    }

    /// Mean over instances of the best score in the row.
    pub fn oracle(&self) -> f64 {
        let n = self.y.len().max(1) as f64;
        self.y
            .iter()
            .map(|r| r.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .sum::<f64>()
            / n
    }

    pub fn feature_row(&self, fv: &FeatureVector) -> Result<Vec<f64>, SelectionError> {
        self.feature_names
            .iter()
            .map(|n| {
                fv.get(n)
                    .ok_or_else(|| SelectionError::UnknownFeature(n.clone()))
            })
            .collect()
    }
}

/// Median imputation, then z-scoring of the columns that vary on the
/// training rows; constant columns are dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub medians: Vec<f64>,
    pub kept: Vec<usize>,
    pub means: Vec<f64>,
    pub stds: Vec<f64>,
}

impl Normalizer {
    pub fn fit(x: &[Vec<f64>], rows: &[usize]) -> Self {
        let f = x.first().map_or(0, Vec::len);
        let mut medians = Vec::with_capacity(f);
        let (mut kept, mut means, mut stds) = (Vec::new(), Vec::new(), Vec::new());
        for j in 0..f {
            let mut col: Vec<f64> = rows
                .iter()
                .map(|&i| x[i][j])
                .filter(|v| v.is_finite())
                .collect();
            col.sort_by(f64::total_cmp);
            let med = match col.len() {
                0 => 0.0,
                k if k % 2 == 1 => col[k / 2],
                k => (col[k / 2 - 1] + col[k / 2]) / 2.0,
            };
            medians.push(med);
            let vals: Vec<f64> = rows
                .iter()
                .map(|&i| if x[i][j].is_finite() { x[i][j] } else { med })
                .collect();
            let n = vals.len().max(1) as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let sd = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt();
            if sd > 1e-12 * mean.abs().max(1.0) {
                kept.push(j);
                means.push(mean);
                stds.push(sd);
            }
        }
        Normalizer {
            medians,
            kept,
            means,
            stds,
        }
    }

    pub fn transform(&self, row: &[f64]) -> Vec<f64> {
        self.kept
            .iter()
            .enumerate()
            .map(|(k, &j)| {
                let v = if row[j].is_finite() {
                    row[j]
                } else {
                    self.medians[j]
                };
                (v - self.means[k]) / self.stds[k]
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectorConfig {
    pub seed: u64,
    pub n_trees: usize,
    pub max_depth: usize,
    /// Cluster count; `None` uses `ceil(sqrt(n) / 2)` capped at 25.
    pub clusters: Option<usize>,
    pub kmeans_restarts: usize,
    pub knn_k: usize,
    pub lasso_lambdas: usize,
    pub lasso_inner_folds: usize,
}

impl Default for SelectorConfig {
    fn default() -> Self {
        SelectorConfig {
            seed: 0,
            n_trees: 100,
            max_depth: 12,
            clusters: None,
            kmeans_restarts: 25,
            knn_k: 32,
            lasso_lambdas: 10,
            lasso_inner_folds: 3,
        }
    }
}

impl SelectorConfig {
    pub fn with_seed(seed: u64) -> Self {
        SelectorConfig {
            seed,
            ..Default::default()
        }
    }
}

/// Default cluster count for `n` training instances.
pub fn default_clusters(n: usize) -> usize {
    (((n as f64).sqrt() / 2.0).ceil() as usize).clamp(1, 25)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairModel {
    pub a: usize,
    pub b: usize,
    /// Predicts class 1 when `a` beats `b`; `None` if no training row told
    /// them apart.
    pub forest: Option<RandomForest>,
    /// Winner by mean training score, used for undecided pairs.
    pub fallback: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Model {
    Regression {
        models: Vec<LassoModel>,
    },
    PairwiseRF {
        pairs: Vec<PairModel>,
    },
    Clustering {
        centroids: Vec<Vec<f64>>,
        labels: Vec<usize>,
    },
    KNN {
        k: usize,
        x: Vec<Vec<f64>>,
        y: Vec<Vec<f64>>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedSelector {
    pub version: String,
    pub family: Family,
    pub algorithms: Vec<String>,
    pub feature_names: Vec<String>,
    pub normalizer: Normalizer,
    pub model: Model,
    /// Mean scaled score per algorithm on the training rows; breaks ties.
    pub train_means: Vec<f64>,
    pub config: SelectorConfig,
}

/// Highest score, ties by higher training mean, then lower index.
fn pick(scores: &[f64], tie: &[f64]) -> usize {
    let mut best = 0;
    for a in 1..scores.len() {
        if scores[a] > scores[best] || (scores[a] == scores[best] && tie[a] > tie[best]) {
            best = a;
        }
    }
    best
}

impl TrainedSelector {
    /// Chosen algorithm index for a raw feature row in `feature_names` order.
    pub fn select(&self, raw: &[f64]) -> usize {
        let z = self.normalizer.transform(raw);
        match &self.model {
            Model::Regression { models } => {
                let preds: Vec<f64> = models.iter().map(|m| m.predict(&z)).collect();
                pick(&preds, &self.train_means)
            }
            Model::PairwiseRF { .. } => {
                let votes = self.votes(raw).expect("pairwise model");
                let v: Vec<f64> = votes.iter().map(|&c| c as f64).collect();
                pick(&v, &self.train_means)
            }
            Model::Clustering { centroids, labels } => labels[nearest(centroids, &z)],
            Model::KNN { k, x, y } => {
                let nb = k_nearest(x, &z, *k);
                let mut total = vec![0.0; self.algorithms.len()];
                for &i in &nb {
                    for (m, v) in total.iter_mut().zip(&y[i]) {
                        *m += v;
                    }
                }
                pick(&total, &self.train_means)
            }
        }
    }

    /// Pairwise vote counts per algorithm; `None` for other families.
    pub fn votes(&self, raw: &[f64]) -> Option<Vec<usize>> {
        let Model::PairwiseRF { pairs } = &self.model else {
            return None;
        };
        let z = self.normalizer.transform(raw);
        let mut votes = vec![0; self.algorithms.len()];
        for p in pairs {
            let winner = match &p.forest {
                Some(f) => {
                    let pa = f.predict_proba(&z)[1];
                    if pa > 0.5 {
                        p.a
                    } else if pa < 0.5 {
                        p.b
                    } else {
                        p.fallback
                    }
                }
                None => p.fallback,
            };
            votes[winner] += 1;
        }
        Some(votes)
    }

    /// Chosen algorithm name for a full feature vector.
    pub fn select_features(&self, fv: &FeatureVector) -> Result<&str, SelectionError> {
        let row = self
            .feature_names
            .iter()
            .map(|n| {
                fv.get(n)
                    .ok_or_else(|| SelectionError::UnknownFeature(n.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(&self.algorithms[self.select(&row)])
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn from_json(text: &str) -> Result<Self, SelectionError> {
        let s: TrainedSelector =
            serde_json::from_str(text).map_err(|e| SelectionError::Model(e.to_string()))?;
        if s.version != MODEL_VERSION {
            return Err(SelectionError::Model(format!(
                "unsupported version `{}`",
                s.version
            )));
        }
        Ok(s)
    }
}

struct Prepared {
    rows: Vec<usize>,
    normalizer: Normalizer,
    z: Vec<Vec<f64>>,
    train_means: Vec<f64>,
}

fn prepare(data: &Dataset, fold: Option<usize>) -> Result<Prepared, SelectionError> {
    let rows = data.train_rows(fold);
    if rows.is_empty() {
        return Err(SelectionError::EmptyTraining);
    }
    let normalizer = Normalizer::fit(&data.x, &rows);
    let z = rows
        .iter()
        .map(|&i| normalizer.transform(&data.x[i]))
        .collect();
    let train_means = data.column_means(&rows);
    Ok(Prepared {
        rows,
        normalizer,
        z,
        train_means,
    })
}

fn finish(
    data: &Dataset,
    family: Family,
    p: Prepared,
    model: Model,
    config: SelectorConfig,
) -> TrainedSelector {
    TrainedSelector {
        version: MODEL_VERSION.to_string(),
        family,
        algorithms: data.algorithms.clone(),
        feature_names: data.feature_names.clone(),
        normalizer: p.normalizer,
        model,
        train_means: p.train_means,
        config,
    }
}

fn fold_seed(seed: u64, fold: Option<usize>) -> u64 {
    seed ^ (fold.unwrap_or(0) as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

/// One Lasso model per algorithm predicting its scaled score.
pub fn train_regression_selector(
    data: &Dataset,
    fold: Option<usize>,
    cfg: &SelectorConfig,
) -> Result<TrainedSelector, SelectionError> {
    let p = prepare(data, fold)?;
    let seed = fold_seed(cfg.seed, fold);
    let models = (0..data.algorithms.len())
        .map(|a| {
            let y: Vec<f64> = p.rows.iter().map(|&i| data.y[i][a]).collect();
            fit_lasso_cv(&p.z, &y, cfg.lasso_lambdas, cfg.lasso_inner_folds, seed)
        })
        .collect();
    Ok(finish(
        data,
        Family::Regression,
        p,
        Model::Regression { models },
        *cfg,
    ))
}

/// A random forest per algorithm pair, trained on which of the two scored
/// higher and weighted by the score difference.
pub fn train_pairwise_selector(
    data: &Dataset,
    fold: Option<usize>,
    cfg: &SelectorConfig,
) -> Result<TrainedSelector, SelectionError> {
    let p = prepare(data, fold)?;
    let a_count = data.algorithms.len();
    let pairs: Vec<(usize, usize)> = (0..a_count)
        .flat_map(|a| (a + 1..a_count).map(move |b| (a, b)))
        .collect();
    let n_features = p.normalizer.kept.len();
    let mut params = ForestParams::sqrt_features(n_features.max(1));
    params.n_trees = cfg.n_trees;
    params.tree.max_depth = cfg.max_depth;
    let base = fold_seed(cfg.seed, fold);
    let models: Vec<PairModel> = pairs
        .par_iter()
        .enumerate()
        .map(|(k, &(a, b))| {
            let (mut x, mut y, mut w) = (Vec::new(), Vec::new(), Vec::new());
            for (r, &i) in p.rows.iter().enumerate() {
                let diff = data.y[i][a] - data.y[i][b];
                if diff != 0.0 {
                    x.push(p.z[r].clone());
                    y.push((diff > 0.0) as usize);
                    w.push(diff.abs());
                }
            }
            let fallback = if p.train_means[b] > p.train_means[a] {
                b
            } else {
                a
            };
            let forest = (!x.is_empty() && n_features > 0).then(|| {
                RandomForest::fit(
                    &x,
                    &y,
                    &w,
                    2,
                    params,
                    base ^ (k as u64 + 1).wrapping_mul(0xD1B5_4A32_D192_ED03),
                )
            });
            PairModel {
                a,
                b,
                forest,
                fallback,
            }
        })
        .collect();
    Ok(finish(
        data,
        Family::PairwiseRF,
        p,
        Model::PairwiseRF { pairs: models },
        *cfg,
    ))
}

/// k-means on normalized features; each cluster votes for its best
/// algorithm by mean scaled score.
pub fn train_cluster_selector(
    data: &Dataset,
    fold: Option<usize>,
    k: Option<usize>,
    cfg: &SelectorConfig,
) -> Result<TrainedSelector, SelectionError> {
    let p = prepare(data, fold)?;
    let k = k
        .or(cfg.clusters)
        .unwrap_or_else(|| default_clusters(p.rows.len()));
    if k > p.rows.len() {
        return Err(SelectionError::TooFewTraining {
            need: k,
            have: p.rows.len(),
        });
    }
    let km = kmeans(&p.z, k, cfg.kmeans_restarts, fold_seed(cfg.seed, fold));
    let a_count = data.algorithms.len();
    let labels = (0..km.centroids.len())
        .map(|c| {
            let members: Vec<usize> = (0..p.rows.len())
                .filter(|&r| km.assignment[r] == c)
                .collect();
            let total: Vec<f64> = (0..a_count)
                .map(|a| members.iter().map(|&r| data.y[p.rows[r]][a]).sum::<f64>())
                .collect();
            pick(&total, &p.train_means)
        })
        .collect();
    let mut cfg = *cfg;
    cfg.clusters = Some(k);
    Ok(finish(
        data,
        Family::Clustering,
        p,
        Model::Clustering {
            centroids: km.centroids,
            labels,
        },
        cfg,
    ))
}

/// Best mean scaled score among the `k` nearest training instances.
pub fn train_knn_selector(
    data: &Dataset,
    fold: Option<usize>,
    k: usize,
    cfg: &SelectorConfig,
) -> Result<TrainedSelector, SelectionError> {
    let p = prepare(data, fold)?;
    if k == 0 || k > p.rows.len() {
        return Err(SelectionError::TooFewTraining {
            need: k.max(1),
            have: p.rows.len(),
        });
    }
    let x = p.z.clone();
    let y = p.rows.iter().map(|&i| data.y[i].clone()).collect();
    let mut cfg = *cfg;
    cfg.knn_k = k;
    Ok(finish(data, Family::KNN, p, Model::KNN { k, x, y }, cfg))
}

pub fn train_selector(
    family: Family,
    data: &Dataset,
    fold: Option<usize>,
    cfg: &SelectorConfig,
) -> Result<TrainedSelector, SelectionError> {
    match family {
        Family::Regression => train_regression_selector(data, fold, cfg),
        Family::PairwiseRF => train_pairwise_selector(data, fold, cfg),
        Family::Clustering => train_cluster_selector(data, fold, None, cfg),
        Family::KNN => train_knn_selector(data, fold, cfg.knn_k, cfg),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectorReport {
    pub family: String,
    pub features: Vec<String>,
    /// Mean over all instances of the selected algorithm's scaled score.
    pub mean: f64,
    pub per_fold: Vec<f64>,
    pub single_best: f64,
    pub single_best_algorithm: String,
    pub oracle: f64,
    /// `(mean - single_best) / (oracle - single_best)`; 0 when the oracle
    /// does not beat the single best.
    pub gap_closed: f64,
    pub gap_remaining: f64,
    /// Selected algorithm per instance.
    pub selections: Vec<String>,
}

/// Gap closure with the degenerate case mapped to 0.
pub fn gap_closed(mean: f64, single_best: f64, oracle: f64) -> f64 {
    let den = oracle - single_best;
    if den.abs() <= 1e-12 {
        0.0
    } else {
        (mean - single_best) / den
    }
}

/// Builds a report from one selection per instance.
pub fn report_from_selections(family: &str, data: &Dataset, chosen: &[usize]) -> SelectorReport {
    let n = data.instances.len();
    let perf: Vec<f64> = (0..n).map(|i| data.y[i][chosen[i]]).collect();
    let mean = perf.iter().sum::<f64>() / n.max(1) as f64;
    let per_fold = (1..=data.k)
        .map(|f| {
            let rows = data.test_rows(f);
            rows.iter().map(|&i| perf[i]).sum::<f64>() / rows.len().max(1) as f64
        })
        .collect();
    let (sb, sb_val) = data.single_best();
    let oracle = data.oracle();
    SelectorReport {
        family: family.to_string(),
        features: data.feature_names.clone(),
        mean,
        per_fold,
        single_best: sb_val,
        single_best_algorithm: data.algorithms[sb].clone(),
        oracle,
        gap_closed: gap_closed(mean, sb_val, oracle),
        gap_remaining: oracle - mean,
        selections: chosen.iter().map(|&a| data.algorithms[a].clone()).collect(),
    }
}

/// Cross-validated performance: each fold is predicted by a selector trained
/// on the other folds.
pub fn evaluate_selector(
    family: Family,
    data: &Dataset,
    cfg: &SelectorConfig,
) -> Result<SelectorReport, SelectionError> {
    let mut chosen = vec![0; data.instances.len()];
    for f in 1..=data.k {
        let test = data.test_rows(f);
        if test.is_empty() {
            continue;
        }
        let sel = train_selector(family, data, Some(f), cfg)?;
        for i in test {
            chosen[i] = sel.select(&data.x[i]);
        }
    }
    Ok(report_from_selections(family.name(), data, &chosen))
}

/// Retrains and evaluates on the named feature columns only.
pub fn select_with_subset(
    data: &Dataset,
    names: &[&str],
    family: Family,
    cfg: &SelectorConfig,
) -> Result<SelectorReport, SelectionError> {
    evaluate_selector(family, &data.with_features(names)?, cfg)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImportanceReport {
    pub features: Vec<String>,
    /// Mean over pairwise forests, normalized to sum to 1.
    pub mean: Vec<f64>,
    pub p25: Vec<f64>,
    pub p75: Vec<f64>,
}

impl ImportanceReport {
    /// Feature indices by decreasing mean importance.
    pub fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.mean.len()).collect();
        idx.sort_by(|&a, &b| self.mean[b].total_cmp(&self.mean[a]).then(a.cmp(&b)));
        idx
    }
}

/// Linear-interpolation percentile of sorted data, `q` in [0, 1].
pub fn percentile(sorted: &[f64], q: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Gini importance of every input feature across all pairwise forests.
/// Features dropped as constant get 0.
pub fn gini_importance(sel: &TrainedSelector) -> Result<ImportanceReport, SelectionError> {
    let Model::PairwiseRF { pairs } = &sel.model else {
        return Err(SelectionError::WrongFamily("pairwise_rf"));
    };
    let f = sel.feature_names.len();
    let per_forest: Vec<Vec<f64>> = pairs
        .iter()
        .filter_map(|p| p.forest.as_ref())
        .map(|forest| {
            let mut full = vec![0.0; f];
            for (k, v) in forest.feature_importances().into_iter().enumerate() {
                full[sel.normalizer.kept[k]] = v;
            }
            full
        })
        .collect();
    let mut mean = vec![0.0; f];
    let (mut p25, mut p75) = (vec![0.0; f], vec![0.0; f]);
    if !per_forest.is_empty() {
        for j in 0..f {
            let mut col: Vec<f64> = per_forest.iter().map(|v| v[j]).collect();
            mean[j] = col.iter().sum::<f64>() / col.len() as f64;
            col.sort_by(f64::total_cmp);
            p25[j] = percentile(&col, 0.25);
            p75[j] = percentile(&col, 0.75);
        }
        forest::normalize_sum(&mut mean);
    }
    Ok(ImportanceReport {
        features: sel.feature_names.clone(),
        mean,
        p25,
        p75,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Two algorithms; A is best iff feature 0 > 0.5. Feature 1 is noise.
    pub(crate) fn step_data(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let f: f64 = rng.random();
            x.push(vec![f, rng.random()]);
            y.push(if f > 0.5 {
                vec![1.0, 0.0]
            } else {
                vec![0.0, 1.0]
            });
        }
        Dataset {
            instances: (0..n).map(|i| format!("i{i}")).collect(),
            feature_names: vec!["f".into(), "noise".into()],
            x,
            algorithms: vec!["A".into(), "B".into()],
            y,
            folds: (0..n).map(|i| i % 10 + 1).collect(),
            k: 10,
        }
    }

    #[test]
    fn pairwise_recovers_step_rule() {
        let d = step_data(200, 1);
        let r = evaluate_selector(Family::PairwiseRF, &d, &SelectorConfig::with_seed(1)).unwrap();
        assert!(r.mean > 0.97, "{}", r.mean);
        let sel = train_pairwise_selector(&d, None, &SelectorConfig::with_seed(1)).unwrap();
        assert_eq!(sel.select(&[0.9, 0.5]), 0);
        assert_eq!(sel.select(&[0.1, 0.5]), 1);
        assert_eq!(sel.votes(&[0.9, 0.5]).unwrap().iter().sum::<usize>(), 1);
        let imp = gini_importance(&sel).unwrap();
        assert_eq!(imp.ranking()[0], 0);
        assert!((imp.mean.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regression_picks_linear_winner() {
        let mut d = step_data(200, 2);
        for (x, y) in d.x.iter().zip(d.y.iter_mut()) {
            *y = vec![x[0], 1.0 - x[0]];
        }
        let sel = train_regression_selector(&d, None, &SelectorConfig::default()).unwrap();
        assert_eq!(sel.select(&[0.8, 0.3]), 0);
        assert_eq!(sel.select(&[0.2, 0.3]), 1);
        // an affine change of a feature column is absorbed by z-scoring
        let mut scaled = d.clone();
        scaled.x.iter_mut().for_each(|r| r[0] = 3.0 * r[0] + 7.0);
        let s2 = train_regression_selector(&scaled, None, &SelectorConfig::default()).unwrap();
        for q in [0.1, 0.45, 0.55, 0.9] {
            assert_eq!(s2.select(&[3.0 * q + 7.0, 0.3]), sel.select(&[q, 0.3]));
        }
    }

    #[test]
    fn constant_scores_fall_back_to_single_best() {
        let mut d = step_data(50, 3);
        d.y.iter_mut().for_each(|r| *r = vec![0.4, 0.6]);
        for fam in Family::ALL {
            let mut cfg = SelectorConfig::with_seed(3);
            cfg.knn_k = 5;
            cfg.n_trees = 5;
            let r = evaluate_selector(fam, &d, &cfg).unwrap();
            assert!(r.selections.iter().all(|s| s == "B"), "{fam}");
            assert_eq!(r.gap_closed, 0.0);
        }
    }

    #[test]
    fn cluster_and_knn_degenerate_cases() {
        let d = step_data(60, 4);
        let (sb, _) = d.single_best();
        let one = train_cluster_selector(&d, None, Some(1), &SelectorConfig::default()).unwrap();
        let all = train_knn_selector(&d, None, 60, &SelectorConfig::default()).unwrap();
        for i in 0..60 {
            assert_eq!(one.select(&d.x[i]), sb);
            assert_eq!(all.select(&d.x[i]), sb);
        }
        let nn = train_knn_selector(&d, None, 1, &SelectorConfig::default()).unwrap();
        for i in 0..60 {
            assert_eq!(d.y[i][nn.select(&d.x[i])], 1.0);
        }
        assert!(matches!(
            train_knn_selector(&d, Some(1), 60, &SelectorConfig::default()),
            Err(SelectionError::TooFewTraining { .. })
        ));
    }

    #[test]
    fn blobs_are_separated_by_clustering() {
        let mut d = step_data(100, 5);
        for (i, x) in d.x.iter_mut().enumerate() {
            x[0] = if i % 2 == 0 {
                0.1 + x[1] * 0.01
            } else {
                5.0 + x[1] * 0.01
            };
        }
        for (x, y) in d.x.iter().zip(d.y.iter_mut()) {
            *y = if x[0] > 1.0 {
                vec![1.0, 0.0]
            } else {
                vec![0.0, 1.0]
            };
        }
        let mut cfg = SelectorConfig::with_seed(5);
        cfg.clusters = Some(2);
        let r = evaluate_selector(Family::Clustering, &d, &cfg).unwrap();
        assert_eq!(r.mean, 1.0);
        assert_eq!(r.gap_closed, 1.0);
    }

    #[test]
    fn test_fold_features_do_not_leak() {
        let d = step_data(100, 6);
        let mut poked = d.clone();
        for i in poked.test_rows(3) {
            poked.x[i] = vec![1e6, f64::NAN];
        }
        let cfg = SelectorConfig {
            n_trees: 10,
            ..SelectorConfig::with_seed(6)
        };
        for fam in Family::ALL {
            let mut c = cfg;
            c.knn_k = 8;
            let a = train_selector(fam, &d, Some(3), &c).unwrap();
            let b = train_selector(fam, &poked, Some(3), &c).unwrap();
            assert_eq!(a, b, "{fam}");
        }
    }

    #[test]
    fn model_json_round_trip() {
        let d = step_data(40, 7);
        let cfg = SelectorConfig {
            n_trees: 3,
            knn_k: 4,
            ..SelectorConfig::with_seed(7)
        };
        for fam in Family::ALL {
            let sel = train_selector(fam, &d, None, &cfg).unwrap();
            let back = TrainedSelector::from_json(&sel.to_json()).unwrap();
            assert_eq!(back, sel);
        }
        let bad = train_selector(Family::KNN, &d, None, &cfg)
            .unwrap()
            .to_json()
            .replace(MODEL_VERSION, "v0");
        assert!(matches!(
            TrainedSelector::from_json(&bad),
            Err(SelectionError::Model(_))
        ));
    }

    #[test]
    fn gap_closed_extremes() {
        let d = step_data(40, 8);
        let oracle: Vec<usize> = d.y.iter().map(|r| forest::argmax(r)).collect();
        assert_eq!(
            report_from_selections("oracle", &d, &oracle).gap_closed,
            1.0
        );
        let (sb, _) = d.single_best();
        assert_eq!(
            report_from_selections("sb", &d, &vec![sb; 40]).gap_closed,
            0.0
        );
        assert!(matches!(
            d.with_features(&["nope"]),
            Err(SelectionError::UnknownFeature(_))
        ));
    }

    #[test]
    fn percentiles_interpolate() {
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0, 5.0], 0.25), 2.0);
        assert_eq!(percentile(&[0.0, 1.0], 0.75), 0.75);
    }
}
