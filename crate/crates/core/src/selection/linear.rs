//! L1-regularized least squares by cyclic coordinate descent.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

const MAX_SWEEPS: usize = 1000;
const TOL: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LassoModel {
    pub intercept: f64,
    pub coef: Vec<f64>,
    pub lambda: f64,
}

impl LassoModel {
    pub fn predict(&self, row: &[f64]) -> f64 {
        self.intercept + self.coef.iter().zip(row).map(|(w, x)| w * x).sum::<f64>()
    }
}

fn soft(z: f64, t: f64) -> f64 {
    if z > t {
        z - t
    } else if z < -t {
        z + t
    } else {
        0.0
    }
}

fn column_means(x: &[Vec<f64>], f: usize) -> Vec<f64> {
    let n = x.len() as f64;
    (0..f)
        .map(|j| x.iter().map(|r| r[j]).sum::<f64>() / n)
        .collect()
}

/// Minimizes `1/(2n) |y - b - Xw|^2 + lambda |w|_1`.
pub fn fit_lasso(x: &[Vec<f64>], y: &[f64], lambda: f64) -> LassoModel {
    let n = x.len();
    let f = x.first().map_or(0, Vec::len);
    if n == 0 {
        return LassoModel {
            intercept: 0.0,
            coef: vec![0.0; f],
            lambda,
        };
    }
    let nf = n as f64;
    let xm = column_means(x, f);
    let ym = y.iter().sum::<f64>() / nf;
    let xc: Vec<Vec<f64>> = (0..f)
        .map(|j| x.iter().map(|r| r[j] - xm[j]).collect())
        .collect();
    let z: Vec<f64> = xc
        .iter()
        .map(|c| c.iter().map(|v| v * v).sum::<f64>() / nf)
        .collect();
    let mut w = vec![0.0; f];
    let mut r: Vec<f64> = y.iter().map(|v| v - ym).collect();
    for _ in 0..MAX_SWEEPS {
        let mut max_step: f64 = 0.0;
        for j in 0..f {
            if z[j] <= 0.0 {
                continue;
            }
            let rho = xc[j].iter().zip(&r).map(|(a, b)| a * b).sum::<f64>() / nf + w[j] * z[j];
            let new = soft(rho, lambda) / z[j];
            let delta = new - w[j];
            if delta != 0.0 {
                for (ri, xi) in r.iter_mut().zip(&xc[j]) {
                    *ri -= delta * xi;
                }
                w[j] = new;
                max_step = max_step.max(delta.abs());
            }
        }
        if max_step < TOL {
            break;
        }
    }
    let intercept = ym - w.iter().zip(&xm).map(|(a, b)| a * b).sum::<f64>();
    LassoModel {
        intercept,
        coef: w,
        lambda,
    }
}

/// Smallest penalty at which every coefficient is zero.
pub fn lambda_max(x: &[Vec<f64>], y: &[f64]) -> f64 {
    let n = x.len();
    if n == 0 {
        return 0.0;
    }
    let f = x[0].len();
    let xm = column_means(x, f);
    let ym = y.iter().sum::<f64>() / n as f64;
    (0..f)
        .map(|j| {
            (x.iter()
                .zip(y)
                .map(|(r, v)| (r[j] - xm[j]) * (v - ym))
                .sum::<f64>()
                / n as f64)
                .abs()
        })
        .fold(0.0, f64::max)
}

/// Picks lambda from a log grid of `n_lambdas` values spanning three decades
/// below [`lambda_max`] by `inner_folds`-fold cross-validation, then refits
/// on all rows.
pub fn fit_lasso_cv(
    x: &[Vec<f64>],
    y: &[f64],
    n_lambdas: usize,
    inner_folds: usize,
    seed: u64,
) -> LassoModel {
    let top = lambda_max(x, y);
    if top < 1e-12 {
        let f = x.first().map_or(0, Vec::len);
        let mean = y.iter().sum::<f64>() / y.len().max(1) as f64;
        return LassoModel {
            intercept: mean,
            coef: vec![0.0; f],
            lambda: 0.0,
        };
    }
    let grid: Vec<f64> = (0..n_lambdas)
        .map(|t| top * 10f64.powf(-3.0 * t as f64 / (n_lambdas.max(2) - 1) as f64))
        .collect();
    let n = x.len();
    if n < 2 * inner_folds {
        return fit_lasso(x, y, grid[grid.len() / 2]);
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut fold = vec![0; n];
    for (pos, &i) in order.iter().enumerate() {
        fold[i] = pos % inner_folds;
    }
    let mut best = (f64::INFINITY, grid[0]);
    for &lambda in &grid {
        let mut sse = 0.0;
        for k in 0..inner_folds {
            let (mut xt, mut yt) = (Vec::new(), Vec::new());
            for i in (0..n).filter(|&i| fold[i] != k) {
                xt.push(x[i].clone());
                yt.push(y[i]);
            }
            let m = fit_lasso(&xt, &yt, lambda);
            sse += (0..n)
                .filter(|&i| fold[i] == k)
                .map(|i| (m.predict(&x[i]) - y[i]).powi(2))
                .sum::<f64>();
        }
        if sse < best.0 - 1e-12 {
            best = (sse, lambda);
        }
    }
    fit_lasso(x, y, best.1)
}
