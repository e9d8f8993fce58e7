//! K-fold cross-validation over an `(alpha, l1_ratio)` grid with warm-started paths.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{alpha_max_from_xty, coordinate_descent, make_alpha_grid, predict, row_support, Gram, Stopping};
use crate::data::PenaltyPair;
use crate::error::{Error, Result};
use crate::linalg::Mat;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default)]
pub struct CvOptions {
    pub l1_ratios: Vec<f64>,
    pub n_alphas: usize,
    /// Ratio between the smallest and the largest alpha of each path.
    pub eps: f64,
    pub folds: usize,
    pub seed: u64,
    /// Duality-gap tolerance of the path fits, relative to `‖Y‖_F²`.
    pub tol: f64,
    pub max_iter: usize,
    /// Stop a path once this many consecutive alphas fail to improve its best mean
    /// error. `None` fits every alpha.
    pub patience: Option<usize>,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            l1_ratios: vec![0.5, 0.7, 0.9, 1.0],
            n_alphas: 100,
            eps: 1e-3,
            folds: 5,
            seed: 0,
            tol: 1e-4,
            max_iter: super::DEFAULT_MAX_ITER,
            patience: Some(10),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub alpha: f64,
    pub l1_ratio: f64,
}

impl GridPoint {
    pub fn penalty(&self) -> Result<PenaltyPair> {
        PenaltyPair::from_alpha(self.alpha, self.l1_ratio)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvTable {
    pub grid: Vec<GridPoint>,
    /// Mean over folds of `‖Y_val − X_val B̂‖_F² / n_val`.
    pub mean_cv_error: Vec<f64>,
    /// `fold_errors[g][f]`: held-out error of grid point `g` on fold `f`.
    pub fold_errors: Vec<Vec<f64>>,
    pub best: usize,
}

impl CvTable {
    pub fn best_point(&self) -> GridPoint {
        self.grid[self.best]
    }
}

/// Seeded Fisher–Yates shuffle of `0..n`, cut into `folds` contiguous blocks whose
/// sizes differ by at most one (larger blocks first).
pub fn fold_indices(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 folds, got {folds}")));
    }
    if n < folds {
        return Err(Error::InvalidArgument(format!("{folds} folds but only {n} rows: a fold would be empty")));
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let base = n / folds;
    let extra = n % folds;
    let mut out = Vec::with_capacity(folds);
    let mut start = 0;
    for f in 0..folds {
        let len = base + usize::from(f < extra);
        out.push(perm[start..start + len].to_vec());
        start += len;
    }
    Ok(out)
}

fn select_rows(m: &Mat, rows: &[usize]) -> Mat {
    Mat::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

/// Runs K-fold cross-validation. Each l1-ratio has its own alpha path, computed from the
/// full data; each fold fits that path from the largest alpha down with warm starts.
/// `best` minimizes the mean error, ties going to the larger alpha. With a `patience`,
/// the grid only holds the alphas actually visited.
pub fn cross_validate(x: &Mat, y: &Mat, opts: &CvOptions) -> Result<CvTable> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(Error::Dimension(format!("x has {n} rows, y has {}", y.nrows())));
    }
    if opts.l1_ratios.is_empty() {
        return Err(Error::InvalidArgument("empty l1_ratio grid".into()));
    }
    let folds = fold_indices(n, opts.folds, opts.seed)?;
    let full = Gram::new(x, y);

    let mut paths = Vec::with_capacity(opts.l1_ratios.len());
    for &r in &opts.l1_ratios {
        if !(r > 0.0 && r <= 1.0) {
            return Err(Error::InvalidArgument(format!("l1_ratio {r} outside (0, 1]")));
        }
        let amax = alpha_max_from_xty(&full.xty, n, r);
        paths.push(make_alpha_grid(amax, opts.n_alphas, opts.eps)?);
    }

    let fold_data: Vec<(Gram, Mat, Mat)> = folds
        .iter()
        .map(|val| {
            let xv = select_rows(x, val);
            let yv = select_rows(y, val);
            let gram = Gram {
                xtx: &full.xtx - xv.tr_mul(&xv),
                xty: &full.xty - xv.tr_mul(&yv),
                yty: full.yty - yv.norm_squared(),
                n: n - val.len(),
            };
            (gram, xv, yv)
        })
        .collect();

    // One job per l1-ratio; its folds advance along the path in lockstep so the
    // mean error is known at every alpha.
    let results: Vec<Result<Vec<Vec<f64>>>> = (0..opts.l1_ratios.len())
        .into_par_iter()
        .map(|ri| {
            let r = opts.l1_ratios[ri];
            let mut warm: Vec<Option<Mat>> = vec![None; fold_data.len()];
            let mut rows: Vec<Vec<f64>> = Vec::with_capacity(paths[ri].len());
            let mut best = (f64::INFINITY, 0);
            for (ai, &alpha) in paths[ri].iter().enumerate() {
                let pen = PenaltyPair::from_alpha(alpha, r)?;
                let mut errs = Vec::with_capacity(fold_data.len());
                for (fi, (gram, xv, yv)) in fold_data.iter().enumerate() {
                    let stop = Stopping::DualityGap(opts.tol);
                    let out = coordinate_descent(gram, &pen, stop, opts.max_iter, warm[fi].as_ref(), None);
                    let support = row_support(&out.b);
                    let resid = yv - predict(xv, &out.b, &support);
                    errs.push(resid.norm_squared() / xv.nrows() as f64);
                    warm[fi] = Some(out.b);
                }
                let mean = errs.iter().sum::<f64>() / errs.len() as f64;
                rows.push(errs);
                if mean < best.0 {
                    best = (mean, ai);
                }
                if opts.patience.is_some_and(|k| ai - best.1 >= k) {
                    log::debug!("l1_ratio {r}: path stopped after {} of {} alphas", ai + 1, paths[ri].len());
                    break;
                }
            }
            Ok(rows)
        })
        .collect();

    let mut grid = Vec::new();
    let mut fold_errors = Vec::new();
    for (ri, res) in results.into_iter().enumerate() {
        let rows = res?;
        let r = opts.l1_ratios[ri];
        for (ai, errs) in rows.into_iter().enumerate() {
            grid.push(GridPoint { alpha: paths[ri][ai], l1_ratio: r });
            fold_errors.push(errs);
        }
    }
    let mean_cv_error: Vec<f64> =
        fold_errors.iter().map(|e| e.iter().sum::<f64>() / e.len() as f64).collect();
    if let Some(g) = mean_cv_error.iter().position(|v| !v.is_finite()) {
        log::error!("non-finite cv error at grid point {g}");
        return Err(Error::NonFinite("cv error"));
    }

    let mut best = 0;
    for g in 1..grid.len() {
        let (e, be) = (mean_cv_error[g], mean_cv_error[best]);
        if e < be || (e == be && grid[g].alpha > grid[best].alpha) {
            best = g;
        }
    }
    Ok(CvTable { grid, mean_cv_error, fold_errors, best })
}
