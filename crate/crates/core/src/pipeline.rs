//! Penalty selection, fitting and estimation glued together for one dataset.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::data::{CovarianceEstimate, Dataset, Method, PenaltyPair};
use crate::error::{Error, Result};
use crate::estimators::{
    self, GenErrorEstimate, OutOfSampleError, ResidualMoments, SigmaFactor,
};
use crate::interaction::{interaction_matrix, InteractionResult};
use crate::linalg::Mat;
use crate::solver::{self, cross_validate, CvOptions, CvTable, FitOptions, FitResult, Gram};

/// How the elastic-net penalty is chosen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum PenaltySpec {
    /// K-fold cross-validation, then a refit on all rows at the selected point.
    Cv(CvOptions),
    /// `λ = α·r`, `τ = α·(1 − r)`.
    Alpha { alpha: f64, l1_ratio: f64 },
    Direct { lambda: f64, tau: f64 },
}

impl Default for PenaltySpec {
    fn default() -> Self {
        PenaltySpec::Cv(CvOptions::default())
    }
}

/// The penalty actually used, in both parameterizations when available.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChosenPenalty {
    pub lambda: f64,
    pub tau: f64,
    pub alpha: Option<f64>,
    pub l1_ratio: Option<f64>,
}

impl ChosenPenalty {
    fn from_alpha(alpha: f64, l1_ratio: f64) -> Result<(Self, PenaltyPair)> {
        let pen = PenaltyPair::from_alpha(alpha, l1_ratio)?;
        Ok((
            ChosenPenalty { lambda: pen.lambda(), tau: pen.tau(), alpha: Some(alpha), l1_ratio: Some(l1_ratio) },
            pen,
        ))
    }
}

/// Chooses the penalty per `spec` and fits on all rows. `cv_seed` overrides the seed of
/// the fold shuffle when given.
pub fn select_and_fit(
    x: &Mat,
    y: &Mat,
    spec: &PenaltySpec,
    fit_opts: &FitOptions,
    cv_seed: Option<u64>,
) -> Result<(FitResult, ChosenPenalty, Option<CvTable>)> {
    match spec {
        PenaltySpec::Direct { lambda, tau } => {
            let pen = PenaltyPair::new(*lambda, *tau)?;
            let fit = solver::fit(x, y, pen, fit_opts)?;
            Ok((fit, ChosenPenalty { lambda: *lambda, tau: *tau, alpha: None, l1_ratio: None }, None))
        }
        PenaltySpec::Alpha { alpha, l1_ratio } => {
            let (chosen, pen) = ChosenPenalty::from_alpha(*alpha, *l1_ratio)?;
            Ok((solver::fit(x, y, pen, fit_opts)?, chosen, None))
        }
        PenaltySpec::Cv(cv) => {
            let mut cv = cv.clone();
            if let Some(seed) = cv_seed {
                cv.seed = seed;
            }
            let gram = Gram::new(x, y);
            let amax = cv
                .l1_ratios
                .iter()
                .map(|&r| solver::alpha_max_from_xty(&gram.xty, x.nrows(), r))
                .fold(0.0_f64, f64::max);
            if amax == 0.0 {
                // XᵀY = 0: every grid point fits B̂ = 0.
                let r = cv.l1_ratios.first().copied().unwrap_or(1.0);
                let (chosen, pen) = ChosenPenalty::from_alpha(f64::MIN_POSITIVE, r)?;
                let fit = solver::fit_with_gram(x, y, &gram, pen, fit_opts)?;
                return Ok((fit, chosen, None));
            }
            let table = cross_validate(x, y, &cv)?;
            let best = table.best_point();
            let (chosen, pen) = ChosenPenalty::from_alpha(best.alpha, best.l1_ratio)?;
            let fit = solver::fit_with_gram(x, y, &gram, pen, fit_opts)?;
            Ok((fit, chosen, Some(table)))
        }
    }
}

/// Everything computed for one dataset.
#[derive(Debug, Clone)]
pub struct Estimation {
    pub fit: FitResult,
    pub chosen: ChosenPenalty,
    pub cv: Option<CvTable>,
    pub interaction: InteractionResult,
    pub estimates: BTreeMap<Method, CovarianceEstimate>,
    pub gen_error: GenErrorEstimate,
    pub oos_error: Option<OutOfSampleError>,
}

/// Fits, computes Â and evaluates the requested estimators. The oracle is included when
/// the dataset carries the true noise; Σ-based quantities are skipped when Σ is absent
/// unless one of them was explicitly requested.
pub fn estimate_all(
    ds: &Dataset,
    sigma: Option<&SigmaFactor>,
    methods: &[Method],
    spec: &PenaltySpec,
    fit_opts: &FitOptions,
    cv_seed: Option<u64>,
) -> Result<Estimation> {
    let mut estimates = BTreeMap::new();
    for &m in methods {
        match m {
            Method::Mm | Method::Proposed if sigma.is_none() => {
                return Err(Error::MissingSigma(m.as_str()))
            }
            Method::Oracle if ds.truth.e.is_none() => return Err(Error::MissingNoise),
            _ => {}
        }
    }

    let (fit, chosen, cv) = select_and_fit(&ds.x, &ds.y, spec, fit_opts, cv_seed)?;
    let interaction = interaction_matrix(&ds.x, &fit)?;
    let a_hat = &interaction.a_hat;
    let gen_error = estimators::estimate_gen_error(&fit.residual, a_hat)?;
    let moments = sigma.map(|sf| ResidualMoments::new(&ds.x, &fit.residual, sf)).transpose()?;

    for &m in methods {
        let est = match m {
            Method::Naive => estimators::estimate_naive(&fit.residual),
            Method::Oracle => estimators::estimate_oracle(ds.truth.e.as_ref().ok_or(Error::MissingNoise)?),
            Method::Mm => estimators::estimate_mm(&ds.x, &ds.y, sigma.ok_or(Error::MissingSigma("mm"))?)?,
            Method::Proposed => estimators::proposed_from_moments(
                moments.as_ref().ok_or(Error::MissingSigma("proposed"))?,
                a_hat,
            )?,
        };
        estimates.insert(m, est);
    }
    let oos_error = moments.as_ref().map(|m| estimators::oos_from_moments(m, a_hat)).transpose()?;
    Ok(Estimation { fit, chosen, cv, interaction, estimates, gen_error, oos_error })
}
