//! Matrix-valued domain types shared by every stage of the pipeline.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

/// Relative symmetry tolerance used for Σ, S and every estimator output.
pub const SYMMETRY_TOL: f64 = 1e-10;

/// Simulation ground truth attached to a [`Dataset`].
#[derive(Debug, Clone, Default)]
pub struct Truth {
    /// Noise matrix E (n×T).
    pub e: Option<Mat>,
    /// Coefficient matrix B* (p×T).
    pub b_star: Option<Mat>,
    /// Noise covariance S (T×T).
    pub s: Option<Mat>,
}

/// Observations of the multi-task model `Y = X B* + E`.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: Mat,
    pub y: Mat,
    /// Known design covariance Σ (p×p).
    pub sigma: Option<Mat>,
    pub truth: Truth,
}

impl Dataset {
    /// Builds a dataset and rejects it if any invariant is violated.
    pub fn new(x: Mat, y: Mat, sigma: Option<Mat>, truth: Truth) -> Result<Self> {
        let ds = Dataset { x, y, sigma, truth };
        let report = validate_dataset(&ds);
        if !report.is_empty() {
            let msgs: Vec<String> = report.iter().map(|v| v.to_string()).collect();
            return Err(Error::InvalidArgument(msgs.join("; ")));
        }
        Ok(ds)
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }

    pub fn tasks(&self) -> usize {
        self.y.ncols()
    }

    pub fn sigma(&self, method: &'static str) -> Result<&Mat> {
        self.sigma.as_ref().ok_or(Error::MissingSigma(method))
    }
}

/// A violated [`Dataset`] invariant.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    EmptyDimension { what: &'static str },
    RowCountMismatch { x_rows: usize, y_rows: usize },
    NonFinite { what: &'static str },
    SigmaShape { rows: usize, cols: usize, p: usize },
    SigmaAsymmetric,
    SigmaNotPositiveDefinite { min_eig: f64 },
    TruthShape { what: &'static str, expected: (usize, usize), got: (usize, usize) },
    TruthSAsymmetric,
    TruthSNotPsd { min_eig: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::EmptyDimension { what } => write!(f, "{what} has a zero dimension"),
            Violation::RowCountMismatch { x_rows, y_rows } => {
                write!(f, "row-count mismatch: x has {x_rows} rows, y has {y_rows}")
            }
            Violation::NonFinite { what } => write!(f, "{what} contains non-finite values"),
            Violation::SigmaShape { rows, cols, p } => {
                write!(f, "sigma is {rows}x{cols}, expected {p}x{p}")
            }
            Violation::SigmaAsymmetric => write!(f, "sigma is not symmetric"),
            Violation::SigmaNotPositiveDefinite { min_eig } => {
                write!(f, "sigma is not positive definite (min eigenvalue {min_eig:e})")
            }
            Violation::TruthShape { what, expected, got } => write!(
                f,
                "truth.{what} is {}x{}, expected {}x{}",
                got.0, got.1, expected.0, expected.1
            ),
            Violation::TruthSAsymmetric => write!(f, "truth.s is not symmetric"),
            Violation::TruthSNotPsd { min_eig } => {
                write!(f, "truth.s is not positive semi-definite (min eigenvalue {min_eig:e})")
            }
        }
    }
}

/// Lists every violated invariant of `ds`; an empty list means the dataset is valid.
pub fn validate_dataset(ds: &Dataset) -> Vec<Violation> {
    let mut out = Vec::new();
    let (n, p) = ds.x.shape();
    let (ny, t) = ds.y.shape();
    if n == 0 || p == 0 {
        out.push(Violation::EmptyDimension { what: "x" });
    }
    if ny == 0 || t == 0 {
        out.push(Violation::EmptyDimension { what: "y" });
    }
    if n != ny {
        out.push(Violation::RowCountMismatch { x_rows: n, y_rows: ny });
    }
    if !linalg::all_finite(&ds.x) {
        out.push(Violation::NonFinite { what: "x" });
    }
    if !linalg::all_finite(&ds.y) {
        out.push(Violation::NonFinite { what: "y" });
    }

    if let Some(sigma) = &ds.sigma {
        if sigma.shape() != (p, p) {
            out.push(Violation::SigmaShape { rows: sigma.nrows(), cols: sigma.ncols(), p });
        } else if !linalg::all_finite(sigma) {
            out.push(Violation::NonFinite { what: "sigma" });
        } else {
            if !linalg::is_symmetric(sigma, SYMMETRY_TOL) {
                out.push(Violation::SigmaAsymmetric);
            }
            if p > 0 {
                let (lo, _) = linalg::eig_range(sigma);
                if lo <= 0.0 {
                    out.push(Violation::SigmaNotPositiveDefinite { min_eig: lo });
                }
            }
        }
    }

    let truth = &ds.truth;
    let mut check_shape = |what: &'static str, m: &Mat, expected: (usize, usize)| {
        if m.shape() != expected {
            out.push(Violation::TruthShape { what, expected, got: m.shape() });
            false
        } else {
            true
        }
    };
    let e_ok = truth.e.as_ref().map(|e| check_shape("e", e, (ny, t)));
    let b_ok = truth.b_star.as_ref().map(|b| check_shape("b_star", b, (p, t)));
    let s_ok = truth.s.as_ref().map(|s| check_shape("s", s, (t, t)));
    if e_ok == Some(true) && !linalg::all_finite(truth.e.as_ref().unwrap()) {
        out.push(Violation::NonFinite { what: "truth.e" });
    }
    if b_ok == Some(true) && !linalg::all_finite(truth.b_star.as_ref().unwrap()) {
        out.push(Violation::NonFinite { what: "truth.b_star" });
    }
    if s_ok == Some(true) {
        let s = truth.s.as_ref().unwrap();
        if !linalg::all_finite(s) {
            out.push(Violation::NonFinite { what: "truth.s" });
        } else if t > 0 {
            if !linalg::is_symmetric(s, SYMMETRY_TOL) {
                out.push(Violation::TruthSAsymmetric);
            }
            let (lo, hi) = linalg::eig_range(s);
            if lo < -1e-10 * hi.abs() {
                out.push(Violation::TruthSNotPsd { min_eig: lo });
            }
        }
    }
    out
}

/// Group-lasso weight λ and ridge weight τ of the multi-task elastic-net.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PenaltyPair {
    lambda: f64,
    tau: f64,
}

impl PenaltyPair {
    /// Rejects negative or non-finite weights and the unpenalized case λ = τ = 0.
    pub fn new(lambda: f64, tau: f64) -> Result<Self> {
        if !lambda.is_finite() || !tau.is_finite() {
            return Err(Error::NonFinite("penalty"));
        }
        if lambda < 0.0 || tau < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "penalties must be nonnegative (lambda={lambda}, tau={tau})"
            )));
        }
        if lambda == 0.0 && tau == 0.0 {
            return Err(Error::InvalidArgument(
                "unpenalized least squares (lambda = tau = 0) is not supported".into(),
            ));
        }
        Ok(PenaltyPair { lambda, tau })
    }

    /// `λ = α·r`, `τ = α·(1 − r)`.
    pub fn from_alpha(alpha: f64, l1_ratio: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&l1_ratio) {
            return Err(Error::InvalidArgument(format!("l1_ratio {l1_ratio} outside [0, 1]")));
        }
        PenaltyPair::new(alpha * l1_ratio, alpha * (1.0 - l1_ratio))
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// Ridge weight normalized by the design scale, `τ / ‖Σ‖_op`.
    pub fn tau_prime(&self, sigma_op_norm: f64) -> f64 {
        self.tau / sigma_op_norm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Proposed,
    Naive,
    Mm,
    Oracle,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Naive, Method::Mm, Method::Proposed, Method::Oracle];

    pub fn as_str(&self) -> &'static str {
        match self {
            Method::Proposed => "proposed",
            Method::Naive => "naive",
            Method::Mm => "mm",
            Method::Oracle => "oracle",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "proposed" => Ok(Method::Proposed),
            "naive" => Ok(Method::Naive),
            "mm" => Ok(Method::Mm),
            "oracle" => Ok(Method::Oracle),
            other => Err(Error::InvalidArgument(format!("unknown method {other:?}"))),
        }
    }
}

/// A T×T noise covariance estimate tagged with the method that produced it.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    pub s_hat: Mat,
    pub method: Method,
    pub meta: BTreeMap<String, serde_json::Value>,
}

impl CovarianceEstimate {
    /// Symmetrizes `s_hat`.
    pub fn new(s_hat: Mat, method: Method) -> Self {
        CovarianceEstimate { s_hat: linalg::symmetrize(&s_hat), method, meta: BTreeMap::new() }
    }

    pub fn with_meta(mut self, key: &str, value: impl Into<serde_json::Value>) -> Self {
        self.meta.insert(key.to_string(), value.into());
        self
    }

    pub fn tasks(&self) -> usize {
        self.s_hat.nrows()
    }

    pub fn is_psd(&self) -> bool {
        linalg::is_psd(&self.s_hat, 1e-12)
    }

    /// Copy with negative eigenvalues clipped to zero.
    pub fn projected_psd(&self) -> Self {
        let mut out = self.clone();
        out.s_hat = linalg::project_psd(&self.s_hat);
        out.meta.insert("projected_psd".into(), true.into());
        out
    }
}
