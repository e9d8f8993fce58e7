//! Synthetic multi-task datasets: Gaussian design with Toeplitz covariance, row-sparse
//! coefficients scaled to a target signal-to-noise ratio, and Gaussian noise with a
//! full-rank or low-rank covariance.
//!
//! Randomness comes from ChaCha8 streams. A replication `r` draws each matrix role from
//! stream `r·ROLES + role` of the generator seeded with `seed`; quantities shared by
//! all replications (a low-rank S) use a dedicated stream. Streams never overlap, so a
//! replication's data does not depend on which other replications ran or in what order.

use nalgebra::SymmetricEigen;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Truth};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SKind {
    /// `S_{t,t'} = cos(t − t') / (1 + √|t − t'|)`.
    #[serde(alias = "full-rank")]
    FullRank,
    /// `S = uuᵀ` with `u ∈ R^{T×r}` i.i.d. `N(0, 1/T)`.
    #[serde(alias = "low-rank")]
    LowRank,
}

impl std::str::FromStr for SKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full-rank" | "full_rank" => Ok(SKind::FullRank),
            "low-rank" | "low_rank" => Ok(SKind::LowRank),
            other => Err(Error::InvalidArgument(format!("unknown S kind {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SigmaKind {
    /// `Σ_{jk} = rho^{|j−k|}`.
    ArDecay { rho: f64 },
}

impl Default for SigmaKind {
    fn default() -> Self {
        SigmaKind::ArDecay { rho: 0.5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub n: usize,
    pub p: usize,
    #[serde(rename = "T")]
    pub tasks: usize,
    pub s_kind: SKind,
    #[serde(default = "default_low_rank_dim")]
    pub low_rank_dim: usize,
    #[serde(default = "default_sparsity")]
    pub sparsity_frac: f64,
    #[serde(default = "default_snr")]
    pub snr: f64,
    #[serde(default)]
    pub sigma_kind: SigmaKind,
    #[serde(default)]
    pub seed: u64,
}

fn default_low_rank_dim() -> usize {
    10
}
fn default_sparsity() -> f64 {
    0.1
}
fn default_snr() -> f64 {
    1.0
}

impl ScenarioSpec {
    pub fn new(n: usize, p: usize, tasks: usize, s_kind: SKind, seed: u64) -> Self {
        ScenarioSpec {
            n,
            p,
            tasks,
            s_kind,
            low_rank_dim: default_low_rank_dim(),
            sparsity_frac: default_sparsity(),
            snr: default_snr(),
            sigma_kind: SigmaKind::default(),
            seed,
        }
    }

    /// Number of nonzero rows of B*.
    pub fn support_size(&self) -> usize {
        (self.sparsity_frac * self.p as f64).floor() as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.p == 0 || self.tasks == 0 {
            return Err(Error::InvalidArgument("n, p and T must be positive".into()));
        }
        if !(self.sparsity_frac > 0.0 && self.sparsity_frac <= 1.0) {
            return Err(Error::InvalidArgument(format!("sparsity_frac {} outside (0, 1]", self.sparsity_frac)));
        }
        if self.support_size() < 1 {
            return Err(Error::InvalidArgument("sparsity_frac·p rounds down to an empty support".into()));
        }
        if !(self.snr > 0.0 && self.snr.is_finite()) {
            return Err(Error::InvalidArgument(format!("snr must be positive, got {}", self.snr)));
        }
        if self.s_kind == SKind::LowRank && self.low_rank_dim == 0 {
            return Err(Error::InvalidArgument("low_rank_dim must be at least 1".into()));
        }
        let SigmaKind::ArDecay { rho } = self.sigma_kind;
        if !(0.0..1.0).contains(&rho) {
            return Err(Error::InvalidArgument(format!("rho {rho} outside [0, 1)")));
        }
        Ok(())
    }
}

/// Matrix roles, each with its own random stream per replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Role {
    Design = 0,
    Noise = 1,
    Coefficients = 2,
}

const ROLES: u64 = 3;
const SHARED_STREAM: u64 = u64::MAX;

/// Generator for one `(replication, role)` pair.
pub fn stream_rng(seed: u64, rep: u64, role: Role) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep.wrapping_mul(ROLES).wrapping_add(role as u64));
    rng
}

/// Generator for quantities shared by every replication of a scenario.
pub fn shared_rng(seed: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(SHARED_STREAM);
    rng
}

pub fn standard_normal(rng: &mut impl Rng, rows: usize, cols: usize) -> Mat {
    Mat::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// `S_{t,t'} = cos(t − t') / (1 + √|t − t'|)`, rejected if not PSD.
pub fn make_full_rank_s(tasks: usize) -> Result<Mat> {
    if tasks == 0 {
        return Err(Error::InvalidArgument("T must be positive".into()));
    }
    let s = Mat::from_fn(tasks, tasks, |i, j| {
        let d = (i as f64 - j as f64).abs();
        d.cos() / (1.0 + d.sqrt())
    });
    let (lo, hi) = linalg::eig_range(&s);
    if lo < -1e-10 * hi {
        return Err(Error::NotPositiveDefinite(format!(
            "full-rank S for T = {tasks} has eigenvalue {lo:e}"
        )));
    }
    Ok(s)
}

/// `u ∈ R^{T×r}` with i.i.d. `N(0, 1/T)` entries.
pub fn make_low_rank_factor(tasks: usize, rank: usize, rng: &mut impl Rng) -> Result<Mat> {
    if rank == 0 {
        return Err(Error::InvalidArgument("low-rank dimension must be at least 1".into()));
    }
    Ok(standard_normal(rng, tasks, rank) / (tasks as f64).sqrt())
}

/// `S = uuᵀ` for a fresh factor `u`.
pub fn make_low_rank_s(tasks: usize, rank: usize, rng: &mut impl Rng) -> Result<Mat> {
    let u = make_low_rank_factor(tasks, rank, rng)?;
    Ok(&u * u.transpose())
}

/// `Σ_{jk} = rho^{|j−k|}`.
pub fn make_sigma(p: usize, rho: f64) -> Result<Mat> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidArgument(format!("rho {rho} outside [0, 1)")));
    }
    Ok(Mat::from_fn(p, p, |j, k| {
        if j == k {
            1.0
        } else {
            rho.powi((j as i64 - k as i64).unsigned_abs() as i32)
        }
    }))
}

/// Row-sparse coefficients: a uniformly drawn support of `floor(sparsity_frac·p)` rows
/// with i.i.d. `N(0, 1/p)` entries, rescaled so that `‖Σ^{1/2}B*‖_F² = snr·trace(S)`.
pub fn make_coefficients(
    p: usize,
    tasks: usize,
    s_true: &Mat,
    sigma: &Mat,
    sparsity_frac: f64,
    snr: f64,
    rng: &mut impl Rng,
) -> Result<Mat> {
    let m = (sparsity_frac * p as f64).floor() as usize;
    if m < 1 || m > p {
        return Err(Error::InvalidArgument(format!("support size {m} invalid for p = {p}")));
    }
    let target = snr * linalg::trace(s_true);
    for _ in 0..2 {
        let mut support = index::sample(rng, p, m).into_vec();
        support.sort_unstable();
        let rows = standard_normal(rng, m, tasks) / (p as f64).sqrt();
        let sigma_ss = Mat::from_fn(m, m, |a, b| sigma[(support[a], support[b])]);
        let energy = (rows.transpose() * sigma_ss * &rows).trace();
        if energy <= 0.0 {
            continue;
        }
        let scale = (target / energy).sqrt();
        let mut b = Mat::zeros(p, tasks);
        for (i, &j) in support.iter().enumerate() {
            b.set_row(j, &(rows.row(i) * scale));
        }
        return Ok(b);
    }
    Err(Error::Singular("coefficient draw has zero signal energy twice".into()))
}

/// A scenario with its fixed matrices and their factors.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub spec: ScenarioSpec,
    pub s: Mat,
    pub sigma: Mat,
    sigma_lower: Mat,
    /// `Λ_r^{1/2} U_rᵀ` for the numerically nonzero eigenpairs of S.
    noise_map: Mat,
}

impl Scenario {
    pub fn new(spec: ScenarioSpec) -> Result<Self> {
        spec.validate()?;
        let s = match spec.s_kind {
            SKind::FullRank => make_full_rank_s(spec.tasks)?,
            SKind::LowRank => make_low_rank_s(spec.tasks, spec.low_rank_dim, &mut shared_rng(spec.seed))?,
        };
        let SigmaKind::ArDecay { rho } = spec.sigma_kind;
        let sigma = make_sigma(spec.p, rho)?;
        Scenario::with_matrices(spec, s, sigma)
    }

    /// Uses the given S and Σ instead of the ones named by the spec.
    pub fn with_matrices(spec: ScenarioSpec, s: Mat, sigma: Mat) -> Result<Self> {
        spec.validate()?;
        if s.shape() != (spec.tasks, spec.tasks) || sigma.shape() != (spec.p, spec.p) {
            return Err(Error::Dimension("S must be T×T and sigma p×p".into()));
        }
        let sigma_lower = linalg::cholesky(&sigma, "sigma")?.l();
        let noise_map = noise_factor(&s)?;
        Ok(Scenario { spec, s, sigma, sigma_lower, noise_map })
    }

    /// Draws replication `rep`: `X = G Lᵀ` with `Σ = LLᵀ`, `E = G' Λ^{1/2} Uᵀ`, `Y = XB* + E`.
    pub fn sample(&self, rep: u64) -> Result<Dataset> {
        let spec = &self.spec;
        let seed = spec.seed;
        let b_star = make_coefficients(
            spec.p,
            spec.tasks,
            &self.s,
            &self.sigma,
            spec.sparsity_frac,
            spec.snr,
            &mut stream_rng(seed, rep, Role::Coefficients),
        )?;
        let g = standard_normal(&mut stream_rng(seed, rep, Role::Design), spec.n, spec.p);
        let x = g * self.sigma_lower.transpose();
        let e = if self.noise_map.nrows() == 0 {
            Mat::zeros(spec.n, spec.tasks)
        } else {
            standard_normal(&mut stream_rng(seed, rep, Role::Noise), spec.n, self.noise_map.nrows()) * &self.noise_map
        };
        let y = &x * &b_star + &e;
        Ok(Dataset {
            x,
            y,
            sigma: Some(self.sigma.clone()),
            truth: Truth { e: Some(e), b_star: Some(b_star), s: Some(self.s.clone()) },
        })
    }
}

/// `Λ_r^{1/2} U_rᵀ` (r×T) keeping eigenvalues above `1e-10·λ_max`.
fn noise_factor(s: &Mat) -> Result<Mat> {
    let t = s.nrows();
    let eig = SymmetricEigen::new(linalg::symmetrize(s));
    let lmax = eig.eigenvalues.iter().fold(0.0_f64, |a, &v| a.max(v));
    let lmin = eig.eigenvalues.iter().fold(f64::INFINITY, |a, &v| a.min(v));
    if lmin < -1e-10 * lmax.max(0.0) || (lmax <= 0.0 && lmin < 0.0) {
        return Err(Error::NotPositiveDefinite(format!("noise covariance has eigenvalue {lmin:e}")));
    }
    let keep: Vec<usize> = (0..t).filter(|&i| eig.eigenvalues[i] > 1e-10 * lmax).collect();
    let mut out = Mat::zeros(keep.len(), t);
    for (r, &i) in keep.iter().enumerate() {
        let scale = eig.eigenvalues[i].sqrt();
        out.set_row(r, &(eig.eigenvectors.column(i).transpose() * scale));
    }
    Ok(out)
}

/// Replication 0 of the scenario described by `spec`.
pub fn sample_dataset(spec: &ScenarioSpec) -> Result<Dataset> {
    Scenario::new(spec.clone())?.sample(0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_rank_s_small_cases() {
        assert_eq!(make_full_rank_s(1).unwrap(), Mat::identity(1, 1));
        let s = make_full_rank_s(2).unwrap();
        let off = 1f64.cos() / 2.0;
        assert_eq!(s, Mat::from_row_slice(2, 2, &[1.0, off, off, 1.0]));
        let s20 = make_full_rank_s(20).unwrap();
        assert!(linalg::eig_range(&s20).0 >= 0.0);
        assert!(s20.diagonal().iter().all(|&d| d == 1.0));
    }

    #[test]
    fn sigma_kernel() {
        assert_eq!(make_sigma(4, 0.0).unwrap(), Mat::identity(4, 4));
        let s = make_sigma(3, 0.5).unwrap();
        assert_eq!(s, Mat::from_row_slice(3, 3, &[1.0, 0.5, 0.25, 0.5, 1.0, 0.5, 0.25, 0.5, 1.0]));
        assert!(linalg::eig_range(&make_sigma(100, 0.5).unwrap()).0 > 0.0);
        assert!(make_sigma(3, 1.0).is_err());
    }

    #[test]
    fn low_rank_s_rank() {
        let mut rng = shared_rng(1);
        assert!(make_low_rank_s(5, 0, &mut rng).is_err());
        let s = make_low_rank_s(8, 3, &mut rng).unwrap();
        let nonzero = linalg::sym_eigenvalues(&s).iter().filter(|&&v| v > 1e-10).count();
        assert!(nonzero <= 3);
        // u = ones/√T gives S = ones/T
        let u = Mat::from_element(4, 1, 0.5);
        assert_eq!(&u * u.transpose(), Mat::from_element(4, 4, 0.25));
    }

    #[test]
    fn scalar_coefficient_scaling() {
        let mut rng = stream_rng(3, 0, Role::Coefficients);
        let b = make_coefficients(1, 1, &Mat::from_element(1, 1, 4.0), &Mat::identity(1, 1), 1.0, 1.0, &mut rng)
            .unwrap();
        assert!((b[(0, 0)].abs() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn coefficient_support_and_snr() {
        let sigma = make_sigma(50, 0.5).unwrap();
        let s = make_full_rank_s(3).unwrap();
        for seed in 0..5 {
            let b = make_coefficients(50, 3, &s, &sigma, 0.1, 1.0, &mut stream_rng(seed, 0, Role::Coefficients))
                .unwrap();
            let rows = (0..50).filter(|&j| b.row(j).norm() > 0.0).count();
            assert_eq!(rows, 5);
            let energy = (b.transpose() * &sigma * &b).trace();
            assert!((energy / s.trace() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn zero_noise_scenario() {
        let spec = ScenarioSpec::new(20, 10, 2, SKind::FullRank, 4);
        let sc = Scenario::with_matrices(spec, Mat::zeros(2, 2), make_sigma(10, 0.5).unwrap()).unwrap();
        let ds = sc.sample(0).unwrap();
        let e = ds.truth.e.as_ref().unwrap();
        assert_eq!(*e, Mat::zeros(20, 2));
        assert_eq!(ds.y, &ds.x * ds.truth.b_star.as_ref().unwrap());
    }

    #[test]
    fn sampling_is_deterministic() {
        let spec = ScenarioSpec::new(30, 40, 3, SKind::LowRank, 11);
        let a = sample_dataset(&spec).unwrap();
        let b = sample_dataset(&spec).unwrap();
        assert_eq!(a.x, b.x);
        assert_eq!(a.y, b.y);
        assert_eq!(a.truth.e, b.truth.e);
        let sc = Scenario::new(spec).unwrap();
        assert_ne!(sc.sample(1).unwrap().x, a.x);
    }

    #[test]
    fn spec_validation() {
        let mut spec = ScenarioSpec::new(10, 5, 2, SKind::FullRank, 0);
        assert!(spec.validate().is_err()); // floor(0.1·5) = 0
        spec.sparsity_frac = 0.2;
        assert!(spec.validate().is_ok());
        spec.snr = 0.0;
        assert!(spec.validate().is_err());
    }
}
