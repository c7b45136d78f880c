//! Gaussian prior and posterior algebra for the linear inverse problem
//! `d = G m + η`, `η ~ N(0, σ² Σ_L)`, with prior `N(m₀, Σ₀)`.
//!
//! Everything lives in the M-dimensional parameter space.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, sym_eig_sorted, symmetrize};
use crate::model::Model;
use crate::observability::{eta_bounds, kernel_subspace, observability_beta, KERNEL_TOL};
use crate::sensors::ObservationOperator;

/// Hessians with a larger eigenvalue ratio are reported as ill-conditioned.
const MAX_CONDITION: f64 = 1e14;

#[derive(Debug, Clone)]
pub struct GaussianPrior {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    cov_inv: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
    norm_equiv: f64,
}

impl GaussianPrior {
    pub fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        if cov.shape() != (mean.len(), mean.len()) || mean.is_empty() {
            return Err(Error::Dimension("prior covariance must be M x M".into()));
        }
        let cov = symmetrize(&cov);
        let chol = cholesky(&cov, "prior covariance")?;
        let cov_inv = symmetrize(&chol.inverse());
        let (vals, _) = sym_eig_sorted(&cov);
        let norm_equiv = vals[vals.len() - 1].sqrt();
        Ok(Self { mean, cov, cov_inv, chol, norm_equiv })
    }

    /// `N(mean, I)`.
    pub fn standard(mean: DVector<f64>) -> Self {
        let m = mean.len();
        Self::new(mean, DMatrix::identity(m, m)).expect("identity is SPD")
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn mean(&self) -> &DVector<f64> {
        &self.mean
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn cov_inv(&self) -> &DMatrix<f64> {
        &self.cov_inv
    }

    /// `C = sup ‖m‖₂ / ‖m‖_{Σ₀⁻¹} = sqrt(λ_max(Σ₀))`.
    pub fn norm_equiv(&self) -> f64 {
        self.norm_equiv
    }

    /// `‖m‖_{Σ₀⁻¹}`.
    pub fn norm(&self, m: &DVector<f64>) -> f64 {
        m.dot(&(&self.cov_inv * m)).max(0.0).sqrt()
    }

    pub fn sample(&self, seed: u64) -> DVector<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DVector::from_fn(self.dim(), |_, _| StandardNormal.sample(&mut rng));
        &self.mean + self.chol.l() * z
    }
}

#[derive(Debug, Clone)]
pub struct PosteriorGaussian {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    /// Ascending.
    pub eigvals: DVector<f64>,
    /// Euclidean-orthonormal columns matching `eigvals`.
    pub eigvecs: DMatrix<f64>,
    pub trace: f64,
    /// Parameter-to-observable matrix G the posterior was built from.
    pub ptg: DMatrix<f64>,
}

/// `G = L U_θ`: column i holds the observations of `u_θ(e_i)`.
pub fn assemble_ptg(model: &Model, theta: &[f64], op: &ObservationOperator) -> Result<DMatrix<f64>> {
    let states = model.parameter_to_state(theta)?;
    Ok(op.observe_states(&states))
}

/// Hessian `σ⁻² Gᵀ Σ_L⁻¹ G + Σ₀⁻¹` of the MAP objective.
pub fn posterior_hessian(
    ptg: &DMatrix<f64>,
    op: &ObservationOperator,
    sigma: f64,
    prior: &GaussianPrior,
) -> Result<DMatrix<f64>> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidInput("noise scale sigma must be positive".into()));
    }
    if ptg.ncols() != prior.dim() || ptg.nrows() != op.len() {
        return Err(Error::Dimension("G must be K x M".into()));
    }
    let gw = op.whiten(ptg);
    Ok(symmetrize(&(gw.transpose() * &gw / (sigma * sigma) + prior.cov_inv())))
}

/// Closed-form Gaussian posterior for data `d`.
pub fn posterior(
    ptg: &DMatrix<f64>,
    op: &ObservationOperator,
    sigma: f64,
    prior: &GaussianPrior,
    d: &DVector<f64>,
) -> Result<PosteriorGaussian> {
    if d.len() != op.len() {
        return Err(Error::Dimension("data length must equal K".into()));
    }
    let hessian = posterior_hessian(ptg, op, sigma, prior)?;
    let (hvals, _) = sym_eig_sorted(&hessian);
    let condition = hvals[hvals.len() - 1] / hvals[0];
    if !(hvals[0] > 0.0) || condition > MAX_CONDITION {
        return Err(Error::IllConditioned { what: "posterior Hessian".into(), condition });
    }
    let chol = cholesky(&hessian, "posterior Hessian")?;
    let cov = symmetrize(&chol.inverse());
    let dw = op.whiten(&DMatrix::from_column_slice(d.len(), 1, d.as_slice()));
    let gw = op.whiten(ptg);
    let rhs = (gw.transpose() * dw).column(0) / (sigma * sigma) + prior.cov_inv() * prior.mean();
    let mean = chol.solve(&rhs);
    let (eigvals, eigvecs) = sym_eig_sorted(&cov);
    let trace = cov.trace();
    Ok(PosteriorGaussian { mean, cov, eigvals, eigvecs, trace, ptg: ptg.clone() })
}

/// `trace(Σ_post)` without forming the mean.
pub fn posterior_trace(
    ptg: &DMatrix<f64>,
    op: &ObservationOperator,
    sigma: f64,
    prior: &GaussianPrior,
) -> Result<f64> {
    let hessian = posterior_hessian(ptg, op, sigma, prior)?;
    Ok(cholesky(&hessian, "posterior Hessian")?.inverse().trace())
}

/// `½σ⁻²‖G m − d‖²_{Σ_L⁻¹} + ½‖m − m₀‖²_{Σ₀⁻¹}`.
pub fn map_objective(
    m: &DVector<f64>,
    ptg: &DMatrix<f64>,
    op: &ObservationOperator,
    sigma: f64,
    prior: &GaussianPrior,
    d: &DVector<f64>,
) -> f64 {
    let misfit = op.noise_norm(&(ptg * m - d));
    let dm = m - prior.mean();
    0.5 * misfit * misfit / (sigma * sigma) + 0.5 * dm.dot(&(prior.cov_inv() * &dm))
}

/// Analytic gradient of [`map_objective`].
pub fn map_gradient(
    m: &DVector<f64>,
    ptg: &DMatrix<f64>,
    op: &ObservationOperator,
    sigma: f64,
    prior: &GaussianPrior,
    d: &DVector<f64>,
) -> DVector<f64> {
    let r = ptg * m - d;
    let sr = match op.cov_factor() {
        Some(ch) => ch.solve(&r),
        None => DVector::zeros(0),
    };
    ptg.transpose() * sr / (sigma * sigma) + prior.cov_inv() * (m - prior.mean())
}

/// `C = γ (1 + η²) / (σ² + β² η²)` with `η = η_sup` when `β² ≤ σ²` and `η_inf` otherwise.
pub fn stability_coefficient(beta: f64, eta_inf: f64, eta_sup: f64, gamma: f64, sigma: f64) -> f64 {
    let eta = if beta * beta <= sigma * sigma { eta_sup } else { eta_inf };
    gamma * (1.0 + eta * eta) / (sigma * sigma + beta * beta * eta * eta)
}

/// Both sides of the MAP stability estimate for two data vectors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    /// `‖Δm̃‖²_{Σ₀⁻¹} + ‖u(Δm̃)‖²_X`
    pub lhs: f64,
    /// `C² ‖Δd‖²_{Σ_L⁻¹}`
    pub rhs: f64,
    /// `lhs / rhs`, zero when both sides vanish.
    pub ratio: f64,
    pub coefficient: f64,
}

pub fn stability_inequality_check(
    model: &Model,
    theta: &[f64],
    op: &ObservationOperator,
    sigma: f64,
    prior: &GaussianPrior,
    d1: &DVector<f64>,
    d2: &DVector<f64>,
) -> Result<StabilityReport> {
    let states = model.parameter_to_state(theta)?;
    let ptg = op.observe_states(&states);
    let beta = observability_beta(model, theta, op)?.beta;
    let split = kernel_subspace(model, theta, KERNEL_TOL)?;
    let eta = eta_bounds(model, theta, prior, &split.complement_basis)?;
    let gamma = op
        .gamma()
        .ok_or_else(|| Error::InvalidInput("observation operator lacks its norm γ_L".into()))?;
    let coefficient = stability_coefficient(beta, eta.eta_inf, eta.eta_sup, gamma, sigma);

    let hessian = posterior_hessian(&ptg, op, sigma, prior)?;
    // m̃ is affine in d, so the difference only depends on Δd
    let dd = d1 - d2;
    let dw = op.whiten(&DMatrix::from_column_slice(dd.len(), 1, dd.as_slice()));
    let gw = op.whiten(&ptg);
    let dm = cholesky(&hessian, "posterior Hessian")?
        .solve(&((gw.transpose() * &dw).column(0) / (sigma * sigma)));
    let du = model.euclidean_coords(&(&states * DMatrix::from_column_slice(dm.len(), 1, dm.as_slice())));
    let lhs = prior.norm(&dm).powi(2) + du.norm_squared();
    let rhs = coefficient * coefficient * dw.norm_squared();
    let ratio = if rhs > 0.0 { lhs / rhs } else { 0.0 };
    Ok(StabilityReport { lhs, rhs, ratio, coefficient })
}
