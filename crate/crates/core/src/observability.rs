//! Kernel subspaces, η ratios, the observability coefficient β and the
//! eigenvalue bounds it implies for the posterior covariance.
//!
//! All eigenproblems are solved in parameter space. States enter only through
//! a *state factor* `S` with `‖S m‖₂ = ‖u_θ(m)‖_X`: the R factor of a thin QR
//! of the Euclidean state coordinates (full model) or of the reduced
//! coefficients (X-orthonormal reduced basis).

use nalgebra::{DMatrix, DVector};

use crate::bayes::{GaussianPrior, PosteriorGaussian};
use crate::error::{Error, Result};
use crate::linalg::{right_singular, sym_gen_eig};
use crate::model::Model;
use crate::sensors::ObservationOperator;

/// Relative singular-value threshold defining the kernel subspace.
pub const KERNEL_TOL: f64 = 1e-10;

/// Euclidean-orthogonal splitting `R^M = X_θ ⊕ X_θ^⊥`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceDecomposition {
    /// Orthonormal basis of the kernel X_θ (M × k₀).
    pub kernel_basis: DMatrix<f64>,
    /// Orthonormal basis of the complement X_θ^⊥ (M × (M − k₀)).
    pub complement_basis: DMatrix<f64>,
    /// Orthogonal projector onto the complement.
    pub projector: DMatrix<f64>,
}

impl SubspaceDecomposition {
    /// Splits along the right singular vectors of `a`; directions with
    /// singular value below `tol · σ_max` form the kernel.
    pub fn from_columns(a: &DMatrix<f64>, tol: f64) -> Result<Self> {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(Error::InvalidInput("kernel tolerance must lie in (0, 1)".into()));
        }
        let (s, v) = right_singular(a);
        if s.is_empty() || !(s[0] > 0.0) {
            return Err(Error::InvalidInput("the load map is identically zero".into()));
        }
        let rank = s.iter().take_while(|&&x| x >= tol * s[0]).count();
        let complement_basis = v.columns(0, rank).into_owned();
        let kernel_basis = v.columns(rank, v.ncols() - rank).into_owned();
        let projector = &complement_basis * complement_basis.transpose();
        Ok(Self { kernel_basis, complement_basis, projector })
    }

    pub fn kernel_dim(&self) -> usize {
        self.kernel_basis.ncols()
    }

    pub fn complement_dim(&self) -> usize {
        self.complement_basis.ncols()
    }

    pub fn project(&self, m: &DVector<f64>) -> DVector<f64> {
        &self.projector * m
    }
}

/// Kernel of `m ↦ B_θ m`. The loads of the models here do not depend on θ,
/// which is only checked for admissibility.
pub fn kernel_subspace(model: &Model, theta: &[f64], tol: f64) -> Result<SubspaceDecomposition> {
    model.check_theta(theta)?;
    SubspaceDecomposition::from_columns(model.loads(), tol)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EtaBounds {
    pub eta_inf: f64,
    pub eta_sup: f64,
    /// Dimension of the subspace the ratios were taken over.
    pub subspace_dim: usize,
}

/// Extreme values of `‖u_θ(m)‖_X / ‖m‖_{Σ₀⁻¹}` over `span(basis)`.
pub fn eta_bounds(
    model: &Model,
    theta: &[f64],
    prior: &GaussianPrior,
    basis: &DMatrix<f64>,
) -> Result<EtaBounds> {
    let s = state_factor(&model.euclidean_coords(&model.parameter_to_state(theta)?));
    eta_bounds_from_factor(&s, prior, basis)
}

pub fn eta_bounds_from_factor(
    s: &DMatrix<f64>,
    prior: &GaussianPrior,
    basis: &DMatrix<f64>,
) -> Result<EtaBounds> {
    if basis.ncols() == 0 {
        return Err(Error::InvalidInput("η ratios need a nonempty subspace".into()));
    }
    let sc = s * basis;
    let a = sc.transpose() * &sc;
    let b = basis.transpose() * prior.cov_inv() * basis;
    let (vals, _) = sym_gen_eig(&a, &b)?;
    Ok(EtaBounds {
        eta_inf: vals[0].max(0.0).sqrt(),
        eta_sup: vals[vals.len() - 1].max(0.0).sqrt(),
        subspace_dim: basis.ncols(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObservabilityResult {
    pub beta: f64,
    /// Parameter whose state has unit norm and minimal observed norm.
    pub minimizer_m: DVector<f64>,
    /// Its state: FE coefficients for the full model, reduced coordinates for
    /// a reduced basis.
    pub minimizer_state: DVector<f64>,
}

/// R factor of a thin QR of `coords`, so `‖R m‖ = ‖coords · m‖`.
pub fn state_factor(coords: &DMatrix<f64>) -> DMatrix<f64> {
    if coords.nrows() == 0 {
        return DMatrix::zeros(0, coords.ncols());
    }
    coords.clone().qr().r()
}

/// β and the minimizing parameter from a state factor `s`, whitened
/// observations `gw = L_Σ⁻¹ G` and a complement basis `c`.
///
/// With `S C = Q R`, β = σ_min(gw C R⁻¹) and the minimizer is `C R⁻¹ v` for the
/// matching right singular vector v; its state has unit norm.
pub fn beta_from_factor(
    s: &DMatrix<f64>,
    gw: &DMatrix<f64>,
    c: &DMatrix<f64>,
) -> Result<(f64, DVector<f64>)> {
    let r_dim = c.ncols();
    if r_dim == 0 {
        return Err(Error::InvalidInput("complement subspace is empty".into()));
    }
    let sc = s * c;
    if sc.nrows() < r_dim {
        return Err(Error::DegenerateStateGram);
    }
    let r = sc.qr().r();
    let diag_max = r.diagonal().amax();
    if r.diagonal().iter().any(|&d| !(d.abs() > 1e-13 * diag_max)) {
        return Err(Error::DegenerateStateGram);
    }
    // W = gw C R⁻¹, i.e. Rᵀ Wᵀ = (gw C)ᵀ
    let gc = gw * c;
    let w = r
        .transpose()
        .solve_lower_triangular(&gc.transpose())
        .ok_or(Error::DegenerateStateGram)?
        .transpose();
    let (sv, v) = right_singular(&w);
    let beta = if w.nrows() == 0 { 0.0 } else { sv[r_dim - 1].max(0.0) };
    let vmin = if w.nrows() == 0 { v.column(0).into_owned() } else { v.column(r_dim - 1).into_owned() };
    let y = r.solve_upper_triangular(&vmin).ok_or(Error::DegenerateStateGram)?;
    Ok((beta, c * y))
}

/// `β_{θ,L} = inf { ‖L u‖_{Σ_L⁻¹} : ‖u‖_X = 1, u = u_θ(m) }`.
pub fn observability_beta(
    model: &Model,
    theta: &[f64],
    op: &ObservationOperator,
) -> Result<ObservabilityResult> {
    let split = kernel_subspace(model, theta, KERNEL_TOL)?;
    let states = model.parameter_to_state(theta)?;
    let s = state_factor(&model.euclidean_coords(&states));
    let gw = op.whiten(&op.observe_states(&states));
    let (beta, m) = beta_from_factor(&s, &gw, &split.complement_basis)?;
    Ok(ObservabilityResult { beta, minimizer_state: &states * &m, minimizer_m: m })
}

/// Pair coefficient over states `u_{θ₁}(m₁) + u_{θ₂}(m₂)`.
///
/// The parameter is the stacked `(m₁, m₂)`; directions with
/// `u_{θ₁}(m₁) = −u_{θ₂}(m₂)` form the kernel and are removed with the same
/// singular-value threshold as in the single-θ case.
pub fn observability_beta_pair(
    model: &Model,
    theta1: &[f64],
    theta2: &[f64],
    op: &ObservationOperator,
) -> Result<ObservabilityResult> {
    let u1 = model.parameter_to_state(theta1)?;
    let u2 = model.parameter_to_state(theta2)?;
    let mut stacked = DMatrix::zeros(u1.nrows(), u1.ncols() + u2.ncols());
    stacked.columns_mut(0, u1.ncols()).copy_from(&u1);
    stacked.columns_mut(u1.ncols(), u2.ncols()).copy_from(&u2);
    let s = state_factor(&model.euclidean_coords(&stacked));
    let split = SubspaceDecomposition::from_columns(&s, KERNEL_TOL)?;
    let gw = op.whiten(&op.observe_states(&stacked));
    let (beta, m) = beta_from_factor(&s, &gw, &split.complement_basis)?;
    Ok(ObservabilityResult { beta, minimizer_state: &stacked * &m, minimizer_m: m })
}

#[derive(Debug, Clone, PartialEq)]
pub struct EigenBoundsReport {
    /// `C² / (σ⁻² β² η² ‖Π m_i‖² + 1)` for each posterior eigenpair, ascending λ.
    pub bounds: Vec<f64>,
    /// `bound_i − λ_i`.
    pub margins: Vec<f64>,
    pub trace_bound: f64,
    pub trace_margin: f64,
    /// `Σ_i ‖Π m_i‖²`, equal to the complement dimension.
    pub projection_mass: f64,
}

pub fn eigenvalue_bounds_report(
    posterior: &PosteriorGaussian,
    beta: f64,
    eta_inf_perp: f64,
    norm_equiv: f64,
    sigma: f64,
    decomposition: &SubspaceDecomposition,
) -> EigenBoundsReport {
    let mut bounds = Vec::new();
    let mut margins = Vec::new();
    let mut projection_mass = 0.0;
    for (i, &lambda) in posterior.eigvals.iter().enumerate() {
        let v = posterior.eigvecs.column(i).into_owned();
        let pm = decomposition.project(&v).norm_squared();
        projection_mass += pm;
        let b = norm_equiv.powi(2) / (beta * beta * eta_inf_perp * eta_inf_perp * pm / (sigma * sigma) + 1.0);
        bounds.push(b);
        margins.push(b - lambda);
    }
    let trace_bound: f64 = bounds.iter().sum();
    EigenBoundsReport {
        trace_margin: trace_bound - posterior.trace,
        trace_bound,
        bounds,
        margins,
        projection_mass,
    }
}

/// `β² η_inf² C⁻² ‖Π m‖²`, the lower bound on `mᵀ Gᵀ Σ_L⁻¹ G m`.
pub fn observed_energy_lower_bound(
    m: &DVector<f64>,
    beta: f64,
    eta_inf_perp: f64,
    norm_equiv: f64,
    decomposition: &SubspaceDecomposition,
) -> f64 {
    (beta * eta_inf_perp / norm_equiv).powi(2) * decomposition.project(m).norm_squared()
}

/// `(1 − ε) β_R − γ ε`, a lower bound on β from a surrogate value.
pub fn rb_beta_lower_bound(beta_r: f64, eps_theta: f64, gamma: f64) -> f64 {
    (1.0 - eps_theta) * beta_r - gamma * eps_theta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bayes::posterior;
    use crate::model::{assemble_thermal_block, ThermalBlockConfig};
    use crate::sensors::{NoiseModel, SensorLibrary};
    use approx::assert_relative_eq;
    use nalgebra_sparse::CsrMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn setup() -> (Arc<Model>, SensorLibrary) {
        let model = Arc::new(
            assemble_thermal_block(&ThermalBlockConfig { mesh_n: 17, ..Default::default() })
                .unwrap(),
        );
        let lib = SensorLibrary::build(model.clone(), 6, [0.05, 0.95], 0.04, NoiseModel::Riesz).unwrap();
        (model, lib)
    }

    #[test]
    fn thermal_block_has_trivial_kernel() {
        let (model, _) = setup();
        let split = kernel_subspace(&model, &[1.0, 1.0], KERNEL_TOL).unwrap();
        assert_eq!(split.kernel_dim(), 0);
        assert_eq!(split.complement_dim(), 4);
        let (s, _) = right_singular(model.loads());
        assert!(s[3] > 1e-8);
    }

    #[test]
    fn zero_load_column_is_kernel() {
        let (model, _) = setup();
        let mut loads = model.loads().clone();
        loads.column_mut(2).fill(0.0);
        let synth = model.with_loads(loads).unwrap();
        let split = kernel_subspace(&synth, &[1.0, 1.0], KERNEL_TOL).unwrap();
        assert_eq!(split.kernel_dim(), 1);
        assert_relative_eq!(split.kernel_basis[(2, 0)].abs(), 1.0, epsilon = 1e-12);
        let p = &split.projector;
        assert_relative_eq!(p * p, p.clone(), epsilon = 1e-12);
        assert!(kernel_subspace(&synth, &[1.0, 1.0], 0.0).is_err());
        let zero = model.with_loads(DMatrix::zeros(model.n_dof(), 4)).unwrap();
        assert!(kernel_subspace(&zero, &[1.0, 1.0], KERNEL_TOL).is_err());
    }

    #[test]
    fn eta_bounds_single_direction_and_scaling() {
        let (model, _) = setup();
        let theta = [0.5, 3.0];
        let prior = GaussianPrior::standard(DVector::zeros(4));
        let dir = DMatrix::from_column_slice(4, 1, &[0.6, 0.0, 0.8, 0.0]);
        let eta = eta_bounds(&model, &theta, &prior, &dir).unwrap();
        let u = model.solve_forward(&theta, dir.as_slice()).unwrap();
        let ratio = model.x_norm(u.coeffs.as_slice()) / 1.0;
        assert_relative_eq!(eta.eta_inf, ratio, max_relative = 1e-10);
        assert_relative_eq!(eta.eta_sup, ratio, max_relative = 1e-10);

        let full = DMatrix::identity(4, 4);
        let base = eta_bounds(&model, &theta, &prior, &full).unwrap();
        let wide = GaussianPrior::new(DVector::zeros(4), DMatrix::identity(4, 4) * 4.0).unwrap();
        let scaled = eta_bounds(&model, &theta, &wide, &full).unwrap();
        assert_relative_eq!(scaled.eta_inf, 2.0 * base.eta_inf, max_relative = 1e-10);
        assert_relative_eq!(scaled.eta_sup, 2.0 * base.eta_sup, max_relative = 1e-10);
    }

    #[test]
    fn minimizer_has_unit_state_and_attains_beta() {
        let (model, lib) = setup();
        let op = lib.operator(&[2, 9, 20, 31]).unwrap();
        let theta = [2.0, 0.3];
        let res = observability_beta(&model, &theta, &op).unwrap();
        let u = crate::model::StateVector::new(res.minimizer_state.clone());
        assert_relative_eq!(model.x_norm(u.coeffs.as_slice()), 1.0, epsilon = 1e-8);
        assert_relative_eq!(op.noise_norm(&op.observe(&u)), res.beta, epsilon = 1e-8);
    }

    #[test]
    fn blind_operator_has_zero_beta() {
        let (model, _) = setup();
        let n = model.n_dof();
        let op = ObservationOperator::from_parts(vec![0], CsrMatrix::zeros(1, n), DMatrix::identity(1, 1))
            .unwrap();
        assert_eq!(observability_beta(&model, &[1.0, 1.0], &op).unwrap().beta, 0.0);
        let empty = ObservationOperator::empty(n);
        assert_eq!(observability_beta(&model, &[1.0, 1.0], &empty).unwrap().beta, 0.0);
    }

    #[test]
    fn noise_scaling_and_reordering() {
        let (model, lib) = setup();
        let sel = [3, 14, 22, 30, 7];
        let op = lib.operator(&sel).unwrap();
        let theta = [0.2, 5.0];
        let beta = observability_beta(&model, &theta, &op).unwrap().beta;
        for c in [0.25, 4.0] {
            let scaled =
                ObservationOperator::from_parts(sel.to_vec(), op.obs_matrix().clone(), op.cov() * c)
                    .unwrap();
            let b = observability_beta(&model, &theta, &scaled).unwrap().beta;
            assert_relative_eq!(b, beta / f64::sqrt(c), max_relative = 1e-8);
        }
        let reordered = lib.operator(&[30, 7, 3, 22, 14]).unwrap();
        let b = observability_beta(&model, &theta, &reordered).unwrap().beta;
        assert_relative_eq!(b, beta, max_relative = 1e-9);
    }

    #[test]
    fn pair_coefficient_collapses_on_diagonal() {
        let (model, lib) = setup();
        let op = lib.operator(&[1, 8, 15, 26, 33, 5]).unwrap();
        let theta = [0.7, 1.9];
        let single = observability_beta(&model, &theta, &op).unwrap().beta;
        let pair = observability_beta_pair(&model, &theta, &theta, &op).unwrap().beta;
        assert_relative_eq!(pair, single, epsilon = 1e-8);
        let other = [4.0, 0.15];
        let b2 = observability_beta_pair(&model, &theta, &other, &op).unwrap().beta;
        let b_other = observability_beta(&model, &other, &op).unwrap().beta;
        assert!(b2 <= single.min(b_other) + 1e-10);
    }

    #[test]
    fn bounds_hold_and_projection_mass_is_dimension() {
        let (model, lib) = setup();
        let op = lib.operator(&[0, 10, 21, 35]).unwrap();
        let theta = [3.0, 0.4];
        let sigma = 0.01;
        let prior = GaussianPrior::standard(DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]));
        let g = crate::bayes::assemble_ptg(&model, &theta, &op).unwrap();
        let post = posterior(&g, &op, sigma, &prior, &DVector::zeros(4)).unwrap();
        let split = kernel_subspace(&model, &theta, KERNEL_TOL).unwrap();
        let eta = eta_bounds(&model, &theta, &prior, &split.complement_basis).unwrap();
        let beta = observability_beta(&model, &theta, &op).unwrap().beta;
        let rep = eigenvalue_bounds_report(&post, beta, eta.eta_inf, prior.norm_equiv(), sigma, &split);
        assert!(rep.margins.iter().all(|&m| m >= -1e-10), "{rep:?}");
        assert!(rep.trace_margin >= -1e-10);
        assert_relative_eq!(rep.projection_mass, 4.0, epsilon = 1e-10);
        let none = eigenvalue_bounds_report(&post, 0.0, eta.eta_inf, 1.0, sigma, &split);
        assert!(none.bounds.iter().all(|&b| b == 1.0));

        let gw = op.whiten(&g);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let m = DVector::from_fn(4, |_, _| rng.random_range(-1.0..1.0));
            let energy = (&gw * &m).norm_squared();
            let lower = observed_energy_lower_bound(&m, beta, eta.eta_inf, 1.0, &split);
            assert!(energy >= lower * (1.0 - 1e-10));
        }
    }

    #[test]
    fn lower_bound_arithmetic() {
        assert_eq!(rb_beta_lower_bound(0.7, 0.0, 1.0), 0.7);
        assert_relative_eq!(rb_beta_lower_bound(0.5, 0.01, 1.0), 0.485, epsilon = 1e-15);
    }
}
