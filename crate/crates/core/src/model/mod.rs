//! Affine hyper-parameterized forward model.
//!
//! The discrete problem is `A_θ u = B m` with
//! `A_θ = Σ_q coeff_q(θ) A_q` and a θ-independent load matrix `B` whose
//! columns are the load components. States live on the non-Dirichlet dofs and
//! carry the H¹ inner product `X`.

mod mesh;
mod thermal;

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::factorization::CscSymbolicCholesky;
use nalgebra_sparse::CscMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{csc_bilinear, csc_matvec, SparseCholesky};

pub use mesh::UniformGrid;
pub(crate) use mesh::{shape, GAUSS4};
pub use thermal::{
    assemble_thermal_block, legendre, LayoutKind, Region, SubdomainLayout, ThermalBlockConfig,
};

/// Box of admissible hyper-parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperParameterDomain {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl HyperParameterDomain {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidInput(
                "hyper-parameter bounds must be nonempty and of equal length".into(),
            ));
        }
        if lower.iter().zip(&upper).any(|(&lo, &hi)| !(lo > 0.0 && lo < hi)) {
            return Err(Error::InvalidInput(
                "hyper-parameter bounds need 0 < lower < upper".into(),
            ));
        }
        Ok(Self { lower, upper })
    }

    pub fn uniform(dim: usize, lower: f64, upper: f64) -> Result<Self> {
        Self::new(vec![lower; dim], vec![upper; dim])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, theta: &[f64]) -> bool {
        theta.len() == self.dim()
            && theta
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&t, (&lo, &hi))| t >= lo * (1.0 - 1e-12) && t <= hi * (1.0 + 1e-12))
    }
}

/// Tensor grid over the domain, first coordinate running fastest.
///
/// With `log_scale` the points are equispaced in log₁₀. Endpoints are exact.
pub fn sample_hyper_grid(
    domain: &HyperParameterDomain,
    n_per_dim: usize,
    log_scale: bool,
) -> Result<Vec<Vec<f64>>> {
    if n_per_dim < 2 {
        return Err(Error::InvalidInput("a hyper-parameter grid needs n_per_dim >= 2".into()));
    }
    let axes: Vec<Vec<f64>> = domain
        .lower
        .iter()
        .zip(&domain.upper)
        .map(|(&lo, &hi)| {
            (0..n_per_dim)
                .map(|k| {
                    if k == 0 {
                        return lo;
                    }
                    if k == n_per_dim - 1 {
                        return hi;
                    }
                    let s = k as f64 / (n_per_dim - 1) as f64;
                    if log_scale {
                        10f64.powf(lo.log10() + s * (hi.log10() - lo.log10()))
                    } else {
                        lo + s * (hi - lo)
                    }
                })
                .collect()
        })
        .collect();
    let dim = domain.dim();
    let total = n_per_dim.pow(dim as u32);
    Ok((0..total)
        .map(|mut flat| {
            (0..dim)
                .map(|d| {
                    let k = flat % n_per_dim;
                    flat /= n_per_dim;
                    axes[d][k]
                })
                .collect()
        })
        .collect())
}

/// How one stiffness component's coefficient depends on θ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Coefficient {
    /// `coeff(θ) = θ[i]`
    Free(usize),
    /// Pinned value, independent of θ.
    Fixed(f64),
}

impl Coefficient {
    pub fn eval(&self, theta: &[f64]) -> f64 {
        match *self {
            Coefficient::Free(i) => theta[i],
            Coefficient::Fixed(v) => v,
        }
    }
}

/// FE coefficients of a state on the non-Dirichlet dofs.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub coeffs: DVector<f64>,
}

impl StateVector {
    pub fn new(coeffs: DVector<f64>) -> Self {
        Self { coeffs }
    }

    pub fn zeros(n: usize) -> Self {
        Self { coeffs: DVector::zeros(n) }
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }
}

/// Discretized affine forward problem.
#[derive(Debug, Clone)]
pub struct Model {
    grid: UniformGrid,
    n_dof: usize,
    stiffness: Vec<CscMatrix<f64>>,
    coefficients: Vec<Coefficient>,
    loads: DMatrix<f64>,
    gram_x: CscMatrix<f64>,
    gram_factor: SparseCholesky,
    symbolic: CscSymbolicCholesky,
    domain: HyperParameterDomain,
    dirichlet_nodes: Vec<usize>,
    unit_coercivity: OnceLock<f64>,
}

impl Model {
    /// Builds a model from its assembled parts.
    ///
    /// All stiffness components must share the sparsity pattern of `gram_x`.
    /// Free dofs are the first `n_dof` nodes of `grid`.
    pub fn from_parts(
        grid: UniformGrid,
        stiffness: Vec<CscMatrix<f64>>,
        coefficients: Vec<Coefficient>,
        loads: DMatrix<f64>,
        gram_x: CscMatrix<f64>,
        domain: HyperParameterDomain,
        dirichlet_nodes: Vec<usize>,
    ) -> Result<Self> {
        let n_dof = gram_x.nrows();
        if stiffness.is_empty() || stiffness.len() != coefficients.len() {
            return Err(Error::Dimension(
                "one coefficient per stiffness component is required".into(),
            ));
        }
        if stiffness.iter().any(|a| a.pattern() != gram_x.pattern()) {
            return Err(Error::Dimension(
                "stiffness components must share the Gram sparsity pattern".into(),
            ));
        }
        if loads.nrows() != n_dof || loads.ncols() == 0 {
            return Err(Error::Dimension("load matrix must be N x M with M >= 1".into()));
        }
        if coefficients.iter().any(|c| matches!(c, Coefficient::Free(i) if *i >= domain.dim())) {
            return Err(Error::Dimension("coefficient refers to a missing hyper-parameter".into()));
        }
        let gram_factor = SparseCholesky::factor(&gram_x, "state Gram X")?;
        let symbolic = CscSymbolicCholesky::factor(gram_x.pattern().clone());
        Ok(Self {
            grid,
            n_dof,
            stiffness,
            coefficients,
            loads,
            gram_x,
            gram_factor,
            symbolic,
            domain,
            dirichlet_nodes,
            unit_coercivity: OnceLock::new(),
        })
    }

    /// Same operator with a different load matrix (used for synthetic checks).
    pub fn with_loads(&self, loads: DMatrix<f64>) -> Result<Self> {
        if loads.nrows() != self.n_dof {
            return Err(Error::Dimension("load matrix row count must equal N".into()));
        }
        let mut out = self.clone();
        out.loads = loads;
        Ok(out)
    }

    pub fn grid(&self) -> UniformGrid {
        self.grid
    }

    pub fn n_dof(&self) -> usize {
        self.n_dof
    }

    /// Parameter dimension M.
    pub fn param_dim(&self) -> usize {
        self.loads.ncols()
    }

    /// Hyper-parameter dimension P.
    pub fn hyper_dim(&self) -> usize {
        self.domain.dim()
    }

    pub fn hyper_domain(&self) -> &HyperParameterDomain {
        &self.domain
    }

    pub fn stiffness_components(&self) -> &[CscMatrix<f64>] {
        &self.stiffness
    }

    pub fn coefficients(&self) -> &[Coefficient] {
        &self.coefficients
    }

    pub fn loads(&self) -> &DMatrix<f64> {
        &self.loads
    }

    pub fn gram_x(&self) -> &CscMatrix<f64> {
        &self.gram_x
    }

    pub fn gram_factor(&self) -> &SparseCholesky {
        &self.gram_factor
    }

    pub fn dirichlet_nodes(&self) -> &[usize] {
        &self.dirichlet_nodes
    }

    pub fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if self.domain.contains(theta) {
            Ok(())
        } else {
            Err(Error::OutOfDomain { theta: theta.to_vec() })
        }
    }

    pub fn coefficient_values(&self, theta: &[f64]) -> Vec<f64> {
        self.coefficients.iter().map(|c| c.eval(theta)).collect()
    }

    /// Values of `Σ_q coeff_q(θ) A_q` on the shared pattern.
    pub fn operator_values(&self, theta: &[f64]) -> Vec<f64> {
        let coeffs = self.coefficient_values(theta);
        let mut values = vec![0.0; self.gram_x.nnz()];
        for (a, c) in self.stiffness.iter().zip(coeffs) {
            for (v, &aq) in values.iter_mut().zip(a.values()) {
                *v += c * aq;
            }
        }
        values
    }

    pub fn operator(&self, theta: &[f64]) -> CscMatrix<f64> {
        CscMatrix::try_from_pattern_and_values(
            self.gram_x.pattern().clone(),
            self.operator_values(theta),
        )
        .expect("pattern and values agree")
    }

    /// Factorizes `A_θ` once for repeated solves at the same θ.
    pub fn solver(&self, theta: &[f64]) -> Result<ForwardSolver> {
        self.check_theta(theta)?;
        self.solver_unchecked(theta)
    }

    pub(crate) fn solver_unchecked(&self, theta: &[f64]) -> Result<ForwardSolver> {
        let factor = SparseCholesky::factor_with(
            &self.symbolic,
            &self.operator_values(theta),
            "forward operator (coercivity violated)",
        )?;
        Ok(ForwardSolver { factor, theta: theta.to_vec() })
    }

    pub fn solve_forward(&self, theta: &[f64], m: &[f64]) -> Result<StateVector> {
        if m.len() != self.param_dim() {
            return Err(Error::Dimension(format!(
                "parameter has length {}, expected {}",
                m.len(),
                self.param_dim()
            )));
        }
        let solver = self.solver(theta)?;
        let rhs = &self.loads * DVector::from_column_slice(m);
        Ok(StateVector::new(solver.factor.solve_vec(&rhs)))
    }

    /// N×M matrix whose column i is the state for parameter `e_i`.
    pub fn parameter_to_state(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.solver(theta)?.state_matrix(&self.loads))
    }

    pub fn x_inner(&self, u: &[f64], v: &[f64]) -> f64 {
        csc_bilinear(&self.gram_x, u, v)
    }

    pub fn x_norm(&self, u: &[f64]) -> f64 {
        self.x_inner(u, u).max(0.0).sqrt()
    }

    /// Coordinates `E = Lᵀ U` with `X = L Lᵀ`, so that `‖U m‖_X = ‖E m‖₂`.
    pub fn euclidean_coords(&self, states: &DMatrix<f64>) -> DMatrix<f64> {
        self.gram_factor.lt_mul(states)
    }

    /// Dual norm `sqrt(rᵀ X⁻¹ r)` of every column of `r`, via `‖L⁻¹ r‖₂`.
    pub fn whiten_dual(&self, r: &DMatrix<f64>) -> DMatrix<f64> {
        self.gram_factor.forward(r)
    }

    /// Nodal values on the full grid, zero on Dirichlet nodes.
    pub fn full_nodal(&self, state: &StateVector) -> Vec<f64> {
        let mut out = vec![0.0; self.grid.n_nodes()];
        out[..self.n_dof].copy_from_slice(state.coeffs.as_slice());
        out
    }

    /// L²(Ω) distance between a discrete state and a reference function.
    pub fn l2_error(&self, state: &StateVector, exact: impl Fn(f64, f64) -> f64) -> f64 {
        let nodal = self.full_nodal(state);
        let h = self.grid.h();
        let ne = self.grid.n_elements_per_side();
        let mut acc = 0.0;
        for ej in 0..ne {
            for ei in 0..ne {
                let nodes = self.grid.element_nodes(ei, ej);
                let [x0, y0] = self.grid.element_origin(ei, ej);
                for &(px, wx) in &GAUSS4 {
                    for &(py, wy) in &GAUSS4 {
                        let s = shape(px, py);
                        let uh: f64 = (0..4).map(|a| s[a] * nodal[nodes[a]]).sum();
                        let diff = uh - exact(x0 + h * px, y0 + h * py);
                        acc += wx * wy * h * h * diff * diff;
                    }
                }
            }
        }
        acc.sqrt()
    }

    /// Certified lower bound on the smallest eigenvalue of `(Σ_q A_q, X)`.
    ///
    /// Inverse iteration gives a Rayleigh quotient ρ from above; the residual
    /// bound `|λ - ρ| ≤ ‖K y - ρ X y‖_{X⁻¹}` for `‖y‖_X = 1` is subtracted.
    pub fn unit_coercivity(&self) -> f64 {
        *self.unit_coercivity.get_or_init(|| self.compute_unit_coercivity())
    }

    fn compute_unit_coercivity(&self) -> f64 {
        let unit = Model {
            coefficients: vec![Coefficient::Fixed(1.0); self.coefficients.len()],
            ..self.clone()
        };
        let (rho, residual) = unit.smallest_eigenpair(&vec![1.0; self.hyper_dim()]);
        (rho - residual).max(0.0)
    }

    /// Rayleigh-quotient estimate of the coercivity constant of `A_θ`
    /// (smallest eigenvalue of the pencil `(A_θ, X)`), approached from above.
    pub fn coercivity_estimate(&self, theta: &[f64]) -> Result<f64> {
        self.check_theta(theta)?;
        Ok(self.smallest_eigenpair(theta).0)
    }

    /// Inverse iteration on `(A_θ, X)`: Rayleigh quotient ρ and the residual
    /// norm `‖A_θ y − ρ X y‖_{X⁻¹}` for the final iterate with `‖y‖_X = 1`.
    fn smallest_eigenpair(&self, theta: &[f64]) -> (f64, f64) {
        let k = self.operator(theta);
        let factor = self
            .solver_unchecked(theta)
            .expect("coercive operator is SPD")
            .factor;
        let mut y = DVector::from_element(self.n_dof, 1.0);
        let mut rho_prev = f64::INFINITY;
        let mut rho = f64::INFINITY;
        for _ in 0..2000 {
            let xy = csc_matvec(&self.gram_x, y.as_slice());
            y = factor.solve_vec(&xy);
            let norm = self.x_norm(y.as_slice());
            y /= norm;
            rho = csc_bilinear(&k, y.as_slice(), y.as_slice());
            if (rho_prev - rho).abs() <= 1e-15 * rho {
                break;
            }
            rho_prev = rho;
        }
        let r = csc_matvec(&k, y.as_slice()) - csc_matvec(&self.gram_x, y.as_slice()) * rho;
        let w = self
            .gram_factor
            .forward(&DMatrix::from_column_slice(r.len(), 1, r.as_slice()));
        (rho, w.norm())
    }
}

/// Factorization of `A_θ` at a fixed θ.
#[derive(Debug, Clone)]
pub struct ForwardSolver {
    factor: SparseCholesky,
    theta: Vec<f64>,
}

impl ForwardSolver {
    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn solve_rhs(&self, rhs: &DMatrix<f64>) -> DMatrix<f64> {
        self.factor.solve(rhs)
    }

    pub fn state_matrix(&self, loads: &DMatrix<f64>) -> DMatrix<f64> {
        self.factor.solve(loads)
    }
}
