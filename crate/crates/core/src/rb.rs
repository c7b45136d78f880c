//! Certified reduced-basis surrogate of the parameter-to-state map.
//!
//! The basis `V` is X-orthonormal, so the reduced coefficients of a state are
//! also its Euclidean state coordinates: `‖V c‖_X = ‖c‖₂`. The error bound
//! for `u_R = V C_θ m` is `‖A_θ u_R − B m‖_{X⁻¹} / α_LB(θ)`, turned into a
//! relative bound through `‖u‖ ≥ ‖u_R‖ − Δ`.

use nalgebra::{DMatrix, DVector};
use nalgebra_sparse::CscMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, select_rows, sym_eig_sorted, sym_gen_eig, symmetrize};
use crate::model::{Coefficient, HyperParameterDomain, Model, StateVector};
use crate::observability::{
    beta_from_factor, state_factor, ObservabilityResult, SubspaceDecomposition, KERNEL_TOL,
};
use crate::sensors::{ObservationOperator, SensorLibrary};

/// First line of a serialized reduced basis.
pub const ARTIFACT_HEADER: &str = "RBSPACE-v1";

/// Relative eigenvalue floor below which the reduced state Gram counts as singular.
const GRAM_RANK_TOL: f64 = 1e-14;

/// Per-θ relative error bounds on a training set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorCertificate {
    pub thetas: Vec<Vec<f64>>,
    /// `f64::INFINITY` where the bound is unavailable.
    #[serde(with = "unbounded_vec")]
    pub eps_theta: Vec<f64>,
    #[serde(with = "unbounded")]
    pub eps_max: f64,
}

/// JSON has no infinity; unavailable bounds are written as `null`.
mod unbounded {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        x.is_finite().then_some(*x).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

mod unbounded_vec {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(x: &[f64], s: S) -> Result<S::Ok, S::Error> {
        x.iter().map(|v| v.is_finite().then_some(*v)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<Option<f64>>::deserialize(d)?
            .into_iter()
            .map(|v| v.unwrap_or(f64::INFINITY))
            .collect())
    }
}

impl ErrorCertificate {
    pub fn lookup(&self, theta: &[f64]) -> Option<f64> {
        self.thetas
            .iter()
            .position(|t| same_theta(t, theta))
            .map(|i| self.eps_theta[i])
    }

    pub fn is_valid(&self) -> bool {
        self.eps_max < 1.0
    }
}

pub(crate) fn same_theta(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * x.abs().max(y.abs()))
}

/// Certificate data at a single θ.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaCertificate {
    /// Certified relative error bound over all parameters, or infinity.
    pub eps: f64,
    /// `sup_m Δ(m) / ‖u_R(m)‖`.
    pub rho: f64,
    /// True when some parameter has a vanishing reduced state.
    pub deficient: bool,
    /// Parameter attaining the bound (relative, or absolute when deficient).
    pub worst_m: DVector<f64>,
    /// Largest absolute bound over unit parameters with vanishing reduced state.
    pub deficient_score: f64,
}

impl ThetaCertificate {
    fn enrichment_key(&self) -> (bool, f64) {
        if self.deficient {
            (true, self.deficient_score)
        } else {
            (false, self.rho)
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RBSpace {
    basis: DMatrix<f64>,
    reduced_stiffness: Vec<DMatrix<f64>>,
    coefficients: Vec<Coefficient>,
    reduced_loads: DMatrix<f64>,
    domain: HyperParameterDomain,
    complement: DMatrix<f64>,
    alpha_ref: f64,
    eps_target: f64,
    certificate: ErrorCertificate,
    /// Largest training-set bound before each enrichment and after the last.
    #[serde(with = "unbounded_vec")]
    history: Vec<f64>,
    #[serde(skip)]
    library_projection: Option<DMatrix<f64>>,
}

impl RBSpace {
    fn empty(model: &Model, eps_target: f64) -> Result<Self> {
        let split = SubspaceDecomposition::from_columns(model.loads(), KERNEL_TOL)?;
        let n = model.n_dof();
        let m = model.param_dim();
        Ok(Self {
            basis: DMatrix::zeros(n, 0),
            reduced_stiffness: vec![DMatrix::zeros(0, 0); model.stiffness_components().len()],
            coefficients: model.coefficients().to_vec(),
            reduced_loads: DMatrix::zeros(0, m),
            domain: model.hyper_domain().clone(),
            complement: split.complement_basis,
            alpha_ref: model.unit_coercivity(),
            eps_target,
            certificate: ErrorCertificate { thetas: Vec::new(), eps_theta: Vec::new(), eps_max: f64::INFINITY },
            history: Vec::new(),
            library_projection: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    pub fn basis(&self) -> &DMatrix<f64> {
        &self.basis
    }

    pub fn reduced_stiffness(&self) -> &[DMatrix<f64>] {
        &self.reduced_stiffness
    }

    pub fn reduced_loads(&self) -> &DMatrix<f64> {
        &self.reduced_loads
    }

    pub fn certificate(&self) -> &ErrorCertificate {
        &self.certificate
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    pub fn eps_target(&self) -> f64 {
        self.eps_target
    }

    pub fn param_dim(&self) -> usize {
        self.reduced_loads.ncols()
    }

    /// Orthonormal basis of the complement of the load kernel.
    pub fn complement(&self) -> &DMatrix<f64> {
        &self.complement
    }

    /// Coercivity lower bound `min_q coeff_q(θ) · α_ref`; every component is
    /// positive semidefinite and the coefficients are positive.
    pub fn alpha_lb(&self, theta: &[f64]) -> f64 {
        let cmin = self
            .coefficients
            .iter()
            .map(|c| c.eval(theta))
            .fold(f64::INFINITY, f64::min);
        cmin * self.alpha_ref
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if self.domain.contains(theta) {
            Ok(())
        } else {
            Err(Error::OutOfDomain { theta: theta.to_vec() })
        }
    }

    pub fn reduced_operator(&self, theta: &[f64]) -> DMatrix<f64> {
        let n = self.dim();
        let mut a = DMatrix::zeros(n, n);
        for (aq, c) in self.reduced_stiffness.iter().zip(&self.coefficients) {
            a += aq * c.eval(theta);
        }
        a
    }

    /// Reduced coefficients `C_θ` (n × M) of the states for `e_1, …, e_M`.
    pub fn reduced_state_matrix(&self, theta: &[f64]) -> Result<DMatrix<f64>> {
        self.check_theta(theta)?;
        if self.dim() == 0 {
            return Ok(DMatrix::zeros(0, self.param_dim()));
        }
        Ok(cholesky(&self.reduced_operator(theta), "reduced operator")?.solve(&self.reduced_loads))
    }

    /// Reduced coefficients and the lifted state `V c`.
    pub fn rb_solve(&self, theta: &[f64], m: &[f64]) -> Result<(DVector<f64>, StateVector)> {
        if m.len() != self.param_dim() {
            return Err(Error::Dimension("parameter length must equal M".into()));
        }
        let c = self.reduced_state_matrix(theta)? * DVector::from_column_slice(m);
        let lifted = StateVector::new(&self.basis * &c);
        Ok((c, lifted))
    }

    /// Stores `F V`, the library functionals applied to each basis vector.
    pub fn attach_library(&mut self, library: &SensorLibrary) {
        self.library_projection = Some(library.observe_all(&self.basis));
    }

    pub fn library_projection(&self) -> Option<&DMatrix<f64>> {
        self.library_projection.as_ref()
    }

    /// Whitened observations `L_Σ⁻¹ G_R` of the reduced states `coeffs`.
    fn observe_reduced(&self, op: &ObservationOperator, coeffs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let proj = self.library_projection.as_ref().ok_or_else(|| {
            Error::InvalidInput("reduced basis has no library projection attached".into())
        })?;
        Ok(op.whiten(&(select_rows(proj, op.indices()) * coeffs)))
    }

    /// Surrogate observability coefficient; no full-order work is done.
    pub fn beta_rb(&self, theta: &[f64], op: &ObservationOperator) -> Result<ObservabilityResult> {
        let c = self.reduced_state_matrix(theta)?;
        let gw = self.observe_reduced(op, &c)?;
        let (beta, m) = beta_from_factor(&state_factor(&c), &gw, &self.complement)?;
        Ok(ObservabilityResult { beta, minimizer_state: &c * &m, minimizer_m: m })
    }

    /// Surrogate pair coefficient over `u_{θ₁,R}(m₁) + u_{θ₂,R}(m₂)`.
    pub fn beta_rb_pair(
        &self,
        theta1: &[f64],
        theta2: &[f64],
        op: &ObservationOperator,
    ) -> Result<ObservabilityResult> {
        let c1 = self.reduced_state_matrix(theta1)?;
        let c2 = self.reduced_state_matrix(theta2)?;
        let m = self.param_dim();
        let mut c = DMatrix::zeros(self.dim(), 2 * m);
        c.columns_mut(0, m).copy_from(&c1);
        c.columns_mut(m, m).copy_from(&c2);
        let s = state_factor(&c);
        let split = SubspaceDecomposition::from_columns(&s, KERNEL_TOL)?;
        let gw = self.observe_reduced(op, &c)?;
        let (beta, mm) = beta_from_factor(&s, &gw, &split.complement_basis)?;
        Ok(ObservabilityResult { beta, minimizer_state: &c * &mm, minimizer_m: mm })
    }

    /// `L_X⁻¹ (B − A_θ V C_θ)`, whose column norms are residual dual norms.
    fn whitened_residual(&self, model: &Model, theta: &[f64], c: &DMatrix<f64>) -> DMatrix<f64> {
        let u = &self.basis * c;
        let mut r = model.loads().clone();
        for (aq, coeff) in model.stiffness_components().iter().zip(model.coefficients()) {
            r -= (aq * &u) * coeff.eval(theta);
        }
        model.whiten_dual(&r)
    }

    /// Certified relative error bound at θ, maximized over all parameters.
    pub fn theta_certificate(&self, model: &Model, theta: &[f64]) -> Result<ThetaCertificate> {
        self.check_theta(theta)?;
        let c = self.reduced_state_matrix(theta)?;
        let alpha = self.alpha_lb(theta);
        let cc = &self.complement;
        let rw = self.whitened_residual(model, theta, &c) * cc;
        let gr = symmetrize(&(rw.transpose() * &rw / (alpha * alpha)));
        let sc = &c * cc;
        let gs = symmetrize(&(sc.transpose() * &sc));
        let r = cc.ncols();

        let (svals, svecs) = sym_eig_sorted(&gs);
        let smax = if r > 0 { svals[r - 1] } else { 0.0 };
        let null: Vec<usize> = (0..r).filter(|&i| !(svals[i] > GRAM_RANK_TOL * smax) || smax <= 0.0).collect();
        if !null.is_empty() {
            let z = DMatrix::from_fn(r, null.len(), |i, j| svecs[(i, null[j])]);
            let (vals, vecs) = sym_eig_sorted(&(z.transpose() * &gr * &z));
            let top = vals.len() - 1;
            let dir = &z * vecs.column(top);
            return Ok(ThetaCertificate {
                eps: f64::INFINITY,
                rho: f64::INFINITY,
                deficient: true,
                worst_m: cc * dir,
                deficient_score: vals[top].max(0.0).sqrt(),
            });
        }
        let (vals, vecs) = sym_gen_eig(&gr, &gs)?;
        let rho = vals[r - 1].max(0.0).sqrt();
        let eps = if rho < 1.0 { rho / (1.0 - rho) } else { f64::INFINITY };
        Ok(ThetaCertificate {
            eps,
            rho,
            deficient: false,
            worst_m: cc * vecs.column(r - 1),
            deficient_score: 0.0,
        })
    }

    /// Certified relative error bound for a single parameter, `None` when the
    /// absolute bound reaches the reduced state norm.
    pub fn error_estimate(&self, model: &Model, theta: &[f64], m: &[f64]) -> Result<Option<f64>> {
        let (c, _) = self.rb_solve(theta, m)?;
        let cm = self.reduced_state_matrix(theta)?;
        let mv = DMatrix::from_column_slice(m.len(), 1, m);
        let delta = (self.whitened_residual(model, theta, &cm) * mv).norm() / self.alpha_lb(theta);
        let ur = c.norm();
        Ok(if delta < ur { Some(delta / (ur - delta)) } else { None })
    }

    /// Stored bound for a training point, otherwise computed from the model.
    pub fn certified_eps(&self, model: &Model, theta: &[f64]) -> Result<f64> {
        match self.certificate.lookup(theta) {
            Some(eps) => Ok(eps),
            None => Ok(self.theta_certificate(model, theta)?.eps),
        }
    }

    /// Appends `snapshot` after two passes of X-orthogonal Gram–Schmidt.
    /// Returns false when it lies numerically in the current span.
    fn enrich(&mut self, model: &Model, snapshot: &DVector<f64>) -> bool {
        let original = model.x_norm(snapshot.as_slice());
        let mut v = DMatrix::from_column_slice(snapshot.len(), 1, snapshot.as_slice());
        for _ in 0..2 {
            if self.dim() > 0 {
                let xv = model.gram_x() * &v;
                let coeffs = self.basis.transpose() * xv;
                v -= &self.basis * coeffs;
            }
        }
        let norm = model.x_norm(v.as_slice());
        if !(norm > 1e-10 * original) {
            return false;
        }
        v /= norm;
        let n = self.dim();
        self.basis = self.basis.clone().insert_column(n, 0.0);
        self.basis.set_column(n, &v.column(0));
        self.assemble_reduced(model);
        true
    }

    fn assemble_reduced(&mut self, model: &Model) {
        let v = &self.basis;
        self.reduced_stiffness = model
            .stiffness_components()
            .iter()
            .map(|aq: &CscMatrix<f64>| symmetrize(&(v.transpose() * (aq * v))))
            .collect();
        self.reduced_loads = v.transpose() * model.loads();
        // a projection of the previous basis must not survive enrichment
        self.library_projection = None;
    }

    fn certify_all(&self, model: &Model, xi: &[Vec<f64>]) -> Result<Vec<ThetaCertificate>> {
        xi.par_iter().map(|t| self.theta_certificate(model, t)).collect()
    }

    /// Serialized form: header line, configuration hash line, JSON body.
    pub fn to_artifact(&self, config_hash: &str) -> Result<String> {
        let body = serde_json::to_string(self).map_err(|e| Error::Format(e.to_string()))?;
        Ok(format!("{ARTIFACT_HEADER}\n{config_hash}\n{body}\n"))
    }

    /// Parses an artifact; with `expected_hash`, refuses one built for another configuration.
    pub fn from_artifact(text: &str, expected_hash: Option<&str>) -> Result<Self> {
        let mut parts = text.splitn(3, '\n');
        if parts.next() != Some(ARTIFACT_HEADER) {
            return Err(Error::Format(format!("missing {ARTIFACT_HEADER} header")));
        }
        let found = parts.next().ok_or_else(|| Error::Format("missing configuration hash".into()))?;
        if let Some(expected) = expected_hash {
            if expected != found {
                return Err(Error::StaleArtifact { expected: expected.into(), found: found.into() });
            }
        }
        let body = parts.next().ok_or_else(|| Error::Format("missing body".into()))?;
        serde_json::from_str(body).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Greedy construction: each round enriches with the truth snapshot of the
/// worst-certified direction over the training set.
pub fn build_rb(
    model: &Model,
    xi_train: &[Vec<f64>],
    eps_target: f64,
    max_basis: usize,
) -> Result<RBSpace> {
    if !(eps_target > 0.0 && eps_target < 1.0) {
        return Err(Error::InvalidInput("eps_target must lie in (0, 1)".into()));
    }
    if xi_train.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    for t in xi_train {
        model.check_theta(t)?;
    }
    let mut rb = RBSpace::empty(model, eps_target)?;
    loop {
        let certs = rb.certify_all(model, xi_train)?;
        let eps_max = certs.iter().map(|c| c.eps).fold(0.0, f64::max);
        rb.history.push(eps_max);
        rb.certificate = ErrorCertificate {
            thetas: xi_train.to_vec(),
            eps_theta: certs.iter().map(|c| c.eps).collect(),
            eps_max,
        };
        if eps_max <= eps_target {
            return Ok(rb);
        }
        let mut worst = 0;
        for (i, c) in certs.iter().enumerate().skip(1) {
            if c.enrichment_key() > certs[worst].enrichment_key() {
                worst = i;
            }
        }
        let basis_size = rb.dim();
        let stalled = || Error::RbNotConverged {
            achieved: eps_max,
            basis_size,
            worst_theta: xi_train[worst].clone(),
        };
        if rb.dim() >= max_basis {
            return Err(stalled());
        }
        let snapshot = model.solve_forward(&xi_train[worst], certs[worst].worst_m.as_slice())?;
        if !rb.enrich(model, &snapshot.coeffs) {
            return Err(stalled());
        }
    }
}
