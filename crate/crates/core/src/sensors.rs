//! Sensor library of Gaussian-weighted averages, their noise covariance, and
//! observation operators built from selections of library sensors.

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use nalgebra_sparse::CsrMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, sym_eig_sorted};
use crate::model::{shape, Model, StateVector, UniformGrid, GAUSS4};

/// Libraries up to this size get a dense covariance; larger ones compute rows on demand.
pub const DENSE_COVARIANCE_LIMIT: usize = 2500;

/// Gaussians are integrated over the disk of this many standard deviations.
const SUPPORT_RADIUS: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    /// Σ_noise is the X-Gram of the sensors' Riesz representations.
    Riesz,
    /// Uncorrelated unit-variance noise.
    Identity,
}

/// Nodal weights `∫_Ω g(x) φ_j(x) dx` of a normalized 2D Gaussian centred at `center`.
///
/// Elements are split into sub-cells no wider than `std / 3`, each integrated
/// with a 4×4 Gauss rule. Node ids refer to the full grid (Dirichlet nodes included).
pub fn gaussian_functional(grid: UniformGrid, center: [f64; 2], std: f64) -> Vec<(usize, f64)> {
    let h = grid.h();
    let reach = SUPPORT_RADIUS * std;
    let sub = ((h / (std / 3.0)).ceil() as usize).max(1);
    let dh = h / sub as f64;
    let norm = 1.0 / (2.0 * std::f64::consts::PI * std * std);
    let inv2s2 = 1.0 / (2.0 * std * std);
    let mut acc: BTreeMap<usize, f64> = BTreeMap::new();
    for ej in grid.element_span(center[1] - reach, center[1] + reach) {
        for ei in grid.element_span(center[0] - reach, center[0] + reach) {
            let nodes = grid.element_nodes(ei, ej);
            let [x0, y0] = grid.element_origin(ei, ej);
            let mut local = [0.0; 4];
            for sj in 0..sub {
                for si in 0..sub {
                    for &(px, wx) in &GAUSS4 {
                        for &(py, wy) in &GAUSS4 {
                            let xi = (si as f64 + px) / sub as f64;
                            let eta = (sj as f64 + py) / sub as f64;
                            let (x, y) = (x0 + h * xi, y0 + h * eta);
                            let r2 = (x - center[0]).powi(2) + (y - center[1]).powi(2);
                            let g = norm * (-r2 * inv2s2).exp();
                            let s = shape(xi, eta);
                            let w = wx * wy * dh * dh * g;
                            for a in 0..4 {
                                local[a] += w * s[a];
                            }
                        }
                    }
                }
            }
            for a in 0..4 {
                *acc.entry(nodes[a]).or_insert(0.0) += local[a];
            }
        }
    }
    acc.into_iter().collect()
}

/// Centres of a `grid_n × grid_n` regular grid on `[a, b]²`, x₁ running fastest.
pub fn grid_centers(grid_n: usize, bounds: [f64; 2]) -> Vec<[f64; 2]> {
    let step = (bounds[1] - bounds[0]) / (grid_n.max(2) - 1) as f64;
    let coord = |i: usize| if i + 1 == grid_n { bounds[1] } else { bounds[0] + i as f64 * step };
    (0..grid_n * grid_n)
        .map(|k| [coord(k % grid_n), coord(k / grid_n)])
        .collect()
}

enum CovarianceStore {
    Identity,
    Dense(DMatrix<f64>),
    Lazy(Mutex<HashMap<usize, Arc<DVector<f64>>>>),
}

/// Candidate sensors `l_k(u) = ∫ g_k u dx` on a regular grid of centres.
pub struct SensorLibrary {
    model: Arc<Model>,
    centers: Vec<[f64; 2]>,
    grid_n: usize,
    std: f64,
    functionals: CsrMatrix<f64>,
    noise: NoiseModel,
    cov: CovarianceStore,
    diag: Vec<f64>,
    under_resolved: bool,
}

impl std::fmt::Debug for SensorLibrary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SensorLibrary")
            .field("n_sensors", &self.centers.len())
            .field("std", &self.std)
            .field("noise", &self.noise)
            .finish()
    }
}

impl SensorLibrary {
    /// `grid_n²` sensors with centres on a regular grid over `[a, b]²`.
    pub fn build(
        model: Arc<Model>,
        grid_n: usize,
        bounds: [f64; 2],
        std: f64,
        noise: NoiseModel,
    ) -> Result<Self> {
        if grid_n < 2 {
            return Err(Error::InvalidInput("sensor grid needs grid_n >= 2".into()));
        }
        if std <= 0.0 || !(bounds[0] < bounds[1]) || bounds[0] < 0.0 || bounds[1] > 1.0 {
            return Err(Error::InvalidInput(
                "sensor std must be positive and bounds inside [0, 1]".into(),
            ));
        }
        Self::from_centers(model, grid_centers(grid_n, bounds), grid_n, std, noise)
    }

    pub fn from_centers(
        model: Arc<Model>,
        centers: Vec<[f64; 2]>,
        grid_n: usize,
        std: f64,
        noise: NoiseModel,
    ) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::InvalidInput("sensor library is empty".into()));
        }
        let grid = model.grid();
        let n_dof = model.n_dof();
        let rows: Vec<Vec<(usize, f64)>> = centers
            .par_iter()
            .map(|&c| {
                gaussian_functional(grid, c, std)
                    .into_iter()
                    .filter(|&(node, _)| node < n_dof)
                    .collect()
            })
            .collect();
        let mut offsets = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for row in rows {
            for (c, v) in row {
                cols.push(c);
                vals.push(v);
            }
            offsets.push(cols.len());
        }
        let functionals = CsrMatrix::try_from_csr_data(centers.len(), n_dof, offsets, cols, vals)
            .expect("sorted functional rows");

        let mut lib = Self {
            under_resolved: std < grid.h(),
            model,
            centers,
            grid_n,
            std,
            functionals,
            noise,
            cov: CovarianceStore::Identity,
            diag: Vec::new(),
        };
        match noise {
            NoiseModel::Identity => {
                lib.diag = vec![1.0; lib.len()];
            }
            NoiseModel::Riesz if lib.len() <= DENSE_COVARIANCE_LIMIT => {
                let w = lib.whitened(&(0..lib.len()).collect::<Vec<_>>());
                let mut sigma = w.transpose() * &w;
                for j in 0..sigma.ncols() {
                    for i in j + 1..sigma.nrows() {
                        sigma[(i, j)] = sigma[(j, i)];
                    }
                }
                lib.diag = sigma.diagonal().iter().copied().collect();
                lib.cov = CovarianceStore::Dense(sigma);
            }
            NoiseModel::Riesz => {
                let diag: Vec<f64> = (0..lib.len())
                    .into_par_iter()
                    .map(|k| lib.whitened(&[k]).norm_squared())
                    .collect();
                lib.diag = diag;
                lib.cov = CovarianceStore::Lazy(Mutex::new(HashMap::new()));
            }
        }
        Ok(lib)
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn model(&self) -> &Arc<Model> {
        &self.model
    }

    pub fn centers(&self) -> &[[f64; 2]] {
        &self.centers
    }

    pub fn grid_n(&self) -> usize {
        self.grid_n
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    pub fn noise_model(&self) -> NoiseModel {
        self.noise
    }

    /// True when the Gaussian width is below the element size.
    pub fn under_resolved(&self) -> bool {
        self.under_resolved
    }

    /// Row k holds the FE vector of `l_k` on the free dofs.
    pub fn functionals(&self) -> &CsrMatrix<f64> {
        &self.functionals
    }

    fn functional_dense(&self, k: usize) -> DVector<f64> {
        let row = self.functionals.row(k);
        let mut f = DVector::zeros(self.model.n_dof());
        for (&c, &v) in row.col_indices().iter().zip(row.values()) {
            f[c] = v;
        }
        f
    }

    /// `L_X⁻¹ f_k` for every listed sensor (N × K), with `X = L_X L_Xᵀ`.
    pub(crate) fn whitened(&self, sensors: &[usize]) -> DMatrix<f64> {
        let n = self.model.n_dof();
        let chunks: Vec<DMatrix<f64>> = sensors
            .par_chunks(32)
            .map(|chunk| {
                let mut block = DMatrix::zeros(n, chunk.len());
                for (c, &k) in chunk.iter().enumerate() {
                    let row = self.functionals.row(k);
                    for (&i, &v) in row.col_indices().iter().zip(row.values()) {
                        block[(i, c)] = v;
                    }
                }
                self.model.gram_factor().forward_in_place(&mut block);
                block
            })
            .collect();
        let mut out = DMatrix::zeros(n, sensors.len());
        let mut col = 0;
        for block in chunks {
            out.columns_mut(col, block.ncols()).copy_from(&block);
            col += block.ncols();
        }
        out
    }

    /// Riesz representation `r_k = X⁻¹ f_k`.
    pub fn riesz(&self, k: usize) -> StateVector {
        StateVector::new(self.model.gram_factor().solve_vec(&self.functional_dense(k)))
    }

    /// Row k of Σ_noise.
    pub fn cov_row(&self, k: usize) -> Arc<DVector<f64>> {
        match &self.cov {
            CovarianceStore::Identity => {
                let mut e = DVector::zeros(self.len());
                e[k] = 1.0;
                Arc::new(e)
            }
            CovarianceStore::Dense(s) => Arc::new(s.column(k).into_owned()),
            CovarianceStore::Lazy(cache) => {
                if let Some(row) = cache.lock().expect("cache lock").get(&k) {
                    return row.clone();
                }
                let r = self.riesz(k);
                let row = Arc::new(&self.functionals * &r.coeffs);
                cache.lock().expect("cache lock").insert(k, row.clone());
                row
            }
        }
    }

    pub fn cov_entry(&self, i: usize, j: usize) -> f64 {
        match &self.cov {
            CovarianceStore::Identity => f64::from(u8::from(i == j)),
            CovarianceStore::Dense(s) => s[(i, j)],
            CovarianceStore::Lazy(_) => {
                let (a, b) = if i <= j { (i, j) } else { (j, i) };
                self.cov_row(a)[b]
            }
        }
    }

    pub fn cov_diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn cov_submatrix(&self, indices: &[usize]) -> DMatrix<f64> {
        let k = indices.len();
        DMatrix::from_fn(k, k, |i, j| self.cov_entry(indices[i], indices[j]))
    }

    /// Library observations `F U` (N_lib × columns of `states`).
    pub fn observe_all(&self, states: &DMatrix<f64>) -> DMatrix<f64> {
        &self.functionals * states
    }

    /// Observation operator for the given ordered, distinct selection.
    pub fn operator(&self, indices: &[usize]) -> Result<ObservationOperator> {
        let mut seen = vec![false; self.len()];
        for &k in indices {
            if k >= self.len() {
                return Err(Error::InvalidInput(format!("sensor index {k} out of range")));
            }
            if std::mem::replace(&mut seen[k], true) {
                return Err(Error::InvalidInput(format!("sensor {k} selected twice")));
            }
        }
        let mut offsets = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        for &k in indices {
            let row = self.functionals.row(k);
            cols.extend_from_slice(row.col_indices());
            vals.extend_from_slice(row.values());
            offsets.push(cols.len());
        }
        let obs = CsrMatrix::try_from_csr_data(indices.len(), self.model.n_dof(), offsets, cols, vals)
            .expect("rows copied from a valid matrix");
        let mut op = ObservationOperator::from_parts(indices.to_vec(), obs, self.cov_submatrix(indices))?;
        op.gamma = Some(gamma_l(&op, &self.model));
        Ok(op)
    }
}

/// Ordered selection of library sensors with its noise covariance block Σ_L.
///
/// An operator without sensors is the sentinel for "nothing observed": all
/// norms vanish and no factorization is held.
#[derive(Debug, Clone)]
pub struct ObservationOperator {
    indices: Vec<usize>,
    obs_matrix: CsrMatrix<f64>,
    cov: DMatrix<f64>,
    cov_chol: Option<Cholesky<f64, Dyn>>,
    gamma: Option<f64>,
}

impl ObservationOperator {
    pub fn empty(n_dof: usize) -> Self {
        Self {
            indices: Vec::new(),
            obs_matrix: CsrMatrix::zeros(0, n_dof),
            cov: DMatrix::zeros(0, 0),
            cov_chol: None,
            gamma: Some(0.0),
        }
    }

    pub fn from_parts(indices: Vec<usize>, obs_matrix: CsrMatrix<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let k = indices.len();
        if obs_matrix.nrows() != k || cov.shape() != (k, k) {
            return Err(Error::Dimension("observation operator blocks disagree in size".into()));
        }
        if k == 0 {
            return Ok(Self::empty(obs_matrix.ncols()));
        }
        let cov_chol = Some(cholesky(&cov, "noise covariance Σ_L")?);
        Ok(Self { indices, obs_matrix, cov, cov_chol, gamma: None })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn obs_matrix(&self) -> &CsrMatrix<f64> {
        &self.obs_matrix
    }

    pub fn cov(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn cov_factor(&self) -> Option<&Cholesky<f64, Dyn>> {
        self.cov_chol.as_ref()
    }

    /// Operator norm γ_L, when computed by the owning library.
    pub fn gamma(&self) -> Option<f64> {
        self.gamma
    }

    /// `L_Σ⁻¹ A` with `Σ_L = L_Σ L_Σᵀ`; the noise norm becomes Euclidean.
    pub fn whiten(&self, a: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.cov_chol {
            Some(ch) => ch
                .l()
                .solve_lower_triangular(a)
                .expect("cholesky factor is nonsingular"),
            None => DMatrix::zeros(0, a.ncols()),
        }
    }

    pub fn observe(&self, u: &StateVector) -> DVector<f64> {
        &self.obs_matrix * &u.coeffs
    }

    pub fn observe_states(&self, states: &DMatrix<f64>) -> DMatrix<f64> {
        &self.obs_matrix * states
    }

    /// `sqrt(dᵀ Σ_L⁻¹ d)`.
    pub fn noise_norm(&self, d: &DVector<f64>) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        self.whiten(&DMatrix::from_column_slice(d.len(), 1, d.as_slice())).norm()
    }

    /// Draw from N(0, σ² Σ_L).
    pub fn sample_noise(&self, sigma: f64, seed: u64) -> Result<DVector<f64>> {
        if !(sigma > 0.0) {
            return Err(Error::InvalidInput("noise scale sigma must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let z = DVector::from_fn(self.len(), |_, _| StandardNormal.sample(&mut rng));
        Ok(match &self.cov_chol {
            Some(ch) => ch.l() * z * sigma,
            None => z,
        })
    }
}

/// `γ_L = sup_u ‖L u‖_{Σ_L⁻¹} / ‖u‖_X`, the square root of the largest
/// eigenvalue of `Σ_L⁻¹ (R_L X R_Lᵀ)`.
pub fn gamma_l(op: &ObservationOperator, model: &Model) -> f64 {
    if op.is_empty() {
        return 0.0;
    }
    let n = model.n_dof();
    let mut ft = DMatrix::zeros(n, op.len());
    for (c, row) in op.obs_matrix.row_iter().enumerate() {
        for (&i, &v) in row.col_indices().iter().zip(row.values()) {
            ft[(i, c)] = v;
        }
    }
    model.gram_factor().forward_in_place(&mut ft);
    // L_Σ⁻¹ (Wᵀ W) L_Σ⁻ᵀ with W = L_X⁻¹ F_Lᵀ
    let b = op.whiten(&ft.transpose());
    let (vals, _) = sym_eig_sorted(&(&b * b.transpose()));
    vals[vals.len() - 1].max(0.0).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{assemble_thermal_block, ThermalBlockConfig};
    use approx::assert_relative_eq;

    fn small_model() -> Arc<Model> {
        Arc::new(
            assemble_thermal_block(&ThermalBlockConfig { mesh_n: 17, ..Default::default() })
                .unwrap(),
        )
    }

    #[test]
    fn full_library_size_uses_lazy_covariance() {
        let lib = SensorLibrary::build(small_model(), 97, [0.02, 0.98], 0.01, NoiseModel::Riesz).unwrap();
        assert_eq!(lib.len(), 9409);
        assert!(matches!(lib.cov, CovarianceStore::Lazy(_)));
        assert!(lib.under_resolved());
        assert_eq!(lib.centers()[0], [0.02, 0.02]);
        assert!((lib.centers()[9408][0] - 0.98).abs() < 1e-15);
    }

    #[test]
    fn gaussian_mass_is_one_away_from_boundary() {
        let grid = UniformGrid::new(33);
        for center in [[0.5, 0.5], [0.05, 0.3], [0.3, 0.95]] {
            let w = gaussian_functional(grid, center, 0.01);
            let total: f64 = w.iter().map(|&(_, v)| v).sum();
            assert!((total - 1.0).abs() < 1e-6, "center {center:?}: {total}");
        }
    }

    #[test]
    fn riesz_consistency_and_diagonal() {
        let model = small_model();
        let lib = SensorLibrary::build(model.clone(), 5, [0.1, 0.9], 0.05, NoiseModel::Riesz).unwrap();
        assert!(lib.cov_diagonal().iter().all(|&d| d > 0.0));
        let u = model.solve_forward(&[0.5, 2.0], &[1.0, -0.3, 0.2, 0.4]).unwrap();
        for k in [0, 7, 24] {
            let r = lib.riesz(k);
            let lhs = (lib.functionals() * &u.coeffs)[k];
            let rhs = model.x_inner(r.coeffs.as_slice(), u.coeffs.as_slice());
            assert_relative_eq!(lhs, rhs, max_relative = 1e-9);
            // Σ_kj = f_jᵀ r_k
            for j in [0, 3, 12] {
                let fr = (lib.functionals() * &r.coeffs)[j];
                assert_relative_eq!(fr, lib.cov_entry(k, j), max_relative = 1e-10);
            }
        }
    }

    #[test]
    fn lazy_and_dense_covariance_agree() {
        let model = small_model();
        let dense = SensorLibrary::build(model.clone(), 4, [0.1, 0.9], 0.05, NoiseModel::Riesz).unwrap();
        let centers = dense.centers().to_vec();
        let mut lazy = SensorLibrary::from_centers(model, centers, 4, 0.05, NoiseModel::Identity).unwrap();
        lazy.noise = NoiseModel::Riesz;
        lazy.cov = CovarianceStore::Lazy(Mutex::new(HashMap::new()));
        for i in 0..16 {
            for j in 0..16 {
                assert_relative_eq!(dense.cov_entry(i, j), lazy.cov_entry(i, j), max_relative = 1e-10);
            }
        }
        assert_eq!(lazy.cov_entry(3, 9), lazy.cov_entry(9, 3));
    }

    #[test]
    fn operator_submatrix_is_exact() {
        let model = small_model();
        let lib = SensorLibrary::build(model, 5, [0.1, 0.9], 0.05, NoiseModel::Riesz).unwrap();
        let op = lib.operator(&[3, 17, 8]).unwrap();
        for (a, &i) in op.indices().iter().enumerate() {
            for (b, &j) in op.indices().iter().enumerate() {
                assert_eq!(op.cov()[(a, b)], lib.cov_entry(i, j));
            }
        }
        assert!(lib.operator(&[3, 3]).is_err());
        assert!(lib.operator(&[99]).is_err());
    }

    #[test]
    fn observe_riesz_gives_variance() {
        let model = small_model();
        let lib = SensorLibrary::build(model, 5, [0.1, 0.9], 0.05, NoiseModel::Riesz).unwrap();
        let op = lib.operator(&[12]).unwrap();
        let d = op.observe(&lib.riesz(12));
        assert_relative_eq!(d[0], lib.cov_entry(12, 12), max_relative = 1e-10);
        assert_eq!(op.observe(&StateVector::zeros(lib.model().n_dof())).norm(), 0.0);
    }

    #[test]
    fn gamma_is_one_under_riesz_noise() {
        let model = small_model();
        let lib = SensorLibrary::build(model, 5, [0.1, 0.9], 0.05, NoiseModel::Riesz).unwrap();
        for sel in [vec![0], vec![4, 9, 20], vec![1, 2, 3, 6, 7, 8]] {
            let op = lib.operator(&sel).unwrap();
            assert_relative_eq!(op.gamma().unwrap(), 1.0, epsilon = 1e-8);
        }
    }

    #[test]
    fn gamma_scales_with_inflated_noise() {
        let model = small_model();
        let lib = SensorLibrary::build(model.clone(), 5, [0.1, 0.9], 0.05, NoiseModel::Riesz).unwrap();
        let op = lib.operator(&[6]).unwrap();
        let c = 4.0;
        let inflated =
            ObservationOperator::from_parts(vec![6], op.obs_matrix().clone(), op.cov() * c).unwrap();
        assert_relative_eq!(gamma_l(&inflated, &model), 1.0 / c.sqrt(), epsilon = 1e-8);
    }

    #[test]
    fn noise_norm_cases() {
        let obs = CsrMatrix::zeros(2, 3);
        let op = ObservationOperator::from_parts(vec![0, 1], obs, DMatrix::identity(2, 2)).unwrap();
        assert_eq!(op.noise_norm(&DVector::zeros(2)), 0.0);
        assert_relative_eq!(op.noise_norm(&DVector::from_vec(vec![3.0, 4.0])), 5.0, epsilon = 1e-15);
        assert_eq!(ObservationOperator::empty(3).noise_norm(&DVector::zeros(0)), 0.0);
    }

    #[test]
    fn correlation_decays_with_distance() {
        let model = small_model();
        let lib = SensorLibrary::build(model, 9, [0.1, 0.9], 0.03, NoiseModel::Riesz).unwrap();
        // walk right from sensor (0, 4) along its row
        let row = 4 * 9;
        let var0 = lib.cov_entry(row, row);
        let corr: Vec<f64> = (1..9)
            .map(|i| lib.cov_entry(row, row + i) / (var0 * lib.cov_entry(row + i, row + i)).sqrt())
            .collect();
        assert!(corr.windows(2).all(|w| w[1] < w[0]), "{corr:?}");
    }

    #[test]
    fn noise_sampling_is_seeded() {
        let model = small_model();
        let lib = SensorLibrary::build(model, 4, [0.1, 0.9], 0.05, NoiseModel::Riesz).unwrap();
        let op = lib.operator(&[0, 5]).unwrap();
        assert_eq!(op.sample_noise(0.01, 7).unwrap(), op.sample_noise(0.01, 7).unwrap());
        assert_ne!(op.sample_noise(0.01, 7).unwrap(), op.sample_noise(0.01, 8).unwrap());
        assert!(op.sample_noise(0.0, 1).is_err());
    }
}
