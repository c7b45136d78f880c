//! TOML experiment configuration.
//!
//! Every section and field is optional; missing values take the full-scale
//! defaults. Unknown keys are rejected so that typos surface as config errors.

use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bayes::GaussianPrior;
use crate::greedy::Criterion;
use crate::model::{sample_hyper_grid, HyperParameterDomain, LayoutKind, SubdomainLayout, ThermalBlockConfig};
use crate::sensors::NoiseModel;

use super::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub output_dir: PathBuf,
    pub model: ModelSection,
    pub library: LibrarySection,
    pub noise: NoiseSection,
    pub prior: PriorSection,
    pub rb: RbSection,
    pub greedy: GreedySection,
    pub baselines: BaselineSection,
    pub evaluation: EvaluationSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            output_dir: PathBuf::from("out"),
            model: ModelSection::default(),
            library: LibrarySection::default(),
            noise: NoiseSection::default(),
            prior: PriorSection::default(),
            rb: RbSection::default(),
            greedy: GreedySection::default(),
            baselines: BaselineSection::default(),
            evaluation: EvaluationSection::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub mesh_n: usize,
    pub layout: LayoutKind,
    /// Subdomain (0-based) whose conductivity is pinned to 1; omit to free all.
    pub fixed_subdomain: Option<usize>,
    pub max_legendre_degree: usize,
    pub hyper_lower: f64,
    pub hyper_upper: f64,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            mesh_n: 129,
            layout: LayoutKind::HorizontalStrips,
            fixed_subdomain: Some(2),
            max_legendre_degree: 3,
            hyper_lower: 0.1,
            hyper_upper: 10.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LibrarySection {
    pub grid_n: usize,
    pub bounds: [f64; 2],
    pub std: f64,
}

impl Default for LibrarySection {
    fn default() -> Self {
        Self { grid_n: 97, bounds: [0.02, 0.98], std: 0.01 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseSection {
    pub sigma: f64,
    pub covariance: NoiseModel,
}

impl Default for NoiseSection {
    fn default() -> Self {
        Self { sigma: 0.01, covariance: NoiseModel::Riesz }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorSection {
    pub mean: Vec<f64>,
    /// Row-major covariance; empty means the identity.
    pub covariance: Vec<Vec<f64>>,
}

impl Default for PriorSection {
    fn default() -> Self {
        Self { mean: vec![1.0, 0.0, 0.0, 0.0], covariance: Vec::new() }
    }
}

/// Tensor grid over the hyper-parameter domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub n_per_dim: usize,
    pub log_scale: bool,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self { n_per_dim: 9, log_scale: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RbSection {
    pub eps_target: f64,
    pub max_basis: usize,
    pub train: GridSpec,
}

impl Default for RbSection {
    fn default() -> Self {
        Self { eps_target: 0.01, max_basis: 60, train: GridSpec::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GreedySection {
    pub beta_target: f64,
    pub k_max: usize,
    pub criteria: Vec<Criterion>,
    /// First-sensor hyper-parameter; snapped to the nearest training point.
    pub theta_start: Vec<f64>,
    pub pair_stride: usize,
}

impl Default for GreedySection {
    fn default() -> Self {
        Self {
            beta_target: 0.5,
            k_max: 16,
            criteria: vec![Criterion::Beta, Criterion::BetaPair],
            theta_start: vec![1.0, 1.0],
            pair_stride: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineSection {
    pub n_sets: usize,
    pub k: usize,
    pub seed: u64,
    /// Minimum number of inflow-row sensors in the inflow-biased family.
    pub inflow_min: usize,
    pub chebyshev_degree: usize,
}

impl Default for BaselineSection {
    fn default() -> Self {
        Self { n_sets: 50, k: 16, seed: 20240101, inflow_min: 4, chebyshev_degree: 3 }
    }
}

impl BaselineSection {
    /// Seed of the uniform family; the inflow family uses the next one.
    pub fn random_seed(&self) -> u64 {
        self.seed
    }

    pub fn inflow_seed(&self) -> u64 {
        self.seed.wrapping_add(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationSection {
    pub test: GridSpec,
}

impl Default for EvaluationSection {
    fn default() -> Self {
        Self { test: GridSpec { n_per_dim: 41, log_scale: true } }
    }
}

impl ExperimentConfig {
    /// The built-in desk-scale preset.
    pub fn desk() -> Self {
        let mut cfg = Self::default();
        cfg.output_dir = PathBuf::from("out/desk");
        cfg.model.mesh_n = 65;
        cfg.library.grid_n = 25;
        cfg.rb.train.n_per_dim = 7;
        cfg.evaluation.test.n_per_dim = 21;
        cfg
    }

    pub fn from_toml_str(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String, CliError> {
        toml::to_string(self).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: &str| Err(CliError::Config(m.to_string()));
        let m = &self.model;
        if m.mesh_n < 3 {
            return bad("model.mesh_n must be at least 3");
        }
        if !(m.hyper_lower > 0.0 && m.hyper_lower < m.hyper_upper) {
            return bad("model hyper bounds need 0 < hyper_lower < hyper_upper");
        }
        let n_sub = SubdomainLayout::from_kind(m.layout).n_subdomains;
        if m.fixed_subdomain.is_some_and(|s| s >= n_sub) {
            return bad("model.fixed_subdomain is out of range");
        }
        let l = &self.library;
        if l.grid_n < 2 || !(0.0 <= l.bounds[0] && l.bounds[0] < l.bounds[1] && l.bounds[1] <= 1.0) {
            return bad("library needs grid_n >= 2 and 0 <= bounds[0] < bounds[1] <= 1");
        }
        if !(l.std > 0.0) {
            return bad("library.std must be positive");
        }
        if !(self.noise.sigma > 0.0) {
            return bad("noise.sigma must be positive");
        }
        let dim = m.max_legendre_degree + 1;
        if self.prior.mean.len() != dim {
            return bad("prior.mean length must equal max_legendre_degree + 1");
        }
        if !self.prior.covariance.is_empty()
            && (self.prior.covariance.len() != dim || self.prior.covariance.iter().any(|r| r.len() != dim))
        {
            return bad("prior.covariance must be a square matrix matching prior.mean");
        }
        if !(self.rb.eps_target > 0.0 && self.rb.eps_target < 1.0) {
            return bad("rb.eps_target must lie in (0, 1)");
        }
        if self.rb.max_basis == 0 || self.rb.train.n_per_dim < 2 || self.evaluation.test.n_per_dim < 2 {
            return bad("rb.max_basis must be positive and grids need n_per_dim >= 2");
        }
        let g = &self.greedy;
        if !(g.beta_target > 0.0) || g.k_max == 0 || g.pair_stride == 0 {
            return bad("greedy needs beta_target > 0, k_max >= 1 and pair_stride >= 1");
        }
        if g.criteria.is_empty() {
            return bad("greedy.criteria must list at least one criterion");
        }
        if g.theta_start.len() != self.hyper_dim() {
            return bad("greedy.theta_start length must equal the number of free conductivities");
        }
        let b = &self.baselines;
        if b.k == 0 || b.inflow_min > b.k || b.k > l.grid_n * l.grid_n || b.inflow_min > l.grid_n {
            return bad("baselines need 1 <= k <= library size and inflow_min <= min(k, grid_n)");
        }
        Ok(())
    }

    pub fn hyper_dim(&self) -> usize {
        let n_sub = SubdomainLayout::from_kind(self.model.layout).n_subdomains;
        n_sub - usize::from(self.model.fixed_subdomain.is_some())
    }

    pub fn thermal_config(&self) -> ThermalBlockConfig {
        ThermalBlockConfig {
            mesh_n: self.model.mesh_n,
            layout: SubdomainLayout::from_kind(self.model.layout),
            fixed_subdomain: self.model.fixed_subdomain,
            max_legendre_degree: self.model.max_legendre_degree,
            hyper_lower: self.model.hyper_lower,
            hyper_upper: self.model.hyper_upper,
        }
    }

    pub fn hyper_domain(&self) -> crate::Result<HyperParameterDomain> {
        HyperParameterDomain::uniform(self.hyper_dim(), self.model.hyper_lower, self.model.hyper_upper)
    }

    pub fn xi_train(&self) -> crate::Result<Vec<Vec<f64>>> {
        sample_hyper_grid(&self.hyper_domain()?, self.rb.train.n_per_dim, self.rb.train.log_scale)
    }

    pub fn xi_test(&self) -> crate::Result<Vec<Vec<f64>>> {
        sample_hyper_grid(&self.hyper_domain()?, self.evaluation.test.n_per_dim, self.evaluation.test.log_scale)
    }

    /// Index of the training point closest to `theta_start` (log distance
    /// for log grids), ties to the lowest index.
    pub fn theta_start_index(&self, xi_train: &[Vec<f64>]) -> usize {
        let map = |t: f64| if self.rb.train.log_scale { t.ln() } else { t };
        let dist = |p: &[f64]| -> f64 {
            p.iter().zip(&self.greedy.theta_start).map(|(&a, &b)| (map(a) - map(b)).powi(2)).sum()
        };
        let mut best = 0;
        for (i, p) in xi_train.iter().enumerate() {
            if dist(p) < dist(&xi_train[best]) {
                best = i;
            }
        }
        best
    }

    pub fn prior(&self) -> crate::Result<GaussianPrior> {
        let dim = self.prior.mean.len();
        let mean = DVector::from_column_slice(&self.prior.mean);
        if self.prior.covariance.is_empty() {
            return Ok(GaussianPrior::standard(mean));
        }
        let cov = DMatrix::from_fn(dim, dim, |i, j| self.prior.covariance[i][j]);
        GaussianPrior::new(mean, cov)
    }

    /// Hash of the sections the reduced basis depends on.
    pub fn rb_hash(&self) -> String {
        #[derive(Serialize)]
        struct Scope<'a> {
            model: &'a ModelSection,
            rb: &'a RbSection,
        }
        let text = serde_json::to_string(&Scope { model: &self.model, rb: &self.rb })
            .expect("config sections serialize");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    /// Hash of the whole configuration.
    pub fn full_hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_full_scale() {
        let c = ExperimentConfig::default();
        assert_eq!(c.noise.sigma, 0.01);
        assert_eq!(c.greedy.beta_target, 0.5);
        assert_eq!(c.greedy.k_max, 16);
        assert_eq!(c.baselines.n_sets, 50);
        assert_eq!(c.library.grid_n, 97);
        assert_eq!(c.evaluation.test.n_per_dim, 41);
        assert_eq!(c.prior.mean, vec![1.0, 0.0, 0.0, 0.0]);
        c.validate().unwrap();
        ExperimentConfig::desk().validate().unwrap();
    }

    #[test]
    fn toml_round_trip() {
        let mut c = ExperimentConfig::desk();
        c.prior.covariance = vec![vec![2.0, 0.0, 0.0, 0.0], vec![0.0, 1.0, 0.0, 0.0], vec![0.0, 0.0, 1.0, 0.0], vec![0.0, 0.0, 0.0, 0.5]];
        c.noise.covariance = NoiseModel::Identity;
        c.greedy.criteria = vec![Criterion::BetaPair];
        let text = c.to_toml_string().unwrap();
        let back = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml_string().unwrap(), text);
    }

    #[test]
    fn partial_file_takes_defaults_and_unknown_keys_fail() {
        let c = ExperimentConfig::from_toml_str("[library]\ngrid_n = 25\n").unwrap();
        assert_eq!(c.library.grid_n, 25);
        assert_eq!(c.library.std, 0.01);
        assert!(matches!(
            ExperimentConfig::from_toml_str("[library]\ngrid = 25\n"),
            Err(CliError::Config(_))
        ));
        assert!(matches!(
            ExperimentConfig::from_toml_str("[rb]\neps_target = 1.0\n"),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn rb_hash_ignores_unrelated_sections() {
        let a = ExperimentConfig::desk();
        let mut b = a.clone();
        b.noise.sigma = 0.5;
        b.baselines.seed = 3;
        assert_eq!(a.rb_hash(), b.rb_hash());
        b.rb.eps_target = 0.02;
        assert_ne!(a.rb_hash(), b.rb_hash());
        assert_ne!(a.full_hash(), b.full_hash());
    }

    #[test]
    fn theta_start_snaps_to_grid() {
        let c = ExperimentConfig::desk();
        let xi = c.xi_train().unwrap();
        let i = c.theta_start_index(&xi);
        assert!((xi[i][0] - 1.0).abs() < 1e-12 && (xi[i][1] - 1.0).abs() < 1e-12);
    }
}
