//! Demo state in plain Rust, independent of the JavaScript bindings.

use std::sync::Arc;

use nalgebra::DVector;
use serde::Serialize;
use sensor_select::bayes::GaussianPrior;
use sensor_select::greedy::{run_greedy, Criterion, GreedyConfig};
use sensor_select::model::{assemble_thermal_block, sample_hyper_grid, Model, ThermalBlockConfig};
use sensor_select::rb::{build_rb, RBSpace};
use sensor_select::sensors::{NoiseModel, SensorLibrary};
use sensor_select::{Error, Result};

const TRAIN_PER_DIM: usize = 5;

/// Outcome of one greedy run, serialized to JSON for the page.
#[derive(Debug, Clone, Serialize)]
pub struct Selection {
    pub indices: Vec<usize>,
    pub centers: Vec<[f64; 2]>,
    /// Worst-case surrogate β after each added sensor.
    pub betas: Vec<f64>,
    pub worst_thetas: Vec<Vec<f64>>,
    pub target_reached: bool,
}

pub struct DemoState {
    model: Arc<Model>,
    library: SensorLibrary,
    rb: RBSpace,
    xi_train: Vec<Vec<f64>>,
    prior: GaussianPrior,
}

impl DemoState {
    /// Thermal block on a `mesh_n` grid with a `grid_n × grid_n` Riesz-noise
    /// library and a certified reduced basis on a 5 × 5 log training grid.
    pub fn new(mesh_n: usize, grid_n: usize) -> Result<Self> {
        let model = Arc::new(assemble_thermal_block(&ThermalBlockConfig { mesh_n, ..Default::default() })?);
        let library = SensorLibrary::build(model.clone(), grid_n, [0.02, 0.98], 0.01, NoiseModel::Riesz)?;
        let xi_train = sample_hyper_grid(model.hyper_domain(), TRAIN_PER_DIM, true)?;
        let mut rb = build_rb(&model, &xi_train, 0.01, 60)?;
        rb.attach_library(&library);
        let prior = GaussianPrior::standard(DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]));
        Ok(Self { model, library, rb, xi_train, prior })
    }

    pub fn mesh_n(&self) -> usize {
        self.model.grid().n
    }

    pub fn library_len(&self) -> usize {
        self.library.len()
    }

    /// Library centres as `[x1, x2, x1, x2, ...]`.
    pub fn library_centers(&self) -> Vec<f64> {
        self.library.centers().iter().flat_map(|c| [c[0], c[1]]).collect()
    }

    /// Nodal temperatures on the full `mesh_n × mesh_n` grid, row by row from
    /// the inflow edge upwards.
    pub fn temperature(&self, theta: &[f64], m: &[f64]) -> Result<Vec<f64>> {
        let u = self.model.solve_forward(theta, m)?;
        Ok(self.model.full_nodal(&u))
    }

    /// Greedy selection on the training grid, starting at θ = (1, 1).
    pub fn select(&self, beta_target: f64, k_max: usize) -> Result<Selection> {
        let config = GreedyConfig {
            beta_target,
            k_max,
            xi_train: self.xi_train.clone(),
            theta_start: self.xi_train.len() / 2,
            criterion: Criterion::Beta,
            pair_stride: 1,
        };
        let (set, trace) = run_greedy(&self.model, &self.rb, &self.library, &self.prior, config)?;
        Ok(Selection {
            centers: set.indices.iter().map(|&k| self.library.centers()[k]).collect(),
            indices: set.indices,
            betas: trace.records.iter().map(|r| r.beta).collect(),
            worst_thetas: trace.records.iter().map(|r| r.worst_theta.clone()).collect(),
            target_reached: trace.target_reached,
        })
    }

    /// Surrogate β of the given sensors on an `n × n` log grid over the
    /// hyper-parameter box, first coordinate running fastest.
    pub fn beta_map(&self, indices: &[usize], n: usize) -> Result<Vec<f64>> {
        let grid = sample_hyper_grid(self.model.hyper_domain(), n, true)?;
        if indices.is_empty() {
            return Ok(vec![0.0; grid.len()]);
        }
        if indices.iter().any(|&k| k >= self.library.len()) {
            return Err(Error::InvalidInput("sensor index outside the library".into()));
        }
        let op = self.library.operator(indices)?;
        grid.iter().map(|theta| Ok(self.rb.beta_rb(theta, &op)?.beta)).collect()
    }
}
