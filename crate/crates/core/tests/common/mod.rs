#![allow(dead_code)]

use std::io::Write;
use std::path::PathBuf;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sensor_select::experiment::ExperimentConfig;
use sensor_select::model::{assemble_thermal_block, Model, ThermalBlockConfig};
use sensor_select::sensors::{NoiseModel, ObservationOperator, SensorLibrary};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

pub fn load_config(name: &str) -> ExperimentConfig {
    ExperimentConfig::load(&config_path(name)).expect("shipped config parses")
}

pub fn thermal(mesh_n: usize) -> Arc<Model> {
    Arc::new(assemble_thermal_block(&ThermalBlockConfig { mesh_n, ..Default::default() }).unwrap())
}

pub fn library(model: Arc<Model>, grid_n: usize, noise: NoiseModel) -> SensorLibrary {
    SensorLibrary::build(model, grid_n, [0.02, 0.98], 0.01, noise).unwrap()
}

/// Log-uniform point of the hyper-parameter domain.
pub fn random_theta(rng: &mut ChaCha8Rng, model: &Model) -> Vec<f64> {
    let d = model.hyper_domain();
    (0..d.dim())
        .map(|i| {
            let (lo, hi) = (d.lower[i].ln(), d.upper[i].ln());
            rng.random_range(lo..=hi).exp().clamp(d.lower[i], d.upper[i])
        })
        .collect()
}

/// Operator from `k` distinct library sensors, `k` drawn from `k_range`.
pub fn random_operator(
    rng: &mut ChaCha8Rng,
    lib: &SensorLibrary,
    k_range: std::ops::RangeInclusive<usize>,
) -> ObservationOperator {
    let k = rng.random_range(k_range);
    let idx = rand::seq::index::sample(rng, lib.len(), k).into_vec();
    lib.operator(&idx).unwrap()
}

pub fn gaussian_vector(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    use rand_distr::{Distribution, StandardNormal};
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

pub fn column(m: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(m.len(), 1, m.as_slice())
}

/// Writes a line straight to stderr so it shows even when test output is captured.
pub fn report(line: &str) {
    let mut e = std::io::stderr().lock();
    let _ = writeln!(e, "{line}");
}

pub fn verdict(name: &str, pass: bool, detail: &str) {
    report(&format!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" }));
}
