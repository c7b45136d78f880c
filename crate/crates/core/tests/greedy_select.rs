//! Greedy selection, baselines, evaluation and sensor-noise sampling.

mod common;

use nalgebra::{DMatrix, DVector};
use sensor_select::bayes::GaussianPrior;
use sensor_select::greedy::{
    evaluate_sensor_sets, run_greedy, Criterion, GreedyConfig, GreedySelector, Provenance, SensorSet,
};
use sensor_select::model::sample_hyper_grid;
use sensor_select::observability::observability_beta;
use sensor_select::rb::build_rb;
use sensor_select::sensors::{NoiseModel, SensorLibrary};

use common::*;

fn prior() -> GaussianPrior {
    GaussianPrior::standard(DVector::from_vec(vec![1.0, 0.0, 0.0, 0.0]))
}

fn config(xi: Vec<Vec<f64>>, criterion: Criterion, beta_target: f64, k_max: usize) -> GreedyConfig {
    let theta_start = xi.len() / 2;
    GreedyConfig { beta_target, k_max, xi_train: xi, theta_start, criterion, pair_stride: 2 }
}

#[test]
fn single_sensor_library_is_exhausted_after_one_step() {
    let model = thermal(17);
    let lib = SensorLibrary::from_centers(model.clone(), vec![[0.5, 0.1]], 1, 0.01, NoiseModel::Riesz).unwrap();
    let xi = sample_hyper_grid(model.hyper_domain(), 3, true).unwrap();
    let mut rb = build_rb(&model, &xi, 0.01, 40).unwrap();
    rb.attach_library(&lib);
    let (set, trace) = run_greedy(&model, &rb, &lib, &prior(), config(xi, Criterion::Beta, 0.5, 16)).unwrap();
    assert_eq!(set.indices, vec![0]);
    assert_eq!(trace.records.len(), 1);
    assert!(!trace.target_reached);
    // one sensor cannot observe a four-dimensional parameter space
    assert_eq!(trace.records[0].beta, 0.0);
}

#[test]
fn riesz_run_scores_match_dense_and_lower_bounds_hold() {
    let model = thermal(33);
    let lib = library(model.clone(), 15, NoiseModel::Riesz);
    let xi = sample_hyper_grid(model.hyper_domain(), 5, true).unwrap();
    let mut rb = build_rb(&model, &xi, 0.01, 60).unwrap();
    rb.attach_library(&lib);
    let mut sel = GreedySelector::new(&model, &rb, &lib, &prior(), config(xi.clone(), Criterion::Beta, 10.0, 12)).unwrap();
    while !sel.is_done() {
        let table = sel.score_table();
        let z = rb.library_projection().unwrap() * sel.target_state();
        for j in (0..lib.len()).filter(|j| !sel.selected().contains(j)) {
            let mut idx = sel.selected().to_vec();
            idx.push(j);
            let cov = lib.cov_submatrix(&idx);
            let y = DVector::from_iterator(idx.len(), idx.iter().map(|&k| z[k]));
            let dense = y.dot(&cov.cholesky().unwrap().solve(&y));
            if !table.redundant[j] {
                assert!((table.score_sq[j] - dense).abs() <= 1e-9 * dense.max(1.0), "{} vs {dense}", table.score_sq[j]);
            }
        }
        let Some(rec) = sel.step().unwrap() else { break };
        // the certified bound never exceeds the truth at the reported worst case
        let op = sel.operator().clone();
        let truth = observability_beta(&model, &rec.worst_theta, &op).unwrap().beta;
        let lb = rec.beta_lower_bound.unwrap();
        assert!(lb <= truth + 1e-12, "lower bound {lb} above truth {truth}");
        assert!(rec.beta <= 1.0 + 1e-10);
    }
    assert_eq!(sel.selected().len(), 12);
}

#[test]
fn identity_noise_worst_case_is_non_decreasing() {
    let model = thermal(33);
    let lib = library(model.clone(), 15, NoiseModel::Identity);
    let xi = sample_hyper_grid(model.hyper_domain(), 5, true).unwrap();
    let mut rb = build_rb(&model, &xi, 0.01, 60).unwrap();
    rb.attach_library(&lib);
    let (set, trace) = run_greedy(&model, &rb, &lib, &prior(), config(xi, Criterion::Beta, 1e6, 12)).unwrap();
    assert_eq!(set.indices.len(), 12);
    let betas: Vec<f64> = trace.records.iter().map(|r| r.beta).collect();
    assert!(betas.windows(2).all(|w| w[1] >= w[0] * (1.0 - 1e-12)), "{betas:?}");
    assert!(betas[11] > 0.0);
}

#[test]
fn pair_mode_records_two_hyper_parameters() {
    let model = thermal(17);
    let lib = library(model.clone(), 9, NoiseModel::Riesz);
    let xi = sample_hyper_grid(model.hyper_domain(), 3, true).unwrap();
    let mut rb = build_rb(&model, &xi, 0.01, 40).unwrap();
    rb.attach_library(&lib);
    let (set, trace) = run_greedy(&model, &rb, &lib, &prior(), config(xi, Criterion::BetaPair, 0.3, 16)).unwrap();
    assert_eq!(set.provenance, Provenance::GreedyBeta2);
    assert!(trace.records.iter().all(|r| r.worst_theta2.is_some() && r.beta_lower_bound.is_none()));
    assert_eq!(set.indices.len(), trace.records.len());
}

#[test]
fn evaluation_rows_are_consistent() {
    let model = thermal(17);
    let lib = library(model.clone(), 9, NoiseModel::Riesz);
    let xi_test = sample_hyper_grid(model.hyper_domain(), 3, true).unwrap();
    let a = SensorSet::new("a", Provenance::Random, vec![0, 10, 20, 30, 40, 50, 60, 70], 81).unwrap();
    let b = SensorSet::new("b", Provenance::Random, a.indices.clone(), 81).unwrap();
    let empty = SensorSet::new("none", Provenance::Random, vec![], 81).unwrap();
    let evals = evaluate_sensor_sets(&model, &lib, &[a, b, empty], &xi_test, 0.01, &prior()).unwrap();
    assert_eq!(evals[0].betas, evals[1].betas);
    assert_eq!(evals[0].mean_trace, evals[1].mean_trace);
    assert!(evals[0].mean_beta >= evals[0].min_beta);
    assert!(evals[0].mean_trace <= evals[0].max_trace);
    assert_eq!(evals[0].failures, 0);
    // no sensors: nothing observed, the posterior is the prior
    assert_eq!(evals[2].mean_beta, 0.0);
    assert!((evals[2].mean_trace - 4.0).abs() < 1e-12);
}

#[test]
fn sampled_noise_has_the_sensor_covariance() {
    let model = thermal(33);
    let lib = library(model, 12, NoiseModel::Riesz);
    let op = lib.operator(&[13, 14, 40, 100]).unwrap();
    let sigma = 0.01;
    let n = 100_000;
    let k = op.len();
    let mut acc = DMatrix::<f64>::zeros(k, k);
    for seed in 0..n {
        let e = op.sample_noise(sigma, seed).unwrap();
        acc += &e * e.transpose();
    }
    let empirical = acc / n as f64;
    let target = op.cov() * (sigma * sigma);
    for i in 0..k {
        let rel = (empirical[(i, i)] - target[(i, i)]).abs() / target[(i, i)];
        assert!(rel < 0.05, "variance {i}: relative error {rel}");
    }
    let rel = (&empirical - &target).norm() / target.norm();
    assert!(rel < 0.05, "relative Frobenius error {rel}");
}
