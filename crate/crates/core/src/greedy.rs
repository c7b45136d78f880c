//! Greedy stability-based sensor selection, baseline sensor sets, and
//! full-order evaluation of sensor sets over a hyper-parameter grid.
//!
//! Each greedy iteration takes the state that the current sensors observe
//! worst (over the training set, on the reduced basis), adds the library
//! sensor that observes that state best in the extended noise norm, and
//! re-scans the training set for the new worst case.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{posterior_trace, GaussianPrior};
use crate::error::{Error, Result};
use crate::linalg::{select_rows, sym_gen_eig};
use crate::model::Model;
use crate::observability::{beta_from_factor, rb_beta_lower_bound, state_factor, SubspaceDecomposition, KERNEL_TOL};
use crate::rb::RBSpace;
use crate::sensors::{ObservationOperator, SensorLibrary};
use crate::timer::Stopwatch;

/// Schur complements below this fraction of the candidate variance mark a
/// candidate as redundant.
pub const REDUNDANCY_TOL: f64 = 1e-10;

/// Relative score difference treated as a tie (broken by lowest index).
const TIE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Worst case of β over single hyper-parameters.
    Beta,
    /// Worst case of the pair coefficient β₂ over hyper-parameter pairs.
    BetaPair,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyConfig {
    pub beta_target: f64,
    pub k_max: usize,
    pub xi_train: Vec<Vec<f64>>,
    /// Index into `xi_train` of the hyper-parameter used for the first sensor.
    pub theta_start: usize,
    pub criterion: Criterion,
    /// Pair mode scans pairs among every `pair_stride`-th training point.
    pub pair_stride: usize,
}

impl GreedyConfig {
    fn validate(&self) -> Result<()> {
        if !(self.beta_target > 0.0) {
            return Err(Error::InvalidInput("beta_target must be positive".into()));
        }
        if self.k_max == 0 {
            return Err(Error::InvalidInput("k_max must be at least 1".into()));
        }
        if self.theta_start >= self.xi_train.len() {
            return Err(Error::InvalidInput("theta_start must index the training set".into()));
        }
        if self.pair_stride == 0 {
            return Err(Error::InvalidInput("pair_stride must be at least 1".into()));
        }
        Ok(())
    }

    /// Training indices scanned in pair mode.
    pub fn pair_points(&self) -> Vec<usize> {
        (0..self.xi_train.len()).step_by(self.pair_stride).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Greedy,
    GreedyBeta2,
    Random,
    RandomInflow,
    Chebyshev,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::Greedy => "greedy",
            Provenance::GreedyBeta2 => "greedy_beta2",
            Provenance::Random => "random",
            Provenance::RandomInflow => "random_inflow",
            Provenance::Chebyshev => "chebyshev",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Provenance::Greedy,
            Provenance::GreedyBeta2,
            Provenance::Random,
            Provenance::RandomInflow,
            Provenance::Chebyshev,
        ]
        .into_iter()
        .find(|p| p.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorSet {
    pub id: String,
    pub provenance: Provenance,
    pub indices: Vec<usize>,
}

impl SensorSet {
    pub fn new(id: impl Into<String>, provenance: Provenance, indices: Vec<usize>, n_lib: usize) -> Result<Self> {
        let mut seen = vec![false; n_lib];
        for &k in &indices {
            if k >= n_lib || std::mem::replace(&mut seen[k], true) {
                return Err(Error::InvalidInput(format!("sensor index {k} is out of range or repeated")));
            }
        }
        Ok(Self { id: id.into(), provenance, indices })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GreedyRecord {
    /// 1-based.
    pub iteration: usize,
    pub sensor_index: usize,
    /// Extended noise norm of the target state with the chosen sensor added.
    pub score: f64,
    pub worst_theta: Vec<f64>,
    /// Second hyper-parameter of the worst pair in pair mode.
    pub worst_theta2: Option<Vec<f64>>,
    /// Surrogate worst case after adding the sensor.
    pub beta: f64,
    /// Certified lower bound on the full-order worst case (single-θ mode).
    pub beta_lower_bound: Option<f64>,
    pub wall_time_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct GreedyTrace {
    pub records: Vec<GreedyRecord>,
    pub target_reached: bool,
}

/// Line-4 scores for every library sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreTable {
    /// Squared extended norm; `NaN` for already selected sensors.
    pub score_sq: Vec<f64>,
    pub redundant: Vec<bool>,
}

impl ScoreTable {
    /// Highest non-redundant score, ties broken by lowest index.
    pub fn best(&self) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (k, &s) in self.score_sq.iter().enumerate() {
            if s.is_nan() || self.redundant[k] {
                continue;
            }
            match best {
                Some(b) if s <= self.score_sq[b] + TIE_TOL * self.score_sq[b].abs().max(1.0) => {}
                _ => best = Some(k),
            }
        }
        best
    }
}

/// `‖[L, l] u‖²` in the extended noise norm from the block factorization.
///
/// `w = L_Σ⁻¹ y` for the current data `y`, `s = L_Σ⁻¹ c` for the cross
/// covariance `c`, `z = l(u)` and `gamma` the candidate variance. Returns the
/// score and whether the candidate is redundant.
pub fn score_candidate(w: &DVector<f64>, s: &DVector<f64>, z: f64, gamma: f64) -> (f64, bool) {
    let base = w.norm_squared();
    let schur = gamma - s.norm_squared();
    if !(schur > REDUNDANCY_TOL * gamma) {
        return (base, true);
    }
    let innov = z - s.dot(w);
    (base + innov * innov / schur, false)
}

/// Stepwise driver for the greedy selection.
pub struct GreedySelector<'a> {
    rb: &'a RBSpace,
    library: &'a SensorLibrary,
    config: GreedyConfig,
    projection: &'a DMatrix<f64>,
    eps: Vec<f64>,
    selected: Vec<usize>,
    cov_rows: Vec<Arc<DVector<f64>>>,
    op: ObservationOperator,
    beta: f64,
    target: DVector<f64>,
    trace: GreedyTrace,
    clock: Stopwatch,
    done: bool,
}

impl<'a> GreedySelector<'a> {
    /// Checks the certificate on the training set and sets the first target
    /// state: the principal direction of the surrogate at the start point.
    pub fn new(
        model: &Model,
        rb: &'a RBSpace,
        library: &'a SensorLibrary,
        prior: &GaussianPrior,
        config: GreedyConfig,
    ) -> Result<Self> {
        config.validate()?;
        let projection = rb.library_projection().ok_or_else(|| {
            Error::InvalidInput("attach the sensor library to the reduced basis first".into())
        })?;
        let mut eps = Vec::with_capacity(config.xi_train.len());
        for theta in &config.xi_train {
            let e = rb.certified_eps(model, theta)?;
            if !(e < 1.0) {
                return Err(Error::CertificateFailed { theta: theta.clone() });
            }
            eps.push(e);
        }
        let c = rb.reduced_state_matrix(&config.xi_train[config.theta_start])?;
        let (_, vecs) = sym_gen_eig(&(c.transpose() * &c), prior.cov_inv())?;
        let mut target = &c * vecs.column(vecs.ncols() - 1);
        let norm = target.norm();
        if !(norm > 0.0) {
            return Err(Error::DegenerateStateGram);
        }
        target /= norm;
        Ok(Self {
            rb,
            library,
            projection,
            eps,
            selected: Vec::new(),
            cov_rows: Vec::new(),
            op: ObservationOperator::empty(library.model().n_dof()),
            beta: 0.0,
            target,
            trace: GreedyTrace::default(),
            clock: Stopwatch::start(),
            done: false,
            config,
        })
    }

    pub fn selected(&self) -> &[usize] {
        &self.selected
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn operator(&self) -> &ObservationOperator {
        &self.op
    }

    /// Reduced coordinates of the state the next sensor should observe.
    pub fn target_state(&self) -> &DVector<f64> {
        &self.target
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Incremental line-4 scores for the current target state.
    pub fn score_table(&self) -> ScoreTable {
        let n_lib = self.library.len();
        let z = self.projection * &self.target;
        let k = self.selected.len();
        let (w, s) = if k == 0 {
            (DVector::zeros(0), DMatrix::zeros(0, n_lib))
        } else {
            let y = DMatrix::from_fn(k, 1, |i, _| z[self.selected[i]]);
            let cross = DMatrix::from_fn(k, n_lib, |i, j| self.cov_rows[i][j]);
            let w = self.op.whiten(&y).column(0).into_owned();
            (w, self.op.whiten(&cross))
        };
        let diag = self.library.cov_diagonal();
        let mut taken = vec![false; n_lib];
        for &i in &self.selected {
            taken[i] = true;
        }
        let results: Vec<(f64, bool)> = (0..n_lib)
            .into_par_iter()
            .map(|j| {
                if taken[j] {
                    (f64::NAN, false)
                } else {
                    score_candidate(&w, &s.column(j).into_owned(), z[j], diag[j])
                }
            })
            .collect();
        ScoreTable {
            score_sq: results.iter().map(|r| r.0).collect(),
            redundant: results.iter().map(|r| r.1).collect(),
        }
    }

    /// One iteration; `None` once the loop has terminated.
    pub fn step(&mut self) -> Result<Option<GreedyRecord>> {
        if self.done {
            return Ok(None);
        }
        let table = self.score_table();
        let Some(pick) = table.best() else {
            self.done = true;
            return Ok(None);
        };
        self.selected.push(pick);
        self.cov_rows.push(self.library.cov_row(pick));
        self.op = self.library.operator(&self.selected)?;

        let (beta, worst_theta, worst_theta2, target, lower) = match self.config.criterion {
            Criterion::Beta => self.scan_single()?,
            Criterion::BetaPair => self.scan_pairs()?,
        };
        self.beta = beta;
        self.target = target;
        let record = GreedyRecord {
            iteration: self.selected.len(),
            sensor_index: pick,
            score: table.score_sq[pick].sqrt(),
            worst_theta,
            worst_theta2,
            beta,
            beta_lower_bound: lower,
            wall_time_s: self.clock.elapsed_s(),
        };
        self.trace.records.push(record.clone());
        if beta >= self.config.beta_target {
            self.trace.target_reached = true;
            self.done = true;
        } else if self.selected.len() >= self.config.k_max || self.selected.len() == self.library.len() {
            self.done = true;
        }
        Ok(Some(record))
    }

    #[allow(clippy::type_complexity)]
    fn scan_single(&self) -> Result<(f64, Vec<f64>, Option<Vec<f64>>, DVector<f64>, Option<f64>)> {
        let results: Vec<_> = self
            .config
            .xi_train
            .par_iter()
            .map(|t| self.rb.beta_rb(t, &self.op))
            .collect::<Result<_>>()?;
        let gamma = self.op.gamma().unwrap_or(0.0);
        let mut worst = 0;
        for (i, r) in results.iter().enumerate() {
            if r.beta < results[worst].beta {
                worst = i;
            }
        }
        let lower = results
            .iter()
            .zip(&self.eps)
            .map(|(r, &e)| rb_beta_lower_bound(r.beta, e, gamma))
            .fold(f64::INFINITY, f64::min);
        let r = &results[worst];
        Ok((r.beta, self.config.xi_train[worst].clone(), None, r.minimizer_state.clone(), Some(lower)))
    }

    #[allow(clippy::type_complexity)]
    fn scan_pairs(&self) -> Result<(f64, Vec<f64>, Option<Vec<f64>>, DVector<f64>, Option<f64>)> {
        let pts = self.config.pair_points();
        let pairs: Vec<(usize, usize)> = pts
            .iter()
            .enumerate()
            .flat_map(|(a, &i)| pts[a + 1..].iter().map(move |&j| (i, j)))
            .collect();
        if pairs.is_empty() {
            let (b, t, _, s, _) = self.scan_single()?;
            return Ok((b, t, None, s, None));
        }
        let xi = &self.config.xi_train;
        let results: Vec<_> = pairs
            .par_iter()
            .map(|&(i, j)| self.rb.beta_rb_pair(&xi[i], &xi[j], &self.op))
            .collect::<Result<_>>()?;
        let mut worst = 0;
        for (p, r) in results.iter().enumerate() {
            if r.beta < results[worst].beta {
                worst = p;
            }
        }
        let (i, j) = pairs[worst];
        let r = &results[worst];
        Ok((r.beta, xi[i].clone(), Some(xi[j].clone()), r.minimizer_state.clone(), None))
    }

    pub fn finish(self, id: impl Into<String>, provenance: Provenance) -> (SensorSet, GreedyTrace) {
        let set = SensorSet { id: id.into(), provenance, indices: self.selected };
        (set, self.trace)
    }
}

/// Runs the selection loop to completion.
pub fn run_greedy(
    model: &Model,
    rb: &RBSpace,
    library: &SensorLibrary,
    prior: &GaussianPrior,
    config: GreedyConfig,
) -> Result<(SensorSet, GreedyTrace)> {
    let (id, provenance) = match config.criterion {
        Criterion::Beta => ("greedy", Provenance::Greedy),
        Criterion::BetaPair => ("greedy_beta2", Provenance::GreedyBeta2),
    };
    let mut selector = GreedySelector::new(model, rb, library, prior, config)?;
    while selector.step()?.is_some() {}
    Ok(selector.finish(id, provenance))
}

/// `n_sets` sets of `k` distinct sensors drawn uniformly.
pub fn random_baseline(n_lib: usize, k: usize, n_sets: usize, seed: u64) -> Result<Vec<SensorSet>> {
    if k > n_lib {
        return Err(Error::InvalidInput("cannot draw more sensors than the library holds".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_sets)
        .map(|s| {
            let mut idx = sample(&mut rng, n_lib, k).into_vec();
            idx.sort_unstable();
            SensorSet { id: format!("random_{s:02}"), provenance: Provenance::Random, indices: idx }
        })
        .collect())
}

/// Library indices whose centres sit in the row closest to the inflow edge.
pub fn inflow_row(centers: &[[f64; 2]]) -> Vec<usize> {
    let ymin = centers.iter().map(|c| c[1]).fold(f64::INFINITY, f64::min);
    (0..centers.len())
        .filter(|&k| (centers[k][1] - ymin).abs() <= 1e-12)
        .collect()
}

/// Random sets with at least `n_inflow_min` sensors from the inflow row.
pub fn random_inflow_baseline(
    centers: &[[f64; 2]],
    k: usize,
    n_inflow_min: usize,
    n_sets: usize,
    seed: u64,
) -> Result<Vec<SensorSet>> {
    let row = inflow_row(centers);
    if n_inflow_min > row.len() || n_inflow_min > k || k > centers.len() {
        return Err(Error::InvalidInput("inflow baseline sizes are inconsistent".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok((0..n_sets)
        .map(|s| {
            let mut idx: Vec<usize> = sample(&mut rng, row.len(), n_inflow_min)
                .into_iter()
                .map(|i| row[i])
                .collect();
            let rest: Vec<usize> = (0..centers.len()).filter(|i| !idx.contains(i)).collect();
            idx.extend(sample(&mut rng, rest.len(), k - n_inflow_min).into_iter().map(|i| rest[i]));
            idx.sort_unstable();
            SensorSet {
                id: format!("random_inflow_{s:02}"),
                provenance: Provenance::RandomInflow,
                indices: idx,
            }
        })
        .collect())
}

/// Chebyshev nodes `cos((2j+1)π / (2n))` on [−1, 1], descending.
pub fn chebyshev_nodes(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| ((2 * j + 1) as f64 * std::f64::consts::PI / (2 * n) as f64).cos())
        .collect()
}

/// Library columns nearest the Chebyshev nodes for polynomials of degree
/// `degree_max`, crossed with the same number of rows nearest the inflow edge.
pub fn chebyshev_reference(centers: &[[f64; 2]], degree_max: usize) -> Result<SensorSet> {
    let n = degree_max + 1;
    let mut xs: Vec<f64> = centers.iter().map(|c| c[0]).collect();
    let mut ys: Vec<f64> = centers.iter().map(|c| c[1]).collect();
    for v in [&mut xs, &mut ys] {
        v.sort_by(f64::total_cmp);
        v.dedup_by(|a, b| (*a - *b).abs() <= 1e-12);
    }
    let (a, b) = (xs[0], xs[xs.len() - 1]);
    let mut cols: Vec<f64> = Vec::new();
    for t in chebyshev_nodes(n) {
        let x = a + 0.5 * (t + 1.0) * (b - a);
        let nearest = xs
            .iter()
            .copied()
            .min_by(|p, q| (p - x).abs().total_cmp(&(q - x).abs()))
            .expect("library is nonempty");
        if cols.iter().any(|&c| (c - nearest).abs() <= 1e-12) {
            return Err(Error::InvalidInput("library too coarse for distinct Chebyshev columns".into()));
        }
        cols.push(nearest);
    }
    if ys.len() < n {
        return Err(Error::InvalidInput("library has too few rows for the Chebyshev set".into()));
    }
    let mut indices = Vec::new();
    for &y in &ys[..n] {
        for &x in &cols {
            let k = (0..centers.len())
                .find(|&k| {
                    let c = centers[k];
                    (c[0] - x).abs() <= 1e-12 && (c[1] - y).abs() <= 1e-12
                })
                .ok_or_else(|| Error::InvalidInput("library centres are not a tensor grid".into()))?;
            indices.push(k);
        }
    }
    indices.sort_unstable();
    Ok(SensorSet { id: "chebyshev".into(), provenance: Provenance::Chebyshev, indices })
}

/// Full-order β and posterior trace of one sensor set over a test grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SetEvaluation {
    pub id: String,
    pub provenance: Provenance,
    /// Per test point; `NaN` where the evaluation failed.
    pub betas: Vec<f64>,
    pub traces: Vec<f64>,
    pub mean_beta: f64,
    pub mean_trace: f64,
    pub min_beta: f64,
    pub max_trace: f64,
    pub failures: usize,
}

fn summarize(set: &SensorSet, betas: Vec<f64>, traces: Vec<f64>) -> SetEvaluation {
    let ok: Vec<usize> = (0..betas.len())
        .filter(|&i| betas[i].is_finite() && traces[i].is_finite())
        .collect();
    let n = ok.len() as f64;
    SetEvaluation {
        id: set.id.clone(),
        provenance: set.provenance,
        mean_beta: ok.iter().map(|&i| betas[i]).sum::<f64>() / n,
        mean_trace: ok.iter().map(|&i| traces[i]).sum::<f64>() / n,
        min_beta: ok.iter().map(|&i| betas[i]).fold(f64::INFINITY, f64::min),
        max_trace: ok.iter().map(|&i| traces[i]).fold(f64::NEG_INFINITY, f64::max),
        failures: betas.len() - ok.len(),
        betas,
        traces,
    }
}

/// Evaluates every set at every test point with the full-order model.
///
/// Work is shared per test point: one factorization, one set of state
/// columns and one library observation matrix serve all sets.
pub fn evaluate_sensor_sets(
    model: &Model,
    library: &SensorLibrary,
    sets: &[SensorSet],
    xi_test: &[Vec<f64>],
    sigma: f64,
    prior: &GaussianPrior,
) -> Result<Vec<SetEvaluation>> {
    if xi_test.is_empty() {
        return Err(Error::InvalidInput("test set is empty".into()));
    }
    let ops: Vec<ObservationOperator> = sets
        .iter()
        .map(|s| {
            if s.indices.is_empty() {
                Ok(ObservationOperator::empty(model.n_dof()))
            } else {
                library.operator(&s.indices)
            }
        })
        .collect::<Result<_>>()?;
    let complement = SubspaceDecomposition::from_columns(model.loads(), KERNEL_TOL)?.complement_basis;
    let per_theta: Vec<Vec<(f64, f64)>> = xi_test
        .par_iter()
        .map(|theta| {
            let Ok(states) = model.parameter_to_state(theta) else {
                return vec![(f64::NAN, f64::NAN); sets.len()];
            };
            let s = state_factor(&model.euclidean_coords(&states));
            let obs = library.observe_all(&states);
            sets.iter()
                .zip(&ops)
                .map(|(set, op)| {
                    let g = select_rows(&obs, &set.indices);
                    let beta = beta_from_factor(&s, &op.whiten(&g), &complement)
                        .map(|r| r.0)
                        .unwrap_or(f64::NAN);
                    let trace = posterior_trace(&g, op, sigma, prior).unwrap_or(f64::NAN);
                    (beta, trace)
                })
                .collect()
        })
        .collect();
    Ok(sets
        .iter()
        .enumerate()
        .map(|(j, set)| {
            let betas = per_theta.iter().map(|row| row[j].0).collect();
            let traces = per_theta.iter().map(|row| row[j].1).collect();
            summarize(set, betas, traces)
        })
        .collect())
}

pub fn evaluate_sensor_set(
    model: &Model,
    library: &SensorLibrary,
    set: &SensorSet,
    xi_test: &[Vec<f64>],
    sigma: f64,
    prior: &GaussianPrior,
) -> Result<SetEvaluation> {
    Ok(evaluate_sensor_sets(model, library, std::slice::from_ref(set), xi_test, sigma, prior)?
        .remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensors::grid_centers;
    use approx::assert_relative_eq;

    fn centers(n: usize) -> Vec<[f64; 2]> {
        grid_centers(n, [0.02, 0.98])
    }

    #[test]
    fn chebyshev_nodes_closed_form() {
        let t = chebyshev_nodes(4);
        let c1 = (std::f64::consts::PI / 8.0).cos();
        let c3 = (3.0 * std::f64::consts::PI / 8.0).cos();
        assert_relative_eq!(t[0], c1, epsilon = 1e-15);
        assert_relative_eq!(t[1], c3, epsilon = 1e-15);
        assert_relative_eq!(t[2], -c3, epsilon = 1e-15);
        assert_relative_eq!(t[3], -c1, epsilon = 1e-15);
        assert!((c1 - 0.9239).abs() < 1e-4 && (c3 - 0.3827).abs() < 1e-4);
    }

    #[test]
    fn chebyshev_set_shape() {
        let c = centers(25);
        let set = chebyshev_reference(&c, 3).unwrap();
        assert_eq!(set.indices.len(), 16);
        let mut cols: Vec<f64> = set.indices.iter().map(|&k| c[k][0]).collect();
        cols.sort_by(f64::total_cmp);
        cols.dedup();
        assert_eq!(cols.len(), 4);
        let rows: Vec<f64> = set.indices.iter().map(|&k| c[k][1]).collect();
        assert!(rows.iter().all(|&y| y < 0.02 + 4.0 * 0.04 - 1e-9));
    }

    #[test]
    fn random_sets_are_distinct_and_seeded() {
        let a = random_baseline(625, 16, 50, 1).unwrap();
        let b = random_baseline(625, 16, 50, 2).unwrap();
        assert_eq!(a.len(), 50);
        for s in &a {
            let mut i = s.indices.clone();
            i.dedup();
            assert_eq!(i.len(), 16);
        }
        assert_ne!(a[0].indices, b[0].indices);
        assert_eq!(a, random_baseline(625, 16, 50, 1).unwrap());
    }

    #[test]
    fn inflow_sets_have_bottom_row_sensors() {
        let c = centers(25);
        let row = inflow_row(&c);
        assert_eq!(row.len(), 25);
        assert!(row.iter().all(|&k| (c[k][1] - 0.02).abs() < 1e-15));
        let sets = random_inflow_baseline(&c, 16, 4, 50, 9).unwrap();
        for s in &sets {
            assert_eq!(s.indices.len(), 16);
            assert!(s.indices.iter().filter(|k| row.contains(k)).count() >= 4);
        }
        let other = random_inflow_baseline(&c, 16, 4, 50, 10).unwrap();
        assert_ne!(sets[0].indices, other[0].indices);
    }

    #[test]
    fn empty_operator_score_is_single_sensor_norm() {
        let (w, s) = (DVector::zeros(0), DVector::zeros(0));
        let (score, redundant) = score_candidate(&w, &s, 3.0, 4.0);
        assert!(!redundant);
        assert_relative_eq!(score, 9.0 / 4.0, epsilon = 1e-15);
    }

    #[test]
    fn duplicated_sensor_is_redundant() {
        // Σ = [[2, 2], [2, 2]]: the candidate repeats the selected sensor
        let l = 2f64.sqrt();
        let w = DVector::from_vec(vec![1.5 / l]);
        let s = DVector::from_vec(vec![2.0 / l]);
        let (score, redundant) = score_candidate(&w, &s, 1.5, 2.0);
        assert!(redundant);
        assert_relative_eq!(score, w.norm_squared(), epsilon = 1e-15);
    }

    #[test]
    fn sensor_set_validation() {
        assert!(SensorSet::new("a", Provenance::Random, vec![1, 2], 3).is_ok());
        assert!(SensorSet::new("a", Provenance::Random, vec![1, 1], 3).is_err());
        assert!(SensorSet::new("a", Provenance::Random, vec![3], 3).is_err());
        assert_eq!(Provenance::parse("random_inflow"), Some(Provenance::RandomInflow));
    }
}
