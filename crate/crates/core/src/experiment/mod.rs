//! Config-driven study pipeline: reduced basis, greedy selection, baselines,
//! full-order evaluation and the summary report, each writing CSV artifacts
//! into one output directory.

pub mod config;
pub mod io;
pub mod stats;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, OnceLock};

use thiserror::Error;

pub use config::ExperimentConfig;
pub use io::{CsvTable, RunManifest};

use crate::greedy::{
    chebyshev_reference, evaluate_sensor_sets, random_baseline, random_inflow_baseline, run_greedy, Criterion,
    GreedyConfig, GreedyTrace, Provenance, SensorSet, SetEvaluation,
};
use crate::model::{assemble_thermal_block, Model};
use crate::rb::{build_rb, RBSpace};
use crate::sensors::{grid_centers, SensorLibrary};
use crate::timer::Stopwatch;
use io::{fmt_f64, parse_f64, read_sets, sets_table, CommandRecord};

pub const RB_ARTIFACT: &str = "rb_space.rbs";
pub const RB_CERTIFICATE: &str = "rb_certificate.csv";
pub const SENSORS: &str = "sensors.csv";
pub const GREEDY_TRACE: &str = "greedy_trace.csv";
pub const GREEDY_PAIR_TRACE: &str = "greedy_beta2_trace.csv";
pub const SELECTION: &str = "selection.csv";
pub const BASELINES: &str = "baselines.csv";
pub const RESULTS: &str = "results.csv";
pub const RESULTS_FULL: &str = "results_full.csv";
pub const SCATTER: &str = "scatter.csv";
pub const SENSOR_MAP: &str = "sensor_map.csv";
pub const SUMMARY: &str = "summary.txt";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("certificate failure: {0}")]
    Certificate(String),
    #[error("stale artifact: {0}")]
    Stale(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Compute(crate::Error),
}

impl From<crate::Error> for CliError {
    fn from(e: crate::Error) -> Self {
        match e {
            crate::Error::CertificateFailed { .. } | crate::Error::RbNotConverged { .. } => {
                CliError::Certificate(e.to_string())
            }
            crate::Error::StaleArtifact { .. } => CliError::Stale(e.to_string()),
            other => CliError::Compute(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Certificate(_) => 3,
            CliError::Stale(_) => 4,
            CliError::Io(_) | CliError::Compute(_) => 1,
        }
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> CliError + '_ {
    move |e| CliError::Io(format!("{}: {e}", path.display()))
}

/// Outcome of the greedy-versus-random comparison for one baseline family.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyComparison {
    pub provenance: Provenance,
    pub n_sets: usize,
    /// Sets of the family whose mean β lies below the greedy one.
    pub beta_wins: usize,
    pub family_mean_beta: f64,
    pub family_mean_trace: f64,
    pub family_median_trace: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub n_sets: usize,
    pub spearman: f64,
    pub greedy_mean_beta: f64,
    pub greedy_mean_trace: f64,
    pub families: Vec<FamilyComparison>,
    /// Greedy has a larger mean β and a smaller mean trace than the average
    /// of every random family.
    pub greedy_dominates: bool,
    pub text: String,
}

/// One output directory driven by one configuration.
pub struct Experiment {
    config: ExperimentConfig,
    out: PathBuf,
    model: OnceLock<Arc<Model>>,
    library: OnceLock<Arc<SensorLibrary>>,
}

impl Experiment {
    pub fn new(config: ExperimentConfig) -> Result<Self, CliError> {
        config.validate()?;
        let out = config.output_dir.clone();
        Ok(Self { config, out, model: OnceLock::new(), library: OnceLock::new() })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn out_dir(&self) -> &Path {
        &self.out
    }

    pub fn model(&self) -> Result<Arc<Model>, CliError> {
        if let Some(m) = self.model.get() {
            return Ok(m.clone());
        }
        let m = Arc::new(assemble_thermal_block(&self.config.thermal_config())?);
        Ok(self.model.get_or_init(|| m).clone())
    }

    pub fn library(&self) -> Result<Arc<SensorLibrary>, CliError> {
        if let Some(l) = self.library.get() {
            return Ok(l.clone());
        }
        let c = &self.config.library;
        let lib = Arc::new(SensorLibrary::build(
            self.model()?,
            c.grid_n,
            c.bounds,
            c.std,
            self.config.noise.covariance,
        )?);
        Ok(self.library.get_or_init(|| lib).clone())
    }

    fn centers(&self) -> Vec<[f64; 2]> {
        grid_centers(self.config.library.grid_n, self.config.library.bounds)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    /// Records the command as running, executes it, and finalizes the manifest.
    fn tracked<T>(
        &self,
        command: &str,
        seeds: BTreeMap<String, u64>,
        body: impl FnOnce() -> Result<(T, Vec<&'static str>), CliError>,
    ) -> Result<T, CliError> {
        std::fs::create_dir_all(&self.out).map_err(io_err(&self.out))?;
        let (full, rb) = (self.config.full_hash(), self.config.rb_hash());
        let mut manifest = RunManifest::open(&self.out, &full, &rb);
        manifest.commands.insert(
            command.into(),
            CommandRecord { status: "running".into(), seeds: seeds.clone(), ..Default::default() },
        );
        manifest.save(&self.out)?;
        let clock = Stopwatch::start();
        let result = body();
        let mut manifest = RunManifest::open(&self.out, &full, &rb);
        let record = match &result {
            Ok((_, files)) => CommandRecord {
                status: "complete".into(),
                seeds,
                artifacts: files.iter().map(PathBuf::from).collect(),
                wall_time_s: clock.elapsed_s(),
            },
            Err(e) => CommandRecord {
                status: format!("failed: {e}"),
                seeds,
                artifacts: Vec::new(),
                wall_time_s: clock.elapsed_s(),
            },
        };
        manifest.commands.insert(command.into(), record);
        manifest.save(&self.out)?;
        result.map(|(v, _)| v)
    }

    /// Builds and certifies the reduced basis on the training grid.
    pub fn build_rb(&self) -> Result<RBSpace, CliError> {
        self.tracked("build-rb", BTreeMap::new(), || {
            let model = self.model()?;
            let xi = self.config.xi_train()?;
            let rb = build_rb(&model, &xi, self.config.rb.eps_target, self.config.rb.max_basis)?;
            let cert = rb.certificate();
            let p = self.config.hyper_dim();
            let mut t = CsvTable::new((1..=p).map(|d| format!("theta_{d}")).chain(["eps".to_string()]));
            for (theta, &e) in cert.thetas.iter().zip(&cert.eps_theta) {
                t.push(theta.iter().map(|&x| fmt_f64(x)).chain([fmt_f64(e)]).collect());
            }
            t.write(&self.path(RB_CERTIFICATE))?;
            if !(cert.eps_max <= self.config.rb.eps_target) {
                let worst = cert
                    .eps_theta
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(i, _)| cert.thetas[i].clone())
                    .unwrap_or_default();
                return Err(CliError::Certificate(format!(
                    "max certified error {:e} exceeds target {:e}; worst theta {worst:?}",
                    cert.eps_max, self.config.rb.eps_target
                )));
            }
            let text = rb.to_artifact(&self.config.rb_hash())?;
            let path = self.path(RB_ARTIFACT);
            std::fs::write(&path, text).map_err(io_err(&path))?;
            Ok((rb, vec![RB_ARTIFACT, RB_CERTIFICATE]))
        })
    }

    /// Loads the reduced basis, refusing artifacts built for another config.
    pub fn load_rb(&self) -> Result<RBSpace, CliError> {
        let path = self.path(RB_ARTIFACT);
        let text = std::fs::read_to_string(&path).map_err(|e| {
            CliError::Io(format!("{}: {e} (run build-rb first)", path.display()))
        })?;
        Ok(RBSpace::from_artifact(&text, Some(&self.config.rb_hash()))?)
    }

    fn write_library(&self) -> Result<(), CliError> {
        let mut t = CsvTable::new(["k", "x1", "x2", "std"]);
        for (k, c) in self.centers().iter().enumerate() {
            t.push(vec![k.to_string(), fmt_f64(c[0]), fmt_f64(c[1]), fmt_f64(self.config.library.std)]);
        }
        t.write(&self.path(SENSORS))
    }

    fn greedy_config(&self, criterion: Criterion, xi_train: Vec<Vec<f64>>) -> GreedyConfig {
        let g = &self.config.greedy;
        GreedyConfig {
            beta_target: g.beta_target,
            k_max: g.k_max,
            theta_start: self.config.theta_start_index(&xi_train),
            xi_train,
            criterion,
            pair_stride: g.pair_stride,
        }
    }

    fn trace_table(&self, trace: &GreedyTrace, criterion: Criterion) -> CsvTable {
        let p = self.config.hyper_dim();
        let mut header: Vec<String> =
            ["iteration", "sensor_index", "x1", "x2", "score"].map(String::from).to_vec();
        header.extend((1..=p).map(|d| format!("worst_theta_{d}")));
        if criterion == Criterion::BetaPair {
            header.extend((1..=p).map(|d| format!("worst_pair_theta_{d}")));
        }
        header.push("beta".into());
        let centers = self.centers();
        let mut t = CsvTable::new(header);
        for r in &trace.records {
            let c = centers[r.sensor_index];
            let mut row = vec![
                r.iteration.to_string(),
                r.sensor_index.to_string(),
                fmt_f64(c[0]),
                fmt_f64(c[1]),
                fmt_f64(r.score),
            ];
            row.extend(r.worst_theta.iter().map(|&x| fmt_f64(x)));
            if criterion == Criterion::BetaPair {
                let second = r.worst_theta2.clone().unwrap_or_else(|| r.worst_theta.clone());
                row.extend(second.iter().map(|&x| fmt_f64(x)));
            }
            row.push(fmt_f64(r.beta));
            t.push(row);
        }
        t
    }

    /// Runs the greedy selection for every configured criterion.
    pub fn select(&self) -> Result<Vec<(SensorSet, GreedyTrace)>, CliError> {
        self.tracked("select", BTreeMap::new(), || {
            let mut rb = self.load_rb()?;
            let model = self.model()?;
            let library = self.library()?;
            rb.attach_library(&library);
            let prior = self.config.prior()?;
            let xi = self.config.xi_train()?;
            let mut out = Vec::new();
            let mut files = vec![SENSORS, SELECTION];
            for &criterion in &self.config.greedy.criteria {
                let (set, trace) = run_greedy(&model, &rb, &library, &prior, self.greedy_config(criterion, xi.clone()))?;
                let name = match criterion {
                    Criterion::Beta => GREEDY_TRACE,
                    Criterion::BetaPair => GREEDY_PAIR_TRACE,
                };
                self.trace_table(&trace, criterion).write(&self.path(name))?;
                files.push(name);
                out.push((set, trace));
            }
            self.write_library()?;
            let sets: Vec<SensorSet> = out.iter().map(|(s, _)| s.clone()).collect();
            sets_table(&sets, &self.centers()).write(&self.path(SELECTION))?;
            Ok((out, files))
        })
    }

    /// Random, inflow-biased random and Chebyshev reference sets.
    pub fn baselines(&self) -> Result<Vec<SensorSet>, CliError> {
        let b = &self.config.baselines;
        let seeds = BTreeMap::from([
            ("random".to_string(), b.random_seed()),
            ("random_inflow".to_string(), b.inflow_seed()),
        ]);
        self.tracked("baselines", seeds, || {
            let centers = self.centers();
            let mut sets = random_baseline(centers.len(), b.k, b.n_sets, b.random_seed())?;
            sets.extend(random_inflow_baseline(&centers, b.k, b.inflow_min, b.n_sets, b.inflow_seed())?);
            sets.push(chebyshev_reference(&centers, b.chebyshev_degree)?);
            sets_table(&sets, &centers).write(&self.path(BASELINES))?;
            Ok((sets, vec![BASELINES]))
        })
    }

    /// All sets from the selection and baseline files, in file order.
    pub fn load_sets(&self) -> Result<Vec<SensorSet>, CliError> {
        let n_lib = self.config.library.grid_n.pow(2);
        let mut sets = read_sets(&self.path(SELECTION), n_lib)?;
        sets.extend(read_sets(&self.path(BASELINES), n_lib)?);
        Ok(sets)
    }

    /// Full-order β and posterior trace of every set on the test grid.
    pub fn evaluate(&self) -> Result<Vec<SetEvaluation>, CliError> {
        self.tracked("evaluate", BTreeMap::new(), || {
            let sets = self.load_sets()?;
            let model = self.model()?;
            let library = self.library()?;
            let prior = self.config.prior()?;
            let xi = self.config.xi_test()?;
            let evals = evaluate_sensor_sets(&model, &library, &sets, &xi, self.config.noise.sigma, &prior)?;

            let mut summary = CsvTable::new([
                "set_id", "provenance", "mean_beta", "mean_trace", "min_beta", "max_trace", "failures",
            ]);
            let p = self.config.hyper_dim();
            let mut header: Vec<String> = vec!["set_id".into(), "provenance".into()];
            header.extend((1..=p).map(|d| format!("theta_{d}")));
            header.extend(["beta".to_string(), "trace".to_string()]);
            let mut full = CsvTable::new(header);
            for e in &evals {
                summary.push(vec![
                    e.id.clone(),
                    e.provenance.as_str().into(),
                    fmt_f64(e.mean_beta),
                    fmt_f64(e.mean_trace),
                    fmt_f64(e.min_beta),
                    fmt_f64(e.max_trace),
                    e.failures.to_string(),
                ]);
                for (i, theta) in xi.iter().enumerate() {
                    let mut row = vec![e.id.clone(), e.provenance.as_str().into()];
                    row.extend(theta.iter().map(|&x| fmt_f64(x)));
                    row.extend([fmt_f64(e.betas[i]), fmt_f64(e.traces[i])]);
                    full.push(row);
                }
            }
            summary.write(&self.path(RESULTS))?;
            full.write(&self.path(RESULTS_FULL))?;
            Ok((evals, vec![RESULTS, RESULTS_FULL]))
        })
    }

    /// Plot inputs, rank correlation and the greedy-versus-random verdict.
    pub fn report(&self) -> Result<Report, CliError> {
        self.tracked("report", BTreeMap::new(), || {
            let results = CsvTable::read(&self.path(RESULTS))?;
            let (ci, cp) = (results.column("set_id")?, results.column("provenance")?);
            let (cb, ct) = (results.column("mean_beta")?, results.column("mean_trace")?);
            let mut rows = Vec::new();
            let mut scatter = CsvTable::new(["set_id", "provenance", "mean_beta", "mean_trace"]);
            for r in &results.rows {
                let prov = Provenance::parse(&r[cp])
                    .ok_or_else(|| CliError::Io(format!("unknown provenance {:?}", r[cp])))?;
                let (b, t) = (parse_f64(&r[cb])?, parse_f64(&r[ct])?);
                scatter.push(vec![r[ci].clone(), r[cp].clone(), fmt_f64(b), fmt_f64(t)]);
                rows.push((r[ci].clone(), prov, b, t));
            }
            scatter.write(&self.path(SCATTER))?;

            let sets = self.load_sets()?;
            let centers = self.centers();
            let mut map = CsvTable::new(["set_id", "provenance", "x1", "x2"]);
            for s in &sets {
                for &k in &s.indices {
                    map.push(vec![s.id.clone(), s.provenance.as_str().into(), fmt_f64(centers[k][0]), fmt_f64(centers[k][1])]);
                }
            }
            map.write(&self.path(SENSOR_MAP))?;

            let report = summarize(&rows);
            let path = self.path(SUMMARY);
            std::fs::write(&path, &report.text).map_err(io_err(&path))?;
            Ok((report, vec![SCATTER, SENSOR_MAP, SUMMARY]))
        })
    }

    /// The whole pipeline.
    pub fn run_all(&self) -> Result<Report, CliError> {
        self.build_rb()?;
        self.select()?;
        self.baselines()?;
        self.evaluate()?;
        self.report()
    }
}

fn summarize(rows: &[(String, Provenance, f64, f64)]) -> Report {
    let finite: Vec<&(String, Provenance, f64, f64)> =
        rows.iter().filter(|r| r.2.is_finite() && r.3.is_finite()).collect();
    let betas: Vec<f64> = finite.iter().map(|r| r.2).collect();
    let traces: Vec<f64> = finite.iter().map(|r| r.3).collect();
    let rho = stats::spearman(&betas, &traces);
    let greedy = rows.iter().find(|r| r.1 == Provenance::Greedy);
    let (gb, gt) = greedy.map(|g| (g.2, g.3)).unwrap_or((f64::NAN, f64::NAN));

    let mut families = Vec::new();
    for prov in [Provenance::Random, Provenance::RandomInflow] {
        let fam: Vec<&&(String, Provenance, f64, f64)> = finite.iter().filter(|r| r.1 == prov).collect();
        if fam.is_empty() {
            continue;
        }
        let fb: Vec<f64> = fam.iter().map(|r| r.2).collect();
        let ft: Vec<f64> = fam.iter().map(|r| r.3).collect();
        families.push(FamilyComparison {
            provenance: prov,
            n_sets: fam.len(),
            beta_wins: fb.iter().filter(|&&b| gb > b).count(),
            family_mean_beta: stats::mean(&fb),
            family_mean_trace: stats::mean(&ft),
            family_median_trace: stats::median(&ft),
        });
    }
    let dominates = greedy.is_some()
        && !families.is_empty()
        && families.iter().all(|f| gb > f.family_mean_beta && gt < f.family_mean_trace);

    let mut text = String::new();
    text.push_str(&format!("sets evaluated: {}\n", rows.len()));
    text.push_str(&format!("spearman(mean_beta, mean_trace): {}\n", fmt_f64(rho)));
    text.push_str(&format!("greedy mean_beta: {}\n", fmt_f64(gb)));
    text.push_str(&format!("greedy mean_trace: {}\n", fmt_f64(gt)));
    for f in &families {
        let name = f.provenance.as_str();
        text.push_str(&format!(
            "{name}: {} sets, greedy beta above {} of them; family mean_beta {}, mean_trace {}, median mean_trace {}\n",
            f.n_sets,
            f.beta_wins,
            fmt_f64(f.family_mean_beta),
            fmt_f64(f.family_mean_trace),
            fmt_f64(f.family_median_trace)
        ));
    }
    if rows.iter().any(|r| r.1 == Provenance::Chebyshev) {
        text.push_str("note: the chebyshev set is a 4x4 stand-in layout\n");
    }
    text.push_str(&format!(
        "verdict: {}\n",
        if dominates { "greedy dominates random means" } else { "greedy does not dominate random means" }
    ));
    Report {
        n_sets: rows.len(),
        spearman: rho,
        greedy_mean_beta: gb,
        greedy_mean_trace: gt,
        families,
        greedy_dominates: dominates,
        text,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::Config(String::new()).exit_code(), 2);
        let cert: CliError = crate::Error::CertificateFailed { theta: vec![1.0] }.into();
        assert_eq!(cert.exit_code(), 3);
        let stale: CliError = crate::Error::StaleArtifact { expected: "a".into(), found: "b".into() }.into();
        assert_eq!(stale.exit_code(), 4);
        assert_eq!(CliError::from(crate::Error::DegenerateStateGram).exit_code(), 1);
    }

    #[test]
    fn summary_verdict() {
        let mut rows = vec![("greedy".to_string(), Provenance::Greedy, 0.9, 1.0)];
        for i in 0..10 {
            let b = 0.1 + 0.05 * i as f64;
            rows.push((format!("random_{i:02}"), Provenance::Random, b, 3.0 - b));
        }
        let r = summarize(&rows);
        assert!(r.greedy_dominates);
        assert_eq!(r.families[0].beta_wins, 10);
        assert!((r.spearman + 1.0).abs() < 1e-12);
        assert!(r.text.contains("verdict: greedy dominates random means"));
        rows[0].2 = 0.2;
        assert!(!summarize(&rows).greedy_dominates);
    }
}
