//! End-to-end experiments: power flow, reduction, ground-truth simulation,
//! measurement synthesis, filtering and reporting.
//!
//! Experiment configs are TOML:
//!
//! ```toml
//! case = "wecc9"            # bundled name or path to a case file
//! seed = 42
//! filters = ["ekf", "ukf"]
//! substeps = 10
//!
//! [scenario]
//! fault_bus = 8
//! t_fault = 1.0
//! clearing_cycles = 2.0
//! cleared_line = [8, 9]
//! t_end = 10.0
//! dt = 0.01
//!
//! [noise]                   # optional, defaults shown
//! sigma_p = 0.01
//! sigma_q = 0.01
//! sigma_vmag = 0.005
//! sigma_vang = 0.005
//! q_delta = 1e-6
//! q_omega = 1e-6
//!
//! [estimator]               # optional, defaults shown
//! prior_offset = 0.05
//! p0 = 0.01
//! jitter = 1e-9
//! jacobian = "analytic"
//! sigma_scheme = "equal-weight"
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::cases::{self, NetworkCase};
use crate::dynamics::{FaultScenario, Study, Trajectory};
use crate::error::{Error, Result};
use crate::filters::{
    default_prior, run_filter_on, static_inversion, FilterConfig, FilterKind, FilterRun, JacobianMode, SigmaScheme,
};
use crate::measurement::{synthesize, MeasurementFrame, NoiseSpec};
use crate::powerflow::{self, ComplexMatrix, PowerFlowSolution};

pub const PRESETS: [&str; 2] = ["wecc9-fault8", "ne39-fault4"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EstimatorSettings {
    /// Initial rotor-angle error placed on machine 1 (rad).
    pub prior_offset: f64,
    /// Initial covariance scale, `P₀ = p0 · I`.
    pub p0: f64,
    pub jitter: f64,
    pub jacobian: JacobianMode,
    pub sigma_scheme: SigmaScheme,
}

impl Default for EstimatorSettings {
    fn default() -> Self {
        Self {
            prior_offset: 0.05,
            p0: 1e-2,
            jitter: crate::filters::DEFAULT_JITTER,
            jacobian: JacobianMode::Analytic,
            sigma_scheme: SigmaScheme::EqualWeight,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub case: String,
    pub scenario: FaultScenario,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "both_filters")]
    pub filters: Vec<FilterKind>,
    #[serde(default = "default_substeps")]
    pub substeps: usize,
    #[serde(default)]
    pub noise: NoiseSpec,
    #[serde(default)]
    pub estimator: EstimatorSettings,
    /// Output directory; nothing is written when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
}

fn both_filters() -> Vec<FilterKind> {
    vec![FilterKind::Ekf, FilterKind::Ukf]
}

fn default_substeps() -> usize {
    10
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Parse(e.to_string()))
    }

    fn with_scenario(case: &str, fault_bus: usize, cleared_line: (usize, usize)) -> Self {
        Self {
            case: case.into(),
            scenario: FaultScenario {
                fault_bus,
                t_fault: 1.0,
                clearing_cycles: 2.0,
                cleared_line,
                t_end: 10.0,
                dt: 0.01,
            },
            seed: 42,
            filters: both_filters(),
            substeps: default_substeps(),
            noise: NoiseSpec::default(),
            estimator: EstimatorSettings::default(),
            out: None,
        }
    }
}

/// Named scenario presets.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    match name {
        "wecc9-fault8" => Some(ExperimentConfig::with_scenario("wecc9", 8, (8, 9))),
        "ne39-fault4" => Some(ExperimentConfig::with_scenario("ne39", 4, (4, 14))),
        _ => None,
    }
}

/// Preset name or config file path.
pub fn resolve_config(name_or_path: &str) -> Result<ExperimentConfig> {
    if let Some(cfg) = preset(name_or_path) {
        return Ok(cfg);
    }
    let text = std::fs::read_to_string(name_or_path).map_err(|source| Error::Io {
        path: name_or_path.into(),
        source,
    })?;
    ExperimentConfig::from_toml_str(&text)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterReport {
    pub kind: FilterKind,
    /// Whole-run RMSE per machine.
    pub rmse_delta: Vec<f64>,
    pub rmse_omega: Vec<f64>,
    /// RMSE per machine from the clearing instant on.
    pub post_rmse_delta: Vec<f64>,
    pub post_rmse_omega: Vec<f64>,
    pub post_max_abs_delta: Vec<f64>,
    pub post_max_abs_omega: Vec<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub case: String,
    pub n_machines: usize,
    pub t_clear: f64,
    pub filters: Vec<FilterReport>,
    /// Post-clearing RMSE of rotor angles fitted frame by frame without dynamics.
    pub static_post_rmse_delta: Vec<f64>,
    pub wall_seconds: f64,
    pub config: String,
}

impl ExperimentReport {
    pub fn filter(&self, kind: FilterKind) -> Option<&FilterReport> {
        self.filters.iter().find(|f| f.kind == kind)
    }

    /// Human-readable summary. Timings are left out so the text is reproducible.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "case: {}", self.case);
        let _ = writeln!(s, "machines: {}", self.n_machines);
        let _ = writeln!(s, "clearing time: {:.6} s", self.t_clear);
        for f in &self.filters {
            let _ = writeln!(s, "\n[{}]", f.kind.as_str());
            let _ = writeln!(
                s,
                "{:>8} {:>14} {:>14} {:>14} {:>14} {:>14} {:>14}",
                "machine", "rmse_delta", "rmse_omega", "post_rmse_d", "post_rmse_w", "post_max_d", "post_max_w"
            );
            for m in 0..self.n_machines {
                let _ = writeln!(
                    s,
                    "{:>8} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e}",
                    m + 1,
                    f.rmse_delta[m],
                    f.rmse_omega[m],
                    f.post_rmse_delta[m],
                    f.post_rmse_omega[m],
                    f.post_max_abs_delta[m],
                    f.post_max_abs_omega[m]
                );
            }
        }
        let _ = writeln!(s, "\n[static inversion]");
        for (m, v) in self.static_post_rmse_delta.iter().enumerate() {
            let _ = writeln!(s, "{:>8} {:>14.6e}", m + 1, v);
        }
        let _ = writeln!(s, "\n[config]\n{}", self.config);
        s
    }
}

fn check_aligned(truth: &Trajectory, est: &Trajectory) -> Result<()> {
    if truth.len() != est.len() {
        return Err(Error::Dimension(format!(
            "trajectories have {} and {} samples",
            truth.len(),
            est.len()
        )));
    }
    if truth
        .times
        .iter()
        .zip(&est.times)
        .any(|(a, b)| (a - b).abs() > 1e-9)
    {
        return Err(Error::Dimension("trajectory timestamps differ".into()));
    }
    Ok(())
}

/// Per-component RMSE over samples with `t >= from`, ordered `[δ₁..δₙ, ω₁..ωₙ]`.
pub fn rmse_from(truth: &Trajectory, est: &Trajectory, from: f64) -> Result<Vec<f64>> {
    check_aligned(truth, est)?;
    let mut sum: Vec<f64> = Vec::new();
    let mut count = 0usize;
    for ((t, a), b) in truth.times.iter().zip(&truth.states).zip(&est.states) {
        if *t < from - 1e-9 {
            continue;
        }
        let err = a.to_vector() - b.to_vector();
        if sum.is_empty() {
            sum = vec![0.0; err.len()];
        }
        sum.iter_mut().zip(err.iter()).for_each(|(s, e)| *s += e * e);
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidArgument("no samples in RMSE window".into()));
    }
    Ok(sum.into_iter().map(|s| (s / count as f64).sqrt()).collect())
}

pub fn rmse(truth: &Trajectory, est: &Trajectory) -> Result<Vec<f64>> {
    rmse_from(truth, est, f64::NEG_INFINITY)
}

/// Per-component maximum absolute error over samples with `t >= from`.
pub fn max_abs_from(truth: &Trajectory, est: &Trajectory, from: f64) -> Result<Vec<f64>> {
    check_aligned(truth, est)?;
    let mut out: Vec<f64> = Vec::new();
    for ((t, a), b) in truth.times.iter().zip(&truth.states).zip(&est.states) {
        if *t < from - 1e-9 {
            continue;
        }
        let err = a.to_vector() - b.to_vector();
        if out.is_empty() {
            out = vec![0.0; err.len()];
        }
        out.iter_mut().zip(err.iter()).for_each(|(m, e)| *m = m.max(e.abs()));
    }
    Ok(out)
}

/// RMSE of per-frame rotor-angle estimates against the truth, from `from` on.
pub fn delta_rmse_from(truth: &Trajectory, delta: &[Vec<f64>], from: f64) -> Result<Vec<f64>> {
    if truth.len() != delta.len() {
        return Err(Error::Dimension("estimate count differs from trajectory length".into()));
    }
    let n = truth.states.first().map_or(0, |s| s.n_machines());
    let mut sum = vec![0.0; n];
    let mut count = 0usize;
    for ((t, s), d) in truth.times.iter().zip(&truth.states).zip(delta) {
        if *t < from - 1e-9 {
            continue;
        }
        for m in 0..n {
            sum[m] += (s.delta[m] - d[m]).powi(2);
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::InvalidArgument("no samples in RMSE window".into()));
    }
    Ok(sum.into_iter().map(|s| (s / count as f64).sqrt()).collect())
}

/// Everything produced by one experiment.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub case: NetworkCase,
    pub pf: PowerFlowSolution,
    pub study: Study,
    pub truth: Trajectory,
    pub frames: Vec<MeasurementFrame>,
    pub runs: Vec<(FilterKind, FilterRun)>,
    pub static_delta: Vec<Vec<f64>>,
    pub report: ExperimentReport,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    execute(cfg).map(|e| e.report)
}

pub fn execute(cfg: &ExperimentConfig) -> Result<Experiment> {
    let started = Instant::now();
    let case = cases::resolve(&cfg.case).map_err(|e| e.in_stage("case"))?;
    let pf = powerflow::solve_power_flow(&case, powerflow::DEFAULT_TOL, powerflow::DEFAULT_MAX_ITER)
        .map_err(|e| e.in_stage("powerflow"))?;
    let study = Study::prepare(&case, &pf, &cfg.scenario).map_err(|e| e.in_stage("reduction"))?;
    let truth = study.simulate(cfg.substeps).map_err(|e| e.in_stage("simulate"))?;
    let noise = NoiseSpec {
        seed: cfg.seed,
        ..cfg.noise.clone()
    };
    let frames = synthesize(&truth, &study.nets, &study.params, &noise).map_err(|e| e.in_stage("measure"))?;

    let n = case.n_machines();
    let est = &cfg.estimator;
    let b0 = default_prior(&study, est.prior_offset, est.p0).map_err(|e| e.in_stage("filter"))?;
    let configs: Vec<FilterConfig> = cfg
        .filters
        .iter()
        .map(|&kind| FilterConfig {
            jitter: est.jitter,
            jacobian_mode: est.jacobian,
            sigma_scheme: est.sigma_scheme,
            ..FilterConfig::new(kind, n, &noise)
        })
        .collect();

    // filters share the immutable frames and study
    let results: Vec<Result<(FilterRun, f64)>> = std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|fc| {
                let (study, frames, b0) = (&study, &frames, &b0);
                scope.spawn(move || {
                    let t0 = Instant::now();
                    run_filter_on(fc, study, frames, b0).map(|run| (run, t0.elapsed().as_secs_f64()))
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("filter thread panicked"))
            .collect()
    });
    let mut runs = Vec::with_capacity(results.len());
    for (fc, res) in configs.iter().zip(results) {
        let (run, secs) = res.map_err(|e| e.in_stage("filter"))?;
        runs.push((fc.kind, run, secs));
    }

    let static_delta = static_inversion(&study, &frames, &noise).map_err(|e| e.in_stage("baseline"))?;
    let t_clear = study.t_clear();

    let mut filters = Vec::with_capacity(runs.len());
    for (kind, run, secs) in &runs {
        let full = rmse(&truth, &run.estimates).map_err(|e| e.in_stage("report"))?;
        let post = rmse_from(&truth, &run.estimates, t_clear).map_err(|e| e.in_stage("report"))?;
        let peak = max_abs_from(&truth, &run.estimates, t_clear).map_err(|e| e.in_stage("report"))?;
        filters.push(FilterReport {
            kind: *kind,
            rmse_delta: full[..n].to_vec(),
            rmse_omega: full[n..].to_vec(),
            post_rmse_delta: post[..n].to_vec(),
            post_rmse_omega: post[n..].to_vec(),
            post_max_abs_delta: peak[..n].to_vec(),
            post_max_abs_omega: peak[n..].to_vec(),
            seconds: *secs,
        });
    }
    let static_post_rmse_delta = delta_rmse_from(&truth, &static_delta, t_clear).map_err(|e| e.in_stage("report"))?;

    let report = ExperimentReport {
        case: if case.name.is_empty() { cfg.case.clone() } else { case.name.clone() },
        n_machines: n,
        t_clear,
        filters,
        static_post_rmse_delta,
        wall_seconds: started.elapsed().as_secs_f64(),
        config: ExperimentConfig { out: None, ..cfg.clone() }
            .to_toml_string()
            .map_err(|e| e.in_stage("report"))?,
    };
    let experiment = Experiment {
        config: cfg.clone(),
        case,
        pf,
        study,
        truth,
        frames,
        runs: runs.into_iter().map(|(k, r, _)| (k, r)).collect(),
        static_delta,
        report,
    };
    if let Some(dir) = &cfg.out {
        write_outputs(&experiment, dir).map_err(|e| e.in_stage("output"))?;
    }
    Ok(experiment)
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    std::fs::write(path, contents).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Writes trajectory, measurement, estimate and report files into `dir`.
pub fn write_outputs(exp: &Experiment, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|source| Error::Io {
        path: dir.display().to_string(),
        source,
    })?;
    write_file(&dir.join("trajectory.csv"), &trajectory_csv(&exp.truth))?;
    write_file(&dir.join("measurements.csv"), &measurements_csv(&exp.case, &exp.frames))?;
    for (kind, run) in &exp.runs {
        write_file(
            &dir.join(format!("estimate_{}.csv", kind.as_str())),
            &estimate_csv(&exp.truth, run)?,
        )?;
    }
    write_file(&dir.join("static_estimate.csv"), &static_csv(&exp.truth, &exp.static_delta))?;
    write_file(&dir.join("report.txt"), &exp.report.render())
}

/// `t, delta_1..n, omega_1..n, regime`.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let n = traj.states.first().map_or(0, |s| s.n_machines());
    let mut s = String::from("t");
    (1..=n).for_each(|m| write!(s, ",delta_{m}").unwrap());
    (1..=n).for_each(|m| write!(s, ",omega_{m}").unwrap());
    s.push_str(",regime\n");
    for ((t, x), r) in traj.times.iter().zip(&traj.states).zip(&traj.regime) {
        write!(s, "{t}").unwrap();
        x.delta.iter().chain(&x.omega).for_each(|v| write!(s, ",{v}").unwrap());
        writeln!(s, ",{}", r.as_str()).unwrap();
    }
    s
}

/// `t, p_g*, q_g*, v_mag*, v_ang*` with absent entries left empty.
pub fn measurements_csv(case: &NetworkCase, frames: &[MeasurementFrame]) -> String {
    let n = case.n_machines();
    let mut s = String::from("t");
    (1..=n).for_each(|m| write!(s, ",p_g_{m}").unwrap());
    (1..=n).for_each(|m| write!(s, ",q_g_{m}").unwrap());
    case.buses.iter().for_each(|b| write!(s, ",v_mag_{}", b.id).unwrap());
    case.buses.iter().for_each(|b| write!(s, ",v_ang_{}", b.id).unwrap());
    s.push('\n');
    for f in frames {
        write!(s, "{}", f.t).unwrap();
        f.p_g.iter().chain(&f.q_g).for_each(|v| write!(s, ",{v}").unwrap());
        for v in f.v_mag.iter().chain(&f.v_ang) {
            match v {
                Some(v) => write!(s, ",{v}").unwrap(),
                None => s.push(','),
            }
        }
        s.push('\n');
    }
    s
}

/// `t`, then per machine `delta_true, delta_est, omega_true, omega_est`, then diag(P).
pub fn estimate_csv(truth: &Trajectory, run: &FilterRun) -> Result<String> {
    check_aligned(truth, &run.estimates)?;
    let n = truth.states.first().map_or(0, |s| s.n_machines());
    let mut s = String::from("t");
    for m in 1..=n {
        write!(s, ",delta_true_{m},delta_est_{m},omega_true_{m},omega_est_{m}").unwrap();
    }
    (1..=2 * n).for_each(|k| write!(s, ",p_{k}").unwrap());
    s.push('\n');
    for (k, t) in truth.times.iter().enumerate() {
        let (a, b) = (&truth.states[k], &run.estimates.states[k]);
        write!(s, "{t}").unwrap();
        for m in 0..n {
            write!(s, ",{},{},{},{}", a.delta[m], b.delta[m], a.omega[m], b.omega[m]).unwrap();
        }
        run.beliefs[k].p.diagonal().iter().for_each(|v| write!(s, ",{v}").unwrap());
        s.push('\n');
    }
    Ok(s)
}

fn static_csv(truth: &Trajectory, delta: &[Vec<f64>]) -> String {
    let n = delta.first().map_or(0, |d| d.len());
    let mut s = String::from("t");
    (1..=n).for_each(|m| write!(s, ",delta_static_{m}").unwrap());
    s.push('\n');
    for (t, d) in truth.times.iter().zip(delta) {
        write!(s, "{t}").unwrap();
        d.iter().for_each(|v| write!(s, ",{v}").unwrap());
        s.push('\n');
    }
    s
}

/// `bus, kind, v_mag, v_ang_deg, p_inj, q_inj`.
pub fn powerflow_csv(case: &NetworkCase, pf: &PowerFlowSolution) -> String {
    let mut s = String::from("bus,kind,v_mag,v_ang_deg,p_inj,q_inj\n");
    for (k, bus) in case.buses.iter().enumerate() {
        writeln!(
            s,
            "{},{:?},{},{},{},{}",
            bus.id,
            bus.kind,
            pf.v_mag[k],
            pf.v_ang[k].to_degrees(),
            pf.p_inj[k],
            pf.q_inj[k]
        )
        .unwrap();
    }
    s
}

/// Complex matrix as CSV rows of `re+imj` entries.
pub fn complex_matrix_csv(m: &ComplexMatrix) -> String {
    let mut s = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = (0..m.ncols())
            .map(|j| {
                let v = m[(i, j)];
                format!("{}{:+}j", v.re, v.im)
            })
            .collect();
        writeln!(s, "{}", row.join(",")).unwrap();
    }
    s
}
