//! Command orchestration and run artifacts.
//!
//! Every command writes `manifest.json` into its output directory, also when
//! the run fails. Numeric CSV columns use a fixed `{:.17e}` format so that
//! identical configurations reproduce identical bytes.
//!
//! | file              | columns                                           |
//! |-------------------|---------------------------------------------------|
//! | `ledger.csv`      | `t,e_kin,e_mag,d_visc_cum,d_resist_cum,residual`  |
//! | `levelsets.csv`   | `t,bin_lo,bin_hi,volume`                          |
//! | `snapshots.csv`   | `index,t,rho,u,b` (file names under `snapshots/`) |
//! | `windows.csv`     | `t_start,t_end,depth,iterations,ode_steps,final_residual` |
//! | `study_levels.csv`| `level,parameter,completed,final_time,windows,level_set_drift,initial_density_change` |
//! | `study_differences.csv` | `coarse,fine,rho,u,b,combined`              |
//! | `relative_energy.csv` | `t,term_u,term_b,term_rho,diss_u,diss_b,lhs,gronwall_bound` |

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use crate::basis::Basis;
use crate::config::{Preset, SimConfig, OUTPUT_ROOT_ENV};
use crate::diagnostics::{divergence_residual, weak_residuals, TestBank, WeakEquation};
use crate::error::{Error, Result};
use crate::fixedpoint::{run_simulation, SolutionTrajectory, WindowReport, KNOTS};
use crate::galerkin::ModelLaws;
use crate::material::LawShape;
use crate::presets::{build_problem, PreparedRun};
use crate::snapshot::write_snapshot;
use crate::transport::level_set_histogram;
use crate::verification::{refinement_study, relative_energy, StrongReference, StudyAxis, StudyReport};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const NUMERICAL: i32 = 2;
    pub const ACCEPTANCE: i32 = 3;
}

/// Relative slack of the energy balance verdict.
pub const ENERGY_BALANCE_TOL: f64 = 1e-6;
/// Relative tolerance of the Beltrami decay verdict.
pub const BELTRAMI_DECAY_TOL: f64 = 1e-6;
/// Bound on the velocity norm in the Beltrami verdict.
pub const BELTRAMI_VELOCITY_TOL: f64 = 1e-8;
/// Divergence residual bound on the final fields.
pub const DIVERGENCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Study { axis: StudyAxis, levels: usize },
    Verify,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate => "simulate",
            Command::Study { .. } => "study",
            Command::Verify => "verify",
        }
    }
}

/// One acceptance verdict.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Criterion {
    pub id: String,
    pub value: f64,
    pub threshold: f64,
    pub verdict: Verdict,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Pass,
    Fail,
}

impl Criterion {
    /// Passes when `value ≤ threshold`.
    pub fn at_most(id: &str, value: f64, threshold: f64) -> Self {
        Self {
            id: id.to_string(),
            value,
            threshold,
            verdict: if value <= threshold { Verdict::Pass } else { Verdict::Fail },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct WindowSummary {
    pub t_start: f64,
    pub t_end: f64,
    pub depth: u32,
    pub iterations: usize,
    pub ode_steps: usize,
}

impl From<&WindowReport> for WindowSummary {
    fn from(w: &WindowReport) -> Self {
        Self {
            t_start: w.t_start,
            t_end: w.t_end,
            depth: w.depth,
            iterations: w.iterations,
            ode_steps: w.ode_steps,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Timings {
    pub setup_s: f64,
    pub solve_s: f64,
    pub diagnostics_s: f64,
    pub output_s: f64,
    pub total_s: f64,
}

/// Record written for every run.
#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub parallel: bool,
    pub config_echo: String,
    pub config: SimConfig,
    pub status: String,
    pub exit_code: i32,
    pub timings: Timings,
    pub windows: Vec<WindowSummary>,
    pub verdicts: Vec<Criterion>,
    pub failure: Option<String>,
    pub artifacts: Vec<String>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub exit_code: i32,
    pub out_dir: PathBuf,
    pub manifest: Manifest,
}

/// `git describe`-style version string.
pub fn version_string() -> String {
    format!("hallmhd {} ({})", env!("CARGO_PKG_VERSION"), env!("HALLMHD_GIT_DESCRIBE"))
}

/// Output directory: relative `output.dir` resolves against `$HALLMHD_OUTPUT_ROOT` when set.
pub fn output_dir(cfg: &SimConfig) -> PathBuf {
    resolve_output(&cfg.output.dir, std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
}

fn resolve_output(dir: &Path, root: Option<PathBuf>) -> PathBuf {
    match root {
        Some(r) if dir.is_relative() => r.join(dir),
        _ => dir.to_path_buf(),
    }
}

/// Exit code for a library error.
pub fn classify(e: &Error) -> i32 {
    match e {
        Error::PicardFailure { .. } | Error::StepSizeUnderflow { .. } | Error::NonFinite(_) => exit::NUMERICAL,
        Error::DensityOutOfRange { .. } | Error::NonPositiveWeight(_) => exit::NUMERICAL,
        _ => exit::USAGE,
    }
}

fn num(x: f64) -> String {
    format!("{x:.17e}")
}

/// `ledger.csv` contents.
pub fn ledger_csv(traj: &SolutionTrajectory) -> String {
    let l = &traj.ledger;
    let mut s = String::from("t,e_kin,e_mag,d_visc_cum,d_resist_cum,residual\n");
    for k in 0..l.len() {
        let row = [l.times[k], l.e_kin[k], l.e_mag[k], l.d_visc[k], l.d_resist[k], l.residual[k]];
        let _ = writeln!(s, "{}", row.map(num).join(","));
    }
    s
}

/// `levelsets.csv` contents over the initial density range, one block per window boundary.
pub fn levelsets_csv(traj: &SolutionTrajectory, bins: usize) -> Result<String> {
    let first = &traj.states[0].rho;
    let (lo, hi) = (first.min(), first.max());
    let mut s = String::from("t,bin_lo,bin_hi,volume\n");
    for st in traj.boundary_states() {
        for b in level_set_histogram(&st.rho.field, lo, hi, bins)? {
            let _ = writeln!(s, "{},{},{},{}", num(st.t), num(b.lo), num(b.hi), num(b.volume));
        }
    }
    Ok(s)
}

fn windows_csv(traj: &SolutionTrajectory) -> String {
    let mut s = String::from("t_start,t_end,depth,iterations,ode_steps,final_residual\n");
    for w in &traj.picard_history {
        let r = w.residuals.last().copied().unwrap_or(f64::NAN);
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            num(w.t_start),
            num(w.t_end),
            w.depth,
            w.iterations,
            w.ode_steps,
            num(r)
        );
    }
    s
}

struct Writer {
    dir: PathBuf,
    written: Vec<String>,
}

impl Writer {
    fn new(dir: PathBuf) -> Result<Self> {
        fs::create_dir_all(&dir)?;
        Ok(Self { dir, written: Vec::new() })
    }

    fn text(&mut self, name: &str, body: &str) -> Result<()> {
        fs::write(self.dir.join(name), body)?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let body = serde_json::to_string_pretty(value).map_err(|e| Error::Format(e.to_string()))?;
        self.text(name, &body)
    }
}

fn write_snapshots(w: &mut Writer, traj: &SolutionTrajectory, basis: &Basis, interval: usize) -> Result<()> {
    let sub = w.dir.join("snapshots");
    fs::create_dir_all(&sub)?;
    let boundary: Vec<_> = traj.boundary_states().collect();
    let last = boundary.len() - 1;
    let mut index = String::from("index,t,rho,u,b\n");
    for (k, st) in boundary.iter().enumerate() {
        let due = if interval == 0 { k == last } else { k % interval == 0 || k == last };
        if !due {
            continue;
        }
        let names = ["rho", "u", "b"].map(|f| format!("{f}_{k:05}.bin"));
        write_snapshot(&sub.join(&names[0]), &st.rho.field)?;
        write_snapshot(&sub.join(&names[1]), &basis.synthesize(&st.alpha)?)?;
        write_snapshot(&sub.join(&names[2]), &basis.synthesize(&st.beta)?)?;
        for n in &names {
            w.written.push(format!("snapshots/{n}"));
        }
        let _ = writeln!(index, "{k},{},{},{},{}", num(st.t), names[0], names[1], names[2]);
    }
    w.text("snapshots.csv", &index)
}

/// Whether the configuration is the analytic decaying-ABC case.
pub fn is_beltrami_case(cfg: &SimConfig) -> bool {
    cfg.initial.preset == Preset::Beltrami
        && matches!(cfg.sigma, LawShape::Constant(_))
        && cfg.mollify_eps == 0.0
        && cfg.modes >= 1
}

/// Acceptance verdicts for a completed simulation.
pub fn verdicts(cfg: &SimConfig, prepared: &PreparedRun, traj: &SolutionTrajectory) -> Result<Vec<Criterion>> {
    let basis = &prepared.problem.basis;
    let e0 = traj.ledger.initial_energy();
    let mut out = vec![
        Criterion::at_most(
            "energy_balance",
            traj.ledger.max_abs_residual(),
            ENERGY_BALANCE_TOL * e0,
        ),
        Criterion::at_most("energy_inequality_violations", traj.energy_violations as f64, 0.0),
    ];
    let (lo, hi) = prepared.problem.rho_bounds;
    let excursion = traj
        .states
        .iter()
        .map(|s| (lo - s.rho.min()).max(s.rho.max() - hi).max(0.0))
        .fold(0.0, f64::max);
    out.push(Criterion::at_most("density_bounds", excursion, 0.0));
    let last = traj.final_state();
    let div = divergence_residual(&basis.synthesize(&last.alpha)?)?.max(divergence_residual(&basis.synthesize(&last.beta)?)?);
    out.push(Criterion::at_most("divergence_free", div, DIVERGENCE_TOL));
    if is_beltrami_case(cfg) {
        let LawShape::Constant(sigma) = cfg.sigma else { unreachable!() };
        let kappa = basis.domain().base_wavenumber();
        let expect = (-kappa * kappa * last.t / sigma).exp();
        let b0 = traj.states[0].beta.iter().map(|b| b * b).sum::<f64>().sqrt();
        let b1 = last.beta.iter().map(|b| b * b).sum::<f64>().sqrt();
        let ratio = if b0 > 0.0 { b1 / b0 } else { expect };
        out.push(Criterion::at_most("beltrami_decay", (ratio - expect).abs() / expect, BELTRAMI_DECAY_TOL));
        let u1 = last.alpha.iter().map(|a| a * a).sum::<f64>().sqrt();
        out.push(Criterion::at_most("beltrami_velocity", u1, BELTRAMI_VELOCITY_TOL));
    }
    Ok(out)
}

#[derive(Serialize)]
struct VerifyDocument<'a> {
    passed: bool,
    criteria: &'a [Criterion],
    weak_residuals: Vec<(WeakEquation, f64, f64)>,
}

/// Execute `command` for `cfg`, writing artifacts under [`output_dir`].
///
/// Only failures to create the output directory or to write the manifest are
/// returned as errors; everything else is recorded in the manifest.
pub fn run(command: Command, cfg: &SimConfig) -> Result<RunOutcome> {
    run_in(command, cfg, output_dir(cfg))
}

pub fn run_in(command: Command, cfg: &SimConfig, dir: PathBuf) -> Result<RunOutcome> {
    let start = Instant::now();
    let mut w = Writer::new(dir.clone())?;
    let mut manifest = Manifest {
        command: command.name().to_string(),
        version: version_string(),
        parallel: crate::par::is_parallel(),
        config_echo: cfg.echo(),
        config: cfg.clone(),
        status: String::new(),
        exit_code: exit::OK,
        timings: Timings::default(),
        windows: Vec::new(),
        verdicts: Vec::new(),
        failure: None,
        artifacts: Vec::new(),
    };
    let result = match command {
        Command::Study { axis, levels } => execute_study(cfg, axis, levels, &mut w, &mut manifest),
        Command::Simulate | Command::Verify => execute_run(command, cfg, &mut w, &mut manifest),
    };
    if let Err(e) = result {
        manifest.exit_code = classify(&e);
        manifest.failure = Some(e.to_string());
    }
    manifest.status = match manifest.exit_code {
        exit::OK => "ok",
        exit::USAGE => "usage_error",
        exit::NUMERICAL => "numerical_failure",
        _ => "acceptance_failure",
    }
    .to_string();
    manifest.timings.total_s = start.elapsed().as_secs_f64();
    manifest.artifacts = w.written.clone();
    manifest.artifacts.push("manifest.json".into());
    w.json("manifest.json", &manifest)?;
    Ok(RunOutcome {
        exit_code: manifest.exit_code,
        out_dir: dir,
        manifest,
    })
}

fn execute_run(command: Command, cfg: &SimConfig, w: &mut Writer, m: &mut Manifest) -> Result<()> {
    let t = Instant::now();
    let prepared = build_problem(cfg)?;
    m.timings.setup_s = t.elapsed().as_secs_f64();

    let t = Instant::now();
    let traj = run_simulation(&prepared.problem, &cfg.window)?;
    m.timings.solve_s = t.elapsed().as_secs_f64();
    m.windows = traj.picard_history.iter().map(WindowSummary::from).collect();
    if let Some(f) = &traj.failure {
        m.exit_code = exit::NUMERICAL;
        m.failure = Some(format!("at t = {}: {}", f.t, f.message));
    }

    let t = Instant::now();
    let basis = &prepared.problem.basis;
    w.text("ledger.csv", &ledger_csv(&traj))?;
    w.text("levelsets.csv", &levelsets_csv(&traj, cfg.output.histogram_bins)?)?;
    w.text("windows.csv", &windows_csv(&traj))?;
    write_snapshots(w, &traj, basis, cfg.output.snapshot_interval)?;
    m.timings.output_s = t.elapsed().as_secs_f64();

    if command == Command::Verify {
        let t = Instant::now();
        m.verdicts = verdicts(cfg, &prepared, &traj)?;
        let weak = if traj.states.len() >= KNOTS {
            let table = weak_residuals(&traj, basis, &prepared.problem.laws, &TestBank::standard(basis)?)?;
            [WeakEquation::Density, WeakEquation::Momentum, WeakEquation::Induction]
                .into_iter()
                .map(|e| (e, table.max_abs(e), table.max_scaled(e)))
                .collect()
        } else {
            Vec::new()
        };
        if is_beltrami_case(cfg) {
            write_relative_energy(w, cfg, &traj, basis, &prepared.problem.laws)?;
        }
        let passed = m.verdicts.iter().all(|c| c.verdict == Verdict::Pass);
        w.json(
            "acceptance.json",
            &VerifyDocument {
                passed,
                criteria: &m.verdicts,
                weak_residuals: weak,
            },
        )?;
        if !passed && m.exit_code == exit::OK {
            m.exit_code = exit::ACCEPTANCE;
        }
        m.timings.diagnostics_s = t.elapsed().as_secs_f64();
    }
    Ok(())
}

fn write_relative_energy(
    w: &mut Writer,
    cfg: &SimConfig,
    traj: &SolutionTrajectory,
    basis: &Basis,
    laws: &ModelLaws,
) -> Result<()> {
    let LawShape::Constant(sigma) = cfg.sigma else { return Ok(()) };
    let rep = relative_energy(
        traj,
        basis,
        StrongReference::Beltrami {
            amplitude: cfg.initial.amplitude,
            sigma,
            rho: cfg.initial.rho_mean,
        },
        laws,
    )?;
    let mut s = String::from("t,term_u,term_b,term_rho,diss_u,diss_b,lhs,gronwall_bound\n");
    for (r, g) in rep.series.iter().zip(&rep.gronwall) {
        let row = [r.t, r.term_u, r.term_b, r.term_rho, r.diss_u, r.diss_b, g.lhs, g.gronwall_bound];
        let _ = writeln!(s, "{}", row.map(num).join(","));
    }
    w.text("relative_energy.csv", &s)
}

fn execute_study(cfg: &SimConfig, axis: StudyAxis, levels: usize, w: &mut Writer, m: &mut Manifest) -> Result<()> {
    let t = Instant::now();
    let rep: StudyReport = refinement_study(cfg, axis, levels)?;
    m.timings.solve_s = t.elapsed().as_secs_f64();
    let t = Instant::now();
    w.json("study.json", &rep)?;
    let mut s = String::from("level,parameter,completed,final_time,windows,level_set_drift,initial_density_change\n");
    for l in &rep.levels {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            l.level,
            num(l.parameter),
            l.completed,
            num(l.final_time),
            l.windows,
            num(l.level_set_drift),
            l.initial_density_change.map(num).unwrap_or_default()
        );
    }
    w.text("study_levels.csv", &s)?;
    let mut s = String::from("coarse,fine,rho,u,b,combined\n");
    for d in &rep.differences {
        let _ = writeln!(s, "{},{},{},{},{},{}", d.coarse, d.fine, num(d.rho), num(d.u), num(d.b), num(d.combined));
    }
    w.text("study_differences.csv", &s)?;
    m.timings.output_s = t.elapsed().as_secs_f64();
    if let Some(f) = rep.failure {
        m.exit_code = exit::NUMERICAL;
        m.failure = Some(f);
    }
    Ok(())
}
