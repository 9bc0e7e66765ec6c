//! Windowed Picard iteration coupling density transport with the linearized
//! Galerkin solve.
//!
//! Each window `[t0, t0 + Δt]` carries five equally spaced knots. An iterate
//! is the pair `(α, β)` at those knots; the map `F` transports the density
//! along the iterate's velocity, freezes `(ρ, ū, H̄)` at the midpoint,
//! and integrates the resulting linear system from the window's start state.

use serde::Serialize;

use crate::basis::SharedBasis;
use crate::diagnostics::EnergyLedger;
use crate::error::{Error, Result};
use crate::galerkin::{append_window, assemble, mass_matrix, GalerkinState, LinearWindow, ModelLaws, WindowSolution};
use crate::transport::{advect_density, DensitySnapshot, VelocityTrajectory};

/// Knots per window, including the start.
pub const KNOTS: usize = 5;

/// Relative slack of the energy-inequality monitor.
pub const ENERGY_MONITOR_SLACK: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowConfig {
    pub dt_window: f64,
    pub picard_tol: f64,
    pub picard_max_iter: usize,
    pub relaxation: f64,
    pub ode_tol: f64,
    /// Maximum number of successive window halvings after a failure.
    pub max_halving: u32,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            dt_window: 0.1,
            picard_tol: 1e-9,
            picard_max_iter: 30,
            relaxation: 1.0,
            ode_tol: 1e-9,
            max_halving: 6,
        }
    }
}

impl WindowConfig {
    pub fn validate(&self) -> Result<()> {
        let mut bad = Vec::new();
        if !(self.dt_window > 0.0 && self.dt_window.is_finite()) {
            bad.push(format!("dt_window must be positive, got {}", self.dt_window));
        }
        if !(self.picard_tol > 0.0) {
            bad.push(format!("picard_tol must be positive, got {}", self.picard_tol));
        }
        if self.picard_max_iter < 1 {
            bad.push("picard_max_iter must be at least 1".into());
        }
        if !(self.relaxation > 0.0 && self.relaxation <= 1.0) {
            bad.push(format!("relaxation must lie in (0, 1], got {}", self.relaxation));
        }
        if !(self.ode_tol > 0.0) {
            bad.push(format!("ode_tol must be positive, got {}", self.ode_tol));
        }
        if bad.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(bad))
        }
    }
}

/// Everything fixed for one simulation.
#[derive(Debug, Clone)]
pub struct Problem {
    pub basis: SharedBasis,
    pub laws: ModelLaws,
    pub initial: GalerkinState,
    /// Density bounds `[ρ̲, C₀]` asserted at every window boundary.
    pub rho_bounds: (f64, f64),
    pub t_final: f64,
}

/// Diagnostics of one accepted (or finally failed) window.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WindowReport {
    pub t_start: f64,
    pub t_end: f64,
    /// Number of halvings that produced this window.
    pub depth: u32,
    pub iterations: usize,
    pub residuals: Vec<f64>,
    pub ode_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FailureReport {
    pub t: f64,
    pub message: String,
    pub residuals: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SolutionTrajectory {
    /// Initial state followed by four knot states per window.
    pub states: Vec<GalerkinState>,
    pub ledger: EnergyLedger,
    pub picard_history: Vec<WindowReport>,
    /// Ledger rows breaking `E(t) + D(t) ≤ E(0)(1 + 10⁻⁶)`.
    pub energy_violations: usize,
    pub failure: Option<FailureReport>,
}

impl SolutionTrajectory {
    pub fn final_state(&self) -> &GalerkinState {
        self.states.last().expect("trajectory holds the initial state")
    }

    pub fn completed(&self) -> bool {
        self.failure.is_none()
    }

    /// States at window boundaries only.
    pub fn boundary_states(&self) -> impl Iterator<Item = &GalerkinState> {
        self.states.iter().step_by(KNOTS - 1)
    }
}

/// Knot values of `(α, β)` over one window.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowIterate {
    pub times: Vec<f64>,
    pub alphas: Vec<Vec<f64>>,
    pub betas: Vec<Vec<f64>>,
}

impl WindowIterate {
    pub fn constant(state: &GalerkinState, dt: f64) -> Self {
        let times = knot_times(state.t, dt);
        Self {
            alphas: vec![state.alpha.clone(); KNOTS],
            betas: vec![state.beta.clone(); KNOTS],
            times,
        }
    }

    fn relax(&self, target: &WindowIterate, omega: f64) -> Self {
        let mix = |a: &[Vec<f64>], b: &[Vec<f64>]| -> Vec<Vec<f64>> {
            a.iter()
                .zip(b)
                .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (1.0 - omega) * p + omega * q).collect())
                .collect()
        };
        Self {
            times: self.times.clone(),
            alphas: mix(&self.alphas, &target.alphas),
            betas: mix(&self.betas, &target.betas),
        }
    }
}

fn knot_times(t0: f64, dt: f64) -> Vec<f64> {
    (0..KNOTS)
        .map(|q| if q == KNOTS - 1 { t0 + dt } else { t0 + dt * q as f64 / (KNOTS - 1) as f64 })
        .collect()
}

/// Relative L²-in-time distance of `new` from `old` (Simpson weights).
pub fn picard_residual(new: &WindowIterate, old: &WindowIterate) -> f64 {
    const W: [f64; KNOTS] = [1.0, 4.0, 2.0, 4.0, 1.0];
    let (mut diff, mut norm) = (0.0, 0.0);
    for q in 0..KNOTS {
        let pairs = new.alphas[q].iter().zip(&old.alphas[q]).chain(new.betas[q].iter().zip(&old.betas[q]));
        for (a, b) in pairs {
            diff += W[q] * (a - b) * (a - b);
            norm += W[q] * a * a;
        }
    }
    if diff == 0.0 {
        0.0
    } else if norm == 0.0 {
        f64::INFINITY
    } else {
        (diff / norm).sqrt()
    }
}

/// Result of one application of the window map.
pub struct FnOutput {
    pub iterate: WindowIterate,
    pub velocity: VelocityTrajectory,
    pub rho_mid: DensitySnapshot,
    pub rho_end: DensitySnapshot,
    pub window: LinearWindow,
    pub solution: WindowSolution,
}

/// One application of `F`: transport, assemble at the midpoint, integrate.
pub fn apply_fn(
    input: &WindowIterate,
    start: &GalerkinState,
    mass_start: &nalgebra::DMatrix<f64>,
    problem: &Problem,
    cfg: &WindowConfig,
) -> Result<FnOutput> {
    let basis = &problem.basis;
    let t0 = input.times[0];
    let t1 = input.times[KNOTS - 1];
    let mid = KNOTS / 2;
    let velocity = VelocityTrajectory::new(basis.clone(), input.times.clone(), input.alphas.clone())?;
    let rho_mid = advect_density(&start.rho, &velocity, input.times[mid])?;
    let rho_end = advect_density(&start.rho, &velocity, t1)?;
    check_bounds(&rho_end, problem.rho_bounds)?;
    let vbar = basis.synthesize(&input.alphas[mid])?;
    let hbar = basis.synthesize(&input.betas[mid])?;
    let system = assemble(&rho_mid.field, &vbar, &hbar, basis, &problem.laws)?;
    let mass_end = mass_matrix(&rho_end.field, basis)?;
    let window = LinearWindow::build(system, mass_start, &mass_end, t0, t1 - t0)?;
    let solution = window.propagate(&start.alpha, &start.beta, &input.times[1..], cfg.ode_tol)?;
    let mut alphas = vec![start.alpha.clone()];
    alphas.extend(solution.alphas.iter().cloned());
    let mut betas = vec![start.beta.clone()];
    betas.extend(solution.betas.iter().cloned());
    Ok(FnOutput {
        iterate: WindowIterate {
            times: input.times.clone(),
            alphas,
            betas,
        },
        velocity,
        rho_mid,
        rho_end,
        window,
        solution,
    })
}

fn check_bounds(rho: &DensitySnapshot, (lo, hi): (f64, f64)) -> Result<()> {
    let (a, b) = (rho.min(), rho.max());
    if a < lo || b > hi {
        return Err(Error::DensityOutOfRange {
            value: if a < lo { a } else { b },
            lower: lo,
            upper: hi,
        });
    }
    Ok(())
}

/// A converged window: its knot states and the operator that produced them.
pub struct SolvedWindow {
    pub states: Vec<GalerkinState>,
    pub window: LinearWindow,
    pub solution: WindowSolution,
    pub residuals: Vec<f64>,
}

/// Picard iteration on one window of length `dt`.
pub fn solve_window(state: &GalerkinState, dt: f64, problem: &Problem, cfg: &WindowConfig) -> Result<SolvedWindow> {
    let mass_start = mass_matrix(&state.rho.field, &problem.basis)?;
    let mut x = WindowIterate::constant(state, dt);
    let mut history: Vec<f64> = Vec::new();
    let fail = |reason: String, history: &[f64]| Error::PicardFailure {
        t_start: state.t,
        t_end: state.t + dt,
        reason,
        history: history.to_vec(),
    };
    for iter in 1..=cfg.picard_max_iter {
        let out = apply_fn(&x, state, &mass_start, problem, cfg)?;
        let r = picard_residual(&out.iterate, &x);
        history.push(r);
        if !r.is_finite() && r != f64::INFINITY {
            return Err(fail("non-finite residual".into(), &history));
        }
        if r <= cfg.picard_tol {
            return Ok(finish(state, out, history, &problem.rho_bounds)?);
        }
        if iter >= 2 && r > history[iter - 2] {
            return Err(fail(format!("residual increased at iteration {iter}"), &history));
        }
        x = x.relax(&out.iterate, cfg.relaxation);
    }
    Err(fail(
        format!("no convergence in {} iterations", cfg.picard_max_iter),
        &history,
    ))
}

fn finish(state: &GalerkinState, out: FnOutput, residuals: Vec<f64>, bounds: &(f64, f64)) -> Result<SolvedWindow> {
    let t = &out.iterate.times;
    let q1 = advect_density(&state.rho, &out.velocity, t[1])?;
    let q3 = advect_density(&state.rho, &out.velocity, t[3])?;
    let rhos = [q1, out.rho_mid, q3, out.rho_end];
    for r in &rhos {
        check_bounds(r, *bounds)?;
    }
    let states = rhos
        .into_iter()
        .enumerate()
        .map(|(k, rho)| GalerkinState {
            t: t[k + 1],
            alpha: out.iterate.alphas[k + 1].clone(),
            beta: out.iterate.betas[k + 1].clone(),
            rho,
        })
        .collect();
    Ok(SolvedWindow {
        states,
        window: out.window,
        solution: out.solution,
        residuals,
    })
}

fn retryable(e: &Error) -> bool {
    matches!(
        e,
        Error::PicardFailure { .. } | Error::StepSizeUnderflow { .. } | Error::NonFinite(_)
    )
}

/// Sink for accepted windows.
struct March<'a> {
    problem: &'a Problem,
    cfg: &'a WindowConfig,
    traj: SolutionTrajectory,
}

impl March<'_> {
    /// Solve `[state.t, state.t + dt]`, halving on retryable failures.
    fn advance(&mut self, dt: f64, depth: u32) -> Result<()> {
        let state = self.traj.final_state().clone();
        match solve_window(&state, dt, self.problem, self.cfg) {
            Ok(w) => {
                self.accept(&state, w, dt, depth);
                Ok(())
            }
            Err(e) if retryable(&e) && depth < self.cfg.max_halving => {
                self.advance(0.5 * dt, depth + 1)?;
                self.advance(0.5 * dt, depth + 1)
            }
            Err(e) => Err(e),
        }
    }

    fn accept(&mut self, start: &GalerkinState, w: SolvedWindow, dt: f64, depth: u32) {
        append_window(&mut self.traj.ledger, &w.window, start, &w.solution);
        self.traj.picard_history.push(WindowReport {
            t_start: start.t,
            t_end: start.t + dt,
            depth,
            iterations: w.residuals.len(),
            residuals: w.residuals,
            ode_steps: w.solution.stats.accepted + w.solution.stats.rejected,
        });
        self.traj.states.extend(w.states);
    }
}

/// March windows from the initial state to `t_final`.
///
/// A window that still fails after all halvings ends the march; the partial
/// trajectory is returned with a failure report.
pub fn run_simulation(problem: &Problem, cfg: &WindowConfig) -> Result<SolutionTrajectory> {
    cfg.validate()?;
    if problem.initial.alpha.len() != problem.basis.len() || problem.initial.beta.len() != problem.basis.len() {
        return Err(Error::LengthMismatch {
            expected: problem.basis.len(),
            got: problem.initial.alpha.len(),
        });
    }
    check_bounds(&problem.initial.rho, problem.rho_bounds)?;
    let mut march = March {
        problem,
        cfg,
        traj: SolutionTrajectory {
            states: vec![problem.initial.clone()],
            ledger: EnergyLedger::default(),
            picard_history: Vec::new(),
            energy_violations: 0,
            failure: None,
        },
    };
    let t_end = problem.t_final;
    let eps = 1e-12 * t_end.abs().max(1.0);
    while march.traj.final_state().t < t_end - eps {
        let t = march.traj.final_state().t;
        let dt = cfg.dt_window.min(t_end - t);
        if let Err(e) = march.advance(dt, 0) {
            let residuals = match &e {
                Error::PicardFailure { history, .. } => history.clone(),
                _ => Vec::new(),
            };
            march.traj.failure = Some(FailureReport {
                t: march.traj.final_state().t,
                message: e.to_string(),
                residuals,
            });
            break;
        }
    }
    let mut traj = march.traj;
    if traj.ledger.is_empty() {
        let s = &problem.initial;
        let m = mass_matrix(&s.rho.field, &problem.basis)?;
        let a = nalgebra::DVector::from_column_slice(&s.alpha);
        traj.ledger
            .push(s.t, 0.5 * a.dot(&(m * &a)), crate::galerkin::magnetic_energy(&s.beta), 0.0, 0.0);
    }
    traj.energy_violations = traj.ledger.inequality_violations(ENERGY_MONITOR_SLACK);
    Ok(traj)
}
