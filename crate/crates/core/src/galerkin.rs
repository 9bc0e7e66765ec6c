//! Linearized Galerkin system: assembly and time integration of `(α, β)`.
//!
//! Every matrix entry is an integral of a weight field against a product of
//! two trigonometric modes. Writing the product as a sum of two plane waves
//! turns each entry into a lookup in the partial discrete Fourier transform of
//! the weight, `Ŵ(q) = ΔV Σ_x w(x) e^{iκ q·x}` for `q ∈ [-2K, 2K]³`. This is
//! exactly the grid trapezoidal rule, just reorganized.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::basis::{Basis, Phase};
use crate::dense::{CholeskyRows, RowMajor};
use crate::error::{Error, Result};
use crate::field::{GridField, Rank, TorusDomain};
use crate::material::{eval_law, MaterialLaw};
use crate::ode::{integrate, OdeOptions, OdeStats};
use crate::par;
use crate::transport::DensitySnapshot;

/// Material laws and the Hall coefficient `h ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelLaws {
    pub viscosity: MaterialLaw,
    pub conductivity: MaterialLaw,
    pub hall: f64,
}

impl ModelLaws {
    pub fn new(viscosity: MaterialLaw, conductivity: MaterialLaw, hall: f64) -> Result<Self> {
        if !(hall >= 0.0 && hall.is_finite()) {
            return Err(Error::InvalidArgument(format!("Hall coefficient must be >= 0, got {hall}")));
        }
        Ok(Self {
            viscosity,
            conductivity,
            hall,
        })
    }

    /// Lower density bound the laws are certified for.
    pub fn rho_lower(&self) -> f64 {
        self.viscosity.density_range.0.max(self.conductivity.density_range.0)
    }
}

/// Coefficients and density at one instant.
#[derive(Debug, Clone)]
pub struct GalerkinState {
    pub t: f64,
    pub alpha: Vec<f64>,
    pub beta: Vec<f64>,
    pub rho: DensitySnapshot,
}

impl GalerkinState {
    pub fn zero(basis: &Basis, rho: DensitySnapshot) -> Self {
        Self {
            t: rho.time,
            alpha: vec![0.0; basis.len()],
            beta: vec![0.0; basis.len()],
            rho,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.alpha.iter().chain(&self.beta).all(|v| v.is_finite())
    }
}

/// The five blocks of the linearized system (the viscous, advective, Hall and
/// resistive parts are kept separate).
///
/// Entry `(i, j)` pairs trial mode `i` with test mode `j`.
#[derive(Debug, Clone)]
pub struct AssembledSystem {
    /// `∫ρ Θ_i·Θ_j`
    pub mass_u: DMatrix<f64>,
    /// `∫ρ (v̄·∇Θ_i)·Θ_j`
    pub advection: DMatrix<f64>,
    /// `∫2μ(ρ) d(Θ_i):d(Θ_j)`
    pub viscous: DMatrix<f64>,
    /// `-∫(curl Γ_i × H̄)·Θ_j`, the sign it carries in the velocity equation
    pub lorentz: DMatrix<f64>,
    /// `h ∫(curl Γ_i × H̄)/ρ · curl Γ_j`
    pub hall: DMatrix<f64>,
    /// `∫ curl Γ_i · curl Γ_j / σ(ρ)`
    pub resistive: DMatrix<f64>,
    /// `∫(H̄ × Θ_i)·curl Γ_j`
    pub emf: DMatrix<f64>,
}

impl AssembledSystem {
    /// Skew part `½(A - Aᵀ)` of the advection block.
    pub fn advection_skew(&self) -> DMatrix<f64> {
        (&self.advection - self.advection.transpose()) * 0.5
    }

    /// Advection plus viscous block.
    pub fn advect_visc(&self) -> DMatrix<f64> {
        &self.advection + &self.viscous
    }

    /// Hall plus resistive block.
    pub fn hall_resist(&self) -> DMatrix<f64> {
        &self.hall + &self.resistive
    }

    pub fn len(&self) -> usize {
        self.mass_u.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Partial DFT of a scalar weight on the cube `[-R, R]³` of integer wavevectors.
struct Spectrum {
    radius: i32,
    width: usize,
    data: Vec<Complex64>,
}

impl Spectrum {
    fn new(domain: &TorusDomain, values: &[f64], radius: i32) -> Self {
        let m = domain.grid_size;
        let w = (2 * radius + 1) as usize;
        let kappa = domain.base_wavenumber();
        let h = domain.spacing();
        let table: Vec<Vec<Complex64>> = (-radius..=radius)
            .map(|q| {
                (0..m)
                    .map(|j| {
                        let r = (q as i64 * j as i64).rem_euclid(m as i64) as f64;
                        Complex64::from_polar(1.0, kappa * r * h)
                    })
                    .collect()
            })
            .collect();
        // z, then y, then x
        let a = par::map_range(m * m, |ij| {
            let row = &values[ij * m..(ij + 1) * m];
            (0..w)
                .map(|qz| row.iter().zip(&table[qz]).map(|(v, e)| e * *v).sum::<Complex64>())
                .collect::<Vec<_>>()
        });
        let b = par::map_range(m, |i| {
            let mut out = vec![Complex64::new(0.0, 0.0); w * w];
            for j in 0..m {
                let line = &a[i * m + j];
                for qy in 0..w {
                    let e = table[qy][j];
                    for qz in 0..w {
                        out[qy * w + qz] += e * line[qz];
                    }
                }
            }
            out
        });
        let dv = domain.cell_volume();
        let data = par::map_range(w * w * w, |q| {
            let qx = q / (w * w);
            let rest = q % (w * w);
            let mut s = Complex64::new(0.0, 0.0);
            for (i, bi) in b.iter().enumerate() {
                s += table[qx][i] * bi[rest];
            }
            s * dv
        });
        Self { radius, width: w, data }
    }

    #[inline]
    fn index(&self, q: [i32; 3]) -> usize {
        let r = self.radius;
        let w = self.width;
        ((q[0] + r) as usize * w + (q[1] + r) as usize) * w + (q[2] + r) as usize
    }
}

#[derive(Clone, Copy)]
struct ModeInfo {
    k: [i32; 3],
    kf: [f64; 3],
    e: [f64; 3],
    phase: Phase,
    /// `(sign, phase)` of the derivative of the trig factor
    dphase: (f64, Phase),
    /// curl image index and factor
    curl: (usize, f64),
}

fn mode_table(basis: &Basis) -> Vec<ModeInfo> {
    basis
        .modes()
        .iter()
        .enumerate()
        .map(|(i, m)| ModeInfo {
            k: m.wavevector,
            kf: m.wavevector.map(|c| c as f64),
            e: m.polarization,
            phase: m.phase,
            dphase: match m.phase {
                Phase::Cosine => (-1.0, Phase::Sine),
                Phase::Sine => (1.0, Phase::Cosine),
            },
            curl: basis.curl_index(i),
        })
        .collect()
}

#[inline]
fn dot(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

#[inline]
fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Indices of `Ŵ(k_a - k_b)` and `Ŵ(k_a + k_b)`.
#[inline]
fn pair_index(sp: &Spectrum, ka: [i32; 3], kb: [i32; 3]) -> (usize, usize) {
    (
        sp.index([ka[0] - kb[0], ka[1] - kb[1], ka[2] - kb[2]]),
        sp.index([ka[0] + kb[0], ka[1] + kb[1], ka[2] + kb[2]]),
    )
}

/// `∫ w φ_a(θ_a) φ_b(θ_b)` from `d = Ŵ(k_a - k_b)` and `s = Ŵ(k_a + k_b)`.
#[inline]
fn pair_value(d: Complex64, s: Complex64, pa: Phase, pb: Phase) -> f64 {
    match (pa, pb) {
        (Phase::Cosine, Phase::Cosine) => 0.5 * (d.re + s.re),
        (Phase::Sine, Phase::Sine) => 0.5 * (d.re - s.re),
        (Phase::Sine, Phase::Cosine) => 0.5 * (s.im + d.im),
        (Phase::Cosine, Phase::Sine) => 0.5 * (s.im - d.im),
    }
}

fn rows_to_matrix(n: usize, rows: Vec<Vec<f64>>) -> DMatrix<f64> {
    DMatrix::from_row_iterator(n, n, rows.into_iter().flatten())
}

struct Assembler<'a> {
    basis: &'a Basis,
    modes: Vec<ModeInfo>,
    n2: f64,
    kappa: f64,
}

impl<'a> Assembler<'a> {
    fn new(basis: &'a Basis) -> Self {
        let n = basis.modes()[0].norm_factor;
        Self {
            basis,
            modes: mode_table(basis),
            n2: n * n,
            kappa: basis.domain().base_wavenumber(),
        }
    }

    fn spectrum(&self, values: &[f64]) -> Spectrum {
        Spectrum::new(self.basis.domain(), values, 2 * self.basis.cutoff() as i32)
    }

    fn len(&self) -> usize {
        self.modes.len()
    }

    /// `∫ w Θ_a·Θ_b`
    fn weighted_l2(&self, sp: &Spectrum, a: usize, b: usize) -> f64 {
        let (ma, mb) = (&self.modes[a], &self.modes[b]);
        let ee = dot(ma.e, mb.e);
        if ee == 0.0 {
            return 0.0;
        }
        let (d, s) = pair_index(sp, ma.k, mb.k);
        self.n2 * ee * pair_value(sp.data[d], sp.data[s], ma.phase, mb.phase)
    }

    /// `∫ w⃗·(Θ_b × Θ_a)`
    fn triple(&self, sp: &[Spectrum; 3], a: usize, b: usize) -> f64 {
        let (ma, mb) = (&self.modes[a], &self.modes[b]);
        let c = cross(mb.e, ma.e);
        let (d, s) = pair_index(&sp[0], ma.k, mb.k);
        let mut acc = 0.0;
        for (comp, spc) in sp.iter().enumerate() {
            if c[comp] != 0.0 {
                acc += c[comp] * pair_value(spc.data[d], spc.data[s], ma.phase, mb.phase);
            }
        }
        self.n2 * acc
    }

    fn matrix<F: Fn(usize, usize) -> f64 + Sync + Send>(&self, f: F) -> DMatrix<f64> {
        let n = self.len();
        rows_to_matrix(n, par::map_range(n, |i| (0..n).map(|j| f(i, j)).collect()))
    }

    fn mass(&self, sp: &Spectrum) -> DMatrix<f64> {
        self.matrix(|i, j| self.weighted_l2(sp, i, j))
    }

    fn viscous(&self, mu: &Spectrum) -> DMatrix<f64> {
        let c = self.n2 * self.kappa * self.kappa;
        self.matrix(|i, j| {
            let (mi, mj) = (&self.modes[i], &self.modes[j]);
            let geo = dot(mi.kf, mj.kf) * dot(mi.e, mj.e) + dot(mi.kf, mj.e) * dot(mi.e, mj.kf);
            if geo == 0.0 {
                return 0.0;
            }
            let (d, s) = pair_index(mu, mi.k, mj.k);
            let v = pair_value(mu.data[d], mu.data[s], mi.dphase.1, mj.dphase.1);
            c * geo * mi.dphase.0 * mj.dphase.0 * v
        })
    }

    fn advection(&self, rho_v: &[Spectrum; 3]) -> DMatrix<f64> {
        let c = self.n2 * self.kappa;
        self.matrix(|i, j| {
            let (mi, mj) = (&self.modes[i], &self.modes[j]);
            let ee = dot(mi.e, mj.e);
            if ee == 0.0 {
                return 0.0;
            }
            let (d, s) = pair_index(&rho_v[0], mi.k, mj.k);
            let mut acc = 0.0;
            for a in 0..3 {
                if mi.k[a] != 0 {
                    acc += mi.kf[a] * pair_value(rho_v[a].data[d], rho_v[a].data[s], mi.dphase.1, mj.phase);
                }
            }
            c * ee * mi.dphase.0 * acc
        })
    }
}

fn check_inputs(rho: &GridField, vbar: &GridField, hbar: &GridField, basis: &Basis) -> Result<()> {
    let d = basis.domain();
    for (name, f, r) in [("rho", rho, Rank::Scalar), ("vbar", vbar, Rank::Vector3), ("Hbar", hbar, Rank::Vector3)] {
        if f.domain() != d {
            return Err(Error::DomainMismatch(format!("{name} is not on the basis grid")));
        }
        if f.rank() != r {
            return Err(Error::InvalidArgument(format!("{name} has rank {:?}, expected {r:?}", f.rank())));
        }
    }
    Ok(())
}

fn check_density(rho: &GridField, lower: f64) -> Result<()> {
    let lo = rho.min();
    if !(lo >= lower && lo > 0.0) {
        return Err(Error::DensityOutOfRange {
            value: lo,
            lower,
            upper: rho.max(),
        });
    }
    Ok(())
}

/// Weighted mass matrix `∫ρ Θ_i·Θ_j`.
pub fn mass_matrix(rho: &GridField, basis: &Basis) -> Result<DMatrix<f64>> {
    if rho.domain() != basis.domain() || rho.rank() != Rank::Scalar {
        return Err(Error::DomainMismatch("density must be a scalar on the basis grid".into()));
    }
    let asm = Assembler::new(basis);
    Ok(asm.mass(&asm.spectrum(rho.data())))
}

fn component_values(f: &GridField, c: usize) -> Vec<f64> {
    f.data().iter().skip(c).step_by(3).copied().collect()
}

/// Assemble every block at frozen `(ρ, v̄, H̄)`.
pub fn assemble(
    rho: &GridField,
    vbar: &GridField,
    hbar: &GridField,
    basis: &Basis,
    laws: &ModelLaws,
) -> Result<AssembledSystem> {
    check_inputs(rho, vbar, hbar, basis)?;
    check_density(rho, laws.rho_lower())?;
    let mu = eval_law(&laws.viscosity, rho)?;
    let sigma = eval_law(&laws.conductivity, rho)?;
    let asm = Assembler::new(basis);
    let r = rho.data();

    let sp_rho = asm.spectrum(r);
    let sp_mu = asm.spectrum(mu.data());
    let inv_sigma: Vec<f64> = sigma.data().iter().map(|s| 1.0 / s).collect();
    let sp_isig = asm.spectrum(&inv_sigma);
    let vec_spectra = |f: &dyn Fn(usize) -> Vec<f64>| -> [Spectrum; 3] { std::array::from_fn(|c| asm.spectrum(&f(c))) };
    let sp_rv = vec_spectra(&|c| component_values(vbar, c).iter().zip(r).map(|(v, p)| v * p).collect());
    let sp_h = vec_spectra(&|c| component_values(hbar, c));
    let sp_hr = vec_spectra(&|c| component_values(hbar, c).iter().zip(r).map(|(h, p)| h / p).collect());

    let mass_u = asm.mass(&sp_rho);
    let advection = asm.advection(&sp_rv);
    let viscous = asm.viscous(&sp_mu);
    let modes = &asm.modes;
    let lorentz = asm.matrix(|i, j| {
        let (p, c) = modes[i].curl;
        -c * asm.triple(&sp_h, p, j)
    });
    let emf = asm.matrix(|i, j| {
        let (q, c) = modes[j].curl;
        c * asm.triple(&sp_h, q, i)
    });
    let h = laws.hall;
    let hall = if h == 0.0 {
        DMatrix::zeros(asm.len(), asm.len())
    } else {
        asm.matrix(|i, j| {
            let (p, ci) = modes[i].curl;
            let (q, cj) = modes[j].curl;
            h * ci * cj * asm.triple(&sp_hr, p, q)
        })
    };
    let resistive = asm.matrix(|i, j| {
        let (p, ci) = modes[i].curl;
        let (q, cj) = modes[j].curl;
        ci * cj * asm.weighted_l2(&sp_isig, p, q)
    });
    Ok(AssembledSystem {
        mass_u,
        advection,
        viscous,
        lorentz,
        hall,
        resistive,
        emf,
    })
}

/// Time-integration data for one window: the evolution matrices and the
/// linearly drifting mass `M(t) = M_mid + (s - ½) ΔM`, `s = (t - t0)/Δt`.
pub struct LinearWindow {
    n: usize,
    t0: f64,
    dt: f64,
    f_alpha: RowMajor,
    g_alpha: RowMajor,
    f_beta: RowMajor,
    g_beta: RowMajor,
    viscous: RowMajor,
    resistive: RowMajor,
    mass_mid: DMatrix<f64>,
    mass_mid_rows: RowMajor,
    mass_delta: Option<(DMatrix<f64>, RowMajor)>,
    chol_mid: CholeskyRows,
}

impl LinearWindow {
    /// Frozen mass: the system's own `mass_u` throughout.
    pub fn frozen(system: AssembledSystem, t0: f64, dt: f64) -> Result<Self> {
        let mass = system.mass_u.clone();
        Self::build(system, &mass, &mass, t0, dt)
    }

    /// Mass drifting linearly from `mass_start` to `mass_end` over `[t0, t0 + dt]`.
    pub fn build(
        system: AssembledSystem,
        mass_start: &DMatrix<f64>,
        mass_end: &DMatrix<f64>,
        t0: f64,
        dt: f64,
    ) -> Result<Self> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::InvalidArgument(format!("window length must be positive, got {dt}")));
        }
        let n = system.len();
        let delta = mass_end - mass_start;
        let moving = delta.iter().any(|v| *v != 0.0);
        let mass_mid = (mass_start + mass_end) * 0.5;
        let chol_mid = CholeskyRows::new(mass_mid.clone())
            .ok_or_else(|| Error::NonFinite("mass matrix is not positive definite".into()))?;
        let skew = system.advection_skew();
        let mut f_alpha = -(skew + &system.viscous).transpose();
        if moving {
            f_alpha -= &delta * (0.5 / dt);
        }
        let rows = |m: &DMatrix<f64>| RowMajor::from_matrix(m);
        Ok(Self {
            n,
            t0,
            dt,
            f_alpha: rows(&f_alpha),
            g_alpha: rows(&-system.lorentz.transpose()),
            f_beta: rows(&-(&system.hall + &system.resistive).transpose()),
            g_beta: rows(&-system.emf.transpose()),
            viscous: rows(&system.viscous),
            resistive: rows(&system.resistive),
            mass_mid_rows: rows(&mass_mid),
            mass_mid,
            mass_delta: moving.then(|| {
                let r = rows(&delta);
                (delta, r)
            }),
            chol_mid,
        })
    }

    fn shift(&self, t: f64) -> f64 {
        (t - self.t0) / self.dt - 0.5
    }

    /// Mass matrix at time `t`.
    pub fn mass_at(&self, t: f64) -> DMatrix<f64> {
        match &self.mass_delta {
            Some((d, _)) => &self.mass_mid + d * self.shift(t),
            None => self.mass_mid.clone(),
        }
    }

    /// Solve `M(t) x = r` in place.
    ///
    /// Fixed-point sweep `x ← M_mid⁻¹ (r - s ΔM x)`; the drift over one window
    /// is small, so a few sweeps reach round-off. A direct factorization of
    /// `M(t)` is the fallback when the sweep stalls.
    fn solve_mass(&self, t: f64, r: &mut [f64]) {
        let rhs = r.to_vec();
        self.chol_mid.solve_mut(r);
        let Some((_, delta)) = &self.mass_delta else {
            return;
        };
        let shift = self.shift(t);
        if shift == 0.0 {
            return;
        }
        let mut work = vec![0.0; self.n];
        let mut last = f64::INFINITY;
        for _ in 0..60 {
            work.copy_from_slice(&rhs);
            delta.gemv(-shift, r, 1.0, &mut work);
            self.chol_mid.solve_mut(&mut work);
            let step = work.iter().zip(r.iter()).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            r.copy_from_slice(&work);
            let scale = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if step <= 4e-15 * scale {
                return;
            }
            if step > 0.5 * last {
                // stagnation at round-off is convergence
                if step <= 1e-12 * scale {
                    return;
                }
                break;
            }
            last = step;
        }
        if let Some(ch) = CholeskyRows::new(self.mass_at(t)) {
            r.copy_from_slice(&rhs);
            ch.solve_mut(r);
        }
    }

    /// Right-hand side of the augmented system `[α, β, D_visc, D_resist]`.
    fn rhs(&self, t: f64, y: &[f64], dy: &mut [f64]) {
        let n = self.n;
        let (a, b) = (&y[..n], &y[n..2 * n]);
        let (da, rest) = dy.split_at_mut(n);
        let (db, dd) = rest.split_at_mut(n);
        self.f_alpha.gemv(1.0, a, 0.0, da);
        self.g_alpha.gemv(1.0, b, 1.0, da);
        self.solve_mass(t, da);
        self.f_beta.gemv(1.0, b, 0.0, db);
        self.g_beta.gemv(1.0, a, 1.0, db);
        dd[0] = self.viscous.quadratic(a);
        dd[1] = self.resistive.quadratic(b);
    }

    /// Integrate from `(α0, β0)` at `t0` through `knots`, returning the
    /// coefficients and window-local cumulative dissipation at each knot.
    pub fn propagate(&self, alpha0: &[f64], beta0: &[f64], knots: &[f64], tol: f64) -> Result<WindowSolution> {
        let n = self.n;
        if alpha0.len() != n || beta0.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                got: alpha0.len().min(beta0.len()),
            });
        }
        let mut y0 = Vec::with_capacity(2 * n + 2);
        y0.extend_from_slice(alpha0);
        y0.extend_from_slice(beta0);
        y0.extend_from_slice(&[0.0, 0.0]);
        let opts = OdeOptions::with_tol(tol);
        let (ys, stats) = integrate(|t, y, dy| self.rhs(t, y, dy), self.t0, &y0, knots, &opts)?;
        let mut sol = WindowSolution {
            times: knots.to_vec(),
            alphas: Vec::with_capacity(ys.len()),
            betas: Vec::with_capacity(ys.len()),
            d_visc: Vec::with_capacity(ys.len()),
            d_resist: Vec::with_capacity(ys.len()),
            stats,
        };
        for y in ys {
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("Galerkin state in window starting at {}", self.t0)));
            }
            sol.alphas.push(y[..n].to_vec());
            sol.betas.push(y[n..2 * n].to_vec());
            sol.d_visc.push(y[2 * n]);
            sol.d_resist.push(y[2 * n + 1]);
        }
        Ok(sol)
    }

    /// `½ αᵀ M(t) α`
    pub fn kinetic_energy(&self, t: f64, alpha: &[f64]) -> f64 {
        let mid = self.mass_mid_rows.quadratic(alpha);
        let drift = match &self.mass_delta {
            Some((_, d)) => self.shift(t) * d.quadratic(alpha),
            None => 0.0,
        };
        0.5 * (mid + drift)
    }
}

#[derive(Debug, Clone)]
pub struct WindowSolution {
    pub times: Vec<f64>,
    pub alphas: Vec<Vec<f64>>,
    pub betas: Vec<Vec<f64>>,
    pub d_visc: Vec<f64>,
    pub d_resist: Vec<f64>,
    pub stats: OdeStats,
}

/// Advance `state` by `dt` with the mass frozen at `system.mass_u`.
pub fn step_linear(system: &AssembledSystem, state: &GalerkinState, dt: f64, tol: f64) -> Result<GalerkinState> {
    let win = LinearWindow::frozen(system.clone(), state.t, dt)?;
    let sol = win.propagate(&state.alpha, &state.beta, &[state.t + dt], tol)?;
    Ok(GalerkinState {
        t: state.t + dt,
        alpha: sol.alphas[0].clone(),
        beta: sol.betas[0].clone(),
        rho: DensitySnapshot {
            time: state.t + dt,
            field: state.rho.field.clone(),
        },
    })
}

/// `½|β|²`
pub fn magnetic_energy(beta: &[f64]) -> f64 {
    0.5 * beta.iter().map(|b| b * b).sum::<f64>()
}

/// Append the knot rows of one solved window to `ledger`; the first window
/// also records its initial state.
pub fn append_window(
    ledger: &mut crate::diagnostics::EnergyLedger,
    win: &LinearWindow,
    start: &GalerkinState,
    sol: &WindowSolution,
) {
    if ledger.is_empty() {
        ledger.push(start.t, win.kinetic_energy(start.t, &start.alpha), magnetic_energy(&start.beta), 0.0, 0.0);
    }
    let (dv, dr) = ledger.cumulative();
    for q in 0..sol.times.len() {
        let t = sol.times[q];
        ledger.push(
            t,
            win.kinetic_energy(t, &sol.alphas[q]),
            magnetic_energy(&sol.betas[q]),
            dv + sol.d_visc[q],
            dr + sol.d_resist[q],
        );
    }
}

/// Energy ledger of consecutive windows `(operator, initial state, solution)`.
pub fn energy_balance(
    windows: &[(&LinearWindow, &GalerkinState, &WindowSolution)],
) -> crate::diagnostics::EnergyLedger {
    let mut ledger = crate::diagnostics::EnergyLedger::default();
    for (win, start, sol) in windows {
        append_window(&mut ledger, win, start, sol);
    }
    ledger
}
