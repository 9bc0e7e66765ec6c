//! Energy ledger, algebraic cancellation checks, weak-form residuals and
//! divergence diagnostics.

use serde::Serialize;

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::field::{inner_product, GridField, Rank};
use crate::fixedpoint::SolutionTrajectory;
use crate::galerkin::{GalerkinState, ModelLaws};
use crate::material::eval_law;

/// Time series of energies and cumulative dissipation.
///
/// `residual = E(t) + D_visc(t) + D_resist(t) - E(0)`.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EnergyLedger {
    pub times: Vec<f64>,
    pub e_kin: Vec<f64>,
    pub e_mag: Vec<f64>,
    pub d_visc: Vec<f64>,
    pub d_resist: Vec<f64>,
    pub residual: Vec<f64>,
}

impl EnergyLedger {
    pub fn push(&mut self, t: f64, e_kin: f64, e_mag: f64, d_visc: f64, d_resist: f64) {
        let e0 = if self.times.is_empty() {
            e_kin + e_mag
        } else {
            self.initial_energy()
        };
        self.times.push(t);
        self.e_kin.push(e_kin);
        self.e_mag.push(e_mag);
        self.d_visc.push(d_visc);
        self.d_resist.push(d_resist);
        self.residual.push(e_kin + e_mag + d_visc + d_resist - e0);
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn initial_energy(&self) -> f64 {
        self.e_kin.first().copied().unwrap_or(0.0) + self.e_mag.first().copied().unwrap_or(0.0)
    }

    pub fn total_energy(&self, k: usize) -> f64 {
        self.e_kin[k] + self.e_mag[k]
    }

    /// Latest cumulative `(D_visc, D_resist)`.
    pub fn cumulative(&self) -> (f64, f64) {
        (
            self.d_visc.last().copied().unwrap_or(0.0),
            self.d_resist.last().copied().unwrap_or(0.0),
        )
    }

    pub fn max_abs_residual(&self) -> f64 {
        self.residual.iter().fold(0.0, |m, r| m.max(r.abs()))
    }

    /// Rows where `E(t) + D(t) > E(0)(1 + rel)`.
    pub fn inequality_violations(&self, rel: f64) -> usize {
        let bound = self.initial_energy() * (1.0 + rel);
        (0..self.len())
            .filter(|&k| self.total_energy(k) + self.d_visc[k] + self.d_resist[k] > bound)
            .count()
    }

    /// Cumulative dissipations never decrease and every entry is finite.
    pub fn is_consistent(&self) -> bool {
        let mono = |v: &[f64]| v.windows(2).all(|w| w[1] >= w[0]);
        let finite = [&self.times, &self.e_kin, &self.e_mag, &self.d_visc, &self.d_resist, &self.residual]
            .iter()
            .all(|v| v.iter().all(|x| x.is_finite()));
        finite && mono(&self.d_visc) && mono(&self.d_resist)
    }
}

/// `(½∫ρ|u|², ½∫|B|²)` by grid quadrature.
pub fn total_energy(state: &GalerkinState, basis: &Basis) -> Result<(f64, f64)> {
    let u = basis.synthesize(&state.alpha)?;
    let b = basis.synthesize(&state.beta)?;
    Ok((
        0.5 * inner_product(&u, &u, Some(&state.rho.field))?,
        0.5 * inner_product(&b, &b, None)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CancellationReport {
    /// `max |(curl B × B)·curl B| / max(|curl B|² |B|)`
    pub pointwise: f64,
    /// `|⟨curl B × B, u⟩ - ⟨B × u, curl B⟩| / (‖curl B‖ ‖B‖ ‖u‖)`
    pub cross: f64,
    /// Lorentz power `⟨curl B × B, u⟩`
    pub lorentz_power: f64,
    /// EMF power `⟨B × u, curl B⟩`
    pub emf_power: f64,
}

#[inline]
fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

#[inline]
fn dot3(a: [f64; 3], b: [f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn vector_field(name: &str, f: &GridField) -> Result<()> {
    if f.rank() != Rank::Vector3 {
        return Err(Error::InvalidArgument(format!("{name} must be a vector field")));
    }
    Ok(())
}

/// Residuals of the two energy cancellations: the Hall triple product with a
/// repeated factor, and the balance of Lorentz work against EMF work.
pub fn check_cancellations(u: &GridField, b: &GridField) -> Result<CancellationReport> {
    vector_field("u", u)?;
    vector_field("B", b)?;
    if u.domain() != b.domain() {
        return Err(Error::DomainMismatch("u and B on different grids".into()));
    }
    let cb = b.curl()?;
    let n = u.domain().n_points();
    let (mut worst, mut scale) = (0.0f64, 0.0f64);
    let (mut lp, mut ep) = (0.0, 0.0);
    for p in 0..n {
        let (uu, bb, cc) = (u.vector_at(p), b.vector_at(p), cb.vector_at(p));
        let f = cross3(cc, bb);
        worst = worst.max(dot3(f, cc).abs());
        scale = scale.max(dot3(cc, cc) * dot3(bb, bb).sqrt());
        lp += dot3(f, uu);
        ep += dot3(cross3(bb, uu), cc);
    }
    let dv = u.domain().cell_volume();
    let (lp, ep) = (lp * dv, ep * dv);
    let norms = cb.l2_norm() * b.l2_norm() * u.l2_norm();
    Ok(CancellationReport {
        pointwise: if scale > 0.0 { worst / scale } else { 0.0 },
        cross: if norms > 0.0 { (lp - ep).abs() / norms } else { 0.0 },
        lorentz_power: lp,
        emf_power: ep,
    })
}

/// `‖div f‖ / ‖f‖` (zero for the zero field).
pub fn divergence_residual(field: &GridField) -> Result<f64> {
    vector_field("field", field)?;
    let norm = field.l2_norm();
    if norm == 0.0 {
        return Ok(0.0);
    }
    Ok(field.divergence()?.l2_norm() / norm)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum WeakEquation {
    Density,
    Momentum,
    Induction,
}

/// Space-time test functions `χ(t) ψ(x)` with `χ = (1 - t/T)^p`, `p ∈ {1, 2}`.
#[derive(Debug, Clone)]
pub struct TestBank {
    pub vector_tests: Vec<GridField>,
    pub scalar_tests: Vec<GridField>,
    pub powers: Vec<i32>,
}

impl TestBank {
    /// First six basis modes; cosine and sine of three low wavevectors.
    pub fn standard(basis: &Basis) -> Result<Self> {
        let n = basis.len();
        let vector_tests = (0..6.min(n))
            .map(|m| {
                let mut c = vec![0.0; n];
                c[m] = 1.0;
                basis.synthesize(&c)
            })
            .collect::<Result<Vec<_>>>()?;
        let d = *basis.domain();
        let kappa = d.base_wavenumber();
        let mut scalar_tests = Vec::new();
        for k in [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 1.0, 0.0]] {
            let th = move |x: [f64; 3]| kappa * (k[0] * x[0] + k[1] * x[1] + k[2] * x[2]);
            scalar_tests.push(GridField::scalar_from_fn(d, move |x| th(x).cos())?);
            scalar_tests.push(GridField::scalar_from_fn(d, move |x| th(x).sin())?);
        }
        Ok(Self {
            vector_tests,
            scalar_tests,
            powers: vec![1, 2],
        })
    }

    fn validate(&self) -> Result<()> {
        for (i, t) in self.vector_tests.iter().enumerate() {
            let r = divergence_residual(t)?;
            if r > 1e-8 {
                return Err(Error::InvalidArgument(format!(
                    "vector test function {i} is not divergence free (residual {r:.3e})"
                )));
            }
        }
        for t in &self.scalar_tests {
            if t.rank() != Rank::Scalar {
                return Err(Error::InvalidArgument("scalar test functions must be scalar".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WeakResidual {
    pub equation: WeakEquation,
    pub test_index: usize,
    pub power: i32,
    pub residual: f64,
    /// Sum of the magnitudes of the individual terms.
    pub scale: f64,
}

impl WeakResidual {
    pub fn scaled(&self) -> f64 {
        if self.scale > 0.0 {
            self.residual.abs() / self.scale
        } else {
            self.residual.abs()
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct WeakResidualTable {
    pub rows: Vec<WeakResidual>,
}

impl WeakResidualTable {
    pub fn max_abs(&self, eq: WeakEquation) -> f64 {
        self.rows.iter().filter(|r| r.equation == eq).fold(0.0, |m, r| m.max(r.residual.abs()))
    }

    pub fn max_scaled(&self, eq: WeakEquation) -> f64 {
        self.rows.iter().filter(|r| r.equation == eq).fold(0.0, |m, r| m.max(r.scaled()))
    }
}

/// Spatial integrals needed by the three weak forms at one instant.
struct KnotIntegrals {
    /// per vector test: [∫ρu·Φ, ∫ρ(u⊗u):∇Φ, ∫2μ d(u):d(Φ), ∫(curl B×B)·Φ]
    mom: Vec<[f64; 4]>,
    /// per vector test: [∫B·Ψ, ∫(u×B)·curl Ψ, ∫h(curl B×B)/ρ·curl Ψ, ∫curl B/σ·curl Ψ]
    ind: Vec<[f64; 4]>,
    /// per scalar test: [∫ρφ, ∫ρu·∇φ]
    den: Vec<[f64; 2]>,
}

struct PreparedTest {
    phi: GridField,
    grad: [[GridField; 3]; 3],
    curl: GridField,
}

fn knot_integrals(
    state: &GalerkinState,
    basis: &Basis,
    laws: &ModelLaws,
    vtests: &[PreparedTest],
    stests: &[(GridField, GridField)],
) -> Result<KnotIntegrals> {
    let u = basis.synthesize(&state.alpha)?;
    let b = basis.synthesize(&state.beta)?;
    let cb = basis.synthesize(&basis.curl_coeffs(&state.beta))?;
    let rho = state.rho.field.as_ref();
    let mu = eval_law(&laws.viscosity, rho)?;
    let sigma = eval_law(&laws.conductivity, rho)?;
    let ju = u.jacobian()?;
    let d = *basis.domain();
    let dv = d.cell_volume();
    let n = d.n_points();
    let mut mom = vec![[0.0; 4]; vtests.len()];
    let mut ind = vec![[0.0; 4]; vtests.len()];
    let mut den = vec![[0.0; 2]; stests.len()];
    for p in 0..n {
        let (uu, bb, cc) = (u.vector_at(p), b.vector_at(p), cb.vector_at(p));
        let r = rho.scalar_at(p);
        let lor = cross3(cc, bb);
        let uxb = cross3(uu, bb);
        let du: [[f64; 3]; 3] =
            std::array::from_fn(|a| std::array::from_fn(|c| 0.5 * (ju[a][c].scalar_at(p) + ju[c][a].scalar_at(p))));
        for (t, pt) in vtests.iter().enumerate() {
            let phi = pt.phi.vector_at(p);
            let cphi = pt.curl.vector_at(p);
            let mut conv = 0.0;
            let mut ddot = 0.0;
            for a in 0..3 {
                for c in 0..3 {
                    let g = pt.grad[a][c].scalar_at(p);
                    conv += uu[a] * uu[c] * g;
                    ddot += du[a][c] * 0.5 * (g + pt.grad[c][a].scalar_at(p));
                }
            }
            let m = &mut mom[t];
            m[0] += r * dot3(uu, phi);
            m[1] += r * conv;
            m[2] += 2.0 * mu.scalar_at(p) * ddot;
            m[3] += dot3(lor, phi);
            let i = &mut ind[t];
            i[0] += dot3(bb, phi);
            i[1] += dot3(uxb, cphi);
            i[2] += laws.hall * dot3(lor, cphi) / r;
            i[3] += dot3(cc, cphi) / sigma.scalar_at(p);
        }
        for (t, (phi, grad)) in stests.iter().enumerate() {
            den[t][0] += r * phi.scalar_at(p);
            den[t][1] += r * dot3(uu, grad.vector_at(p));
        }
    }
    for v in mom.iter_mut().chain(ind.iter_mut()) {
        v.iter_mut().for_each(|x| *x *= dv);
    }
    for v in den.iter_mut() {
        v.iter_mut().for_each(|x| *x *= dv);
    }
    Ok(KnotIntegrals { mom, ind, den })
}

/// Composite Simpson weights over windows of five equally spaced knots.
fn simpson_weights(times: &[f64]) -> Result<Vec<f64>> {
    let n = times.len();
    if n < 5 || (n - 1) % 4 != 0 {
        return Err(Error::InvalidArgument(format!(
            "trajectory has {n} states; expected 1 + 4 per window"
        )));
    }
    let mut w = vec![0.0; n];
    for win in 0..(n - 1) / 4 {
        let base = 4 * win;
        let h = (times[base + 4] - times[base]) / 4.0;
        for (q, c) in [1.0, 4.0, 2.0, 4.0, 1.0].iter().enumerate() {
            w[base + q] += h / 3.0 * c;
        }
    }
    Ok(w)
}

/// Evaluate the density, momentum and induction weak forms of a trajectory
/// against every test function of the bank (test functions vanish at the final time).
pub fn weak_residuals(
    traj: &SolutionTrajectory,
    basis: &Basis,
    laws: &ModelLaws,
    bank: &TestBank,
) -> Result<WeakResidualTable> {
    bank.validate()?;
    let times: Vec<f64> = traj.states.iter().map(|s| s.t).collect();
    let weights = simpson_weights(&times)?;
    let t0 = times[0];
    let span = times[times.len() - 1] - t0;
    let vtests = bank
        .vector_tests
        .iter()
        .map(|phi| {
            Ok(PreparedTest {
                grad: phi.jacobian()?,
                curl: phi.curl()?,
                phi: phi.clone(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let stests = bank
        .scalar_tests
        .iter()
        .map(|phi| Ok((phi.clone(), phi.gradient()?)))
        .collect::<Result<Vec<_>>>()?;
    let knots = traj
        .states
        .iter()
        .map(|s| knot_integrals(s, basis, laws, &vtests, &stests))
        .collect::<Result<Vec<_>>>()?;

    let mut rows = Vec::new();
    for &p in &bank.powers {
        let chi = |t: f64| (1.0 - (t - t0) / span).powi(p);
        let dchi = |t: f64| -(p as f64) / span * (1.0 - (t - t0) / span).powi(p - 1);
        // ∫ χ' a, ∫ χ a over the trajectory
        let integrate = |f: &dyn Fn(&KnotIntegrals) -> f64, g: &dyn Fn(f64) -> f64| -> f64 {
            knots.iter().zip(&times).zip(&weights).map(|((k, &t), w)| w * g(t) * f(k)).sum()
        };
        for t in 0..vtests.len() {
            let terms = [
                -integrate(&|k| k.mom[t][0], &dchi),
                -chi(t0) * knots[0].mom[t][0],
                -integrate(&|k| k.mom[t][1], &chi),
                integrate(&|k| k.mom[t][2], &chi),
                -integrate(&|k| k.mom[t][3], &chi),
            ];
            rows.push(row(WeakEquation::Momentum, t, p, &terms));
            let terms = [
                -integrate(&|k| k.ind[t][0], &dchi),
                -chi(t0) * knots[0].ind[t][0],
                -integrate(&|k| k.ind[t][1], &chi),
                integrate(&|k| k.ind[t][2], &chi),
                integrate(&|k| k.ind[t][3], &chi),
            ];
            rows.push(row(WeakEquation::Induction, t, p, &terms));
        }
        for t in 0..stests.len() {
            let terms = [
                -integrate(&|k| k.den[t][0], &dchi),
                -chi(t0) * knots[0].den[t][0],
                -integrate(&|k| k.den[t][1], &chi),
            ];
            rows.push(row(WeakEquation::Density, t, p, &terms));
        }
    }
    Ok(WeakResidualTable { rows })
}

fn row(equation: WeakEquation, test_index: usize, power: i32, terms: &[f64]) -> WeakResidual {
    WeakResidual {
        equation,
        test_index,
        power,
        residual: terms.iter().sum(),
        scale: terms.iter().map(|v| v.abs()).sum(),
    }
}
