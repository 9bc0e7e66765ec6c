//! Compactly supported smoothing kernel and approximate initial data.

use std::sync::Arc;

use crate::basis::Basis;
use crate::error::{Error, Result};
use crate::field::{GridField, Rank, TorusDomain};
use crate::galerkin::GalerkinState;
use crate::par;
use crate::transport::DensitySnapshot;

/// Minimum kernel radius in grid cells.
pub const MIN_SUPPORT_CELLS: f64 = 3.0;

/// Unnormalized bump `exp(1/(|x|²-1))` on the unit ball.
#[inline]
fn bump(r2: f64) -> f64 {
    if r2 < 1.0 {
        (1.0 / (r2 - 1.0)).exp()
    } else {
        0.0
    }
}

/// `1 / ∫_{|x|<1} exp(1/(|x|²-1)) dx` by composite Simpson in the radius.
pub fn reference_normalizer() -> f64 {
    let n = 20_000;
    let h = 1.0 / n as f64;
    let f = |r: f64| r * r * bump(r * r);
    let mut s = f(0.0) + f(1.0);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        s += w * f(i as f64 * h);
    }
    1.0 / (4.0 * std::f64::consts::PI * s * h / 3.0)
}

/// The scaled kernel `η_ε(x) = ε⁻³ η(x/ε)` discretized on a grid.
#[derive(Debug, Clone)]
pub struct Mollifier {
    pub eps: f64,
    /// Constant `C` making the discrete integral of the kernel exactly one.
    pub normalizer: f64,
    domain: TorusDomain,
    stencil: Vec<([i64; 3], f64)>,
}

/// Build the kernel for `0 < eps < 1` whose support spans at least three cells.
pub fn build_mollifier(eps: f64, domain: TorusDomain) -> Result<Mollifier> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "mollifier eps must lie in (0, 1), got {eps}"
        )));
    }
    let h = domain.spacing();
    let cells = eps / h;
    if cells < MIN_SUPPORT_CELLS {
        return Err(Error::InvalidArgument(format!(
            "mollifier support {cells:.3} cells is narrower than {MIN_SUPPORT_CELLS} grid cells"
        )));
    }
    let r = cells.ceil() as i64;
    let mut stencil = Vec::new();
    for a in -r..=r {
        for b in -r..=r {
            for c in -r..=r {
                let r2 = ((a * a + b * b + c * c) as f64) * h * h / (eps * eps);
                let v = bump(r2);
                if v > 0.0 {
                    stencil.push(([a, b, c], v));
                }
            }
        }
    }
    let scale = domain.cell_volume() / eps.powi(3);
    let raw: f64 = stencil.iter().map(|(_, v)| v * scale).sum();
    let normalizer = 1.0 / raw;
    for (_, v) in stencil.iter_mut() {
        *v *= scale * normalizer;
    }
    Ok(Mollifier {
        eps,
        normalizer,
        domain,
        stencil,
    })
}

impl Mollifier {
    /// Kernel value `η_ε(x)` with the discrete normalizer.
    pub fn value(&self, x: [f64; 3]) -> f64 {
        let r2 = (x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / (self.eps * self.eps);
        self.normalizer * bump(r2) / self.eps.powi(3)
    }

    /// Discrete integral of the kernel over the box.
    pub fn total_mass(&self) -> f64 {
        self.stencil.iter().map(|(_, w)| w).sum()
    }

    pub fn stencil_len(&self) -> usize {
        self.stencil.len()
    }

    pub fn domain(&self) -> &TorusDomain {
        &self.domain
    }
}

/// Periodic convolution `field * η_ε` by direct summation over the support.
pub fn mollify(field: &GridField, m: &Mollifier) -> Result<GridField> {
    if field.domain() != &m.domain {
        return Err(Error::DomainMismatch("mollifier built for another grid".into()));
    }
    let d = m.domain;
    let n = d.grid_size as i64;
    let c = field.rank().components();
    let src = field.data();
    let out = par::map_range(d.n_points(), |p| {
        let (i, j, k) = d.unindex(p);
        let mut acc = [0.0; 3];
        for ([a, b, cc], w) in &m.stencil {
            let q = d.index(
                (i as i64 - a).rem_euclid(n) as usize,
                (j as i64 - b).rem_euclid(n) as usize,
                (k as i64 - cc).rem_euclid(n) as usize,
            );
            for comp in 0..c {
                acc[comp] += w * src[q * c + comp];
            }
        }
        acc
    });
    let mut data: Vec<f64> = out.into_iter().flat_map(|a| a.into_iter().take(c)).collect();
    if field.rank() == Rank::Scalar {
        // a convex combination stays in range; undo round-off past the extremes
        let (lo, hi) = (field.min(), field.max());
        data.iter_mut().for_each(|v| *v = v.clamp(lo, hi));
    }
    GridField::from_data(d, field.rank(), data)
}

/// Raw (possibly rough) initial triple with its density bounds.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub rho0: GridField,
    pub u0: GridField,
    pub b0: GridField,
    pub rho_lower: f64,
    pub rho_upper: f64,
}

impl InitialData {
    pub fn new(rho0: GridField, u0: GridField, b0: GridField, rho_lower: f64, rho_upper: f64) -> Result<Self> {
        if !(rho_lower > 0.0 && rho_upper >= rho_lower) {
            return Err(Error::InvalidArgument(format!(
                "density bounds must satisfy 0 < lower <= upper, got [{rho_lower}, {rho_upper}]"
            )));
        }
        if rho0.rank() != Rank::Scalar || u0.rank() != Rank::Vector3 || b0.rank() != Rank::Vector3 {
            return Err(Error::InvalidArgument("initial data ranks must be (scalar, vector, vector)".into()));
        }
        if rho0.domain() != u0.domain() || rho0.domain() != b0.domain() {
            return Err(Error::DomainMismatch("initial fields on different grids".into()));
        }
        let (lo, hi) = (rho0.min(), rho0.max());
        if lo < rho_lower || hi > rho_upper {
            return Err(Error::DensityOutOfRange {
                value: if lo < rho_lower { lo } else { hi },
                lower: rho_lower,
                upper: rho_upper,
            });
        }
        Ok(Self {
            rho0,
            u0,
            b0,
            rho_lower,
            rho_upper,
        })
    }
}

/// Mollify the raw data (skipped when `eps == 0`) and project the fields onto the basis.
pub fn build_initial_state(raw: &InitialData, eps: f64, basis: &Basis) -> Result<GalerkinState> {
    let (rho, u, b) = if eps == 0.0 {
        (raw.rho0.clone(), raw.u0.clone(), raw.b0.clone())
    } else {
        let m = build_mollifier(eps, *raw.rho0.domain())?;
        (mollify(&raw.rho0, &m)?, mollify(&raw.u0, &m)?, mollify(&raw.b0, &m)?)
    };
    let alpha = basis.project_l2(&u)?;
    let beta = basis.project_l2(&b)?;
    Ok(GalerkinState {
        t: 0.0,
        alpha,
        beta,
        rho: DensitySnapshot {
            time: 0.0,
            field: Arc::new(rho),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// Independent oracle: 3D midpoint rule over the cube [-1, 1]³.
    fn cartesian_normalizer(n: usize) -> f64 {
        let h = 2.0 / n as f64;
        let mut s = 0.0;
        for i in 0..n {
            let x = -1.0 + (i as f64 + 0.5) * h;
            for j in 0..n {
                let y = -1.0 + (j as f64 + 0.5) * h;
                for k in 0..n {
                    let z = -1.0 + (k as f64 + 0.5) * h;
                    s += bump(x * x + y * y + z * z);
                }
            }
        }
        1.0 / (s * h * h * h)
    }

    #[test]
    fn reference_normalizer_matches_cartesian_oracle() {
        let c = reference_normalizer();
        let oracle = cartesian_normalizer(160);
        assert!((c - oracle).abs() / oracle < 1e-7, "{c} vs {oracle}");
    }

    #[test]
    fn kernel_center_support_and_mass() {
        let d = TorusDomain::new(1.0, 32).unwrap();
        let m = build_mollifier(0.2, d).unwrap();
        let center = m.value([0.0; 3]);
        assert!((center - m.normalizer * (-1.0f64).exp() / 0.008).abs() < 1e-12 * center);
        assert_eq!(m.value([0.2, 0.0, 0.0]), 0.0);
        assert_eq!(m.value([0.15, 0.15, 0.0]), 0.0);
        assert!((m.total_mass() - 1.0).abs() < 1e-12);
        // discrete normalizer approaches the continuous one
        assert!((m.normalizer / reference_normalizer() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn narrow_support_rejected() {
        let d = TorusDomain::new(1.0, 16).unwrap();
        assert!(build_mollifier(0.1, d).is_err());
        assert!(build_mollifier(1.2, d).is_err());
        assert!(build_mollifier(0.0, d).is_err());
    }

    #[test]
    fn constant_field_unchanged() {
        let d = TorusDomain::new(1.0, 16).unwrap();
        let m = build_mollifier(0.25, d).unwrap();
        let f = GridField::constant_scalar(d, 2.5);
        let g = mollify(&f, &m).unwrap();
        assert!(g.data().iter().all(|v| (v - 2.5).abs() < 1e-12));
    }

    #[test]
    fn two_level_density_stays_in_range() {
        let d = TorusDomain::new(1.0, 16).unwrap();
        let m = build_mollifier(0.25, d).unwrap();
        let f = GridField::scalar_from_fn(d, |x| if x[0] < 0.5 { 1.0 } else { 2.0 }).unwrap();
        let g = mollify(&f, &m).unwrap();
        assert!(g.min() >= 1.0 - 1e-12 && g.max() <= 2.0 + 1e-12);
        assert!(g.min() < 1.5 && g.max() > 1.5);
    }

    #[test]
    fn smooth_field_error_decreases_as_eps_halves() {
        let d = TorusDomain::new(1.0, 32).unwrap();
        let f = GridField::scalar_from_fn(d, |x| 2.0 + (2.0 * PI * x[0]).sin() * (2.0 * PI * x[1]).cos()).unwrap();
        let mut last = f64::INFINITY;
        for eps in [0.8, 0.4, 0.2, 0.1] {
            let g = mollify(&f, &build_mollifier(eps, d).unwrap()).unwrap();
            let err = g.axpy(-1.0, &f).unwrap().l2_norm();
            assert!(err < last, "eps {eps}: {err} !< {last}");
            last = err;
        }
    }

    #[test]
    fn initial_state_zero_and_constant() {
        let d = TorusDomain::new(1.0, 16).unwrap();
        let basis = Basis::new(d, 2).unwrap();
        let raw = InitialData::new(
            GridField::constant_scalar(d, 1.0),
            GridField::zeros(d, Rank::Vector3),
            GridField::zeros(d, Rank::Vector3),
            1.0,
            1.0,
        )
        .unwrap();
        let s = build_initial_state(&raw, 0.25, &basis).unwrap();
        assert!(s.alpha.iter().chain(&s.beta).all(|v| *v == 0.0));
        assert!(s.rho.field.data().iter().all(|v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn initial_density_out_of_bounds_rejected() {
        let d = TorusDomain::new(1.0, 8).unwrap();
        let r = InitialData::new(
            GridField::constant_scalar(d, 0.5),
            GridField::zeros(d, Rank::Vector3),
            GridField::zeros(d, Rank::Vector3),
            1.0,
            2.0,
        );
        assert!(r.is_err());
    }
}
