//! Initial data generators selected by `initial.preset`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::basis::Basis;
use crate::config::{Preset, SimConfig};
use crate::error::{Error, Result};
use crate::field::{GridField, Rank, TorusDomain};
use crate::fixedpoint::Problem;
use crate::galerkin::ModelLaws;
use crate::material::{LawKind, MaterialLaw};
use crate::mollifier::{build_initial_state, InitialData};
use crate::snapshot::read_snapshot;
use crate::verification::beltrami_reference;

/// Generate the raw (unmollified) initial triple described by `cfg`.
///
/// The certified density range is the exact min and max of the generated density.
pub fn build_initial_data(cfg: &SimConfig) -> Result<InitialData> {
    let d = cfg.domain()?;
    let i = &cfg.initial;
    let kappa = d.base_wavenumber();
    let zero = || GridField::zeros(d, Rank::Vector3);
    let (rho, u, b) = match i.preset {
        Preset::Zero => (GridField::constant_scalar(d, i.rho_mean), zero(), zero()),
        Preset::Beltrami => (
            GridField::constant_scalar(d, i.rho_mean),
            zero(),
            beltrami_reference(i.amplitude, 1.0, d, 0.0)?,
        ),
        Preset::RandomSmooth => random_smooth(cfg, d)?,
        Preset::TwoLevel => {
            let (lo, hi) = (0.25 * d.period_length, 0.75 * d.period_length);
            let inside = |x: f64| x >= lo && x < hi;
            let rho = GridField::scalar_from_fn(d, |x| {
                if inside(x[0]) && inside(x[1]) && inside(x[2]) {
                    i.rho_high
                } else {
                    i.rho_low
                }
            })?;
            let u = GridField::vector_from_fn(d, |x| {
                let s = |v: f64| i.u_amplitude * (kappa * v).sin();
                [s(x[1]), s(x[2]), s(x[0])]
            })?;
            (rho, u, beltrami_reference(i.b_amplitude, 1.0, d, 0.0)?)
        }
        Preset::SingleMode => (
            GridField::scalar_from_fn(d, |x| i.rho_mean + i.rho_amplitude * (kappa * x[2]).cos())?,
            GridField::vector_from_fn(d, |x| [i.u_amplitude * (kappa * x[1]).sin(), 0.0, 0.0])?,
            GridField::vector_from_fn(d, |x| [0.0, 0.0, i.b_amplitude * (kappa * x[0]).cos()])?,
        ),
        Preset::File => {
            let load = |p: &Option<std::path::PathBuf>, rank: Rank, name: &str| -> Result<GridField> {
                match p {
                    None => Ok(GridField::zeros(d, rank)),
                    Some(path) => {
                        let f = read_snapshot(path)?;
                        if f.domain() != &d || f.rank() != rank {
                            return Err(Error::DomainMismatch(format!(
                                "{name} snapshot {} does not match the configured grid and rank",
                                path.display()
                            )));
                        }
                        Ok(f)
                    }
                }
            };
            (
                load(&i.rho_file, Rank::Scalar, "density")?,
                load(&i.u_file, Rank::Vector3, "velocity")?,
                load(&i.b_file, Rank::Vector3, "magnetic")?,
            )
        }
    };
    let (lo, hi) = (rho.min(), rho.max());
    InitialData::new(rho, u, b, lo, hi)
}

/// Everything needed to start a simulation from a configuration.
#[derive(Debug, Clone)]
pub struct PreparedRun {
    pub raw: InitialData,
    pub problem: Problem,
}

/// Generate the data, certify the laws on its density range, mollify and project.
pub fn build_problem(cfg: &SimConfig) -> Result<PreparedRun> {
    cfg.validate()?;
    let raw = build_initial_data(cfg)?;
    let range = (raw.rho_lower, raw.rho_upper);
    let laws = ModelLaws::new(
        MaterialLaw::new(LawKind::Viscosity, cfg.mu, range)?,
        MaterialLaw::new(LawKind::Conductivity, cfg.sigma, range)?,
        cfg.hall,
    )?;
    let basis = Basis::shared(cfg.domain()?, cfg.modes)?;
    let initial = build_initial_state(&raw, cfg.mollify_eps, &basis)?;
    Ok(PreparedRun {
        problem: Problem {
            basis,
            laws,
            initial,
            rho_bounds: range,
            t_final: cfg.t_final,
        },
        raw,
    })
}

/// Seeded smooth data: velocity and field in the `initial.band` modes with RMS amplitudes
/// `u_amplitude`, `b_amplitude`, and a low-mode density with sup deviation
/// exactly `rho_amplitude` on the grid.
fn random_smooth(cfg: &SimConfig, d: TorusDomain) -> Result<(GridField, GridField, GridField)> {
    let i = &cfg.initial;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let kappa = d.base_wavenumber();
    let waves: Vec<([f64; 3], f64, f64)> = (0..8)
        .map(|_| {
            let k = [0, 1, 2].map(|_| rng.gen_range(-1i32..=1) as f64);
            (k, rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
        })
        .filter(|(k, _, _)| k.iter().any(|c| *c != 0.0))
        .collect();
    let pert = GridField::scalar_from_fn(d, |x| {
        waves
            .iter()
            .map(|(k, a, b)| {
                let ph = kappa * (k[0] * x[0] + k[1] * x[1] + k[2] * x[2]);
                a * ph.cos() + b * ph.sin()
            })
            .sum()
    })?;
    let peak = pert.linf_norm();
    let scale = if peak > 0.0 { i.rho_amplitude / peak } else { 0.0 };
    let rho = pert.map_scalar(|p| (i.rho_mean + scale * p).clamp(i.rho_mean - i.rho_amplitude, i.rho_mean + i.rho_amplitude));

    let band = if i.band == 0 { cfg.modes } else { i.band };
    let basis = Basis::new(d, band)?;
    let mut coeffs = |amp: f64| -> Vec<f64> {
        let raw: Vec<f64> = basis
            .modes()
            .iter()
            .map(|m| rng.gen_range(-1.0..1.0) / m.k_squared() as f64)
            .collect();
        let norm = raw.iter().map(|c| c * c).sum::<f64>().sqrt();
        let target = amp * d.volume().sqrt();
        raw.iter().map(|c| c * target / norm).collect()
    };
    let alpha = coeffs(i.u_amplitude);
    let beta = coeffs(i.b_amplitude);
    Ok((rho, basis.synthesize(&alpha)?, basis.synthesize(&beta)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::parse_config;
    use crate::diagnostics::divergence_residual;

    #[test]
    fn random_smooth_is_seeded_and_bounded() {
        let cfg = parse_config(
            "initial.preset = random_smooth\nmodes.K = 2\ninitial.rho_mean = 2\ninitial.rho_amplitude = 0.5\nseed = 7\n",
        )
        .unwrap();
        let a = build_initial_data(&cfg).unwrap();
        let b = build_initial_data(&cfg).unwrap();
        assert_eq!(a.rho0, b.rho0);
        assert_eq!(a.u0, b.u0);
        assert!(a.rho0.min() >= 1.5 && a.rho0.max() <= 2.5);
        assert!((a.rho0.max() - 2.0).abs().max((a.rho0.min() - 2.0).abs()) > 0.49);
        let rms = a.u0.l2_norm() / cfg.domain().unwrap().volume().sqrt();
        assert!((rms - 1.0).abs() < 1e-12, "{rms}");
        assert!(divergence_residual(&a.u0).unwrap() < 1e-12);
        assert!(divergence_residual(&a.b0).unwrap() < 1e-12);

        let mut other = cfg.clone();
        other.seed = 8;
        assert_ne!(build_initial_data(&other).unwrap().u0, a.u0);
    }

    #[test]
    fn two_level_has_exactly_two_values() {
        let cfg = parse_config("initial.preset = two_level\ninitial.rho_low = 1\ninitial.rho_high = 3\n").unwrap();
        let data = build_initial_data(&cfg).unwrap();
        assert!(data.rho0.data().iter().all(|v| *v == 1.0 || *v == 3.0));
        assert_eq!((data.rho_lower, data.rho_upper), (1.0, 3.0));
        assert!(divergence_residual(&data.u0).unwrap() < 1e-12);
    }

    #[test]
    fn beltrami_preset_projects_onto_shell() {
        let cfg = parse_config("initial.preset = beltrami\n").unwrap();
        let data = build_initial_data(&cfg).unwrap();
        let basis = Basis::new(cfg.domain().unwrap(), 1).unwrap();
        let beta = basis.project_l2(&data.b0).unwrap();
        let back = basis.synthesize(&beta).unwrap();
        assert!(back.axpy(-1.0, &data.b0).unwrap().linf_norm() < 1e-12);
    }

    #[test]
    fn file_preset_reads_snapshots() {
        let dir = tempfile::tempdir().unwrap();
        let d = TorusDomain::two_pi(8).unwrap();
        let rho = GridField::scalar_from_fn(d, |x| 2.0 + x[0].cos()).unwrap();
        let p = dir.path().join("rho.bin");
        crate::snapshot::write_snapshot(&p, &rho).unwrap();
        let doc = format!("domain.M = 8\ninitial.preset = file\ninitial.rho_file = {}\n", p.display());
        let data = build_initial_data(&parse_config(&doc).unwrap()).unwrap();
        assert_eq!(data.rho0, rho);
        assert_eq!(data.u0.linf_norm(), 0.0);

        let doc = format!("domain.M = 12\ninitial.preset = file\ninitial.rho_file = {}\n", p.display());
        assert!(matches!(
            build_initial_data(&parse_config(&doc).unwrap()),
            Err(Error::DomainMismatch(_))
        ));
    }
}
