//! Divergence-free trigonometric modes on the periodic box.
//!
//! Every nonzero wavevector `k` in the half space (first nonzero component
//! positive) carries two unit polarizations orthogonal to `k` and two phases,
//! giving four real modes `N e cos(κ k·x)` and `N e sin(κ k·x)` with
//! `κ = 2π/L` and `N = sqrt(2/L³)`. The same family spans the velocity and
//! the magnetic Galerkin spaces.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::{GridField, Rank, TorusDomain};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Cosine,
    Sine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BasisElement {
    pub wavevector: [i32; 3],
    pub polarization: [f64; 3],
    /// 0 or 1; the second polarization is `k̂ × (first)`.
    pub polarization_index: u8,
    pub phase: Phase,
    pub norm_factor: f64,
}

impl BasisElement {
    pub fn k_squared(&self) -> i32 {
        dot_i(self.wavevector, self.wavevector)
    }

    /// Pointwise value at `x` for a box of side `period_length`.
    pub fn eval(&self, period_length: f64, x: [f64; 3]) -> [f64; 3] {
        let kappa = 2.0 * std::f64::consts::PI / period_length;
        let k = self.wavevector;
        let theta = kappa * (k[0] as f64 * x[0] + k[1] as f64 * x[1] + k[2] as f64 * x[2]);
        let s = self.norm_factor
            * match self.phase {
                Phase::Cosine => theta.cos(),
                Phase::Sine => theta.sin(),
            };
        self.polarization.map(|e| s * e)
    }

    /// Scale `2π|k|/L` relating the mode to its curl.
    pub fn curl_scale(&self, period_length: f64) -> f64 {
        2.0 * std::f64::consts::PI / period_length * (self.k_squared() as f64).sqrt()
    }

    /// Analytic curl: the same wavevector with the other polarization and the
    /// other phase, times the returned signed factor.
    pub fn curl_of(&self, period_length: f64) -> (BasisElement, f64) {
        let s = self.curl_scale(period_length);
        let (e1, e2) = polarizations(self.wavevector);
        let (pol, idx, sign) = match (self.polarization_index, self.phase) {
            (0, Phase::Cosine) => (e2, 1, -1.0),
            (0, Phase::Sine) => (e2, 1, 1.0),
            (_, Phase::Cosine) => (e1, 0, 1.0),
            (_, Phase::Sine) => (e1, 0, -1.0),
        };
        let phase = match self.phase {
            Phase::Cosine => Phase::Sine,
            Phase::Sine => Phase::Cosine,
        };
        (
            BasisElement {
                wavevector: self.wavevector,
                polarization: pol,
                polarization_index: idx,
                phase,
                norm_factor: self.norm_factor,
            },
            sign * s,
        )
    }
}

/// Four consecutive modes sharing a wavevector, ordered
/// (pol 0 cos, pol 0 sin, pol 1 cos, pol 1 sin).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WaveGroup {
    pub wavevector: [i32; 3],
    pub first: usize,
    pub e1: [f64; 3],
    pub e2: [f64; 3],
}

/// An ordered mode family on a fixed domain.
#[derive(Debug, Clone, PartialEq)]
pub struct Basis {
    domain: TorusDomain,
    cutoff: usize,
    modes: Vec<BasisElement>,
    groups: Vec<WaveGroup>,
}

pub type SharedBasis = Arc<Basis>;

fn dot_i(a: [i32; 3], b: [i32; 3]) -> i32 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn cross_i(a: [i32; 3], b: [i32; 3]) -> [i32; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn normalized(v: [i32; 3]) -> [f64; 3] {
    let n = (dot_i(v, v) as f64).sqrt();
    v.map(|c| c as f64 / n)
}

/// Integer-constructed orthonormal polarizations for `k`: `p1` is the
/// projection of the least aligned axis, `p2 = k × p1`.
pub fn polarizations(k: [i32; 3]) -> ([f64; 3], [f64; 3]) {
    let mut axis = 0;
    for c in 1..3 {
        if k[c].abs() < k[axis].abs() {
            axis = c;
        }
    }
    let mut a = [0i32; 3];
    a[axis] = 1;
    let kk = dot_i(k, k);
    let ak = dot_i(a, k);
    let p1 = [kk * a[0] - ak * k[0], kk * a[1] - ak * k[1], kk * a[2] - ak * k[2]];
    let p2 = cross_i(k, p1);
    (normalized(p1), normalized(p2))
}

/// All divergence-free real modes with `0 < |k|² ≤ K²`, deterministically ordered by
/// (|k|², lexicographic k, polarization, cosine before sine).
pub fn enumerate_modes(domain: TorusDomain, cutoff: usize) -> Result<Vec<BasisElement>> {
    Ok(Basis::new(domain, cutoff)?.modes)
}

impl Basis {
    pub fn new(domain: TorusDomain, cutoff: usize) -> Result<Self> {
        if cutoff == 0 {
            return Err(Error::InvalidArgument("mode cutoff must be at least 1".into()));
        }
        if 4 * cutoff > domain.grid_size {
            return Err(Error::Aliasing {
                grid: domain.grid_size,
                cutoff,
            });
        }
        let kmax = cutoff as i32;
        let mut ks = Vec::new();
        for a in -kmax..=kmax {
            for b in -kmax..=kmax {
                for c in -kmax..=kmax {
                    let k = [a, b, c];
                    let k2 = dot_i(k, k);
                    if k2 == 0 || k2 > kmax * kmax {
                        continue;
                    }
                    let lead = *k.iter().find(|&&v| v != 0).unwrap();
                    if lead > 0 {
                        ks.push(k);
                    }
                }
            }
        }
        ks.sort_by_key(|k| (dot_i(*k, *k), *k));
        let norm = (2.0 / domain.volume()).sqrt();
        let mut modes = Vec::with_capacity(4 * ks.len());
        let mut groups = Vec::with_capacity(ks.len());
        for k in ks {
            let (e1, e2) = polarizations(k);
            groups.push(WaveGroup {
                wavevector: k,
                first: modes.len(),
                e1,
                e2,
            });
            for (pi, e) in [(0u8, e1), (1u8, e2)] {
                for phase in [Phase::Cosine, Phase::Sine] {
                    modes.push(BasisElement {
                        wavevector: k,
                        polarization: e,
                        polarization_index: pi,
                        phase,
                        norm_factor: norm,
                    });
                }
            }
        }
        Ok(Self {
            domain,
            cutoff,
            modes,
            groups,
        })
    }

    pub fn shared(domain: TorusDomain, cutoff: usize) -> Result<SharedBasis> {
        Ok(Arc::new(Self::new(domain, cutoff)?))
    }

    pub fn domain(&self) -> &TorusDomain {
        &self.domain
    }

    pub fn cutoff(&self) -> usize {
        self.cutoff
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[BasisElement] {
        &self.modes
    }

    pub fn groups(&self) -> &[WaveGroup] {
        &self.groups
    }

    /// `2π|k_i|/L` for every mode: the gradient (and curl) norm of a unit mode.
    pub fn curl_scales(&self) -> Vec<f64> {
        self.modes
            .iter()
            .map(|m| m.curl_scale(self.domain.period_length))
            .collect()
    }

    /// Index and signed factor of the curl image of mode `i`.
    pub fn curl_index(&self, i: usize) -> (usize, f64) {
        let m = &self.modes[i];
        let s = m.curl_scale(self.domain.period_length);
        let base = i - i % 4;
        match i % 4 {
            0 => (base + 3, -s),
            1 => (base + 2, s),
            2 => (base + 1, s),
            _ => (base, -s),
        }
    }

    /// Coefficients of `curl(Σ c_i Θ_i)` in the same basis.
    pub fn curl_coeffs(&self, coeffs: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; coeffs.len()];
        for (i, c) in coeffs.iter().enumerate() {
            let (j, f) = self.curl_index(i);
            out[j] += f * c;
        }
        out
    }

    /// Per-group cosine and sine amplitude vectors of `Σ c_i Θ_i`.
    pub fn amplitudes(&self, coeffs: &[f64]) -> Vec<([f64; 3], [f64; 3])> {
        let n = self.modes[0].norm_factor;
        self.groups
            .iter()
            .map(|g| {
                let c = &coeffs[g.first..g.first + 4];
                let a = std::array::from_fn(|d| n * (c[0] * g.e1[d] + c[2] * g.e2[d]));
                let b = std::array::from_fn(|d| n * (c[1] * g.e1[d] + c[3] * g.e2[d]));
                (a, b)
            })
            .collect()
    }

    fn check_len(&self, coeffs: &[f64]) -> Result<()> {
        if coeffs.len() != self.modes.len() {
            return Err(Error::LengthMismatch {
                expected: self.modes.len(),
                got: coeffs.len(),
            });
        }
        Ok(())
    }

    /// Per-axis tables `e^{iκ m x_j}` for `m ∈ [-K, K]` on grid coordinates.
    fn grid_phase_table(&self) -> Vec<Vec<Complex64>> {
        let kmax = self.cutoff as i64;
        let m = self.domain.grid_size;
        let kappa = self.domain.base_wavenumber();
        let h = self.domain.spacing();
        (-kmax..=kmax)
            .map(|q| {
                (0..m)
                    .map(|j| {
                        // reduce the integer phase first so the argument stays small
                        let r = (q * j as i64).rem_euclid(m as i64) as f64;
                        Complex64::from_polar(1.0, kappa * r * h)
                    })
                    .collect()
            })
            .collect()
    }

    /// Evaluate `Σ c_i Θ_i` on the grid.
    pub fn synthesize(&self, coeffs: &[f64]) -> Result<GridField> {
        self.check_len(coeffs)?;
        let amps = self.amplitudes(coeffs);
        let table = self.grid_phase_table();
        let kmax = self.cutoff as i32;
        let m = self.domain.grid_size;
        let groups = &self.groups;
        let mut data = vec![0.0; 3 * self.domain.n_points()];
        par::for_each_chunk_mut(&mut data, 3 * m * m, |i, slab| {
            let mut zij = vec![Complex64::new(0.0, 0.0); groups.len()];
            for j in 0..m {
                for (g, z) in groups.iter().zip(zij.iter_mut()) {
                    let k = g.wavevector;
                    *z = table[(k[0] + kmax) as usize][i] * table[(k[1] + kmax) as usize][j];
                }
                for l in 0..m {
                    let mut v = [0.0; 3];
                    for ((g, z), (a, b)) in groups.iter().zip(&zij).zip(&amps) {
                        let e = z * table[(g.wavevector[2] + kmax) as usize][l];
                        for d in 0..3 {
                            v[d] += a[d] * e.re + b[d] * e.im;
                        }
                    }
                    let p = 3 * (j * m + l);
                    slab[p..p + 3].copy_from_slice(&v);
                }
            }
        });
        Ok(GridField::from_data_unchecked(self.domain, Rank::Vector3, data))
    }

    /// L² projection coefficients `⟨field, Θ_i⟩` by trapezoidal quadrature.
    pub fn project_l2(&self, field: &GridField) -> Result<Vec<f64>> {
        if field.domain() != &self.domain {
            return Err(Error::DomainMismatch(
                "field and basis live on different grids".into(),
            ));
        }
        if field.rank() != Rank::Vector3 {
            return Err(Error::InvalidArgument("projection needs a vector field".into()));
        }
        let table = self.grid_phase_table();
        let kmax = self.cutoff as i32;
        let m = self.domain.grid_size;
        let dv = self.domain.cell_volume();
        let n = self.modes[0].norm_factor;
        let data = field.data();
        let per_group = par::map_range(self.groups.len(), |gi| {
            let g = &self.groups[gi];
            let k = g.wavevector;
            let mut c = [0.0; 3];
            let mut s = [0.0; 3];
            for i in 0..m {
                for j in 0..m {
                    let zij = table[(k[0] + kmax) as usize][i] * table[(k[1] + kmax) as usize][j];
                    for l in 0..m {
                        let e = zij * table[(k[2] + kmax) as usize][l];
                        let p = 3 * self.domain.index(i, j, l);
                        for d in 0..3 {
                            c[d] += data[p + d] * e.re;
                            s[d] += data[p + d] * e.im;
                        }
                    }
                }
            }
            let dot = |u: [f64; 3], v: [f64; 3]| u[0] * v[0] + u[1] * v[1] + u[2] * v[2];
            [
                n * dv * dot(g.e1, c),
                n * dv * dot(g.e1, s),
                n * dv * dot(g.e2, c),
                n * dv * dot(g.e2, s),
            ]
        });
        Ok(per_group.into_iter().flatten().collect())
    }

    /// Off-grid evaluator for a fixed coefficient vector.
    pub fn point_evaluator(&self, coeffs: &[f64]) -> Result<PointEvaluator> {
        self.check_len(coeffs)?;
        Ok(PointEvaluator {
            kappa: self.domain.base_wavenumber(),
            cutoff: self.cutoff,
            wavevectors: self.groups.iter().map(|g| g.wavevector).collect(),
            amplitudes: self.amplitudes(coeffs),
        })
    }
}

const MAX_TABLE: usize = 16;

/// Exact trigonometric evaluation of a Galerkin field at arbitrary points.
#[derive(Debug, Clone)]
pub struct PointEvaluator {
    kappa: f64,
    cutoff: usize,
    wavevectors: Vec<[i32; 3]>,
    amplitudes: Vec<([f64; 3], [f64; 3])>,
}

impl PointEvaluator {
    /// Convex blend `(1-s)·a + s·b` of two evaluators over the same basis.
    pub fn blend(a: &PointEvaluator, b: &PointEvaluator, s: f64) -> PointEvaluator {
        let amplitudes = a
            .amplitudes
            .iter()
            .zip(&b.amplitudes)
            .map(|((ca, sa), (cb, sb))| {
                (
                    std::array::from_fn(|d| (1.0 - s) * ca[d] + s * cb[d]),
                    std::array::from_fn(|d| (1.0 - s) * sa[d] + s * sb[d]),
                )
            })
            .collect();
        PointEvaluator {
            amplitudes,
            ..a.clone()
        }
    }

    /// Upper bound of `sup |u|` from the amplitudes.
    pub fn sup_bound(&self) -> f64 {
        let n = |v: &[f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        self.amplitudes.iter().map(|(a, b)| n(a) + n(b)).sum()
    }

    pub fn eval(&self, x: [f64; 3]) -> [f64; 3] {
        let k = self.cutoff;
        if k >= MAX_TABLE {
            return self.eval_direct(x);
        }
        // pw[c][m] = e^{iκ m x_c}, m = 0..=K
        let mut pw = [[Complex64::new(1.0, 0.0); MAX_TABLE]; 3];
        for c in 0..3 {
            let base = Complex64::from_polar(1.0, self.kappa * x[c]);
            for m in 1..=k {
                pw[c][m] = pw[c][m - 1] * base;
            }
        }
        let phase = |c: usize, q: i32| -> Complex64 {
            if q >= 0 {
                pw[c][q as usize]
            } else {
                pw[c][(-q) as usize].conj()
            }
        };
        let mut v = [0.0; 3];
        for (kv, (a, b)) in self.wavevectors.iter().zip(&self.amplitudes) {
            let e = phase(0, kv[0]) * phase(1, kv[1]) * phase(2, kv[2]);
            for d in 0..3 {
                v[d] += a[d] * e.re + b[d] * e.im;
            }
        }
        v
    }

    fn eval_direct(&self, x: [f64; 3]) -> [f64; 3] {
        let mut v = [0.0; 3];
        for (kv, (a, b)) in self.wavevectors.iter().zip(&self.amplitudes) {
            let th = self.kappa * (kv[0] as f64 * x[0] + kv[1] as f64 * x[1] + kv[2] as f64 * x[2]);
            let (s, c) = th.sin_cos();
            for d in 0..3 {
                v[d] += a[d] * c + b[d] * s;
            }
        }
        v
    }
}
