//! Periodic box and sampled fields.
//!
//! Samples are stored row-major with the x index slowest:
//! `idx = (i * M + j) * M + k` for the point `(i, j, k) * L / M`.
//! Vector fields interleave their three components per point.

use std::sync::Arc;

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// The triply periodic box `[0, L)^3` sampled on an `M^3` grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusDomain {
    pub period_length: f64,
    pub grid_size: usize,
}

impl TorusDomain {
    pub fn new(period_length: f64, grid_size: usize) -> Result<Self> {
        if !(period_length.is_finite() && period_length > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "period length must be positive, got {period_length}"
            )));
        }
        if grid_size < 4 {
            return Err(Error::InvalidArgument(format!(
                "grid size must be at least 4, got {grid_size}"
            )));
        }
        Ok(Self {
            period_length,
            grid_size,
        })
    }

    /// Box of side `2π`.
    pub fn two_pi(grid_size: usize) -> Result<Self> {
        Self::new(2.0 * std::f64::consts::PI, grid_size)
    }

    pub fn spacing(&self) -> f64 {
        self.period_length / self.grid_size as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.spacing().powi(3)
    }

    pub fn volume(&self) -> f64 {
        self.period_length.powi(3)
    }

    pub fn n_points(&self) -> usize {
        self.grid_size.pow(3)
    }

    /// Angular wavenumber of one unit of integer wavevector, `2π / L`.
    pub fn base_wavenumber(&self) -> f64 {
        2.0 * std::f64::consts::PI / self.period_length
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        (i * self.grid_size + j) * self.grid_size + k
    }

    #[inline]
    pub fn unindex(&self, idx: usize) -> (usize, usize, usize) {
        let m = self.grid_size;
        (idx / (m * m), (idx / m) % m, idx % m)
    }

    #[inline]
    pub fn point(&self, idx: usize) -> [f64; 3] {
        let (i, j, k) = self.unindex(idx);
        let h = self.spacing();
        [i as f64 * h, j as f64 * h, k as f64 * h]
    }

    /// Wrap a coordinate into `[0, L)`.
    #[inline]
    pub fn wrap(&self, x: f64) -> f64 {
        let l = self.period_length;
        let r = x.rem_euclid(l);
        if r >= l {
            0.0
        } else {
            r
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Rank {
    Scalar,
    Vector3,
}

impl Rank {
    pub fn components(self) -> usize {
        match self {
            Rank::Scalar => 1,
            Rank::Vector3 => 3,
        }
    }
}

/// Scalar or 3-vector samples on the grid. Construction rejects non-finite data.
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    domain: TorusDomain,
    rank: Rank,
    data: Vec<f64>,
}

impl GridField {
    pub fn from_data(domain: TorusDomain, rank: Rank, data: Vec<f64>) -> Result<Self> {
        let expected = domain.n_points() * rank.components();
        if data.len() != expected {
            return Err(Error::LengthMismatch {
                expected,
                got: data.len(),
            });
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("grid field sample {bad}")));
        }
        Ok(Self { domain, rank, data })
    }

    /// Internal constructor for data produced by finite arithmetic on finite inputs.
    pub(crate) fn from_data_unchecked(domain: TorusDomain, rank: Rank, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), domain.n_points() * rank.components());
        Self { domain, rank, data }
    }

    pub fn zeros(domain: TorusDomain, rank: Rank) -> Self {
        Self {
            domain,
            rank,
            data: vec![0.0; domain.n_points() * rank.components()],
        }
    }

    pub fn constant_scalar(domain: TorusDomain, value: f64) -> Self {
        Self {
            domain,
            rank: Rank::Scalar,
            data: vec![value; domain.n_points()],
        }
    }

    pub fn scalar_from_fn<F>(domain: TorusDomain, f: F) -> Result<Self>
    where
        F: Fn([f64; 3]) -> f64 + Sync + Send,
    {
        let data = par::map_range(domain.n_points(), |idx| f(domain.point(idx)));
        Self::from_data(domain, Rank::Scalar, data)
    }

    pub fn vector_from_fn<F>(domain: TorusDomain, f: F) -> Result<Self>
    where
        F: Fn([f64; 3]) -> [f64; 3] + Sync + Send,
    {
        let pts = par::map_range(domain.n_points(), |idx| f(domain.point(idx)));
        let data = pts.into_iter().flatten().collect();
        Self::from_data(domain, Rank::Vector3, data)
    }

    pub fn domain(&self) -> &TorusDomain {
        &self.domain
    }

    pub fn rank(&self) -> Rank {
        self.rank
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn scalar_at(&self, idx: usize) -> f64 {
        debug_assert_eq!(self.rank, Rank::Scalar);
        self.data[idx]
    }

    #[inline]
    pub fn vector_at(&self, idx: usize) -> [f64; 3] {
        debug_assert_eq!(self.rank, Rank::Vector3);
        let b = 3 * idx;
        [self.data[b], self.data[b + 1], self.data[b + 2]]
    }

    pub fn min(&self) -> f64 {
        self.data.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Largest pointwise magnitude (Euclidean for vectors).
    pub fn linf_norm(&self) -> f64 {
        match self.rank {
            Rank::Scalar => self.data.iter().fold(0.0, |m, v| m.max(v.abs())),
            Rank::Vector3 => self
                .data
                .chunks_exact(3)
                .fold(0.0, |m, v| m.max((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt())),
        }
    }

    /// `(∫ |f|^p)^(1/p)` by the trapezoidal rule, `|·|` Euclidean for vectors.
    pub fn lp_norm(&self, p: f64) -> f64 {
        let c = self.rank.components();
        let m = self.domain.grid_size;
        let slab = m * m * c;
        let s = par::ordered_sum(m, |i| {
            self.data[i * slab..(i + 1) * slab]
                .chunks_exact(c)
                .map(|v| v.iter().map(|x| x * x).sum::<f64>().sqrt().powf(p))
                .sum()
        });
        (s * self.domain.cell_volume()).powf(1.0 / p)
    }

    pub fn l2_norm(&self) -> f64 {
        inner_product(self, self, None)
            .expect("self inner product")
            .max(0.0)
            .sqrt()
    }

    /// Scalar field holding one component of a vector field.
    pub fn component(&self, c: usize) -> GridField {
        assert_eq!(self.rank, Rank::Vector3);
        let data = self.data.iter().skip(c).step_by(3).copied().collect();
        GridField::from_data_unchecked(self.domain, Rank::Scalar, data)
    }

    pub fn from_components(x: &GridField, y: &GridField, z: &GridField) -> Result<GridField> {
        for f in [x, y, z] {
            check_same(x, f)?;
            if f.rank != Rank::Scalar {
                return Err(Error::InvalidArgument("components must be scalar".into()));
            }
        }
        let mut data = Vec::with_capacity(3 * x.data.len());
        for idx in 0..x.data.len() {
            data.extend_from_slice(&[x.data[idx], y.data[idx], z.data[idx]]);
        }
        Ok(GridField::from_data_unchecked(x.domain, Rank::Vector3, data))
    }

    /// `self + s * other`.
    pub fn axpy(&self, s: f64, other: &GridField) -> Result<GridField> {
        check_same(self, other)?;
        if self.rank != other.rank {
            return Err(Error::DomainMismatch("rank differs".into()));
        }
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a + s * b)
            .collect();
        Ok(GridField::from_data_unchecked(self.domain, self.rank, data))
    }

    pub fn scaled(&self, s: f64) -> GridField {
        GridField::from_data_unchecked(
            self.domain,
            self.rank,
            self.data.iter().map(|v| v * s).collect(),
        )
    }

    pub fn map_scalar<F: Fn(f64) -> f64>(&self, f: F) -> GridField {
        assert_eq!(self.rank, Rank::Scalar);
        GridField::from_data_unchecked(self.domain, self.rank, self.data.iter().map(|&v| f(v)).collect())
    }

    /// Spectral partial derivative `∂_axis` of component `comp`.
    pub fn partial(&self, axis: usize, comp: usize) -> GridField {
        let c = self.rank.components();
        assert!(comp < c && axis < 3);
        let mut values: Vec<f64> = self.data.iter().skip(comp).step_by(c).copied().collect();
        spectral_derivative_in_place(&self.domain, &mut values, axis);
        GridField::from_data_unchecked(self.domain, Rank::Scalar, values)
    }

    /// Spectral gradient of a scalar field.
    pub fn gradient(&self) -> Result<GridField> {
        if self.rank != Rank::Scalar {
            return Err(Error::InvalidArgument("gradient needs a scalar field".into()));
        }
        GridField::from_components(&self.partial(0, 0), &self.partial(1, 0), &self.partial(2, 0))
    }

    /// Spectral divergence of a vector field.
    pub fn divergence(&self) -> Result<GridField> {
        if self.rank != Rank::Vector3 {
            return Err(Error::InvalidArgument("divergence needs a vector field".into()));
        }
        let dx = self.partial(0, 0);
        let dy = self.partial(1, 1);
        let dz = self.partial(2, 2);
        dx.axpy(1.0, &dy)?.axpy(1.0, &dz)
    }

    /// Spectral curl of a vector field.
    pub fn curl(&self) -> Result<GridField> {
        if self.rank != Rank::Vector3 {
            return Err(Error::InvalidArgument("curl needs a vector field".into()));
        }
        let cx = self.partial(1, 2).axpy(-1.0, &self.partial(2, 1))?;
        let cy = self.partial(2, 0).axpy(-1.0, &self.partial(0, 2))?;
        let cz = self.partial(0, 1).axpy(-1.0, &self.partial(1, 0))?;
        GridField::from_components(&cx, &cy, &cz)
    }

    /// Velocity gradient `J[a][b] = ∂_a u_b` as nine scalar fields.
    pub fn jacobian(&self) -> Result<[[GridField; 3]; 3]> {
        if self.rank != Rank::Vector3 {
            return Err(Error::InvalidArgument("jacobian needs a vector field".into()));
        }
        Ok(std::array::from_fn(|a| {
            std::array::from_fn(|b| self.partial(a, b))
        }))
    }
}

pub(crate) fn check_same(a: &GridField, b: &GridField) -> Result<()> {
    if a.domain != b.domain {
        return Err(Error::DomainMismatch(format!(
            "{:?} vs {:?}",
            a.domain, b.domain
        )));
    }
    Ok(())
}

/// `∫ w (a · b) dx` by the trapezoidal rule on the grid.
///
/// Ranks must agree; the weight, if given, must be a strictly positive scalar field.
pub fn inner_product(a: &GridField, b: &GridField, weight: Option<&GridField>) -> Result<f64> {
    check_same(a, b)?;
    if a.rank != b.rank {
        return Err(Error::DomainMismatch("rank differs".into()));
    }
    if let Some(w) = weight {
        check_same(a, w)?;
        if w.rank != Rank::Scalar {
            return Err(Error::InvalidArgument("weight must be scalar".into()));
        }
        if let Some(bad) = w.data.iter().find(|v| **v <= 0.0) {
            return Err(Error::NonPositiveWeight(*bad));
        }
    }
    let c = a.rank.components();
    let m = a.domain.grid_size;
    let pts = m * m;
    let s = par::ordered_sum(m, |i| {
        let mut acc = 0.0;
        for p in i * pts..(i + 1) * pts {
            let mut dot = 0.0;
            for q in 0..c {
                dot += a.data[p * c + q] * b.data[p * c + q];
            }
            acc += match weight {
                Some(w) => w.data[p] * dot,
                None => dot,
            };
        }
        acc
    });
    Ok(s * a.domain.cell_volume())
}

/// Symmetric 3x3 tensor samples (row-major 3x3 per point).
#[derive(Debug, Clone)]
pub struct TensorField {
    pub domain: TorusDomain,
    pub data: Vec<[[f64; 3]; 3]>,
}

impl TensorField {
    pub fn trace_linf(&self) -> f64 {
        self.data
            .iter()
            .fold(0.0, |m, t| m.max((t[0][0] + t[1][1] + t[2][2]).abs()))
    }
}

/// Deformation tensor `d(u) = ½(∇u + ∇uᵀ)` by spectral differentiation.
pub fn deformation_tensor(field: &GridField) -> Result<TensorField> {
    let j = field.jacobian()?;
    let n = field.domain.n_points();
    let data = (0..n)
        .map(|p| {
            std::array::from_fn(|a| {
                std::array::from_fn(|b| 0.5 * (j[a][b].data[p] + j[b][a].data[p]))
            })
        })
        .collect();
    Ok(TensorField {
        domain: field.domain,
        data,
    })
}

thread_local! {
    static PLANNER: std::cell::RefCell<FftPlanner<f64>> = std::cell::RefCell::new(FftPlanner::new());
}

fn fft_pair(m: usize) -> (Arc<dyn rustfft::Fft<f64>>, Arc<dyn rustfft::Fft<f64>>) {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        (p.plan_fft_forward(m), p.plan_fft_inverse(m))
    })
}

/// Differentiate a scalar sample array along one axis, exactly for
/// trigonometric polynomials below the Nyquist wavenumber (which is zeroed).
fn spectral_derivative_in_place(domain: &TorusDomain, values: &mut [f64], axis: usize) {
    let m = domain.grid_size;
    let (fwd, inv) = fft_pair(m);
    let kappa = domain.base_wavenumber();
    let stride = match axis {
        0 => m * m,
        1 => m,
        _ => 1,
    };
    let mults: Vec<Complex64> = (0..m)
        .map(|q| {
            let s = if q < m / 2 {
                q as f64
            } else if q == m / 2 && m % 2 == 0 {
                0.0
            } else {
                q as f64 - m as f64
            };
            Complex64::new(0.0, kappa * s / m as f64)
        })
        .collect();
    let mut line = vec![Complex64::new(0.0, 0.0); m];
    for a in 0..m {
        for b in 0..m {
            let base = match axis {
                0 => a * m + b,
                1 => a * m * m + b,
                _ => (a * m + b) * m,
            };
            for q in 0..m {
                line[q] = Complex64::new(values[base + q * stride], 0.0);
            }
            fwd.process(&mut line);
            for (z, f) in line.iter_mut().zip(&mults) {
                *z *= f;
            }
            inv.process(&mut line);
            for q in 0..m {
                values[base + q * stride] = line[q].re;
            }
        }
    }
}
