//! Semi-Lagrangian density transport along exact spectral characteristics.

use std::sync::Arc;

use crate::basis::{PointEvaluator, SharedBasis};
use crate::error::{Error, Result};
use crate::field::{GridField, Rank, TorusDomain};
use crate::par;

/// Galerkin velocity sampled at time knots, linear in time between them,
/// plus an optional spatially constant drift.
#[derive(Debug, Clone)]
pub struct VelocityTrajectory {
    time_knots: Vec<f64>,
    coefficient_snapshots: Vec<Vec<f64>>,
    mean: [f64; 3],
    basis: SharedBasis,
    evaluators: Vec<PointEvaluator>,
    speed: f64,
}

impl VelocityTrajectory {
    pub fn new(basis: SharedBasis, time_knots: Vec<f64>, coefficient_snapshots: Vec<Vec<f64>>) -> Result<Self> {
        Self::with_mean(basis, time_knots, coefficient_snapshots, [0.0; 3])
    }

    pub fn with_mean(
        basis: SharedBasis,
        time_knots: Vec<f64>,
        coefficient_snapshots: Vec<Vec<f64>>,
        mean: [f64; 3],
    ) -> Result<Self> {
        if time_knots.is_empty() || time_knots.len() != coefficient_snapshots.len() {
            return Err(Error::InvalidArgument(format!(
                "{} knots for {} snapshots",
                time_knots.len(),
                coefficient_snapshots.len()
            )));
        }
        if time_knots.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidArgument("time knots must be strictly increasing".into()));
        }
        if mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::NonFinite("mean velocity".into()));
        }
        let evaluators = coefficient_snapshots
            .iter()
            .map(|c| basis.point_evaluator(c))
            .collect::<Result<Vec<_>>>()?;
        // The amplitude sum is a hard bound but grows like the mode count; twice
        // the grid maximum is a sharp estimate for band-limited fields on M ≥ 4K.
        let mut speed: f64 = 0.0;
        for (e, c) in evaluators.iter().zip(&coefficient_snapshots) {
            let grid = 2.0 * basis.synthesize(c)?.linf_norm();
            speed = speed.max(e.sup_bound().min(grid));
        }
        let drift = (mean[0] * mean[0] + mean[1] * mean[1] + mean[2] * mean[2]).sqrt();
        Ok(Self {
            time_knots,
            coefficient_snapshots,
            mean,
            basis,
            evaluators,
            speed: speed + drift,
        })
    }

    /// A time-independent velocity valid on `[t0, t1]`.
    pub fn steady(basis: SharedBasis, coeffs: Vec<f64>, mean: [f64; 3], t0: f64, t1: f64) -> Result<Self> {
        Self::with_mean(basis, vec![t0, t1], vec![coeffs.clone(), coeffs], mean)
    }

    pub fn time_knots(&self) -> &[f64] {
        &self.time_knots
    }

    pub fn coefficient_snapshots(&self) -> &[Vec<f64>] {
        &self.coefficient_snapshots
    }

    pub fn basis(&self) -> &SharedBasis {
        &self.basis
    }

    pub fn span(&self) -> (f64, f64) {
        (self.time_knots[0], *self.time_knots.last().unwrap())
    }

    fn check_time(&self, t: f64) -> Result<()> {
        let (a, b) = self.span();
        let slack = 1e-12 * (1.0 + a.abs().max(b.abs()));
        if t < a - slack || t > b + slack || !t.is_finite() {
            return Err(Error::TimeOutOfRange { t, start: a, end: b });
        }
        Ok(())
    }

    /// Velocity evaluator frozen at time `t` (linear blend between knots).
    fn evaluator_at(&self, t: f64) -> PointEvaluator {
        let k = &self.time_knots;
        if k.len() == 1 || t <= k[0] {
            return self.evaluators[0].clone();
        }
        let i = k.partition_point(|&s| s <= t).clamp(1, k.len() - 1);
        let s = ((t - k[i - 1]) / (k[i] - k[i - 1])).clamp(0.0, 1.0);
        PointEvaluator::blend(&self.evaluators[i - 1], &self.evaluators[i], s)
    }

    /// Estimate of `sup |u|` over the whole trajectory, drift included.
    pub fn speed_estimate(&self) -> f64 {
        self.speed
    }

    /// Characteristic substep: `min(knot spacing, 0.25 Δx / sup|u|)`.
    pub fn char_step(&self) -> f64 {
        let window = self
            .time_knots
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(0.0, f64::max);
        let window = if window > 0.0 { window } else { f64::INFINITY };
        let speed = self.speed;
        let cfl = if speed > 0.0 {
            0.25 * self.basis.domain().spacing() / speed
        } else {
            f64::INFINITY
        };
        window.min(cfl)
    }

    /// Substep plan from `from` to `to`: step size and evaluators at each
    /// stage time (start, midpoint, end of every substep).
    fn plan(&self, from: f64, to: f64) -> Result<Plan> {
        self.check_time(from)?;
        self.check_time(to)?;
        let span = to - from;
        if span == 0.0 {
            return Ok(Plan {
                h: 0.0,
                stages: Vec::new(),
                mean: self.mean,
            });
        }
        let dt = self.char_step();
        let steps = if dt.is_finite() {
            (span.abs() / dt).ceil().max(1.0) as usize
        } else {
            1
        };
        let h = span / steps as f64;
        let mut stages = Vec::with_capacity(2 * steps + 1);
        for s in 0..=2 * steps {
            stages.push(self.evaluator_at(from + 0.5 * h * s as f64));
        }
        Ok(Plan {
            h,
            stages,
            mean: self.mean,
        })
    }
}

struct Plan {
    h: f64,
    /// Evaluators at `from + h·s/2`, `s = 0..=2·steps`.
    stages: Vec<PointEvaluator>,
    mean: [f64; 3],
}

impl Plan {
    fn velocity(&self, stage: usize, x: [f64; 3]) -> [f64; 3] {
        let v = self.stages[stage].eval(x);
        [v[0] + self.mean[0], v[1] + self.mean[1], v[2] + self.mean[2]]
    }

    /// Classical RK4 through every substep.
    fn trace(&self, mut x: [f64; 3]) -> [f64; 3] {
        let h = self.h;
        let steps = self.stages.len().saturating_sub(1) / 2;
        let add = |a: [f64; 3], b: [f64; 3], s: f64| [a[0] + s * b[0], a[1] + s * b[1], a[2] + s * b[2]];
        for n in 0..steps {
            let k1 = self.velocity(2 * n, x);
            let k2 = self.velocity(2 * n + 1, add(x, k1, 0.5 * h));
            let k3 = self.velocity(2 * n + 1, add(x, k2, 0.5 * h));
            let k4 = self.velocity(2 * n + 2, add(x, k3, h));
            for d in 0..3 {
                x[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
            }
        }
        x
    }
}

/// Position at `t_end` of the particle that sits at `x` at time `t_start`.
pub fn trace_characteristic(traj: &VelocityTrajectory, t_end: f64, x: [f64; 3], t_start: f64) -> Result<[f64; 3]> {
    Ok(traj.plan(t_start, t_end)?.trace(x))
}

/// A scalar density at a known time.
#[derive(Debug, Clone)]
pub struct DensitySnapshot {
    pub time: f64,
    pub field: Arc<GridField>,
}

impl DensitySnapshot {
    pub fn new(time: f64, field: GridField) -> Self {
        Self {
            time,
            field: Arc::new(field),
        }
    }

    pub fn min(&self) -> f64 {
        self.field.min()
    }

    pub fn max(&self) -> f64 {
        self.field.max()
    }
}

/// Fritsch–Butland slope: harmonic mean of one-sided differences, zero at extrema.
#[inline]
fn fb_slope(dl: f64, dr: f64) -> f64 {
    if dl * dr > 0.0 {
        2.0 * dl * dr / (dl + dr)
    } else {
        0.0
    }
}

/// Monotone cubic Hermite on `[f0, f1]` with neighbours `fm`, `f2`; the result
/// is clamped into the interval range so no overshoot survives rounding.
#[inline]
fn monotone_cubic(fm: f64, f0: f64, f1: f64, f2: f64, s: f64) -> f64 {
    if s == 0.0 {
        return f0;
    }
    let d = f1 - f0;
    let m0 = fb_slope(f0 - fm, d);
    let m1 = fb_slope(d, f2 - f1);
    let s2 = s * s;
    let s3 = s2 * s;
    let v = (2.0 * s3 - 3.0 * s2 + 1.0) * f0
        + (s3 - 2.0 * s2 + s) * m0
        + (-2.0 * s3 + 3.0 * s2) * f1
        + (s3 - s2) * m1;
    v.clamp(f0.min(f1), f0.max(f1))
}

/// Bound-preserving tensor-product monotone cubic interpolation of a scalar field.
pub struct MonotoneInterpolator<'a> {
    field: &'a GridField,
}

impl<'a> MonotoneInterpolator<'a> {
    pub fn new(field: &'a GridField) -> Result<Self> {
        if field.rank() != Rank::Scalar {
            return Err(Error::InvalidArgument("interpolation needs a scalar field".into()));
        }
        Ok(Self { field })
    }

    /// Cell index and fractional offset, snapping roundoff-level offsets to nodes.
    #[inline]
    fn locate(d: &TorusDomain, x: f64) -> (i64, f64) {
        let u = d.wrap(x) / d.spacing();
        let mut i = u.floor();
        let mut s = u - i;
        if s < 1e-12 {
            s = 0.0;
        } else if s > 1.0 - 1e-12 {
            s = 0.0;
            i += 1.0;
        }
        (i as i64, s)
    }

    pub fn eval(&self, x: [f64; 3]) -> f64 {
        let d = self.field.domain();
        let n = d.grid_size as i64;
        let data = self.field.data();
        let (i, sx) = Self::locate(d, x[0]);
        let (j, sy) = Self::locate(d, x[1]);
        let (k, sz) = Self::locate(d, x[2]);
        let w = |a: i64| a.rem_euclid(n) as usize;
        let mut plane = [0.0; 4];
        for (a, pv) in plane.iter_mut().enumerate() {
            let ii = w(i + a as i64 - 1);
            let mut line = [0.0; 4];
            for (b, lv) in line.iter_mut().enumerate() {
                let jj = w(j + b as i64 - 1);
                let f = |c: i64| data[d.index(ii, jj, w(k + c))];
                *lv = monotone_cubic(f(-1), f(0), f(1), f(2), sz);
            }
            *pv = monotone_cubic(line[0], line[1], line[2], line[3], sy);
        }
        monotone_cubic(plane[0], plane[1], plane[2], plane[3], sx)
    }
}

/// Transport `source` along `traj` to time `t`: `ρ(t, x) = ρ_src(X(t_src; x, t))`.
pub fn advect_density(source: &DensitySnapshot, traj: &VelocityTrajectory, t: f64) -> Result<DensitySnapshot> {
    let field = source.field.as_ref();
    if field.domain() != traj.basis.domain() {
        return Err(Error::DomainMismatch("density and velocity grids differ".into()));
    }
    let plan = traj.plan(t, source.time)?;
    if plan.stages.is_empty() {
        return Ok(DensitySnapshot {
            time: t,
            field: Arc::clone(&source.field),
        });
    }
    let interp = MonotoneInterpolator::new(field)?;
    let d = *field.domain();
    let data = par::map_range(d.n_points(), |p| interp.eval(plan.trace(d.point(p))));
    Ok(DensitySnapshot::new(t, GridField::from_data(d, Rank::Scalar, data)?))
}

/// `P(Σ aᵢ ξᵢ ≤ c)` (or `< c` when `strict`) for `ξ` uniform on `[-½, ½]³`, `aᵢ ≥ 0`.
///
/// Inclusion-exclusion over the cube corners; widths far below the largest are
/// dropped, which perturbs the result only at second order in their ratio.
fn cube_cdf(c: f64, a: [f64; 3], strict: bool) -> f64 {
    let amax = a[0].max(a[1]).max(a[2]);
    let kept: Vec<f64> = a.iter().copied().filter(|&w| w > 1e-3 * amax && w > 0.0).collect();
    let half: f64 = 0.5 * kept.iter().sum::<f64>();
    if kept.is_empty() {
        return if c > 0.0 || (c == 0.0 && !strict) { 1.0 } else { 0.0 };
    }
    if c <= -half {
        return 0.0;
    }
    if c >= half {
        return 1.0;
    }
    let k = kept.len();
    let mut acc = 0.0;
    for mask in 0..(1usize << k) {
        let mut shift = c + half;
        for (i, w) in kept.iter().enumerate() {
            if mask & (1 << i) != 0 {
                shift -= w;
            }
        }
        if shift > 0.0 {
            let sign = if mask.count_ones() % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * shift.powi(k as i32);
        }
    }
    let denom: f64 = kept.iter().product::<f64>() * (1..=k).product::<usize>() as f64;
    (acc / denom).clamp(0.0, 1.0)
}

/// Per-cell value and linearized spread `|∂ᵢρ|·Δx` from centered differences.
fn cell_models(rho: &GridField) -> Vec<(f64, [f64; 3])> {
    let d = *rho.domain();
    let m = d.grid_size;
    let v = rho.data();
    let at = |i: usize, j: usize, k: usize| v[d.index(i % m, j % m, k % m)];
    par::map_range(d.n_points(), |p| {
        let (i, j, k) = d.unindex(p);
        let (ip, jp, kp) = (i + 1, j + 1, k + 1);
        let (im, jm, km) = (i + m - 1, j + m - 1, k + m - 1);
        let spread = [
            0.5 * (at(ip, j, k) - at(im, j, k)).abs(),
            0.5 * (at(i, jp, k) - at(i, jm, k)).abs(),
            0.5 * (at(i, j, kp) - at(i, j, km)).abs(),
        ];
        (v[p], spread)
    })
}

fn band_fraction(cell: &(f64, [f64; 3]), alpha: f64, beta: f64) -> f64 {
    let (v, a) = cell;
    (cube_cdf(beta - v, *a, false) - cube_cdf(alpha - v, *a, true)).max(0.0)
}

/// Volume of `{alpha ≤ ρ ≤ beta}`.
///
/// Each cell carries the linear model `ρ_p + ∇ρ_p·(x - x_p)` and contributes
/// the exact volume fraction of that model inside the band. This is second
/// order in the grid spacing for smooth fields, whereas plain sample counting
/// is first order. A grid translation permutes the cells, so the measure of a
/// lattice-shifted field is unchanged.
pub fn level_set_measure(rho: &GridField, alpha: f64, beta: f64) -> Result<f64> {
    if alpha > beta || alpha.is_nan() || beta.is_nan() {
        return Err(Error::InvalidArgument(format!("empty band [{alpha}, {beta}]")));
    }
    if rho.rank() != Rank::Scalar {
        return Err(Error::InvalidArgument("level sets need a scalar field".into()));
    }
    let cells = cell_models(rho);
    let total: f64 = cells.iter().map(|c| band_fraction(c, alpha, beta)).sum();
    Ok(total * rho.domain().cell_volume())
}

/// One histogram bin `[lo, hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelSetBin {
    pub lo: f64,
    pub hi: f64,
    pub volume: f64,
}

/// Equal-width histogram over `[lo, hi]`; each bin holds `level_set_measure`
/// of its band.
pub fn level_set_histogram(rho: &GridField, lo: f64, hi: f64, bins: usize) -> Result<Vec<LevelSetBin>> {
    if bins == 0 || !(hi >= lo) {
        return Err(Error::InvalidArgument(format!("bad histogram [{lo}, {hi}] x {bins}")));
    }
    if rho.rank() != Rank::Scalar {
        return Err(Error::InvalidArgument("level sets need a scalar field".into()));
    }
    let width = (hi - lo) / bins as f64;
    let edge = |b: usize| if b == bins { hi } else { lo + width * b as f64 };
    let cells = cell_models(rho);
    // bins are half-open `[lo, hi)` except the last, which is closed
    let mut below = vec![0.0; bins + 1];
    for (v, a) in &cells {
        for (b, acc) in below.iter_mut().enumerate() {
            *acc += cube_cdf(edge(b) - v, *a, b < bins);
        }
    }
    let dv = rho.domain().cell_volume();
    Ok((0..bins)
        .map(|b| LevelSetBin {
            lo: edge(b),
            hi: edge(b + 1),
            volume: dv * (below[b + 1] - below[b]).max(0.0),
        })
        .collect())
}


#[cfg(test)]
mod proptests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn monotone_cubic_never_overshoots(
            f in proptest::array::uniform4(-5.0f64..5.0),
            s in 0.0f64..1.0,
        ) {
            let v = monotone_cubic(f[0], f[1], f[2], f[3], s);
            prop_assert!(v >= f[1].min(f[2]) && v <= f[1].max(f[2]));
        }

        #[test]
        fn interpolant_within_field_range(
            seed in proptest::collection::vec(1.0f64..3.0, 64),
            x in proptest::array::uniform3(-10.0f64..10.0),
        ) {
            let d = TorusDomain::new(1.0, 4).unwrap();
            let f = GridField::from_data(d, Rank::Scalar, seed).unwrap();
            let v = MonotoneInterpolator::new(&f).unwrap().eval(x);
            prop_assert!(v >= f.min() && v <= f.max());
        }

        #[test]
        fn cube_cdf_is_a_symmetric_distribution(
            a in proptest::array::uniform3(0.0f64..2.0),
            c in -4.0f64..4.0,
            dc in 0.0f64..1.0,
        ) {
            let f = cube_cdf(c, a, false);
            prop_assert!((0.0..=1.0).contains(&f));
            prop_assert!(cube_cdf(c + dc, a, false) >= f - 1e-12);
            // the sum of centered uniforms is symmetric about zero
            prop_assert!((f + cube_cdf(-c, a, true) - 1.0).abs() < 1e-9);
        }
    }
}
