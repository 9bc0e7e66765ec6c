//! Adaptive Dormand–Prince 4(5) integrator with dense output at fixed knots.

use crate::error::{Error, Result};

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order minus embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

/// Step-size controller settings.
#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub atol: f64,
    pub rtol: f64,
    /// Steps below `h_floor · max(1, |t|)` abort the integration.
    pub h_floor: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self {
            atol: tol,
            rtol: tol,
            h_floor: 1e-13,
            max_steps: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// Integrate `y' = f(t, y)` from `t0` through the increasing `knots`
/// (all `> t0`), landing exactly on each; returns the state at every knot.
pub fn integrate<F>(
    mut f: F,
    t0: f64,
    y0: &[f64],
    knots: &[f64],
    opts: &OdeOptions,
) -> Result<(Vec<Vec<f64>>, OdeStats)>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let mut stats = OdeStats::default();
    if knots.iter().any(|k| !k.is_finite()) || knots.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument("ODE output knots must increase".into()));
    }
    if let Some(&k) = knots.first() {
        if k <= t0 {
            return Err(Error::InvalidArgument("ODE output knots must follow t0".into()));
        }
    }
    let mut out = Vec::with_capacity(knots.len());
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut k1 = vec![0.0; n];
    let (mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) =
        (vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n], vec![0.0; n]);
    let mut ytmp = vec![0.0; n];
    let mut ynew = vec![0.0; n];
    f(t, &y, &mut k1);
    stats.rhs_evals += 1;
    let Some(&t_last) = knots.last() else {
        return Ok((out, stats));
    };
    let mut h = initial_step(&mut f, t, &y, &k1, t_last - t0, opts, &mut stats);
    let mut reject_prev = false;
    let mut next_knot = 0;

    while next_knot < knots.len() {
        let target = knots[next_knot];
        let mut lands = false;
        if t + h >= target || t + 1.01 * h >= target {
            h = target - t;
            lands = true;
        }
        if h < opts.h_floor * t.abs().max(1.0) {
            return Err(Error::StepSizeUnderflow { window_start: t0, t, h });
        }
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::StepSizeUnderflow { window_start: t0, t, h });
        }

        for i in 0..n {
            ytmp[i] = y[i] + h * A21 * k1[i];
        }
        f(t + C2 * h, &ytmp, &mut k2);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A31 * k1[i] + A32 * k2[i]);
        }
        f(t + C3 * h, &ytmp, &mut k3);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]);
        }
        f(t + C4 * h, &ytmp, &mut k4);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]);
        }
        f(t + C5 * h, &ytmp, &mut k5);
        for i in 0..n {
            ytmp[i] = y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i]);
        }
        let t_new = if lands { target } else { t + h };
        f(t_new, &ytmp, &mut k6);
        for i in 0..n {
            ynew[i] = y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i]);
        }
        f(t_new, &ynew, &mut k7);
        stats.rhs_evals += 6;

        let mut err = 0.0;
        for i in 0..n {
            let e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i]);
            let sc = opts.atol + opts.rtol * y[i].abs().max(ynew[i].abs());
            err += (e / sc) * (e / sc);
        }
        let err = if n > 0 { (err / n as f64).sqrt() } else { 0.0 };
        if !err.is_finite() {
            return Err(Error::NonFinite(format!("ODE error estimate at t = {t}")));
        }

        if err <= 1.0 {
            stats.accepted += 1;
            std::mem::swap(&mut y, &mut ynew);
            std::mem::swap(&mut k1, &mut k7);
            t = t_new;
            if lands {
                out.push(y.clone());
                next_knot += 1;
            }
            let mut fac = if err == 0.0 { 5.0 } else { 0.9 * err.powf(-0.2) };
            fac = fac.clamp(0.2, 5.0);
            if reject_prev {
                fac = fac.min(1.0);
            }
            h *= fac;
            reject_prev = false;
        } else {
            stats.rejected += 1;
            h *= (0.9 * err.powf(-0.2)).max(0.2);
            reject_prev = true;
        }
    }
    Ok((out, stats))
}

/// Fixed-step fifth-order Dormand–Prince from `t0` to `t1` in `steps` steps.
///
/// Used to measure the convergence order of the stepper itself.
pub fn integrate_fixed<F>(mut f: F, t0: f64, y0: &[f64], t1: f64, steps: usize) -> Vec<f64>
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y0.len();
    let h = (t1 - t0) / steps.max(1) as f64;
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; n]; 6];
    let mut tmp = vec![0.0; n];
    let a: [&[f64]; 5] = [
        &[A21],
        &[A31, A32],
        &[A41, A42, A43],
        &[A51, A52, A53, A54],
        &[A61, A62, A63, A64, A65],
    ];
    let c = [C2, C3, C4, C5, 1.0];
    for s in 0..steps.max(1) {
        let t = t0 + h * s as f64;
        f(t, &y, &mut k[0]);
        for stage in 0..5 {
            for i in 0..n {
                tmp[i] = y[i] + h * a[stage].iter().enumerate().map(|(j, aj)| aj * k[j][i]).sum::<f64>();
            }
            let (_, tail) = k.split_at_mut(stage + 1);
            f(t + c[stage] * h, &tmp, &mut tail[0]);
        }
        for i in 0..n {
            y[i] += h * (B1 * k[0][i] + B3 * k[2][i] + B4 * k[3][i] + B5 * k[4][i] + B6 * k[5][i]);
        }
    }
    y
}

/// Starting step after Hairer, Nørsett & Wanner, capped by the span.
fn initial_step<F>(f: &mut F, t: f64, y: &[f64], f0: &[f64], span: f64, opts: &OdeOptions, stats: &mut OdeStats) -> f64
where
    F: FnMut(f64, &[f64], &mut [f64]),
{
    let n = y.len().max(1) as f64;
    let sc = |v: f64| opts.atol + opts.rtol * v.abs();
    let d0 = (y.iter().map(|v| (v / sc(*v)).powi(2)).sum::<f64>() / n).sqrt();
    let d1 = (y.iter().zip(f0).map(|(v, d)| (d / sc(*v)).powi(2)).sum::<f64>() / n).sqrt();
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let h0 = h0.min(span);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(v, d)| v + h0 * d).collect();
    let mut f1 = vec![0.0; y.len()];
    f(t + h0, &y1, &mut f1);
    stats.rhs_evals += 1;
    let d2 = (y
        .iter()
        .zip(f0.iter().zip(&f1))
        .map(|(v, (a, b))| ((b - a) / sc(*v)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt()
        / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(0.2)
    };
    (100.0 * h0).min(h1).min(span)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exponential_decay() {
        let opts = OdeOptions::with_tol(1e-10);
        let knots = [0.5, 1.0];
        let (ys, _) = integrate(|_, y, d| d[0] = -3.0 * y[0], 0.0, &[2.0], &knots, &opts).unwrap();
        assert!((ys[0][0] - 2.0 * (-1.5f64).exp()).abs() < 1e-9);
        assert!((ys[1][0] - 2.0 * (-3.0f64).exp()).abs() < 1e-9);
    }

    #[test]
    fn harmonic_oscillator_convergence_order() {
        let knots = [2.0];
        let err = |tol: f64| {
            let (ys, _) = integrate(
                |_, y, d| {
                    d[0] = y[1];
                    d[1] = -y[0];
                },
                0.0,
                &[1.0, 0.0],
                &knots,
                &OdeOptions::with_tol(tol),
            )
            .unwrap();
            ((ys[0][0] - 2f64.cos()).powi(2) + (ys[0][1] + 2f64.sin()).powi(2)).sqrt()
        };
        let (e1, e2) = (err(1e-6), err(1e-8));
        assert!(e1 < 1e-5 && e2 < e1 / 10.0, "{e1} {e2}");
    }

    #[test]
    fn fixed_step_order_is_five() {
        let rhs = |_: f64, y: &[f64], d: &mut [f64]| {
            d[0] = y[1];
            d[1] = -y[0];
        };
        let err = |steps| {
            let y = integrate_fixed(rhs, 0.0, &[1.0, 0.0], 2.0, steps);
            ((y[0] - 2f64.cos()).powi(2) + (y[1] + 2f64.sin()).powi(2)).sqrt()
        };
        let order = (err(8) / err(16)).log2();
        assert!(order > 4.5, "{order}");
    }

    #[test]
    fn zero_state_stays_zero() {
        let (ys, _) = integrate(|_, y, d| d[0] = -y[0], 0.0, &[0.0], &[1.0], &OdeOptions::with_tol(1e-9)).unwrap();
        assert_eq!(ys[0][0], 0.0);
    }

    #[test]
    fn time_dependent_rhs_hits_knots() {
        let knots: Vec<f64> = (1..=4).map(|i| 0.25 * i as f64).collect();
        let (ys, _) = integrate(|t, _, d| d[0] = 3.0 * t * t, 0.0, &[0.0], &knots, &OdeOptions::with_tol(1e-12)).unwrap();
        for (k, y) in knots.iter().zip(&ys) {
            assert!((y[0] - k.powi(3)).abs() < 1e-12);
        }
    }

    #[test]
    fn blow_up_reports_underflow() {
        let mut opts = OdeOptions::with_tol(1e-8);
        opts.max_steps = 10_000;
        let r = integrate(|_, y, d| d[0] = y[0] * y[0], 0.0, &[1.0], &[2.0], &opts);
        assert!(r.is_err());
    }

    #[test]
    fn bad_knots_rejected() {
        let opts = OdeOptions::with_tol(1e-8);
        assert!(integrate(|_, _, d| d[0] = 0.0, 1.0, &[0.0], &[0.5], &opts).is_err());
        assert!(integrate(|_, _, d| d[0] = 0.0, 0.0, &[0.0], &[0.5, 0.4], &opts).is_err());
    }
}
