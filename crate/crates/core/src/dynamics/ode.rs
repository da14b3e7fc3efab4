//! Adaptive integrators for `y' = f(t, y)`.
//!
//! - [`Integrator::DormandPrince`]: explicit 5(4) pair with FSAL, a PI step
//!   controller and fifth-order continuous extension.
//! - [`Integrator::Rosenbrock`]: the linearly implicit 2(3) pair of Shampine
//!   and Reichelt (L-stable), with a finite-difference Jacobian, for stiff
//!   first-order flows.
//!
//! Both return the solution at requested output times via dense output.

use crate::{Error, Matrix, Result, Vector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Integrator {
    DormandPrince,
    Rosenbrock,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub max_steps: usize,
    pub integrator: Integrator,
    /// Steps below `min_step_ratio · |t|` abort with `StepUnderflow`.
    pub min_step_ratio: f64,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-8,
            atol: 1e-10,
            max_steps: 50_000_000,
            integrator: Integrator::DormandPrince,
            min_step_ratio: 1e-14,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OdeSolution {
    pub times: Vec<f64>,
    pub states: Vec<Vector>,
    pub stats: OdeStats,
}

/// Integrates from `(t0, y0)` to the last of `outputs` (sorted, all `≥ t0`).
pub fn solve<F>(mut f: F, t0: f64, y0: &Vector, outputs: &[f64], opts: &OdeOptions) -> Result<OdeSolution>
where
    F: FnMut(f64, &Vector) -> Result<Vector>,
{
    validate(t0, outputs, opts)?;
    match opts.integrator {
        Integrator::DormandPrince => dopri5(&mut f, t0, y0, outputs, opts),
        Integrator::Rosenbrock => {
            let mut jac = |t: f64, y: &Vector, f: &mut F| fd_jacobian(f, t, y, None);
            rosenbrock23(&mut f, &mut jac, t0, y0, outputs, opts)
        }
    }
}

/// Rosenbrock integration with a caller-supplied `(∂f/∂y, ∂f/∂t)`.
pub fn solve_stiff<F, J>(
    mut f: F,
    mut jac: J,
    t0: f64,
    y0: &Vector,
    outputs: &[f64],
    opts: &OdeOptions,
) -> Result<OdeSolution>
where
    F: FnMut(f64, &Vector) -> Result<Vector>,
    J: FnMut(f64, &Vector, &mut F) -> Result<(Matrix, Vector)>,
{
    validate(t0, outputs, opts)?;
    rosenbrock23(&mut f, &mut jac, t0, y0, outputs, opts)
}

fn validate(t0: f64, outputs: &[f64], opts: &OdeOptions) -> Result<()> {
    if outputs.is_empty() {
        return Err(Error::InvalidIntegration("no output times requested".into()));
    }
    if outputs.windows(2).any(|w| w[1] < w[0]) || outputs[0] < t0 {
        return Err(Error::InvalidIntegration(
            "output times must be sorted and not precede t0".into(),
        ));
    }
    if !(opts.rtol > 0.0) || !(opts.atol > 0.0) {
        return Err(Error::InvalidIntegration("tolerances must be positive".into()));
    }
    Ok(())
}

fn error_norm(err: &Vector, y: &Vector, y_new: &Vector, opts: &OdeOptions) -> f64 {
    let n = err.len().max(1) as f64;
    let s: f64 = (0..err.len())
        .map(|i| {
            let sk = opts.atol + opts.rtol * y[i].abs().max(y_new[i].abs());
            (err[i] / sk).powi(2)
        })
        .sum();
    (s / n).sqrt()
}

fn check_finite(y: &Vector, t: f64) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("state at t = {t}")))
    }
}

/// Starting step size (Hairer, Nørsett & Wanner, II.4).
fn initial_step<F>(f: &mut F, t0: f64, y0: &Vector, f0: &Vector, order: f64, t_end: f64, opts: &OdeOptions) -> Result<f64>
where
    F: FnMut(f64, &Vector) -> Result<Vector>,
{
    let sk = y0.map(|v| opts.atol + opts.rtol * v.abs());
    let n = y0.len().max(1) as f64;
    let norm = |v: &Vector| ((0..v.len()).map(|i| (v[i] / sk[i]).powi(2)).sum::<f64>() / n).sqrt();
    let d0 = norm(y0);
    let d1 = norm(f0);
    let span = t_end - t0;
    let mut h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    h0 = h0.min(span);
    let y1 = y0 + f0 * h0;
    let f1 = f(t0 + h0, &y1)?;
    let d2 = norm(&(f1 - f0)) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / (order + 1.0))
    };
    Ok((100.0 * h0).min(h1).min(span).max(opts.min_step_ratio * t0.abs() * 10.0))
}

// Dormand–Prince 5(4) tableau
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
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;
const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

// PI controller constants
const BETA: f64 = 0.04;
const SAFE: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 10.0;

fn dopri5<F>(f: &mut F, t0: f64, y0: &Vector, outputs: &[f64], opts: &OdeOptions) -> Result<OdeSolution>
where
    F: FnMut(f64, &Vector) -> Result<Vector>,
{
    let t_end = *outputs.last().unwrap();
    let mut stats = OdeStats::default();
    let mut times = Vec::with_capacity(outputs.len());
    let mut states = Vec::with_capacity(outputs.len());
    let mut next_out = 0;
    while next_out < outputs.len() && outputs[next_out] <= t0 {
        times.push(outputs[next_out]);
        states.push(y0.clone());
        next_out += 1;
    }
    if next_out == outputs.len() {
        return Ok(OdeSolution { times, states, stats });
    }

    let mut t = t0;
    let mut y = y0.clone();
    let mut k1 = f(t, &y)?;
    stats.evaluations += 1;
    let mut h = initial_step(f, t, &y, &k1, 5.0, t_end, opts)?;
    stats.evaluations += 1;
    let expo1 = 0.2 - BETA * 0.75;
    let mut fac_old: f64 = 1e-4;
    let mut last_rejected = false;

    loop {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::TooManySteps {
                t,
                max_steps: opts.max_steps,
            });
        }
        if h < opts.min_step_ratio * t.abs() {
            return Err(Error::StepUnderflow { t, h, lipschitz: None });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }

        let k2 = f(t + C2 * h, &(&y + &k1 * (h * A21)))?;
        let k3 = f(t + C3 * h, &(&y + (&k1 * A31 + &k2 * A32) * h))?;
        let k4 = f(t + C4 * h, &(&y + (&k1 * A41 + &k2 * A42 + &k3 * A43) * h))?;
        let k5 = f(
            t + C5 * h,
            &(&y + (&k1 * A51 + &k2 * A52 + &k3 * A53 + &k4 * A54) * h),
        )?;
        let k6 = f(
            t + h,
            &(&y + (&k1 * A61 + &k2 * A62 + &k3 * A63 + &k4 * A64 + &k5 * A65) * h),
        )?;
        let y_new = &y + (&k1 * A71 + &k3 * A73 + &k4 * A74 + &k5 * A75 + &k6 * A76) * h;
        let k7 = f(t + h, &y_new)?;
        stats.evaluations += 6;

        let err_vec = (&k1 * E1 + &k3 * E3 + &k4 * E4 + &k5 * E5 + &k6 * E6 + &k7 * E7) * h;
        let err = error_norm(&err_vec, &y, &y_new, opts);
        if !err.is_finite() {
            stats.rejected += 1;
            h *= FAC_MIN;
            last_rejected = true;
            continue;
        }

        let fac11 = err.powf(expo1);
        if err <= 1.0 {
            check_finite(&y_new, t + h)?;
            let mut fac = fac11 / fac_old.powf(BETA);
            fac = (1.0 / FAC_MAX).max((1.0 / FAC_MIN).min(fac / SAFE));
            let mut h_new = h / fac;
            fac_old = err.max(1e-4);
            stats.accepted += 1;

            let t_new = if last { t_end } else { t + h };
            if next_out < outputs.len() && outputs[next_out] <= t_new {
                let ydiff = &y_new - &y;
                let bspl = &k1 * h - &ydiff;
                let r4 = &ydiff - &k7 * h - &bspl;
                let r5 = (&k1 * D1 + &k3 * D3 + &k4 * D4 + &k5 * D5 + &k6 * D6 + &k7 * D7) * h;
                while next_out < outputs.len() && outputs[next_out] <= t_new {
                    let to = outputs[next_out];
                    let state = if to == t_new {
                        y_new.clone()
                    } else {
                        let th = (to - t) / h;
                        let th1 = 1.0 - th;
                        &y + (&ydiff + (&bspl + (&r4 + &r5 * th1) * th) * th1) * th
                    };
                    times.push(to);
                    states.push(state);
                    next_out += 1;
                }
            }

            t = t_new;
            y = y_new;
            k1 = k7;
            if last || next_out == outputs.len() {
                return Ok(OdeSolution { times, states, stats });
            }
            if last_rejected {
                h_new = h_new.min(h);
            }
            last_rejected = false;
            h = h_new;
        } else {
            stats.rejected += 1;
            h /= (1.0 / FAC_MIN).min(fac11 / SAFE);
            last_rejected = true;
        }
    }
}

/// Central-difference Jacobian `∂f/∂y` and time derivative `∂f/∂t`. The
/// state step defaults to `ε^{1/3} max(|yⱼ|, 10⁻³)`; `step` overrides it.
pub fn fd_jacobian<F>(f: &mut F, t: f64, y: &Vector, step: Option<f64>) -> Result<(Matrix, Vector)>
where
    F: FnMut(f64, &Vector) -> Result<Vector>,
{
    let n = y.len();
    let mut jac = Matrix::zeros(n, n);
    let eps = f64::EPSILON.cbrt();
    for j in 0..n {
        let dj = step.unwrap_or(eps * y[j].abs().max(1e-3));
        let mut up = y.clone();
        let mut dn = y.clone();
        up[j] += dj;
        dn[j] -= dj;
        let col = (f(t, &up)? - f(t, &dn)?) / (2.0 * dj);
        jac.set_column(j, &col);
    }
    let dt = eps * t.abs().max(1e-3);
    let ft = (f(t + dt, y)? - f(t - dt, y)?) / (2.0 * dt);
    Ok((jac, ft))
}

fn rosenbrock23<F, J>(
    f: &mut F,
    jac_fn: &mut J,
    t0: f64,
    y0: &Vector,
    outputs: &[f64],
    opts: &OdeOptions,
) -> Result<OdeSolution>
where
    F: FnMut(f64, &Vector) -> Result<Vector>,
    J: FnMut(f64, &Vector, &mut F) -> Result<(Matrix, Vector)>,
{
    let d = 1.0 / (2.0 + std::f64::consts::SQRT_2);
    let e32 = 6.0 + std::f64::consts::SQRT_2;
    let t_end = *outputs.last().unwrap();
    let n = y0.len();
    let mut stats = OdeStats::default();
    let mut times = Vec::with_capacity(outputs.len());
    let mut states = Vec::with_capacity(outputs.len());
    let mut next_out = 0;
    while next_out < outputs.len() && outputs[next_out] <= t0 {
        times.push(outputs[next_out]);
        states.push(y0.clone());
        next_out += 1;
    }
    if next_out == outputs.len() {
        return Ok(OdeSolution { times, states, stats });
    }

    let mut t = t0;
    let mut y = y0.clone();
    let mut f0 = f(t, &y)?;
    stats.evaluations += 1;
    let mut h = initial_step(f, t, &y, &f0, 2.0, t_end, opts)?;
    stats.evaluations += 1;
    let (mut jac, mut ft) = jac_fn(t, &y, f)?;
    let mut jac_fresh = true;

    loop {
        if stats.accepted + stats.rejected >= opts.max_steps {
            return Err(Error::TooManySteps {
                t,
                max_steps: opts.max_steps,
            });
        }
        if h < opts.min_step_ratio * t.abs() {
            return Err(Error::StepUnderflow { t, h, lipschitz: None });
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }

        let w = Matrix::identity(n, n) - &jac * (h * d);
        let Some(lu) = Some(w.lu()).filter(|lu| lu.is_invertible()) else {
            stats.rejected += 1;
            h *= 0.5;
            continue;
        };
        let solve = |rhs: &Vector| lu.solve(rhs).expect("invertible");

        let k1 = solve(&(&f0 + &ft * (h * d)));
        let f1 = f(t + 0.5 * h, &(&y + &k1 * (0.5 * h)))?;
        let k2 = solve(&(&f1 - &k1)) + &k1;
        let y_new = &y + &k2 * h;
        let f2 = f(t + h, &y_new)?;
        let k3 = solve(&(&f2 - (&k2 - &f1) * e32 - (&k1 - &f0) * 2.0 + &ft * (h * d)));
        stats.evaluations += 2;
        let err_vec = (&k1 - &k2 * 2.0 + &k3) * (h / 6.0);
        let err = error_norm(&err_vec, &y, &y_new, opts);

        if err.is_finite() && err <= 1.0 {
            check_finite(&y_new, t + h)?;
            stats.accepted += 1;
            let t_new = if last { t_end } else { t + h };
            while next_out < outputs.len() && outputs[next_out] <= t_new {
                let to = outputs[next_out];
                let state = if to == t_new {
                    y_new.clone()
                } else {
                    let s = (to - t) / h;
                    &y + (&k1 * (s * (1.0 - s) / (1.0 - 2.0 * d)) + &k2 * (s * (s - 2.0 * d) / (1.0 - 2.0 * d))) * h
                };
                times.push(to);
                states.push(state);
                next_out += 1;
            }
            t = t_new;
            y = y_new;
            f0 = f2;
            if last || next_out == outputs.len() {
                return Ok(OdeSolution { times, states, stats });
            }
            let fac = if err > 0.0 { 0.8 * err.powf(-1.0 / 3.0) } else { 5.0 };
            h *= fac.clamp(0.2, 5.0);
            let (j, dt) = jac_fn(t, &y, f)?;
            jac = j;
            ft = dt;
            jac_fresh = true;
        } else {
            stats.rejected += 1;
            if !jac_fresh {
                let (j, dt) = jac_fn(t, &y, f)?;
                jac = j;
                ft = dt;
                jac_fresh = true;
            }
            let fac = if err.is_finite() { 0.8 * err.powf(-1.0 / 3.0) } else { 0.2 };
            h *= fac.clamp(0.1, 0.5);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn harmonic(_t: f64, y: &Vector) -> Result<Vector> {
        Ok(Vector::from_vec(vec![y[1], -y[0]]))
    }

    #[test]
    fn dormand_prince_harmonic_oscillator() {
        let outs: Vec<f64> = (1..=20).map(|k| k as f64 * 0.5).collect();
        let sol = solve(harmonic, 0.0, &Vector::from_vec(vec![1.0, 0.0]), &outs, &OdeOptions::default())
            .unwrap();
        for (t, y) in sol.times.iter().zip(&sol.states) {
            assert!((y[0] - t.cos()).abs() < 1e-7, "t = {t}: {} vs {}", y[0], t.cos());
            assert!((y[1] + t.sin()).abs() < 1e-7);
        }
    }

    #[test]
    fn dense_output_is_accurate_between_steps() {
        // y' = y on a fine output grid; dense output must track exp
        let outs: Vec<f64> = (0..=1000).map(|k| k as f64 * 1e-3).collect();
        let opts = OdeOptions {
            rtol: 1e-10,
            atol: 1e-12,
            ..Default::default()
        };
        let sol = solve(|_, y| Ok(y.clone()), 0.0, &Vector::from_element(1, 1.0), &outs, &opts).unwrap();
        let worst = sol
            .times
            .iter()
            .zip(&sol.states)
            .map(|(t, y)| (y[0] - t.exp()).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-9, "{worst}");
        assert!(sol.stats.accepted < 100);
    }

    #[test]
    fn rosenbrock_handles_stiff_decay() {
        // y' = −10⁶ (y − cos t) − sin t has solution y = cos t
        let f = |t: f64, y: &Vector| Ok(Vector::from_element(1, -1e6 * (y[0] - t.cos()) - t.sin()));
        let opts = OdeOptions {
            integrator: Integrator::Rosenbrock,
            rtol: 1e-6,
            atol: 1e-8,
            ..Default::default()
        };
        let sol = solve(f, 0.0, &Vector::from_element(1, 1.0), &[1.0, 5.0], &opts).unwrap();
        assert!((sol.states[1][0] - 5f64.cos()).abs() < 1e-5);
        assert!(sol.stats.accepted < 5000, "{:?}", sol.stats);
    }

    #[test]
    fn rejects_unsorted_outputs() {
        let r = solve(harmonic, 0.0, &Vector::zeros(2), &[1.0, 0.5], &OdeOptions::default());
        assert!(matches!(r, Err(Error::InvalidIntegration(_))));
    }
}
