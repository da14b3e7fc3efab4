//! Continuous-time flows driven by `φ_{μ(t)}`:
//!
//! ```text
//! inertial:   ẍ + (α/t) ẋ + ∇φ_{μ(t)}(x) = 0
//! gradient:   ẋ = −∇φ_{μ(t)}(x)
//! ```
//!
//! and the Lyapunov/rate diagnostics evaluated along sampled trajectories.

mod diagnostics;
pub mod ode;
mod schedule;

use crate::dro::DroEvaluator;
use crate::smoothing::SupProblem;
use crate::{Error, Matrix, Result, Vector};

pub use diagnostics::{
    accelerated_rate_bound, diagnostics, energy_derivative_bound, energy_derivative_check,
    gradflow_raw_gap_bound, gradflow_value_bound, window_max, DiagnosticsRecord, EnergyCheck,
    Reference,
};
pub use ode::{Integrator, OdeOptions, OdeStats};
pub use schedule::{schedule_check, AssumptionFlags, Schedule, ScheduleReport};

/// `φ_μ`, `∇φ_μ` and `D(λ^μ)` at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct SmoothPoint {
    pub value: f64,
    pub grad: Vector,
    pub penalty: f64,
}

/// A smoothed supremum objective as seen by the flows.
///
/// Evaluation takes `&mut self` so implementations may keep per-trajectory
/// warm-start state.
pub trait SmoothedObjective {
    fn dim(&self) -> usize;

    /// `C = sup_Q D`.
    fn sup_constant(&self) -> f64;

    fn smoothed(&mut self, x: &Vector, mu: f64) -> Result<SmoothPoint>;

    /// The unsmoothed `φ(x)`.
    fn raw_value(&mut self, x: &Vector) -> Result<f64>;

    /// Upper bound on the Lipschitz modulus of `∇φ_μ` near `x`.
    fn lipschitz_estimate(&self, _x: &Vector, _mu: f64) -> Option<f64> {
        None
    }

    /// `max_i ‖∇gᵢ(x)‖`; sets the length scale `μ / G` on which `∇φ_μ` varies.
    fn gradient_scale(&self, _x: &Vector) -> f64 {
        1.0
    }
}

impl SmoothedObjective for SupProblem {
    fn dim(&self) -> usize {
        SupProblem::dim(self)
    }

    fn sup_constant(&self) -> f64 {
        SupProblem::sup_constant(self)
    }

    fn smoothed(&mut self, x: &Vector, mu: f64) -> Result<SmoothPoint> {
        let e = self.evaluate(x, mu)?;
        Ok(SmoothPoint {
            value: e.value,
            grad: e.grad,
            penalty: e.penalty,
        })
    }

    fn raw_value(&mut self, x: &Vector) -> Result<f64> {
        self.sup_value(x)
    }

    fn lipschitz_estimate(&self, x: &Vector, mu: f64) -> Option<f64> {
        self.lipschitz_bound(x, 1.0, mu).ok()
    }

    fn gradient_scale(&self, x: &Vector) -> f64 {
        max_row_norm(&self.objectives().jacobian(x))
    }
}

impl SmoothedObjective for DroEvaluator {
    fn dim(&self) -> usize {
        self.costs().dim()
    }

    fn sup_constant(&self) -> f64 {
        DroEvaluator::sup_constant(self)
    }

    fn smoothed(&mut self, x: &Vector, mu: f64) -> Result<SmoothPoint> {
        let e = self.evaluate(x, mu)?;
        Ok(SmoothPoint {
            value: e.value,
            grad: e.grad,
            penalty: e.penalty,
        })
    }

    fn raw_value(&mut self, x: &Vector) -> Result<f64> {
        DroEvaluator::raw_value(self, x)
    }

    fn lipschitz_estimate(&self, x: &Vector, mu: f64) -> Option<f64> {
        let l = self.costs().component_lipschitz(x, 1.0)?;
        let g = self.costs().gradient_norm_bound(x, 1.0)?;
        Some(crate::smoothing::lipschitz_formula(1.0, l.sum(), g.norm(), mu, 1.0))
    }

    fn gradient_scale(&self, x: &Vector) -> f64 {
        max_row_norm(&self.costs().jacobian(x))
    }
}

fn max_row_norm(j: &Matrix) -> f64 {
    (0..j.nrows()).map(|i| j.row(i).norm()).fold(0.0, f64::max)
}

/// `(t, x, ẋ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryState {
    pub t: f64,
    pub x: Vector,
    pub v: Vector,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowKind {
    Inertial { alpha: f64 },
    Gradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub kind: FlowKind,
    pub t0: f64,
    pub states: Vec<TrajectoryState>,
    pub stats: OdeStats,
    pub warnings: Vec<String>,
}

impl Trajectory {
    pub fn last(&self) -> &TrajectoryState {
        self.states.last().expect("trajectories are never empty")
    }
}

/// Output times for a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub enum Sampler {
    LogSpaced(usize),
    Linear(usize),
    Times(Vec<f64>),
}

impl Default for Sampler {
    fn default() -> Self {
        Sampler::LogSpaced(400)
    }
}

impl Sampler {
    pub fn times(&self, t0: f64, t_end: f64) -> Vec<f64> {
        match self {
            Sampler::LogSpaced(k) => {
                let k = (*k).max(2);
                let mut ts: Vec<f64> = (0..k)
                    .map(|i| t0 * (t_end / t0).powf(i as f64 / (k - 1) as f64))
                    .collect();
                ts[0] = t0;
                ts[k - 1] = t_end;
                ts
            }
            Sampler::Linear(k) => {
                let k = (*k).max(2);
                let mut ts: Vec<f64> = (0..k)
                    .map(|i| t0 + (t_end - t0) * i as f64 / (k - 1) as f64)
                    .collect();
                ts[k - 1] = t_end;
                ts
            }
            Sampler::Times(ts) => ts.clone(),
        }
    }
}

/// `(ẋ, ẍ) = (v, −(α/t) v − ∇φ_{μ(t)}(x))`.
pub fn inertial_field(
    obj: &mut dyn SmoothedObjective,
    schedule: &Schedule,
    alpha: f64,
    state: &TrajectoryState,
) -> Result<(Vector, Vector)> {
    let g = obj.smoothed(&state.x, schedule.mu(state.t))?.grad;
    let acc = -(&state.v * (alpha / state.t)) - g;
    Ok((state.v.clone(), acc))
}

fn check_request(t0: f64, t_end: f64, x0: &Vector, dim: usize) -> Result<()> {
    if !(t0 > 0.0) || !(t_end > t0) {
        return Err(Error::InvalidIntegration(format!(
            "need 0 < t0 < T, got t0 = {t0}, T = {t_end}"
        )));
    }
    if x0.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            got: x0.len(),
        });
    }
    Ok(())
}

fn sample_times(sampler: &Sampler, t0: f64, t_end: f64) -> Result<Vec<f64>> {
    let ts = sampler.times(t0, t_end);
    if ts.first().map_or(true, |&t| t < t0) || ts.last().map_or(true, |&t| t > t_end) {
        return Err(Error::InvalidIntegration("sample times must lie in [t0, T]".into()));
    }
    Ok(ts)
}

/// Finite-difference step for `∇φ_μ`, well below its variation length `μ/G`.
fn fd_step(obj: &dyn SmoothedObjective, x: &Vector, mu: f64) -> f64 {
    let rel = f64::EPSILON.cbrt() * x.amax().max(1.0);
    let smooth = 1e-2 * mu / (1.0 + obj.gradient_scale(x));
    rel.min(smooth).max(1e-12 * x.amax().max(1.0))
}

/// Symmetrized central-difference Hessian of `φ_μ`, with steps below the
/// length scale `μ / G` on which `∇φ_μ` varies.
pub fn smoothed_hessian(obj: &mut dyn SmoothedObjective, x: &Vector, mu: f64) -> Result<Matrix> {
    let n = x.len();
    let h = fd_step(obj, x, mu);
    let mut hess = Matrix::zeros(n, n);
    for j in 0..n {
        let mut up = x.clone();
        let mut dn = x.clone();
        up[j] += h;
        dn[j] -= h;
        let col = (obj.smoothed(&up, mu)?.grad - obj.smoothed(&dn, mu)?.grad) / (2.0 * h);
        hess.set_column(j, &col);
    }
    Ok((&hess + hess.transpose()) * 0.5)
}

/// `∇²φ_{μ(t)}` and `∂_t ∇φ_{μ(t)}`.
fn fd_hessian(
    obj: &mut dyn SmoothedObjective,
    schedule: &Schedule,
    t: f64,
    x: &Vector,
) -> Result<(Matrix, Vector)> {
    let hess = smoothed_hessian(obj, x, schedule.mu(t))?;
    let dt = 1e-6 * t;
    let gt = (obj.smoothed(x, schedule.mu(t + dt))?.grad - obj.smoothed(x, schedule.mu(t - dt))?.grad)
        / (2.0 * dt);
    Ok((hess, gt))
}

fn alpha_warnings(alpha: f64) -> Vec<String> {
    if alpha < 3.0 {
        vec![format!("alpha = {alpha} < 3: outside the range covered by the rate theory")]
    } else {
        Vec::new()
    }
}

/// Attaches the Lipschitz estimate at the last visited point to step-size errors.
fn annotate(
    err: Error,
    obj: &dyn SmoothedObjective,
    schedule: &Schedule,
    last_x: &Option<Vector>,
) -> Error {
    match err {
        Error::StepUnderflow { t, h, .. } => Error::StepUnderflow {
            t,
            h,
            lipschitz: last_x
                .as_ref()
                .and_then(|x| obj.lipschitz_estimate(x, schedule.mu(t))),
        },
        e => e,
    }
}

/// Integrates the inertial system on `[t0, T]` and samples it.
#[allow(clippy::too_many_arguments)]
pub fn integrate_inertial(
    obj: &mut dyn SmoothedObjective,
    schedule: &Schedule,
    alpha: f64,
    t0: f64,
    t_end: f64,
    x0: &Vector,
    v0: &Vector,
    sampler: &Sampler,
    opts: &OdeOptions,
) -> Result<Trajectory> {
    let n = obj.dim();
    check_request(t0, t_end, x0, n)?;
    if v0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: v0.len(),
        });
    }
    let warnings = alpha_warnings(alpha);
    let outputs = sample_times(sampler, t0, t_end)?;
    let mut y0 = Vector::zeros(2 * n);
    y0.rows_mut(0, n).copy_from(x0);
    y0.rows_mut(n, n).copy_from(v0);

    let mut last_x: Option<Vector> = None;
    let result = {
        let mut field = |t: f64, y: &Vector| -> Result<Vector> {
            let x = y.rows(0, n).into_owned();
            let v = y.rows(n, n).into_owned();
            let g = obj.smoothed(&x, schedule.mu(t))?.grad;
            let mut out = Vector::zeros(2 * n);
            out.rows_mut(0, n).copy_from(&v);
            out.rows_mut(n, n).copy_from(&(-(&v * (alpha / t)) - g));
            last_x = Some(x);
            Ok(out)
        };
        ode::solve(&mut field, t0, &y0, &outputs, opts)
    };
    let sol = result.map_err(|e| annotate(e, obj, schedule, &last_x))?;
    let states = sol
        .times
        .iter()
        .zip(&sol.states)
        .map(|(&t, y)| TrajectoryState {
            t,
            x: y.rows(0, n).into_owned(),
            v: y.rows(n, n).into_owned(),
        })
        .collect();
    Ok(Trajectory {
        kind: FlowKind::Inertial { alpha },
        t0,
        states,
        stats: sol.stats,
        warnings,
    })
}

/// Integrates `ẋ = −∇φ_{μ(t)}(x)` on `[t0, T]`. The sampled velocity is
/// `−∇φ_{μ(t)}(x(t))`.
pub fn integrate_gradflow(
    obj: &mut dyn SmoothedObjective,
    schedule: &Schedule,
    t0: f64,
    t_end: f64,
    x0: &Vector,
    sampler: &Sampler,
    opts: &OdeOptions,
) -> Result<Trajectory> {
    let n = obj.dim();
    check_request(t0, t_end, x0, n)?;
    let outputs = sample_times(sampler, t0, t_end)?;

    let obj_cell = std::cell::RefCell::new(obj);
    let last_x: std::cell::RefCell<Option<Vector>> = std::cell::RefCell::new(None);
    let field = |t: f64, x: &Vector| -> Result<Vector> {
        let g = obj_cell.borrow_mut().smoothed(x, schedule.mu(t))?.grad;
        *last_x.borrow_mut() = Some(x.clone());
        Ok(-g)
    };
    let result = match opts.integrator {
        Integrator::DormandPrince => ode::solve(field, t0, x0, &outputs, opts),
        Integrator::Rosenbrock => {
            let jac = |t: f64, x: &Vector, _f: &mut _| -> Result<(Matrix, Vector)> {
                let mut guard = obj_cell.borrow_mut();
                let (h, gt) = fd_hessian(&mut **guard, schedule, t, x)?;
                Ok((-h, -gt))
            };
            ode::solve_stiff(field, jac, t0, x0, &outputs, opts)
        }
    };
    let obj = obj_cell.into_inner();
    let sol = result.map_err(|e| annotate(e, obj, schedule, &last_x.into_inner()))?;
    let mut states = Vec::with_capacity(sol.times.len());
    for (&t, x) in sol.times.iter().zip(&sol.states) {
        let v = -obj.smoothed(x, schedule.mu(t))?.grad;
        states.push(TrajectoryState { t, x: x.clone(), v });
    }
    Ok(Trajectory {
        kind: FlowKind::Gradient,
        t0,
        states,
        stats: sol.stats,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::feasible::FeasibleSet;
    use crate::penalty::Penalty;
    use crate::smoothing::{FnFamily, QuadraticFamily};
    use std::sync::Arc;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    fn symmetric_1d() -> SupProblem {
        let fam = FnFamily::new(
            1,
            2,
            |x| v(&[x[0], -x[0]]),
            |_| Matrix::from_column_slice(2, 1, &[1.0, -1.0]),
        );
        SupProblem::new(
            Arc::new(fam),
            FeasibleSet::simplex(2).unwrap(),
            Penalty::kl_uniform(2).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn field_at_symmetry_point() {
        let mut p = symmetric_1d();
        let s = Schedule::power(1.0, 3.0).unwrap();
        let st = TrajectoryState {
            t: 2.0,
            x: v(&[0.0]),
            v: v(&[0.4]),
        };
        let (dx, acc) = inertial_field(&mut p, &s, 3.0, &st).unwrap();
        assert_eq!(dx, v(&[0.4]));
        assert!((acc[0] + 3.0 / 2.0 * 0.4).abs() < 1e-15);
    }

    #[test]
    fn equilibrium_is_preserved() {
        let mut p = symmetric_1d();
        let s = Schedule::power(1.0, 3.0).unwrap();
        let traj = integrate_inertial(
            &mut p,
            &s,
            3.1,
            1.0,
            100.0,
            &v(&[0.0]),
            &v(&[0.0]),
            &Sampler::LogSpaced(50),
            &OdeOptions::default(),
        )
        .unwrap();
        assert!(traj.states.iter().all(|st| st.x[0].abs() <= 1e-10));
        let gf = integrate_gradflow(
            &mut p,
            &s,
            1.0,
            100.0,
            &v(&[0.0]),
            &Sampler::LogSpaced(50),
            &OdeOptions::default(),
        )
        .unwrap();
        assert!(gf.states.iter().all(|st| st.x[0].abs() <= 1e-10));
    }

    #[test]
    fn single_quadratic_reduces_to_classical_flow() {
        // m = 1 and Q = {1}: φ_μ = g regardless of μ
        let fam = QuadraticFamily::new(vec![Matrix::identity(1, 1)], vec![v(&[0.0])], v(&[0.0])).unwrap();
        let mut p = SupProblem::new(
            Arc::new(fam),
            FeasibleSet::simplex(1).unwrap(),
            Penalty::kl_uniform(1).unwrap(),
        )
        .unwrap();
        let s = Schedule::power(1.0, 3.0).unwrap();
        let run = |p: &mut SupProblem, rtol: f64| {
            let opts = OdeOptions {
                rtol,
                atol: rtol * 1e-2,
                ..Default::default()
            };
            integrate_inertial(p, &s, 3.0, 1.0, 30.0, &v(&[1.0]), &v(&[0.0]), &Sampler::LogSpaced(40), &opts)
                .unwrap()
        };
        let coarse = run(&mut p, 1e-8);
        let fine = run(&mut p, 1e-8 / 4.0);
        let diff = (&coarse.last().x - &fine.last().x).amax();
        assert!(diff <= 1e-6, "{diff}");
        let bounded = coarse
            .states
            .iter()
            .map(|st| st.t * st.t * 0.5 * st.x[0] * st.x[0])
            .fold(0.0, f64::max);
        assert!(bounded < 10.0);
    }

    #[test]
    fn rejects_bad_horizon() {
        let mut p = symmetric_1d();
        let s = Schedule::power(1.0, 3.0).unwrap();
        let r = integrate_gradflow(&mut p, &s, 2.0, 1.0, &v(&[0.0]), &Sampler::default(), &OdeOptions::default());
        assert!(matches!(r, Err(Error::InvalidIntegration(_))));
    }
}
