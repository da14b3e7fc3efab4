use super::{FlowKind, Schedule, SmoothedObjective, Trajectory};
use crate::{Result, Vector};

/// Reference optimum used by the residual diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct Reference {
    pub inf_phi: f64,
    pub x_star: Option<Vector>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub t: f64,
    pub mu: f64,
    /// `φ_{μ(t)}(x(t))`
    pub value_reg: f64,
    /// `φ(x(t))`
    pub value_raw: f64,
    /// `D(λ^{μ(t)}(x(t)))`
    pub penalty: f64,
    /// `ζ = φ_μ − inf φ`
    pub residual: f64,
    /// `½‖x − x* + t/(α−1) ẋ‖² + t² ζ/(α−1)²`; inertial runs with known `x*` only.
    pub energy_e: Option<f64>,
    /// `½‖ẋ‖² + ζ + Cμ`
    pub w: f64,
    pub t2_abs_residual: f64,
    pub t_speed: f64,
    /// `t² (φ − inf φ)`
    pub t2_raw_gap: f64,
}

/// Per-sample diagnostics along a trajectory.
pub fn diagnostics(
    obj: &mut dyn SmoothedObjective,
    traj: &Trajectory,
    schedule: &Schedule,
    reference: &Reference,
) -> Result<Vec<DiagnosticsRecord>> {
    let c = obj.sup_constant();
    let alpha = match traj.kind {
        FlowKind::Inertial { alpha } => Some(alpha),
        FlowKind::Gradient => None,
    };
    let mut out = Vec::with_capacity(traj.states.len());
    for st in &traj.states {
        let mu = schedule.mu(st.t);
        let sp = obj.smoothed(&st.x, mu)?;
        let raw = obj.raw_value(&st.x)?;
        let zeta = sp.value - reference.inf_phi;
        let energy_e = match (alpha, &reference.x_star) {
            (Some(a), Some(xs)) if a != 1.0 => {
                let vl = &st.x - xs + &st.v * (st.t / (a - 1.0));
                Some(0.5 * vl.norm_squared() + st.t * st.t * zeta / ((a - 1.0) * (a - 1.0)))
            }
            _ => None,
        };
        out.push(DiagnosticsRecord {
            t: st.t,
            mu,
            value_reg: sp.value,
            value_raw: raw,
            penalty: sp.penalty,
            residual: zeta,
            energy_e,
            w: 0.5 * st.v.norm_squared() + zeta + c * mu,
            t2_abs_residual: st.t * st.t * zeta.abs(),
            t_speed: st.t * st.v.norm(),
            t2_raw_gap: st.t * st.t * (raw - reference.inf_phi),
        });
    }
    Ok(out)
}

/// Largest `value(r)` over records with `t ∈ [a, b]`.
pub fn window_max<F>(records: &[DiagnosticsRecord], a: f64, b: f64, value: F) -> Option<f64>
where
    F: Fn(&DiagnosticsRecord) -> f64,
{
    records
        .iter()
        .filter(|r| r.t >= a && r.t <= b)
        .map(value)
        .fold(None, |m, v| Some(m.map_or(v, |m: f64| m.max(v))))
}

/// `C(α−3)/(α−1)² · tμ(t) + C/(α−1)² · t²|μ̇(t)|`.
pub fn energy_derivative_bound(schedule: &Schedule, alpha: f64, c: f64, t: f64) -> f64 {
    let k = c / ((alpha - 1.0) * (alpha - 1.0));
    k * ((alpha - 3.0) * t * schedule.mu(t) + t * t * schedule.mu_dot(t).abs())
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergyCheck {
    pub midpoints: usize,
    /// Midpoints satisfying the bound with slack `tol · (1 + |E|)`.
    pub within: usize,
    /// Midpoints satisfying it with ten times that slack.
    pub within_relaxed: usize,
    /// Largest `(Ė_discrete − bound) / (1 + |E|)`.
    pub worst_excess: f64,
}

impl EnergyCheck {
    pub fn fraction(&self) -> f64 {
        if self.midpoints == 0 {
            1.0
        } else {
            self.within as f64 / self.midpoints as f64
        }
    }

    pub fn fraction_relaxed(&self) -> f64 {
        if self.midpoints == 0 {
            1.0
        } else {
            self.within_relaxed as f64 / self.midpoints as f64
        }
    }
}

/// Discrete check `(E(tᵢ₊₁) − E(tᵢ))/(tᵢ₊₁ − tᵢ) ≤ bound(t̄) + tol·(1 + |E|)` at midpoints `t̄`.
pub fn energy_derivative_check(
    records: &[DiagnosticsRecord],
    schedule: &Schedule,
    alpha: f64,
    c: f64,
    tol: f64,
) -> EnergyCheck {
    let mut check = EnergyCheck {
        midpoints: 0,
        within: 0,
        within_relaxed: 0,
        worst_excess: f64::NEG_INFINITY,
    };
    for w in records.windows(2) {
        let (Some(e0), Some(e1)) = (w[0].energy_e, w[1].energy_e) else { continue };
        let dt = w[1].t - w[0].t;
        if !(dt > 0.0) {
            continue;
        }
        let mid = 0.5 * (w[0].t + w[1].t);
        let slope = (e1 - e0) / dt;
        let scale = 1.0 + e0.abs().max(e1.abs());
        let excess = (slope - energy_derivative_bound(schedule, alpha, c, mid)) / scale;
        check.midpoints += 1;
        if excess <= tol {
            check.within += 1;
        }
        if excess <= 10.0 * tol {
            check.within_relaxed += 1;
        }
        check.worst_excess = check.worst_excess.max(excess);
    }
    check
}

/// Bound on `sup_{t ≥ t₀} t²|ζ(t)|` implied by the energy estimate:
/// `max((α−1)² E(t₀) + C(α−3)∫ sμ + C∫ s²|μ̇|, sup C t²μ)`.
/// Available for power schedules with `r ≥ 2`.
pub fn accelerated_rate_bound(schedule: &Schedule, alpha: f64, c: f64, t0: f64, e0: f64) -> Option<f64> {
    let r = schedule.exponent()?;
    if r < 2.0 {
        return None;
    }
    let a1 = (alpha - 1.0) * (alpha - 1.0);
    let upper = a1 * e0
        + c * (alpha - 3.0).max(0.0) * schedule.integral_s_mu(t0, f64::INFINITY)?
        + c * schedule.integral_s2_mu_dot(t0, f64::INFINITY)?;
    // t²μ is nonincreasing for r ≥ 2
    let lower = c * t0 * t0 * schedule.mu(t0);
    let b = upper.max(lower);
    b.is_finite().then_some(b)
}

/// Gradient-flow bound on `ζ(t)`: `d₀²/(2(t−t₀)) + C/(t−t₀) ∫_{t₀}^t μ`.
pub fn gradflow_value_bound(schedule: &Schedule, c: f64, d0: f64, t0: f64, t: f64) -> Option<f64> {
    let s = t - t0;
    if !(s > 0.0) {
        return None;
    }
    Some(d0 * d0 / (2.0 * s) + c / s * schedule.integral_mu(t0, t)?)
}

/// Gradient-flow bound on the raw gap: `d₀²/(2(t−t₀)) + Cμ(t) + C/(t−t₀) ∫_{t₀}^t μ`.
pub fn gradflow_raw_gap_bound(schedule: &Schedule, c: f64, d0: f64, t0: f64, t: f64) -> Option<f64> {
    Some(gradflow_value_bound(schedule, c, d0, t0, t)? + c * schedule.mu(t))
}
