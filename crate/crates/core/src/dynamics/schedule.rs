use std::fmt;
use std::sync::Arc;

use crate::{Error, Result};

type ScalarFn = dyn Fn(f64) -> f64 + Send + Sync;

/// A regularization path `μ(t)`, nonincreasing and vanishing.
#[derive(Clone)]
pub enum Schedule {
    /// `μ(t) = c · t^{−r}`.
    Power { c: f64, r: f64 },
    /// User-supplied `μ` with its analytic derivative.
    Custom {
        label: String,
        mu: Arc<ScalarFn>,
        mu_dot: Arc<ScalarFn>,
    },
}

impl fmt::Debug for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Power { c, r } => write!(f, "Power {{ c: {c}, r: {r} }}"),
            Schedule::Custom { label, .. } => write!(f, "Custom({label})"),
        }
    }
}

/// Integrability flags for the schedule.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssumptionFlags {
    /// `t μ(t) ∈ L¹(t₀, ∞)`.
    pub tmu_integrable: bool,
    /// `t² |μ̇(t)| ∈ L¹(t₀, ∞)`.
    pub t2mudot_integrable: bool,
    /// `μ ∈ L¹(t₀, ∞)`.
    pub l1_integrable: bool,
}

impl AssumptionFlags {
    /// Both integrability conditions required by the accelerated rates.
    pub fn accelerated(&self) -> bool {
        self.tmu_integrable && self.t2mudot_integrable
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleReport {
    pub flags: AssumptionFlags,
    /// Whether the flags were read off the exponent (power law) or estimated
    /// from the local decay exponent far out (custom schedules).
    pub exact_flags: bool,
    /// `(t, t² μ(t))` at `t ∈ {10², 10⁴, 10⁶}`.
    pub t2mu_probe: Vec<(f64, f64)>,
    pub t2mu_decreasing: bool,
}

impl Schedule {
    pub fn power(c: f64, r: f64) -> Result<Self> {
        if !(c > 0.0) || !c.is_finite() || !(r > 0.0) || !r.is_finite() {
            return Err(Error::InvalidSchedule(format!(
                "power schedule needs c > 0 and r > 0, got c = {c}, r = {r}"
            )));
        }
        Ok(Schedule::Power { c, r })
    }

    pub fn custom(
        label: impl Into<String>,
        mu: impl Fn(f64) -> f64 + Send + Sync + 'static,
        mu_dot: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Schedule::Custom {
            label: label.into(),
            mu: Arc::new(mu),
            mu_dot: Arc::new(mu_dot),
        }
    }

    pub fn mu(&self, t: f64) -> f64 {
        match self {
            Schedule::Power { c, r } => c * t.powf(-r),
            Schedule::Custom { mu, .. } => mu(t),
        }
    }

    pub fn mu_dot(&self, t: f64) -> f64 {
        match self {
            Schedule::Power { c, r } => -r * c * t.powf(-r - 1.0),
            Schedule::Custom { mu_dot, .. } => mu_dot(t),
        }
    }

    pub fn label(&self) -> String {
        match self {
            Schedule::Power { c, r } if *c == 1.0 => format!("t^-{r}"),
            Schedule::Power { c, r } => format!("{c}*t^-{r}"),
            Schedule::Custom { label, .. } => label.clone(),
        }
    }

    /// The exponent `r` of a power schedule.
    pub fn exponent(&self) -> Option<f64> {
        match self {
            Schedule::Power { r, .. } => Some(*r),
            Schedule::Custom { .. } => None,
        }
    }

    /// `∫_{a}^{b} s μ(s) ds` for power schedules (`b = ∞` allowed).
    pub fn integral_s_mu(&self, a: f64, b: f64) -> Option<f64> {
        let Schedule::Power { c, r } = self else { return None };
        Some(c * power_integral(1.0 - r, a, b))
    }

    /// `∫_{a}^{b} s² |μ̇(s)| ds` for power schedules.
    pub fn integral_s2_mu_dot(&self, a: f64, b: f64) -> Option<f64> {
        let Schedule::Power { c, r } = self else { return None };
        Some(c * r * power_integral(1.0 - r, a, b))
    }

    /// `∫_{a}^{b} μ(s) ds` for power schedules.
    pub fn integral_mu(&self, a: f64, b: f64) -> Option<f64> {
        let Schedule::Power { c, r } = self else { return None };
        Some(c * power_integral(-r, a, b))
    }
}

/// `∫_a^b s^k ds`, infinite when divergent.
fn power_integral(k: f64, a: f64, b: f64) -> f64 {
    if b.is_infinite() {
        if k < -1.0 {
            -a.powf(k + 1.0) / (k + 1.0)
        } else {
            f64::INFINITY
        }
    } else if (k + 1.0).abs() < 1e-15 {
        (b / a).ln()
    } else {
        (b.powf(k + 1.0) - a.powf(k + 1.0)) / (k + 1.0)
    }
}

/// Validates the schedule on `[t₀, ∞)` and reports its integrability flags.
pub fn schedule_check(schedule: &Schedule, t0: f64) -> Result<ScheduleReport> {
    if !(t0 > 0.0) {
        return Err(Error::InvalidSchedule(format!("t0 must be positive, got {t0}")));
    }
    let t_far = 1e6 * t0.max(1.0);
    let probes = 400;
    for k in 0..=probes {
        let t = t0 * (t_far / t0).powf(k as f64 / probes as f64);
        let mu = schedule.mu(t);
        let mu_dot = schedule.mu_dot(t);
        if !(mu > 0.0) || !mu.is_finite() || !mu_dot.is_finite() {
            return Err(Error::InvalidSchedule(format!("μ({t}) = {mu} is not positive and finite")));
        }
        if mu_dot > 0.0 {
            return Err(Error::NotNonincreasing { t, mu_dot });
        }
    }

    let (flags, exact_flags) = match schedule {
        Schedule::Power { r, .. } => (
            AssumptionFlags {
                tmu_integrable: *r > 2.0,
                t2mudot_integrable: *r > 2.0,
                l1_integrable: *r > 1.0,
            },
            true,
        ),
        Schedule::Custom { .. } => {
            // local exponent −t μ̇ / μ far out, with a small margin
            let r_eff = -t_far * schedule.mu_dot(t_far) / schedule.mu(t_far);
            let margin = 1e-3;
            (
                AssumptionFlags {
                    tmu_integrable: r_eff > 2.0 + margin,
                    t2mudot_integrable: r_eff > 2.0 + margin,
                    l1_integrable: r_eff > 1.0 + margin,
                },
                false,
            )
        }
    };

    let t2mu_probe: Vec<(f64, f64)> = [1e2, 1e4, 1e6]
        .iter()
        .map(|&t| (t, t * t * schedule.mu(t)))
        .collect();
    let t2mu_decreasing = t2mu_probe.windows(2).all(|w| w[1].1 < w[0].1);
    Ok(ScheduleReport {
        flags,
        exact_flags,
        t2mu_probe,
        t2mu_decreasing,
    })
}
