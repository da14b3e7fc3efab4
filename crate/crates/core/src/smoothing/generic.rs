//! Projected gradient ascent on `h(λ) = ⟨λ, g⟩ − μ D(λ)` over `Q`.
//!
//! Steps start at `1/(μσ)` and then follow Barzilai–Borwein lengths, each
//! safeguarded by an Armijo backtracking search along the projected
//! direction. For KL penalties the step along the direction is additionally
//! capped so iterates stay strictly positive, which keeps `∇D` finite.
//!
//! KL penalties on the simplex or a moment polytope instead take damped
//! equality-constrained Newton steps, since the KL curvature `1/λ` makes
//! Euclidean steps crawl near the boundary.
//!
//! The solve stops once both the fixed-point gap
//! `‖λ − P_Q(λ + ∇h(λ)/(μσ))‖` and the variational-inequality residual
//! `max_{q ∈ Q} ⟨∇h(λ), q − λ⟩` are below their tolerances.

use super::{DualCertificate, DualMethod};
use crate::feasible::FeasibleSet;
use crate::penalty::Penalty;
use crate::{linalg, Error, Matrix, Result, SolverConfig, Vector};

const FRACTION_TO_BOUNDARY: f64 = 0.995;
const MAX_BACKTRACKS: usize = 80;

pub(crate) fn solve(
    set: &FeasibleSet,
    penalty: &Penalty,
    sigma: f64,
    g: &Vector,
    mu: f64,
    cfg: &SolverConfig,
) -> Result<DualCertificate> {
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::DualSolveFailed {
            iterations: 0,
            reason: format!("μ must be positive and finite, got {mu}"),
        });
    }
    let spread = g.max() - g.min();
    if mu < cfg.generic_mu_floor * spread {
        return Err(Error::DualSolveFailed {
            iterations: 0,
            reason: format!(
                "μ = {mu:e} is below {:e}·spread(g) = {:e}; use a closed form",
                cfg.generic_mu_floor,
                cfg.generic_mu_floor * spread
            ),
        });
    }
    if matches!(penalty, Penalty::PushforwardKl { .. }) {
        return Err(Error::NotMaterialized(
            "the generic solver needs D as a function of λ".into(),
        ));
    }
    let positive = matches!(penalty, Penalty::Kl { .. });
    if let Penalty::Kl { prior } = penalty {
        if let Some(rows) = equality_rows(set) {
            return kl_newton(set, prior, &rows, g, mu, cfg);
        }
    }

    let objective = |lam: &Vector| -> Result<(f64, f64)> {
        let d = penalty.value(lam)?;
        Ok((lam.dot(g) - mu * d, d))
    };
    let ascent = |lam: &Vector| -> Result<Vector> { Ok(g - penalty.grad(lam)? * mu) };

    let mut lam = start_point(set, penalty)?;
    let (mut h, _) = objective(&lam)?;
    let mut grad = ascent(&lam)?;
    let base = 1.0 / (mu * sigma);
    let mut tau = base;

    for it in 0..cfg.dual_max_iter {
        let probe = set.project_with(&(&lam + &grad * base), cfg)?;
        let gap = (&probe - &lam).norm();
        let scale = 1.0 + grad.amax() * base + lam.amax();
        if gap <= cfg.fixed_point_tol * scale {
            let vi = vi_residual(set, &grad, &lam)?;
            if vi <= cfg.vi_slack * (1.0 + grad.amax()) {
                let (value, d) = objective(&lam)?;
                return Ok(DualCertificate {
                    maximizer: lam,
                    weights: None,
                    value,
                    penalty_value: d,
                    vi_residual: vi,
                    iterations: it,
                    method: DualMethod::Generic,
                });
            }
        }

        let target = set.project_with(&(&lam + &grad * tau), cfg)?;
        let mut dir = target - &lam;
        if dir.norm() == 0.0 {
            // a BB step can collapse onto λ; fall back to the base step
            dir = probe - &lam;
        }
        let mut s_max: f64 = 1.0;
        if positive {
            for i in 0..dir.len() {
                if dir[i] < 0.0 {
                    s_max = s_max.min(FRACTION_TO_BOUNDARY * lam[i] / -dir[i]);
                }
            }
        }
        let slope = grad.dot(&dir);
        let noise = 8.0 * f64::EPSILON * (1.0 + h.abs() + lam.dot(g).abs());
        let mut s = s_max;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &lam + &dir * s;
            if let Ok((ht, _)) = objective(&trial) {
                if ht >= h + cfg.armijo_slope * s * slope - noise {
                    accepted = Some((trial, ht));
                    break;
                }
            }
            s *= cfg.backtrack_factor;
        }
        let Some((next, h_next)) = accepted else {
            return Err(Error::DualSolveFailed {
                iterations: it,
                reason: format!("line search stalled (fixed-point gap {gap:e})"),
            });
        };
        let next_grad = ascent(&next)?;
        let step = &next - &lam;
        let dgrad = &next_grad - &grad;
        let curvature = -step.dot(&dgrad);
        tau = if curvature > 0.0 {
            (step.norm_squared() / curvature).clamp(1e-6 * base, 1e6 * base)
        } else {
            base
        };
        lam = next;
        h = h_next;
        grad = next_grad;
    }
    Err(Error::DualSolveFailed {
        iterations: cfg.dual_max_iter,
        reason: "iteration budget exhausted".into(),
    })
}

/// `[1ᵀ; A]` for simplex-like sets described by equalities and `λ ≥ 0`.
fn equality_rows(set: &FeasibleSet) -> Option<Matrix> {
    match set {
        FeasibleSet::Simplex { dim } => Some(Matrix::from_element(1, *dim, 1.0)),
        FeasibleSet::MomentPolytope(mp) => {
            let (a, _) = mp.reduced_moments();
            let m = mp.dim();
            Some(Matrix::from_fn(a.nrows() + 1, m, |r, c| if r == 0 { 1.0 } else { a[(r - 1, c)] }))
        }
        _ => None,
    }
}

/// Damped Newton ascent for KL penalties on `{λ ≥ 0 : Bλ = Bλ₀}`. The Hessian
/// is `−μ diag(1/λ)`, so the equality-constrained step is
/// `d = Λ (∇h − Bᵀy) / μ` with `B Λ Bᵀ y = B Λ ∇h`.
fn kl_newton(
    set: &FeasibleSet,
    prior: &Vector,
    b: &Matrix,
    g: &Vector,
    mu: f64,
    cfg: &SolverConfig,
) -> Result<DualCertificate> {
    let penalty = Penalty::Kl { prior: prior.clone() };
    let mut lam = start_point(set, &penalty)?;
    let kl = |lam: &Vector| -> f64 {
        lam.iter()
            .zip(prior.iter())
            .map(|(&l, &v)| if l > 0.0 { l * (l / v).ln() } else { 0.0 })
            .sum()
    };
    let ascent = |lam: &Vector| -> Vector {
        Vector::from_fn(lam.len(), |i, _| g[i] - mu * ((lam[i] / prior[i]).ln() + 1.0))
    };
    let mut h = lam.dot(g) - mu * kl(&lam);
    for it in 0..cfg.dual_max_iter {
        let grad = ascent(&lam);
        let scaled_b = Matrix::from_fn(b.nrows(), b.ncols(), |r, c| b[(r, c)] * lam[c]);
        let normal = &scaled_b * b.transpose();
        let rhs = &scaled_b * &grad;
        let y = match linalg::solve_sym(&normal, &rhs).filter(|y| y.iter().all(|v| v.is_finite())) {
            Some(y) => y,
            None => {
                let mut ridged = normal.clone();
                let ridge = cfg.rank_tol * (1.0 + normal.trace());
                for i in 0..ridged.nrows() {
                    ridged[(i, i)] += ridge;
                }
                linalg::solve_sym(&ridged, &rhs).ok_or_else(|| Error::DualSolveFailed {
                    iterations: it,
                    reason: "singular Newton system".into(),
                })?
            }
        };
        let reduced = &grad - b.tr_mul(&y);
        let dir = Vector::from_fn(lam.len(), |i, _| lam[i] * reduced[i] / mu);
        let decrement = grad.dot(&dir);

        let vi = vi_residual(set, &grad, &lam)?;
        if vi <= cfg.vi_slack * (1.0 + grad.amax()) && decrement <= cfg.fixed_point_tol * (1.0 + h.abs()) {
            return Ok(DualCertificate {
                value: h,
                penalty_value: kl(&lam),
                maximizer: lam,
                weights: None,
                vi_residual: vi,
                iterations: it,
                method: DualMethod::Generic,
            });
        }

        let mut s_max: f64 = 1.0;
        for i in 0..dir.len() {
            if dir[i] < 0.0 {
                s_max = s_max.min(FRACTION_TO_BOUNDARY * lam[i] / -dir[i]);
            }
        }
        let noise = 8.0 * f64::EPSILON * (1.0 + h.abs() + lam.dot(g).abs());
        let mut s = s_max;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            let trial = &lam + &dir * s;
            let ht = trial.dot(g) - mu * kl(&trial);
            if ht >= h + cfg.armijo_slope * s * decrement - noise {
                accepted = Some((trial, ht));
                break;
            }
            s *= cfg.backtrack_factor;
        }
        match accepted {
            Some((next, h_next)) => {
                lam = next;
                h = h_next;
            }
            None => {
                return Err(Error::DualSolveFailed {
                    iterations: it,
                    reason: format!("Newton line search stalled (VI residual {vi:e})"),
                })
            }
        }
    }
    Err(Error::DualSolveFailed {
        iterations: cfg.dual_max_iter,
        reason: "iteration budget exhausted".into(),
    })
}

/// `max_{q ∈ Q} ⟨d, q − λ⟩`, clipped at zero.
pub(crate) fn vi_residual(set: &FeasibleSet, d: &Vector, lam: &Vector) -> Result<f64> {
    let (best, _) = set.linear_max(d)?;
    Ok((best - d.dot(lam)).max(0.0))
}

fn start_point(set: &FeasibleSet, penalty: &Penalty) -> Result<Vector> {
    let m = set.dim();
    let raw = match set {
        FeasibleSet::Simplex { .. } => match penalty {
            Penalty::Kl { prior } => prior.clone(),
            _ => Vector::from_element(m, 1.0 / m as f64),
        },
        FeasibleSet::Box { lower, upper } => (lower + upper) * 0.5,
        FeasibleSet::LpBall { .. } => Vector::zeros(m),
        FeasibleSet::VertexPolytope { vertices } => {
            let mut c = Vector::zeros(m);
            for v in vertices {
                c += v;
            }
            c / vertices.len() as f64
        }
        FeasibleSet::MomentPolytope(mp) => match (mp.witness(), penalty) {
            (crate::feasible::Witness::Strict(p), _) => p.clone(),
            (crate::feasible::Witness::Boundary(p), Penalty::QuadraticToCenter { .. }) => p.clone(),
            (crate::feasible::Witness::Boundary(_), _) => return Err(Error::NoStrictWitness),
            (crate::feasible::Witness::Infeasible, _) => return Err(Error::Infeasible),
        },
    };
    if matches!(penalty, Penalty::Kl { .. }) && raw.min() <= 0.0 {
        return Err(Error::NoStrictWitness);
    }
    Ok(raw)
}

