//! KL-regularized worst-case expectations over moment-constrained ambiguity sets
//!
//! ```text
//! φ_μ(x) = max { Σ pᵢ fᵢ(x) − μ KL(p ‖ v) : A p = b, Σ p = 1, p ≥ 0 }
//! ```
//!
//! Given a strictly positive feasible point, the maximizer is the exponential
//! tilting `pᵢ ∝ vᵢ exp((fᵢ − (Aᵀθ)ᵢ)/μ)`, where `θ` minimizes the convex dual
//!
//! ```text
//! ψ(θ) = μ log Σ vᵢ exp((fᵢ − (Aᵀθ)ᵢ)/μ) + ⟨θ, b⟩,   ∇ψ = b − A p(θ),
//! ∇²ψ = (1/μ) A (diag p − p pᵀ) Aᵀ.
//! ```
//!
//! `θ` is found by damped Newton with an Armijo search on `ψ`.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::feasible::MomentPolytope;
use crate::smoothing::{envelope_gradient, ObjectiveFamily, QuadraticFamily};
use crate::{linalg, Error, Matrix, Result, SolverConfig, Vector};

/// Moment-constrained set of scenario probabilities.
pub type AmbiguitySet = MomentPolytope;

/// The tilted distribution and its multipliers.
#[derive(Debug, Clone, PartialEq)]
pub struct TiltingSolution {
    pub p: Vector,
    /// Multipliers for every row of `A`; rows pruned as redundant get 0.
    pub theta: Vector,
    /// `log Σ vᵢ exp((fᵢ − (Aᵀθ)ᵢ)/μ)`.
    pub log_normalizer: f64,
    pub newton_iters: usize,
    /// `‖A p − b‖∞`.
    pub residual: f64,
    /// `‖A p − b‖∞` after every iterate, starting with the initial one.
    pub residual_history: Vec<f64>,
}

impl TiltingSolution {
    /// Ratio of the last two nonzero residuals, if there are two.
    pub fn tail_contraction(&self) -> Option<f64> {
        let h: Vec<f64> = self.residual_history.iter().copied().filter(|r| *r > 0.0).collect();
        match h.as_slice() {
            [.., a, b] => Some(b / a),
            _ => None,
        }
    }
}

/// Solves for the tilted distribution with costs `f`, starting from `warm`
/// (reduced-row multipliers, as returned in [`TiltingSolution::theta`]).
pub fn solve_tilting(
    f: &Vector,
    set: &AmbiguitySet,
    mu: f64,
    prior: &Vector,
    warm: Option<&Vector>,
    cfg: &SolverConfig,
) -> Result<TiltingSolution> {
    let m = set.dim();
    if f.len() != m || prior.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: if f.len() != m { f.len() } else { prior.len() },
        });
    }
    if !(mu > 0.0) || !mu.is_finite() {
        return Err(Error::InvalidPenalty(format!("μ must be positive, got {mu}")));
    }
    if !set.is_feasible() {
        return Err(Error::Infeasible);
    }
    if set.strict_witness().is_none() {
        return Err(Error::NoStrictWitness);
    }
    if f.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("scenario costs".into()));
    }
    let (a, b) = set.reduced_moments();
    let rows = set.kept_rows().to_vec();
    let d = a.nrows();
    let scale = 1.0 + a.amax();
    let tol = cfg.tilting_tol * scale;

    let mut theta = match warm {
        Some(w) if w.len() == set.moment_matrix().nrows() => {
            Vector::from_fn(d, |r, _| w[rows[r]])
        }
        _ => Vector::zeros(d),
    };

    let tilt = |theta: &Vector| -> (Vector, f64, f64) {
        let z = (f - a.tr_mul(theta)) / mu;
        let (p, log_z) = linalg::softmax_weighted(&z, prior);
        let psi = mu * log_z + theta.dot(&b);
        (p, log_z, psi)
    };

    let (mut p, mut log_z, mut psi) = tilt(&theta);
    let mut r = &a * &p - &b;
    let mut history = vec![r.amax()];
    let mut iters = 0;

    // p is exp((f − Aᵀθ)/μ)-weighted, so rounding in the exponent is amplified by 1/μ
    let floor = |theta: &Vector| 16.0 * f64::EPSILON * scale * (f.amax() + a.tr_mul(theta).amax()) / mu;

    while r.amax() > tol.max(floor(&theta)) {
        if iters >= cfg.tilting_max_iter {
            return Err(Error::NewtonStalled {
                iterations: iters,
                residual: r.amax(),
            });
        }
        iters += 1;
        let cov = Matrix::from_diagonal(&p) - &p * p.transpose();
        let mut h = &a * cov * a.transpose() / mu;
        let ridge = cfg.rank_tol * (1.0 + h.trace());
        for i in 0..d {
            h[(i, i)] += ridge;
        }
        // ∇ψ = −r, so the Newton step solves H Δ = r
        let step = linalg::solve_sym(&h, &r).filter(|s| s.iter().all(|x| x.is_finite()));
        let direction = match step {
            Some(s) if s.dot(&r) > 0.0 => s,
            _ => r.clone() * mu,
        };
        let slope = -direction.dot(&r);
        let mut t = 1.0;
        let mut accepted = false;
        for _ in 0..60 {
            let trial = &theta + &direction * t;
            let (tp, tlz, tpsi) = tilt(&trial);
            let noise = 8.0 * f64::EPSILON * (1.0 + psi.abs());
            if tpsi <= psi + cfg.armijo_slope * t * slope + noise {
                theta = trial;
                p = tp;
                log_z = tlz;
                psi = tpsi;
                accepted = true;
                break;
            }
            t *= cfg.backtrack_factor;
        }
        r = &a * &p - &b;
        history.push(r.amax());
        if !accepted {
            return Err(Error::NewtonStalled {
                iterations: iters,
                residual: r.amax(),
            });
        }
    }

    let mut full = Vector::zeros(set.moment_matrix().nrows());
    for (k, &row) in rows.iter().enumerate() {
        full[row] = theta[k];
    }
    let residual = (set.moment_matrix() * &p - set.moment_rhs()).amax();
    Ok(TiltingSolution {
        p,
        theta: full,
        log_normalizer: log_z,
        newton_iters: iters,
        residual,
        residual_history: history,
    })
}

/// `Σ pᵢ fᵢ − μ KL(p ‖ v)` at the tilted distribution.
pub fn regularized_value(f: &Vector, sol: &TiltingSolution, prior: &Vector, mu: f64) -> f64 {
    sol.p.dot(f) - mu * linalg::kl_divergence(&sol.p, prior)
}

pub fn dro_reg_value(
    x: &Vector,
    costs: &dyn ObjectiveFamily,
    set: &AmbiguitySet,
    mu: f64,
    prior: &Vector,
) -> Result<f64> {
    let f = costs.eval(x);
    let sol = solve_tilting(&f, set, mu, prior, None, &SolverConfig::default())?;
    Ok(regularized_value(&f, &sol, prior, mu))
}

pub fn dro_reg_grad(
    x: &Vector,
    costs: &dyn ObjectiveFamily,
    set: &AmbiguitySet,
    mu: f64,
    prior: &Vector,
) -> Result<Vector> {
    let f = costs.eval(x);
    let sol = solve_tilting(&f, set, mu, prior, None, &SolverConfig::default())?;
    Ok(envelope_gradient(&costs.jacobian(x), &sol.p))
}

/// One evaluation of the regularized worst-case objective.
#[derive(Debug, Clone, PartialEq)]
pub struct DroEvaluation {
    pub value: f64,
    pub grad: Vector,
    /// `KL(p ‖ v)`.
    pub penalty: f64,
    pub tilting: TiltingSolution,
}

/// Evaluates the DRO objective along a trajectory, warm-starting each tilting
/// solve from the previous multipliers. One evaluator per trajectory.
#[derive(Debug, Clone)]
pub struct DroEvaluator {
    costs: Arc<dyn ObjectiveFamily>,
    set: AmbiguitySet,
    prior: Vector,
    cfg: SolverConfig,
    warm: Option<Vector>,
}

impl DroEvaluator {
    pub fn new(costs: Arc<dyn ObjectiveFamily>, set: AmbiguitySet, prior: Vector) -> Result<Self> {
        if costs.count() != set.dim() || prior.len() != set.dim() {
            return Err(Error::DimensionMismatch {
                expected: set.dim(),
                got: costs.count(),
            });
        }
        crate::Penalty::kl(prior.clone())?;
        if set.strict_witness().is_none() {
            return Err(Error::NoStrictWitness);
        }
        Ok(Self {
            costs,
            set,
            prior,
            cfg: SolverConfig::default(),
            warm: None,
        })
    }

    pub fn uniform(costs: Arc<dyn ObjectiveFamily>, set: AmbiguitySet) -> Result<Self> {
        let m = set.dim();
        Self::new(costs, set, Vector::from_element(m, 1.0 / m as f64))
    }

    pub fn with_config(mut self, cfg: SolverConfig) -> Self {
        self.cfg = cfg;
        self
    }

    pub fn costs(&self) -> &Arc<dyn ObjectiveFamily> {
        &self.costs
    }

    pub fn set(&self) -> &AmbiguitySet {
        &self.set
    }

    pub fn prior(&self) -> &Vector {
        &self.prior
    }

    /// `C = −log minᵢ vᵢ`.
    pub fn sup_constant(&self) -> f64 {
        -self.prior.min().ln()
    }

    pub fn reset_warm_start(&mut self) {
        self.warm = None;
    }

    pub fn evaluate(&mut self, x: &Vector, mu: f64) -> Result<DroEvaluation> {
        let f = self.costs.eval(x);
        let sol = match solve_tilting(&f, &self.set, mu, &self.prior, self.warm.as_ref(), &self.cfg) {
            Ok(sol) => sol,
            // a stale warm start far from the basin; retry cold
            Err(Error::NewtonStalled { .. }) if self.warm.is_some() => {
                solve_tilting(&f, &self.set, mu, &self.prior, None, &self.cfg)?
            }
            Err(e) => return Err(e),
        };
        self.warm = Some(sol.theta.clone());
        let penalty = linalg::kl_divergence(&sol.p, &self.prior);
        Ok(DroEvaluation {
            value: sol.p.dot(&f) - mu * penalty,
            grad: envelope_gradient(&self.costs.jacobian(x), &sol.p),
            penalty,
            tilting: sol,
        })
    }

    /// Unregularized worst case `max_{p ∈ 𝒫} Σ pᵢ fᵢ(x)`.
    pub fn raw_value(&self, x: &Vector) -> Result<f64> {
        Ok(self.set.linear_max(&self.costs.eval(x))?.0)
    }
}

/// The random quadratic DRO instance.
#[derive(Debug, Clone)]
pub struct DroBenchmark {
    pub costs: QuadraticFamily,
    pub set: AmbiguitySet,
    /// Diagonals of `Sᵢ`, one row per scenario.
    pub s_diag: Vec<Vector>,
    pub d: Vec<Vector>,
    pub e: Vector,
}

/// Builds `fᵢ(x) = ½ (x − dᵢ)ᵀ Sᵢ (x − dᵢ) + eᵢ` with `Sᵢ = diag(U[½, 2]ⁿ)`,
/// `dᵢ ~ N(0, Iₙ)`, `eᵢ ~ U[−0.2, 0.2]`, and the moment rows
/// `p₁ = p₂`, `p₂ = p₃` (`b = 0`).
///
/// Draws come from ChaCha8 seeded with `seed`, in the order: all `Sᵢ`
/// diagonals (scenario-major), then all `dᵢ`, then `e`.
pub fn make_dro_benchmark(seed: u64, n: usize, m: usize) -> Result<DroBenchmark> {
    if n == 0 || m < 3 {
        return Err(Error::InvalidSet("the benchmark needs n >= 1 and m >= 3".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s_diag: Vec<Vector> = (0..m)
        .map(|_| Vector::from_fn(n, |_, _| rng.gen_range(0.5..=2.0)))
        .collect();
    let d: Vec<Vector> = (0..m)
        .map(|_| Vector::from_fn(n, |_, _| rng.sample(StandardNormal)))
        .collect();
    let e = Vector::from_fn(m, |_, _| rng.gen_range(-0.2..=0.2));
    let costs = QuadraticFamily::new(
        s_diag.iter().map(Matrix::from_diagonal).collect(),
        d.clone(),
        e.clone(),
    )?;
    let mut a = Matrix::zeros(2, m);
    a[(0, 0)] = 1.0;
    a[(0, 1)] = -1.0;
    a[(1, 1)] = 1.0;
    a[(1, 2)] = -1.0;
    let set = MomentPolytope::new(a, Vector::zeros(2), &SolverConfig::default())?;
    Ok(DroBenchmark {
        costs,
        set,
        s_diag,
        d,
        e,
    })
}
