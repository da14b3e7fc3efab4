//! Strongly convex penalties `D` on `Q`.
//!
//! Supported pairs and their supremum constants `C = sup_Q D`:
//!
//! | penalty                | set              | C                                   |
//! |------------------------|------------------|-------------------------------------|
//! | KL(· ‖ v)              | simplex          | `−log minᵢ vᵢ` (`log m` if uniform) |
//! | KL(· ‖ v)              | moment polytope  | `−log minᵢ vᵢ` (polytope ⊆ simplex) |
//! | pushforward KL(· ‖ v)  | vertex polytope  | `−log min_k v_k`                    |
//! | ½‖· − c‖²              | simplex          | `½(1 + ‖c‖² − 2 minᵢ cᵢ)`           |
//! | ½‖· − c‖²              | box `[ℓ, u]`     | `½ Σ max{(ℓᵢ−cᵢ)², (uᵢ−cᵢ)²}`       |
//! | ½‖·‖²                  | unit ℓp ball     | `½` for p ≤ 2, `½ m^{1−2/p}` else    |

use crate::feasible::{FeasibleSet, LpNorm};
use crate::{linalg, Error, Result, Vector};

const NORMALIZATION_TOL: f64 = 1e-12;
const DOMAIN_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Penalty {
    /// `Σ λᵢ log(λᵢ / vᵢ)` on simplex-like domains.
    Kl { prior: Vector },
    /// `½‖λ − c‖²`.
    QuadraticToCenter { center: Vector },
    /// `min { KL(α ‖ v) : α ∈ Δ_K, Σ α_k a_k = λ }` on `conv{a₁..a_K}`; only
    /// available through its closed-form smoothing.
    PushforwardKl { prior: Vector },
}

impl Penalty {
    pub fn kl(prior: Vector) -> Result<Self> {
        validate_prior(&prior)?;
        Ok(Penalty::Kl { prior })
    }

    pub fn kl_uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidPenalty("dimension must be positive".into()));
        }
        Ok(Penalty::Kl {
            prior: Vector::from_element(m, 1.0 / m as f64),
        })
    }

    pub fn quadratic(center: Vector) -> Result<Self> {
        if center.is_empty() || center.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidPenalty("center must be a finite non-empty vector".into()));
        }
        Ok(Penalty::QuadraticToCenter { center })
    }

    pub fn pushforward_kl(prior: Vector) -> Result<Self> {
        validate_prior(&prior)?;
        Ok(Penalty::PushforwardKl { prior })
    }

    pub fn pushforward_kl_uniform(k: usize) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidPenalty("vertex count must be positive".into()));
        }
        Ok(Penalty::PushforwardKl {
            prior: Vector::from_element(k, 1.0 / k as f64),
        })
    }

    /// Length of the vector the penalty is parameterized by (the prior over
    /// vertices for the pushforward variant).
    pub fn param_dim(&self) -> usize {
        match self {
            Penalty::Kl { prior } | Penalty::PushforwardKl { prior } => prior.len(),
            Penalty::QuadraticToCenter { center } => center.len(),
        }
    }

    /// Strong-convexity modulus with respect to `‖·‖₂` on `set`.
    ///
    /// KL has Hessian `diag(1/λᵢ) ⪰ I` on the simplex. The pushforward KL is
    /// `1/R²`-strongly convex with `R = max_k ‖a_k‖₂` (Pinsker on the weights,
    /// then `‖Σ δ_k a_k‖₂ ≤ R ‖δ‖₁`).
    pub fn sigma(&self, set: &FeasibleSet) -> f64 {
        match (self, set) {
            (Penalty::PushforwardKl { .. }, FeasibleSet::VertexPolytope { vertices }) => {
                let r = vertices.iter().map(|a| a.norm()).fold(0.0, f64::max);
                if r > 0.0 {
                    1.0 / (r * r)
                } else {
                    1.0
                }
            }
            _ => 1.0,
        }
    }

    /// `D(λ)`. KL uses `0 · log 0 = 0`; points off the simplex by more than
    /// the feasibility slack are rejected.
    pub fn value(&self, lambda: &Vector) -> Result<f64> {
        self.check_dim(lambda)?;
        match self {
            Penalty::Kl { prior } => {
                check_simplex_like(lambda)?;
                let clamped = lambda.map(|x| x.max(0.0));
                Ok(linalg::kl_divergence(&clamped, prior))
            }
            Penalty::QuadraticToCenter { center } => Ok(0.5 * (lambda - center).norm_squared()),
            Penalty::PushforwardKl { .. } => Err(Error::NotMaterialized(
                "pushforward KL is evaluated on barycentric weights".into(),
            )),
        }
    }

    /// `D(λ)` with an explicit membership check against `set`.
    pub fn value_on(&self, set: &FeasibleSet, lambda: &Vector) -> Result<f64> {
        if !set.contains(lambda, DOMAIN_SLACK) {
            let violation = match set.project(lambda) {
                Ok(p) => (p - lambda).norm(),
                Err(_) => f64::INFINITY,
            };
            return Err(Error::InfeasiblePoint { violation });
        }
        self.value(lambda)
    }

    /// `∇D(λ)`; for KL this is `1 + log(λᵢ / vᵢ)` and needs `λ > 0`.
    pub fn grad(&self, lambda: &Vector) -> Result<Vector> {
        self.check_dim(lambda)?;
        match self {
            Penalty::Kl { prior } => {
                let min_component = lambda.min();
                if !(min_component > 0.0) {
                    return Err(Error::BoundaryGradient { min_component });
                }
                Ok(Vector::from_fn(lambda.len(), |i, _| 1.0 + (lambda[i] / prior[i]).ln()))
            }
            Penalty::QuadraticToCenter { center } => Ok(lambda - center),
            Penalty::PushforwardKl { .. } => Err(Error::NotMaterialized(
                "pushforward KL has no gradient in λ".into(),
            )),
        }
    }

    /// `C = sup_{λ ∈ Q} D(λ)` for the supported (penalty, set) catalog.
    pub fn sup_constant(&self, set: &FeasibleSet) -> Result<f64> {
        let mismatch = || Error::UnsupportedPair(format!("{} on {}", self.name(), set_name(set)));
        match (self, set) {
            (Penalty::Kl { prior }, FeasibleSet::Simplex { .. })
            | (Penalty::Kl { prior }, FeasibleSet::MomentPolytope(_)) => {
                if prior.len() != set.dim() {
                    return Err(Error::DimensionMismatch {
                        expected: set.dim(),
                        got: prior.len(),
                    });
                }
                Ok(-prior.min().ln())
            }
            (Penalty::PushforwardKl { prior }, FeasibleSet::VertexPolytope { vertices }) => {
                if prior.len() != vertices.len() {
                    return Err(Error::DimensionMismatch {
                        expected: vertices.len(),
                        got: prior.len(),
                    });
                }
                Ok(-prior.min().ln())
            }
            (Penalty::QuadraticToCenter { center }, FeasibleSet::Simplex { dim }) => {
                self.expect_dim(*dim)?;
                Ok(0.5 * (1.0 + center.norm_squared() - 2.0 * center.min()))
            }
            (Penalty::QuadraticToCenter { center }, FeasibleSet::Box { lower, upper }) => {
                self.expect_dim(lower.len())?;
                Ok(0.5
                    * (0..center.len())
                        .map(|i| (lower[i] - center[i]).powi(2).max((upper[i] - center[i]).powi(2)))
                        .sum::<f64>())
            }
            (Penalty::QuadraticToCenter { center }, FeasibleSet::LpBall { dim, norm }) => {
                self.expect_dim(*dim)?;
                if center.iter().any(|&c| c != 0.0) {
                    return Err(Error::UnsupportedPair(
                        "quadratic penalty on an lp ball must be centered at the origin".into(),
                    ));
                }
                let m = *dim as f64;
                Ok(match norm {
                    LpNorm::L1 | LpNorm::L2 => 0.5,
                    LpNorm::Linf => 0.5 * m,
                })
            }
            _ => Err(mismatch()),
        }
    }

    /// Whether `inf_Q D = 0`, i.e. the prior or center lies in `Q`.
    pub fn vanishes_on(&self, set: &FeasibleSet) -> bool {
        match (self, set) {
            (Penalty::Kl { prior }, _) => set.contains(prior, DOMAIN_SLACK),
            (Penalty::QuadraticToCenter { center }, _) => set.contains(center, DOMAIN_SLACK),
            (Penalty::PushforwardKl { .. }, FeasibleSet::VertexPolytope { .. }) => true,
            _ => false,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Penalty::Kl { .. } => "kl",
            Penalty::QuadraticToCenter { .. } => "quadratic",
            Penalty::PushforwardKl { .. } => "pushforward-kl",
        }
    }

    fn check_dim(&self, lambda: &Vector) -> Result<()> {
        if lambda.len() != self.param_dim() && !matches!(self, Penalty::PushforwardKl { .. }) {
            return Err(Error::DimensionMismatch {
                expected: self.param_dim(),
                got: lambda.len(),
            });
        }
        Ok(())
    }

    fn expect_dim(&self, m: usize) -> Result<()> {
        if self.param_dim() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: self.param_dim(),
            });
        }
        Ok(())
    }
}

pub(crate) fn set_name(set: &FeasibleSet) -> &'static str {
    match set {
        FeasibleSet::Simplex { .. } => "simplex",
        FeasibleSet::Box { .. } => "box",
        FeasibleSet::LpBall { .. } => "lp-ball",
        FeasibleSet::VertexPolytope { .. } => "vertex-polytope",
        FeasibleSet::MomentPolytope(_) => "moment-polytope",
    }
}

fn validate_prior(prior: &Vector) -> Result<()> {
    if prior.is_empty() {
        return Err(Error::InvalidPenalty("prior must be non-empty".into()));
    }
    if prior.iter().any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::InvalidPenalty("prior must be strictly positive".into()));
    }
    if (prior.sum() - 1.0).abs() > NORMALIZATION_TOL * prior.len() as f64 {
        return Err(Error::InvalidPenalty(format!(
            "prior must sum to 1 (sum = {})",
            prior.sum()
        )));
    }
    Ok(())
}

fn check_simplex_like(lambda: &Vector) -> Result<()> {
    let neg = (-lambda.min()).max(0.0);
    let mass = (lambda.sum() - 1.0).abs();
    let violation = neg.max(mass);
    if violation > DOMAIN_SLACK || lambda.iter().any(|x| !x.is_finite()) {
        return Err(Error::InfeasiblePoint { violation });
    }
    Ok(())
}
