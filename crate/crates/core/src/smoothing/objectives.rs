use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::{linalg, Error, Matrix, Result, Vector};

/// Safety factor applied to sampled gradient-norm suprema.
pub const SAMPLED_BOUND_SAFETY: f64 = 1.1;

/// The family `g₁, …, g_m : ℝⁿ → ℝ` of convex objectives.
///
/// Implementations must be pure: `eval` and `jacobian` may be called
/// concurrently from several threads.
pub trait ObjectiveFamily: Send + Sync + fmt::Debug {
    /// Input dimension `n`.
    fn dim(&self) -> usize;

    /// Number of components `m`.
    fn count(&self) -> usize;

    fn eval(&self, x: &Vector) -> Vector;

    /// `m × n` matrix whose `i`-th row is `∇gᵢ(x)ᵀ`.
    fn jacobian(&self, x: &Vector) -> Matrix;

    /// Lipschitz constants `Lᵢ` of `∇gᵢ` on the ball `B(center, radius)`.
    fn component_lipschitz(&self, _center: &Vector, _radius: f64) -> Option<Vector> {
        None
    }

    /// Upper bounds on `sup_{x ∈ B} ‖∇gᵢ(x)‖₂`.
    fn gradient_norm_bound(&self, _center: &Vector, _radius: f64) -> Option<Vector> {
        None
    }

    /// `argmin_x Σ wᵢ gᵢ(x)` and its value, when known in closed form.
    fn weighted_minimum(&self, _w: &Vector) -> Option<(Vector, f64)> {
        None
    }
}

/// `gᵢ(x) = ½ (x − xⁱ)ᵀ Mᵢ (x − xⁱ) + eᵢ` with symmetric positive semidefinite `Mᵢ`.
#[derive(Debug, Clone)]
pub struct QuadraticFamily {
    matrices: Vec<Matrix>,
    anchors: Vec<Vector>,
    offsets: Vector,
    max_eigs: Vec<f64>,
}

impl QuadraticFamily {
    pub fn new(matrices: Vec<Matrix>, anchors: Vec<Vector>, offsets: Vector) -> Result<Self> {
        let m = matrices.len();
        if m == 0 {
            return Err(Error::InvalidSet("objective family must be non-empty".into()));
        }
        if anchors.len() != m || offsets.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: anchors.len().min(offsets.len()),
            });
        }
        let n = anchors[0].len();
        let mut max_eigs = Vec::with_capacity(m);
        for (mi, xi) in matrices.iter().zip(&anchors) {
            if mi.nrows() != n || mi.ncols() != n || xi.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: xi.len().max(mi.nrows()),
                });
            }
            if (mi - mi.transpose()).amax() > 1e-12 * (1.0 + mi.amax()) {
                return Err(Error::InvalidSet("quadratic matrices must be symmetric".into()));
            }
            if linalg::sym_min_eigenvalue(mi) < -1e-12 * (1.0 + mi.amax()) {
                return Err(Error::InvalidSet(
                    "quadratic matrices must be positive semidefinite".into(),
                ));
            }
            max_eigs.push(linalg::sym_max_eigenvalue(mi).max(0.0));
        }
        Ok(Self {
            matrices,
            anchors,
            offsets,
            max_eigs,
        })
    }

    pub fn matrices(&self) -> &[Matrix] {
        &self.matrices
    }

    pub fn anchors(&self) -> &[Vector] {
        &self.anchors
    }

    pub fn offsets(&self) -> &Vector {
        &self.offsets
    }

    /// `argmin_x Σ wᵢ gᵢ(x)` and its value, when `Σ wᵢ Mᵢ` is invertible.
    pub fn weighted_minimum(&self, w: &Vector) -> Option<(Vector, f64)> {
        let n = self.dim();
        let mut h = Matrix::zeros(n, n);
        let mut rhs = Vector::zeros(n);
        for i in 0..self.count() {
            h += &self.matrices[i] * w[i];
            rhs += &self.matrices[i] * &self.anchors[i] * w[i];
        }
        let x = h.clone().cholesky()?.solve(&rhs);
        let val = w.dot(&self.eval(&x));
        Some((x, val))
    }
}

impl ObjectiveFamily for QuadraticFamily {
    fn dim(&self) -> usize {
        self.anchors[0].len()
    }

    fn count(&self) -> usize {
        self.matrices.len()
    }

    fn eval(&self, x: &Vector) -> Vector {
        Vector::from_fn(self.count(), |i, _| {
            let d = x - &self.anchors[i];
            0.5 * d.dot(&(&self.matrices[i] * &d)) + self.offsets[i]
        })
    }

    fn jacobian(&self, x: &Vector) -> Matrix {
        let n = self.dim();
        let mut j = Matrix::zeros(self.count(), n);
        for i in 0..self.count() {
            let gi = &self.matrices[i] * (x - &self.anchors[i]);
            j.set_row(i, &gi.transpose());
        }
        j
    }

    fn component_lipschitz(&self, _center: &Vector, _radius: f64) -> Option<Vector> {
        Some(Vector::from_column_slice(&self.max_eigs))
    }

    fn gradient_norm_bound(&self, center: &Vector, radius: f64) -> Option<Vector> {
        Some(Vector::from_fn(self.count(), |i, _| {
            (&self.matrices[i] * (center - &self.anchors[i])).norm() + self.max_eigs[i] * radius
        }))
    }

    fn weighted_minimum(&self, w: &Vector) -> Option<(Vector, f64)> {
        QuadraticFamily::weighted_minimum(self, w)
    }
}

type EvalFn = dyn Fn(&Vector) -> Vector + Send + Sync;
type JacFn = dyn Fn(&Vector) -> Matrix + Send + Sync;

/// An objective family given by closures.
///
/// Gradient-norm bounds are estimated by sampling the ball and inflating the
/// observed maximum by [`SAMPLED_BOUND_SAFETY`].
#[derive(Clone)]
pub struct FnFamily {
    dim: usize,
    count: usize,
    eval: Arc<EvalFn>,
    jac: Arc<JacFn>,
    lipschitz: Option<Arc<dyn Fn(&Vector, f64) -> Vector + Send + Sync>>,
    samples: usize,
}

impl fmt::Debug for FnFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("FnFamily")
            .field("dim", &self.dim)
            .field("count", &self.count)
            .finish_non_exhaustive()
    }
}

impl FnFamily {
    pub fn new(
        dim: usize,
        count: usize,
        eval: impl Fn(&Vector) -> Vector + Send + Sync + 'static,
        jac: impl Fn(&Vector) -> Matrix + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            count,
            eval: Arc::new(eval),
            jac: Arc::new(jac),
            lipschitz: None,
            samples: 2000,
        }
    }

    /// Supplies `Lᵢ` on a ball as a function of `(center, radius)`.
    pub fn with_lipschitz(
        mut self,
        lipschitz: impl Fn(&Vector, f64) -> Vector + Send + Sync + 'static,
    ) -> Self {
        self.lipschitz = Some(Arc::new(lipschitz));
        self
    }

    pub fn with_bound_samples(mut self, samples: usize) -> Self {
        self.samples = samples.max(1);
        self
    }
}

impl ObjectiveFamily for FnFamily {
    fn dim(&self) -> usize {
        self.dim
    }

    fn count(&self) -> usize {
        self.count
    }

    fn eval(&self, x: &Vector) -> Vector {
        (self.eval)(x)
    }

    fn jacobian(&self, x: &Vector) -> Matrix {
        (self.jac)(x)
    }

    fn component_lipschitz(&self, center: &Vector, radius: f64) -> Option<Vector> {
        self.lipschitz.as_ref().map(|f| f(center, radius))
    }

    fn gradient_norm_bound(&self, center: &Vector, radius: f64) -> Option<Vector> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_b0b0);
        let mut best = row_norms(&(self.jac)(center));
        let mut visit = |x: &Vector| {
            let norms = row_norms(&(self.jac)(x));
            for i in 0..best.len() {
                best[i] = best[i].max(norms[i]);
            }
        };
        // the coordinate extremes of the ball first, then random points on
        // and inside the sphere
        for k in 0..self.dim {
            for s in [-1.0, 1.0] {
                let mut x = center.clone();
                x[k] += s * radius;
                visit(&x);
            }
        }
        for j in 0..self.samples {
            let dir = Vector::from_fn(self.dim, |_, _| StandardNormal.sample(&mut rng));
            let n = dir.norm();
            if n == 0.0 {
                continue;
            }
            let scale = if j % 2 == 0 { 1.0 } else { (j as f64 / self.samples as f64).sqrt() };
            visit(&(center + dir * (radius * scale / n)));
        }
        Some(best * SAMPLED_BOUND_SAFETY)
    }
}

fn row_norms(j: &Matrix) -> Vector {
    Vector::from_fn(j.nrows(), |i, _| j.row(i).norm())
}
