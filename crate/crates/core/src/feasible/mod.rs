//! Compact convex dual domains `Q` and their Euclidean projections.
//!
//! Every variant is bounded, so the supremum radius
//! `M_Q = sup_{λ ∈ Q} ‖λ‖₁` is finite and linear functionals attain their
//! maximum on `Q`. Projections are exact for the simplex, box and the
//! ℓ₁/ℓ₂/ℓ∞ unit balls. Vertex hulls use a finite active-set method and
//! moment polytopes a semismooth Newton iteration on the dual.

mod moment;

pub use moment::{MomentPolytope, Witness};

use crate::{Error, Matrix, Result, SolverConfig, Vector};
use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};

/// Unit balls supported by [`FeasibleSet::LpBall`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpNorm {
    L1,
    L2,
    Linf,
}

impl LpNorm {
    pub fn from_p(p: f64) -> Result<Self> {
        if p == 1.0 {
            Ok(LpNorm::L1)
        } else if p == 2.0 {
            Ok(LpNorm::L2)
        } else if p.is_infinite() && p > 0.0 {
            Ok(LpNorm::Linf)
        } else {
            Err(Error::InvalidSet(format!(
                "only p in {{1, 2, inf}} is supported, got {p}"
            )))
        }
    }

    pub fn p(self) -> f64 {
        match self {
            LpNorm::L1 => 1.0,
            LpNorm::L2 => 2.0,
            LpNorm::Linf => f64::INFINITY,
        }
    }

    pub fn norm(self, y: &Vector) -> f64 {
        match self {
            LpNorm::L1 => y.iter().map(|v| v.abs()).sum(),
            LpNorm::L2 => y.norm(),
            LpNorm::Linf => y.iter().fold(0.0, |a, v| a.max(v.abs())),
        }
    }

    /// The dual norm `‖·‖_q` with `1/p + 1/q = 1`.
    pub fn dual(self) -> LpNorm {
        match self {
            LpNorm::L1 => LpNorm::Linf,
            LpNorm::L2 => LpNorm::L2,
            LpNorm::Linf => LpNorm::L1,
        }
    }
}

/// The compact convex set `Q`.
#[derive(Debug, Clone)]
pub enum FeasibleSet {
    /// Probability simplex `Δ_m`.
    Simplex { dim: usize },
    /// Box `[lower, upper]` with `0 ≤ lower ≤ upper`.
    Box { lower: Vector, upper: Vector },
    /// Unit ball of `‖·‖_p`, `p ∈ {1, 2, ∞}`.
    LpBall { dim: usize, norm: LpNorm },
    /// Convex hull of the given vertices.
    VertexPolytope { vertices: Vec<Vector> },
    /// `{p : A p = b, Σp = 1, p ≥ 0}`.
    MomentPolytope(MomentPolytope),
}

impl FeasibleSet {
    pub fn simplex(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSet("simplex dimension must be positive".into()));
        }
        Ok(FeasibleSet::Simplex { dim })
    }

    pub fn bounded_box(lower: Vector, upper: Vector) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::DimensionMismatch {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.is_empty() {
            return Err(Error::InvalidSet("box dimension must be positive".into()));
        }
        for i in 0..lower.len() {
            if !(lower[i] >= 0.0 && lower[i] <= upper[i]) || !upper[i].is_finite() {
                return Err(Error::InvalidSet(format!(
                    "box requires 0 <= lower <= upper, violated at index {i}"
                )));
            }
        }
        Ok(FeasibleSet::Box { lower, upper })
    }

    pub fn lp_ball(dim: usize, p: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidSet("ball dimension must be positive".into()));
        }
        Ok(FeasibleSet::LpBall {
            dim,
            norm: LpNorm::from_p(p)?,
        })
    }

    pub fn vertex_polytope(vertices: Vec<Vector>) -> Result<Self> {
        let Some(first) = vertices.first() else {
            return Err(Error::InvalidSet("vertex polytope needs at least one vertex".into()));
        };
        let m = first.len();
        if m == 0 {
            return Err(Error::InvalidSet("vertices must be non-empty vectors".into()));
        }
        for v in &vertices {
            if v.len() != m {
                return Err(Error::DimensionMismatch {
                    expected: m,
                    got: v.len(),
                });
            }
            if v.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidSet("vertex coordinates must be finite".into()));
            }
        }
        Ok(FeasibleSet::VertexPolytope { vertices })
    }

    pub fn moment_polytope(a: Matrix, b: Vector) -> Result<Self> {
        Ok(FeasibleSet::MomentPolytope(MomentPolytope::new(
            a,
            b,
            &SolverConfig::default(),
        )?))
    }

    /// Ambient dimension `m`.
    pub fn dim(&self) -> usize {
        match self {
            FeasibleSet::Simplex { dim } | FeasibleSet::LpBall { dim, .. } => *dim,
            FeasibleSet::Box { lower, .. } => lower.len(),
            FeasibleSet::VertexPolytope { vertices } => vertices[0].len(),
            FeasibleSet::MomentPolytope(mp) => mp.dim(),
        }
    }

    /// `M_Q = sup_{λ ∈ Q} ‖λ‖₁`.
    pub fn support_radius(&self) -> f64 {
        match self {
            FeasibleSet::Simplex { .. } | FeasibleSet::MomentPolytope(_) => 1.0,
            FeasibleSet::Box { upper, .. } => upper.sum(),
            FeasibleSet::LpBall { dim, norm } => {
                let m = *dim as f64;
                match norm {
                    LpNorm::L1 => 1.0,
                    LpNorm::L2 => m.sqrt(),
                    LpNorm::Linf => m,
                }
            }
            // ‖·‖₁ is convex, so its maximum over the hull sits at a vertex
            FeasibleSet::VertexPolytope { vertices } => vertices
                .iter()
                .map(|v| LpNorm::L1.norm(v))
                .fold(0.0, f64::max),
        }
    }

    /// Euclidean projection onto `Q` with default tolerances.
    pub fn project(&self, y: &Vector) -> Result<Vector> {
        self.project_with(y, &SolverConfig::default())
    }

    pub fn project_with(&self, y: &Vector, cfg: &SolverConfig) -> Result<Vector> {
        self.check_dim(y)?;
        match self {
            FeasibleSet::Simplex { .. } => Ok(project_simplex(y)),
            FeasibleSet::Box { lower, upper } => project_box(y, lower, upper),
            FeasibleSet::LpBall { norm, .. } => Ok(project_lp_ball(y, *norm)),
            FeasibleSet::VertexPolytope { vertices } => {
                Ok(project_vertex_hull(y, vertices, cfg).0)
            }
            FeasibleSet::MomentPolytope(mp) => mp.project(y),
        }
    }

    /// `max_{q ∈ Q} ⟨d, q⟩` together with a maximizing point.
    pub fn linear_max(&self, d: &Vector) -> Result<(f64, Vector)> {
        self.check_dim(d)?;
        Ok(match self {
            FeasibleSet::Simplex { dim } => {
                let (i, v) = argmax(d);
                let mut q = Vector::zeros(*dim);
                q[i] = 1.0;
                (v, q)
            }
            FeasibleSet::Box { lower, upper } => {
                let q = Vector::from_fn(d.len(), |i, _| if d[i] >= 0.0 { upper[i] } else { lower[i] });
                (d.dot(&q), q)
            }
            FeasibleSet::LpBall { norm, .. } => {
                let q = match norm {
                    LpNorm::L2 => {
                        let n = d.norm();
                        if n > 0.0 {
                            d / n
                        } else {
                            Vector::zeros(d.len())
                        }
                    }
                    LpNorm::Linf => d.map(|x| if x >= 0.0 { 1.0 } else { -1.0 }),
                    LpNorm::L1 => {
                        let (i, _) = argmax(&d.map(f64::abs));
                        let mut q = Vector::zeros(d.len());
                        q[i] = d[i].signum();
                        q
                    }
                };
                (norm.dual().norm(d), q)
            }
            FeasibleSet::VertexPolytope { vertices } => {
                let scores = Vector::from_iterator(vertices.len(), vertices.iter().map(|a| a.dot(d)));
                let (k, v) = argmax(&scores);
                (v, vertices[k].clone())
            }
            FeasibleSet::MomentPolytope(mp) => mp.linear_max(d)?,
        })
    }

    /// Feasibility test with an absolute slack.
    pub fn contains(&self, lambda: &Vector, slack: f64) -> bool {
        if lambda.len() != self.dim() || lambda.iter().any(|x| !x.is_finite()) {
            return false;
        }
        match self {
            FeasibleSet::Simplex { .. } => {
                lambda.iter().all(|&x| x >= -slack) && (lambda.sum() - 1.0).abs() <= slack
            }
            FeasibleSet::Box { lower, upper } => (0..lambda.len())
                .all(|i| lambda[i] >= lower[i] - slack && lambda[i] <= upper[i] + slack),
            FeasibleSet::LpBall { norm, .. } => norm.norm(lambda) <= 1.0 + slack,
            FeasibleSet::VertexPolytope { vertices } => {
                let (p, _) = project_vertex_hull(lambda, vertices, &SolverConfig::default());
                (p - lambda).norm() <= slack.max(1e-9)
            }
            FeasibleSet::MomentPolytope(mp) => mp.contains(lambda, slack),
        }
    }

    /// Draws a random point of `Q` (not necessarily uniformly distributed).
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        match self {
            FeasibleSet::Simplex { dim } => dirichlet_flat(*dim, rng),
            FeasibleSet::Box { lower, upper } => Vector::from_fn(lower.len(), |i, _| {
                lower[i] + (upper[i] - lower[i]) * rng.gen::<f64>()
            }),
            FeasibleSet::LpBall { dim, norm } => match norm {
                LpNorm::Linf => Vector::from_fn(*dim, |_, _| rng.gen_range(-1.0..=1.0)),
                LpNorm::L2 => {
                    let dir = Vector::from_fn(*dim, |_, _| StandardNormal.sample(rng));
                    let n = dir.norm().max(f64::MIN_POSITIVE);
                    let radius = rng.gen::<f64>().powf(1.0 / *dim as f64);
                    dir * (radius / n)
                }
                LpNorm::L1 => {
                    // uniform on Δ_{m+1}, drop the slack coordinate, random signs
                    let w = dirichlet_flat(dim + 1, rng);
                    Vector::from_fn(*dim, |i, _| {
                        if rng.gen::<bool>() {
                            w[i]
                        } else {
                            -w[i]
                        }
                    })
                }
            },
            FeasibleSet::VertexPolytope { vertices } => {
                let w = dirichlet_flat(vertices.len(), rng);
                combine(vertices, &w)
            }
            FeasibleSet::MomentPolytope(mp) => mp.sample(rng),
        }
    }

    fn check_dim(&self, y: &Vector) -> Result<()> {
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: y.len(),
            });
        }
        Ok(())
    }
}

/// Euclidean projection onto the probability simplex (sort and threshold).
pub fn project_simplex(y: &Vector) -> Vector {
    let m = y.len();
    if m == 0 {
        return y.clone();
    }
    let mut u: Vec<f64> = y.iter().cloned().collect();
    u.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &uj) in u.iter().enumerate() {
        cumsum += uj;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if uj - t > 0.0 {
            tau = t;
        }
    }
    y.map(|v| (v - tau).max(0.0))
}

/// Componentwise clamp onto `[lower, upper]`.
pub fn project_box(y: &Vector, lower: &Vector, upper: &Vector) -> Result<Vector> {
    if y.len() != lower.len() || y.len() != upper.len() {
        return Err(Error::DimensionMismatch {
            expected: lower.len(),
            got: y.len(),
        });
    }
    Ok(Vector::from_fn(y.len(), |i, _| y[i].max(lower[i]).min(upper[i])))
}

/// Euclidean projection onto the unit ball of `‖·‖_p`.
pub fn project_lp_ball(y: &Vector, norm: LpNorm) -> Vector {
    match norm {
        LpNorm::L2 => {
            let n = y.norm();
            if n <= 1.0 {
                y.clone()
            } else {
                y / n
            }
        }
        LpNorm::Linf => y.map(|v| v.clamp(-1.0, 1.0)),
        LpNorm::L1 => {
            if LpNorm::L1.norm(y) <= 1.0 {
                return y.clone();
            }
            let w = project_simplex(&y.map(f64::abs));
            Vector::from_fn(y.len(), |i, _| w[i].copysign(y[i]))
        }
    }
}

/// Projection onto `conv{a₁..a_K}` by Wolfe's minimum-norm-point method on
/// the translated points `aₖ − y`. Returns the projected point and the
/// barycentric weights.
pub fn project_vertex_hull(y: &Vector, vertices: &[Vector], cfg: &SolverConfig) -> (Vector, Vector) {
    let k = vertices.len();
    let pts: Vec<Vector> = vertices.iter().map(|a| a - y).collect();
    let big = pts.iter().map(|p| p.norm_squared()).fold(0.0, f64::max).max(1e-300);
    let eps = 1e-15 * big;

    let first = (0..k)
        .min_by(|&i, &j| pts[i].norm_squared().total_cmp(&pts[j].norm_squared()))
        .unwrap();
    let mut active = vec![first];
    let mut lam = vec![1.0];
    let mut x = pts[first].clone();
    for _ in 0..cfg.projection_max_iter {
        let (j, best) = (0..k)
            .map(|j| (j, x.dot(&pts[j])))
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        if x.norm_squared() - best <= eps || active.contains(&j) {
            break;
        }
        active.push(j);
        lam.push(0.0);
        loop {
            let Some(alpha) = affine_min_norm(&pts, &active) else {
                break;
            };
            if alpha.iter().all(|&a| a > 0.0) {
                lam = alpha.iter().copied().collect();
                break;
            }
            let mut theta = 1.0f64;
            for (i, &a) in alpha.iter().enumerate() {
                if a <= 0.0 && lam[i] - a > 0.0 {
                    theta = theta.min(lam[i] / (lam[i] - a));
                }
            }
            for (i, l) in lam.iter_mut().enumerate() {
                *l += theta * (alpha[i] - *l);
            }
            let mut keep = 0;
            for i in 0..active.len() {
                if lam[i] > 1e-15 {
                    active[keep] = active[i];
                    lam[keep] = lam[i];
                    keep += 1;
                }
            }
            active.truncate(keep);
            lam.truncate(keep);
            let total: f64 = lam.iter().sum();
            lam.iter_mut().for_each(|l| *l /= total);
            if active.len() <= 1 {
                break;
            }
        }
        x = active
            .iter()
            .zip(&lam)
            .fold(Vector::zeros(y.len()), |acc, (&i, &l)| acc + &pts[i] * l);
    }
    let mut w = Vector::zeros(k);
    for (&i, &l) in active.iter().zip(&lam) {
        w[i] = l;
    }
    (combine(vertices, &w), w)
}

/// Weights of the minimum-norm point on the affine hull of `pts[active]`.
fn affine_min_norm(pts: &[Vector], active: &[usize]) -> Option<Vector> {
    let s = active.len();
    let mut kkt = Matrix::zeros(s + 1, s + 1);
    for (a, &i) in active.iter().enumerate() {
        for (b, &j) in active.iter().enumerate() {
            kkt[(a, b)] = pts[i].dot(&pts[j]);
        }
        kkt[(a, s)] = 1.0;
        kkt[(s, a)] = 1.0;
    }
    let mut rhs = Vector::zeros(s + 1);
    rhs[s] = 1.0;
    let sol = kkt.lu().solve(&rhs)?;
    Some(sol.rows(0, s).into_owned())
}

fn argmax(d: &Vector) -> (usize, f64) {
    d.iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |(bi, bv), (i, &x)| if x > bv { (i, x) } else { (bi, bv) })
}

fn combine(points: &[Vector], weights: &Vector) -> Vector {
    let mut out = Vector::zeros(points[0].len());
    for (p, &w) in points.iter().zip(weights.iter()) {
        out.axpy(w, p, 1.0);
    }
    out
}

/// Uniform draw from the simplex (Dirichlet(1, …, 1)).
pub(crate) fn dirichlet_flat<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vector {
    let e = Vector::from_fn(dim, |_, _| Exp1.sample(rng));
    let s: f64 = e.sum();
    e / s
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    fn close(a: &Vector, b: &Vector, tol: f64) -> bool {
        (a - b).amax() <= tol
    }

    #[test]
    fn simplex_projection_examples() {
        assert!(close(&project_simplex(&v(&[0.6, 0.6])), &v(&[0.5, 0.5]), 1e-15));
        assert!(close(&project_simplex(&v(&[2.0, 0.0])), &v(&[1.0, 0.0]), 1e-15));
        let third = 1.0 / 3.0;
        assert!(close(
            &project_simplex(&v(&[third, third, third])),
            &v(&[third, third, third]),
            1e-15
        ));
    }

    #[test]
    fn simplex_projection_matches_brute_force_grid() {
        // (2, 0): minimize ‖λ − y‖ over λ = (s, 1 − s) on a 1e-4 grid
        let y = v(&[2.0, 0.0]);
        let best = (0..=10_000)
            .map(|k| k as f64 * 1e-4)
            .min_by(|a, b| {
                let da = (a - y[0]).powi(2) + (1.0 - a - y[1]).powi(2);
                let db = (b - y[0]).powi(2) + (1.0 - b - y[1]).powi(2);
                da.total_cmp(&db)
            })
            .unwrap();
        let p = project_simplex(&y);
        assert!((p[0] - best).abs() <= 1e-4);
    }

    #[test]
    fn box_projection_examples() {
        let z = v(&[0.0, 0.0]);
        let two = v(&[2.0, 2.0]);
        assert_eq!(project_box(&v(&[3.0, -1.0]), &z, &two).unwrap(), v(&[2.0, 0.0]));
        assert_eq!(project_box(&v(&[1.0, 1.0]), &z, &two).unwrap(), v(&[1.0, 1.0]));
        assert_eq!(
            project_box(&v(&[0.5, 3.0, -0.2]), &v(&[0.0, 1.0, 0.0]), &v(&[1.0, 2.0, 1.0])).unwrap(),
            v(&[0.5, 2.0, 0.0])
        );
        assert!(matches!(
            project_box(&v(&[1.0]), &z, &two),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn degenerate_box_is_a_point() {
        let set = FeasibleSet::bounded_box(v(&[0.3, 0.0]), v(&[0.3, 1.0])).unwrap();
        let p = set.project(&v(&[5.0, 0.5])).unwrap();
        assert_eq!(p, v(&[0.3, 0.5]));
    }

    #[test]
    fn box_rejects_negative_or_inverted_bounds() {
        assert!(FeasibleSet::bounded_box(v(&[-0.1]), v(&[1.0])).is_err());
        assert!(FeasibleSet::bounded_box(v(&[2.0]), v(&[1.0])).is_err());
    }

    #[test]
    fn lp_ball_projection_examples() {
        assert!(close(&project_lp_ball(&v(&[3.0, 4.0]), LpNorm::L2), &v(&[0.6, 0.8]), 1e-15));
        assert_eq!(project_lp_ball(&v(&[0.2, -0.3]), LpNorm::L1), v(&[0.2, -0.3]));
        assert!(close(&project_lp_ball(&v(&[2.0, 0.0]), LpNorm::L1), &v(&[1.0, 0.0]), 1e-15));
        assert_eq!(project_lp_ball(&v(&[2.0, -0.5]), LpNorm::Linf), v(&[1.0, -0.5]));
        assert!(LpNorm::from_p(3.0).is_err());
    }

    #[test]
    fn l1_projection_matches_boundary_grid() {
        // boundary of the ℓ1 ball in the first quadrant: (s, 1 − s)
        let y = v(&[2.0, 0.0]);
        let best = (0..=10_000)
            .map(|k| k as f64 * 1e-4)
            .min_by(|a, b| {
                let da = (a - 2.0f64).powi(2) + (1.0 - a).powi(2);
                let db = (b - 2.0f64).powi(2) + (1.0 - b).powi(2);
                da.total_cmp(&db)
            })
            .unwrap();
        let p = project_lp_ball(&y, LpNorm::L1);
        assert!((p[0] - best).abs() <= 1e-4);
    }

    #[test]
    fn support_radius_examples() {
        assert_eq!(FeasibleSet::simplex(5).unwrap().support_radius(), 1.0);
        let b = FeasibleSet::bounded_box(v(&[0.0, 0.2]), v(&[2.0, 1.5])).unwrap();
        assert!((b.support_radius() - 3.5).abs() < 1e-15);
        assert!((FeasibleSet::lp_ball(4, 2.0).unwrap().support_radius() - 2.0).abs() < 1e-15);
        assert_eq!(FeasibleSet::lp_ball(4, f64::INFINITY).unwrap().support_radius(), 4.0);
        assert_eq!(FeasibleSet::lp_ball(4, 1.0).unwrap().support_radius(), 1.0);
    }

    #[test]
    fn vertex_hull_projection_onto_segment() {
        let set = FeasibleSet::vertex_polytope(vec![v(&[1.0, 0.0]), v(&[0.0, 1.0])]).unwrap();
        let p = set.project(&v(&[2.0, 2.0])).unwrap();
        // 1-D parameter grid over the segment
        let best = (0..=10_000)
            .map(|k| k as f64 * 1e-4)
            .min_by(|a, b| {
                let da = (a - 2.0f64).powi(2) + (1.0 - a - 2.0f64).powi(2);
                let db = (b - 2.0f64).powi(2) + (1.0 - b - 2.0f64).powi(2);
                da.total_cmp(&db)
            })
            .unwrap();
        assert!(close(&p, &v(&[0.5, 0.5]), 1e-10));
        assert!((p[0] - best).abs() <= 1e-4);
    }

    #[test]
    fn linear_max_matches_support_function() {
        let d = v(&[3.0, -4.0]);
        let ball = FeasibleSet::lp_ball(2, 2.0).unwrap();
        assert!((ball.linear_max(&d).unwrap().0 - 5.0).abs() < 1e-12);
        let ball1 = FeasibleSet::lp_ball(2, 1.0).unwrap();
        assert_eq!(ball1.linear_max(&d).unwrap().0, 4.0);
        let ballinf = FeasibleSet::lp_ball(2, f64::INFINITY).unwrap();
        assert_eq!(ballinf.linear_max(&d).unwrap().0, 7.0);
        let b = FeasibleSet::bounded_box(v(&[0.0, 0.0]), v(&[1.0, 1.0])).unwrap();
        assert_eq!(b.linear_max(&v(&[2.0, -3.0])).unwrap().0, 2.0);
    }

    #[test]
    fn samples_are_feasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let sets = vec![
            FeasibleSet::simplex(4).unwrap(),
            FeasibleSet::bounded_box(v(&[0.0, 0.5]), v(&[1.0, 2.0])).unwrap(),
            FeasibleSet::lp_ball(3, 1.0).unwrap(),
            FeasibleSet::lp_ball(3, 2.0).unwrap(),
            FeasibleSet::lp_ball(3, f64::INFINITY).unwrap(),
        ];
        for set in &sets {
            for _ in 0..200 {
                let s = set.sample(&mut rng);
                assert!(set.contains(&s, 1e-12), "{set:?} {s}");
            }
        }
    }
}
