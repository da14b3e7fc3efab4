//! Moment-constrained polytopes `{p : A p = b, Σp = 1, p ≥ 0}`.
//!
//! The normalization row is stacked on top of `A` and redundant rows are
//! pruned, leaving an independent system `E p = f`. Projections solve the
//! dual of `min ½‖p − y‖²  s.t.  E p = f, p ≥ 0`,
//!
//! ```text
//! max_ν  −½‖(y + Eᵀν)₊‖² + ⟨ν, f⟩,      p(ν) = (y + Eᵀν)₊,
//! ```
//!
//! by a primal-dual active-set (semismooth Newton) iteration: the active set
//! is `{i : (y + Eᵀν)ᵢ > 0}` and each step solves the reduced KKT system on it.

use crate::{linalg, Error, Matrix, Result, SolverConfig, Vector};
use rand::Rng;

const MAX_VERTEX_BASES: u64 = 500_000;
const WITNESS_PULL: f64 = 1e4;

/// Interior information about a moment polytope.
#[derive(Debug, Clone, PartialEq)]
pub enum Witness {
    /// A feasible point with every component strictly positive.
    Strict(Vector),
    /// Feasible, but every feasible point has some zero component.
    Boundary(Vector),
    /// No point satisfies the constraints.
    Infeasible,
}

#[derive(Debug, Clone)]
pub struct MomentPolytope {
    a: Matrix,
    b: Vector,
    eq: Matrix,
    rhs: Vector,
    kept_rows: Vec<usize>,
    witness: Witness,
    vertices: Option<Vec<Vector>>,
}

impl MomentPolytope {
    pub fn new(a: Matrix, b: Vector, cfg: &SolverConfig) -> Result<Self> {
        let m = a.ncols();
        if m == 0 {
            return Err(Error::InvalidSet("moment polytope needs at least one scenario".into()));
        }
        if a.nrows() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: a.nrows(),
                got: b.len(),
            });
        }
        if a.iter().chain(b.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidSet("moment data must be finite".into()));
        }
        let d = a.nrows();
        let mut stacked = Matrix::zeros(d + 1, m);
        stacked.row_mut(0).fill(1.0);
        let mut stacked_rhs = Vector::zeros(d + 1);
        stacked_rhs[0] = 1.0;
        for i in 0..d {
            stacked.set_row(i + 1, &a.row(i));
            stacked_rhs[i + 1] = b[i];
        }
        let kept = linalg::independent_rows(&stacked, cfg.rank_tol);
        debug_assert_eq!(kept.first(), Some(&0));
        let eq = Matrix::from_fn(kept.len(), m, |r, c| stacked[(kept[r], c)]);
        let rhs = Vector::from_fn(kept.len(), |r, _| stacked_rhs[kept[r]]);
        let kept_rows = kept.iter().skip(1).map(|&r| r - 1).collect();

        let mut poly = MomentPolytope {
            a,
            b,
            eq,
            rhs,
            kept_rows,
            witness: Witness::Infeasible,
            vertices: None,
        };
        poly.witness = poly.find_witness();
        if !matches!(poly.witness, Witness::Infeasible) {
            poly.vertices = poly.enumerate_vertices();
        }
        Ok(poly)
    }

    pub fn dim(&self) -> usize {
        self.a.ncols()
    }

    pub fn moment_matrix(&self) -> &Matrix {
        &self.a
    }

    pub fn moment_rhs(&self) -> &Vector {
        &self.b
    }

    /// Rows of `A` kept after removing those dependent on `[1ᵀ; earlier rows]`.
    pub fn kept_rows(&self) -> &[usize] {
        &self.kept_rows
    }

    /// `A` restricted to the kept rows.
    pub fn reduced_moments(&self) -> (Matrix, Vector) {
        let m = self.dim();
        let k = self.kept_rows.len();
        let a = Matrix::from_fn(k, m, |r, c| self.a[(self.kept_rows[r], c)]);
        let b = Vector::from_fn(k, |r, _| self.b[self.kept_rows[r]]);
        (a, b)
    }

    pub fn witness(&self) -> &Witness {
        &self.witness
    }

    pub fn strict_witness(&self) -> Option<&Vector> {
        match &self.witness {
            Witness::Strict(p) => Some(p),
            _ => None,
        }
    }

    pub fn is_feasible(&self) -> bool {
        !matches!(self.witness, Witness::Infeasible)
    }

    /// Vertices (basic feasible solutions), when the enumeration is small enough.
    pub fn vertices(&self) -> Option<&[Vector]> {
        self.vertices.as_deref()
    }

    pub fn contains(&self, p: &Vector, slack: f64) -> bool {
        p.len() == self.dim()
            && p.iter().all(|&x| x >= -slack)
            && (p.sum() - 1.0).abs() <= slack
            && (&self.a * p - &self.b).iter().all(|r| r.abs() <= slack)
    }

    pub fn project(&self, y: &Vector) -> Result<Vector> {
        if !self.is_feasible() {
            return Err(Error::Infeasible);
        }
        if y.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: y.len(),
            });
        }
        project_affine_nonneg(&self.eq, &self.rhs, y)
    }

    pub fn linear_max(&self, d: &Vector) -> Result<(f64, Vector)> {
        let verts = self.vertices.as_ref().ok_or_else(|| {
            if self.is_feasible() {
                Error::InvalidSet("too many bases to enumerate moment-polytope vertices".into())
            } else {
                Error::Infeasible
            }
        })?;
        let mut best = (f64::NEG_INFINITY, verts[0].clone());
        for v in verts {
            let val = v.dot(d);
            if val > best.0 {
                best = (val, v.clone());
            }
        }
        Ok(best)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vector {
        match (&self.vertices, &self.witness) {
            (Some(verts), _) if !verts.is_empty() => {
                let w = super::dirichlet_flat(verts.len(), rng);
                let mut out = Vector::zeros(self.dim());
                for (v, &wi) in verts.iter().zip(w.iter()) {
                    out.axpy(wi, v, 1.0);
                }
                out
            }
            (_, Witness::Strict(p)) | (_, Witness::Boundary(p)) => p.clone(),
            _ => Vector::from_element(self.dim(), f64::NAN),
        }
    }

    fn find_witness(&self) -> Witness {
        let m = self.dim();
        let uniform = Vector::from_element(m, 1.0 / m as f64);
        let Ok(p0) = project_affine_nonneg(&self.eq, &self.rhs, &uniform) else {
            return Witness::Infeasible;
        };
        // dropped rows must still be consistent
        if (&self.a * &p0 - &self.b).amax() > 1e-9 {
            return Witness::Infeasible;
        }
        let zero: Vec<usize> = (0..m).filter(|&i| p0[i] <= 1e-12).collect();
        if zero.is_empty() {
            return Witness::Strict(p0);
        }
        // pull toward each missing coordinate; the average of feasible points is feasible
        let mut acc = p0.clone();
        let mut count = 1.0;
        for &i in &zero {
            let mut target = Vector::zeros(m);
            target[i] = WITNESS_PULL;
            if let Ok(q) = project_affine_nonneg(&self.eq, &self.rhs, &target) {
                acc += q;
                count += 1.0;
            }
        }
        let w = acc / count;
        if w.iter().all(|&x| x > 1e-12) {
            Witness::Strict(w)
        } else {
            Witness::Boundary(w)
        }
    }

    fn enumerate_vertices(&self) -> Option<Vec<Vector>> {
        let m = self.dim();
        let r = self.eq.nrows();
        if binomial(m as u64, r as u64) > MAX_VERTEX_BASES {
            return None;
        }
        let mut verts: Vec<Vector> = Vec::new();
        for basis in Combinations::new(m, r) {
            let sub = Matrix::from_fn(r, r, |i, j| self.eq[(i, basis[j])]);
            let sv = sub.clone().singular_values();
            let smax = sv.max();
            if sv.min() <= 1e-10 * smax.max(1.0) {
                continue;
            }
            let Some(xb) = sub.lu().solve(&self.rhs) else {
                continue;
            };
            if xb.iter().any(|&x| x < -1e-11) {
                continue;
            }
            let mut p = Vector::zeros(m);
            for (j, &col) in basis.iter().enumerate() {
                p[col] = xb[j].max(0.0);
            }
            if (&self.a * &p - &self.b).amax() > 1e-9 {
                continue;
            }
            if !verts.iter().any(|q| (q - &p).amax() <= 1e-10) {
                verts.push(p);
            }
        }
        if verts.is_empty() {
            None
        } else {
            Some(verts)
        }
    }
}

/// Projection onto `{p : E p = f, p ≥ 0}` for full-row-rank `E`.
pub(crate) fn project_affine_nonneg(eq: &Matrix, rhs: &Vector, y: &Vector) -> Result<Vector> {
    let r = eq.nrows();
    let m = eq.ncols();
    let scale = 1.0 + y.amax() + rhs.amax();
    let tol = 1e-14 * scale * (m as f64).sqrt().max(1.0);
    let primal = |nu: &Vector| (y + eq.transpose() * nu).map(|z| z.max(0.0));
    let dual = |nu: &Vector, p: &Vector| -0.5 * p.norm_squared() + nu.dot(rhs);

    let mut nu = Vector::zeros(r);
    for _ in 0..500 {
        let z = y + eq.transpose() * &nu;
        let p = z.map(|v| v.max(0.0));
        let grad = rhs - eq * &p;
        let gnorm = grad.amax();
        if gnorm <= tol {
            return Ok(p);
        }
        let mut h = Matrix::zeros(r, r);
        for i in 0..m {
            if z[i] > 0.0 {
                let col = eq.column(i);
                h += &col * col.transpose();
            }
        }
        let reg = 1e-12 * (1.0 + h.trace());
        for i in 0..r {
            h[(i, i)] += reg;
        }
        let Some(dir) = linalg::solve_sym(&h, &grad) else {
            return Err(Error::Infeasible);
        };
        let full = &nu + &dir;
        if (rhs - eq * primal(&full)).amax() <= 0.5 * gnorm {
            nu = full;
            continue;
        }
        let q0 = dual(&nu, &p);
        let slope = grad.dot(&dir);
        let mut step = 1.0;
        let mut accepted = false;
        while step > 1e-30 {
            let trial = &nu + &dir * step;
            let pt = primal(&trial);
            if dual(&trial, &pt) >= q0 + 1e-4 * step * slope {
                nu = trial;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            return if gnorm <= 1e-9 * scale { Ok(p) } else { Err(Error::Infeasible) };
        }
        if nu.amax() > 1e12 * scale {
            return Err(Error::Infeasible);
        }
    }
    let p = primal(&nu);
    if (rhs - eq * &p).amax() <= 1e-9 * scale {
        Ok(p)
    } else {
        Err(Error::Infeasible)
    }
}

fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u64 = 1;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Lexicographic k-subsets of `0..n`.
struct Combinations {
    n: usize,
    idx: Vec<usize>,
    done: bool,
}

impl Combinations {
    fn new(n: usize, k: usize) -> Self {
        Combinations {
            n,
            idx: (0..k).collect(),
            done: k > n,
        }
    }
}

impl Iterator for Combinations {
    type Item = Vec<usize>;

    fn next(&mut self) -> Option<Vec<usize>> {
        if self.done {
            return None;
        }
        let out = self.idx.clone();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < self.n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> Vector {
        Vector::from_column_slice(x)
    }

    fn equal_first_two() -> MomentPolytope {
        let a = Matrix::from_row_slice(1, 3, &[1.0, -1.0, 0.0]);
        MomentPolytope::new(a, v(&[0.0]), &SolverConfig::default()).unwrap()
    }

    #[test]
    fn projection_onto_equal_pair_constraint() {
        let poly = equal_first_two();
        let p = poly.project(&v(&[1.0, 0.0, 0.0])).unwrap();
        assert!((p - v(&[0.5, 0.5, 0.0])).amax() < 1e-12);
    }

    #[test]
    fn projection_matches_grid_over_feasible_segment() {
        // feasible set is {(s, s, 1 − 2s) : s ∈ [0, ½]}
        let poly = equal_first_two();
        let y = v(&[1.0, 0.0, 0.0]);
        let best = (0..=50_000)
            .map(|k| k as f64 * 1e-5)
            .min_by(|&a, &b| {
                let da = (a - 1.0f64).powi(2) + a * a + (1.0 - 2.0 * a).powi(2);
                let db = (b - 1.0f64).powi(2) + b * b + (1.0 - 2.0 * b).powi(2);
                da.total_cmp(&db)
            })
            .unwrap();
        let p = poly.project(&y).unwrap();
        assert!((p[0] - best).abs() <= 1e-5);
    }

    #[test]
    fn feasible_points_are_fixed() {
        let poly = equal_first_two();
        let q = v(&[0.2, 0.2, 0.6]);
        assert!((poly.project(&q).unwrap() - &q).amax() < 1e-13);
    }

    #[test]
    fn infeasible_constraints_are_flagged() {
        let a = Matrix::from_row_slice(1, 2, &[1.0, 0.0]);
        let poly = MomentPolytope::new(a, v(&[2.0]), &SolverConfig::default()).unwrap();
        assert_eq!(poly.witness(), &Witness::Infeasible);
        assert_eq!(poly.project(&v(&[0.3, 0.3])), Err(Error::Infeasible));
    }

    #[test]
    fn strict_witness_is_positive_and_feasible() {
        let a = Matrix::from_row_slice(2, 6, &[
            1.0, -1.0, 0.0, 0.0, 0.0, 0.0, //
            0.0, 1.0, -1.0, 0.0, 0.0, 0.0,
        ]);
        let poly = MomentPolytope::new(a, v(&[0.0, 0.0]), &SolverConfig::default()).unwrap();
        let w = poly.strict_witness().expect("strict witness");
        assert!(w.iter().all(|&x| x > 0.0));
        assert!(poly.contains(w, 1e-12));
        // uniform is feasible here and is the projection of itself
        assert!((w - Vector::from_element(6, 1.0 / 6.0)).amax() < 1e-12);
    }

    #[test]
    fn witness_for_single_point_polytope() {
        // p1 = 0.9 and p2 = 10 p3 pin the single point (0.9, 1/11, 1/110)
        let a = Matrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, -10.0]);
        let poly = MomentPolytope::new(a, v(&[0.9, 0.0]), &SolverConfig::default()).unwrap();
        let w = poly.strict_witness().expect("strict witness");
        assert!(poly.contains(w, 1e-10));
    }

    #[test]
    fn boundary_only_polytope_has_no_strict_witness() {
        // p1 + p2 = 1 forces p3 = 0
        let a = Matrix::from_row_slice(1, 3, &[1.0, 1.0, 0.0]);
        let poly = MomentPolytope::new(a, v(&[1.0]), &SolverConfig::default()).unwrap();
        assert!(matches!(poly.witness(), Witness::Boundary(_)));
        // that row is not redundant with Σp = 1
        assert_eq!(poly.kept_rows(), &[0]);
    }

    #[test]
    fn redundant_rows_are_pruned() {
        let a = Matrix::from_row_slice(3, 3, &[
            1.0, -1.0, 0.0, //
            2.0, -2.0, 0.0, //
            1.0, 1.0, 1.0,
        ]);
        let poly = MomentPolytope::new(a, v(&[0.0, 0.0, 1.0]), &SolverConfig::default()).unwrap();
        assert_eq!(poly.kept_rows(), &[0]);
        assert!(poly.strict_witness().is_some());
    }

    #[test]
    fn vertices_and_linear_max() {
        let poly = equal_first_two();
        let verts = poly.vertices().unwrap();
        assert_eq!(verts.len(), 2);
        let (val, arg) = poly.linear_max(&v(&[1.0, 1.0, 0.0])).unwrap();
        assert!((val - 1.0).abs() < 1e-14);
        assert!((arg - v(&[0.5, 0.5, 0.0])).amax() < 1e-14);
    }

    #[test]
    fn combinations_enumerate_all_subsets() {
        let all: Vec<_> = Combinations::new(5, 3).collect();
        assert_eq!(all.len(), 10);
        assert_eq!(all[0], vec![0, 1, 2]);
        assert_eq!(all[9], vec![2, 3, 4]);
        assert_eq!(binomial(8, 4), 70);
    }
}
