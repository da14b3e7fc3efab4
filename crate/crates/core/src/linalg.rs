//! Small dense linear-algebra and log-domain helpers shared by the solvers.

use crate::{Matrix, Vector};

/// Indices of a maximal linearly independent subset of the rows of `rows`,
/// scanned in order (modified Gram–Schmidt with a relative tolerance).
pub fn independent_rows(rows: &Matrix, tol: f64) -> Vec<usize> {
    let mut basis: Vec<Vector> = Vec::new();
    let mut kept = Vec::new();
    for i in 0..rows.nrows() {
        let original = rows.row(i).transpose();
        let scale = original.norm();
        if scale == 0.0 {
            continue;
        }
        let mut r = original.clone();
        for q in &basis {
            let c = q.dot(&r);
            r -= q * c;
        }
        // second pass for stability
        for q in &basis {
            let c = q.dot(&r);
            r -= q * c;
        }
        let nr = r.norm();
        if nr > tol.max(f64::EPSILON * 16.0) * scale {
            basis.push(r / nr);
            kept.push(i);
        }
    }
    kept
}

/// Solves `h x = rhs` for symmetric positive (semi)definite `h`, falling back to
/// LU when the Cholesky factorization fails.
pub fn solve_sym(h: &Matrix, rhs: &Vector) -> Option<Vector> {
    if let Some(ch) = h.clone().cholesky() {
        return Some(ch.solve(rhs));
    }
    h.clone().lu().solve(rhs)
}

/// Largest eigenvalue of a symmetric matrix.
pub fn sym_max_eigenvalue(m: &Matrix) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn sym_min_eigenvalue(m: &Matrix) -> f64 {
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues()
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min)
}

/// `log Σ wᵢ exp(zᵢ)` evaluated as `M + log Σ wᵢ exp(zᵢ − M)` with `M = max zᵢ`.
/// Entries with zero weight are ignored.
pub fn log_sum_exp_weighted(z: &Vector, weights: &Vector) -> f64 {
    let m = z
        .iter()
        .zip(weights.iter())
        .filter(|(_, &w)| w > 0.0)
        .map(|(&zi, _)| zi)
        .fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = z
        .iter()
        .zip(weights.iter())
        .filter(|(_, &w)| w > 0.0)
        .map(|(&zi, &w)| w * (zi - m).exp())
        .sum();
    m + s.ln()
}

/// Weighted softmax `pᵢ ∝ wᵢ exp(zᵢ)` with max-centering; also returns the
/// log-normalizer `log Σ wᵢ exp(zᵢ)`.
pub fn softmax_weighted(z: &Vector, weights: &Vector) -> (Vector, f64) {
    let m = z
        .iter()
        .zip(weights.iter())
        .filter(|(_, &w)| w > 0.0)
        .map(|(&zi, _)| zi)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut p = Vector::zeros(z.len());
    let mut s = 0.0;
    for i in 0..z.len() {
        if weights[i] > 0.0 {
            p[i] = weights[i] * (z[i] - m).exp();
            s += p[i];
        }
    }
    p /= s;
    (p, m + s.ln())
}

/// `Σ pᵢ log(pᵢ / vᵢ)` with the convention `0 · log 0 = 0`.
pub fn kl_divergence(p: &Vector, v: &Vector) -> f64 {
    p.iter()
        .zip(v.iter())
        .filter(|(&pi, _)| pi > 0.0)
        .map(|(&pi, &vi)| pi * (pi / vi).ln())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn redundant_rows_are_dropped() {
        let rows = Matrix::from_row_slice(3, 3, &[1.0, 1.0, 1.0, 1.0, -1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(independent_rows(&rows, 1e-12), vec![0, 1, 2]);
        let mut dep = rows.insert_row(3, 0.0);
        let combo = dep.row(0) * 2.0 - dep.row(1);
        dep.set_row(3, &combo);
        assert_eq!(independent_rows(&dep, 1e-12), vec![0, 1, 2]);
    }

    #[test]
    fn log_sum_exp_is_stable_for_large_arguments() {
        let z = Vector::from_vec(vec![1000.0, 1000.0]);
        let w = Vector::from_vec(vec![0.5, 0.5]);
        assert!((log_sum_exp_weighted(&z, &w) - 1000.0).abs() < 1e-12);
        let (p, _) = softmax_weighted(&z, &w);
        assert!((p[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kl_uses_zero_log_zero_convention() {
        let p = Vector::from_vec(vec![1.0, 0.0]);
        let v = Vector::from_vec(vec![0.5, 0.5]);
        assert!((kl_divergence(&p, &v) - 2f64.ln()).abs() < 1e-15);
    }
}
