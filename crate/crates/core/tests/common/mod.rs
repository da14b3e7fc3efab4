#![allow(dead_code)]

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use smoothflow::{FeasibleSet, Matrix, MomentPolytope, Penalty, QuadraticFamily, SolverConfig, SupProblem, Vector};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vector {
    Vector::from_fn(n, |_, _| scale * rng.sample::<f64, _>(StandardNormal))
}

pub fn positive_simplex(rng: &mut ChaCha8Rng, m: usize) -> Vector {
    let w = Vector::from_fn(m, |_, _| rng.gen_range(0.05..1.0));
    let s = w.sum();
    w / s
}

pub fn random_family(rng: &mut ChaCha8Rng, n: usize, m: usize) -> QuadraticFamily {
    let matrices = (0..m)
        .map(|_| {
            let b = Matrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal));
            &b * b.transpose() / n as f64 + Matrix::identity(n, n) * 0.1
        })
        .collect();
    let anchors = (0..m).map(|_| normal_vec(rng, n, 1.0)).collect();
    let offsets = Vector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0));
    QuadraticFamily::new(matrices, anchors, offsets).unwrap()
}

pub fn random_moment_set(rng: &mut ChaCha8Rng, m: usize, d: usize) -> MomentPolytope {
    let a = Matrix::from_fn(d, m, |_, _| rng.sample::<f64, _>(StandardNormal));
    let w = positive_simplex(rng, m);
    let b = &a * &w;
    MomentPolytope::new(a, b, &SolverConfig::default()).unwrap()
}

pub const SET_KINDS: usize = 7;

/// One of the supported sets in dimension `m` (vertex and moment sets pick
/// their own shapes).
pub fn random_set(rng: &mut ChaCha8Rng, kind: usize, m: usize) -> FeasibleSet {
    match kind {
        0 => FeasibleSet::simplex(m).unwrap(),
        1 => {
            let lower = Vector::from_fn(m, |_, _| rng.gen_range(0.0..1.0));
            let upper = Vector::from_fn(m, |i, _| lower[i] + rng.gen_range(0.0..2.0));
            FeasibleSet::bounded_box(lower, upper).unwrap()
        }
        2 => FeasibleSet::lp_ball(m, 1.0).unwrap(),
        3 => FeasibleSet::lp_ball(m, 2.0).unwrap(),
        4 => FeasibleSet::lp_ball(m, f64::INFINITY).unwrap(),
        5 => {
            let k = rng.gen_range(2..=m + 2);
            FeasibleSet::vertex_polytope((0..k).map(|_| normal_vec(rng, m, 1.0)).collect()).unwrap()
        }
        _ => {
            let m = m.max(3);
            let d = rng.gen_range(1..=(m - 2).min(3));
            FeasibleSet::MomentPolytope(random_moment_set(rng, m, d))
        }
    }
}

/// Every closed-form `(Q, D)` pair over a shared random quadratic family.
pub fn closed_form_variants(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Vec<SupProblem> {
    let f = Arc::new(random_family(rng, n, m));
    let simplex = FeasibleSet::simplex(m).unwrap();
    let lower = Vector::from_fn(m, |_, _| rng.gen_range(0.0..0.5));
    let upper = Vector::from_fn(m, |i, _| lower[i] + rng.gen_range(0.5..1.5));
    let bx = FeasibleSet::bounded_box(lower, upper).unwrap();
    let mut out = vec![
        SupProblem::new(f.clone(), simplex.clone(), Penalty::kl(positive_simplex(rng, m)).unwrap()).unwrap(),
        SupProblem::new(f.clone(), simplex.clone(), Penalty::quadratic(simplex.sample(rng)).unwrap()).unwrap(),
        SupProblem::new(f.clone(), bx.clone(), Penalty::quadratic(bx.sample(rng)).unwrap()).unwrap(),
    ];
    for p in [1.0, 2.0, f64::INFINITY] {
        out.push(
            SupProblem::new(f.clone(), FeasibleSet::lp_ball(m, p).unwrap(), Penalty::quadratic(Vector::zeros(m)).unwrap())
                .unwrap(),
        );
    }
    let k = m + 1;
    let vertices = (0..k).map(|_| Vector::from_fn(m, |_, _| rng.gen_range(-1.0..1.0))).collect();
    out.push(
        SupProblem::new(
            f,
            FeasibleSet::vertex_polytope(vertices).unwrap(),
            Penalty::pushforward_kl(positive_simplex(rng, k)).unwrap(),
        )
        .unwrap(),
    );
    out
}

/// Fourth-order central difference.
pub fn fd4(mut f: impl FnMut(f64) -> f64, x: f64, h: f64) -> f64 {
    (8.0 * (f(x + h) - f(x - h)) - (f(x + 2.0 * h) - f(x - 2.0 * h))) / (12.0 * h)
}
