mod common;

use common::{positive_simplex, random_moment_set, rng};
use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use smoothflow::{FeasibleSet, Penalty, Vector};

/// A `(D, Q)` pair from the catalog where `D` is materialized in `λ`.
fn pair(r: &mut ChaCha8Rng, kind: usize, m: usize) -> (Penalty, FeasibleSet) {
    match kind {
        0 => (Penalty::kl(positive_simplex(r, m)).unwrap(), FeasibleSet::simplex(m).unwrap()),
        1 => {
            let mp = random_moment_set(r, m.max(3), 1);
            let prior = mp.strict_witness().unwrap().clone();
            (Penalty::kl(prior).unwrap(), FeasibleSet::MomentPolytope(mp))
        }
        2 => {
            let set = FeasibleSet::simplex(m).unwrap();
            (Penalty::quadratic(set.sample(r)).unwrap(), set)
        }
        3 => {
            let lower = Vector::from_fn(m, |_, _| r.gen_range(0.0..1.0));
            let upper = Vector::from_fn(m, |i, _| lower[i] + r.gen_range(0.1..2.0));
            let set = FeasibleSet::bounded_box(lower, upper).unwrap();
            (Penalty::quadratic(set.sample(r)).unwrap(), set)
        }
        k => {
            let p = [1.0, 2.0, f64::INFINITY][k - 4];
            (Penalty::quadratic(Vector::zeros(m)).unwrap(), FeasibleSet::lp_ball(m, p).unwrap())
        }
    }
}

const PAIRS: usize = 7;

#[test]
fn strongly_convex_with_declared_modulus() {
    let mut r = rng(11);
    for kind in 0..PAIRS {
        let m = r.gen_range(2..6);
        let (d, set) = pair(&mut r, kind, m);
        let sigma = d.sigma(&set);
        for _ in 0..1000 {
            let a = set.sample(&mut r);
            let b = set.sample(&mut r);
            for theta in [0.25, 0.5, 0.75] {
                let mid = &a * theta + &b * (1.0 - theta);
                let lhs = d.value(&mid).unwrap();
                let rhs = theta * d.value(&a).unwrap() + (1.0 - theta) * d.value(&b).unwrap()
                    - 0.5 * sigma * theta * (1.0 - theta) * (&a - &b).norm_squared();
                assert!(lhs <= rhs + 1e-9, "kind {kind}: {lhs} > {rhs}");
            }
        }
    }
}

#[test]
fn sup_constant_dominates_and_penalty_is_nonnegative() {
    let mut r = rng(12);
    for kind in 0..PAIRS {
        let m = r.gen_range(2..6);
        let (d, set) = pair(&mut r, kind, m);
        let c = d.sup_constant(&set).unwrap();
        assert!(c.is_finite());
        assert!(d.vanishes_on(&set));
        for _ in 0..10_000 {
            let lam = set.sample(&mut r);
            let v = d.value_on(&set, &lam).unwrap();
            assert!(v >= -1e-15 && v <= c + 1e-9, "kind {kind}: D = {v}, C = {c}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn gradient_matches_central_differences(seed in any::<u64>(), kind in 0..PAIRS, m in 2usize..6) {
        let mut r = rng(seed);
        let (d, set) = pair(&mut r, kind, m);
        let lam = set.sample(&mut r);
        // KL is only differentiable inside the simplex
        prop_assume!(lam.min() > 1e-3 || !matches!(d, Penalty::Kl { .. }));
        let g = d.grad(&lam).unwrap();
        // directions along which λ stays on the affine hull of a simplex-like domain
        let mut dir = common::normal_vec(&mut r, set.dim(), 1.0);
        if matches!(d, Penalty::Kl { .. }) {
            let mean = dir.mean();
            dir.add_scalar_mut(-mean);
        }
        dir /= dir.norm();
        let h = 1e-4 * lam.min().max(1e-2);
        let fd = common::fd4(|s| d.value(&(&lam + &dir * s)).unwrap(), 0.0, h);
        let exact = g.dot(&dir);
        prop_assert!((fd - exact).abs() <= 1e-6 * exact.abs().max(1.0), "fd {} vs {}", fd, exact);
    }
}
