mod common;

use std::sync::Arc;

use common::{fd4, normal_vec, random_family, random_moment_set, rng};
use proptest::prelude::*;
use rand::Rng;
use smoothflow::dro::{make_dro_benchmark, solve_tilting, DroEvaluator};
use smoothflow::{FeasibleSet, ObjectiveFamily, Penalty, SolverConfig, SupProblem, Vector};

fn uniform(m: usize) -> Vector {
    Vector::from_element(m, 1.0 / m as f64)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn tilted_distribution_is_feasible(seed in any::<u64>(), m in 3usize..8, mu_exp in -3.0f64..1.0) {
        let mut r = rng(seed);
        let d = r.gen_range(1..=(m - 2).min(3));
        let set = random_moment_set(&mut r, m, d);
        let f = normal_vec(&mut r, m, 2.0);
        let mu = 10f64.powf(mu_exp);
        let sol = solve_tilting(&f, &set, mu, &uniform(m), None, &SolverConfig::default()).unwrap();
        prop_assert!(sol.residual <= 1e-10 && set.contains(&sol.p, 1e-10));
        prop_assert!((sol.p.sum() - 1.0).abs() <= 1e-12);
    }

    #[test]
    fn tilted_distribution_is_interior(seed in any::<u64>(), m in 3usize..8, mu_exp in -1.3f64..1.0) {
        // below μ ≈ spread(f)/700 the smallest weights underflow to 0.0
        let mut r = rng(seed);
        let d = r.gen_range(1..=(m - 2).min(3));
        let set = random_moment_set(&mut r, m, d);
        let f = normal_vec(&mut r, m, 1.0);
        let sol = solve_tilting(&f, &set, 10f64.powf(mu_exp), &uniform(m), None, &SolverConfig::default()).unwrap();
        prop_assert!(sol.p.min() > 0.0);
    }

    #[test]
    fn sandwich_and_monotonicity_along_random_points(seed in any::<u64>(), m in 3usize..7) {
        let mut r = rng(seed);
        let set = random_moment_set(&mut r, m, 1);
        let costs: Arc<dyn ObjectiveFamily> = Arc::new(random_family(&mut r, 3, m));
        let mut ev = DroEvaluator::uniform(costs, set).unwrap();
        let c = (m as f64).ln();
        prop_assert!((ev.sup_constant() - c).abs() < 1e-12);
        let x = normal_vec(&mut r, 3, 1.0);
        let raw = ev.raw_value(&x).unwrap();
        let mut prev = f64::NEG_INFINITY;
        for mu in [10.0, 1.0, 0.1, 0.01] {
            let v = ev.evaluate(&x, mu).unwrap().value;
            prop_assert!(raw - v >= -1e-9 && raw - v <= c * mu + 1e-9, "raw {} reg {} mu {}", raw, v, mu);
            prop_assert!(v >= prev - 1e-12);
            prev = v;
        }
    }
}

#[test]
fn agrees_with_generic_dual_solver() {
    let mut r = rng(31);
    let mut worst: f64 = 0.0;
    for case in 0..60 {
        let m = 3 + case % 4;
        let set = random_moment_set(&mut r, m, 1 + case % 2);
        let prior = set.strict_witness().unwrap().clone();
        let costs: Arc<dyn ObjectiveFamily> = Arc::new(random_family(&mut r, 3, m));
        let generic =
            SupProblem::new(costs.clone(), FeasibleSet::MomentPolytope(set.clone()), Penalty::kl(prior.clone()).unwrap())
                .unwrap();
        let mut ev = DroEvaluator::new(costs, set, prior).unwrap();
        let x = normal_vec(&mut r, 3, 1.0);
        let mu = [1.0, 0.3, 0.1][case % 3];
        let a = ev.evaluate(&x, mu).unwrap();
        let b = generic.evaluate(&x, mu).unwrap();
        let dv = (a.value - b.value).abs();
        let dg = (&a.grad - &b.grad).amax();
        worst = worst.max(dv).max(dg);
        assert!(dv <= 1e-8 && dg <= 1e-8, "case {case}: value gap {dv:e}, gradient gap {dg:e}");
    }
    eprintln!("worst tilting/generic disagreement {worst:e}");
}

#[test]
fn gradient_matches_differences_on_benchmark() {
    let inst = make_dro_benchmark(5, 5, 6).unwrap();
    let mut r = rng(32);
    let costs: Arc<dyn ObjectiveFamily> = Arc::new(inst.costs.clone());
    let mut ev = DroEvaluator::uniform(costs, inst.set.clone()).unwrap();
    for _ in 0..10 {
        let x = normal_vec(&mut r, 5, 1.0);
        let g = ev.evaluate(&x, 0.5).unwrap().grad;
        let fd = Vector::from_fn(5, |i, _| {
            fd4(
                |s| {
                    let mut z = x.clone();
                    z[i] += s;
                    ev.evaluate(&z, 0.5).unwrap().value
                },
                0.0,
                1e-4,
            )
        });
        assert!((&g - &fd).norm() / fd.norm().max(1.0) <= 1e-6);
    }
}

#[test]
fn newton_tail_is_superlinear_on_benchmark() {
    let mut r = rng(33);
    let mut checked = 0;
    for seed in 0..8 {
        let inst = make_dro_benchmark(seed, 5, 6).unwrap();
        for mu in [1.0, 0.1, 0.01] {
            let x = normal_vec(&mut r, 5, 1.0);
            let f = inst.costs.eval(&x);
            let sol = solve_tilting(&f, &inst.set, mu, &uniform(6), None, &SolverConfig::default()).unwrap();
            let h = &sol.residual_history;
            // with nearly massless scenarios each Newton step only shifts θ by
            // about μ, and the absolute tolerance is met before the local phase
            let well_conditioned = sol.p.min() >= 1e-6;
            match sol.tail_contraction() {
                Some(ratio) if well_conditioned => {
                    assert!(ratio <= 0.1, "seed {seed}, mu {mu}: {h:?}");
                    checked += 1;
                }
                _ => eprintln!("seed {seed}, mu {mu}: min p {:e}, residuals {h:?}", sol.p.min()),
            }
        }
    }
    assert!(checked >= 4, "only {checked} well-conditioned solves");
}
