use jsam::mechanism::{
    jsam_solve, optimal_epsilon, reduced_objective, solve_inner_budget, sort_by_virtual_cost, verify_structure,
};
use jsam::oracle::cross_check;
use jsam::{CostDistribution, ServerConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn gaussian_density(x: f64, mean: f64, sd: f64) -> f64 {
    (-0.5 * ((x - mean) / sd).powi(2)).exp()
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64) -> f64 {
    (b - a) / 6.0 * (f(a) + 4.0 * f(0.5 * (a + b)) + f(b))
}

fn adaptive_simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let m = 0.5 * (a + b);
    let left = simpson(f, a, m);
    let right = simpson(f, m, b);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
        return left + right + (left + right - whole) / 15.0;
    }
    adaptive_simpson(f, a, m, left, tol / 2.0, depth - 1) + adaptive_simpson(f, m, b, right, tol / 2.0, depth - 1)
}

#[test]
fn truncated_gaussian_virtual_cost_matches_quadrature() {
    let dist = CostDistribution::truncated_gaussian(0.5, 0.2, 0.0, 1.0).unwrap();
    let f = |x: f64| gaussian_density(x, 0.5, 0.2);
    for c in [0.05, 0.3, 0.5, 0.7, 0.95] {
        let mass = adaptive_simpson(&f, 0.0, c, simpson(&f, 0.0, c), 1e-14, 40);
        let expected = c + mass / f(c);
        let got = dist.virtual_cost(c).unwrap();
        assert!((got - expected).abs() <= 1e-9 * expected, "c={c}: {got} vs {expected}");
    }
}

#[test]
fn sort_agrees_with_independent_virtual_costs() {
    let dist = CostDistribution::uniform(0.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let costs: Vec<f64> = (0..100).map(|_| dist.sample(&mut rng)).collect();
    let v: Vec<f64> = costs.iter().map(|c| dist.virtual_cost(*c).unwrap()).collect();
    let mut expected: Vec<usize> = (0..100).collect();
    expected.sort_by(|&a, &b| (2.0 * costs[a]).partial_cmp(&(2.0 * costs[b])).unwrap().then(a.cmp(&b)));
    assert_eq!(sort_by_virtual_cost(&v), expected);
}

#[test]
fn inner_budget_matches_exhaustive_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let n = rng.gen_range(2..6);
        let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.05..2.0)).collect();
        v.sort_by(f64::total_cmp);
        let cfg = ServerConfig::new(rng.gen_range(0.1..5.0), rng.gen_range(0.1..5.0), 1e-3).unwrap();
        let h = rng.gen_range(1..=n);
        let ph = if h == 1 { 1.0 / n as f64 } else { rng.gen_range(0.0..1.0 / n as f64) };
        let sol = solve_inner_budget(h, ph, &v, &cfg).unwrap();
        let (lo, hi): (f64, f64) = (1e-4, 1e3);
        let points = 1_000_000;
        let best = (0..points)
            .map(|i| lo * (hi / lo).powf(i as f64 / (points - 1) as f64))
            .map(|b| reduced_objective(h, ph, b, &v, &cfg).unwrap())
            .fold(f64::INFINITY, f64::min);
        assert!(sol.objective <= best * (1.0 + 1e-12));
        assert!((best - sol.objective) / sol.objective < 1e-4);
    }
}

#[test]
fn large_eta_approaches_unbiased() {
    let dist = CostDistribution::uniform(0.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let v: Vec<f64> = (0..10).map(|_| dist.virtual_cost(dist.sample(&mut rng)).unwrap()).collect();
    let gap = |eta: f64| {
        let out = jsam_solve(&v, &ServerConfig::new(eta, 1.0, 1e-3).unwrap()).unwrap();
        out.probabilities.iter().map(|p| (p - 0.1).abs()).sum::<f64>()
    };
    let gaps: Vec<f64> = [1e-2, 1.0, 1e3].iter().map(|e| gap(*e)).collect();
    assert!(gaps.windows(2).all(|w| w[1] <= w[0] + 1e-12), "{gaps:?}");
    let out = jsam_solve(&v, &ServerConfig::new(1e3, 1.0, 1e-3).unwrap()).unwrap();
    assert_eq!(out.threshold, 10);
    assert!((out.threshold_probability - 0.1).abs() <= 0.01);
}

#[test]
fn selected_count_grows_along_eta_sweep() {
    let dist = CostDistribution::uniform(0.0, 1.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..10 {
        let v: Vec<f64> = (0..12).map(|_| dist.virtual_cost(dist.sample(&mut rng)).unwrap()).collect();
        let mut last = (0, 0.0);
        for i in 0..25 {
            let eta = 1e-3 * 10f64.powf(i as f64 / 4.0);
            let out = jsam_solve(&v, &ServerConfig::new(eta, 1.0, 1e-3).unwrap()).unwrap();
            let now = (out.selected_count(), out.total_budget);
            assert!(now.1 >= last.1, "budget fell at eta={eta}");
            assert!(now.0 >= last.0, "selected count fell at eta={eta}: {last:?} -> {now:?}");
            last = now;
        }
    }
}

#[test]
fn three_client_example_matches_brute_force() {
    let cfg = ServerConfig::new(1.0, 1.0, 1e-3).unwrap();
    let report = cross_check(&[0.2, 0.6, 1.8], &cfg, 0.01).unwrap();
    assert!(report.passed, "{report:?}");
    assert!(report.brute_structure.passed);
}

fn costs(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    n.prop_flat_map(|n| prop::collection::vec(0.01f64..3.0, n))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn budget_identity(p in prop::collection::vec(0.0f64..1.0, 1..12), budget in 0.0f64..100.0, seed in any::<u64>()) {
        let total: f64 = p.iter().sum();
        prop_assume!(total > 1e-6);
        let p: Vec<f64> = p.iter().map(|x| x / total).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v: Vec<f64> = p.iter().map(|_| rng.gen_range(0.01..5.0)).collect();
        let eps = optimal_epsilon(&p, budget, &v).unwrap();
        let spent: f64 = v.iter().zip(&eps).map(|(a, b)| a * b).sum();
        prop_assert!((spent - budget).abs() <= 1e-9 * budget.max(1e-300));
        for (pk, ek) in p.iter().zip(&eps) {
            prop_assert_eq!(*pk == 0.0, *ek == 0.0 || budget == 0.0);
        }
    }

    #[test]
    fn solutions_are_structured(v in costs(1..9), eta in 0.01f64..20.0, q in 0.01f64..20.0) {
        let cfg = ServerConfig::new(eta, q, 1e-2).unwrap();
        let out = jsam_solve(&v, &cfg).unwrap();
        let total: f64 = out.probabilities.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(verify_structure(&out.probabilities, &out.order).passed);
        for (p, e) in out.probabilities.iter().zip(&out.budgets) {
            prop_assert_eq!(*p == 0.0, *e == 0.0);
        }
        let spent: f64 = v.iter().zip(&out.budgets).map(|(a, b)| a * b).sum();
        prop_assert!((spent - out.total_budget).abs() <= 1e-9 * out.total_budget);
    }

    #[test]
    fn deterministic(v in costs(1..9), eta in 0.01f64..20.0) {
        let cfg = ServerConfig::new(eta, 1.0, 1e-2).unwrap();
        prop_assert_eq!(jsam_solve(&v, &cfg).unwrap(), jsam_solve(&v, &cfg).unwrap());
    }

    #[test]
    fn raising_a_cost_never_raises_its_selection(v in costs(2..8), k in 0usize..8, bump in 1.0f64..3.0, eta in 0.01f64..10.0) {
        let k = k % v.len();
        let cfg = ServerConfig::new(eta, 1.0, 1e-2).unwrap();
        let before = jsam_solve(&v, &cfg).unwrap().probabilities[k];
        let mut raised = v.clone();
        raised[k] *= bump;
        let after = jsam_solve(&raised, &cfg).unwrap().probabilities[k];
        prop_assert!(after <= before + 1e-12, "p_k rose from {} to {}", before, after);
    }
}
