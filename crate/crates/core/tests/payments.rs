use jsam::mechanism::jsam_solve;
use jsam::payments::{
    interim_allocation, payment, verify_ic, verify_ir, verify_monotone_allocation, InterimAllocation,
    PaymentSchedule,
};
use jsam::{CostDistribution, ServerConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Piecewise-linear allocation with a kink away from every grid node.
fn kinked(z: f64) -> f64 {
    if z < 0.37 {
        2.0 - 3.0 * z
    } else {
        0.89 - 0.5 * (z - 0.37)
    }
}

fn kinked_payment(c: f64) -> f64 {
    let antiderivative = |z: f64| {
        if z < 0.37 {
            2.0 * z - 1.5 * z * z
        } else {
            let base = 2.0 * 0.37 - 1.5 * 0.37 * 0.37;
            base + 0.89 * (z - 0.37) - 0.25 * (z - 0.37).powi(2)
        }
    };
    antiderivative(1.0) - antiderivative(c) + c * kinked(c)
}

#[test]
fn payment_converges_quadratically_to_symbolic_integral() {
    let err = |points: usize| {
        let grid: Vec<f64> = (0..points).map(|j| j as f64 / (points - 1) as f64).collect();
        let curve = InterimAllocation::from_curve(0, grid.clone(), grid.iter().map(|z| kinked(*z)).collect()).unwrap();
        [0.1, 0.5, 0.8]
            .iter()
            .map(|c| (payment(*c, &curve).unwrap().value - kinked_payment(*c)).abs())
            .fold(0.0, f64::max)
    };
    for g in [20, 40, 80, 160] {
        assert!(err(g) * ((g - 1) as f64).powi(2) <= 1.0, "G={g}: error {}", err(g));
    }
}

#[test]
fn jsam_interim_is_ic_ir_and_monotone() {
    let dist = CostDistribution::uniform(0.0, 1.0).unwrap();
    let cfg = ServerConfig::new(1.0, 1.0, 1e-2).unwrap();
    let curve = interim_allocation(0, 2, &dist, &cfg, 60, 1000, 3).unwrap();
    assert!(verify_monotone_allocation(&curve, curve.mc_tolerance()).passed);
    let misreports: Vec<f64> = (1..20).map(|i| i as f64 / 20.0).collect();
    for truth in [0.1, 0.45, 0.9] {
        let ic = verify_ic(truth, &misreports, &curve).unwrap();
        assert!(ic.passed, "{ic:?}");
        let pay = payment(truth, &curve).unwrap().value;
        assert!(verify_ir(truth, pay, curve.at(truth).unwrap()));
    }
}

#[test]
fn expected_payment_equals_expected_virtual_spend() {
    let dist = CostDistribution::uniform(0.5, 1.5).unwrap();
    let cfg = ServerConfig::new(1.0, 1.0, 1e-2).unwrap();
    let n = 3;
    let curve = interim_allocation(0, n, &dist, &cfg, 101, 4000, 11).unwrap();
    let schedule = PaymentSchedule::Exchangeable(curve.clone());

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let profiles = 4000;
    let mut diffs = Vec::with_capacity(profiles);
    for _ in 0..profiles {
        let costs: Vec<f64> = (0..n).map(|_| dist.sample(&mut rng)).collect();
        let v: Vec<f64> = costs.iter().map(|c| dist.virtual_cost(*c).unwrap()).collect();
        let out = jsam_solve(&v, &cfg).unwrap();
        let paid: f64 = schedule.payments(&costs).unwrap().iter().sum();
        diffs.push(paid - out.total_budget);
    }
    let mean = diffs.iter().sum::<f64>() / profiles as f64;
    let var = diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (profiles - 1) as f64;
    let sampling = 3.0 * (var / profiles as f64).sqrt();
    // Bias the interim curve can carry into every payment.
    let curve_error = n as f64 * 3.0 * curve.std_errors.iter().copied().fold(0.0, f64::max) * 2.5;
    assert!(mean.abs() <= sampling + curve_error, "mean gap {mean}, band {sampling} + {curve_error}");
}
