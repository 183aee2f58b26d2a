use reactid::mlf::{evaluate_route, mittag_leffler, mlf_decay_bound, route, MlfParams};
use reactid::special::gamma;

fn p(alpha: f64, beta: f64) -> MlfParams {
    MlfParams::new(alpha, beta).unwrap()
}

#[test]
fn exponential_identity() {
    let params = p(1.0, 1.0);
    for i in 0..=350 {
        let z = -30.0 + 0.1 * i as f64;
        let e = mittag_leffler(&params, z).unwrap();
        assert!(
            (e - z.exp()).abs() <= 10.0 * params.series_tol,
            "z = {z}: {e} vs {}",
            z.exp()
        );
    }
}

#[test]
fn cosine_identity() {
    let params = p(2.0, 1.0);
    for i in 0..=100 {
        let x = 0.1 * i as f64;
        let e = mittag_leffler(&params, -x * x).unwrap();
        let rel = (e - x.cos()).abs() / x.cos().abs();
        assert!(rel <= 1e-8, "x = {x}: {e} vs {}", x.cos());
    }
}

#[test]
fn positive_and_nonincreasing_for_alpha_at_most_one() {
    for &alpha in &[0.1, 0.25, 0.5, 0.75, 0.9, 1.0] {
        let params = p(alpha, 1.0);
        let mut prev = f64::INFINITY;
        for i in 0..=200 {
            let z = -0.5 * i as f64;
            let e = mittag_leffler(&params, z).unwrap();
            assert!(e > 0.0, "alpha {alpha}, z {z}: {e}");
            assert!(e <= prev, "alpha {alpha}, z {z}: {e} > {prev}");
            prev = e;
        }
    }
}

#[test]
fn adjacent_routes_agree_at_every_switch() {
    for &alpha in &[0.25, 0.5, 0.75, 0.9] {
        for beta in [alpha, 1.0] {
            let params = p(alpha, beta);
            let mut prev = route(&params, -0.01);
            let mut switches = 0;
            for i in 1..=2000 {
                let z = -0.05 * i as f64;
                let r = route(&params, z);
                if r != prev {
                    switches += 1;
                    let a = evaluate_route(&params, z, prev).unwrap();
                    let b = evaluate_route(&params, z, r).unwrap();
                    assert!(
                        (a - b).abs() <= 1e-6,
                        "alpha {alpha} beta {beta} z {z}: {prev:?}={a} {r:?}={b}"
                    );
                    prev = r;
                }
            }
            assert!(switches >= 1, "alpha {alpha} beta {beta} never left the series");
        }
    }
}

#[test]
fn fixed_threshold_branches_agree_where_both_converge() {
    // alpha = 1: the series is still accurate at |z| = 15, where the
    // asymptotic form is exact.
    let params = p(1.0, 1.0).with_threshold(15.0).unwrap();
    let a = evaluate_route(&params, -15.0, reactid::mlf::Route::Series).unwrap();
    let b = evaluate_route(&params, -15.0, reactid::mlf::Route::Asymptotic).unwrap();
    assert!((a - b).abs() < 1e-6);
}

#[test]
fn time_derivative_identity() {
    // d/dt E_{α,1}(-λ t^α) = -λ t^{α-1} E_{α,α}(-λ t^α)
    for &alpha in &[0.3, 0.5, 0.8, 1.0] {
        let e1 = p(alpha, 1.0);
        let ea = p(alpha, alpha);
        for &lambda in &[1.0, 9.87, 40.0] {
            for t in [0.05f64, 0.3, 1.0, 2.5] {
                let h = 1e-5 * t;
                let fd = (mittag_leffler(&e1, -lambda * (t + h).powf(alpha)).unwrap()
                    - mittag_leffler(&e1, -lambda * (t - h).powf(alpha)).unwrap())
                    / (2.0 * h);
                let exact = -lambda * t.powf(alpha - 1.0) * mittag_leffler(&ea, -lambda * t.powf(alpha)).unwrap();
                assert!(
                    (fd - exact).abs() <= 1e-5,
                    "alpha {alpha} lambda {lambda} t {t}: {fd} vs {exact}"
                );
            }
        }
    }
}

#[test]
fn decay_bound_dominates() {
    let grid: Vec<f64> = (0..=400).map(|i| -0.25 * i as f64).collect();
    for &(alpha, beta) in &[(0.9, 1.0), (0.5, 0.5), (0.25, 1.0), (0.75, 0.75), (1.0, 1.0)] {
        let params = p(alpha, beta);
        for &z in &grid {
            let e = mittag_leffler(&params, z).unwrap().abs();
            assert!(mlf_decay_bound(&params, z).unwrap() >= e, "alpha {alpha} z {z}");
        }
    }
    let params = p(0.9, 1.0);
    let e = mittag_leffler(&params, -100.0).unwrap();
    assert!(mlf_decay_bound(&params, -100.0).unwrap() >= e);
    let params = p(1.0, 1.0);
    assert!(mlf_decay_bound(&params, -50.0).unwrap() >= (-50f64).exp());
    for &beta in &[0.3, 1.0, 1.7] {
        assert!(mlf_decay_bound(&p(0.6, beta), 0.0).unwrap() >= 1.0 / gamma(beta));
    }
}
