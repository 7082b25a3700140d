use dcs_core::special::{bessel_k, bessel_k_ratio, ln_bessel_k};
use proptest::prelude::*;

/// K_nu(x) = int_0^inf exp(-x cosh t) cosh(nu t) dt, trapezoid rule.
fn quadrature_k(nu: f64, x: f64) -> f64 {
    let h = 0.005;
    let exponent = |t: f64| -x * t.cosh() + nu * t;
    // peak of the exponent: x sinh t = nu
    let t_peak = (nu / x).asinh();
    let top = exponent(t_peak);
    let mut sum = 0.0;
    let mut t = 0.0;
    loop {
        let v = (exponent(t) - top).exp() * 0.5 * (1.0 + (-2.0 * nu * t).exp());
        sum += if t == 0.0 { 0.5 * v } else { v };
        if t > t_peak && exponent(t) - top < -60.0 {
            break;
        }
        t += h;
    }
    sum * h * top.exp()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn half_integer(nu: f64, x: f64) -> f64 {
    let base = (std::f64::consts::PI / (2.0 * x)).sqrt() * (-x).exp();
    match nu {
        v if v == 0.5 => base,
        v if v == 1.5 => base * (1.0 + 1.0 / x),
        _ => base * (1.0 + 3.0 / x + 3.0 / (x * x)),
    }
}

#[test]
fn half_integer_closed_forms() {
    for &nu in &[0.5, 1.5, 2.5] {
        let mut x = 0.01;
        while x <= 30.0 {
            let got = bessel_k(nu, x).unwrap();
            assert!(rel(got, half_integer(nu, x)) < 1e-10, "nu={nu} x={x}");
            x *= 1.07;
        }
    }
}

#[test]
fn matches_integral_representation() {
    let orders = [0.0, 0.2, 0.5, 1.0, 1.7, 3.3, 6.0, 10.0];
    let args = [1e-6, 1e-3, 0.1, 0.9, 1.99, 2.0, 2.01, 5.0, 17.0, 50.0];
    for &nu in &orders {
        for &x in &args {
            let got = bessel_k(nu, x).unwrap();
            let oracle = quadrature_k(nu, x);
            assert!(rel(got, oracle) < 1e-10, "nu={nu} x={x}: {got} vs {oracle}");
        }
    }
}

#[test]
fn recurrence_identity_at_order_one() {
    // K_2(2) - K_0(2) = (2*1/2) K_1(2), every term from the quadrature oracle too.
    let lhs = bessel_k(2.0, 2.0).unwrap() - bessel_k(0.0, 2.0).unwrap();
    let rhs = bessel_k(1.0, 2.0).unwrap();
    assert!(rel(lhs, rhs) < 1e-12);
    let oracle = quadrature_k(2.0, 2.0) - quadrature_k(0.0, 2.0);
    assert!(rel(lhs, oracle) < 1e-10);
}

#[test]
fn log_form_agrees_with_direct() {
    for &(nu, x) in &[(0.3, 0.01), (4.0, 3.0), (9.5, 40.0)] {
        assert!(rel(ln_bessel_k(nu, x).unwrap().exp(), bessel_k(nu, x).unwrap()) < 1e-14);
    }
}

proptest! {
    #[test]
    fn three_term_recurrence(nu in 0.0f64..12.0, x in 0.01f64..40.0) {
        let km = bessel_k(nu - 1.0, x).unwrap();
        let k = bessel_k(nu, x).unwrap();
        let kp = bessel_k(nu + 1.0, x).unwrap();
        prop_assert!(rel(km + 2.0 * nu / x * k, kp) < 1e-9);
    }

    #[test]
    fn even_symmetry(nu in 0.0f64..20.0, x in 0.001f64..60.0) {
        prop_assert_eq!(bessel_k(nu, x).unwrap(), bessel_k(-nu, x).unwrap());
    }

    #[test]
    fn ratio_exceeds_one_for_nonnegative_order(nu in 0.0f64..30.0, x in 0.01f64..50.0) {
        // K_{nu+1} > K_nu for nu >= 0
        prop_assert!(bessel_k_ratio(nu, x).unwrap() > 1.0);
    }
}
