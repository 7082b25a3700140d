use dcs_core::distributions::{
    bkf_cdf, bkf_from_gamma, bkf_ln_pdf, bkf_pdf, gig_expectations, sample, sample_hierarchy,
    BkfParams, GammaParams, GigParams, Law,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Trapezoid over s = ln x on (0, inf) for an integrand given in log form.
fn log_axis_integral(ln_integrand: impl Fn(f64) -> f64, lo: f64, hi: f64, h: f64) -> f64 {
    let n = ((hi - lo) / h).ceil() as usize;
    let mut acc = 0.0;
    for i in 0..=n {
        let s = lo + i as f64 * h;
        let v = (ln_integrand(s.exp()) + s).exp();
        acc += if i == 0 || i == n { 0.5 * v } else { v };
    }
    acc * h
}

fn bkf_moment(params: &BkfParams, k: i32) -> f64 {
    2.0 * log_axis_integral(
        |x| bkf_ln_pdf(x, params) + k as f64 * x.ln(),
        -150.0,
        (3000.0f64).ln(),
        0.005,
    )
}

#[test]
fn bkf_normalizes_on_grid() {
    for &p in &[0.3, 0.5, 1.0, 2.0, 5.0] {
        for &c in &[0.5, 1.0, 4.0] {
            let params = BkfParams::new(p, c).unwrap();
            let mass = bkf_moment(&params, 0);
            assert!((mass - 1.0).abs() < 1e-4, "p={p} c={c}: {mass}");
        }
    }
}

#[test]
fn bkf_variance_and_kurtosis_approach_gaussian() {
    let sigma2 = 2.0;
    let mut last = f64::INFINITY;
    for &p in &[0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0] {
        let params = BkfParams::new(p, sigma2 / p).unwrap();
        let m2 = bkf_moment(&params, 2);
        let m4 = bkf_moment(&params, 4);
        assert!((m2 - sigma2).abs() < 1e-6, "variance {m2}");
        let kurt = m4 / (m2 * m2) - 3.0;
        assert!((kurt - params.excess_kurtosis()).abs() < 1e-5, "p={p}: {kurt}");
        assert!(kurt < last);
        last = kurt;
    }
    assert!(last < 0.1);
}

#[test]
fn bkf_half_shape_normalizes_with_spike() {
    let params = BkfParams::new(0.5, 1.0).unwrap();
    assert!((bkf_moment(&params, 0) - 1.0).abs() < 1e-4);
    assert!(bkf_pdf(1e-12, &params).is_finite());
}

fn gig_quadrature(g: &GigParams) -> (f64, f64) {
    let kernel = |l: f64| (g.p - 1.0) * l.ln() - 0.5 * (g.a * l + g.b / l);
    let (m, _) = gig_expectations(g).unwrap();
    let centre = m.ln();
    let lo = centre - 60.0;
    let hi = centre + 60.0;
    let shift = kernel(m);
    let z = log_axis_integral(|l| kernel(l) - shift, lo, hi, 0.002);
    let z1 = log_axis_integral(|l| kernel(l) - shift + l.ln(), lo, hi, 0.002);
    let zm1 = log_axis_integral(|l| kernel(l) - shift - l.ln(), lo, hi, 0.002);
    (z1 / z, zm1 / z)
}

#[test]
fn gig_expectations_match_quadrature() {
    let grid = [
        (2.0, 2.0, 0.5),
        (0.2, 5.0, -3.5),
        (1.0, 0.01, 2.0),
        (10.0, 40.0, -20.0),
        (0.5, 3.0, 7.25),
        (2.0, 1e-3, -0.75),
    ];
    for &(a, b, p) in &grid {
        let g = GigParams::new(a, b, p).unwrap();
        let (m, im) = gig_expectations(&g).unwrap();
        let (qm, qim) = gig_quadrature(&g);
        assert!(((m - qm) / qm).abs() < 1e-8, "{g:?}: mean {m} vs {qm}");
        assert!(((im - qim) / qim).abs() < 1e-8, "{g:?}: inverse {im} vs {qim}");
    }
}

#[test]
fn gig_density_integrates_to_one() {
    let g = GigParams::new(2.0, 2.0, 0.5).unwrap();
    let mass = log_axis_integral(|l| g.ln_pdf(l).unwrap(), -40.0, 8.0, 0.002);
    assert!((mass - 1.0).abs() < 1e-10);
}

#[test]
fn gamma_sample_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let law = Law::Gamma(GammaParams::new(5.0, 5.0).unwrap());
    let n = 1_000_000;
    let mean = (0..n).map(|_| sample(&law, &mut rng).unwrap()).sum::<f64>() / n as f64;
    assert!((mean - 1.0).abs() < 0.01, "{mean}");
}

/// Sup distance between the empirical CDF and `cdf`, evaluated at every
/// `stride`-th order statistic; the bound adds the CDF increment across gaps.
fn ks_distance(mut xs: Vec<f64>, cdf: impl Fn(f64) -> f64, stride: usize) -> f64 {
    xs.sort_by(f64::total_cmp);
    let n = xs.len() as f64;
    let mut worst: f64 = 0.0;
    let mut prev_f = 0.0;
    let mut prev_i = 0usize;
    let mut i = 0usize;
    while i < xs.len() {
        let f = cdf(xs[i]);
        worst = worst
            .max((f - i as f64 / n).abs())
            .max((f - (i + 1) as f64 / n).abs());
        // gap between evaluated points: both curves are monotone
        worst = worst.max((f - prev_f) - (i - prev_i) as f64 / n);
        prev_f = f;
        prev_i = i;
        i += stride;
    }
    worst
}

fn hierarchy_draws(g: &GammaParams, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|_| sample_hierarchy(g, &mut rng)).collect()
}

#[test]
fn gamma_normal_hierarchy_is_bkf() {
    let g = GammaParams::new(2.0, 1.0).unwrap();
    let bkf = bkf_from_gamma(&g);
    let d = ks_distance(hierarchy_draws(&g, 200_000, 7), |x| bkf_cdf(x, &bkf), 50);
    assert!(d < 0.005, "{d}");
}

#[test]
fn printed_scale_mapping_is_rejected_by_sampling() {
    // shape a, scale a/b^2 disagrees with the sampled law whenever a != b^2 ... != 1
    let g = GammaParams::new(2.0, 1.0).unwrap();
    let printed = BkfParams::new(2.0, 2.0).unwrap();
    let d = ks_distance(hierarchy_draws(&g, 200_000, 7), |x| bkf_cdf(x, &printed), 50);
    assert!(d > 0.05, "{d}");
}

proptest! {
    #[test]
    fn bkf_is_symmetric(x in -30.0f64..30.0, p in 0.2f64..8.0, c in 0.1f64..10.0) {
        let params = BkfParams::new(p, c).unwrap();
        prop_assert_eq!(bkf_pdf(x, &params), bkf_pdf(-x, &params));
    }

    #[test]
    fn gig_jensen(a in 0.01f64..50.0, b in 0.001f64..50.0, p in -30.0f64..30.0) {
        let (m, im) = gig_expectations(&GigParams::new(a, b, p).unwrap()).unwrap();
        prop_assert!(m.is_finite() && im.is_finite() && m > 0.0 && im > 0.0);
        prop_assert!(m * im >= 1.0 - 1e-12);
    }

    #[test]
    fn bkf_cdf_is_monotone(x in -20.0f64..20.0, dx in 0.01f64..2.0, p in 0.3f64..6.0, c in 0.2f64..5.0) {
        let params = BkfParams::new(p, c).unwrap();
        prop_assert!(bkf_cdf(x, &params) <= bkf_cdf(x + dx, &params) + 1e-12);
    }
}
