//! Independent reference computations shared by the core tests and the
//! acceptance suite.
#![allow(dead_code)]

use dcs_core::distributions::{gig_expectations, sample_normal, BetaParams, GammaParams};
use dcs_core::jsm::{
    gen_measurement_matrix, HyperParams, MixingTable, NodeData, ScaleMixing, SensingEnsemble,
};
use dcs_core::vb::{run_centralized, ScalePosterior, SupportMode, VbConfig};
use dcs_core::wavelet::{PyramidLayout, Shape};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ContinuousCDF, Gamma};

fn root_tables(layout: &PyramidLayout, beta: BetaParams) -> MixingTable {
    MixingTable {
        scales: vec![ScaleMixing::Root(beta); layout.num_scales()],
    }
}

/// Log density of `y ~ N(0, C)`.
fn gaussian_ln_pdf(y: &DVector<f64>, c: DMatrix<f64>) -> f64 {
    let n = y.len() as f64;
    let ch = c.cholesky().expect("covariance is positive definite");
    let ln_det = 2.0 * ch.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
    let quad = y.dot(&ch.solve(y));
    -0.5 * (n * (2.0 * std::f64::consts::PI).ln() + ln_det + quad)
}

fn condition_number(d: &DMatrix<f64>) -> f64 {
    let sv = d.clone().singular_values();
    sv.max() / sv.min()
}

pub struct SupportCase {
    pub vb: Vec<bool>,
    pub map: Vec<bool>,
}

/// One seeded instance of the four-coefficient support problem: VB hardened
/// support against the exhaustive MAP support under `pi = 0.5`, unit slab
/// variance and known noise.
pub fn support_case(seed: u64) -> SupportCase {
    const N: usize = 4;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = loop {
        let d = gen_measurement_matrix(N, N, &mut rng).unwrap();
        if condition_number(&d) < 3.0 {
            break d;
        }
    };
    let (theta, clean) = loop {
        let theta: Vec<f64> = (0..N)
            .map(|_| if rng.random_bool(0.5) { sample_normal(0.0, 1.0, &mut rng) } else { 0.0 })
            .collect();
        let clean = &d * DVector::from_column_slice(&theta);
        if clean.norm_squared() > 0.0 {
            break (theta, clean);
        }
    };
    let _ = theta;
    let sigma2 = clean.norm_squared() / N as f64 * 1e-4;
    let y = DVector::from_fn(N, |i, _| clean[i] + sample_normal(0.0, sigma2, &mut rng));

    let mut best = (f64::NEG_INFINITY, vec![false; N]);
    for mask in 0..(1u32 << N) {
        let z: Vec<bool> = (0..N).map(|i| mask >> i & 1 == 1).collect();
        let mut c = DMatrix::identity(N, N) * sigma2;
        for i in (0..N).filter(|&i| z[i]) {
            let col = d.column(i);
            c += col * col.transpose();
        }
        let lp = gaussian_ln_pdf(&y, c);
        if lp > best.0 {
            best = (lp, z);
        }
    }

    let layout = PyramidLayout::new(Shape::Line(N), 1).unwrap();
    let mut hp = HyperParams::defaults(&layout);
    let tight = GammaParams::new(1e6, 1e6).unwrap();
    hp.common_gamma = vec![tight; layout.num_scales()];
    hp.common_mixing = root_tables(&layout, BetaParams::new(1e6, 1e6).unwrap());
    hp.innov_mixing = root_tables(&layout, BetaParams::new(1.0, 1e9).unwrap());
    hp.noise = GammaParams::new(1e6, 1e6 * sigma2).unwrap();
    let ens = SensingEnsemble::new(vec![NodeData { d, y }], 1.0 / sigma2).unwrap();
    let cfg = VbConfig {
        support_mode: SupportMode::Hardened,
        ..VbConfig::default()
    };
    let out = run_centralized(&ens, &layout, &hp, &cfg, None).unwrap();
    SupportCase {
        vb: out.state.common[0].support(),
        map: best.1,
    }
}

pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
}

fn batch_means(xs: &[f64], batches: usize) -> McEstimate {
    let size = xs.len() / batches;
    let means: Vec<f64> = xs.chunks_exact(size).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let b = means.len() as f64;
    let mean = means.iter().sum::<f64>() / b;
    let var = means.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / (b - 1.0);
    McEstimate {
        mean,
        std_error: (var / b).sqrt(),
    }
}

/// Gibbs sampler for `y = w + n`, `n ~ N(0, 1/alpha)`, `w ~ N(0, lambda)`,
/// `lambda ~ Gamma(shape, rate)`. The `lambda | w` step uses an auxiliary
/// uniform so that only truncated Gamma draws are needed.
/// Returns estimates of `E[lambda]` and `E[1/lambda]`.
pub fn gibbs_scalar(y: f64, alpha: f64, prior: GammaParams, steps: usize, seed: u64) -> (McEstimate, McEstimate) {
    assert!(prior.shape > 0.5);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = Gamma::new(prior.shape - 0.5, prior.rate).unwrap();
    let burn = steps / 100;
    let mut lambda = prior.shape / prior.rate;
    let mut lam = Vec::with_capacity(steps);
    let mut inv = Vec::with_capacity(steps);
    for step in 0..burn + steps {
        let s2 = 1.0 / (alpha + 1.0 / lambda);
        let w = sample_normal(s2 * alpha * y, s2, &mut rng);
        let u: f64 = rng.random::<f64>() * (-w * w / (2.0 * lambda)).exp();
        let lower = w * w / (-2.0 * u.ln());
        let f_lo = gamma.cdf(lower);
        let target = f_lo + rng.random::<f64>() * (1.0 - f_lo);
        lambda = gamma.inverse_cdf(target).max(lower);
        if step >= burn {
            lam.push(lambda);
            inv.push(1.0 / lambda);
        }
    }
    (batch_means(&lam, 100), batch_means(&inv, 100))
}

/// Variance posteriors the engine reaches on a two-coefficient, identity
/// sensing problem with a tightly known noise precision and supports pinned on.
/// Returns `(E[lambda], E[1/lambda])` per coefficient.
pub fn engine_scalar_variances(y: [f64; 2], priors: [GammaParams; 2], alpha: f64) -> Vec<(f64, f64)> {
    let layout = PyramidLayout::new(Shape::Line(2), 1).unwrap();
    let mut hp = HyperParams::defaults(&layout);
    hp.common_gamma = priors.to_vec();
    hp.common_mixing = root_tables(&layout, BetaParams::new(1e9, 1.0).unwrap());
    hp.innov_mixing = root_tables(&layout, BetaParams::new(1.0, 1e9).unwrap());
    hp.noise = GammaParams::new(1e12, 1e12 / alpha).unwrap();
    let ens = SensingEnsemble::new(
        vec![NodeData {
            d: DMatrix::identity(2, 2),
            y: DVector::from_column_slice(&y),
        }],
        alpha,
    )
    .unwrap();
    let cfg = VbConfig {
        max_iter: 500,
        rel_tol: 1e-12,
        ..VbConfig::default()
    };
    let out = run_centralized(&ens, &layout, &hp, &cfg, None).unwrap();
    out.state.common[0]
        .scales
        .iter()
        .map(|s| match s {
            ScalePosterior::Gig(g) => gig_expectations(g).unwrap(),
            other => panic!("expected a GIG posterior, got {other:?}"),
        })
        .collect()
}
