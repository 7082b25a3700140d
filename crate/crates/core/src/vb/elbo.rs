//! Collapsed evidence lower bound.
//!
//! The noise precision, slab variances and mixing weights are integrated out
//! at their optimal factors, which leaves closed forms in the sufficient
//! statistics of `q(w)` and `q(z)`.

use statrs::function::gamma::ln_gamma;

use super::{ComponentPosterior, Engine, PosteriorState};
use crate::error::{domain, Result};
use crate::jsm::{MixingTable, ScaleMixing, SlabPrior};
use crate::special::ln_bessel_k;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn bernoulli_entropy(q: f64) -> f64 {
    let mut h = 0.0;
    if q > 0.0 {
        h -= q * q.ln();
    }
    if q < 1.0 {
        h -= (1.0 - q) * (1.0 - q).ln();
    }
    h
}

fn mixing_term(post: &MixingTable, prior: &MixingTable) -> f64 {
    post.scales
        .iter()
        .zip(&prior.scales)
        .map(|(a, b)| match (a, b) {
            (ScaleMixing::Root(x), ScaleMixing::Root(y)) => x.ln_beta() - y.ln_beta(),
            _ => {
                let (x, y) = (a.table(), b.table());
                (0..4).map(|c| x[c].ln_beta() - y[c].ln_beta()).sum()
            }
        })
        .sum()
}

fn component_term(engine: &Engine<'_>, comp: &ComponentPosterior, common: bool) -> Result<f64> {
    let prior = engine.prior(common);
    let scales = engine.problem.layout.num_scales();
    let mut sums = vec![0.0; scales];
    let mut counts = vec![0usize; scales];
    for (i, &s) in engine.problem.scales.iter().enumerate() {
        sums[s] += comp.mu[i] * comp.mu[i] + comp.sigma[(i, i)];
        counts[s] += 1;
    }
    let mut acc = 0.0;
    for s in 0..scales {
        let g = prior.gamma[s];
        let n = counts[s] as f64;
        let b = sums[s];
        let base = -0.5 * n * LN_2PI + g.shape * g.rate.ln() - ln_gamma(g.shape);
        acc += base
            + match prior.slab {
                SlabPrior::Bkf => {
                    let a = 2.0 * g.rate;
                    let p = g.shape - 0.5 * n;
                    std::f64::consts::LN_2 + 0.5 * p * (b / a).ln() + ln_bessel_k(p, (a * b).sqrt())?
                }
                SlabPrior::Gaussian => {
                    let shape = g.shape + 0.5 * n;
                    let rate = g.rate + 0.5 * b;
                    ln_gamma(shape) - shape * rate.ln()
                }
            };
    }
    let n = comp.mu.len() as f64;
    acc += 0.5 * (n * (1.0 + LN_2PI) + comp.ln_det_sigma);
    acc += mixing_term(&comp.mixing, &prior.mixing);
    acc += comp.q.iter().map(|&q| bernoulli_entropy(q)).sum::<f64>();
    Ok(acc)
}

pub(super) fn collapsed(engine: &Engine<'_>, state: &PosteriorState) -> Result<f64> {
    if state.common.len() != 1 {
        return Err(domain("the bound is defined for a single common posterior"));
    }
    let c0 = engine.noise_prior;
    let post = state.noise[0];
    let m = engine.problem.total_m as f64;
    let mut acc = c0.shape * c0.rate.ln() - ln_gamma(c0.shape) + ln_gamma(post.shape)
        - post.shape * post.rate.ln()
        - 0.5 * m * LN_2PI;
    acc += component_term(engine, &state.common[0], true)?;
    for v in &state.innovations {
        acc += component_term(engine, v, false)?;
    }
    Ok(acc)
}
