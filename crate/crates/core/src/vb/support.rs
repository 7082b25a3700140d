use nalgebra::{DMatrix, DVector};

use crate::distributions::BetaParams;
use crate::jsm::{MixingTable, ScaleMixing};
use crate::wavelet::TreeIndex;

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Posterior support probability from a prior inclusion probability and a
/// data log-odds term. `pi = 0` and `pi = 1` are absorbing.
pub fn support_probability(pi: f64, data_log_odds: f64) -> f64 {
    if pi <= 0.0 {
        0.0
    } else if pi >= 1.0 {
        1.0
    } else {
        sigmoid((pi / (1.0 - pi)).ln() + data_log_odds)
    }
}

/// Per-scale summaries of a Beta table used by the support updates.
#[derive(Clone, Debug)]
pub(crate) struct TableStats {
    pub is_context: bool,
    /// `ln(e/f)` i.e. logit of the Beta mean.
    pub logit_mean: [f64; 4],
    /// `E[ln pi]`.
    pub l1: [f64; 4],
    /// `E[ln(1 - pi)]`.
    pub l0: [f64; 4],
}

pub(crate) fn table_stats(table: &MixingTable) -> Vec<TableStats> {
    table
        .scales
        .iter()
        .map(|m| {
            let t = m.table();
            let mut st = TableStats {
                is_context: matches!(m, ScaleMixing::Context(_)),
                logit_mean: [0.0; 4],
                l1: [0.0; 4],
                l0: [0.0; 4],
            };
            for c in 0..4 {
                st.logit_mean[c] = t[c].e.ln() - t[c].f.ln();
                let (a, b) = t[c].expected_logs();
                st.l1[c] = a;
                st.l0[c] = b;
            }
            st
        })
        .collect()
}

/// Parent / neighbourhood context of every coefficient.
pub(crate) struct ContextModel<'a> {
    pub tree: &'a TreeIndex,
    pub scales: &'a [usize],
    pub threshold: f64,
}

/// `P(count / n > threshold)` for independent Bernoulli indicators.
fn prob_above(probs: impl Iterator<Item = f64>, n: usize, threshold: f64) -> f64 {
    let mut dist = vec![0.0; n + 1];
    dist[0] = 1.0;
    let mut seen = 0;
    for p in probs {
        for c in (0..=seen).rev() {
            let v = dist[c];
            dist[c + 1] += v * p;
            dist[c] = v * (1.0 - p);
        }
        seen += 1;
    }
    dist.iter()
        .enumerate()
        .filter(|(c, _)| *c as f64 / n as f64 > threshold)
        .map(|(_, v)| v)
        .sum()
}

impl ContextModel<'_> {
    fn nb_prob(&self, j: usize, q: impl Fn(usize) -> f64) -> f64 {
        let nb = self.tree.neighbors(j);
        if nb.is_empty() {
            return 0.0;
        }
        prob_above(nb.iter().map(|&l| q(l)), nb.len(), self.threshold)
    }

    pub fn hard_ctx(&self, i: usize, hard: &[bool]) -> usize {
        let parent = self.tree.parent(i).is_some_and(|p| hard[p]);
        let nb = self.tree.neighbor_state(hard, i, self.threshold);
        2 * parent as usize + nb as usize
    }

    pub fn soft_ctx(&self, i: usize, q: &[f64]) -> [f64; 4] {
        let pa = self.tree.parent(i).map_or(0.0, |p| q[p]);
        let nb = self.nb_prob(i, |l| q[l]);
        [
            (1.0 - pa) * (1.0 - nb),
            (1.0 - pa) * nb,
            pa * (1.0 - nb),
            pa * nb,
        ]
    }

    /// Context distribution used by the mixing update and the bound.
    pub fn ctx_weights(&self, i: usize, q: &[f64], hard: &[bool], soft: bool) -> [f64; 4] {
        if soft {
            self.soft_ctx(i, q)
        } else {
            let mut w = [0.0; 4];
            w[self.hard_ctx(i, hard)] = 1.0;
            w
        }
    }

    /// Prior part of the mean-field log-odds of `z_i`: its own context term
    /// plus the change it causes in the context terms of its children and
    /// same-subband neighbours.
    fn soft_prior_logit(&self, i: usize, q: &[f64], stats: &[TableStats]) -> f64 {
        let st = &stats[self.scales[i]];
        let mut acc = if st.is_context {
            let p = self.soft_ctx(i, q);
            (0..4).map(|c| p[c] * (st.l1[c] - st.l0[c])).sum()
        } else {
            st.l1[0] - st.l0[0]
        };
        for &j in self.tree.children(i) {
            let sj = &stats[self.scales[j]];
            if !sj.is_context {
                continue;
            }
            let nb1 = self.nb_prob(j, |l| q[l]);
            for (b, pb) in [(0, 1.0 - nb1), (1, nb1)] {
                acc += pb
                    * (q[j] * (sj.l1[2 + b] - sj.l1[b])
                        + (1.0 - q[j]) * (sj.l0[2 + b] - sj.l0[b]));
            }
        }
        if st.is_context {
            for &j in self.tree.neighbors(i) {
                let p1 = self.nb_prob(j, |l| if l == i { 1.0 } else { q[l] });
                let p0 = self.nb_prob(j, |l| if l == i { 0.0 } else { q[l] });
                let shift = p1 - p0;
                if shift == 0.0 {
                    continue;
                }
                let pa = self.tree.parent(j).map_or(0.0, |p| q[p]);
                for (a, w) in [(0, 1.0 - pa), (1, pa)] {
                    acc += w
                        * shift
                        * (q[j] * (st.l1[2 * a + 1] - st.l1[2 * a])
                            + (1.0 - q[j]) * (st.l0[2 * a + 1] - st.l0[2 * a]));
                }
            }
        }
        acc
    }
}

/// Sequential support sweep for hardened / annealed gates. Each coefficient
/// is scored by integrating out its own slab value with all others held at
/// their current gated means.
#[allow(clippy::too_many_arguments)]
pub(crate) fn sweep_conditional(
    ctx: &ContextModel<'_>,
    stats: &[TableStats],
    gram: &DMatrix<f64>,
    h: &DVector<f64>,
    alpha: f64,
    gamma: &[f64],
    mu: &mut DVector<f64>,
    q: &mut [f64],
    gate: &mut [f64],
    temperature: Option<f64>,
) {
    let n = q.len();
    let gm = DVector::from_fn(n, |i, _| gate[i] * mu[i]);
    let mut c = h - gram * gm;
    let mut hard: Vec<bool> = q.iter().map(|&v| v > 0.5).collect();
    for i in 0..n {
        let gii = gram[(i, i)];
        let old = gate[i] * mu[i];
        let ci = c[i] + gii * old;
        let s2 = 1.0 / (alpha * gii + gamma[i]);
        let m = s2 * alpha * ci;
        let st = &stats[ctx.scales[i]];
        let k = if st.is_context {
            ctx.hard_ctx(i, &hard)
        } else {
            0
        };
        let logit = st.logit_mean[k] + 0.5 * (s2 * gamma[i]).ln() + m * m / (2.0 * s2);
        q[i] = sigmoid(logit);
        hard[i] = q[i] > 0.5;
        gate[i] = match temperature {
            Some(t) => sigmoid(logit / t),
            None => {
                if hard[i] {
                    1.0
                } else {
                    0.0
                }
            }
        };
        mu[i] = m;
        let delta = gate[i] * m - old;
        if delta != 0.0 {
            c.axpy(-delta, &gram.column(i), 1.0);
        }
    }
}

/// Exact mean-field coordinate update of every `q(z_i)` in turn.
#[allow(clippy::too_many_arguments)]
pub(crate) fn sweep_mean_field(
    ctx: &ContextModel<'_>,
    stats: &[TableStats],
    gram: &DMatrix<f64>,
    h: &DVector<f64>,
    alpha: f64,
    mu: &DVector<f64>,
    sigma: &DMatrix<f64>,
    q: &mut [f64],
) {
    let n = q.len();
    let qm = DVector::from_fn(n, |i, _| q[i] * mu[i]);
    let mut v = gram * qm;
    for i in 0..n {
        let gcol = gram.column(i);
        let scol = sigma.column(i);
        let gii = gcol[i];
        let ci = h[i] - (v[i] - gii * q[i] * mu[i]);
        let mut cross = 0.0;
        for l in 0..n {
            if l != i {
                cross += gcol[l] * q[l] * scol[l];
            }
        }
        let data = -0.5 * alpha * (-2.0 * mu[i] * ci + 2.0 * cross + gii * (mu[i] * mu[i] + scol[i]));
        let new = sigmoid(data + ctx.soft_prior_logit(i, q, stats));
        let dq = new - q[i];
        q[i] = new;
        if dq != 0.0 {
            v.axpy(dq * mu[i], &gcol, 1.0);
        }
    }
}

/// Conjugate Beta update: every coefficient adds `q_i` successes and
/// `1 - q_i` failures to the context(s) it falls in.
pub(crate) fn update_mixing(
    ctx: &ContextModel<'_>,
    prior: &MixingTable,
    q: &[f64],
    soft_contexts: bool,
) -> MixingTable {
    let hard: Vec<bool> = q.iter().map(|&v| v > 0.5).collect();
    let mut succ = vec![[0.0f64; 4]; prior.scales.len()];
    let mut fail = vec![[0.0f64; 4]; prior.scales.len()];
    for i in 0..q.len() {
        let s = ctx.scales[i];
        match prior.scales[s] {
            ScaleMixing::Root(_) => {
                succ[s][0] += q[i];
                fail[s][0] += 1.0 - q[i];
            }
            ScaleMixing::Context(_) => {
                let w = ctx.ctx_weights(i, q, &hard, soft_contexts);
                for c in 0..4 {
                    succ[s][c] += q[i] * w[c];
                    fail[s][c] += (1.0 - q[i]) * w[c];
                }
            }
        }
    }
    MixingTable {
        scales: prior
            .scales
            .iter()
            .enumerate()
            .map(|(s, m)| match *m {
                ScaleMixing::Root(b) => ScaleMixing::Root(BetaParams {
                    e: b.e + succ[s][0],
                    f: b.f + fail[s][0],
                }),
                ScaleMixing::Context(t) => {
                    let mut out = t;
                    for c in 0..4 {
                        out[c] = BetaParams {
                            e: t[c].e + succ[s][c],
                            f: t[c].f + fail[s][c],
                        };
                    }
                    ScaleMixing::Context(out)
                }
            })
            .collect(),
    }
}
