//! Variational Bayes for the JSM-1 model.
//!
//! One sweep updates, in order: the common Gaussian factor, the common
//! support, the common mixing weights, then per node the innovation factor,
//! support and mixing weights, then every per-scale variance posterior and
//! finally the noise precision.

mod elbo;
mod moments;
mod support;

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::distributions::{gig_expectations, GammaParams, GigParams};
use crate::error::{domain, mismatch, Result};
use crate::jsm::{HyperParams, MixingTable, ScaleMixing, SensingEnsemble, SlabPrior};
use crate::metrics::nmse;
use crate::wavelet::{build_tree_index, PyramidLayout, TreeIndex};

pub use moments::{solve as solve_moments, Gating, Moments};
pub use support::support_probability;

use support::{table_stats, ContextModel};

/// How support marginals enter the Gaussian factors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum SupportMode {
    /// Gates are `1{q > 0.5}`; each support probability integrates out its
    /// own slab value with the rest held at their gated means.
    Hardened,
    /// Exact mean-field coordinate ascent on soft marginals; supports are
    /// thresholded only when forming the output.
    ThresholdAtOutput,
    /// Gates `sigmoid(logit / T)` with `T = t0 * rate^iter`, hard once `T < 0.05`.
    Anneal { t0: f64, rate: f64 },
}

impl Default for SupportMode {
    fn default() -> Self {
        SupportMode::Hardened
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VbConfig {
    pub max_iter: usize,
    pub rel_tol: f64,
    pub support_mode: SupportMode,
    /// Weight on the new mean in every Gaussian update (1.0 = undamped).
    pub damping: f64,
    /// Run per-node work on the rayon pool.
    pub parallel: bool,
}

impl Default for VbConfig {
    fn default() -> Self {
        VbConfig {
            max_iter: 100,
            rel_tol: 1e-4,
            support_mode: SupportMode::Hardened,
            damping: 1.0,
            parallel: true,
        }
    }
}

impl VbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iter == 0 {
            return Err(domain("max_iter must be >= 1"));
        }
        if !(self.rel_tol > 0.0) {
            return Err(domain(format!("rel_tol must be > 0, got {}", self.rel_tol)));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(domain(format!("damping must be in (0, 1], got {}", self.damping)));
        }
        if let SupportMode::Anneal { t0, rate } = self.support_mode {
            if !(t0 > 0.0) || !(rate > 0.0 && rate < 1.0) {
                return Err(domain("anneal needs t0 > 0 and 0 < rate < 1"));
            }
        }
        Ok(())
    }

    /// Gate temperature at a given sweep, `None` meaning hard gates.
    fn temperature(&self, iter: usize) -> Option<f64> {
        match self.support_mode {
            SupportMode::Anneal { t0, rate } => {
                let t = t0 * rate.powi(iter as i32);
                (t >= 0.05).then_some(t)
            }
            _ => None,
        }
    }

    fn mean_field(&self) -> bool {
        self.support_mode == SupportMode::ThresholdAtOutput
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Target {
    Common,
    Node(usize),
}

/// Posterior over one scale's slab variance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScalePosterior {
    /// GIG law of the variance.
    Gig(GigParams),
    /// Gamma law of the precision (Gaussian slab mode).
    Precision(GammaParams),
}

impl ScalePosterior {
    pub fn inverse_variance(&self) -> Result<f64> {
        match self {
            ScalePosterior::Gig(g) => Ok(gig_expectations(g)?.1),
            ScalePosterior::Precision(g) => Ok(g.mean()),
        }
    }
}

/// Variance posterior of a scale with `count` coefficients whose second
/// moments sum to `second_moment_sum`.
pub fn variance_posterior(
    prior: &GammaParams,
    slab: SlabPrior,
    count: usize,
    second_moment_sum: f64,
) -> Result<ScalePosterior> {
    let n = count as f64;
    match slab {
        SlabPrior::Bkf => Ok(ScalePosterior::Gig(GigParams::new(
            2.0 * prior.rate,
            second_moment_sum,
            prior.shape - 0.5 * n,
        )?)),
        SlabPrior::Gaussian => Ok(ScalePosterior::Precision(GammaParams::new(
            prior.shape + 0.5 * n,
            prior.rate + 0.5 * second_moment_sum,
        )?)),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentPrior {
    pub gamma: Vec<GammaParams>,
    pub mixing: MixingTable,
    pub slab: SlabPrior,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComponentPosterior {
    pub mu: DVector<f64>,
    pub sigma: DMatrix<f64>,
    pub ln_det_sigma: f64,
    /// Support marginals `q(z_i = 1)`.
    pub q: Vec<f64>,
    /// Values used for `Z` in the Gaussian factor (mode dependent).
    pub gate: Vec<f64>,
    pub scales: Vec<ScalePosterior>,
    /// `<1/lambda_s>` per scale.
    pub inv_var: Vec<f64>,
    pub mixing: MixingTable,
}

impl ComponentPosterior {
    pub fn support(&self) -> Vec<bool> {
        self.q.iter().map(|&v| v > 0.5).collect()
    }

    pub fn second_moments(&self) -> Vec<f64> {
        (0..self.mu.len())
            .map(|i| self.mu[i] * self.mu[i] + self.sigma[(i, i)])
            .collect()
    }

    /// `(E[z], extra diagonal of E[z zᵀ])` under the configured mode.
    fn weights(&self, mean_field: bool) -> (&[f64], Option<Vec<f64>>) {
        if mean_field {
            (
                &self.q,
                Some(self.q.iter().map(|&v| v - v * v).collect()),
            )
        } else {
            (&self.gate, None)
        }
    }

    fn first_moment(&self, mean_field: bool) -> DVector<f64> {
        let (w, _) = self.weights(mean_field);
        DVector::from_fn(self.mu.len(), |i, _| w[i] * self.mu[i])
    }

    fn gamma_per_coefficient(&self, scales: &[usize]) -> Vec<f64> {
        scales.iter().map(|&s| self.inv_var[s]).collect()
    }
}

#[derive(Clone, Debug)]
pub struct NodeProblem {
    pub d: DMatrix<f64>,
    pub y: DVector<f64>,
    pub gram: DMatrix<f64>,
    pub dty: DVector<f64>,
    pub yy: f64,
}

/// Ensemble plus everything derived from it once.
#[derive(Clone, Debug)]
pub struct Problem {
    pub layout: PyramidLayout,
    pub tree: TreeIndex,
    pub scales: Vec<usize>,
    pub nodes: Vec<NodeProblem>,
    pub total_m: usize,
}

impl Problem {
    pub fn new(ensemble: &SensingEnsemble, layout: &PyramidLayout) -> Result<Self> {
        if ensemble.n != layout.len() {
            return Err(mismatch(format!(
                "ensemble has N = {}, layout has {}",
                ensemble.n,
                layout.len()
            )));
        }
        let nodes = ensemble
            .nodes
            .iter()
            .map(|nd| NodeProblem {
                gram: nd.d.tr_mul(&nd.d),
                dty: nd.d.tr_mul(&nd.y),
                yy: nd.y.norm_squared(),
                d: nd.d.clone(),
                y: nd.y.clone(),
            })
            .collect();
        Ok(Problem {
            layout: layout.clone(),
            tree: build_tree_index(layout),
            scales: layout.scales(),
            nodes,
            total_m: ensemble.total_measurements(),
        })
    }

    pub fn n(&self) -> usize {
        self.scales.len()
    }

    pub fn k(&self) -> usize {
        self.nodes.len()
    }

    pub fn gram_sum(&self) -> DMatrix<f64> {
        sum_matrices(self.nodes.iter().map(|nd| &nd.gram))
    }
}

pub(crate) fn sum_matrices<'a>(mut it: impl Iterator<Item = &'a DMatrix<f64>>) -> DMatrix<f64> {
    let mut acc = it.next().expect("at least one node").clone();
    for m in it {
        acc += m;
    }
    acc
}

pub(crate) fn sum_vectors(v: &[DVector<f64>]) -> DVector<f64> {
    let mut acc = v[0].clone();
    for x in &v[1..] {
        acc += x;
    }
    acc
}

pub(crate) fn sum_scalars(v: &[f64]) -> f64 {
    let mut acc = v[0];
    for x in &v[1..] {
        acc += x;
    }
    acc
}

/// Full variational state. `common` and `noise` hold one entry in the
/// centralized engine and one private copy per node in the decentralized one.
#[derive(Clone, Debug, PartialEq)]
pub struct PosteriorState {
    pub common: Vec<ComponentPosterior>,
    pub innovations: Vec<ComponentPosterior>,
    /// Noise precision posterior `Gamma(c', d')`.
    pub noise: Vec<GammaParams>,
}

impl PosteriorState {
    pub fn copy_of(&self, k: usize) -> usize {
        if self.common.len() == 1 {
            0
        } else {
            k
        }
    }

    pub fn component(&self, target: Target) -> &ComponentPosterior {
        match target {
            Target::Common => &self.common[0],
            Target::Node(k) => &self.innovations[k],
        }
    }

    pub fn component_mut(&mut self, target: Target) -> &mut ComponentPosterior {
        match target {
            Target::Common => &mut self.common[0],
            Target::Node(k) => &mut self.innovations[k],
        }
    }

    /// `theta_k = mu_c * 1{q_c > 0.5} + mu_k * 1{q_k > 0.5}`.
    pub fn theta_hat(&self, k: usize) -> Vec<f64> {
        let c = &self.common[self.copy_of(k)];
        let v = &self.innovations[k];
        (0..c.mu.len())
            .map(|i| {
                let a = if c.q[i] > 0.5 { c.mu[i] } else { 0.0 };
                let b = if v.q[i] > 0.5 { v.mu[i] } else { 0.0 };
                a + b
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub iteration: usize,
    /// Bound after the sweep; `None` when the common posterior is replicated per node.
    pub elbo: Option<f64>,
    /// `||y_k - D_k theta_hat_k||` per node.
    pub residuals: Vec<f64>,
    pub nmse: Option<f64>,
    pub rel_change: f64,
    /// Consensus traffic during this sweep (0 when centralized).
    pub message_bytes: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trace {
    pub rows: Vec<TraceRow>,
}

impl Trace {
    pub fn to_csv(&self) -> String {
        let k = self.rows.first().map_or(0, |r| r.residuals.len());
        let mut out = String::from("iteration,elbo");
        for i in 0..k {
            let _ = write!(out, ",residual_{i}");
        }
        out.push_str(",nmse,rel_change,message_bytes\n");
        for r in &self.rows {
            let elbo = r.elbo.map_or(String::new(), |v| v.to_string());
            let _ = write!(out, "{},{elbo}", r.iteration);
            for v in &r.residuals {
                let _ = write!(out, ",{v}");
            }
            let nm = r.nmse.map_or(String::new(), |v| v.to_string());
            let _ = writeln!(out, ",{nm},{},{}", r.rel_change, r.message_bytes);
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct VbOutput {
    pub theta_hat: Vec<Vec<f64>>,
    pub state: PosteriorState,
    pub trace: Trace,
    pub iterations: usize,
    pub converged: bool,
}

/// Source of the network-wide sums the updates need.
pub(crate) trait Aggregator {
    /// Number of independent views of the sums (1 or K).
    fn copies(&self) -> usize;
    fn gram(&self, copy: usize) -> &DMatrix<f64>;
    fn vectors(&mut self, locals: Vec<DVector<f64>>) -> Result<Vec<DVector<f64>>>;
    fn scalars(&mut self, locals: Vec<f64>) -> Result<Vec<f64>>;
    /// Bytes exchanged since the previous call.
    fn take_bytes(&mut self) -> u64 {
        0
    }
}

pub(crate) struct ExactSums {
    gram: DMatrix<f64>,
}

impl ExactSums {
    pub fn new(problem: &Problem) -> Self {
        ExactSums {
            gram: problem.gram_sum(),
        }
    }
}

impl Aggregator for ExactSums {
    fn copies(&self) -> usize {
        1
    }

    fn gram(&self, _copy: usize) -> &DMatrix<f64> {
        &self.gram
    }

    fn vectors(&mut self, locals: Vec<DVector<f64>>) -> Result<Vec<DVector<f64>>> {
        Ok(vec![sum_vectors(&locals)])
    }

    fn scalars(&mut self, locals: Vec<f64>) -> Result<Vec<f64>> {
        Ok(vec![sum_scalars(&locals)])
    }
}

/// Everything fixed during a run.
pub(crate) struct Engine<'a> {
    pub problem: &'a Problem,
    pub cfg: &'a VbConfig,
    pub common_prior: ComponentPrior,
    pub innov_prior: ComponentPrior,
    pub noise_prior: GammaParams,
    pub threshold: f64,
}

impl<'a> Engine<'a> {
    pub fn new(problem: &'a Problem, hp: &HyperParams, cfg: &'a VbConfig) -> Result<Self> {
        hp.validate(&problem.layout)?;
        cfg.validate()?;
        let (cm, im) = hp.effective_mixing();
        Ok(Engine {
            problem,
            cfg,
            common_prior: ComponentPrior {
                gamma: hp.common_gamma.clone(),
                mixing: cm,
                slab: hp.slab_prior,
            },
            innov_prior: ComponentPrior {
                gamma: hp.innov_gamma.clone(),
                mixing: im,
                slab: hp.slab_prior,
            },
            noise_prior: hp.noise,
            threshold: hp.threshold_fraction,
        })
    }

    fn ctx(&self) -> ContextModel<'_> {
        ContextModel {
            tree: &self.problem.tree,
            scales: &self.problem.scales,
            threshold: self.threshold,
        }
    }

    fn prior(&self, common: bool) -> &ComponentPrior {
        if common {
            &self.common_prior
        } else {
            &self.innov_prior
        }
    }

    /// `mu = 0`, `Sigma = I`, marginals at the prior means, then a variance update.
    fn initial_component(&self, common: bool) -> Result<ComponentPosterior> {
        let prior = self.prior(common);
        let n = self.problem.n();
        let q: Vec<f64> = (0..n)
            .map(|i| {
                let b = prior.mixing.scales[self.problem.scales[i]].table()[0];
                b.mean()
            })
            .collect();
        let gate = match self.cfg.support_mode {
            SupportMode::Anneal { .. } if self.cfg.temperature(0).is_some() => q.clone(),
            _ => q.iter().map(|&v| if v > 0.5 { 1.0 } else { 0.0 }).collect(),
        };
        let mut comp = ComponentPosterior {
            mu: DVector::zeros(n),
            sigma: DMatrix::identity(n, n),
            ln_det_sigma: 0.0,
            q,
            gate,
            scales: Vec::new(),
            inv_var: Vec::new(),
            mixing: prior.mixing.clone(),
        };
        self.variance_step(&mut comp, common)?;
        Ok(comp)
    }

    pub fn initial_state(&self, agg: &mut dyn Aggregator) -> Result<PosteriorState> {
        let copies = agg.copies();
        let common = (0..copies)
            .map(|_| self.initial_component(true))
            .collect::<Result<Vec<_>>>()?;
        let innovations = (0..self.problem.k())
            .map(|_| self.initial_component(false))
            .collect::<Result<Vec<_>>>()?;
        // Noise starts from the all-zero signal: every measurement is residual.
        let locals: Vec<f64> = self.problem.nodes.iter().map(|nd| nd.yy).collect();
        let totals = agg.scalars(locals)?;
        let noise = totals
            .iter()
            .map(|&t| self.noise_from_total(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(PosteriorState {
            common,
            innovations,
            noise,
        })
    }

    fn gating<'c>(&self, comp: &'c ComponentPosterior, temp: Option<f64>) -> Gating<'c> {
        match self.cfg.support_mode {
            SupportMode::ThresholdAtOutput => Gating::MeanField(&comp.q),
            SupportMode::Anneal { .. } if temp.is_some() => Gating::Scaled(&comp.gate),
            _ => Gating::Binary(&comp.gate),
        }
    }

    pub fn moments_step(
        &self,
        comp: &mut ComponentPosterior,
        gram: &DMatrix<f64>,
        h: &DVector<f64>,
        alpha: f64,
        temp: Option<f64>,
        damp: bool,
    ) -> Result<()> {
        let gamma = comp.gamma_per_coefficient(&self.problem.scales);
        let m = moments::solve(gram, h, &gamma, alpha, self.gating(comp, temp))?;
        let d = if damp { self.cfg.damping } else { 1.0 };
        comp.mu = if d == 1.0 {
            m.mu
        } else {
            m.mu * d + &comp.mu * (1.0 - d)
        };
        comp.sigma = m.sigma;
        comp.ln_det_sigma = m.ln_det_sigma;
        Ok(())
    }

    pub fn support_step(
        &self,
        comp: &mut ComponentPosterior,
        gram: &DMatrix<f64>,
        h: &DVector<f64>,
        alpha: f64,
        temp: Option<f64>,
    ) -> Result<()> {
        let stats = table_stats(&comp.mixing);
        let ctx = self.ctx();
        if self.cfg.mean_field() {
            support::sweep_mean_field(&ctx, &stats, gram, h, alpha, &comp.mu, &comp.sigma, &mut comp.q);
            Ok(())
        } else {
            let gamma = comp.gamma_per_coefficient(&self.problem.scales);
            support::sweep_conditional(
                &ctx,
                &stats,
                gram,
                h,
                alpha,
                &gamma,
                &mut comp.mu,
                &mut comp.q,
                &mut comp.gate,
                temp,
            );
            self.moments_step(comp, gram, h, alpha, temp, false)
        }
    }

    pub fn mixing_step(&self, comp: &mut ComponentPosterior, common: bool) {
        comp.mixing = support::update_mixing(
            &self.ctx(),
            &self.prior(common).mixing,
            &comp.q,
            self.cfg.mean_field(),
        );
    }

    pub fn variance_step(&self, comp: &mut ComponentPosterior, common: bool) -> Result<()> {
        let prior = self.prior(common);
        let scales = self.problem.layout.num_scales();
        let mut sums = vec![0.0; scales];
        let mut counts = vec![0usize; scales];
        for (i, &s) in self.problem.scales.iter().enumerate() {
            sums[s] += comp.mu[i] * comp.mu[i] + comp.sigma[(i, i)];
            counts[s] += 1;
        }
        comp.scales = (0..scales)
            .map(|s| variance_posterior(&prior.gamma[s], prior.slab, counts[s], sums[s]))
            .collect::<Result<Vec<_>>>()?;
        comp.inv_var = comp
            .scales
            .iter()
            .map(ScalePosterior::inverse_variance)
            .collect::<Result<Vec<_>>>()?;
        Ok(())
    }

    pub fn noise_from_total(&self, total: f64) -> Result<GammaParams> {
        GammaParams::new(
            self.noise_prior.shape + 0.5 * self.problem.total_m as f64,
            self.noise_prior.rate + 0.5 * total,
        )
    }

    /// Local target of the common update: `D_kᵀ (y_k - D_k E[z_k w_k])`.
    pub fn local_common_rhs(&self, k: usize, innov: &ComponentPosterior) -> DVector<f64> {
        let nd = &self.problem.nodes[k];
        &nd.dty - &nd.gram * innov.first_moment(self.cfg.mean_field())
    }

    /// `E ||y_k - D_k theta_k||²` under the current factors.
    pub fn expected_sq_residual(
        &self,
        k: usize,
        common: &ComponentPosterior,
        innov: &ComponentPosterior,
    ) -> f64 {
        let nd = &self.problem.nodes[k];
        let mf = self.cfg.mean_field();
        let mc = common.first_moment(mf);
        let mk = innov.first_moment(mf);
        let mut r = nd.yy - 2.0 * nd.dty.dot(&(&mc + &mk));
        r += quad_term(&nd.gram, common, mf) + quad_term(&nd.gram, innov, mf);
        r += 2.0 * mc.dot(&(&nd.gram * &mk));
        r.max(0.0)
    }

    fn theta_residual(&self, k: usize, theta: &[f64]) -> f64 {
        let nd = &self.problem.nodes[k];
        (&nd.y - &nd.d * DVector::from_column_slice(theta)).norm()
    }

    fn innovation_update(
        &self,
        k: usize,
        comp: &mut ComponentPosterior,
        common: &ComponentPosterior,
        alpha: f64,
        temp: Option<f64>,
    ) -> Result<()> {
        let nd = &self.problem.nodes[k];
        let h = &nd.dty - &nd.gram * common.first_moment(self.cfg.mean_field());
        self.moments_step(comp, &nd.gram, &h, alpha, temp, true)?;
        self.support_step(comp, &nd.gram, &h, alpha, temp)?;
        self.mixing_step(comp, false);
        Ok(())
    }

    /// One full sweep.
    pub fn sweep(&self, state: &mut PosteriorState, agg: &mut dyn Aggregator, iter: usize) -> Result<()> {
        let temp = self.cfg.temperature(iter);
        let parallel = self.cfg.parallel;

        let locals: Vec<DVector<f64>> = (0..self.problem.k())
            .map(|k| self.local_common_rhs(k, &state.innovations[k]))
            .collect();
        let hs = agg.vectors(locals)?;
        let grams: Vec<&DMatrix<f64>> = (0..agg.copies()).map(|c| agg.gram(c)).collect();
        let noise = state.noise.clone();
        let common_job = |(c, comp): (usize, &mut ComponentPosterior)| -> Result<()> {
            let alpha = noise[c].mean();
            let gram = grams[c];
            self.moments_step(comp, gram, &hs[c], alpha, temp, true)?;
            self.support_step(comp, gram, &hs[c], alpha, temp)?;
            self.mixing_step(comp, true);
            Ok(())
        };
        if parallel {
            state.common.par_iter_mut().enumerate().try_for_each(common_job)?;
        } else {
            state.common.iter_mut().enumerate().try_for_each(common_job)?;
        }

        let copies = state.common.len();
        let commons = &state.common;
        let innov_job = |(k, comp): (usize, &mut ComponentPosterior)| -> Result<()> {
            let c = if copies == 1 { 0 } else { k };
            self.innovation_update(k, comp, &commons[c], noise[c].mean(), temp)
        };
        if parallel {
            state.innovations.par_iter_mut().enumerate().try_for_each(innov_job)?;
        } else {
            state.innovations.iter_mut().enumerate().try_for_each(innov_job)?;
        }

        for comp in state.common.iter_mut() {
            self.variance_step(comp, true)?;
        }
        for comp in state.innovations.iter_mut() {
            self.variance_step(comp, false)?;
        }

        let residuals: Vec<f64> = (0..self.problem.k())
            .map(|k| {
                let c = state.copy_of(k);
                self.expected_sq_residual(k, &state.common[c], &state.innovations[k])
            })
            .collect();
        let totals = agg.scalars(residuals)?;
        state.noise = totals
            .iter()
            .map(|&t| self.noise_from_total(t))
            .collect::<Result<Vec<_>>>()?;
        Ok(())
    }

    pub fn elbo(&self, state: &PosteriorState) -> Result<f64> {
        elbo::collapsed(self, state)
    }

    pub fn run(
        &self,
        agg: &mut dyn Aggregator,
        truth: Option<&[Vec<f64>]>,
    ) -> Result<VbOutput> {
        if let Some(t) = truth {
            if t.len() != self.problem.k() || t.iter().any(|v| v.len() != self.problem.n()) {
                return Err(mismatch("ground truth must hold K length-N signals"));
            }
        }
        let mut state = self.initial_state(agg)?;
        let mut trace = Trace::default();
        let mut prev: Vec<Vec<f64>> = (0..self.problem.k()).map(|k| state.theta_hat(k)).collect();
        let mut converged = false;
        let mut iterations = 0;
        for iter in 0..self.cfg.max_iter {
            self.sweep(&mut state, agg, iter)?;
            iterations = iter + 1;
            let current: Vec<Vec<f64>> = (0..self.problem.k()).map(|k| state.theta_hat(k)).collect();
            let rel_change = current
                .iter()
                .zip(&prev)
                .map(|(a, b)| relative_change(a, b))
                .fold(0.0, f64::max);
            let elbo = if state.common.len() == 1 {
                Some(self.elbo(&state)?)
            } else {
                None
            };
            let nmse_v = match truth {
                Some(t) => Some(nmse(&current, t)?),
                None => None,
            };
            trace.rows.push(TraceRow {
                iteration: iterations,
                elbo,
                residuals: (0..self.problem.k())
                    .map(|k| self.theta_residual(k, &current[k]))
                    .collect(),
                nmse: nmse_v,
                rel_change,
                message_bytes: agg.take_bytes(),
            });
            prev = current;
            // annealing must finish cooling before a fixed point counts
            if rel_change < self.cfg.rel_tol && self.cfg.temperature(iter).is_none() {
                converged = true;
                break;
            }
        }
        Ok(VbOutput {
            theta_hat: prev,
            state,
            trace,
            iterations,
            converged,
        })
    }
}

fn relative_change(new: &[f64], old: &[f64]) -> f64 {
    let diff: f64 = new.iter().zip(old).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let base: f64 = old.iter().map(|v| v * v).sum::<f64>().sqrt();
    if base == 0.0 {
        if diff == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        diff / base
    }
}

/// `tr(G E[u uᵀ])` for `u = z ∘ w` of one component.
fn quad_term(gram: &DMatrix<f64>, comp: &ComponentPosterior, mean_field: bool) -> f64 {
    let (w, extra) = comp.weights(mean_field);
    let n = w.len();
    let idx: Vec<usize> = (0..n).filter(|&i| w[i] != 0.0).collect();
    let mut acc = 0.0;
    for &j in &idx {
        let gcol = gram.column(j);
        let scol = comp.sigma.column(j);
        let mut col = 0.0;
        for &i in &idx {
            col += gcol[i] * w[i] * (comp.mu[i] * comp.mu[j] + scol[i]);
        }
        acc += w[j] * col;
    }
    if let Some(e) = extra {
        for i in 0..n {
            acc += gram[(i, i)] * e[i] * (comp.mu[i] * comp.mu[i] + comp.sigma[(i, i)]);
        }
    }
    acc
}

fn centralized_alpha(state: &PosteriorState) -> f64 {
    state.noise[0].mean()
}

fn exact_common_rhs(engine: &Engine<'_>, state: &PosteriorState) -> DVector<f64> {
    let locals: Vec<DVector<f64>> = (0..engine.problem.k())
        .map(|k| engine.local_common_rhs(k, &state.innovations[k]))
        .collect();
    sum_vectors(&locals)
}

/// Initial centralized state: zero means, identity covariances, prior-mean
/// marginals, matching variance posteriors and a data-driven noise posterior.
pub fn initial_state(problem: &Problem, hp: &HyperParams, cfg: &VbConfig) -> Result<PosteriorState> {
    let engine = Engine::new(problem, hp, cfg)?;
    engine.initial_state(&mut ExactSums::new(problem))
}

/// Gaussian factor of the common component given everything else.
pub fn update_common(problem: &Problem, state: &mut PosteriorState, hp: &HyperParams, cfg: &VbConfig) -> Result<()> {
    let engine = Engine::new(problem, hp, cfg)?;
    let h = exact_common_rhs(&engine, state);
    let alpha = centralized_alpha(state);
    let gram = problem.gram_sum();
    engine.moments_step(&mut state.common[0], &gram, &h, alpha, None, true)
}

/// Gaussian factor of node `k`'s innovation given everything else.
pub fn update_innovation(
    problem: &Problem,
    state: &mut PosteriorState,
    k: usize,
    hp: &HyperParams,
    cfg: &VbConfig,
) -> Result<()> {
    if k >= problem.k() {
        return Err(mismatch(format!("node {k} out of range")));
    }
    let engine = Engine::new(problem, hp, cfg)?;
    let nd = &problem.nodes[k];
    let c = state.copy_of(k);
    let h = &nd.dty - &nd.gram * state.common[c].first_moment(cfg.mean_field());
    let alpha = state.noise[c].mean();
    engine.moments_step(&mut state.innovations[k], &nd.gram, &h, alpha, None, true)
}

/// Support marginals of one component.
pub fn update_support(
    problem: &Problem,
    state: &mut PosteriorState,
    target: Target,
    hp: &HyperParams,
    cfg: &VbConfig,
) -> Result<()> {
    let engine = Engine::new(problem, hp, cfg)?;
    let alpha = centralized_alpha(state);
    match target {
        Target::Common => {
            let h = exact_common_rhs(&engine, state);
            let gram = problem.gram_sum();
            engine.support_step(&mut state.common[0], &gram, &h, alpha, None)
        }
        Target::Node(k) => {
            let nd = &problem.nodes[k];
            let h = &nd.dty - &nd.gram * state.common[0].first_moment(cfg.mean_field());
            engine.support_step(&mut state.innovations[k], &nd.gram, &h, alpha, None)
        }
    }
}

/// Per-scale variance posteriors of one component; refreshes `<1/lambda>`.
pub fn update_variances(
    problem: &Problem,
    state: &mut PosteriorState,
    target: Target,
    hp: &HyperParams,
    cfg: &VbConfig,
) -> Result<Vec<ScalePosterior>> {
    let engine = Engine::new(problem, hp, cfg)?;
    let comp = state.component_mut(target);
    engine.variance_step(comp, target == Target::Common)?;
    Ok(comp.scales.clone())
}

/// Noise precision posterior `Gamma(c', d')`.
pub fn update_noise(problem: &Problem, state: &mut PosteriorState, hp: &HyperParams, cfg: &VbConfig) -> Result<GammaParams> {
    let engine = Engine::new(problem, hp, cfg)?;
    let locals: Vec<f64> = (0..problem.k())
        .map(|k| engine.expected_sq_residual(k, &state.common[state.copy_of(k)], &state.innovations[k]))
        .collect();
    let g = engine.noise_from_total(sum_scalars(&locals))?;
    state.noise = vec![g; state.noise.len()];
    Ok(g)
}

/// Beta posterior tables of one component.
pub fn update_mixing(
    problem: &Problem,
    state: &mut PosteriorState,
    target: Target,
    hp: &HyperParams,
    cfg: &VbConfig,
) -> Result<MixingTable> {
    let engine = Engine::new(problem, hp, cfg)?;
    let comp = state.component_mut(target);
    engine.mixing_step(comp, target == Target::Common);
    Ok(comp.mixing.clone())
}

/// Collapsed evidence lower bound of a centralized state (see module docs of `elbo`).
pub fn evidence_lower_bound(problem: &Problem, state: &PosteriorState, hp: &HyperParams, cfg: &VbConfig) -> Result<f64> {
    Engine::new(problem, hp, cfg)?.elbo(state)
}

/// Centralized inference; `truth` (per-node coefficient vectors) only feeds the trace.
pub fn run_centralized(
    ensemble: &SensingEnsemble,
    layout: &PyramidLayout,
    hp: &HyperParams,
    cfg: &VbConfig,
    truth: Option<&[Vec<f64>]>,
) -> Result<VbOutput> {
    let problem = Problem::new(ensemble, layout)?;
    let engine = Engine::new(&problem, hp, cfg)?;
    engine.run(&mut ExactSums::new(&problem), truth)
}

/// Context counts of a mixing posterior minus its prior, per scale.
pub fn mixing_counts(posterior: &MixingTable, prior: &MixingTable) -> Vec<f64> {
    posterior
        .scales
        .iter()
        .zip(&prior.scales)
        .map(|(p, q)| match (p, q) {
            (ScaleMixing::Root(a), ScaleMixing::Root(b)) => a.e + a.f - b.e - b.f,
            (ScaleMixing::Context(a), ScaleMixing::Context(b)) => {
                (0..4).map(|c| a[c].e + a[c].f - b[c].e - b[c].f).sum()
            }
            _ => f64::NAN,
        })
        .collect()
}
