//! Fusion-center-free inference over a simulated network.
//!
//! Nodes agree on the three network-wide sums the updates need (the summed
//! Gram matrix, the summed common-update target and the summed squared
//! residual) by ADMM average consensus with their graph neighbours. Only the
//! consensus iterates travel between nodes.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::distributions::GammaParams;
use crate::error::{mismatch, Error, Result};
use crate::jsm::{HyperParams, SensingEnsemble};
use crate::vb::{
    solve_moments, sum_matrices, sum_scalars, sum_vectors, Aggregator, Engine, Gating, Moments,
    Problem, VbConfig, VbOutput,
};
use crate::wavelet::PyramidLayout;

/// Undirected simple graph on nodes `0..k`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    neighbors: Vec<Vec<usize>>,
}

fn topo_err(msg: impl Into<String>) -> Error {
    Error::Topology(msg.into())
}

impl Topology {
    pub fn from_edges(k: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if k == 0 {
            return Err(topo_err("a topology needs at least one node"));
        }
        let mut sets = vec![BTreeSet::new(); k];
        for &(a, b) in edges {
            if a >= k || b >= k {
                return Err(topo_err(format!("edge ({a}, {b}) out of range for {k} nodes")));
            }
            if a == b {
                return Err(topo_err(format!("self loop at node {a}")));
            }
            sets[a].insert(b);
            sets[b].insert(a);
        }
        Ok(Topology {
            neighbors: sets.into_iter().map(|s| s.into_iter().collect()).collect(),
        })
    }

    pub fn complete(k: usize) -> Result<Self> {
        let edges: Vec<_> = (0..k)
            .flat_map(|a| (a + 1..k).map(move |b| (a, b)))
            .collect();
        Self::from_edges(k, &edges)
    }

    pub fn k(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, node: usize) -> &[usize] {
        &self.neighbors[node]
    }

    pub fn degree(&self, node: usize) -> usize {
        self.neighbors[node].len()
    }

    /// Edges `(a, b)` with `a < b`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, nb) in self.neighbors.iter().enumerate() {
            out.extend(nb.iter().filter(|&&b| b > a).map(|&b| (a, b)));
        }
        out
    }

    pub fn is_complete(&self) -> bool {
        self.neighbors.iter().all(|nb| nb.len() + 1 == self.k())
    }

    /// Connectivity of the graph with the `removed` nodes deleted.
    pub fn is_connected_without(&self, removed: &[bool]) -> bool {
        let Some(start) = (0..self.k()).find(|&i| !removed[i]) else {
            return true;
        };
        let mut seen = removed.to_vec();
        seen[start] = true;
        let mut stack = vec![start];
        while let Some(v) = stack.pop() {
            for &u in &self.neighbors[v] {
                if !seen[u] {
                    seen[u] = true;
                    stack.push(u);
                }
            }
        }
        seen.iter().all(|&s| s)
    }

    pub fn is_connected(&self) -> bool {
        self.is_connected_without(&vec![false; self.k()])
    }

    /// Text form: a `nodes K` line then one `a b` pair per line.
    pub fn to_edge_list(&self) -> String {
        let mut out = format!("nodes {}\n", self.k());
        for (a, b) in self.edges() {
            let _ = writeln!(out, "{a} {b}");
        }
        out
    }

    /// Parses [`Topology::to_edge_list`] output; `#` starts a comment line.
    pub fn from_edge_list(text: &str) -> Result<Self> {
        let mut k = None;
        let mut edges = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parse = |s: &str| {
                s.parse::<usize>().map_err(|_| Error::Parse {
                    line: line_no,
                    message: format!("expected a node index, got {s:?}"),
                })
            };
            let fields: Vec<&str> = line.split_whitespace().collect();
            match (k, fields.as_slice()) {
                (None, ["nodes", n]) => {
                    let n = parse(n)?;
                    if n == 0 || n > crate::jsm::MAX_TEXT_DIM {
                        return Err(Error::Parse {
                            line: line_no,
                            message: format!("node count {n} out of range"),
                        });
                    }
                    k = Some(n);
                }
                (None, _) => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: "edge list must start with `nodes K`".into(),
                    })
                }
                (Some(_), [a, b]) => edges.push((parse(a)?, parse(b)?)),
                (Some(_), _) => {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("expected `a b`, got {line:?}"),
                    })
                }
            }
        }
        let k = k.ok_or(Error::Parse {
            line: 0,
            message: "empty edge list".into(),
        })?;
        Self::from_edges(k, &edges)
    }
}

/// Harary graph `H_{P,K}`: the sparsest `P`-connected graph on `K` nodes.
/// `P = 1` yields the path.
pub fn harary_graph(k: usize, p: usize) -> Result<Topology> {
    if p == 0 || p >= k {
        return Err(topo_err(format!("Harary graph needs 1 <= P < K, got K = {k}, P = {p}")));
    }
    let mut edges = Vec::new();
    if p == 1 {
        edges.extend((1..k).map(|i| (i - 1, i)));
        return Topology::from_edges(k, &edges);
    }
    let r = p / 2;
    for i in 0..k {
        for d in 1..=r {
            edges.push((i, (i + d) % k));
        }
    }
    if p % 2 == 1 {
        if k % 2 == 0 {
            edges.extend((0..k / 2).map(|i| (i, i + k / 2)));
        } else {
            edges.extend((0..=(k - 1) / 2).map(|i| (i, (i + (k + 1) / 2) % k)));
        }
    }
    Topology::from_edges(k, &edges)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmmConfig {
    pub rho: f64,
    /// Halt once neighbour disagreement and the per-round change are both below this.
    pub tol: f64,
    pub max_rounds: usize,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            rho: 1.0,
            tol: 1e-6,
            max_rounds: 50,
        }
    }
}

impl AdmmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(crate::error::domain(format!("rho must be > 0, got {}", self.rho)));
        }
        if !(self.tol >= 0.0) || self.max_rounds == 0 {
            return Err(crate::error::domain("ADMM needs tol >= 0 and max_rounds >= 1"));
        }
        Ok(())
    }
}

/// What a node broadcasts to its neighbours each round: its current iterate
/// and nothing else.
#[derive(Clone, Debug, PartialEq)]
pub struct RoundMessage {
    pub from: usize,
    pub values: Vec<f64>,
}

impl RoundMessage {
    pub fn bytes(&self) -> u64 {
        (self.values.len() * std::mem::size_of::<f64>()) as u64
    }
}

/// Per-node primal iterates, duals and fixed local targets of one consensus
/// problem. Matrices are carried flattened (column-major).
#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusState {
    pub x: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    targets: Vec<Vec<f64>>,
}

impl ConsensusState {
    /// `X^k = target_k`, `B^k = 0`.
    pub fn new(targets: Vec<Vec<f64>>) -> Result<Self> {
        let len = targets.first().map(Vec::len).ok_or_else(|| mismatch("no targets"))?;
        if targets.iter().any(|t| t.len() != len) {
            return Err(mismatch("consensus targets differ in length"));
        }
        Ok(ConsensusState {
            x: targets.clone(),
            b: vec![vec![0.0; len]; targets.len()],
            targets,
        })
    }

    pub fn targets(&self) -> &[Vec<f64>] {
        &self.targets
    }

    /// `max_k max_{j in N_k} ||X^k - X^j|| / (||X^k|| + eps)`.
    pub fn disagreement(&self, topology: &Topology) -> f64 {
        const EPS: f64 = 1e-12;
        let mut worst = 0.0f64;
        for k in 0..self.x.len() {
            let nk = norm(&self.x[k]);
            for &j in topology.neighbors(k) {
                let d: f64 = self.x[k]
                    .iter()
                    .zip(&self.x[j])
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                worst = worst.max(d / (nk + EPS));
            }
        }
        worst
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

fn node_update(
    k: usize,
    x: &mut [f64],
    b: &mut [f64],
    target: &[f64],
    inbox: &[&RoundMessage],
    rho: f64,
) {
    let deg = inbox.len() as f64;
    let denom = 2.0 + 2.0 * rho * deg;
    for i in 0..x.len() {
        let own = x[i];
        let mut diff = 0.0;
        let mut sum = 0.0;
        for m in inbox {
            debug_assert_ne!(m.from, k);
            diff += own - m.values[i];
            sum += own + m.values[i];
        }
        b[i] += rho * diff;
        x[i] = (2.0 * target[i] - b[i] + rho * sum) / denom;
    }
}

/// One synchronous round. Every node reads only the messages of the
/// previous round. Returns the bytes sent.
pub fn admm_step(
    state: &mut ConsensusState,
    topology: &Topology,
    rho: f64,
    parallel: bool,
) -> Result<u64> {
    if state.x.len() != topology.k() {
        return Err(mismatch(format!(
            "consensus state has {} nodes, topology {}",
            state.x.len(),
            topology.k()
        )));
    }
    let messages: Vec<RoundMessage> = state
        .x
        .iter()
        .enumerate()
        .map(|(from, v)| RoundMessage {
            from,
            values: v.clone(),
        })
        .collect();
    let bytes: u64 = (0..topology.k())
        .map(|k| topology.degree(k) as u64 * messages[k].bytes())
        .sum();
    let targets = &state.targets;
    let job = |(k, (x, b)): (usize, (&mut Vec<f64>, &mut Vec<f64>))| {
        let inbox: Vec<&RoundMessage> = topology.neighbors(k).iter().map(|&j| &messages[j]).collect();
        node_update(k, x, b, &targets[k], &inbox, rho);
    };
    if parallel {
        state
            .x
            .par_iter_mut()
            .zip(state.b.par_iter_mut())
            .enumerate()
            .for_each(job);
    } else {
        state.x.iter_mut().zip(state.b.iter_mut()).enumerate().for_each(job);
    }
    Ok(bytes)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusOutcome {
    /// Each node's final estimate of the average.
    pub values: Vec<Vec<f64>>,
    pub rounds: usize,
    pub bytes: u64,
    pub disagreement: f64,
}

/// Runs rounds until both the neighbour disagreement and the largest
/// relative per-round change fall below `cfg.tol`, or `cfg.max_rounds`.
pub fn run_consensus(
    targets: Vec<Vec<f64>>,
    topology: &Topology,
    cfg: &AdmmConfig,
    parallel: bool,
) -> Result<ConsensusOutcome> {
    cfg.validate()?;
    let mut state = ConsensusState::new(targets)?;
    let mut bytes = 0;
    let mut rounds = 0;
    let mut disagreement = state.disagreement(topology);
    while rounds < cfg.max_rounds {
        let prev = state.x.clone();
        bytes += admm_step(&mut state, topology, cfg.rho, parallel)?;
        rounds += 1;
        disagreement = state.disagreement(topology);
        let change = state
            .x
            .iter()
            .zip(&prev)
            .map(|(a, b)| {
                let d: f64 = a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>().sqrt();
                d / (norm(a) + 1e-12)
            })
            .fold(0.0, f64::max);
        if disagreement <= cfg.tol && change <= cfg.tol {
            break;
        }
    }
    Ok(ConsensusOutcome {
        values: state.x,
        rounds,
        bytes,
        disagreement,
    })
}

/// Rebuilds the common factor and the noise rate at one node from its
/// consensus averages: `A` (Gram), `g` (update target) and `r` (residual).
#[derive(Clone, Debug)]
pub struct Substitution {
    pub moments: Moments,
    pub noise_rate: f64,
}

/// Sums are recovered as `K` times the agreed averages.
#[allow(clippy::too_many_arguments)]
pub fn consensus_substitute(
    gram_avg: &DMatrix<f64>,
    target_avg: &DVector<f64>,
    residual_avg: f64,
    gating: Gating<'_>,
    alpha: f64,
    gamma: &[f64],
    k: usize,
    noise_prior: &GammaParams,
) -> Result<Substitution> {
    let kf = k as f64;
    let moments = solve_moments(&(gram_avg * kf), &(target_avg * kf), gamma, alpha, gating)?;
    Ok(Substitution {
        moments,
        noise_rate: noise_prior.rate + 0.5 * kf * residual_avg,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecentralizedConfig {
    pub admm: AdmmConfig,
    /// Replace consensus by exact sums. Only allowed on complete graphs,
    /// where every node could compute them itself; this is a test shortcut,
    /// not a decentralized mode.
    pub exact_aggregate: bool,
}

impl Default for DecentralizedConfig {
    fn default() -> Self {
        DecentralizedConfig {
            admm: AdmmConfig::default(),
            exact_aggregate: false,
        }
    }
}

struct ConsensusSums<'a> {
    topology: &'a Topology,
    cfg: &'a DecentralizedConfig,
    parallel: bool,
    grams: Vec<DMatrix<f64>>,
    bytes: u64,
}

impl<'a> ConsensusSums<'a> {
    fn new(
        problem: &Problem,
        topology: &'a Topology,
        cfg: &'a DecentralizedConfig,
        parallel: bool,
    ) -> Result<Self> {
        let mut agg = ConsensusSums {
            topology,
            cfg,
            parallel,
            grams: Vec::new(),
            bytes: 0,
        };
        let n = problem.n();
        let k = problem.k();
        agg.grams = if cfg.exact_aggregate {
            vec![sum_matrices(problem.nodes.iter().map(|nd| &nd.gram)); k]
        } else {
            let locals = problem.nodes.iter().map(|nd| nd.gram.as_slice().to_vec()).collect();
            agg.agree(locals)?
                .into_iter()
                .map(|v| {
                    let mut m = DMatrix::from_vec(n, n, v);
                    // every node symmetrizes its own copy
                    let t = m.transpose();
                    m += t;
                    m *= 0.5;
                    m
                })
                .collect()
        };
        Ok(agg)
    }

    /// `K` times each node's consensus average.
    fn agree(&mut self, locals: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
        let k = locals.len() as f64;
        let out = run_consensus(locals, self.topology, &self.cfg.admm, self.parallel)?;
        self.bytes += out.bytes;
        Ok(out
            .values
            .into_iter()
            .map(|v| v.into_iter().map(|x| x * k).collect())
            .collect())
    }
}

impl Aggregator for ConsensusSums<'_> {
    fn copies(&self) -> usize {
        self.topology.k()
    }

    fn gram(&self, copy: usize) -> &DMatrix<f64> {
        &self.grams[copy]
    }

    fn vectors(&mut self, locals: Vec<DVector<f64>>) -> Result<Vec<DVector<f64>>> {
        if self.cfg.exact_aggregate {
            return Ok(vec![sum_vectors(&locals); locals.len()]);
        }
        let flat = locals.iter().map(|v| v.as_slice().to_vec()).collect();
        Ok(self.agree(flat)?.into_iter().map(DVector::from_vec).collect())
    }

    fn scalars(&mut self, locals: Vec<f64>) -> Result<Vec<f64>> {
        if self.cfg.exact_aggregate {
            return Ok(vec![sum_scalars(&locals); locals.len()]);
        }
        let flat = locals.iter().map(|&v| vec![v]).collect();
        Ok(self.agree(flat)?.into_iter().map(|v| v[0]).collect())
    }

    fn take_bytes(&mut self) -> u64 {
        std::mem::take(&mut self.bytes)
    }
}

/// Decentralized inference. Every node ends with its own `theta_hat_k` and
/// its own copy of the common posterior (`output.state.common[k]`).
pub fn run_decentralized(
    ensemble: &SensingEnsemble,
    layout: &PyramidLayout,
    topology: &Topology,
    hp: &HyperParams,
    cfg: &VbConfig,
    dcfg: &DecentralizedConfig,
    truth: Option<&[Vec<f64>]>,
) -> Result<VbOutput> {
    if topology.k() != ensemble.k() {
        return Err(topo_err(format!(
            "topology has {} nodes, ensemble {}",
            topology.k(),
            ensemble.k()
        )));
    }
    if !topology.is_connected() {
        return Err(topo_err("topology is disconnected"));
    }
    if dcfg.exact_aggregate && !topology.is_complete() {
        return Err(topo_err("exact aggregation requires a complete graph"));
    }
    dcfg.admm.validate()?;
    let problem = Problem::new(ensemble, layout)?;
    let engine = Engine::new(&problem, hp, cfg)?;
    let mut agg = ConsensusSums::new(&problem, topology, dcfg, cfg.parallel)?;
    engine.run(&mut agg, truth)
}
