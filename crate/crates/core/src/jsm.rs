//! JSM-1 signal model: every node observes `theta_k = w_c*z_c + w_k*z_k`
//! through its own Gaussian sensing matrix, all in wavelet-coefficient space.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::distributions::{BetaParams, GammaParams};
use crate::error::{mismatch, Error, Result};
use crate::wavelet::{build_tree_index, PyramidLayout, TreeIndex};

/// Upper bound accepted by the text parsers for any single dimension.
pub const MAX_TEXT_DIM: usize = 1 << 16;

#[derive(Clone, Debug, PartialEq)]
pub struct NodeData {
    /// `M x N` sensing matrix acting on wavelet coefficients.
    pub d: DMatrix<f64>,
    pub y: DVector<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SensingEnsemble {
    pub n: usize,
    pub nodes: Vec<NodeData>,
    /// Precision used to generate the measurements; `inf` means noiseless.
    pub noise_precision: f64,
}

impl SensingEnsemble {
    pub fn new(nodes: Vec<NodeData>, noise_precision: f64) -> Result<Self> {
        let n = nodes
            .first()
            .map(|nd| nd.d.ncols())
            .ok_or_else(|| mismatch("ensemble needs at least one node"))?;
        for (k, nd) in nodes.iter().enumerate() {
            if nd.d.ncols() != n {
                return Err(mismatch(format!(
                    "node {k} has {} columns, expected {n}",
                    nd.d.ncols()
                )));
            }
            if nd.d.nrows() != nd.y.len() {
                return Err(mismatch(format!(
                    "node {k}: D has {} rows but y has {} entries",
                    nd.d.nrows(),
                    nd.y.len()
                )));
            }
            if nd.d.nrows() == 0 || nd.d.nrows() > n {
                return Err(mismatch(format!(
                    "node {k}: M = {} must be in 1..={n}",
                    nd.d.nrows()
                )));
            }
        }
        if !(noise_precision > 0.0) {
            return Err(crate::error::domain(format!(
                "noise precision must be > 0, got {noise_precision}"
            )));
        }
        Ok(SensingEnsemble {
            n,
            nodes,
            noise_precision,
        })
    }

    pub fn k(&self) -> usize {
        self.nodes.len()
    }

    pub fn total_measurements(&self) -> usize {
        self.nodes.iter().map(|nd| nd.y.len()).sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str("dcs-ensemble 1\n");
        let _ = writeln!(out, "n,{}", self.n);
        let _ = writeln!(out, "nodes,{}", self.nodes.len());
        let _ = writeln!(out, "noise_precision,{}", fmt_f64(self.noise_precision));
        for (k, nd) in self.nodes.iter().enumerate() {
            let _ = writeln!(out, "node,{k},{}", nd.d.nrows());
            for r in 0..nd.d.nrows() {
                push_csv(&mut out, nd.d.row(r).iter().copied());
            }
            out.push_str("y");
            for v in nd.y.iter() {
                let _ = write!(out, ",{}", fmt_f64(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        lines.expect_literal("dcs-ensemble 1")?;
        let n = lines.keyed_usize("n")?;
        let k = lines.keyed_usize("nodes")?;
        let noise_precision = lines.keyed_f64("noise_precision")?;
        if n == 0 || k == 0 {
            return Err(lines.err("n and nodes must be positive"));
        }
        let mut nodes = Vec::new();
        for expected in 0..k {
            let fields = lines.fields("node")?;
            let (line_no, fields) = fields;
            if fields.len() != 2 {
                return Err(Error::Parse {
                    line: line_no,
                    message: "node line needs index and row count".into(),
                });
            }
            let idx = parse_usize(fields[0], line_no)?;
            let m = parse_usize(fields[1], line_no)?;
            if idx != expected {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("expected node {expected}, found {idx}"),
                });
            }
            if m == 0 || m > n {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("row count {m} must be in 1..={n}"),
                });
            }
            let mut data = Vec::new();
            for _ in 0..m {
                let (ln, row) = lines.next_nonempty()?;
                let row = parse_floats(row.split(','), ln)?;
                if row.len() != n {
                    return Err(Error::Parse {
                        line: ln,
                        message: format!("row has {} values, expected {n}", row.len()),
                    });
                }
                data.extend(row);
            }
            let (ln, yf) = lines.fields("y")?;
            let y = parse_floats(yf.into_iter(), ln)?;
            if y.len() != m {
                return Err(Error::Parse {
                    line: ln,
                    message: format!("y has {} values, expected {m}", y.len()),
                });
            }
            nodes.push(NodeData {
                d: DMatrix::from_row_slice(m, n, &data),
                y: DVector::from_vec(y),
            });
        }
        lines.expect_end()?;
        SensingEnsemble::new(nodes, noise_precision)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Component {
    pub w: Vec<f64>,
    pub z: Vec<bool>,
}

impl Component {
    pub fn zeros(n: usize) -> Self {
        Component {
            w: vec![0.0; n],
            z: vec![false; n],
        }
    }

    pub fn support_size(&self) -> usize {
        self.z.iter().filter(|&&b| b).count()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JsmState {
    pub common: Component,
    pub innovations: Vec<Component>,
}

impl JsmState {
    pub fn n(&self) -> usize {
        self.common.w.len()
    }

    pub fn k(&self) -> usize {
        self.innovations.len()
    }

    pub fn theta(&self, k: usize) -> Vec<f64> {
        let inn = &self.innovations[k];
        (0..self.n())
            .map(|i| {
                let c = if self.common.z[i] { self.common.w[i] } else { 0.0 };
                let v = if inn.z[i] { inn.w[i] } else { 0.0 };
                c + v
            })
            .collect()
    }

    pub fn thetas(&self) -> Vec<Vec<f64>> {
        (0..self.k()).map(|k| self.theta(k)).collect()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("dcs-jsm-state 1\n");
        let _ = writeln!(out, "n,{}", self.n());
        let _ = writeln!(out, "nodes,{}", self.k());
        push_keyed(&mut out, "common_w", self.common.w.iter().copied());
        push_support(&mut out, "common_z", &self.common.z);
        for (k, c) in self.innovations.iter().enumerate() {
            let _ = writeln!(out, "node,{k}");
            push_keyed(&mut out, "w", c.w.iter().copied());
            push_support(&mut out, "z", &c.z);
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = Lines::new(text);
        lines.expect_literal("dcs-jsm-state 1")?;
        let n = lines.keyed_usize("n")?;
        let k = lines.keyed_usize("nodes")?;
        if n == 0 || k == 0 {
            return Err(lines.err("n and nodes must be positive"));
        }
        let read_component = |lines: &mut Lines, wkey: &str, zkey: &str| -> Result<Component> {
            let (ln, wf) = lines.fields(wkey)?;
            let w = parse_floats(wf.into_iter(), ln)?;
            let (lz, zf) = lines.fields(zkey)?;
            let z = zf
                .into_iter()
                .map(|s| match s.trim() {
                    "0" => Ok(false),
                    "1" => Ok(true),
                    other => Err(Error::Parse {
                        line: lz,
                        message: format!("support entries must be 0 or 1, got '{other}'"),
                    }),
                })
                .collect::<Result<Vec<_>>>()?;
            if w.len() != n || z.len() != n {
                return Err(Error::Parse {
                    line: lz,
                    message: format!("component needs {n} values"),
                });
            }
            Ok(Component { w, z })
        };
        let common = read_component(&mut lines, "common_w", "common_z")?;
        let mut innovations = Vec::new();
        for expected in 0..k {
            let (ln, f) = lines.fields("node")?;
            if f.len() != 1 || parse_usize(f[0], ln)? != expected {
                return Err(Error::Parse {
                    line: ln,
                    message: format!("expected node,{expected}"),
                });
            }
            innovations.push(read_component(&mut lines, "w", "z")?);
        }
        lines.expect_end()?;
        Ok(JsmState {
            common,
            innovations,
        })
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SlabPrior {
    #[default]
    Bkf,
    Gaussian,
}

/// Beta prior on the mixing weight of one scale.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ScaleMixing {
    /// One weight for the whole scale.
    Root(BetaParams),
    /// Indexed by `2 * parent + neighbour`.
    Context([BetaParams; 4]),
}

impl ScaleMixing {
    pub fn table(&self) -> [BetaParams; 4] {
        match *self {
            ScaleMixing::Root(b) => [b; 4],
            ScaleMixing::Context(t) => t,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MixingTable {
    pub scales: Vec<ScaleMixing>,
}

impl MixingTable {
    /// Roots `(0.9 M_s, 0.1 M_s)`, every other entry `(1, 1)`.
    pub fn defaults(layout: &PyramidLayout, structured: bool) -> Self {
        let counts = layout.scale_counts();
        let flat = BetaParams { e: 1.0, f: 1.0 };
        let scales = counts
            .iter()
            .enumerate()
            .map(|(s, &m)| {
                if s <= 1 {
                    let m = m as f64;
                    ScaleMixing::Root(BetaParams {
                        e: 0.9 * m,
                        f: 0.1 * m,
                    })
                } else if structured {
                    ScaleMixing::Context([flat; 4])
                } else {
                    ScaleMixing::Root(flat)
                }
            })
            .collect();
        MixingTable { scales }
    }

    /// Collapses context tables onto their `(0, 0)` entry.
    pub fn flattened(&self) -> Self {
        MixingTable {
            scales: self
                .scales
                .iter()
                .map(|m| match *m {
                    ScaleMixing::Root(b) => ScaleMixing::Root(b),
                    ScaleMixing::Context(t) => ScaleMixing::Root(t[0]),
                })
                .collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HyperParams {
    pub common_gamma: Vec<GammaParams>,
    pub innov_gamma: Vec<GammaParams>,
    pub noise: GammaParams,
    pub common_mixing: MixingTable,
    pub innov_mixing: MixingTable,
    pub threshold_fraction: f64,
    pub structured_prior: bool,
    pub slab_prior: SlabPrior,
}

impl HyperParams {
    pub fn defaults(layout: &PyramidLayout) -> Self {
        let scales = layout.num_scales();
        let lam = GammaParams {
            shape: 1.0,
            rate: 0.1,
        };
        HyperParams {
            common_gamma: vec![lam; scales],
            innov_gamma: vec![lam; scales],
            noise: GammaParams {
                shape: 1e-6,
                rate: 1e-6,
            },
            common_mixing: MixingTable::defaults(layout, true),
            innov_mixing: MixingTable::defaults(layout, true),
            threshold_fraction: 0.5,
            structured_prior: true,
            slab_prior: SlabPrior::Bkf,
        }
    }

    pub fn validate(&self, layout: &PyramidLayout) -> Result<()> {
        let scales = layout.num_scales();
        for (name, v) in [
            ("common_gamma", self.common_gamma.len()),
            ("innov_gamma", self.innov_gamma.len()),
            ("common_mixing", self.common_mixing.scales.len()),
            ("innov_mixing", self.innov_mixing.scales.len()),
        ] {
            if v != scales {
                return Err(mismatch(format!("{name} covers {v} scales, layout has {scales}")));
            }
        }
        for g in self
            .common_gamma
            .iter()
            .chain(&self.innov_gamma)
            .chain(std::iter::once(&self.noise))
        {
            GammaParams::new(g.shape, g.rate)?;
        }
        for table in [&self.common_mixing, &self.innov_mixing] {
            for (s, m) in table.scales.iter().enumerate() {
                if s <= 1 && matches!(m, ScaleMixing::Context(_)) {
                    return Err(crate::error::domain(format!(
                        "scale {s} is a root scale and takes a single Beta prior"
                    )));
                }
                for b in m.table() {
                    BetaParams::new(b.e, b.f)?;
                }
            }
        }
        if !(self.threshold_fraction >= 0.0 && self.threshold_fraction < 1.0) {
            return Err(crate::error::domain(format!(
                "threshold_fraction must be in [0, 1), got {}",
                self.threshold_fraction
            )));
        }
        Ok(())
    }

    /// Mixing tables as the inference engine sees them.
    pub fn effective_mixing(&self) -> (MixingTable, MixingTable) {
        if self.structured_prior {
            (self.common_mixing.clone(), self.innov_mixing.clone())
        } else {
            (self.common_mixing.flattened(), self.innov_mixing.flattened())
        }
    }
}

/// `M x N` matrix with i.i.d. `Normal(0, 1/M)` entries.
pub fn gen_measurement_matrix<R: Rng + ?Sized>(m: usize, n: usize, rng: &mut R) -> Result<DMatrix<f64>> {
    if m == 0 || m > n {
        return Err(mismatch(format!("need 1 <= M <= N, got M = {m}, N = {n}")));
    }
    let normal = Normal::new(0.0, (1.0 / m as f64).sqrt()).expect("positive sd");
    Ok(DMatrix::from_fn(m, n, |_, _| normal.sample(rng)))
}

/// `y = D theta + n` with `n ~ Normal(0, I / noise_precision)`.
pub fn measure<R: Rng + ?Sized>(
    theta: &[f64],
    d: &DMatrix<f64>,
    noise_precision: f64,
    rng: &mut R,
) -> Result<DVector<f64>> {
    if theta.len() != d.ncols() {
        return Err(mismatch(format!(
            "theta has {} entries, D has {} columns",
            theta.len(),
            d.ncols()
        )));
    }
    if !(noise_precision > 0.0) {
        return Err(crate::error::domain("noise precision must be > 0"));
    }
    let mut y = d * DVector::from_column_slice(theta);
    if noise_precision.is_finite() {
        let normal = Normal::new(0.0, noise_precision.recip().sqrt()).expect("positive sd");
        for v in y.iter_mut() {
            *v += normal.sample(rng);
        }
    }
    Ok(y)
}

/// Noise precision giving the requested average measurement SNR in dB.
pub fn noise_precision_for_snr(clean: &[DVector<f64>], snr_db: f64) -> f64 {
    let m: usize = clean.iter().map(|v| v.len()).sum();
    let power: f64 = clean.iter().map(|v| v.norm_squared()).sum();
    m as f64 / (power * 10f64.powf(-snr_db / 10.0))
}

/// Draws an exact-count support. Structured supports grow down the tree:
/// root positions and children of active positions have weight 1, the rest
/// a small leak weight.
pub fn draw_support<R: Rng + ?Sized>(
    tree: &TreeIndex,
    count: usize,
    structured: bool,
    rng: &mut R,
) -> Vec<bool> {
    const LEAK: f64 = 0.02;
    let n = tree.len();
    let count = count.min(n);
    let mut z = vec![false; n];
    let mut weight: Vec<f64> = (0..n)
        .map(|i| if !structured || tree.is_root(i) { 1.0 } else { LEAK })
        .collect();
    for _ in 0..count {
        let total: f64 = weight.iter().sum();
        let mut u = rng.random::<f64>() * total;
        let mut pick = None;
        for (i, &w) in weight.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            pick = Some(i);
            if u < w {
                break;
            }
            u -= w;
        }
        let i = pick.expect("support count bounded by n");
        z[i] = true;
        weight[i] = 0.0;
        if structured {
            for &c in tree.children(i) {
                if !z[c] {
                    weight[c] = 1.0;
                }
            }
        }
    }
    z
}

/// Synthetic JSM-1 draw. Active slab values use a per-coefficient variance
/// `tau ~ Gamma(alpha_s, beta_s)`, `w ~ Normal(0, tau)`.
pub fn synth_jsm1<R: Rng + ?Sized>(
    layout: &PyramidLayout,
    k: usize,
    common_sparsity: f64,
    innov_sparsity: f64,
    hp: &HyperParams,
    rng: &mut R,
) -> Result<JsmState> {
    if k == 0 {
        return Err(mismatch("need at least one node"));
    }
    for (name, v) in [("common", common_sparsity), ("innovation", innov_sparsity)] {
        if !(0.0..1.0).contains(&v) {
            return Err(crate::error::domain(format!(
                "{name} sparsity must be in [0, 1), got {v}"
            )));
        }
    }
    hp.validate(layout)?;
    let tree = build_tree_index(layout);
    let scales = layout.scales();
    let n = layout.len();
    let component = |fraction: f64, gammas: &[GammaParams], rng: &mut R| {
        let z = draw_support(&tree, (fraction * n as f64).round() as usize, hp.structured_prior, rng);
        let w = (0..n)
            .map(|i| {
                if z[i] {
                    crate::distributions::sample_hierarchy(&gammas[scales[i]], rng)
                } else {
                    0.0
                }
            })
            .collect();
        Component { w, z }
    };
    let common = component(common_sparsity, &hp.common_gamma, rng);
    let innovations = (0..k)
        .map(|_| component(innov_sparsity, &hp.innov_gamma, rng))
        .collect();
    Ok(JsmState {
        common,
        innovations,
    })
}

/// Measures every node of `state` at `m` rows, noise set from `snr_db`
/// (`None` for noiseless).
pub fn synth_ensemble<R: Rng + ?Sized>(
    state: &JsmState,
    m: usize,
    snr_db: Option<f64>,
    rng: &mut R,
) -> Result<SensingEnsemble> {
    let n = state.n();
    let mut mats = Vec::with_capacity(state.k());
    let mut clean = Vec::with_capacity(state.k());
    for k in 0..state.k() {
        let d = gen_measurement_matrix(m, n, rng)?;
        clean.push(&d * DVector::from_vec(state.theta(k)));
        mats.push(d);
    }
    let precision = match snr_db {
        Some(snr) => noise_precision_for_snr(&clean, snr),
        None => f64::INFINITY,
    };
    let mut nodes = Vec::with_capacity(state.k());
    for (d, mut y) in mats.into_iter().zip(clean) {
        if precision.is_finite() {
            let normal = Normal::new(0.0, precision.recip().sqrt()).expect("positive sd");
            for v in y.iter_mut() {
                *v += normal.sample(rng);
            }
        }
        nodes.push(NodeData { d, y });
    }
    SensingEnsemble::new(nodes, precision)
}

/// `theta_k = mu_c * z_c + mu_k * z_k`.
pub fn reconstruct(mu_c: &[f64], z_c: &[bool], mu_k: &[f64], z_k: &[bool]) -> Result<Vec<f64>> {
    let n = mu_c.len();
    if z_c.len() != n || mu_k.len() != n || z_k.len() != n {
        return Err(mismatch("reconstruct needs four length-N inputs"));
    }
    Ok((0..n)
        .map(|i| {
            let c = if z_c[i] { mu_c[i] } else { 0.0 };
            let v = if z_k[i] { mu_k[i] } else { 0.0 };
            c + v
        })
        .collect())
}

fn fmt_f64(v: f64) -> String {
    if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

fn push_csv(out: &mut String, values: impl Iterator<Item = f64>) {
    let mut first = true;
    for v in values {
        if !first {
            out.push(',');
        }
        first = false;
        out.push_str(&fmt_f64(v));
    }
    out.push('\n');
}

fn push_keyed(out: &mut String, key: &str, values: impl Iterator<Item = f64>) {
    out.push_str(key);
    for v in values {
        out.push(',');
        out.push_str(&fmt_f64(v));
    }
    out.push('\n');
}

fn push_support(out: &mut String, key: &str, z: &[bool]) {
    out.push_str(key);
    for &b in z {
        out.push_str(if b { ",1" } else { ",0" });
    }
    out.push('\n');
}

pub(crate) fn parse_f64(s: &str, line: usize) -> Result<f64> {
    let s = s.trim();
    let v = match s {
        "inf" | "+inf" => f64::INFINITY,
        "-inf" => f64::NEG_INFINITY,
        _ => s.parse::<f64>().map_err(|_| Error::Parse {
            line,
            message: format!("bad number '{s}'"),
        })?,
    };
    if v.is_nan() {
        return Err(Error::Parse {
            line,
            message: "NaN is not accepted".into(),
        });
    }
    Ok(v)
}

fn parse_floats<'a>(items: impl Iterator<Item = &'a str>, line: usize) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for s in items {
        if out.len() >= MAX_TEXT_DIM {
            return Err(Error::Parse {
                line,
                message: format!("more than {MAX_TEXT_DIM} values"),
            });
        }
        let v = parse_f64(s, line)?;
        if !v.is_finite() {
            return Err(Error::Parse {
                line,
                message: "values must be finite".into(),
            });
        }
        out.push(v);
    }
    Ok(out)
}

fn parse_usize(s: &str, line: usize) -> Result<usize> {
    let v = s.trim().parse::<usize>().map_err(|_| Error::Parse {
        line,
        message: format!("bad integer '{}'", s.trim()),
    })?;
    if v > MAX_TEXT_DIM {
        return Err(Error::Parse {
            line,
            message: format!("{v} exceeds the limit {MAX_TEXT_DIM}"),
        });
    }
    Ok(v)
}

/// Line cursor skipping blank lines and `#` comments.
struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    fn new(text: &'a str) -> Self {
        Lines {
            inner: text.lines().enumerate(),
            last: 0,
        }
    }

    fn err(&self, message: &str) -> Error {
        Error::Parse {
            line: self.last,
            message: message.into(),
        }
    }

    fn next_nonempty(&mut self) -> Result<(usize, &'a str)> {
        for (i, l) in self.inner.by_ref() {
            self.last = i + 1;
            let t = l.trim();
            if !t.is_empty() && !t.starts_with('#') {
                return Ok((i + 1, t));
            }
        }
        Err(Error::Parse {
            line: self.last + 1,
            message: "unexpected end of input".into(),
        })
    }

    fn expect_literal(&mut self, lit: &str) -> Result<()> {
        let (ln, l) = self.next_nonempty()?;
        if l != lit {
            return Err(Error::Parse {
                line: ln,
                message: format!("expected '{lit}'"),
            });
        }
        Ok(())
    }

    fn fields(&mut self, key: &str) -> Result<(usize, Vec<&'a str>)> {
        let (ln, l) = self.next_nonempty()?;
        let mut parts = l.split(',');
        if parts.next().map(str::trim) != Some(key) {
            return Err(Error::Parse {
                line: ln,
                message: format!("expected '{key}' line"),
            });
        }
        Ok((ln, parts.collect()))
    }

    fn keyed_usize(&mut self, key: &str) -> Result<usize> {
        let (ln, f) = self.fields(key)?;
        if f.len() != 1 {
            return Err(Error::Parse {
                line: ln,
                message: format!("'{key}' takes one value"),
            });
        }
        parse_usize(f[0], ln)
    }

    fn keyed_f64(&mut self, key: &str) -> Result<f64> {
        let (ln, f) = self.fields(key)?;
        if f.len() != 1 {
            return Err(Error::Parse {
                line: ln,
                message: format!("'{key}' takes one value"),
            });
        }
        parse_f64(f[0], ln)
    }

    fn expect_end(&mut self) -> Result<()> {
        match self.next_nonempty() {
            Ok((ln, _)) => Err(Error::Parse {
                line: ln,
                message: "trailing content".into(),
            }),
            Err(_) => Ok(()),
        }
    }
}
