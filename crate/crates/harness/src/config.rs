//! Flat `key = value` experiment configuration.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use dcs_core::decentralized::{harary_graph, AdmmConfig, Topology};
use dcs_core::distributions::GammaParams;
use dcs_core::jsm::{HyperParams, SlabPrior};
use dcs_core::vb::{SupportMode, VbConfig};
use dcs_core::wavelet::{PyramidLayout, Shape, Wavelet};

use crate::error::{io_err, Error, Result};

/// Every accepted key with a one-line description, in canonical order.
pub const KEYS: &[(&str, &str)] = &[
    ("input", "synthetic | image:<path.pgm> | signals:<path.csv>"),
    ("shape", "synthetic signal shape, line:<N> or square:<side>"),
    ("levels", "wavelet decomposition levels"),
    ("wavelet", "haar | db4"),
    ("k", "synthetic node count"),
    ("common_sparsity", "synthetic common support fraction"),
    ("innov_sparsity", "synthetic innovation support fraction"),
    ("synth_structured", "draw synthetic supports along the wavelet tree"),
    ("snr_db", "measurement SNR in dB, or none"),
    ("block_size", "image block side"),
    ("rates", "comma-separated sampling rates M/N in (0, 1]"),
    ("variants", "comma-separated {centralized|decentralized}-{structured|flat}-{bkf|gaussian}"),
    ("topology", "harary:<P> | complete | edges:<path>"),
    ("trials", "trials per (variant, rate)"),
    ("seed", "master seed"),
    ("out_dir", "output directory"),
    ("plots", "write SVG plots"),
    ("max_iter", "variational sweeps"),
    ("rel_tol", "relative change that stops the sweeps"),
    ("support_mode", "hardened | threshold | anneal:<t0>:<rate>"),
    ("damping", "weight on new Gaussian means, (0, 1]"),
    ("admm_rho", "consensus penalty"),
    ("admm_tol", "consensus halting tolerance"),
    ("admm_max_rounds", "consensus rounds per aggregate"),
    ("exact_aggregate", "replace consensus by exact sums (complete graphs only)"),
    ("noise_shape", "noise precision Gamma shape"),
    ("noise_rate", "noise precision Gamma rate"),
    ("common_shape", "common slab Gamma shape, all scales"),
    ("common_rate", "common slab Gamma rate, all scales"),
    ("innov_shape", "innovation slab Gamma shape, all scales"),
    ("innov_rate", "innovation slab Gamma rate, all scales"),
    ("threshold_fraction", "neighbourhood activity threshold"),
];

#[derive(Clone, Debug, PartialEq)]
pub enum Input {
    Synthetic,
    Image(PathBuf),
    Signals(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub enum TopologySpec {
    Harary(usize),
    Complete,
    EdgeList(PathBuf),
}

impl TopologySpec {
    /// Graph over `k` nodes. A Harary connectivity of `k` or more saturates
    /// to the complete graph.
    pub fn build(&self, k: usize) -> Result<Topology> {
        Ok(match self {
            TopologySpec::Harary(p) if *p + 1 >= k => Topology::complete(k)?,
            TopologySpec::Harary(p) => harary_graph(k, *p)?,
            TopologySpec::Complete => Topology::complete(k)?,
            TopologySpec::EdgeList(path) => {
                let text = std::fs::read_to_string(path).map_err(io_err(path))?;
                Topology::from_edge_list(&text)?
            }
        })
    }
}

/// One algorithm variant; renders as `centralized-structured-bkf` etc.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Variant {
    pub decentralized: bool,
    pub structured: bool,
    pub slab: SlabPrior,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}-{}-{}",
            if self.decentralized { "decentralized" } else { "centralized" },
            if self.structured { "structured" } else { "flat" },
            match self.slab {
                SlabPrior::Bkf => "bkf",
                SlabPrior::Gaussian => "gaussian",
            }
        )
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let parts: Vec<&str> = s.trim().split('-').collect();
        let [mode, prior, slab] = parts[..] else {
            return Err(format!("variant '{s}' must have three dash-separated parts"));
        };
        Ok(Variant {
            decentralized: match mode {
                "centralized" => false,
                "decentralized" => true,
                _ => return Err(format!("unknown mode '{mode}'")),
            },
            structured: match prior {
                "structured" => true,
                "flat" => false,
                _ => return Err(format!("unknown support prior '{prior}'")),
            },
            slab: match slab {
                "bkf" => SlabPrior::Bkf,
                "gaussian" => SlabPrior::Gaussian,
                _ => return Err(format!("unknown slab '{slab}'")),
            },
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub input: Input,
    pub shape: Shape,
    pub levels: usize,
    pub wavelet: Wavelet,
    pub k: usize,
    pub common_sparsity: f64,
    pub innov_sparsity: f64,
    pub synth_structured: bool,
    pub snr_db: Option<f64>,
    pub block_size: usize,
    pub rates: Vec<f64>,
    pub variants: Vec<Variant>,
    pub topology: TopologySpec,
    pub trials: usize,
    pub seed: u64,
    pub out_dir: PathBuf,
    pub plots: bool,
    pub vb: VbConfig,
    pub admm: AdmmConfig,
    pub exact_aggregate: bool,
    pub noise: Option<GammaParams>,
    pub common_gamma: Option<GammaParams>,
    pub innov_gamma: Option<GammaParams>,
    pub threshold_fraction: Option<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            input: Input::Synthetic,
            shape: Shape::Square(16),
            levels: 3,
            wavelet: Wavelet::Daubechies4,
            k: 4,
            common_sparsity: 0.1,
            innov_sparsity: 0.05,
            synth_structured: true,
            snr_db: Some(40.0),
            block_size: 32,
            rates: vec![0.5],
            variants: vec![Variant {
                decentralized: false,
                structured: true,
                slab: SlabPrior::Bkf,
            }],
            topology: TopologySpec::Harary(5),
            trials: 10,
            seed: 0,
            out_dir: PathBuf::from("results"),
            plots: true,
            vb: VbConfig::default(),
            admm: AdmmConfig::default(),
            exact_aggregate: false,
            noise: None,
            common_gamma: None,
            innov_gamma: None,
            threshold_fraction: None,
        }
    }
}

fn parse_num<T: FromStr>(value: &str) -> std::result::Result<T, String> {
    value.parse().map_err(|_| format!("cannot parse '{value}'"))
}

fn parse_bool(value: &str) -> std::result::Result<bool, String> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got '{value}'")),
    }
}

fn parse_shape(value: &str) -> std::result::Result<Shape, String> {
    let (kind, size) = value.split_once(':').ok_or("shape must be line:<N> or square:<side>")?;
    let size: usize = parse_num(size)?;
    match kind {
        "line" => Ok(Shape::Line(size)),
        "square" => Ok(Shape::Square(size)),
        _ => Err(format!("unknown shape kind '{kind}'")),
    }
}

fn parse_mode(value: &str) -> std::result::Result<SupportMode, String> {
    let parts: Vec<&str> = value.split(':').collect();
    match parts[..] {
        ["hardened"] => Ok(SupportMode::Hardened),
        ["threshold"] => Ok(SupportMode::ThresholdAtOutput),
        ["anneal", t0, rate] => Ok(SupportMode::Anneal {
            t0: parse_num(t0)?,
            rate: parse_num(rate)?,
        }),
        _ => Err(format!("unknown support mode '{value}'")),
    }
}

fn fmt_shape(s: Shape) -> String {
    match s {
        Shape::Line(n) => format!("line:{n}"),
        Shape::Square(n) => format!("square:{n}"),
    }
}

fn fmt_list<T: fmt::Display>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = ExperimentConfig::default();
        let mut seen = std::collections::HashSet::new();
        let mut partial: [(Option<f64>, Option<f64>); 3] = [(None, None); 3];
        for (idx, raw) in text.lines().enumerate() {
            let line = idx + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let fail = |message: String| Error::Config { line, message };
            let (key, value) = content
                .split_once('=')
                .ok_or_else(|| fail("expected key = value".into()))?;
            let (key, value) = (key.trim(), value.trim());
            if !KEYS.iter().any(|(k, _)| *k == key) {
                return Err(fail(format!("unknown key '{key}'")));
            }
            if !seen.insert(key.to_string()) {
                return Err(fail(format!("duplicate key '{key}'")));
            }
            cfg.set(key, value, &mut partial).map_err(fail)?;
        }
        let names = [("noise", 0), ("common", 1), ("innov", 2)];
        for (name, i) in names {
            let g = match partial[i] {
                (None, None) => None,
                (Some(shape), Some(rate)) => Some(GammaParams::new(shape, rate)?),
                _ => {
                    return Err(Error::Config {
                        line: 0,
                        message: format!("{name}_shape and {name}_rate must be given together"),
                    })
                }
            };
            match i {
                0 => cfg.noise = g,
                1 => cfg.common_gamma = g,
                _ => cfg.innov_gamma = g,
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn set(
        &mut self,
        key: &str,
        value: &str,
        partial: &mut [(Option<f64>, Option<f64>); 3],
    ) -> std::result::Result<(), String> {
        match key {
            "input" => {
                self.input = match value.split_once(':') {
                    None if value == "synthetic" => Input::Synthetic,
                    Some(("image", p)) if !p.is_empty() => Input::Image(p.into()),
                    Some(("signals", p)) if !p.is_empty() => Input::Signals(p.into()),
                    _ => return Err(format!("unknown input '{value}'")),
                }
            }
            "shape" => self.shape = parse_shape(value)?,
            "levels" => self.levels = parse_num(value)?,
            "wavelet" => self.wavelet = value.parse().map_err(|e: dcs_core::Error| e.to_string())?,
            "k" => self.k = parse_num(value)?,
            "common_sparsity" => self.common_sparsity = parse_num(value)?,
            "innov_sparsity" => self.innov_sparsity = parse_num(value)?,
            "synth_structured" => self.synth_structured = parse_bool(value)?,
            "snr_db" => {
                self.snr_db = if value == "none" {
                    None
                } else {
                    Some(parse_num(value)?)
                }
            }
            "block_size" => self.block_size = parse_num(value)?,
            "rates" => {
                self.rates = value
                    .split(',')
                    .map(|v| parse_num(v.trim()))
                    .collect::<std::result::Result<_, _>>()?
            }
            "variants" => {
                self.variants = value
                    .split(',')
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()?
            }
            "topology" => {
                self.topology = match value.split_once(':') {
                    None if value == "complete" => TopologySpec::Complete,
                    Some(("harary", p)) => TopologySpec::Harary(parse_num(p)?),
                    Some(("edges", p)) if !p.is_empty() => TopologySpec::EdgeList(p.into()),
                    _ => return Err(format!("unknown topology '{value}'")),
                }
            }
            "trials" => self.trials = parse_num(value)?,
            "seed" => self.seed = parse_num(value)?,
            "out_dir" => self.out_dir = value.into(),
            "plots" => self.plots = parse_bool(value)?,
            "max_iter" => self.vb.max_iter = parse_num(value)?,
            "rel_tol" => self.vb.rel_tol = parse_num(value)?,
            "support_mode" => self.vb.support_mode = parse_mode(value)?,
            "damping" => self.vb.damping = parse_num(value)?,
            "admm_rho" => self.admm.rho = parse_num(value)?,
            "admm_tol" => self.admm.tol = parse_num(value)?,
            "admm_max_rounds" => self.admm.max_rounds = parse_num(value)?,
            "exact_aggregate" => self.exact_aggregate = parse_bool(value)?,
            "noise_shape" => partial[0].0 = Some(parse_num(value)?),
            "noise_rate" => partial[0].1 = Some(parse_num(value)?),
            "common_shape" => partial[1].0 = Some(parse_num(value)?),
            "common_rate" => partial[1].1 = Some(parse_num(value)?),
            "innov_shape" => partial[2].0 = Some(parse_num(value)?),
            "innov_rate" => partial[2].1 = Some(parse_num(value)?),
            "threshold_fraction" => self.threshold_fraction = Some(parse_num(value)?),
            _ => unreachable!("key list checked by caller"),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |message: String| Err(Error::Config { line: 0, message });
        if self.rates.is_empty() || self.rates.iter().any(|r| !(*r > 0.0 && *r <= 1.0)) {
            return fail(format!("rates must lie in (0, 1], got {:?}", self.rates));
        }
        if self.trials == 0 {
            return fail("trials must be at least 1".into());
        }
        if self.k == 0 {
            return fail("k must be at least 1".into());
        }
        if self.variants.is_empty() {
            return fail("no variants".into());
        }
        for (i, v) in self.variants.iter().enumerate() {
            if self.variants[..i].contains(v) {
                return fail(format!("variant {v} listed twice"));
            }
        }
        for (i, r) in self.rates.iter().enumerate() {
            if self.rates[..i].contains(r) {
                return fail(format!("rate {r} listed twice"));
            }
        }
        if self.block_size == 0 {
            return fail("block_size must be positive".into());
        }
        if let Some(snr) = self.snr_db {
            if !snr.is_finite() {
                return fail("snr_db must be finite or none".into());
            }
        }
        if let Some(t) = self.threshold_fraction {
            if !(0.0..1.0).contains(&t) {
                return fail(format!("threshold_fraction must be in [0, 1), got {t}"));
            }
        }
        if matches!(self.input, Input::Synthetic) {
            PyramidLayout::new(self.shape, self.levels)?;
        }
        self.vb.validate()?;
        self.admm.validate()?;
        Ok(())
    }

    /// Makes relative input, topology and output paths relative to `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match &mut self.input {
            Input::Image(p) | Input::Signals(p) => fix(p),
            Input::Synthetic => {}
        }
        if let TopologySpec::EdgeList(p) = &mut self.topology {
            fix(p);
        }
        fix(&mut self.out_dir);
    }

    /// Prior hyperparameters for `layout` with this config's overrides applied.
    pub fn hyper_params(&self, layout: &PyramidLayout) -> HyperParams {
        let mut hp = HyperParams::defaults(layout);
        if let Some(g) = self.noise {
            hp.noise = g;
        }
        if let Some(g) = self.common_gamma {
            hp.common_gamma = vec![g; layout.num_scales()];
        }
        if let Some(g) = self.innov_gamma {
            hp.innov_gamma = vec![g; layout.num_scales()];
        }
        if let Some(t) = self.threshold_fraction {
            hp.threshold_fraction = t;
        }
        hp
    }

    /// Canonical text form; parses back to an equal config.
    pub fn to_text(&self) -> String {
        let mut lines: Vec<(&str, String)> = vec![
            (
                "input",
                match &self.input {
                    Input::Synthetic => "synthetic".into(),
                    Input::Image(p) => format!("image:{}", p.display()),
                    Input::Signals(p) => format!("signals:{}", p.display()),
                },
            ),
            ("shape", fmt_shape(self.shape)),
            ("levels", self.levels.to_string()),
            ("wavelet", self.wavelet.name().into()),
            ("k", self.k.to_string()),
            ("common_sparsity", self.common_sparsity.to_string()),
            ("innov_sparsity", self.innov_sparsity.to_string()),
            ("synth_structured", self.synth_structured.to_string()),
            ("snr_db", self.snr_db.map_or("none".into(), |v| v.to_string())),
            ("block_size", self.block_size.to_string()),
            ("rates", fmt_list(&self.rates)),
            ("variants", fmt_list(&self.variants)),
            (
                "topology",
                match &self.topology {
                    TopologySpec::Harary(p) => format!("harary:{p}"),
                    TopologySpec::Complete => "complete".into(),
                    TopologySpec::EdgeList(p) => format!("edges:{}", p.display()),
                },
            ),
            ("trials", self.trials.to_string()),
            ("seed", self.seed.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("plots", self.plots.to_string()),
            ("max_iter", self.vb.max_iter.to_string()),
            ("rel_tol", self.vb.rel_tol.to_string()),
            (
                "support_mode",
                match self.vb.support_mode {
                    SupportMode::Hardened => "hardened".into(),
                    SupportMode::ThresholdAtOutput => "threshold".into(),
                    SupportMode::Anneal { t0, rate } => format!("anneal:{t0}:{rate}"),
                },
            ),
            ("damping", self.vb.damping.to_string()),
            ("admm_rho", self.admm.rho.to_string()),
            ("admm_tol", self.admm.tol.to_string()),
            ("admm_max_rounds", self.admm.max_rounds.to_string()),
            ("exact_aggregate", self.exact_aggregate.to_string()),
        ];
        for (shape_key, rate_key, g) in [
            ("noise_shape", "noise_rate", self.noise),
            ("common_shape", "common_rate", self.common_gamma),
            ("innov_shape", "innov_rate", self.innov_gamma),
        ] {
            if let Some(g) = g {
                lines.push((shape_key, g.shape.to_string()));
                lines.push((rate_key, g.rate.to_string()));
            }
        }
        if let Some(t) = self.threshold_fraction {
            lines.push(("threshold_fraction", t.to_string()));
        }
        lines.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }
}
