//! Sweeps over (variant, rate, trial) cells and the artifacts they produce.

use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use dcs_core::decentralized::{run_decentralized, DecentralizedConfig, Topology};
use dcs_core::jsm::{
    gen_measurement_matrix, measure, noise_precision_for_snr, synth_jsm1, HyperParams, NodeData,
    SensingEnsemble,
};
use dcs_core::vb::{run_centralized, Trace, VbOutput};
use dcs_core::wavelet::{forward_dwt, inverse_dwt, PyramidLayout, Signal, WaveletPyramid};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::{ExperimentConfig, Input, Variant};
use crate::error::{io_err, Error, Result};
use crate::image::{block_join, block_split, load_image};
use crate::metrics::{format_psnr, nmse, psnr};
use crate::plot::{line_chart, Series};
use crate::signals::parse_signals_csv;

/// Header of `results.csv`.
pub const RESULTS_HEADER: &str = "variant,rate,trial,iterations,converged,nmse,psnr,message_bytes";
/// Header of `timing.csv`.
pub const TIMING_HEADER: &str = "variant,rate,trial,iterations,wall_seconds,seconds_per_iteration";

/// Coefficient-domain truths shared by every cell, or drawn per trial.
#[derive(Clone, Debug)]
pub enum Source {
    Synthetic,
    Image { side: usize, pixels: Vec<f64> },
    Signals { samples: Vec<Vec<f64>> },
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub layout: PyramidLayout,
    pub k: usize,
    pub source: Source,
    /// Fixed coefficient vectors for file inputs.
    pub coeffs: Option<Vec<Vec<f64>>>,
}

impl Dataset {
    pub fn load(cfg: &ExperimentConfig) -> Result<Self> {
        match &cfg.input {
            Input::Synthetic => Ok(Dataset {
                layout: PyramidLayout::new(cfg.shape, cfg.levels)?,
                k: cfg.k,
                source: Source::Synthetic,
                coeffs: None,
            }),
            Input::Image(path) => {
                let grid = load_image(path)?;
                let tiles = block_split(&grid, cfg.block_size)?;
                let pyramids = tiles
                    .into_iter()
                    .map(|t| forward_dwt(&Signal::square(cfg.block_size, t.data), cfg.levels, cfg.wavelet))
                    .collect::<dcs_core::Result<Vec<_>>>()?;
                Ok(Dataset {
                    layout: pyramids[0].layout.clone(),
                    k: pyramids.len(),
                    source: Source::Image {
                        side: grid.rows,
                        pixels: grid.data,
                    },
                    coeffs: Some(pyramids.into_iter().map(|p| p.coeffs).collect()),
                })
            }
            Input::Signals(path) => {
                let text = std::fs::read_to_string(path).map_err(io_err(path))?;
                let table = parse_signals_csv(&text)?;
                let pyramids = table
                    .signals
                    .iter()
                    .map(|s| forward_dwt(&Signal::Line(s.clone()), cfg.levels, cfg.wavelet))
                    .collect::<dcs_core::Result<Vec<_>>>()?;
                Ok(Dataset {
                    layout: pyramids[0].layout.clone(),
                    k: pyramids.len(),
                    source: Source::Signals {
                        samples: table.signals,
                    },
                    coeffs: Some(pyramids.into_iter().map(|p| p.coeffs).collect()),
                })
            }
        }
    }
}

/// Per-cell random stream: `purpose` separates signal draws from measurements.
pub fn cell_rng(seed: u64, purpose: u64, rate_index: usize, trial: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(purpose << 56 | (rate_index as u64) << 32 | trial as u64);
    rng
}

/// Stream tag for synthetic signal draws.
pub const SIGNAL_STREAM: u64 = 1;
/// Stream tag for matrices and noise.
pub const MEASURE_STREAM: u64 = 2;

/// Measurement count for a rate, at least one row.
pub fn rows_for_rate(rate: f64, n: usize) -> usize {
    ((rate * n as f64).round() as usize).clamp(1, n.max(1))
}

/// Gaussian `1/M` matrices and noise at `snr_db` for each coefficient vector.
pub fn measure_all(
    coeffs: &[Vec<f64>],
    m: usize,
    snr_db: Option<f64>,
    rng: &mut ChaCha8Rng,
) -> Result<SensingEnsemble> {
    let n = coeffs.first().map_or(0, Vec::len);
    let mats = coeffs
        .iter()
        .map(|_| gen_measurement_matrix(m, n, rng))
        .collect::<dcs_core::Result<Vec<_>>>()?;
    let clean: Vec<DVector<f64>> = mats
        .iter()
        .zip(coeffs)
        .map(|(d, c)| d * DVector::from_column_slice(c))
        .collect();
    let precision = snr_db.map_or(f64::INFINITY, |snr| noise_precision_for_snr(&clean, snr));
    let nodes = mats
        .into_iter()
        .zip(coeffs)
        .map(|(d, c)| {
            let y = measure(c, &d, precision, rng)?;
            Ok(NodeData { d, y })
        })
        .collect::<dcs_core::Result<Vec<_>>>()?;
    Ok(SensingEnsemble::new(nodes, precision)?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricRow {
    pub variant: Variant,
    pub rate: f64,
    pub trial: usize,
    pub iterations: usize,
    pub converged: bool,
    pub nmse: f64,
    pub psnr: f64,
    pub message_bytes: u64,
    pub wall_seconds: f64,
}

/// Mean over the trials of one (variant, rate).
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub variant: Variant,
    pub rate: f64,
    pub iterations: f64,
    pub converged: f64,
    pub nmse: f64,
    pub psnr: f64,
    pub message_bytes: f64,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub n: usize,
    pub k: usize,
    /// Canonical order: variant, then rate, then trial, as configured.
    pub rows: Vec<MetricRow>,
    pub aggregates: Vec<Aggregate>,
    /// Convergence trace per cell, same order as `rows`.
    pub traces: Vec<Trace>,
}

impl ExperimentOutput {
    pub fn aggregate(&self, variant: Variant, rate: f64) -> Option<&Aggregate> {
        self.aggregates.iter().find(|a| a.variant == variant && a.rate == rate)
    }
}

struct Cell {
    v: usize,
    r: usize,
    trial: usize,
}

struct CellResult {
    row: MetricRow,
    trace: Trace,
}

fn to_samples(dataset: &Dataset, cfg: &ExperimentConfig, coeffs: &[Vec<f64>]) -> dcs_core::Result<Vec<Vec<f64>>> {
    coeffs
        .iter()
        .map(|c| {
            inverse_dwt(&WaveletPyramid {
                layout: dataset.layout.clone(),
                wavelet: cfg.wavelet,
                coeffs: c.clone(),
            })
            .map(Signal::into_values)
        })
        .collect()
}

fn cell_psnr(dataset: &Dataset, cfg: &ExperimentConfig, estimate: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    match &dataset.source {
        Source::Synthetic => {
            let peak = truth.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            psnr(&estimate.concat(), &truth.concat(), peak)
        }
        Source::Signals { samples } => {
            let est = to_samples(dataset, cfg, estimate)?;
            let peak = samples.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
            psnr(&est.concat(), &samples.concat(), peak)
        }
        Source::Image { side, pixels } => {
            let tiles = to_samples(dataset, cfg, estimate)?
                .into_iter()
                .map(|data| crate::image::Grid::new(cfg.block_size, cfg.block_size, data))
                .collect::<Result<Vec<_>>>()?;
            let joined = block_join(&tiles, *side, *side)?;
            psnr(&joined.data, pixels, 1.0)
        }
    }
}

fn solve(
    cfg: &ExperimentConfig,
    layout: &PyramidLayout,
    topology: &Topology,
    hp: &HyperParams,
    variant: Variant,
    ensemble: &SensingEnsemble,
    truth: &[Vec<f64>],
) -> dcs_core::Result<VbOutput> {
    let mut hp = hp.clone();
    hp.structured_prior = variant.structured;
    hp.slab_prior = variant.slab;
    if variant.decentralized {
        let dcfg = DecentralizedConfig {
            admm: cfg.admm.clone(),
            exact_aggregate: cfg.exact_aggregate,
        };
        run_decentralized(ensemble, layout, topology, &hp, &cfg.vb, &dcfg, Some(truth))
    } else {
        run_centralized(ensemble, layout, &hp, &cfg.vb, Some(truth))
    }
}

fn run_cell(cfg: &ExperimentConfig, dataset: &Dataset, topology: &Topology, hp: &HyperParams, cell: &Cell) -> Result<CellResult> {
    let variant = cfg.variants[cell.v];
    let rate = cfg.rates[cell.r];
    let context = |source: dcs_core::Error| Error::Cell {
        variant: variant.to_string(),
        rate,
        trial: cell.trial,
        source,
    };
    let truth = match &dataset.coeffs {
        Some(c) => c.clone(),
        None => {
            let mut synth_hp = hp.clone();
            synth_hp.structured_prior = cfg.synth_structured;
            let mut rng = cell_rng(cfg.seed, SIGNAL_STREAM, 0, cell.trial);
            synth_jsm1(&dataset.layout, dataset.k, cfg.common_sparsity, cfg.innov_sparsity, &synth_hp, &mut rng)
                .map_err(context)?
                .thetas()
        }
    };
    let n = dataset.layout.len();
    let mut rng = cell_rng(cfg.seed, MEASURE_STREAM, cell.r, cell.trial);
    let ensemble = measure_all(&truth, rows_for_rate(rate, n), cfg.snr_db, &mut rng).map_err(|e| match e {
        Error::Core(c) => context(c),
        other => other,
    })?;
    let start = Instant::now();
    let out = solve(cfg, &dataset.layout, topology, hp, variant, &ensemble, &truth).map_err(context)?;
    let wall_seconds = start.elapsed().as_secs_f64();
    let row = MetricRow {
        variant,
        rate,
        trial: cell.trial,
        iterations: out.iterations,
        converged: out.converged,
        nmse: nmse(&out.theta_hat, &truth).map_err(context)?,
        psnr: cell_psnr(dataset, cfg, &out.theta_hat, &truth)?,
        message_bytes: out.trace.rows.iter().map(|r| r.message_bytes).sum(),
        wall_seconds,
    };
    Ok(CellResult {
        row,
        trace: out.trace,
    })
}

fn aggregate(rows: &[MetricRow]) -> Aggregate {
    let t = rows.len() as f64;
    let mean = |f: &dyn Fn(&MetricRow) -> f64| rows.iter().map(f).sum::<f64>() / t;
    Aggregate {
        variant: rows[0].variant,
        rate: rows[0].rate,
        iterations: mean(&|r| r.iterations as f64),
        converged: mean(&|r| r.converged as u8 as f64),
        nmse: mean(&|r| r.nmse),
        psnr: mean(&|r| r.psnr),
        message_bytes: mean(&|r| r.message_bytes as f64),
    }
}

/// Runs every (variant, rate, trial) cell; results do not depend on scheduling.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let dataset = Dataset::load(cfg)?;
    let topology = cfg.topology.build(dataset.k)?;
    let hp = cfg.hyper_params(&dataset.layout);
    hp.validate(&dataset.layout)?;
    let cells: Vec<Cell> = (0..cfg.variants.len())
        .flat_map(|v| (0..cfg.rates.len()).flat_map(move |r| (0..cfg.trials).map(move |trial| Cell { v, r, trial })))
        .collect();
    // collect preserves the cell order, which is the canonical order
    let results = cells
        .par_iter()
        .map(|cell| run_cell(cfg, &dataset, &topology, &hp, cell))
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let mut rows = Vec::with_capacity(results.len());
    let mut traces = Vec::new();
    for res in results {
        traces.push(res.trace);
        rows.push(res.row);
    }
    let aggregates = rows.chunks(cfg.trials).map(aggregate).collect();
    Ok(ExperimentOutput {
        n: dataset.layout.len(),
        k: dataset.k,
        rows,
        aggregates,
        traces,
    })
}

/// `results.csv`: one row per cell, then one `mean` row per (variant, rate).
pub fn results_csv(out: &ExperimentOutput) -> String {
    let mut s = format!("{RESULTS_HEADER}\n");
    for r in &out.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{:e},{},{}",
            r.variant,
            r.rate,
            r.trial,
            r.iterations,
            r.converged,
            r.nmse,
            format_psnr(r.psnr),
            r.message_bytes
        );
    }
    for a in &out.aggregates {
        let _ = writeln!(
            s,
            "{},{},mean,{},{},{:e},{},{}",
            a.variant,
            a.rate,
            a.iterations,
            a.converged,
            a.nmse,
            format_psnr(a.psnr),
            a.message_bytes
        );
    }
    s
}

pub fn timing_csv(out: &ExperimentOutput) -> String {
    let mut s = format!("{TIMING_HEADER}\n");
    for r in &out.rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{:.6},{:.6}",
            r.variant,
            r.rate,
            r.trial,
            r.iterations,
            r.wall_seconds,
            r.wall_seconds / r.iterations.max(1) as f64
        );
    }
    s
}

/// Traces of one variant, every rate and trial, with leading `rate,trial` columns.
pub fn trace_csv(out: &ExperimentOutput, variant: Variant) -> String {
    let mut s = String::new();
    for (row, trace) in out.rows.iter().zip(&out.traces) {
        if row.variant != variant {
            continue;
        }
        let csv = trace.to_csv();
        let mut lines = csv.lines();
        let header = lines.next().unwrap_or_default();
        if s.is_empty() {
            let _ = writeln!(s, "rate,trial,{header}");
        }
        for line in lines {
            let _ = writeln!(s, "{},{},{line}", row.rate, row.trial);
        }
    }
    s
}

pub fn manifest(cfg: &ExperimentConfig, out: &ExperimentOutput) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "dcs-harness {}", env!("CARGO_PKG_VERSION"));
    let _ = writeln!(s, "dcs-core {}", dcs_core::VERSION);
    let _ = writeln!(s, "seed {}", cfg.seed);
    let _ = writeln!(s, "n {}", out.n);
    let _ = writeln!(s, "k {}", out.k);
    for &rate in &cfg.rates {
        let _ = writeln!(s, "rows_at_rate {rate} {}", rows_for_rate(rate, out.n));
    }
    let _ = writeln!(s, "cells {}", out.rows.len());
    s.push_str("\n[config]\n");
    s.push_str(&cfg.to_text());
    s
}

fn plots(cfg: &ExperimentConfig, out: &ExperimentOutput) -> Vec<(&'static str, String)> {
    let by_variant = |f: &dyn Fn(&Aggregate) -> f64| -> Vec<Series> {
        cfg.variants
            .iter()
            .map(|&v| Series {
                name: v.to_string(),
                points: out
                    .aggregates
                    .iter()
                    .filter(|a| a.variant == v)
                    .map(|a| (a.rate, f(a)))
                    .collect(),
            })
            .collect()
    };
    let mut charts = vec![(
        "nmse_vs_rate.svg",
        line_chart("NMSE vs sampling rate", "M/N", "NMSE", &by_variant(&|a| a.nmse), true),
    )];
    if out.aggregates.iter().all(|a| a.psnr.is_finite()) {
        charts.push((
            "psnr_vs_rate.svg",
            line_chart("PSNR vs sampling rate", "M/N", "PSNR (dB)", &by_variant(&|a| a.psnr), false),
        ));
    }
    let middle = cfg.rates[cfg.rates.len() / 2];
    let traces: Vec<Series> = out
        .rows
        .iter()
        .zip(&out.traces)
        .filter(|(row, _)| row.rate == middle && row.trial == 0)
        .map(|(row, trace)| Series {
            name: row.variant.to_string(),
            points: trace
                .rows
                .iter()
                .filter_map(|r| r.nmse.map(|e| (r.iteration as f64, e)))
                .collect(),
        })
        .collect();
    charts.push((
        "nmse_vs_iteration.svg",
        line_chart(&format!("NMSE vs iteration at M/N = {middle}"), "iteration", "NMSE", &traces, true),
    ));
    charts
}

/// Writes every artifact under `dir`.
pub fn write_outputs(cfg: &ExperimentConfig, out: &ExperimentOutput, dir: &Path) -> Result<()> {
    let write = |name: &str, body: &str| {
        let path = dir.join(name);
        std::fs::write(&path, body).map_err(io_err(path))
    };
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write("results.csv", &results_csv(out))?;
    write("timing.csv", &timing_csv(out))?;
    write("manifest.txt", &manifest(cfg, out))?;
    for &v in &cfg.variants {
        write(&format!("trace_{v}.csv"), &trace_csv(out, v))?;
    }
    if cfg.plots {
        let plot_dir = dir.join("plots");
        std::fs::create_dir_all(&plot_dir).map_err(io_err(&plot_dir))?;
        for (name, svg) in plots(cfg, out) {
            let path = plot_dir.join(name);
            std::fs::write(&path, svg).map_err(io_err(path))?;
        }
    }
    Ok(())
}
