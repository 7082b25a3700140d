use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dcs_core::decentralized::{harary_graph, Topology};
use dcs_core::jsm::{synth_jsm1, HyperParams};
use dcs_core::wavelet::{inverse_dwt, PyramidLayout, Wavelet, WaveletPyramid};
use dcs_harness::config::{ExperimentConfig, KEYS};
use dcs_harness::error::{Error, Result};
use dcs_harness::experiment::{
    cell_rng, measure_all, rows_for_rate, run_experiment, write_outputs, MEASURE_STREAM, SIGNAL_STREAM,
};
use dcs_harness::metrics::{format_psnr, nmse, psnr};
use dcs_harness::signals::{parse_signals_csv, write_signals_csv};

#[derive(Parser)]
#[command(name = "dcs", version, about = "Decentralized compressed sensing experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the sweep described by a config file.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Override the configured output directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Draw one synthetic instance and its measurements.
    Synth {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "square:16")]
        shape: String,
        #[arg(long, default_value_t = 3)]
        levels: usize,
        #[arg(long, default_value = "db4")]
        wavelet: String,
        #[arg(long, default_value_t = 4)]
        k: usize,
        #[arg(long, default_value_t = 0.5)]
        rate: f64,
        #[arg(long, default_value_t = 0.1)]
        common: f64,
        #[arg(long, default_value_t = 0.05)]
        innov: f64,
        /// SNR in dB, or "none".
        #[arg(long, default_value = "40")]
        snr: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// NMSE and PSNR between two signals CSV files.
    Metrics {
        #[arg(long)]
        est: PathBuf,
        #[arg(long)]
        truth: PathBuf,
        /// PSNR peak; defaults to the largest absolute truth value.
        #[arg(long)]
        peak: Option<f64>,
    },
    /// Write a Harary or complete graph as an edge list.
    Graph {
        #[arg(long)]
        k: usize,
        /// Connectivity; omit for the complete graph.
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// List the config keys.
    Keys,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })
}

fn write(path: &Path, body: &str) -> Result<()> {
    std::fs::write(path, body).map_err(|source| Error::Io {
        path: path.into(),
        source,
    })
}

fn run(config: &Path, out: Option<PathBuf>) -> Result<()> {
    let mut cfg = ExperimentConfig::parse(&read(config)?)?;
    cfg.resolve_paths(config.parent().unwrap_or(Path::new(".")));
    if let Some(out) = out {
        cfg.out_dir = out;
    }
    let result = run_experiment(&cfg)?;
    write_outputs(&cfg, &result, &cfg.out_dir)?;
    for a in &result.aggregates {
        println!(
            "{} rate {} nmse {:.4e} psnr {} iterations {:.1}",
            a.variant,
            a.rate,
            a.nmse,
            format_psnr(a.psnr),
            a.iterations
        );
    }
    println!("wrote {}", cfg.out_dir.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn synth(
    out: &Path,
    shape: &str,
    levels: usize,
    wavelet: &str,
    k: usize,
    rate: f64,
    common: f64,
    innov: f64,
    snr: &str,
    seed: u64,
) -> Result<()> {
    let cfg_text = format!(
        "shape = {shape}\nlevels = {levels}\nwavelet = {wavelet}\nk = {k}\nrates = {rate}\n\
         common_sparsity = {common}\ninnov_sparsity = {innov}\nsnr_db = {snr}\nseed = {seed}\n"
    );
    let cfg = ExperimentConfig::parse(&cfg_text)?;
    let layout = PyramidLayout::new(cfg.shape, cfg.levels)?;
    let hp = HyperParams::defaults(&layout);
    let state = synth_jsm1(&layout, k, common, innov, &hp, &mut cell_rng(seed, SIGNAL_STREAM, 0, 0))?;
    let m = rows_for_rate(rate, layout.len());
    let ensemble = measure_all(&state.thetas(), m, cfg.snr_db, &mut cell_rng(seed, MEASURE_STREAM, 0, 0))?;
    let wavelet: Wavelet = cfg.wavelet;
    let samples = state
        .thetas()
        .into_iter()
        .map(|coeffs| {
            inverse_dwt(&WaveletPyramid {
                layout: layout.clone(),
                wavelet,
                coeffs,
            })
            .map(|s| s.into_values())
        })
        .collect::<dcs_core::Result<Vec<_>>>()?;
    std::fs::create_dir_all(out).map_err(|source| Error::Io {
        path: out.into(),
        source,
    })?;
    write(&out.join("layout.txt"), &layout.to_header())?;
    write(&out.join("state.txt"), &state.to_text())?;
    write(&out.join("ensemble.txt"), &ensemble.to_text())?;
    write(&out.join("truth.csv"), &write_signals_csv(&state.thetas())?)?;
    write(&out.join("samples.csv"), &write_signals_csv(&samples)?)?;
    println!("n {} k {k} m {m} -> {}", layout.len(), out.display());
    Ok(())
}

fn metrics(est: &Path, truth: &Path, peak: Option<f64>) -> Result<()> {
    let e = parse_signals_csv(&read(est)?)?.signals;
    let t = parse_signals_csv(&read(truth)?)?.signals;
    let peak = peak.unwrap_or_else(|| t.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())));
    println!("nmse {:e}", nmse(&e, &t)?);
    println!("psnr {}", format_psnr(psnr(&e.concat(), &t.concat(), peak)?));
    Ok(())
}

fn graph(k: usize, p: Option<usize>, out: &Path) -> Result<()> {
    let topo = match p {
        Some(p) => harary_graph(k, p)?,
        None => Topology::complete(k)?,
    };
    write(out, &topo.to_edge_list())?;
    println!("{} nodes, {} edges -> {}", k, topo.edges().len(), out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run { config, out } => run(&config, out),
        Command::Synth {
            out,
            shape,
            levels,
            wavelet,
            k,
            rate,
            common,
            innov,
            snr,
            seed,
        } => synth(&out, &shape, levels, &wavelet, k, rate, common, innov, &snr, seed),
        Command::Metrics { est, truth, peak } => metrics(&est, &truth, peak),
        Command::Graph { k, p, out } => graph(k, p, &out),
        Command::Keys => {
            for (key, help) in KEYS {
                println!("{key:<20} {help}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
