use std::fs;
use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use tempdens_core::evaluation::Method;
use tempdens_core::scoring::Metric;
use tempdens_core::RunConfig;

#[derive(Debug, Parser)]
#[command(
    name = "tempdens",
    version,
    about = "Asynchronous motor-imagery decoding with out-of-distribution rejection"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the rest/task gate and the ID classifier per subject.
    Train(RunArgs),
    /// Fit class statistics, score statistics and the rejection threshold.
    Calibrate(RunArgs),
    /// Run the online engine over every test session and write decisions.
    Replay(RunArgs),
    /// Evaluate all methods and write the report and tables.
    Eval(RunArgs),
    /// Component ablation and temporal-metric sweep.
    Ablate(RunArgs),
    /// Write a synthetic data root with known ground truth.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Directory holding index.json; every data path resolves against it.
    #[arg(long)]
    pub data_root: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    /// JSON run configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Subjects processed in parallel.
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long = "dataset")]
    pub datasets: Vec<String>,
    #[arg(long = "subject")]
    pub subjects: Vec<String>,
    #[arg(long)]
    pub gate_threshold: Option<f64>,
    /// `alpha,beta,gamma`.
    #[arg(long, value_parser = parse_triple)]
    pub fusion_weights: Option<[f64; 3]>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub metric: Option<Metric>,
    #[arg(long)]
    pub quantile: Option<f64>,
    #[arg(long)]
    pub window_s: Option<f64>,
    #[arg(long)]
    pub hop_s: Option<f64>,
    /// `low,high` in Hz.
    #[arg(long, value_parser = parse_pair)]
    pub band: Option<[f64; 2]>,
    /// Comma-separated method names.
    #[arg(long, value_delimiter = ',')]
    pub methods: Option<Vec<Method>>,
    /// Comma-separated temporal metrics for the sweep.
    #[arg(long, value_delimiter = ',')]
    pub metrics: Option<Vec<Metric>>,
    /// Skip the temporal-metric sweep in `eval`.
    #[arg(long)]
    pub no_sweep: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 2)]
    pub subjects: usize,
    /// Length of each session in seconds.
    #[arg(long, default_value_t = 240.0)]
    pub duration_s: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

fn parse_floats<const N: usize>(s: &str) -> Result<[f64; N], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    v.try_into()
        .map_err(|v: Vec<f64>| format!("expected {N} comma-separated numbers, got {}", v.len()))
}

fn parse_triple(s: &str) -> Result<[f64; 3], String> {
    parse_floats(s)
}

fn parse_pair(s: &str) -> Result<[f64; 2], String> {
    parse_floats(s)
}

impl RunArgs {
    /// File config, then flag overrides, then validation.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => {
                let text = fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                serde_json::from_str(&text).map_err(tempdens_core::Error::from)?
            }
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if !self.datasets.is_empty() {
            cfg.datasets = self.datasets.clone();
        }
        if !self.subjects.is_empty() {
            cfg.subjects = self.subjects.clone();
        }
        if let Some(l) = self.gate_threshold {
            cfg.gate_threshold = l;
        }
        let fusion = &mut cfg.scoring.fusion;
        if let Some([a, b, g]) = self.fusion_weights {
            fusion.alpha = a;
            fusion.beta = b;
            fusion.gamma = g;
        }
        if let Some(t) = self.temperature {
            fusion.temperature = t;
        }
        if let Some(e) = self.eta {
            fusion.eta = e;
        }
        if let Some(k) = self.k {
            cfg.scoring.k = k;
        }
        if let Some(m) = self.metric {
            cfg.scoring.metric = m;
        }
        if let Some(q) = self.quantile {
            cfg.calibration.quantile = q;
        }
        if let Some(w) = self.window_s {
            cfg.window.window_len_s = w;
        }
        if let Some(h) = self.hop_s {
            cfg.window.hop_s = h;
        }
        if let Some([lo, hi]) = self.band {
            cfg.band.low_hz = lo;
            cfg.band.high_hz = hi;
        }
        if let Some(m) = &self.methods {
            cfg.methods = m.clone();
        }
        if let Some(m) = &self.metrics {
            cfg.metrics = m.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
