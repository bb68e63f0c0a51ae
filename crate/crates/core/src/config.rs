//! Declarative run configuration shared by every subcommand.

use serde::{Deserialize, Serialize};

use crate::backbone::BackboneConfig;
use crate::calibration::CalibrationConfig;
use crate::error::{Error, Result};
use crate::evaluation::{EvalConfig, Method};
use crate::gate::GateConfig;
use crate::scoring::{BaselineConfig, Metric, TempDensConfig};
use crate::stream::filter::{DEFAULT_HIGH_HZ, DEFAULT_LOW_HZ, DEFAULT_ORDER};
use crate::stream::WindowConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BandConfig {
    pub low_hz: f64,
    pub high_hz: f64,
    pub order: usize,
}

impl Default for BandConfig {
    fn default() -> Self {
        Self {
            low_hz: DEFAULT_LOW_HZ,
            high_hz: DEFAULT_HIGH_HZ,
            order: DEFAULT_ORDER,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Dataset names to run; empty means all.
    pub datasets: Vec<String>,
    /// Subject ids to run; empty means all.
    pub subjects: Vec<String>,
    pub window: WindowConfig,
    pub band: BandConfig,
    pub gate_threshold: f64,
    pub scoring: TempDensConfig,
    pub calibration: CalibrationConfig,
    pub baselines: BaselineConfig,
    pub backbone: BackboneConfig,
    /// Minimum task coverage of an ID window used for training and calibration.
    pub train_min_coverage: f64,
    /// Every `train_stride`-th window feeds backbone training.
    pub train_stride: usize,
    pub aggregate_window: usize,
    pub coverage_bins: usize,
    pub methods: Vec<Method>,
    pub metrics: Vec<Metric>,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            datasets: Vec::new(),
            subjects: Vec::new(),
            window: WindowConfig::default(),
            band: BandConfig::default(),
            gate_threshold: GateConfig::default().lambda,
            scoring: TempDensConfig::default(),
            calibration: CalibrationConfig::default(),
            baselines: BaselineConfig::default(),
            backbone: BackboneConfig::default(),
            train_min_coverage: 0.5,
            train_stride: 4,
            aggregate_window: 3,
            coverage_bins: 10,
            methods: Method::all(),
            metrics: Metric::ALL.to_vec(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        GateConfig::new(self.gate_threshold)?;
        self.scoring.validate()?;
        self.calibration.validate()?;
        if !(self.band.low_hz > 0.0 && self.band.low_hz < self.band.high_hz) || self.band.order == 0 {
            return Err(Error::InvalidBand {
                low_hz: self.band.low_hz,
                high_hz: self.band.high_hz,
                rate: f64::NAN,
            });
        }
        if !(self.window.window_len_s > 0.0 && self.window.hop_s > 0.0 && self.window.exclusion_s >= 0.0) {
            return Err(Error::InvalidParameter(
                "window, hop and exclusion lengths must be positive".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.train_min_coverage) || self.train_min_coverage == 0.0 {
            return Err(Error::InvalidParameter(format!(
                "train_min_coverage {} outside (0, 1]",
                self.train_min_coverage
            )));
        }
        if self.train_stride == 0 || self.aggregate_window == 0 || self.coverage_bins == 0 {
            return Err(Error::InvalidParameter(
                "stride, aggregation window and bins must be positive".into(),
            ));
        }
        if self.backbone.n_pairs == 0 || !(self.backbone.lr >= 0.0) || !(self.backbone.l2 >= 0.0) {
            return Err(Error::InvalidParameter("invalid backbone settings".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("no methods selected".into()));
        }
        Ok(())
    }

    pub fn eval_config(&self) -> EvalConfig {
        let mut baselines = self.baselines;
        baselines.temperature = self.scoring.fusion.temperature;
        baselines.k = self.scoring.k;
        EvalConfig {
            lambda: self.gate_threshold,
            scoring: self.scoring,
            calibration: self.calibration,
            baselines,
            methods: self.methods.clone(),
            aggregate_window: self.aggregate_window,
            coverage_bins: self.coverage_bins,
            seed: self.seed,
        }
    }
}
