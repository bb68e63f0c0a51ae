//! Streaming rest/task gating, in-distribution classification and
//! out-of-distribution rejection for asynchronous motor-imagery decoding.

// Parameter checks are written `!(x > 0.0)` so that NaN fails them.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod backbone;
pub mod calibration;
pub mod codec;
pub mod config;
pub mod engine;
pub mod error;
pub mod evaluation;
pub mod gate;
pub mod linalg;
pub mod pipeline;
pub mod provenance;
pub mod scoring;
pub mod stream;
pub mod synth;

pub use backbone::{FeatureFrame, LinearHead, LinearModel, NativeBackboneModel};
pub use calibration::{calibrate, CalibrationConfig, CalibrationPack, IdRun};
pub use config::RunConfig;
pub use engine::{run_stream, Decision, DecisionRecord, Engine, EngineConfig, GatedFrame};
pub use error::{Error, Result};
pub use evaluation::{auroc, DatasetReport, EvalConfig, Method, SubjectData};
pub use scoring::{Baseline, FusionWeights, Metric, TempDensConfig};
pub use stream::{SessionManifest, TrueState, WindowConfig, WindowFrame};
