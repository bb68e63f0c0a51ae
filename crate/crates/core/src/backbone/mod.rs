//! Feature providers: the native CSP + linear backbone and feature-file replay.

pub mod csp;
pub mod head;
pub mod model;
pub mod replay;

pub use csp::{extract_features, fit_csp, CspFilters};
pub use head::{argmax, softmax, train_head, HeadConfig, LinearHead};
pub use model::{infer, train_stage, BackboneConfig, FeatureFrame, LinearModel, NativeBackboneModel};
pub use replay::{replay_provider, FeatureFileHeader, FeatureRecord};
