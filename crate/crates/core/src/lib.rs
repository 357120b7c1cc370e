//! Grid-world embodied instruction following: a household simulator, a
//! semantic mapper, an instruction completer, a learned object localizer on
//! a small autodiff core, the episode controller, and evaluation tooling.
//!
//! Tensor and localizer code is generic over [`scalar::Scalar`]; the
//! aliases below fix it to `f64`, which everything else uses.

pub mod agent;
pub mod completer;
pub mod harness;
pub mod localizer;
pub mod mapper;
pub mod scalar;
pub mod tensor;
pub mod world;

pub type Tensor64 = tensor::Tensor<f64>;
pub type AdamW64 = tensor::AdamW<f64>;
pub type Localizer = localizer::LocalizerModel<f64>;
pub type ModelInput64 = localizer::ModelInput<f64>;
pub type ForwardTrace64 = localizer::ForwardTrace<f64>;
