//! sTransformer time-series forecasting at desk scale: a tape-based
//! reverse-mode differentiation core, the STCN dual-axis convolution,
//! sequence-guided mask attention, stacked blocks with a projection head,
//! and a training/evaluation/ablation harness.

pub mod config;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod params;
pub mod seqmask;
pub mod stcn;
pub mod tape;
pub mod tensor;
pub mod train;
pub mod verify;

pub use config::{AblationVariant, MaskSource, ModelConfig, ScnPadding};
pub use error::{Error, Result};
pub use tape::{Tape, Var};
pub use tensor::Tensor;
