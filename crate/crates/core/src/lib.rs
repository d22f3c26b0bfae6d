//! Knowledge distillation of a domain vision classifier into a light head over
//! frozen encoder features, and gated fusion of that head with a
//! vision-language model's categorical answer.

pub mod checkpoint;
pub mod data;
pub mod distill;
pub mod error;
pub mod eval;
pub mod gating;
pub mod io_util;
pub mod labels;
pub mod optim;
pub mod pipeline;
pub mod predictors;
mod remote;
pub mod training;

pub use error::{Error, Result};
pub use labels::{
    argmax_label, one_hot, softened_softmax, LabelSpace, LogitVector, OneHotVector, ProbVector,
};
pub use remote::EndpointConfig;
