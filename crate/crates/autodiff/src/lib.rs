//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! Graphs are rebuilt for every training step: bind the parameters, run the
//! forward pass through [`Graph`] primitives, call [`Graph::backward`] on a
//! scalar loss and hand the resulting gradients to [`AdamState::update`].

pub mod adam;
pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod params;
pub mod tensor;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use error::{AutodiffError, Result};
pub use gradcheck::{check_gradients, GradCheckReport, Tolerance};
pub use graph::{gaussian_log_density, Gradients, Graph, NodeId, Primitive};
pub use params::{mlp_layers, Activation, BoundParams, LayerSpec, ParamSet, LEAKY_SLOPE};
pub use tensor::Tensor;

pub use ndarray;
