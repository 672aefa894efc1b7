//! Differentiable building blocks: a reverse-mode tape, GRU layers, Adam,
//! finite-difference checks and the model container.

pub mod adam;
pub mod gradcheck;
pub mod graph;
mod gru;
pub mod layers;
pub mod model;
pub mod params;

pub use adam::{Adam, AdamConfig};
pub use graph::{row_softmax, BiGruIds, Graph, GruIds, NodeId, PitRecord};
pub use layers::{Layer, LayerSpec, Network};
pub use model::{CellKind, ModelConfig, ModelParams, Stage, CONCAT_ORDER};
pub use params::{Gradients, ParamId, ParamStore};
