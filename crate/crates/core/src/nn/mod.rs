//! Minimal neural-network substrate: autodiff graph, parameters, optimizer.

mod adamw;
mod graph;
mod params;

pub use adamw::{AdamW, AdamWConfig};
pub use graph::{Graph, Mat, NodeId};
pub use params::{scaled_uniform, xavier_uniform, Grads, Param, ParamId, ParamStore, TensorRecord};
