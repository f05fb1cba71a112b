//! Edge classifier predicting which Connection edges appear in good duties.

pub mod adam;
pub mod checkpoint;
pub mod features;
pub mod infer;
pub mod loss;
pub mod net;
pub mod params;

use thiserror::Error;

use crate::graph::TimeSpaceGraph;
use features::{featurize, NormStats};
use infer::infer_logits;
use net::{sigmoid, GraphIndex};
use params::ModelParams;

#[derive(Debug, Error, PartialEq)]
pub enum GnnError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("non-finite activation")]
    NonFiniteActivation,
    #[error("checkpoint version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),
}

/// Probability per Connection edge, in edge-id order.
#[derive(Debug, Clone, PartialEq)]
pub struct EdgeScores {
    pub edge_ids: Vec<usize>,
    pub p: Vec<f64>,
}

/// Trained parameters together with the feature normalization they expect.
#[derive(Debug, Clone, PartialEq)]
pub struct Model {
    pub params: ModelParams,
    pub norm: NormStats,
}

impl Model {
    /// Eval-mode scores for every Connection edge of `g`.
    pub fn predict(&self, g: &TimeSpaceGraph) -> Result<EdgeScores, GnnError> {
        let f = self.norm.apply(&featurize(g));
        let index = GraphIndex::from_graph(g);
        let logits = infer_logits(&self.params, &f.x_init, &f.e_init, &index)?;
        Ok(EdgeScores {
            edge_ids: index.scored,
            p: logits.into_iter().map(sigmoid).collect(),
        })
    }
}
