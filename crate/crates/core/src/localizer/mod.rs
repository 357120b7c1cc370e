//! Object localizer: predicts a per-cell probability heatmap for the object
//! a subgoal interacts with, from the semantic map and the instruction text.
//!
//! Category features pooled from the map are enhanced by a learned
//! category-correlation graph, written into per-cell tokens, and fused with
//! the instruction features by cross-attention before a per-cell decoder.

mod model;
mod train;
mod vocab;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mapper::SemanticMap;
use crate::tensor::TensorError;
use crate::world::{Cell, Subgoal, GRID_SIZE};

pub use model::{
    correlation_graph, graph_enhance, mask_tensor, positional_features, scaled_dot_attention, ForwardTrace,
    LocalizerModel, ModelInput, Params, FLAG_FEATURES, POS_FEATURES,
};
pub use train::{
    evaluate, nearest_instance_accuracy, train, write_loss_csv, LocalizationStats, TrainConfig, TrainReport,
    TrainSample,
};
pub use vocab::{tokenize, Vocab, UNK};

#[derive(Debug, Error)]
pub enum LocalizerError {
    #[error("dimension mismatch: expected {expected:?}, found {found:?}")]
    DimensionMismatch { expected: Vec<usize>, found: Vec<usize> },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("invalid sample: {0}")]
    InvalidSample(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, LocalizerError>;

/// Which side of the cross-attention supplies the queries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionRoles {
    /// Map cells query the instruction.
    #[default]
    Prose,
    /// The instruction queries the map cells.
    Eq2,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizerConfig {
    pub d: usize,
    pub conv_filters: usize,
    pub graph_layers: usize,
    pub use_graph: bool,
    pub attention: AttentionRoles,
    /// Keep one instruction feature per token instead of mean-pooling.
    pub token_level: bool,
    pub height: usize,
    pub width: usize,
    pub init_seed: u64,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        Self {
            d: 32,
            conv_filters: 8,
            graph_layers: 1,
            use_graph: true,
            attention: AttentionRoles::Prose,
            token_level: false,
            height: GRID_SIZE,
            width: GRID_SIZE,
            init_seed: 0,
        }
    }
}

/// Per-cell interaction probabilities, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Heatmap {
    pub height: usize,
    pub width: usize,
    pub probs: Vec<f64>,
}

impl Heatmap {
    pub fn get(&self, c: Cell) -> f64 {
        self.probs[c.row * self.width + c.col]
    }

    /// Highest-probability cell, lowest row-major index on ties.
    pub fn argmax(&self) -> Cell {
        let mut best = 0;
        for (i, &p) in self.probs.iter().enumerate() {
            if p > self.probs[best] {
                best = i;
            }
        }
        Cell::new(best / self.width, best % self.width)
    }
}

/// Default confidence threshold for [`select_target`].
pub const DEFAULT_TAU: f64 = 0.2;

/// Most probable explored cell, or `None` when no explored cell reaches `tau`.
pub fn select_target(heatmap: &Heatmap, map: &SemanticMap, tau: f64) -> Option<Cell> {
    select_target_excluding(heatmap, map, tau, &[])
}

/// [`select_target`] ignoring the cells in `exclude`.
pub fn select_target_excluding(heatmap: &Heatmap, map: &SemanticMap, tau: f64, exclude: &[Cell]) -> Option<Cell> {
    let mut best: Option<(usize, f64)> = None;
    for (i, &p) in heatmap.probs.iter().enumerate() {
        let c = Cell::new(i / heatmap.width, i % heatmap.width);
        if !map.explored(c) || exclude.contains(&c) {
            continue;
        }
        if best.is_none_or(|(_, b)| p > b) {
            best = Some((i, p));
        }
    }
    let (i, p) = best?;
    (p >= tau).then(|| Cell::new(i / heatmap.width, i % heatmap.width))
}

/// Text fed to the instruction encoder: the subgoal's action and object
/// words followed by the instruction sentence.
pub fn localizer_text(subgoal: &Subgoal, instruction: &str) -> String {
    format!("{} {} {}", subgoal.action.name(), subgoal.object.name(), instruction)
}
