//! Leveled-HE SIMD semantics simulator and encrypted ST-GCN inference engine.

pub mod adjacency;
pub mod costmodel;
pub mod engine;
pub mod packing;
pub mod prune;
pub mod sim;

pub use adjacency::{AdjacencySet, Matrix, MergedSpatialMatrix, PatternedSparseMatrix};
pub use costmodel::{HeParams, HocFormulaInput, SecurityTable};
pub use engine::{
    EncryptedFeatureMap, EngineError, HocReport, InferenceOutput, LayerSpec, Model, ModelOutput,
    ModelSpec,
};
pub use packing::{GraphTensor, LayoutKind, PackingLayout};
pub use prune::{AccuracyEvaluator, PruneResult};
pub use sim::{Evaluator, HocCounter, OpCounts, SimCiphertext, SimContext};
