//! Semantic Gaussian splatting.
//!
//! Every Gaussian carries a 3-vector semantic code alongside its geometry and
//! spherical-harmonics color. The codes are alpha-blended into a feature map
//! with the same rasterizer as color, mapped through a small affine head to
//! logits over a label dictionary, and trained jointly with geometry and
//! appearance in a single phase. Open-vocabulary queries are answered by
//! scoring every dictionary label against the query embedding, so results
//! always name the precise stored label ("coffee machine") even when the
//! prompt was vaguer ("coffee").

pub mod edit;
pub mod error;
pub mod eval;
pub mod fixture;
pub mod io;
pub mod math;
pub mod metrics;
pub mod model;
pub mod render;
pub mod rle;
pub mod semantics;
pub mod service;
pub mod train;

pub use error::{Error, Result};
pub use model::{Camera, EmbeddingTable, GaussianSoA, Scene, SemanticDictionary, SemanticHead};
pub use render::{render, render_naive, RenderOptions, RenderOutput};
