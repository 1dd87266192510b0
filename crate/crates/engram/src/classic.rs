//! Classical associative memories: models that store and retrieve patterns
//! through fixed algebraic rules rather than learned parameters. They serve
//! as reference points for the differentiable memories elsewhere in the
//! crate and as oracles in tests.

pub mod hopfield;
pub mod hrr;
pub mod matrix_mem;
pub mod memnn;
pub mod sdm;
pub mod stack;
