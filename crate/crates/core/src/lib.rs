pub mod autodiff;
pub mod cnf;
pub mod diffusion;
pub mod error;
pub mod generate;
pub mod graph;
pub mod infer;
pub mod logic;
pub mod model;
pub mod rng;
pub mod sdp;
pub mod train;

pub use error::{Error, Result};
