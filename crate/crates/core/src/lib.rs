pub mod basis;
pub mod codec;
pub mod controllability;
pub mod error;
pub mod linalg;
pub mod model;
pub mod optimizer;
pub mod propagator;
pub mod pulse;
pub mod state;
pub mod tomography;

pub use error::{Error, Result};
