pub mod benchmarks;
pub mod error;
pub mod expr;
pub mod linalg;
pub mod lm;
pub mod metrics;
pub mod mlp;
pub mod observer;
pub mod pinn;
pub mod series;
pub mod system;
pub mod transform;

pub use error::{Error, Result};
