pub mod error;
pub mod exact;
pub mod kernels;
pub mod linalg;
pub mod mean;
pub mod method;
pub mod metrics;
pub mod model;
pub mod model_io;
pub mod optim;
pub mod pipeline;
pub mod rng;
pub mod svgp;
pub mod terrain;
pub mod two_stage;

pub use error::{GpError, Result};
