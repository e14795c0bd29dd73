pub mod conic;
pub mod convexify;
pub mod error;
pub mod harness;
pub mod model;
pub mod sca;
pub mod scenarios;

pub use error::{Error, Result};
