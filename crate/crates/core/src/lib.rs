pub mod cli;
pub mod determinant;
pub mod error;
pub mod exterior;
pub mod hamiltonians;
pub mod linalg;
pub mod spectral;
pub mod transport;

pub use error::{Error, Result};
