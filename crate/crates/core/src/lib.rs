pub mod analysis;
pub mod error;
pub mod linalg;
pub mod montecarlo;
pub mod sampling;
pub mod schemes;
pub mod sde;
pub mod taming;

pub use error::{Error, Result};
