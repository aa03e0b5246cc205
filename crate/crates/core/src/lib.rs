pub mod compactcase;
pub mod construct;
pub mod error;
pub mod gallery;
mod linalg;
pub mod moduli;
pub mod operators;
pub mod powernorms;
pub mod spaces;
pub mod witness;

pub use error::{OrbitError, Result};
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
