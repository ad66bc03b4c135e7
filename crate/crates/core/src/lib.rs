pub mod autodiff;
pub mod error;

pub use error::{Error, Result};
pub mod loss;
pub mod robust;
pub mod env;
pub mod agent;
pub mod eval;
