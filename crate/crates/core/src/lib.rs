pub mod datasets;
pub mod diffnet;
pub mod error;
pub mod eval;
pub mod experiment;
pub mod losses;
pub mod matrix;
pub mod seed;
pub mod teacher;
pub mod trainer;

pub use error::{Error, Result};
pub use matrix::Matrix;
