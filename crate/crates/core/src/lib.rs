pub mod blowup;
pub mod bounds;
pub mod bubble;
pub mod config;
pub mod error;
pub mod functional;
pub mod green;
pub mod maximizer;
pub mod mesh;
pub mod quadrature;
pub mod run;
pub mod sparse;
pub mod spectral;

pub use error::{Error, Result};
