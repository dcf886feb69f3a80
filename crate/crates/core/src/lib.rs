pub mod config;
pub mod density;
pub mod distribution;
pub mod error;
pub mod kt;
pub mod mc;
pub mod optimizer;
mod qp;
pub mod quadrature;
pub mod records;
pub mod special;
mod table;

pub use error::{Error, Result};
