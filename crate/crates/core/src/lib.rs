//! Exact equilibrium checking for finite-horizon probabilistic concurrent games.

pub mod atm;
pub mod error;
pub mod format;
pub mod gen;
pub mod model;
pub mod oracle;
pub mod product;
pub mod simulate;
pub mod strategy;
pub mod values;
pub mod verify;

pub use error::{Error, ParseError, Result};
