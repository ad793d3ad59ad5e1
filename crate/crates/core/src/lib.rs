//! Multi-agent path finding on 4-connected grids: the CBS family (CBS, ECBS,
//! CBS with highways, iECBS), M* and inflated M*, randomized variants of both,
//! and a rapid randomized restart engine with the analysis tooling around it.

pub mod analysis;
pub mod budget;
pub mod campaign;
pub mod cbs;
pub mod error;
pub mod grid;
pub mod instance;
pub mod low_level;
pub mod mstar;
pub mod plot;
pub mod randomize;
pub mod restart;
pub mod solution;

pub use error::{MapfError, Result};
