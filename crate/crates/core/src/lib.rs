//! Fixation-by-fixation evaluation of scanpath models.

pub mod bench;
pub mod best_of_k;
pub mod data;
pub mod density;
pub mod error;
pub mod fitting;
pub mod grid;
pub mod metrics;
pub mod models;
pub mod smap;

pub use error::{Error, Result};
