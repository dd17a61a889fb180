//! Detection and certification of transient centers in discrete-time maps.

pub mod criteria;
pub mod dynamics;
pub mod empirical;
pub mod error;
pub mod io;
pub mod linalg;
pub mod portrait;
pub mod zoo;

pub use error::{Error, Result};
