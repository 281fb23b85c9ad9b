pub mod coercivity;
pub mod config;
pub mod collision;
pub mod envelope;
pub mod error;
pub mod grid;
pub mod interp;
pub mod io;
pub mod linalg;
pub mod norms;
pub mod operator;
pub mod par;
pub mod pipeline;
pub mod schedule;
pub mod spectral;
pub mod sphere;
pub mod symmetry;
pub mod trajectory;
pub mod verify;

pub use error::{Error, Result};
