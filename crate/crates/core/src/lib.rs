pub mod bench;
pub mod data;
pub mod error;
pub mod hermite;
pub mod indexing;
pub mod io;
pub mod kde;
pub mod kron;
pub mod limits;
pub mod linalg;
pub mod moments;
pub mod perm;
pub mod quadform;
pub mod sparse;
pub mod symmetrizer;
pub mod symvec;

pub use error::{Error, Result};
pub use limits::Limits;
