//! Differentiable CAD programs: a small modelling language whose execution is
//! traced into a differentiable graph, plus the machinery to turn direct
//! vertex edits back into program-parameter updates.

pub mod autodiff;
pub mod dsl;
pub mod error;
pub mod gradcheck;
pub mod interp;
pub mod mesh;
pub mod model;
pub mod models;
pub mod objectives;
pub mod optimize;
pub mod sampling;
pub mod sync;

pub use error::Error;
