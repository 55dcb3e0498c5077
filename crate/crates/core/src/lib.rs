#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod data;
pub mod dynamics;
pub mod eigenmaps;
pub mod error;
pub mod experiment;
pub mod graph;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod spectral_iv;
pub mod synthetic;

pub use data::Dataset;
pub use error::{Error, Result};
