pub mod checkpoint;
pub mod classify;
pub mod data;
pub mod error;
pub mod interpret;
mod kmeans;
pub mod linalg;
pub mod model;
pub mod ot;
pub mod scalar;
pub mod synthetic;
pub mod training;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Model64 = model::Model<f64>;
pub type Model32 = model::Model<f32>;
pub type DocumentMeasure64 = model::DocumentMeasure<f64>;
pub type DocumentMeasure32 = model::DocumentMeasure<f32>;
pub type WordVectors64 = data::WordVectorTable<f64>;
pub type WordVectors32 = data::WordVectorTable<f32>;
