pub use nalgebra;

pub mod dag;
pub mod dataset;
pub mod density;
pub mod fairness;
pub mod gaussian;
pub mod gridtransport;
pub mod linalg;
pub mod seqtransport;
pub mod stats;
