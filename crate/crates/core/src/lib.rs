//! Semi-supervised classification over two frozen-embedding views.
//!
//! The crate provides classic co-training ([`cotrain`]) and meta co-training
//! ([`mct`]), the classifiers they train ([`models`]), the numerical kernels
//! underneath ([`math`]), the view datasets and file format ([`data`]), and
//! view-quality diagnostics ([`diagnostics`]).

pub mod cotrain;
pub mod data;
pub mod diagnostics;
pub mod error;
pub mod math;
pub mod mct;
pub mod metrics;
pub mod models;
pub mod rng;
pub mod train;

pub use data::{PairedViews, SslData, ViewDataset};
pub use error::{Error, Result};
pub use math::{Matrix, ProbVector};
pub use metrics::{MetricRow, MetricsLog};
pub use models::{ModelSpec, Network};
