pub mod clm;
pub mod config;
pub mod data;
pub mod diff;
pub mod error;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod mpm;
pub mod optim;
pub mod oracle;
pub mod param;
pub mod selftest;
pub mod train;

pub use config::RunConfig;
pub use data::{Point, Sample};
pub use diff::{DenseArray, Graph, Var};
pub use error::{Error, Result};
pub use model::{Ldfnet, ModelConfig};
