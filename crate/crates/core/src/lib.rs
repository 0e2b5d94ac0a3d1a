pub mod autodiff;
pub mod data;
pub mod error;
pub mod eval;
pub mod meta;
pub mod nn;
pub mod persist;
pub mod rng;
pub mod run;

pub use autodiff::{Graph, Tensor, Var};
pub use data::{Batch, MetaTask, SampleWindow, UnitWindows};
pub use error::{Error, Result};
pub use eval::MetricsReport;
pub use meta::{MetaConfig, Objective};
pub use nn::{ModelConfig, ParameterSet};
pub use persist::{Checkpoint, RunConfig};
