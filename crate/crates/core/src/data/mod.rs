//! Loading, conditioning, windowing and task construction.

pub mod cache;
pub mod cmapss;
pub mod condition;
mod pipeline;
pub mod preprocess;
pub mod synth;
mod tasks;
pub mod vibration;
mod window;

pub use cmapss::{load_cmapss, select_sensors, CmapssSplit, Subset, UnitRecord};
pub use condition::{apply_cs, fit_conditions, global_standardize, ConditionModel, ConditionOptions};
pub use pipeline::{prepare_cmapss, CmapssOptions, PreparedCmapss, Standardization};
pub use preprocess::{cap_rul, ewma, sliding_windows, UnitSeries};
pub use synth::{fleet_windows, synthesize_degradation_fleet, FleetSpec, SyntheticUnit};
pub use tasks::{build_meta_tasks, MetaTask, TaskSpec, UnitWindows};
pub use window::{Batch, SampleWindow, WindowShape};
