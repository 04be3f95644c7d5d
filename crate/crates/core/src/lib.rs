//! Multi-timescale load event detection for 1 Hz aggregate power data.

pub mod config;
pub mod error;
pub mod evaluate;
pub mod exec;
pub mod ingest;
pub mod model;
pub mod postprocess;
pub mod motif;
pub mod pipeline;
pub mod stage1;
pub mod stage2;
pub mod stats;
pub mod synth;
pub mod trend;

pub use config::DetectionConfig;
pub use error::{Error, Result};
pub use exec::Execution;
pub use model::{event_features, events_overlap, Event, EventFeatures, PowerSeries, Stage};
