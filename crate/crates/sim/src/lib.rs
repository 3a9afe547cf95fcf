//! Deterministic model of a NAND flash SSD running k-mer intersection in
//! storage, and of the host/device pipeline around it.
//!
//! Absolute times depend on the rates given to the model. The scenarios are
//! meant to reproduce trends (who wins, how things scale), not the wall-clock
//! numbers of any particular machine.

pub mod config;
pub mod error;
pub mod experiment;
pub mod ftl;
pub mod multi;
pub mod nand;
pub mod pipeline;
pub mod time;

pub use config::SsdConfig;
pub use error::{Result, SimError};
pub use ftl::{metadata_size, place_database, BlockAddr, FtlMapping, MetadataSize};
pub use nand::{sim_sequential_read, trace_sequential_read, ReadStats, Resource, Span};
pub use experiment::{run_experiment, Experiment, Scenario, SummaryRow, TimelineRow, Workload};
pub use multi::{sim_multi_sample, MultiSampleParams, MultiSampleResult};
pub use pipeline::{sim_pipeline, PipelineTimeline, Stage, StageEvent, StageRates};
