//! Configuration, orchestration and report emission for `gmfilter`.

pub mod config;
pub mod error;
pub mod report;
pub mod run;
pub mod sample;

pub use config::{Format, RunConfig, Task};
pub use error::CliError;
pub use report::RunReport;
pub use run::{config_digest, run};
pub use sample::{demo_sample, SampleTable};
