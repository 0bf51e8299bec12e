//! End-to-end orchestration behind the command-line interface: one flat run
//! configuration, stage commands that read and write manifested artifacts,
//! and the merged comparison report.

mod commands;
mod config;
mod report;

pub use commands::{
    eval_fqe_cmd, eval_online_cmd, gen_data_cmd, run_all_cmd, spawn_cohort_cmd, train_cmd,
    FqeReport, PolicySelector,
};
pub use config::{
    BcqSection, CohortSection, FqeSection, OnlineSection, OodSection, RunConfig,
};
pub use report::{report_cmd, ReportRow};
