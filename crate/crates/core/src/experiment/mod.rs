//! Configuration loading, experiment orchestration and run outputs.

mod config;
mod output;
mod run;

pub use config::{
    load_config, ActivationChoice, ExperimentConfig, GainConfig, GridConfig, InputConfig,
    InputKind, IntegrationConfig, OutputConfig, PeConfig, PlantConfig, SnapshotConfig, BUNDLED,
};
pub use output::{
    read_timeseries, snapshot_file, true_kernel_file, write_timeseries, Diagnostics, FinalErrors,
    Manifest, PeSummary, RunStatus, StepCounts, ERRORS_FILE, MANIFEST_FILE, PE_SCAN_FILE,
    PE_SIGNAL_FILE,
};
pub use run::{check_experiment, rescan_pe, run_experiment, RunSummary};
