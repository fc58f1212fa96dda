//! Evaluation: metrics, the dataset registry, and repeated-split experiments.

pub mod experiment;
pub mod metrics;
pub mod registry;

pub use experiment::{
    run_experiment, shape_exports, write_report, write_shapes, CellReport, Epsilon, ExperimentConfig,
    ExperimentOutput, MetricKind, MetricReport, ShapeExport,
};
pub use metrics::{auroc, mean_std, rmse};
pub use registry::{DatasetSource, Registry, RegistryEntry};
