//! Data handling, synthetic generation, training, metrics, ablations and
//! projection export.

pub mod ablation;
pub mod data;
pub mod metrics;
pub mod projection;
pub mod synth;
pub mod train;

pub use ablation::{run_ablation_suite, AblationReport, AblationRow, MeanSd};
pub use data::{load_jsonl, resolve_descriptions, write_jsonl, Dataset, LoadReport, NewsItem, Provenance, Split};
pub use metrics::{ClassMetrics, Confusion, MetricsReport};
pub use projection::{export_projection, pca, project_dataset, Pca, Projection};
pub use synth::{synth_generate, SynthConfig, SynthOutput};
pub use train::{train, Adam, EpochStats, TrainConfig, TrainOutcome, TrainedModel};
