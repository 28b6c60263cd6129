//! Multi-seed comparison of the full model against its three ablations.

use std::fmt;

use serde::{Deserialize, Serialize};

use super::data::Dataset;
use super::metrics::MetricsReport;
use super::train::{train, TrainConfig};
use crate::error::{Error, Result};
use crate::model::Ablation;
use crate::parallel::Execution;

/// Sample mean and standard deviation (n − 1 denominator).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let sd = if xs.len() > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        MeanSd { mean, sd }
    }
}

impl fmt::Display for MeanSd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.4}±{:.4}", self.mean, self.sd)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub ablation: Ablation,
    pub baseline: bool,
    pub accuracy: MeanSd,
    /// Macro averages over the fake and real columns.
    pub precision: MeanSd,
    pub recall: MeanSd,
    pub f1: MeanSd,
    /// Per-seed reports, in seed order.
    pub runs: Vec<MetricsReport>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub seeds: Vec<u64>,
    pub rows: Vec<AblationRow>,
}

impl AblationReport {
    pub fn row(&self, ablation: Ablation) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.ablation == ablation)
    }
}

impl fmt::Display for AblationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:<16}{:>16}{:>16}{:>16}{:>16}",
            "variant", "accuracy", "precision", "recall", "f1"
        )?;
        for r in &self.rows {
            let name = if r.baseline {
                format!("{} (baseline)", r.ablation)
            } else {
                r.ablation.to_string()
            };
            writeln!(
                f,
                "{name:<16}{:>16}{:>16}{:>16}{:>16}",
                r.accuracy.to_string(),
                r.precision.to_string(),
                r.recall.to_string(),
                r.f1.to_string()
            )?;
        }
        write!(f, "seeds: {:?}", self.seeds)
    }
}

/// Trains and evaluates every variant for every seed. `progress` receives
/// each finished run.
pub fn run_ablation_suite(
    cfg: &TrainConfig,
    train_set: &Dataset,
    test_set: &Dataset,
    seeds: &[u64],
    exec: Execution,
    mut progress: impl FnMut(Ablation, u64, &MetricsReport),
) -> Result<AblationReport> {
    if seeds.len() < 2 {
        return Err(Error::Config(format!("ablation needs at least 2 seeds, got {}", seeds.len())));
    }
    let mut rows = Vec::new();
    for ablation in Ablation::ALL {
        let mut runs = Vec::new();
        for &seed in seeds {
            let run_cfg = TrainConfig {
                seed,
                ablation,
                ..cfg.clone()
            };
            let outcome = train(&run_cfg, train_set, exec, |_| {})?;
            let report = outcome.model.evaluate(test_set, exec)?;
            progress(ablation, seed, &report);
            runs.push(report);
        }
        let stat = |f: &dyn Fn(&MetricsReport) -> f64| MeanSd::of(&runs.iter().map(f).collect::<Vec<_>>());
        rows.push(AblationRow {
            ablation,
            baseline: ablation == Ablation::None,
            accuracy: stat(&|r| r.accuracy),
            precision: stat(&|r| r.macro_avg().precision),
            recall: stat(&|r| r.macro_avg().recall),
            f1: stat(&|r| r.macro_avg().f1),
            runs,
        });
    }
    Ok(AblationReport {
        seeds: seeds.to_vec(),
        rows,
    })
}
