//! Confusion-matrix metrics with fake and real each taken as the positive
//! class in turn.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::fuse::LABEL_FAKE;

/// Counts with fake as the positive class.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn from_labels(truth: &[u8], predicted: &[u8]) -> Self {
        assert_eq!(truth.len(), predicted.len(), "label slices differ in length");
        let mut c = Confusion::default();
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t == LABEL_FAKE, p == LABEL_FAKE) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                (false, false) => c.tn += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize, what: &str, warnings: &mut Vec<String>) -> f64 {
    if den == 0 {
        warnings.push(format!("{what} undefined (zero denominator); reported as 0"));
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl ClassMetrics {
    fn new(tp: usize, fp: usize, fn_: usize, class: &str, warnings: &mut Vec<String>) -> Self {
        let precision = ratio(tp, tp + fp, &format!("{class} precision"), warnings);
        let recall = ratio(tp, tp + fn_, &format!("{class} recall"), warnings);
        let f1 = if precision + recall == 0.0 {
            0.0
        } else {
            2.0 * precision * recall / (precision + recall)
        };
        ClassMetrics {
            precision,
            recall,
            f1,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub fake: ClassMetrics,
    pub real: ClassMetrics,
    pub confusion: Confusion,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl MetricsReport {
    pub fn from_confusion(c: Confusion) -> Self {
        let mut warnings = Vec::new();
        let accuracy = ratio(c.tp + c.tn, c.total(), "accuracy", &mut warnings);
        let fake = ClassMetrics::new(c.tp, c.fp, c.fn_, "fake", &mut warnings);
        let real = ClassMetrics::new(c.tn, c.fn_, c.fp, "real", &mut warnings);
        for w in &warnings {
            log::warn!("{w}");
        }
        MetricsReport {
            accuracy,
            fake,
            real,
            confusion: c,
            warnings,
        }
    }

    pub fn from_labels(truth: &[u8], predicted: &[u8]) -> Self {
        Self::from_confusion(Confusion::from_labels(truth, predicted))
    }

    /// Unweighted mean of the two per-class values.
    pub fn macro_avg(&self) -> ClassMetrics {
        ClassMetrics {
            precision: 0.5 * (self.fake.precision + self.real.precision),
            recall: 0.5 * (self.fake.recall + self.real.recall),
            f1: 0.5 * (self.fake.f1 + self.real.f1),
        }
    }
}

impl fmt::Display for MetricsReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10}{:>10}{:>11}{:>9}{:>10}", "class", "accuracy", "precision", "recall", "f1")?;
        for (name, m) in [("fake", &self.fake), ("real", &self.real)] {
            writeln!(
                f,
                "{name:<10}{:>10.4}{:>11.4}{:>9.4}{:>10.4}",
                self.accuracy, m.precision, m.recall, m.f1
            )?;
        }
        let c = &self.confusion;
        write!(f, "confusion (fake positive): tp={} fp={} fn={} tn={}", c.tp, c.fp, c.fn_, c.tn)
    }
}
