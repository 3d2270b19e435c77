//! Accuracy and macro-F1 over the three sentiment classes.

use serde::{Deserialize, Serialize};

use crate::dataset::Label;
use crate::error::{Error, Result};
use crate::fusion::NUM_CLASSES;

/// Rows index the true label, columns the predicted label.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix(pub [[u64; NUM_CLASSES]; NUM_CLASSES]);

impl ConfusionMatrix {
    pub fn from_pairs(truth: &[Label], predicted: &[Label]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::DimensionMismatch {
                expected: truth.len(),
                found: predicted.len(),
            });
        }
        let mut m = ConfusionMatrix::default();
        for (t, p) in truth.iter().zip(predicted) {
            m.0[t.index()][p.index()] += 1;
        }
        Ok(m)
    }

    pub fn total(&self) -> u64 {
        self.0.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..NUM_CLASSES).map(|i| self.0[i][i]).sum()
    }

    pub fn accuracy(&self) -> Result<f64> {
        match self.total() {
            0 => Err(Error::EmptyInput("confusion matrix")),
            n => Ok(self.trace() as f64 / n as f64),
        }
    }

    /// `2PR / (P + R)` per class; a zero denominator scores 0.
    pub fn per_class_f1(&self) -> [f64; NUM_CLASSES] {
        std::array::from_fn(|c| {
            let tp = self.0[c][c] as f64;
            let predicted: u64 = (0..NUM_CLASSES).map(|r| self.0[r][c]).sum();
            let actual: u64 = self.0[c].iter().sum();
            let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
            let recall = if actual == 0 { 0.0 } else { tp / actual as f64 };
            if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            }
        })
    }
}

/// Unweighted mean of the per-class F1 scores.
pub fn macro_f1(confusion: &ConfusionMatrix) -> Result<f64> {
    if confusion.total() == 0 {
        return Err(Error::EmptyInput("confusion matrix"));
    }
    Ok(confusion.per_class_f1().iter().sum::<f64>() / NUM_CLASSES as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class_f1: [f64; NUM_CLASSES],
    pub confusion: ConfusionMatrix,
}

impl Metrics {
    pub fn from_confusion(confusion: ConfusionMatrix) -> Result<Self> {
        Ok(Metrics {
            accuracy: confusion.accuracy()?,
            macro_f1: macro_f1(&confusion)?,
            per_class_f1: confusion.per_class_f1(),
            confusion,
        })
    }

    pub fn from_pairs(truth: &[Label], predicted: &[Label]) -> Result<Self> {
        Metrics::from_confusion(ConfusionMatrix::from_pairs(truth, predicted)?)
    }

    /// Arithmetic mean of scalar metrics; confusion matrices are summed.
    pub fn mean(runs: &[Metrics]) -> Result<Metrics> {
        if runs.is_empty() {
            return Err(Error::EmptyInput("metrics"));
        }
        let n = runs.len() as f64;
        let mut confusion = ConfusionMatrix::default();
        for r in runs {
            for (i, row) in r.confusion.0.iter().enumerate() {
                for (j, v) in row.iter().enumerate() {
                    confusion.0[i][j] += v;
                }
            }
        }
        Ok(Metrics {
            accuracy: runs.iter().map(|r| r.accuracy).sum::<f64>() / n,
            macro_f1: runs.iter().map(|r| r.macro_f1).sum::<f64>() / n,
            per_class_f1: std::array::from_fn(|c| runs.iter().map(|r| r.per_class_f1[c]).sum::<f64>() / n),
            confusion,
        })
    }
}
