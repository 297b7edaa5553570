//! Micro- and macro-averaged F1 for single-label multi-class predictions.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("no predictions to evaluate")]
    EmptyInput,
    #[error("{pred} predictions but {gold} gold labels")]
    LengthMismatch { pred: usize, gold: usize },
}

/// Per-class confusion counts.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ConfusionCounts {
    pub tp: Vec<u64>,
    pub fp: Vec<u64>,
    pub fn_: Vec<u64>,
}

impl ConfusionCounts {
    pub fn from_labels(pred: &[usize], gold: &[usize]) -> Result<Self, MetricsError> {
        if pred.len() != gold.len() {
            return Err(MetricsError::LengthMismatch {
                pred: pred.len(),
                gold: gold.len(),
            });
        }
        if pred.is_empty() {
            return Err(MetricsError::EmptyInput);
        }
        let classes = pred.iter().chain(gold).max().map_or(0, |m| m + 1);
        let mut c = ConfusionCounts {
            tp: vec![0; classes],
            fp: vec![0; classes],
            fn_: vec![0; classes],
        };
        for (&p, &g) in pred.iter().zip(gold) {
            if p == g {
                c.tp[g] += 1;
            } else {
                c.fp[p] += 1;
                c.fn_[g] += 1;
            }
        }
        Ok(c)
    }

    pub fn num_classes(&self) -> usize {
        self.tp.len()
    }

    /// Number of evaluated items (`Σ TP + Σ FN`).
    pub fn total(&self) -> u64 {
        self.tp.iter().sum::<u64>() + self.fn_.iter().sum::<u64>()
    }

    /// Whether class `c` occurs in the gold labels.
    pub fn in_gold(&self, c: usize) -> bool {
        self.tp[c] + self.fn_[c] > 0
    }

    /// `2TP / (2TP + FP + FN)`, with 0/0 taken as 0.
    pub fn class_f1(&self, c: usize) -> f64 {
        let num = 2 * self.tp[c];
        let den = num + self.fp[c] + self.fn_[c];
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    }

    pub fn micro_f1(&self) -> f64 {
        let tp: u64 = self.tp.iter().sum();
        let fp: u64 = self.fp.iter().sum();
        let fn_: u64 = self.fn_.iter().sum();
        let den = 2 * tp + fp + fn_;
        if den == 0 {
            0.0
        } else {
            (2 * tp) as f64 / den as f64
        }
    }

    /// Mean per-class F1 over classes present in the gold labels.
    pub fn macro_f1(&self) -> f64 {
        let present: Vec<usize> = (0..self.num_classes())
            .filter(|&c| self.in_gold(c))
            .collect();
        if present.is_empty() {
            return 0.0;
        }
        present.iter().map(|&c| self.class_f1(c)).sum::<f64>() / present.len() as f64
    }
}

/// Micro-F1. For single-label predictions this is plain accuracy.
pub fn micro_f1(pred: &[usize], gold: &[usize]) -> Result<f64, MetricsError> {
    Ok(ConfusionCounts::from_labels(pred, gold)?.micro_f1())
}

pub fn macro_f1(pred: &[usize], gold: &[usize]) -> Result<f64, MetricsError> {
    Ok(ConfusionCounts::from_labels(pred, gold)?.macro_f1())
}

pub fn accuracy(pred: &[usize], gold: &[usize]) -> Result<f64, MetricsError> {
    let c = ConfusionCounts::from_labels(pred, gold)?;
    Ok(c.tp.iter().sum::<u64>() as f64 / c.total() as f64)
}

/// Accuracy of always predicting the most frequent gold class.
pub fn majority_baseline(gold: &[usize]) -> Result<f64, MetricsError> {
    let classes = gold.iter().max().ok_or(MetricsError::EmptyInput)? + 1;
    let mut counts = vec![0usize; classes];
    for &g in gold {
        counts[g] += 1;
    }
    Ok(*counts.iter().max().unwrap_or(&0) as f64 / gold.len() as f64)
}

/// Formats a fraction as a percentage with two decimals.
pub fn percent(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}
