use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Accuracy and macro-averaged precision/recall/F1 with the confusion matrix
/// (`confusion_matrix[true][predicted]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub per_class_precision: Vec<f64>,
    pub per_class_recall: Vec<f64>,
    pub per_class_f1: Vec<f64>,
    pub confusion_matrix: Vec<Vec<u64>>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Macro averages are unweighted means over all `class_count` classes;
/// any `0/0` (precision, recall or F1) is taken as 0.
pub fn classification_metrics(
    predictions: &[usize],
    labels: &[usize],
    class_count: usize,
) -> Result<MetricsReport> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(Error::Empty("no predictions to score".into()));
    }
    let mut cm = vec![vec![0u64; class_count]; class_count];
    for (&p, &l) in predictions.iter().zip(labels) {
        if p >= class_count || l >= class_count {
            return Err(Error::ClassOutOfRange {
                index: p.max(l),
                class_count,
            });
        }
        cm[l][p] += 1;
    }
    let total = predictions.len() as u64;
    let correct: u64 = (0..class_count).map(|c| cm[c][c]).sum();
    let mut precision = Vec::with_capacity(class_count);
    let mut recall = Vec::with_capacity(class_count);
    let mut f1 = Vec::with_capacity(class_count);
    for c in 0..class_count {
        let tp = cm[c][c];
        let predicted: u64 = cm.iter().map(|row| row[c]).sum();
        let actual: u64 = cm[c].iter().sum();
        let p = ratio(tp, predicted);
        let r = ratio(tp, actual);
        precision.push(p);
        recall.push(r);
        f1.push(if p + r == 0.0 {
            0.0
        } else {
            2.0 * p * r / (p + r)
        });
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / class_count as f64;
    Ok(MetricsReport {
        accuracy: ratio(correct, total),
        macro_precision: mean(&precision),
        macro_recall: mean(&recall),
        macro_f1: mean(&f1),
        per_class_precision: precision,
        per_class_recall: recall,
        per_class_f1: f1,
        confusion_matrix: cm,
    })
}
