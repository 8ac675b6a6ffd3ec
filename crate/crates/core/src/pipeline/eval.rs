use std::fmt::Write as _;

use serde::Serialize;

use super::assemble::ProviderSet;
use super::checkpoint::Checkpoint;
use super::format::Dataset;
use crate::error::{Error, Result};
use crate::sequence_model::forward;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub video: u64,
    pub label: usize,
    pub predicted: usize,
    pub probabilities: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub classes: Vec<String>,
    pub samples: usize,
    pub correct: usize,
    pub accuracy: f64,
    /// `None` for classes absent from the evaluated set.
    pub per_class_accuracy: Vec<Option<f64>>,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<u64>>,
    pub predictions: Vec<Prediction>,
}

impl EvalReport {
    pub fn from_predictions(classes: Vec<String>, predictions: Vec<Prediction>) -> Result<Self> {
        let c = classes.len();
        if predictions.is_empty() {
            return Err(Error::InvalidArgument("nothing to evaluate".into()));
        }
        let mut confusion = vec![vec![0u64; c]; c];
        for p in &predictions {
            if p.label >= c || p.predicted >= c {
                return Err(Error::Shape(format!("class index outside {c} classes")));
            }
            confusion[p.label][p.predicted] += 1;
        }
        let correct = (0..c).map(|k| confusion[k][k] as usize).sum::<usize>();
        let per_class_accuracy = confusion
            .iter()
            .enumerate()
            .map(|(k, row)| {
                let n: u64 = row.iter().sum();
                (n > 0).then(|| row[k] as f64 / n as f64)
            })
            .collect();
        Ok(EvalReport {
            classes,
            samples: predictions.len(),
            correct,
            accuracy: correct as f64 / predictions.len() as f64,
            per_class_accuracy,
            confusion,
            predictions,
        })
    }

    /// Confusion matrix with a header row and a class-name column.
    pub fn confusion_delimited(&self, sep: char) -> String {
        let mut out = String::from("true\\predicted");
        for c in &self.classes {
            let _ = write!(out, "{sep}{c}");
        }
        out.push('\n');
        for (c, row) in self.classes.iter().zip(&self.confusion) {
            out.push_str(c);
            for v in row {
                let _ = write!(out, "{sep}{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn summary(&self) -> String {
        let mut out = format!("accuracy {:.4} ({}/{})\n", self.accuracy, self.correct, self.samples);
        for (c, a) in self.classes.iter().zip(&self.per_class_accuracy) {
            match a {
                Some(a) => {
                    let _ = writeln!(out, "  {c}: {a:.4}");
                }
                None => {
                    let _ = writeln!(out, "  {c}: no samples");
                }
            }
        }
        out
    }
}

/// Classifies every record of `data` with the checkpoint's model.
pub fn evaluate(ckpt: &Checkpoint, data: &Dataset, providers: &ProviderSet) -> Result<EvalReport> {
    if data.classes != ckpt.classes {
        return Err(Error::ConfigMismatch(format!(
            "class vocabulary {:?} differs from the checkpoint's {:?}",
            data.classes, ckpt.classes
        )));
    }
    let mut predictions = Vec::with_capacity(data.records.len());
    for rec in &data.records {
        let sample = ckpt.prepare(rec, providers)?;
        let probabilities = forward(&ckpt.params, &sample)?;
        let mut predicted = 0;
        for (k, &p) in probabilities.iter().enumerate() {
            if p > probabilities[predicted] {
                predicted = k;
            }
        }
        predictions.push(Prediction {
            video: rec.video,
            label: sample.label,
            predicted,
            probabilities,
        });
    }
    EvalReport::from_predictions(ckpt.classes.clone(), predictions)
}
