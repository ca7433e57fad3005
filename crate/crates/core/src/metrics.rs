//! Error rates and their aggregation across folds or seeds.

use serde::Serialize;

use crate::chain::{viterbi, FeatureSpec, SequenceInstance};
use crate::error::{dim, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Evaluation {
    pub sequences: usize,
    pub positions: usize,
    pub label_errors: usize,
    pub sequence_errors: usize,
}

impl Evaluation {
    /// Fraction of wrongly labeled positions.
    pub fn per_label_err(&self) -> f64 {
        ratio(self.label_errors, self.positions)
    }

    /// Fraction of sequences with at least one wrong label.
    pub fn seq_err(&self) -> f64 {
        ratio(self.sequence_errors, self.sequences)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Decodes every instance with `weights` and counts mistakes. For a posterior
/// pass its mean; the averaging rule decodes with the mean.
pub fn evaluate(spec: &FeatureSpec, weights: &[f64], data: &[SequenceInstance]) -> Result<Evaluation> {
    if weights.len() != spec.num_weights() {
        return Err(dim("weights do not match the feature spec"));
    }
    let mut eval = Evaluation::default();
    for inst in data {
        spec.check(&inst.x, Some(&inst.y))?;
        let (pred, _) = viterbi(spec, weights, &inst.x, None);
        let wrong = pred.0.iter().zip(&inst.y.0).filter(|(a, b)| a != b).count();
        eval.sequences += 1;
        eval.positions += inst.len();
        eval.label_errors += wrong;
        eval.sequence_errors += usize::from(wrong > 0);
    }
    Ok(eval)
}

/// Mean and sample standard deviation (zero for a single value).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub sd: f64,
}

pub fn summarize(values: &[f64]) -> Summary {
    if values.is_empty() {
        return Summary { mean: f64::NAN, sd: f64::NAN };
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() < 2 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    };
    Summary { mean, sd }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricsReport {
    pub runs: usize,
    pub per_label: Summary,
    pub seq: Summary,
}

impl MetricsReport {
    pub fn from_evaluations(evals: &[Evaluation]) -> Self {
        let per_label: Vec<f64> = evals.iter().map(Evaluation::per_label_err).collect();
        let seq: Vec<f64> = evals.iter().map(Evaluation::seq_err).collect();
        Self { runs: evals.len(), per_label: summarize(&per_label), seq: summarize(&seq) }
    }
}

/// Row of the `eval` CSV.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MetricsRow {
    pub model: String,
    pub dataset: String,
    pub n_train: Option<usize>,
    pub per_label_err: f64,
    pub seq_err: f64,
    pub seed: u64,
}

/// Writes rows with a header line.
pub fn write_csv<W: std::io::Write, T: Serialize>(out: W, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
