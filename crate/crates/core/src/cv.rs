//! Inverted K-fold cross-validation with a hyperparameter grid: each run
//! trains on a single fold and tests on the remaining `K - 1`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{FeatureSpec, SequenceInstance};
use crate::error::{invalid, Result};
use crate::metrics::{evaluate, summarize};
use crate::model_file::{fit, ModelKind, TrainParams};

pub const DEFAULT_LAMBDAS: [f64; 6] = [9.0, 16.0, 25.0, 36.0, 49.0, 64.0];
pub const DEFAULT_BETAS: [f64; 7] = [1.0, 10.0, 20.0, 30.0, 40.0, 50.0, 60.0];

#[derive(Clone, Debug, PartialEq)]
pub struct CvConfig {
    pub folds: usize,
    pub models: Vec<ModelKind>,
    /// Swept for LapMEDN only.
    pub lambdas: Vec<f64>,
    pub betas: Vec<f64>,
    /// Swept for L1-M³N only.
    pub radii: Vec<f64>,
    pub c: Option<f64>,
    pub iterations: usize,
    pub outer_iters: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            models: vec![ModelKind::M3n, ModelKind::Lapmedn, ModelKind::L1m3n],
            lambdas: DEFAULT_LAMBDAS.to_vec(),
            betas: DEFAULT_BETAS.to_vec(),
            radii: vec![10.0],
            c: None,
            iterations: 50,
            outer_iters: 3,
            seed: 0,
        }
    }
}

/// One CSV row. Fold rows leave the `_sd` columns empty; aggregate rows have
/// `fold = "all"` and carry mean and standard deviation across folds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CvRow {
    pub model: ModelKind,
    pub fold: String,
    pub lambda: Option<f64>,
    pub beta: f64,
    pub radius: Option<f64>,
    pub n_train: usize,
    pub per_label_err: f64,
    pub seq_err: f64,
    pub per_label_sd: Option<f64>,
    pub seq_sd: Option<f64>,
}

/// Shuffles instance indices once and cuts them into `folds` contiguous parts.
pub fn fold_indices(n: usize, folds: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if folds < 2 {
        return Err(invalid("need at least 2 folds"));
    }
    if folds > n {
        return Err(invalid(format!("{folds} folds requested for {n} instances")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok((0..folds).map(|f| idx[f * n / folds..(f + 1) * n / folds].to_vec()).collect())
}

#[derive(Clone, Copy)]
struct Cell {
    model: ModelKind,
    lambda: Option<f64>,
    beta: f64,
    radius: Option<f64>,
}

fn grid(cfg: &CvConfig) -> Vec<Cell> {
    let mut cells = Vec::new();
    for &model in &cfg.models {
        for &beta in &cfg.betas {
            match model {
                ModelKind::M3n => cells.push(Cell { model, lambda: None, beta, radius: None }),
                ModelKind::Lapmedn => {
                    cells.extend(cfg.lambdas.iter().map(|&l| Cell { model, lambda: Some(l), beta, radius: None }))
                }
                ModelKind::L1m3n => {
                    cells.extend(cfg.radii.iter().map(|&r| Cell { model, lambda: None, beta, radius: Some(r) }))
                }
            }
        }
    }
    cells
}

pub fn cross_validate(data: &[SequenceInstance], spec: &FeatureSpec, cfg: &CvConfig) -> Result<Vec<CvRow>> {
    if cfg.models.is_empty() || cfg.betas.is_empty() {
        return Err(invalid("need at least one model and one beta"));
    }
    let folds = fold_indices(data.len(), cfg.folds, cfg.seed)?;
    let cells = grid(cfg);
    let jobs: Vec<(usize, usize)> = (0..cells.len()).flat_map(|c| (0..folds.len()).map(move |f| (c, f))).collect();

    let results: Vec<(usize, usize, CvRow)> = jobs
        .par_iter()
        .map(|&(ci, fi)| {
            let cell = cells[ci];
            let train: Vec<SequenceInstance> = folds[fi].iter().map(|&i| data[i].clone()).collect();
            let test: Vec<SequenceInstance> = folds
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != fi)
                .flat_map(|(_, f)| f.iter().map(|&i| data[i].clone()))
                .collect();
            let mut params = TrainParams::new(cell.model);
            params.beta = cell.beta;
            params.c = cfg.c;
            params.iterations = cfg.iterations;
            params.outer_iters = cfg.outer_iters;
            params.seed = cfg.seed.wrapping_add(fi as u64);
            if let Some(l) = cell.lambda {
                params.lambda = l;
            }
            if let Some(r) = cell.radius {
                params.radius = r;
            }
            let model = fit(&train, spec, &params)?;
            let eval = evaluate(spec, &model.weights, &test)?;
            Ok((
                ci,
                fi,
                CvRow {
                    model: cell.model,
                    fold: fi.to_string(),
                    lambda: cell.lambda,
                    beta: cell.beta,
                    radius: cell.radius,
                    n_train: train.len(),
                    per_label_err: eval.per_label_err(),
                    seq_err: eval.seq_err(),
                    per_label_sd: None,
                    seq_sd: None,
                },
            ))
        })
        .collect::<Result<_>>()?;

    let mut sorted = results;
    sorted.sort_by_key(|(c, f, _)| (*c, *f));
    let mut rows = Vec::with_capacity(sorted.len() + cells.len());
    for (ci, chunk) in sorted.chunk_by(|a, b| a.0 == b.0).map(|ch| (ch[0].0, ch)).collect::<Vec<_>>() {
        let cell = cells[ci];
        let per_label: Vec<f64> = chunk.iter().map(|(_, _, r)| r.per_label_err).collect();
        let seq: Vec<f64> = chunk.iter().map(|(_, _, r)| r.seq_err).collect();
        let n_train = chunk.iter().map(|(_, _, r)| r.n_train).sum::<usize>() / chunk.len();
        rows.extend(chunk.iter().map(|(_, _, r)| r.clone()));
        let (pl, sq) = (summarize(&per_label), summarize(&seq));
        rows.push(CvRow {
            model: cell.model,
            fold: "all".into(),
            lambda: cell.lambda,
            beta: cell.beta,
            radius: cell.radius,
            n_train,
            per_label_err: pl.mean,
            seq_err: sq.mean,
            per_label_sd: Some(pl.sd),
            seq_sd: Some(sq.sd),
        });
    }
    Ok(rows)
}
