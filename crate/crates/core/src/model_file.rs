//! One training entry point for all three model families and the versioned
//! JSON model file it produces.

use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::chain::{ChainModel, FeatureSpec, SequenceInstance};
use crate::error::{invalid, Error, Result};
use crate::medn::{train_gaussian, train_l1m3n, train_laplace_traced, LaplaceConfig, Posterior, Prior};
use crate::optimize::{primal_objective, Penalty, QuadRegularizer, SubgradConfig};

pub const MODEL_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModelKind {
    M3n,
    Lapmedn,
    L1m3n,
}

impl ModelKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ModelKind::M3n => "m3n",
            ModelKind::Lapmedn => "lapmedn",
            ModelKind::L1m3n => "l1m3n",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "m3n" => Ok(ModelKind::M3n),
            "lapmedn" => Ok(ModelKind::Lapmedn),
            "l1m3n" => Ok(ModelKind::L1m3n),
            other => Err(invalid(format!("unknown model {other:?}; expected m3n, lapmedn or l1m3n"))),
        }
    }
}

/// Hyperparameters for [`fit`]. When `c` is unset the slack penalty is
/// `200β` for M³N and L1-M³N and `1` for LapMEDN.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainParams {
    pub kind: ModelKind,
    pub beta: f64,
    pub c: Option<f64>,
    pub iterations: usize,
    pub outer_iters: usize,
    pub lambda: f64,
    pub radius: f64,
    pub seed: u64,
}

impl TrainParams {
    pub fn new(kind: ModelKind) -> Self {
        Self { kind, beta: 1.0, c: None, iterations: 50, outer_iters: 3, lambda: 25.0, radius: 10.0, seed: 0 }
    }

    pub fn effective_c(&self) -> f64 {
        self.c.unwrap_or(match self.kind {
            ModelKind::Lapmedn => 1.0,
            ModelKind::M3n | ModelKind::L1m3n => 200.0 * self.beta,
        })
    }

    pub fn subgrad(&self) -> Result<SubgradConfig> {
        SubgradConfig::new(self.beta, self.iterations, self.effective_c(), self.seed)
    }
}

/// Hyperparameters as recorded in a model file; fields that do not apply to
/// the model kind are omitted.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecordedParams {
    pub beta: f64,
    pub c: f64,
    pub iterations: usize,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outer_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format_version: u32,
    pub model: ModelKind,
    pub spec: FeatureSpec,
    pub hyperparameters: RecordedParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_train: Option<usize>,
    /// Final training objective of the (last) inner solve.
    pub objective: f64,
    /// Posterior mean, or the point estimate for L1-M³N.
    pub weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub variances: Option<Vec<f64>>,
}

impl ModelFile {
    pub fn chain_model(&self) -> Result<ChainModel> {
        ChainModel::new(self.spec, self.weights.clone())
    }

    pub fn posterior(&self) -> Result<Option<Posterior>> {
        let Some(var) = &self.variances else { return Ok(None) };
        let prior = match (self.model, self.hyperparameters.lambda) {
            (ModelKind::Lapmedn, Some(lambda)) => Prior::Laplace { lambda },
            _ => Prior::Gaussian,
        };
        Posterior::new(self.spec, self.weights.clone(), var.clone(), prior).map(Some)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut buf = serde_json::to_vec_pretty(self)?;
        buf.push(b'\n');
        Ok(buf)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&self.to_bytes()?)?;
        out.flush()?;
        Ok(())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let file: Self = serde_json::from_slice(bytes)?;
        file.check()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let file: Self = serde_json::from_reader(BufReader::new(File::open(path)?))?;
        file.check()
    }

    fn check(self) -> Result<Self> {
        if self.format_version != MODEL_FORMAT_VERSION {
            return Err(invalid(format!(
                "model file version {} is not supported (expected {MODEL_FORMAT_VERSION})",
                self.format_version
            )));
        }
        self.chain_model()?;
        self.posterior()?;
        Ok(self)
    }
}

/// Trains the requested model family on `data`.
pub fn fit(data: &[SequenceInstance], spec: &FeatureSpec, params: &TrainParams) -> Result<ModelFile> {
    let sub = params.subgrad()?;
    let mut recorded = RecordedParams {
        beta: params.beta,
        c: sub.c,
        iterations: params.iterations,
        seed: params.seed,
        lambda: None,
        outer_iters: None,
        radius: None,
    };
    let (weights, variances, objective) = match params.kind {
        ModelKind::M3n => {
            let post = train_gaussian(data, spec, &sub)?;
            let reg = Penalty::Quadratic(QuadRegularizer::identity(spec.num_weights()));
            let obj = primal_objective(data, spec, &post.mean, &reg, sub.c)?;
            (post.mean, Some(post.var_diag), obj)
        }
        ModelKind::Lapmedn => {
            let cfg = LaplaceConfig::new(params.lambda, params.outer_iters, sub)?.with_c(sub.c)?;
            recorded.lambda = Some(params.lambda);
            recorded.outer_iters = Some(params.outer_iters);
            let trace = train_laplace_traced(data, spec, &cfg)?;
            // The mean was fit against the variances from the round before the last update.
            let fit_var = trace
                .variances
                .len()
                .checked_sub(2)
                .map_or_else(|| vec![1.0; spec.num_weights()], |i| trace.variances[i].clone());
            let reg = Penalty::Quadratic(QuadRegularizer::from_variances(&fit_var)?);
            let obj = primal_objective(data, spec, &trace.posterior.mean, &reg, sub.c)?;
            (trace.posterior.mean, Some(trace.posterior.var_diag), obj)
        }
        ModelKind::L1m3n => {
            recorded.radius = Some(params.radius);
            let model = train_l1m3n(data, spec, params.radius, &sub)?;
            let obj = primal_objective(data, spec, &model.weights, &Penalty::None, sub.c)?;
            (model.weights, None, obj)
        }
    };
    Ok(ModelFile {
        format_version: MODEL_FORMAT_VERSION,
        model: params.kind,
        spec: *spec,
        hyperparameters: recorded,
        n_train: Some(data.len()),
        objective,
        weights,
        variances,
    })
}
