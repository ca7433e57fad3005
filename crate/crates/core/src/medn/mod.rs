//! MaxEnDNet trainers and posterior-side analysis.
//!
//! A trained model is a diagonal Gaussian [`Posterior`] over the weights.
//! Because the discriminant is linear in `w`, the averaging predictor
//! `argmax_y ⟨wᵀ f(x, y)⟩_p` is exactly `argmax_y μᵀ f(x, y)`, so
//! [`predict_mean`] decodes with the posterior mean.

mod analysis;
mod laplace;

pub use analysis::{
    kl_norm, l1m3n_dual_check, laplace_kl, laplace_log_z, laplace_log_z_grad, shrinkage_mean, DualWeights,
};
pub use laplace::{train_laplace, train_laplace_traced, LaplaceConfig, LaplaceTrace, VARIANCE_FLOOR};

use serde::{Deserialize, Serialize};

use crate::chain::{viterbi, ChainModel, FeatureSpec, Features, LabelSeq, SequenceInstance};
use crate::error::{dim, invalid, Result};
use crate::optimize::{l1_constrained_train, subgradient_train, QuadRegularizer, SubgradConfig};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Prior {
    Gaussian,
    Laplace { lambda: f64 },
}

/// Diagonal Gaussian over the weight vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Posterior {
    pub spec: FeatureSpec,
    pub mean: Vec<f64>,
    pub var_diag: Vec<f64>,
    pub prior: Prior,
}

impl Posterior {
    pub fn new(spec: FeatureSpec, mean: Vec<f64>, var_diag: Vec<f64>, prior: Prior) -> Result<Self> {
        let k = spec.num_weights();
        if mean.len() != k || var_diag.len() != k {
            return Err(dim(format!(
                "posterior needs {k} entries, got mean {} and variance {}",
                mean.len(),
                var_diag.len()
            )));
        }
        if mean.iter().any(|v| !v.is_finite()) {
            return Err(invalid("posterior mean must be finite"));
        }
        if var_diag.iter().any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(invalid("posterior variances must be positive and finite"));
        }
        Ok(Self { spec, mean, var_diag, prior })
    }

    /// Point model carrying the posterior mean.
    pub fn mean_model(&self) -> ChainModel {
        ChainModel { spec: self.spec, weights: self.mean.clone() }
    }
}

/// Gaussian MaxEnDNet with a standard-normal prior: the posterior mean is the
/// M³N solution and the covariance stays at the identity.
pub fn train_gaussian(data: &[SequenceInstance], spec: &FeatureSpec, cfg: &SubgradConfig) -> Result<Posterior> {
    let k = spec.num_weights();
    let model = subgradient_train(data, spec, &QuadRegularizer::identity(k), cfg)?;
    Posterior::new(*spec, model.weights, vec![1.0; k], Prior::Gaussian)
}

/// Averaging prediction rule under `post`.
pub fn predict_mean(post: &Posterior, x: &Features) -> Result<LabelSeq> {
    post.spec.check(x, None)?;
    Ok(viterbi(&post.spec, &post.mean, x, None).0)
}

/// L1-M³N in its norm-ball-constrained form.
pub fn train_l1m3n(
    data: &[SequenceInstance],
    spec: &FeatureSpec,
    radius: f64,
    cfg: &SubgradConfig,
) -> Result<ChainModel> {
    l1_constrained_train(data, spec, radius, cfg)
}
