use serde::{Deserialize, Serialize};

use super::{Posterior, Prior};
use crate::chain::{FeatureSpec, SequenceInstance};
use crate::error::{invalid, Result};
use crate::optimize::{subgradient_train, QuadRegularizer, SubgradConfig};

/// Lower bound on every posterior variance.
pub const VARIANCE_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LaplaceConfig {
    /// Laplace prior scale.
    pub lambda: f64,
    /// Slack penalty of every inner solve; overrides `inner.c`.
    pub c: f64,
    /// Outer iteration count `T`; `T - 1` alternations are run.
    pub outer_iters: usize,
    pub inner: SubgradConfig,
}

impl LaplaceConfig {
    pub fn new(lambda: f64, outer_iters: usize, inner: SubgradConfig) -> Result<Self> {
        let cfg = Self { lambda, c: 1.0, outer_iters, inner };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_c(mut self, c: f64) -> Result<Self> {
        self.c = c;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return Err(invalid(format!("lambda must be positive, got {}", self.lambda)));
        }
        if self.outer_iters < 2 {
            return Err(invalid("outer iteration count must be >= 2"));
        }
        self.inner_config().validate()
    }

    fn inner_config(&self) -> SubgradConfig {
        SubgradConfig { c: self.c, ..self.inner }
    }
}

/// Posterior plus the variance vector after each outer round.
#[derive(Clone, Debug)]
pub struct LaplaceTrace {
    pub posterior: Posterior,
    pub variances: Vec<Vec<f64>>,
}

/// Laplace MaxEnDNet by the variational alternation:
///
/// 1. solve the max-margin problem with penalty `½ wᵀ Σ⁻¹ w` for the mean `μ`,
///    then set `⟨w_k²⟩ = Σ_kk + μ_k²`;
/// 2. set `Σ_kk = √(⟨w_k²⟩ / λ)`, which is `1 / ⟨1/τ_k⟩` under the
///    variational posterior of the exponential mixing variable.
///
/// Starts from `Σ = I`; the returned variance is the one produced by the last
/// step 2, the returned mean the one produced by the last step 1.
pub fn train_laplace(data: &[SequenceInstance], spec: &FeatureSpec, cfg: &LaplaceConfig) -> Result<Posterior> {
    train_laplace_traced(data, spec, cfg).map(|t| t.posterior)
}

pub fn train_laplace_traced(
    data: &[SequenceInstance],
    spec: &FeatureSpec,
    cfg: &LaplaceConfig,
) -> Result<LaplaceTrace> {
    cfg.validate()?;
    let inner = cfg.inner_config();
    let mut sigma = vec![1.0; spec.num_weights()];
    let mut mean = vec![0.0; spec.num_weights()];
    let mut variances = Vec::with_capacity(cfg.outer_iters - 1);

    for _ in 1..cfg.outer_iters {
        let reg = QuadRegularizer::from_variances(&sigma)?;
        mean = subgradient_train(data, spec, &reg, &inner)?.weights;
        for (s, mu) in sigma.iter_mut().zip(&mean) {
            let second_moment = *s + mu * mu;
            *s = (second_moment / cfg.lambda).sqrt().max(VARIANCE_FLOOR);
        }
        variances.push(sigma.clone());
    }

    let posterior = Posterior::new(*spec, mean, sigma, Prior::Laplace { lambda: cfg.lambda })?;
    Ok(LaplaceTrace { posterior, variances })
}
