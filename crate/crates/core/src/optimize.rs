//! Stochastic subgradient training for the structured hinge objective and
//! Euclidean projection onto the L1 ball.
//!
//! Every trainer minimizes
//!
//! ```text
//! R(w) + C Σ_i [ max_y (wᵀ f(x_i, y) + hamming(y, y_i)) - wᵀ f(x_i, y_i) ]
//! ```
//!
//! where `R` is either a diagonal quadratic `½ wᵀ Σ⁻¹ w`, nothing, or the
//! indicator of an L1 ball. Instances are visited in an order reshuffled every
//! epoch; the step at global update `t` is `1 / (2β√t)`.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chain::{score_unchecked, viterbi, ChainModel, FeatureSpec, SequenceInstance};
use crate::error::{invalid, Error, Result};

/// Weights whose Euclidean norm exceeds this abort training.
pub const DIVERGENCE_NORM: f64 = 1e8;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgradConfig {
    /// Step-size scale: the step at update `t` is `1 / (2·beta·√t)`.
    pub beta: f64,
    /// Number of passes over the training set.
    pub iterations: usize,
    /// Slack penalty `C`.
    pub c: f64,
    pub seed: u64,
}

impl SubgradConfig {
    pub fn new(beta: f64, iterations: usize, c: f64, seed: u64) -> Result<Self> {
        let cfg = Self { beta, iterations, c, seed };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Couples the slack penalty to the step scale as `C = 200β`.
    pub fn coupled(beta: f64, iterations: usize, seed: u64) -> Result<Self> {
        Self::new(beta, iterations, 200.0 * beta, seed)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0 && self.beta.is_finite()) {
            return Err(invalid(format!("beta must be positive, got {}", self.beta)));
        }
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(invalid(format!("C must be non-negative, got {}", self.c)));
        }
        if self.iterations == 0 {
            return Err(invalid("iterations must be >= 1"));
        }
        Ok(())
    }

    pub fn step_size(&self, t: usize) -> f64 {
        1.0 / (2.0 * self.beta * (t as f64).sqrt())
    }
}

/// Diagonal of `Σ⁻¹` for the penalty `½ wᵀ Σ⁻¹ w`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadRegularizer {
    inv_diag: Vec<f64>,
}

impl QuadRegularizer {
    pub fn new(inv_diag: Vec<f64>) -> Result<Self> {
        if let Some(v) = inv_diag.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
            return Err(invalid(format!("inverse variances must be positive and finite, got {v}")));
        }
        Ok(Self { inv_diag })
    }

    /// `½ ‖w‖²`.
    pub fn identity(k: usize) -> Self {
        Self { inv_diag: vec![1.0; k] }
    }

    /// Builds `Σ⁻¹` from the diagonal of `Σ`.
    pub fn from_variances(var_diag: &[f64]) -> Result<Self> {
        Self::new(var_diag.iter().map(|v| 1.0 / v).collect())
    }

    pub fn inv_diag(&self) -> &[f64] {
        &self.inv_diag
    }

    pub fn value(&self, w: &[f64]) -> f64 {
        0.5 * self.inv_diag.iter().zip(w).map(|(a, x)| a * x * x).sum::<f64>()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Penalty {
    /// Plain structured hinge, no regularizer.
    None,
    Quadratic(QuadRegularizer),
    /// Constraint `‖w‖₁ ≤ radius`, enforced by projection after every step.
    L1Ball {
        radius: f64,
    },
}

impl Penalty {
    fn validate(&self, k: usize) -> Result<()> {
        match self {
            Penalty::None => Ok(()),
            Penalty::Quadratic(q) if q.inv_diag.len() != k => {
                Err(Error::Dimension(format!("regularizer has {} entries, model has {k} weights", q.inv_diag.len())))
            }
            Penalty::Quadratic(_) => Ok(()),
            Penalty::L1Ball { radius } if !(*radius > 0.0) => {
                Err(invalid(format!("L1 radius must be positive, got {radius}")))
            }
            Penalty::L1Ball { .. } => Ok(()),
        }
    }

    fn value(&self, w: &[f64]) -> f64 {
        match self {
            Penalty::Quadratic(q) => q.value(w),
            Penalty::None | Penalty::L1Ball { .. } => 0.0,
        }
    }
}

/// `R(w) + C Σ_i hinge_i(w)`; the L1-ball penalty contributes nothing here.
pub fn primal_objective(
    data: &[SequenceInstance],
    spec: &FeatureSpec,
    weights: &[f64],
    penalty: &Penalty,
    c: f64,
) -> Result<f64> {
    penalty.validate(spec.num_weights())?;
    check_data(data, spec)?;
    if weights.len() != spec.num_weights() {
        return Err(Error::Dimension("weight vector does not match spec".into()));
    }
    Ok(penalty.value(weights) + c * hinge_sum(data, spec, weights))
}

fn hinge_sum(data: &[SequenceInstance], spec: &FeatureSpec, w: &[f64]) -> f64 {
    data.iter()
        .map(|inst| {
            let (_, aug) = viterbi(spec, w, &inst.x, Some(&inst.y));
            (aug - score_unchecked(spec, w, &inst.x, &inst.y)).max(0.0)
        })
        .sum()
}

fn check_data(data: &[SequenceInstance], spec: &FeatureSpec) -> Result<()> {
    if data.is_empty() {
        return Err(invalid("training data is empty"));
    }
    data.iter().try_for_each(|inst| spec.check(&inst.x, Some(&inst.y)))
}

/// Runs the stochastic subgradient loop with the given penalty, starting at `w = 0`.
///
/// A quadratic penalty is applied through its exact proximal map after each
/// hinge step (`w_k ← w_k / (1 + α_t Σ⁻¹_kk / N)`), so very small variances
/// shrink a coordinate instead of making the iteration unstable.
pub fn train_with(
    data: &[SequenceInstance],
    spec: &FeatureSpec,
    penalty: &Penalty,
    cfg: &SubgradConfig,
) -> Result<ChainModel> {
    cfg.validate()?;
    penalty.validate(spec.num_weights())?;
    check_data(data, spec)?;

    let n = data.len() as f64;
    let mut w = vec![0.0; spec.num_weights()];
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut t = 0usize;

    for _ in 0..cfg.iterations {
        order.shuffle(&mut rng);
        for &i in &order {
            t += 1;
            let alpha = cfg.step_size(t);
            let inst = &data[i];
            let (worst, _) = viterbi(spec, &w, &inst.x, Some(&inst.y));
            if worst != inst.y && cfg.c > 0.0 {
                let scale = alpha * cfg.c;
                spec.accumulate(&inst.x, &worst, -scale, &mut w);
                spec.accumulate(&inst.x, &inst.y, scale, &mut w);
            }
            match penalty {
                Penalty::None => {}
                Penalty::Quadratic(q) => {
                    for (wk, a) in w.iter_mut().zip(&q.inv_diag) {
                        *wk /= 1.0 + alpha * a / n;
                    }
                }
                Penalty::L1Ball { radius } => w = l1_ball_project(&w, *radius)?,
            }
            let norm = w.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(norm <= DIVERGENCE_NORM) {
                return Err(Error::Divergence(format!("‖w‖₂ = {norm:e} after {t} updates")));
            }
        }
    }

    let objective = penalty.value(&w) + cfg.c * hinge_sum(data, spec, &w);
    if !objective.is_finite() {
        return Err(Error::Divergence(format!("objective is {objective}")));
    }
    ChainModel::new(*spec, w)
}

/// Minimizes `½ wᵀ Σ⁻¹ w + C Σ_i hinge_i(w)`.
pub fn subgradient_train(
    data: &[SequenceInstance],
    spec: &FeatureSpec,
    reg: &QuadRegularizer,
    cfg: &SubgradConfig,
) -> Result<ChainModel> {
    train_with(data, spec, &Penalty::Quadratic(reg.clone()), cfg)
}

/// Minimizes `C Σ_i hinge_i(w)` subject to `‖w‖₁ ≤ radius`.
pub fn l1_constrained_train(
    data: &[SequenceInstance],
    spec: &FeatureSpec,
    radius: f64,
    cfg: &SubgradConfig,
) -> Result<ChainModel> {
    train_with(data, spec, &Penalty::L1Ball { radius }, cfg)
}

/// Euclidean projection onto `{u : ‖u‖₁ ≤ radius}` by sorting magnitudes and
/// thresholding. Vectors already inside the ball are returned unchanged.
pub fn l1_ball_project(v: &[f64], radius: f64) -> Result<Vec<f64>> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(invalid(format!("radius must be positive and finite, got {radius}")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(invalid("cannot project a non-finite vector"));
    }
    let l1_norm = |u: &[f64]| u.iter().map(|x| x.abs()).sum::<f64>();
    if l1_norm(v) <= radius {
        return Ok(v.to_vec());
    }

    let mut mags: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    mags.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in mags.iter().enumerate() {
        cumsum += u;
        let candidate = (cumsum - radius) / (j + 1) as f64;
        if u - candidate > 0.0 {
            theta = candidate;
        } else {
            break;
        }
    }
    let mut out: Vec<f64> = v.iter().map(|&x| x.signum() * (x.abs() - theta).max(0.0)).collect();
    // Rounding in the threshold can leave the result a few ulps outside the ball.
    let mut scale = 1.0;
    loop {
        let s = l1_norm(&out);
        if s <= radius {
            break;
        }
        scale = if scale == 1.0 { radius / s } else { 1.0 - 4.0 * f64::EPSILON };
        out.iter_mut().for_each(|x| *x *= scale);
    }
    Ok(out)
}
