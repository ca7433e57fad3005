//! Explicit PAC-Bayes margin bound for the averaging predictor.
//!
//! With `m = ⌈16 c² γ⁻² ln(N |Y|² / (KL + 1))⌉`:
//!
//! ```text
//! Pr_Q(M ≤ 0) ≤ Pr_D(M ≤ γ) + |Y| e^{-mγ²/(32c²)}
//!               + √((m·KL + ln N + 3 ln((m+1)/δ) + 2) / (2N - 1))
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundInputs {
    /// Sample count `N`.
    pub n: u64,
    /// Size of the output space `|Y|`; may be astronomically large.
    pub y_card: f64,
    /// Bound on the discriminant, `|F| ≤ c`.
    pub c: f64,
    /// Margin threshold.
    pub gamma: f64,
    /// `KL(p ‖ p₀)`.
    pub kl: f64,
    pub delta: f64,
    /// Empirical rate of margins at most `gamma`.
    pub empirical_margin_rate: f64,
}

impl BoundInputs {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64| v > 0.0 && v.is_finite();
        if self.n == 0 {
            return Err(invalid("N must be >= 1"));
        }
        if !(self.y_card >= 1.0 && self.y_card.is_finite()) {
            return Err(invalid(format!("|Y| must be >= 1, got {}", self.y_card)));
        }
        if !positive(self.c) || !positive(self.gamma) {
            return Err(invalid("c and gamma must be positive"));
        }
        if !(self.kl >= 0.0 && self.kl.is_finite()) {
            return Err(invalid(format!("KL must be non-negative, got {}", self.kl)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(invalid(format!("delta must lie in (0, 1), got {}", self.delta)));
        }
        if !(0.0..=1.0).contains(&self.empirical_margin_rate) {
            return Err(invalid("empirical margin rate must lie in [0, 1]"));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundTerms {
    pub m: u64,
    pub empirical: f64,
    pub union_term: f64,
    pub complexity_term: f64,
    pub bound: f64,
}

/// Evaluates every term of the bound; the total is not clipped to 1.
pub fn pac_bound_terms(inputs: &BoundInputs) -> Result<BoundTerms> {
    inputs.validate()?;
    let n = inputs.n as f64;
    let ln_y = inputs.y_card.ln();
    let scale = inputs.c * inputs.c / (inputs.gamma * inputs.gamma);
    let log_arg = n.ln() + 2.0 * ln_y - inputs.kl.ln_1p();
    // m indexes a union bound over natural numbers.
    let m = (16.0 * scale * log_arg).ceil().max(1.0);
    let union_term = (ln_y - m / (32.0 * scale)).exp();
    let complexity_term =
        ((m * inputs.kl + n.ln() + 3.0 * ((m + 1.0) / inputs.delta).ln() + 2.0) / (2.0 * n - 1.0)).sqrt();
    let bound = inputs.empirical_margin_rate + union_term + complexity_term;
    Ok(BoundTerms { m: m as u64, empirical: inputs.empirical_margin_rate, union_term, complexity_term, bound })
}

pub fn pac_bound(inputs: &BoundInputs) -> Result<f64> {
    pac_bound_terms(inputs).map(|t| t.bound)
}
