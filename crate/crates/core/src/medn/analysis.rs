use serde::{Deserialize, Serialize};

use crate::chain::{FeatureSpec, LabelSeq, SequenceInstance};
use crate::error::{dim, invalid, Error, Result};

/// Posterior mean of one coordinate under a Laplace prior with scale `lambda`
/// given its dual statistic `eta`: `2η / (λ - η²)`.
pub fn shrinkage_mean(eta: f64, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let gap = lambda - eta * eta;
    if !(gap > 0.0) {
        return Err(Error::Domain(format!("η² = {} must be below λ = {lambda}", eta * eta)));
    }
    Ok(2.0 * eta / gap)
}

/// `Σ_k ( √(μ_k² + 1/λ) - λ^{-1/2} log((√(λμ_k² + 1) + 1) / 2) )`.
pub fn kl_norm(mu: &[f64], lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let root = lambda.sqrt();
    Ok(mu
        .iter()
        .map(|m| {
            let s = (lambda * m * m + 1.0).sqrt();
            (m * m + 1.0 / lambda).sqrt() - ((s + 1.0) / 2.0).ln() / root
        })
        .sum())
}

/// `KL(p ‖ p₀)` of the Laplace-prior posterior with mean `mu`, i.e.
/// `√λ·kl_norm(μ) - K`, evaluated without the cancellation of that form.
pub fn laplace_kl(mu: &[f64], lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    Ok(mu
        .iter()
        .map(|m| {
            let s = (lambda * m * m + 1.0).sqrt();
            let excess = lambda * m * m / (s + 1.0);
            excess - (excess / 2.0).ln_1p()
        })
        .sum())
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda.is_finite() {
        Ok(())
    } else {
        Err(invalid(format!("lambda must be positive, got {lambda}")))
    }
}

/// Sparse Lagrange multipliers `α_i(y)`, one list of `(labeling, weight)` per instance.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DualWeights {
    pub per_instance: Vec<Vec<(LabelSeq, f64)>>,
}

impl DualWeights {
    pub fn new(per_instance: Vec<Vec<(LabelSeq, f64)>>) -> Result<Self> {
        for (i, entries) in per_instance.iter().enumerate() {
            if let Some((_, a)) = entries.iter().find(|(_, a)| !(*a >= 0.0 && a.is_finite())) {
                return Err(invalid(format!("instance {i}: multiplier {a} must be non-negative")));
            }
        }
        Ok(Self { per_instance })
    }

    pub fn zeros(n: usize) -> Self {
        Self { per_instance: vec![Vec::new(); n] }
    }

    fn check(&self, data: &[SequenceInstance], spec: &FeatureSpec) -> Result<()> {
        if self.per_instance.len() != data.len() {
            return Err(dim(format!("{} multiplier lists for {} instances", self.per_instance.len(), data.len())));
        }
        for (entries, inst) in self.per_instance.iter().zip(data) {
            for (y, _) in entries {
                spec.check(&inst.x, Some(y))?;
            }
        }
        Ok(())
    }

    /// `η = Σ_i Σ_y α_i(y) Δf_i(y)` with `Δf_i(y) = f(x_i, y_i) - f(x_i, y)`.
    pub fn eta(&self, data: &[SequenceInstance], spec: &FeatureSpec) -> Result<Vec<f64>> {
        self.check(data, spec)?;
        let mut eta = vec![0.0; spec.num_weights()];
        for (entries, inst) in self.per_instance.iter().zip(data) {
            for (y, a) in entries {
                spec.accumulate(&inst.x, &inst.y, *a, &mut eta);
                spec.accumulate(&inst.x, y, -*a, &mut eta);
            }
        }
        Ok(eta)
    }

    /// `Σ_i Σ_y α_i(y) Δℓ_i(y)` with Hamming `Δℓ`.
    pub fn weighted_loss(&self, data: &[SequenceInstance]) -> f64 {
        self.per_instance
            .iter()
            .zip(data)
            .flat_map(|(entries, inst)| entries.iter().map(move |(y, a)| a * hamming(y, &inst.y)))
            .sum()
    }

    pub fn instance_totals(&self) -> Vec<f64> {
        self.per_instance.iter().map(|e| e.iter().map(|(_, a)| a).sum()).collect()
    }
}

fn hamming(a: &LabelSeq, b: &LabelSeq) -> f64 {
    a.0.iter().zip(&b.0).filter(|(p, q)| p != q).count() as f64
}

fn check_feasible(eta: &[f64], lambda: f64) -> Result<()> {
    match eta.iter().position(|e| !(e * e < lambda)) {
        Some(k) => Err(Error::Domain(format!(
            "η_{k}² = {} is not below λ = {lambda}; the log-normalizer diverges",
            eta[k] * eta[k]
        ))),
        None => Ok(()),
    }
}

/// Log-normalizer of the Laplace-prior posterior at dual point `α`:
/// `-Σ α_i(y) Δℓ_i(y) + Σ_k log(λ / (λ - η_k²))`.
pub fn laplace_log_z(dual: &DualWeights, data: &[SequenceInstance], spec: &FeatureSpec, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let eta = dual.eta(data, spec)?;
    check_feasible(&eta, lambda)?;
    let log_ratio: f64 = eta.iter().map(|e| -(-e * e / lambda).ln_1p()).sum();
    Ok(log_ratio - dual.weighted_loss(data))
}

/// Partial derivatives of [`laplace_log_z`], shaped like `dual`:
/// `∂ log Z / ∂α_i(y) = vᵀ Δf_i(y) - Δℓ_i(y)` with `v_k = 2η_k / (λ - η_k²)`.
pub fn laplace_log_z_grad(
    dual: &DualWeights,
    data: &[SequenceInstance],
    spec: &FeatureSpec,
    lambda: f64,
) -> Result<Vec<Vec<f64>>> {
    check_lambda(lambda)?;
    let eta = dual.eta(data, spec)?;
    check_feasible(&eta, lambda)?;
    let v: Vec<f64> = eta.iter().map(|e| 2.0 * e / (lambda - e * e)).collect();
    let mut df = vec![0.0; spec.num_weights()];
    Ok(dual
        .per_instance
        .iter()
        .zip(data)
        .map(|(entries, inst)| {
            entries
                .iter()
                .map(|(y, _)| {
                    df.iter_mut().for_each(|x| *x = 0.0);
                    spec.accumulate(&inst.x, &inst.y, 1.0, &mut df);
                    spec.accumulate(&inst.x, y, -1.0, &mut df);
                    let proj: f64 = v.iter().zip(&df).map(|(a, b)| a * b).sum();
                    proj - hamming(y, &inst.y)
                })
                .collect()
        })
        .collect())
}

/// Tolerance used by [`l1m3n_dual_check`].
pub const DUAL_CHECK_TOL: f64 = 1e-9;

/// Feasibility for the L1-M³N dual: `|η_k| ≤ ½` for every `k` and
/// `Σ_y α_i(y) ≤ C` for every instance.
pub fn l1m3n_dual_check(dual: &DualWeights, data: &[SequenceInstance], spec: &FeatureSpec, c: f64) -> Result<bool> {
    let eta = dual.eta(data, spec)?;
    let box_ok = eta.iter().all(|e| e.abs() <= 0.5 + DUAL_CHECK_TOL);
    let cap_ok = dual.instance_totals().iter().all(|t| *t <= c + DUAL_CHECK_TOL);
    Ok(box_ok && cap_ok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::Features;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// `∫ w p₀(w) e^{wη} dw / ∫ p₀(w) e^{wη} dw` for `p₀(w) = (√λ/2) e^{-√λ|w|}`,
    /// by composite Simpson on each half-line.
    pub(crate) fn shrinkage_by_quadrature(eta: f64, lambda: f64) -> f64 {
        let b = lambda.sqrt();
        let integrand = |w: f64| (b / 2.0) * (-b * w.abs() + w * eta).exp();
        let decay = b - eta.abs();
        let span = 60.0 / decay;
        let n = 200_000;
        let h = span / n as f64;
        let (mut z, mut m) = (0.0, 0.0);
        for sign in [-1.0, 1.0] {
            for i in 0..=n {
                let w = sign * i as f64 * h;
                let coef = if i == 0 || i == n {
                    1.0
                } else if i % 2 == 1 {
                    4.0
                } else {
                    2.0
                };
                let f = integrand(w) * coef * h / 3.0;
                z += f;
                m += w * f;
            }
        }
        m / z
    }

    #[test]
    fn shrinkage_examples() {
        assert_eq!(shrinkage_mean(0.0, 7.0).unwrap(), 0.0);
        approx::assert_abs_diff_eq!(shrinkage_mean(1.0, 4.0).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
        approx::assert_abs_diff_eq!(shrinkage_mean(2.0, 9.0).unwrap(), 0.8, epsilon = 1e-15);
        approx::assert_abs_diff_eq!(shrinkage_by_quadrature(1.0, 4.0), 2.0 / 3.0, epsilon = 1e-6);
        approx::assert_abs_diff_eq!(shrinkage_by_quadrature(2.0, 9.0), 0.8, epsilon = 1e-6);
    }

    #[test]
    fn shrinkage_domain() {
        assert!(matches!(shrinkage_mean(2.0, 4.0), Err(Error::Domain(_))));
        assert!(matches!(shrinkage_mean(-3.0, 4.0), Err(Error::Domain(_))));
        assert!(shrinkage_mean(0.5, 0.0).is_err());
    }

    #[test]
    fn shrinkage_is_odd_increasing_and_decreasing_in_lambda() {
        for lambda in [4.0f64, 6.0] {
            let edge = 0.99 * lambda.sqrt();
            let grid: Vec<f64> = (0..=200).map(|i| -edge + 2.0 * edge * i as f64 / 200.0).collect();
            let vals: Vec<f64> = grid.iter().map(|&e| shrinkage_mean(e, lambda).unwrap()).collect();
            assert!(vals.windows(2).all(|p| p[0] < p[1]));
            for &e in &grid {
                assert_eq!(shrinkage_mean(-e, lambda).unwrap(), -shrinkage_mean(e, lambda).unwrap());
            }
        }
        for i in 1..100 {
            let eta = i as f64 / 100.0;
            assert!(shrinkage_mean(eta, 6.0).unwrap() < shrinkage_mean(eta, 4.0).unwrap());
        }
    }

    #[test]
    fn kl_norm_examples() {
        approx::assert_abs_diff_eq!(kl_norm(&[0.0], 4.0).unwrap(), 0.5, epsilon = 1e-15);
        let near_l1 = kl_norm(&[1.0], 1e6).unwrap();
        assert!((near_l1 - 1.0).abs() <= 0.01);
        assert!(kl_norm(&[0.5], 4.0).unwrap() < kl_norm(&[1.0], 4.0).unwrap());
        assert!(kl_norm(&[1.0], 0.0).is_err());
    }

    #[test]
    fn laplace_kl_agrees_with_scaled_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..200 {
            let lambda: f64 = rng.random_range(0.1..100.0);
            let mu: Vec<f64> = (0..5).map(|_| rng.random_range(-3.0..3.0)).collect();
            let scaled = lambda.sqrt() * kl_norm(&mu, lambda).unwrap() - mu.len() as f64;
            let kl = laplace_kl(&mu, lambda).unwrap();
            assert!(kl >= 0.0);
            approx::assert_abs_diff_eq!(kl, scaled, epsilon = 1e-9);
        }
        assert_eq!(laplace_kl(&[0.0; 4], 3.0).unwrap(), 0.0);
    }

    fn tiny_problem() -> (FeatureSpec, Vec<SequenceInstance>) {
        let spec = FeatureSpec::new(1, 2).unwrap();
        let x = Features::from_rows(&[vec![0.6], vec![-0.4]]).unwrap();
        (spec, vec![SequenceInstance::new(x, LabelSeq(vec![0, 1]), 2).unwrap()])
    }

    fn alternatives() -> Vec<LabelSeq> {
        vec![LabelSeq(vec![0, 0]), LabelSeq(vec![1, 0]), LabelSeq(vec![1, 1])]
    }

    #[test]
    fn log_z_is_zero_at_zero_dual() {
        let (spec, data) = tiny_problem();
        assert_eq!(laplace_log_z(&DualWeights::zeros(1), &data, &spec, 3.0).unwrap(), 0.0);
    }

    #[test]
    fn log_z_gradient_matches_finite_differences() {
        let (spec, data) = tiny_problem();
        let lambda = 4.0;
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let h = 1e-5;
        for _ in 0..20 {
            let alphas: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..0.4)).collect();
            let build = |a: &[f64]| {
                DualWeights::new(vec![alternatives().into_iter().zip(a.iter().copied()).collect()]).unwrap()
            };
            let dual = build(&alphas);
            let grad = laplace_log_z_grad(&dual, &data, &spec, lambda).unwrap();
            for j in 0..3 {
                let mut up = alphas.clone();
                let mut down = alphas.clone();
                up[j] += h;
                down[j] -= h;
                let fd = (laplace_log_z(&build(&up), &data, &spec, lambda).unwrap()
                    - laplace_log_z(&build(&down), &data, &spec, lambda).unwrap())
                    / (2.0 * h);
                let rel = (fd - grad[0][j]).abs() / grad[0][j].abs().max(1e-12);
                assert!(rel <= 1e-4, "fd {fd} vs closed {}", grad[0][j]);
            }
        }
    }

    #[test]
    fn log_z_blows_up_along_a_ray() {
        let (spec, data) = tiny_problem();
        let lambda: f64 = 1.0;
        let dir = DualWeights::new(vec![vec![(LabelSeq(vec![1, 1]), 1.0)]]).unwrap();
        let eta_max = dir.eta(&data, &spec).unwrap().iter().fold(0.0f64, |a, e| a.max(e.abs()));
        let limit = lambda.sqrt() / eta_max;
        let mut prev = f64::NEG_INFINITY;
        for i in 1..=40 {
            let s = limit * (1.0 - 0.5f64.powi(i));
            let ray = DualWeights::new(vec![vec![(LabelSeq(vec![1, 1]), s)]]).unwrap();
            let v = laplace_log_z(&ray, &data, &spec, lambda).unwrap();
            assert!(v > prev, "not increasing at step {i}");
            prev = v;
        }
        assert!(prev > 20.0);
        let past = DualWeights::new(vec![vec![(LabelSeq(vec![1, 1]), limit)]]).unwrap();
        assert!(matches!(laplace_log_z(&past, &data, &spec, lambda), Err(Error::Domain(_))));
    }

    #[test]
    fn dual_check_cases() {
        let (spec, data) = tiny_problem();
        assert!(l1m3n_dual_check(&DualWeights::zeros(1), &data, &spec, 1.0).unwrap());
        let capped = DualWeights::new(vec![vec![(LabelSeq(vec![0, 0]), 0.1), (LabelSeq(vec![1, 1]), 0.0)]]).unwrap();
        assert!(l1m3n_dual_check(&capped, &data, &spec, 0.2).unwrap());
        assert!(!l1m3n_dual_check(&capped, &data, &spec, 0.05).unwrap());
        assert!(DualWeights::new(vec![vec![(LabelSeq(vec![0, 0]), -0.1)]]).is_err());
    }

    #[test]
    fn dual_check_matches_brute_force() {
        let (spec, data) = tiny_problem();
        let inst = &data[0];
        let gold_f = spec.feature_vector(&inst.x, &inst.y).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut seen = [0usize; 2];
        for _ in 0..300 {
            let alphas: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..0.6)).collect();
            let c = rng.random_range(0.2..1.5);
            let dual =
                DualWeights::new(vec![alternatives().into_iter().zip(alphas.iter().copied()).collect()]).unwrap();
            let mut eta = vec![0.0; spec.num_weights()];
            for (y, a) in alternatives().iter().zip(&alphas) {
                let f = spec.feature_vector(&inst.x, y).unwrap();
                for k in 0..eta.len() {
                    eta[k] += a * (gold_f[k] - f[k]);
                }
            }
            let expected = eta.iter().all(|e| e.abs() <= 0.5 + 1e-9) && alphas.iter().sum::<f64>() <= c + 1e-9;
            let got = l1m3n_dual_check(&dual, &data, &spec, c).unwrap();
            assert_eq!(got, expected);
            seen[got as usize] += 1;
        }
        assert!(seen[0] > 0 && seen[1] > 0);
    }
}
