//! Shrinkage curves and two-dimensional norm-ball boundaries as tabular data.

use std::f64::consts::PI;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::medn::{kl_norm, shrinkage_mean};

/// One row of `prior,lambda,eta,mean`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ShrinkagePoint {
    pub prior: &'static str,
    pub lambda: Option<f64>,
    pub eta: f64,
    pub mean: f64,
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if n < 2 || !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(invalid(format!("bad grid {lo}:{hi}:{n}")));
    }
    let step = (hi - lo) / (n - 1) as f64;
    Ok((0..n).map(|i| if i == n - 1 { hi } else { lo + step * i as f64 }).collect())
}

/// Posterior mean against `η`: the identity for the standard-normal prior and
/// `2η/(λ - η²)` for each Laplace scale. Every `|η|` must stay below `√λ`.
pub fn shrinkage_curve(lambdas: &[f64], etas: &[f64]) -> Result<Vec<ShrinkagePoint>> {
    let mut rows: Vec<ShrinkagePoint> =
        etas.iter().map(|&eta| ShrinkagePoint { prior: "gaussian", lambda: None, eta, mean: eta }).collect();
    for &lambda in lambdas {
        if !(lambda > 0.0) {
            return Err(invalid(format!("lambda must be positive, got {lambda}")));
        }
        for &eta in etas {
            let mean = shrinkage_mean(eta, lambda)
                .map_err(|_| Error::Domain(format!("grid point η = {eta} reaches ±√λ = ±{}", lambda.sqrt())))?;
            rows.push(ShrinkagePoint { prior: "laplace", lambda: Some(lambda), eta, mean });
        }
    }
    Ok(rows)
}

/// One boundary point of `norm,lambda,theta,w1,w2,level,residual,converged`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BallPoint {
    pub norm: &'static str,
    pub lambda: Option<f64>,
    pub theta: f64,
    pub w1: f64,
    pub w2: f64,
    pub level: f64,
    pub residual: f64,
    pub converged: bool,
}

/// Two-coordinate KL-norm.
pub fn kl_norm_2d(w1: f64, w2: f64, lambda: f64) -> Result<f64> {
    kl_norm(&[w1, w2], lambda)
}

/// Radius along direction `theta` where the KL-norm equals `level`, by bisection.
/// Returns the radius and whether the residual tolerance was met.
fn kl_radius(theta: f64, lambda: f64, level: f64) -> Result<(f64, bool)> {
    let (cos, sin) = (theta.cos(), theta.sin());
    let g = |r: f64| kl_norm_2d(r * cos, r * sin, lambda).map(|v| v - level);
    if g(0.0)? > 0.0 {
        return Err(invalid("level lies below the KL-norm at the origin"));
    }
    let mut hi = 1.0;
    while g(hi)? < 0.0 {
        hi *= 2.0;
        if hi > 1e12 {
            return Ok((f64::NAN, false));
        }
    }
    let mut lo = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid)? < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    let r = 0.5 * (lo + hi);
    Ok((r, g(r)?.abs() <= 1e-8))
}

/// KL-norm boundaries through `target` for each `λ`, plus the L1 and L2 unit
/// circles, traced at `n_angles` directions (a multiple of 4 so the axes are hit).
pub fn norm_ball(lambdas: &[f64], target: (f64, f64), n_angles: usize) -> Result<Vec<BallPoint>> {
    if n_angles == 0 || !n_angles.is_multiple_of(4) {
        return Err(invalid("angle count must be a positive multiple of 4"));
    }
    if target == (0.0, 0.0) {
        return Err(invalid("target point must be non-zero"));
    }
    let angles: Vec<f64> = (0..n_angles).map(|i| 2.0 * PI * i as f64 / n_angles as f64).collect();
    let mut rows = Vec::with_capacity(n_angles * (lambdas.len() + 2));
    for &theta in &angles {
        let (c, s) = axis_aligned(theta);
        let r1 = 1.0 / (c.abs() + s.abs());
        rows.push(BallPoint {
            norm: "l1",
            lambda: None,
            theta,
            w1: r1 * c,
            w2: r1 * s,
            level: 1.0,
            residual: (r1 * c).abs() + (r1 * s).abs() - 1.0,
            converged: true,
        });
    }
    for &theta in &angles {
        let (c, s) = axis_aligned(theta);
        rows.push(BallPoint {
            norm: "l2",
            lambda: None,
            theta,
            w1: c,
            w2: s,
            level: 1.0,
            residual: (c * c + s * s).sqrt() - 1.0,
            converged: true,
        });
    }
    for &lambda in lambdas {
        let level = kl_norm_2d(target.0, target.1, lambda)?;
        for &theta in &angles {
            let (c, s) = axis_aligned(theta);
            let (r, converged) = kl_radius(theta, lambda, level)?;
            let (w1, w2) = (r * c, r * s);
            let residual = if converged { kl_norm_2d(w1, w2, lambda)? - level } else { f64::NAN };
            rows.push(BallPoint { norm: "kl", lambda: Some(lambda), theta, w1, w2, level, residual, converged });
        }
    }
    Ok(rows)
}

/// `(cos θ, sin θ)` with exact zeros on the axes.
fn axis_aligned(theta: f64) -> (f64, f64) {
    let snap = |v: f64| if v.abs() < 1e-15 { 0.0 } else { v };
    (snap(theta.cos()), snap(theta.sin()))
}
