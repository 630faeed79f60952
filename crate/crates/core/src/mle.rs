//! Closed-form drift MLE and the local minimax experiment for the slope
//! parameters.
//!
//! The discretised log-likelihood is exactly quadratic in the drift, and the
//! `Y` and `X` equations share the regressors `(1, −Y)`, so `(â, b̂)` and
//! `(α̂, β̂)` solve the same Gram system
//!
//! ```text
//! [∫ds/Y, −T; −T, ∫Y ds]·(â, b̂)ᵀ = (∫dY/Y, −(Y_T − y₀))ᵀ
//! ```
//!
//! with `X` increments on the right for `(α̂, β̂)`. The diffusion matrix drops
//! out.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{functionals, simulate_functionals, PathFunctionals, DEFAULT_FLOOR_EPS};
use crate::harness::{limit_draws, run_replicates, FlagCounts, MeanSe, Replicate, SampleMatrix};
use crate::likelihood::gram;
use crate::limits::scaling_matrix;
use crate::linalg::{norm, Mat2, Vec2};
use crate::model::{classify_regime, DriftParams, FixedCoeffs, Regime};
use crate::rng::SeedSpec;
use crate::sim::{SamplePath, Scheme};

/// Relative tolerance below which the Gram determinant counts as zero,
/// measured against `∫ds/Y · ∫Y ds`.
pub const GRAM_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MleResult {
    /// Raw estimate; `â` may fall below `σ₁²/2`.
    pub theta_hat: DriftParams,
    pub gram: Mat2,
    pub det: f64,
    /// `â < σ₁²/2`
    pub domain_flag: bool,
    pub floor_hits: usize,
}

fn solve_gram(g: &Mat2, f: &PathFunctionals) -> Result<(Mat2, f64)> {
    let det = g.det();
    if !(det > GRAM_REL_TOL * f.int_inv_y * f.int_y) {
        return Err(Error::DegenerateGram { det });
    }
    Ok((Mat2::new(g.0[1][1] / det, -g.0[0][1] / det, -g.0[1][0] / det, g.0[0][0] / det), det))
}

pub fn mle_from(f: &PathFunctionals, fixed: &FixedCoeffs) -> Result<MleResult> {
    let g = gram(f);
    let (inv, det) = solve_gram(&g, f)?;
    let ab = inv.apply([f.sum_dy_over_y, -f.sum_dy]);
    let ab2 = inv.apply([f.sum_dx_over_y, -f.sum_dx]);
    let theta_hat = DriftParams {
        a: ab[0],
        alpha: ab2[0],
        b: ab[1],
        beta: ab2[1],
    };
    Ok(MleResult {
        theta_hat,
        gram: g,
        det,
        domain_flag: theta_hat.a < fixed.feller_bound(),
        floor_hits: f.floor_hits,
    })
}

/// MLE from a stored path. Floor hits are reported, not rejected.
pub fn mle_drift(path: &SamplePath) -> Result<MleResult> {
    mle_from(&functionals(path, DEFAULT_FLOOR_EPS)?, &path.fixed)
}

/// `(b̂, β̂)` with `a` and `α` known:
/// `b̂ = (aT − (Y_T − y₀))/∫Y ds`, `β̂ = (αT − (X_T − x₀))/∫Y ds`.
pub fn mle_slopes_known_intercepts(f: &PathFunctionals, a: f64, alpha: f64) -> Result<Vec2> {
    if !(f.int_y > 0.0) {
        return Err(Error::DegenerateGram { det: f.int_y });
    }
    Ok([(a * f.t - f.sum_dy) / f.int_y, (alpha * f.t - f.sum_dx) / f.int_y])
}

pub const SCALED_ERROR_COLUMNS: [&str; 4] = ["err_a", "err_alpha", "err_b", "err_beta"];

/// `r_{θ,T}⁻¹(θ̂ − θ)` over `m` paths generated under `θ`. Degenerate
/// Gram matrices drop their replicate and are counted.
#[allow(clippy::too_many_arguments)]
pub fn scaled_error_distribution(
    scheme: Scheme,
    regime: Regime,
    theta: &DriftParams,
    fixed: &FixedCoeffs,
    t: f64,
    n_steps: usize,
    m: usize,
    master_seed: u64,
) -> Result<SampleMatrix> {
    if classify_regime(theta.b) != regime {
        return Err(Error::WrongRegime { expected: regime, b: theta.b });
    }
    let r = scaling_matrix(regime, theta, t)?;
    let th = theta.to_array();
    let batch = run_replicates(m, master_seed, |s| {
        let f = simulate_functionals(scheme, theta, fixed, t, n_steps, s, DEFAULT_FLOOR_EPS)?;
        let est = mle_from(&f, fixed)?.theta_hat.to_array();
        Ok(Replicate {
            value: (0..4).map(|k| (est[k] - th[k]) / r[k]).collect::<Vec<f64>>(),
            floor_hits: f.floor_hits,
        })
    })?;
    Ok(SampleMatrix {
        columns: SCALED_ERROR_COLUMNS.iter().map(|s| s.to_string()).collect(),
        replicate: batch.indices,
        rows: batch.values,
        floor_hits: batch.floor_hits,
        flags: batch.flags,
    })
}

/// Bounded bowl-shaped losses on `ℝ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Loss {
    /// `min(‖x‖², c)`
    BoundedQuadratic { c: f64 },
    /// `1{‖x‖ > c}`, the indicator of leaving the ball of radius `c`.
    Indicator { c: f64 },
}

impl Loss {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let n = norm(x);
        match *self {
            Loss::BoundedQuadratic { c } => (n * n).min(c),
            Loss::Indicator { c } => {
                if n > c {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let c = match *self {
            Loss::BoundedQuadratic { c } | Loss::Indicator { c } => c,
        };
        if c.is_finite() && c > 0.0 {
            Ok(())
        } else {
            Err(Error::InvalidParameter {
                name: "loss c",
                value: c,
                reason: "must be finite and positive",
            })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinimaxReport {
    pub loss: Loss,
    /// Risk of the `(b, β)` MLE, scaled by `e^{−bT/2}`.
    pub mle_risk: MeanSe,
    /// `E w((ηᵀ)⁻¹𝒵)` with `ηηᵀ` the limit information of the slope block.
    pub bound: MeanSe,
    pub m_used: usize,
    pub m_limit: usize,
    pub flags: FlagCounts,
}

impl MinimaxReport {
    /// `(mle_risk − bound)/√(se_risk² + se_bound²)`
    pub fn standardized_gap(&self) -> f64 {
        (self.mle_risk.mean - self.bound.mean) / self.mle_risk.se.hypot(self.bound.se)
    }
}

/// Local minimax experiment on the supercritical `(b, β)` submodel with
/// `a` and `α` known.
///
/// The bound draws `J = v·S⁻¹`, `v = −𝒴̃/b`, from the limit law and an
/// independent `𝒵 ~ N₂(0, I)`; `(ηᵀ)⁻¹𝒵` then equals `L𝒵/√v` in law.
#[allow(clippy::too_many_arguments)]
pub fn minimax_experiment(
    scheme: Scheme,
    theta: &DriftParams,
    fixed: &FixedCoeffs,
    loss: Loss,
    t: f64,
    n_steps: usize,
    m: usize,
    master_seed: u64,
    limit_steps: usize,
) -> Result<MinimaxReport> {
    loss.validate()?;
    if classify_regime(theta.b) != Regime::Supercritical {
        return Err(Error::WrongRegime {
            expected: Regime::Supercritical,
            b: theta.b,
        });
    }
    let seed = SeedSpec::new(master_seed, 0);
    let scale = (-0.5 * theta.b * t).exp();
    let batch = run_replicates(m, seed.derive(0x700).master_seed, |s| {
        let f = simulate_functionals(scheme, theta, fixed, t, n_steps, s, DEFAULT_FLOOR_EPS)?;
        let est = mle_slopes_known_intercepts(&f, theta.a, theta.alpha)?;
        let err = [(est[0] - theta.b) * scale, (est[1] - theta.beta) * scale];
        Ok(Replicate {
            value: loss.eval(&err),
            floor_hits: f.floor_hits,
        })
    })?;
    let draws = limit_draws(
        Regime::Supercritical,
        theta,
        fixed,
        m,
        limit_steps,
        seed.derive(0x701).master_seed,
    )?;
    let mut zrng = seed.derive(0x702).rng();
    let mut bound_vals = Vec::with_capacity(draws.len());
    for d in &draws {
        let (_, j) = d.slope_block();
        let cov = j.inverse().ok_or(Error::NotPositiveDefinite)?;
        let c = cov.cholesky()?;
        let z: Vec2 = [zrng.sample(StandardNormal), zrng.sample(StandardNormal)];
        bound_vals.push(loss.eval(&c.apply(z)));
    }
    Ok(MinimaxReport {
        loss,
        mle_risk: MeanSe::of(&batch.values),
        bound: MeanSe::of(&bound_vals),
        m_used: batch.values.len(),
        m_limit: bound_vals.len(),
        flags: batch.flags,
    })
}
