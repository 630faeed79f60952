//! Regime-specific scalings, stationary CIR facts, limit-law samplers and
//! closed-form Laplace oracles.
//!
//! Limit draws for the critical and supercritical regimes use exact CIR
//! transitions on a grid; only the time integrals are left-point sums.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat2, Mat4, Vec2, Vec4};
use crate::model::{classify_regime, DiffusionMatrices, DriftParams, FixedCoeffs, Regime};
use crate::rng::SeedSpec;
use crate::sim::{simulate_critical_limit_triplet, simulate_supercritical_limit_pair};
use crate::special::ln_gamma;

/// Diagonal of the scaling matrix `r_{θ,T}`:
///
/// * subcritical: `T^{−1/2}·I₄`
/// * critical: `diag(1/√log T, 1/√log T, 1/T, 1/T)`
/// * supercritical: `diag(1, 1, e^{bT/2}, e^{bT/2})`
pub fn scaling_matrix(regime: Regime, theta: &DriftParams, t: f64) -> Result<Vec4> {
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidParameter {
            name: "T",
            value: t,
            reason: "horizon must be finite and positive",
        });
    }
    match regime {
        Regime::Subcritical => {
            let s = 1.0 / t.sqrt();
            Ok([s; 4])
        }
        Regime::Critical => {
            if t <= 1.0 {
                return Err(Error::InvalidParameter {
                    name: "T",
                    value: t,
                    reason: "critical scaling needs T > 1",
                });
            }
            let s = 1.0 / t.ln().sqrt();
            Ok([s, s, 1.0 / t, 1.0 / t])
        }
        Regime::Supercritical => {
            if !(theta.b < 0.0) {
                return Err(Error::WrongRegime {
                    expected: Regime::Supercritical,
                    b: theta.b,
                });
            }
            let e = (0.5 * theta.b * t).exp();
            Ok([1.0, 1.0, e, e])
        }
    }
}

fn require_regime(theta: &DriftParams, expected: Regime) -> Result<()> {
    if classify_regime(theta.b) == expected {
        Ok(())
    } else {
        Err(Error::WrongRegime { expected, b: theta.b })
    }
}

fn require_interior(theta: &DriftParams, fixed: &FixedCoeffs, context: &'static str) -> Result<()> {
    if theta.a > fixed.feller_bound() {
        Ok(())
    } else {
        Err(Error::Domain {
            a: theta.a,
            sigma1: fixed.sigma1,
            context,
        })
    }
}

/// `[E(1/Y_∞), −1; −1, E(Y_∞)] = [2b/(2a−σ₁²), −1; −1, a/b]`
pub fn subcritical_left_factor(theta: &DriftParams, fixed: &FixedCoeffs) -> Result<Mat2> {
    require_regime(theta, Regime::Subcritical)?;
    require_interior(theta, fixed, "subcritical information")?;
    let s2 = fixed.sigma1 * fixed.sigma1;
    Ok(Mat2::new(2.0 * theta.b / (2.0 * theta.a - s2), -1.0, -1.0, theta.a / theta.b))
}

/// `J_θ = [2b/(2a−σ₁²), −1; −1, a/b] ⊗ S⁻¹`
pub fn subcritical_info(theta: &DriftParams, fixed: &FixedCoeffs) -> Result<Mat4> {
    Ok(subcritical_left_factor(theta, fixed)?.kron(&fixed.matrices().s_inv))
}

/// `J_θ⁻¹ = ((2a−σ₁²)/σ₁²)·[a/b, 1; 1, 2b/(2a−σ₁²)] ⊗ S`
pub fn subcritical_info_inverse(theta: &DriftParams, fixed: &FixedCoeffs) -> Result<Mat4> {
    require_regime(theta, Regime::Subcritical)?;
    require_interior(theta, fixed, "subcritical information")?;
    let s2 = fixed.sigma1 * fixed.sigma1;
    let k = (2.0 * theta.a - s2) / s2;
    let left = Mat2::new(theta.a / theta.b, 1.0, 1.0, 2.0 * theta.b / (2.0 * theta.a - s2)).scale(k);
    Ok(left.kron(&fixed.matrices().s))
}

/// Stationary law of the subcritical CIR process.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaLaw {
    /// `2a/σ₁²`
    pub shape: f64,
    /// `2b/σ₁²`
    pub rate: f64,
}

pub fn stationary_law(a: f64, b: f64, sigma1: f64) -> Result<GammaLaw> {
    if !(a > 0.0 && b > 0.0 && sigma1 > 0.0) || !(a.is_finite() && b.is_finite() && sigma1.is_finite()) {
        return Err(Error::Invalid(format!(
            "stationary law needs a > 0, b > 0, sigma1 > 0 (got a={a}, b={b}, sigma1={sigma1})"
        )));
    }
    let s2 = sigma1 * sigma1;
    Ok(GammaLaw {
        shape: 2.0 * a / s2,
        rate: 2.0 * b / s2,
    })
}

impl GammaLaw {
    /// `E(Y^κ) = Γ(shape + κ) / (rate^κ Γ(shape))` for `κ > −shape`.
    pub fn moment(&self, kappa: f64) -> Result<f64> {
        if !(kappa > -self.shape) {
            return Err(Error::InvalidParameter {
                name: "kappa",
                value: kappa,
                reason: "moment exists only for kappa > -2a/sigma1^2",
            });
        }
        Ok((ln_gamma(self.shape + kappa) - ln_gamma(self.shape) - kappa * self.rate.ln()).exp())
    }

    pub fn mean(&self) -> f64 {
        self.shape / self.rate
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        Gamma::new(self.shape, 1.0 / self.rate)
            .expect("validated parameters")
            .sample(rng)
    }

    /// Regularized lower incomplete Gamma `P(shape, rate·y)`, by series or
    /// continued fraction.
    pub fn cdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            return 0.0;
        }
        regularized_lower_gamma(self.shape, self.rate * y)
    }
}

fn regularized_lower_gamma(s: f64, x: f64) -> f64 {
    let log_pre = s * x.ln() - x - ln_gamma(s);
    if x < s + 1.0 {
        let mut term = 1.0 / s;
        let mut sum = term;
        let mut k = 1.0;
        while term.abs() > 1e-17 * sum.abs() && k < 10_000.0 {
            term *= x / (s + k);
            sum += term;
            k += 1.0;
        }
        (log_pre.exp() * sum).min(1.0)
    } else {
        // Lentz evaluation of the continued fraction for Q(s, x).
        let tiny = 1e-300;
        let mut b = x + 1.0 - s;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..10_000 {
            let an = -(i as f64) * (i as f64 - s);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let del = d * c;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (1.0 - log_pre.exp() * h).max(0.0)
    }
}

/// Auxiliary variables behind a limit draw.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LimitAux {
    None,
    Critical { y1: f64, int_y: f64, x1: f64 },
    Supercritical { y_end: f64, int_y: f64, v_tilde: f64 },
}

/// One sample of the limit pair `(Δ_θ, J_θ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LimitDraw {
    pub regime: Regime,
    pub delta: Vec4,
    pub info: Mat4,
    pub aux: LimitAux,
}

impl LimitDraw {
    /// `(b, β)` coordinates: `(Δ⁽²⁾, J⁽²⁾)`.
    pub fn slope_block(&self) -> (Vec2, Mat2) {
        let j = &self.info.0;
        (
            [self.delta[2], self.delta[3]],
            Mat2::new(j[2][2], j[2][3], j[3][2], j[3][3]),
        )
    }
}

/// Samples `N₄(0, J_θ)` with the Kronecker triangular factor
/// `chol(A) ⊗ chol(S⁻¹)`, computed once.
#[derive(Debug, Clone, Copy)]
pub struct SubcriticalSampler {
    info: Mat4,
    factor: Mat4,
}

impl SubcriticalSampler {
    pub fn new(theta: &DriftParams, fixed: &FixedCoeffs) -> Result<Self> {
        let left = subcritical_left_factor(theta, fixed)?;
        let s_inv = fixed.matrices().s_inv;
        let factor = left.cholesky()?.kron(&s_inv.cholesky()?);
        Ok(SubcriticalSampler {
            info: left.kron(&s_inv),
            factor,
        })
    }

    pub fn info(&self) -> &Mat4 {
        &self.info
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> LimitDraw {
        let z: Vec4 = std::array::from_fn(|_| rng.sample(StandardNormal));
        LimitDraw {
            regime: Regime::Subcritical,
            delta: self.factor.apply(z),
            info: self.info,
            aux: LimitAux::None,
        }
    }
}

pub fn sample_subcritical_limit(theta: &DriftParams, fixed: &FixedCoeffs, seed: SeedSpec) -> Result<LimitDraw> {
    Ok(SubcriticalSampler::new(theta, fixed)?.draw(&mut seed.rng()))
}

/// Critical limit: with `(𝒴₁, ∫₀¹𝒴, 𝒳₁)` from the limit SDE and an
/// independent `Z₂`,
///
/// ```text
/// Δ_θ = [ (a − σ₁²/2)^{−1/2} L⁻ᵀ Z₂ ; S⁻¹ [a − 𝒴₁; α − 𝒳₁] ]
/// J_θ = diag((a − σ₁²/2)⁻¹, ∫₀¹𝒴) ⊗ S⁻¹
/// ```
pub fn sample_critical_limit(theta: &DriftParams, fixed: &FixedCoeffs, n_steps: usize, seed: SeedSpec) -> Result<LimitDraw> {
    require_regime(theta, Regime::Critical)?;
    require_interior(theta, fixed, "critical limit")?;
    let (y1, int_y, x1) = simulate_critical_limit_triplet(theta.a, theta.alpha, fixed, n_steps, seed)?;
    let mut rng = seed.derive(0x2).rng();
    let z: Vec2 = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
    let m = fixed.matrices();
    let k = theta.a - fixed.feller_bound();
    let top = m.lt_inv.apply(z);
    let bottom = m.s_inv.apply([theta.a - y1, theta.alpha - x1]);
    let s = 1.0 / k.sqrt();
    Ok(LimitDraw {
        regime: Regime::Critical,
        delta: [s * top[0], s * top[1], bottom[0], bottom[1]],
        info: Mat2::diag(1.0 / k, int_y).kron(&m.s_inv),
        aux: LimitAux::Critical { y1, int_y, x1 },
    })
}

/// Supercritical limit as displayed for the full model:
///
/// ```text
/// Δ_θ = (I₂ ⊗ L⁻ᵀ) [σ₁⁻¹𝒱̃; Z₁; (−𝒴̃_{−1/b}/b)^{1/2} Z₂]
/// J_θ = diag(∫₀^{−1/b}𝒴̃, −𝒴̃_{−1/b}/b) ⊗ S⁻¹
/// 𝒱̃  = log 𝒴̃_{−1/b} − log y₀ − (a − σ₁²/2)∫₀^{−1/b}𝒴̃
/// ```
///
/// with `Z₁` a plain standard normal. For a finite horizon the second
/// coordinate of the `(a, α)` block is instead a mixed normal with variance
/// `∫₀^∞ ds/Y`, see [`crate::harness::check_laq_conditions`].
pub fn sample_supercritical_limit(
    theta: &DriftParams,
    fixed: &FixedCoeffs,
    n_steps: usize,
    seed: SeedSpec,
) -> Result<LimitDraw> {
    require_regime(theta, Regime::Supercritical)?;
    let (y_end, int_y) = simulate_supercritical_limit_pair(theta.a, fixed.sigma1, theta.b, fixed.y0, n_steps, seed)?;
    let mut rng = seed.derive(0x3).rng();
    let z1: f64 = rng.sample(StandardNormal);
    let z2: Vec2 = [rng.sample(StandardNormal), rng.sample(StandardNormal)];
    Ok(assemble_supercritical(theta, fixed, &fixed.matrices(), y_end, int_y, z1, z2))
}

pub(crate) fn assemble_supercritical(
    theta: &DriftParams,
    fixed: &FixedCoeffs,
    m: &DiffusionMatrices,
    y_end: f64,
    int_y: f64,
    z1: f64,
    z2: Vec2,
) -> LimitDraw {
    let v_tilde = y_end.ln() - fixed.y0.ln() - (theta.a - fixed.feller_bound()) * int_y;
    let v = -y_end / theta.b;
    let top = m.lt_inv.apply([v_tilde / fixed.sigma1, z1]);
    let sv = v.sqrt();
    let bottom = m.lt_inv.apply([sv * z2[0], sv * z2[1]]);
    LimitDraw {
        regime: Regime::Supercritical,
        delta: [top[0], top[1], bottom[0], bottom[1]],
        info: Mat2::diag(int_y, v).kron(&m.s_inv),
        aux: LimitAux::Supercritical { y_end, int_y, v_tilde },
    }
}

/// `ln cosh(x)` without overflow.
fn ln_cosh(x: f64) -> f64 {
    let x = x.abs();
    x + (-2.0 * x).exp().ln_1p() - std::f64::consts::LN_2
}

/// `E exp{−2μ² ∫₀ᵗ 𝒴̃}` for `d𝒴̃ = a dt + σ₁√𝒴̃ d𝒲`, `𝒴̃₀ = y₀`:
///
/// ```text
/// cosh(σ₁μt)^{−2a/σ₁²} · exp{−(2μy₀/σ₁)·tanh(σ₁μt)}
/// ```
///
/// The exponent of the tanh factor carries a minus sign. It follows from
/// the Riccati equation `B' = 2μ² − σ₁²B²/2`, `B(0) = 0`, whose solution is
/// `B = (2μ/σ₁)·tanh(σ₁μt)`, and it is the sign confirmed by exact-CIR Monte
/// Carlo (a positive sign would give values above 1 for a Laplace transform
/// of a nonnegative variable).
pub fn cir_integral_laplace(a: f64, sigma1: f64, y0: f64, t: f64, mu: f64) -> f64 {
    if mu == 0.0 {
        return 1.0;
    }
    let x = sigma1 * mu * t;
    let log = -2.0 * a / (sigma1 * sigma1) * ln_cosh(x) - 2.0 * mu * y0 / sigma1 * x.tanh();
    log.exp()
}

/// `E exp{hᵀΔ_θ − ½hᵀJ_θh}` at `h = (0, 1, 0, 0)` under the supercritical
/// limit law: `e^c · E exp{−c∫₀^{−1/b}𝒴̃}` with `c = 1/(2σ₂²(1−ϱ²))`.
pub fn laq_violation_value(theta: &DriftParams, fixed: &FixedCoeffs) -> Result<f64> {
    require_regime(theta, Regime::Supercritical)?;
    fixed.validate()?;
    let c = 1.0 / (2.0 * fixed.sigma2 * fixed.sigma2 * (1.0 - fixed.rho * fixed.rho));
    let mu = (0.5 * c).sqrt();
    Ok(c.exp() * cir_integral_laplace(theta.a, fixed.sigma1, fixed.y0, -1.0 / theta.b, mu))
}

/// `E e^{vᵀZ} = e^{‖v‖²/2}` for a standard normal `Z` in R².
pub fn gaussian_mgf_check(v: Vec2) -> f64 {
    (0.5 * (v[0] * v[0] + v[1] * v[1])).exp()
}
