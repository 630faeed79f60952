//! Parameter containers, regime classification and the diffusion matrices
//! of the Heston SDE
//!
//! ```text
//! dY = (a − bY) dt + σ₁ √Y dW
//! dX = (α − βY) dt + σ₂ √Y (ϱ dW + √(1−ϱ²) dB)
//! ```

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{Mat2, Vec4};

/// Known diffusion coefficients and initial state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedCoeffs {
    pub sigma1: f64,
    pub sigma2: f64,
    pub rho: f64,
    pub y0: f64,
    pub x0: f64,
}

impl FixedCoeffs {
    pub fn new(sigma1: f64, sigma2: f64, rho: f64, y0: f64, x0: f64) -> Result<Self> {
        let f = FixedCoeffs {
            sigma1,
            sigma2,
            rho,
            y0,
            x0,
        };
        f.validate()?;
        Ok(f)
    }

    pub fn validate(&self) -> Result<()> {
        positive("sigma1", self.sigma1)?;
        positive("sigma2", self.sigma2)?;
        positive("y0", self.y0)?;
        finite("x0", self.x0)?;
        if !(self.rho > -1.0 && self.rho < 1.0) {
            return Err(Error::InvalidParameter {
                name: "rho",
                value: self.rho,
                reason: "must lie in (-1, 1)",
            });
        }
        Ok(())
    }

    /// `√(1 − ϱ²)`
    pub fn rho_bar(&self) -> f64 {
        (1.0 - self.rho * self.rho).sqrt()
    }

    pub fn feller_bound(&self) -> f64 {
        0.5 * self.sigma1 * self.sigma1
    }

    pub fn matrices(&self) -> DiffusionMatrices {
        diffusion_matrices(self)
    }
}

/// Drift vector `θ = (a, α, b, β)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftParams {
    pub a: f64,
    pub alpha: f64,
    pub b: f64,
    pub beta: f64,
}

impl DriftParams {
    pub fn new(a: f64, alpha: f64, b: f64, beta: f64) -> Result<Self> {
        let p = DriftParams { a, alpha, b, beta };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        positive("a", self.a)?;
        finite("alpha", self.alpha)?;
        finite("b", self.b)?;
        finite("beta", self.beta)
    }

    pub fn to_array(&self) -> Vec4 {
        [self.a, self.alpha, self.b, self.beta]
    }

    pub fn from_array(v: Vec4) -> Self {
        DriftParams {
            a: v[0],
            alpha: v[1],
            b: v[2],
            beta: v[3],
        }
    }

    /// `θ + r·h` for a diagonal scaling `r`.
    pub fn shifted(&self, r: &Vec4, h: &Vec4) -> Self {
        let t = self.to_array();
        Self::from_array([
            t[0] + r[0] * h[0],
            t[1] + r[1] * h[1],
            t[2] + r[2] * h[2],
            t[3] + r[3] * h[3],
        ])
    }

    pub fn regime(&self) -> Regime {
        classify_regime(self.b)
    }

    /// Drift of `(Y, X)` at volatility level `y`.
    #[inline]
    pub fn drift(&self, y: f64) -> [f64; 2] {
        [self.a - self.b * y, self.alpha - self.beta * y]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Subcritical,
    Critical,
    Supercritical,
}

impl Regime {
    pub fn name(&self) -> &'static str {
        match self {
            Regime::Subcritical => "subcritical",
            Regime::Critical => "critical",
            Regime::Supercritical => "supercritical",
        }
    }
}

pub fn classify_regime(b: f64) -> Regime {
    if b > 0.0 {
        Regime::Subcritical
    } else if b == 0.0 {
        Regime::Critical
    } else {
        Regime::Supercritical
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainStatus {
    Interior,
    Boundary,
    Invalid,
}

/// Position of `a` relative to `σ₁²/2`. The boundary `a = σ₁²/2` only counts
/// as admissible in the supercritical regime.
pub fn parameter_domain_check(a: f64, sigma1: f64, regime: Regime) -> DomainStatus {
    let bound = 0.5 * sigma1 * sigma1;
    if !a.is_finite() {
        DomainStatus::Invalid
    } else if a > bound {
        DomainStatus::Interior
    } else if a == bound && regime == Regime::Supercritical {
        DomainStatus::Boundary
    } else {
        DomainStatus::Invalid
    }
}

/// Requires `a > σ₁²/2`, or `a ≥ σ₁²/2` in the supercritical regime.
pub fn require_admissible(a: f64, sigma1: f64, regime: Regime, context: &'static str) -> Result<()> {
    match parameter_domain_check(a, sigma1, regime) {
        DomainStatus::Invalid => Err(Error::Domain { a, sigma1, context }),
        _ => Ok(()),
    }
}

/// `L`, `S = L·Lᵀ` and the inverses used throughout the likelihood.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionMatrices {
    /// Lower-triangular `[σ₁ 0; σ₂ϱ σ₂√(1−ϱ²)]`.
    pub l: Mat2,
    pub l_inv: Mat2,
    /// Inverse of the upper-triangular `Lᵀ`.
    pub lt_inv: Mat2,
    pub s: Mat2,
    pub s_inv: Mat2,
}

pub fn diffusion_matrices(fixed: &FixedCoeffs) -> DiffusionMatrices {
    let (s1, s2, rho) = (fixed.sigma1, fixed.sigma2, fixed.rho);
    let rho_bar = fixed.rho_bar();
    let l = Mat2::new(s1, 0.0, s2 * rho, s2 * rho_bar);
    let l_inv = Mat2::new(1.0 / s1, 0.0, -rho / (s1 * rho_bar), 1.0 / (s2 * rho_bar));
    let s = Mat2::new(s1 * s1, rho * s1 * s2, rho * s1 * s2, s2 * s2);
    let det = s1 * s1 * s2 * s2 * (1.0 - rho * rho);
    let s_inv = Mat2::new(s2 * s2 / det, -rho * s1 * s2 / det, -rho * s1 * s2 / det, s1 * s1 / det);
    DiffusionMatrices {
        l,
        l_inv,
        lt_inv: l_inv.transpose(),
        s,
        s_inv,
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value: v,
            reason: "must be finite and positive",
        })
    }
}

fn finite(name: &'static str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value: v,
            reason: "must be finite",
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn regimes_follow_sign_of_b() {
        assert_eq!(classify_regime(1.0), Regime::Subcritical);
        assert_eq!(classify_regime(0.0), Regime::Critical);
        assert_eq!(classify_regime(-0.0), Regime::Critical);
        assert_eq!(classify_regime(-0.5), Regime::Supercritical);
    }

    #[test]
    fn unit_uncorrelated_is_identity() {
        let m = diffusion_matrices(&FixedCoeffs::new(1.0, 1.0, 0.0, 1.0, 0.0).unwrap());
        assert_eq!(m.s, Mat2::IDENTITY);
        assert_eq!(m.l, Mat2::IDENTITY);
        assert_eq!(m.s_inv, Mat2::IDENTITY);
    }

    #[test]
    fn s_closed_form() {
        let m = diffusion_matrices(&FixedCoeffs::new(2.0, 3.0, 0.5, 1.0, 0.0).unwrap());
        let want = Mat2::new(4.0, 3.0, 3.0, 9.0);
        for i in 0..2 {
            for j in 0..2 {
                assert!((m.s.0[i][j] - want.0[i][j]).abs() < 1e-14);
            }
        }
        assert!((m.s.det() - 4.0 * 9.0 * 0.75).abs() < 1e-12);
    }

    #[test]
    fn domain_check() {
        assert_eq!(parameter_domain_check(1.0, 1.0, Regime::Subcritical), DomainStatus::Interior);
        assert_eq!(parameter_domain_check(0.5, 1.0, Regime::Supercritical), DomainStatus::Boundary);
        assert_eq!(parameter_domain_check(0.5, 1.0, Regime::Critical), DomainStatus::Invalid);
        assert_eq!(parameter_domain_check(0.3, 1.0, Regime::Subcritical), DomainStatus::Invalid);
    }

    #[test]
    fn rejects_bad_coefficients() {
        assert!(FixedCoeffs::new(1.0, 1.0, 1.0, 1.0, 0.0).is_err());
        assert!(FixedCoeffs::new(-1.0, 1.0, 0.0, 1.0, 0.0).is_err());
        assert!(FixedCoeffs::new(1.0, 1.0, 0.0, 0.0, 0.0).is_err());
        assert!(DriftParams::new(0.0, 0.0, 1.0, 0.0).is_err());
        assert!(DriftParams::new(1.0, f64::NAN, 1.0, 0.0).is_err());
    }

    proptest! {
        #[test]
        fn factor_and_inverse_consistent(
            s1 in 0.05f64..5.0, s2 in 0.05f64..5.0, rho in -0.99f64..0.99,
        ) {
            let m = diffusion_matrices(&FixedCoeffs::new(s1, s2, rho, 1.0, 0.0).unwrap());
            let llt = m.l.mul(&m.l.transpose());
            let closed = [[s1 * s1, rho * s1 * s2], [rho * s1 * s2, s2 * s2]];
            let fresh = m.s.inverse().unwrap();
            let prod = m.s_inv.mul(&m.s);
            for i in 0..2 {
                for j in 0..2 {
                    let scale = 1.0 + closed[i][j].abs();
                    prop_assert!((llt.0[i][j] - closed[i][j]).abs() <= 1e-14 * scale);
                    prop_assert!((m.s_inv.0[i][j] - fresh.0[i][j]).abs()
                        <= 1e-12 * (1.0 + fresh.0[i][j].abs()));
                    let id = if i == j { 1.0 } else { 0.0 };
                    prop_assert!((prod.0[i][j] - id).abs() <= 1e-12 * (1.0 + m.s_inv.max_abs_scale()));
                }
            }
            prop_assert!(m.s.det() > 0.0);
        }
    }

    trait Scale {
        fn max_abs_scale(&self) -> f64;
    }
    impl Scale for Mat2 {
        fn max_abs_scale(&self) -> f64 {
            self.0.iter().flatten().fold(0.0_f64, |a, v| a.max(v.abs()))
        }
    }
}
