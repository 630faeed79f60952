//! Exact log-likelihood ratios between drift parameters and their quadratic
//! `(Δ, J)` decomposition.
//!
//! For `θ = (a, α, b, β)` and `θ̃`, with `d(y) = μ̃(y) − μ(y)` the drift
//! difference,
//!
//! ```text
//! log dP̃/dP = ∫ (1/Y) dᵀ S⁻¹ [dY; dX] − ½ ∫ (1/Y) dᵀ S⁻¹ (μ̃ + μ) ds
//! ```
//!
//! and for `θ̃ = θ + r·h` the same quantity equals `hᵀΔ − ½hᵀJh` with
//!
//! ```text
//! Δ = r (I₂ ⊗ L⁻ᵀ) [∫dW/√Y, ∫dB/√Y, −∫√Y dW, −∫√Y dB]ᵀ
//! J = r ([∫ds/Y, −T; −T, ∫Y ds] ⊗ S⁻¹) r
//! ```
//!
//! All integrals are the left-point sums of [`crate::functionals`], so on an
//! Euler path that never hits the truncation floor the identity holds up to
//! rounding.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{functionals, PathFunctionals, DEFAULT_FLOOR_EPS};
use crate::linalg::{dot4, Mat2, Mat4, Vec2, Vec4};
use crate::model::{DiffusionMatrices, DriftParams, FixedCoeffs};
use crate::sim::SamplePath;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DeltaMode {
    /// From the stored Brownian increments.
    Brownian,
    /// From the observed increments of `(Y, X)`, inverting the diffusion map.
    Observable,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadDecomposition {
    /// `hᵀΔ − ½hᵀJh`
    pub log_lr: f64,
    pub delta: Vec4,
    pub info: Mat4,
    /// Diagonal of `r`.
    pub scaling: Vec4,
    pub h: Vec4,
}

fn require_likelihood_domain(a: f64, fixed: &FixedCoeffs, context: &'static str) -> Result<()> {
    if a.is_finite() && a >= fixed.feller_bound() {
        Ok(())
    } else {
        Err(Error::Domain {
            a,
            sigma1: fixed.sigma1,
            context,
        })
    }
}

/// `log dP_θ̃/dP_θ` on an observed path. Paths with grid values below the
/// floor are rejected with `FloorHit`.
pub fn log_rn(path: &SamplePath, theta: &DriftParams, theta_tilde: &DriftParams) -> Result<f64> {
    let f = functionals(path, DEFAULT_FLOOR_EPS)?;
    f.require_floor_free()?;
    log_rn_from(&f, &path.fixed, theta, theta_tilde)
}

/// [`log_rn`] from precomputed functionals. The floor is not enforced here;
/// Monte Carlo callers keep floored paths and report them as flagged. Expanding the drift difference
/// `d(Y) = D₀ − D₁Y` and `μ̃ + μ = E₀ − E₁Y` turns both integrals into
/// combinations of `Σ ΔY/Y`, `Σ ΔY`, `∫ds/Y`, `T` and `∫Y ds` (and the same
/// for `X`).
pub fn log_rn_from(f: &PathFunctionals, fixed: &FixedCoeffs, theta: &DriftParams, theta_tilde: &DriftParams) -> Result<f64> {
    require_likelihood_domain(theta.a, fixed, "log-likelihood ratio")?;
    require_likelihood_domain(theta_tilde.a, fixed, "log-likelihood ratio")?;
    let s_inv = fixed.matrices().s_inv;
    let d0 = [theta_tilde.a - theta.a, theta_tilde.alpha - theta.alpha];
    let d1 = [theta_tilde.b - theta.b, theta_tilde.beta - theta.beta];
    let e0 = [theta_tilde.a + theta.a, theta_tilde.alpha + theta.alpha];
    let e1 = [theta_tilde.b + theta.b, theta_tilde.beta + theta.beta];
    let stoch = s_inv.bilinear(d0, [f.sum_dy_over_y, f.sum_dx_over_y]) - s_inv.bilinear(d1, [f.sum_dy, f.sum_dx]);
    let comp = s_inv.bilinear(d0, e0) * f.int_inv_y
        - (s_inv.bilinear(d0, e1) + s_inv.bilinear(d1, e0)) * f.t
        + s_inv.bilinear(d1, e1) * f.int_y;
    Ok(stoch - 0.5 * comp)
}

/// `[∫ds/Y, −T; −T, ∫Y ds]`
pub fn gram(f: &PathFunctionals) -> Mat2 {
    Mat2::new(f.int_inv_y, -f.t, -f.t, f.int_y)
}

/// `J = r (G ⊗ S⁻¹) r`
pub fn info_from(f: &PathFunctionals, m: &DiffusionMatrices, r: &Vec4) -> Mat4 {
    gram(f).kron(&m.s_inv).sandwich_diag(*r)
}

/// Brownian-mode `Δ`.
pub fn delta_brownian(f: &PathFunctionals, m: &DiffusionMatrices, r: &Vec4) -> Result<Vec4> {
    let br = f.brownian()?;
    let top = m.lt_inv.apply([br.iw_inv, br.ib_inv]);
    let bottom = m.lt_inv.apply([-br.iw_sqrt, -br.ib_sqrt]);
    Ok([r[0] * top[0], r[1] * top[1], r[2] * bottom[0], r[3] * bottom[1]])
}

/// Observable-mode `Δ` from functionals. Substituting `[ΔW; ΔB] =
/// L⁻¹·res/√Y` gives `(I₂ ⊗ L⁻ᵀ)·M = [S⁻¹R₁; −S⁻¹R₀]` where `R₁` and `R₀`
/// are the residual integrals with weights `1/Y` and `1`.
pub fn delta_observable_from(f: &PathFunctionals, m: &DiffusionMatrices, theta: &DriftParams, r: &Vec4) -> Result<Vec4> {
    let r_inv = f.rational_residual_integrals(theta, 1.0, 0.0);
    let r_one = f.rational_residual_integrals(theta, 0.0, 1.0);
    let top = m.s_inv.apply(r_inv);
    let bottom = m.s_inv.apply(r_one);
    Ok([r[0] * top[0], r[1] * top[1], -r[2] * bottom[0], -r[3] * bottom[1]])
}

/// `hᵀΔ − ½hᵀJh`
pub fn quadratic_form(delta: &Vec4, info: &Mat4, h: &Vec4) -> f64 {
    dot4(*h, *delta) - 0.5 * info.quad_form(*h)
}

pub fn quad_decomposition(
    path: &SamplePath,
    theta: &DriftParams,
    r: &Vec4,
    h: &Vec4,
    mode: DeltaMode,
) -> Result<QuadDecomposition> {
    let f = functionals(path, DEFAULT_FLOOR_EPS)?;
    f.require_floor_free()?;
    quad_decomposition_from(&f, &path.fixed, theta, r, h, mode)
}

/// [`quad_decomposition`] from precomputed functionals, without the floor
/// check.
pub fn quad_decomposition_from(
    f: &PathFunctionals,
    fixed: &FixedCoeffs,
    theta: &DriftParams,
    r: &Vec4,
    h: &Vec4,
    mode: DeltaMode,
) -> Result<QuadDecomposition> {
    if r.iter().any(|&v| !(v.is_finite() && v > 0.0)) {
        return Err(Error::Invalid(format!("scaling must be positive, got {r:?}")));
    }
    require_likelihood_domain(theta.a, fixed, "quadratic decomposition")?;
    require_likelihood_domain(theta.a + r[0] * h[0], fixed, "perturbed drift a + r₁h₁")?;
    let m = fixed.matrices();
    let delta = match mode {
        DeltaMode::Brownian => delta_brownian(f, &m, r)?,
        DeltaMode::Observable => delta_observable_from(f, &m, theta, r)?,
    };
    let info = info_from(f, &m, r);
    Ok(QuadDecomposition {
        log_lr: quadratic_form(&delta, &info, h),
        delta,
        info,
        scaling: *r,
        h: *h,
    })
}

/// Observable-mode `Δ` by literally reconstructing each Brownian increment
/// as `L⁻¹·[ΔY − (a−bY)dt; ΔX − (α−βY)dt]/√Y` and summing.
pub fn delta_from_observables(path: &SamplePath, theta: &DriftParams, r: &Vec4) -> Result<Vec4> {
    let m = path.fixed.matrices();
    let dt = path.dt;
    let mut mw: [f64; 4] = [0.0; 4];
    let mut hits = 0;
    for i in 0..path.n_steps() {
        let y = path.y[i];
        if y < DEFAULT_FLOOR_EPS {
            hits += 1;
            continue;
        }
        let res: Vec2 = [
            path.y[i + 1] - y - (theta.a - theta.b * y) * dt,
            path.x[i + 1] - path.x[i] - (theta.alpha - theta.beta * y) * dt,
        ];
        let sy = y.sqrt();
        let inc = m.l_inv.apply([res[0] / sy, res[1] / sy]);
        mw[0] += inc[0] / sy;
        mw[1] += inc[1] / sy;
        mw[2] -= sy * inc[0];
        mw[3] -= sy * inc[1];
    }
    if hits > 0 {
        return Err(Error::FloorHit { count: hits });
    }
    let top = m.lt_inv.apply([mw[0], mw[1]]);
    let bottom = m.lt_inv.apply([mw[2], mw[3]]);
    Ok([r[0] * top[0], r[1] * top[1], r[2] * bottom[0], r[3] * bottom[1]])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedSpec;
    use crate::sim::{simulate_heston_euler, simulate_heston_exact};
    use proptest::prelude::*;

    fn setup() -> (DriftParams, FixedCoeffs) {
        (
            DriftParams::new(1.3, -0.2, 0.7, 0.4).unwrap(),
            FixedCoeffs::new(0.8, 1.4, 0.35, 0.9, 0.1).unwrap(),
        )
    }

    /// Direct evaluation of both integrals of the log-likelihood ratio.
    fn log_rn_literal(p: &SamplePath, th: &DriftParams, tt: &DriftParams) -> f64 {
        let s_inv = p.fixed.matrices().s_inv;
        let mut out = 0.0;
        for i in 0..p.n_steps() {
            let y = p.y[i];
            let mu = th.drift(y);
            let mt = tt.drift(y);
            let d = [mt[0] - mu[0], mt[1] - mu[1]];
            let inc = [p.y[i + 1] - y, p.x[i + 1] - p.x[i]];
            out += s_inv.bilinear(d, inc) / y;
            out -= 0.5 * s_inv.bilinear(d, [mt[0] + mu[0], mt[1] + mu[1]]) / y * p.dt;
        }
        out
    }

    #[test]
    fn same_parameter_gives_zero() {
        let (th, fx) = setup();
        let p = simulate_heston_euler(&th, &fx, 2.0, 1000, SeedSpec::new(0, 1)).unwrap();
        assert_eq!(log_rn(&p, &th, &th).unwrap(), 0.0);
        let q = quad_decomposition(&p, &th, &[0.5; 4], &[0.0; 4], DeltaMode::Brownian).unwrap();
        assert_eq!(q.log_lr, 0.0);
    }

    #[test]
    fn expanded_form_matches_literal_sums() {
        let (th, fx) = setup();
        let p = simulate_heston_euler(&th, &fx, 3.0, 3000, SeedSpec::new(0, 2)).unwrap();
        let tt = DriftParams::new(1.1, 0.3, -0.2, 1.0).unwrap();
        let a = log_rn(&p, &th, &tt).unwrap();
        let b = log_rn_literal(&p, &th, &tt);
        assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()), "{a} vs {b}");
    }

    #[test]
    fn info_block_readoff() {
        let (th, fx) = setup();
        let p = simulate_heston_euler(&th, &fx, 2.0, 1000, SeedSpec::new(0, 3)).unwrap();
        let f = functionals(&p, DEFAULT_FLOOR_EPS).unwrap();
        let r = [0.3, 0.3, 0.7, 0.7];
        let q = quad_decomposition(&p, &th, &r, &[0.0; 4], DeltaMode::Brownian).unwrap();
        let s_inv = fx.matrices().s_inv;
        for i in 0..2 {
            for j in 0..2 {
                let want = r[0] * r[0] * f.int_inv_y * s_inv.0[i][j];
                assert!((q.info.0[i][j] - want).abs() < 1e-13 * want.abs().max(1.0));
            }
        }
        assert!(q.info.symmetry_defect() <= 1e-12 * q.info.max_abs());
    }

    #[test]
    fn delta_modes_agree() {
        let (th, fx) = setup();
        let p = simulate_heston_euler(&th, &fx, 4.0, 4000, SeedSpec::new(0, 4)).unwrap();
        let r = [0.5, 0.5, 0.5, 0.5];
        let f = functionals(&p, DEFAULT_FLOOR_EPS).unwrap();
        let m = fx.matrices();
        let b = delta_brownian(&f, &m, &r).unwrap();
        let o = delta_observable_from(&f, &m, &th, &r).unwrap();
        let l = delta_from_observables(&p, &th, &r).unwrap();
        let scale = 1.0 + b.iter().fold(0.0_f64, |s, v| s.max(v.abs()));
        for k in 0..4 {
            assert!((b[k] - l[k]).abs() <= 1e-12 * scale, "{b:?} {l:?}");
            assert!((b[k] - o[k]).abs() <= 1e-11 * scale, "{b:?} {o:?}");
        }
    }

    #[test]
    fn observable_mode_on_exact_paths() {
        let (th, fx) = setup();
        let p = simulate_heston_exact(&th, &fx, 2.0, 500, SeedSpec::new(0, 5)).unwrap();
        let r = [1.0; 4];
        assert!(quad_decomposition(&p, &th, &r, &[1.0; 4], DeltaMode::Brownian).is_err());
        let d = delta_from_observables(&p, &th, &r).unwrap();
        assert!(d.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn delta_is_affine_in_a() {
        // Shifting a by δ moves the residual by −δ·dt each step, so the
        // reconstructed integrals move by −δ·L⁻¹[∫ds/Y; 0] and −δ·L⁻¹[T; 0]
        // (up to the sign on the √Y block).
        let (th, fx) = setup();
        let p = simulate_heston_euler(&th, &fx, 2.0, 2000, SeedSpec::new(0, 6)).unwrap();
        let f = functionals(&p, DEFAULT_FLOOR_EPS).unwrap();
        let r = [1.0; 4];
        let delta = 0.05;
        let base = delta_from_observables(&p, &th, &r).unwrap();
        let moved = delta_from_observables(&p, &DriftParams { a: th.a + delta, ..th }, &r).unwrap();
        let s_inv = fx.matrices().s_inv;
        let top = s_inv.apply([f.int_inv_y, 0.0]);
        let bottom = s_inv.apply([f.t, 0.0]);
        let want = [-delta * top[0], -delta * top[1], delta * bottom[0], delta * bottom[1]];
        for k in 0..4 {
            assert!((moved[k] - base[k] - want[k]).abs() < 1e-10, "{k}");
        }
    }

    #[test]
    fn domain_violations() {
        let (th, fx) = setup();
        let p = simulate_heston_euler(&th, &fx, 1.0, 100, SeedSpec::new(0, 7)).unwrap();
        let low = DriftParams { a: 0.2, ..th };
        assert!(matches!(log_rn(&p, &th, &low), Err(Error::Domain { .. })));
        // a + r₁h₁ below the bound
        assert!(quad_decomposition(&p, &th, &[1.0; 4], &[-1.1, 0.0, 0.0, 0.0], DeltaMode::Brownian).is_err());
        // boundary is admissible
        let edge = DriftParams { a: fx.feller_bound(), ..th };
        assert!(log_rn(&p, &th, &edge).is_ok());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(40))]
        #[test]
        fn quadratic_identity_holds(
            seed in any::<u64>(),
            b in -1.0f64..1.5,
            rho in -0.9f64..0.9,
            h in prop::array::uniform4(-1.0f64..1.0),
        ) {
            let th = DriftParams::new(1.5, 0.1, b, -0.3).unwrap();
            let fx = FixedCoeffs::new(1.0, 0.7, rho, 1.0, 0.0).unwrap();
            let p = simulate_heston_euler(&th, &fx, 2.0, 1000, SeedSpec::new(seed, 0)).unwrap();
            let r = [0.4, 0.4, 0.6, 0.6];
            let q = quad_decomposition(&p, &th, &r, &h, DeltaMode::Brownian).unwrap();
            let tt = th.shifted(&r, &h);
            let l = log_rn(&p, &th, &tt).unwrap();
            prop_assert!((l - q.log_lr).abs() <= 1e-10 * (1.0 + l.abs()));
            let ev = q.info.cholesky();
            prop_assert!(ev.is_ok());
        }
    }
}
