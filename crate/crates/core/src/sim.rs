//! Path simulation: full-truncation Euler for the Heston pair, exact CIR
//! transitions, and the auxiliary processes of the critical and
//! supercritical limit laws.

use std::io::{self, Write};

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DriftParams, FixedCoeffs};
use crate::rng::SeedSpec;

/// Steps used by the limit-law samplers when the caller does not choose.
pub const LIMIT_STEPS: usize = 4000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Full-truncation Euler with stored Brownian increments.
    #[serde(rename = "euler")]
    EulerFullTruncation,
    /// Exact CIR transitions for `Y`, conditional Gaussian `X`.
    #[serde(rename = "exact")]
    ExactCir,
}

impl Scheme {
    pub fn name(&self) -> &'static str {
        match self {
            Scheme::EulerFullTruncation => "euler",
            Scheme::ExactCir => "exact",
        }
    }

    pub fn from_name(s: &str) -> Option<Scheme> {
        match s {
            "euler" => Some(Scheme::EulerFullTruncation),
            "exact" => Some(Scheme::ExactCir),
            _ => None,
        }
    }
}

/// A path on the uniform grid `t_i = i·dt`, `i = 0..=n_steps`.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePath {
    pub dt: f64,
    pub y: Vec<f64>,
    pub x: Vec<f64>,
    /// Brownian increments, present for Euler paths only.
    pub dw: Option<Vec<f64>>,
    pub db: Option<Vec<f64>>,
    pub theta_gen: DriftParams,
    pub fixed: FixedCoeffs,
    pub scheme: Scheme,
}

impl SamplePath {
    pub fn n_steps(&self) -> usize {
        self.y.len() - 1
    }

    pub fn horizon(&self) -> f64 {
        self.dt * self.n_steps() as f64
    }

    pub fn has_increments(&self) -> bool {
        self.dw.is_some() && self.db.is_some()
    }

    /// CSV with header `t,Y,X,dW,dB`; increments sit on the row of their left
    /// endpoint, and are empty on the last row and for exact-scheme paths.
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "t,Y,X,dW,dB")?;
        let n = self.n_steps();
        for i in 0..=n {
            let t = i as f64 * self.dt;
            write!(out, "{},{},{}", t, self.y[i], self.x[i])?;
            match (&self.dw, &self.db) {
                (Some(dw), Some(db)) if i < n => writeln!(out, ",{},{}", dw[i], db[i])?,
                _ => writeln!(out, ",,")?,
            }
        }
        Ok(())
    }
}

/// `max(1000, ⌈200·T⌉)`
pub fn default_n_steps(t: f64) -> usize {
    ((200.0 * t).ceil() as usize).max(1000)
}

/// One full-truncation Euler step, shared by every Euler entry point so that
/// replay is bit-exact.
#[derive(Debug, Clone, Copy)]
pub(crate) struct EulerStepper {
    a: f64,
    b: f64,
    alpha: f64,
    beta: f64,
    sigma1: f64,
    s2_rho: f64,
    s2_rho_bar: f64,
    pub(crate) dt: f64,
}

impl EulerStepper {
    pub(crate) fn new(theta: &DriftParams, fixed: &FixedCoeffs, t: f64, n_steps: usize) -> Result<Self> {
        check_common(theta, fixed, t, n_steps)?;
        let dt = t / n_steps as f64;
        if !(dt > 0.0) {
            return Err(Error::InvalidParameter {
                name: "dt",
                value: dt,
                reason: "time step must be positive",
            });
        }
        Ok(EulerStepper {
            a: theta.a,
            b: theta.b,
            alpha: theta.alpha,
            beta: theta.beta,
            sigma1: fixed.sigma1,
            s2_rho: fixed.sigma2 * fixed.rho,
            s2_rho_bar: fixed.sigma2 * fixed.rho_bar(),
            dt,
        })
    }

    #[inline]
    pub(crate) fn step(&self, y: f64, x: f64, dw: f64, db: f64) -> (f64, f64) {
        let yp = y.max(0.0);
        let sy = yp.sqrt();
        let y1 = (y + (self.a - self.b * yp) * self.dt + self.sigma1 * sy * dw).max(0.0);
        let x1 = x + (self.alpha - self.beta * yp) * self.dt + sy * (self.s2_rho * dw + self.s2_rho_bar * db);
        (y1, x1)
    }
}

fn check_common(theta: &DriftParams, fixed: &FixedCoeffs, t: f64, n_steps: usize) -> Result<()> {
    theta.validate()?;
    fixed.validate()?;
    if !(t.is_finite() && t > 0.0) {
        return Err(Error::InvalidParameter {
            name: "T",
            value: t,
            reason: "horizon must be finite and positive",
        });
    }
    if n_steps == 0 {
        return Err(Error::InvalidParameter {
            name: "n_steps",
            value: 0.0,
            reason: "need at least one step",
        });
    }
    Ok(())
}

/// Runs the Euler recursion with fresh Gaussian increments, calling
/// `visit(y_i, x_i, dW_i, dB_i, y_{i+1}, x_{i+1})` for each step. Returns
/// the step size.
pub(crate) fn euler_drive<F>(
    theta: &DriftParams,
    fixed: &FixedCoeffs,
    t: f64,
    n_steps: usize,
    seed: SeedSpec,
    mut visit: F,
) -> Result<f64>
where
    F: FnMut(f64, f64, f64, f64, f64, f64),
{
    let stepper = EulerStepper::new(theta, fixed, t, n_steps)?;
    let sq = stepper.dt.sqrt();
    let mut rng = seed.rng();
    let (mut y, mut x) = (fixed.y0, fixed.x0);
    for _ in 0..n_steps {
        let dw = sq * rng.sample::<f64, _>(StandardNormal);
        let db = sq * rng.sample::<f64, _>(StandardNormal);
        let (y1, x1) = stepper.step(y, x, dw, db);
        visit(y, x, dw, db, y1, x1);
        y = y1;
        x = x1;
    }
    Ok(stepper.dt)
}

pub fn simulate_heston_euler(
    theta: &DriftParams,
    fixed: &FixedCoeffs,
    t: f64,
    n_steps: usize,
    seed: SeedSpec,
) -> Result<SamplePath> {
    let mut ys = Vec::with_capacity(n_steps + 1);
    let mut xs = Vec::with_capacity(n_steps + 1);
    let mut dws = Vec::with_capacity(n_steps);
    let mut dbs = Vec::with_capacity(n_steps);
    ys.push(fixed.y0);
    xs.push(fixed.x0);
    let dt = euler_drive(theta, fixed, t, n_steps, seed, |_, _, dw, db, y1, x1| {
        dws.push(dw);
        dbs.push(db);
        ys.push(y1);
        xs.push(x1);
    })?;
    Ok(SamplePath {
        dt,
        y: ys,
        x: xs,
        dw: Some(dws),
        db: Some(dbs),
        theta_gen: *theta,
        fixed: *fixed,
        scheme: Scheme::EulerFullTruncation,
    })
}

/// Euler recursion driven by caller-supplied increments.
pub fn simulate_with_increments(
    theta: &DriftParams,
    fixed: &FixedCoeffs,
    t: f64,
    dw: &[f64],
    db: &[f64],
) -> Result<SamplePath> {
    if dw.len() != db.len() {
        return Err(Error::LengthMismatch {
            dw: dw.len(),
            db: db.len(),
        });
    }
    let n = dw.len();
    let stepper = EulerStepper::new(theta, fixed, t, n)?;
    let mut ys = Vec::with_capacity(n + 1);
    let mut xs = Vec::with_capacity(n + 1);
    let (mut y, mut x) = (fixed.y0, fixed.x0);
    ys.push(y);
    xs.push(x);
    for i in 0..n {
        (y, x) = stepper.step(y, x, dw[i], db[i]);
        ys.push(y);
        xs.push(x);
    }
    Ok(SamplePath {
        dt: stepper.dt,
        y: ys,
        x: xs,
        dw: Some(dw.to_vec()),
        db: Some(db.to_vec()),
        theta_gen: *theta,
        fixed: *fixed,
        scheme: Scheme::EulerFullTruncation,
    })
}

/// Exact CIR transition over a fixed step: `Y' = c·χ'²(d, Y·e^{−b·dt}/c)`
/// with `c = σ²(1 − e^{−b·dt})/(4b)` and `d = 4a/σ²`, sampled as
/// `2c·Gamma(d/2 + N, 1)` with `N ~ Poisson(λ/2)`.
#[derive(Debug, Clone, Copy)]
pub struct CirTransition {
    half_dof: f64,
    c: f64,
    decay: f64,
}

impl CirTransition {
    pub fn new(a: f64, b: f64, sigma: f64, dt: f64) -> Result<Self> {
        for (name, v) in [("a", a), ("b", b), ("sigma1", sigma), ("dt", dt)] {
            if !v.is_finite() {
                return Err(Error::InvalidParameter {
                    name,
                    value: v,
                    reason: "must be finite",
                });
            }
        }
        if !(a > 0.0 && sigma > 0.0 && dt > 0.0) {
            return Err(Error::Invalid(format!(
                "exact CIR transition needs a > 0, sigma > 0, dt > 0 (got a={a}, sigma={sigma}, dt={dt})"
            )));
        }
        let s2 = sigma * sigma;
        let c = if b == 0.0 {
            0.25 * s2 * dt
        } else {
            -s2 * (-b * dt).exp_m1() / (4.0 * b)
        };
        Ok(CirTransition {
            half_dof: 2.0 * a / s2,
            c,
            decay: (-b * dt).exp(),
        })
    }

    #[inline]
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R, y: f64) -> f64 {
        let half_lambda = 0.5 * y * self.decay / self.c;
        let n = if half_lambda > 0.0 {
            Poisson::new(half_lambda).map(|p| p.sample(rng)).unwrap_or(0.0)
        } else {
            0.0
        };
        let g: f64 = Gamma::new(self.half_dof + n, 1.0)
            .expect("shape is positive")
            .sample(rng);
        2.0 * self.c * g
    }
}

fn check_y0(y0: f64, allow_zero: bool) -> Result<()> {
    let ok = y0.is_finite() && (y0 > 0.0 || (allow_zero && y0 == 0.0));
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name: "y0",
            value: y0,
            reason: "initial value out of range",
        })
    }
}

fn check_steps(t: f64, n_steps: usize) -> Result<f64> {
    if !(t.is_finite() && t > 0.0) || n_steps == 0 {
        return Err(Error::InvalidParameter {
            name: "T",
            value: t,
            reason: "need a finite positive horizon and at least one step",
        });
    }
    Ok(t / n_steps as f64)
}

/// CIR values on the grid `i·T/n_steps`, drawn from the exact transition
/// law. `y0 = 0` is allowed.
pub fn simulate_cir_exact(
    a: f64,
    b: f64,
    sigma1: f64,
    y0: f64,
    t: f64,
    n_steps: usize,
    seed: SeedSpec,
) -> Result<Vec<f64>> {
    check_y0(y0, true)?;
    let dt = check_steps(t, n_steps)?;
    let tr = CirTransition::new(a, b, sigma1, dt)?;
    let mut rng = seed.rng();
    let mut out = Vec::with_capacity(n_steps + 1);
    let mut y = y0;
    out.push(y);
    for _ in 0..n_steps {
        y = tr.sample(&mut rng, y);
        out.push(y);
    }
    Ok(out)
}

/// Runs the exact-CIR Heston recursion, calling `visit(y_i, x_i, y_{i+1},
/// x_{i+1})` per step. Returns the step size.
pub(crate) fn exact_drive<F>(
    theta: &DriftParams,
    fixed: &FixedCoeffs,
    t: f64,
    n_steps: usize,
    seed: SeedSpec,
    mut visit: F,
) -> Result<f64>
where
    F: FnMut(f64, f64, f64, f64),
{
    check_common(theta, fixed, t, n_steps)?;
    let dt = t / n_steps as f64;
    let tr = CirTransition::new(theta.a, theta.b, fixed.sigma1, dt)?;
    let mut rng = seed.rng();
    let ratio = fixed.sigma2 * fixed.rho / fixed.sigma1;
    let s2_rho_bar = fixed.sigma2 * fixed.rho_bar();
    let (mut y, mut x) = (fixed.y0, fixed.x0);
    for _ in 0..n_steps {
        let y1 = tr.sample(&mut rng, y);
        let z: f64 = rng.sample(StandardNormal);
        let dy_res = y1 - y - (theta.a - theta.b * y) * dt;
        let x1 = x + (theta.alpha - theta.beta * y) * dt + ratio * dy_res + s2_rho_bar * (y * dt).sqrt() * z;
        visit(y, x, y1, x1);
        y = y1;
        x = x1;
    }
    Ok(dt)
}

/// Heston path whose volatility coordinate uses exact CIR transitions. Given
/// the volatility increment, the log-price increment is drawn from its
/// conditional Gaussian law with left-point volatility. No Brownian
/// increments are stored.
pub fn simulate_heston_exact(
    theta: &DriftParams,
    fixed: &FixedCoeffs,
    t: f64,
    n_steps: usize,
    seed: SeedSpec,
) -> Result<SamplePath> {
    let mut ys = Vec::with_capacity(n_steps + 1);
    let mut xs = Vec::with_capacity(n_steps + 1);
    ys.push(fixed.y0);
    xs.push(fixed.x0);
    let dt = exact_drive(theta, fixed, t, n_steps, seed, |_, _, y1, x1| {
        ys.push(y1);
        xs.push(x1);
    })?;
    Ok(SamplePath {
        dt,
        y: ys,
        x: xs,
        dw: None,
        db: None,
        theta_gen: *theta,
        fixed: *fixed,
        scheme: Scheme::ExactCir,
    })
}

/// One draw of `(𝒴₁, ∫₀¹𝒴, 𝒳₁)` for the critical limit process
/// `d𝒴 = a dt + σ₁√𝒴 d𝒲`, `d𝒳 = α dt + σ₂√𝒴 (ϱ d𝒲 + √(1−ϱ²) dℬ)` started
/// at `(0, 0)`.
///
/// `𝒴` is sampled exactly on the grid and the time integral is a left-point
/// sum. Since `σ₁∫√𝒴 d𝒲 = 𝒴₁ − a`, the terminal `𝒳₁` is Gaussian given
/// the `𝒴` path with variance `σ₂²(1−ϱ²)∫𝒴`.
pub fn simulate_critical_limit_triplet(
    a: f64,
    alpha: f64,
    fixed: &FixedCoeffs,
    n_steps: usize,
    seed: SeedSpec,
) -> Result<(f64, f64, f64)> {
    fixed.validate()?;
    if !alpha.is_finite() {
        return Err(Error::InvalidParameter {
            name: "alpha",
            value: alpha,
            reason: "must be finite",
        });
    }
    if !(a > fixed.feller_bound()) {
        return Err(Error::Domain {
            a,
            sigma1: fixed.sigma1,
            context: "critical limit process",
        });
    }
    let dt = check_steps(1.0, n_steps)?;
    let tr = CirTransition::new(a, 0.0, fixed.sigma1, dt)?;
    let mut rng = seed.rng();
    let mut y = 0.0;
    let mut int_y = 0.0;
    for _ in 0..n_steps {
        int_y += y * dt;
        y = tr.sample(&mut rng, y);
    }
    let z: f64 = rng.sample(StandardNormal);
    let x1 = alpha + fixed.sigma2 * fixed.rho / fixed.sigma1 * (y - a) + fixed.sigma2 * fixed.rho_bar() * int_y.sqrt() * z;
    Ok((y, int_y, x1))
}

/// One draw of `(𝒴̃_{−1/b}, ∫₀^{−1/b}𝒴̃)` for `d𝒴̃ = a dt + σ₁√𝒴̃ d𝒲`,
/// `𝒴̃₀ = y₀`.
pub fn simulate_supercritical_limit_pair(
    a: f64,
    sigma1: f64,
    b: f64,
    y0: f64,
    n_steps: usize,
    seed: SeedSpec,
) -> Result<(f64, f64)> {
    if !(b < 0.0) {
        return Err(Error::InvalidParameter {
            name: "b",
            value: b,
            reason: "supercritical auxiliary process needs b < 0",
        });
    }
    if !(a >= 0.5 * sigma1 * sigma1) {
        return Err(Error::Domain {
            a,
            sigma1,
            context: "supercritical auxiliary process",
        });
    }
    check_y0(y0, false)?;
    let horizon = -1.0 / b;
    let dt = check_steps(horizon, n_steps)?;
    let tr = CirTransition::new(a, 0.0, sigma1, dt)?;
    let mut rng = seed.rng();
    let mut y = y0;
    let mut int_y = 0.0;
    for _ in 0..n_steps {
        int_y += y * dt;
        y = tr.sample(&mut rng, y);
    }
    Ok((y, int_y))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit() -> (DriftParams, FixedCoeffs) {
        (
            DriftParams::new(1.0, 0.2, 1.0, 0.5).unwrap(),
            FixedCoeffs::new(1.0, 1.0, 0.3, 1.0, 0.0).unwrap(),
        )
    }

    #[test]
    fn drift_only_step() {
        let (th, fx) = unit();
        let p = simulate_with_increments(&th, &fx, 0.1, &[0.0], &[0.0]).unwrap();
        assert_eq!(p.y[1], 1.0 + (1.0 - 1.0) * 0.1);
        assert_eq!(p.x[1], 0.0 + (0.2 - 0.5) * 0.1);
    }

    #[test]
    fn replay_is_bit_exact() {
        let (th, fx) = unit();
        let p = simulate_heston_euler(&th, &fx, 3.0, 3000, SeedSpec::new(11, 2)).unwrap();
        let q = simulate_with_increments(&th, &fx, 3.0, p.dw.as_ref().unwrap(), p.db.as_ref().unwrap()).unwrap();
        assert_eq!(p, q);
        let r = simulate_heston_euler(&th, &fx, 3.0, 3000, SeedSpec::new(11, 2)).unwrap();
        assert_eq!(p, r);
    }

    #[test]
    fn step_is_affine_in_dw() {
        let (th, fx) = unit();
        let st = EulerStepper::new(&th, &fx, 1.0, 10).unwrap();
        let (y0, _) = st.step(1.0, 0.0, 0.0, 0.0);
        let (y1, _) = st.step(1.0, 0.0, 0.01, 0.0);
        let (y2, _) = st.step(1.0, 0.0, 0.02, 0.0);
        assert!(((y2 - y1) - (y1 - y0)).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_inputs() {
        let (th, fx) = unit();
        assert!(simulate_heston_euler(&th, &fx, 0.0, 10, SeedSpec::new(0, 0)).is_err());
        assert!(simulate_heston_euler(&th, &fx, 1.0, 0, SeedSpec::new(0, 0)).is_err());
        let bad = DriftParams { b: f64::INFINITY, ..th };
        assert!(simulate_heston_euler(&bad, &fx, 1.0, 10, SeedSpec::new(0, 0)).is_err());
        assert!(matches!(
            simulate_with_increments(&th, &fx, 1.0, &[0.0; 3], &[0.0; 2]),
            Err(Error::LengthMismatch { dw: 3, db: 2 })
        ));
        assert!(simulate_supercritical_limit_pair(1.0, 1.0, 0.0, 1.0, 10, SeedSpec::new(0, 0)).is_err());
        assert!(simulate_critical_limit_triplet(0.5, 0.0, &fx, 10, SeedSpec::new(0, 0)).is_err());
    }

    #[test]
    fn paths_stay_nonnegative() {
        // Strong noise relative to drift forces the truncation to act.
        let th = DriftParams::new(0.2, 0.0, 2.0, 0.0).unwrap();
        let fx = FixedCoeffs::new(1.5, 1.0, -0.5, 0.05, 0.0).unwrap();
        for s in 0..20 {
            let p = simulate_heston_euler(&th, &fx, 2.0, 400, SeedSpec::new(5, s)).unwrap();
            assert!(p.y.iter().all(|&y| y >= 0.0));
            let e = simulate_heston_exact(&th, &fx, 2.0, 50, SeedSpec::new(5, s)).unwrap();
            assert!(e.y.iter().all(|&y| y >= 0.0));
        }
    }

    #[test]
    fn exact_cir_from_zero_is_positive_at_unit_dof() {
        // 4a/σ² = 2
        let ys = simulate_cir_exact(0.5, 0.0, 1.0, 0.0, 1.0, 500, SeedSpec::new(3, 0)).unwrap();
        assert_eq!(ys[0], 0.0);
        assert!(ys[1..].iter().all(|&y| y > 0.0));
    }

    #[test]
    fn exact_cir_mean_matches_ode() {
        // E Y_T = y0 e^{-bT} + (a/b)(1 - e^{-bT}); Var is bounded, so 4000
        // draws pin the mean to well under 0.05.
        let (a, b, s, y0, t) = (1.0, 1.5, 0.8, 0.3, 1.0);
        let m = 4000;
        let vals: Vec<f64> = (0..m)
            .map(|i| *simulate_cir_exact(a, b, s, y0, t, 4, SeedSpec::new(9, i)).unwrap().last().unwrap())
            .collect();
        let mean = vals.iter().sum::<f64>() / m as f64;
        let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1) as f64;
        let want = y0 * (-b * t).exp() + a / b * (1.0 - (-b * t).exp());
        assert!((mean - want).abs() < 4.0 * (var / m as f64).sqrt(), "{mean} vs {want}");
    }

    #[test]
    fn csv_layout() {
        let (th, fx) = unit();
        let p = simulate_with_increments(&th, &fx, 1.0, &[0.1, -0.1], &[0.0, 0.2]).unwrap();
        let mut buf = Vec::new();
        p.write_csv(&mut buf).unwrap();
        let s = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = s.lines().collect();
        assert_eq!(lines.len(), 4);
        assert_eq!(lines[0], "t,Y,X,dW,dB");
        assert!(lines[1].ends_with(",0.1,0"));
        assert!(lines[3].ends_with(",,"));
    }

    #[test]
    fn default_steps() {
        assert_eq!(default_n_steps(1.0), 1000);
        assert_eq!(default_n_steps(500.0), 100_000);
        assert_eq!(default_n_steps(5.001), 1001);
    }
}
