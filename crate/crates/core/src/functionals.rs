//! Path integrals behind the likelihood.
//!
//! Every integral is a left-point sum over the grid. Lebesgue integrals use
//! `Σ f(Y_i)·dt`, stochastic integrals use `Σ f(Y_i)·ΔW_i`, and integrals
//! against the observed coordinates use the raw increments `ΔY_i`, `ΔX_i`.
//! Both Lebesgue integrals are taken of `max(Y_i, floor_eps)`, which keeps
//! `∫Y·∫1/Y ≥ T²` on every path; each grid value below the floor is counted
//! in `floor_hits`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DriftParams, FixedCoeffs};
use crate::rng::SeedSpec;
use crate::sim::{euler_drive, exact_drive, SamplePath, Scheme};

pub const DEFAULT_FLOOR_EPS: f64 = 1e-12;

/// `∫dW/√Y`, `∫dB/√Y`, `∫√Y dW`, `∫√Y dB`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BrownianIntegrals {
    pub iw_inv: f64,
    pub ib_inv: f64,
    pub iw_sqrt: f64,
    pub ib_sqrt: f64,
}

/// Sufficient statistics of a path for every drift-likelihood quantity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathFunctionals {
    pub t: f64,
    pub dt: f64,
    pub n_steps: usize,
    pub y0: f64,
    pub x0: f64,
    pub y_t: f64,
    pub x_t: f64,
    pub int_y: f64,
    pub int_inv_y: f64,
    /// Present iff the path carries its Brownian increments.
    pub brownian: Option<BrownianIntegrals>,
    /// `Σ ΔY_i / Y_i`
    pub sum_dy_over_y: f64,
    /// `Σ ΔX_i / Y_i`
    pub sum_dx_over_y: f64,
    /// `Σ ΔY_i`
    pub sum_dy: f64,
    /// `Σ ΔX_i`
    pub sum_dx: f64,
    pub floor_hits: usize,
}

impl PathFunctionals {
    pub fn brownian(&self) -> Result<&BrownianIntegrals> {
        self.brownian.as_ref().ok_or(Error::MissingIncrements)
    }

    pub fn require_floor_free(&self) -> Result<()> {
        if self.floor_hits > 0 {
            Err(Error::FloorHit {
                count: self.floor_hits,
            })
        } else {
            Ok(())
        }
    }

    /// `∫ (p/Y + q)·[dY − (a₀ − b₀Y)ds]` and the `X` counterpart.
    pub fn rational_residual_integrals(&self, theta0: &DriftParams, p: f64, q: f64) -> [f64; 2] {
        let t = self.t;
        let comp = |c0: f64, c1: f64| p * c0 * self.int_inv_y - p * c1 * t + q * c0 * t - q * c1 * self.int_y;
        [
            p * self.sum_dy_over_y + q * self.sum_dy - comp(theta0.a, theta0.b),
            p * self.sum_dx_over_y + q * self.sum_dx - comp(theta0.alpha, theta0.beta),
        ]
    }
}

/// Streaming accumulator; feeding it the steps of a path in order yields the
/// same bits as [`functionals`] on the stored path.
#[derive(Debug, Clone)]
pub(crate) struct Accumulator {
    floor_eps: f64,
    dt: f64,
    int_y: f64,
    int_inv_y: f64,
    iw_inv: f64,
    ib_inv: f64,
    iw_sqrt: f64,
    ib_sqrt: f64,
    sdy_y: f64,
    sdx_y: f64,
    sdy: f64,
    sdx: f64,
    floor_hits: usize,
    steps: usize,
    last: (f64, f64),
}

impl Accumulator {
    pub(crate) fn new(dt: f64, floor_eps: f64) -> Self {
        Accumulator {
            floor_eps,
            dt,
            int_y: 0.0,
            int_inv_y: 0.0,
            iw_inv: 0.0,
            ib_inv: 0.0,
            iw_sqrt: 0.0,
            ib_sqrt: 0.0,
            sdy_y: 0.0,
            sdx_y: 0.0,
            sdy: 0.0,
            sdx: 0.0,
            floor_hits: 0,
            steps: 0,
            last: (f64::NAN, f64::NAN),
        }
    }

    #[inline]
    pub(crate) fn push(&mut self, y: f64, x: f64, inc: Option<(f64, f64)>, y1: f64, x1: f64) {
        if y < self.floor_eps {
            self.floor_hits += 1;
        }
        let yf = y.max(self.floor_eps);
        let inv = 1.0 / yf;
        let dy = y1 - y;
        let dx = x1 - x;
        self.int_y += yf * self.dt;
        self.int_inv_y += inv * self.dt;
        self.sdy_y += dy * inv;
        self.sdx_y += dx * inv;
        self.sdy += dy;
        self.sdx += dx;
        if let Some((dw, db)) = inc {
            let inv_sqrt = 1.0 / yf.sqrt();
            let sq = y.max(0.0).sqrt();
            self.iw_inv += dw * inv_sqrt;
            self.ib_inv += db * inv_sqrt;
            self.iw_sqrt += sq * dw;
            self.ib_sqrt += sq * db;
        }
        self.steps += 1;
        self.last = (y1, x1);
    }

    pub(crate) fn finish(self, y0: f64, x0: f64, t: f64, with_brownian: bool) -> PathFunctionals {
        let mut floor_hits = self.floor_hits;
        if self.last.0 < self.floor_eps {
            floor_hits += 1;
        }
        PathFunctionals {
            t,
            dt: self.dt,
            n_steps: self.steps,
            y0,
            x0,
            y_t: self.last.0,
            x_t: self.last.1,
            int_y: self.int_y,
            int_inv_y: self.int_inv_y,
            brownian: with_brownian.then_some(BrownianIntegrals {
                iw_inv: self.iw_inv,
                ib_inv: self.ib_inv,
                iw_sqrt: self.iw_sqrt,
                ib_sqrt: self.ib_sqrt,
            }),
            sum_dy_over_y: self.sdy_y,
            sum_dx_over_y: self.sdx_y,
            sum_dy: self.sdy,
            sum_dx: self.sdx,
            floor_hits,
        }
    }
}

/// Integrals of a stored path. The Brownian block is filled iff the path
/// carries its increments.
pub fn functionals(path: &SamplePath, floor_eps: f64) -> Result<PathFunctionals> {
    let n = path.n_steps();
    if n == 0 {
        return Err(Error::Invalid("path has no steps".into()));
    }
    if !(floor_eps > 0.0) {
        return Err(Error::InvalidParameter {
            name: "floor_eps",
            value: floor_eps,
            reason: "must be positive",
        });
    }
    let mut acc = Accumulator::new(path.dt, floor_eps);
    let incs = match (&path.dw, &path.db) {
        (Some(dw), Some(db)) => Some((dw.as_slice(), db.as_slice())),
        _ => None,
    };
    for i in 0..n {
        let inc = incs.map(|(dw, db)| (dw[i], db[i]));
        acc.push(path.y[i], path.x[i], inc, path.y[i + 1], path.x[i + 1]);
    }
    Ok(acc.finish(path.y[0], path.x[0], path.horizon(), incs.is_some()))
}

/// Simulates an Euler path and reduces it on the fly, without storing it.
/// Bit-identical to `functionals(&simulate_heston_euler(..), floor_eps)`.
pub fn euler_functionals(
    theta: &DriftParams,
    fixed: &FixedCoeffs,
    t: f64,
    n_steps: usize,
    seed: SeedSpec,
    floor_eps: f64,
) -> Result<PathFunctionals> {
    let mut acc = Accumulator::new(t / n_steps.max(1) as f64, floor_eps);
    let dt = euler_drive(theta, fixed, t, n_steps, seed, |y, x, dw, db, y1, x1| {
        acc.push(y, x, Some((dw, db)), y1, x1)
    })?;
    Ok(acc.finish(fixed.y0, fixed.x0, dt * n_steps as f64, true))
}

/// Streaming counterpart of `functionals(&simulate_heston_exact(..))`. The
/// Brownian block is absent, so only observable-mode statistics apply.
pub fn exact_functionals(
    theta: &DriftParams,
    fixed: &FixedCoeffs,
    t: f64,
    n_steps: usize,
    seed: SeedSpec,
    floor_eps: f64,
) -> Result<PathFunctionals> {
    let mut acc = Accumulator::new(t / n_steps.max(1) as f64, floor_eps);
    let dt = exact_drive(theta, fixed, t, n_steps, seed, |y, x, y1, x1| acc.push(y, x, None, y1, x1))?;
    Ok(acc.finish(fixed.y0, fixed.x0, dt * n_steps as f64, false))
}

/// Path functionals under the chosen scheme, computed without storing the
/// path.
pub fn simulate_functionals(
    scheme: Scheme,
    theta: &DriftParams,
    fixed: &FixedCoeffs,
    t: f64,
    n_steps: usize,
    seed: SeedSpec,
    floor_eps: f64,
) -> Result<PathFunctionals> {
    match scheme {
        Scheme::EulerFullTruncation => euler_functionals(theta, fixed, t, n_steps, seed, floor_eps),
        Scheme::ExactCir => exact_functionals(theta, fixed, t, n_steps, seed, floor_eps),
    }
}

/// Weight functions for [`observable_integrals`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Weight {
    OneOverY,
    Const(f64),
    /// `c0 + c1·Y`
    Affine { c0: f64, c1: f64 },
    /// `inv/Y + constant`
    Rational { inv: f64, constant: f64 },
}

impl Weight {
    #[inline]
    fn eval(&self, y: f64, floor_eps: f64) -> f64 {
        match *self {
            Weight::OneOverY => 1.0 / y.max(floor_eps),
            Weight::Const(c) => c,
            Weight::Affine { c0, c1 } => c0 + c1 * y,
            Weight::Rational { inv, constant } => inv / y.max(floor_eps) + constant,
        }
    }

    fn uses_reciprocal(&self) -> bool {
        matches!(self, Weight::OneOverY | Weight::Rational { .. })
    }
}

/// `(∫w(Y)[dY − (a₀−b₀Y)ds], ∫w(Y)[dX − (α₀−β₀Y)ds])` by left-point sums over
/// the stored path. Fails with `FloorHit` when a reciprocal weight meets a
/// grid value below the floor.
pub fn observable_integrals(path: &SamplePath, theta0: &DriftParams, weight: Weight, floor_eps: f64) -> Result<[f64; 2]> {
    let n = path.n_steps();
    let dt = path.dt;
    let mut hits = 0;
    let (mut sy, mut sx) = (0.0, 0.0);
    for i in 0..n {
        let y = path.y[i];
        if y < floor_eps {
            hits += 1;
        }
        let w = weight.eval(y, floor_eps);
        sy += w * (path.y[i + 1] - y - (theta0.a - theta0.b * y) * dt);
        sx += w * (path.x[i + 1] - path.x[i] - (theta0.alpha - theta0.beta * y) * dt);
    }
    if hits > 0 && weight.uses_reciprocal() {
        return Err(Error::FloorHit { count: hits });
    }
    Ok([sy, sx])
}

/// `σ₁∫dW/√Y − [log Y_T − log y₀ + (σ₁²/2 − a)∫ds/Y + bT]`. Vanishes only
/// in the continuous limit; on a grid it is of order `√dt·T`.
pub fn check_log_identity(path: &SamplePath, a: f64, b: f64) -> Result<f64> {
    let f = functionals(path, DEFAULT_FLOOR_EPS)?;
    f.require_floor_free()?;
    let br = f.brownian()?;
    let s1 = path.fixed.sigma1;
    Ok(s1 * br.iw_inv - ((f.y_t.ln() - f.y0.ln()) + (0.5 * s1 * s1 - a) * f.int_inv_y + b * f.t))
}

/// `σ₁∫√Y dW − [Y_T − y₀ − aT + b∫Y ds]`. Zero up to rounding on Euler
/// paths where the truncation never acts.
pub fn check_linear_identity(path: &SamplePath, a: f64, b: f64) -> Result<f64> {
    let f = functionals(path, DEFAULT_FLOOR_EPS)?;
    let br = f.brownian()?;
    Ok(path.fixed.sigma1 * br.iw_sqrt - (f.y_t - f.y0 - a * f.t + b * f.int_y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{simulate_heston_euler, simulate_heston_exact, simulate_with_increments};
    use proptest::prelude::*;

    fn setup() -> (DriftParams, FixedCoeffs) {
        (
            DriftParams::new(1.2, 0.3, 0.8, -0.4).unwrap(),
            FixedCoeffs::new(0.9, 1.3, -0.4, 1.1, 0.2).unwrap(),
        )
    }

    #[test]
    fn streaming_exact_matches_stored() {
        let (th, fx) = setup();
        let s = SeedSpec::new(12, 3);
        let a = exact_functionals(&th, &fx, 3.0, 600, s, DEFAULT_FLOOR_EPS).unwrap();
        let b = functionals(&simulate_heston_exact(&th, &fx, 3.0, 600, s).unwrap(), DEFAULT_FLOOR_EPS).unwrap();
        assert_eq!(a, b);
        assert!(a.brownian().is_err());
    }

    #[test]
    fn constant_path_integrals() {
        // a = b = 1 and y0 = 1 with zero noise keeps Y at 1.
        let th = DriftParams::new(1.0, 0.0, 1.0, 0.0).unwrap();
        let fx = FixedCoeffs::new(1.0, 1.0, 0.0, 1.0, 0.0).unwrap();
        let z = vec![0.0; 64];
        let p = simulate_with_increments(&th, &fx, 2.0, &z, &z).unwrap();
        let f = functionals(&p, DEFAULT_FLOOR_EPS).unwrap();
        assert!((f.int_y - 2.0).abs() < 1e-14);
        assert!((f.int_inv_y - 2.0).abs() < 1e-14);
        let br = f.brownian.unwrap();
        assert_eq!(br.iw_inv, 0.0);
        assert_eq!(br.iw_sqrt, 0.0);
    }

    #[test]
    fn streaming_matches_stored() {
        let (th, fx) = setup();
        let seed = SeedSpec::new(4, 9);
        let p = simulate_heston_euler(&th, &fx, 4.0, 2000, seed).unwrap();
        let a = functionals(&p, DEFAULT_FLOOR_EPS).unwrap();
        let b = euler_functionals(&th, &fx, 4.0, 2000, seed, DEFAULT_FLOOR_EPS).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn observable_matches_brownian_substitution() {
        let (th, fx) = setup();
        let p = simulate_heston_euler(&th, &fx, 5.0, 5000, SeedSpec::new(1, 1)).unwrap();
        let f = functionals(&p, DEFAULT_FLOOR_EPS).unwrap();
        assert_eq!(f.floor_hits, 0);
        let br = f.brownian.unwrap();
        let [oy, ox] = observable_integrals(&p, &th, Weight::Const(1.0), DEFAULT_FLOOR_EPS).unwrap();
        let want_y = fx.sigma1 * br.iw_sqrt;
        let want_x = fx.sigma2 * fx.rho * br.iw_sqrt + fx.sigma2 * fx.rho_bar() * br.ib_sqrt;
        assert!((oy - want_y).abs() <= 1e-12 * (1.0 + want_y.abs()) * 10.0);
        assert!((ox - want_x).abs() <= 1e-12 * (1.0 + want_x.abs()) * 10.0);
        let [ry, rx] = observable_integrals(&p, &th, Weight::OneOverY, DEFAULT_FLOOR_EPS).unwrap();
        let want_ry = fx.sigma1 * br.iw_inv;
        let want_rx = fx.sigma2 * fx.rho * br.iw_inv + fx.sigma2 * fx.rho_bar() * br.ib_inv;
        assert!((ry - want_ry).abs() <= 1e-11 * (1.0 + want_ry.abs()));
        assert!((rx - want_rx).abs() <= 1e-11 * (1.0 + want_rx.abs()));
    }

    #[test]
    fn rational_from_functionals_matches_path_loop() {
        let (th, fx) = setup();
        let p = simulate_heston_euler(&th, &fx, 5.0, 5000, SeedSpec::new(1, 2)).unwrap();
        let f = functionals(&p, DEFAULT_FLOOR_EPS).unwrap();
        let theta0 = DriftParams::new(1.0, 0.0, 1.0, 0.0).unwrap();
        for (inv, c) in [(1.0, 0.0), (0.0, 1.0), (1.0, -1.0), (0.6, -2.0)] {
            let direct = observable_integrals(&p, &theta0, Weight::Rational { inv, constant: c }, DEFAULT_FLOOR_EPS).unwrap();
            let fast = f.rational_residual_integrals(&theta0, inv, c);
            for k in 0..2 {
                assert!((direct[k] - fast[k]).abs() <= 1e-10 * (1.0 + direct[k].abs()), "{direct:?} {fast:?}");
            }
        }
    }

    #[test]
    fn wrong_drift_shift() {
        let (th, fx) = setup();
        let p = simulate_heston_euler(&th, &fx, 3.0, 3000, SeedSpec::new(2, 2)).unwrap();
        let w = Weight::Affine { c0: 0.5, c1: 0.25 };
        let base = observable_integrals(&p, &th, w, DEFAULT_FLOOR_EPS).unwrap();
        let other = DriftParams { a: th.a + 0.3, b: th.b - 0.2, ..th };
        let moved = observable_integrals(&p, &other, w, DEFAULT_FLOOR_EPS).unwrap();
        let mut want = 0.0;
        for i in 0..p.n_steps() {
            let y = p.y[i];
            want += (0.5 + 0.25 * y) * ((th.a - other.a) - (th.b - other.b) * y) * p.dt;
        }
        assert!((moved[0] - base[0] - want).abs() < 1e-10);
        assert!((moved[1] - base[1]).abs() < 1e-12);
    }

    #[test]
    fn linear_identity_exact_and_log_identity_refines() {
        let (th, fx) = setup();
        let p = simulate_heston_euler(&th, &fx, 5.0, 5000, SeedSpec::new(3, 3)).unwrap();
        let r = check_linear_identity(&p, th.a, th.b).unwrap();
        assert!(r.abs() <= 1e-10 * (1.0 + p.y.last().unwrap().abs()));

        // Coarsen one fine Brownian path by summing blocks of 4 increments.
        let fine = simulate_heston_euler(&th, &fx, 2.0, 64_000, SeedSpec::new(8, 0)).unwrap();
        let coarsen = |k: usize| -> Vec<f64> {
            fine.dw.as_ref().unwrap().chunks(k).map(|c| c.iter().sum()).collect()
        };
        let coarse_db = |k: usize| -> Vec<f64> {
            fine.db.as_ref().unwrap().chunks(k).map(|c| c.iter().sum()).collect()
        };
        let r_fine = check_log_identity(&fine, th.a, th.b).unwrap().abs();
        let c16 = simulate_with_increments(&th, &fx, 2.0, &coarsen(16), &coarse_db(16)).unwrap();
        let r_coarse = check_log_identity(&c16, th.a, th.b).unwrap().abs();
        assert!(r_fine < r_coarse, "{r_fine} vs {r_coarse}");
    }

    #[test]
    fn log_identity_vanishes_on_constant_path() {
        let th = DriftParams::new(0.5, 0.0, 0.0, 0.0).unwrap();
        let fx = FixedCoeffs::new(1.0, 1.0, 0.0, 2.0, 0.0).unwrap();
        let p = simulate_with_increments(&th, &fx, 1.0, &[0.0; 10], &[0.0; 10]).unwrap();
        // Y drifts by a·dt each step here, so use a constant path built by hand.
        let mut q = p.clone();
        q.y = vec![2.0; 11];
        q.theta_gen.a = 0.5;
        let r = check_log_identity(&q, 0.5, 0.0).unwrap();
        assert!(r.abs() < 1e-15);
    }

    #[test]
    fn truncation_breaks_linear_identity() {
        let th = DriftParams::new(0.01, 0.0, 0.0, 0.0).unwrap();
        let fx = FixedCoeffs::new(1.0, 1.0, 0.0, 0.01, 0.0).unwrap();
        let p = simulate_with_increments(&th, &fx, 1.0, &[-0.5, 0.1], &[0.0, 0.0]).unwrap();
        let f = functionals(&p, DEFAULT_FLOOR_EPS).unwrap();
        assert!(f.floor_hits > 0);
        assert!(check_linear_identity(&p, th.a, th.b).unwrap().abs() > 1e-3);
        assert!(check_log_identity(&p, th.a, th.b).is_err());
    }

    #[test]
    fn exact_paths_have_no_brownian_block() {
        let (th, fx) = setup();
        let p = simulate_heston_exact(&th, &fx, 1.0, 100, SeedSpec::new(0, 0)).unwrap();
        let f = functionals(&p, DEFAULT_FLOOR_EPS).unwrap();
        assert!(f.brownian.is_none());
        assert!(matches!(f.brownian(), Err(Error::MissingIncrements)));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn discrete_cauchy_schwarz(seed in any::<u64>(), a in 0.6f64..3.0, b in -1.0f64..2.0, s1 in 0.2f64..1.0) {
            let th = DriftParams::new(a.max(0.5 * s1 * s1 + 0.05), 0.0, b, 0.0).unwrap();
            let fx = FixedCoeffs::new(s1, 1.0, 0.0, 1.0, 0.0).unwrap();
            let f = euler_functionals(&th, &fx, 2.0, 400, SeedSpec::new(seed, 0), DEFAULT_FLOOR_EPS).unwrap();
            prop_assert!(f.int_y >= 0.0 && f.int_inv_y >= 0.0);
            prop_assert!(f.int_y * f.int_inv_y >= f.t * f.t * (1.0 - 1e-12));
        }
    }
}
