//! Replicate orchestration and the empirical checks of the local asymptotic
//! structure.
//!
//! Replicate `i` of a job always draws from stream `i` of the job's master
//! seed, and results are collected in replicate order, so every report is a
//! pure function of its inputs whatever the number of worker threads
//! (`LAQ_THREADS`).

use std::io::{self, Write};
use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::functionals::{euler_functionals, simulate_functionals, PathFunctionals, DEFAULT_FLOOR_EPS};
use crate::likelihood::{delta_brownian, delta_observable_from, gram, info_from, log_rn_from, quadratic_form, DeltaMode};
use crate::limits::{
    cir_integral_laplace, laq_violation_value, sample_critical_limit, sample_supercritical_limit, scaling_matrix, stationary_law,
    subcritical_info, LimitDraw, SubcriticalSampler,
};
use crate::linalg::{dot4, norm, Mat2, Mat4, Vec4};
use crate::model::{classify_regime, DriftParams, FixedCoeffs, Regime};
use crate::rng::SeedSpec;
use crate::model::DiffusionMatrices;
use crate::sim::{default_n_steps, Scheme, LIMIT_STEPS};
use crate::stats::{mean_se, median, quantile, two_sample_ks, energy_distance};

pub const THREADS_ENV: &str = "LAQ_THREADS";

fn pool() -> &'static rayon::ThreadPool {
    static POOL: OnceLock<rayon::ThreadPool> = OnceLock::new();
    POOL.get_or_init(|| {
        let n = std::env::var(THREADS_ENV)
            .ok()
            .and_then(|v| v.trim().parse::<usize>().ok())
            .unwrap_or(0);
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .expect("worker pool")
    })
}

/// Exact tallies of replicate problems.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FlagCounts {
    /// Kept, but some grid value fell below the floor.
    pub floor_hit: usize,
    /// Dropped: singular Gram matrix.
    pub degenerate_gram: usize,
    /// Dropped: any other error.
    pub failed: usize,
}

impl FlagCounts {
    pub fn total(&self) -> usize {
        self.floor_hit + self.degenerate_gram + self.failed
    }

    pub fn merge(&mut self, o: &FlagCounts) {
        self.floor_hit += o.floor_hit;
        self.degenerate_gram += o.degenerate_gram;
        self.failed += o.failed;
    }
}

/// Output of one replicate together with the floor-hit count of its path.
#[derive(Debug, Clone)]
pub struct Replicate<T> {
    pub value: T,
    pub floor_hits: usize,
}

impl<T> Replicate<T> {
    pub fn clean(value: T) -> Self {
        Replicate { value, floor_hits: 0 }
    }
}

#[derive(Debug, Clone)]
pub struct Batch<T> {
    /// Values of the kept replicates, in replicate order.
    pub values: Vec<T>,
    pub indices: Vec<u64>,
    pub floor_hits: Vec<usize>,
    pub requested: usize,
    pub flags: FlagCounts,
}

/// Runs `m` replicates in parallel, replicate `i` seeded with
/// `SeedSpec::new(master_seed, i)`. Failing replicates are dropped and
/// counted; the job aborts only when more than half are flagged.
pub fn run_replicates<T, F>(m: usize, master_seed: u64, f: F) -> Result<Batch<T>>
where
    T: Send,
    F: Fn(SeedSpec) -> Result<Replicate<T>> + Sync + Send,
{
    if m == 0 {
        return Err(Error::Invalid("replicate count must be at least 1".into()));
    }
    let results: Vec<Result<Replicate<T>>> = pool().install(|| {
        (0..m as u64)
            .into_par_iter()
            .map(|i| f(SeedSpec::new(master_seed, i)))
            .collect()
    });
    let mut batch = Batch {
        values: Vec::with_capacity(m),
        indices: Vec::with_capacity(m),
        floor_hits: Vec::with_capacity(m),
        requested: m,
        flags: FlagCounts::default(),
    };
    let mut first_failure = None;
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(rep) => {
                if rep.floor_hits > 0 {
                    batch.flags.floor_hit += 1;
                }
                batch.values.push(rep.value);
                batch.indices.push(i as u64);
                batch.floor_hits.push(rep.floor_hits);
            }
            Err(Error::DegenerateGram { .. }) => batch.flags.degenerate_gram += 1,
            Err(e) => {
                batch.flags.failed += 1;
                first_failure.get_or_insert(e);
            }
        }
    }
    if 2 * batch.flags.total() > m {
        if batch.values.is_empty() {
            if let Some(e) = first_failure {
                return Err(e);
            }
        }
        return Err(Error::TooManyFlagged {
            flagged: batch.flags.total(),
            total: m,
        });
    }
    Ok(batch)
}

/// Mean with standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSe {
    pub mean: f64,
    pub se: f64,
}

impl MeanSe {
    pub fn of(xs: &[f64]) -> Self {
        let (mean, se) = mean_se(xs);
        MeanSe { mean, se }
    }

    /// `|mean − target| / se`
    pub fn z(&self, target: f64) -> f64 {
        (self.mean - target).abs() / self.se
    }
}

/// What a generic job computes per replicate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JobKind {
    /// Scaled `Δ` and the scaled Gram entries `g11, g12, g22` of `J`.
    Decomposition,
    /// `log dP_θ̃/dP_θ` and its exponential.
    LogRn { theta_tilde: DriftParams },
    /// Raw path functionals.
    Functionals,
}

/// A Monte Carlo job over paths generated under `theta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McJob {
    pub kind: JobKind,
    pub scheme: Scheme,
    pub theta: DriftParams,
    pub fixed: FixedCoeffs,
    pub t: f64,
    pub n_steps: usize,
    pub m: usize,
    pub master_seed: u64,
}

/// One row per kept replicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SampleMatrix {
    pub columns: Vec<String>,
    pub replicate: Vec<u64>,
    pub rows: Vec<Vec<f64>>,
    pub floor_hits: Vec<usize>,
    pub flags: FlagCounts,
}

impl SampleMatrix {
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    /// `replicate,<columns>,flags`
    pub fn write_csv<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "replicate,{},flags", self.columns.join(","))?;
        for ((i, row), hits) in self.replicate.iter().zip(&self.rows).zip(&self.floor_hits) {
            write!(out, "{i}")?;
            for v in row {
                write!(out, ",{v}")?;
            }
            writeln!(out, ",{}", if *hits > 0 { "floor_hit" } else { "" })?;
        }
        Ok(())
    }
}

pub const DECOMPOSITION_COLUMNS: [&str; 7] = ["delta1", "delta2", "delta3", "delta4", "g11", "g12", "g22"];

/// `Δ` from the Brownian increments when the path carries them, otherwise
/// from the observed increments at `theta`.
pub fn delta_auto(f: &PathFunctionals, m: &DiffusionMatrices, theta: &DriftParams, r: &Vec4) -> Result<Vec4> {
    if f.brownian.is_some() {
        delta_brownian(f, m, r)
    } else {
        delta_observable_from(f, m, theta, r)
    }
}

/// `(Δ, [r₁²∫ds/Y, −r₁r₃T, r₃²∫Y])` of a path, `Δ` as in [`delta_auto`].
pub fn decomposition_features(f: &PathFunctionals, fixed: &FixedCoeffs, theta: &DriftParams, r: &Vec4) -> Result<[f64; 7]> {
    let m = fixed.matrices();
    let d = delta_auto(f, &m, theta, r)?;
    let g = gram(f);
    Ok([
        d[0],
        d[1],
        d[2],
        d[3],
        r[0] * r[0] * g.0[0][0],
        r[0] * r[2] * g.0[0][1],
        r[2] * r[2] * g.0[1][1],
    ])
}

pub fn run_job(job: &McJob) -> Result<SampleMatrix> {
    let regime = classify_regime(job.theta.b);
    let (columns, width): (Vec<String>, usize) = match job.kind {
        JobKind::Decomposition => (DECOMPOSITION_COLUMNS.iter().map(|s| s.to_string()).collect(), 7),
        JobKind::LogRn { .. } => (vec!["log_rn".into(), "exp_log_rn".into()], 2),
        JobKind::Functionals => (
            ["int_y", "int_inv_y", "iw_inv", "ib_inv", "iw_sqrt", "ib_sqrt", "y_t", "x_t"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
            8,
        ),
    };
    let r = match job.kind {
        JobKind::Decomposition => scaling_matrix(regime, &job.theta, job.t)?,
        _ => [1.0; 4],
    };
    let batch = run_replicates(job.m, job.master_seed, |seed| {
        let f = simulate_functionals(job.scheme, &job.theta, &job.fixed, job.t, job.n_steps, seed, DEFAULT_FLOOR_EPS)?;
        let row: Vec<f64> = match job.kind {
            JobKind::Decomposition => decomposition_features(&f, &job.fixed, &job.theta, &r)?.to_vec(),
            JobKind::LogRn { theta_tilde } => {
                let l = log_rn_from(&f, &job.fixed, &job.theta, &theta_tilde)?;
                vec![l, l.exp()]
            }
            JobKind::Functionals => {
                // Exact-scheme paths carry no Brownian integrals.
                let b = f.brownian.map_or([f64::NAN; 4], |b| [b.iw_inv, b.ib_inv, b.iw_sqrt, b.ib_sqrt]);
                vec![f.int_y, f.int_inv_y, b[0], b[1], b[2], b[3], f.y_t, f.x_t]
            }
        };
        debug_assert_eq!(row.len(), width);
        Ok(Replicate {
            value: row,
            floor_hits: f.floor_hits,
        })
    })?;
    Ok(SampleMatrix {
        columns,
        replicate: batch.indices,
        rows: batch.values,
        floor_hits: batch.floor_hits,
        flags: batch.flags,
    })
}

fn require_regime(regime: Regime, theta: &DriftParams) -> Result<()> {
    if classify_regime(theta.b) == regime {
        Ok(())
    } else {
        Err(Error::WrongRegime { expected: regime, b: theta.b })
    }
}

/// Draws `m` samples of the regime's limit pair. Draw `i` uses stream `i`
/// of `seed`'s master seed.
pub fn limit_draws(
    regime: Regime,
    theta: &DriftParams,
    fixed: &FixedCoeffs,
    m: usize,
    n_steps: usize,
    master_seed: u64,
) -> Result<Vec<LimitDraw>> {
    require_regime(regime, theta)?;
    let batch = match regime {
        Regime::Subcritical => {
            let sampler = SubcriticalSampler::new(theta, fixed)?;
            run_replicates(m, master_seed, |s| Ok(Replicate::clean(sampler.draw(&mut s.rng()))))?
        }
        Regime::Critical => run_replicates(m, master_seed, |s| {
            Ok(Replicate::clean(sample_critical_limit(theta, fixed, n_steps, s)?))
        })?,
        Regime::Supercritical => run_replicates(m, master_seed, |s| {
            Ok(Replicate::clean(sample_supercritical_limit(theta, fixed, n_steps, s)?))
        })?,
    };
    Ok(batch.values)
}

/// `(Δ, g11, g12, g22)` of a limit draw, matching [`decomposition_features`].
pub fn limit_features(d: &LimitDraw, fixed: &FixedCoeffs) -> [f64; 7] {
    // Recover the left Kronecker factor from the (0,0) entry of each block.
    let s00 = fixed.matrices().s_inv.0[0][0];
    let j = &d.info.0;
    [
        d.delta[0],
        d.delta[1],
        d.delta[2],
        d.delta[3],
        j[0][0] / s00,
        j[0][2] / s00,
        j[2][2] / s00,
    ]
}

/// `exp{hᵀΔ − ½hᵀJh}` summary for one `h`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaqDjEntry {
    pub h: Vec4,
    pub estimate: MeanSe,
}

fn laq_dj(draws: &[(Vec4, Mat4)], h_list: &[Vec4]) -> Vec<LaqDjEntry> {
    h_list
        .iter()
        .map(|h| {
            let vals: Vec<f64> = draws.iter().map(|(d, j)| quadratic_form(d, j, h).exp()).collect();
            LaqDjEntry {
                h: *h,
                estimate: MeanSe::of(&vals),
            }
        })
        .collect()
}

fn pd_fraction(draws: &[(Vec4, Mat4)]) -> f64 {
    draws.iter().filter(|(_, j)| j.cholesky().is_ok()).count() as f64 / draws.len() as f64
}

/// Quantiles (50%, 90%, 99%) of `‖Δ‖` and of the Frobenius norm of `J`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TightnessSummary {
    pub delta_norm: [f64; 3],
    pub info_norm: [f64; 3],
}

fn tightness(draws: &[(Vec4, Mat4)]) -> TightnessSummary {
    let dn: Vec<f64> = draws.iter().map(|(d, _)| norm(d)).collect();
    let jn: Vec<f64> = draws
        .iter()
        .map(|(_, j)| j.0.iter().flatten().map(|v| v * v).sum::<f64>().sqrt())
        .collect();
    let q = |v: &[f64]| [quantile(v, 0.5), quantile(v, 0.9), quantile(v, 0.99)];
    TightnessSummary {
        delta_norm: q(&dn),
        info_norm: q(&jn),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiniteLaq {
    pub t: f64,
    pub n_steps: usize,
    pub m_used: usize,
    pub flags: FlagCounts,
    pub tightness: TightnessSummary,
    pub pd_fraction: f64,
    pub laq_dj: Vec<LaqDjEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LimitLaq {
    pub m: usize,
    pub tightness: TightnessSummary,
    pub pd_fraction: f64,
    pub laq_dj: Vec<LaqDjEntry>,
    /// Closed form of the `h = (0, 1, 0, 0)` expectation (supercritical only).
    pub violation_closed_form: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LaqReport {
    pub regime: Regime,
    pub theta: DriftParams,
    pub fixed: FixedCoeffs,
    pub finite: Vec<FiniteLaq>,
    pub limit: LimitLaq,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaqOptions {
    pub scheme: Scheme,
    /// Steps per path; `None` uses [`default_n_steps`].
    pub n_steps: Option<usize>,
    pub limit_steps: usize,
    /// Limit draws; `None` uses the finite-`T` replicate count.
    pub limit_m: Option<usize>,
}

impl Default for LaqOptions {
    fn default() -> Self {
        LaqOptions {
            scheme: Scheme::EulerFullTruncation,
            n_steps: None,
            limit_steps: LIMIT_STEPS,
            limit_m: None,
        }
    }
}

/// Empirical check of tightness, positive definiteness of `J` and the unit
/// expectation of `exp{hᵀΔ − ½hᵀJh}`, both for finite-`T` statistics and for
/// draws of the limit law.
///
/// In the supercritical regime the limit law is the displayed one, whose
/// `(a, α)` block pairs `Z₁` with `∫𝒴̃`; at `h = (0, 1, 0, 0)` its
/// expectation is the closed form [`laq_violation_value`]. The finite-`T`
/// statistic `exp{Δ₂ − ½J₂₂}` is an exact discrete martingale with mean 1,
/// because `∫dB/√Y` there is Gaussian given the volatility path with
/// variance `∫ds/Y`.
#[allow(clippy::too_many_arguments)]
pub fn check_laq_conditions(
    regime: Regime,
    theta: &DriftParams,
    fixed: &FixedCoeffs,
    h_list: &[Vec4],
    t_list: &[f64],
    m: usize,
    seed: u64,
    opts: &LaqOptions,
) -> Result<LaqReport> {
    require_regime(regime, theta)?;
    let seed_spec = SeedSpec::new(seed, 0);
    let mut finite = Vec::new();
    for (k, &t) in t_list.iter().enumerate() {
        let r = scaling_matrix(regime, theta, t)?;
        for h in h_list {
            if theta.a + r[0] * h[0] < fixed.feller_bound() {
                return Err(Error::Domain {
                    a: theta.a + r[0] * h[0],
                    sigma1: fixed.sigma1,
                    context: "perturbed drift a + r₁h₁",
                });
            }
        }
        let n_steps = opts.n_steps.unwrap_or_else(|| default_n_steps(t));
        let m_seed = seed_spec.derive(0x100 + k as u64).master_seed;
        let mats = fixed.matrices();
        let batch = run_replicates(m, m_seed, |s| {
            let f = simulate_functionals(opts.scheme, theta, fixed, t, n_steps, s, DEFAULT_FLOOR_EPS)?;
            let d = delta_auto(&f, &mats, theta, &r)?;
            let j = info_from(&f, &mats, &r);
            Ok(Replicate {
                value: (d, j),
                floor_hits: f.floor_hits,
            })
        })?;
        finite.push(FiniteLaq {
            t,
            n_steps,
            m_used: batch.values.len(),
            flags: batch.flags,
            tightness: tightness(&batch.values),
            pd_fraction: pd_fraction(&batch.values),
            laq_dj: laq_dj(&batch.values, h_list),
        });
    }
    let limit_m = opts.limit_m.unwrap_or(m);
    let draws: Vec<(Vec4, Mat4)> = limit_draws(
        regime,
        theta,
        fixed,
        limit_m,
        opts.limit_steps,
        seed_spec.derive(0x200).master_seed,
    )?
    .into_iter()
    .map(|d| (d.delta, d.info))
    .collect();
    let violation_closed_form = match regime {
        Regime::Supercritical => Some(laq_violation_value(theta, fixed)?),
        _ => None,
    };
    Ok(LaqReport {
        regime,
        theta: *theta,
        fixed: *fixed,
        finite,
        limit: LimitLaq {
            m: limit_m,
            tightness: tightness(&draws),
            pd_fraction: pd_fraction(&draws),
            laq_dj: laq_dj(&draws, h_list),
            violation_closed_form,
        },
    })
}

/// Two-sample comparison of finite-`T` statistics with limit-law draws.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceReport {
    pub t: f64,
    pub n_steps: usize,
    pub coords: Vec<String>,
    /// Per-coordinate KS; `None` where the limit coordinate is constant.
    pub ks: Vec<Option<f64>>,
    /// Energy distance between the joint feature vectors.
    pub energy: f64,
    /// Subcritical only: largest entrywise median `|J_T − J_θ|`.
    pub info_median_abs_dev: Option<f64>,
    pub m_finite: usize,
    pub m_limit: usize,
    pub flags: FlagCounts,
}

impl DistanceReport {
    pub fn ks_of(&self, name: &str) -> Option<f64> {
        let k = self.coords.iter().position(|c| c == name)?;
        self.ks[k]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceOptions {
    pub scheme: Scheme,
    pub n_steps: Option<usize>,
    /// Limit draws per finite-`T` replicate.
    pub limit_factor: usize,
    pub limit_steps: usize,
    /// Cap on the number of limit draws entering the energy distance.
    pub energy_limit_cap: usize,
}

impl Default for ConvergenceOptions {
    fn default() -> Self {
        ConvergenceOptions {
            scheme: Scheme::EulerFullTruncation,
            n_steps: None,
            limit_factor: 10,
            limit_steps: LIMIT_STEPS,
            energy_limit_cap: 4000,
        }
    }
}

/// Compares the finite-`T` `(Δ, g)` samples with limit-law draws for each
/// horizon in `t_list`. The same limit draws serve every horizon.
pub fn check_convergence(
    regime: Regime,
    theta: &DriftParams,
    fixed: &FixedCoeffs,
    t_list: &[f64],
    m: usize,
    seed: u64,
    opts: &ConvergenceOptions,
) -> Result<Vec<DistanceReport>> {
    require_regime(regime, theta)?;
    let seed_spec = SeedSpec::new(seed, 0);
    let limit_m = m * opts.limit_factor.max(1);
    let limit: Vec<[f64; 7]> = limit_draws(
        regime,
        theta,
        fixed,
        limit_m,
        opts.limit_steps,
        seed_spec.derive(0x300).master_seed,
    )?
    .iter()
    .map(|d| limit_features(d, fixed))
    .collect();
    let limit_rows: Vec<Vec<f64>> = limit.iter().take(opts.energy_limit_cap.max(1)).map(|r| r.to_vec()).collect();
    let j_theta = match regime {
        Regime::Subcritical => Some(subcritical_info(theta, fixed)?),
        _ => None,
    };
    let s_inv = fixed.matrices().s_inv;

    let mut out = Vec::new();
    for (k, &t) in t_list.iter().enumerate() {
        let r = scaling_matrix(regime, theta, t)?;
        let n_steps = opts.n_steps.unwrap_or_else(|| default_n_steps(t));
        let batch = run_replicates(m, seed_spec.derive(0x400 + k as u64).master_seed, |s| {
            let f = simulate_functionals(opts.scheme, theta, fixed, t, n_steps, s, DEFAULT_FLOOR_EPS)?;
            Ok(Replicate {
                value: decomposition_features(&f, fixed, theta, &r)?,
                floor_hits: f.floor_hits,
            })
        })?;
        let finite = &batch.values;
        let mut ks = Vec::new();
        for c in 0..7 {
            let lx: Vec<f64> = limit.iter().map(|v| v[c]).collect();
            let constant = lx.iter().all(|&v| v == lx[0]);
            if constant {
                ks.push(None);
            } else {
                let fx: Vec<f64> = finite.iter().map(|v| v[c]).collect();
                ks.push(Some(two_sample_ks(&fx, &lx)));
            }
        }
        let finite_rows: Vec<Vec<f64>> = finite.iter().map(|r| r.to_vec()).collect();
        let energy = energy_distance(&finite_rows, &limit_rows);
        let info_median_abs_dev = j_theta.map(|jt| {
            let mut worst = 0.0_f64;
            for i in 0..4 {
                for j in 0..4 {
                    let devs: Vec<f64> = finite
                        .iter()
                        .map(|v| {
                            let g = Mat2::new(v[4], v[5], v[5], v[6]).kron(&s_inv);
                            (g.0[i][j] - jt.0[i][j]).abs()
                        })
                        .collect();
                    worst = worst.max(median(&devs));
                }
            }
            worst
        });
        out.push(DistanceReport {
            t,
            n_steps,
            coords: DECOMPOSITION_COLUMNS.iter().map(|s| s.to_string()).collect(),
            ks,
            energy,
            info_median_abs_dev,
            m_finite: finite.len(),
            m_limit: limit.len(),
            flags: batch.flags,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErgodicOptions {
    pub scheme: Scheme,
    /// Horizon at which the marginal is sampled.
    pub marginal_t: f64,
    pub marginal_m: usize,
    pub marginal_steps: Option<usize>,
}

impl Default for ErgodicOptions {
    fn default() -> Self {
        ErgodicOptions {
            scheme: Scheme::EulerFullTruncation,
            marginal_t: 50.0,
            marginal_m: 10_000,
            marginal_steps: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErgodicReport {
    pub avg_y: f64,
    pub avg_inv_y: f64,
    /// `E(Y_∞) = a/b`
    pub expected_y: f64,
    /// `E(1/Y_∞) = 2b/(2a − σ₁²)`
    pub expected_inv_y: f64,
    /// Two-sample KS between simulated `Y_{T_marg}` values and Gamma draws.
    pub gamma_ks: f64,
    pub marginal_m: usize,
    pub floor_hits: usize,
    pub flags: FlagCounts,
}

/// Time averages along one long path and the stationary marginal.
pub fn ergodic_check(
    theta: &DriftParams,
    fixed: &FixedCoeffs,
    t: f64,
    n_steps: usize,
    seed: SeedSpec,
    opts: &ErgodicOptions,
) -> Result<ErgodicReport> {
    require_regime(Regime::Subcritical, theta)?;
    crate::model::require_admissible(theta.a, fixed.sigma1, Regime::Subcritical, "ergodic check")?;
    let law = stationary_law(theta.a, theta.b, fixed.sigma1)?;
    let f = simulate_functionals(opts.scheme, theta, fixed, t, n_steps, seed, DEFAULT_FLOOR_EPS)?;
    let mt = opts.marginal_t;
    let msteps = opts.marginal_steps.unwrap_or_else(|| default_n_steps(mt));
    let batch = run_replicates(opts.marginal_m, seed.derive(0x500).master_seed, |s| {
        let p = simulate_functionals(opts.scheme, theta, fixed, mt, msteps, s, DEFAULT_FLOOR_EPS)?;
        Ok(Replicate {
            value: p.y_t,
            floor_hits: p.floor_hits,
        })
    })?;
    let mut rng = seed.derive(0x501).rng();
    let gamma: Vec<f64> = (0..opts.marginal_m).map(|_| law.sample(&mut rng)).collect();
    Ok(ErgodicReport {
        avg_y: f.int_y / f.t,
        avg_inv_y: f.int_inv_y / f.t,
        expected_y: law.moment(1.0)?,
        expected_inv_y: law.moment(-1.0)?,
        gamma_ks: two_sample_ks(&batch.values, &gamma),
        marginal_m: batch.values.len(),
        floor_hits: f.floor_hits,
        flags: batch.flags,
    })
}

/// Monte Carlo mean of `dP_θ̃/dP_θ` over paths generated under `θ`.
#[allow(clippy::too_many_arguments)]
pub fn martingale_check(
    scheme: Scheme,
    theta: &DriftParams,
    theta_tilde: &DriftParams,
    fixed: &FixedCoeffs,
    t: f64,
    n_steps: usize,
    m: usize,
    seed: u64,
) -> Result<(MeanSe, FlagCounts)> {
    let job = McJob {
        kind: JobKind::LogRn {
            theta_tilde: *theta_tilde,
        },
        scheme,
        theta: *theta,
        fixed: *fixed,
        t,
        n_steps,
        m,
        master_seed: seed,
    };
    let s = run_job(&job)?;
    Ok((MeanSe::of(&s.column("exp_log_rn").expect("column")), s.flags))
}

/// Result of the exact quadratic identity sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadSweepReport {
    pub configs: usize,
    pub evaluated: usize,
    pub skipped_floor: usize,
    /// Largest `|log_rn − (hᵀΔ − ½hᵀJh)| / (1 + |log_rn|)`.
    pub max_rel_residual: f64,
    pub max_abs_log_rn: f64,
}

/// Random admissible configuration of the given regime with a random local
/// direction `‖h‖ ≤ h_max` satisfying `a + r₁h₁ ≥ σ₁²/2`.
pub fn random_configuration<R: Rng + ?Sized>(
    rng: &mut R,
    regime: Regime,
    t: f64,
    h_max: f64,
) -> Result<(DriftParams, FixedCoeffs, Vec4, Vec4)> {
    let u = |rng: &mut R, lo: f64, hi: f64| Uniform::new(lo, hi).expect("range").sample(rng);
    let sigma1 = u(rng, 0.3, 1.2);
    let fixed = FixedCoeffs::new(sigma1, u(rng, 0.3, 2.0), u(rng, -0.9, 0.9), u(rng, 0.5, 2.0), u(rng, -1.0, 1.0))?;
    let b = match regime {
        Regime::Subcritical => u(rng, 0.2, 2.0),
        Regime::Critical => 0.0,
        Regime::Supercritical => u(rng, -1.0, -0.2),
    };
    let a = fixed.feller_bound() + u(rng, 0.3, 2.0);
    let theta = DriftParams::new(a, u(rng, -1.0, 1.0), b, u(rng, -1.0, 1.0))?;
    let r = scaling_matrix(regime, &theta, t)?;
    loop {
        let dir: Vec4 = std::array::from_fn(|_| rng.sample(StandardNormal));
        let len = norm(&dir);
        let radius = h_max * u(rng, 0.0, 1.0);
        let h = dir.map(|v| v / len * radius);
        if theta.a + r[0] * h[0] >= fixed.feller_bound() {
            return Ok((theta, fixed, r, h));
        }
    }
}

/// Checks `log_rn(θ, θ + r·h) = hᵀΔ − ½hᵀJh` on `configs` random
/// configurations cycling through the three regimes.
pub fn quadratic_identity_sweep(configs: usize, t: f64, n_steps: usize, h_max: f64, seed: u64) -> Result<QuadSweepReport> {
    let regimes = [Regime::Subcritical, Regime::Critical, Regime::Supercritical];
    let batch = run_replicates(configs, seed, |s| {
        let mut rng = s.derive(0x600).rng();
        let regime = regimes[(s.stream_index % 3) as usize];
        let (theta, fixed, r, h) = random_configuration(&mut rng, regime, t, h_max)?;
        let f = euler_functionals(&theta, &fixed, t, n_steps, s, DEFAULT_FLOOR_EPS)?;
        if f.floor_hits > 0 {
            return Ok(Replicate {
                value: None,
                floor_hits: f.floor_hits,
            });
        }
        let q = crate::likelihood::quad_decomposition_from(&f, &fixed, &theta, &r, &h, DeltaMode::Brownian)?;
        let l = log_rn_from(&f, &fixed, &theta, &theta.shifted(&r, &h))?;
        Ok(Replicate::clean(Some(((l - q.log_lr).abs() / (1.0 + l.abs()), l.abs()))))
    })?;
    let evaluated: Vec<(f64, f64)> = batch.values.iter().flatten().copied().collect();
    Ok(QuadSweepReport {
        configs,
        evaluated: evaluated.len(),
        skipped_floor: batch.flags.floor_hit,
        max_rel_residual: evaluated.iter().fold(0.0, |m, v| m.max(v.0)),
        max_abs_log_rn: evaluated.iter().fold(0.0, |m, v| m.max(v.1)),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LaplaceOracleReport {
    pub closed_form: f64,
    pub mc: MeanSe,
    /// `|mc − closed_form| / se`
    pub z: f64,
}

/// Monte Carlo estimate of `E exp{−2μ²∫₀ᵗ𝒴̃}` for `d𝒴̃ = a dt + σ₁√𝒴̃ d𝒲`
/// from exact CIR transitions, the time integral taken by the trapezoidal
/// rule, against [`cir_integral_laplace`].
#[allow(clippy::too_many_arguments)]
pub fn laplace_oracle(
    a: f64,
    sigma1: f64,
    y0: f64,
    t: f64,
    mu: f64,
    n_steps: usize,
    m: usize,
    master_seed: u64,
) -> Result<LaplaceOracleReport> {
    let tr = crate::sim::CirTransition::new(a, 0.0, sigma1, t / n_steps as f64)?;
    if !(y0 >= 0.0 && y0.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "y0",
            value: y0,
            reason: "must be finite and nonnegative",
        });
    }
    let dt = t / n_steps as f64;
    let batch = run_replicates(m, master_seed, |s| {
        let mut rng = s.rng();
        let mut y = y0;
        let mut int = 0.0;
        for _ in 0..n_steps {
            let y1 = tr.sample(&mut rng, y);
            int += 0.5 * (y + y1) * dt;
            y = y1;
        }
        Ok(Replicate::clean((-2.0 * mu * mu * int).exp()))
    })?;
    let mc = MeanSe::of(&batch.values);
    let closed_form = cir_integral_laplace(a, sigma1, y0, t, mu);
    Ok(LaplaceOracleReport {
        closed_form,
        mc,
        z: mc.z(closed_form),
    })
}

/// `E exp{hᵀΔ − ½hᵀJh}` over limit draws, for the unit-expectation check.
pub fn limit_laq_dj(draws: &[LimitDraw], h: &Vec4) -> MeanSe {
    let vals: Vec<f64> = draws
        .iter()
        .map(|d| (dot4(*h, d.delta) - 0.5 * d.info.quad_form(*h)).exp())
        .collect();
    MeanSe::of(&vals)
}

/// Standard normal draws for two-sample references.
pub fn normal_sample(m: usize, seed: SeedSpec) -> Vec<f64> {
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rng = seed.rng();
    (0..m).map(|_| n.sample(&mut rng)).collect()
}
