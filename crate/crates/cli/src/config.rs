//! Flat `key = value` run configuration.
//!
//! ```text
//! # comment
//! experiment = converge
//! seed = 7
//!
//! [model]
//! a = 1.0
//! b = -1.0
//! T_list = 100, 1000
//! ```
//!
//! Section headers only group keys for the reader; every key lives in one
//! flat namespace. Unknown keys, duplicates, malformed values and missing
//! required keys are all rejected with the offending line number.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use heston_laq::model::{parameter_domain_check, DomainStatus};
use heston_laq::sim::{default_n_steps, Scheme};
use heston_laq::{DriftParams, FixedCoeffs, Regime};
use serde::Serialize;

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Experiment {
    Simulate,
    Quadcheck,
    Laq,
    Converge,
    Power,
    Mle,
    Ergodic,
    Oracle,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::Simulate,
        Experiment::Quadcheck,
        Experiment::Laq,
        Experiment::Converge,
        Experiment::Power,
        Experiment::Mle,
        Experiment::Ergodic,
        Experiment::Oracle,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Experiment::Simulate => "simulate",
            Experiment::Quadcheck => "quadcheck",
            Experiment::Laq => "laq",
            Experiment::Converge => "converge",
            Experiment::Power => "power",
            Experiment::Mle => "mle",
            Experiment::Ergodic => "ergodic",
            Experiment::Oracle => "oracle",
        }
    }

    pub fn from_name(s: &str) -> Option<Experiment> {
        Experiment::ALL.into_iter().find(|e| e.name() == s)
    }

    fn default_t(&self) -> f64 {
        match self {
            Experiment::Simulate | Experiment::Oracle => 1.0,
            Experiment::Quadcheck => 5.0,
            Experiment::Ergodic => 2000.0,
            Experiment::Laq | Experiment::Converge | Experiment::Power | Experiment::Mle => 100.0,
        }
    }

    /// Exact paths wherever `1/Y` statistics are accumulated over long
    /// horizons, because the Euler floor is hit at desk-scale step sizes.
    fn default_scheme(&self) -> Scheme {
        match self {
            Experiment::Converge | Experiment::Power | Experiment::Mle | Experiment::Ergodic => Scheme::ExactCir,
            _ => Scheme::EulerFullTruncation,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Real,
    Int,
    Word,
    RealList,
    VecList,
}

impl Kind {
    fn describe(&self) -> &'static str {
        match self {
            Kind::Real => "a real number",
            Kind::Int => "a nonnegative integer",
            Kind::Word => "a word",
            Kind::RealList => "a comma-separated list of reals",
            Kind::VecList => "a ';'-separated list of 4-vectors",
        }
    }
}

const KEYS: &[(&str, Kind)] = &[
    ("experiment", Kind::Word),
    ("seed", Kind::Int),
    ("out", Kind::Word),
    ("a", Kind::Real),
    ("alpha", Kind::Real),
    ("b", Kind::Real),
    ("beta", Kind::Real),
    ("sigma1", Kind::Real),
    ("sigma2", Kind::Real),
    ("rho", Kind::Real),
    ("y0", Kind::Real),
    ("x0", Kind::Real),
    ("T", Kind::Real),
    ("T_list", Kind::RealList),
    ("n_steps", Kind::Int),
    ("M", Kind::Int),
    ("scheme", Kind::Word),
    ("configs", Kind::Int),
    ("h_max", Kind::Real),
    ("h", Kind::RealList),
    ("h_list", Kind::VecList),
    ("limit_m", Kind::Int),
    ("limit_steps", Kind::Int),
    ("limit_factor", Kind::Int),
    ("coordinate", Kind::Int),
    ("level", Kind::Real),
    ("loss", Kind::Word),
    ("loss_c", Kind::Real),
    ("marginal_T", Kind::Real),
    ("marginal_M", Kind::Int),
    ("mu", Kind::Real),
    ("tol_residual", Kind::Real),
    ("tol_z", Kind::Real),
    ("tol_ks", Kind::Real),
    ("tol_ks_gamma", Kind::Real),
    ("tol_rel", Kind::Real),
    ("tol_power", Kind::Real),
    ("tol_cov", Kind::Real),
    ("tol_info", Kind::Real),
];

#[derive(Debug, Clone, PartialEq)]
enum Value {
    Real(f64),
    Int(u64),
    Word(String),
    RealList(Vec<f64>),
    VecList(Vec<[f64; 4]>),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LossKind {
    BoundedQuadratic,
    Indicator,
}

/// Acceptance thresholds, each overridable from the config.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    pub residual: f64,
    pub z: f64,
    pub ks: f64,
    pub ks_gamma: f64,
    pub rel: f64,
    pub power: f64,
    pub cov: f64,
    pub info: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            residual: 1e-8,
            z: 3.0,
            ks: 0.05,
            ks_gamma: 0.03,
            rel: 0.05,
            power: 0.05,
            cov: 0.15,
            info: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub out: Option<String>,
    pub theta: DriftParams,
    pub fixed: FixedCoeffs,
    pub regime: Regime,
    pub t: f64,
    pub t_list: Vec<f64>,
    /// `None` means [`default_n_steps`] of each horizon.
    pub n_steps: Option<usize>,
    pub m: usize,
    pub scheme: Scheme,
    pub configs: usize,
    pub h_max: f64,
    pub h: Option<[f64; 4]>,
    pub h_list: Vec<[f64; 4]>,
    pub limit_m: Option<usize>,
    pub limit_steps: usize,
    pub limit_factor: usize,
    pub coordinate: usize,
    pub level: f64,
    pub loss: LossKind,
    pub loss_c: f64,
    pub marginal_t: f64,
    pub marginal_m: usize,
    pub mu: f64,
    pub tol: Tolerances,
}

impl RunConfig {
    pub fn steps_for(&self, t: f64) -> usize {
        self.n_steps.unwrap_or_else(|| default_n_steps(t))
    }

    /// Canonical `key = value` rendering of every resolved setting.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let list = |v: &[f64]| v.iter().map(|x| format!("{x}")).collect::<Vec<_>>().join(", ");
        let vec4 = |v: &[f64; 4]| list(v);
        let _ = writeln!(s, "experiment = {}", self.experiment.name());
        let _ = writeln!(s, "seed = {}", self.seed);
        if let Some(o) = &self.out {
            let _ = writeln!(s, "out = {o}");
        }
        let _ = writeln!(s, "\n[model]");
        let th = &self.theta;
        let fx = &self.fixed;
        for (k, v) in [
            ("a", th.a),
            ("alpha", th.alpha),
            ("b", th.b),
            ("beta", th.beta),
            ("sigma1", fx.sigma1),
            ("sigma2", fx.sigma2),
            ("rho", fx.rho),
            ("y0", fx.y0),
            ("x0", fx.x0),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        let _ = writeln!(s, "\n[run]");
        let _ = writeln!(s, "T = {}", self.t);
        let _ = writeln!(s, "T_list = {}", list(&self.t_list));
        match self.n_steps {
            Some(n) => {
                let _ = writeln!(s, "n_steps = {n}");
            }
            None => {
                let _ = writeln!(s, "# n_steps = max(1000, ceil(200 T)) per horizon");
            }
        }
        let _ = writeln!(s, "M = {}", self.m);
        let _ = writeln!(s, "scheme = {}", self.scheme.name());
        let _ = writeln!(s, "configs = {}", self.configs);
        let _ = writeln!(s, "h_max = {}", self.h_max);
        if let Some(h) = &self.h {
            let _ = writeln!(s, "h = {}", vec4(h));
        }
        let _ = writeln!(
            s,
            "h_list = {}",
            self.h_list.iter().map(vec4).collect::<Vec<_>>().join("; ")
        );
        if let Some(l) = self.limit_m {
            let _ = writeln!(s, "limit_m = {l}");
        }
        let _ = writeln!(s, "limit_steps = {}", self.limit_steps);
        let _ = writeln!(s, "limit_factor = {}", self.limit_factor);
        let _ = writeln!(s, "coordinate = {}", self.coordinate);
        let _ = writeln!(s, "level = {}", self.level);
        let _ = writeln!(
            s,
            "loss = {}",
            match self.loss {
                LossKind::BoundedQuadratic => "bounded_quadratic",
                LossKind::Indicator => "indicator",
            }
        );
        let _ = writeln!(s, "loss_c = {}", self.loss_c);
        let _ = writeln!(s, "marginal_T = {}", self.marginal_t);
        let _ = writeln!(s, "marginal_M = {}", self.marginal_m);
        let _ = writeln!(s, "mu = {}", self.mu);
        let _ = writeln!(s, "\n[tolerances]");
        let t = &self.tol;
        for (k, v) in [
            ("tol_residual", t.residual),
            ("tol_z", t.z),
            ("tol_ks", t.ks),
            ("tol_ks_gamma", t.ks_gamma),
            ("tol_rel", t.rel),
            ("tol_power", t.power),
            ("tol_cov", t.cov),
            ("tol_info", t.info),
        ] {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}

fn parse_value(kind: Kind, raw: &str) -> Option<Value> {
    let real = |t: &str| t.trim().parse::<f64>().ok().filter(|v| v.is_finite());
    match kind {
        Kind::Real => real(raw).map(Value::Real),
        Kind::Int => raw.trim().parse::<u64>().ok().map(Value::Int),
        Kind::Word => {
            let w = raw.trim();
            (!w.is_empty() && !w.contains(char::is_whitespace)).then(|| Value::Word(w.to_string()))
        }
        Kind::RealList => raw.split(',').map(real).collect::<Option<Vec<_>>>().map(Value::RealList),
        Kind::VecList => raw
            .split(';')
            .map(|chunk| {
                let v = chunk.split(',').map(real).collect::<Option<Vec<_>>>()?;
                <[f64; 4]>::try_from(v).ok()
            })
            .collect::<Option<Vec<_>>>()
            .map(Value::VecList),
    }
}

#[derive(Debug, Default)]
struct Entries {
    map: BTreeMap<&'static str, (Value, usize)>,
    last_line: usize,
}

impl Entries {
    fn real(&self, k: &str) -> Option<(f64, usize)> {
        match self.map.get(k) {
            Some((Value::Real(v), l)) => Some((*v, *l)),
            _ => None,
        }
    }

    fn real_or(&self, k: &str, d: f64) -> f64 {
        self.real(k).map_or(d, |v| v.0)
    }

    fn int(&self, k: &str) -> Option<(u64, usize)> {
        match self.map.get(k) {
            Some((Value::Int(v), l)) => Some((*v, *l)),
            _ => None,
        }
    }

    fn int_or(&self, k: &str, d: usize) -> usize {
        self.int(k).map_or(d, |v| v.0 as usize)
    }

    fn word(&self, k: &str) -> Option<(&str, usize)> {
        match self.map.get(k) {
            Some((Value::Word(v), l)) => Some((v.as_str(), *l)),
            _ => None,
        }
    }

    fn line(&self, k: &str) -> usize {
        self.map.get(k).map_or(self.last_line + 1, |e| e.1)
    }
}

fn tokenize(text: &str) -> Result<Entries, CliError> {
    let mut e = Entries::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        e.last_line = line;
        let body = raw.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if body.starts_with('[') {
            let ok = body.ends_with(']') && body.len() > 2 && !body[1..body.len() - 1].trim().is_empty();
            if !ok {
                return Err(CliError::config(line, format!("malformed section header '{body}'")));
            }
            continue;
        }
        let Some((k, v)) = body.split_once('=') else {
            return Err(CliError::config(line, format!("expected 'key = value', found '{body}'")));
        };
        let k = k.trim();
        let Some(&(name, kind)) = KEYS.iter().find(|(n, _)| *n == k) else {
            return Err(CliError::config(line, format!("unknown key '{k}'")));
        };
        if let Some((_, first)) = e.map.get(name) {
            return Err(CliError::config(
                line,
                format!("duplicate key '{name}' (first set on line {first})"),
            ));
        }
        let Some(val) = parse_value(kind, v) else {
            return Err(CliError::config(
                line,
                format!("key '{name}' expects {}, found '{}'", kind.describe(), v.trim()),
            ));
        };
        e.map.insert(name, (val, line));
    }
    Ok(e)
}

fn positive(e: &Entries, k: &str, v: f64) -> Result<f64, CliError> {
    if v > 0.0 {
        Ok(v)
    } else {
        Err(CliError::config(e.line(k), format!("'{k}' must be positive, found {v}")))
    }
}

fn at_least_one(e: &Entries, k: &str, v: usize) -> Result<usize, CliError> {
    if v >= 1 {
        Ok(v)
    } else {
        Err(CliError::config(e.line(k), format!("'{k}' must be at least 1")))
    }
}

/// Parses and validates a configuration. `experiment` (from the command
/// line) fills in or must agree with the `experiment` key; `seed` overrides
/// the `seed` key.
pub fn parse_config(text: &str, experiment: Option<Experiment>, seed: Option<u64>) -> Result<RunConfig, CliError> {
    let e = tokenize(text)?;

    let experiment = match (e.word("experiment"), experiment) {
        (Some((w, line)), cli) => {
            let Some(x) = Experiment::from_name(w) else {
                return Err(CliError::config(line, format!("unknown experiment '{w}'")));
            };
            if let Some(c) = cli {
                if c != x {
                    return Err(CliError::config(
                        line,
                        format!("config names experiment '{w}' but the subcommand is '{}'", c.name()),
                    ));
                }
            }
            x
        }
        (None, Some(c)) => c,
        (None, None) => {
            return Err(CliError::config(e.last_line + 1, "missing required key 'experiment'".into()));
        }
    };
    let seed = match (seed, e.int("seed")) {
        (Some(s), _) => s,
        (None, Some((s, _))) => s,
        (None, None) => return Err(CliError::config(e.last_line + 1, "missing required key 'seed'".into())),
    };

    let theta = DriftParams {
        a: e.real_or("a", 1.0),
        alpha: e.real_or("alpha", 0.0),
        b: e.real_or("b", 1.0),
        beta: e.real_or("beta", 0.0),
    };
    let fixed = FixedCoeffs {
        sigma1: e.real_or("sigma1", 1.0),
        sigma2: e.real_or("sigma2", 1.0),
        rho: e.real_or("rho", 0.0),
        y0: e.real_or("y0", 1.0),
        x0: e.real_or("x0", 0.0),
    };
    for k in ["sigma1", "sigma2", "y0"] {
        let v = e.real_or(k, 1.0);
        positive(&e, k, v)?;
    }
    if !(fixed.rho > -1.0 && fixed.rho < 1.0) {
        return Err(CliError::config(e.line("rho"), format!("'rho' must lie in (-1, 1), found {}", fixed.rho)));
    }
    let regime = theta.regime();
    match parameter_domain_check(theta.a, fixed.sigma1, regime) {
        DomainStatus::Invalid => {
            return Err(CliError::config(
                e.line("a"),
                format!(
                    "a = {} is outside the parameter domain: the {} regime needs a > sigma1^2/2 = {}",
                    theta.a,
                    regime.name(),
                    fixed.feller_bound()
                ),
            ))
        }
        DomainStatus::Interior | DomainStatus::Boundary => {}
    }

    let t = positive(&e, "T", e.real_or("T", experiment.default_t()))?;
    let t_list = match e.map.get("T_list") {
        Some((Value::RealList(v), line)) => {
            if v.iter().any(|x| !(*x > 0.0)) {
                return Err(CliError::config(*line, "'T_list' entries must be positive".into()));
            }
            v.clone()
        }
        _ => match experiment {
            Experiment::Laq => vec![10.0, 100.0],
            Experiment::Converge => vec![100.0, 1000.0],
            _ => vec![t],
        },
    };
    if regime == Regime::Critical {
        let needs_gt_one: Vec<f64> = match experiment {
            Experiment::Laq | Experiment::Converge => t_list.clone(),
            Experiment::Power | Experiment::Mle => vec![t],
            _ => vec![],
        };
        if needs_gt_one.iter().any(|&x| x <= 1.0) {
            return Err(CliError::config(
                e.line(if matches!(experiment, Experiment::Laq | Experiment::Converge) { "T_list" } else { "T" }),
                "critical scaling needs horizons T > 1".into(),
            ));
        }
    }
    let n_steps = match e.int("n_steps") {
        Some((n, _)) => Some(at_least_one(&e, "n_steps", n as usize)?),
        None => None,
    };
    let m = at_least_one(&e, "M", e.int_or("M", 1000))?;
    let scheme = match e.word("scheme") {
        Some((w, line)) => Scheme::from_name(w)
            .ok_or_else(|| CliError::config(line, format!("'scheme' must be 'euler' or 'exact', found '{w}'")))?,
        None => experiment.default_scheme(),
    };
    if experiment == Experiment::Quadcheck && scheme != Scheme::EulerFullTruncation {
        return Err(CliError::config(
            e.line("scheme"),
            "quadcheck needs Brownian increments, so 'scheme' must be 'euler'".into(),
        ));
    }

    let h = match e.map.get("h") {
        Some((Value::RealList(v), line)) => Some(
            <[f64; 4]>::try_from(v.clone())
                .map_err(|_| CliError::config(*line, format!("'h' needs 4 components, found {}", v.len())))?,
        ),
        _ => None,
    };
    let h_list = match e.map.get("h_list") {
        Some((Value::VecList(v), _)) => v.clone(),
        _ => {
            if regime == Regime::Supercritical {
                vec![[0.0, 1.0, 0.0, 0.0], [0.0, 0.0, 0.5, 0.0], [0.0, 0.0, 0.0, 0.5]]
            } else {
                vec![
                    [0.5, 0.0, 0.0, 0.0],
                    [0.0, 0.5, 0.0, 0.0],
                    [0.0, 0.0, 0.5, 0.0],
                    [0.0, 0.0, 0.0, 0.5],
                    [0.3, -0.3, 0.3, -0.3],
                ]
            }
        }
    };
    let coordinate = e.int_or("coordinate", 1);
    let max_coord = if regime == Regime::Critical { 2 } else { 4 };
    if experiment == Experiment::Power {
        if regime == Regime::Supercritical {
            return Err(CliError::config(
                e.line("b"),
                "score tests exist only for b >= 0 (subcritical or critical)".into(),
            ));
        }
        if !(1..=max_coord).contains(&coordinate) {
            return Err(CliError::config(
                e.line("coordinate"),
                format!("'coordinate' must lie in 1..={max_coord} for the {} regime", regime.name()),
            ));
        }
    }
    let level = e.real_or("level", 0.05);
    if !(level > 0.0 && level < 1.0) {
        return Err(CliError::config(e.line("level"), format!("'level' must lie in (0, 1), found {level}")));
    }
    let loss = match e.word("loss") {
        None | Some(("bounded_quadratic", _)) => LossKind::BoundedQuadratic,
        Some(("indicator", _)) => LossKind::Indicator,
        Some((w, line)) => {
            return Err(CliError::config(
                line,
                format!("'loss' must be 'bounded_quadratic' or 'indicator', found '{w}'"),
            ))
        }
    };
    if experiment == Experiment::Ergodic && regime != Regime::Subcritical {
        return Err(CliError::config(e.line("b"), "ergodic checks need b > 0".into()));
    }
    let out = e.word("out").map(|(w, _)| w.to_string());
    let d = Tolerances::default();
    let tol = Tolerances {
        residual: positive(&e, "tol_residual", e.real_or("tol_residual", d.residual))?,
        z: positive(&e, "tol_z", e.real_or("tol_z", d.z))?,
        ks: positive(&e, "tol_ks", e.real_or("tol_ks", d.ks))?,
        ks_gamma: positive(&e, "tol_ks_gamma", e.real_or("tol_ks_gamma", d.ks_gamma))?,
        rel: positive(&e, "tol_rel", e.real_or("tol_rel", d.rel))?,
        power: positive(&e, "tol_power", e.real_or("tol_power", d.power))?,
        cov: positive(&e, "tol_cov", e.real_or("tol_cov", d.cov))?,
        info: positive(&e, "tol_info", e.real_or("tol_info", d.info))?,
    };

    Ok(RunConfig {
        experiment,
        seed,
        out,
        theta,
        fixed,
        regime,
        t,
        t_list,
        n_steps,
        m,
        scheme,
        configs: at_least_one(&e, "configs", e.int_or("configs", 200))?,
        h_max: positive(&e, "h_max", e.real_or("h_max", 2.0))?,
        h,
        h_list,
        limit_m: e.int("limit_m").map(|v| v.0 as usize),
        limit_steps: at_least_one(&e, "limit_steps", e.int_or("limit_steps", heston_laq::sim::LIMIT_STEPS))?,
        limit_factor: at_least_one(&e, "limit_factor", e.int_or("limit_factor", 10))?,
        coordinate,
        level,
        loss,
        loss_c: positive(&e, "loss_c", e.real_or("loss_c", 1.0))?,
        marginal_t: positive(&e, "marginal_T", e.real_or("marginal_T", 50.0))?,
        marginal_m: at_least_one(&e, "marginal_M", e.int_or("marginal_M", 10_000))?,
        mu: e.real_or("mu", 0.5),
        tol,
    })
}
