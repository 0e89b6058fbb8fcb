//! Flat `key = value` experiment configuration.
//!
//! Lines are `key = value`; `#` starts a comment. Unknown or repeated keys are
//! rejected and every violation found is reported at once.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::mc::McSetup;
use crate::model::{
    fit_empirical_marginal, parse_args, parse_f64, split_call, CoefficientModel, InnovationDist, MarginalX, Mda,
    MdaCase, SlowlyVarying, TailModel, TargetMarginalY,
};
use crate::rng::derive_seed;
use crate::scaling::{k_from_xi, select_p, xi_threshold};
use crate::simulate::{gen_innovations, Filter, ModelSpec, DEFAULT_TRUNCATION_TOL};

/// Length of the pilot path used to fit an empirical `X` marginal.
pub const PILOT_LENGTH: usize = 1 << 17;
/// Replicate index reserved for the pilot path seed.
pub const PILOT_STREAM: u64 = u64::MAX;

pub const DEFAULT_REPLICATES: usize = 400;
pub const DEFAULT_IID_ALPHA: f64 = 4.0;
pub const DEFAULT_OUTPUT: &str = "out";

const KEYS: [&str; 14] = [
    "beta",
    "l0",
    "innovation",
    "x_marginal",
    "y_marginal",
    "xi",
    "n",
    "n_grid",
    "replicates",
    "master_seed",
    "p",
    "truncation_tol",
    "output",
    "iid_alpha",
];

/// How the marginal of `X` is obtained.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum XMarginalChoice {
    /// Exact Gaussian law implied by Gaussian innovations and the filter.
    Gaussian,
    /// Declared Pareto law; usable for deterministic constants only.
    Pareto(f64),
    /// Fitted to a pilot path of the process.
    Empirical { tail_fraction: f64, tail: TailModel },
}

impl fmt::Display for XMarginalChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian => f.write_str("gaussian"),
            Self::Pareto(a) => write!(f, "pareto({a})"),
            Self::Empirical { tail_fraction, tail } => {
                let t = match tail {
                    TailModel::Frechet => "frechet",
                    TailModel::Gumbel => "gumbel",
                };
                write!(f, "empirical({tail_fraction},{t})")
            }
        }
    }
}

impl FromStr for XMarginalChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, args) = split_call(s)?;
        match head {
            "gaussian" => {
                parse_args::<0>(&args, s)?;
                Ok(Self::Gaussian)
            }
            "pareto" => {
                let [a] = parse_args::<1>(&args, s)?;
                let a = parse_f64(a)?;
                MarginalX::pareto(a)?;
                Ok(Self::Pareto(a))
            }
            "empirical" => {
                let [tau, tail] = parse_args::<2>(&args, s)?;
                let tail_fraction = parse_f64(tau)?;
                if !(tail_fraction > 0.0 && tail_fraction < 0.5) {
                    return Err(Error::Config(format!(
                        "empirical tail fraction must lie in (0, 0.5), got {tail_fraction}"
                    )));
                }
                let tail = match tail.trim() {
                    "frechet" => TailModel::Frechet,
                    "gumbel" => TailModel::Gumbel,
                    other => return Err(Error::Config(format!("unknown tail model `{other}`"))),
                };
                Ok(Self::Empirical { tail_fraction, tail })
            }
            _ => Err(Error::Config(format!("unknown x_marginal `{s}`"))),
        }
    }
}

/// Target law of `Y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum YMarginalChoice {
    Pareto(f64),
    Exponential,
    /// `log(X⁺)^α`, spliced at `u0`.
    LogPareto(f64),
    /// The law of `X`, so that `G` is the identity.
    SameAsX,
}

impl fmt::Display for YMarginalChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Pareto(a) => write!(f, "pareto({a})"),
            Self::Exponential => f.write_str("exponential"),
            Self::LogPareto(u0) => write!(f, "log_pareto({u0})"),
            Self::SameAsX => f.write_str("same_as_x"),
        }
    }
}

impl FromStr for YMarginalChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, args) = split_call(s)?;
        match head {
            "pareto" => {
                let [a] = parse_args::<1>(&args, s)?;
                let a = parse_f64(a)?;
                TargetMarginalY::pareto(a)?;
                Ok(Self::Pareto(a))
            }
            "exponential" => {
                parse_args::<0>(&args, s)?;
                Ok(Self::Exponential)
            }
            "log_pareto" => {
                let [u0] = parse_args::<1>(&args, s)?;
                let u0 = parse_f64(u0)?;
                if !(u0 > 0.0 && u0 < 1.0) {
                    return Err(Error::Config(format!("log_pareto splice point must lie in (0, 1), got {u0}")));
                }
                Ok(Self::LogPareto(u0))
            }
            "same_as_x" => {
                parse_args::<0>(&args, s)?;
                Ok(Self::SameAsX)
            }
            _ => Err(Error::Config(format!("unknown y_marginal `{s}`"))),
        }
    }
}

/// One sample size or a grid of them.
#[derive(Debug, Clone, PartialEq)]
pub enum SampleSizes {
    Single(usize),
    Grid(Vec<usize>),
}

impl SampleSizes {
    pub fn as_slice(&self) -> &[usize] {
        match self {
            Self::Single(n) => std::slice::from_ref(n),
            Self::Grid(g) => g,
        }
    }
}

/// A parsed experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub beta: f64,
    pub l0: SlowlyVarying,
    pub innovation: InnovationDist,
    pub x_marginal: XMarginalChoice,
    pub y_marginal: YMarginalChoice,
    pub xi: f64,
    pub sizes: SampleSizes,
    pub replicates: usize,
    pub master_seed: u64,
    pub p: Option<usize>,
    pub truncation_tol: f64,
    pub output: String,
    pub iid_alpha: f64,
}

/// All violations found in a configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigErrors(pub Vec<Error>);

impl ConfigErrors {
    /// True when any violation is a feasibility failure rather than a malformed entry.
    pub fn has_infeasible(&self) -> bool {
        self.0.iter().any(|e| matches!(e, Error::Infeasible(_)))
    }
}

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, e) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

impl From<ConfigErrors> for Error {
    fn from(e: ConfigErrors) -> Self {
        if e.has_infeasible() {
            Error::Infeasible(e.to_string())
        } else {
            Error::Config(e.to_string())
        }
    }
}

/// Parses and fully validates a configuration, including the feasibility
/// conditions on `ξ`.
pub fn parse_config(text: &str) -> std::result::Result<ExperimentConfig, ConfigErrors> {
    let (cfg, warnings) = parse_config_lenient(text)?;
    if warnings.is_empty() {
        Ok(cfg)
    } else {
        Err(ConfigErrors(warnings))
    }
}

/// Parses a configuration, returning feasibility violations as warnings
/// instead of errors. Malformed entries are still errors.
pub fn parse_config_lenient(text: &str) -> std::result::Result<(ExperimentConfig, Vec<Error>), ConfigErrors> {
    let mut errors = Vec::new();
    let mut entries: Vec<(&str, &str)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            errors.push(Error::Config(format!("line {}: expected `key = value`, got `{line}`", lineno + 1)));
            continue;
        };
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            errors.push(Error::Config(format!("line {}: unknown key `{key}`", lineno + 1)));
        } else if entries.iter().any(|(k, _)| *k == key) {
            errors.push(Error::Config(format!("line {}: duplicate key `{key}`", lineno + 1)));
        } else {
            entries.push((key, value));
        }
    }
    let get = |key: &str| entries.iter().find(|(k, _)| *k == key).map(|(_, v)| *v);

    fn field<T>(
        errors: &mut Vec<Error>,
        key: &str,
        value: Option<&str>,
        parse: impl FnOnce(&str) -> Result<T>,
    ) -> Option<T> {
        let v = value?;
        match parse(v) {
            Ok(t) => Some(t),
            Err(e) => {
                errors.push(Error::Config(format!("{key}: {e}")));
                None
            }
        }
    }
    fn required<T>(errors: &mut Vec<Error>, key: &str, value: Option<T>, present: bool) -> Option<T> {
        if !present {
            errors.push(Error::Config(format!("missing required key `{key}`")));
        }
        value
    }

    let beta = field(&mut errors, "beta", get("beta"), |v| {
        let b = parse_f64(v)?;
        if !(b > 0.5 && b < 1.0) {
            return Err(Error::Config(format!("beta must lie in (1/2, 1), got {b}")));
        }
        Ok(b)
    });
    let beta = required(&mut errors, "beta", beta, get("beta").is_some());
    let l0 = field(&mut errors, "l0", get("l0"), SlowlyVarying::from_str)
        .or_else(|| get("l0").is_none().then(|| SlowlyVarying::constant(1.0).expect("unit constant")));
    let innovation = field(&mut errors, "innovation", get("innovation"), InnovationDist::from_str)
        .or_else(|| get("innovation").is_none().then(|| InnovationDist::gaussian(1.0).expect("unit variance")));
    let x_marginal = field(&mut errors, "x_marginal", get("x_marginal"), XMarginalChoice::from_str)
        .or_else(|| get("x_marginal").is_none().then_some(XMarginalChoice::Gaussian));
    let y_marginal = field(&mut errors, "y_marginal", get("y_marginal"), YMarginalChoice::from_str);
    let y_marginal = required(&mut errors, "y_marginal", y_marginal, get("y_marginal").is_some());
    let xi = field(&mut errors, "xi", get("xi"), |v| {
        let x = parse_f64(v)?;
        if !(x > 0.0 && x < 1.0) {
            return Err(Error::Config(format!("xi must lie in (0, 1), got {x}")));
        }
        Ok(x)
    });
    let xi = required(&mut errors, "xi", xi, get("xi").is_some());
    let parse_n = |v: &str| -> Result<usize> {
        let n = v.trim().parse::<usize>().map_err(|_| Error::Config(format!("`{v}` is not a sample size")))?;
        if n < 16 {
            return Err(Error::Config(format!("sample size must be at least 16, got {n}")));
        }
        Ok(n)
    };
    let sizes = match (get("n"), get("n_grid")) {
        (Some(_), Some(_)) => {
            errors.push(Error::Config("give either `n` or `n_grid`, not both".into()));
            None
        }
        (None, None) => {
            errors.push(Error::Config("missing required key `n` (or `n_grid`)".into()));
            None
        }
        (Some(v), None) => field(&mut errors, "n", Some(v), parse_n).map(SampleSizes::Single),
        (None, Some(v)) => field(&mut errors, "n_grid", Some(v), |v| {
            let g = v.split(',').map(parse_n).collect::<Result<Vec<_>>>()?;
            if g.is_empty() || g.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Config(format!("n_grid must be strictly increasing, got `{v}`")));
            }
            Ok(g)
        })
        .map(SampleSizes::Grid),
    };
    let replicates = field(&mut errors, "replicates", get("replicates"), |v| {
        let r = v.parse::<usize>().map_err(|_| Error::Config(format!("`{v}` is not a replicate count")))?;
        if r < 2 {
            return Err(Error::Config(format!("need at least 2 replicates, got {r}")));
        }
        Ok(r)
    })
    .or_else(|| get("replicates").is_none().then_some(DEFAULT_REPLICATES));
    let master_seed = field(&mut errors, "master_seed", get("master_seed"), |v| {
        v.parse::<u64>().map_err(|_| Error::Config(format!("`{v}` is not an unsigned 64-bit seed")))
    });
    let master_seed = required(&mut errors, "master_seed", master_seed, get("master_seed").is_some());
    let p = field(&mut errors, "p", get("p"), |v| {
        let p = v.parse::<usize>().map_err(|_| Error::Config(format!("`{v}` is not a reduction order")))?;
        if p == 0 {
            return Err(Error::Config("reduction order p must be positive".into()));
        }
        Ok(p)
    });
    let truncation_tol = field(&mut errors, "truncation_tol", get("truncation_tol"), |v| {
        let t = parse_f64(v)?;
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::Config(format!("truncation_tol must lie in (0, 1), got {t}")));
        }
        Ok(t)
    })
    .or_else(|| get("truncation_tol").is_none().then_some(DEFAULT_TRUNCATION_TOL));
    let output = get("output").unwrap_or(DEFAULT_OUTPUT).to_string();
    let iid_alpha = field(&mut errors, "iid_alpha", get("iid_alpha"), |v| {
        let a = parse_f64(v)?;
        if !(a > 2.0 && a.is_finite()) {
            return Err(Error::Config(format!("iid_alpha must exceed 2, got {a}")));
        }
        Ok(a)
    })
    .or_else(|| get("iid_alpha").is_none().then_some(DEFAULT_IID_ALPHA));

    if let (Some(innov), Some(xm)) = (&innovation, &x_marginal) {
        match (innov, xm) {
            (InnovationDist::Gaussian { .. }, XMarginalChoice::Empirical { .. }) => errors.push(Error::Config(
                "x_marginal = empirical(..) needs student_t innovations; Gaussian innovations give an exact Gaussian marginal".into(),
            )),
            (InnovationDist::StudentT { .. }, XMarginalChoice::Gaussian) => errors.push(Error::Config(
                "student_t innovations do not give a Gaussian marginal; use x_marginal = empirical(tau,frechet|gumbel)".into(),
            )),
            _ => {}
        }
    }
    if let (
        Some(XMarginalChoice::Gaussian | XMarginalChoice::Empirical { tail: TailModel::Gumbel, .. }),
        Some(YMarginalChoice::LogPareto(_)),
    ) = (&x_marginal, &y_marginal)
    {
        errors.push(Error::Config("y_marginal = log_pareto(..) needs a Fréchet-domain x_marginal".into()));
    }

    if !errors.is_empty() {
        return Err(ConfigErrors(errors));
    }
    let cfg = ExperimentConfig {
        beta: beta.expect("checked"),
        l0: l0.expect("checked"),
        innovation: innovation.expect("checked"),
        x_marginal: x_marginal.expect("checked"),
        y_marginal: y_marginal.expect("checked"),
        xi: xi.expect("checked"),
        sizes: sizes.expect("checked"),
        replicates: replicates.expect("checked"),
        master_seed: master_seed.expect("checked"),
        p,
        truncation_tol: truncation_tol.expect("checked"),
        output,
        iid_alpha: iid_alpha.expect("checked"),
    };
    let warnings = feasibility_violations(&cfg);
    Ok((cfg, warnings))
}

impl ExperimentConfig {
    /// Extreme-value classification of `(X, Y)` as far as it is known before
    /// any fit. Fréchet-fitted empirical tails have an unknown index.
    pub fn declared_mdas(&self) -> (Option<Mda>, Option<Mda>) {
        let x = match self.x_marginal {
            XMarginalChoice::Gaussian => Some(Mda::Gumbel),
            XMarginalChoice::Pareto(a) => Some(Mda::Frechet(a)),
            XMarginalChoice::Empirical { tail: TailModel::Gumbel, .. } => Some(Mda::Gumbel),
            XMarginalChoice::Empirical { tail: TailModel::Frechet, .. } => None,
        };
        let y = match self.y_marginal {
            YMarginalChoice::Pareto(a) => Some(Mda::Frechet(a)),
            YMarginalChoice::Exponential | YMarginalChoice::LogPareto(_) => Some(Mda::Gumbel),
            YMarginalChoice::SameAsX => x,
        };
        (x, y)
    }

    /// The reduction order: the override, or the smallest admissible one.
    pub fn effective_p(&self) -> Result<usize> {
        match self.p {
            Some(p) => Ok(p),
            None => select_p(self.beta),
        }
    }

    pub fn coefficients(&self) -> Result<CoefficientModel> {
        CoefficientModel::with_tolerance(self.beta, self.l0.clone(), self.truncation_tol)
    }

    /// Builds the model. Empirical marginals are fitted to a pilot path seeded
    /// from `master_seed`. The result is not checked for simulation consistency.
    pub fn model_spec(&self) -> Result<ModelSpec> {
        let coeffs = self.coefficients()?;
        let x = match self.x_marginal {
            XMarginalChoice::Gaussian => MarginalX::from_filter(&coeffs, &self.innovation)?,
            XMarginalChoice::Pareto(a) => MarginalX::pareto(a)?,
            XMarginalChoice::Empirical { tail_fraction, tail } => {
                let eps = gen_innovations(
                    &self.innovation,
                    PILOT_LENGTH + coeffs.m(),
                    derive_seed(self.master_seed, PILOT_STREAM),
                );
                let pilot = Filter::new(coeffs.coeffs(), PILOT_LENGTH)?.apply(&eps)?;
                fit_empirical_marginal(&pilot, tail_fraction, tail)?
            }
        };
        let y = match self.y_marginal {
            YMarginalChoice::Pareto(a) => TargetMarginalY::pareto(a)?,
            YMarginalChoice::Exponential => TargetMarginalY::Exponential,
            YMarginalChoice::LogPareto(u0) => TargetMarginalY::log_pareto(x.clone(), u0)?,
            YMarginalChoice::SameAsX => TargetMarginalY::same_as(&x),
        };
        Ok(ModelSpec::declared(coeffs, self.innovation, x, y))
    }

    /// Builds a simulation-ready setup.
    pub fn mc_setup(&self) -> Result<McSetup> {
        let spec = self.model_spec()?;
        spec.validate()?;
        Ok(McSetup { spec, xi: self.xi, p: self.p, iid_alpha: self.iid_alpha })
    }
}

fn feasibility_violations(cfg: &ExperimentConfig) -> Vec<Error> {
    let mut out = Vec::new();
    let (Some(mx), Some(my)) = cfg.declared_mdas() else {
        return out;
    };
    let case = MdaCase::from_tags(mx, my);
    let index = |m: Mda| match m {
        Mda::Frechet(a) => Some(a),
        Mda::Gumbel => None,
    };
    match xi_threshold(case, cfg.beta, index(mx), index(my)) {
        Err(e) => out.push(e),
        Ok(t) if cfg.xi <= t => out.push(Error::Infeasible(format!(
            "{case}: xi = {} violates condition {}: need {t} < xi < 1",
            cfg.xi,
            case.condition_label()
        ))),
        Ok(_) => {}
    }
    for &n in cfg.sizes.as_slice() {
        let k = k_from_xi(n, cfg.xi);
        if !(2..n).contains(&k) {
            out.push(Error::Infeasible(format!("n = {n}, xi = {} gives k = {k}; need 2 <= k <= n - 1", cfg.xi)));
        }
    }
    out
}

/// Writes `cfg` in the format read by [`parse_config`].
pub fn serialize_config(cfg: &ExperimentConfig) -> String {
    let mut s = String::new();
    let mut line = |k: &str, v: String| {
        s.push_str(k);
        s.push_str(" = ");
        s.push_str(&v);
        s.push('\n');
    };
    line("beta", cfg.beta.to_string());
    line("l0", cfg.l0.to_string());
    line("innovation", cfg.innovation.to_string());
    line("x_marginal", cfg.x_marginal.to_string());
    line("y_marginal", cfg.y_marginal.to_string());
    line("xi", cfg.xi.to_string());
    match &cfg.sizes {
        SampleSizes::Single(n) => line("n", n.to_string()),
        SampleSizes::Grid(g) => line("n_grid", g.iter().map(|n| n.to_string()).collect::<Vec<_>>().join(",")),
    }
    line("replicates", cfg.replicates.to_string());
    line("master_seed", cfg.master_seed.to_string());
    if let Some(p) = cfg.p {
        line("p", p.to_string());
    }
    line("truncation_tol", cfg.truncation_tol.to_string());
    line("output", cfg.output.clone());
    line("iid_alpha", cfg.iid_alpha.to_string());
    s
}
