//! Declarative description of the stochastic model.
//!
//! * [`SlowlyVarying`]: the closed family of slowly varying functions used for
//!   coefficients and tail corrections.
//! * [`CoefficientModel`]: the filter `c_0 = 1`, `c_k = k^{-β} L₀(k)`, truncated at `M`.
//! * [`InnovationDist`]: Gaussian or scaled Student-t innovations.
//! * [`MarginalX`] / [`TargetMarginalY`]: marginal laws in quantile form
//!   (`F`, `f`, `Q`, `fQ`) with their extreme-value classification.
//! * [`subordinate`]: the transform `G = Q_Y ∘ F`.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{domain, Error, Result};
use crate::quad;
use crate::special::{hermite_he, norm_cdf, norm_isf, norm_pdf, norm_quantile, norm_sf};

/// Probabilities handed to `Q_Y` are kept inside `[CLAMP_EPS, 1 - CLAMP_EPS]`.
pub const CLAMP_EPS: f64 = 1e-15;

// ---------------------------------------------------------------------------
// slowly varying functions
// ---------------------------------------------------------------------------

type NumericFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

#[derive(Clone)]
enum SvKind {
    Constant(f64),
    LogPower { scale: f64, power: f64 },
    Ratio(Box<SlowlyVarying>, Box<SlowlyVarying>),
    Scaled(f64, Box<SlowlyVarying>),
    Numeric { name: String, f: NumericFn },
}

/// A slowly varying function `L` on `(1, ∞)`.
#[derive(Clone)]
pub struct SlowlyVarying(SvKind);

impl SlowlyVarying {
    pub fn constant(c: f64) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return domain(format!("constant slowly varying function needs c > 0, got {c}"));
        }
        Ok(Self(SvKind::Constant(c)))
    }

    /// `scale · (ln u)^power` for `u > e`, continued by `scale` on `(1, e]`.
    pub fn log_power(scale: f64, power: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite() && power.is_finite()) {
            return domain(format!("log_power needs scale > 0 and finite power, got ({scale}, {power})"));
        }
        Ok(Self(SvKind::LogPower { scale, power }))
    }

    pub fn ratio(num: SlowlyVarying, den: SlowlyVarying) -> Self {
        Self(SvKind::Ratio(Box::new(num), Box::new(den)))
    }

    pub fn scaled(c: f64, inner: SlowlyVarying) -> Result<Self> {
        if !(c > 0.0 && c.is_finite()) {
            return domain(format!("scale factor must be positive, got {c}"));
        }
        Ok(Self(SvKind::Scaled(c, Box::new(inner))))
    }

    /// Wraps a numerically defined slowly varying function. `name` is used in
    /// descriptions and configuration hashes.
    pub fn numeric(name: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self(SvKind::Numeric { name: name.into(), f: Arc::new(f) })
    }

    /// Evaluates `L(u)` for `u > 1`.
    pub fn eval(&self, u: f64) -> Result<f64> {
        if !(u > 1.0) || u.is_nan() {
            return domain(format!("slowly varying function evaluated at u = {u} (needs u > 1)"));
        }
        let v = self.raw(u)?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Numeric(format!("{self} evaluated to {v} at u = {u}")));
        }
        Ok(v)
    }

    fn raw(&self, u: f64) -> Result<f64> {
        Ok(match &self.0 {
            SvKind::Constant(c) => *c,
            SvKind::LogPower { scale, power } => {
                if u > std::f64::consts::E {
                    scale * u.ln().powf(*power)
                } else {
                    *scale
                }
            }
            SvKind::Ratio(a, b) => a.eval(u)? / b.eval(u)?,
            SvKind::Scaled(c, a) => c * a.eval(u)?,
            SvKind::Numeric { f, .. } => f(u),
        })
    }

    /// `Some(c)` when the function is identically `c`.
    pub fn constant_value(&self) -> Option<f64> {
        match &self.0 {
            SvKind::Constant(c) => Some(*c),
            SvKind::LogPower { scale, power } if *power == 0.0 => Some(*scale),
            SvKind::LogPower { .. } | SvKind::Numeric { .. } => None,
            SvKind::Ratio(a, b) => Some(a.constant_value()? / b.constant_value()?),
            SvKind::Scaled(c, a) => Some(c * a.constant_value()?),
        }
    }
}

impl fmt::Display for SlowlyVarying {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.0 {
            SvKind::Constant(c) => write!(f, "constant({c})"),
            SvKind::LogPower { scale, power } => write!(f, "log_power({scale},{power})"),
            SvKind::Ratio(a, b) => write!(f, "ratio({a},{b})"),
            SvKind::Scaled(c, a) => write!(f, "scaled({c},{a})"),
            SvKind::Numeric { name, .. } => write!(f, "numeric({name})"),
        }
    }
}

/// Equality of descriptions; numeric functions compare by name.
impl PartialEq for SlowlyVarying {
    fn eq(&self, other: &Self) -> bool {
        self.to_string() == other.to_string()
    }
}

impl fmt::Debug for SlowlyVarying {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SlowlyVarying({self})")
    }
}

impl FromStr for SlowlyVarying {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (head, args) = split_call(s)?;
        match head {
            "constant" => {
                let [c] = parse_args::<1>(&args, s)?;
                SlowlyVarying::constant(parse_f64(c)?)
            }
            "log_power" => {
                let [a, b] = parse_args::<2>(&args, s)?;
                SlowlyVarying::log_power(parse_f64(a)?, parse_f64(b)?)
            }
            "ratio" => {
                let [a, b] = parse_args::<2>(&args, s)?;
                Ok(SlowlyVarying::ratio(a.parse()?, b.parse()?))
            }
            "scaled" => {
                let [c, a] = parse_args::<2>(&args, s)?;
                SlowlyVarying::scaled(parse_f64(c)?, a.parse()?)
            }
            _ => Err(Error::Config(format!("unknown slowly varying function `{s}`"))),
        }
    }
}

/// Splits `name(a, b(c, d))` into `("name", ["a", "b(c, d)"])`. A bare word has no arguments.
pub(crate) fn split_call(s: &str) -> Result<(&str, Vec<&str>)> {
    let s = s.trim();
    let Some(open) = s.find('(') else {
        return Ok((s, Vec::new()));
    };
    if !s.ends_with(')') {
        return Err(Error::Config(format!("unbalanced parentheses in `{s}`")));
    }
    let head = s[..open].trim();
    let inner = &s[open + 1..s.len() - 1];
    let mut args = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, ch) in inner.char_indices() {
        match ch {
            '(' => depth += 1,
            ')' => depth -= 1,
            ',' if depth == 0 => {
                args.push(inner[start..i].trim());
                start = i + 1;
            }
            _ => {}
        }
        if depth < 0 {
            return Err(Error::Config(format!("unbalanced parentheses in `{s}`")));
        }
    }
    if depth != 0 {
        return Err(Error::Config(format!("unbalanced parentheses in `{s}`")));
    }
    let last = inner[start..].trim();
    if !last.is_empty() || !args.is_empty() {
        args.push(last);
    }
    Ok((head, args))
}

pub(crate) fn parse_args<'a, const N: usize>(args: &[&'a str], whole: &str) -> Result<[&'a str; N]> {
    <[&str; N]>::try_from(args)
        .map_err(|_| Error::Config(format!("`{whole}` expects {N} argument(s), got {}", args.len())))
}

pub(crate) fn parse_f64(s: &str) -> Result<f64> {
    s.trim().parse::<f64>().map_err(|_| Error::Config(format!("`{s}` is not a number")))
}

// ---------------------------------------------------------------------------
// coefficients and innovations
// ---------------------------------------------------------------------------

/// Filter coefficients `c_0 = 1`, `c_k = k^{-β} L₀(k)` for `1 ≤ k ≤ M`.
#[derive(Debug, Clone)]
pub struct CoefficientModel {
    beta: f64,
    l0: SlowlyVarying,
    coeffs: Arc<[f64]>,
}

impl CoefficientModel {
    pub fn new(beta: f64, l0: SlowlyVarying, m: usize) -> Result<Self> {
        if !(beta > 0.5 && beta < 1.0) {
            return domain(format!("beta must lie in (1/2, 1), got {beta}"));
        }
        let mut coeffs = Vec::with_capacity(m + 1);
        coeffs.push(1.0);
        for k in 1..=m {
            coeffs.push(coefficient(beta, &l0, k)?);
        }
        Ok(Self { beta, l0, coeffs: coeffs.into() })
    }

    /// Builds the model with `M` from [`crate::simulate::truncation_length`].
    pub fn with_tolerance(beta: f64, l0: SlowlyVarying, tol: f64) -> Result<Self> {
        let m = crate::simulate::truncation_length(beta, &l0, tol)?;
        Self::new(beta, l0, m)
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn l0(&self) -> &SlowlyVarying {
        &self.l0
    }

    /// Truncation length `M`.
    pub fn m(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `Σ_{k=0}^{M} c_k²`.
    pub fn sum_squares(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum()
    }
}

/// `c_k` for `k ≥ 1`; `L₀` is evaluated at `max(k, 1⁺)` so that `c_1` uses its right limit at 1.
pub(crate) fn coefficient(beta: f64, l0: &SlowlyVarying, k: usize) -> Result<f64> {
    let u = if k == 1 { 1.0 + 1e-12 } else { k as f64 };
    Ok((k as f64).powf(-beta) * l0.eval(u)?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InnovationDist {
    Gaussian {
        sigma: f64,
    },
    /// Student-t with `nu` degrees of freedom rescaled to variance `sigma²`.
    StudentT {
        nu: f64,
        sigma: f64,
    },
}

impl InnovationDist {
    pub fn gaussian(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return domain(format!("innovation scale must be positive, got {sigma}"));
        }
        Ok(Self::Gaussian { sigma })
    }

    pub fn student_t(nu: f64, sigma: f64) -> Result<Self> {
        if !(nu > 4.0) {
            return domain(format!("student_t innovations need nu > 4 for a finite fourth moment, got {nu}"));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return domain(format!("innovation scale must be positive, got {sigma}"));
        }
        Ok(Self::StudentT { nu, sigma })
    }

    pub fn variance(&self) -> f64 {
        match *self {
            Self::Gaussian { sigma } | Self::StudentT { sigma, .. } => sigma * sigma,
        }
    }
}

impl fmt::Display for InnovationDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian { sigma } => write!(f, "gaussian({sigma})"),
            Self::StudentT { nu, sigma } => write!(f, "student_t({nu},{sigma})"),
        }
    }
}

impl FromStr for InnovationDist {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (head, args) = split_call(s)?;
        match head {
            "gaussian" => {
                let [a] = parse_args::<1>(&args, s)?;
                Self::gaussian(parse_f64(a)?)
            }
            "student_t" => {
                let [a, b] = parse_args::<2>(&args, s)?;
                Self::student_t(parse_f64(a)?, parse_f64(b)?)
            }
            _ => Err(Error::Config(format!("unknown innovation law `{s}`"))),
        }
    }
}

// ---------------------------------------------------------------------------
// extreme-value classification
// ---------------------------------------------------------------------------

/// Maximum domain of attraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Mda {
    /// Fréchet with tail index `α`.
    Frechet(f64),
    Gumbel,
}

/// The four combinations of domains of attraction for `(X, Y)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum MdaCase {
    /// X Fréchet, Y Fréchet.
    Case1,
    /// X Fréchet, Y Gumbel.
    Case2,
    /// X Gumbel, Y Fréchet.
    Case3,
    /// X Gumbel, Y Gumbel.
    Case4,
}

impl MdaCase {
    pub fn from_tags(x: Mda, y: Mda) -> Self {
        match (x, y) {
            (Mda::Frechet(_), Mda::Frechet(_)) => Self::Case1,
            (Mda::Frechet(_), Mda::Gumbel) => Self::Case2,
            (Mda::Gumbel, Mda::Frechet(_)) => Self::Case3,
            (Mda::Gumbel, Mda::Gumbel) => Self::Case4,
        }
    }

    pub fn number(self) -> u8 {
        match self {
            Self::Case1 => 1,
            Self::Case2 => 2,
            Self::Case3 => 3,
            Self::Case4 => 4,
        }
    }

    /// Label of the condition on `ξ` attached to the case.
    pub fn condition_label(self) -> &'static str {
        match self {
            Self::Case1 => "(*)",
            Self::Case2 => "(**)",
            Self::Case3 => "(***)",
            Self::Case4 => "(****)",
        }
    }
}

impl fmt::Display for MdaCase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Case {}", self.number())
    }
}

// ---------------------------------------------------------------------------
// marginal of X
// ---------------------------------------------------------------------------

/// Which of the four marginal functions to evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MarginalFn {
    Cdf,
    Pdf,
    Quantile,
    DensityQuantile,
}

/// Marginal distribution of the linear process.
#[derive(Debug, Clone)]
pub enum MarginalX {
    /// Centered normal with standard deviation `sd`.
    Gaussian { sd: f64 },
    /// Pareto law `1 - F(x) = x^{-α}` on `[1, ∞)`; an exact reference law for the
    /// deterministic identities (no innovation law produces it).
    Pareto { alpha: f64 },
    /// Sample-based marginal with a fitted upper tail.
    Empirical(Box<EmpiricalMarginal>),
}

impl MarginalX {
    pub fn gaussian(sd: f64) -> Result<Self> {
        if !(sd > 0.0 && sd.is_finite()) {
            return domain(format!("standard deviation must be positive, got {sd}"));
        }
        Ok(Self::Gaussian { sd })
    }

    pub fn pareto(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha.is_finite()) {
            return domain(format!("tail index must be positive, got {alpha}"));
        }
        Ok(Self::Pareto { alpha })
    }

    /// The Gaussian marginal implied by Gaussian innovations and a filter.
    pub fn from_filter(coeffs: &CoefficientModel, dist: &InnovationDist) -> Result<Self> {
        match dist {
            InnovationDist::Gaussian { .. } => Self::gaussian((dist.variance() * coeffs.sum_squares()).sqrt()),
            InnovationDist::StudentT { .. } => Err(Error::Unsupported(
                "the marginal of a Student-t moving average has no closed form; fit an empirical marginal".into(),
            )),
        }
    }

    /// Analytic variants carry exact `F`, its derivatives and `U_i = F(X_i)`.
    pub fn is_analytic(&self) -> bool {
        !matches!(self, Self::Empirical(_))
    }

    pub fn mda(&self) -> Mda {
        match self {
            Self::Gaussian { .. } => Mda::Gumbel,
            Self::Pareto { alpha } => Mda::Frechet(*alpha),
            Self::Empirical(e) => e.mda(),
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        match self {
            Self::Gaussian { sd } => norm_cdf(x / sd),
            Self::Pareto { alpha } => {
                if x <= 1.0 {
                    0.0
                } else {
                    1.0 - x.powf(-alpha)
                }
            }
            Self::Empirical(e) => e.cdf(x),
        }
    }

    /// `1 - F(x)` without cancellation.
    pub fn sf(&self, x: f64) -> f64 {
        match self {
            Self::Gaussian { sd } => norm_sf(x / sd),
            Self::Pareto { alpha } => {
                if x <= 1.0 {
                    1.0
                } else {
                    x.powf(-alpha)
                }
            }
            Self::Empirical(e) => e.sf(x),
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        match self {
            Self::Gaussian { sd } => norm_pdf(x / sd) / sd,
            Self::Pareto { alpha } => {
                if x < 1.0 {
                    0.0
                } else {
                    alpha * x.powf(-alpha - 1.0)
                }
            }
            Self::Empirical(e) => e.density_quantile(e.cdf(x)),
        }
    }

    /// `Q(y)` for `y ∈ (0, 1)`.
    pub fn quantile(&self, y: f64) -> Result<f64> {
        check_unit(y)?;
        Ok(match self {
            Self::Gaussian { sd } => sd * norm_quantile(y),
            Self::Pareto { alpha } => (1.0 - y).powf(-1.0 / alpha),
            Self::Empirical(e) => e.quantile(y),
        })
    }

    /// `Q(1 - u)`, accurate for small `u`.
    pub fn quantile_upper(&self, u: f64) -> f64 {
        match self {
            Self::Gaussian { sd } => sd * norm_isf(u),
            Self::Pareto { alpha } => u.powf(-1.0 / alpha),
            Self::Empirical(e) => e.quantile_upper(u),
        }
    }

    /// `fQ(y) = f(Q(y))` for `y ∈ (0, 1)`.
    pub fn density_quantile(&self, y: f64) -> Result<f64> {
        check_unit(y)?;
        Ok(match self {
            Self::Gaussian { sd } => norm_pdf(norm_quantile(y)) / sd,
            Self::Pareto { alpha } => alpha * (1.0 - y).powf(1.0 + 1.0 / alpha),
            Self::Empirical(e) => e.density_quantile(y),
        })
    }

    /// `fQ(1 - u)`, accurate for small `u`.
    pub fn density_quantile_upper(&self, u: f64) -> f64 {
        match self {
            Self::Gaussian { sd } => norm_pdf(norm_isf(u)) / sd,
            Self::Pareto { alpha } => alpha * u.powf(1.0 + 1.0 / alpha),
            Self::Empirical(e) => e.density_quantile_upper(u),
        }
    }

    /// Evaluates one of `F, f, Q, fQ`.
    pub fn eval(&self, which: MarginalFn, arg: f64) -> Result<f64> {
        if let Self::Empirical(e) = self {
            if !e.is_fitted() {
                return Err(Error::State("empirical marginal has not been fitted".into()));
            }
        }
        match which {
            MarginalFn::Cdf => Ok(self.cdf(arg)),
            MarginalFn::Pdf => Ok(self.pdf(arg)),
            MarginalFn::Quantile => self.quantile(arg),
            MarginalFn::DensityQuantile => self.density_quantile(arg),
        }
    }

    /// `F^{(r)}(x)` for `r ≥ 1`, available for the analytic variants.
    pub fn cdf_derivative(&self, r: usize, x: f64) -> Result<f64> {
        if r == 0 {
            return domain("derivative order must be at least 1");
        }
        match self {
            Self::Gaussian { sd } => {
                let z = x / sd;
                let sign = if (r - 1).is_multiple_of(2) { 1.0 } else { -1.0 };
                Ok(sign * hermite_he(r - 1, z) * norm_pdf(z) / sd.powi(r as i32))
            }
            Self::Pareto { alpha } => {
                if x <= 1.0 {
                    return Ok(0.0);
                }
                // α (-1)^{r-1} (α+1)…(α+r-1) x^{-α-r}
                let mut c = *alpha;
                for j in 1..r {
                    c *= -(alpha + j as f64);
                }
                Ok(c * x.powf(-alpha - r as f64))
            }
            Self::Empirical(_) => {
                Err(Error::Unsupported("derivatives of F are not available for an empirical marginal".into()))
            }
        }
    }

    /// `L₁(u) = Q(1 - 1/u) u^{-1/α}` (Fréchet marginals).
    pub fn l1(&self, u: f64) -> Result<f64> {
        let alpha = self.frechet_index("L1")?;
        check_sv_arg(u)?;
        Ok(self.quantile_upper(1.0 / u) * u.powf(-1.0 / alpha))
    }

    /// `L₂(u) = fQ(1 - 1/u) u^{1 + 1/α}` (Fréchet marginals).
    pub fn l2(&self, u: f64) -> Result<f64> {
        let alpha = self.frechet_index("L2")?;
        check_sv_arg(u)?;
        if let Self::Pareto { alpha } = self {
            return Ok(*alpha);
        }
        Ok(self.density_quantile_upper(1.0 / u) * u.powf(1.0 + 1.0 / alpha))
    }

    /// `L₃(u) = y / ∫_{1-y}^1 (1 - v)/fQ(v) dv` with `y = 1/u` (Gumbel marginals).
    pub fn l3(&self, u: f64) -> Result<f64> {
        if !matches!(self.mda(), Mda::Gumbel) {
            return Err(Error::Config("L3 is defined for Gumbel-domain marginals only".into()));
        }
        check_sv_arg(u)?;
        // the empirical body density has a kink at every knot
        let tol = if self.is_analytic() { 1e-10 } else { 1e-6 };
        l3_integral(|t| self.density_quantile_upper(t), u, tol)
    }

    /// `u · fQ(1 - 1/u)`, asymptotically equivalent to [`Self::l3`].
    pub fn l3_density(&self, u: f64) -> Result<f64> {
        check_sv_arg(u)?;
        Ok(u * self.density_quantile_upper(1.0 / u))
    }

    fn frechet_index(&self, what: &str) -> Result<f64> {
        match self.mda() {
            Mda::Frechet(a) => Ok(a),
            Mda::Gumbel => Err(Error::Config(format!("{what} is defined for Fréchet-domain marginals only"))),
        }
    }
}

impl fmt::Display for MarginalX {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Gaussian { sd } => write!(f, "gaussian({sd})"),
            Self::Pareto { alpha } => write!(f, "pareto({alpha})"),
            Self::Empirical(e) => write!(f, "{e}"),
        }
    }
}

fn check_unit(y: f64) -> Result<()> {
    if !(y > 0.0 && y < 1.0) {
        return domain(format!("probability argument must lie in (0, 1), got {y}"));
    }
    Ok(())
}

fn check_sv_arg(u: f64) -> Result<()> {
    if !(u > 1.0) || u.is_nan() {
        return domain(format!("slowly varying part evaluated at u = {u} (needs u > 1)"));
    }
    Ok(())
}

/// `y / ∫_0^y t / dq_upper(t) dt` with `y = 1/u`.
fn l3_integral(dq_upper: impl Fn(f64) -> f64, u: f64, rel_tol: f64) -> Result<f64> {
    let y = 1.0 / u;
    let integral = quad::tail_integral(|t| t / dq_upper(t), 0.0, y, rel_tol)?;
    if !(integral > 0.0) {
        return Err(Error::Numeric(format!("L3 integral is not positive at u = {u}")));
    }
    Ok(y / integral)
}

// ---------------------------------------------------------------------------
// empirical marginal
// ---------------------------------------------------------------------------

/// Tail model spliced above the fitted threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TailModel {
    /// Pareto tail with Hill-estimated index and constant `L₁`.
    Frechet,
    /// Exponential tail with mean-excess scale.
    Gumbel,
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum UpperTail {
    Frechet { alpha: f64 },
    Gumbel { theta: f64 },
}

/// Sample-based marginal: piecewise-linear CDF in the body, exponential lower
/// tail and a Pareto or exponential upper tail above the `1 - τ` quantile.
#[derive(Debug, Clone)]
pub struct EmpiricalMarginal {
    knots_x: Vec<f64>,
    knots_p: Vec<f64>,
    lower_theta: f64,
    tau: f64,
    upper: UpperTail,
    bandwidth: f64,
    /// Body density-quantile tabulated at `y = j · dq_step`, interpolated linearly.
    dq_grid: Vec<f64>,
    dq_step: f64,
}

/// Minimum sample size accepted by [`fit_empirical_marginal`].
pub const MIN_EMPIRICAL_SAMPLE: usize = 10_000;
/// Minimum number of tail points accepted by [`fit_empirical_marginal`].
pub const MIN_TAIL_POINTS: usize = 100;

/// Fits an [`EmpiricalMarginal`] to `sample`, using the top `tail_fraction` for the tail model.
pub fn fit_empirical_marginal(sample: &[f64], tail_fraction: f64, tail: TailModel) -> Result<MarginalX> {
    let n = sample.len();
    if n < MIN_EMPIRICAL_SAMPLE {
        return Err(Error::Size(format!("empirical marginal needs at least {MIN_EMPIRICAL_SAMPLE} points, got {n}")));
    }
    if !(tail_fraction > 0.0 && tail_fraction < 1.0) {
        return domain(format!("tail fraction must lie in (0, 1), got {tail_fraction}"));
    }
    let k = (tail_fraction * n as f64).floor() as usize;
    if k < MIN_TAIL_POINTS {
        return Err(Error::Size(format!(
            "tail fraction {tail_fraction} leaves {k} tail points, need at least {MIN_TAIL_POINTS}"
        )));
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(Error::Fit("sample contains non-finite values".into()));
    }
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    if s[0] == s[n - 1] {
        return Err(Error::Fit("sample is constant; no tail to fit".into()));
    }
    let tau = k as f64 / n as f64;
    let x_t = s[n - k - 1];
    let top = &s[n - k..];
    let upper = match tail {
        TailModel::Frechet => {
            if x_t <= 0.0 {
                return Err(Error::Fit(format!("Fréchet tail fit needs a positive threshold, got {x_t}")));
            }
            let log_excess: f64 = top.iter().map(|x| (x / x_t).ln()).sum();
            if !(log_excess > 0.0) {
                return Err(Error::Fit("Hill estimator is degenerate (no spread above threshold)".into()));
            }
            UpperTail::Frechet { alpha: k as f64 / log_excess }
        }
        TailModel::Gumbel => {
            let theta = top.iter().map(|x| x - x_t).sum::<f64>() / k as f64;
            if !(theta > 0.0) {
                return Err(Error::Fit("mean excess is zero; no tail to fit".into()));
            }
            UpperTail::Gumbel { theta }
        }
    };
    // body knots (x_(j), j/n) up to the threshold, ties merged
    let mut knots_x: Vec<f64> = Vec::with_capacity(n - k);
    let mut knots_p: Vec<f64> = Vec::with_capacity(n - k);
    for (j, &x) in s[..n - k].iter().enumerate() {
        let p = (j + 1) as f64 / n as f64;
        if knots_x.last() == Some(&x) {
            *knots_p.last_mut().expect("non-empty") = p;
        } else {
            knots_x.push(x);
            knots_p.push(p);
        }
    }
    if knots_x.len() < 2 {
        return Err(Error::Fit("body of the sample is degenerate".into()));
    }
    let m_low = (n / 100).max(10);
    let lower_theta = s[..m_low].iter().map(|x| x - s[0]).sum::<f64>() / m_low as f64;
    if !(lower_theta > 0.0) {
        return Err(Error::Fit("lower tail is degenerate".into()));
    }
    let bandwidth = 0.01f64.max(50.0 / n as f64);
    let mut fit = EmpiricalMarginal {
        knots_x,
        knots_p,
        lower_theta,
        tau,
        upper,
        bandwidth,
        dq_grid: Vec::new(),
        dq_step: 0.25 * bandwidth,
    };
    let cells = ((1.0 - tau) / fit.dq_step).ceil() as usize;
    fit.dq_grid = (0..=cells)
        .map(|j| {
            let y = (j as f64 * fit.dq_step).min(1.0 - tau);
            if j == 0 {
                0.0
            } else {
                fit.body_density_quotient(y)
            }
        })
        .collect();
    Ok(MarginalX::Empirical(Box::new(fit)))
}

impl EmpiricalMarginal {
    fn is_fitted(&self) -> bool {
        self.knots_x.len() >= 2
    }

    pub fn mda(&self) -> Mda {
        match self.upper {
            UpperTail::Frechet { alpha } => Mda::Frechet(alpha),
            UpperTail::Gumbel { .. } => Mda::Gumbel,
        }
    }

    /// Hill estimate of the tail index (Fréchet fits).
    pub fn tail_index(&self) -> Option<f64> {
        match self.upper {
            UpperTail::Frechet { alpha } => Some(alpha),
            UpperTail::Gumbel { .. } => None,
        }
    }

    /// Threshold `x_t`, the `1 - τ` quantile of the sample.
    pub fn threshold(&self) -> f64 {
        *self.knots_x.last().expect("fitted")
    }

    pub fn tail_fraction(&self) -> f64 {
        self.tau
    }

    fn p_low(&self) -> f64 {
        self.knots_p[0]
    }

    fn cdf(&self, x: f64) -> f64 {
        let x0 = self.knots_x[0];
        let xt = self.threshold();
        if x < x0 {
            return self.p_low() * ((x - x0) / self.lower_theta).exp();
        }
        if x >= xt {
            return 1.0 - self.upper_sf(x);
        }
        let j = self.knots_x.partition_point(|&k| k <= x);
        let (xa, xb) = (self.knots_x[j - 1], self.knots_x[j]);
        let (pa, pb) = (self.knots_p[j - 1], self.knots_p[j]);
        pa + (pb - pa) * (x - xa) / (xb - xa)
    }

    fn sf(&self, x: f64) -> f64 {
        if x >= self.threshold() {
            self.upper_sf(x)
        } else {
            1.0 - self.cdf(x)
        }
    }

    fn upper_sf(&self, x: f64) -> f64 {
        let xt = self.threshold();
        match self.upper {
            UpperTail::Frechet { alpha } => self.tau * (x / xt).powf(-alpha),
            UpperTail::Gumbel { theta } => self.tau * (-(x - xt) / theta).exp(),
        }
    }

    fn quantile(&self, y: f64) -> f64 {
        if y >= 1.0 - self.tau {
            return self.quantile_upper(1.0 - y);
        }
        self.body_quantile(y)
    }

    fn body_quantile(&self, y: f64) -> f64 {
        let p0 = self.p_low();
        if y < p0 {
            return self.knots_x[0] + self.lower_theta * (y / p0).ln();
        }
        let j = self.knots_p.partition_point(|&p| p < y).max(1);
        let (xa, xb) = (self.knots_x[j - 1], self.knots_x[j]);
        let (pa, pb) = (self.knots_p[j - 1], self.knots_p[j]);
        xa + (xb - xa) * (y - pa) / (pb - pa)
    }

    fn quantile_upper(&self, u: f64) -> f64 {
        if u > self.tau {
            return self.body_quantile(1.0 - u);
        }
        let xt = self.threshold();
        match self.upper {
            UpperTail::Frechet { alpha } => xt * (u / self.tau).powf(-1.0 / alpha),
            UpperTail::Gumbel { theta } => xt + theta * (self.tau / u).ln(),
        }
    }

    fn density_quantile(&self, y: f64) -> f64 {
        if y >= 1.0 - self.tau {
            return self.density_quantile_upper(1.0 - y);
        }
        let t = y / self.dq_step;
        let j = t as usize;
        if j == 0 || j + 2 >= self.dq_grid.len() {
            return self.body_density_quotient(y);
        }
        let w = t - j as f64;
        (1.0 - w) * self.dq_grid[j] + w * self.dq_grid[j + 1]
    }

    // symmetric difference quotient of Q with bandwidth h
    fn body_density_quotient(&self, y: f64) -> f64 {
        let h = self.bandwidth;
        let lo = (y - h).max(0.5 * y);
        let hi = (y + h).min(0.5 * (1.0 + y));
        (hi - lo) / (self.quantile(hi) - self.quantile(lo))
    }

    fn density_quantile_upper(&self, u: f64) -> f64 {
        if u > self.tau {
            return self.density_quantile(1.0 - u);
        }
        let xt = self.threshold();
        match self.upper {
            UpperTail::Frechet { alpha } => alpha * u / (xt * (u / self.tau).powf(-1.0 / alpha)),
            UpperTail::Gumbel { theta } => u / theta,
        }
    }
}

impl fmt::Display for EmpiricalMarginal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let tail = match self.upper {
            UpperTail::Frechet { alpha } => format!("frechet:{alpha}"),
            UpperTail::Gumbel { theta } => format!("gumbel:{theta}"),
        };
        write!(f, "empirical(n_knots={},tau={},{tail})", self.knots_x.len(), self.tau)
    }
}

// ---------------------------------------------------------------------------
// target marginal of Y
// ---------------------------------------------------------------------------

type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A user-supplied target law given through its quantile and density-quantile functions.
#[derive(Clone)]
pub struct CustomTarget {
    pub name: String,
    /// `Q_Y(y)`
    pub quantile: ScalarFn,
    /// `Q_Y(1 - u)`
    pub quantile_upper: ScalarFn,
    /// `f_Y Q_Y(y)`
    pub density_quantile: ScalarFn,
    /// `f_Y Q_Y(1 - u)`
    pub density_quantile_upper: ScalarFn,
    pub mda: Mda,
}

impl fmt::Debug for CustomTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CustomTarget").field("name", &self.name).field("mda", &self.mda).finish()
    }
}

/// Marginal law of the subordinated sequence `Y = G(X)`.
#[derive(Debug, Clone)]
pub enum TargetMarginalY {
    /// `Q_Y(1 - y) = y^{-1/α₀}`.
    Pareto {
        alpha0: f64,
    },
    /// `Q_Y(1 - y) = -ln y`.
    Exponential,
    /// `Q_Y(u) = α ln Q(u)` above `u0` for a Fréchet-domain `X` with index `α`,
    /// continued linearly below `u0`.
    LogPareto {
        x: Box<MarginalX>,
        u0: f64,
    },
    Custom(CustomTarget),
}

impl TargetMarginalY {
    pub fn pareto(alpha0: f64) -> Result<Self> {
        if !(alpha0 > 1.0 && alpha0.is_finite()) {
            return domain(format!("Pareto target needs alpha0 > 1 for a finite mean, got {alpha0}"));
        }
        Ok(Self::Pareto { alpha0 })
    }

    /// The law of `log(X⁺)^α` for a Fréchet-domain `X`.
    pub fn log_pareto(x: MarginalX, u0: f64) -> Result<Self> {
        if !matches!(x.mda(), Mda::Frechet(_)) {
            return Err(Error::Config("log-Pareto target needs a Fréchet-domain X marginal".into()));
        }
        check_unit(u0)?;
        if !(x.quantile(u0)? > 0.0) {
            return domain(format!("log-Pareto splice point u0 = {u0} must satisfy Q(u0) > 0"));
        }
        Ok(Self::LogPareto { x: Box::new(x), u0 })
    }

    /// Target equal to the law of `X` itself, so that `G` is the identity.
    pub fn same_as(x: &MarginalX) -> Self {
        let (a, b, c, d) = (x.clone(), x.clone(), x.clone(), x.clone());
        Self::Custom(CustomTarget {
            name: format!("same_as({x})"),
            quantile: Arc::new(move |y| a.quantile(y).unwrap_or(f64::NAN)),
            quantile_upper: Arc::new(move |u| b.quantile_upper(u)),
            density_quantile: Arc::new(move |y| c.density_quantile(y).unwrap_or(f64::NAN)),
            density_quantile_upper: Arc::new(move |u| d.density_quantile_upper(u)),
            mda: x.mda(),
        })
    }

    pub fn mda(&self) -> Mda {
        match self {
            Self::Pareto { alpha0 } => Mda::Frechet(*alpha0),
            Self::Exponential | Self::LogPareto { .. } => Mda::Gumbel,
            Self::Custom(c) => c.mda,
        }
    }

    fn log_pareto_parts(x: &MarginalX, u0: f64) -> (f64, f64, f64) {
        let alpha = match x.mda() {
            Mda::Frechet(a) => a,
            Mda::Gumbel => unreachable!("checked at construction"),
        };
        let q0 = x.quantile(u0).expect("u0 in (0,1)");
        let slope = alpha / (q0 * x.density_quantile(u0).expect("u0 in (0,1)"));
        (alpha, alpha * q0.ln(), slope)
    }

    /// `Q_Y(y)` for `y ∈ (0, 1)`.
    pub fn quantile(&self, y: f64) -> f64 {
        match self {
            Self::Pareto { alpha0 } => (1.0 - y).powf(-1.0 / alpha0),
            Self::Exponential => -(-y).ln_1p(),
            Self::LogPareto { x, u0 } => {
                let (alpha, q0, slope) = Self::log_pareto_parts(x, *u0);
                if y > *u0 {
                    alpha * x.quantile(y).expect("y in (0,1)").ln()
                } else {
                    q0 - slope * (u0 - y)
                }
            }
            Self::Custom(c) => (c.quantile)(y),
        }
    }

    /// `Q_Y(1 - u)`, accurate for small `u`.
    pub fn quantile_upper(&self, u: f64) -> f64 {
        match self {
            Self::Pareto { alpha0 } => u.powf(-1.0 / alpha0),
            Self::Exponential => -u.ln(),
            Self::LogPareto { x, u0 } => {
                if 1.0 - u > *u0 {
                    let (alpha, _, _) = Self::log_pareto_parts(x, *u0);
                    alpha * x.quantile_upper(u).ln()
                } else {
                    self.quantile(1.0 - u)
                }
            }
            Self::Custom(c) => (c.quantile_upper)(u),
        }
    }

    /// `f_Y Q_Y(y)`.
    pub fn density_quantile(&self, y: f64) -> f64 {
        match self {
            Self::Pareto { alpha0 } => alpha0 * (1.0 - y).powf(1.0 + 1.0 / alpha0),
            Self::Exponential => 1.0 - y,
            Self::LogPareto { x, u0 } => {
                let (alpha, _, slope) = Self::log_pareto_parts(x, *u0);
                if y > *u0 {
                    x.quantile(y).expect("y in (0,1)") * x.density_quantile(y).expect("y in (0,1)") / alpha
                } else {
                    1.0 / slope
                }
            }
            Self::Custom(c) => (c.density_quantile)(y),
        }
    }

    /// `f_Y Q_Y(1 - u)`, accurate for small `u`.
    pub fn density_quantile_upper(&self, u: f64) -> f64 {
        match self {
            Self::Pareto { alpha0 } => alpha0 * u.powf(1.0 + 1.0 / alpha0),
            Self::Exponential => u,
            Self::LogPareto { x, u0 } => {
                if 1.0 - u > *u0 {
                    let (alpha, _, _) = Self::log_pareto_parts(x, *u0);
                    x.quantile_upper(u) * x.density_quantile_upper(u) / alpha
                } else {
                    self.density_quantile(1.0 - u)
                }
            }
            Self::Custom(c) => (c.density_quantile_upper)(u),
        }
    }

    /// `∫_0^u Q_Y(1 - t) dt`, so that `n · tail_mean(k/n)` is the centering of the top-`k` sum.
    pub fn tail_mean(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u <= 1.0) {
            return domain(format!("tail mean needs u in (0, 1], got {u}"));
        }
        match self {
            Self::Pareto { alpha0 } => {
                if *alpha0 <= 1.0 {
                    return Err(Error::Numeric(format!("E Y is infinite for alpha0 = {alpha0}")));
                }
                let e = 1.0 - 1.0 / alpha0;
                Ok(u.powf(e) / e)
            }
            Self::Exponential => Ok(if u == 1.0 { 1.0 } else { u * (1.0 - u.ln()) }),
            _ => quad::tail_integral(|t| self.quantile_upper(t), 0.0, u, 1e-10),
        }
    }

    /// `L₁*(u) = Q_Y(1 - 1/u) u^{-1/α₀}`.
    pub fn l1_star(&self, u: f64) -> Result<f64> {
        let a0 = self.frechet_index("L1*")?;
        check_sv_arg(u)?;
        if matches!(self, Self::Pareto { .. }) {
            return Ok(1.0);
        }
        Ok(self.quantile_upper(1.0 / u) * u.powf(-1.0 / a0))
    }

    /// `L₂*(u) = f_Y Q_Y(1 - 1/u) u^{1 + 1/α₀}`.
    pub fn l2_star(&self, u: f64) -> Result<f64> {
        let a0 = self.frechet_index("L2*")?;
        check_sv_arg(u)?;
        if let Self::Pareto { alpha0 } = self {
            return Ok(*alpha0);
        }
        Ok(self.density_quantile_upper(1.0 / u) * u.powf(1.0 + 1.0 / a0))
    }

    /// `L₃*(u)`, defined from `f_Y Q_Y` as [`MarginalX::l3`] is from `fQ`.
    pub fn l3_star(&self, u: f64) -> Result<f64> {
        if !matches!(self.mda(), Mda::Gumbel) {
            return Err(Error::Config("L3* is defined for Gumbel-domain targets only".into()));
        }
        check_sv_arg(u)?;
        if matches!(self, Self::Exponential) {
            return Ok(1.0);
        }
        // custom targets may wrap an empirical quantile
        let tol = if matches!(self, Self::Custom(_)) { 1e-6 } else { 1e-10 };
        l3_integral(|t| self.density_quantile_upper(t), u, tol)
    }

    fn frechet_index(&self, what: &str) -> Result<f64> {
        match self.mda() {
            Mda::Frechet(a) => Ok(a),
            Mda::Gumbel => Err(Error::Config(format!("{what} is defined for Fréchet-domain targets only"))),
        }
    }
}

impl fmt::Display for TargetMarginalY {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Pareto { alpha0 } => write!(f, "pareto({alpha0})"),
            Self::Exponential => write!(f, "exponential"),
            Self::LogPareto { x, u0 } => write!(f, "log_pareto({x},{u0})"),
            Self::Custom(c) => write!(f, "custom({})", c.name),
        }
    }
}

// ---------------------------------------------------------------------------
// subordination
// ---------------------------------------------------------------------------

/// Value of `G(x) = Q_Y(F(x))` together with a flag telling whether the
/// probability had to be clamped away from 0 or 1.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Subordinated {
    pub value: f64,
    pub clamped: bool,
}

/// Tail probability `1 - F(x)` clamped to `[CLAMP_EPS, 1 - CLAMP_EPS]`.
pub fn clamped_sf(mx: &MarginalX, x: f64) -> (f64, bool) {
    let v = mx.sf(x);
    if v < CLAMP_EPS {
        (CLAMP_EPS, true)
    } else if v > 1.0 - CLAMP_EPS {
        (1.0 - CLAMP_EPS, true)
    } else {
        (v, false)
    }
}

/// `G(x) = Q_Y(F(x))`.
///
/// The upper half goes through `1 - F` and `Q_Y(1 - ·)` so that extreme
/// values keep their relative precision.
pub fn subordinate(mx: &MarginalX, ty: &TargetMarginalY, x: f64) -> Subordinated {
    let v = mx.sf(x);
    if v < 0.5 {
        let (vc, clamped) = if v < CLAMP_EPS { (CLAMP_EPS, true) } else { (v, false) };
        Subordinated { value: ty.quantile_upper(vc), clamped }
    } else {
        let y = mx.cdf(x);
        let (yc, clamped) = if y < CLAMP_EPS { (CLAMP_EPS, true) } else { (y, false) };
        Subordinated { value: ty.quantile(yc), clamped }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn sv_examples() {
        assert_eq!(SlowlyVarying::constant(1.0).unwrap().eval(100.0).unwrap(), 1.0);
        let lp = SlowlyVarying::log_power(1.0, 0.5).unwrap();
        assert_relative_eq!(lp.eval(std::f64::consts::E).unwrap(), 1.0, epsilon = 1e-15);
        let r = SlowlyVarying::ratio(SlowlyVarying::constant(4.0).unwrap(), SlowlyVarying::constant(1.0).unwrap());
        assert_eq!(r.eval(10.0).unwrap(), 4.0);
        assert!(matches!(lp.eval(1.0), Err(Error::Domain(_))));
        assert!(matches!(lp.eval(0.5), Err(Error::Domain(_))));
    }

    #[test]
    fn sv_slow_variation() {
        let fns = [
            SlowlyVarying::constant(2.0).unwrap(),
            SlowlyVarying::log_power(1.5, 0.7).unwrap(),
            SlowlyVarying::log_power(1.0, -1.0).unwrap(),
            SlowlyVarying::scaled(3.0, SlowlyVarying::log_power(1.0, 2.0).unwrap()).unwrap(),
        ];
        for l in &fns {
            let r6 = l.eval(2e6).unwrap() / l.eval(1e6).unwrap();
            let r12 = l.eval(2e12).unwrap() / l.eval(1e12).unwrap();
            assert!((r6 - 1.0).abs() < 0.15, "{l}: {r6}");
            assert!((r12 - 1.0).abs() <= (r6 - 1.0).abs(), "{l}: {r12}");
        }
    }

    #[test]
    fn sv_parse_round_trip() {
        for s in ["constant(1)", "log_power(2,0.5)", "ratio(constant(4),log_power(1,1))", "scaled(0.5,constant(3))"] {
            let l: SlowlyVarying = s.parse().unwrap();
            assert_eq!(l.to_string(), s);
        }
        assert!("gamma(1)".parse::<SlowlyVarying>().is_err());
        assert!("constant(-1)".parse::<SlowlyVarying>().is_err());
    }

    #[test]
    fn coefficients_convention() {
        let l0 = SlowlyVarying::constant(1.0).unwrap();
        let c = CoefficientModel::new(0.75, l0, 10).unwrap();
        assert_eq!(c.coeffs()[0], 1.0);
        assert_relative_eq!(c.coeffs()[1], 1.0, epsilon = 1e-15);
        assert_relative_eq!(c.coeffs()[4], 4f64.powf(-0.75), epsilon = 1e-15);
        assert!(c.coeffs().windows(2).skip(1).all(|w| w[1] <= w[0]));
        assert!(CoefficientModel::new(0.5, SlowlyVarying::constant(1.0).unwrap(), 10).is_err());
    }

    #[test]
    fn innovation_constraints() {
        assert!(InnovationDist::student_t(4.0, 1.0).is_err());
        assert!(InnovationDist::student_t(5.0, 1.0).is_ok());
        assert_eq!("student_t(5,2)".parse::<InnovationDist>().unwrap().variance(), 4.0);
    }

    #[test]
    fn gaussian_marginal_examples() {
        let g = MarginalX::gaussian(1.0).unwrap();
        assert_eq!(g.eval(MarginalFn::Quantile, 0.5).unwrap(), 0.0);
        assert_relative_eq!(
            g.eval(MarginalFn::DensityQuantile, 0.5).unwrap(),
            0.398_942_280_401_432_7,
            epsilon = 1e-15
        );
        assert!(matches!(g.eval(MarginalFn::Quantile, 1.0), Err(Error::Domain(_))));
        assert!(matches!(g.eval(MarginalFn::DensityQuantile, 0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn cdf_quantile_inverse_on_grid() {
        let marginals = [MarginalX::gaussian(1.7).unwrap(), MarginalX::pareto(4.0).unwrap()];
        for m in &marginals {
            for i in 1..100 {
                let y = i as f64 / 100.0;
                let q = m.quantile(y).unwrap();
                assert!((m.cdf(q) - y).abs() < 1e-8, "{m} y={y}");
            }
        }
    }

    #[test]
    fn gaussian_derivatives_match_finite_differences() {
        let g = MarginalX::gaussian(1.3).unwrap();
        for &x in &[-1.2, 0.0, 0.4, 2.5] {
            let h = 1e-5;
            let d1 = (g.cdf(x + h) - g.cdf(x - h)) / (2.0 * h);
            assert_relative_eq!(g.cdf_derivative(1, x).unwrap(), d1, max_relative = 1e-8);
            let d2 = (g.cdf_derivative(1, x + h).unwrap() - g.cdf_derivative(1, x - h).unwrap()) / (2.0 * h);
            assert!((g.cdf_derivative(2, x).unwrap() - d2).abs() < 1e-8);
        }
        let p = MarginalX::pareto(4.0).unwrap();
        let x = 1.7;
        let h = 1e-6;
        let d2 = (p.pdf(x + h) - p.pdf(x - h)) / (2.0 * h);
        assert_relative_eq!(p.cdf_derivative(2, x).unwrap(), d2, max_relative = 1e-7);
    }

    #[test]
    fn target_identities() {
        let p = TargetMarginalY::pareto(3.0).unwrap();
        let e = TargetMarginalY::Exponential;
        for &y in &[1e-9, 1e-4, 0.01, 0.3, 0.9] {
            assert_relative_eq!(p.density_quantile_upper(y), 3.0 * y.powf(1.0 + 1.0 / 3.0), max_relative = 1e-15);
            assert_eq!(e.density_quantile_upper(y), y);
        }
        for &u in &[10.0, 1e3, 1e8] {
            assert_relative_eq!(p.l2_star(u).unwrap(), 3.0 / p.l1_star(u).unwrap(), max_relative = 1e-14);
            assert_eq!(e.l3_star(u).unwrap(), 1.0);
        }
        assert!(TargetMarginalY::pareto(1.0).is_err());
    }

    #[test]
    fn subordinate_examples() {
        let g = MarginalX::gaussian(1.0).unwrap();
        let s = subordinate(&g, &TargetMarginalY::Exponential, 0.0);
        assert_relative_eq!(s.value, std::f64::consts::LN_2, epsilon = 1e-15);
        assert!(!s.clamped);
        let s = subordinate(&g, &TargetMarginalY::pareto(2.0).unwrap(), 0.0);
        assert_relative_eq!(s.value, std::f64::consts::SQRT_2, epsilon = 1e-14);
        let id = TargetMarginalY::same_as(&g);
        assert_relative_eq!(subordinate(&g, &id, 1.3).value, 1.3, epsilon = 1e-12);
        assert!(subordinate(&g, &TargetMarginalY::Exponential, 40.0).clamped);
    }

    #[test]
    fn case_from_tags() {
        let g = MarginalX::gaussian(1.0).unwrap();
        let p = MarginalX::pareto(4.0).unwrap();
        let e = TargetMarginalY::Exponential;
        let py = TargetMarginalY::pareto(6.0).unwrap();
        assert_eq!(MdaCase::from_tags(p.mda(), py.mda()), MdaCase::Case1);
        assert_eq!(MdaCase::from_tags(p.mda(), e.mda()), MdaCase::Case2);
        assert_eq!(MdaCase::from_tags(g.mda(), py.mda()), MdaCase::Case3);
        assert_eq!(MdaCase::from_tags(g.mda(), e.mda()), MdaCase::Case4);
        assert_eq!(MdaCase::from_tags(g.mda(), e.mda()), MdaCase::from_tags(g.mda(), e.mda()));
    }

    #[test]
    fn gumbel_l3_is_asymptotic_to_density_form() {
        let g = MarginalX::gaussian(1.0).unwrap();
        for &u in &[1e6, 1e12] {
            let ratio = g.l3_density(u).unwrap() / g.l3(u).unwrap();
            assert!((ratio - 1.0).abs() < 0.1, "u={u} ratio={ratio}");
        }
        let r6 = g.l3_density(1e6).unwrap() / g.l3(1e6).unwrap();
        let r12 = g.l3_density(1e12).unwrap() / g.l3(1e12).unwrap();
        assert!((r12 - 1.0).abs() < (r6 - 1.0).abs());
    }

    #[test]
    fn log_pareto_of_pareto_is_exponential() {
        let x = MarginalX::pareto(4.0).unwrap();
        let t = TargetMarginalY::log_pareto(x, 0.1).unwrap();
        for &u in &[1e-8, 1e-3, 0.5] {
            assert_relative_eq!(t.quantile_upper(u), -u.ln(), max_relative = 1e-12);
            assert_relative_eq!(t.density_quantile_upper(u), u, max_relative = 1e-12);
        }
        assert_relative_eq!(t.tail_mean(0.01).unwrap(), 0.01 * (1.0 - 0.01f64.ln()), max_relative = 1e-8);
    }
}
