//! Path generation for the truncated linear process and its subordinated version.
//!
//! A path of length `n` uses `n + M` innovations `ε_{1-M}, …, ε_n`, so that
//! `X_1` already sees the full filter and the path is exactly stationary under
//! the truncated model. The convolution is done by FFT at the smallest power
//! of two `N ≥ n + M`; at that length no output index wraps around.

use std::fmt;
use std::io::Write;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{domain, Error, Result};
use crate::model::{
    coefficient, subordinate, CoefficientModel, InnovationDist, MarginalX, MdaCase, SlowlyVarying, TargetMarginalY,
};
use crate::quad;
use crate::rng::path_rng;
use crate::special::zeta;

/// Upper limit on the truncation length.
pub const MAX_TRUNCATION: usize = 1 << 22;
/// Default neglected-variance fraction.
pub const DEFAULT_TRUNCATION_TOL: f64 = 1e-3;

/// Smallest `M` with `Σ_{k>M} c_k² ≤ tol · Σ_{k≥0} c_k²`, capped at [`MAX_TRUNCATION`].
///
/// For constant `L₀ ≡ c` the tail is bounded by `c² M^{1-2β}/(2β-1)` and the
/// total is `1 + c² ζ(2β)`. Otherwise both are evaluated numerically.
pub fn truncation_length(beta: f64, l0: &SlowlyVarying, tol: f64) -> Result<usize> {
    if !(beta > 0.5 && beta < 1.0) {
        return domain(format!("beta must lie in (1/2, 1), got {beta}"));
    }
    if !(tol > 0.0 && tol < 1.0) {
        return domain(format!("truncation tolerance must lie in (0, 1), got {tol}"));
    }
    let e = 2.0 * beta - 1.0;
    let m = if let Some(c) = l0.constant_value() {
        let total = 1.0 + c * c * zeta(2.0 * beta);
        let m = (c * c / (e * tol * total)).powf(1.0 / e).ceil();
        if m >= MAX_TRUNCATION as f64 {
            MAX_TRUNCATION + 1
        } else {
            (m as usize).max(1)
        }
    } else {
        numeric_truncation(beta, l0, tol)?
    };
    if m > MAX_TRUNCATION {
        log::warn!("truncation length capped at {MAX_TRUNCATION} (beta = {beta}, tol = {tol})");
        return Ok(MAX_TRUNCATION);
    }
    Ok(m)
}

// ∫_M^∞ u^{-2β} L₀(u)² du, computed in w = 1/u
fn squared_tail(beta: f64, l0: &SlowlyVarying, m: f64) -> Result<f64> {
    quad::tail_integral(
        |w| w.powf(2.0 * beta - 2.0) * l0.eval(1.0 / w).map(|l| l * l).unwrap_or(f64::NAN),
        0.0,
        1.0 / m,
        1e-8,
    )
}

fn numeric_truncation(beta: f64, l0: &SlowlyVarying, tol: f64) -> Result<usize> {
    const HEAD: usize = 1000;
    let mut total = 1.0;
    for k in 1..=HEAD {
        total += coefficient(beta, l0, k)?.powi(2);
    }
    total += squared_tail(beta, l0, HEAD as f64 + 0.5)?;
    let target = tol * total;
    if squared_tail(beta, l0, MAX_TRUNCATION as f64)? > target {
        return Ok(MAX_TRUNCATION + 1);
    }
    let (mut lo, mut hi) = (1usize, MAX_TRUNCATION);
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if squared_tail(beta, l0, mid as f64)? <= target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(hi)
}

/// Fills `out` with innovations drawn from `rng`.
pub fn fill_innovations<R: Rng + ?Sized>(dist: &InnovationDist, rng: &mut R, out: &mut [f64]) {
    match *dist {
        InnovationDist::Gaussian { sigma } => {
            for v in out.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *v = sigma * z;
            }
        }
        InnovationDist::StudentT { nu, sigma } => {
            let t = StudentT::new(nu).expect("nu > 4 checked at construction");
            let scale = sigma * ((nu - 2.0) / nu).sqrt();
            for v in out.iter_mut() {
                *v = scale * t.sample(rng);
            }
        }
    }
}

/// `count` innovations, deterministic in `(dist, count, seed)`.
pub fn gen_innovations(dist: &InnovationDist, count: usize, seed: u64) -> Vec<f64> {
    let mut out = vec![0.0; count];
    fill_innovations(dist, &mut path_rng(seed), &mut out);
    out
}

/// FFT convolution with a fixed filter for inputs of a fixed length.
#[derive(Clone)]
pub struct Filter {
    m: usize,
    n: usize,
    spectrum: Arc<[Complex<f64>]>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Filter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Filter").field("m", &self.m).field("n", &self.n).finish()
    }
}

impl Filter {
    /// Prepares the filter `c` (length `M + 1`) for outputs of length `n`.
    pub fn new(c: &[f64], n: usize) -> Result<Self> {
        if c.is_empty() || n == 0 {
            return Err(Error::Shape("filter and output length must be non-empty".into()));
        }
        let m = c.len() - 1;
        let size = (n + m).next_power_of_two();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(size);
        let inverse = planner.plan_fft_inverse(size);
        let mut spectrum: Vec<Complex<f64>> = c.iter().map(|&v| Complex::new(v, 0.0)).collect();
        spectrum.resize(size, Complex::new(0.0, 0.0));
        forward.process(&mut spectrum);
        // fold the inverse transform's normalization into the spectrum
        let scale = 1.0 / size as f64;
        spectrum.iter_mut().for_each(|v| *v *= scale);
        Ok(Self { m, n, spectrum: spectrum.into(), forward, inverse })
    }

    pub fn output_len(&self) -> usize {
        self.n
    }

    /// `out_i = Σ_k c_k eps[i + M - k]` for `i = 0..n`; `eps` must have length `n + M`.
    pub fn apply(&self, eps: &[f64]) -> Result<Vec<f64>> {
        if eps.len() != self.n + self.m {
            return Err(Error::Shape(format!("expected {} innovations (n + M), got {}", self.n + self.m, eps.len())));
        }
        let size = self.spectrum.len();
        let mut buf: Vec<Complex<f64>> = Vec::with_capacity(size);
        buf.extend(eps.iter().map(|&v| Complex::new(v, 0.0)));
        buf.resize(size, Complex::new(0.0, 0.0));
        self.forward.process(&mut buf);
        for (b, s) in buf.iter_mut().zip(self.spectrum.iter()) {
            *b *= s;
        }
        self.inverse.process(&mut buf);
        Ok(buf[self.m..self.m + self.n].iter().map(|v| v.re).collect())
    }
}

/// `X_i = Σ_{k=0}^{M} c_k ε_{i-k}` for `i = 1..n`, with `eps` holding `ε_{1-M}, …, ε_n`.
pub fn moving_average(c: &[f64], eps: &[f64]) -> Result<Vec<f64>> {
    if c.is_empty() || eps.len() < c.len() {
        return Err(Error::Shape(format!("need at least M + 1 = {} innovations, got {}", c.len(), eps.len())));
    }
    Filter::new(c, eps.len() + 1 - c.len())?.apply(eps)
}

/// Everything that defines the law of a path: filter, innovations and the two marginals.
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub coeffs: CoefficientModel,
    pub innovations: InnovationDist,
    pub x: MarginalX,
    pub y: TargetMarginalY,
}

impl ModelSpec {
    /// Builds the spec after checking that `x` is the marginal generated by `(coeffs, innovations)`.
    pub fn new(
        coeffs: CoefficientModel,
        innovations: InnovationDist,
        x: MarginalX,
        y: TargetMarginalY,
    ) -> Result<Self> {
        let spec = Self::declared(coeffs, innovations, x, y);
        spec.validate()?;
        Ok(spec)
    }

    /// Builds the spec without the consistency check. Deterministic constants
    /// can be computed for any declared pair of marginals; simulation
    /// re-checks consistency.
    pub fn declared(coeffs: CoefficientModel, innovations: InnovationDist, x: MarginalX, y: TargetMarginalY) -> Self {
        Self { coeffs, innovations, x, y }
    }

    /// Checks that `x` can be the marginal of the moving average.
    pub fn validate(&self) -> Result<()> {
        let (innovations, x) = (&self.innovations, &self.x);
        match (innovations, x) {
            (InnovationDist::Gaussian { .. }, MarginalX::Gaussian { sd }) => {
                let want = innovations.variance() * self.coeffs.sum_squares();
                let rel = (sd * sd - want).abs() / want;
                if rel > 1e-6 {
                    return Err(Error::Config(format!(
                        "Gaussian marginal variance {} does not match sigma_eps^2 * sum c_k^2 = {want} (relative deviation {rel:.3e})",
                        sd * sd
                    )));
                }
            }
            (InnovationDist::StudentT { .. }, MarginalX::Empirical(_)) => {}
            _ => {
                return Err(Error::Config(format!(
                    "marginal {x} cannot be the law of a moving average of {innovations} innovations"
                )))
            }
        }
        Ok(())
    }

    pub fn case(&self) -> MdaCase {
        MdaCase::from_tags(self.x.mda(), self.y.mda())
    }

    /// Canonical text describing the configuration at sample size `n`.
    pub fn describe(&self, n: usize) -> String {
        format!(
            "beta={};l0={};m={};innovations={};x={};y={};n={}",
            self.coeffs.beta(),
            self.coeffs.l0(),
            self.coeffs.m(),
            self.innovations,
            self.x,
            self.y,
            n
        )
    }

    /// FNV-1a hash of [`Self::describe`].
    pub fn hash(&self, n: usize) -> u64 {
        fnv1a(self.describe(n).as_bytes())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A simulated path `x` with its subordinated values `y = G(x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PathPair {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub seed: u64,
    pub spec_hash: u64,
    /// Number of points whose probability was clamped before applying `Q_Y`.
    pub clamp_events: usize,
}

/// Reusable path generator for a fixed model and sample size.
#[derive(Debug, Clone)]
pub struct Simulator {
    spec: ModelSpec,
    n: usize,
    filter: Filter,
    hash: u64,
}

impl Simulator {
    pub fn new(spec: ModelSpec, n: usize) -> Result<Self> {
        if n == 0 {
            return domain("path length must be at least 1");
        }
        spec.validate()?;
        let filter = Filter::new(spec.coeffs.coeffs(), n)?;
        let hash = spec.hash(n);
        Ok(Self { spec, n, filter, hash })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn hash(&self) -> u64 {
        self.hash
    }

    /// The `n + M` innovations `ε_{1-M}, …, ε_n` of the path with this seed.
    pub fn innovations(&self, seed: u64) -> Vec<f64> {
        gen_innovations(&self.spec.innovations, self.n + self.spec.coeffs.m(), seed)
    }

    pub fn path(&self, seed: u64) -> PathPair {
        self.path_from_innovations(&self.innovations(seed), seed)
    }

    /// The path driven by the given innovations.
    pub fn path_from_innovations(&self, eps: &[f64], seed: u64) -> PathPair {
        let x = self.filter.apply(eps).expect("innovation count fixed by the simulator");
        let mut clamp_events = 0;
        let y = x
            .iter()
            .map(|&xi| {
                let s = subordinate(&self.spec.x, &self.spec.y, xi);
                clamp_events += s.clamped as usize;
                s.value
            })
            .collect();
        PathPair { x, y, seed, spec_hash: self.hash, clamp_events }
    }
}

/// One path of length `n`; see [`Simulator`] for repeated draws.
pub fn simulate_path(
    coeffs: CoefficientModel,
    dist: InnovationDist,
    mx: MarginalX,
    ty: TargetMarginalY,
    n: usize,
    seed: u64,
) -> Result<PathPair> {
    let spec = ModelSpec::new(coeffs, dist, mx, ty)?;
    Ok(Simulator::new(spec, n)?.path(seed))
}

/// Writes the path as CSV with header `i,x,y` (1-based `i`).
pub fn write_path_csv<W: Write>(path: &PathPair, mut w: W) -> Result<()> {
    writeln!(w, "i,x,y")?;
    for (i, (x, y)) in path.x.iter().zip(&path.y).enumerate() {
        writeln!(w, "{},{},{}", i + 1, x, y)?;
    }
    Ok(())
}

/// Binary layout: `n` as little-endian `u64`, then `n` little-endian `f64`
/// values of `x`, then `n` values of `y`.
pub fn write_path_binary<W: Write>(path: &PathPair, mut w: W) -> Result<()> {
    w.write_all(&(path.x.len() as u64).to_le_bytes())?;
    for v in path.x.iter().chain(&path.y) {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Reads the layout written by [`write_path_binary`] into `(x, y)`.
pub fn read_path_binary(bytes: &[u8]) -> Result<(Vec<f64>, Vec<f64>)> {
    let word = |i: usize| -> Result<[u8; 8]> {
        bytes
            .get(8 * i..8 * i + 8)
            .map(|b| b.try_into().expect("slice of length 8"))
            .ok_or_else(|| Error::Shape("truncated binary path file".into()))
    };
    let n = u64::from_le_bytes(word(0)?) as usize;
    if bytes.len() != 8 * (1 + 2 * n) {
        return Err(Error::Shape(format!("binary path file of {} bytes does not hold n = {n}", bytes.len())));
    }
    let read =
        |start: usize| -> Result<Vec<f64>> { (0..n).map(|i| Ok(f64::from_le_bytes(word(start + i)?))).collect() };
    Ok((read(1)?, read(1 + n)?))
}

/// `ρ_k = σ_ε² Σ_j c_j c_{j+k}` for the truncated filter; `(0, true)` when `k > M`.
pub fn autocovariance(c: &[f64], sigma_eps2: f64, k: usize) -> (f64, bool) {
    if k >= c.len() {
        return (0.0, true);
    }
    let s: f64 = c.iter().zip(&c[k..]).map(|(a, b)| a * b).sum();
    (sigma_eps2 * s, false)
}

/// `ρ_k` of the untruncated filter: the exact sum over `j ≤ m` plus the
/// remainder `∫_{m+1/2}^∞ c(u) c(u+k) du`.
pub fn model_autocovariance(beta: f64, l0: &SlowlyVarying, m: usize, sigma_eps2: f64, k: usize) -> Result<f64> {
    let c = |j: usize| -> Result<f64> {
        if j == 0 {
            Ok(1.0)
        } else {
            coefficient(beta, l0, j)
        }
    };
    let mut s = 0.0;
    for j in 0..=m {
        s += c(j)? * c(j + k)?;
    }
    let cu = |u: f64| u.powf(-beta) * l0.eval(u).unwrap_or(f64::NAN);
    let kf = k as f64;
    let tail = quad::tail_integral(|w| cu(1.0 / w) * cu(1.0 / w + kf) / (w * w), 0.0, 1.0 / (m as f64 + 0.5), 1e-10)?;
    Ok(sigma_eps2 * (s + tail))
}

/// `σ_{n,1} = (Var Σ_{i=1}^n X_i)^{1/2}` for the truncated filter, computed
/// exactly from the weight each innovation receives in the sum.
pub fn sigma_n1_exact(c: &[f64], sigma_eps2: f64, n: usize) -> f64 {
    let m = c.len() - 1;
    // prefix[j] = c_0 + … + c_{j-1}
    let mut prefix = Vec::with_capacity(c.len() + 1);
    prefix.push(0.0);
    let mut acc = 0.0;
    for &v in c {
        acc += v;
        prefix.push(acc);
    }
    // ε_t with t = 1 - M, …, n enters with weight Σ_{i=max(1,t)}^{min(n,t+M)} c_{i-t}
    let mut var = 0.0;
    for t in (1 - m as i64)..=(n as i64) {
        let lo = (1 - t).max(0) as usize;
        let hi = (n as i64 - t).min(m as i64) as usize;
        let w = prefix[hi + 1] - prefix[lo];
        var += w * w;
    }
    (sigma_eps2 * var).sqrt()
}

/// `σ_{n,1}` from autocovariances `rho[0..]` (missing lags are zero):
/// `σ² = n ρ_0 + 2 Σ_{k=1}^{n-1} (n - k) ρ_k`.
pub fn sigma_n1_from_autocov(rho: &[f64], n: usize) -> f64 {
    let mut var = n as f64 * rho.first().copied().unwrap_or(0.0);
    for (k, r) in rho.iter().enumerate().take(n).skip(1) {
        var += 2.0 * (n - k) as f64 * r;
    }
    var.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one() -> SlowlyVarying {
        SlowlyVarying::constant(1.0).unwrap()
    }

    #[test]
    fn truncation_examples() {
        let m = truncation_length(0.75, &one(), 1e-3).unwrap();
        assert!((m as f64 - 3.066e5).abs() < 0.01e5, "{m}");
        assert!(truncation_length(0.99, &one(), 1e-3).unwrap() < m);
        assert!(truncation_length(0.75, &one(), 0.0).is_err());
    }

    #[test]
    fn truncation_numeric_path_brackets_closed_form() {
        let l0 = SlowlyVarying::numeric("one", |_| 1.0);
        let a = truncation_length(0.8, &l0, 1e-2).unwrap() as f64;
        let b = truncation_length(0.8, &one(), 1e-2).unwrap() as f64;
        assert!((a - b).abs() / b < 0.02, "{a} vs {b}");
    }

    #[test]
    fn moving_average_examples() {
        let x = moving_average(&[1.0, 0.5], &[2.0, 1.0, 3.0]).unwrap();
        assert_relative_eq!(x[0], 2.0, epsilon = 1e-12);
        assert_relative_eq!(x[1], 3.5, epsilon = 1e-12);
        let eps = [0.3, -1.2, 4.0];
        let x = moving_average(&[1.0], &eps).unwrap();
        for (a, b) in x.iter().zip(&eps) {
            assert_relative_eq!(*a, *b, epsilon = 1e-12);
        }
        assert!(matches!(moving_average(&[1.0, 0.5, 0.2], &[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn autocovariance_examples() {
        assert_eq!(autocovariance(&[1.0, 0.5], 1.0, 0), (1.25, false));
        assert_eq!(autocovariance(&[1.0, 0.5], 1.0, 1), (0.5, false));
        assert_eq!(autocovariance(&[1.0, 0.5], 1.0, 2), (0.0, true));
        assert_eq!(autocovariance(&[1.0], 2.0, 0), (2.0, false));
    }

    #[test]
    fn sigma_examples() {
        assert_relative_eq!(sigma_n1_from_autocov(&[1.25, 0.5], 2), 3.5f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(sigma_n1_from_autocov(&[1.25, 0.5], 3), 5.75f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(sigma_n1_exact(&[1.0], 1.0, 5), 5f64.sqrt(), epsilon = 1e-14);
        assert_relative_eq!(sigma_n1_exact(&[1.0, 0.5], 1.0, 3), 5.75f64.sqrt(), epsilon = 1e-14);
    }

    #[test]
    fn identity_target_returns_x() {
        let c = CoefficientModel::new(0.75, one(), 1).unwrap();
        let sd = c.sum_squares().sqrt();
        let mx = MarginalX::gaussian(sd).unwrap();
        let ty = TargetMarginalY::same_as(&mx);
        let p = simulate_path(c, InnovationDist::gaussian(1.0).unwrap(), mx, ty, 64, 3).unwrap();
        for (x, y) in p.x.iter().zip(&p.y) {
            assert!((x - y).abs() < 1e-9 * x.abs().max(1.0));
        }
    }

    #[test]
    fn inconsistent_marginal_rejected() {
        let c = CoefficientModel::new(0.75, one(), 10).unwrap();
        let r = ModelSpec::new(
            c,
            InnovationDist::gaussian(1.0).unwrap(),
            MarginalX::gaussian(1.0).unwrap(),
            TargetMarginalY::Exponential,
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }

    #[test]
    fn binary_round_trip() {
        let p = PathPair { x: vec![1.5, -2.0], y: vec![0.1, 3.0], seed: 1, spec_hash: 2, clamp_events: 0 };
        let mut buf = Vec::new();
        write_path_binary(&p, &mut buf).unwrap();
        assert_eq!(buf.len(), 8 * 5);
        let (x, y) = read_path_binary(&buf).unwrap();
        assert_eq!((x, y), (p.x, p.y));
    }
}
