//! Independent reference implementations used by the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;

/// `Φ(x)` by the Taylor series `1/2 + φ(x) Σ x^{2k+1} / (2k+1)!!`, accurate to
/// about 1e-15 for `|x| < 8`.
pub fn taylor_norm_cdf(x: f64) -> f64 {
    let mut term = x;
    let mut sum = x;
    let x2 = x * x;
    let mut k = 1.0;
    while term.abs() > 1e-18 * sum.abs().max(1e-300) {
        term *= x2 / (2.0 * k + 1.0);
        sum += term;
        k += 1.0;
        if k > 2000.0 {
            break;
        }
    }
    0.5 + (-x2 / 2.0).exp() / (2.0 * PI).sqrt() * sum
}

pub fn norm_pdf(x: f64) -> f64 {
    (-x * x / 2.0).exp() / (2.0 * PI).sqrt()
}

/// Root of an increasing function by bisection.
pub fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if f(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

/// `X_i = Σ_j c_j ε_{i-j}` with `eps[0]` holding `ε_{1-M}`.
pub fn direct_convolution(c: &[f64], eps: &[f64]) -> Vec<f64> {
    let m = c.len() - 1;
    let n = eps.len() - m;
    (0..n).map(|i| (0..=m).map(|j| c[j] * eps[i + m - j]).sum()).collect()
}

/// `Y_{n,r}` by enumerating every strictly increasing index tuple.
pub fn brute_multilinear(eps: &[f64], c: &[f64], r: usize) -> f64 {
    let m = c.len() - 1;
    let n = eps.len() - m;
    fn rec(i: usize, start: usize, left: usize, acc: f64, c: &[f64], eps: &[f64], m: usize) -> f64 {
        if left == 0 {
            return acc;
        }
        (start..=m).map(|j| rec(i, j + 1, left - 1, acc * c[j] * eps[i + m - j], c, eps, m)).sum()
    }
    (0..n).map(|i| rec(i, 0, r, 1.0, c, eps, m)).sum()
}

/// Adaptive Simpson on `[a, b]`.
pub fn simpson(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    #[allow(clippy::too_many_arguments)]
    fn step(
        f: &impl Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
        let (flm, frm) = (f(lm), f(rm));
        let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
        let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
        if depth == 0 || (left + right - whole).abs() <= 15.0 * tol {
            return left + right + (left + right - whole) / 15.0;
        }
        step(f, a, m, fa, flm, fm, left, tol / 2.0, depth - 1) + step(f, m, b, fm, frm, fb, right, tol / 2.0, depth - 1)
    }
    let (fa, fb, fm) = (f(a), f(b), f(0.5 * (a + b)));
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    step(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Sum of the `k` largest values by a full sort.
pub fn sort_top_k(v: &[f64], k: usize) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| b.partial_cmp(a).unwrap());
    s[..k].iter().sum()
}

/// `B(a, b)` through log-gamma.
pub fn beta_fn(a: f64, b: f64) -> f64 {
    use statrs::function::gamma::ln_gamma;
    (ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)).exp()
}

/// `Var Σ_{i≤n} X_i` by the double sum of autocovariances of a short filter.
pub fn variance_of_sum(c: &[f64], sigma_eps2: f64, n: usize) -> f64 {
    let rho = |k: usize| -> f64 {
        if k >= c.len() {
            0.0
        } else {
            sigma_eps2 * c.iter().zip(&c[k..]).map(|(a, b)| a * b).sum::<f64>()
        }
    };
    let mut v = 0.0;
    for i in 0..n {
        for j in 0..n {
            v += rho(i.abs_diff(j));
        }
    }
    v
}

pub fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

pub fn sample_variance(v: &[f64]) -> f64 {
    let m = mean(v);
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() as f64 - 1.0)
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Least-squares slope of `y` on `x`.
pub fn ls_slope(x: &[f64], y: &[f64]) -> f64 {
    let (mx, my) = (mean(x), mean(y));
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

/// Deterministic pseudo-random values in `[-1, 1)` for fixtures.
pub fn fixture(len: usize, seed: u64) -> Vec<f64> {
    let mut s = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
    (0..len)
        .map(|_| {
            s ^= s << 13;
            s ^= s >> 7;
            s ^= s << 17;
            (s >> 11) as f64 / (1u64 << 52) as f64 - 1.0
        })
        .collect()
}

/// `1 - Φ(x)`: Taylor series below 3, Laplace continued fraction above.
pub fn upper_tail(x: f64) -> f64 {
    if x < 3.0 {
        return taylor_norm_cdf(-x);
    }
    // φ(x) / (x + 1/(x + 2/(x + 3/(x + …)))) evaluated from the bottom
    let mut frac = x;
    for j in (1..=300).rev() {
        frac = x + j as f64 / frac;
    }
    norm_pdf(x) / frac
}
