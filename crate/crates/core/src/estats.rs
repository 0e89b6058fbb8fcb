//! Order-statistic functionals and empirical-process quantities.
//!
//! Tail probabilities are carried as `v = 1 - F(x)` rather than `U = F(x)` so
//! that the extreme order statistics keep full relative precision; with
//! `Q̃(v) = Q_Y(1 - v)` the largest values of `Y` are `Q̃` at the smallest `v`.

use crate::error::{domain, Error, Result};
use crate::model::{clamped_sf, MarginalX, TargetMarginalY};
use crate::scaling::ScalingBundle;
use crate::simulate::{Filter, PathPair};

/// Sum of the `k` largest entries.
///
/// The top block is found by partial selection and then sorted, so the
/// floating-point summation order (and the result, bit for bit) does not
/// depend on the order of the input.
pub fn top_k_sum(sample: &[f64], k: usize) -> Result<f64> {
    let n = sample.len();
    if k == 0 || k > n {
        return domain(format!("need 1 <= k <= n, got k = {k}, n = {n}"));
    }
    let mut v = sample.to_vec();
    let top = if k < n {
        v.select_nth_unstable_by(n - k, f64::total_cmp);
        &mut v[n - k..]
    } else {
        &mut v[..]
    };
    top.sort_unstable_by(f64::total_cmp);
    Ok(top.iter().sum())
}

fn check_trim(n: usize, m: usize, k: usize) -> Result<()> {
    if m + k >= n {
        return domain(format!("trimmed sum needs m + k < n, got m = {m}, k = {k}, n = {n}"));
    }
    Ok(())
}

/// `T_n(m, k) = Σ_{i=m+1}^{n-k} X_{i:n}`.
pub fn trimmed_sum(sample: &[f64], m: usize, k: usize) -> Result<f64> {
    check_trim(sample.len(), m, k)?;
    let mut v = sample.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    Ok(v[m..sample.len() - k].iter().sum())
}

/// `n ∫_{m/n}^{1-k/n} Q_n(y) dy` with the left-continuous sample quantile
/// `Q_n(y) = X_{j:n}` on `((j-1)/n, j/n]`.
pub fn trimmed_sum_stair(sample: &[f64], m: usize, k: usize) -> Result<f64> {
    let n = sample.len();
    check_trim(n, m, k)?;
    let mut v = sample.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let nf = n as f64;
    let (lo, hi) = (m as f64 / nf, 1.0 - k as f64 / nf);
    let mut total = 0.0;
    for (j, x) in v.iter().enumerate() {
        let a = (j as f64 / nf).max(lo);
        let b = ((j + 1) as f64 / nf).min(hi);
        if b > a {
            total += x * nf * (b - a);
        }
    }
    Ok(total)
}

/// Sorted view of one sample together with its probability transforms.
#[derive(Debug, Clone)]
pub struct ProcessFrame {
    /// Sample in ascending order.
    xs: Vec<f64>,
    /// `U_(i) = F(X_(i))`, ascending.
    u: Option<Vec<f64>>,
    /// Clamped tail probabilities `1 - F(x)` in ascending order (largest `x` first).
    v: Vec<f64>,
    /// Values of `Y` aligned with `v`.
    y_by_v: Vec<f64>,
    sigma: f64,
    marginal: Option<MarginalX>,
}

impl ProcessFrame {
    /// Frame for a sample `x` of the marginal `mx` (no `Y` values attached).
    pub fn new(x: &[f64], mx: &MarginalX, sigma: f64) -> Result<Self> {
        Self::build(x, None, mx, sigma)
    }

    /// Frame for a simulated path, keeping the subordinated values.
    pub fn from_path(path: &PathPair, mx: &MarginalX, sigma: f64) -> Result<Self> {
        Self::build(&path.x, Some(&path.y), mx, sigma)
    }

    fn build(x: &[f64], y: Option<&[f64]>, mx: &MarginalX, sigma: f64) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::Size("empty sample".into()));
        }
        if !(sigma > 0.0) {
            return domain(format!("normalization sigma must be positive, got {sigma}"));
        }
        let mut idx: Vec<usize> = (0..x.len()).collect();
        idx.sort_unstable_by(|&a, &b| x[a].total_cmp(&x[b]).then(a.cmp(&b)));
        let xs: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
        let u = mx.is_analytic().then(|| xs.iter().map(|&t| mx.cdf(t)).collect());
        let v: Vec<f64> = xs.iter().rev().map(|&t| clamped_sf(mx, t).0).collect();
        let y_by_v = match y {
            Some(y) => idx.iter().rev().map(|&i| y[i]).collect(),
            None => Vec::new(),
        };
        Ok(Self { xs, u, v, y_by_v, sigma, marginal: Some(mx.clone()) })
    }

    /// Frame holding only the probability transforms `U_i` (no marginal attached).
    pub fn from_uniforms(u: &[f64], sigma: f64) -> Result<Self> {
        if u.is_empty() {
            return Err(Error::Size("empty sample".into()));
        }
        if u.iter().any(|&t| !(t > 0.0 && t < 1.0)) {
            return domain("uniforms must lie in (0, 1)");
        }
        let mut us = u.to_vec();
        us.sort_unstable_by(f64::total_cmp);
        let v = us.iter().rev().map(|t| 1.0 - t).collect();
        Ok(Self { xs: us.clone(), u: Some(us), v, y_by_v: Vec::new(), sigma, marginal: None })
    }

    pub fn n(&self) -> usize {
        self.xs.len()
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// Sample in ascending order.
    pub fn sorted(&self) -> &[f64] {
        &self.xs
    }

    /// Tail probabilities `1 - F(X)` in ascending order.
    pub fn tail_probs(&self) -> &[f64] {
        &self.v
    }

    fn uniforms(&self) -> Result<&[f64]> {
        self.u
            .as_deref()
            .ok_or_else(|| Error::Unsupported("the uniform empirical process needs an analytic X marginal".into()))
    }

    /// `α_n(y) = σ^{-1} n (E_n(y) - y)`.
    pub fn alpha_n(&self, y: f64) -> Result<f64> {
        let u = self.uniforms()?;
        if !(y > 0.0 && y < 1.0) {
            return domain(format!("alpha_n needs y in (0, 1), got {y}"));
        }
        let count = u.partition_point(|&t| t <= y) as f64;
        Ok((count - self.n() as f64 * y) / self.sigma)
    }

    /// Left-continuous sample quantile `Q_n(y) = X_{j:n}` for `(j-1)/n < y ≤ j/n`.
    pub fn sample_quantile(&self, y: f64) -> Result<f64> {
        if !(y > 0.0 && y <= 1.0) {
            return domain(format!("sample quantile needs y in (0, 1], got {y}"));
        }
        let n = self.n();
        let j = ((y * n as f64).ceil() as usize).clamp(1, n);
        Ok(self.xs[j - 1])
    }

    /// `q_n(y) = σ^{-1} n (Q(y) - Q_n(y))`.
    pub fn quantile_process(&self, y: f64) -> Result<f64> {
        let mx =
            self.marginal.as_ref().ok_or_else(|| Error::Unsupported("quantile process needs a marginal".into()))?;
        let q = mx.quantile(y)?;
        Ok(self.n() as f64 * (q - self.sample_quantile(y)?) / self.sigma)
    }

    /// `sup_{y ∈ [1/4, 3/4]} |q_n(y) + σ^{-1} Σ X_i|`, evaluated at both ends of
    /// every step of `Q_n` (the expression is monotone between steps).
    pub fn ho_hsing_sup(&self) -> Result<f64> {
        let mx =
            self.marginal.as_ref().ok_or_else(|| Error::Unsupported("quantile process needs a marginal".into()))?;
        let n = self.n();
        let nf = n as f64;
        let shift: f64 = self.xs.iter().sum::<f64>() / self.sigma;
        let j_lo = ((0.25 * nf).ceil() as usize).max(1);
        let j_hi = ((0.75 * nf).ceil() as usize).min(n);
        let mut sup: f64 = 0.0;
        for j in j_lo..=j_hi {
            let a = ((j - 1) as f64 / nf).max(0.25);
            let b = (j as f64 / nf).min(0.75);
            for y in [a, b] {
                let q = nf * (mx.quantile(y)? - self.xs[j - 1]) / self.sigma;
                sup = sup.max((q + shift).abs());
            }
        }
        Ok(sup)
    }

    /// `sup_{y ∈ (1 - k/n, 1)} |α_n(y)|` over the jumps of `E_n` in that range.
    pub fn alpha_tail_sup(&self, k: usize) -> Result<f64> {
        self.uniforms()?;
        let nf = self.n() as f64;
        let ua = k as f64 / nf;
        // in u = 1 - y: α_n = σ^{-1} (n u - #{v_i < u})
        let mut sup: f64 = 0.0;
        let mut below = 0usize;
        for &v in &self.v {
            if v >= ua {
                break;
            }
            let left = nf * v - below as f64;
            below += 1;
            sup = sup.max(left.abs()).max((nf * v - below as f64).abs());
        }
        sup = sup.max((nf * ua - below as f64).abs());
        Ok(sup / self.sigma)
    }
}

/// `Y_{n,r} = Σ_{i=1}^n Σ_{0 ≤ j_1 < … < j_r ≤ M} Π_s c_{j_s} ε_{i-j_s}`.
///
/// For each `i` the inner sum is the elementary symmetric polynomial of
/// `{c_j ε_{i-j}}`, obtained by Newton's identities from the power sums
/// `Σ_j c_j^m ε_{i-j}^m`, each of which is an FFT convolution.
pub fn multilinear_y(eps: &[f64], c: &[f64], r: usize) -> Result<f64> {
    if r > 4 {
        return Err(Error::Unsupported(format!("multilinear forms are limited to r <= 4, got {r}")));
    }
    if c.is_empty() || eps.len() < c.len() {
        return Err(Error::Shape(format!("need at least M + 1 = {} innovations, got {}", c.len(), eps.len())));
    }
    let n = eps.len() + 1 - c.len();
    if r == 0 {
        return Ok(n as f64);
    }
    let mut power_sums: Vec<Vec<f64>> = Vec::with_capacity(r);
    for m in 1..=r as i32 {
        let cm: Vec<f64> = c.iter().map(|v| v.powi(m)).collect();
        let em: Vec<f64> = eps.iter().map(|v| v.powi(m)).collect();
        power_sums.push(Filter::new(&cm, n)?.apply(&em)?);
    }
    let mut total = 0.0;
    let mut e = [0.0f64; 5];
    #[allow(clippy::needless_range_loop)]
    for i in 0..n {
        e[0] = 1.0;
        for k in 1..=r {
            let mut acc = 0.0;
            for j in 1..=k {
                let term = e[k - j] * power_sums[j - 1][i];
                if j % 2 == 1 {
                    acc += term;
                } else {
                    acc -= term;
                }
            }
            e[k] = acc / k as f64;
        }
        total += e[r];
    }
    Ok(total)
}

/// Result of [`reduction_sup`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReductionSup {
    /// `sup_t |S_{n,p}(t)| / σ_{n,1}` over the grid.
    pub value: f64,
    /// Number of grid points evaluated.
    pub grid_points: usize,
}

/// Points of the tail grid on each side of the sample range.
pub const TAIL_GRID: usize = 256;

/// `sup_t |S_{n,p}(t)| / σ_{n,1}` with
/// `S_{n,p}(t) = Σ_i (1{X_i ≤ t} - F(t)) + Σ_{r=1}^p (-1)^{r-1} F^{(r)}(t) Y_{n,r}`.
///
/// The grid holds every sample point with its left limit, the midpoints of
/// consecutive sample points, and [`TAIL_GRID`] points beyond each end of the
/// sample. `Y_{n,1}` is `Σ X_i`; higher orders come from [`multilinear_y`].
pub fn reduction_sup(
    x: &[f64],
    eps: &[f64],
    c: &[f64],
    p: usize,
    mx: &MarginalX,
    sigma_n1: f64,
) -> Result<ReductionSup> {
    if p > 2 {
        return Err(Error::Unsupported(format!("reduction diagnostic supports p <= 2, got {p}")));
    }
    if !mx.is_analytic() {
        return Err(Error::Unsupported("reduction diagnostic needs analytic derivatives of F".into()));
    }
    if x.is_empty() {
        return Err(Error::Size("empty sample".into()));
    }
    let mut ys = Vec::with_capacity(p);
    if p >= 1 {
        ys.push(x.iter().sum::<f64>());
    }
    if p >= 2 {
        if eps.len() + 1 != x.len() + c.len() {
            return Err(Error::Shape("innovations do not match the path and filter lengths".into()));
        }
        ys.push(multilinear_y(eps, c, 2)?);
    }
    let mut xs = x.to_vec();
    xs.sort_unstable_by(f64::total_cmp);
    let n = xs.len();
    let nf = n as f64;
    let smooth = |t: f64| -> Result<f64> {
        let mut s = -nf * mx.cdf(t);
        for (r, y) in ys.iter().enumerate() {
            let d = mx.cdf_derivative(r + 1, t)?;
            s += if r % 2 == 0 { d * y } else { -d * y };
        }
        Ok(s)
    };
    let mut sup: f64 = 0.0;
    let mut points = 0usize;
    let mut j = 0usize;
    while j < n {
        let t = xs[j];
        let mut j_end = j;
        while j_end + 1 < n && xs[j_end + 1] == t {
            j_end += 1;
        }
        let s = smooth(t)?;
        // left limit counts points strictly below t, the value counts points ≤ t
        sup = sup.max((j as f64 + s).abs()).max(((j_end + 1) as f64 + s).abs());
        points += 1;
        if j_end + 1 < n {
            let mid = 0.5 * (t + xs[j_end + 1]);
            sup = sup.max(((j_end + 1) as f64 + smooth(mid)?).abs());
            points += 1;
        }
        j = j_end + 1;
    }
    let span = (xs[n - 1] - xs[0]).max(1.0);
    for i in 1..=TAIL_GRID {
        let h = 4.0 * span * i as f64 / TAIL_GRID as f64;
        sup = sup.max(smooth(xs[0] - h)?.abs()).max((nf + smooth(xs[n - 1] + h)?).abs());
        points += 2;
    }
    Ok(ReductionSup { value: sup / sigma_n1, grid_points: points })
}

/// `A (top − μ) / σ`.
pub fn standardize(top_sum: f64, a_n: f64, sigma_n1: f64, mu_n: f64) -> f64 {
    a_n * (top_sum - mu_n) / sigma_n1
}

fn check_hash(path: &PathPair, bundle: &ScalingBundle) -> Result<()> {
    if path.spec_hash != bundle.spec_hash {
        return Err(Error::Config(format!(
            "path was generated by configuration {:016x}, scaling bundle belongs to {:016x}",
            path.spec_hash, bundle.spec_hash
        )));
    }
    if path.y.len() != bundle.n {
        return Err(Error::Shape(format!("path has length {}, bundle expects {}", path.y.len(), bundle.n)));
    }
    Ok(())
}

/// `Z_n = A_n σ_{n,1}^{-1} (Σ_{top k_n} Y − μ_n)`.
pub fn z_statistic(path: &PathPair, bundle: &ScalingBundle) -> Result<f64> {
    check_hash(path, bundle)?;
    let top = top_k_sum(&path.y, bundle.k)?;
    Ok(standardize(top, bundle.a_n, bundle.sigma_n1, bundle.mu_n))
}

/// The three-term split of `Z_n` and the order-statistic ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub z: f64,
    /// `U_{n-k:n} / (1 - k/n)`.
    pub u_ratio: f64,
    /// `|I₁ + I₂ + I₃ − Z| / max(|Z|, |I₁| + |I₂| + |I₃|)`.
    pub residual: f64,
}

/// Splits `Z_n` into the empirical-process integrals over `(1 - k/n, 1 - 1/n]`
/// (`I₁`) and `(1 - 1/n, 1)` (`I₂`), and the order-statistic remainder `I₃`.
///
/// In `u = 1 - y`, with `Q̃(u) = Q_Y(1 - u)`, `M(u) = ∫_0^u Q̃`,
/// `u_a = k/n`, `u_b = 1/n` and `v_i = 1 - U_i`, integrating by parts gives
///
/// * `I₁ σ/A = Σ_{v_i<u_a} (Q̃(max(u_b, v_i)) − Q̃(u_a)) − n (u_b Q̃(u_b) − u_a Q̃(u_a) + M(u_a) − M(u_b))`
/// * `I₂ σ/A = Σ_{v_i<u_b} (Q̃(v_i) − Q̃(u_b)) − n (M(u_b) − u_b Q̃(u_b))`
/// * `I₃ σ/A = Σ_{rank ≤ k, v ≥ u_a} (Q̃(v) − Q̃(u_a)) − Σ_{rank > k, v < u_a} (Q̃(v) − Q̃(u_a))`
///
/// where ranks order the `v_i` increasingly. Each term is evaluated on its
/// own; the residual against `Z_n` checks the split.
pub fn decompose_i(frame: &ProcessFrame, ty: &TargetMarginalY, bundle: &ScalingBundle) -> Result<Decomposition> {
    frame.uniforms()?;
    let (n, k) = (frame.n(), bundle.k);
    if frame.y_by_v.len() != n {
        return Err(Error::State("frame has no subordinated values; build it with from_path".into()));
    }
    if n != bundle.n {
        return Err(Error::Shape(format!("frame has n = {n}, bundle expects {}", bundle.n)));
    }
    if k < 2 || k >= n {
        return domain(format!("decomposition needs 2 <= k_n < n, got k_n = {k}"));
    }
    let nf = n as f64;
    let (ua, ub) = (k as f64 / nf, 1.0 / nf);
    let (qa, qb) = (ty.quantile_upper(ua), ty.quantile_upper(ub));
    let (ma, mb) = (ty.tail_mean(ua)?, ty.tail_mean(ub)?);
    let scale = bundle.a_n / bundle.sigma_n1;
    let v = &frame.v;
    let y = &frame.y_by_v;

    let mut s1 = 0.0;
    let mut s2 = 0.0;
    for (&vi, &yi) in v.iter().zip(y) {
        if vi >= ua {
            break;
        }
        if vi < ub {
            s1 += qb - qa;
            s2 += yi - qb;
        } else {
            s1 += yi - qa;
        }
    }
    let i1 = scale * (s1 - nf * (ub * qb - ua * qa + ma - mb));
    let i2 = scale * (s2 - nf * (mb - ub * qb));

    let mut d = 0.0;
    for (rank, (&vi, &yi)) in v.iter().zip(y).enumerate() {
        let top = rank < k;
        if top && vi >= ua {
            d += yi - qa;
        } else if !top && vi < ua {
            d -= yi - qa;
        } else if !top {
            break;
        }
    }
    let i3 = scale * d;

    let mut top: Vec<f64> = y[..k].to_vec();
    top.sort_unstable_by(f64::total_cmp);
    let z = standardize(top.iter().sum(), bundle.a_n, bundle.sigma_n1, bundle.mu_n);
    let denom = z.abs().max(i1.abs() + i2.abs() + i3.abs()).max(f64::MIN_POSITIVE);
    let residual = (i1 + i2 + i3 - z).abs() / denom;
    let u_ratio = (1.0 - v[k]) / (1.0 - ua);
    Ok(Decomposition { i1, i2, i3, z, u_ratio, residual })
}
