//! Deterministic normalizing constants and hypothesis checks.
//!
//! Everything here is a pure function of the declared model: the reduction
//! order `p`, the asymptotic and exact partial-sum scales, the reduction error
//! rate `d_{n,p}`, the lower bound on `ξ`, the extreme-sum normalization
//! `A_n` with its slowly varying corrections, the Karamata integral `K_n`, the
//! centering `μ_n`, and the i.i.d. reference scale `a_n`.

use crate::error::{domain, Error, Result};
use crate::model::{MarginalX, Mda, MdaCase, SlowlyVarying, TargetMarginalY};
use crate::quad;
use crate::simulate::{sigma_n1_exact, ModelSpec};

fn check_beta(beta: f64) -> Result<()> {
    if !(beta > 0.5 && beta < 1.0) {
        return domain(format!("beta must lie in (1/2, 1), got {beta}"));
    }
    Ok(())
}

/// Smallest `p ≥ 1` with `(p + 1)(2β - 1) > 1`.
pub fn select_p(beta: f64) -> Result<usize> {
    check_beta(beta)?;
    let e = 2.0 * beta - 1.0;
    let mut p = 1;
    while (p + 1) as f64 * e <= 1.0 {
        p += 1;
    }
    Ok(p)
}

/// `(n^{2 - p(2β-1)} L₀(n)^{2p})^{1/2}`, the growth of `σ_{n,p}` for `p < 1/(2β - 1)`.
pub fn sigma_np_asymptotic(n: usize, p: usize, beta: f64, l0: &SlowlyVarying) -> Result<f64> {
    check_beta(beta)?;
    let e = 2.0 * beta - 1.0;
    if p == 0 || p as f64 * e >= 1.0 {
        return domain(format!("sigma_n,p asymptotics need 1 <= p < 1/(2 beta - 1) = {}, got p = {p}", 1.0 / e));
    }
    let nf = n as f64;
    let l = l0.eval(nf)?;
    Ok((nf.powf(2.0 - p as f64 * e) * l.powi(2 * p as i32)).sqrt())
}

/// `n^{-(β - 1/2)(p - 1)} L₀(n)^{p-1}`, the relative size of the order-`p` term to the linear one.
pub fn sigma_ratio_asymptotic(n: usize, p: usize, beta: f64, l0: &SlowlyVarying) -> Result<f64> {
    check_beta(beta)?;
    if p == 0 {
        return domain("order p must be at least 1");
    }
    let nf = n as f64;
    let k = (p - 1) as i32;
    Ok(nf.powf(-(beta - 0.5) * k as f64) * l0.eval(nf)?.powi(k))
}

/// Rate of the uniform reduction-principle error.
pub fn d_np(n: usize, p: usize, beta: f64, l0: &SlowlyVarying) -> Result<f64> {
    check_beta(beta)?;
    if n < 16 {
        return domain(format!("d_n,p needs n >= 16 so that log log n > 0, got {n}"));
    }
    if p == 0 {
        return domain("order p must be at least 1");
    }
    let nf = n as f64;
    let ln = nf.ln();
    let lln = ln.ln().powf(0.75);
    let l = l0.eval(nf)?;
    if (p + 1) as f64 * (2.0 * beta - 1.0) >= 1.0 {
        Ok(nf.powf(-(1.0 - beta)) / l * ln.powf(2.5) * lln)
    } else {
        Ok(nf.powf(-(p as f64) * (beta - 0.5)) * l.powi(p as i32) * ln.sqrt() * lln)
    }
}

fn require(v: Option<f64>, what: &str, case: MdaCase) -> Result<f64> {
    v.ok_or_else(|| Error::Config(format!("{case} needs the tail index {what}")))
}

/// Lower bound on `ξ` for the given case, after checking `α ≥ 4` (Cases 1, 2)
/// and `α₀ > 1/(1 - β)` (Cases 1, 3).
pub fn xi_threshold(case: MdaCase, beta: f64, alpha: Option<f64>, alpha0: Option<f64>) -> Result<f64> {
    check_beta(beta)?;
    let need_alpha = matches!(case, MdaCase::Case1 | MdaCase::Case2);
    let need_alpha0 = matches!(case, MdaCase::Case1 | MdaCase::Case3);
    let alpha = if need_alpha { require(alpha, "alpha", case)? } else { f64::NAN };
    let alpha0 = if need_alpha0 { require(alpha0, "alpha0", case)? } else { f64::NAN };
    if need_alpha && alpha < 4.0 {
        return Err(Error::Infeasible(format!(
            "{case} requires alpha >= 4 (finite fourth moment of X), got alpha = {alpha}"
        )));
    }
    if need_alpha0 && alpha0 <= 1.0 / (1.0 - beta) {
        return Err(Error::Infeasible(format!(
            "{case} requires alpha0 > 1/(1 - beta) = {}, got alpha0 = {alpha0}",
            1.0 / (1.0 - beta)
        )));
    }
    let t = match case {
        MdaCase::Case1 => (beta + 1.0 / alpha) / (1.0 + 1.0 / alpha - 1.0 / alpha0),
        MdaCase::Case2 => (beta + 1.0 / alpha) / (1.0 + 1.0 / alpha),
        MdaCase::Case3 => beta / (1.0 - 1.0 / alpha0),
        MdaCase::Case4 => beta,
    };
    if t >= 1.0 {
        return Err(Error::Infeasible(format!(
            "{case}: condition {} gives xi > {t} >= 1; no admissible xi (alpha >= 4, alpha0 > 1/(1 - beta))",
            case.condition_label()
        )));
    }
    Ok(t)
}

/// Exponent of `n/k_n` in `A_n`.
pub fn case_exponent(case: MdaCase, alpha: Option<f64>, alpha0: Option<f64>) -> Result<f64> {
    Ok(match case {
        MdaCase::Case1 => 1.0 + 1.0 / require(alpha, "alpha", case)? - 1.0 / require(alpha0, "alpha0", case)?,
        MdaCase::Case2 => 1.0 + 1.0 / require(alpha, "alpha", case)?,
        MdaCase::Case3 => 1.0 - 1.0 / require(alpha0, "alpha0", case)?,
        MdaCase::Case4 => 1.0,
    })
}

/// The slowly varying corrections `L₁ⱼ` and `L₂ⱼ`, `j = 1…4`. Only the pair of
/// the active case is normally present.
#[derive(Debug, Clone, Default)]
pub struct LFamily {
    l1: [Option<SlowlyVarying>; 4],
    l2: [Option<SlowlyVarying>; 4],
    alpha: Option<f64>,
    alpha0: Option<f64>,
}

impl LFamily {
    /// Builds `L₁ⱼ = num/den` and the matching `L₂ⱼ` for `case`, where `num` is
    /// the `Y` part (`L₂*` or `L₃*`) and `den` the `X` part (`L₂` or `L₃`).
    pub fn for_case(
        case: MdaCase,
        num: SlowlyVarying,
        den: SlowlyVarying,
        alpha: Option<f64>,
        alpha0: Option<f64>,
    ) -> Result<Self> {
        let l1 = SlowlyVarying::ratio(num, den);
        let factor = match case {
            MdaCase::Case1 => 1.0 / require(alpha, "alpha", case)? - 1.0 / require(alpha0, "alpha0", case)? + 1.0,
            MdaCase::Case2 => 1.0 / require(alpha, "alpha", case)? + 1.0,
            MdaCase::Case3 => 1.0 - 1.0 / require(alpha0, "alpha0", case)?,
            MdaCase::Case4 => 1.0,
        };
        let l2 = if factor == 1.0 { l1.clone() } else { SlowlyVarying::scaled(factor, l1.clone())? };
        let mut fam = Self { alpha, alpha0, ..Self::default() };
        let j = case.number() as usize - 1;
        fam.l1[j] = Some(l1);
        fam.l2[j] = Some(l2);
        Ok(fam)
    }

    /// The family implied by the declared marginals.
    pub fn from_marginals(mx: &MarginalX, ty: &TargetMarginalY) -> Result<Self> {
        let case = MdaCase::from_tags(mx.mda(), ty.mda());
        Self::for_case(case, target_part(ty)?, marginal_part(mx)?, tail_index(mx.mda()), tail_index(ty.mda()))
    }

    /// `L₁ⱼ` for the given case.
    pub fn l1(&self, case: MdaCase) -> Option<&SlowlyVarying> {
        self.l1[case.number() as usize - 1].as_ref()
    }

    /// `L₂ⱼ` for the given case.
    pub fn l2(&self, case: MdaCase) -> Option<&SlowlyVarying> {
        self.l2[case.number() as usize - 1].as_ref()
    }

    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    pub fn alpha0(&self) -> Option<f64> {
        self.alpha0
    }
}

// `L₂*` (Fréchet) or `L₃*` (Gumbel) of the target
fn target_part(ty: &TargetMarginalY) -> Result<SlowlyVarying> {
    match (ty, ty.mda()) {
        (TargetMarginalY::Pareto { alpha0 }, _) => SlowlyVarying::constant(*alpha0),
        (TargetMarginalY::Exponential, _) => SlowlyVarying::constant(1.0),
        (_, Mda::Frechet(_)) => {
            let t = ty.clone();
            Ok(SlowlyVarying::numeric(format!("L2*[{ty}]"), move |u| t.l2_star(u).unwrap_or(f64::NAN)))
        }
        (_, Mda::Gumbel) => {
            let t = ty.clone();
            Ok(SlowlyVarying::numeric(format!("L3*[{ty}]"), move |u| t.l3_star(u).unwrap_or(f64::NAN)))
        }
    }
}

// `L₂` (Fréchet) or `L₃` (Gumbel) of the marginal of X
fn marginal_part(mx: &MarginalX) -> Result<SlowlyVarying> {
    match (mx, mx.mda()) {
        (MarginalX::Pareto { alpha }, _) => SlowlyVarying::constant(*alpha),
        (_, Mda::Frechet(_)) => {
            let m = mx.clone();
            Ok(SlowlyVarying::numeric(format!("L2[{mx}]"), move |u| m.l2(u).unwrap_or(f64::NAN)))
        }
        (_, Mda::Gumbel) => {
            let m = mx.clone();
            Ok(SlowlyVarying::numeric(format!("L3[{mx}]"), move |u| m.l3(u).unwrap_or(f64::NAN)))
        }
    }
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 || k >= n {
        return domain(format!("need 1 <= k_n < n, got k_n = {k}, n = {n}"));
    }
    Ok(())
}

/// `A_n = (n/k_n)^{e} L₂ⱼ(n/k_n)` with the case exponent `e`.
pub fn big_a(case: MdaCase, n: usize, k: usize, lfam: &LFamily) -> Result<f64> {
    check_k(n, k)?;
    let l2 = lfam
        .l2(case)
        .ok_or_else(|| Error::Config(format!("L-family has no L2{} component for {case}", case.number())))?;
    let e = case_exponent(case, lfam.alpha, lfam.alpha0)?;
    let u = n as f64 / k as f64;
    Ok(u.powf(e) * l2.eval(u)?)
}

/// `K_n = ∫_{1-k/n}^{1-1/n} fQ(y) / f_Y Q_Y(y) dy`, computed in `u = 1 - y`.
pub fn karamata_k(mx: &MarginalX, ty: &TargetMarginalY, n: usize, k: usize) -> Result<f64> {
    check_k(n, k)?;
    if k == 1 {
        return Ok(0.0);
    }
    let nf = n as f64;
    quad::tail_integral(|u| mx.density_quantile_upper(u) / ty.density_quantile_upper(u), 1.0 / nf, k as f64 / nf, 1e-9)
}

/// `μ_n = n ∫_{1-k/n}^1 Q_Y(y) dy`.
pub fn centering(ty: &TargetMarginalY, n: usize, k: usize) -> Result<f64> {
    if k == 0 || k > n {
        return domain(format!("need 1 <= k_n <= n, got k_n = {k}, n = {n}"));
    }
    Ok(n as f64 * ty.tail_mean(k as f64 / n as f64)?)
}

/// [`centering`] computed by quadrature regardless of closed forms.
pub fn centering_numeric(ty: &TargetMarginalY, n: usize, k: usize) -> Result<f64> {
    if k == 0 || k > n {
        return domain(format!("need 1 <= k_n <= n, got k_n = {k}, n = {n}"));
    }
    let v = quad::tail_integral(|u| ty.quantile_upper(u), 0.0, k as f64 / n as f64, 1e-10)?;
    Ok(n as f64 * v)
}

/// `a_n = (n/k_n)^{1/2 - 1/α} n^{-1/2}`, the normalization of the top-`k_n` sum of i.i.d. Pareto(α) data.
pub fn iid_scale(n: usize, k: usize, alpha: f64) -> Result<f64> {
    if !(alpha > 2.0) {
        return domain(format!("i.i.d. scale needs alpha > 2, got {alpha}"));
    }
    check_k(n, k)?;
    let nf = n as f64;
    Ok((nf / k as f64).powf(0.5 - 1.0 / alpha) / nf.sqrt())
}

/// `(n/k_n) σ_{n,1}^{-1} / a_n`.
pub fn lrd_iid_ratio(n: usize, k: usize, sigma_n1: f64, alpha: f64) -> Result<f64> {
    Ok(n as f64 / k as f64 / sigma_n1 / iid_scale(n, k, alpha)?)
}

/// `(n/k_n)^{1/2 + 1/α}`: the ratio of `(n/k_n)` to the i.i.d. scale with
/// both partial-sum normalizations (`σ_{n,1}` and `n^{1/2}`) removed.
pub fn lrd_iid_contrast(n: usize, k: usize, alpha: f64) -> Result<f64> {
    let nf = n as f64;
    Ok(nf / k as f64 / nf.sqrt() / iid_scale(n, k, alpha)?)
}

/// `∫_0^1 fQ(y) / f_Y Q_Y(y) dy`; non-zero when `G` has power rank 1.
pub fn power_rank_integral(mx: &MarginalX, ty: &TargetMarginalY) -> Result<f64> {
    let upper = quad::tail_integral(|u| mx.density_quantile_upper(u) / ty.density_quantile_upper(u), 0.0, 0.5, 1e-9)?;
    let lower =
        quad::tail_integral(|y| mx.density_quantile(y).unwrap_or(f64::NAN) / ty.density_quantile(y), 0.0, 0.5, 1e-9)?;
    Ok(upper + lower)
}

/// `D_r = ∫_{1/2}^1 F^{(r)}(Q(y)) / f_Y Q_Y(y) dy`.
pub fn check_condition_dr(mx: &MarginalX, ty: &TargetMarginalY, r: usize) -> Result<f64> {
    if r == 0 {
        return domain("condition D_r needs r >= 1");
    }
    if !mx.is_analytic() {
        return Err(Error::Unsupported("D_r needs analytic derivatives of F".into()));
    }
    quad::tail_integral(
        |u| mx.cdf_derivative(r, mx.quantile_upper(u)).unwrap_or(f64::NAN) / ty.density_quantile_upper(u),
        0.0,
        0.5,
        1e-9,
    )
}

/// `k_n = ⌈n^ξ⌉`, guarded against rounding when `n^ξ` is an integer.
pub fn k_from_xi(n: usize, xi: f64) -> usize {
    let v = (n as f64).powf(xi);
    let r = v.round();
    if (v - r).abs() <= 1e-9 * r.max(1.0) {
        r as usize
    } else {
        v.ceil() as usize
    }
}

/// All deterministic constants of one experiment at sample size `n`.
#[derive(Debug, Clone)]
pub struct ScalingBundle {
    pub case: MdaCase,
    pub n: usize,
    pub k: usize,
    pub xi: f64,
    pub p: usize,
    pub sigma_n1: f64,
    pub a_n: f64,
    pub d_np: f64,
    pub mu_n: f64,
    pub lfam: LFamily,
    /// Hash of the generating configuration; paths must carry the same hash.
    pub spec_hash: u64,
}

impl ScalingBundle {
    /// Computes the bundle; `p` defaults to [`select_p`]. No feasibility check on `ξ` is made here.
    pub fn new(spec: &ModelSpec, n: usize, xi: f64, p: Option<usize>) -> Result<Self> {
        if !(xi > 0.0 && xi < 1.0) {
            return domain(format!("xi must lie in (0, 1), got {xi}"));
        }
        let k = k_from_xi(n, xi);
        if k < 2 || k >= n {
            return domain(format!("k_n = ceil(n^xi) = {k} must lie in [2, n - 1] (n = {n})"));
        }
        let beta = spec.coeffs.beta();
        let p = match p {
            Some(p) => p,
            None => select_p(beta)?,
        };
        let case = spec.case();
        let lfam = LFamily::from_marginals(&spec.x, &spec.y)?;
        Ok(Self {
            case,
            n,
            k,
            xi,
            p,
            sigma_n1: sigma_n1_exact(spec.coeffs.coeffs(), spec.innovations.variance(), n),
            a_n: big_a(case, n, k, &lfam)?,
            d_np: d_np(n, p, beta, spec.coeffs.l0())?,
            mu_n: centering(&spec.y, n, k)?,
            lfam,
            spec_hash: spec.hash(n),
        })
    }
}

/// Lower bound on `ξ` for a model.
pub fn spec_threshold(spec: &ModelSpec) -> Result<f64> {
    xi_threshold(spec.case(), spec.coeffs.beta(), tail_index(spec.x.mda()), tail_index(spec.y.mda()))
}

fn tail_index(mda: Mda) -> Option<f64> {
    match mda {
        Mda::Frechet(a) => Some(a),
        Mda::Gumbel => None,
    }
}

/// Checks `ξ` against the case's lower bound; returns the bound.
pub fn check_xi(spec: &ModelSpec, xi: f64) -> Result<f64> {
    let t = spec_threshold(spec)?;
    if !(xi > t && xi < 1.0) {
        return Err(Error::Infeasible(format!(
            "{}: xi = {xi} violates condition {}: need {t} < xi < 1",
            spec.case(),
            spec.case().condition_label()
        )));
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn one() -> SlowlyVarying {
        SlowlyVarying::constant(1.0).unwrap()
    }

    #[test]
    fn select_p_examples() {
        assert_eq!(select_p(0.8).unwrap(), 1);
        assert_eq!(select_p(0.75).unwrap(), 2);
        assert_eq!(select_p(0.6).unwrap(), 5);
    }

    #[test]
    fn sigma_examples() {
        assert_relative_eq!(
            sigma_np_asymptotic(10_000, 1, 0.8, &one()).unwrap(),
            10f64.powf(2.8),
            max_relative = 1e-12
        );
        assert!(matches!(sigma_np_asymptotic(10_000, 5, 0.8, &one()), Err(Error::Domain(_))));
        assert_relative_eq!(
            sigma_ratio_asymptotic(10_000, 2, 0.8, &one()).unwrap(),
            10f64.powf(-1.2),
            max_relative = 1e-12
        );
    }

    #[test]
    fn d_np_examples() {
        let d = d_np(10_000, 1, 0.8, &one()).unwrap();
        assert!((d - 74.2).abs() < 0.05, "{d}");
        // the log factors dominate n^{-0.2} until n is about 2^19
        let d = |n: usize| d_np(n, 1, 0.8, &one()).unwrap();
        for e in 10..=17 {
            assert!(d(1 << e) / d(2 << e) < 1.0, "n = 2^{e}");
        }
        for e in 22..=40 {
            assert!(d(2 << e) < d(1 << e), "n = 2^{e}");
        }
        assert!(d_np(15, 1, 0.8, &one()).is_err());
    }

    #[test]
    fn xi_threshold_examples() {
        assert_relative_eq!(
            xi_threshold(MdaCase::Case1, 0.7, Some(4.0), Some(5.0)).unwrap(),
            0.95 / 1.05,
            max_relative = 1e-14
        );
        assert_eq!(xi_threshold(MdaCase::Case4, 0.8, None, None).unwrap(), 0.8);
        assert_relative_eq!(xi_threshold(MdaCase::Case3, 0.8, None, Some(6.0)).unwrap(), 0.96, max_relative = 1e-14);
        assert!(matches!(xi_threshold(MdaCase::Case3, 0.8, None, Some(2.0)), Err(Error::Infeasible(_))));
        assert!(matches!(xi_threshold(MdaCase::Case2, 0.8, Some(3.0), None), Err(Error::Infeasible(_))));
        assert!(matches!(xi_threshold(MdaCase::Case1, 0.8, Some(4.0), None), Err(Error::Config(_))));
    }

    #[test]
    fn big_a_examples() {
        let fam = LFamily::for_case(MdaCase::Case4, one(), one(), None, None).unwrap();
        assert_relative_eq!(big_a(MdaCase::Case4, 1000, 100, &fam).unwrap(), 10.0, max_relative = 1e-14);
        let x = MarginalX::pareto(4.0).unwrap();
        let fam = LFamily::from_marginals(&x, &TargetMarginalY::Exponential).unwrap();
        let a = big_a(MdaCase::Case2, 10_000, 100, &fam).unwrap();
        assert_relative_eq!(a, 100f64.powf(1.25) * 0.3125, max_relative = 1e-14);
        assert!(matches!(big_a(MdaCase::Case1, 10_000, 100, &fam), Err(Error::Config(_))));
    }

    #[test]
    fn karamata_examples() {
        let x = MarginalX::pareto(4.0).unwrap();
        let y = TargetMarginalY::Exponential;
        let k = karamata_k(&x, &y, 10_000, 100).unwrap();
        let closed = 3.2 * (0.01f64.powf(1.25) - 1e-4f64.powf(1.25));
        assert_relative_eq!(k, closed, max_relative = 1e-8);
        let fam = LFamily::from_marginals(&x, &y).unwrap();
        let ak = big_a(MdaCase::Case2, 10_000, 100, &fam).unwrap() * k;
        assert!((ak - 0.9969).abs() < 1e-4, "{ak}");
        let g = MarginalX::gaussian(1.0).unwrap();
        let id = TargetMarginalY::same_as(&g);
        assert_relative_eq!(karamata_k(&g, &id, 1000, 50).unwrap(), 49.0 / 1000.0, max_relative = 1e-9);
    }

    #[test]
    fn centering_examples() {
        let p2 = TargetMarginalY::pareto(2.0).unwrap();
        assert_relative_eq!(centering(&p2, 100, 10).unwrap(), 200.0 * 0.1f64.sqrt(), max_relative = 1e-12);
        let e = TargetMarginalY::Exponential;
        assert_relative_eq!(centering(&e, 100, 10).unwrap(), 10.0 * (1.0 - 0.1f64.ln()), max_relative = 1e-12);
        assert_relative_eq!(centering(&e, 100, 100).unwrap(), 100.0, max_relative = 1e-14);
        for ty in [p2, e, TargetMarginalY::pareto(6.0).unwrap()] {
            let a = centering(&ty, 1 << 15, 11586).unwrap();
            let b = centering_numeric(&ty, 1 << 15, 11586).unwrap();
            assert_relative_eq!(a, b, max_relative = 1e-6);
        }
    }

    #[test]
    fn iid_scale_examples() {
        assert_relative_eq!(iid_scale(10_000, 100, 4.0).unwrap(), 100f64.powf(0.25) * 1e-2, max_relative = 1e-14);
        assert!(iid_scale(10_000, 100, 2.0).is_err());
        let big = iid_scale(10_000, 100, 1e12).unwrap();
        assert_relative_eq!(big, 0.1, max_relative = 1e-9);
    }

    #[test]
    fn power_rank_identity_is_one() {
        let g = MarginalX::gaussian(1.0).unwrap();
        let v = power_rank_integral(&g, &TargetMarginalY::same_as(&g)).unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-8);
        assert!(power_rank_integral(&g, &TargetMarginalY::Exponential).unwrap() > 0.0);
    }

    #[test]
    fn condition_dr_checks() {
        let g = MarginalX::gaussian(1.0).unwrap();
        assert!(check_condition_dr(&g, &TargetMarginalY::Exponential, 1).unwrap().is_finite());
        assert!(check_condition_dr(&g, &TargetMarginalY::pareto(4.0).unwrap(), 1).unwrap().is_finite());
        assert!(matches!(check_condition_dr(&g, &TargetMarginalY::Exponential, 0), Err(Error::Domain(_))));
    }

    #[test]
    fn k_from_xi_rounding() {
        assert_eq!(k_from_xi(100, 0.5), 10);
        assert_eq!(k_from_xi(10_000, 0.5), 100);
        assert_eq!(k_from_xi(1 << 15, 0.9), 11586);
    }
}
