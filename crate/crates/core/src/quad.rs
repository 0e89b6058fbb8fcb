//! Adaptive Gauss–Kronrod quadrature and tail integrals on `(0, u]`.
//!
//! Integrals of the form `∫ g(u) du` near `u = 0` (the upper end `y → 1` in
//! quantile coordinates, with `u = 1 - y`) are computed after the
//! substitution `u = e^t`. Integrable power singularities `u^{-γ}`, `γ < 1`,
//! become exponentially decaying integrands in `t`, and the range below
//! [`SINGULAR_SPLIT`] is treated as its own piece so that its contribution
//! can be checked for convergence.

use crate::error::{Error, Result};

/// Default absolute tolerance.
pub const ABS_TOL: f64 = 1e-8;
/// Default relative tolerance.
pub const REL_TOL: f64 = 1e-6;
/// Split point between the regular range and the singular end piece.
pub const SINGULAR_SPLIT: f64 = 1e-12;
/// Smallest `u` ever sampled by [`tail_integral`].
pub const TAIL_FLOOR: f64 = 1e-300;

const MAX_SEGMENTS: usize = 2000;

// 15-point Kronrod nodes on [-1, 1] (non-negative half) and weights, with the
// embedded 7-point Gauss weights.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_728,
];
const WG: [f64; 4] =
    [0.129_484_966_168_869_7, 0.279_705_391_489_276_7, 0.381_830_050_505_118_9, 0.417_959_183_673_469_4];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature {
    pub value: f64,
    pub error: f64,
}

fn kronrod15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut resk = fc * WGK[7];
    let mut resg = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        resk += WGK[j] * s;
        if j % 2 == 1 {
            resg += WG[j / 2] * s;
        }
    }
    (resk * h, ((resk - resg) * h).abs())
}

/// Adaptive G7K15 quadrature of `f` over the finite interval `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, abs_tol: f64, rel_tol: f64) -> Result<Quadrature> {
    if a == b {
        return Ok(Quadrature { value: 0.0, error: 0.0 });
    }
    if !(a.is_finite() && b.is_finite()) {
        return Err(Error::Domain(format!("integration limits must be finite: [{a}, {b}]")));
    }
    let (v, e) = kronrod15(&mut f, a, b);
    let mut segments = vec![(a, b, v, e)];
    let mut total = v;
    let mut err = e;
    while err > abs_tol.max(rel_tol * total.abs()) {
        if !total.is_finite() {
            return Err(Error::Numeric("non-finite integrand".into()));
        }
        if segments.len() >= MAX_SEGMENTS {
            return Err(Error::Numeric(format!(
                "quadrature did not converge on [{a}, {b}]: estimate {total}, error {err}"
            )));
        }
        // bisect the segment with the largest error estimate
        let (idx, _) =
            segments.iter().enumerate().max_by(|x, y| x.1 .3.total_cmp(&y.1 .3)).expect("segments are never empty");
        let (sa, sb, sv, se) = segments.swap_remove(idx);
        let mid = 0.5 * (sa + sb);
        if mid <= sa.min(sb) || mid >= sa.max(sb) {
            // interval exhausted at machine precision; accept what we have
            segments.push((sa, sb, sv, 0.0));
            err -= se;
            continue;
        }
        let (lv, le) = kronrod15(&mut f, sa, mid);
        let (rv, re) = kronrod15(&mut f, mid, sb);
        total += lv + rv - sv;
        err += le + re - se;
        segments.push((sa, mid, lv, le));
        segments.push((mid, sb, rv, re));
    }
    if !total.is_finite() {
        return Err(Error::Numeric("non-finite integrand".into()));
    }
    Ok(Quadrature { value: total, error: err.max(0.0) })
}

/// `∫_lo^hi g(u) du` for `0 ≤ lo < hi`, computed in the variable `t = ln u`.
///
/// When `lo` is zero (or below [`TAIL_FLOOR`]) the range `(0, min(hi, SINGULAR_SPLIT)]`
/// is integrated decade by decade until contributions vanish; if they have not
/// vanished by [`TAIL_FLOOR`] the integral is reported as divergent.
pub fn tail_integral<G: FnMut(f64) -> f64>(mut g: G, lo: f64, hi: f64, rel_tol: f64) -> Result<f64> {
    if !(lo >= 0.0 && hi > lo) {
        return Err(Error::Domain(format!("tail integral needs 0 <= lo < hi, got [{lo}, {hi}]")));
    }
    let mut h = |t: f64| {
        let u = t.exp();
        g(u) * u
    };
    let lo_eff = lo.max(TAIL_FLOOR);
    let split = SINGULAR_SPLIT.max(lo_eff).min(hi);
    let mut total = 0.0;
    // regular part: decades of width ln(10)
    let decade = std::f64::consts::LN_10;
    let mut t_hi = hi.ln();
    let t_split = split.ln();
    while t_hi > t_split {
        let t_lo = (t_hi - decade).max(t_split);
        total += integrate(&mut h, t_lo, t_hi, 1e-300, rel_tol * 1e-2)?.value;
        t_hi = t_lo;
    }
    if lo_eff >= split {
        return Ok(total);
    }
    // singular end piece, blocks of 4 decades
    let t_floor = lo_eff.ln();
    let mut quiet = 0;
    while t_hi > t_floor {
        let mut t_lo = t_hi - 4.0 * decade;
        if t_lo - t_floor < decade {
            t_lo = t_floor;
        }
        let piece = integrate(&mut h, t_lo, t_hi, 1e-300, rel_tol * 1e-2)?.value;
        total += piece;
        t_hi = t_lo;
        if lo > 0.0 {
            continue;
        }
        if piece.abs() <= 1e-3 * rel_tol * total.abs() || (piece == 0.0 && total == 0.0) {
            quiet += 1;
            if quiet >= 2 {
                return Ok(total);
            }
        } else {
            quiet = 0;
        }
    }
    if lo == 0.0 && quiet == 0 {
        return Err(Error::Numeric(format!(
            "integral over (0, {hi}] does not converge at the singular end (partial value {total})"
        )));
    }
    Ok(total)
}
