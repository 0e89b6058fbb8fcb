mod common;

use approx::assert_relative_eq;
use extremesum::estats::{
    decompose_i, multilinear_y, reduction_sup, standardize, top_k_sum, trimmed_sum, trimmed_sum_stair, z_statistic,
    ProcessFrame,
};
use extremesum::model::{CoefficientModel, InnovationDist, MarginalX, SlowlyVarying, TargetMarginalY};
use extremesum::scaling::ScalingBundle;
use extremesum::simulate::{ModelSpec, PathPair, Simulator};
use proptest::prelude::*;

fn reference_spec(beta: f64) -> ModelSpec {
    let coeffs = CoefficientModel::with_tolerance(beta, SlowlyVarying::constant(1.0).unwrap(), 1e-3).unwrap();
    let dist = InnovationDist::gaussian(1.0).unwrap();
    let mx = MarginalX::from_filter(&coeffs, &dist).unwrap();
    ModelSpec::new(coeffs, dist, mx, TargetMarginalY::Exponential).unwrap()
}

#[test]
fn top_k_examples() {
    assert_eq!(top_k_sum(&[3.0, 1.0, 2.0], 2).unwrap(), 5.0);
    assert_eq!(top_k_sum(&[3.0, 1.0, 2.0], 3).unwrap(), 6.0);
    assert!(top_k_sum(&[3.0, 1.0, 2.0], 4).is_err());
    assert!(top_k_sum(&[3.0, 1.0, 2.0], 0).is_err());
}

#[test]
fn trimmed_examples() {
    assert_eq!(trimmed_sum(&[3.0, 1.0, 2.0], 1, 1).unwrap(), 2.0);
    assert!(trimmed_sum(&[3.0, 1.0, 2.0], 2, 1).is_err());
    assert_relative_eq!(trimmed_sum_stair(&[3.0, 1.0, 2.0], 1, 1).unwrap(), 2.0, epsilon = 1e-14);
}

#[test]
fn alpha_n_examples() {
    let f = ProcessFrame::from_uniforms(&[0.2, 0.6], 1.0).unwrap();
    assert_relative_eq!(f.alpha_n(0.5).unwrap(), 0.0, epsilon = 1e-15);
    assert_relative_eq!(f.alpha_n(0.7).unwrap(), 0.6, epsilon = 1e-15);
    assert!(f.alpha_n(0.0).is_err());
    assert!(ProcessFrame::from_uniforms(&[0.2, 1.0], 1.0).is_err());
}

#[test]
fn alpha_tail_sup_matches_a_dense_scan() {
    let u: Vec<f64> = common::fixture(500, 4).iter().map(|v| 0.5 + 0.4999 * v).collect();
    let f = ProcessFrame::from_uniforms(&u, 1.0).unwrap();
    let k = 50;
    let lo = 1.0 - k as f64 / 500.0;
    let mut scan: f64 = 0.0;
    for i in 1..200_000 {
        let y = lo + (1.0 - lo) * i as f64 / 200_000.0;
        let count = u.iter().filter(|&&t| t <= y).count() as f64;
        scan = scan.max((count - 500.0 * y).abs());
    }
    let sup = f.alpha_tail_sup(k).unwrap();
    assert!(sup >= scan - 1e-9 && sup <= scan + 500.0 * (1.0 - lo) / 200_000.0 + 1e-9, "{sup} vs {scan}");
}

#[test]
fn sample_quantile_is_left_continuous() {
    let g = MarginalX::gaussian(1.0).unwrap();
    let x = [0.4, -1.0, 2.0, 0.1];
    let f = ProcessFrame::new(&x, &g, 1.0).unwrap();
    assert_eq!(f.sample_quantile(0.25).unwrap(), -1.0);
    assert_eq!(f.sample_quantile(0.2500001).unwrap(), 0.1);
    assert_eq!(f.sample_quantile(1.0).unwrap(), 2.0);
    let one = ProcessFrame::new(&[0.7], &g, 1.0).unwrap();
    assert_eq!(one.sample_quantile(0.3).unwrap(), 0.7);
}

#[test]
fn quantile_process_uses_left_continuous_ranks() {
    // q_n is n (Q − Q_n) / σ with Q_n read off the sorted sample at rank ⌈ny⌉
    let g = MarginalX::gaussian(1.0).unwrap();
    let x: Vec<f64> = common::fixture(2000, 9).iter().map(|v| 3.0 * v).collect();
    let f = ProcessFrame::new(&x, &g, 1.0).unwrap();
    let s = f.sorted();
    for i in 1..100 {
        let y = i as f64 / 100.0;
        let q = g.quantile(y).unwrap();
        let qn = f.sample_quantile(y).unwrap();
        let qp = f.quantile_process(y).unwrap();
        assert_relative_eq!(qp, 2000.0 * (q - qn), max_relative = 1e-12, epsilon = 1e-9);
        assert_eq!(qn, s[((y * 2000.0).ceil() as usize).clamp(1, 2000) - 1]);
    }
}

#[test]
fn multilinear_examples() {
    assert_relative_eq!(multilinear_y(&[2.0, 1.0], &[1.0, 0.5], 2).unwrap(), 1.0, epsilon = 1e-12);
    assert!(multilinear_y(&[1.0], &[1.0, 0.5], 1).is_err());
}

#[test]
fn multilinear_matches_enumeration_exhaustively() {
    for n in 1..=4 {
        for m in 0..=4 {
            for r in 1..=3 {
                let c = common::fixture(m + 1, (100 * n + 10 * m + r) as u64);
                let eps = common::fixture(n + m, (7 * n + m) as u64);
                let fast = multilinear_y(&eps, &c, r).unwrap();
                let slow = common::brute_multilinear(&eps, &c, r);
                assert!((fast - slow).abs() <= 1e-10 * slow.abs().max(1.0), "n={n} M={m} r={r}: {fast} vs {slow}");
            }
        }
    }
}

/// `sup_t |Σ(1{x_i ≤ t} − Φ(t/s)) + φ(t/s)/s Σx_i|` over the sample jump points and a dense grid.
fn dense_reduction_p1(x: &[f64], s: f64) -> f64 {
    let mut xs = x.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let y1: f64 = x.iter().sum();
    let smooth = |t: f64| -n * common::taylor_norm_cdf(t / s) + common::norm_pdf(t / s) / s * y1;
    let mut sup: f64 = 0.0;
    for (j, &t) in xs.iter().enumerate() {
        sup = sup.max((j as f64 + smooth(t)).abs()).max(((j + 1) as f64 + smooth(t)).abs());
    }
    for i in 0..=40_000 {
        let t = -8.0 * s + 16.0 * s * i as f64 / 40_000.0;
        let count = xs.partition_point(|&v| v <= t) as f64;
        sup = sup.max((count + smooth(t)).abs());
    }
    sup
}

#[test]
fn reduction_sup_matches_dense_oracle() {
    let s = 1.7;
    let g = MarginalX::gaussian(s).unwrap();
    let x: Vec<f64> = common::fixture(300, 21).iter().map(|v| 2.5 * v).collect();
    let got = reduction_sup(&x, &[], &[1.0], 1, &g, 3.0).unwrap();
    let want = dense_reduction_p1(&x, s) / 3.0;
    assert!((got.value / want - 1.0).abs() < 1e-3, "{} vs {want}", got.value);
}

#[test]
fn reduction_sup_rejects_high_order_and_empirical() {
    let g = MarginalX::gaussian(1.0).unwrap();
    assert!(reduction_sup(&[0.1], &[0.1], &[1.0], 3, &g, 1.0).is_err());
    assert!(reduction_sup(&[], &[], &[1.0], 1, &g, 1.0).is_err());
}

#[test]
fn standardize_example() {
    assert_relative_eq!(standardize(70.0, 10.0, 2.0, 63.2456), 33.772, epsilon = 1e-12);
}

#[test]
fn decomposition_terms_match_direct_formulas() {
    let spec = reference_spec(0.8);
    let sd = spec.coeffs.sum_squares().sqrt();
    let n = 1 << 12;
    let bundle = ScalingBundle::new(&spec, n, 0.9, None).unwrap();
    let sim = Simulator::new(spec.clone(), n).unwrap();
    for seed in 0..4 {
        let path = sim.path(seed);
        let frame = ProcessFrame::from_path(&path, &spec.x, bundle.sigma_n1).unwrap();
        let d = decompose_i(&frame, &spec.y, &bundle).unwrap();
        let z = z_statistic(&path, &bundle).unwrap();
        assert_eq!(d.z, z);
        assert!(d.residual < 1e-10, "residual {}", d.residual);

        // independent route: tail probabilities from the oracle, closed-form exponential quantities
        let (nf, k) = (n as f64, bundle.k);
        let ua = k as f64 / nf;
        let qa = -ua.ln();
        let scale = bundle.a_n / bundle.sigma_n1;
        let mut pairs: Vec<(f64, f64)> =
            path.x.iter().zip(&path.y).map(|(&x, &y)| (common::upper_tail(x / sd), y)).collect();
        pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let below: Vec<f64> = pairs.iter().filter(|p| p.0 < ua).map(|p| p.1).collect();
        let top: f64 = pairs[..k].iter().map(|p| p.1).sum();
        let i3 = scale * (top - below.iter().sum::<f64>() - (k as f64 - below.len() as f64) * qa);
        let i12 = scale * (below.iter().map(|y| y - qa).sum::<f64>() - nf * (ua * (1.0 - ua.ln()) - ua * qa));
        let tol = 1e-9 * (d.i1.abs() + d.i2.abs() + d.i3.abs());
        assert!((d.i3 - i3).abs() <= tol, "I3 {} vs {i3}", d.i3);
        assert!((d.i1 + d.i2 - i12).abs() <= tol, "I1+I2 {} vs {i12}", d.i1 + d.i2);
    }
}

#[test]
fn decomposition_needs_subordinated_values() {
    let spec = reference_spec(0.8);
    let bundle = ScalingBundle::new(&spec, 1024, 0.9, None).unwrap();
    let path = Simulator::new(spec.clone(), 1024).unwrap().path(1);
    let frame = ProcessFrame::new(&path.x, &spec.x, 1.0).unwrap();
    assert!(decompose_i(&frame, &spec.y, &bundle).is_err());
}

#[test]
fn z_statistic_rejects_foreign_paths() {
    let spec = reference_spec(0.8);
    let bundle = ScalingBundle::new(&spec, 1024, 0.9, None).unwrap();
    let other = Simulator::new(reference_spec(0.75), 1024).unwrap().path(1);
    assert!(z_statistic(&other, &bundle).is_err());
}

proptest! {
    #[test]
    fn top_k_matches_full_sort(len in 1usize..300, seed in any::<u64>(), frac in 0.0f64..1.0) {
        let v = common::fixture(len, seed);
        let k = 1 + ((len - 1) as f64 * frac) as usize;
        let got = top_k_sum(&v, k).unwrap();
        let want = common::sort_top_k(&v, k);
        prop_assert!((got - want).abs() <= 1e-12 * (k as f64));
    }

    #[test]
    fn top_plus_trimmed_is_total(len in 2usize..300, seed in any::<u64>(), frac in 0.0f64..1.0) {
        let v = common::fixture(len, seed);
        let k = 1 + ((len - 2) as f64 * frac) as usize;
        let total: f64 = v.iter().sum();
        let split = top_k_sum(&v, k).unwrap() + trimmed_sum(&v, 0, k).unwrap();
        prop_assert!((split - total).abs() <= 1e-12 * len as f64);
    }

    #[test]
    fn trimmed_formulas_agree(len in 3usize..300, seed in any::<u64>(), a in 0.0f64..0.5, b in 0.0f64..0.5) {
        let v = common::fixture(len, seed);
        let m = (a * len as f64) as usize;
        let k = ((b * len as f64) as usize).min(len - m - 1);
        let order = trimmed_sum(&v, m, k).unwrap();
        let stair = trimmed_sum_stair(&v, m, k).unwrap();
        prop_assert!((order - stair).abs() <= 1e-12 * len as f64);
    }

    #[test]
    fn z_is_permutation_invariant(seed in any::<u64>(), shuffle in any::<u64>()) {
        let spec = reference_spec(0.8);
        let n = 512;
        let bundle = ScalingBundle::new(&spec, n, 0.9, None).unwrap();
        let path = Simulator::new(spec, n).unwrap().path(seed);
        let keys = common::fixture(n, shuffle);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.sort_by(|&a, &b| keys[a].partial_cmp(&keys[b]).unwrap());
        let permuted = PathPair {
            x: idx.iter().map(|&i| path.x[i]).collect(),
            y: idx.iter().map(|&i| path.y[i]).collect(),
            ..path.clone()
        };
        let (a, b) = (z_statistic(&path, &bundle).unwrap(), z_statistic(&permuted, &bundle).unwrap());
        prop_assert_eq!(a.to_bits(), b.to_bits());
    }
}
