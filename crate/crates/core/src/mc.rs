//! Reproducible parallel Monte Carlo for the standardized extreme sum.
//!
//! Replicate `r` is driven by [`derive_seed`]`(master_seed, r)` and results
//! are collected by replicate index, so every output is independent of the
//! number of worker threads and of completion order.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::estats::{decompose_i, reduction_sup, z_statistic, ProcessFrame};
use crate::model::Mda;
use crate::rng::derive_seed;
use crate::scaling::{check_condition_dr, check_xi, iid_scale, lrd_iid_contrast, power_rank_integral, ScalingBundle};
use crate::simulate::{ModelSpec, Simulator};
use crate::special::{norm_cdf, norm_quantile};

/// Model, extreme fraction and reduction order of an experiment.
#[derive(Debug, Clone)]
pub struct McSetup {
    pub spec: ModelSpec,
    pub xi: f64,
    /// Reduction order; defaults to the smallest admissible one.
    pub p: Option<usize>,
    /// Tail index of the i.i.d. reference used in the contrast columns when `X` is not Fréchet.
    pub iid_alpha: f64,
}

/// Hypothesis checks run once before any simulation.
#[derive(Debug, Clone, PartialEq)]
pub struct Feasibility {
    pub xi_threshold: f64,
    /// `∫_0^1 fQ / f_Y Q_Y`.
    pub power_rank: f64,
    /// `D_r` for `r = 1..=p`; empty when `F` has no analytic derivatives.
    pub d_r: Vec<f64>,
}

/// Checks the lower bound on `ξ`, the power-rank integral and `D_1, …, D_p`.
pub fn check_feasibility(spec: &ModelSpec, xi: f64, p: usize) -> Result<Feasibility> {
    let xi_threshold = check_xi(spec, xi)?;
    let power_rank =
        power_rank_integral(&spec.x, &spec.y).map_err(|e| Error::Infeasible(format!("power-rank integral: {e}")))?;
    if !(power_rank.is_finite() && power_rank != 0.0) {
        return Err(Error::Infeasible(format!("power-rank integral is {power_rank}; G must have power rank 1")));
    }
    let mut d_r = Vec::new();
    if spec.x.is_analytic() {
        for r in 1..=p {
            let d = check_condition_dr(&spec.x, &spec.y, r)
                .map_err(|e| Error::Infeasible(format!("condition D_{r} is not finite: {e}")))?;
            d_r.push(d);
        }
    }
    Ok(Feasibility { xi_threshold, power_rank, d_r })
}

/// Per-replicate output.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateResult {
    pub replicate: u64,
    pub seed: u64,
    pub z: f64,
    pub i1: f64,
    pub i2: f64,
    pub i3: f64,
    pub u_ratio: f64,
    /// Relative residual of `I₁ + I₂ + I₃ = Z_n`.
    pub residual: f64,
    /// `sup |S_{n,p}| / σ_{n,1}`; NaN when unavailable.
    pub reduction_sup: f64,
    pub clamp_events: usize,
}

/// Aggregates over replicates.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub replicates: usize,
    pub mean: f64,
    pub variance: f64,
    pub ks_d: f64,
    pub ks_p: f64,
    /// `(Φ^{-1}((i - 1/2)/R), z_(i))`.
    pub qq: Vec<(f64, f64)>,
    pub median_abs_i1: f64,
    pub median_abs_i2: f64,
    pub median_abs_i3: f64,
    pub median_u_ratio_dev: f64,
    pub median_reduction_sup: f64,
    pub max_residual: f64,
    pub clamp_events: usize,
}

/// Output of [`run_replicates`].
#[derive(Debug, Clone, PartialEq)]
pub struct McRunResult {
    pub n: usize,
    pub k: usize,
    pub master_seed: u64,
    pub description: String,
    pub feasibility: Feasibility,
    pub replicates: Vec<ReplicateResult>,
    pub summary: Summary,
}

impl McRunResult {
    pub fn z_samples(&self) -> Vec<f64> {
        self.replicates.iter().map(|r| r.z).collect()
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Runs `replicates` independent replicates at sample size `n`. `threads = 0` uses all cores.
pub fn run_replicates(
    setup: &McSetup,
    n: usize,
    replicates: usize,
    master_seed: u64,
    threads: usize,
) -> Result<McRunResult> {
    if replicates == 0 {
        return Err(Error::Domain("at least one replicate is required".into()));
    }
    let bundle = ScalingBundle::new(&setup.spec, n, setup.xi, setup.p)?;
    let feasibility = check_feasibility(&setup.spec, setup.xi, bundle.p)?;
    let sim = Simulator::new(setup.spec.clone(), n)?;
    let results: Result<Vec<ReplicateResult>> = pool(threads)?.install(|| {
        (0..replicates as u64)
            .into_par_iter()
            .map(|r| replicate(&sim, &bundle, r, derive_seed(master_seed, r)))
            .collect()
    });
    let replicates = results?;
    let summary = summarize(&replicates);
    Ok(McRunResult {
        n,
        k: bundle.k,
        master_seed,
        description: setup.spec.describe(n),
        feasibility,
        replicates,
        summary,
    })
}

fn replicate(sim: &Simulator, bundle: &ScalingBundle, r: u64, seed: u64) -> Result<ReplicateResult> {
    let spec = sim.spec();
    let eps = sim.innovations(seed);
    let path = sim.path_from_innovations(&eps, seed);
    let z = z_statistic(&path, bundle)?;
    let (mut i1, mut i2, mut i3, mut u_ratio, mut residual) = (f64::NAN, f64::NAN, f64::NAN, f64::NAN, f64::NAN);
    let mut reduction = f64::NAN;
    if spec.x.is_analytic() {
        let frame = ProcessFrame::from_path(&path, &spec.x, bundle.sigma_n1)?;
        let d = decompose_i(&frame, &spec.y, bundle)?;
        (i1, i2, i3, u_ratio) = (d.i1, d.i2, d.i3, d.u_ratio);
        residual = (d.i1 + d.i2 + d.i3 - z).abs() / z.abs().max(d.i1.abs() + d.i2.abs() + d.i3.abs());
        if bundle.p <= 2 {
            reduction = reduction_sup(&path.x, &eps, spec.coeffs.coeffs(), bundle.p, &spec.x, bundle.sigma_n1)?.value;
        }
    }
    Ok(ReplicateResult {
        replicate: r,
        seed,
        z,
        i1,
        i2,
        i3,
        u_ratio,
        residual,
        reduction_sup: reduction,
        clamp_events: path.clamp_events,
    })
}

/// Median of the finite entries (NaN when there are none).
pub fn median(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut v: Vec<f64> = values.into_iter().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_unstable_by(f64::total_cmp);
    let m = v.len();
    if m % 2 == 1 {
        v[m / 2]
    } else {
        0.5 * (v[m / 2 - 1] + v[m / 2])
    }
}

/// Summary statistics; a pure function of the set of replicate records,
/// whatever order they arrive in.
pub fn summarize(reps: &[ReplicateResult]) -> Summary {
    let mut ordered = reps.to_vec();
    ordered.sort_by_key(|r| r.replicate);
    let reps = &ordered[..];
    let z: Vec<f64> = reps.iter().map(|r| r.z).collect();
    let m = z.len() as f64;
    let mean = z.iter().sum::<f64>() / m;
    let variance = if z.len() > 1 { z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0) } else { f64::NAN };
    let ks_d = ks_distance(&z);
    let ks_p = kolmogorov_sf(m.sqrt() * ks_d);
    let mut sorted = z.clone();
    sorted.sort_unstable_by(f64::total_cmp);
    let qq = sorted.iter().enumerate().map(|(i, &v)| (norm_quantile((i as f64 + 0.5) / m), v)).collect();
    Summary {
        replicates: z.len(),
        mean,
        variance,
        ks_d,
        ks_p,
        qq,
        median_abs_i1: median(reps.iter().map(|r| r.i1.abs())),
        median_abs_i2: median(reps.iter().map(|r| r.i2.abs())),
        median_abs_i3: median(reps.iter().map(|r| r.i3.abs())),
        median_u_ratio_dev: median(reps.iter().map(|r| (r.u_ratio - 1.0).abs())),
        median_reduction_sup: median(reps.iter().map(|r| r.reduction_sup)),
        max_residual: reps.iter().map(|r| r.residual).filter(|v| v.is_finite()).fold(0.0, f64::max),
        clamp_events: reps.iter().map(|r| r.clamp_events).sum(),
    }
}

/// Survival function of the Kolmogorov distribution, `P(K > t)`.
pub fn kolmogorov_sf(t: f64) -> f64 {
    if t <= 0.0 {
        return 1.0;
    }
    if t < 1.0 {
        // P(K ≤ t) = √(2π)/t Σ_{j≥1} exp(-(2j-1)² π² / (8t²))
        let c = std::f64::consts::PI.powi(2) / (8.0 * t * t);
        let s: f64 = (1..=20).map(|j| (-((2 * j - 1) as f64).powi(2) * c).exp()).sum();
        return (1.0 - (2.0 * std::f64::consts::PI).sqrt() / t * s).clamp(0.0, 1.0);
    }
    let s: f64 = (1..=100)
        .map(|j| {
            let term = (-2.0 * (j * j) as f64 * t * t).exp();
            if j % 2 == 1 {
                term
            } else {
                -term
            }
        })
        .sum();
    (2.0 * s).clamp(0.0, 1.0)
}

/// One-sample Kolmogorov–Smirnov test against `N(0, 1)`: `(D, p)` with `p` from
/// the asymptotic distribution of `√m D`.
pub fn ks_test(sample: &[f64]) -> Result<(f64, f64)> {
    let m = sample.len();
    if m < 8 {
        return Err(Error::Size(format!("KS test needs at least 8 observations, got {m}")));
    }
    let d = ks_distance(sample);
    Ok((d, kolmogorov_sf((m as f64).sqrt() * d)))
}

/// `sup |F_m - Φ|` for any sample size; NaN for an empty sample.
pub fn ks_distance(sample: &[f64]) -> f64 {
    if sample.is_empty() {
        return f64::NAN;
    }
    let mut v = sample.to_vec();
    v.sort_unstable_by(f64::total_cmp);
    let mf = v.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &x) in v.iter().enumerate() {
        let f = norm_cdf(x);
        d = d.max((i + 1) as f64 / mf - f).max(f - i as f64 / mf);
    }
    d
}

/// One row of a convergence study.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: usize,
    pub k: usize,
    pub ks_d: f64,
    pub ks_p: f64,
    pub variance: f64,
    pub median_abs_i2: f64,
    pub median_abs_i3: f64,
    pub median_u_ratio_dev: f64,
    pub median_reduction_sup: f64,
    /// `(n/k_n) σ_{n,1}^{-1} / a_n`.
    pub lrd_iid_ratio: f64,
    /// `(n/k_n)^{1/2 + 1/α}`.
    pub lrd_iid_contrast: f64,
}

/// Result of [`convergence_study`].
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub rows: Vec<ConvergenceRow>,
    /// Non-increasing trend (one inversion allowed) of each diagnostic column,
    /// with `|variance - 1|` standing in for the variance.
    pub trends: Vec<(&'static str, bool)>,
}

/// True when `values` is non-increasing apart from at most `allowed` inversions.
pub fn non_increasing_with_slack(values: &[f64], allowed: usize) -> bool {
    values.windows(2).filter(|w| w[1] > w[0]).count() <= allowed
}

/// Runs [`run_replicates`] along an increasing grid of sample sizes with the same master seed.
pub fn convergence_study(
    setup: &McSetup,
    n_grid: &[usize],
    replicates: usize,
    master_seed: u64,
    threads: usize,
) -> Result<ConvergenceStudy> {
    if n_grid.is_empty() || n_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain("n_grid must be non-empty and strictly increasing".into()));
    }
    let alpha = match setup.spec.x.mda() {
        Mda::Frechet(a) => a,
        Mda::Gumbel => setup.iid_alpha,
    };
    // reject the whole grid before simulating anything
    for &n in n_grid {
        let b = ScalingBundle::new(&setup.spec, n, setup.xi, setup.p)?;
        check_feasibility(&setup.spec, setup.xi, b.p)?;
    }
    let mut rows = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let run = run_replicates(setup, n, replicates, master_seed, threads)?;
        let bundle = ScalingBundle::new(&setup.spec, n, setup.xi, setup.p)?;
        let s = &run.summary;
        rows.push(ConvergenceRow {
            n,
            k: run.k,
            ks_d: s.ks_d,
            ks_p: s.ks_p,
            variance: s.variance,
            median_abs_i2: s.median_abs_i2,
            median_abs_i3: s.median_abs_i3,
            median_u_ratio_dev: s.median_u_ratio_dev,
            median_reduction_sup: s.median_reduction_sup,
            lrd_iid_ratio: n as f64 / run.k as f64 / bundle.sigma_n1 / iid_scale(n, run.k, alpha)?,
            lrd_iid_contrast: lrd_iid_contrast(n, run.k, alpha)?,
        });
    }
    let col = |f: fn(&ConvergenceRow) -> f64| rows.iter().map(f).collect::<Vec<_>>();
    let trends = vec![
        ("ks_d", non_increasing_with_slack(&col(|r| r.ks_d), 1)),
        ("variance_dev", non_increasing_with_slack(&col(|r| (r.variance - 1.0).abs()), 1)),
        ("median_abs_i2", non_increasing_with_slack(&col(|r| r.median_abs_i2), 1)),
        ("median_abs_i3", non_increasing_with_slack(&col(|r| r.median_abs_i3), 1)),
        ("median_u_ratio_dev", non_increasing_with_slack(&col(|r| r.median_u_ratio_dev), 1)),
        ("median_reduction_sup", non_increasing_with_slack(&col(|r| r.median_reduction_sup), 1)),
    ];
    Ok(ConvergenceStudy { rows, trends })
}

/// Header of `z_samples.csv`.
pub const Z_SAMPLES_HEADER: &str = "replicate,seed,z,i1,i2,i3,u_ratio,reduction_sup";
/// Header of `convergence.csv`.
pub const CONVERGENCE_HEADER: &str =
    "n,k,ks_d,ks_p,variance,median_abs_i2,median_abs_i3,median_u_ratio_dev,median_reduction_sup,lrd_iid_ratio,lrd_iid_contrast";

pub fn write_z_samples<W: Write>(run: &McRunResult, mut w: W) -> Result<()> {
    writeln!(w, "{Z_SAMPLES_HEADER}")?;
    for r in &run.replicates {
        writeln!(w, "{},{},{},{},{},{},{},{}", r.replicate, r.seed, r.z, r.i1, r.i2, r.i3, r.u_ratio, r.reduction_sup)?;
    }
    Ok(())
}

/// `summary.csv`: one `statistic,value` row per summary field.
pub fn write_summary<W: Write>(run: &McRunResult, mut w: W) -> Result<()> {
    let s = &run.summary;
    writeln!(w, "statistic,value")?;
    let ints = [
        ("n", run.n as u64),
        ("k", run.k as u64),
        ("replicates", s.replicates as u64),
        ("master_seed", run.master_seed),
        ("clamp_events", s.clamp_events as u64),
    ];
    for (name, v) in ints {
        writeln!(w, "{name},{v}")?;
    }
    let mut floats = vec![
        ("mean", s.mean),
        ("variance", s.variance),
        ("ks_d", s.ks_d),
        ("ks_p", s.ks_p),
        ("median_abs_i1", s.median_abs_i1),
        ("median_abs_i2", s.median_abs_i2),
        ("median_abs_i3", s.median_abs_i3),
        ("median_u_ratio_dev", s.median_u_ratio_dev),
        ("median_reduction_sup", s.median_reduction_sup),
        ("max_identity_residual", s.max_residual),
        ("xi_threshold", run.feasibility.xi_threshold),
        ("power_rank_integral", run.feasibility.power_rank),
    ];
    let d_names: Vec<String> = (1..=run.feasibility.d_r.len()).map(|r| format!("d_{r}")).collect();
    for (name, v) in d_names.iter().zip(&run.feasibility.d_r) {
        floats.push((name.as_str(), *v));
    }
    for (name, v) in floats {
        writeln!(w, "{name},{v}")?;
    }
    Ok(())
}

pub fn write_qq<W: Write>(run: &McRunResult, mut w: W) -> Result<()> {
    writeln!(w, "theoretical,empirical")?;
    for (t, e) in &run.summary.qq {
        writeln!(w, "{t},{e}")?;
    }
    Ok(())
}

pub fn write_convergence<W: Write>(study: &ConvergenceStudy, mut w: W) -> Result<()> {
    writeln!(w, "{CONVERGENCE_HEADER}")?;
    for r in &study.rows {
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            r.n,
            r.k,
            r.ks_d,
            r.ks_p,
            r.variance,
            r.median_abs_i2,
            r.median_abs_i3,
            r.median_u_ratio_dev,
            r.median_reduction_sup,
            r.lrd_iid_ratio,
            r.lrd_iid_contrast
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_examples() {
        let m = 100;
        let grid: Vec<f64> = (1..=m).map(|i| norm_quantile((i as f64 - 0.5) / m as f64)).collect();
        let (d, p) = ks_test(&grid).unwrap();
        assert!(d <= 0.005 + 1e-12, "{d}");
        assert!(p > 0.99);
        let (d, _) = ks_test(&[0.0; 10]).unwrap();
        assert!((d - 0.5).abs() < 1e-15);
        assert!(matches!(ks_test(&[0.0; 7]), Err(Error::Size(_))));
        assert_eq!(kolmogorov_sf(0.0), 1.0);
    }

    #[test]
    fn kolmogorov_branches_agree() {
        // the two series meet smoothly at t = 1
        let below = kolmogorov_sf(1.0 - 1e-9);
        let above = kolmogorov_sf(1.0 + 1e-9);
        assert!((below - above).abs() < 1e-8);
        // tabulated critical value: P(K > 1.3581) = 0.05
        assert!((kolmogorov_sf(1.358_099) - 0.05).abs() < 1e-5);
    }

    #[test]
    fn median_and_trend_helpers() {
        assert_eq!(median([3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median([4.0, 1.0, 2.0, 3.0]), 2.5);
        assert!(median([f64::NAN]).is_nan());
        assert!(non_increasing_with_slack(&[3.0, 2.0, 2.5, 1.0], 1));
        assert!(!non_increasing_with_slack(&[3.0, 3.5, 2.0, 2.5], 1));
    }
}
