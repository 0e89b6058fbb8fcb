//! Command implementations behind the `extremesum` binary.
//!
//! Every command writes its CSV artifacts into the output directory together
//! with `errors.csv` (`command,kind,message`), which lists errors and
//! feasibility warnings and is present even when empty.

use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use extremesum::config::{parse_config, parse_config_lenient, ConfigErrors, ExperimentConfig, SampleSizes};
use extremesum::estats::reduction_sup;
use extremesum::mc::{convergence_study, run_replicates, write_convergence, write_qq, write_summary, write_z_samples};
use extremesum::rng::derive_seed;
use extremesum::scaling::{check_condition_dr, karamata_k, power_rank_integral, spec_threshold, ScalingBundle};
use extremesum::simulate::{write_path_binary, write_path_csv, Simulator};
use extremesum::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub const ERRORS_HEADER: &str = "command,kind,message";
pub const SCALING_HEADER: &str = "n,k,xi,p,case,xi_threshold,sigma_n1,a_n,d_np,mu_n,karamata_k,a_n_k_n";
pub const DIAG_HEADER: &str = "diagnostic,value";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Simulate,
    Scaling,
    Mc,
    Convergence,
    Diag,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Simulate => "simulate",
            Self::Scaling => "scaling",
            Self::Mc => "mc",
            Self::Convergence => "convergence",
            Self::Diag => "diag",
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides the `output` key of the config.
    pub out: Option<PathBuf>,
    /// Worker threads for Monte Carlo; 0 uses all cores.
    pub threads: usize,
    /// Also write `path.bin` from `simulate`.
    pub binary: bool,
}

/// Exit code for an error: 2 for invalid or infeasible input, 3 for numerical and other failures.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Infeasible(_) | Error::Domain(_) | Error::Size(_) | Error::Unsupported(_) => {
            EXIT_INFEASIBLE
        }
        _ => EXIT_NUMERIC,
    }
}

/// Runs `cmd` on the config text, printing a report to stdout.
pub fn run_command(cmd: Command, config_text: &str, opts: &RunOptions) -> i32 {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    run_command_to(cmd, config_text, opts, &mut lock)
}

/// Runs `cmd`, writing the report to `report`.
pub fn run_command_to(cmd: Command, config_text: &str, opts: &RunOptions, report: &mut dyn Write) -> i32 {
    let mut log = Vec::new();
    let mut out_dir = opts.out.clone();
    let result = execute(cmd, config_text, opts, report, &mut log, &mut out_dir);
    let code = match &result {
        Ok(()) => EXIT_OK,
        Err(errs) => {
            for e in errs {
                eprintln!("error: {e}");
            }
            errs.iter().map(exit_code).max().unwrap_or(EXIT_NUMERIC)
        }
    };
    let mut rows: Vec<(&str, String)> = log.iter().map(|w: &Error| ("warning", w.to_string())).collect();
    if let Err(errs) = &result {
        rows.extend(errs.iter().map(|e| (e.kind(), e.to_string())));
    }
    let dir = out_dir.unwrap_or_else(|| PathBuf::from(extremesum::config::DEFAULT_OUTPUT));
    if let Err(e) = write_errors(&dir, cmd, &rows) {
        eprintln!("error: cannot write errors.csv: {e}");
        return code.max(EXIT_NUMERIC);
    }
    code
}

fn execute(
    cmd: Command,
    text: &str,
    opts: &RunOptions,
    report: &mut dyn Write,
    warnings: &mut Vec<Error>,
    out_dir: &mut Option<PathBuf>,
) -> std::result::Result<(), Vec<Error>> {
    let strict = matches!(cmd, Command::Mc | Command::Convergence);
    let parsed = if strict { parse_config(text).map(|c| (c, Vec::new())) } else { parse_config_lenient(text) };
    let (cfg, warn) = match parsed {
        Ok(v) => v,
        Err(ConfigErrors(errs)) => {
            if out_dir.is_none() {
                *out_dir = output_key(text);
            }
            return Err(errs);
        }
    };
    for w in &warn {
        eprintln!("warning: {w}");
    }
    warnings.extend(warn);
    let dir = out_dir.get_or_insert_with(|| PathBuf::from(&cfg.output)).clone();
    fs::create_dir_all(&dir).map_err(|e| vec![Error::from(e)])?;
    let r = match cmd {
        Command::Simulate => simulate(&cfg, opts, &dir, report),
        Command::Scaling => scaling(&cfg, &dir, report, warnings),
        Command::Mc => mc(&cfg, opts, &dir, report),
        Command::Convergence => convergence(&cfg, opts, &dir, report),
        Command::Diag => diag(&cfg, &dir, report, warnings),
    };
    r.map_err(|e| vec![e])
}

/// Best-effort read of the `output` key from a config that failed to parse.
fn output_key(text: &str) -> Option<PathBuf> {
    text.lines().find_map(|l| {
        let l = l.split('#').next()?.trim();
        let (k, v) = l.split_once('=')?;
        (k.trim() == "output").then(|| PathBuf::from(v.trim()))
    })
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn write_errors(dir: &Path, cmd: Command, rows: &[(&str, String)]) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    let mut w = BufWriter::new(File::create(dir.join("errors.csv"))?);
    writeln!(w, "{ERRORS_HEADER}")?;
    for (kind, msg) in rows {
        writeln!(w, "{cmd},{kind},{}", csv_field(msg))?;
    }
    w.flush()
}

fn create(dir: &Path, name: &str) -> extremesum::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn single_n(cfg: &ExperimentConfig, cmd: Command) -> extremesum::Result<usize> {
    match &cfg.sizes {
        SampleSizes::Single(n) => Ok(*n),
        SampleSizes::Grid(_) => {
            Err(Error::Config(format!("`{cmd}` takes a single `n`; `n_grid` is for `convergence`")))
        }
    }
}

fn simulate(cfg: &ExperimentConfig, opts: &RunOptions, dir: &Path, report: &mut dyn Write) -> extremesum::Result<()> {
    let n = single_n(cfg, Command::Simulate)?;
    let spec = cfg.model_spec()?;
    let sim = Simulator::new(spec, n)?;
    let seed = derive_seed(cfg.master_seed, 0);
    let path = sim.path(seed);
    let mut w = create(dir, "path.csv")?;
    write_path_csv(&path, &mut w)?;
    w.flush()?;
    if opts.binary {
        let mut w = create(dir, "path.bin")?;
        write_path_binary(&path, &mut w)?;
        w.flush()?;
    }
    writeln!(report, "model = {}", sim.spec().describe(n))?;
    writeln!(report, "n = {n}")?;
    writeln!(report, "m = {}", sim.spec().coeffs.m())?;
    writeln!(report, "seed = {seed}")?;
    writeln!(report, "spec_hash = {:016x}", path.spec_hash)?;
    writeln!(report, "clamp_events = {}", path.clamp_events)?;
    Ok(())
}

fn scaling(
    cfg: &ExperimentConfig,
    dir: &Path,
    report: &mut dyn Write,
    warnings: &mut Vec<Error>,
) -> extremesum::Result<()> {
    let spec = cfg.model_spec()?;
    let threshold = match spec_threshold(&spec) {
        Ok(t) => t,
        Err(e) => {
            if !warnings.contains(&e) {
                warnings.push(e);
            }
            f64::NAN
        }
    };
    let mut w = create(dir, "scaling.csv")?;
    writeln!(w, "{SCALING_HEADER}")?;
    writeln!(report, "model = {}", spec.describe(cfg.sizes.as_slice()[0]))?;
    writeln!(report, "case = {}", spec.case())?;
    writeln!(report, "xi_threshold = {threshold}")?;
    for &n in cfg.sizes.as_slice() {
        let b = ScalingBundle::new(&spec, n, cfg.xi, cfg.p)?;
        let kn = karamata_k(&spec.x, &spec.y, n, b.k)?;
        let ak = b.a_n * kn;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{},{}",
            n,
            b.k,
            b.xi,
            b.p,
            b.case.number(),
            threshold,
            b.sigma_n1,
            b.a_n,
            b.d_np,
            b.mu_n,
            kn,
            ak
        )?;
        writeln!(report, "[n = {n}]")?;
        writeln!(report, "k = {}", b.k)?;
        writeln!(report, "p = {}", b.p)?;
        writeln!(report, "sigma_n1 = {}", b.sigma_n1)?;
        writeln!(report, "a_n = {}", b.a_n)?;
        writeln!(report, "d_np = {}", b.d_np)?;
        writeln!(report, "mu_n = {}", b.mu_n)?;
        writeln!(report, "karamata_k = {kn}")?;
        writeln!(report, "a_n_k_n = {ak}")?;
    }
    w.flush()?;
    Ok(())
}

fn mc(cfg: &ExperimentConfig, opts: &RunOptions, dir: &Path, report: &mut dyn Write) -> extremesum::Result<()> {
    let n = single_n(cfg, Command::Mc)?;
    let setup = cfg.mc_setup()?;
    let run = run_replicates(&setup, n, cfg.replicates, cfg.master_seed, opts.threads)?;
    let mut w = create(dir, "z_samples.csv")?;
    write_z_samples(&run, &mut w)?;
    w.flush()?;
    let mut w = create(dir, "summary.csv")?;
    write_summary(&run, &mut w)?;
    w.flush()?;
    let mut w = create(dir, "qq.csv")?;
    write_qq(&run, &mut w)?;
    w.flush()?;
    let s = &run.summary;
    writeln!(report, "model = {}", run.description)?;
    writeln!(report, "n = {}, k = {}, replicates = {}", run.n, run.k, s.replicates)?;
    writeln!(report, "mean = {}", s.mean)?;
    writeln!(report, "variance = {}", s.variance)?;
    writeln!(report, "ks_d = {}", s.ks_d)?;
    writeln!(report, "ks_p = {}", s.ks_p)?;
    writeln!(report, "max_identity_residual = {}", s.max_residual)?;
    Ok(())
}

fn convergence(
    cfg: &ExperimentConfig,
    opts: &RunOptions,
    dir: &Path,
    report: &mut dyn Write,
) -> extremesum::Result<()> {
    let setup = cfg.mc_setup()?;
    let study = convergence_study(&setup, cfg.sizes.as_slice(), cfg.replicates, cfg.master_seed, opts.threads)?;
    let mut w = create(dir, "convergence.csv")?;
    write_convergence(&study, &mut w)?;
    w.flush()?;
    for r in &study.rows {
        writeln!(report, "n = {}: ks_d = {}, variance = {}", r.n, r.ks_d, r.variance)?;
    }
    for (name, ok) in &study.trends {
        writeln!(report, "trend {name}: {}", if *ok { "non-increasing" } else { "violated" })?;
    }
    Ok(())
}

fn diag(
    cfg: &ExperimentConfig,
    dir: &Path,
    report: &mut dyn Write,
    warnings: &mut Vec<Error>,
) -> extremesum::Result<()> {
    let spec = cfg.model_spec()?;
    let p = cfg.effective_p()?;
    let mut rows: Vec<(String, f64)> = Vec::new();
    match spec_threshold(&spec) {
        Ok(t) => rows.push(("xi_threshold".into(), t)),
        Err(e) if !warnings.contains(&e) => warnings.push(e),
        Err(_) => {}
    }
    rows.push(("power_rank_integral".into(), power_rank_integral(&spec.x, &spec.y)?));
    if spec.x.is_analytic() {
        for r in 1..=p {
            rows.push((format!("d_{r}"), check_condition_dr(&spec.x, &spec.y, r)?));
        }
    }
    let n = cfg.sizes.as_slice()[0];
    if spec.validate().is_ok() && spec.x.is_analytic() && p <= 2 {
        let sim = Simulator::new(spec.clone(), n)?;
        let seed = derive_seed(cfg.master_seed, 0);
        let eps = sim.innovations(seed);
        let path = sim.path_from_innovations(&eps, seed);
        let sigma = extremesum::simulate::sigma_n1_exact(spec.coeffs.coeffs(), spec.innovations.variance(), n);
        let sup = reduction_sup(&path.x, &eps, spec.coeffs.coeffs(), p, &spec.x, sigma)?;
        rows.push(("reduction_n".into(), n as f64));
        rows.push(("reduction_sup".into(), sup.value));
    }
    let mut w = create(dir, "diag.csv")?;
    writeln!(w, "{DIAG_HEADER}")?;
    writeln!(report, "model = {}", spec.describe(n))?;
    writeln!(report, "case = {}", spec.case())?;
    for (name, v) in &rows {
        writeln!(w, "{name},{v}")?;
        writeln!(report, "{name} = {v}")?;
    }
    w.flush()?;
    Ok(())
}
