use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use betalab::{
    beta_k_moments, epsilon_star_2, find_fixed_points, generate_pool, parry_data, parry_density,
    psi, psi_curve, random_density, reference_density, run_ensemble, self_consistent_step,
    BetaKMoments, CurveMethod, FixedPointScan, ParryData, PoolSpec, PsiMethod, SelfConsistency,
    StepDensity, SweepSpec,
};
use serde::Serialize;
use thiserror::Error;

use crate::args::{
    BetaKArgs, Cli, Command, CouplingArgs, FixedPointArgs, IterateArgs, ParryArgs, PoolArgs,
    PsiCurveArgs, StabilityArgs, SweepArgs,
};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Computation(String),
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Computation(_) | CliError::Io(_) => 1,
        }
    }
}

impl From<betalab::Error> for CliError {
    fn from(e: betalab::Error) -> Self {
        use betalab::Error::*;
        match e {
            Domain(_)
            | Slope(_)
            | Parameter(_)
            | InvalidDensity(_)
            | ThresholdUndefined(..)
            | Window { .. } => CliError::Validation(e.to_string()),
            _ => CliError::Computation(e.to_string()),
        }
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(io::Error::other(e))
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Io(io::Error::other(e))
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn write_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<()> {
    let mut out = output(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn write_csv<T: Serialize>(path: Option<&Path>, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv::Writer::from_writer(output(path)?);
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}

fn self_consistency(c: &CouplingArgs) -> Result<SelfConsistency> {
    Ok(SelfConsistency::new(c.eps, c.coupling)?)
}

fn pool_spec(p: &PoolArgs, seed: u64) -> PoolSpec {
    PoolSpec {
        k1: p.k1,
        max_inner_jumps: p.max_jumps,
        k2: p.k2,
        seed,
        near_uniform: p.near_uniform,
    }
}

pub fn run(cli: &Cli) -> Result<()> {
    let out = cli.out.as_deref();
    let start = Instant::now();
    let result = match &cli.command {
        Command::Parry(a) => parry(a, out),
        Command::PsiCurve(a) => curve(a, cli.seed, out),
        Command::FixedPoints(a) => fixed_points(a, out),
        Command::BetaK(a) => beta_k(a, out),
        Command::Iterate(a) => iterate(a, cli.seed, out),
        Command::Stability(a) => stability(a, cli.seed, out),
        Command::EpsSweep(a) => sweep(a, cli.seed, out),
    };
    if result.is_ok() {
        eprintln!("done in {:.2}s", start.elapsed().as_secs_f64());
    }
    result
}

#[derive(Serialize)]
struct ClosedForm {
    #[serde(flatten)]
    moments: BetaKMoments,
    normalizer_gap: f64,
    first_moment_gap: f64,
}

#[derive(Serialize)]
struct ParryReport {
    #[serde(flatten)]
    data: ParryData,
    #[serde(skip_serializing_if = "Option::is_none")]
    closed_form: Option<ClosedForm>,
    #[serde(skip_serializing_if = "Option::is_none")]
    density: Option<StepDensity>,
}

fn parry(a: &ParryArgs, out: Option<&Path>) -> Result<()> {
    let moments = a.beta_k.map(beta_k_moments).transpose()?;
    let beta = match (a.beta, &moments) {
        (Some(beta), _) => beta,
        (None, Some(m)) => m.beta,
        (None, None) => {
            return Err(CliError::Validation(
                "one of --beta, --beta-k is required".into(),
            ))
        }
    };
    let data = parry_data(beta, a.tol)?;
    let density = if a.density {
        Some(parry_density(beta, a.tol)?)
    } else {
        None
    };
    let closed_form = moments.map(|m| ClosedForm {
        normalizer_gap: (data.normalizer - m.normalizer).abs(),
        first_moment_gap: (data.first_moment - m.first_moment).abs(),
        moments: m,
    });
    write_json(
        out,
        &ParryReport {
            data,
            closed_form,
            density,
        },
    )
}

#[derive(Serialize)]
struct CurveRow {
    beta: f64,
    psi: f64,
    method: &'static str,
    n_iters: Option<u64>,
}

fn curve(a: &PsiCurveArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let sc = self_consistency(&a.coupling)?;
    let method = if a.ergodic {
        if a.n == 0 {
            return Err(CliError::Validation("--n must be at least 1".into()));
        }
        CurveMethod::Ergodic { n_iters: a.n, seed }
    } else {
        CurveMethod::ParrySeries { tol: a.tol }
    };
    eprintln!("psi curve on [{}, {}] step {}", a.lo, a.hi, a.step);
    let samples = psi_curve(&sc, a.lo, a.hi, a.step, method)?;
    write_csv(
        out,
        samples.into_iter().map(|s| {
            let (method, n_iters) = match s.method {
                PsiMethod::ParrySeries => ("parry", None),
                PsiMethod::ErgodicAverage { n_iters, .. } => ("ergodic", Some(n_iters)),
            };
            CurveRow {
                beta: s.beta,
                psi: s.psi,
                method,
                n_iters,
            }
        }),
    )
}

#[derive(Serialize)]
struct Threshold {
    beta_bar: f64,
    epsilon_star_2: f64,
    psi_at_beta_bar: f64,
    /// ε > ε₂*, which forces ψ(β̄) > β̄.
    above_threshold: bool,
}

#[derive(Serialize)]
struct FixedPointReport {
    coupling: String,
    epsilon: f64,
    lo: f64,
    hi: f64,
    #[serde(flatten)]
    scan: FixedPointScan,
    #[serde(skip_serializing_if = "Option::is_none")]
    threshold: Option<Threshold>,
}

fn fixed_points(a: &FixedPointArgs, out: Option<&Path>) -> Result<()> {
    let sc = self_consistency(&a.coupling)?;
    let threshold = match a.beta_bar {
        Some(beta_bar) => {
            let eps_star = epsilon_star_2(sc.coupling(), beta_bar, a.tol)?;
            Some(Threshold {
                beta_bar,
                epsilon_star_2: eps_star,
                psi_at_beta_bar: psi(&sc, beta_bar, a.tol)?.psi,
                above_threshold: sc.epsilon() > eps_star,
            })
        }
        None => None,
    };
    eprintln!("scanning [{}, {}] at {}", a.lo, a.hi, a.step);
    let scan = find_fixed_points(&sc, a.lo, a.hi, a.step, a.bisect_tol, a.tol)?;
    write_json(
        out,
        &FixedPointReport {
            coupling: sc.coupling().to_string(),
            epsilon: sc.epsilon(),
            lo: a.lo,
            hi: a.hi,
            scan,
            threshold,
        },
    )
}

#[derive(Serialize)]
struct BetaKRow {
    k: u32,
    beta: f64,
    normalizer: f64,
    first_moment: f64,
    c_k: f64,
    series_normalizer: f64,
    series_first_moment: f64,
}

fn beta_k(a: &BetaKArgs, out: Option<&Path>) -> Result<()> {
    if a.k_max == 0 {
        return Err(CliError::Validation("--k-max must be at least 1".into()));
    }
    let rows = (1..=a.k_max)
        .map(|k| {
            let m = beta_k_moments(k)?;
            let series = parry_data(m.beta, a.tol)?;
            Ok(BetaKRow {
                k,
                beta: m.beta,
                normalizer: m.normalizer,
                first_moment: m.first_moment,
                c_k: m.c_k,
                series_normalizer: series.normalizer,
                series_first_moment: series.first_moment,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    write_csv(out, rows)
}

#[derive(Serialize)]
struct TraceRow {
    t: usize,
    beta_used: f64,
    jump_count: usize,
    total_variation: f64,
    expectation: f64,
    integral_drift: f64,
}

fn iterate(a: &IterateArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let sc = self_consistency(&a.coupling)?;
    let mut f = match &a.init {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            serde_json::from_str::<StepDensity>(&text)
                .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?
        }
        None => random_density(a.jumps, seed)?,
    };
    let mut rows = Vec::with_capacity(a.steps);
    for t in 1..=a.steps {
        let (next, record) = self_consistent_step(&sc, &f)
            .map_err(|e| CliError::Computation(format!("step {t}: {e}")))?;
        f = next;
        rows.push(TraceRow {
            t,
            beta_used: record.beta_used,
            jump_count: f.jump_count(),
            total_variation: f.total_variation(),
            expectation: f.expectation(),
            integral_drift: record.integral_drift,
        });
    }
    if let Some(path) = &a.final_density {
        write_json(Some(path), &f)?;
    }
    write_csv(out, rows)
}

fn stability(a: &StabilityArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let sc = self_consistency(&a.coupling)?;
    let pool = generate_pool(&pool_spec(&a.pool, seed))?;
    if a.steps == 0 {
        return Err(CliError::Validation("--steps must be at least 1".into()));
    }
    let reference = match a.ref_steps {
        Some(t_long) => {
            eprintln!("reference density: {t_long} steps");
            Some(reference_density(&sc, &pool[0], t_long)?)
        }
        None => None,
    };
    eprintln!("ensemble of {} densities, {} steps", pool.len(), a.steps);
    let stats = run_ensemble(&sc, &pool, a.steps, reference.as_ref())?;
    write_csv(out, stats)
}

#[derive(Serialize)]
struct SweepCsvRow {
    epsilon: f64,
    window_var_min: Option<f64>,
    window_var_max: Option<f64>,
    window_beta_min: Option<f64>,
    window_beta_max: Option<f64>,
    converged: &'static str,
}

fn sweep(a: &SweepArgs, seed: u64, out: Option<&Path>) -> Result<()> {
    let spec = SweepSpec {
        coupling: a.coupling,
        eps_lo: a.eps_lo,
        eps_hi: a.eps_hi,
        eps_step: a.eps_step,
        steps: a.steps,
        t0: a.t0,
        t1: a.t1,
        tol: a.tol,
        pool: pool_spec(&a.pool, seed),
    };
    eprintln!(
        "sweeping eps over [{}, {}] step {}",
        a.eps_lo, a.eps_hi, a.eps_step
    );
    let rows = betalab::epsilon_sweep(&spec)?;
    write_csv(
        out,
        rows.into_iter().map(|row| match row.outcome {
            Ok(c) => SweepCsvRow {
                epsilon: row.epsilon,
                window_var_min: Some(c.window.var_min),
                window_var_max: Some(c.window.var_max),
                window_beta_min: Some(c.window.beta_min),
                window_beta_max: Some(c.window.beta_max),
                converged: if c.converged { "true" } else { "false" },
            },
            Err(message) => {
                eprintln!("eps {}: {message}", row.epsilon);
                SweepCsvRow {
                    epsilon: row.epsilon,
                    window_var_min: None,
                    window_var_max: None,
                    window_beta_min: None,
                    window_beta_max: None,
                    converged: "error",
                }
            }
        }),
    )
}
