//! Ensemble stability experiments for the self-consistent transfer operator.
//!
//! A pool of random step densities is evolved under `f ↦ P_{β(f)} f`, and at
//! every time step the ensemble means of the slope `β(f_t)` and of the total
//! variation `var(f_t)` are recorded, optionally together with the mean
//! variation and L¹ distances to a reference density.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::psi::{grid, Coupling, SelfConsistency};
use crate::rng::derive_seed;
use crate::step_density::{random_density_with, StepDensity};
use crate::transfer::{iterate, iterate_observed, slope_of};

/// Layout of a random pool: `k1` groups, each with `k2` densities sharing a
/// jump count drawn uniformly from `1..=max_inner_jumps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoolSpec {
    pub k1: usize,
    pub max_inner_jumps: usize,
    pub k2: usize,
    pub seed: u64,
    /// Blend every density toward uniform until its total variation is
    /// below this bound.
    pub near_uniform: Option<f64>,
}

impl Default for PoolSpec {
    fn default() -> Self {
        Self {
            k1: 10,
            max_inner_jumps: 10,
            k2: 10,
            seed: 0,
            near_uniform: None,
        }
    }
}

impl PoolSpec {
    pub fn size(&self) -> usize {
        self.k1 * self.k2
    }

    fn validate(&self) -> Result<()> {
        if self.k1 == 0 || self.k2 == 0 || self.max_inner_jumps == 0 {
            return Err(Error::Parameter(
                "pool needs k1, k2 and max_inner_jumps of at least 1".into(),
            ));
        }
        if let Some(bound) = self.near_uniform {
            if !(bound > 0.0) {
                return Err(Error::Parameter(format!(
                    "near-uniform bound must be positive, got {bound}"
                )));
            }
        }
        Ok(())
    }
}

pub fn generate_pool(spec: &PoolSpec) -> Result<Vec<StepDensity>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut pool = Vec::with_capacity(spec.size());
    for _ in 0..spec.k1 {
        let m = rng.gen_range(1..=spec.max_inner_jumps);
        for _ in 0..spec.k2 {
            pool.push(random_density_with(m, &mut rng)?);
        }
    }
    if let Some(bound) = spec.near_uniform {
        pool = pool
            .into_iter()
            .map(|f| blend_toward_uniform(&f, bound))
            .collect::<Result<_>>()?;
    }
    Ok(pool)
}

/// `s f + (1 - s)` with the largest `s` (smallest uniform share) whose
/// variation `s · var(f)` is below `bound`.
fn blend_toward_uniform(f: &StepDensity, bound: f64) -> Result<StepDensity> {
    let var = f.total_variation();
    if var < bound {
        return Ok(f.clone());
    }
    let mut share = bound / var;
    loop {
        share *= 1.0 - 1e-9;
        let blended =
            StepDensity::linear_combination(share, f, 1.0 - share, &StepDensity::uniform())?
                .normalize()?;
        if blended.total_variation() < bound {
            return Ok(blended);
        }
    }
}

/// Ensemble means at one time step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrajectoryStats {
    pub t: usize,
    pub mean_beta: f64,
    pub mean_var: f64,
    pub mean_var_to_ref: Option<f64>,
    pub mean_l1_to_ref: Option<f64>,
}

/// Evolves every pool member for `steps` steps and returns the ensemble
/// means for `t = 0..=steps`. The slope at time `t` is the one computed
/// from the time-`t` densities, so `t = 0` describes the raw pool.
///
/// Members run in parallel; the means are summed in pool order, so the
/// result does not depend on the number of worker threads.
pub fn run_ensemble(
    sc: &SelfConsistency,
    pool: &[StepDensity],
    steps: usize,
    reference: Option<&StepDensity>,
) -> Result<Vec<TrajectoryStats>> {
    if pool.is_empty() {
        return Err(Error::Parameter("pool is empty".into()));
    }
    if steps == 0 {
        return Err(Error::Parameter("steps must be at least 1".into()));
    }
    // Per member: one row [beta, var, var_to_ref, l1_to_ref] per t, or the
    // failing step and its error.
    type MemberRows = std::result::Result<Vec<[f64; 4]>, (usize, Error)>;
    let per_member: Vec<MemberRows> = pool
        .par_iter()
        .map(|f0| {
            let mut rows = Vec::with_capacity(steps + 1);
            iterate_observed(sc, f0, steps, |_, f| {
                let beta = slope_of(sc, f)?;
                let (var_ref, l1_ref) = match reference {
                    Some(r) => (f.variation_distance(r), f.l1_distance(r)),
                    None => (f64::NAN, f64::NAN),
                };
                rows.push([beta, f.total_variation(), var_ref, l1_ref]);
                Ok(())
            })?;
            Ok(rows)
        })
        .collect();

    let mut members = Vec::with_capacity(pool.len());
    for (index, result) in per_member.into_iter().enumerate() {
        match result {
            Ok(rows) => members.push(rows),
            Err((step, source)) => {
                return Err(Error::Trajectory {
                    index,
                    step,
                    source: Box::new(source),
                })
            }
        }
    }

    let n = members.len() as f64;
    let mean = |t: usize, col: usize| members.iter().map(|m| m[t][col]).sum::<f64>() / n;
    Ok((0..=steps)
        .map(|t| TrajectoryStats {
            t,
            mean_beta: mean(t, 0),
            mean_var: mean(t, 1),
            mean_var_to_ref: reference.map(|_| mean(t, 2)),
            mean_l1_to_ref: reference.map(|_| mean(t, 3)),
        })
        .collect())
}

/// Long-run iterate of `f0`, used as a stand-in for an invariant density.
pub fn reference_density(
    sc: &SelfConsistency,
    f0: &StepDensity,
    t_long: usize,
) -> Result<StepDensity> {
    if t_long == 0 {
        return Err(Error::Parameter("t_long must be at least 1".into()));
    }
    iterate(sc, f0, t_long)
        .map(|traj| traj.density)
        .map_err(|failure| Error::Trajectory {
            index: 0,
            step: failure.step,
            source: Box::new(failure.source),
        })
}

/// Ranges of the ensemble means over a time window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct WindowSummary {
    pub var_min: f64,
    pub var_max: f64,
    pub beta_min: f64,
    pub beta_max: f64,
}

impl WindowSummary {
    pub fn var_range(&self) -> f64 {
        self.var_max - self.var_min
    }

    pub fn beta_range(&self) -> f64 {
        self.beta_max - self.beta_min
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Convergence {
    pub converged: bool,
    pub var_range: f64,
    pub beta_range: f64,
    pub window: WindowSummary,
}

/// Converged when both `mean_var` and `mean_beta` stay within `tol` of
/// their window midrange for every `t` in `[t0, t1]`, i.e. both ranges are
/// below `2 tol`.
pub fn detect_convergence(
    stats: &[TrajectoryStats],
    t0: usize,
    t1: usize,
    tol: f64,
) -> Result<Convergence> {
    let last = stats.last().map_or(0, |s| s.t);
    if stats.is_empty() || t0 >= t1 || t1 > last {
        return Err(Error::Window { t0, t1, last });
    }
    let mut window = WindowSummary {
        var_min: f64::INFINITY,
        var_max: f64::NEG_INFINITY,
        beta_min: f64::INFINITY,
        beta_max: f64::NEG_INFINITY,
    };
    for s in stats.iter().filter(|s| s.t >= t0 && s.t <= t1) {
        window.var_min = window.var_min.min(s.mean_var);
        window.var_max = window.var_max.max(s.mean_var);
        window.beta_min = window.beta_min.min(s.mean_beta);
        window.beta_max = window.beta_max.max(s.mean_beta);
    }
    let (var_range, beta_range) = (window.var_range(), window.beta_range());
    Ok(Convergence {
        converged: var_range < 2.0 * tol && beta_range < 2.0 * tol,
        var_range,
        beta_range,
        window,
    })
}

/// Parameters of an ε-sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepSpec {
    pub coupling: Coupling,
    pub eps_lo: f64,
    pub eps_hi: f64,
    pub eps_step: f64,
    pub steps: usize,
    pub t0: usize,
    pub t1: usize,
    pub tol: f64,
    pub pool: PoolSpec,
}

/// One ε of a sweep; `outcome` holds the error message if the ensemble
/// failed.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub epsilon: f64,
    pub outcome: std::result::Result<Convergence, String>,
}

impl SweepRow {
    pub fn converged(&self) -> bool {
        matches!(self.outcome, Ok(c) if c.converged)
    }
}

/// Runs an ensemble for every ε on the grid. Row `i` uses a fresh pool
/// seeded from the master seed and `i`.
pub fn epsilon_sweep(spec: &SweepSpec) -> Result<Vec<SweepRow>> {
    let epsilons = if spec.eps_lo == spec.eps_hi {
        vec![spec.eps_lo]
    } else {
        grid(spec.eps_lo, spec.eps_hi, spec.eps_step)?
    };
    if !(spec.eps_lo >= 0.0) {
        return Err(Error::Parameter(format!(
            "epsilon must be nonnegative, got {}",
            spec.eps_lo
        )));
    }
    if !(spec.t0 < spec.t1 && spec.t1 <= spec.steps) {
        return Err(Error::Window {
            t0: spec.t0,
            t1: spec.t1,
            last: spec.steps,
        });
    }
    spec.pool.validate()?;
    Ok(epsilons
        .into_iter()
        .enumerate()
        .map(|(i, epsilon)| {
            let outcome = sweep_row(spec, i, epsilon).map_err(|e| e.to_string());
            SweepRow { epsilon, outcome }
        })
        .collect())
}

fn sweep_row(spec: &SweepSpec, index: usize, epsilon: f64) -> Result<Convergence> {
    let sc = SelfConsistency::new(epsilon, spec.coupling)?;
    let pool = generate_pool(&PoolSpec {
        seed: derive_seed(spec.pool.seed, index as u64),
        ..spec.pool
    })?;
    let stats = run_ensemble(&sc, &pool, spec.steps, None)?;
    detect_convergence(&stats, spec.t0, spec.t1, spec.tol)
}
