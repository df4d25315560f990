//! Exact transfer operator of the β-map on step densities, and the
//! self-consistent operator `f ↦ P_{β(f)} f`.
//!
//! For `T_β(x) = βx mod 1`,
//!
//! ```text
//! P_β f(x) = (1/β) Σ_{k=0}^{⌊β⌋}   f((x + k)/β)   for 0 <= x < β - ⌊β⌋
//! P_β f(x) = (1/β) Σ_{k=0}^{⌊β⌋-1} f((x + k)/β)   for β - ⌊β⌋ <= x <= 1
//! ```
//!
//! If `f` is a step function then so is `P_β f`, and every breakpoint of the
//! image lies in `{T_β(x_i)} ∪ {0, 1}` where `x_i` are the breakpoints of `f`
//! (the branch switch `β - ⌊β⌋ = T_β(1)` is included because 1 is always a
//! breakpoint). The image is therefore evaluated exactly at the midpoint of
//! each candidate interval.

use serde::Serialize;
use thiserror::Error;

use crate::beta_dynamics::step;
use crate::error::{check_slope, Error, Result};
use crate::psi::SelfConsistency;
use crate::step_density::{push_breakpoint, StepDensity, StepFunction};

/// Densities with expectation at or below this cannot define a slope.
pub const MIN_EXPECTATION: f64 = 1e-6;

/// Bookkeeping for one application of the transfer operator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PushforwardRecord {
    pub beta_used: f64,
    pub input_jump_count: usize,
    pub output_jump_count: usize,
    /// `|I(P_β f) - I(f)|` before any renormalization.
    pub integral_drift: f64,
}

/// `P_β f`, exact on step functions.
pub fn pushforward(beta: f64, f: &StepDensity) -> Result<(StepDensity, PushforwardRecord)> {
    check_slope(beta)?;
    let mut images: Vec<f64> = Vec::with_capacity(f.jump_count() + 1);
    images.push(0.0);
    images.extend(f.jumps().iter().map(|&x| step(beta, x)));
    images.push(1.0);
    images.sort_by(f64::total_cmp);
    let mut jumps = Vec::with_capacity(images.len());
    for v in images {
        push_breakpoint(&mut jumps, v);
    }

    let full_branches = beta.floor();
    let split = beta - full_branches;
    let full_branches = full_branches as usize;
    let heights: Vec<f64> = jumps
        .windows(2)
        .map(|w| {
            let mid = 0.5 * (w[0] + w[1]);
            let branches = if mid < split {
                full_branches + 1
            } else {
                full_branches
            };
            let sum: f64 = (0..branches)
                .map(|k| f.value_at((mid + k as f64) / beta))
                .sum();
            sum / beta
        })
        .collect();

    let mut image = StepFunction::from_parts_unchecked(jumps, heights);
    image.merge_equal_neighbours();
    let out = StepDensity::from_function_unchecked(image);
    let record = PushforwardRecord {
        beta_used: beta,
        input_jump_count: f.jump_count(),
        output_jump_count: out.jump_count(),
        integral_drift: (out.integral() - f.integral()).abs(),
    };
    Ok((out, record))
}

/// Slope `2 + ε F(1/E_f - 2)` assigned to `f`.
pub fn slope_of(sc: &SelfConsistency, f: &StepDensity) -> Result<f64> {
    let e = f.expectation();
    if !(e > MIN_EXPECTATION) {
        return Err(Error::DegenerateExpectation(e));
    }
    let beta = sc.slope_for_expectation(e);
    if !(beta > 1.0) || !beta.is_finite() {
        return Err(Error::SlopeOutOfRange(beta));
    }
    Ok(beta)
}

/// One step of the self-consistent operator followed by renormalization.
pub fn self_consistent_step(
    sc: &SelfConsistency,
    f: &StepDensity,
) -> Result<(StepDensity, PushforwardRecord)> {
    let beta = slope_of(sc, f)?;
    let (image, record) = pushforward(beta, f)?;
    Ok((image.normalize()?, record))
}

/// Final density of a trajectory and the per-step records.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub density: StepDensity,
    pub records: Vec<PushforwardRecord>,
}

/// A trajectory that stopped early. `records` and `density` describe the
/// state reached before step `step` failed.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("iteration failed at step {step}: {source}")]
pub struct IterationFailure {
    pub step: usize,
    pub density: StepDensity,
    pub records: Vec<PushforwardRecord>,
    #[source]
    pub source: Error,
}

/// Applies [`self_consistent_step`] `steps` times.
pub fn iterate(
    sc: &SelfConsistency,
    f0: &StepDensity,
    steps: usize,
) -> std::result::Result<Trajectory, IterationFailure> {
    let mut records = Vec::with_capacity(steps);
    let mut density = f0.clone();
    for t in 0..steps {
        match self_consistent_step(sc, &density) {
            Ok((next, record)) => {
                density = next;
                records.push(record);
            }
            Err(source) => {
                return Err(IterationFailure {
                    step: t + 1,
                    density,
                    records,
                    source,
                })
            }
        }
    }
    Ok(Trajectory { density, records })
}

/// Runs a trajectory and hands every density `f_0, …, f_steps` to
/// `observe`. Returns the final density or the failing step and error.
pub(crate) fn iterate_observed(
    sc: &SelfConsistency,
    f0: &StepDensity,
    steps: usize,
    mut observe: impl FnMut(usize, &StepDensity) -> Result<()>,
) -> std::result::Result<StepDensity, (usize, Error)> {
    let mut density = f0.clone();
    observe(0, &density).map_err(|e| (0, e))?;
    for t in 1..=steps {
        density = self_consistent_step(sc, &density).map_err(|e| (t, e))?.0;
        observe(t, &density).map_err(|e| (t, e))?;
    }
    Ok(density)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::beta_dynamics::{parry_data, parry_density, DEFAULT_TOL};
    use crate::psi::Coupling;
    use crate::step_density::random_density;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn sc(eps: f64, c: Coupling) -> SelfConsistency {
        SelfConsistency::new(eps, c).unwrap()
    }

    #[test]
    fn uniform_is_invariant_at_integer_slopes() {
        for beta in [2.0, 3.0, 7.0] {
            let (out, rec) = pushforward(beta, &StepDensity::uniform()).unwrap();
            assert_eq!(out, StepDensity::uniform(), "beta {beta}");
            assert_eq!(rec.output_jump_count, 2);
        }
    }

    #[test]
    fn uniform_under_two_and_a_half() {
        let (out, rec) = pushforward(2.5, &StepDensity::uniform()).unwrap();
        assert_eq!(out.jumps(), &[0.0, 0.5, 1.0]);
        assert!((out.heights()[0] - 1.2).abs() < 1e-15);
        assert!((out.heights()[1] - 0.8).abs() < 1e-15);
        assert_eq!(rec.input_jump_count, 2);
        assert_eq!(rec.output_jump_count, 3);
        assert!(rec.integral_drift < 1e-15);
    }

    #[test]
    fn pushforward_rejects_small_slopes() {
        assert_eq!(
            pushforward(1.0, &StepDensity::uniform()).unwrap_err(),
            Error::Slope(1.0)
        );
    }

    #[test]
    fn mass_positivity_and_jump_growth() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for i in 0..100 {
            let beta = rng.gen_range(1.5..5.0);
            let f = random_density(rng.gen_range(1..60), i).unwrap();
            let (out, rec) = pushforward(beta, &f).unwrap();
            assert!(
                rec.integral_drift <= 1e-11,
                "beta {beta}: {}",
                rec.integral_drift
            );
            assert!(out.heights().iter().all(|&h| h >= 0.0));
            assert!(rec.output_jump_count <= rec.input_jump_count + 1);
        }
    }

    #[test]
    fn pushforward_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for i in 0..50 {
            let beta = rng.gen_range(1.5..5.0);
            let f = random_density(rng.gen_range(1..30), 2 * i).unwrap();
            let g = random_density(rng.gen_range(1..30), 2 * i + 1).unwrap();
            let (a, b) = (rng.gen_range(0.0..3.0), rng.gen_range(0.0..3.0));
            let combo = StepDensity::linear_combination(a, &f, b, &g).unwrap();
            let lhs = pushforward(beta, &combo).unwrap().0;
            let rhs = StepDensity::linear_combination(
                a,
                &pushforward(beta, &f).unwrap().0,
                b,
                &pushforward(beta, &g).unwrap().0,
            )
            .unwrap();
            let diff = lhs.as_function().sub(rhs.as_function());
            let worst = diff.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(worst <= 1e-11, "beta {beta}: {worst}");
        }
    }

    #[test]
    fn parry_density_is_a_fixed_point() {
        for beta in [2.3, 2.7, 3.4] {
            let h = parry_density(beta, DEFAULT_TOL).unwrap();
            let bound = parry_data(beta, DEFAULT_TOL).unwrap().truncation_bound;
            let (image, _) = pushforward(beta, &h).unwrap();
            let dist = image.l1_distance(&h);
            assert!(
                dist <= 10.0 * bound,
                "beta {beta}: {dist} > {}",
                10.0 * bound
            );
        }
    }

    #[test]
    fn self_consistent_step_examples() {
        for s in [sc(0.3, Coupling::Identity), sc(5.0, Coupling::EvenPower(2))] {
            let (out, rec) = self_consistent_step(&s, &StepDensity::uniform()).unwrap();
            assert_eq!(out, StepDensity::uniform());
            assert_eq!(rec.beta_used, 2.0);
        }

        let f = random_density(6, 77).unwrap();
        let (out, rec) = self_consistent_step(&sc(0.0, Coupling::Identity), &f).unwrap();
        assert_eq!(rec.beta_used, 2.0);
        assert_eq!(out, pushforward(2.0, &f).unwrap().0.normalize().unwrap());

        // E_f = 0.4 from heights 1.2 on [0, 0.5) and 0.8 on [0.5, 1] mirrored.
        let g = StepDensity::new(vec![0.0, 0.5, 1.0], vec![1.4, 0.6]).unwrap();
        assert!((g.expectation() - 0.4).abs() < 1e-15);
        let (_, rec) = self_consistent_step(&sc(1.0, Coupling::Identity), &g).unwrap();
        assert!((rec.beta_used - 2.5).abs() < 1e-14);
    }

    #[test]
    fn self_consistent_step_errors() {
        let spike = StepDensity::new(vec![0.0, 1e-8, 1.0], vec![1e8, 0.0]).unwrap();
        assert!(matches!(
            self_consistent_step(&sc(0.1, Coupling::Identity), &spike),
            Err(Error::DegenerateExpectation(_))
        ));
        // E close to 1 with a large coupling drives the slope below 1.
        let tail = StepDensity::new(vec![0.0, 0.9, 1.0], vec![0.0, 10.0]).unwrap();
        assert!(matches!(
            self_consistent_step(&sc(2.0, Coupling::Identity), &tail),
            Err(Error::SlopeOutOfRange(_))
        ));
    }

    #[test]
    fn iterate_reports_trail_on_failure() {
        let tail = StepDensity::new(vec![0.0, 0.9, 1.0], vec![0.0, 10.0]).unwrap();
        let failure = iterate(&sc(2.0, Coupling::Identity), &tail, 5).unwrap_err();
        assert_eq!(failure.step, 1);
        assert!(failure.records.is_empty());
        assert_eq!(failure.density, tail);
    }

    #[test]
    fn uniform_trajectory_is_constant() {
        let traj = iterate(&sc(0.7, Coupling::Identity), &StepDensity::uniform(), 100).unwrap();
        assert_eq!(traj.density, StepDensity::uniform());
        assert_eq!(traj.records.len(), 100);
        assert!(traj.records.iter().all(|r| r.beta_used == 2.0));
    }

    #[test]
    fn quadratic_coupling_flattens_random_density() {
        let f0 = random_density(8, 2024).unwrap();
        let traj = iterate(&sc(1.0, Coupling::EvenPower(1)), &f0, 100).unwrap();
        assert!(traj.density.total_variation() < 1e-4);
    }

    #[test]
    fn doubling_map_mixes_to_uniform() {
        let f0 = random_density(5, 8).unwrap();
        let traj = iterate(&sc(0.0, Coupling::Identity), &f0, 200).unwrap();
        assert!(traj.density.l1_distance(&StepDensity::uniform()) < 1e-10);
    }
}
