//! Shared inputs for the benchmarks.

use betalab::{random_density, StepDensity};

/// A random density that has already been pushed forward `steps` times at
/// a fixed slope, so it carries a realistic number of breakpoints.
pub fn evolved_density(inner_jumps: usize, steps: usize, beta: f64, seed: u64) -> StepDensity {
    let mut f = random_density(inner_jumps, seed).expect("inner_jumps >= 1");
    for _ in 0..steps {
        f = betalab::pushforward(beta, &f)
            .expect("beta > 1")
            .0
            .normalize()
            .expect("mass is preserved");
    }
    f
}
