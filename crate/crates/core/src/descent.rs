//! Monotone first-order minimization: gradient descent with Armijo
//! backtracking. Chosen over Newton because φ'' may degenerate (p < 2) or
//! blow up (p > 2) along the descent path; robustness beats speed at the
//! grid sizes used here.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const ARMIJO_C1: f64 = 1e-4;
const MIN_STEP: f64 = 1e-16;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    /// Stop when the free-node gradient sup-norm drops below
    /// tolerance * (1 + |energy|).
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Smoothing radius for the energy derivative near zero gradients;
    /// 0 disables regularization.
    pub eps_reg: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions { tolerance: 1e-8, max_iterations: 100_000, eps_reg: 0.0 }
    }
}

impl SolverOptions {
    pub fn validate(&self) -> Result<()> {
        if !self.tolerance.is_finite() || self.tolerance <= 0.0 {
            return Err(Error::domain(format!("solver tolerance must be positive, got {}", self.tolerance)));
        }
        if self.max_iterations == 0 {
            return Err(Error::domain("solver needs max_iterations >= 1"));
        }
        if !self.eps_reg.is_finite() || self.eps_reg < 0.0 {
            return Err(Error::domain(format!("eps_reg must be >= 0, got {}", self.eps_reg)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxIterations,
    StepUnderflow,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SolveTrace {
    pub iterations: usize,
    pub energy: f64,
    pub residual: f64,
    pub stop: StopReason,
}

impl SolveTrace {
    pub fn converged(&self) -> bool {
        self.stop == StopReason::Converged
    }
}

/// A differentiable objective over a flat unknown vector.
pub trait SmoothObjective {
    fn energy(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], out: &mut [f64]);
}

/// Minimize the objective from x0. Energy is non-increasing across
/// accepted steps up to floating-point resolution: once the Armijo target
/// falls below the representable decrease of the energy, steps are
/// accepted by strict gradient-norm contraction instead, which is what
/// convex objectives do near the minimizer and lets tolerances reach far
/// below sqrt(machine epsilon). Hitting the iteration cap returns
/// normally with `StopReason::MaxIterations`; a backtracked step below
/// 1e-16 is a stagnation error carrying the trace.
pub fn minimize<O: SmoothObjective>(
    obj: &O,
    mut x: Vec<f64>,
    opts: &SolverOptions,
) -> Result<(Vec<f64>, SolveTrace)> {
    opts.validate()?;
    let n = x.len();
    let mut g = vec![0.0; n];
    let mut g_trial = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut energy = obj.energy(&x);
    let mut step = 0.0f64;
    let mut iterations = 0usize;

    loop {
        obj.gradient(&x, &mut g);
        let residual = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if residual < opts.tolerance * (1.0 + energy.abs()) {
            return Ok((x, SolveTrace { iterations, energy, residual, stop: StopReason::Converged }));
        }
        if iterations >= opts.max_iterations {
            return Ok((x, SolveTrace { iterations, energy, residual, stop: StopReason::MaxIterations }));
        }

        let gsq: f64 = g.iter().map(|v| v * v).sum();
        if step == 0.0 {
            let xnorm: f64 = x.iter().map(|v| v * v).sum::<f64>().sqrt();
            step = 1e-2 * (1.0 + xnorm) / (1.0 + gsq.sqrt());
        } else {
            step *= 2.0;
        }
        let noise = 32.0 * f64::EPSILON * (1.0 + energy.abs());

        loop {
            for i in 0..n {
                trial[i] = x[i] - step * g[i];
            }
            let trial_energy = obj.energy(&trial);
            let target = ARMIJO_C1 * step * gsq;
            let accepted = if target > noise {
                trial_energy <= energy - target
            } else if trial_energy <= energy + noise {
                // The decrease target is below the representable change of
                // the energy, so the comparison carries no signal; judge
                // the step by the gradient instead. Strict decrease keeps
                // lying gradients (no true descent direction) an error.
                obj.gradient(&trial, &mut g_trial);
                let tsq: f64 = g_trial.iter().map(|v| v * v).sum();
                tsq < gsq * (1.0 - 1e-12)
            } else {
                false
            };
            if accepted {
                std::mem::swap(&mut x, &mut trial);
                energy = trial_energy;
                break;
            }
            step *= 0.5;
            if step < MIN_STEP {
                return Err(Error::Solver {
                    reason: "line search found no decrease above the step underflow limit".into(),
                    trace: Box::new(SolveTrace {
                        iterations,
                        energy,
                        residual,
                        stop: StopReason::StepUnderflow,
                    }),
                });
            }
        }
        iterations += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic {
        center: Vec<f64>,
    }

    impl SmoothObjective for Quadratic {
        fn energy(&self, x: &[f64]) -> f64 {
            x.iter().zip(&self.center).map(|(v, c)| 0.5 * (v - c) * (v - c)).sum()
        }
        fn gradient(&self, x: &[f64], out: &mut [f64]) {
            for i in 0..x.len() {
                out[i] = x[i] - self.center[i];
            }
        }
    }

    #[test]
    fn quadratic_converges_to_center() {
        let obj = Quadratic { center: vec![1.0, -2.0, 0.5] };
        let (x, trace) = minimize(&obj, vec![0.0; 3], &SolverOptions::default()).unwrap();
        assert!(trace.converged());
        for (v, c) in x.iter().zip(&obj.center) {
            assert!((v - c).abs() < 1e-7);
        }
    }

    #[test]
    fn starting_at_the_minimizer_converges_immediately() {
        let obj = Quadratic { center: vec![2.0, 2.0] };
        let (_, trace) = minimize(&obj, vec![2.0, 2.0], &SolverOptions::default()).unwrap();
        assert_eq!(trace.iterations, 0);
        assert!(trace.converged());
    }

    #[test]
    fn iteration_cap_returns_normally() {
        let obj = Quadratic { center: vec![1e6] };
        let opts = SolverOptions { tolerance: 1e-14, max_iterations: 3, ..Default::default() };
        let (_, trace) = minimize(&obj, vec![0.0], &opts).unwrap();
        assert_eq!(trace.stop, StopReason::MaxIterations);
        assert_eq!(trace.iterations, 3);
    }

    struct Increasing;

    impl SmoothObjective for Increasing {
        fn energy(&self, x: &[f64]) -> f64 {
            // Gradient lies: claims descent where none exists.
            -x[0]
        }
        fn gradient(&self, _x: &[f64], out: &mut [f64]) {
            out[0] = 1.0;
        }
    }

    #[test]
    fn stagnation_is_an_error_with_trace() {
        let err = minimize(&Increasing, vec![0.0], &SolverOptions::default()).unwrap_err();
        match err {
            Error::Solver { trace, .. } => assert_eq!(trace.stop, StopReason::StepUnderflow),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn invalid_options_are_rejected() {
        assert!(SolverOptions { tolerance: 0.0, ..Default::default() }.validate().is_err());
        assert!(SolverOptions { max_iterations: 0, ..Default::default() }.validate().is_err());
        assert!(SolverOptions { eps_reg: -1.0, ..Default::default() }.validate().is_err());
    }
}
