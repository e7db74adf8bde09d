//! ADADELTA optimizer.
//!
//! Per-parameter update with decaying accumulators of squared gradients and
//! squared updates:
//!
//! ```text
//! E[g^2]  <- rho E[g^2]  + (1 - rho) g^2
//! dx       = -(RMS[dx] / RMS[g]) g,   RMS[v] = sqrt(v + eps)
//! E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
//! x       <- x + lr dx
//! ```
//!
//! The ratio of running RMS values makes the step size self-tuning; the
//! conventional configuration is lr = 1.0 with decay 0.95.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct Adadelta {
    pub rho: f64,
    pub eps: f64,
    pub lr: f64,
    /// Accumulators per parameter group: (E[g^2], E[dx^2]).
    acc: Vec<(Vec<f64>, Vec<f64>)>,
}

impl Adadelta {
    pub fn new(rho: f64, eps: f64, lr: f64) -> Result<Adadelta> {
        if !(0.0 < rho && rho < 1.0) {
            return Err(Error::invalid("adadelta decay must lie in (0, 1)"));
        }
        if !(eps > 0.0) {
            return Err(Error::invalid("adadelta eps must be positive"));
        }
        Ok(Adadelta {
            rho,
            eps,
            lr,
            acc: Vec::new(),
        })
    }

    /// Conventional defaults: decay 0.95, eps 1e-6, learning rate 1.
    pub fn standard() -> Adadelta {
        Adadelta::new(0.95, 1e-6, 1.0).expect("constants are valid")
    }

    /// Apply one update. `params` and `grads` are parallel groups of equal
    /// lengths. A non-finite gradient anywhere rejects the whole step and
    /// leaves parameters and accumulators untouched.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != grads.len() {
            return Err(Error::shape("parameter and gradient group counts differ"));
        }
        for (p, g) in params.iter().zip(grads) {
            if p.len() != g.len() {
                return Err(Error::shape("parameter and gradient lengths differ"));
            }
            if !g.iter().all(|v| v.is_finite()) {
                return Err(Error::invalid(
                    "non-finite gradient: step rejected, parameters unchanged",
                ));
            }
        }
        if self.acc.is_empty() {
            self.acc = params
                .iter()
                .map(|p| (vec![0.0; p.len()], vec![0.0; p.len()]))
                .collect();
        } else if self.acc.len() != params.len() {
            return Err(Error::shape(
                "optimizer state does not match parameter groups",
            ));
        }

        for ((p, g), (eg2, edx2)) in params.iter_mut().zip(grads).zip(self.acc.iter_mut()) {
            for i in 0..p.len() {
                let grad = g[i];
                eg2[i] = self.rho * eg2[i] + (1.0 - self.rho) * grad * grad;
                let dx = -((edx2[i] + self.eps).sqrt() / (eg2[i] + self.eps).sqrt()) * grad;
                edx2[i] = self.rho * edx2[i] + (1.0 - self.rho) * dx * dx;
                p[i] += self.lr * dx;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters_unchanged() {
        let mut opt = Adadelta::standard();
        let mut theta = vec![1.0, -2.0, 3.5];
        let grads = vec![0.0; 3];
        opt.step(&mut [&mut theta], &[&grads]).unwrap();
        assert_eq!(theta, vec![1.0, -2.0, 3.5]);
    }

    #[test]
    fn first_step_matches_hand_evaluation() {
        // g=1, rho=0.95, eps=1e-6: E[g^2]=0.05,
        // dx = -sqrt(1e-6)/sqrt(0.05 + 1e-6) ~= -0.0044721.
        let mut opt = Adadelta::standard();
        let mut theta = vec![0.0];
        opt.step(&mut [&mut theta], &[&[1.0][..]]).unwrap();
        assert!((theta[0] - (-0.0044721)).abs() < 1e-6, "{}", theta[0]);
    }

    #[test]
    fn non_finite_gradient_rejects_the_step() {
        let mut opt = Adadelta::standard();
        let mut theta = vec![1.0, 2.0];
        let err = opt.step(&mut [&mut theta], &[&[f64::NAN, 0.0][..]]);
        assert!(err.is_err());
        assert_eq!(theta, vec![1.0, 2.0]);
    }

    #[test]
    fn trajectories_are_bit_identical_across_engines() {
        let mut rng = crate::rng::Rng::seed_from_u64(44);
        let grads: Vec<Vec<f64>> = (0..20)
            .map(|_| (0..5).map(|_| rng.uniform() * 2.0 - 1.0).collect())
            .collect();
        let run = || {
            let mut opt = Adadelta::standard();
            let mut theta = vec![0.25; 5];
            for g in &grads {
                opt.step(&mut [&mut theta], &[g.as_slice()]).unwrap();
            }
            theta
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn updates_are_invariant_to_gradient_rescaling() {
        // With eps negligible the RMS ratio cancels any constant factor on
        // the gradient history, so the applied updates coincide.
        let mut rng = crate::rng::Rng::seed_from_u64(9);
        let history: Vec<f64> = (0..30).map(|_| rng.uniform() * 4.0 - 2.0).collect();
        let run = |scale: f64| {
            let mut opt = Adadelta::new(0.95, 1e-18, 1.0).unwrap();
            let mut theta = vec![0.0];
            let mut trajectory = Vec::new();
            for (step, g) in history.iter().enumerate() {
                let scaled = [g * scale];
                opt.step(&mut [&mut theta], &[&scaled[..]]).unwrap();
                if step > 0 {
                    trajectory.push(theta[0]);
                }
            }
            trajectory
        };
        let base = run(1.0);
        let scaled = run(10.0);
        for (a, b) in base.iter().zip(&scaled) {
            assert!(
                (a - b).abs() <= 1e-9 * a.abs().max(1.0),
                "trajectories diverge: {a} vs {b}"
            );
        }
    }
}
