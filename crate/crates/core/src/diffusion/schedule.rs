use crate::error::{Error, Result};

/// Linear-β noise schedule with 0-indexed steps `t ∈ [0, T)`.
///
/// A reverse update at `t` produces `x_{t-1}`; `ᾱ_{-1}` is taken as 1, so
/// stepping from `t = 0` lands on the clean sample.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    /// Posterior standard deviation; `σ_0 = 0`.
    pub sigma: Vec<f64>,
}

impl NoiseSchedule {
    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    /// `ᾱ_t` with `ᾱ_{-1} = 1`.
    pub fn alpha_bar_at(&self, t: Option<usize>) -> f64 {
        t.map_or(1.0, |t| self.alpha_bar[t])
    }

    pub fn check_step(&self, t: usize) -> Result<()> {
        if t >= self.steps() {
            return Err(Error::Index(format!("diffusion step {t} outside [0, {})", self.steps())));
        }
        Ok(())
    }
}

pub fn make_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps == 0 || !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
        return Err(Error::Config(format!(
            "schedule needs T ≥ 1 and 0 < β_start ≤ β_end < 1, got T={steps}, [{beta_start}, {beta_end}]"
        )));
    }
    let beta: Vec<f64> = (0..steps)
        .map(|i| {
            if steps == 1 {
                beta_start
            } else {
                beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64
            }
        })
        .collect();
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let mut alpha_bar = Vec::with_capacity(steps);
    let mut acc = 1.0;
    for a in &alpha {
        acc *= a;
        alpha_bar.push(acc);
    }
    let sigma = (0..steps)
        .map(|t| {
            if t == 0 {
                0.0
            } else {
                ((1.0 - alpha_bar[t - 1]) / (1.0 - alpha_bar[t]) * beta[t]).sqrt()
            }
        })
        .collect();
    Ok(NoiseSchedule { beta, alpha, alpha_bar, sigma })
}

/// The default 1000-step schedule with β from 1e-4 to 0.02.
pub fn default_schedule() -> NoiseSchedule {
    make_schedule(1000, 1e-4, 0.02).expect("valid default schedule")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn final_alpha_bar_is_tiny() {
        let s = default_schedule();
        // Independent oracle: product accumulated in reverse order.
        let direct: f64 = (0..1000).rev().map(|i| 1.0 - (1e-4 + (0.02 - 1e-4) * i as f64 / 999.0)).product();
        assert!((s.alpha_bar[999] - direct).abs() <= 1e-15);
        assert!(s.alpha_bar[999] < 5e-5);
    }

    #[test]
    fn single_step_schedule() {
        let s = make_schedule(1, 0.3, 0.3).unwrap();
        assert_eq!(s.alpha_bar, vec![0.7]);
        assert_eq!(s.sigma, vec![0.0]);
    }

    #[test]
    fn sigma_matches_posterior_variance() {
        let s = default_schedule();
        for t in 1..1000 {
            let expected = (1.0 - s.alpha_bar[t - 1]) / (1.0 - s.alpha_bar[t]) * s.beta[t];
            assert!((s.sigma[t] * s.sigma[t] - expected).abs() <= 1e-15);
        }
        assert_eq!(s.sigma[0], 0.0);
    }

    #[test]
    fn schedule_sanity() {
        let s = default_schedule();
        assert!(s.alpha_bar.windows(2).all(|w| w[1] < w[0]));
        assert!(s.alpha_bar[0] > 0.999);
        for &ab in &s.alpha_bar {
            assert!((ab.sqrt().powi(2) + (1.0 - ab).sqrt().powi(2) - 1.0).abs() <= 1e-12);
        }
        assert!(s.sigma.iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn invalid_ranges_are_rejected() {
        assert!(make_schedule(10, 0.0, 0.02).is_err());
        assert!(make_schedule(10, 0.03, 0.02).is_err());
        assert!(make_schedule(10, 0.01, 1.0).is_err());
        assert!(make_schedule(0, 0.01, 0.02).is_err());
    }
}
