use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const COSINE_OFFSET: f64 = 0.008;
const BETA_MIN: f64 = 1e-8;
const BETA_MAX: f64 = 0.999;

/// Per-step noise levels for timesteps `1..=T`.
///
/// `alpha_bar(t)` is the running product of `1 - beta(s)` for `s <= t`,
/// with `alpha_bar(0) = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

fn cosine_level(u: f64) -> f64 {
    ((u + COSINE_OFFSET) / (1.0 + COSINE_OFFSET) * std::f64::consts::FRAC_PI_2).cos().powi(2)
}

/// Cosine schedule: the cumulative level follows `f(t/T) / f(0)` with
/// `f(u) = cos²((u + 0.008) / 1.008 · π/2)`; per-step betas are clipped to
/// `[1e-8, 0.999]` and the cumulative product is taken over the clipped betas.
pub fn make_cosine_schedule(steps: usize) -> Result<NoiseSchedule> {
    if steps < 2 {
        return Err(Error::InvalidArgument(format!("need at least 2 timesteps, got {steps}")));
    }
    let f0 = cosine_level(0.0);
    let level = |t: usize| cosine_level(t as f64 / steps as f64) / f0;
    let betas: Vec<f64> = (1..=steps)
        .map(|t| (1.0 - level(t) / level(t - 1)).clamp(BETA_MIN, BETA_MAX))
        .collect();
    NoiseSchedule::from_betas(betas)
}

impl NoiseSchedule {
    /// Schedule from explicit per-step betas, each in `(0, 1)`.
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.len() < 2 || betas.iter().any(|b| !(*b > 0.0 && *b < 1.0)) {
            return Err(Error::InvalidArgument("betas must be at least 2 values in (0, 1)".into()));
        }
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(1.0);
        for b in &betas {
            let prev = *alpha_bars.last().expect("seeded");
            alpha_bars.push(prev * (1.0 - b));
        }
        Ok(Self { betas, alpha_bars })
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    /// `t` in `1..=T`.
    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        1.0 - self.betas[t - 1]
    }

    /// `t` in `0..=T`.
    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    /// Variance of the Gaussian posterior `q(x_{t-1} | x_t, x_0)`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        self.beta(t) * (1.0 - self.alpha_bar(t - 1)) / (1.0 - self.alpha_bar(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cosine_schedule_shape() {
        let s = make_cosine_schedule(100).unwrap();
        assert_eq!(s.steps(), 100);
        assert_eq!(s.alpha_bar(0), 1.0);
        assert!(s.alpha_bar(100) < 1e-3);
        assert!(s.alpha_bar(1) >= 0.99);
        for t in 1..=100 {
            assert!(s.beta(t) > 0.0 && s.beta(t) <= 0.999);
            assert!(s.alpha_bar(t) < s.alpha_bar(t - 1));
        }
        assert!(make_cosine_schedule(1).is_err());
    }

    #[test]
    fn terminal_level_matches_direct_evaluation() {
        // f(1)/f(0) is essentially zero, so the last beta is clipped
        let direct = cosine_level(1.0) / cosine_level(0.0);
        assert!(direct < 1e-30);
        let s = make_cosine_schedule(100).unwrap();
        assert_eq!(s.beta(100), 0.999);
        let unclipped = cosine_level(0.5) / cosine_level(0.0);
        assert!((s.alpha_bar(50) - unclipped).abs() < 1e-12);
    }

    #[test]
    fn first_level_close_to_one_for_fifty_steps() {
        let s = make_cosine_schedule(50).unwrap();
        assert!(s.alpha_bar(1) >= 0.99);
    }
}
