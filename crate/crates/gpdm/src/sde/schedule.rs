//! The geometric noise schedule of the variance-exploding SDE.

use serde::{Deserialize, Serialize};

use super::SdeError;

pub const DEFAULT_SIGMA_MIN: f64 = 0.01;
pub const DEFAULT_SIGMA_MAX: f64 = 50.0;
pub const DEFAULT_EPS_MIN: f64 = 1e-5;

/// sigma(t) = sigma_min (sigma_max / sigma_min)^t on t in [0, 1].
///
/// All quantities are dimensionless in normalized pose space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    sigma_min: f64,
    sigma_max: f64,
    eps_min: f64,
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        Self {
            sigma_min: DEFAULT_SIGMA_MIN,
            sigma_max: DEFAULT_SIGMA_MAX,
            eps_min: DEFAULT_EPS_MIN,
        }
    }
}

impl NoiseSchedule {
    pub fn new(sigma_min: f64, sigma_max: f64, eps_min: f64) -> Result<Self, SdeError> {
        if !(sigma_min > 0.0 && sigma_min < sigma_max) {
            return Err(SdeError::InvalidSchedule("need 0 < sigma_min < sigma_max"));
        }
        if !(eps_min > 0.0 && eps_min < 1.0) {
            return Err(SdeError::InvalidSchedule("need 0 < eps_min < 1"));
        }
        Ok(Self { sigma_min, sigma_max, eps_min })
    }

    pub fn sigma_min(&self) -> f64 {
        self.sigma_min
    }

    pub fn sigma_max(&self) -> f64 {
        self.sigma_max
    }

    /// The minimal noise level epsilon where sampling terminates.
    pub fn eps_min(&self) -> f64 {
        self.eps_min
    }

    pub fn log_ratio(&self) -> f64 {
        (self.sigma_max / self.sigma_min).ln()
    }

    pub fn sigma(&self, t: f64) -> Result<f64, SdeError> {
        self.check_time(t)?;
        Ok(self.sigma_unchecked(t))
    }

    pub(crate) fn sigma_unchecked(&self, t: f64) -> f64 {
        self.sigma_min * (self.sigma_max / self.sigma_min).powf(t)
    }

    /// sigma(t) * sigma'(t) = sigma(t)^2 ln(sigma_max/sigma_min), the drift
    /// factor of the probability-flow ODE (equals d[sigma^2]/dt / 2).
    pub fn sigma_sq_rate(&self, t: f64) -> Result<f64, SdeError> {
        self.check_time(t)?;
        Ok(self.sigma_sq_rate_unchecked(t))
    }

    pub(crate) fn sigma_sq_rate_unchecked(&self, t: f64) -> f64 {
        let s = self.sigma_unchecked(t);
        s * s * self.log_ratio()
    }

    fn check_time(&self, t: f64) -> Result<(), SdeError> {
        if !(0.0..=1.0).contains(&t) || !t.is_finite() {
            return Err(SdeError::OutOfRange { t, lo: 0.0, hi: 1.0 });
        }
        Ok(())
    }

    pub(crate) fn check_train_time(&self, t: f64) -> Result<(), SdeError> {
        if !(self.eps_min..=1.0).contains(&t) || !t.is_finite() {
            return Err(SdeError::OutOfRange { t, lo: self.eps_min, hi: 1.0 });
        }
        Ok(())
    }
}
