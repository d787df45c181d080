//! Dormand-Prince 5(4) with PI step control, plus fixed-step Euler.
//!
//! The integrator runs a whole batch of trajectories in lockstep under one
//! controller (error = worst trajectory), which lets the score network be
//! evaluated as a single matrix per stage. Results are deterministic for
//! any worker count because rows are computed independently.

use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;

use super::SamplerError;

/// Butcher tableau of Dormand-Prince 5(4).
const A: [[f64; 6]; 6] = [
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
const C: [f64; 6] = [1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
/// 5th-order weights (row 7 of A is the solution; FSAL).
const B5: [f64; 7] = [
    35.0 / 384.0,
    0.0,
    500.0 / 1113.0,
    125.0 / 192.0,
    -2187.0 / 6784.0,
    11.0 / 84.0,
    0.0,
];
/// Embedded 4th-order weights.
const B4: [f64; 7] = [
    5179.0 / 57600.0,
    0.0,
    7571.0 / 16695.0,
    393.0 / 640.0,
    -92097.0 / 339200.0,
    187.0 / 2100.0,
    1.0 / 40.0,
];

const SAFETY: f64 = 0.9;
const FAC_MIN: f64 = 0.2;
const FAC_MAX: f64 = 5.0;
const BETA: f64 = 0.04;
const EXPO1: f64 = 0.2 - BETA * 0.75;
const MIN_STEP: f64 = 1e-12;
const MAX_STEPS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum OdeMethod {
    #[default]
    Rk45Adaptive,
    EulerFixed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OdeConfig {
    pub method: OdeMethod,
    pub abs_tol: f64,
    pub rel_tol: f64,
    /// Step count for [`OdeMethod::EulerFixed`].
    pub fixed_steps: usize,
    pub t_start: f64,
    pub t_end: f64,
}

impl Default for OdeConfig {
    fn default() -> Self {
        Self {
            method: OdeMethod::Rk45Adaptive,
            abs_tol: 1e-5,
            rel_tol: 1e-5,
            fixed_steps: 500,
            t_start: 1.0,
            t_end: 1e-5,
        }
    }
}

impl OdeConfig {
    pub fn validate(&self) -> Result<(), SamplerError> {
        if !(self.t_start > self.t_end) {
            return Err(SamplerError::Config("need t_start > t_end"));
        }
        if self.abs_tol <= 0.0 || self.rel_tol <= 0.0 {
            return Err(SamplerError::Config("tolerances must be positive"));
        }
        if self.fixed_steps == 0 {
            return Err(SamplerError::Config("fixed_steps must be positive"));
        }
        Ok(())
    }
}

/// Integration telemetry for one solver call.
#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub struct StepStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evals: usize,
    pub min_step: f64,
}

/// Hairer-style mixed error norm, maximized over trajectories.
fn error_norm(err: &Tensor, y0: &Tensor, y1: &Tensor, atol: f64, rtol: f64) -> (f64, usize) {
    let mut worst = 0.0;
    let mut worst_row = 0;
    for r in 0..err.rows {
        let mut acc = 0.0;
        for c in 0..err.cols {
            let scale = atol + rtol * y0.get(r, c).abs().max(y1.get(r, c).abs());
            let e = err.get(r, c) / scale;
            acc += e * e;
        }
        let rms = (acc / err.cols as f64).sqrt();
        if rms > worst {
            worst = rms;
            worst_row = r;
        }
    }
    (worst, worst_row)
}

fn axpy_stages(y: &Tensor, h: f64, coeffs: &[f64], stages: &[Tensor]) -> Tensor {
    let mut out = y.clone();
    for (c, k) in coeffs.iter().zip(stages) {
        if *c == 0.0 {
            continue;
        }
        for (o, v) in out.data.iter_mut().zip(&k.data) {
            *o += h * c * v;
        }
    }
    out
}

/// Adaptive Dormand-Prince sweep from `t0` to `t1` (either direction).
pub fn rk45_adaptive(
    f: &dyn Fn(&Tensor, f64) -> Tensor,
    y0: Tensor,
    t0: f64,
    t1: f64,
    atol: f64,
    rtol: f64,
) -> Result<(Tensor, StepStats), SamplerError> {
    let posneg = (t1 - t0).signum();
    let mut h = (t1 - t0) / 100.0;
    let mut t = t0;
    let mut y = y0;
    let mut stats = StepStats { min_step: h.abs(), ..Default::default() };
    let mut facold: f64 = 1e-4;
    let mut k1 = f(&y, t);
    stats.evals += 1;
    let mut steps = 0;
    while (t1 - t) * posneg > 0.0 {
        steps += 1;
        if steps > MAX_STEPS {
            return Err(SamplerError::StepLimit(MAX_STEPS));
        }
        // do not overshoot the endpoint
        if (t + h - t1) * posneg > 0.0 {
            h = t1 - t;
        }
        let mut stages: Vec<Tensor> = Vec::with_capacity(7);
        stages.push(k1.clone());
        for s in 0..6 {
            let ys = axpy_stages(&y, h, &A[s][..=s], &stages);
            let ts = t + C[s] * h;
            stages.push(f(&ys, ts));
            stats.evals += 1;
        }
        let y5 = axpy_stages(&y, h, &B5, &stages);
        let y4 = axpy_stages(&y, h, &B4, &stages);
        let err_t = y5.sub(&y4);
        if !y5.is_finite() {
            return Err(SamplerError::NonFinite { t });
        }
        let (err, worst) = error_norm(&err_t, &y, &y5, atol, rtol);
        if err <= 1.0 {
            // accept; PI controller with growth clamp
            stats.accepted += 1;
            stats.min_step = stats.min_step.min(h.abs());
            t += h;
            y = y5;
            // FSAL: stage 7 was evaluated at (t + h, y5)
            k1 = stages[6].clone();
            let fac = (SAFETY * err.max(1e-10).powf(-EXPO1) * facold.powf(BETA))
                .clamp(FAC_MIN, FAC_MAX);
            facold = err.max(1e-4);
            h *= fac;
        } else {
            stats.rejected += 1;
            let fac = (SAFETY * err.powf(-EXPO1)).clamp(FAC_MIN, 1.0);
            h *= fac;
        }
        if h.abs() < MIN_STEP && (t1 - t) * posneg > 0.0 {
            return Err(SamplerError::OdeStepUnderflow { t, h, worst });
        }
    }
    Ok((y, stats))
}

/// Fixed-step forward Euler on the same interface.
pub fn euler_fixed(
    f: &dyn Fn(&Tensor, f64) -> Tensor,
    y0: Tensor,
    t0: f64,
    t1: f64,
    steps: usize,
) -> Result<(Tensor, StepStats), SamplerError> {
    let h = (t1 - t0) / steps as f64;
    let mut y = y0;
    let mut stats = StepStats { min_step: h.abs(), ..Default::default() };
    for k in 0..steps {
        let t = t0 + k as f64 * h;
        let dy = f(&y, t);
        stats.evals += 1;
        for (o, v) in y.data.iter_mut().zip(&dy.data) {
            *o += h * v;
        }
        if !y.is_finite() {
            return Err(SamplerError::NonFinite { t });
        }
        stats.accepted += 1;
    }
    Ok((y, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// dy/dt = -y has the exact solution y0 * exp(-(t - t0)).
    #[test]
    fn rk45_solves_linear_decay() {
        let f = |y: &Tensor, _t: f64| y.scale(-1.0);
        let y0 = Tensor::from_vec(2, 2, vec![1.0, 2.0, -1.0, 0.5]);
        let (y, stats) = rk45_adaptive(&f, y0.clone(), 0.0, 3.0, 1e-8, 1e-8).unwrap();
        for (a, b) in y.data.iter().zip(&y0.data) {
            assert!((a - b * (-3.0f64).exp()).abs() < 1e-7, "{a} vs {b}");
        }
        assert!(stats.accepted > 0);
        assert_eq!(stats.rejected + stats.accepted + 1, stats.evals / 6 + 1);
    }

    #[test]
    fn rk45_integrates_backward() {
        // dy/dt = y integrated from t=1 back to 0 gives y(0) = y(1)/e.
        let f = |y: &Tensor, _t: f64| y.clone();
        let y0 = Tensor::scalar(std::f64::consts::E);
        let (y, _) = rk45_adaptive(&f, y0, 1.0, 0.0, 1e-10, 1e-10).unwrap();
        assert!((y.data[0] - 1.0).abs() < 1e-8, "{}", y.data[0]);
    }

    #[test]
    fn rk45_nonautonomous_polynomial_is_exact() {
        // dy/dt = 4 t^3 -> y = t^4; a 5th-order method nails cubics.
        let f = |y: &Tensor, t: f64| Tensor::filled(y.rows, y.cols, 4.0 * t * t * t);
        let (y, _) = rk45_adaptive(&f, Tensor::scalar(0.0), 0.0, 2.0, 1e-10, 1e-10).unwrap();
        assert!((y.data[0] - 16.0).abs() < 1e-9);
    }

    #[test]
    fn euler_first_order_convergence() {
        let f = |y: &Tensor, _t: f64| y.scale(-1.0);
        let y0 = Tensor::scalar(1.0);
        let exact = (-1.0f64).exp();
        let (y_coarse, _) = euler_fixed(&f, y0.clone(), 0.0, 1.0, 200).unwrap();
        let (y_fine, _) = euler_fixed(&f, y0, 0.0, 1.0, 400).unwrap();
        let e_coarse = (y_coarse.data[0] - exact).abs();
        let e_fine = (y_fine.data[0] - exact).abs();
        let ratio = e_coarse / e_fine;
        assert!((ratio - 2.0).abs() < 0.2, "halving h should halve error: {ratio}");
    }

    #[test]
    fn step_underflow_detected() {
        // A field whose magnitude explodes so violently the controller
        // collapses: 1/(1.0000001 - t) style singularity inside the span.
        let f = |y: &Tensor, t: f64| y.map(|v| (v * v + 1.0) / (1.0 - t).max(1e-300));
        let r = rk45_adaptive(&f, Tensor::scalar(1.0), 0.0, 1.0, 1e-10, 1e-10);
        assert!(matches!(
            r,
            Err(SamplerError::OdeStepUnderflow { .. }) | Err(SamplerError::NonFinite { .. })
        ));
    }

    #[test]
    fn config_validation() {
        let mut cfg = OdeConfig::default();
        cfg.validate().unwrap();
        cfg.t_end = 2.0;
        assert!(cfg.validate().is_err());
    }
}
