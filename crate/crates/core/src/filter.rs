//! Third-order low-pass filter whose three states are the smoothed input
//! signal and its first two derivatives:
//!
//! ```text
//! x1' = x2
//! x2' = x3
//! x3' = (u - x1) w2^2 w1 - (w2^2 + 2 zeta w2 w1) x2 - (2 zeta w2 + w1) x3
//! ```
//!
//! Transfer function `H(s) = w1 w2^2 / ((s + w1)(s^2 + 2 zeta w2 s + w2^2))`,
//! unity DC gain. One bank filters a whole vector of channels with shared
//! parameters; derivatives come out of the states directly, with no
//! numerical differentiation.
//!
//! Integration is classical fixed-step RK4 with the measurement held
//! constant over the step, at the control period (1 kHz by default).

use nalgebra::{Complex, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Damping ratio and the two natural frequencies of the filter.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub zeta: f64,
    /// First-order pole (rad/s).
    pub omega1: f64,
    /// Natural frequency of the second-order pair (rad/s).
    pub omega2: f64,
}

impl FilterParams {
    pub fn new(zeta: f64, omega1: f64, omega2: f64) -> Result<Self> {
        let p = Self { zeta, omega1, omega2 };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.zeta > 0.0
            && self.omega1 > 0.0
            && self.omega2 > 0.0
            && self.zeta.is_finite()
            && self.omega1.is_finite()
            && self.omega2.is_finite();
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "filter parameters must be positive and finite: zeta={} omega1={} omega2={}",
                self.zeta, self.omega1, self.omega2
            )))
        }
    }

    /// Complex gain `H(j omega)`. Exactly `1 + 0j` at `omega = 0`.
    pub fn frequency_response(&self, omega: f64) -> Complex<f64> {
        let s = Complex::new(0.0, omega);
        let num = Complex::new(self.omega1 * self.omega2 * self.omega2, 0.0);
        let den = (s + self.omega1)
            * (s * s + s * (2.0 * self.zeta * self.omega2) + self.omega2 * self.omega2);
        num / den
    }
}

/// Per-channel filter states for an n-channel signal.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterBank {
    params: FilterParams,
    dt: f64,
    x1: DVector<f64>,
    x2: DVector<f64>,
    x3: DVector<f64>,
}

impl FilterBank {
    /// Initialize with `x1` at the first measurement and the derivative
    /// states at zero (the at-rest initialization rule).
    pub fn new(params: FilterParams, initial_signal: &DVector<f64>, dt: f64) -> Result<Self> {
        params.validate()?;
        if !initial_signal.iter().all(|x| x.is_finite()) {
            return Err(Error::Config("initial signal must be finite".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Config(format!("dt must be positive, got {dt}")));
        }
        // Explicit-RK4 stability margin for the chosen rate.
        if dt * params.omega1.max(params.omega2) >= 0.5 {
            return Err(Error::Config(format!(
                "dt * max(omega1, omega2) = {} >= 0.5; decrease dt or the filter bandwidth",
                dt * params.omega1.max(params.omega2)
            )));
        }
        let n = initial_signal.len();
        Ok(Self {
            params,
            dt,
            x1: initial_signal.clone(),
            x2: DVector::zeros(n),
            x3: DVector::zeros(n),
        })
    }

    pub fn params(&self) -> FilterParams {
        self.params
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn channels(&self) -> usize {
        self.x1.len()
    }

    /// Smoothed signal.
    pub fn x1(&self) -> &DVector<f64> {
        &self.x1
    }

    /// Smoothed first derivative.
    pub fn x2(&self) -> &DVector<f64> {
        &self.x2
    }

    /// Smoothed second derivative.
    pub fn x3(&self) -> &DVector<f64> {
        &self.x3
    }

    /// Advance one RK4 step with `measurement` held constant over the step.
    /// On a measurement error the states are left untouched.
    pub fn step(&mut self, measurement: &DVector<f64>) -> Result<()> {
        if measurement.len() != self.x1.len() {
            return Err(Error::Measurement(format!(
                "measurement has {} channels, bank has {}",
                measurement.len(),
                self.x1.len()
            )));
        }
        if !measurement.iter().all(|x| x.is_finite()) {
            return Err(Error::Measurement("non-finite measurement".into()));
        }

        let f = |x1: &DVector<f64>, x2: &DVector<f64>, x3: &DVector<f64>| {
            let p = &self.params;
            let gain_in = p.omega2 * p.omega2 * p.omega1;
            let gain_x2 = p.omega2 * p.omega2 + 2.0 * p.zeta * p.omega2 * p.omega1;
            let gain_x3 = 2.0 * p.zeta * p.omega2 + p.omega1;
            let d3 = (measurement - x1) * gain_in - x2 * gain_x2 - x3 * gain_x3;
            (x2.clone(), x3.clone(), d3)
        };

        let h = self.dt;
        let (k1a, k1b, k1c) = f(&self.x1, &self.x2, &self.x3);
        let (k2a, k2b, k2c) = f(
            &(&self.x1 + &k1a * (h / 2.0)),
            &(&self.x2 + &k1b * (h / 2.0)),
            &(&self.x3 + &k1c * (h / 2.0)),
        );
        let (k3a, k3b, k3c) = f(
            &(&self.x1 + &k2a * (h / 2.0)),
            &(&self.x2 + &k2b * (h / 2.0)),
            &(&self.x3 + &k2c * (h / 2.0)),
        );
        let (k4a, k4b, k4c) = f(
            &(&self.x1 + &k3a * h),
            &(&self.x2 + &k3b * h),
            &(&self.x3 + &k3c * h),
        );
        self.x1 += (k1a + k2a * 2.0 + k3a * 2.0 + k4a) * (h / 6.0);
        self.x2 += (k1b + k2b * 2.0 + k3b * 2.0 + k4b) * (h / 6.0);
        self.x3 += (k1c + k2c * 2.0 + k3c * 2.0 + k4c) * (h / 6.0);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params() -> FilterParams {
        FilterParams::new(0.8, 50.0, 50.0).unwrap()
    }

    #[test]
    fn init_sets_signal_and_zero_derivatives() {
        let init = DVector::from_row_slice(&[0.1, -0.2]);
        let bank = FilterBank::new(params(), &init, 0.001).unwrap();
        assert_eq!(bank.x1(), &init);
        assert_eq!(bank.x2(), &DVector::from_row_slice(&[0.0, 0.0]));
        assert_eq!(bank.x3(), &DVector::from_row_slice(&[0.0, 0.0]));
    }

    #[test]
    fn zero_init_gives_zero_states() {
        let bank = FilterBank::new(params(), &DVector::zeros(3), 0.001).unwrap();
        assert!(bank.x1().iter().chain(bank.x2().iter()).all(|&x| x == 0.0));
    }

    #[test]
    fn rejects_unstable_rate() {
        // dt * omega = 1.0 >= 0.5
        let res = FilterBank::new(params(), &DVector::zeros(1), 0.02);
        assert!(matches!(res, Err(Error::Config(_))));
    }

    #[test]
    fn rejects_nonpositive_params() {
        assert!(FilterParams::new(0.0, 50.0, 50.0).is_err());
        assert!(FilterParams::new(0.8, -1.0, 50.0).is_err());
        assert!(FilterParams::new(0.8, 50.0, 0.0).is_err());
    }

    #[test]
    fn constant_input_is_exact_fixed_point() {
        let c = DVector::from_row_slice(&[0.7, -1.3]);
        let mut bank = FilterBank::new(params(), &c, 0.001).unwrap();
        for _ in 0..100 {
            bank.step(&c).unwrap();
        }
        // (c, 0, 0) is an equilibrium of the ODE, so RK4 holds it exactly.
        assert_eq!(bank.x1(), &c);
        assert!(bank.x2().iter().all(|&x| x == 0.0));
        assert!(bank.x3().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn non_finite_measurement_leaves_state_unchanged() {
        let mut bank = FilterBank::new(params(), &DVector::zeros(1), 0.001).unwrap();
        bank.step(&DVector::from_row_slice(&[1.0])).unwrap();
        let before = bank.clone();
        let err = bank.step(&DVector::from_row_slice(&[f64::NAN]));
        assert!(matches!(err, Err(Error::Measurement(_))));
        assert_eq!(bank, before);
    }

    #[test]
    fn dc_gain_is_exactly_one() {
        let h = params().frequency_response(0.0);
        assert_eq!(h.re, 1.0);
        assert_eq!(h.im, 0.0);
    }

    #[test]
    fn frequency_response_at_corner() {
        // |H(j50)| for zeta=0.8, w1=w2=50, evaluated independently.
        let s = Complex::new(0.0, 50.0);
        let expected = Complex::new(50.0 * 2500.0, 0.0)
            / ((s + 50.0) * (s * s + s * 80.0 + 2500.0));
        let h = params().frequency_response(50.0);
        assert_relative_eq!(h.norm(), expected.norm(), max_relative = 1e-12);
        assert_relative_eq!(h.arg(), expected.arg(), max_relative = 1e-12);
    }

    #[test]
    fn rolloff_at_high_frequency() {
        let h = params().frequency_response(1e6);
        assert!(h.norm() < 1e-9);
    }

    #[test]
    fn unity_dc_convergence_on_constant_input() {
        let p = params();
        let c = DVector::from_row_slice(&[2.5]);
        let mut bank = FilterBank::new(p, &DVector::zeros(1), 0.001).unwrap();
        // 10 / min(w1, zeta*w2) seconds is ample settling time.
        let settle = 10.0 / (p.omega1.min(p.zeta * p.omega2));
        let steps = (settle / 0.001).ceil() as usize;
        for _ in 0..steps {
            bank.step(&c).unwrap();
        }
        assert!((bank.x1()[0] - 2.5).abs() < 1e-9 * 2.5f64.max(1.0));
        assert!(bank.x2()[0].abs() < 1e-8);
    }
}
