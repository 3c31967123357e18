//! Sigmoid RF-to-DC conversion curve of an energy receiver.
//!
//! The curve is a logistic function shifted and rescaled so that zero input
//! RF power yields zero output DC power. All powers are in mW.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Saturation DC power of the default rectifier fit, mW.
pub const DEFAULT_Q_MAX_MW: f64 = 10.73;
/// Steepness of the default fit, 1/mW.
pub const DEFAULT_A_PER_MW: f64 = 0.2308;
/// Center (inflection point) of the default fit, mW.
pub const DEFAULT_B_MW: f64 = 5.365;

/// Parameters of the sigmoid energy-harvesting curve.
///
/// `omega` is always derived from `(a, b)` and cannot be set directly.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EhParams {
    q_max: f64,
    a: f64,
    b: f64,
    omega: f64,
}

impl EhParams {
    pub fn new(q_max_mw: f64, a_per_mw: f64, b_mw: f64) -> Result<Self> {
        for (name, v) in [("q_max_mw", q_max_mw), ("a_per_mw", a_per_mw), ("b_mw", b_mw)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be positive and finite, got {v}")));
            }
        }
        // 1/(1+e^{ab}) written to stay finite for large a*b.
        let omega = logistic(-a_per_mw * b_mw);
        Ok(Self { q_max: q_max_mw, a: a_per_mw, b: b_mw, omega })
    }

    pub fn q_max(&self) -> f64 {
        self.q_max
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    /// Zero-offset constant `1/(1+e^{a b})`.
    pub fn omega(&self) -> f64 {
        self.omega
    }

    /// Output DC power (mW) for an input RF power `q_rf` (mW).
    pub fn dc_power(&self, q_rf: f64) -> Result<f64> {
        check_input(q_rf)?;
        Ok(self.dc_power_unchecked(q_rf))
    }

    /// First derivative of [`Self::dc_power`] with respect to the RF power.
    pub fn dc_power_derivative(&self, q_rf: f64) -> Result<f64> {
        check_input(q_rf)?;
        Ok(self.dc_power_derivative_unchecked(q_rf))
    }

    /// RF power at which the curve switches from convex to concave.
    pub fn inflection_point(&self) -> f64 {
        self.b
    }

    pub(crate) fn dc_power_unchecked(&self, q_rf: f64) -> f64 {
        // (sig(x) - omega) / (1 - omega) with sig the unit logistic of a(x-b).
        // At x = 0 the lower branch subtracts omega from itself, so the
        // output is exactly zero.
        let x = self.a * (q_rf - self.b);
        let frac = if x >= 0.0 {
            // Upper half: work with the logistic complement, which is exact to
            // full relative precision, so the result is accurate near q_max.
            1.0 - logistic(-x) / (1.0 - self.omega)
        } else {
            (logistic(x) - self.omega) / (1.0 - self.omega)
        };
        (self.q_max * frac).max(0.0)
    }

    pub(crate) fn dc_power_derivative_unchecked(&self, q_rf: f64) -> f64 {
        // sig' = sig (1 - sig) avoids overflow of e^{-a(x-b)} for large x.
        let sig = logistic(self.a * (q_rf - self.b));
        self.q_max * self.a * sig * (1.0 - sig) / (1.0 - self.omega)
    }
}

impl Default for EhParams {
    fn default() -> Self {
        Self::new(DEFAULT_Q_MAX_MW, DEFAULT_A_PER_MW, DEFAULT_B_MW).expect("default EH parameters are valid")
    }
}

/// Plain-data form of [`EhParams`] used by configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EhConfig {
    #[serde(default = "default_q_max")]
    pub q_max_mw: f64,
    #[serde(default = "default_a")]
    pub a_per_mw: f64,
    #[serde(default = "default_b")]
    pub b_mw: f64,
}

fn default_q_max() -> f64 {
    DEFAULT_Q_MAX_MW
}
fn default_a() -> f64 {
    DEFAULT_A_PER_MW
}
fn default_b() -> f64 {
    DEFAULT_B_MW
}

impl Default for EhConfig {
    fn default() -> Self {
        Self { q_max_mw: DEFAULT_Q_MAX_MW, a_per_mw: DEFAULT_A_PER_MW, b_mw: DEFAULT_B_MW }
    }
}

impl TryFrom<EhConfig> for EhParams {
    type Error = Error;

    fn try_from(c: EhConfig) -> Result<Self> {
        EhParams::new(c.q_max_mw, c.a_per_mw, c.b_mw)
    }
}

fn check_input(q_rf: f64) -> Result<()> {
    if q_rf.is_nan() || q_rf < 0.0 {
        return Err(Error::Domain(format!("RF power must be non-negative, got {q_rf}")));
    }
    Ok(())
}

fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn central_diff(p: &EhParams, q: f64, h: f64) -> f64 {
        (p.dc_power(q + h).unwrap() - p.dc_power(q - h).unwrap()) / (2.0 * h)
    }

    fn second_diff(p: &EhParams, q: f64, h: f64) -> f64 {
        (p.dc_power(q + h).unwrap() - 2.0 * p.dc_power(q).unwrap() + p.dc_power(q - h).unwrap()) / (h * h)
    }

    #[test]
    fn reference_curve_points() {
        let p = EhParams::default();
        assert!((p.dc_power(1.5).unwrap() - 0.9127).abs() < 1e-3);
        assert!((p.dc_power(3.0).unwrap() - 1.9666).abs() < 1e-3);
        assert_eq!(p.dc_power(0.0).unwrap(), 0.0);
    }

    #[test]
    fn omega_matches_closed_form() {
        let p = EhParams::default();
        let expected = 1.0 / (1.0 + (0.2308f64 * 5.365).exp());
        assert!((p.omega() - expected).abs() < 1e-15);
        assert!(p.omega() > 0.0 && p.omega() < 0.5);
    }

    #[test]
    fn saturates_at_q_max() {
        let p = EhParams::default();
        let far = p.dc_power(1e4).unwrap();
        assert!((far - p.q_max()).abs() < 1e-9);
        assert!(p.dc_power_derivative(1e4).unwrap() < 1e-12);
    }

    #[test]
    fn derivative_at_center() {
        let p = EhParams::default();
        let expected = p.q_max() * p.a() / (4.0 * (1.0 - p.omega()));
        assert!((p.dc_power_derivative(p.b()).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn derivative_matches_finite_differences() {
        let p = EhParams::default();
        for q in [0.5, 3.0, 8.0, 20.0] {
            let d = p.dc_power_derivative(q).unwrap();
            let fd = central_diff(&p, q, 1e-5);
            assert!(((d - fd) / d).abs() <= 1e-6, "q={q}: {d} vs {fd}");
        }
    }

    #[test]
    fn inflection_is_center() {
        let p = EhParams::default();
        assert_eq!(p.inflection_point(), 5.365);
        assert!(second_diff(&p, p.b() - 1.0, 1e-3) > 0.0);
        assert!(second_diff(&p, p.b() + 1.0, 1e-3) < 0.0);
        let doubled = EhParams::new(p.q_max(), p.a(), 2.0 * p.b()).unwrap();
        assert_eq!(doubled.inflection_point(), 2.0 * p.inflection_point());
    }

    #[test]
    fn rejects_negative_input() {
        let p = EhParams::default();
        assert!(matches!(p.dc_power(-1e-9), Err(Error::Domain(_))));
        assert!(matches!(p.dc_power_derivative(-1.0), Err(Error::Domain(_))));
        assert!(p.dc_power(f64::NAN).is_err());
    }

    #[test]
    fn rejects_bad_params() {
        assert!(EhParams::new(0.0, 0.2, 5.0).is_err());
        assert!(EhParams::new(10.0, -0.2, 5.0).is_err());
        assert!(EhParams::new(10.0, 0.2, f64::INFINITY).is_err());
    }

    fn params() -> impl Strategy<Value = EhParams> {
        (0.1f64..100.0, 0.01f64..2.0, 0.1f64..20.0).prop_map(|(q, a, b)| EhParams::new(q, a, b).unwrap())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(100))]

        #[test]
        fn zero_in_zero_out(p in params()) {
            prop_assert_eq!(p.dc_power(0.0).unwrap(), 0.0);
        }

        #[test]
        fn monotone_and_bounded(p in params(), q1 in 0.0f64..200.0, dq in 0.0f64..50.0) {
            let lo = p.dc_power(q1).unwrap();
            let hi = p.dc_power(q1 + dq).unwrap();
            prop_assert!(lo <= hi);
            prop_assert!(lo >= 0.0 && hi <= p.q_max());
            prop_assert!(p.dc_power_derivative(q1).unwrap() >= 0.0);
        }

        #[test]
        fn convex_then_concave(frac in 0.05f64..0.95, far in 1.05f64..3.95) {
            let p = EhParams::default();
            let b = p.b();
            prop_assert!(second_diff(&p, frac * b, 1e-3) >= -1e-9);
            prop_assert!(second_diff(&p, far * b, 1e-3) <= 1e-9);
        }
    }

    #[test]
    fn derivative_grid() {
        let p = EhParams::default();
        let mut q = 0.01;
        while q <= 50.0 {
            let d = p.dc_power_derivative(q).unwrap();
            let fd = central_diff(&p, q, 1e-5);
            assert!(((d - fd) / d).abs() <= 1e-6, "q={q}");
            q += 0.37;
        }
        let d = p.dc_power_derivative(50.0).unwrap();
        assert!(((d - central_diff(&p, 50.0, 1e-5)) / d).abs() <= 1e-6);
    }

    #[test]
    fn strictly_below_q_max() {
        let p = EhParams::default();
        for q in [0.0, 1.0, 5.0, 10.0, 40.0] {
            assert!(p.dc_power(q).unwrap() < p.q_max());
        }
    }
}
