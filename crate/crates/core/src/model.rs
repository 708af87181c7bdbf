//! Model coefficients of the generalized abcb-Boussinesq system, the two
//! nested parameter regimes, and the speed/KdV-scale relations
//! `omega^2 = 1 - eps^(2/(p+1))`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Coefficients `(a, b, c, p)` with `d = b`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub p: f64,
}

impl ModelParams {
    pub fn new(a: f64, b: f64, c: f64, p: f64) -> Self {
        Self { a, b, c, p }
    }

    /// `a = c = -1/6`, `b = 1/12` (so `sigma = 1/2`) with nonlinearity `p`.
    pub fn reference(p: f64) -> Self {
        Self::new(-1.0 / 6.0, 1.0 / 12.0, -1.0 / 6.0, p)
    }

    pub fn sigma(&self) -> f64 {
        sigma_from_abc(self.a, self.b, self.c)
    }

    /// `sigma - 1/3 = -(a + 2b + c)`, the KdV dispersion coefficient.
    pub fn kdv_m(&self) -> f64 {
        -(self.a + 2.0 * self.b + self.c)
    }

    pub fn validate(&self, level: RegimeLevel) -> Result<ValidationReport> {
        validate(self, level)
    }

    /// Upper end of the admissible speed window, `min(1, sqrt(ac)/b)`.
    pub fn omega_max(&self) -> Result<f64> {
        omega_window(self).map(|(_, hi)| hi)
    }

    pub fn check_omega(&self, omega: f64) -> Result<()> {
        let hi = self.omega_max()?;
        if !(omega.is_finite() && omega > 0.0 && omega < hi) {
            return Err(Error::Validation(format!(
                "omega = {omega} outside the admissible window (0, {hi})"
            )));
        }
        Ok(())
    }
}

/// Which clause of the existence/stability theorem a parameter set must meet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RegimeLevel {
    /// `b > 0, a < 0, c < 0, 2b < -a - c`.
    Existence,
    /// Existence plus `b <= sqrt(ac)`.
    Stability,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub level: RegimeLevel,
    pub checks: Vec<Check>,
    pub passed: bool,
    /// `p` is not of the form odd/odd (or is below 1).
    pub outside_parity_assumptions: bool,
}

impl ValidationReport {
    pub fn into_result(self) -> Result<Self> {
        if self.passed {
            Ok(self)
        } else {
            let failed: Vec<_> = self
                .checks
                .iter()
                .filter(|c| !c.passed)
                .map(|c| format!("{} ({})", c.name, c.detail))
                .collect();
            Err(Error::Validation(failed.join("; ")))
        }
    }
}

pub fn validate(params: &ModelParams, level: RegimeLevel) -> Result<ValidationReport> {
    let ModelParams { a, b, c, p } = *params;
    if ![a, b, c, p].iter().all(|v| v.is_finite()) {
        return Err(Error::Validation(format!(
            "non-finite coefficient in (a, b, c, p) = ({a}, {b}, {c}, {p})"
        )));
    }
    let check = |name: &str, passed: bool, detail: String| Check {
        name: name.to_string(),
        passed,
        detail,
    };
    let mut checks = vec![
        check("b>0", b > 0.0, format!("b = {b}")),
        check("a<0", a < 0.0, format!("a = {a}")),
        check("c<0", c < 0.0, format!("c = {c}")),
        check("2b<-a-c", 2.0 * b < -a - c, format!("2b = {}, -a-c = {}", 2.0 * b, -a - c)),
        check("p>=1", p >= 1.0, format!("p = {p}")),
    ];
    if level == RegimeLevel::Stability {
        // sqrt(ac) is only meaningful for ac >= 0; a failing sign check already fails the report.
        let root = (a * c).max(0.0).sqrt();
        checks.push(check("b<=sqrt(ac)", b <= root, format!("b = {b}, sqrt(ac) = {root}")));
    }
    let passed = checks.iter().all(|c| c.passed);
    Ok(ValidationReport {
        level,
        checks,
        passed,
        outside_parity_assumptions: !is_odd_over_odd(p),
    })
}

/// `1/3 - (a + 2b + c)`, i.e. `a + b + c + d = 1/3 - sigma` with `d = b`.
pub fn sigma_from_abc(a: f64, b: f64, c: f64) -> f64 {
    1.0 / 3.0 - (a + 2.0 * b + c)
}

/// Speed window `(0, min(1, sqrt(ac)/b))`.
///
/// Only the sign conditions `a < 0, b > 0, c < 0` are required here; the
/// `2b < -a - c` clause is checked by [`validate`].
pub fn omega_window(params: &ModelParams) -> Result<(f64, f64)> {
    let ModelParams { a, b, c, .. } = *params;
    if !(a < 0.0 && b > 0.0 && c < 0.0 && a.is_finite() && b.is_finite() && c.is_finite()) {
        return Err(Error::Validation(format!(
            "speed window needs a < 0, b > 0, c < 0; got ({a}, {b}, {c})"
        )));
    }
    let ratio = (params.a * params.c).sqrt() / params.b;
    Ok((0.0, ratio.min(1.0)))
}

/// `eps = (1 - omega^2)^((p+1)/2)`.
pub fn eps_from_omega(omega: f64, p: f64) -> Result<f64> {
    if !(omega > 0.0 && omega < 1.0) {
        return Err(Error::invalid(format!("omega = {omega} must lie in (0, 1)")));
    }
    // (1 - w)(1 + w) avoids cancellation as omega -> 1.
    let s = (1.0 - omega) * (1.0 + omega);
    Ok(s.powf(0.5 * (p + 1.0)))
}

/// Inverse of [`eps_from_omega`].
pub fn omega_from_eps(eps: f64, p: f64) -> Result<f64> {
    if !(eps > 0.0 && eps < 1.0) {
        return Err(Error::invalid(format!("eps = {eps} must lie in (0, 1)")));
    }
    let y = 2.0 / (p + 1.0) * eps.ln();
    Ok((-y.exp_m1()).sqrt())
}

/// A speed together with its KdV scaling parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedPoint {
    pub omega: f64,
    pub eps: f64,
}

impl SpeedPoint {
    pub fn from_omega(omega: f64, p: f64) -> Result<Self> {
        Ok(Self { omega, eps: eps_from_omega(omega, p)? })
    }

    pub fn from_eps(eps: f64, p: f64) -> Result<Self> {
        Ok(Self { omega: omega_from_eps(eps, p)?, eps })
    }

    /// `eps^(1/(p+1)) = sqrt(1 - omega^2)`, the spatial compression factor.
    pub fn length_scale(&self, p: f64) -> f64 {
        self.eps.powf(1.0 / (p + 1.0))
    }
}

/// Sign-preserving real power `sign(u) |u|^p`.
///
/// For odd/odd rational `p` this is the real value of `u^p`; `u * pow_signed(u, p)`
/// then equals `|u|^(p+1)`, which is even in `u`.
#[inline]
pub fn pow_signed(u: f64, p: f64) -> f64 {
    if p == 1.0 {
        return u;
    }
    let mag = if p.fract() == 0.0 && p.abs() < 64.0 {
        u.abs().powi(p as i32)
    } else {
        u.abs().powf(p)
    };
    mag.copysign(u)
}

/// `|u|^(p+1)`, the even power appearing in `G` and in `u^(p+1)/(p+1)`.
#[inline]
pub fn pow_even(u: f64, p: f64) -> f64 {
    u * pow_signed(u, p)
}

/// `p |u|^(p-1)`, the derivative of [`pow_signed`].
#[inline]
pub fn pow_signed_deriv(u: f64, p: f64) -> f64 {
    if p == 1.0 {
        1.0
    } else if p.fract() == 0.0 && p.abs() < 64.0 {
        p * u.abs().powi(p as i32 - 1)
    } else {
        p * u.abs().powf(p - 1.0)
    }
}

/// True when `p >= 1` is (numerically) `p1/p2` with both odd, `p2 < 100`.
pub fn is_odd_over_odd(p: f64) -> bool {
    if !(p.is_finite() && p >= 1.0) {
        return false;
    }
    (1..100u64).step_by(2).any(|den| {
        let num = p * den as f64;
        let rounded = num.round();
        (num - rounded).abs() < 1e-9 * num.max(1.0) && (rounded as u64) % 2 == 1
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn reference_params_pass_stability() {
        let rep = ModelParams::reference(1.0).validate(RegimeLevel::Stability).unwrap();
        assert!(rep.passed, "{rep:?}");
        assert!(!rep.outside_parity_assumptions);
    }

    #[test]
    fn large_b_fails_existence() {
        let rep = ModelParams::new(-1.0 / 6.0, 0.25, -1.0 / 6.0, 1.0)
            .validate(RegimeLevel::Existence)
            .unwrap();
        assert!(!rep.passed);
        assert!(!rep.checks.iter().find(|c| c.name == "2b<-a-c").unwrap().passed);
    }

    #[test]
    fn zero_a_fails() {
        let rep = ModelParams::new(0.0, 1.0 / 12.0, -1.0 / 6.0, 1.0)
            .validate(RegimeLevel::Existence)
            .unwrap();
        assert!(!rep.passed);
        assert!(!rep.checks.iter().find(|c| c.name == "a<0").unwrap().passed);
    }

    #[test]
    fn non_finite_rejected() {
        assert!(ModelParams::new(f64::NAN, 0.1, -0.1, 1.0)
            .validate(RegimeLevel::Existence)
            .is_err());
    }

    #[test]
    fn sigma_values() {
        assert_relative_eq!(sigma_from_abc(-1.0 / 6.0, 1.0 / 12.0, -1.0 / 6.0), 0.5, epsilon = 1e-15);
        assert_eq!(sigma_from_abc(0.0, 0.0, 0.0), 1.0 / 3.0);
        assert_relative_eq!(ModelParams::reference(1.0).kdv_m(), 1.0 / 6.0, epsilon = 1e-15);
    }

    #[test]
    fn omega_windows() {
        assert_eq!(ModelParams::reference(1.0).omega_max().unwrap(), 1.0);
        let p = ModelParams::new(-1.0, 2.0, -1.0, 1.0);
        assert_relative_eq!(p.omega_max().unwrap(), 0.5);
        assert!(ModelParams::new(0.1, 0.1, -0.1, 1.0).omega_max().is_err());
        let small_b = ModelParams::new(-1.0 / 6.0, 1e-12, -1.0 / 6.0, 1.0);
        assert_eq!(small_b.omega_max().unwrap(), 1.0);
    }

    #[test]
    fn eps_examples() {
        assert_relative_eq!(eps_from_omega(0.6, 1.0).unwrap(), 0.64, max_relative = 1e-15);
        assert_relative_eq!(omega_from_eps(0.64, 1.0).unwrap(), 0.6, max_relative = 1e-15);
        let e = eps_from_omega(0.99, 2.0).unwrap();
        assert_relative_eq!(e, 0.0199_f64.powf(1.5), max_relative = 1e-14);
        let back = omega_from_eps(e, 2.0).unwrap();
        assert!(ulps(back, 0.99) <= 2, "{} ulps", ulps(back, 0.99));
        assert!(eps_from_omega(1.0, 1.0).is_err());
        assert!(omega_from_eps(0.0, 1.0).is_err());
    }

    fn ulps(x: f64, y: f64) -> u64 {
        (x.to_bits() as i64 - y.to_bits() as i64).unsigned_abs()
    }

    #[test]
    fn pow_signed_examples() {
        assert_eq!(pow_signed(-2.0, 3.0), -8.0);
        assert_relative_eq!(pow_signed(-8.0, 1.0 / 3.0), -2.0, max_relative = 1e-15);
        assert_relative_eq!(pow_signed(-2.0, 0.6), -(2.0_f64.powf(0.6)), max_relative = 1e-15);
        assert_eq!(pow_even(-2.0, 1.0), 4.0);
        assert_eq!(pow_even(-2.0, 2.0), 8.0);
    }

    #[test]
    fn odd_over_odd_detection() {
        assert!(is_odd_over_odd(1.0));
        assert!(is_odd_over_odd(5.0));
        assert!(is_odd_over_odd(5.0 / 3.0));
        assert!(!is_odd_over_odd(2.0));
        assert!(!is_odd_over_odd(4.1));
        assert!(ModelParams::reference(2.0)
            .validate(RegimeLevel::Stability)
            .unwrap()
            .outside_parity_assumptions);
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(10_000))]

        #[test]
        fn sigma_sign_iff_existence_inequality(a in -2.0f64..-1e-3, b in 1e-3f64..2.0, c in -2.0f64..-1e-3) {
            let gap = sigma_from_abc(a, b, c) - 1.0 / 3.0;
            proptest::prop_assert_eq!(gap > 0.0, 2.0 * b < -a - c);
        }

        #[test]
        fn omega_round_trip(omega in 0.5f64..0.999_999, p in 1.0f64..8.0) {
            let eps = eps_from_omega(omega, p).unwrap();
            let back = omega_from_eps(eps, p).unwrap();
            proptest::prop_assert!(ulps(back, omega) <= 2, "omega={} p={} back={}", omega, p, back);
        }

        #[test]
        fn omega_round_trip_low_speed(omega in 1e-3f64..0.5, p in 1.0f64..8.0) {
            // 1 - omega^2 ~ 1 here: the inverse map amplifies the rounding of eps by (1 - omega^2)/omega^2.
            let eps = eps_from_omega(omega, p).unwrap();
            let back = omega_from_eps(eps, p).unwrap();
            let bound = 4.0 * f64::EPSILON * (1.0 + (1.0 - omega * omega) / (omega * omega));
            proptest::prop_assert!(((back - omega) / omega).abs() <= bound);
        }

        #[test]
        fn pow_signed_is_odd(u in -50.0f64..50.0, p in 1.0f64..7.0) {
            proptest::prop_assert_eq!(pow_signed(-u, p), -pow_signed(u, p));
        }
    }
}
