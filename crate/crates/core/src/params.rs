//! Coefficients of the damped equation and the decay/growth exponents they predict.
//!
//! The damped wave `u_tt - Δu + μ₁/(1+t) u_t + μ₂/(1+t)² u = 0` is mapped by
//! `v = (1+t)^{μ₁/2} u` to a Klein-Gordon equation with mass `μ/(1+t)²`, where
//! `μ = μ₁(2-μ₁)/4 + μ₂`. Everything downstream is parameterised by `μ` and the
//! Bessel order `ν = √(1-4μ)/2` (purely imaginary when `μ > 1/4`).

use num_complex::Complex64;

/// Sign of the nonlinear term `λ|v|^{p-1}v`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LambdaSign {
    Plus,
    Minus,
}

impl LambdaSign {
    pub fn value(self) -> f64 {
        match self {
            LambdaSign::Plus => 1.0,
            LambdaSign::Minus => -1.0,
        }
    }
}

impl std::str::FromStr for LambdaSign {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "+1" | "1" | "+" | "plus" => Ok(LambdaSign::Plus),
            "-1" | "-" | "minus" => Ok(LambdaSign::Minus),
            other => Err(format!("invalid lambda sign `{other}` (expected +1 or -1)")),
        }
    }
}

/// Damping/mass coefficients together with the derived effective mass and Bessel order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoefficientSet {
    pub mu1: f64,
    pub mu2: f64,
    /// Effective mass `μ₁(2-μ₁)/4 + μ₂`.
    pub mu: f64,
    /// Bessel order; real and non-negative for `μ ≤ 1/4`, purely imaginary above.
    pub nu: Complex64,
    pub lambda: LambdaSign,
    pub dimension: usize,
}

impl CoefficientSet {
    /// Derive `μ` and `ν` from the damping and mass coefficients.
    ///
    /// # Panics
    /// Panics if `dimension == 0`.
    pub fn derive(mu1: f64, mu2: f64, dimension: usize) -> Self {
        assert!(dimension >= 1, "spatial dimension must be at least 1");
        let mu = effective_mass(mu1, mu2);
        CoefficientSet {
            mu1,
            mu2,
            mu,
            nu: bessel_order_for_mass(mu),
            lambda: LambdaSign::Plus,
            dimension,
        }
    }

    /// Coefficients with no damping (`μ₁ = 0`) and the given effective mass.
    pub fn from_mass(mu: f64, dimension: usize) -> Self {
        Self::derive(0.0, mu, dimension)
    }

    /// Damping `μ₁` with `μ₂` chosen so that the effective mass is exactly `mu`.
    pub fn from_damping_and_mass(mu1: f64, mu: f64, dimension: usize) -> Self {
        let mut c = Self::derive(mu1, mu - mu1 * (2.0 - mu1) / 4.0, dimension);
        c.mu = mu;
        c.nu = bessel_order_for_mass(mu);
        c
    }

    pub fn with_lambda(mut self, lambda: LambdaSign) -> Self {
        self.lambda = lambda;
        self
    }

    pub fn re_nu(&self) -> f64 {
        self.nu.re
    }

    /// `μ = 1/4` exactly, the logarithmic (ν = 0) case.
    pub fn is_log_case(&self) -> bool {
        self.mu == 0.25
    }

    /// Energy-critical power `1 + 4/(d-2)`; `None` for `d ≤ 2`.
    pub fn critical_power(&self) -> Option<f64> {
        (self.dimension >= 3).then(|| 1.0 + 4.0 / (self.dimension as f64 - 2.0))
    }

    /// Exponent of the time weight in front of the nonlinearity, `2μ₁/(d-2)`.
    pub fn nonlinear_weight_exponent(&self) -> Option<f64> {
        (self.dimension >= 3).then(|| 2.0 * self.mu1 / (self.dimension as f64 - 2.0))
    }
}

/// `μ₁(2-μ₁)/4 + μ₂`.
pub fn effective_mass(mu1: f64, mu2: f64) -> f64 {
    mu1 * (2.0 - mu1) / 4.0 + mu2
}

pub fn bessel_order_for_mass(mu: f64) -> Complex64 {
    if mu <= 0.25 {
        Complex64::new((1.0 - 4.0 * mu).sqrt() / 2.0, 0.0)
    } else {
        Complex64::new(0.0, (4.0 * mu - 1.0).sqrt() / 2.0)
    }
}

/// Convenience wrapper matching the free-function form of [`CoefficientSet::derive`].
pub fn derive_coefficients(mu1: f64, mu2: f64, dimension: usize) -> CoefficientSet {
    CoefficientSet::derive(mu1, mu2, dimension)
}

/// Predicted exponents for the linear and nonlinear problems.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatePrediction {
    /// Exponent `-1/2 + Re ν` of the linear scattering error.
    pub linear_order: f64,
    /// True iff `μ = 1/4`, where the bound carries an extra `1 + log(1+t)`.
    pub has_log: bool,
    /// `max{-1/2 + Re ν, -2μ₁/(d-2)}`; `None` when `d ≤ 2`.
    pub nonlinear_order: Option<f64>,
    /// Extra `-μ₁/2` picked up when returning to the damped unknown.
    pub dw_shift: f64,
    /// L² growth exponent `max{1/2 + Re ν, 1 - 2μ₁/(d-2)}`; `None` when `d ≤ 2`.
    pub alpha: Option<f64>,
    /// Order that is actually visible in the nonlinear error: when `μ = 0` the
    /// linear contribution carries a zero prefactor and only `-2μ₁/(d-2)` remains.
    pub nonlinear_effective_order: Option<f64>,
}

impl RatePrediction {
    /// Exponent of the position error for the damped unknown `u`.
    pub fn dw_linear_order(&self) -> f64 {
        self.linear_order + self.dw_shift
    }
}

pub fn predict_rates(c: &CoefficientSet) -> RatePrediction {
    let linear_order = -0.5 + c.re_nu();
    let weight = c.nonlinear_weight_exponent();
    let nonlinear_order = weight.map(|w| linear_order.max(-w));
    let nonlinear_effective_order = weight.map(|w| if c.mu == 0.0 { -w } else { linear_order.max(-w) });
    RatePrediction {
        linear_order,
        has_log: c.is_log_case(),
        nonlinear_order,
        dw_shift: -c.mu1 / 2.0,
        alpha: weight.map(|w| (0.5 + c.re_nu()).max(1.0 - w)),
        nonlinear_effective_order,
    }
}

/// Result of a wave-admissibility check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Admissibility {
    pub admissible: bool,
    /// Derivative loss `d(1/2 - 1/r) - 1/q`.
    pub gamma: f64,
}

/// Wave admissibility of `(q, r)` in dimension `d`; exponents may be `f64::INFINITY`.
pub fn check_admissible_pair(q: f64, r: f64, d: usize) -> Admissibility {
    let inv_q = 1.0 / q;
    let inv_r = 1.0 / r;
    let dim = d as f64;
    let gamma = dim * (0.5 - inv_r) - inv_q;
    let in_range = q >= 2.0 && r >= 2.0;
    let endpoint = q == 2.0 && r.is_infinite() && d == 3;
    let admissible = in_range && !endpoint && inv_q <= (dim - 1.0) / 2.0 * (0.5 - inv_r);
    Admissibility { admissible, gamma }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn free_wave_case() {
        let c = derive_coefficients(2.0, 0.0, 3);
        assert_eq!(c.mu, 0.0);
        assert_eq!(c.nu, Complex64::new(0.5, 0.0));
    }

    #[test]
    fn log_boundary() {
        let c = derive_coefficients(0.0, 0.25, 3);
        assert_eq!(c.mu, 0.25);
        assert_eq!(c.nu, Complex64::new(0.0, 0.0));
        assert!(c.is_log_case());
        // μ₁ = 1, μ₂ = 0 also lands exactly on 1/4.
        assert!(derive_coefficients(1.0, 0.0, 1).is_log_case());
    }

    #[test]
    fn imaginary_order() {
        let c = derive_coefficients(0.0, 0.5, 3);
        assert_eq!(c.mu, 0.5);
        assert_eq!(c.nu, Complex64::new(0.0, 0.5));
    }

    #[test]
    fn rates_for_quarter_order() {
        let c = derive_coefficients(1.0, 0.1875 - 0.25, 3);
        assert_eq!(c.mu, 0.1875);
        assert!((c.nu.re - 0.25).abs() < 1e-15);
        let r = predict_rates(&c);
        assert!((r.linear_order + 0.25).abs() < 1e-15);
        assert!((r.nonlinear_order.unwrap() + 0.25).abs() < 1e-15);
        assert_eq!(r.dw_shift, -0.5);
        assert!((r.alpha.unwrap() - 0.75).abs() < 1e-15);
        assert!(!r.has_log);
    }

    #[test]
    fn rates_at_zero_and_quarter_mass() {
        let r = predict_rates(&CoefficientSet::from_mass(0.0, 3));
        assert_eq!(r.linear_order, 0.0);
        assert!(!r.has_log);
        let r = predict_rates(&CoefficientSet::from_mass(0.25, 3));
        assert_eq!(r.linear_order, -0.5);
        assert!(r.has_log);
    }

    #[test]
    fn pure_nonlinear_regime() {
        let mu1 = 0.05;
        let c = derive_coefficients(mu1, -mu1 * (2.0 - mu1) / 4.0, 3);
        assert_eq!(c.mu, 0.0);
        let r = predict_rates(&c);
        assert_eq!(r.nonlinear_order, Some(0.0));
        assert!((r.nonlinear_effective_order.unwrap() + 0.1).abs() < 1e-15);
    }

    #[test]
    fn no_nonlinear_rates_below_three_dimensions() {
        let r = predict_rates(&CoefficientSet::from_mass(0.1, 1));
        assert!(r.nonlinear_order.is_none() && r.alpha.is_none());
    }

    #[test]
    fn admissible_pairs() {
        let a = check_admissible_pair(5.0, 10.0, 3);
        assert!(a.admissible);
        assert!((a.gamma - 1.0).abs() < 1e-15);
        assert!(!check_admissible_pair(2.0, f64::INFINITY, 3).admissible);
        let e = check_admissible_pair(f64::INFINITY, 2.0, 3);
        assert!(e.admissible);
        assert_eq!(e.gamma, 0.0);
        // (p₁, 2p₁) with γ = 1 for d = 4, 5, 6 as well.
        for d in 4..=6 {
            let p = 1.0 + 4.0 / (d as f64 - 2.0);
            let a = check_admissible_pair(p, 2.0 * p, d);
            assert!(a.admissible, "d = {d}");
            assert!((a.gamma - 1.0).abs() < 1e-14);
        }
    }

    proptest! {
        #[test]
        fn mass_is_reproducible(mu1 in -5.0f64..5.0, mu2 in -5.0f64..5.0) {
            let c = derive_coefficients(mu1, mu2, 3);
            prop_assert_eq!(c.mu.to_bits(), (mu1 * (2.0 - mu1) / 4.0 + mu2).to_bits());
        }

        #[test]
        fn order_squared_plus_mass_is_quarter(mu1 in -5.0f64..5.0, mu2 in -5.0f64..5.0) {
            let c = derive_coefficients(mu1, mu2, 3);
            let s = c.nu * c.nu + c.mu;
            prop_assert!((s.re - 0.25).abs() < 1e-14 * (1.0 + c.mu.abs()));
            prop_assert!(s.im.abs() < 1e-14);
        }

        #[test]
        fn order_kind_matches_mass(mu in -3.0f64..3.0) {
            let c = CoefficientSet::from_mass(mu, 1);
            if mu <= 0.25 {
                prop_assert!(c.nu.im == 0.0 && c.nu.re >= 0.0);
            } else {
                prop_assert!(c.nu.re == 0.0 && c.nu.im > 0.0);
            }
            if mu > 0.0 {
                prop_assert!(c.re_nu() < 0.5);
            }
        }

        #[test]
        fn linear_order_monotone(a in 0.0f64..0.25, b in 0.0f64..0.25) {
            prop_assume!(a < b);
            let ra = predict_rates(&CoefficientSet::from_mass(a, 3));
            let rb = predict_rates(&CoefficientSet::from_mass(b, 3));
            prop_assert!(rb.linear_order < ra.linear_order);
        }

        #[test]
        fn nonlinear_order_dominates_linear(mu1 in 0.0f64..4.0, mu2 in -2.0f64..2.0) {
            let r = predict_rates(&derive_coefficients(mu1, mu2, 3));
            prop_assert!(r.nonlinear_order.unwrap() >= r.linear_order);
        }
    }
}
