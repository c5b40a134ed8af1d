//! Bessel functions `J_ν`, `Y_ν` and their derivatives for the orders needed by the
//! mode propagator: real `ν ≥ 0` and purely imaginary `ν`, real argument `τ > 0`.
//!
//! Three regimes:
//! * ascending series for `τ ≤ series_max` (default 10),
//! * Hankel's large-argument expansion for `τ ≥ asymptotic_min` (default 40),
//! * adaptive Runge–Kutta continuation of Bessel's equation in between, started
//!   from the series value and restarted from checkpoints spaced along `τ`.
//!
//! Derivatives use `J'_ν = (J_{ν-1} - J_{ν+1})/2` (likewise for `Y`) except in the
//! continuation regime, where the ODE carries them. `Y_0` uses the logarithmic
//! series because the quotient definition degenerates at integer order.

use crate::gamma::{digamma_int, recip_gamma};
use crate::ode::{self, Tolerance};
use num_complex::Complex64;
use std::f64::consts::{FRAC_2_PI, PI};
use thiserror::Error;

pub const TAU_MIN: f64 = 1e-8;
pub const TAU_MAX: f64 = 1e6;

const SERIES_REL_STOP: f64 = 1e-18;
const SERIES_MAX_TERMS: usize = 200;
const CHECKPOINT_SPACING: f64 = 0.5;
const CONTINUATION_TOL: Tolerance = Tolerance::new(1e-15, 1e-13);

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BesselError {
    #[error("argument tau = {0:e} outside [{TAU_MIN:e}, {TAU_MAX:e}]")]
    OutOfRange(f64),
    #[error("unsupported Bessel order {0}: need real in [0, 2] (non-integer unless 0) or purely imaginary")]
    UnsupportedOrder(Complex64),
    #[error("invalid regime switch points: series_max = {series_max}, asymptotic_min = {asymptotic_min}")]
    BadRegimes { series_max: f64, asymptotic_min: f64 },
    #[error("continuation failed: {0}")]
    Continuation(#[from] ode::OdeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OrderKind {
    Real,
    Zero,
    Imaginary,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselOrder {
    value: Complex64,
    kind: OrderKind,
}

impl BesselOrder {
    pub fn new(value: Complex64) -> Result<Self, BesselError> {
        let kind = if value.re == 0.0 && value.im == 0.0 {
            OrderKind::Zero
        } else if value.re == 0.0 && value.im != 0.0 {
            OrderKind::Imaginary
        } else if value.im == 0.0 && value.re > 0.0 && value.re <= 2.0 && value.re.fract() != 0.0 {
            OrderKind::Real
        } else {
            return Err(BesselError::UnsupportedOrder(value));
        };
        Ok(BesselOrder { value, kind })
    }

    pub fn real(nu: f64) -> Result<Self, BesselError> {
        Self::new(Complex64::new(nu, 0.0))
    }

    pub fn imaginary(nu_im: f64) -> Result<Self, BesselError> {
        Self::new(Complex64::new(0.0, nu_im))
    }

    pub fn value(&self) -> Complex64 {
        self.value
    }

    pub fn kind(&self) -> OrderKind {
        self.kind
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    Series,
    Asymptotic,
    OdeContinuation,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselEval {
    pub j: Complex64,
    pub y: Complex64,
    pub j_prime: Complex64,
    pub y_prime: Complex64,
    pub regime: Regime,
}

impl BesselEval {
    /// `πτ(J Y' - Y J')/2`, which is identically 1.
    pub fn scaled_wronskian(&self, tau: f64) -> Complex64 {
        0.5 * PI * tau * (self.j * self.y_prime - self.y * self.j_prime)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegimeConfig {
    pub series_max: f64,
    pub asymptotic_min: f64,
}

impl Default for RegimeConfig {
    fn default() -> Self {
        RegimeConfig { series_max: 10.0, asymptotic_min: 40.0 }
    }
}

/// Ascending series for `J_order(τ)`; any complex order.
pub fn j_series(order: Complex64, tau: f64) -> Complex64 {
    if order.im == 0.0 && order.re < 0.0 && order.re.fract() == 0.0 {
        // J_{-n} = (-1)^n J_n
        let n = -order.re;
        let sign = if (n as i64) % 2 == 0 { 1.0 } else { -1.0 };
        return sign * j_series(Complex64::new(n, 0.0), tau);
    }
    let half = tau / 2.0;
    let q = -half * half;
    let mut term = (order * half.ln()).exp() * recip_gamma(order + 1.0);
    let mut sum = term;
    for k in 1..SERIES_MAX_TERMS {
        term *= q / (k as f64 * (order + k as f64));
        sum += term;
        if term.norm() <= SERIES_REL_STOP * sum.norm() {
            break;
        }
    }
    sum
}

/// `Y_n(τ)` for `n ∈ {0, 1}` from the logarithmic series.
fn y_integer_series(n: usize, tau: f64) -> f64 {
    debug_assert!(n <= 1);
    let half = tau / 2.0;
    let jn = j_series(Complex64::new(n as f64, 0.0), tau).re;
    let mut value = FRAC_2_PI * half.ln() * jn;
    if n == 1 {
        value -= 1.0 / (PI * half);
    }
    // -(τ/2)^n/π Σ (ψ(k+1) + ψ(n+k+1)) (-τ²/4)^k / (k!(n+k)!)
    let q = -half * half;
    let mut pow_fact = 1.0; // q^k/(k!(n+k)!) at k = 0, n ≤ 1
    let mut sum = (digamma_int(1) + digamma_int(n + 1)) * pow_fact;
    for k in 1..SERIES_MAX_TERMS {
        pow_fact *= q / (k as f64 * (n + k) as f64);
        let term = (digamma_int(k + 1) + digamma_int(n + k + 1)) * pow_fact;
        sum += term;
        if term.abs() <= SERIES_REL_STOP * sum.abs() {
            break;
        }
    }
    value - half.powi(n as i32) / PI * sum
}

/// Hankel's expansion: `(J_order(τ), Y_order(τ))` for large `τ`.
pub fn hankel_asymptotic(order: Complex64, tau: f64) -> (Complex64, Complex64) {
    let four_nu_sq = 4.0 * order * order;
    let mut p = Complex64::new(1.0, 0.0);
    let mut q = Complex64::new(0.0, 0.0);
    let mut term = Complex64::new(1.0, 0.0);
    let mut prev = f64::INFINITY;
    for k in 1..200usize {
        let odd = (2 * k - 1) as f64;
        term *= (four_nu_sq - odd * odd) / (8.0 * k as f64 * tau);
        let size = term.norm();
        if size > prev {
            break; // asymptotic series started diverging
        }
        prev = size;
        let sign = if (k / 2) % 2 == 0 { 1.0 } else { -1.0 };
        if k % 2 == 0 {
            p += sign * term;
        } else {
            q += sign * term;
        }
        if size <= 1e-17 * (p.norm() + q.norm()) {
            break;
        }
    }
    let phase = (0.5 * order + 0.25) * PI;
    // cos/sin of (τ - phase) expanded so the large real part stays exact
    let (st, ct) = tau.sin_cos();
    let cos_chi = ct * phase.cos() + st * phase.sin();
    let sin_chi = st * phase.cos() - ct * phase.sin();
    let amp = (FRAC_2_PI / tau).sqrt();
    (amp * (p * cos_chi - q * sin_chi), amp * (p * sin_chi + q * cos_chi))
}

fn series_eval(order: BesselOrder, tau: f64) -> BesselEval {
    let nu = order.value;
    if order.kind == OrderKind::Zero {
        let j1 = j_series(Complex64::new(1.0, 0.0), tau);
        return BesselEval {
            j: j_series(nu, tau),
            y: Complex64::new(y_integer_series(0, tau), 0.0),
            j_prime: -j1,
            y_prime: Complex64::new(-y_integer_series(1, tau), 0.0),
            regime: Regime::Series,
        };
    }
    let one = Complex64::new(1.0, 0.0);
    let j_pos = j_series(nu, tau);
    let j_neg = j_series(-nu, tau);
    let j_pos_prime = 0.5 * (j_series(nu - one, tau) - j_series(nu + one, tau));
    let j_neg_prime = 0.5 * (j_series(-nu - one, tau) - j_series(-nu + one, tau));
    let (s, c) = ((nu * PI).sin(), (nu * PI).cos());
    BesselEval {
        j: j_pos,
        y: (j_pos * c - j_neg) / s,
        j_prime: j_pos_prime,
        y_prime: (j_pos_prime * c - j_neg_prime) / s,
        regime: Regime::Series,
    }
}

fn asymptotic_eval(order: BesselOrder, tau: f64) -> BesselEval {
    let nu = order.value;
    let (j, y) = hankel_asymptotic(nu, tau);
    let (jm, ym) = hankel_asymptotic(nu - 1.0, tau);
    let (jp, yp) = hankel_asymptotic(nu + 1.0, tau);
    BesselEval {
        j,
        y,
        j_prime: 0.5 * (jm - jp),
        y_prime: 0.5 * (ym - yp),
        regime: Regime::Asymptotic,
    }
}

type ContinuationState = [f64; 8];

fn pack(e: &BesselEval) -> ContinuationState {
    [e.j.re, e.j.im, e.j_prime.re, e.j_prime.im, e.y.re, e.y.im, e.y_prime.re, e.y_prime.im]
}

fn unpack(s: &ContinuationState) -> BesselEval {
    BesselEval {
        j: Complex64::new(s[0], s[1]),
        j_prime: Complex64::new(s[2], s[3]),
        y: Complex64::new(s[4], s[5]),
        y_prime: Complex64::new(s[6], s[7]),
        regime: Regime::OdeContinuation,
    }
}

/// Bessel's equation `w'' = -w'/τ - (1 - ν²/τ²) w` for both `J` and `Y`.
fn bessel_rhs(nu_sq: Complex64) -> impl Fn(f64, &ContinuationState) -> ContinuationState {
    move |tau, s| {
        let mut out = [0.0; 8];
        let coef = Complex64::new(1.0, 0.0) - nu_sq / (tau * tau);
        for base in [0usize, 4] {
            let w = Complex64::new(s[base], s[base + 1]);
            let dw = Complex64::new(s[base + 2], s[base + 3]);
            let ddw = -dw / tau - coef * w;
            out[base] = dw.re;
            out[base + 1] = dw.im;
            out[base + 2] = ddw.re;
            out[base + 3] = ddw.im;
        }
        out
    }
}

/// Evaluator for one fixed order; precomputes the continuation checkpoints.
#[derive(Debug, Clone)]
pub struct BesselFunctions {
    order: BesselOrder,
    config: RegimeConfig,
    checkpoints: Vec<(f64, ContinuationState)>,
}

impl BesselFunctions {
    pub fn new(order: BesselOrder, config: RegimeConfig) -> Result<Self, BesselError> {
        if !(config.series_max > 0.0 && config.series_max <= config.asymptotic_min) {
            return Err(BesselError::BadRegimes {
                series_max: config.series_max,
                asymptotic_min: config.asymptotic_min,
            });
        }
        let mut checkpoints = Vec::new();
        if config.asymptotic_min > config.series_max {
            let rhs = bessel_rhs(order.value * order.value);
            let mut tau = config.series_max;
            let mut state = pack(&series_eval(order, tau));
            checkpoints.push((tau, state));
            while tau < config.asymptotic_min {
                let next = (tau + CHECKPOINT_SPACING).min(config.asymptotic_min);
                state = ode::integrate(&rhs, tau, state, next, CONTINUATION_TOL, Some(0.05))?.0;
                tau = next;
                checkpoints.push((tau, state));
            }
        }
        Ok(BesselFunctions { order, config, checkpoints })
    }

    pub fn with_default_regimes(order: BesselOrder) -> Result<Self, BesselError> {
        Self::new(order, RegimeConfig::default())
    }

    pub fn order(&self) -> BesselOrder {
        self.order
    }

    pub fn config(&self) -> RegimeConfig {
        self.config
    }

    pub fn eval(&self, tau: f64) -> Result<BesselEval, BesselError> {
        if !(TAU_MIN..=TAU_MAX).contains(&tau) {
            return Err(BesselError::OutOfRange(tau));
        }
        if tau <= self.config.series_max {
            Ok(series_eval(self.order, tau))
        } else if tau >= self.config.asymptotic_min {
            Ok(asymptotic_eval(self.order, tau))
        } else {
            self.continue_to(tau)
        }
    }

    fn continue_to(&self, tau: f64) -> Result<BesselEval, BesselError> {
        let idx = self.checkpoints.partition_point(|(t, _)| *t <= tau).saturating_sub(1);
        let (start, state) = self.checkpoints[idx];
        let rhs = bessel_rhs(self.order.value * self.order.value);
        let (end, _) = ode::integrate(rhs, start, state, tau, CONTINUATION_TOL, Some(0.05))?;
        Ok(unpack(&end))
    }

    /// `|πτ(J Y' - Y J')/2 - 1|`.
    pub fn wronskian_defect(&self, tau: f64) -> Result<f64, BesselError> {
        Ok((self.eval(tau)?.scaled_wronskian(tau) - 1.0).norm())
    }

    /// Evaluate with a forced regime, for continuity diagnostics at the switch points.
    pub fn eval_in(&self, regime: Regime, tau: f64) -> Result<BesselEval, BesselError> {
        if !(TAU_MIN..=TAU_MAX).contains(&tau) {
            return Err(BesselError::OutOfRange(tau));
        }
        match regime {
            Regime::Series => Ok(series_eval(self.order, tau)),
            Regime::Asymptotic => Ok(asymptotic_eval(self.order, tau)),
            Regime::OdeContinuation => {
                if self.checkpoints.is_empty() || tau < self.config.series_max || tau > self.config.asymptotic_min {
                    return Err(BesselError::OutOfRange(tau));
                }
                self.continue_to(tau)
            }
        }
    }
}

/// One-off evaluation with the default regime switch points.
pub fn bessel_eval(nu: BesselOrder, tau: f64) -> Result<BesselEval, BesselError> {
    BesselFunctions::with_default_regimes(nu)?.eval(tau)
}

pub fn wronskian_defect(nu: BesselOrder, tau: f64) -> Result<f64, BesselError> {
    BesselFunctions::with_default_regimes(nu)?.wronskian_defect(tau)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn order_set() -> Vec<BesselOrder> {
        vec![
            BesselOrder::new(Complex64::new(0.0, 0.0)).unwrap(),
            BesselOrder::real(0.25).unwrap(),
            BesselOrder::real(0.5).unwrap(),
            BesselOrder::imaginary(0.5).unwrap(),
            BesselOrder::imaginary(0.75f64.sqrt() / 2.0).unwrap(),
        ]
    }

    #[test]
    fn order_classification() {
        assert_eq!(BesselOrder::new(Complex64::new(0.0, 0.0)).unwrap().kind(), OrderKind::Zero);
        assert_eq!(BesselOrder::real(0.3).unwrap().kind(), OrderKind::Real);
        assert_eq!(BesselOrder::imaginary(0.2).unwrap().kind(), OrderKind::Imaginary);
        assert!(BesselOrder::new(Complex64::new(0.2, 0.1)).is_err());
        assert!(BesselOrder::real(1.0).is_err());
        assert!(BesselOrder::real(2.5).is_err());
    }

    #[test]
    fn half_order_closed_form() {
        let nu = BesselOrder::real(0.5).unwrap();
        let f = BesselFunctions::with_default_regimes(nu).unwrap();
        for tau in [0.01, PI / 2.0, 3.7, 12.0, 25.0, 41.0, 300.0, 5e4] {
            let e = f.eval(tau).unwrap();
            let amp = (2.0 / (PI * tau)).sqrt();
            let j = amp * tau.sin();
            let y = -amp * tau.cos();
            let jp = amp * (tau.cos() - tau.sin() / (2.0 * tau));
            let yp = amp * (tau.sin() + tau.cos() / (2.0 * tau));
            let scale = amp.max(1e-300);
            assert!((e.j.re - j).abs() < 1e-12 * scale, "J at {tau}: {} vs {j}", e.j.re);
            assert!((e.y.re - y).abs() < 1e-12 * scale, "Y at {tau}");
            assert!((e.j_prime.re - jp).abs() < 1e-11 * scale.max(amp / tau), "J' at {tau}");
            assert!((e.y_prime.re - yp).abs() < 1e-11 * scale.max(amp / tau), "Y' at {tau}");
        }
        let e = f.eval(PI / 2.0).unwrap();
        assert!((e.j.re - 2.0 / PI).abs() < 1e-15);
    }

    #[test]
    fn zero_order_near_origin() {
        let e = bessel_eval(BesselOrder::new(Complex64::new(0.0, 0.0)).unwrap(), 1e-4).unwrap();
        assert!((e.j.re - 1.0).abs() < 1e-8);
    }

    #[test]
    fn zero_order_reference_values() {
        // Abramowitz & Stegun table 9.1
        let f = BesselFunctions::with_default_regimes(BesselOrder::new(Complex64::new(0.0, 0.0)).unwrap()).unwrap();
        let e = f.eval(1.0).unwrap();
        assert!((e.j.re - 0.765_197_686_557_966_6).abs() < 1e-15);
        assert!((e.y.re - 0.088_256_964_215_676_96).abs() < 1e-15);
        assert!((e.j_prime.re + 0.440_050_585_744_933_5).abs() < 1e-15);
        assert!((e.y_prime.re - 0.781_212_821_300_288_7).abs() < 1e-15);
        let e = f.eval(10.0).unwrap();
        assert!((e.j.re + 0.245_935_764_451_348_3).abs() < 1e-13);
        assert!((e.y.re - 0.055_671_167_283_599_39).abs() < 1e-13);
    }

    #[test]
    fn real_order_is_real() {
        for nu in [BesselOrder::real(0.25).unwrap(), BesselOrder::new(Complex64::new(0.0, 0.0)).unwrap()] {
            let f = BesselFunctions::with_default_regimes(nu).unwrap();
            for tau in [0.3, 15.0, 100.0] {
                let e = f.eval(tau).unwrap();
                for v in [e.j, e.y, e.j_prime, e.y_prime] {
                    assert!(v.im.abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn out_of_range_is_reported() {
        let nu = BesselOrder::real(0.25).unwrap();
        assert_eq!(bessel_eval(nu, 1e-9), Err(BesselError::OutOfRange(1e-9)));
        assert!(bessel_eval(nu, 2e6).is_err());
    }

    #[test]
    fn regime_is_reported() {
        let f = BesselFunctions::with_default_regimes(BesselOrder::real(0.25).unwrap()).unwrap();
        assert_eq!(f.eval(5.0).unwrap().regime, Regime::Series);
        assert_eq!(f.eval(20.0).unwrap().regime, Regime::OdeContinuation);
        assert_eq!(f.eval(50.0).unwrap().regime, Regime::Asymptotic);
    }

    #[test]
    fn wronskian_suite_small_sample() {
        for nu in order_set() {
            let f = BesselFunctions::with_default_regimes(nu).unwrap();
            for tau in [0.01, 0.05, 1.0, 9.9, 10.1, 27.3, 39.9, 40.1, 100.0] {
                let d = f.wronskian_defect(tau).unwrap();
                assert!(d <= 1e-9, "nu = {:?}, tau = {tau}: defect {d:e}", nu.value());
            }
        }
    }

    #[test]
    fn derivative_matches_finite_difference() {
        for nu in order_set() {
            let f = BesselFunctions::with_default_regimes(nu).unwrap();
            for tau in [0.5, 5.0, 50.0] {
                let h = 1e-5 * tau;
                let fd = (f.eval(tau + h).unwrap().j - f.eval(tau - h).unwrap().j) / (2.0 * h);
                let jp = f.eval(tau).unwrap().j_prime;
                let rel = (fd - jp).norm() / jp.norm().max(1e-3);
                assert!(rel < 1e-6, "nu = {:?}, tau = {tau}: rel {rel:e}", nu.value());
            }
        }
    }

    #[test]
    fn regimes_agree_at_switch_points() {
        for nu in order_set() {
            let f = BesselFunctions::with_default_regimes(nu).unwrap();
            let cfg = f.config();
            let pairs = [
                (Regime::Series, Regime::OdeContinuation, cfg.series_max),
                (Regime::OdeContinuation, Regime::Asymptotic, cfg.asymptotic_min),
            ];
            for (a, b, tau) in pairs {
                let ea = f.eval_in(a, tau).unwrap();
                let eb = f.eval_in(b, tau).unwrap();
                for (x, y) in [(ea.j, eb.j), (ea.y, eb.y), (ea.j_prime, eb.j_prime), (ea.y_prime, eb.y_prime)] {
                    let rel = (x - y).norm() / y.norm().max(1e-2);
                    assert!(rel < 1e-9, "nu = {:?} at {tau}: {x} vs {y}", nu.value());
                }
            }
        }
    }

    #[test]
    fn large_argument_envelope() {
        for nu in order_set() {
            let f = BesselFunctions::with_default_regimes(nu).unwrap();
            let mut worst = 0.0f64;
            let mut tau = 20.0;
            while tau < 2e4 {
                let e = f.eval(tau).unwrap();
                worst = worst.max(e.j.norm() * tau.sqrt()).max(e.y.norm() * tau.sqrt());
                tau *= 1.07;
            }
            // measured envelope constant; √(2/π) ≈ 0.80 asymptotically
            assert!(worst < 2.0, "nu = {:?}: {worst}", nu.value());
        }
    }

    #[test]
    fn small_argument_envelope() {
        for nu in order_set() {
            let f = BesselFunctions::with_default_regimes(nu).unwrap();
            let mut worst = 0.0f64;
            let mut tau = 1e-6;
            while tau <= 1.0 {
                let e = f.eval(tau).unwrap();
                worst = worst.max(e.j.norm() * tau.powf(-nu.value().re));
                tau *= 1.5;
            }
            assert!(worst < 2.0, "nu = {:?}: {worst}", nu.value());
        }
    }
}
