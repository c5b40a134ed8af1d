//! Per-frequency propagator of `v'' + ξ² v + μ (1+t)^{-2} v = 0`.
//!
//! The kernels `E0, E1` (and their time derivatives) map mode data at `t0` to the
//! mode at `t`:
//!
//! ```text
//! [v(t) ]   [E0  E1 ] [v(t0) ]
//! [v'(t)] = [E0' E1'] [v'(t0)]
//! ```
//!
//! They are assembled from `e+ = τ^{1/2} J_ν(τ)`, `e- = τ^{1/2} Y_ν(τ)`, `τ = (1+t)ξ`,
//! or obtained by direct integration (the oracle). `ξ = 0` has a closed form.

use crate::bessel::{BesselError, BesselEval, BesselFunctions, BesselOrder, RegimeConfig};
use crate::ode::{self, OdeError, Tolerance};
use crate::params::CoefficientSet;
use num_complex::Complex64;
use thiserror::Error;

pub const ORACLE_TOL: Tolerance = Tolerance::new(1e-12, 1e-11);
pub const IMAG_RESIDUE_MAX: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KernelError {
    #[error(transparent)]
    Bessel(#[from] BesselError),
    #[error("oracle integration failed: {0}")]
    Oracle(#[from] OdeError),
    #[error("need t >= t0 >= 0, got t = {t}, t0 = {t0}")]
    BadTimes { t: f64, t0: f64 },
    #[error("frequency must be positive, got {0}")]
    BadFrequency(f64),
    #[error("kernel has imaginary residue {0:e}")]
    ImaginaryResidue(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelStrategy {
    Bessel,
    OdeOracle,
    /// Bessel, falling back to the oracle when the Bessel evaluation refuses.
    Auto,
}

/// Which method actually produced a kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelSource {
    Bessel,
    OdeOracle,
    ClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeState {
    pub value: f64,
    pub velocity: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeKernel {
    pub e0: f64,
    pub e1: f64,
    pub e0_dot: f64,
    pub e1_dot: f64,
    pub t: f64,
    pub t0: f64,
    pub xi_abs: f64,
    pub source: KernelSource,
}

impl ModeKernel {
    pub fn apply(&self, s: ModeState) -> ModeState {
        ModeState {
            value: self.e0 * s.value + self.e1 * s.velocity,
            velocity: self.e0_dot * s.value + self.e1_dot * s.velocity,
        }
    }

    pub fn determinant(&self) -> f64 {
        self.e0 * self.e1_dot - self.e1 * self.e0_dot
    }

    pub fn matrix(&self) -> [[f64; 2]; 2] {
        [[self.e0, self.e1], [self.e0_dot, self.e1_dot]]
    }

    /// `D E D^{-1}` with `D = diag(ξ, 1)`: entries in energy units, so that kernels at
    /// very different frequencies are comparable.
    pub fn energy_scaled(&self) -> [f64; 4] {
        let xi = self.xi_abs;
        [self.e0, xi * self.e1, self.e0_dot / xi, self.e1_dot]
    }

    /// `self ∘ earlier`, i.e. the kernel from `earlier.t0` to `self.t`.
    pub fn compose(&self, earlier: &ModeKernel) -> ModeKernel {
        let a = self.matrix();
        let b = earlier.matrix();
        let m = |i: usize, j: usize| a[i][0] * b[0][j] + a[i][1] * b[1][j];
        ModeKernel {
            e0: m(0, 0),
            e1: m(0, 1),
            e0_dot: m(1, 0),
            e1_dot: m(1, 1),
            t: self.t,
            t0: earlier.t0,
            xi_abs: self.xi_abs,
            source: self.source,
        }
    }
}

/// Largest entry difference relative to the largest entry, in energy-scaled units.
pub fn relative_difference(a: &ModeKernel, b: &ModeKernel) -> f64 {
    let (sa, sb) = (a.energy_scaled(), b.energy_scaled());
    let diff = sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let size = sa.iter().chain(&sb).map(|x| x.abs()).fold(0.0, f64::max);
    if size == 0.0 {
        diff
    } else {
        diff / size
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FundamentalPair {
    pub e_plus: Complex64,
    pub e_minus: Complex64,
    pub e_plus_dot: Complex64,
    pub e_minus_dot: Complex64,
}

impl FundamentalPair {
    fn from_bessel(b: &BesselEval, tau: f64, xi: f64) -> Self {
        let s = tau.sqrt();
        FundamentalPair {
            e_plus: s * b.j,
            e_minus: s * b.y,
            e_plus_dot: xi * (0.5 / s * b.j + s * b.j_prime),
            e_minus_dot: xi * (0.5 / s * b.y + s * b.y_prime),
        }
    }

    /// `e+ e-' - e+' e-`, which equals `2ξ/π`.
    pub fn wronskian(&self) -> Complex64 {
        self.e_plus * self.e_minus_dot - self.e_plus_dot * self.e_minus
    }
}

fn check_times(t: f64, t0: f64) -> Result<(), KernelError> {
    if t0 >= 0.0 && t >= t0 && t.is_finite() {
        Ok(())
    } else {
        Err(KernelError::BadTimes { t, t0 })
    }
}

/// Kernel evaluator for one coefficient set; caches the Bessel tables for its order.
#[derive(Debug, Clone)]
pub struct KernelEvaluator {
    coeffs: CoefficientSet,
    bessel: Result<BesselFunctions, BesselError>,
}

impl KernelEvaluator {
    pub fn new(coeffs: &CoefficientSet) -> Self {
        let bessel = BesselOrder::new(coeffs.nu)
            .and_then(|order| BesselFunctions::new(order, RegimeConfig::default()));
        KernelEvaluator { coeffs: *coeffs, bessel }
    }

    pub fn coeffs(&self) -> &CoefficientSet {
        &self.coeffs
    }

    pub fn fundamental_pair(&self, t: f64, xi_abs: f64) -> Result<FundamentalPair, KernelError> {
        if !(xi_abs > 0.0) {
            return Err(KernelError::BadFrequency(xi_abs));
        }
        let bessel = self.bessel.as_ref().map_err(|e| e.clone())?;
        let tau = (1.0 + t) * xi_abs;
        Ok(FundamentalPair::from_bessel(&bessel.eval(tau)?, tau, xi_abs))
    }

    pub fn kernel(
        &self,
        t: f64,
        t0: f64,
        xi_abs: f64,
        strategy: KernelStrategy,
    ) -> Result<ModeKernel, KernelError> {
        check_times(t, t0)?;
        if xi_abs == 0.0 {
            return Ok(zero_mode_kernel(&self.coeffs, t, t0));
        }
        match strategy {
            KernelStrategy::Bessel => self.bessel_kernel(t, t0, xi_abs),
            KernelStrategy::OdeOracle => oracle_kernel(&self.coeffs, t, t0, xi_abs),
            KernelStrategy::Auto => match self.bessel_kernel(t, t0, xi_abs) {
                Err(KernelError::Bessel(_)) => oracle_kernel(&self.coeffs, t, t0, xi_abs),
                other => other,
            },
        }
    }

    fn bessel_kernel(&self, t: f64, t0: f64, xi: f64) -> Result<ModeKernel, KernelError> {
        if t == t0 {
            return Ok(identity_kernel(t, xi, KernelSource::Bessel));
        }
        let p = self.fundamental_pair(t, xi)?;
        let p0 = self.fundamental_pair(t0, xi)?;
        let w0 = p0.wronskian();
        let e0 = (p.e_plus * p0.e_minus_dot - p0.e_plus_dot * p.e_minus) / w0;
        let e1 = (p0.e_plus * p.e_minus - p.e_plus * p0.e_minus) / w0;
        let e0_dot = (p.e_plus_dot * p0.e_minus_dot - p0.e_plus_dot * p.e_minus_dot) / w0;
        let e1_dot = (p0.e_plus * p.e_minus_dot - p.e_plus_dot * p0.e_minus) / w0;
        let scaled = [e0, xi * e1, e0_dot / xi, e1_dot];
        let size = scaled.iter().map(|z| z.re.abs()).fold(1.0, f64::max);
        let residue = scaled.iter().map(|z| z.im.abs()).fold(0.0, f64::max) / size;
        if residue >= IMAG_RESIDUE_MAX {
            return Err(KernelError::ImaginaryResidue(residue));
        }
        Ok(ModeKernel {
            e0: e0.re,
            e1: e1.re,
            e0_dot: e0_dot.re,
            e1_dot: e1_dot.re,
            t,
            t0,
            xi_abs: xi,
            source: KernelSource::Bessel,
        })
    }
}

fn identity_kernel(t: f64, xi: f64, source: KernelSource) -> ModeKernel {
    ModeKernel { e0: 1.0, e1: 0.0, e0_dot: 0.0, e1_dot: 1.0, t, t0: t, xi_abs: xi, source }
}

pub fn fundamental_pair(c: &CoefficientSet, t: f64, xi_abs: f64) -> Result<FundamentalPair, KernelError> {
    KernelEvaluator::new(c).fundamental_pair(t, xi_abs)
}

pub fn mode_kernel(
    c: &CoefficientSet,
    t: f64,
    t0: f64,
    xi_abs: f64,
    strategy: KernelStrategy,
) -> Result<ModeKernel, KernelError> {
    if !(xi_abs > 0.0) {
        return Err(KernelError::BadFrequency(xi_abs));
    }
    KernelEvaluator::new(c).kernel(t, t0, xi_abs, strategy)
}

/// Integrate the mode equation directly from `t0` to `t`.
pub fn ode_oracle(
    c: &CoefficientSet,
    t: f64,
    t0: f64,
    xi_abs: f64,
    init: ModeState,
) -> Result<ModeState, KernelError> {
    check_times(t, t0)?;
    let (mu, xi2) = (c.mu, xi_abs * xi_abs);
    let rhs = |s: f64, y: &[f64; 2]| {
        let q = 1.0 + s;
        [y[1], -(xi2 + mu / (q * q)) * y[0]]
    };
    let h0 = (0.1 / xi_abs.max(1.0)).min(0.1);
    let (y, _) = ode::integrate(rhs, t0, [init.value, init.velocity], t, ORACLE_TOL, Some(h0))?;
    Ok(ModeState { value: y[0], velocity: y[1] })
}

/// Kernel built column by column from the oracle.
pub fn oracle_kernel(c: &CoefficientSet, t: f64, t0: f64, xi_abs: f64) -> Result<ModeKernel, KernelError> {
    let a = ode_oracle(c, t, t0, xi_abs, ModeState { value: 1.0, velocity: 0.0 })?;
    let b = ode_oracle(c, t, t0, xi_abs, ModeState { value: 0.0, velocity: 1.0 })?;
    Ok(ModeKernel {
        e0: a.value,
        e1: b.value,
        e0_dot: a.velocity,
        e1_dot: b.velocity,
        t,
        t0,
        xi_abs,
        source: KernelSource::OdeOracle,
    })
}

/// `sinh(νs)/ν` and `cosh(νs)` for `ν` real or purely imaginary (including 0).
fn sinhc_cosh(nu: Complex64, s: f64) -> (f64, f64) {
    if nu.im != 0.0 {
        let w = nu.im;
        ((w * s).sin() / w, (w * s).cos())
    } else if nu.re == 0.0 {
        (s, 1.0)
    } else {
        let v = nu.re;
        ((v * s).sinh() / v, (v * s).cosh())
    }
}

/// Exact kernel at `ξ = 0`, where the mode equation is of Euler type.
pub fn zero_mode_kernel(c: &CoefficientSet, t: f64, t0: f64) -> ModeKernel {
    let r = (1.0 + t) / (1.0 + t0);
    let (sh, ch) = sinhc_cosh(c.nu, r.ln());
    let sr = r.sqrt();
    ModeKernel {
        e0: sr * (ch - 0.5 * sh),
        e1: (1.0 + t0) * sr * sh,
        e0_dot: -c.mu * sr * sh / (1.0 + t),
        e1_dot: (ch + 0.5 * sh) / sr,
        t,
        t0,
        xi_abs: 0.0,
        source: KernelSource::ClosedForm,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundSample {
    pub t: f64,
    pub t0: f64,
    pub xi: f64,
}

/// Largest observed `|kernel| / bound` per kernel, bounds taken with constant 1.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KernelBoundReport {
    pub e0: f64,
    pub e1: f64,
    pub e0_dot: f64,
    pub e1_dot: f64,
    pub samples: usize,
}

impl KernelBoundReport {
    pub fn max_ratio(&self) -> f64 {
        self.e0.max(self.e1).max(self.e0_dot).max(self.e1_dot)
    }
}

/// Decay/growth envelopes `[E0, E1, E0', E1']` with unit constant.
///
/// For `μ ≥ 0` each bound is the larger of the frequency-side and time-side forms.
/// The `E1'` envelope includes the `O(1)` high-frequency contribution. For `μ < 0`
/// the growth envelopes in `(1+t)^{±1/2 + Re ν}` are used.
pub fn kernel_envelopes(c: &CoefficientSet, t: f64, t0: f64, xi: f64) -> [f64; 4] {
    let rn = c.re_nu();
    let (q, q0) = (1.0 + t, 1.0 + t0);
    if c.mu < 0.0 {
        let grow = q.powf(-0.5 + rn);
        let l2 = q.powf(0.5 + rn) * q0.powf(0.5 - rn);
        return [
            l2.max((1.0 + 1.0 / xi) * grow),
            l2.max(grow / xi),
            (1.0 + xi) * grow,
            grow.max(1.0),
        ];
    }
    if c.is_log_case() {
        const EPS: f64 = 0.05;
        let log = 1.0 + (q / q0).ln();
        return [
            (1.0 + xi.powf(-0.5 - EPS)).max((q / q0).sqrt() * log),
            (1.0 / xi).max((q * q0).sqrt() * log),
            1.0 + xi,
            1.0,
        ];
    }
    [
        (1.0 + xi.powf(-0.5 - rn)).max(q.powf(0.5 + rn) * q0.powf(-0.5 - rn)),
        (1.0 / xi + q0.powf(0.5 - rn) * xi.powf(-0.5 - rn)).max(q.powf(0.5 + rn) * q0.powf(0.5 - rn)),
        (xi + q0.powf(-0.5 - rn) * xi.powf(0.5 - rn)).max(xi + q.powf(-0.5 + rn) * q0.powf(-0.5 - rn)),
        q.powf(-0.5 + rn) * q0.powf(0.5 - rn).max(1.0),
    ]
}

pub fn kernel_bound_report(c: &CoefficientSet, grid: &[BoundSample]) -> Result<KernelBoundReport, KernelError> {
    let eval = KernelEvaluator::new(c);
    let mut report = KernelBoundReport::default();
    for s in grid {
        let k = eval.kernel(s.t, s.t0, s.xi, KernelStrategy::Auto)?;
        let env = kernel_envelopes(c, s.t, s.t0, s.xi);
        report.e0 = report.e0.max(k.e0.abs() / env[0]);
        report.e1 = report.e1.max(k.e1.abs() / env[1]);
        report.e0_dot = report.e0_dot.max(k.e0_dot.abs() / env[2]);
        report.e1_dot = report.e1_dot.max(k.e1_dot.abs() / env[3]);
        report.samples += 1;
    }
    Ok(report)
}
