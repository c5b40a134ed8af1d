//! Scattering profiles, decay curves and their fits for the linear problem.
//!
//! Two ways to obtain the free-wave profile `v+` (stored as free data at time 0):
//! * truncation: `v+ ≈ W(-T) v(T)`, with a certified bound on the neglected tail;
//! * asymptotic: per mode, `v̂(t) = α e+(t) + β e-(t)` and the large-`τ` forms of
//!   `e±` are themselves free waves, which gives `v+` exactly.
//!
//! Truncation makes the error at `t` close to `T` artificially small, so decay fits
//! use the asymptotic profile; truncation is kept as the convergence diagnostic.

use crate::field::{FieldError, FieldState, GridSpec, LinearPropagator, SpectralPair};
use crate::fit::{fit_decay, DecayFit, FitError};
use crate::params::{predict_rates, CoefficientSet};
use num_complex::Complex64;
use rayon::prelude::*;
use std::f64::consts::{FRAC_2_PI, PI};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScatterError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("horizon violated: support radius {r0} + time {t} exceeds half width {half_width}")]
    Horizon { r0: f64, t: f64, half_width: f64 },
    #[error("profiles are not Cauchy: difference {diff:e} exceeds bound {bound:e}")]
    Divergence { diff: f64, bound: f64 },
    #[error("scattering needs mu >= 0, got {0}")]
    NegativeMass(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProfileMethod {
    Truncated,
    Asymptotic,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterProfile {
    /// Free-wave data at `t = 0` whose evolution the solution approaches.
    pub vplus: SpectralPair,
    /// `T` for truncated profiles, `+inf` for asymptotic ones.
    pub extraction_time: f64,
    /// Bound on the `Ḣ¹×L²` distance to the true profile.
    pub tail_bound: f64,
    pub method: ProfileMethod,
}

/// Radius beyond which `|v|` and `|v_t|` stay below `threshold` times their maximum.
pub fn support_radius(state: &FieldState, threshold: f64) -> f64 {
    let vmax = state.v.iter().chain(&state.vt).fold(0.0f64, |m, x| m.max(x.abs()));
    let mut r0 = 0.0f64;
    for i in 0..state.grid.len() {
        if state.v[i].abs().max(state.vt[i].abs()) > threshold * vmax {
            let x = state.grid.point(i);
            r0 = r0.max((x[0] * x[0] + x[1] * x[1] + x[2] * x[2]).sqrt());
        }
    }
    r0
}

/// Finite speed of propagation keeps data of radius `r0` off the periodic images
/// while `r0 + t ≤ L`.
pub fn check_horizon(grid: &GridSpec, r0: f64, t_max: f64) -> Result<(), ScatterError> {
    if r0 + t_max > grid.half_width {
        Err(ScatterError::Horizon { r0, t: t_max, half_width: grid.half_width })
    } else {
        Ok(())
    }
}

fn require_nonnegative_mass(c: &CoefficientSet) -> Result<(), ScatterError> {
    if c.mu < 0.0 {
        Err(ScatterError::NegativeMass(c.mu))
    } else {
        Ok(())
    }
}

/// `∫_T^∞ (1+s)^{-2} ‖v(s)‖ ds / ‖v(T)‖` with the `L²` growth `(1+s)^{1/2+Re ν}`
/// (times `1 + log` at `μ = 1/4`) inserted; multiplied by `μ`.
pub fn tail_factor(c: &CoefficientSet, t: f64) -> f64 {
    let q = 1.0 + t;
    if c.mu == 0.0 {
        0.0
    } else if c.is_log_case() {
        // ∫_q^∞ u^{-3/2}(1+ln u) du / (q^{1/2}(1+ln q)) = 2(3+ln q)/(q(1+ln q)) ≤ 6/q
        c.mu * 2.0 * (3.0 + q.ln()) / (q * (1.0 + q.ln()))
    } else {
        c.mu / (q * (0.5 - c.re_nu()))
    }
}

/// `v+ ≈ W(-T) v(T)` plus the tail estimate `μ ‖v(T)‖_{L²} (1+T)^{-1} / (1/2 - Re ν)`.
pub fn extract_profile(
    prop: &LinearPropagator,
    data: &SpectralPair,
    t_ext: f64,
) -> Result<ScatterProfile, ScatterError> {
    let c = prop.evaluator().coeffs();
    require_nonnegative_mass(c)?;
    let spectral = prop.spectral();
    let mut pair = prop.evolve_spectral(data, t_ext)?;
    let l2 = spectral.l2_sq_spectral(&pair.v).sqrt();
    spectral.free_wave_in_place(&mut pair, -t_ext);
    pair.t = 0.0;
    Ok(ScatterProfile {
        vplus: pair,
        extraction_time: t_ext,
        tail_bound: tail_factor(c, t_ext) * l2,
        method: ProfileMethod::Truncated,
    })
}

/// Extract at `t_ext` and `2 t_ext`; report divergence when the profiles differ by
/// more than the tail bound at `t_ext`.
pub fn extract_profile_checked(
    prop: &LinearPropagator,
    data: &SpectralPair,
    t_ext: f64,
) -> Result<(ScatterProfile, f64), ScatterError> {
    let first = extract_profile(prop, data, t_ext)?;
    let second = extract_profile(prop, data, 2.0 * t_ext)?;
    let diff = prop.spectral().spectral_norms(&second.vplus.sub(&first.vplus)).energy_pair;
    if diff > first.tail_bound {
        return Err(ScatterError::Divergence { diff, bound: first.tail_bound });
    }
    Ok((second, diff))
}

/// Exact profile from the large-argument form of the fundamental pair.
///
/// With `c = νπ/2 + π/4` and `θ = ξ - c`, the mode `α e+ + β e-` approaches
/// `a cos(tξ) + (b/ξ) sin(tξ)` where
/// `a = √(2/π)(α cos θ + β sin θ)` and `b = ξ√(2/π)(β cos θ - α sin θ)`.
/// At `ξ = 0` the velocity decays to zero for `μ > 0`, and the position is invisible
/// in `Ḣ¹`; both are set to the exact free values when `μ = 0`.
pub fn asymptotic_profile(prop: &LinearPropagator, data: &SpectralPair) -> Result<ScatterProfile, ScatterError> {
    let c = prop.evaluator().coeffs();
    require_nonnegative_mass(c)?;
    let spectral = prop.spectral();
    let nu = c.nu;
    let phase = nu * (0.5 * PI) + 0.25 * PI;
    let amp = FRAC_2_PI.sqrt();
    let pairs = spectral
        .radii()
        .par_iter()
        .map(|&xi| {
            if xi == 0.0 {
                return Ok(None);
            }
            prop.evaluator()
                .fundamental_pair(data.t, xi)
                .map(Some)
                .map_err(|source| FieldError::Kernel { t: data.t, t0: data.t, xi, source })
        })
        .collect::<Result<Vec<_>, FieldError>>()?;
    let mut vplus = SpectralPair::zeros(data.v.len(), 0.0);
    for mode in 0..data.v.len() {
        let r = spectral.radius_index(mode);
        let xi = spectral.radii()[r];
        let (a0, b0) = (data.v[mode], data.vt[mode]);
        match pairs[r] {
            None => {
                if c.mu == 0.0 {
                    // free evolution from data.t back to 0
                    vplus.v[mode] = a0 - data.t * b0;
                    vplus.vt[mode] = b0;
                }
            }
            Some(p) => {
                let w = p.wronskian();
                let alpha = (a0 * p.e_minus_dot - b0 * p.e_minus) / w;
                let beta = (b0 * p.e_plus - a0 * p.e_plus_dot) / w;
                let theta = Complex64::new(xi, 0.0) - phase;
                let (ct, st) = (theta.cos(), theta.sin());
                vplus.v[mode] = amp * (alpha * ct + beta * st);
                vplus.vt[mode] = xi * amp * (beta * ct - alpha * st);
            }
        }
    }
    Ok(ScatterProfile { vplus, extraction_time: f64::INFINITY, tail_bound: 0.0, method: ProfileMethod::Asymptotic })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DecayPoint {
    pub t: f64,
    pub err_pair: f64,
    /// `Ḣ¹` error of the position component.
    pub err_pos: f64,
    /// `L²` error of the velocity component.
    pub err_vel: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DecayCurve {
    pub points: Vec<DecayPoint>,
}

impl DecayCurve {
    pub fn times(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.t).collect()
    }

    pub fn pair_errors(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.err_pair).collect()
    }

    pub fn position_errors(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.err_pos).collect()
    }

    pub fn velocity_errors(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.err_vel).collect()
    }
}

/// Solution pair at `t` and the free evolution of the profile, both spectral.
fn solution_and_free(
    prop: &LinearPropagator,
    data: &SpectralPair,
    profile: &ScatterProfile,
    t: f64,
) -> Result<(SpectralPair, SpectralPair), ScatterError> {
    let sol = prop.evolve_spectral(data, t)?;
    let mut free = profile.vplus.clone();
    let dt = t - free.t;
    prop.spectral().free_wave_in_place(&mut free, dt);
    Ok((sol, free))
}

/// `‖v(t) - W(t) v+‖` at each requested time.
pub fn decay_curve(
    prop: &LinearPropagator,
    data: &SpectralPair,
    profile: &ScatterProfile,
    times: &[f64],
) -> Result<DecayCurve, ScatterError> {
    let spectral = prop.spectral();
    let mut points = Vec::with_capacity(times.len());
    for &t in times {
        let (sol, free) = solution_and_free(prop, data, profile, t)?;
        let diff = sol.sub(&free);
        let pos = spectral.hdot1_sq_spectral(&diff.v).sqrt();
        let vel = spectral.l2_sq_spectral(&diff.vt).sqrt();
        points.push(DecayPoint { t, err_pair: pos.hypot(vel), err_pos: pos, err_vel: vel });
    }
    Ok(DecayCurve { points })
}

/// Decay of the damped-wave solution `u = (1+t)^{-μ₁/2} v` against
/// `(1+t)^{-μ₁/2} (W(t)v+)`, velocity taken through the exact derivative relation
/// `∂t u = (1+t)^{-μ₁/2} (∂t v - (μ₁/2)(1+t)^{-1} v)`.
pub fn dw_retransform_check(
    prop: &LinearPropagator,
    mu1: f64,
    kg_data: &SpectralPair,
    profile: &ScatterProfile,
    times: &[f64],
) -> Result<DecayCurve, ScatterError> {
    let spectral = prop.spectral();
    let mut points = Vec::with_capacity(times.len());
    for &t in times {
        let (sol, free) = solution_and_free(prop, kg_data, profile, t)?;
        let q = 1.0 + t;
        let w = q.powf(-0.5 * mu1);
        let diff = sol.sub(&free);
        let pos = w * spectral.hdot1_sq_spectral(&diff.v).sqrt();
        let vel_resid: Vec<Complex64> =
            sol.vt.iter().zip(&sol.v).zip(&free.vt).map(|((vt, v), fvt)| vt - 0.5 * mu1 / q * v - fvt).collect();
        let vel = w * spectral.l2_sq_spectral(&vel_resid).sqrt();
        points.push(DecayPoint { t, err_pair: pos.hypot(vel), err_pos: pos, err_vel: vel });
    }
    Ok(DecayCurve { points })
}

/// Fit a decay curve against the predicted linear order; the log model is tried at
/// `μ = 1/4`.
pub fn fit_linear_decay(
    times: &[f64],
    errs: &[f64],
    c: &CoefficientSet,
    window: Option<(f64, f64)>,
) -> Result<DecayFit, ScatterError> {
    let rates = predict_rates(c);
    Ok(fit_decay(times, errs, rates.linear_order, rates.has_log, window)?)
}
