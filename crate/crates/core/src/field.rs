//! Pseudospectral fields on the periodic box `[-L, L)^d`.
//!
//! Linear Klein–Gordon evolution is exact per Fourier mode: every mode is multiplied
//! by the 2×2 kernel matrix for its frequency magnitude. Kernels depend on `ξ` only
//! through `|ξ|`, so they are computed once per distinct lattice radius.

use crate::kernel::{KernelError, KernelEvaluator, KernelStrategy, ModeKernel, zero_mode_kernel};
use crate::params::CoefficientSet;
use crate::quadrature::{panel_for_tolerance, GaussLegendre};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FieldError {
    #[error("invalid grid: {0}")]
    BadGrid(String),
    #[error("array length {got} does not match grid size {want}")]
    ShapeMismatch { got: usize, want: usize },
    #[error("non-finite field value")]
    NonFinite,
    #[error("kernel failure at t = {t}, t0 = {t0}, xi = {xi}: {source}")]
    Kernel { t: f64, t0: f64, xi: f64, source: KernelError },
    #[error("target time {target} precedes state time {current}")]
    BackwardTime { target: f64, current: f64 },
    #[error("no samples given")]
    EmptySamples,
    #[error("samples are not uniformly spaced in time")]
    NonUniformSamples,
    #[error("quadrature needs {panels} panels at xi = {xi}, above the limit {limit}")]
    InsufficientNodes { xi: f64, panels: usize, limit: usize },
    #[error("snapshot: {0}")]
    BadSnapshot(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    pub d: usize,
    pub n: usize,
    pub half_width: f64,
}

impl GridSpec {
    pub fn new(d: usize, n: usize, half_width: f64) -> Result<Self, FieldError> {
        if !(1..=3).contains(&d) {
            return Err(FieldError::BadGrid(format!("dimension {d} not in 1..=3")));
        }
        if n < 8 || !n.is_power_of_two() {
            return Err(FieldError::BadGrid(format!("n = {n} must be a power of two >= 8")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(FieldError::BadGrid(format!("half width {half_width} must be positive")));
        }
        Ok(GridSpec { d, n, half_width })
    }

    pub fn len(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        2.0 * self.half_width / self.n as f64
    }

    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.d as i32)
    }

    /// Integer wavenumber of FFT index `i`, in `[-n/2, n/2)`.
    pub fn wavenumber(&self, i: usize) -> i64 {
        let n = self.n as i64;
        let i = i as i64;
        if i < n / 2 {
            i
        } else {
            i - n
        }
    }

    /// Lattice frequency spacing `π/L`.
    pub fn dxi(&self) -> f64 {
        PI / self.half_width
    }

    /// Per-axis indices of a row-major flat index (unused axes are 0).
    pub fn unflatten(&self, flat: usize) -> [usize; 3] {
        let mut idx = [0; 3];
        let mut rest = flat;
        for a in (0..self.d).rev() {
            idx[a] = rest % self.n;
            rest /= self.n;
        }
        idx
    }

    /// Physical coordinates of grid point `flat`.
    pub fn point(&self, flat: usize) -> [f64; 3] {
        let idx = self.unflatten(flat);
        let mut x = [0.0; 3];
        for a in 0..self.d {
            x[a] = -self.half_width + idx[a] as f64 * self.dx();
        }
        x
    }

    /// Sample `f` at every grid point.
    pub fn sample(&self, f: impl Fn([f64; 3]) -> f64) -> Vec<f64> {
        (0..self.len()).map(|i| f(self.point(i))).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub grid: GridSpec,
    pub v: Vec<f64>,
    pub vt: Vec<f64>,
    pub t: f64,
}

impl FieldState {
    pub fn new(grid: GridSpec, v: Vec<f64>, vt: Vec<f64>, t: f64) -> Result<Self, FieldError> {
        for a in [&v, &vt] {
            if a.len() != grid.len() {
                return Err(FieldError::ShapeMismatch { got: a.len(), want: grid.len() });
            }
            if a.iter().any(|x| !x.is_finite()) {
                return Err(FieldError::NonFinite);
            }
        }
        Ok(FieldState { grid, v, vt, t })
    }

    pub fn zeros(grid: GridSpec, t: f64) -> Self {
        FieldState { grid, v: vec![0.0; grid.len()], vt: vec![0.0; grid.len()], t }
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().chain(&self.vt).all(|x| x.is_finite())
    }

    pub fn sup_norm(&self) -> f64 {
        self.v.iter().fold(0.0, |m, x| m.max(x.abs()))
    }
}

/// Fourier coefficients of a position/velocity pair (unnormalized forward DFT).
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralPair {
    pub v: Vec<Complex64>,
    pub vt: Vec<Complex64>,
    pub t: f64,
}

impl SpectralPair {
    pub fn zeros(len: usize, t: f64) -> Self {
        SpectralPair { v: vec![Complex64::default(); len], vt: vec![Complex64::default(); len], t }
    }

    pub fn add_assign(&mut self, other: &SpectralPair) {
        for (a, b) in self.v.iter_mut().zip(&other.v) {
            *a += b;
        }
        for (a, b) in self.vt.iter_mut().zip(&other.vt) {
            *a += b;
        }
    }

    pub fn sub(&self, other: &SpectralPair) -> SpectralPair {
        SpectralPair {
            v: self.v.iter().zip(&other.v).map(|(a, b)| a - b).collect(),
            vt: self.vt.iter().zip(&other.vt).map(|(a, b)| a - b).collect(),
            t: self.t,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormReport {
    pub l2: f64,
    pub hdot1: f64,
    pub h1: f64,
    /// `‖(v, v_t)‖_{Ḣ¹×L²}`
    pub energy_pair: f64,
    /// `‖(v, v_t)‖_{H¹×L²}`
    pub h1_pair: f64,
}

impl NormReport {
    fn from_parts(l2: f64, hdot1: f64, vt_l2: f64) -> Self {
        NormReport {
            l2,
            hdot1,
            h1: l2.hypot(hdot1),
            energy_pair: hdot1.hypot(vt_l2),
            h1_pair: l2.hypot(hdot1).hypot(vt_l2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Forward,
    Inverse,
}

/// FFT plans and the frequency-radius table for one grid.
#[derive(Clone)]
pub struct SpectralGrid {
    grid: GridSpec,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    radius_of_mode: Vec<u32>,
    radii: Vec<f64>,
    xi_sq: Vec<f64>,
}

impl std::fmt::Debug for SpectralGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SpectralGrid")
            .field("grid", &self.grid)
            .field("distinct_radii", &self.radii.len())
            .finish()
    }
}

impl SpectralGrid {
    pub fn new(grid: GridSpec) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(grid.n);
        let inverse = planner.plan_fft_inverse(grid.n);
        let keys: Vec<u64> = (0..grid.len())
            .map(|i| {
                let idx = grid.unflatten(i);
                (0..grid.d).map(|a| grid.wavenumber(idx[a]).pow(2) as u64).sum()
            })
            .collect();
        let mut distinct = keys.clone();
        distinct.sort_unstable();
        distinct.dedup();
        let radius_of_mode = keys
            .iter()
            .map(|k| distinct.binary_search(k).expect("key present") as u32)
            .collect();
        let dxi = grid.dxi();
        let radii = distinct.iter().map(|&k| dxi * (k as f64).sqrt()).collect();
        let xi_sq = keys.iter().map(|&k| dxi * dxi * k as f64).collect();
        SpectralGrid { grid, forward, inverse, radius_of_mode, radii, xi_sq }
    }

    pub fn grid(&self) -> GridSpec {
        self.grid
    }

    /// Distinct frequency magnitudes, ascending (the first is 0).
    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn radius_index(&self, mode: usize) -> usize {
        self.radius_of_mode[mode] as usize
    }

    pub fn xi_abs(&self, mode: usize) -> f64 {
        self.radii[self.radius_of_mode[mode] as usize]
    }

    /// Modes grouped by radius index.
    pub fn modes_by_radius(&self) -> Vec<Vec<u32>> {
        let mut groups = vec![Vec::new(); self.radii.len()];
        for (mode, &r) in self.radius_of_mode.iter().enumerate() {
            groups[r as usize].push(mode as u32);
        }
        groups
    }

    fn transform(&self, data: &mut [Complex64], dir: Direction) {
        let fft = match dir {
            Direction::Forward => &self.forward,
            Direction::Inverse => &self.inverse,
        };
        let n = self.grid.n;
        let mut scratch = vec![Complex64::default(); fft.get_inplace_scratch_len()];
        // last axis is contiguous: rustfft processes consecutive length-n chunks
        fft.process_with_scratch(data, &mut scratch);
        let mut line = vec![Complex64::default(); n];
        for axis in 0..self.grid.d.saturating_sub(1) {
            let stride = n.pow((self.grid.d - 1 - axis) as u32);
            for block in data.chunks_mut(n * stride) {
                for inner in 0..stride {
                    for (k, l) in line.iter_mut().enumerate() {
                        *l = block[inner + k * stride];
                    }
                    fft.process_with_scratch(&mut line, &mut scratch);
                    for (k, l) in line.iter().enumerate() {
                        block[inner + k * stride] = *l;
                    }
                }
            }
        }
    }

    pub fn forward(&self, values: &[f64]) -> Vec<Complex64> {
        let mut data: Vec<Complex64> = values.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.transform(&mut data, Direction::Forward);
        data
    }

    pub fn inverse(&self, coeffs: &[Complex64]) -> Vec<f64> {
        let mut data = coeffs.to_vec();
        self.transform(&mut data, Direction::Inverse);
        let scale = 1.0 / self.grid.len() as f64;
        data.iter().map(|z| z.re * scale).collect()
    }

    pub fn to_spectral(&self, state: &FieldState) -> SpectralPair {
        SpectralPair { v: self.forward(&state.v), vt: self.forward(&state.vt), t: state.t }
    }

    pub fn to_physical(&self, pair: &SpectralPair) -> FieldState {
        FieldState { grid: self.grid, v: self.inverse(&pair.v), vt: self.inverse(&pair.vt), t: pair.t }
    }

    /// `Σ|v|² dx^d` computed from Fourier coefficients (Parseval).
    pub fn l2_sq_spectral(&self, coeffs: &[Complex64]) -> f64 {
        let s: f64 = coeffs.iter().map(|z| z.norm_sqr()).sum();
        s * self.grid.cell_volume() / self.grid.len() as f64
    }

    pub fn hdot1_sq_spectral(&self, coeffs: &[Complex64]) -> f64 {
        let s: f64 = coeffs.iter().zip(&self.xi_sq).map(|(z, k2)| k2 * z.norm_sqr()).sum();
        s * self.grid.cell_volume() / self.grid.len() as f64
    }

    pub fn spectral_norms(&self, pair: &SpectralPair) -> NormReport {
        NormReport::from_parts(
            self.l2_sq_spectral(&pair.v).sqrt(),
            self.hdot1_sq_spectral(&pair.v).sqrt(),
            self.l2_sq_spectral(&pair.vt).sqrt(),
        )
    }

    /// Norms with the `L²` parts taken by grid quadrature.
    pub fn norms(&self, state: &FieldState) -> NormReport {
        let vol = self.grid.cell_volume();
        let l2 = (state.v.iter().map(|x| x * x).sum::<f64>() * vol).sqrt();
        let vt_l2 = (state.vt.iter().map(|x| x * x).sum::<f64>() * vol).sqrt();
        NormReport::from_parts(l2, self.hdot1_sq_spectral(&self.forward(&state.v)).sqrt(), vt_l2)
    }

    /// Apply `W(dt)` (free wave group) in place.
    pub fn free_wave_in_place(&self, pair: &mut SpectralPair, dt: f64) {
        for mode in 0..pair.v.len() {
            let xi = self.xi_abs(mode);
            let (c, s) = ((dt * xi).cos(), (dt * xi).sin());
            let sinc = if xi == 0.0 { dt } else { s / xi };
            let (a, b) = (pair.v[mode], pair.vt[mode]);
            pair.v[mode] = c * a + sinc * b;
            pair.vt[mode] = -xi * s * a + c * b;
        }
        pair.t += dt;
    }
}

pub fn norms(state: &FieldState) -> NormReport {
    SpectralGrid::new(state.grid).norms(state)
}

/// `(Σ|v|^r dx^d)^{1/r}`
///
/// Scaled by the maximum first so that high powers of tiny fields do not underflow.
pub fn lr_norm(values: &[f64], r: f64, cell_volume: f64) -> f64 {
    let m = values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if m == 0.0 || !m.is_finite() {
        return m;
    }
    let s: f64 = values.iter().map(|x| (x.abs() / m).powf(r)).sum();
    m * (s * cell_volume).powf(1.0 / r)
}

/// `(∫ ‖v(t)‖_{L^r}^q dt)^{1/q}` with the trapezoid rule over uniformly spaced samples.
pub fn spacetime_norm(samples: &[FieldState], q: f64, r: f64) -> Result<f64, FieldError> {
    let times: Vec<f64> = samples.iter().map(|s| s.t).collect();
    let values: Vec<f64> = samples.iter().map(|s| lr_norm(&s.v, r, s.grid.cell_volume())).collect();
    spacetime_norm_from_values(&times, &values, q)
}

/// Same as [`spacetime_norm`], given the per-time `L^r` norms.
pub fn spacetime_norm_from_values(times: &[f64], lr_values: &[f64], q: f64) -> Result<f64, FieldError> {
    if times.is_empty() {
        return Err(FieldError::EmptySamples);
    }
    if times.len() == 1 {
        return Ok(0.0);
    }
    let h = (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64;
    if times.windows(2).any(|w| ((w[1] - w[0]) - h).abs() > 1e-9 * h.abs().max(1.0)) {
        return Err(FieldError::NonUniformSamples);
    }
    let m = lr_values.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if m == 0.0 || !m.is_finite() {
        return Ok(m);
    }
    let powers: Vec<f64> = lr_values.iter().map(|x| (x / m).powf(q)).collect();
    let inner: f64 = powers[1..powers.len() - 1].iter().sum();
    let total = h * (inner + 0.5 * (powers[0] + powers[powers.len() - 1]));
    Ok(m * total.powf(1.0 / q))
}

/// Exact linear propagation via cached per-radius kernels.
#[derive(Debug, Clone)]
pub struct LinearPropagator {
    spectral: SpectralGrid,
    evaluator: KernelEvaluator,
    strategy: KernelStrategy,
}

impl LinearPropagator {
    pub fn new(c: &CoefficientSet, grid: GridSpec, strategy: KernelStrategy) -> Self {
        Self::with_spectral(c, SpectralGrid::new(grid), strategy)
    }

    pub fn with_spectral(c: &CoefficientSet, spectral: SpectralGrid, strategy: KernelStrategy) -> Self {
        LinearPropagator { spectral, evaluator: KernelEvaluator::new(c), strategy }
    }

    pub fn spectral(&self) -> &SpectralGrid {
        &self.spectral
    }

    pub fn evaluator(&self) -> &KernelEvaluator {
        &self.evaluator
    }

    /// Kernels from `t0` to `t` for every distinct radius.
    pub fn kernel_table(&self, t: f64, t0: f64) -> Result<Vec<ModeKernel>, FieldError> {
        self.spectral
            .radii()
            .par_iter()
            .map(|&xi| {
                self.evaluator
                    .kernel(t, t0, xi, self.strategy)
                    .map_err(|source| FieldError::Kernel { t, t0, xi, source })
            })
            .collect()
    }

    pub fn apply_table(&self, pair: &SpectralPair, table: &[ModeKernel], t: f64) -> SpectralPair {
        let mut out = SpectralPair::zeros(pair.v.len(), t);
        for mode in 0..pair.v.len() {
            let k = &table[self.spectral.radius_index(mode)];
            out.v[mode] = k.e0 * pair.v[mode] + k.e1 * pair.vt[mode];
            out.vt[mode] = k.e0_dot * pair.v[mode] + k.e1_dot * pair.vt[mode];
        }
        out
    }

    pub fn evolve_spectral(&self, pair: &SpectralPair, t_target: f64) -> Result<SpectralPair, FieldError> {
        if t_target < pair.t {
            return Err(FieldError::BackwardTime { target: t_target, current: pair.t });
        }
        if t_target == pair.t {
            return Ok(pair.clone());
        }
        let table = self.kernel_table(t_target, pair.t)?;
        Ok(self.apply_table(pair, &table, t_target))
    }

    pub fn evolve(&self, state: &FieldState, t_target: f64) -> Result<FieldState, FieldError> {
        if t_target == state.t {
            return Ok(state.clone());
        }
        let pair = self.evolve_spectral(&self.spectral.to_spectral(state), t_target)?;
        Ok(self.spectral.to_physical(&pair))
    }
}

pub fn linear_evolve(
    c: &CoefficientSet,
    state: &FieldState,
    t_target: f64,
    strategy: KernelStrategy,
) -> Result<FieldState, FieldError> {
    LinearPropagator::new(c, state.grid, strategy).evolve(state, t_target)
}

/// Free wave group `W(t_target - t)`; backward targets allowed.
pub fn free_wave_evolve(state: &FieldState, t_target: f64) -> FieldState {
    let spectral = SpectralGrid::new(state.grid);
    let mut pair = spectral.to_spectral(state);
    spectral.free_wave_in_place(&mut pair, t_target - state.t);
    spectral.to_physical(&pair)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiouvilleDirection {
    ToKg,
    ToDw,
}

/// `v = (1+t)^{μ₁/2} u` and its inverse, applied to a position/velocity pair.
pub fn liouville(state: &FieldState, mu1: f64, direction: LiouvilleDirection) -> FieldState {
    let a = 0.5 * mu1;
    let q = 1.0 + state.t;
    let w = q.powf(a);
    let (v, vt) = match direction {
        LiouvilleDirection::ToKg => state
            .v
            .iter()
            .zip(&state.vt)
            .map(|(u, ut)| (w * u, a * w / q * u + w * ut))
            .unzip(),
        LiouvilleDirection::ToDw => state
            .v
            .iter()
            .zip(&state.vt)
            .map(|(v, vt)| (v / w, (vt - a / q * v) / w))
            .unzip(),
    };
    FieldState { grid: state.grid, v, vt, t: state.t }
}

/// Source of mode values `v̂(s)` for the Duhamel integral.
pub trait ModeTrajectory: Sync {
    /// Write `v̂(s)` for `modes` (all with frequency magnitude `xi`) into `out`.
    fn values(&self, xi: f64, s: f64, modes: &[u32], out: &mut [Complex64]) -> Result<(), FieldError>;

    /// Whether these modes can be skipped because they carry no data.
    fn negligible(&self, _modes: &[u32]) -> bool {
        false
    }
}

/// The linear solution from spectral data at `t0`, evaluated per mode without FFTs.
///
/// Away from `ξ = 0` the mode is `α e+(s) + β e-(s)`, with `α, β` fixed by the data.
pub struct LinearTrajectory<'a> {
    evaluator: &'a KernelEvaluator,
    data: SpectralPair,
    coeffs: Vec<Option<(Complex64, Complex64)>>,
    skip_below: f64,
}

impl<'a> LinearTrajectory<'a> {
    pub fn new(propagator: &'a LinearPropagator, data: SpectralPair) -> Self {
        let spectral = propagator.spectral();
        let evaluator = propagator.evaluator();
        let pairs: Vec<_> = spectral
            .radii()
            .iter()
            .map(|&xi| if xi > 0.0 { evaluator.fundamental_pair(data.t, xi).ok() } else { None })
            .collect();
        let coeffs = (0..data.v.len())
            .map(|mode| {
                pairs[spectral.radius_index(mode)].map(|p| {
                    let w = p.wronskian();
                    let (a, b) = (data.v[mode], data.vt[mode]);
                    ((a * p.e_minus_dot - b * p.e_minus) / w, (b * p.e_plus - a * p.e_plus_dot) / w)
                })
            })
            .collect();
        let xi_max = spectral.radii().last().copied().unwrap_or(0.0).max(1.0);
        let biggest = data
            .v
            .iter()
            .zip(&data.vt)
            .map(|(a, b)| (xi_max * a.norm()).max(b.norm()))
            .fold(0.0, f64::max);
        LinearTrajectory { evaluator, data, coeffs, skip_below: 1e-16 * biggest }
    }
}

impl ModeTrajectory for LinearTrajectory<'_> {
    fn values(&self, xi: f64, s: f64, modes: &[u32], out: &mut [Complex64]) -> Result<(), FieldError> {
        let t0 = self.data.t;
        let has_pair = modes.first().is_some_and(|&m| self.coeffs[m as usize].is_some());
        if has_pair {
            if let Ok(p) = self.evaluator.fundamental_pair(s, xi) {
                for (o, &m) in out.iter_mut().zip(modes) {
                    let (a, b) = self.coeffs[m as usize].expect("same radius");
                    *o = a * p.e_plus + b * p.e_minus;
                }
                return Ok(());
            }
        }
        let k = if xi == 0.0 {
            zero_mode_kernel(self.evaluator.coeffs(), s, t0)
        } else {
            self.evaluator
                .kernel(s, t0, xi, KernelStrategy::Auto)
                .map_err(|source| FieldError::Kernel { t: s, t0, xi, source })?
        };
        for (o, &m) in out.iter_mut().zip(modes) {
            *o = k.e0 * self.data.v[m as usize] + k.e1 * self.data.vt[m as usize];
        }
        Ok(())
    }

    fn negligible(&self, modes: &[u32]) -> bool {
        let xi_scale = 1.0;
        modes.iter().all(|&m| {
            let m = m as usize;
            (xi_scale * self.data.v[m].norm()).max(self.data.vt[m].norm()) < self.skip_below
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureRule {
    /// Gauss–Legendre nodes per panel.
    pub nodes: usize,
    /// Upper bound on panel width, whatever the frequency.
    pub max_panel: f64,
    /// Target relative accuracy per mode.
    pub tol: f64,
    pub max_panels: usize,
}

impl Default for QuadratureRule {
    fn default() -> Self {
        QuadratureRule { nodes: 16, max_panel: 0.5, tol: 1e-12, max_panels: 200_000 }
    }
}

/// `∫_{t_from}^{t_to} W(-s) (0, -μ(1+s)^{-2} v(s)) ds`, per mode.
///
/// The integrand of a mode at frequency `ξ` oscillates at up to `2ξ`; panel widths
/// are chosen per radius from the Gauss–Legendre error model.
pub fn duhamel_tail(
    c: &CoefficientSet,
    spectral: &SpectralGrid,
    trajectory: &dyn ModeTrajectory,
    t_from: f64,
    t_to: f64,
    rule: QuadratureRule,
) -> Result<SpectralPair, FieldError> {
    let len = spectral.grid().len();
    let mut out = SpectralPair::zeros(len, t_from);
    if c.mu == 0.0 || t_to <= t_from {
        return Ok(out);
    }
    let gauss = GaussLegendre::new(rule.nodes);
    let groups = spectral.modes_by_radius();
    let results: Vec<Option<(Vec<Complex64>, Vec<Complex64>)>> = groups
        .par_iter()
        .enumerate()
        .map(|(r, modes)| {
            if modes.is_empty() || trajectory.negligible(modes) {
                return Ok(None);
            }
            let xi = spectral.radii()[r];
            let omega = 2.0 * xi + 1.0;
            let h = panel_for_tolerance(rule.nodes, omega, rule.tol).min(rule.max_panel);
            let panels = ((t_to - t_from) / h).ceil().max(1.0) as usize;
            if panels > rule.max_panels {
                return Err(FieldError::InsufficientNodes { xi, panels, limit: rule.max_panels });
            }
            let width = (t_to - t_from) / panels as f64;
            let mut acc_v = vec![Complex64::default(); modes.len()];
            let mut acc_vt = vec![Complex64::default(); modes.len()];
            let mut vals = vec![Complex64::default(); modes.len()];
            for p in 0..panels {
                let a = t_from + p as f64 * width;
                for (s, w) in gauss.mapped(a, a + width) {
                    trajectory.values(xi, s, modes, &mut vals)?;
                    let force = -c.mu / ((1.0 + s) * (1.0 + s));
                    let (sn, cs) = (s * xi).sin_cos();
                    let w1 = if xi == 0.0 { -s } else { -sn / xi };
                    for ((av, avt), val) in acc_v.iter_mut().zip(acc_vt.iter_mut()).zip(&vals) {
                        let f = w * force * val;
                        *av += w1 * f;
                        *avt += cs * f;
                    }
                }
            }
            Ok(Some((acc_v, acc_vt)))
        })
        .collect::<Result<_, FieldError>>()?;
    for (modes, res) in groups.iter().zip(results) {
        if let Some((av, avt)) = res {
            for (i, &m) in modes.iter().enumerate() {
                out.v[m as usize] = av[i];
                out.vt[m as usize] = avt[i];
            }
        }
    }
    Ok(out)
}

const SNAPSHOT_MAGIC: &[u8; 8] = b"SIDWSNAP";
const LITTLE_ENDIAN_TAG: u8 = b'L';

/// Flat binary snapshot: magic, endianness tag, `d`, `n`, `L`, `t`, then `v` and `vt`
/// as little-endian `f64`.
pub fn write_snapshot(path: &Path, state: &FieldState) -> Result<(), FieldError> {
    let mut buf = Vec::with_capacity(40 + 16 * state.v.len());
    buf.extend_from_slice(SNAPSHOT_MAGIC);
    buf.push(LITTLE_ENDIAN_TAG);
    buf.push(state.grid.d as u8);
    buf.extend_from_slice(&[0u8; 2]);
    buf.extend_from_slice(&(state.grid.n as u32).to_le_bytes());
    buf.extend_from_slice(&state.grid.half_width.to_le_bytes());
    buf.extend_from_slice(&state.t.to_le_bytes());
    for x in state.v.iter().chain(&state.vt) {
        buf.extend_from_slice(&x.to_le_bytes());
    }
    std::fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_snapshot(path: &Path) -> Result<FieldState, FieldError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 32 || &buf[..8] != SNAPSHOT_MAGIC {
        return Err(FieldError::BadSnapshot("missing header".into()));
    }
    if buf[8] != LITTLE_ENDIAN_TAG {
        return Err(FieldError::BadSnapshot(format!("unknown endianness tag {}", buf[8])));
    }
    let f64_at = |i: usize| f64::from_le_bytes(buf[i..i + 8].try_into().expect("8 bytes"));
    let d = buf[9] as usize;
    let n = u32::from_le_bytes(buf[12..16].try_into().expect("4 bytes")) as usize;
    let grid = GridSpec::new(d, n, f64_at(16))?;
    let t = f64_at(24);
    let len = grid.len();
    if buf.len() != 32 + 16 * len {
        return Err(FieldError::BadSnapshot(format!("expected {} bytes, found {}", 32 + 16 * len, buf.len())));
    }
    let v = (0..len).map(|i| f64_at(32 + 8 * i)).collect();
    let vt = (0..len).map(|i| f64_at(32 + 8 * (len + i))).collect();
    FieldState::new(grid, v, vt, t)
}
