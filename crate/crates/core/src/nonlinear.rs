//! Energy-critical Klein-Gordon equation in three dimensions,
//! `v_tt - Δv + μ(1+t)^{-2} v = λ(1+t)^{-2μ₁} |v|⁴v`.
//!
//! Three solvers share the uniform time grid `t_k = k dt`:
//! * Picard iteration of the Duhamel map built on the exact kernels;
//! * Duhamel stepping: exact linear step plus a two-node Gauss increment, the
//!   node values coming from a cubic Hermite interpolant of a predictor;
//! * Lawson RK4 on the free-wave form, with the mass term moved to the source.
//!
//! Picard increments are propagated as differences (`a⁵ - b⁵` is factored), so the
//! contraction stays measurable far below the size of the solution itself.

use crate::field::{
    lr_norm, spacetime_norm_from_values, FieldError, FieldState, GridSpec, LinearPropagator, SpectralGrid,
    SpectralPair,
};
use crate::fit::{fit_decay, fit_model, log_spaced_times, DecayFit, DecayModel, FitError};
use crate::kernel::{KernelStrategy, ModeKernel};
use crate::params::{predict_rates, CoefficientSet};
use crate::scatter::{tail_factor, ProfileMethod, ScatterProfile};
use num_complex::Complex64;
use thiserror::Error;

/// Norm exponents of the Strichartz space `X = L⁵_t L¹⁰_x`.
pub const X_TIME_EXPONENT: f64 = 5.0;
pub const X_SPACE_EXPONENT: f64 = 10.0;
pub const DEFAULT_BLOWUP_FACTOR: f64 = 1e3;

#[derive(Debug, Error)]
pub enum NonlinearError {
    #[error(transparent)]
    Field(#[from] FieldError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("the nonlinear solver needs d = 3, got d = {0}")]
    Dimension(usize),
    #[error("time step {dt} does not fit the horizon {t_max} (need dt <= {max_dt} and an integer step count)")]
    BadStep { dt: f64, t_max: f64, max_dt: f64 },
    #[error("blow-up at t = {t}: sup norm {sup:e} exceeds {factor} x initial {initial:e}")]
    BlowUp { t: f64, sup: f64, initial: f64, factor: f64 },
    #[error("Picard iteration does not contract, distance ratios {0:?}")]
    Divergence(Vec<f64>),
    #[error("non-finite field at t = {0}")]
    NonFinite(f64),
    #[error("run carries no scattering samples")]
    NoScatterSamples,
}

/// Whether the quintic is evaluated on the grid itself or on a 2x zero-padded grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Padding {
    #[default]
    None,
    Double,
}

/// `λ(1+t)^{-2μ₁/(d-2)}`.
pub fn nonlinear_weight(c: &CoefficientSet, t: f64) -> f64 {
    let w = c.nonlinear_weight_exponent().expect("nonlinear term needs d >= 3");
    c.lambda.value() * (1.0 + t).powf(-w)
}

fn power_term(c: &CoefficientSet, x: f64) -> f64 {
    if c.dimension == 3 {
        let x2 = x * x;
        x2 * x2 * x
    } else {
        let p = c.critical_power().expect("nonlinear term needs d >= 3");
        x.abs().powf(p - 1.0) * x
    }
}

/// Pointwise `λ(1+t)^{-2μ₁/(d-2)} |v|^{4/(d-2)} v`.
pub fn nonlinearity(c: &CoefficientSet, t: f64, v: &[f64]) -> Vec<f64> {
    let w = nonlinear_weight(c, t);
    v.iter().map(|&x| w * power_term(c, x)).collect()
}

/// `N(t, a) - N(t, a - δ)` without cancellation, through
/// `a⁵ - b⁵ = (a - b)(a⁴ + a³b + a²b² + ab³ + b⁴)`.
pub fn nonlinearity_difference(c: &CoefficientSet, t: f64, a: &[f64], delta: &[f64]) -> Vec<f64> {
    assert_eq!(c.dimension, 3, "factored difference is written for the quintic");
    let w = nonlinear_weight(c, t);
    a.iter()
        .zip(delta)
        .map(|(&a, &d)| {
            let b = a - d;
            let (a2, b2) = (a * a, b * b);
            w * d * (a2 * a2 + a2 * a * b + a2 * b2 + a * b * b2 + b2 * b2)
        })
        .collect()
}

/// Quintic evaluation in Fourier space, optionally through a padded grid.
#[derive(Debug, Clone)]
struct QuinticTerm {
    spectral: SpectralGrid,
    padded: Option<Padded>,
}

#[derive(Debug, Clone)]
struct Padded {
    spectral: SpectralGrid,
    /// Padded index of each non-Nyquist mode; `None` for modes with a Nyquist index.
    map: Vec<Option<usize>>,
    scale: f64,
}

impl QuinticTerm {
    fn new(spectral: SpectralGrid, padding: Padding) -> Result<Self, FieldError> {
        let padded = match padding {
            Padding::None => None,
            Padding::Double => {
                let g = spectral.grid();
                let big = GridSpec::new(g.d, 2 * g.n, g.half_width)?;
                let half = g.n as i64 / 2;
                let map = (0..g.len())
                    .map(|m| {
                        let idx = g.unflatten(m);
                        let ks: Vec<i64> = (0..g.d).map(|a| g.wavenumber(idx[a])).collect();
                        if ks.iter().any(|k| *k == -half) {
                            return None;
                        }
                        let n2 = big.n as i64;
                        Some(ks.iter().fold(0usize, |acc, &k| acc * big.n + k.rem_euclid(n2) as usize))
                    })
                    .collect();
                Some(Padded { spectral: SpectralGrid::new(big), map, scale: 2f64.powi(g.d as i32) })
            }
        };
        Ok(QuinticTerm { spectral, padded })
    }

    /// Physical values of `v̂` on the evaluation grid.
    fn physical(&self, v_hat: &[Complex64]) -> Vec<f64> {
        match &self.padded {
            None => self.spectral.inverse(v_hat),
            Some(p) => {
                let mut big = vec![Complex64::default(); p.spectral.grid().len()];
                for (z, slot) in v_hat.iter().zip(&p.map) {
                    if let Some(i) = slot {
                        big[*i] = z * p.scale;
                    }
                }
                p.spectral.inverse(&big)
            }
        }
    }

    fn spectral_of(&self, values: &[f64]) -> Vec<Complex64> {
        match &self.padded {
            None => self.spectral.forward(values),
            Some(p) => {
                let big = p.spectral.forward(values);
                p.map.iter().map(|slot| slot.map_or(Complex64::default(), |i| big[i] / p.scale)).collect()
            }
        }
    }

    fn eval(&self, c: &CoefficientSet, t: f64, v_hat: &[Complex64]) -> Vec<Complex64> {
        self.spectral_of(&nonlinearity(c, t, &self.physical(v_hat)))
    }

    fn eval_difference(&self, c: &CoefficientSet, t: f64, a_hat: &[Complex64], d_hat: &[Complex64]) -> Vec<Complex64> {
        let (a, d) = (self.physical(a_hat), self.physical(d_hat));
        self.spectral_of(&nonlinearity_difference(c, t, &a, &d))
    }
}

/// Two-point Gauss nodes on `[0, 1]`; both weights are `1/2`.
const GAUSS2: [f64; 2] = [0.5 - 0.288_675_134_594_812_9, 0.5 + 0.288_675_134_594_812_9];

/// Cubic Hermite interpolation of the position over one step of length `h`.
fn hermite_position(p0: &SpectralPair, p1: &SpectralPair, theta: f64, h: f64) -> Vec<Complex64> {
    let (t2, t3) = (theta * theta, theta * theta * theta);
    let h00 = 2.0 * t3 - 3.0 * t2 + 1.0;
    let h10 = h * (t3 - 2.0 * t2 + theta);
    let h01 = -2.0 * t3 + 3.0 * t2;
    let h11 = h * (t3 - t2);
    (0..p0.v.len()).map(|m| h00 * p0.v[m] + h10 * p0.vt[m] + h01 * p1.v[m] + h11 * p1.vt[m]).collect()
}

/// Kernels of one step `[t0, t0 + h]`: the full step and the two node-to-end maps.
struct StepKernels {
    t0: f64,
    h: f64,
    full: Vec<ModeKernel>,
    from_nodes: [Vec<ModeKernel>; 2],
}

impl StepKernels {
    fn node(&self, j: usize) -> f64 {
        self.t0 + GAUSS2[j] * self.h
    }

    fn t1(&self) -> f64 {
        self.t0 + self.h
    }
}

/// Time grid of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub dt: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(t_max: f64, dt: f64, max_dt: f64) -> Result<Self, NonlinearError> {
        let bad = NonlinearError::BadStep { dt, t_max, max_dt };
        if !(dt > 0.0 && dt <= max_dt * (1.0 + 1e-12) && t_max > 0.0) {
            return Err(bad);
        }
        let steps = (t_max / dt).round() as usize;
        if steps == 0 || (steps as f64 * dt - t_max).abs() > 1e-9 * t_max {
            return Err(bad);
        }
        Ok(TimeGrid { dt, steps })
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn t_max(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn times(&self) -> Vec<f64> {
        (0..=self.steps).map(|k| self.time(k)).collect()
    }
}

/// Profile accumulators `G(t) = ∫_0^t W(-s)(0, F(s)) ds` at sample times, for the
/// full source `F` and for the same source with the nonlinear time weight removed.
#[derive(Debug, Clone, PartialEq)]
pub struct ScatterTrack {
    pub sample_times: Vec<f64>,
    pub weighted: Vec<SpectralPair>,
    pub unweighted: Vec<SpectralPair>,
    pub final_weighted: SpectralPair,
    pub final_unweighted: SpectralPair,
    pub data: SpectralPair,
    /// `‖N(T)‖_{L²}` and its fitted decay exponent over the last decade, for the tail estimate.
    pub source_decay: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearRun {
    pub coeffs: CoefficientSet,
    pub grid: GridSpec,
    pub times: Vec<f64>,
    pub l2: Vec<f64>,
    /// `‖v(t)‖_{L¹⁰}`.
    pub l10: Vec<f64>,
    /// `‖(v, v_t)(t)‖_{H¹×L²}`.
    pub energy: Vec<f64>,
    /// `‖v‖_{L⁵L¹⁰([0, t_k])}`.
    pub strichartz_partial: Vec<f64>,
    pub terminal: SpectralPair,
    /// Terminal state minus the linear evolution of the data, when the solver tracks it.
    pub terminal_nonlinear: Option<SpectralPair>,
    pub picard_history: Vec<f64>,
    pub scatter: Option<ScatterTrack>,
}

impl NonlinearRun {
    fn new(coeffs: CoefficientSet, grid: GridSpec, terminal: SpectralPair) -> Self {
        NonlinearRun {
            coeffs,
            grid,
            times: Vec::new(),
            l2: Vec::new(),
            l10: Vec::new(),
            energy: Vec::new(),
            strichartz_partial: Vec::new(),
            terminal,
            terminal_nonlinear: None,
            picard_history: Vec::new(),
            scatter: None,
        }
    }

    fn record(&mut self, spectral: &SpectralGrid, t: f64, pair: &SpectralPair, v: &[f64]) {
        let norms = spectral.spectral_norms(pair);
        self.times.push(t);
        self.l2.push(norms.l2);
        self.energy.push(norms.h1_pair);
        self.l10.push(lr_norm(v, X_SPACE_EXPONENT, spectral.grid().cell_volume()));
        let partial = spacetime_norm_from_values(&self.times, &self.l10, X_TIME_EXPONENT).unwrap_or(0.0);
        self.strichartz_partial.push(partial);
    }

    pub fn x_norm(&self) -> f64 {
        self.strichartz_partial.last().copied().unwrap_or(0.0)
    }

    /// `‖v‖_{L⁵L¹⁰([t_k, T])}` for every recorded `t_k`, the finite-horizon `o_t(1)`.
    pub fn strichartz_tail(&self) -> Vec<f64> {
        let n = self.times.len();
        let mut out = vec![0.0; n];
        let mut acc = 0.0;
        for k in (0..n.saturating_sub(1)).rev() {
            let h = self.times[k + 1] - self.times[k];
            acc += 0.5 * h * (self.l10[k].powf(X_TIME_EXPONENT) + self.l10[k + 1].powf(X_TIME_EXPONENT));
            out[k] = acc.powf(1.0 / X_TIME_EXPONENT);
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PicardRun {
    /// `‖v^{k+1} - v^k‖_X`, starting with `v¹ - v⁰`.
    pub distances: Vec<f64>,
    pub ratios: Vec<f64>,
    /// `‖Φ[v*] - v*‖_X` for the last iterate.
    pub residual: f64,
    /// Roundoff level of the residual computation.
    pub residual_floor: f64,
    /// `‖v⁰‖_X`, the measured size of the free evolution.
    pub free_x_norm: f64,
    pub solution: NonlinearRun,
}

impl PicardRun {
    /// All ratios from the second distance on are at most `bound`.
    pub fn contracts_with(&self, bound: f64) -> bool {
        self.ratios.iter().all(|r| *r <= bound)
    }

    /// Residual within `factor` times the last increment (or at roundoff level).
    pub fn residual_ok(&self, factor: f64) -> bool {
        let last = self.distances.last().copied().unwrap_or(0.0);
        self.residual <= (factor * last).max(self.residual_floor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveConfig {
    pub t_max: f64,
    pub dt: f64,
    /// Corrector passes after the Euler predictor.
    pub corrector_passes: usize,
    pub blowup_factor: f64,
    /// Number of log-spaced profile samples over `[T/20, T/2]`; 0 disables tracking.
    pub scatter_samples: usize,
}

impl EvolveConfig {
    pub fn new(t_max: f64, dt: f64) -> Self {
        EvolveConfig { t_max, dt, corrector_passes: 1, blowup_factor: DEFAULT_BLOWUP_FACTOR, scatter_samples: 0 }
    }
}

/// Solver for one coefficient set on one grid.
#[derive(Debug, Clone)]
pub struct NlkgSolver {
    c: CoefficientSet,
    prop: LinearPropagator,
    term: QuinticTerm,
}

impl NlkgSolver {
    pub fn new(c: &CoefficientSet, grid: GridSpec, padding: Padding) -> Result<Self, NonlinearError> {
        if grid.d != 3 || c.dimension != 3 {
            return Err(NonlinearError::Dimension(if grid.d != 3 { grid.d } else { c.dimension }));
        }
        let spectral = SpectralGrid::new(grid);
        let term = QuinticTerm::new(spectral.clone(), padding)?;
        Ok(NlkgSolver { c: *c, prop: LinearPropagator::with_spectral(c, spectral, KernelStrategy::Auto), term })
    }

    pub fn coeffs(&self) -> &CoefficientSet {
        &self.c
    }

    pub fn propagator(&self) -> &LinearPropagator {
        &self.prop
    }

    fn spectral(&self) -> &SpectralGrid {
        self.prop.spectral()
    }

    fn time_grid(&self, t_max: f64, dt: f64) -> Result<TimeGrid, NonlinearError> {
        TimeGrid::new(t_max, dt, 0.5 * self.spectral().grid().dx())
    }

    fn step_kernels(&self, t0: f64, h: f64) -> Result<StepKernels, NonlinearError> {
        let t1 = t0 + h;
        Ok(StepKernels {
            t0,
            h,
            full: self.prop.kernel_table(t1, t0)?,
            from_nodes: [
                self.prop.kernel_table(t1, t0 + GAUSS2[0] * h)?,
                self.prop.kernel_table(t1, t0 + GAUSS2[1] * h)?,
            ],
        })
    }

    /// `out += weight * E(t1, s)(0, f̂)`.
    fn add_source(&self, out: &mut SpectralPair, table: &[ModeKernel], f_hat: &[Complex64], weight: f64) {
        let spectral = self.spectral();
        for (m, f) in f_hat.iter().enumerate() {
            let k = &table[spectral.radius_index(m)];
            out.v[m] += weight * k.e1 * f;
            out.vt[m] += weight * k.e1_dot * f;
        }
    }

    /// Duhamel increment of one step for node sources `f̂_j`.
    fn gauss_increment(&self, kernels: &StepKernels, start: &SpectralPair, sources: &[Vec<Complex64>; 2]) -> SpectralPair {
        let mut out = self.prop.apply_table(start, &kernels.full, kernels.t1());
        for j in 0..2 {
            self.add_source(&mut out, &kernels.from_nodes[j], &sources[j], 0.5 * kernels.h);
        }
        out
    }

    fn all_step_kernels(&self, grid: &TimeGrid) -> Result<Vec<StepKernels>, NonlinearError> {
        (0..grid.steps).map(|k| self.step_kernels(grid.time(k), grid.dt)).collect()
    }

    fn x_norm_of(&self, times: &[f64], pairs: &[SpectralPair]) -> Result<f64, NonlinearError> {
        let vol = self.spectral().grid().cell_volume();
        let values: Vec<f64> =
            pairs.iter().map(|p| lr_norm(&self.spectral().inverse(&p.v), X_SPACE_EXPONENT, vol)).collect();
        Ok(spacetime_norm_from_values(times, &values, X_TIME_EXPONENT)?)
    }

    /// Duhamel map applied on the time grid, with node sources supplied per step.
    fn duhamel_on_grid(
        &self,
        kernels: &[StepKernels],
        start: SpectralPair,
        mut source: impl FnMut(usize, usize) -> Vec<Complex64>,
    ) -> Vec<SpectralPair> {
        let mut out = Vec::with_capacity(kernels.len() + 1);
        out.push(start);
        for (k, ker) in kernels.iter().enumerate() {
            let sources = [source(k, 0), source(k, 1)];
            let next = self.gauss_increment(ker, &out[k], &sources);
            out.push(next);
        }
        out
    }

    /// Picard iterates `v^{k+1} = Φ[v^k]` from the linear solution, with the
    /// Duhamel integral discretised by Hermite collocation at two Gauss nodes.
    pub fn picard(&self, data: &FieldState, t_max: f64, dt: f64, n_iter: usize) -> Result<PicardRun, NonlinearError> {
        let grid = self.time_grid(t_max, dt)?;
        let kernels = self.all_step_kernels(&grid)?;
        let times = grid.times();
        let len = data.v.len();
        let d0 = self.spectral().to_spectral(data);
        let h = grid.dt;
        let zero = SpectralPair::zeros(len, 0.0);

        let linear = self.duhamel_on_grid(&kernels, d0.clone(), |_, _| vec![Complex64::default(); len]);
        let free_x_norm = self.x_norm_of(&times, &linear)?;
        let mut base = linear.clone();
        let mut nonlinear_sum: Vec<SpectralPair> = vec![zero.clone(); times.len()];
        let mut delta: Option<Vec<SpectralPair>> = None;
        let mut distances = Vec::new();
        let mut ratios = Vec::new();

        for _ in 0..n_iter {
            let c = &self.c;
            let increment = self.duhamel_on_grid(&kernels, zero.clone(), |k, j| {
                let s = kernels[k].node(j);
                let a = hermite_position(&base[k], &base[k + 1], GAUSS2[j], h);
                match &delta {
                    None => self.term.eval(c, s, &a),
                    Some(dl) => self.term.eval_difference(c, s, &a, &hermite_position(&dl[k], &dl[k + 1], GAUSS2[j], h)),
                }
            });
            let dist = self.x_norm_of(&times, &increment)?;
            if !dist.is_finite() {
                return Err(NonlinearError::NonFinite(t_max));
            }
            if let Some(&prev) = distances.last() {
                let r: f64 = if prev == 0.0 { if dist == 0.0 { 0.0 } else { f64::INFINITY } } else { dist / prev };
                ratios.push(r);
                if ratios.len() >= 3 && ratios[ratios.len() - 3..].iter().all(|r| *r >= 1.0) {
                    return Err(NonlinearError::Divergence(ratios));
                }
            }
            distances.push(dist);
            for k in 0..times.len() {
                base[k].add_assign(&increment[k]);
                nonlinear_sum[k].add_assign(&increment[k]);
            }
            delta = Some(increment);
            if dist == 0.0 {
                break;
            }
        }

        // Φ[v*] - v* compared on the nonlinear parts only; the linear parts are identical
        let c = &self.c;
        let full = self.duhamel_on_grid(&kernels, zero.clone(), |k, j| {
            let a = hermite_position(&base[k], &base[k + 1], GAUSS2[j], h);
            self.term.eval(c, kernels[k].node(j), &a)
        });
        let resid: Vec<SpectralPair> = full.iter().zip(&nonlinear_sum).map(|(a, b)| a.sub(b)).collect();
        let residual = self.x_norm_of(&times, &resid)?;
        let residual_floor = 64.0 * f64::EPSILON * self.x_norm_of(&times, &full)?;

        let mut run = NonlinearRun::new(self.c, self.spectral().grid(), base[times.len() - 1].clone());
        for (k, p) in base.iter().enumerate() {
            let v = self.spectral().inverse(&p.v);
            run.record(self.spectral(), times[k], p, &v);
        }
        run.picard_history = distances.clone();
        run.terminal_nonlinear = nonlinear_sum.pop();
        Ok(PicardRun { distances, ratios, residual, residual_floor, free_x_norm, solution: run })
    }

    /// Duhamel stepping with exact linear propagation.
    pub fn evolve(&self, data: &FieldState, cfg: &EvolveConfig) -> Result<NonlinearRun, NonlinearError> {
        let grid = self.time_grid(cfg.t_max, cfg.dt)?;
        let spectral = self.spectral();
        let h = grid.dt;
        // linear and nonlinear parts are carried separately; their sum is the state
        let mut lin = spectral.to_spectral(data);
        let mut nl = SpectralPair::zeros(lin.v.len(), 0.0);
        let mut v = data.v.clone();
        let initial_sup = data.sup_norm();
        let mut run = NonlinearRun::new(self.c, spectral.grid(), lin.clone());
        run.record(spectral, 0.0, &lin, &v);

        let sample_steps = self.sample_steps(&grid, cfg.scatter_samples);
        let mut track = (!sample_steps.is_empty()).then(|| Accumulators::new(lin.clone()));
        let mut source_norms: Vec<(f64, f64)> = Vec::new();

        for k in 0..grid.steps {
            let ker = self.step_kernels(grid.time(k), h)?;
            let t1 = ker.t1();
            let total = sum_pairs(&lin, &nl);
            let lin_next = self.prop.apply_table(&lin, &ker.full, t1);
            // Euler predictor for the end state
            let n0 = spectral.forward(&nonlinearity(&self.c, ker.t0, &v));
            let mut pred = self.prop.apply_table(&nl, &ker.full, t1);
            self.add_source(&mut pred, &ker.full, &n0, h);
            let mut nl_next = pred.clone();
            let mut nodes: [Vec<Complex64>; 2] = [Vec::new(), Vec::new()];
            let mut node_vals: [Vec<Complex64>; 2] = [Vec::new(), Vec::new()];
            for _ in 0..cfg.corrector_passes.max(1) {
                let end = sum_pairs(&lin_next, &pred);
                for j in 0..2 {
                    node_vals[j] = hermite_position(&total, &end, GAUSS2[j], h);
                    nodes[j] = self.term.eval(&self.c, ker.node(j), &node_vals[j]);
                }
                nl_next = self.gauss_increment(&ker, &nl, &nodes);
                pred = nl_next.clone();
            }
            if let Some(acc) = track.as_mut() {
                acc.add_step(self, &ker, &nodes, &node_vals);
                if sample_steps.contains(&(k + 1)) {
                    acc.snapshot(t1);
                }
            }
            lin = lin_next;
            nl = nl_next;
            let pair = sum_pairs(&lin, &nl);
            v = spectral.inverse(&pair.v);
            let sup = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if !sup.is_finite() {
                return Err(NonlinearError::NonFinite(t1));
            }
            if initial_sup > 0.0 && sup > cfg.blowup_factor * initial_sup {
                return Err(NonlinearError::BlowUp { t: t1, sup, initial: initial_sup, factor: cfg.blowup_factor });
            }
            run.record(spectral, t1, &pair, &v);
            if track.is_some() && t1 >= 0.1 * grid.t_max() {
                let source = nonlinearity(&self.c, t1, &v);
                source_norms.push((t1, lr_norm(&source, 2.0, spectral.grid().cell_volume())));
            }
        }
        run.terminal = sum_pairs(&lin, &nl);
        run.terminal_nonlinear = Some(nl);
        run.scatter = track.map(|acc| acc.finish(source_decay(&source_norms)));
        Ok(run)
    }

    fn sample_steps(&self, grid: &TimeGrid, count: usize) -> Vec<usize> {
        if count == 0 {
            return Vec::new();
        }
        let t = grid.t_max();
        let mut steps: Vec<usize> = log_spaced_times(t / 20.0, t / 2.0, count)
            .iter()
            .map(|s| ((s / grid.dt).round() as usize).clamp(1, grid.steps))
            .collect();
        steps.dedup();
        steps
    }

    /// Lawson RK4 for `w = W(-t)(v, v_t)`, with mass and nonlinearity as the source.
    pub fn evolve_splitting(&self, data: &FieldState, t_max: f64, dt: f64) -> Result<NonlinearRun, NonlinearError> {
        let grid = self.time_grid(t_max, dt)?;
        let spectral = self.spectral();
        let h = grid.dt;
        let mut pair = spectral.to_spectral(data);
        let mut run = NonlinearRun::new(self.c, spectral.grid(), pair.clone());
        run.record(spectral, 0.0, &pair, &data.v);
        let free = |p: &SpectralPair, dt: f64| {
            let mut q = p.clone();
            spectral.free_wave_in_place(&mut q, dt);
            q
        };
        let axpy = |p: &SpectralPair, a: f64, k: &SpectralPair| {
            let mut q = p.clone();
            for m in 0..q.v.len() {
                q.vt[m] += a * k.vt[m];
            }
            q
        };
        for step in 0..grid.steps {
            let t = grid.time(step);
            let k1 = self.total_source(t, &pair);
            let k2 = self.total_source(t + 0.5 * h, &free(&axpy(&pair, 0.5 * h, &k1), 0.5 * h));
            let k3 = self.total_source(t + 0.5 * h, &axpy(&free(&pair, 0.5 * h), 0.5 * h, &k2));
            let half_k3 = free(&k3, 0.5 * h);
            let p4 = {
                let mut q = free(&pair, h);
                for m in 0..q.v.len() {
                    q.v[m] += h * half_k3.v[m];
                    q.vt[m] += h * half_k3.vt[m];
                }
                q
            };
            let k4 = self.total_source(t + h, &p4);
            let mut next = free(&pair, h);
            let k1f = free(&k1, h);
            let mut mid = k2.clone();
            mid.add_assign(&k3);
            let midf = free(&mid, 0.5 * h);
            for m in 0..next.v.len() {
                next.v[m] += h / 6.0 * (k1f.v[m] + 2.0 * midf.v[m] + k4.v[m]);
                next.vt[m] += h / 6.0 * (k1f.vt[m] + 2.0 * midf.vt[m] + k4.vt[m]);
            }
            next.t = t + h;
            let v = spectral.inverse(&next.v);
            if v.iter().any(|x| !x.is_finite()) {
                return Err(NonlinearError::NonFinite(t + h));
            }
            run.record(spectral, t + h, &next, &v);
            pair = next;
        }
        run.terminal = pair;
        Ok(run)
    }

    /// `(0, -μ(1+t)^{-2} v̂ + N̂(t, v))`.
    fn total_source(&self, t: f64, p: &SpectralPair) -> SpectralPair {
        let mut f = self.term.eval(&self.c, t, &p.v);
        let m = -self.c.mu / ((1.0 + t) * (1.0 + t));
        for (fi, vi) in f.iter_mut().zip(&p.v) {
            *fi += m * vi;
        }
        SpectralPair { v: vec![Complex64::default(); f.len()], vt: f, t }
    }
}

/// Running `∫ W(-s)(0, F(s)) ds` for the weighted and unweighted sources.
struct Accumulators {
    data: SpectralPair,
    weighted: SpectralPair,
    unweighted: SpectralPair,
    samples: Vec<(f64, SpectralPair, SpectralPair)>,
}

impl Accumulators {
    fn new(data: SpectralPair) -> Self {
        let len = data.v.len();
        Accumulators { data, weighted: SpectralPair::zeros(len, 0.0), unweighted: SpectralPair::zeros(len, 0.0), samples: Vec::new() }
    }

    fn add_step(&mut self, solver: &NlkgSolver, ker: &StepKernels, nodes: &[Vec<Complex64>; 2], vals: &[Vec<Complex64>; 2]) {
        let c = &solver.c;
        let spectral = solver.spectral();
        for j in 0..2 {
            let s = ker.node(j);
            let q = 1.0 + s;
            let mass = -c.mu / (q * q);
            let unweight = c.lambda.value() / nonlinear_weight(c, s);
            let w = 0.5 * ker.h;
            for m in 0..nodes[j].len() {
                let xi = spectral.xi_abs(m);
                let (sn, cs) = (s * xi).sin_cos();
                let back = if xi == 0.0 { -s } else { -sn / xi };
                let f = mass * vals[j][m] + nodes[j][m];
                let fu = mass * vals[j][m] + unweight * nodes[j][m];
                self.weighted.v[m] += w * back * f;
                self.weighted.vt[m] += w * cs * f;
                self.unweighted.v[m] += w * back * fu;
                self.unweighted.vt[m] += w * cs * fu;
            }
        }
    }

    fn snapshot(&mut self, t: f64) {
        self.samples.push((t, self.weighted.clone(), self.unweighted.clone()));
    }

    fn finish(self, source_decay: Option<(f64, f64)>) -> ScatterTrack {
        let (mut ts, mut ws, mut us) = (Vec::new(), Vec::new(), Vec::new());
        for (t, w, u) in self.samples {
            ts.push(t);
            ws.push(w);
            us.push(u);
        }
        ScatterTrack {
            sample_times: ts,
            weighted: ws,
            unweighted: us,
            final_weighted: self.weighted,
            final_unweighted: self.unweighted,
            data: self.data,
            source_decay,
        }
    }
}

fn sum_pairs(a: &SpectralPair, b: &SpectralPair) -> SpectralPair {
    let mut out = a.clone();
    out.add_assign(b);
    out
}

/// `(‖N(T)‖_{L²}, p)` with `‖N(s)‖ ~ s^p` fitted over the recorded samples.
fn source_decay(samples: &[(f64, f64)]) -> Option<(f64, f64)> {
    let (ts, ns): (Vec<f64>, Vec<f64>) = samples.iter().filter(|(_, n)| *n > 0.0).copied().unzip();
    if ts.len() < 2 {
        return None;
    }
    let fit = fit_model(&ts, &ns, DecayModel::Power).ok()?;
    Some((*ns.last()?, fit.exponent))
}

/// Picard iteration of the Duhamel map over `[0, T]`.
pub fn picard_iterate(
    c: &CoefficientSet,
    data: &FieldState,
    t_max: f64,
    dt: f64,
    n_iter: usize,
) -> Result<PicardRun, NonlinearError> {
    NlkgSolver::new(c, data.grid, Padding::None)?.picard(data, t_max, dt, n_iter)
}

pub fn nlkg_evolve(c: &CoefficientSet, data: &FieldState, cfg: &EvolveConfig) -> Result<NonlinearRun, NonlinearError> {
    NlkgSolver::new(c, data.grid, Padding::None)?.evolve(data, cfg)
}

/// Gaussian position data with zero velocity, scaled to `‖(v0, v1)‖_{H¹×L²} = eps`.
pub fn small_gaussian_data(grid: GridSpec, width: f64, eps: f64) -> FieldState {
    let v = grid.sample(|x| (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2]) / (width * width)).exp());
    let state = FieldState { grid, v, vt: vec![0.0; grid.len()], t: 0.0 };
    let size = SpectralGrid::new(grid).norms(&state).h1_pair;
    FieldState { v: state.v.iter().map(|x| eps * x / size).collect(), ..state }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NonlinearScatterReport {
    pub profile: ScatterProfile,
    pub times: Vec<f64>,
    /// `‖∫_t^T W(t-s)(0, F(s)) ds‖_{Ḣ¹×L²}`.
    pub errors: Vec<f64>,
    /// Same tail with the nonlinear time weight removed.
    pub unweighted: Vec<f64>,
    /// `‖v‖_{L⁵L¹⁰([t, T])}` at the sample times.
    pub strichartz_tail: Vec<f64>,
    /// Fit of the raw error against `max{-1/2 + Re ν, -2μ₁/(d-2)}`.
    pub raw: DecayFit,
    /// Fit of `errors / unweighted` against `-2μ₁/(d-2)`; meaningful when `μ = 0`,
    /// where the nonlinearity is the only source.
    pub normalized: DecayFit,
}

/// Scattering profile `v+ = v(0) + ∫_0^T W(-s)(0, F(s)) ds` with both source terms, and
/// decay fits of the truncated tails.
pub fn nonlinear_scatter(run: &NonlinearRun) -> Result<NonlinearScatterReport, NonlinearError> {
    let track = run.scatter.as_ref().ok_or(NonlinearError::NoScatterSamples)?;
    if track.sample_times.is_empty() {
        return Err(NonlinearError::NoScatterSamples);
    }
    let spectral = SpectralGrid::new(run.grid);
    let energy = |a: &SpectralPair, b: &SpectralPair| spectral.spectral_norms(&a.sub(b)).energy_pair;
    let errors: Vec<f64> = track.weighted.iter().map(|g| energy(&track.final_weighted, g)).collect();
    let unweighted: Vec<f64> = track.unweighted.iter().map(|g| energy(&track.final_unweighted, g)).collect();
    let normalized: Vec<f64> = errors.iter().zip(&unweighted).map(|(e, u)| e / u).collect();

    let t_end = *run.times.last().unwrap_or(&0.0);
    let tail_all = run.strichartz_tail();
    let strichartz_tail = track
        .sample_times
        .iter()
        .map(|t| {
            let k = run.times.iter().position(|s| (s - t).abs() < 1e-9).unwrap_or(0);
            tail_all[k]
        })
        .collect();

    let rates = predict_rates(&run.coeffs);
    let window = Some((t_end / 20.0, t_end / 2.0));
    // the tails scale like ε⁵, far below the absolute exactness threshold of the fit
    let scale = errors.iter().fold(0.0f64, |m, e| m.max(*e));
    let relative: Vec<f64> = errors.iter().map(|e| if scale > 0.0 { e / scale } else { 0.0 }).collect();
    let prediction = rates.nonlinear_order.unwrap_or(rates.linear_order);
    let raw = fit_decay(&track.sample_times, &relative, prediction, rates.has_log, window)?;
    let weight_order = -run.coeffs.nonlinear_weight_exponent().unwrap_or(0.0);
    let normalized_fit = fit_decay(&track.sample_times, &normalized, weight_order, false, window)?;

    let mut vplus = track.data.clone();
    vplus.add_assign(&track.final_weighted);
    vplus.t = 0.0;
    let linear_tail = tail_factor(&run.coeffs, t_end) * run.l2.last().copied().unwrap_or(0.0);
    let nonlinear_tail = match track.source_decay {
        Some((n_t, p)) if p < -1.0 => n_t * (1.0 + t_end) / (-p - 1.0),
        Some((n_t, _)) if n_t == 0.0 => 0.0,
        _ => f64::INFINITY,
    };
    let profile = ScatterProfile {
        vplus,
        extraction_time: t_end,
        tail_bound: linear_tail + nonlinear_tail,
        method: ProfileMethod::Truncated,
    };
    Ok(NonlinearScatterReport {
        profile,
        times: track.sample_times.clone(),
        errors,
        unweighted,
        strichartz_tail,
        raw,
        normalized: normalized_fit,
    })
}

/// Growth exponent of `‖v(t)‖_{L²}` over the last decade, against
/// `α = max{1/2 + Re ν, 1 - 2μ₁/(d-2)}`.
pub fn l2_growth_check(run: &NonlinearRun) -> Result<DecayFit, NonlinearError> {
    let rates = predict_rates(&run.coeffs);
    let alpha = rates.alpha.unwrap_or(0.5 + run.coeffs.re_nu());
    let (ts, l2): (Vec<f64>, Vec<f64>) =
        run.times.iter().zip(&run.l2).filter(|(t, _)| **t > 0.0).map(|(t, l)| (*t, *l)).unzip();
    Ok(fit_decay(&ts, &l2, alpha, run.coeffs.is_log_case(), None)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::LambdaSign;

    fn coeffs(mu1: f64, mu: f64, lambda: LambdaSign) -> CoefficientSet {
        CoefficientSet::from_damping_and_mass(mu1, mu, 3).with_lambda(lambda)
    }

    fn small_grid() -> GridSpec {
        GridSpec::new(3, 16, 8.0).unwrap()
    }

    #[test]
    fn pointwise_quintic() {
        let c = coeffs(1.0, 0.1875, LambdaSign::Plus);
        assert_eq!(nonlinearity(&c, 0.0, &[0.0]), vec![0.0]);
        assert_eq!(nonlinearity(&c, 0.0, &[2.0, -2.0]), vec![32.0, -32.0]);
        // weight (1+t)^{-2μ₁}
        let got = nonlinearity(&c.with_lambda(LambdaSign::Minus), 1.0, &[1.0])[0];
        assert!((got + 0.25).abs() < 1e-15);
    }

    #[test]
    fn factored_difference_matches_direct() {
        let c = coeffs(0.5, 0.0, LambdaSign::Plus);
        let a = [0.3, -1.2, 2.0, 0.0];
        let d = [0.1, 0.4, -0.5, 1e-3];
        let got = nonlinearity_difference(&c, 2.0, &a, &d);
        let b: Vec<f64> = a.iter().zip(&d).map(|(a, d)| a - d).collect();
        let (na, nb) = (nonlinearity(&c, 2.0, &a), nonlinearity(&c, 2.0, &b));
        for i in 0..4 {
            assert!((got[i] - (na[i] - nb[i])).abs() < 1e-13, "{i}");
        }
    }

    #[test]
    fn needs_three_dimensions() {
        let grid = GridSpec::new(1, 64, 8.0).unwrap();
        let c = CoefficientSet::from_mass(0.0, 1);
        assert!(matches!(NlkgSolver::new(&c, grid, Padding::None), Err(NonlinearError::Dimension(1))));
    }

    #[test]
    fn time_grid_validation() {
        assert_eq!(TimeGrid::new(2.0, 0.25, 0.5).unwrap().steps, 8);
        assert!(TimeGrid::new(2.0, 0.3, 0.5).is_err());
        assert!(TimeGrid::new(2.0, 1.0, 0.5).is_err());
    }

    #[test]
    fn zero_data_stays_zero() {
        let grid = small_grid();
        let c = coeffs(1.0, 0.1875, LambdaSign::Plus);
        let p = picard_iterate(&c, &FieldState::zeros(grid, 0.0), 1.0, 0.25, 3).unwrap();
        assert!(p.distances.iter().all(|d| *d == 0.0));
        assert_eq!(p.solution.x_norm(), 0.0);
    }

    #[test]
    fn picard_contracts_for_small_data() {
        let grid = small_grid();
        let data = small_gaussian_data(grid, 1.5, 1e-3);
        for lambda in [LambdaSign::Plus, LambdaSign::Minus] {
            let p = picard_iterate(&coeffs(1.0, 0.1875, lambda), &data, 2.0, 0.25, 4).unwrap();
            assert_eq!(p.distances.len(), 4);
            assert!(p.contracts_with(0.5), "{:?}", p.ratios);
            assert!(p.residual_ok(10.0), "{} vs {:?}", p.residual, p.distances);
            assert!(p.free_x_norm > 0.0);
        }
    }

    #[test]
    fn solvers_agree() {
        let grid = small_grid();
        let data = small_gaussian_data(grid, 1.5, 0.3);
        let c = coeffs(1.0, 0.1875, LambdaSign::Minus);
        let solver = NlkgSolver::new(&c, grid, Padding::None).unwrap();
        let p = solver.picard(&data, 2.0, 0.25, 5).unwrap();
        let e = solver.evolve(&data, &EvolveConfig::new(2.0, 0.25)).unwrap();
        let s = solver.evolve_splitting(&data, 2.0, 0.25).unwrap();
        let sp = solver.propagator().spectral();
        let d = |a: &SpectralPair, b: &SpectralPair| sp.spectral_norms(&a.sub(b)).h1_pair;
        let (nl_p, nl_e) = (p.solution.terminal_nonlinear.as_ref().unwrap(), e.terminal_nonlinear.as_ref().unwrap());
        assert!(sp.spectral_norms(nl_p).h1_pair > 0.0);
        assert!(d(nl_p, nl_e) < 1e-3 * sp.spectral_norms(nl_p).h1_pair);
        assert!(d(&p.solution.terminal, &s.terminal) < 1e-4);
        assert!(d(&e.terminal, &s.terminal) < 1e-4);
    }

    #[test]
    fn odd_data_stays_odd() {
        let grid = small_grid();
        let v = grid.sample(|x| 0.5 * x[0] * (-(x[0] * x[0] + x[1] * x[1] + x[2] * x[2])).exp());
        let data = FieldState::new(grid, v, vec![0.0; grid.len()], 0.0).unwrap();
        let c = coeffs(1.0, 0.1875, LambdaSign::Plus);
        let solver = NlkgSolver::new(&c, grid, Padding::None).unwrap();
        let run = solver.evolve(&data, &EvolveConfig::new(2.0, 0.25)).unwrap();
        let state = solver.propagator().spectral().to_physical(&run.terminal);
        let n = grid.n;
        let mirror = |i: usize| {
            let idx = grid.unflatten(i);
            let r = |k: usize| (n - k) % n;
            (r(idx[0]) * n + r(idx[1])) * n + r(idx[2])
        };
        let scale = state.sup_norm();
        for i in 0..grid.len() {
            assert!((state.v[i] + state.v[mirror(i)]).abs() < 1e-10 * scale.max(1.0));
        }
    }

    #[test]
    fn strong_damping_is_nearly_linear() {
        let grid = small_grid();
        let eps = 1e-2;
        let data = small_gaussian_data(grid, 1.5, eps);
        let c = coeffs(5.0, 0.0, LambdaSign::Plus);
        let solver = NlkgSolver::new(&c, grid, Padding::None).unwrap();
        let run = solver.evolve(&data, &EvolveConfig::new(2.0, 0.25)).unwrap();
        let nl = solver.propagator().spectral().spectral_norms(run.terminal_nonlinear.as_ref().unwrap()).h1_pair;
        assert!(nl > 0.0 && nl < eps.powi(5), "{nl:e}");
    }

    #[test]
    fn blow_up_is_detected() {
        let grid = small_grid();
        let data = small_gaussian_data(grid, 1.5, 20.0);
        let c = coeffs(0.0, 0.0, LambdaSign::Plus);
        let mut cfg = EvolveConfig::new(4.0, 0.125);
        cfg.blowup_factor = 10.0;
        assert!(matches!(nlkg_evolve(&c, &data, &cfg), Err(NonlinearError::BlowUp { .. } | NonlinearError::NonFinite(_))));
    }

    #[test]
    fn padding_removes_aliasing_as_data_widens() {
        let grid = small_grid();
        let c = coeffs(1.0, 0.1875, LambdaSign::Minus);
        let cfg = EvolveConfig::new(1.0, 0.25);
        let sp = SpectralGrid::new(grid);
        let rel: Vec<f64> = [2.0, 3.0]
            .iter()
            .map(|&w| {
                let data = small_gaussian_data(grid, w, 0.3);
                let plain = NlkgSolver::new(&c, grid, Padding::None).unwrap().evolve(&data, &cfg).unwrap();
                let padded = NlkgSolver::new(&c, grid, Padding::Double).unwrap().evolve(&data, &cfg).unwrap();
                let (a, b) = (plain.terminal_nonlinear.unwrap(), padded.terminal_nonlinear.unwrap());
                sp.spectral_norms(&a.sub(&b)).h1_pair / sp.spectral_norms(&a).h1_pair
            })
            .collect();
        assert!(rel[1] < 0.05 && rel[1] < 0.2 * rel[0], "{rel:?}");
    }

    #[test]
    fn strichartz_bookkeeping() {
        let grid = small_grid();
        let data = small_gaussian_data(grid, 1.5, 1e-2);
        let c = coeffs(1.0, 0.1875, LambdaSign::Plus);
        let run = nlkg_evolve(&c, &data, &EvolveConfig::new(3.0, 0.25)).unwrap();
        assert!(run.strichartz_partial.windows(2).all(|w| w[1] >= w[0]));
        let tail = run.strichartz_tail();
        assert!(tail.windows(2).all(|w| w[1] <= w[0]));
        assert!((tail[0] - run.x_norm()).abs() < 1e-12 * run.x_norm());
    }
}
