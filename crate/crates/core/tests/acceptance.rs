//! Acceptance suite: one PASS/FAIL line per criterion, with the pinned tolerances.
//! Lines starting with `info` are measurements reported for context, not criteria.
//!
//! Runs without the libtest harness so the lines are always printed; the process exits
//! non-zero when any criterion fails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sidw_core::bessel::{wronskian_defect, BesselOrder};
use sidw_core::field::{
    duhamel_tail, free_wave_evolve, liouville, FieldState, GridSpec, LinearPropagator, LinearTrajectory,
    LiouvilleDirection, QuadratureRule, SpectralPair,
};
use sidw_core::fit::{fit_decay, fit_model, log_spaced_times, DecayModel};
use sidw_core::kernel::{mode_kernel, oracle_kernel, relative_difference, KernelStrategy};
use sidw_core::nonlinear::{
    l2_growth_check, nonlinear_scatter, small_gaussian_data, EvolveConfig, NlkgSolver, NonlinearRun, Padding,
};
use sidw_core::params::{predict_rates, CoefficientSet, LambdaSign};
use sidw_core::presets::DataPreset;
use sidw_core::scatter::{asymptotic_profile, decay_curve, dw_retransform_check, support_radius, DecayCurve};
use std::time::{Duration, Instant};

#[derive(Default)]
struct Suite {
    failed: Vec<&'static str>,
    total: usize,
}

impl Suite {
    fn check(&mut self, name: &'static str, pass: bool, detail: String) {
        self.total += 1;
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(name);
        }
    }
}

fn info(detail: String) {
    println!("info {detail}");
}

fn secs(d: Duration) -> f64 {
    d.as_secs_f64()
}

fn wronskian_suite(s: &mut Suite) {
    let start = Instant::now();
    let orders = [
        BesselOrder::real(0.0),
        BesselOrder::real(0.25),
        BesselOrder::real(0.5),
        BesselOrder::imaginary(0.5),
        BesselOrder::imaginary(0.433),
    ];
    let taus: Vec<f64> = (0..60).map(|i| 10f64.powf(-2.0 + 4.0 * i as f64 / 59.0)).collect();
    let mut worst = 0.0f64;
    for order in orders {
        let order = order.expect("supported order");
        for &tau in &taus {
            worst = worst.max(wronskian_defect(order, tau).expect("in range"));
        }
    }
    let t = secs(start.elapsed());
    s.check("wronskian_suite", worst <= 1e-9 && t < 5.0, format!("max defect {worst:.2e} <= 1e-9, {t:.2}s < 5s"));
}

fn kernel_oracle_agreement(s: &mut Suite) {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for mu in [0.0, 0.1, 0.1875, 0.25, 0.5] {
        let c = CoefficientSet::from_mass(mu, 1);
        for xi in [0.1, 1.0, 10.0] {
            for t in [1.0, 10.0, 100.0] {
                for t0 in [0.0, 1.0] {
                    let a = mode_kernel(&c, t, t0, xi, KernelStrategy::Bessel).expect("bessel kernel");
                    let b = oracle_kernel(&c, t, t0, xi).expect("oracle kernel");
                    worst = worst.max(relative_difference(&a, &b));
                }
            }
        }
    }
    let t = secs(start.elapsed());
    s.check("kernel_oracle_agreement", worst < 1e-7 && t < 30.0, format!("max rel diff {worst:.2e} < 1e-7, {t:.2}s < 30s"));
}

fn free_wave_reduction(s: &mut Suite) {
    let c = CoefficientSet::from_mass(0.0, 1);
    let mut worst = 0.0f64;
    for xi in [0.1, 1.0, 10.0] {
        for t in [1.0, 10.0, 100.0] {
            for t0 in [0.0, 1.0] {
                let k = mode_kernel(&c, t, t0, xi, KernelStrategy::Bessel).expect("kernel");
                let ph = (t - t0) * xi;
                worst = worst.max((k.e0 - ph.cos()).abs()).max((k.e1 - ph.sin() / xi).abs());
            }
        }
    }
    s.check("free_wave_reduction", worst < 1e-10, format!("max |E - W| {worst:.2e} < 1e-10"));
}

fn cocycle_and_determinant(s: &mut Suite) {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mus = [0.0, 0.1, 0.1875, 0.25, 0.5];
    let (mut cocycle, mut det) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let c = CoefficientSet::from_mass(mus[rng.gen_range(0..mus.len())], 1);
        let t0 = rng.gen_range(0.0..20.0);
        let t1 = t0 + rng.gen_range(0.0..40.0);
        let t2 = t1 + rng.gen_range(0.0..40.0);
        let xi = 10f64.powf(rng.gen_range(-1.0..1.0));
        let k = |a: f64, b: f64| mode_kernel(&c, a, b, xi, KernelStrategy::Bessel).expect("kernel");
        let (k10, k21, k20) = (k(t1, t0), k(t2, t1), k(t2, t0));
        cocycle = cocycle.max(relative_difference(&k21.compose(&k10), &k20));
        for m in [k10, k21, k20] {
            det = det.max((m.determinant() - 1.0).abs());
        }
    }
    s.check(
        "cocycle_and_determinant",
        cocycle < 1e-8 && det < 1e-9,
        format!("100 seeded triples: cocycle {cocycle:.2e} < 1e-8, |det - 1| {det:.2e} < 1e-9"),
    );
}

fn formulation_equivalence(s: &mut Suite) {
    let grid = GridSpec::new(1, 4096, 256.0).expect("grid");
    let data = DataPreset::Gaussian { amplitude: 1.0, width: 1.0 }.build(grid);
    let t = 100.0;
    let mut worst = 0.0f64;
    for mu in [0.1, 0.25] {
        let c = CoefficientSet::from_mass(mu, 1);
        let prop = LinearPropagator::new(&c, grid, KernelStrategy::Auto);
        let d = prop.spectral().to_spectral(&data);
        let direct = prop.evolve_spectral(&d, t).expect("evolve");
        let traj = LinearTrajectory::new(&prop, d.clone());
        let mut via = duhamel_tail(&c, prop.spectral(), &traj, 0.0, t, QuadratureRule::default()).expect("duhamel");
        via.add_assign(&d);
        prop.spectral().free_wave_in_place(&mut via, t);
        worst = worst.max(prop.spectral().spectral_norms(&direct.sub(&via)).h1_pair);
    }
    s.check("formulation_equivalence", worst < 1e-7, format!("n=4096 L=256 T=100: max H1xL2 diff {worst:.2e} < 1e-7"));
}

/// Pair-error curve against the asymptotic profile.
fn linear_curve(mu: f64, n: usize, l: f64, data: &FieldState, times: &[f64]) -> DecayCurve {
    let grid = GridSpec::new(1, n, l).expect("grid");
    let c = CoefficientSet::from_mass(mu, 1);
    let prop = LinearPropagator::new(&c, grid, KernelStrategy::Auto);
    let d = prop.spectral().to_spectral(data);
    let prof = asymptotic_profile(&prop, &d).expect("profile");
    decay_curve(&prop, &d, &prof, times).expect("curve")
}

fn gaussian(n: usize, l: f64) -> FieldState {
    DataPreset::Gaussian { amplitude: 1.0, width: 1.0 }.build(GridSpec::new(1, n, l).expect("grid"))
}

fn linear_scattering_order(s: &mut Suite) {
    let (n, l) = (1 << 14, 1024.0);
    let ts = log_spaced_times(50.0, 800.0, 16);
    let data = gaussian(n, l);
    info(format!("linear suite support radius {:.2} + T 800 <= L {l}", support_radius(&data, 1e-10)));
    let start = Instant::now();
    let mut deviations = Vec::new();
    for (mu, lo, hi, name) in [
        (0.1875, -0.35, -0.15, "linear_order_mu_0.1875"),
        (0.05, f64::NAN, f64::NAN, "linear_order_mu_0.05"),
    ] {
        let c = CoefficientSet::from_mass(mu, 1);
        let pred = predict_rates(&c).linear_order;
        let curve = linear_curve(mu, n, l, &data, &ts);
        let fit = fit_decay(&ts, &curve.pair_errors(), pred, false, Some((50.0, 800.0))).expect("fit");
        let t = secs(start.elapsed());
        deviations.push(fit.abs_deviation);
        if lo.is_nan() {
            s.check(
                name,
                fit.abs_deviation <= 0.05 && t < 120.0,
                format!("exponent {:.4} vs {pred:.4}, |dev| {:.4} <= 0.05, {t:.1}s < 120s", fit.exponent, fit.abs_deviation),
            );
        } else {
            s.check(
                name,
                (lo..=hi).contains(&fit.exponent) && t < 120.0,
                format!("exponent {:.4} in [{lo}, {hi}] (prediction {pred}), {t:.1}s < 120s", fit.exponent),
            );
        }
    }
    let curve = linear_curve(0.1, n, l, &data, &ts);
    let pred = predict_rates(&CoefficientSet::from_mass(0.1, 1)).linear_order;
    let fit = fit_decay(&ts, &curve.pair_errors(), pred, false, Some((50.0, 800.0))).expect("fit");
    info(format!("mu=0.1: exponent {:.4} vs {pred:.4}; deviations for mu 0.1875/0.05 {:.4}/{:.4}", fit.exponent, deviations[0], deviations[1]));
}

fn log_correction(s: &mut Suite) {
    // the ξ = 0 mode carries the log; it shows once t is well beyond the box size
    let ts = log_spaced_times(50.0, 800.0, 16);
    let (n, l) = (1024, 64.0);
    let curve = linear_curve(0.25, n, l, &gaussian(n, l), &ts);
    let fit = fit_decay(&ts, &curve.pair_errors(), -0.5, true, Some((50.0, 800.0))).expect("fit");
    let (pw, lg) = (fit.power.expect("power"), fit.log.expect("log"));
    s.check(
        "log_correction_mu_0.25",
        lg.residual < pw.residual,
        format!("torus n={n} L={l}: log-model residual {:.4} < power residual {:.4} (power exponent {:.4})", lg.residual, pw.residual, pw.exponent),
    );
    let (n, l) = (1 << 14, 1024.0);
    let curve = linear_curve(0.25, n, l, &gaussian(n, l), &ts);
    let fit = fit_decay(&ts, &curve.pair_errors(), -0.5, true, Some((50.0, 800.0))).expect("fit");
    let (pw, lg) = (fit.power.expect("power"), fit.log.expect("log"));
    info(format!("horizon-respecting n={n} L={l}: log residual {:.4}, power residual {:.4} (exponent {:.4})", lg.residual, pw.residual, pw.exponent));
}

fn l2_slope(mu: f64, n: usize, l: f64) -> (f64, f64) {
    let grid = GridSpec::new(1, n, l).expect("grid");
    let c = CoefficientSet::from_mass(mu, 1);
    let g = 0.5 + c.re_nu();
    let mut data = DataPreset::Gaussian { amplitude: 1.0, width: 1.0 }.build(grid);
    data.vt = data.v.iter().map(|x| g * x).collect();
    let prop = LinearPropagator::new(&c, grid, KernelStrategy::Auto);
    let d = prop.spectral().to_spectral(&data);
    let ts = log_spaced_times(100.0, 1000.0, 16);
    let l2: Vec<f64> = ts
        .iter()
        .map(|&t| prop.spectral().l2_sq_spectral(&prop.evolve_spectral(&d, t).expect("evolve").v).sqrt())
        .collect();
    (fit_model(&ts, &l2, DecayModel::Power).expect("fit").exponent, g)
}

fn l2_growth(s: &mut Suite) {
    for (mu, name) in [(0.1, "l2_growth_mu_0.1"), (0.1875, "l2_growth_mu_0.1875")] {
        let (slope, pred) = l2_slope(mu, 512, 32.0);
        s.check(name, (slope - pred).abs() <= 0.07, format!("torus n=512 L=32: slope {slope:.4} vs {pred:.4}, |dev| <= 0.07"));
        let (wide, _) = l2_slope(mu, 1 << 14, 1024.0);
        info(format!("mu={mu} horizon-respecting n=16384 L=1024: slope {wide:.4} (upper bound {pred:.4})"));
    }
}

fn dw_retransform(s: &mut Suite) {
    let (n, l) = (1 << 16, 65536.0);
    let grid = GridSpec::new(1, n, l).expect("grid");
    let c = CoefficientSet::derive(1.0, 0.0, 1);
    let mut u = DataPreset::Multiscale { amplitude: 1.0, exponent: 0.49, width: 30.0 }.build(grid);
    u.vt = std::mem::replace(&mut u.v, vec![0.0; grid.len()]);
    let v = liouville(&u, c.mu1, LiouvilleDirection::ToKg);
    let prop = LinearPropagator::new(&c, grid, KernelStrategy::Auto);
    let d = prop.spectral().to_spectral(&v);
    let prof = asymptotic_profile(&prop, &d).expect("profile");
    let ts = log_spaced_times(50.0, 800.0, 16);
    let curve = dw_retransform_check(&prop, c.mu1, &d, &prof, &ts).expect("curve");
    let rates = predict_rates(&c);
    let fit = fit_decay(&ts, &curve.position_errors(), rates.dw_linear_order(), true, Some((50.0, 800.0))).expect("fit");
    s.check(
        "dw_retransform_mu1_1",
        fit.log_model && fit.abs_deviation <= 0.15,
        format!("position exponent {:.4} (log model {}) vs -1, |dev| {:.4} <= 0.15", fit.exponent, fit.log_model, fit.abs_deviation),
    );

    let grid = GridSpec::new(1, 4096, 256.0).expect("grid");
    let c = CoefficientSet::derive(2.0, 0.0, 1);
    let prop = LinearPropagator::new(&c, grid, KernelStrategy::Auto);
    let u = DataPreset::Gaussian { amplitude: 1.0, width: 1.0 }.build(grid);
    let data = liouville(&u, c.mu1, LiouvilleDirection::ToKg);
    let mut worst = 0.0f64;
    for t in [10.0, 100.0] {
        let a = prop.evolve(&data, t).expect("evolve");
        let b = free_wave_evolve(&data, t);
        let diff = a.v.iter().zip(&b.v).chain(a.vt.iter().zip(&b.vt)).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        worst = worst.max(diff);
    }
    s.check("dw_exact_mu1_2", worst < 1e-9, format!("mu=0: max |v - free| {worst:.2e} < 1e-9"));
}

struct SmallData {
    runs: Vec<(LambdaSign, NonlinearRun)>,
}

fn picard_and_agreement(s: &mut Suite) -> SmallData {
    let grid = GridSpec::new(3, 32, 16.0).expect("grid");
    let data = small_gaussian_data(grid, 2.0, 1e-3);
    let (t_max, dt) = (8.0, 0.25);
    let mut runs = Vec::new();
    for (lam, tag) in [(LambdaSign::Plus, "plus"), (LambdaSign::Minus, "minus")] {
        let c = CoefficientSet::derive(1.0, -1.0 / 16.0, 3).with_lambda(lam);
        let solver = NlkgSolver::new(&c, grid, Padding::None).expect("solver");
        let start = Instant::now();
        let p = solver.picard(&data, t_max, dt, 6).expect("picard");
        let t = secs(start.elapsed());
        let max_ratio = p.ratios.iter().fold(0.0f64, |m, r| m.max(*r));
        let last = *p.distances.last().expect("distances");
        s.check(
            if tag == "plus" { "picard_contraction_lambda_plus" } else { "picard_contraction_lambda_minus" },
            p.contracts_with(0.5) && p.residual_ok(10.0) && t < 300.0,
            format!(
                "32^3 L=16 T=8 eps=1e-3: max ratio {max_ratio:.2e} <= 0.5, residual {:.2e} <= max(10 x {last:.2e}, floor {:.2e}), {t:.1}s",
                p.residual, p.residual_floor
            ),
        );
        info(format!("lambda {tag}: free X-norm {:.3e}", p.free_x_norm));

        let evo = solver.evolve(&data, &EvolveConfig::new(t_max, dt)).expect("evolve");
        let split = solver.evolve_splitting(&data, t_max, dt).expect("splitting");
        let sp = solver.propagator().spectral();
        let dist = |a: &SpectralPair, b: &SpectralPair| sp.spectral_norms(&a.sub(b)).h1_pair;
        let (pe, ps, es) = (
            dist(&p.solution.terminal, &evo.terminal),
            dist(&p.solution.terminal, &split.terminal),
            dist(&evo.terminal, &split.terminal),
        );
        let worst = pe.max(ps).max(es);
        s.check(
            if tag == "plus" { "method_agreement_lambda_plus" } else { "method_agreement_lambda_minus" },
            worst <= 1e-4,
            format!("picard-stepping {pe:.2e}, picard-splitting {ps:.2e}, stepping-splitting {es:.2e} <= 1e-4"),
        );
        // the splitting carries only the total state, whose roundoff exceeds the nonlinear part
        let pic_nl = p.solution.terminal_nonlinear.as_ref().expect("tracked nonlinear part");
        let evo_nl = evo.terminal_nonlinear.as_ref().expect("tracked nonlinear part");
        let size = sp.spectral_norms(evo_nl).h1_pair;
        info(format!("lambda {tag}: nonlinear part {size:.3e}; relative picard-stepping {:.2e}", dist(pic_nl, evo_nl) / size));
        runs.push((lam, evo));
    }
    SmallData { runs }
}

fn nonlinear_scattering(s: &mut Suite) -> NonlinearRun {
    let grid = GridSpec::new(3, 32, 160.0).expect("grid");
    let data = small_gaussian_data(grid, 16.0, 1e-3);
    let t_max = 100.0;
    let r0 = support_radius(&data, 1e-6);
    let c = CoefficientSet::from_damping_and_mass(0.05, 0.0, 3);
    let solver = NlkgSolver::new(&c, grid, Padding::None).expect("solver");
    let mut cfg = EvolveConfig::new(t_max, 0.5);
    cfg.scatter_samples = 16;
    let start = Instant::now();
    let run = solver.evolve(&data, &cfg).expect("evolve");
    let rep = nonlinear_scatter(&run).expect("scatter");
    let t = secs(start.elapsed());
    let pred = predict_rates(&c).nonlinear_effective_order.expect("d = 3");
    let fit = &rep.normalized;
    s.check(
        "nonlinear_scattering_order",
        (fit.exponent - pred).abs() <= 0.05 && r0 + t_max <= grid.half_width,
        format!(
            "mu1=0.05 mu=0, 32^3 L=160 T=100 (support {r0:.1} + T <= L): exponent {:.4} vs {pred:.4}, |dev| {:.4} <= 0.05, {t:.1}s",
            fit.exponent,
            (fit.exponent - pred).abs()
        ),
    );
    info(format!(
        "raw tail exponent {:.3}; o_t(1) proxy at first/last sample {:.3e}/{:.3e}",
        rep.raw.exponent,
        rep.strichartz_tail.first().copied().unwrap_or(0.0),
        rep.strichartz_tail.last().copied().unwrap_or(0.0)
    ));
    run
}

fn nonlinear_l2_growth(s: &mut Suite, small: &SmallData, long: &NonlinearRun) {
    let mut lines = Vec::new();
    let mut pass = true;
    let labelled = small.runs.iter().map(|(lam, r)| (format!("mu1=1 mu=3/16 {lam:?}"), r)).chain([("mu1=0.05 mu=0".to_string(), long)]);
    for (label, run) in labelled {
        let fit = l2_growth_check(run).expect("growth fit");
        pass &= fit.exponent <= fit.prediction + 0.1;
        lines.push(format!("{label}: slope {:.3} <= {:.3}", fit.exponent, fit.prediction + 0.1));
    }
    s.check("nonlinear_l2_growth", pass, lines.join("; "));
}

fn main() {
    let start = Instant::now();
    let mut s = Suite::default();
    wronskian_suite(&mut s);
    kernel_oracle_agreement(&mut s);
    free_wave_reduction(&mut s);
    cocycle_and_determinant(&mut s);
    formulation_equivalence(&mut s);
    linear_scattering_order(&mut s);
    log_correction(&mut s);
    l2_growth(&mut s);
    dw_retransform(&mut s);
    let small = picard_and_agreement(&mut s);
    let long = nonlinear_scattering(&mut s);
    nonlinear_l2_growth(&mut s, &small, &long);
    println!(
        "acceptance: {}/{} passed in {:.1}s",
        s.total - s.failed.len(),
        s.total,
        secs(start.elapsed())
    );
    if !s.failed.is_empty() {
        println!("failed: {}", s.failed.join(", "));
        std::process::exit(1);
    }
}
