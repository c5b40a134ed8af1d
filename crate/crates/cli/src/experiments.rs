//! One function per experiment. Each writes its tables into the output directory and
//! returns the written file names.

use crate::config::{Component, Experiment, ExperimentConfig, ProfileKind};
use crate::error::CliError;
use crate::output::{key_value, num, Table};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sidw_core::bessel::{BesselFunctions, BesselOrder};
use sidw_core::field::{liouville, write_snapshot, FieldState, LinearPropagator, LiouvilleDirection, SpectralPair};
use sidw_core::fit::{fit_decay, DecayFit};
use sidw_core::kernel::{
    kernel_bound_report, oracle_kernel, relative_difference, BoundSample, KernelEvaluator, KernelSource,
    KernelStrategy,
};
use sidw_core::nonlinear::{l2_growth_check, nonlinear_scatter, small_gaussian_data, EvolveConfig, NlkgSolver};
use sidw_core::params::{predict_rates, CoefficientSet};
use sidw_core::scatter::{
    asymptotic_profile, check_horizon, decay_curve, dw_retransform_check, extract_profile_checked, support_radius,
    DecayCurve, ScatterProfile,
};
use std::path::Path;

pub fn run(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<String>, CliError> {
    match cfg.experiment {
        Experiment::BesselCheck => bessel_check(cfg, dir),
        Experiment::KernelCheck => kernel_check(cfg, dir),
        Experiment::Scatter => scatter(cfg, dir, false),
        Experiment::DwScatter => scatter(cfg, dir, true),
        Experiment::Growth => growth(cfg, dir),
        Experiment::Nlkg => nlkg(cfg, dir),
    }
}

fn rate(fit: &DecayFit) -> String {
    if fit.exact {
        "exact".into()
    } else {
        num(fit.exponent)
    }
}

fn fit_rows(fit: &DecayFit) -> Vec<(&'static str, String)> {
    vec![
        ("predicted_rate", num(fit.prediction)),
        ("fitted_rate", rate(fit)),
        ("log_model", fit.log_model.to_string()),
        ("residual", num(fit.residual)),
        ("abs_deviation", num(fit.abs_deviation)),
        ("window_min", num(fit.window.0)),
        ("window_max", num(fit.window.1)),
    ]
}

fn coefficient_rows(c: &CoefficientSet) -> Vec<(&'static str, String)> {
    vec![
        ("mu1", num(c.mu1)),
        ("mu2", num(c.mu2)),
        ("mu", num(c.mu)),
        ("nu_re", num(c.nu.re)),
        ("nu_im", num(c.nu.im)),
    ]
}

fn bessel_check(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<String>, CliError> {
    let sweep = &cfg.bessel;
    let mut orders = Vec::new();
    for &nu in &sweep.nu_real {
        orders.push(BesselOrder::real(nu).map_err(|e| CliError::Config(e.to_string()))?);
    }
    for &nu in &sweep.nu_imag {
        orders.push(BesselOrder::imaginary(nu).map_err(|e| CliError::Config(e.to_string()))?);
    }
    let jobs: Vec<(BesselOrder, f64)> = orders.iter().flat_map(|o| sweep.tau.iter().map(move |t| (*o, *t))).collect();
    let rows: Vec<_> = jobs
        .par_iter()
        .map(|&(order, tau)| {
            let f = BesselFunctions::with_default_regimes(order)?;
            Ok((order, tau, f.eval(tau)?, f.wronskian_defect(tau)?))
        })
        .collect::<Result<_, sidw_core::bessel::BesselError>>()
        .map_err(|e| CliError::Config(e.to_string()))?;

    let mut table =
        Table::new(&["nu_re", "nu_im", "tau", "J_re", "J_im", "Y_re", "Y_im", "wronskian_defect", "regime"]);
    let mut worst = 0.0f64;
    for (order, tau, e, defect) in &rows {
        worst = worst.max(*defect);
        let nu = order.value();
        table.row(vec![
            num(nu.re),
            num(nu.im),
            num(*tau),
            num(e.j.re),
            num(e.j.im),
            num(e.y.re),
            num(e.y.im),
            num(*defect),
            format!("{:?}", e.regime).to_lowercase(),
        ]);
    }
    let pass = worst <= cfg.tolerances.wronskian;
    table.footer("max_wronskian_defect", num(worst));
    table.footer("tolerance", num(cfg.tolerances.wronskian));
    table.footer("status", if pass { "pass" } else { "fail" });
    table.write(dir, "bessel.csv")?;
    if !pass {
        return Err(CliError::Numerical(format!(
            "Wronskian defect {worst:e} exceeds tolerance {:e}",
            cfg.tolerances.wronskian
        )));
    }
    Ok(vec!["bessel.csv".into()])
}

fn kernel_check(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<String>, CliError> {
    let k = &cfg.kernel;
    let mut jobs = Vec::new();
    for &mu in &k.mu {
        for &t0 in &k.t0 {
            for &t in k.t.iter().filter(|t| **t >= t0) {
                for &xi in &k.xi {
                    jobs.push((mu, t, t0, xi));
                }
            }
        }
    }
    if jobs.is_empty() {
        return Err(CliError::Config("kernel sweep has no samples with t >= t0".into()));
    }
    let d = cfg.grid.d;
    let rows: Vec<_> = jobs
        .par_iter()
        .map(|&(mu, t, t0, xi)| -> Result<_, CliError> {
            let c = CoefficientSet::from_mass(mu, d);
            let kern = KernelEvaluator::new(&c).kernel(t, t0, xi, KernelStrategy::Auto)?;
            let oracle = oracle_kernel(&c, t, t0, xi)?;
            let bound = kernel_bound_report(&c, &[BoundSample { t, t0, xi }])?.max_ratio();
            Ok((mu, kern, relative_difference(&kern, &oracle), bound))
        })
        .collect::<Result<_, _>>()?;

    let mut table = Table::new(&[
        "mu", "t", "t0", "xi", "E0", "E1", "E0dot", "E1dot", "oracle_diff", "bound_ratio_max", "source",
    ]);
    let (mut worst_diff, mut worst_det, mut worst_bound) = (0.0f64, 0.0f64, 0.0f64);
    for (mu, kern, diff, bound) in &rows {
        worst_diff = worst_diff.max(*diff);
        worst_det = worst_det.max((kern.determinant() - 1.0).abs());
        worst_bound = worst_bound.max(*bound);
        let source = match kern.source {
            KernelSource::Bessel => "bessel",
            KernelSource::OdeOracle => "ode_oracle",
            KernelSource::ClosedForm => "closed_form",
        };
        table.row(vec![
            num(*mu),
            num(kern.t),
            num(kern.t0),
            num(kern.xi_abs),
            num(kern.e0),
            num(kern.e1),
            num(kern.e0_dot),
            num(kern.e1_dot),
            num(*diff),
            num(*bound),
            source.into(),
        ]);
    }

    // cocycle K(t2,t0) = K(t2,t1) K(t1,t0) on seeded random triples
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let triples: Vec<(f64, f64, f64, f64, f64)> = (0..k.cocycle_samples)
        .map(|_| {
            let mu = k.mu[rng.gen_range(0..k.mu.len())];
            let t0 = rng.gen_range(0.0..20.0);
            let t1 = t0 + rng.gen_range(0.0..40.0);
            let t2 = t1 + rng.gen_range(0.0..40.0);
            let xi = 10f64.powf(rng.gen_range(-2.0..1.0));
            (mu, t0, t1, t2, xi)
        })
        .collect();
    let cocycle: Vec<f64> = triples
        .par_iter()
        .map(|&(mu, t0, t1, t2, xi)| -> Result<f64, CliError> {
            let eval = KernelEvaluator::new(&CoefficientSet::from_mass(mu, d));
            let direct = eval.kernel(t2, t0, xi, KernelStrategy::Auto)?;
            let a = eval.kernel(t1, t0, xi, KernelStrategy::Auto)?;
            let b = eval.kernel(t2, t1, xi, KernelStrategy::Auto)?;
            Ok(relative_difference(&b.compose(&a), &direct))
        })
        .collect::<Result<_, _>>()?;
    let worst_cocycle = cocycle.iter().fold(0.0f64, |m, x| m.max(*x));

    let tol = cfg.tolerances.oracle;
    let pass = worst_diff < tol && worst_cocycle < tol;
    table.footer("max_oracle_diff", num(worst_diff));
    table.footer("max_determinant_defect", num(worst_det));
    table.footer("max_bound_ratio", num(worst_bound));
    table.footer("cocycle_samples", k.cocycle_samples.to_string());
    table.footer("max_cocycle_diff", num(worst_cocycle));
    table.footer("seed", cfg.seed.to_string());
    table.footer("tolerance", num(tol));
    table.footer("status", if pass { "pass" } else { "fail" });
    table.write(dir, "kernel.csv")?;
    if !pass {
        return Err(CliError::Numerical(format!(
            "kernel disagreement: oracle {worst_diff:e}, cocycle {worst_cocycle:e}, tolerance {tol:e}"
        )));
    }
    Ok(vec!["kernel.csv".into()])
}

/// Initial data for the unknown of the experiment (`v` for Klein–Gordon, `u` for DW).
fn initial_state(cfg: &ExperimentConfig, c: &CoefficientSet) -> Result<FieldState, CliError> {
    let grid = cfg.grid_spec()?;
    let base = cfg.preset()?.build(grid);
    let zeros = vec![0.0; grid.len()];
    Ok(match cfg.data.component {
        Component::Position => base,
        Component::Velocity => FieldState { v: zeros, vt: base.v, ..base },
        Component::Growing => {
            let g = 0.5 + c.re_nu();
            FieldState { vt: base.v.iter().map(|x| g * x).collect(), ..base }
        }
    })
}

fn horizon(cfg: &ExperimentConfig, state: &FieldState, t: f64) -> Result<Option<f64>, CliError> {
    if !cfg.tolerances.check_horizon {
        return Ok(None);
    }
    let r0 = support_radius(state, cfg.tolerances.horizon_threshold);
    check_horizon(&state.grid, r0, t)?;
    Ok(Some(r0))
}

fn profile(
    cfg: &ExperimentConfig,
    prop: &LinearPropagator,
    data: &SpectralPair,
) -> Result<(ScatterProfile, Option<f64>), CliError> {
    Ok(match cfg.schedule.profile {
        ProfileKind::Asymptotic => (asymptotic_profile(prop, data)?, None),
        ProfileKind::Truncated => {
            let (p, diff) = extract_profile_checked(prop, data, cfg.schedule.t_max)?;
            (p, Some(diff))
        }
    })
}

fn horizon_time(cfg: &ExperimentConfig) -> f64 {
    match cfg.schedule.profile {
        ProfileKind::Asymptotic => cfg.schedule.t_max,
        // truncation also evolves to 2T for the doubling check
        ProfileKind::Truncated => 2.0 * cfg.schedule.t_max,
    }
}

fn scatter(cfg: &ExperimentConfig, dir: &Path, damped: bool) -> Result<Vec<String>, CliError> {
    let c = cfg.coefficient_set()?;
    let state = initial_state(cfg, &c)?;
    let r0 = horizon(cfg, &state, horizon_time(cfg))?;
    let kg = if damped { liouville(&state, c.mu1, LiouvilleDirection::ToKg) } else { state.clone() };
    let prop = LinearPropagator::new(&c, state.grid, KernelStrategy::Auto);
    let data = prop.spectral().to_spectral(&kg);
    let (prof, doubling_diff) = profile(cfg, &prop, &data)?;
    let times = cfg.sample_times();
    let rates = predict_rates(&c);
    let (curve, fit): (DecayCurve, DecayFit) = if damped {
        let curve = dw_retransform_check(&prop, c.mu1, &data, &prof, &times)?;
        let fit = fit_decay(&times, &curve.position_errors(), rates.dw_linear_order(), rates.has_log, cfg.window())?;
        (curve, fit)
    } else {
        let curve = decay_curve(&prop, &data, &prof, &times)?;
        let fit = fit_decay(&times, &curve.pair_errors(), rates.linear_order, rates.has_log, cfg.window())?;
        (curve, fit)
    };

    let mut table = Table::new(&["t", "err_pair", "err_pos", "err_vel", "predicted_rate", "fitted_rate"]);
    for p in &curve.points {
        table.row(vec![num(p.t), num(p.err_pair), num(p.err_pos), num(p.err_vel), num(fit.prediction), rate(&fit)]);
    }
    let mut summary = fit_rows(&fit);
    summary.push(("fit_component", if damped { "position" } else { "pair" }.into()));
    summary.extend(coefficient_rows(&c));
    summary.push(("profile", format!("{:?}", prof.method).to_lowercase()));
    summary.push(("tail_bound", num(prof.tail_bound)));
    if let Some(diff) = doubling_diff {
        summary.push(("doubling_diff", num(diff)));
    }
    summary.push(("support_radius", r0.map_or("unchecked".into(), num)));
    for (k, v) in &summary {
        table.footer(k, v.clone());
    }
    let name = if damped { "dw_decay.csv" } else { "decay.csv" };
    table.write(dir, name)?;
    key_value(&summary).write(dir, "fit.csv")?;
    let mut files = vec![name.to_string(), "fit.csv".to_string()];
    if cfg.schedule.snapshots {
        files.extend(snapshots(dir, &state, &prop.evolve(&kg, cfg.schedule.t_max)?)?);
    }
    Ok(files)
}

fn snapshots(dir: &Path, data: &FieldState, terminal: &FieldState) -> Result<Vec<String>, CliError> {
    write_snapshot(&dir.join("data.snap"), data)?;
    write_snapshot(&dir.join("terminal.snap"), terminal)?;
    Ok(vec!["data.snap".into(), "terminal.snap".into()])
}

fn growth(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<String>, CliError> {
    let c = cfg.coefficient_set()?;
    let state = initial_state(cfg, &c)?;
    let r0 = horizon(cfg, &state, cfg.schedule.t_max)?;
    let prop = LinearPropagator::new(&c, state.grid, KernelStrategy::Auto);
    let data = prop.spectral().to_spectral(&state);
    let times = cfg.sample_times();
    let norms = times
        .iter()
        .map(|&t| Ok(prop.spectral().spectral_norms(&prop.evolve_spectral(&data, t)?)))
        .collect::<Result<Vec<_>, CliError>>()?;
    let l2: Vec<f64> = norms.iter().map(|n| n.l2).collect();
    let fit = fit_decay(&times, &l2, 0.5 + c.re_nu(), c.is_log_case(), cfg.window())?;

    let mut table = Table::new(&["t", "l2", "hdot1", "energy_pair", "predicted_rate", "fitted_rate"]);
    for (t, n) in times.iter().zip(&norms) {
        table.row(vec![num(*t), num(n.l2), num(n.hdot1), num(n.energy_pair), num(fit.prediction), rate(&fit)]);
    }
    let mut summary = fit_rows(&fit);
    summary.extend(coefficient_rows(&c));
    summary.push(("support_radius", r0.map_or("unchecked".into(), num)));
    for (k, v) in &summary {
        table.footer(k, v.clone());
    }
    table.write(dir, "growth.csv")?;
    key_value(&summary).write(dir, "fit.csv")?;
    Ok(vec!["growth.csv".into(), "fit.csv".into()])
}

fn nlkg(cfg: &ExperimentConfig, dir: &Path) -> Result<Vec<String>, CliError> {
    let c = cfg.coefficient_set()?;
    let grid = cfg.grid_spec()?;
    let nl = &cfg.nonlinear;
    let t_max = cfg.schedule.t_max;
    let data = small_gaussian_data(grid, nl.width, nl.epsilon);
    let r0 = horizon(cfg, &data, t_max)?;
    let solver = NlkgSolver::new(&c, grid, cfg.padding())?;
    let spectral = solver.propagator().spectral();
    let mut files = Vec::new();
    let mut summary: Vec<(&str, String)> = coefficient_rows(&c);
    summary.push(("lambda", nl.lambda.clone()));
    summary.push(("epsilon", num(nl.epsilon)));
    summary.push(("support_radius", r0.map_or("unchecked".into(), num)));

    let picard = if nl.picard_iterations > 0 {
        let pr = solver.picard(&data, t_max, nl.dt, nl.picard_iterations)?;
        let mut table = Table::new(&["iteration", "distance", "ratio"]);
        for (k, d) in pr.distances.iter().enumerate() {
            let ratio = if k == 0 { String::new() } else { num(pr.ratios[k - 1]) };
            table.row(vec![(k + 1).to_string(), num(*d), ratio]);
        }
        let contracts = pr.contracts_with(cfg.tolerances.contraction);
        table.footer("free_x_norm", num(pr.free_x_norm));
        table.footer("residual", num(pr.residual));
        table.footer("residual_floor", num(pr.residual_floor));
        table.footer("contraction_bound", num(cfg.tolerances.contraction));
        table.footer("contracts", contracts.to_string());
        table.footer("residual_ok", pr.residual_ok(10.0).to_string());
        table.write(dir, "picard.csv")?;
        files.push("picard.csv".into());
        summary.push(("picard_contracts", contracts.to_string()));
        Some(pr)
    } else {
        None
    };

    let mut ecfg = EvolveConfig::new(t_max, nl.dt);
    ecfg.corrector_passes = nl.corrector_passes;
    ecfg.blowup_factor = nl.blowup_factor;
    ecfg.scatter_samples = nl.scatter_samples;
    let run = solver.evolve(&data, &ecfg)?;
    let size = spectral.spectral_norms(&run.terminal).h1_pair.max(f64::MIN_POSITIVE);
    let rel = |other: &SpectralPair| spectral.spectral_norms(&run.terminal.sub(other)).h1_pair / size;
    if let Some(pr) = &picard {
        summary.push(("picard_vs_stepping", num(rel(&pr.solution.terminal))));
    }
    if nl.splitting {
        let split = solver.evolve_splitting(&data, t_max, nl.dt)?;
        summary.push(("splitting_vs_stepping", num(rel(&split.terminal))));
    }

    let mut table = Table::new(&["t", "l2", "l10", "energy", "strichartz_partial", "strichartz_tail"]);
    let tail = run.strichartz_tail();
    for k in 0..run.times.len() {
        table.row(vec![
            num(run.times[k]),
            num(run.l2[k]),
            num(run.l10[k]),
            num(run.energy[k]),
            num(run.strichartz_partial[k]),
            num(tail[k]),
        ]);
    }
    table.footer("x_norm", num(run.x_norm()));
    table.write(dir, "norms.csv")?;
    files.push("norms.csv".into());
    summary.push(("x_norm", num(run.x_norm())));

    let growth = l2_growth_check(&run)?;
    summary.push(("l2_growth_predicted", num(growth.prediction)));
    summary.push(("l2_growth_fitted", rate(&growth)));
    summary.push(("l2_growth_log_model", growth.log_model.to_string()));

    if nl.scatter_samples > 0 {
        let rep = nonlinear_scatter(&run)?;
        let rates = predict_rates(&c);
        // with μ = 0 the nonlinear source alone is visible, through the weight-normalized tail
        let headline = if c.mu == 0.0 { &rep.normalized } else { &rep.raw };
        let predicted = rates.nonlinear_effective_order.unwrap_or(rates.linear_order);
        let mut table = Table::new(&[
            "t", "err", "unweighted", "normalized", "strichartz_tail", "predicted_rate", "fitted_rate",
        ]);
        for k in 0..rep.times.len() {
            table.row(vec![
                num(rep.times[k]),
                num(rep.errors[k]),
                num(rep.unweighted[k]),
                num(rep.errors[k] / rep.unweighted[k]),
                num(rep.strichartz_tail[k]),
                num(predicted),
                rate(headline),
            ]);
        }
        let rows = [
            ("predicted_rate", num(predicted)),
            ("fitted_rate", rate(headline)),
            ("fit_series", if c.mu == 0.0 { "normalized" } else { "raw" }.into()),
            ("raw_rate", rate(&rep.raw)),
            ("raw_prediction", num(rep.raw.prediction)),
            ("normalized_rate", rate(&rep.normalized)),
            ("normalized_prediction", num(rep.normalized.prediction)),
            ("window_min", num(headline.window.0)),
            ("window_max", num(headline.window.1)),
            ("tail_bound", num(rep.profile.tail_bound)),
        ];
        for (k, v) in &rows {
            table.footer(k, v.clone());
        }
        table.write(dir, "scatter_fit.csv")?;
        files.push("scatter_fit.csv".into());
        summary.extend(rows);
    }
    key_value(&summary).write(dir, "fit.csv")?;
    files.push("fit.csv".into());
    if cfg.schedule.snapshots {
        files.extend(snapshots(dir, &data, &spectral.to_physical(&run.terminal))?);
    }
    Ok(files)
}
