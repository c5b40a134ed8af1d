//! Linear scattering on the wide 1D box: Cauchy property, error ratios and fitted orders.

use sidw_core::field::{GridSpec, LinearPropagator, SpectralPair};
use sidw_core::fit::log_spaced_times;
use sidw_core::kernel::KernelStrategy;
use sidw_core::params::CoefficientSet;
use sidw_core::presets::DataPreset;
use sidw_core::scatter::{asymptotic_profile, decay_curve, extract_profile, fit_linear_decay};

fn setup(mu: f64) -> (CoefficientSet, LinearPropagator, SpectralPair) {
    let grid = GridSpec::new(1, 1 << 14, 1024.0).unwrap();
    let c = CoefficientSet::from_mass(mu, 1);
    let prop = LinearPropagator::new(&c, grid, KernelStrategy::Auto);
    let data = DataPreset::Gaussian { amplitude: 1.0, width: 1.0 }.build(grid);
    let d = prop.spectral().to_spectral(&data);
    (c, prop, d)
}

#[test]
fn profile_oscillation_shrinks_by_decade() {
    let (_, prop, d) = setup(0.1875);
    let sup = |tau: f64| {
        let base = extract_profile(&prop, &d, tau).unwrap().vplus;
        (1..=8)
            .map(|k| {
                let p = extract_profile(&prop, &d, tau * (1.0 + k as f64 / 8.0)).unwrap().vplus;
                prop.spectral().spectral_norms(&p.sub(&base)).energy_pair
            })
            .fold(0.0f64, f64::max)
    };
    let (a, b, c) = (sup(4.0), sup(40.0), sup(400.0));
    assert!(a > b && b > c, "{a:e} {b:e} {c:e}");
}

#[test]
fn error_ratio_matches_quarter_power() {
    let (_, prop, d) = setup(0.1875);
    let prof = asymptotic_profile(&prop, &d).unwrap();
    let e = decay_curve(&prop, &d, &prof, &[100.0, 200.0]).unwrap().pair_errors();
    let ratio = e[0] / e[1];
    let expect = 2f64.powf(0.25);
    assert!((ratio / expect - 1.0).abs() <= 0.15, "ratio {ratio:.4} vs {expect:.4}");
}

#[test]
fn fitted_orders_within_a_tenth() {
    let ts = log_spaced_times(50.0, 800.0, 16);
    for mu in [0.05, 0.1, 0.1875] {
        let (c, prop, d) = setup(mu);
        let prof = asymptotic_profile(&prop, &d).unwrap();
        let curve = decay_curve(&prop, &d, &prof, &ts).unwrap();
        let fit = fit_linear_decay(&ts, &curve.pair_errors(), &c, Some((50.0, 800.0))).unwrap();
        assert!(fit.abs_deviation <= 0.1, "mu {mu}: exponent {:.4} vs {:.4}", fit.exponent, fit.prediction);
    }
}
