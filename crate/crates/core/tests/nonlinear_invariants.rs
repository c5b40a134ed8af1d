//! Convergence and scaling properties of the nonlinear solver.

use sidw_core::field::{GridSpec, SpectralGrid};
use sidw_core::nonlinear::{small_gaussian_data, EvolveConfig, NlkgSolver, Padding};
use sidw_core::params::{CoefficientSet, LambdaSign};

fn grid() -> GridSpec {
    GridSpec::new(3, 16, 8.0).unwrap()
}

#[test]
fn dt_refinement_order_is_at_least_two() {
    let g = grid();
    let c = CoefficientSet::from_damping_and_mass(1.0, 0.1875, 3).with_lambda(LambdaSign::Minus);
    let solver = NlkgSolver::new(&c, g, Padding::None).unwrap();
    // large enough that the nonlinear part dominates the step error
    let data = small_gaussian_data(g, 2.0, 0.3);
    let runs: Vec<_> = [0.25, 0.125, 0.0625]
        .iter()
        .map(|&dt| solver.evolve(&data, &EvolveConfig::new(2.0, dt)).unwrap().terminal_nonlinear.unwrap())
        .collect();
    let sp = SpectralGrid::new(g);
    let d1 = sp.spectral_norms(&runs[0].sub(&runs[1])).h1_pair;
    let d2 = sp.spectral_norms(&runs[1].sub(&runs[2])).h1_pair;
    let order = (d1 / d2).log2();
    assert!(order >= 2.0, "observed order {order:.2} (d1 {d1:e}, d2 {d2:e})");
}

#[test]
fn strichartz_norm_is_linear_in_small_data() {
    let g = grid();
    let c = CoefficientSet::from_damping_and_mass(1.0, 0.1875, 3);
    let solver = NlkgSolver::new(&c, g, Padding::None).unwrap();
    let cfg = EvolveConfig::new(2.0, 0.25);
    let x = |eps: f64| solver.evolve(&small_gaussian_data(g, 2.0, eps), &cfg).unwrap().x_norm();
    let ratio = x(1e-3) / x(5e-4);
    assert!((ratio - 2.0).abs() < 1e-3, "ratio {ratio}");
}

#[test]
fn strichartz_tail_decreases_to_zero() {
    let g = grid();
    let c = CoefficientSet::from_damping_and_mass(0.5, 0.1, 3);
    let run = NlkgSolver::new(&c, g, Padding::None).unwrap().evolve(&small_gaussian_data(g, 2.0, 1e-2), &EvolveConfig::new(4.0, 0.25)).unwrap();
    let tail = run.strichartz_tail();
    assert!(tail.windows(2).all(|w| w[1] <= w[0]));
    assert_eq!(*tail.last().unwrap(), 0.0);
    assert!((tail[0] - run.x_norm()).abs() <= 1e-12 * run.x_norm());
}
