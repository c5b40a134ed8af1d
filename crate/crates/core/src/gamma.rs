//! Complex log-gamma via the Lanczos approximation (g = 7, 9 coefficients).

use num_complex::Complex64;
use std::f64::consts::PI;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// `ln Γ(z)` for `Re z ≥ 1/2`. The imaginary part is only defined modulo 2π.
pub fn ln_gamma(z: Complex64) -> Complex64 {
    debug_assert!(z.re >= 0.5, "ln_gamma needs Re z >= 1/2, got {z}");
    let z = z - 1.0;
    let mut x = Complex64::new(LANCZOS_COEFFS[0], 0.0);
    for (i, &c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        x += c / (z + i as f64);
    }
    let t = z + LANCZOS_G + 0.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * t.ln() - t + x.ln()
}

/// `Γ(z)` for arbitrary complex `z` away from the poles.
pub fn gamma(z: Complex64) -> Complex64 {
    if z.re < 0.5 {
        PI / ((PI * z).sin() * gamma(1.0 - z))
    } else {
        ln_gamma(z).exp()
    }
}

/// `1/Γ(z)`, an entire function: exactly zero at the non-positive integers.
pub fn recip_gamma(z: Complex64) -> Complex64 {
    if z.re < 0.5 {
        if z.im == 0.0 && z.re == z.re.round() {
            return Complex64::new(0.0, 0.0);
        }
        // 1/Γ(z) = Γ(1-z) sin(πz)/π
        (PI * z).sin() * ln_gamma(1.0 - z).exp() / PI
    } else {
        (-ln_gamma(z)).exp()
    }
}

/// Digamma at positive integers, `ψ(n) = -γ + Σ_{k<n} 1/k`.
pub fn digamma_int(n: usize) -> f64 {
    debug_assert!(n >= 1);
    let harmonic: f64 = (1..n).map(|k| 1.0 / k as f64).sum();
    harmonic - EULER_GAMMA
}

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
