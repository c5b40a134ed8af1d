//! Initial data families used by the experiments.

use crate::field::{FieldState, GridSpec, SpectralGrid};
use num_complex::Complex64;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DataPreset {
    /// `A exp(-|x|²/w²)`, zero velocity.
    Gaussian { amplitude: f64, width: f64 },
    /// Smooth compactly supported `A exp(1 - 1/(1 - |x|²/R²))`, zero velocity.
    Bump { amplitude: f64, radius: f64 },
    /// Fourier profile `|ξ|^{-a} exp(-|ξ|² w²/2)` (zero mean), scaled to peak `A`;
    /// rich in low frequencies for `a` close to `d/2`.
    Multiscale { amplitude: f64, exponent: f64, width: f64 },
    /// `A cos(π m x₁ / L)`, a single lattice mode along the first axis.
    PlaneWave { amplitude: f64, mode: u32 },
}

impl DataPreset {
    pub fn name(&self) -> &'static str {
        match self {
            DataPreset::Gaussian { .. } => "gaussian",
            DataPreset::Bump { .. } => "bump",
            DataPreset::Multiscale { .. } => "multiscale",
            DataPreset::PlaneWave { .. } => "plane_wave",
        }
    }

    pub fn build(&self, grid: GridSpec) -> FieldState {
        let r2 = |x: [f64; 3]| x[0] * x[0] + x[1] * x[1] + x[2] * x[2];
        let v = match *self {
            DataPreset::Gaussian { amplitude, width } => {
                grid.sample(|x| amplitude * (-r2(x) / (width * width)).exp())
            }
            DataPreset::Bump { amplitude, radius } => grid.sample(|x| {
                let s = r2(x) / (radius * radius);
                if s < 1.0 {
                    amplitude * (1.0 - 1.0 / (1.0 - s)).exp()
                } else {
                    0.0
                }
            }),
            DataPreset::Multiscale { amplitude, exponent, width } => {
                let spectral = SpectralGrid::new(grid);
                let coeffs: Vec<Complex64> = (0..grid.len())
                    .map(|m| {
                        let xi = spectral.xi_abs(m);
                        if xi == 0.0 {
                            Complex64::default()
                        } else {
                            Complex64::new(xi.powf(-exponent) * (-0.5 * xi * xi * width * width).exp(), 0.0)
                        }
                    })
                    .collect();
                // the lattice origin sits at index n/2 per axis; shift the profile there
                let shifted: Vec<Complex64> = coeffs
                    .iter()
                    .enumerate()
                    .map(|(m, z)| {
                        let idx = grid.unflatten(m);
                        let parity: i64 = (0..grid.d).map(|a| grid.wavenumber(idx[a])).sum();
                        if parity.rem_euclid(2) == 0 {
                            *z
                        } else {
                            -z
                        }
                    })
                    .collect();
                let raw = spectral.inverse(&shifted);
                let peak = raw.iter().fold(0.0f64, |m, x| m.max(x.abs()));
                raw.iter().map(|x| amplitude * x / peak).collect()
            }
            DataPreset::PlaneWave { amplitude, mode } => {
                let k = std::f64::consts::PI * mode as f64 / grid.half_width;
                grid.sample(|x| amplitude * (k * x[0]).cos())
            }
        };
        FieldState { grid, v, vt: vec![0.0; grid.len()], t: 0.0 }
    }
}

impl FromStr for DataPreset {
    type Err = String;

    /// Parses `gaussian`, `bump`, `multiscale`, `plane_wave` with default shape parameters.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "gaussian" => Ok(DataPreset::Gaussian { amplitude: 1.0, width: 1.0 }),
            "bump" => Ok(DataPreset::Bump { amplitude: 1.0, radius: 2.0 }),
            "multiscale" => Ok(DataPreset::Multiscale { amplitude: 1.0, exponent: 0.45, width: 1.0 }),
            "plane_wave" => Ok(DataPreset::PlaneWave { amplitude: 1.0, mode: 1 }),
            other => Err(format!("unknown data preset '{other}' (gaussian | bump | multiscale | plane_wave)")),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gaussian_peak_at_origin() {
        let grid = GridSpec::new(1, 64, 8.0).unwrap();
        let st = DataPreset::Gaussian { amplitude: 2.0, width: 1.0 }.build(grid);
        assert_eq!(st.v[32], 2.0);
    }

    #[test]
    fn bump_is_compact() {
        let grid = GridSpec::new(2, 32, 4.0).unwrap();
        let st = DataPreset::Bump { amplitude: 1.0, radius: 1.5 }.build(grid);
        for i in 0..grid.len() {
            let x = grid.point(i);
            if x[0].hypot(x[1]) >= 1.5 {
                assert_eq!(st.v[i], 0.0);
            }
        }
        assert!((st.v[16 * 32 + 16] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn multiscale_is_centered_real_and_normalized() {
        let grid = GridSpec::new(1, 256, 64.0).unwrap();
        let st = DataPreset::Multiscale { amplitude: 1.0, exponent: 0.45, width: 1.0 }.build(grid);
        let peak = st.v.iter().enumerate().fold((0, 0.0f64), |a, (i, x)| if x.abs() > a.1 { (i, x.abs()) } else { a });
        assert_eq!(peak.0, 128);
        assert!((peak.1 - 1.0).abs() < 1e-15);
        assert!(st.v.iter().sum::<f64>().abs() < 1e-10);
    }

    #[test]
    fn plane_wave_is_one_mode() {
        let grid = GridSpec::new(1, 64, 8.0).unwrap();
        let st = DataPreset::PlaneWave { amplitude: 1.0, mode: 3 }.build(grid);
        let spec = SpectralGrid::new(grid).forward(&st.v);
        for (i, z) in spec.iter().enumerate() {
            let expect = if i == 3 || i == 61 { 32.0 } else { 0.0 };
            assert!((z.norm() - expect).abs() < 1e-10, "{i}: {z}");
        }
    }

    #[test]
    fn parse_names() {
        assert_eq!("bump".parse::<DataPreset>().unwrap().name(), "bump");
        assert!("square".parse::<DataPreset>().is_err());
    }
}
