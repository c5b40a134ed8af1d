//! Experiment configuration: a sectioned TOML file layered over per-experiment defaults.
//!
//! Resolution order is defaults, then the config file, then `--set key=value` overrides.
//! The fully resolved config is what gets hashed and written next to the outputs.

use crate::error::CliError;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sidw_core::field::GridSpec;
use sidw_core::fit::log_spaced_times;
use sidw_core::nonlinear::Padding;
use sidw_core::params::{CoefficientSet, LambdaSign};
use sidw_core::presets::DataPreset;
use std::path::PathBuf;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    BesselCheck,
    KernelCheck,
    Scatter,
    DwScatter,
    Nlkg,
    Growth,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::BesselCheck => "bessel-check",
            Experiment::KernelCheck => "kernel-check",
            Experiment::Scatter => "scatter",
            Experiment::DwScatter => "dw-scatter",
            Experiment::Nlkg => "nlkg",
            Experiment::Growth => "growth",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub coefficients: Coefficients,
    pub grid: Grid,
    pub data: Data,
    pub schedule: Schedule,
    pub nonlinear: Nonlinear,
    pub tolerances: Tolerances,
    pub bessel: BesselSweep,
    pub kernel: KernelSweep,
}

/// Damping `mu1` plus exactly one of the mass `mu2` or the effective mass `mu`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coefficients {
    pub mu1: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub d: usize,
    pub n: usize,
    pub half_width: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Component {
    /// Preset in the position, zero velocity.
    Position,
    /// Zero position, preset in the velocity.
    Velocity,
    /// Preset position with velocity `(1/2 + Re ν)` times it, the growing branch at `ξ = 0`.
    Growing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Data {
    pub preset: String,
    pub amplitude: f64,
    pub width: f64,
    pub radius: f64,
    pub exponent: f64,
    pub mode: u32,
    pub component: Component,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Spacing {
    Log,
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileKind {
    Asymptotic,
    Truncated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Schedule {
    pub t_min: f64,
    pub t_max: f64,
    pub samples: usize,
    pub spacing: Spacing,
    /// Fit window; both ends or neither (default `[t_max/10, t_max]`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window_max: Option<f64>,
    pub profile: ProfileKind,
    pub snapshots: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaddingMode {
    None,
    Double,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Nonlinear {
    /// `+1` (focusing) or `-1`.
    pub lambda: String,
    pub epsilon: f64,
    /// Width of the Gaussian that is normalized to unit `H¹×L²` and scaled by `epsilon`.
    pub width: f64,
    pub dt: f64,
    pub padding: PaddingMode,
    pub picard_iterations: usize,
    pub corrector_passes: usize,
    pub scatter_samples: usize,
    pub splitting: bool,
    pub blowup_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    pub oracle: f64,
    pub wronskian: f64,
    pub contraction: f64,
    pub horizon_threshold: f64,
    pub check_horizon: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BesselSweep {
    pub nu_real: Vec<f64>,
    pub nu_imag: Vec<f64>,
    pub tau: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelSweep {
    pub mu: Vec<f64>,
    pub t: Vec<f64>,
    pub t0: Vec<f64>,
    pub xi: Vec<f64>,
    pub cocycle_samples: usize,
}

impl ExperimentConfig {
    pub fn defaults(experiment: Experiment) -> Self {
        let mut cfg = ExperimentConfig {
            experiment,
            seed: 0,
            output_dir: PathBuf::from(format!("out/{}", experiment.name())),
            coefficients: Coefficients { mu1: 0.0, mu2: None, mu: Some(0.1875) },
            grid: Grid { d: 1, n: 16384, half_width: 1024.0 },
            data: Data {
                preset: "gaussian".into(),
                amplitude: 1.0,
                width: 1.0,
                radius: 2.0,
                exponent: 0.45,
                mode: 1,
                component: Component::Position,
            },
            schedule: Schedule {
                t_min: 50.0,
                t_max: 800.0,
                samples: 24,
                spacing: Spacing::Log,
                window_min: None,
                window_max: None,
                profile: ProfileKind::Asymptotic,
                snapshots: false,
            },
            nonlinear: Nonlinear {
                lambda: "+1".into(),
                epsilon: 1e-3,
                width: 2.0,
                dt: 0.25,
                padding: PaddingMode::None,
                picard_iterations: 6,
                corrector_passes: 1,
                scatter_samples: 16,
                splitting: true,
                blowup_factor: 1e3,
            },
            tolerances: Tolerances {
                oracle: 1e-7,
                wronskian: 1e-10,
                contraction: 0.5,
                horizon_threshold: 1e-6,
                check_horizon: true,
            },
            bessel: BesselSweep {
                nu_real: vec![0.0, 0.25, 0.5, 0.75, 1.5],
                nu_imag: vec![0.5, 1.5],
                tau: vec![1e-3, 0.1, 1.0, 5.0, 10.0, 15.0, 25.0, 40.0, 100.0, 1e3],
            },
            kernel: KernelSweep {
                mu: vec![0.0, 0.1, 0.1875, 0.25, 0.5, 1.0],
                t: vec![1.0, 10.0, 100.0],
                t0: vec![0.0, 1.0, 10.0],
                xi: vec![0.01, 0.1, 1.0, 10.0],
                cocycle_samples: 32,
            },
        };
        match experiment {
            Experiment::BesselCheck | Experiment::KernelCheck | Experiment::Scatter => {}
            Experiment::DwScatter => {
                // low-frequency rich velocity data; not compactly supported, so no horizon check
                cfg.coefficients = Coefficients { mu1: 1.0, mu2: Some(0.0), mu: None };
                cfg.grid = Grid { d: 1, n: 65536, half_width: 65536.0 };
                cfg.data.preset = "multiscale".into();
                cfg.data.exponent = 0.49;
                cfg.data.width = 30.0;
                cfg.data.component = Component::Velocity;
                cfg.schedule.samples = 16;
                cfg.tolerances.check_horizon = false;
            }
            Experiment::Growth => {
                // the growing branch lives in the zero mode, which is a torus-scale effect
                cfg.grid = Grid { d: 1, n: 512, half_width: 32.0 };
                cfg.data.component = Component::Growing;
                cfg.schedule.t_min = 100.0;
                cfg.schedule.t_max = 1000.0;
                cfg.tolerances.check_horizon = false;
            }
            Experiment::Nlkg => {
                cfg.coefficients = Coefficients { mu1: 1.0, mu2: Some(-0.0625), mu: None };
                cfg.grid = Grid { d: 3, n: 32, half_width: 16.0 };
                cfg.schedule.t_min = 0.0;
                cfg.schedule.t_max = 8.0;
            }
        }
        cfg
    }

    /// Layer a TOML table (config file or overrides) over `self`.
    pub fn merged(&self, layer: &toml::Table) -> Result<Self, CliError> {
        let mut base = match toml::Value::try_from(self).map_err(|e| CliError::Config(e.to_string()))? {
            toml::Value::Table(t) => t,
            _ => unreachable!("config serializes to a table"),
        };
        // giving either mass replaces both, so the two forms never coexist by accident
        if let Some(toml::Value::Table(c)) = layer.get("coefficients") {
            if c.contains_key("mu") || c.contains_key("mu2") {
                if let Some(toml::Value::Table(b)) = base.get_mut("coefficients") {
                    b.remove("mu");
                    b.remove("mu2");
                }
            }
        }
        merge_tables(&mut base, layer);
        let cfg: ExperimentConfig =
            toml::Value::Table(base).try_into().map_err(|e: toml::de::Error| CliError::Config(one_line(&e.to_string())))?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the resolved config in canonical TOML form; the output path is not
    /// part of the experiment and is left out.
    pub fn hash(&self) -> String {
        let keyed = ExperimentConfig { output_dir: PathBuf::new(), ..self.clone() };
        Sha256::digest(keyed.to_toml().as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: String| Err(CliError::Config(msg));
        match (self.coefficients.mu2, self.coefficients.mu) {
            (Some(_), Some(_)) => return bad("give only one of coefficients.mu2 and coefficients.mu".into()),
            (None, None) => return bad("coefficients need mu2 or mu".into()),
            _ => {}
        }
        let finite = [
            self.coefficients.mu1,
            self.coefficients.mu2.unwrap_or(0.0),
            self.coefficients.mu.unwrap_or(0.0),
            self.grid.half_width,
            self.schedule.t_min,
            self.schedule.t_max,
        ];
        if finite.iter().any(|x| !x.is_finite()) {
            return bad("coefficients, half_width and schedule times must be finite".into());
        }
        self.grid_spec()?;
        self.preset()?;
        if !(self.schedule.t_min >= 0.0 && self.schedule.t_max > self.schedule.t_min) {
            return bad(format!("need 0 <= t_min < t_max, got [{}, {}]", self.schedule.t_min, self.schedule.t_max));
        }
        if self.schedule.samples < 2 {
            return bad("schedule.samples must be at least 2".into());
        }
        match (self.schedule.window_min, self.schedule.window_max) {
            (Some(lo), Some(hi)) if !(lo < hi) => return bad(format!("empty fit window [{lo}, {hi}]")),
            (Some(_), None) | (None, Some(_)) => return bad("give both schedule.window_min and window_max".into()),
            _ => {}
        }
        self.lambda()?;
        let nl = &self.nonlinear;
        if !(nl.epsilon >= 0.0 && nl.width > 0.0 && nl.dt > 0.0 && nl.blowup_factor > 1.0) {
            return bad("nonlinear needs epsilon >= 0, width > 0, dt > 0, blowup_factor > 1".into());
        }
        let tol = &self.tolerances;
        if !(tol.oracle > 0.0 && tol.wronskian > 0.0 && tol.contraction > 0.0 && tol.horizon_threshold > 0.0) {
            return bad("tolerances must be positive".into());
        }
        match self.experiment {
            Experiment::BesselCheck if self.bessel.tau.is_empty() => bad("bessel.tau is empty".into()),
            Experiment::KernelCheck if [&self.kernel.mu, &self.kernel.t, &self.kernel.t0, &self.kernel.xi].iter().any(|v| v.is_empty()) => {
                bad("kernel sweep lists must be non-empty".into())
            }
            Experiment::Nlkg if self.grid.d != 3 => bad(format!("nlkg needs grid.d = 3, got {}", self.grid.d)),
            Experiment::DwScatter if self.coefficients.mu1 > 2.0 && self.coefficients.mu2 == Some(0.0) => {
                bad("dw-scatter does not cover mu1 > 2 with mu2 = 0".into())
            }
            _ => Ok(()),
        }
    }

    pub fn grid_spec(&self) -> Result<GridSpec, CliError> {
        GridSpec::new(self.grid.d, self.grid.n, self.grid.half_width).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn coefficient_set(&self) -> Result<CoefficientSet, CliError> {
        let c = &self.coefficients;
        let d = self.grid.d;
        let set = match (c.mu2, c.mu) {
            (Some(mu2), None) => CoefficientSet::derive(c.mu1, mu2, d),
            (None, Some(mu)) => CoefficientSet::from_damping_and_mass(c.mu1, mu, d),
            _ => return Err(CliError::Config("give exactly one of coefficients.mu2 and coefficients.mu".into())),
        };
        Ok(set.with_lambda(self.lambda()?))
    }

    pub fn lambda(&self) -> Result<LambdaSign, CliError> {
        self.nonlinear.lambda.parse().map_err(CliError::Config)
    }

    pub fn padding(&self) -> Padding {
        match self.nonlinear.padding {
            PaddingMode::None => Padding::None,
            PaddingMode::Double => Padding::Double,
        }
    }

    pub fn preset(&self) -> Result<DataPreset, CliError> {
        let d = &self.data;
        let shape = d.preset.parse::<DataPreset>().map_err(CliError::Config)?;
        Ok(match shape {
            DataPreset::Gaussian { .. } => DataPreset::Gaussian { amplitude: d.amplitude, width: d.width },
            DataPreset::Bump { .. } => DataPreset::Bump { amplitude: d.amplitude, radius: d.radius },
            DataPreset::Multiscale { .. } => {
                DataPreset::Multiscale { amplitude: d.amplitude, exponent: d.exponent, width: d.width }
            }
            DataPreset::PlaneWave { .. } => DataPreset::PlaneWave { amplitude: d.amplitude, mode: d.mode },
        })
    }

    pub fn sample_times(&self) -> Vec<f64> {
        let s = &self.schedule;
        match s.spacing {
            Spacing::Log => log_spaced_times(s.t_min, s.t_max, s.samples),
            Spacing::Linear => {
                (0..s.samples).map(|i| s.t_min + (s.t_max - s.t_min) * i as f64 / (s.samples - 1) as f64).collect()
            }
        }
    }

    pub fn window(&self) -> Option<(f64, f64)> {
        self.schedule.window_min.zip(self.schedule.window_max)
    }
}

/// Recursive merge; scalars and arrays in `layer` replace those in `base`.
fn merge_tables(base: &mut toml::Table, layer: &toml::Table) {
    for (k, v) in layer {
        match (base.get_mut(k), v) {
            (Some(toml::Value::Table(b)), toml::Value::Table(l)) => merge_tables(b, l),
            _ => {
                base.insert(k.clone(), v.clone());
            }
        }
    }
}

/// Turn `section.key=value` into a one-entry nested table. The value is read as a TOML
/// literal, falling back to a plain string.
pub fn override_table(assignment: &str) -> Result<toml::Table, CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| CliError::Config(format!("override '{assignment}' is not key=value")))?;
    let key = key.trim();
    if key.is_empty() || key.split('.').any(str::is_empty) {
        return Err(CliError::Config(format!("bad override key '{key}'")));
    }
    let raw = raw.trim();
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let mut table = toml::Table::new();
    let parts: Vec<&str> = key.split('.').collect();
    let mut cursor = &mut table;
    for part in &parts[..parts.len() - 1] {
        cursor = match cursor.entry(part.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new())) {
            toml::Value::Table(t) => t,
            _ => unreachable!("fresh entry is a table"),
        };
    }
    cursor.insert(parts[parts.len() - 1].to_string(), value);
    Ok(table)
}

pub fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}
