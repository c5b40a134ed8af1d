//! Numerics for the wave equation with scale-invariant damping and mass, u_tt - Δu + μ₁/(1+t) u_t + μ₂/(1+t)² u = 0,
//! and its energy-critical Klein-Gordon counterpart in three dimensions.

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub mod bessel;
pub mod field;
pub mod fit;
pub mod gamma;
pub mod kernel;
pub mod nonlinear;
pub mod ode;
pub mod params;
pub mod presets;
pub mod quadrature;
pub mod scatter;
