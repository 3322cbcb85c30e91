//! Langevin dynamics of a point particle coupled to quantum-vacuum
//! fluctuations of a massless scalar field in 1+1 dimensions.
//!
//! Natural units with hbar = c = 1 are used throughout: frequencies,
//! damping rates and masses all carry dimension 1/time, velocities are
//! dimensionless fractions of c. The crate provides
//!
//! * closed-form equilibrium results and the fluctuation-dissipation
//!   cross checks ([`analytic`]),
//! * an adaptive Gauss-Kronrod quadrature oracle used to validate every
//!   closed form independently ([`quadrature`]),
//! * spectral synthesis of the stationary vacuum force ([`noise`]),
//! * the ensemble integrator with deterministic parallel reduction
//!   ([`langevin`]),
//! * parameter handling and SI-unit estimates ([`params`]).
//!
//! Determinism is a design constraint, not an accident: a master seed
//! fixes every noise realization, and ensemble reductions are ordered so
//! results are bit-identical across thread counts and across the
//! `parallel` feature toggle.

pub mod analytic;
pub mod langevin;
pub mod noise;
pub mod params;
pub mod quadrature;

/// Format a float with 12 significant digits in scientific notation.
///
/// Every human-readable float the toolkit prints goes through this one
/// formatter so that output is stable enough to diff across runs.
pub fn sig12(x: f64) -> String {
    format!("{:.11e}", x)
}

/// True when the crate was built with the `parallel` feature, i.e. when
/// [`langevin::run_ensemble`] fans path batches out across a thread pool.
pub fn parallel_enabled() -> bool {
    cfg!(feature = "parallel")
}

/// Cap the global thread pool at `n` threads. Returns whether the request
/// took effect: false once any pool exists, or in a build without the
/// `parallel` feature (results are bit-identical either way, only wall
/// time changes).
#[cfg(feature = "parallel")]
pub fn configure_threads(n: usize) -> bool {
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .is_ok()
}

#[cfg(not(feature = "parallel"))]
pub fn configure_threads(_n: usize) -> bool {
    false
}
