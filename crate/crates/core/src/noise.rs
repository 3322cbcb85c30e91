//! Stationary Gaussian force noise from vacuum fluctuations, synthesized
//! in the frequency domain.
//!
//! Both particle models see a force with a one-sided spectral density of
//! compact support. The charge couples to the field gradient and sees the
//! ohmic density S(omega) = (q^2 / 2 pi) omega up to the cutoff. The
//! mirror couples quadratically, and collapsing the two field frequencies
//! onto their sum Omega = omega + omega' leaves the piecewise-cubic
//! density S(Omega) = g(Omega) / 2 pi^2 supported on [0, 2 omega_p]:
//!
//!   g(Omega) = Omega^3 / 6                       on [0, omega_p]
//!   g(Omega) = Omega omega_p^2 / 2 - omega_p^3 / 3
//!            - Omega (Omega - omega_p)^2 / 2
//!            + (Omega - omega_p)^3 / 3           on (omega_p, 2 omega_p]
//!
//! A realization is a finite sum of harmonics with independent Gaussian
//! amplitudes, beta(t) = sum_k sqrt(S(omega_k) d_omega) [a_k cos(omega_k t)
//! + b_k sin(omega_k t)]; the central limit over thousands of modes makes
//! the samples Gaussian while the amplitudes pin the covariance exactly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

use crate::quadrature::{integrate_1d, QuadError, QuadResult, AUTO_TOL_SCALE};

/// One-sided force spectral density with compact support.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SpectralDensity {
    /// Linear-in-frequency density of the charge, cut off at `cutoff`.
    ChargeOhmic { q: f64, cutoff: f64 },
    /// Piecewise-cubic convolution density of the mirror on [0, 2 omega_p].
    MirrorPiecewise { omega_p: f64 },
}

impl SpectralDensity {
    /// Upper edge of the support.
    pub fn max_frequency(&self) -> f64 {
        match *self {
            SpectralDensity::ChargeOhmic { cutoff, .. } => cutoff,
            SpectralDensity::MirrorPiecewise { omega_p } => 2.0 * omega_p,
        }
    }

    /// See [`eval_spectrum`].
    pub fn eval(&self, omega: f64) -> f64 {
        eval_spectrum(self, omega)
    }
}

/// Evaluate the one-sided spectral density at `omega`.
///
/// Outside the support the density is exactly zero, including at the upper
/// edge of the mirror branch where naive evaluation of the cubic leaves an
/// f64 residue of order eps * omega_p^3.
pub fn eval_spectrum(s: &SpectralDensity, omega: f64) -> f64 {
    match *s {
        SpectralDensity::ChargeOhmic { q, cutoff } => {
            if omega < 0.0 || omega > cutoff {
                0.0
            } else {
                q * q / (2.0 * PI) * omega
            }
        }
        SpectralDensity::MirrorPiecewise { omega_p } => {
            if omega < 0.0 || omega >= 2.0 * omega_p {
                return 0.0;
            }
            let g = if omega <= omega_p {
                omega * omega * omega / 6.0
            } else {
                let d = omega - omega_p;
                0.5 * omega * omega_p * omega_p - omega_p * omega_p * omega_p / 3.0
                    - 0.5 * omega * d * d
                    + d * d * d / 3.0
            };
            g / (2.0 * PI * PI)
        }
    }
}

/// Stationary covariance C(tau) = integral of S(omega) cos(omega tau) over
/// the support, evaluated by the quadrature module. The mirror density has
/// a kink at omega_p, so its support is integrated in two pieces.
pub fn target_covariance(s: &SpectralDensity, tau: f64) -> Result<QuadResult, QuadError> {
    // Tolerance is anchored to the zero-lag mass, not |C(tau)|: near a zero
    // crossing a relative target would demand needless subdivision.
    let (scale, edges): (f64, Vec<f64>) = match *s {
        SpectralDensity::ChargeOhmic { q, cutoff } => {
            (q * q * cutoff * cutoff / (4.0 * PI), vec![0.0, cutoff])
        }
        SpectralDensity::MirrorPiecewise { omega_p } => {
            let m = omega_p.powi(4) / (8.0 * PI * PI);
            (m, vec![0.0, omega_p, 2.0 * omega_p])
        }
    };
    let n_segments = (edges.len() - 1).max(1);
    let tol = AUTO_TOL_SCALE * scale.max(1e-30) / n_segments as f64;

    let mut value = 0.0;
    let mut err = 0.0;
    let mut evals = 0;
    for pair in edges.windows(2) {
        let r = integrate_1d(
            |omega| eval_spectrum(s, omega) * (omega * tau).cos(),
            pair[0],
            pair[1],
            tol,
        )?;
        value += r.value;
        err += r.abs_error_estimate;
        evals += r.evaluations;
    }
    Ok(QuadResult {
        value,
        abs_error_estimate: err,
        evaluations: evals,
    })
}

/// One synthesized realization of the stationary force.
///
/// Sample `i` holds beta((i + 1/2) dt): the Langevin integrator consumes
/// the force at step midpoints, and for a stationary process the half-step
/// shift leaves every covariance statement unchanged.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct NoisePath {
    pub dt: f64,
    pub samples: Vec<f64>,
    pub seed: u64,
    pub spectrum: SpectralDensity,
}

impl NoisePath {
    /// Time of sample `i`, at the midpoint of step `i`.
    pub fn time_at(&self, i: usize) -> f64 {
        (i as f64 + 0.5) * self.dt
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum NoiseError {
    #[error("time step {dt:e} outside (0, {max_dt:e}]: need at least 10 samples per shortest spectral period")]
    StepTooCoarse { dt: f64, max_dt: f64 },
    #[error("spectral grid would need {required} modes, cap is {cap}; shorten the run or lower the cutoff")]
    GridTooFine { required: u64, cap: u64 },
    #[error("need at least 2 samples, got {got}")]
    TooFewSamples { got: usize },
    #[error("covariance estimate needs at least one path")]
    EmptyEnsemble,
    #[error("paths do not share a common grid: {detail}")]
    MismatchedPaths { detail: String },
    #[error("lag {lag} is out of range for paths of {n} samples")]
    LagOutOfRange { lag: usize, n: usize },
}

/// Frequency oversampling factor: the mode spacing is kept at
/// 2 pi / (n dt OVERSAMPLE) so the synthetic process stays effectively
/// aperiodic over the simulated window.
pub const OVERSAMPLE: f64 = 4.0;

/// Cap on the number of spectral modes for one path.
pub const MAX_MODES: u64 = 1 << 22;

/// The spectral grid [`synthesize`] uses for `n` samples at spacing `dt`:
/// `count` midpoint frequencies (k + 1/2) spacing, k < count. Exposed so
/// exact second-moment predictions can be built on the very grid the
/// synthesis draws on. A zero count means the support is degenerate and
/// the process identically zero.
pub fn mode_grid(s: &SpectralDensity, dt: f64, n: usize) -> Result<ModeGrid, NoiseError> {
    if n < 2 {
        return Err(NoiseError::TooFewSamples { got: n });
    }
    let omega_max = s.max_frequency();
    let max_dt = if omega_max > 0.0 { PI / (5.0 * omega_max) } else { f64::INFINITY };
    if !(dt > 0.0) || dt > max_dt * (1.0 + 1e-12) {
        return Err(NoiseError::StepTooCoarse { dt, max_dt });
    }
    if omega_max <= 0.0 {
        return Ok(ModeGrid { count: 0, spacing: 0.0 });
    }
    let k_required = (omega_max * n as f64 * dt * OVERSAMPLE / (2.0 * PI)).ceil().max(1.0);
    if k_required > MAX_MODES as f64 {
        return Err(NoiseError::GridTooFine {
            required: k_required as u64,
            cap: MAX_MODES,
        });
    }
    let count = k_required as usize;
    Ok(ModeGrid {
        count,
        spacing: omega_max / count as f64,
    })
}

/// Frequency grid for one synthesis; see [`mode_grid`].
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ModeGrid {
    pub count: usize,
    pub spacing: f64,
}

impl ModeGrid {
    /// Midpoint frequency of mode `k`.
    pub fn frequency(&self, k: usize) -> f64 {
        (k as f64 + 0.5) * self.spacing
    }
}

/// Synthesize `n` force samples with spacing `dt` from the spectral
/// density `s`, deterministically from `seed`.
///
/// The mode grid uses midpoint frequencies omega_k = (k + 1/2) d_omega so
/// no mode sits at zero or exactly at the support edge. Amplitude pairs
/// (a_k, b_k) are drawn interleaved per mode from a counter-based stream
/// cipher RNG, so a path is reproducible from its seed alone.
pub fn synthesize(s: &SpectralDensity, dt: f64, n: usize, seed: u64) -> Result<NoisePath, NoiseError> {
    let grid = mode_grid(s, dt, n)?;
    if grid.count == 0 {
        // Degenerate support: the process is identically zero.
        return Ok(NoisePath {
            dt,
            samples: vec![0.0; n],
            seed,
            spectrum: *s,
        });
    }
    let n_modes = grid.count;
    let d_omega = grid.spacing;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cos_amp = Vec::with_capacity(n_modes);
    let mut sin_amp = Vec::with_capacity(n_modes);
    let mut omegas = Vec::with_capacity(n_modes);
    for k in 0..n_modes {
        let omega_k = grid.frequency(k);
        let amp = (eval_spectrum(s, omega_k) * d_omega).sqrt();
        let a: f64 = StandardNormal.sample(&mut rng);
        let b: f64 = StandardNormal.sample(&mut rng);
        cos_amp.push(amp * a);
        sin_amp.push(amp * b);
        omegas.push(omega_k);
    }

    // Sum the harmonics with a rotation recurrence per mode: one sin/cos
    // pair per mode instead of one per sample, with phase drift well under
    // statistical resolution for every run length this crate permits.
    let mut samples = vec![0.0f64; n];
    for k in 0..n_modes {
        let (ca, sa) = (cos_amp[k], sin_amp[k]);
        let theta0 = omegas[k] * dt * 0.5;
        let step = omegas[k] * dt;
        let (mut c, mut s_) = (theta0.cos(), theta0.sin());
        let (step_c, step_s) = (step.cos(), step.sin());
        for sample in samples.iter_mut() {
            *sample += ca * c + sa * s_;
            let c_next = c * step_c - s_ * step_s;
            s_ = s_ * step_c + c * step_s;
            c = c_next;
        }
    }

    Ok(NoisePath {
        dt,
        samples,
        seed,
        spectrum: *s,
    })
}

/// Mixing core of splitmix64, used to spread (seed, path, stream) tuples
/// into decorrelated RNG seeds.
fn splitmix64_mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Derive the RNG seed for one path and one purpose from a master seed.
///
/// Stream 0 feeds noise synthesis and stream 1 the initial-condition draw,
/// so changing the initial-condition policy never perturbs the noise
/// realization of a given path.
pub fn substream_seed(master_seed: u64, path_index: u64, stream: u64) -> u64 {
    let mut h = splitmix64_mix(master_seed ^ 0xa0761d6478bd642f);
    h = splitmix64_mix(h ^ path_index.wrapping_mul(0x9e3779b97f4a7c15));
    splitmix64_mix(h ^ stream.wrapping_add(0x2545f4914f6cdd1d))
}

/// Sum `xs` pairing element i with its mirror len-1-i before accumulating.
/// IEEE addition is commutative, so the result is bit-identical for a
/// sequence and its reversal; the covariance estimator builds on this to
/// make time-reversal invariance exact rather than approximate.
fn reversal_symmetric_sum(xs: &[f64]) -> f64 {
    let m = xs.len();
    let mut acc = 0.0;
    for i in 0..m / 2 {
        acc += xs[i] + xs[m - 1 - i];
    }
    if m % 2 == 1 {
        acc += xs[m / 2];
    }
    acc
}

/// Ensemble estimate of C(lag * dt) from synthesized paths: the per-path
/// lagged product mean, averaged over paths, with the cross-path standard
/// error. All paths must share dt, length and spectrum.
pub fn empirical_covariance(paths: &[NoisePath], lag: usize) -> Result<(f64, f64), NoiseError> {
    let first = paths.first().ok_or(NoiseError::EmptyEnsemble)?;
    let n = first.samples.len();
    if lag >= n {
        return Err(NoiseError::LagOutOfRange { lag, n });
    }
    for (i, p) in paths.iter().enumerate() {
        if p.samples.len() != n {
            return Err(NoiseError::MismatchedPaths {
                detail: format!("path {i} has {} samples, path 0 has {n}", p.samples.len()),
            });
        }
        if p.dt.to_bits() != first.dt.to_bits() {
            return Err(NoiseError::MismatchedPaths {
                detail: format!("path {i} has dt {:e}, path 0 has {:e}", p.dt, first.dt),
            });
        }
        if p.spectrum != first.spectrum {
            return Err(NoiseError::MismatchedPaths {
                detail: format!("path {i} was drawn from a different spectrum"),
            });
        }
    }

    let m = n - lag;
    let mut per_path = Vec::with_capacity(paths.len());
    let mut products = vec![0.0f64; m];
    for p in paths {
        for i in 0..m {
            products[i] = p.samples[i] * p.samples[i + lag];
        }
        per_path.push(reversal_symmetric_sum(&products) / m as f64);
    }

    let n_paths = per_path.len() as f64;
    let mean = per_path.iter().sum::<f64>() / n_paths;
    let std_error = if per_path.len() > 1 {
        let var = per_path.iter().map(|c| (c - mean) * (c - mean)).sum::<f64>() / (n_paths - 1.0);
        (var / n_paths).sqrt()
    } else {
        0.0
    };
    Ok((mean, std_error))
}
