//! Ensemble integration of the vacuum-noise Langevin equation
//!
//!   m dv/dt = -m gamma (v - v_ref) + beta(t)
//!
//! with the exact exponential propagator over each step and midpoint
//! forcing: the drag factor is integrated analytically, the stochastic
//! force enters once per step at the step midpoint,
//!
//!   v_{k+1} = v_ref + (v_k - v_ref) e^(-gamma dt)
//!           + (dt / m) e^(-gamma dt / 2) beta(t_k + dt/2),
//!
//! and the position advances by the trapezoid rule. The charge relaxes
//! towards rest (v_ref = 0); the mirror's drag acts on v - v0, so v_ref is
//! its reference velocity.
//!
//! Reproducibility contract: a run is a pure function of its
//! configuration. Paths are simulated in fixed-size batches whose partial
//! sums are folded in batch order, so ensembles are bit-identical across
//! thread counts and across the `parallel` feature toggle.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::noise::{mode_grid, substream_seed, synthesize, NoiseError, NoisePath, SpectralDensity};
use crate::params::{derive_constants, ParamError, ParticleKind, ParticleParams};
use crate::quadrature::{integrate_1d_auto, QuadError};
use crate::sig12;

/// Paths per reduction batch. Fixed (not derived from the thread count) so
/// the reduction tree, and therefore every rounded bit, is the same no
/// matter how the batches are scheduled.
const BATCH_SIZE: usize = 32;

/// Number of tail blocks in the equilibrium estimator.
const EQ_BLOCKS: usize = 20;

/// One ensemble run, fully specified.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SimConfig {
    pub particle: ParticleParams,
    /// Time step; must satisfy gamma dt <= 0.01 and the noise module's
    /// spectral sampling bound dt <= pi / (5 omega_max).
    pub dt: f64,
    pub t_end: f64,
    pub n_paths: usize,
    pub master_seed: u64,
    /// Record every `record_stride`-th step (plus the initial state).
    pub record_stride: usize,
    /// Draw each path's initial velocity from the stationary Gaussian
    /// around v_ref instead of starting cold at the particle's v0.
    pub equilibrium_start: bool,
}

impl SimConfig {
    pub fn new(
        particle: ParticleParams,
        dt: f64,
        t_end: f64,
        n_paths: usize,
        master_seed: u64,
        record_stride: usize,
    ) -> Self {
        SimConfig {
            particle,
            dt,
            t_end,
            n_paths,
            master_seed,
            record_stride,
            equilibrium_start: false,
        }
    }

    pub fn with_equilibrium_start(mut self, yes: bool) -> Self {
        self.equilibrium_start = yes;
        self
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error(transparent)]
    Param(#[from] ParamError),
    #[error(transparent)]
    Noise(#[from] NoiseError),
    #[error(transparent)]
    Quad(#[from] QuadError),
    #[error("time step {dt:e} exceeds the stability bound {max_dt:e} (gamma dt <= 0.01 and spectral sampling)")]
    StepTooLarge { dt: f64, max_dt: f64 },
    #[error("an ensemble needs at least 2 paths, got {got}")]
    TooFewPaths { got: usize },
    #[error("record_stride must be at least 1")]
    ZeroStride,
    #[error("t_end {t_end:e} spans fewer than 2 steps of dt {dt:e}")]
    RunTooShort { t_end: f64, dt: f64 },
    #[error("noise path has {got} samples but the run needs {needed}")]
    PathTooShort { needed: usize, got: usize },
    #[error("noise path was synthesized with dt {path_dt:e}, run uses {cfg_dt:e}")]
    StepMismatch { path_dt: f64, cfg_dt: f64 },
    #[error("{regime} window has {got} recorded points, need at least {needed}")]
    InsufficientRange {
        regime: &'static str,
        needed: usize,
        got: usize,
    },
}

/// One recorded path.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub v: Vec<f64>,
    pub z: Vec<f64>,
}

/// Tail-window equilibrium estimate of the velocity statistics.
///
/// The window is the final half of the recorded samples restricted to
/// gamma t > 10; it exists only when gamma t_end >= 20. Each path
/// contributes the mean of 20 equal tail-aligned blocks (decorrelating the
/// window), and the quoted standard errors are cross-path.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct EquilibriumEstimate {
    pub mean_v: f64,
    pub mean_v_se: f64,
    /// Tail average of v^2.
    pub v2: f64,
    pub v2_se: f64,
    /// Tail average of (v - v_ref)^2, the variance about the drift.
    pub v2_centered: f64,
    pub v2_centered_se: f64,
    pub v_ref: f64,
    /// Stationary <(v - v_ref)^2> from the quadrature of the spectrum.
    pub analytic_target: f64,
    /// First time inside the averaging window.
    pub window_start: f64,
    /// Recorded points per path inside the window (after block trimming).
    pub points_per_path: usize,
}

/// Cross-path summary of the per-path regime fits.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RegimeSummary {
    pub ballistic_mean: f64,
    pub ballistic_se: f64,
    pub n_ballistic_points: usize,
    pub diffusive_slope_mean: f64,
    pub diffusive_slope_se: f64,
    /// Intercept of the raw (offset-free) per-path z^2 fits.
    pub intercept_mean: f64,
    pub intercept_se: f64,
    pub n_diffusive_points: usize,
}

/// Ensemble statistics on the recorded time grid.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct EnsembleStats {
    pub times: Vec<f64>,
    pub mean_v: Vec<f64>,
    pub stderr_v: Vec<f64>,
    pub mean_v2: Vec<f64>,
    pub stderr_v2: Vec<f64>,
    /// <z^2(t)> including the initial position variance offset, which is
    /// added once here and nowhere else.
    pub mean_z2: Vec<f64>,
    pub stderr_z2: Vec<f64>,
    pub n_paths: usize,
    /// Echo of the particle's initial position variance.
    pub z2_0: f64,
    pub equilibrium: Option<EquilibriumEstimate>,
    pub regimes: Option<RegimeSummary>,
}

impl EnsembleStats {
    /// Write the per-time statistics as CSV, one row per recorded time,
    /// every float with 12 significant digits.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "t,mean_v,se_v,mean_v2,se_v2,mean_z2,se_z2")?;
        for j in 0..self.times.len() {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                sig12(self.times[j]),
                sig12(self.mean_v[j]),
                sig12(self.stderr_v[j]),
                sig12(self.mean_v2[j]),
                sig12(self.stderr_v2[j]),
                sig12(self.mean_z2[j]),
                sig12(self.stderr_z2[j]),
            )?;
        }
        Ok(())
    }
}

/// Stationary <(v - v_ref)^2> implied by the force spectrum,
/// (1/m^2) integral of S(omega) / (gamma^2 + omega^2), by quadrature.
/// This is the reference the simulated tail average is judged against and
/// the variance used for equilibrium starts.
pub fn equilibrium_v2_target(p: &ParticleParams) -> Result<f64, SimError> {
    let derived = derive_constants(p)?;
    let spectrum = p.spectrum();
    let gamma2 = derived.gamma * derived.gamma;
    let m2 = p.mass * p.mass;
    let edges: Vec<f64> = match spectrum {
        SpectralDensity::ChargeOhmic { cutoff, .. } => vec![0.0, cutoff],
        SpectralDensity::MirrorPiecewise { omega_p } => vec![0.0, omega_p, 2.0 * omega_p],
    };
    let mut total = 0.0;
    for pair in edges.windows(2) {
        let r = integrate_1d_auto(
            |w| spectrum.eval(w) / (m2 * (gamma2 + w * w)),
            pair[0],
            pair[1],
        )
        .map_err(SimError::Quad)?;
        total += r.value;
    }
    Ok(total)
}

/// Exact <z^2(t)> of the configured run, on the recorded time grid.
///
/// Late-time position spread is governed by the discrete mode grid the
/// synthesis draws on, whose lowest frequency sits near 1/(4 t_end) by
/// construction, not by the continuum spectrum. The honest reference for
/// `mean_z2` is therefore the integrator's own second moment: every
/// mode's cosine and sine forcings are pushed through the same step
/// kernel the ensemble uses, and since their amplitudes are independent
/// unit normals the noise variance is the sum of squared responses. The
/// initial-condition terms enter in closed form on top.
pub fn predicted_msd(cfg: &SimConfig) -> Result<Vec<f64>, SimError> {
    let geom = prepare(cfg)?;
    let grid = mode_grid(&geom.spectrum, cfg.dt, geom.n_steps)?;
    let n_rec = geom.times.len();

    let record_z = |stepper: &Stepper, v0: f64, force: &dyn Fn(usize) -> f64| -> Vec<f64> {
        let mut v = v0;
        let mut z = 0.0f64;
        let mut out = Vec::with_capacity(n_rec);
        for k in 0..=geom.n_steps {
            if k % cfg.record_stride == 0 {
                out.push(z);
            }
            if k == geom.n_steps {
                break;
            }
            let v_next = stepper.step(v, force(k));
            z += 0.5 * cfg.dt * (v + v_next);
            v = v_next;
        }
        out
    };

    // Fluctuations superpose around v_ref = 0; the affine reference enters
    // once, through the mean path.
    let fluct = Stepper::new(geom.gamma, cfg.dt, cfg.particle.mass, 0.0);
    let mut variance = vec![0.0f64; n_rec];
    for k in 0..grid.count {
        let omega = grid.frequency(k);
        let amp = (geom.spectrum.eval(omega) * grid.spacing).sqrt();
        let phase = |i: usize| omega * (i as f64 + 0.5) * cfg.dt;
        let zc = record_z(&fluct, 0.0, &|i| amp * phase(i).cos());
        let zs = record_z(&fluct, 0.0, &|i| amp * phase(i).sin());
        for j in 0..n_rec {
            variance[j] += zc[j] * zc[j] + zs[j] * zs[j];
        }
    }
    if cfg.equilibrium_start {
        let h = record_z(&fluct, 1.0, &|_| 0.0);
        for j in 0..n_rec {
            variance[j] += geom.v2_target * h[j] * h[j];
        }
    }

    let mean = Stepper::new(geom.gamma, cfg.dt, cfg.particle.mass, geom.v_ref);
    let v0_mean = if cfg.equilibrium_start {
        geom.v_ref
    } else {
        cfg.particle.initial_velocity
    };
    let zbar = record_z(&mean, v0_mean, &|_| 0.0);

    Ok((0..n_rec)
        .map(|j| zbar[j] * zbar[j] + variance[j] + cfg.particle.initial_position_variance)
        .collect())
}

/// Exact-propagator step kernel; see the module docs for the update rule.
struct Stepper {
    v_ref: f64,
    decay: f64,
    kick: f64,
}

impl Stepper {
    fn new(gamma: f64, dt: f64, m: f64, v_ref: f64) -> Self {
        Stepper {
            v_ref,
            decay: (-gamma * dt).exp(),
            kick: dt / m * (-0.5 * gamma * dt).exp(),
        }
    }

    #[inline]
    fn step(&self, v: f64, beta_mid: f64) -> f64 {
        self.v_ref + (v - self.v_ref) * self.decay + self.kick * beta_mid
    }
}

/// Everything shared by all paths of a run, derived once up front.
struct Geometry {
    gamma: f64,
    v_ref: f64,
    n_steps: usize,
    spectrum: SpectralDensity,
    v2_target: f64,
    times: Vec<f64>,
    /// Recorded indices inside the equilibrium window.
    eq_window: Vec<usize>,
    /// Recorded indices with 0 < gamma t <= 0.1 and the fixed sum of t^4.
    ballistic: Vec<usize>,
    ballistic_t4: f64,
    /// Recorded indices with gamma t >= 20 and the fixed time moments.
    diffusive: Vec<usize>,
    diff_st: f64,
    diff_stt: f64,
}

fn validate_step(gamma: f64, dt: f64, spectrum: &SpectralDensity) -> Result<(), SimError> {
    let drag_bound = if gamma > 0.0 { 0.01 / gamma } else { f64::INFINITY };
    let omega_max = spectrum.max_frequency();
    let spectral_bound = if omega_max > 0.0 {
        std::f64::consts::PI / (5.0 * omega_max)
    } else {
        f64::INFINITY
    };
    let max_dt = drag_bound.min(spectral_bound);
    if !(dt > 0.0) || !dt.is_finite() || dt > max_dt * (1.0 + 1e-9) {
        return Err(SimError::StepTooLarge { dt, max_dt });
    }
    Ok(())
}

fn prepare(cfg: &SimConfig) -> Result<Geometry, SimError> {
    cfg.particle.validate()?;
    let derived = derive_constants(&cfg.particle)?;
    let spectrum = cfg.particle.spectrum();
    validate_step(derived.gamma, cfg.dt, &spectrum)?;
    if cfg.record_stride == 0 {
        return Err(SimError::ZeroStride);
    }
    if !(cfg.t_end > 0.0) || !cfg.t_end.is_finite() {
        return Err(SimError::RunTooShort { t_end: cfg.t_end, dt: cfg.dt });
    }
    let n_steps = (cfg.t_end / cfg.dt - 1e-9).ceil() as usize;
    if n_steps < 2 {
        return Err(SimError::RunTooShort { t_end: cfg.t_end, dt: cfg.dt });
    }

    let gamma = derived.gamma;
    let v_ref = match cfg.particle.kind {
        ParticleKind::Charge => 0.0,
        ParticleKind::Mirror => cfg.particle.initial_velocity,
    };
    let v2_target = equilibrium_v2_target(&cfg.particle)?;

    let times: Vec<f64> = (0..=n_steps)
        .filter(|k| k % cfg.record_stride == 0)
        .map(|k| k as f64 * cfg.dt)
        .collect();

    // Equilibrium window: final half of the records, restricted to
    // gamma t > 10; meaningful only for runs with gamma t_end >= 20.
    let t_end = n_steps as f64 * cfg.dt;
    let eq_window: Vec<usize> = if gamma * t_end >= 20.0 * (1.0 - 1e-9) {
        times
            .iter()
            .enumerate()
            .filter(|(_, &t)| t > 0.5 * t_end && gamma * t > 10.0)
            .map(|(j, _)| j)
            .collect()
    } else {
        Vec::new()
    };

    let ballistic: Vec<usize> = times
        .iter()
        .enumerate()
        .filter(|(_, &t)| {
            let x = gamma * t;
            x > 0.0 && x <= 0.1 * (1.0 + 1e-12)
        })
        .map(|(j, _)| j)
        .collect();
    let ballistic_t4: f64 = ballistic.iter().map(|&j| times[j].powi(4)).sum();

    let diffusive: Vec<usize> = times
        .iter()
        .enumerate()
        .filter(|(_, &t)| gamma * t >= 20.0 * (1.0 - 1e-12))
        .map(|(j, _)| j)
        .collect();
    let diff_st: f64 = diffusive.iter().map(|&j| times[j]).sum();
    let diff_stt: f64 = diffusive.iter().map(|&j| times[j] * times[j]).sum();

    Ok(Geometry {
        gamma,
        v_ref,
        n_steps,
        spectrum,
        v2_target,
        times,
        eq_window,
        ballistic,
        ballistic_t4,
        diffusive,
        diff_st,
        diff_stt,
    })
}

/// Integrate a single path over the supplied noise.
///
/// `v0` and `z0` are the starting state; for a mirror the drag still
/// relaxes towards the particle's reference velocity, which is a separate
/// quantity. The caller-supplied start is not re-validated against the
/// non-relativistic bound.
pub fn integrate_trajectory(
    cfg: &SimConfig,
    path: &NoisePath,
    v0: f64,
    z0: f64,
) -> Result<Trajectory, SimError> {
    let geom = prepare(cfg)?;
    if path.dt.to_bits() != cfg.dt.to_bits() {
        return Err(SimError::StepMismatch { path_dt: path.dt, cfg_dt: cfg.dt });
    }
    if path.samples.len() < geom.n_steps {
        return Err(SimError::PathTooShort {
            needed: geom.n_steps,
            got: path.samples.len(),
        });
    }

    let stepper = Stepper::new(geom.gamma, cfg.dt, cfg.particle.mass, geom.v_ref);
    let mut v = v0;
    let mut z = z0;
    let mut vs = Vec::with_capacity(geom.times.len());
    let mut zs = Vec::with_capacity(geom.times.len());
    for k in 0..=geom.n_steps {
        if k % cfg.record_stride == 0 {
            vs.push(v);
            zs.push(z);
        }
        if k == geom.n_steps {
            break;
        }
        let v_next = stepper.step(v, path.samples[k]);
        z += 0.5 * cfg.dt * (v + v_next);
        v = v_next;
    }
    Ok(Trajectory {
        times: geom.times,
        v: vs,
        z: zs,
    })
}

/// Per-batch partial sums, folded in batch order at the end of a run.
struct BatchAccum {
    sum_v: Vec<f64>,
    sum_v2: Vec<f64>,
    sum_v4: Vec<f64>,
    sum_z2: Vec<f64>,
    sum_z4: Vec<f64>,
    /// Per path: tail block-means of (v, v^2, (v - v_ref)^2).
    eq: Vec<[f64; 3]>,
    /// Per path: ballistic coefficient.
    ballistic: Vec<f64>,
    /// Per path: diffusive (slope, intercept).
    diffusive: Vec<[f64; 2]>,
}

impl BatchAccum {
    fn new(n_rec: usize) -> Self {
        BatchAccum {
            sum_v: vec![0.0; n_rec],
            sum_v2: vec![0.0; n_rec],
            sum_v4: vec![0.0; n_rec],
            sum_z2: vec![0.0; n_rec],
            sum_z4: vec![0.0; n_rec],
            eq: Vec::new(),
            ballistic: Vec::new(),
            diffusive: Vec::new(),
        }
    }

    fn merge(&mut self, other: &BatchAccum) {
        for (a, b) in self.sum_v.iter_mut().zip(&other.sum_v) {
            *a += b;
        }
        for (a, b) in self.sum_v2.iter_mut().zip(&other.sum_v2) {
            *a += b;
        }
        for (a, b) in self.sum_v4.iter_mut().zip(&other.sum_v4) {
            *a += b;
        }
        for (a, b) in self.sum_z2.iter_mut().zip(&other.sum_z2) {
            *a += b;
        }
        for (a, b) in self.sum_z4.iter_mut().zip(&other.sum_z4) {
            *a += b;
        }
        self.eq.extend_from_slice(&other.eq);
        self.ballistic.extend_from_slice(&other.ballistic);
        self.diffusive.extend_from_slice(&other.diffusive);
    }
}

/// Mean of `EQ_BLOCKS` equal tail-aligned block means; short windows fall
/// back to blocks of one sample.
fn block_mean(window: &[f64]) -> f64 {
    let w = window.len();
    let blocks = EQ_BLOCKS.min(w);
    let len = w / blocks;
    let skip = w - blocks * len;
    let mut acc = 0.0;
    for b in 0..blocks {
        let start = skip + b * len;
        let mut block = 0.0;
        for &x in &window[start..start + len] {
            block += x;
        }
        acc += block / len as f64;
    }
    acc / blocks as f64
}

fn run_batch(cfg: &SimConfig, geom: &Geometry, batch: usize) -> Result<BatchAccum, SimError> {
    let n_rec = geom.times.len();
    let mut acc = BatchAccum::new(n_rec);
    let start = batch * BATCH_SIZE;
    let end = ((batch + 1) * BATCH_SIZE).min(cfg.n_paths);

    let stepper = Stepper::new(geom.gamma, cfg.dt, cfg.particle.mass, geom.v_ref);
    let mut v_rec = vec![0.0f64; n_rec];
    let mut z_rec = vec![0.0f64; n_rec];
    let mut window = vec![0.0f64; geom.eq_window.len()];

    for path_idx in start..end {
        let noise = synthesize(
            &geom.spectrum,
            cfg.dt,
            geom.n_steps.max(2),
            substream_seed(cfg.master_seed, path_idx as u64, 0),
        )?;
        let mut v = if cfg.equilibrium_start {
            let mut rng =
                ChaCha8Rng::seed_from_u64(substream_seed(cfg.master_seed, path_idx as u64, 1));
            let draw: f64 = StandardNormal.sample(&mut rng);
            geom.v_ref + geom.v2_target.sqrt() * draw
        } else {
            cfg.particle.initial_velocity
        };
        let mut z = 0.0f64;

        let mut rec = 0usize;
        for k in 0..=geom.n_steps {
            if k % cfg.record_stride == 0 {
                v_rec[rec] = v;
                z_rec[rec] = z;
                rec += 1;
            }
            if k == geom.n_steps {
                break;
            }
            let v_next = stepper.step(v, noise.samples[k]);
            z += 0.5 * cfg.dt * (v + v_next);
            v = v_next;
        }
        debug_assert_eq!(rec, n_rec);

        for j in 0..n_rec {
            let vj = v_rec[j];
            let v2 = vj * vj;
            let z2 = z_rec[j] * z_rec[j];
            acc.sum_v[j] += vj;
            acc.sum_v2[j] += v2;
            acc.sum_v4[j] += v2 * v2;
            acc.sum_z2[j] += z2;
            acc.sum_z4[j] += z2 * z2;
        }

        if !geom.eq_window.is_empty() {
            for (w, &j) in window.iter_mut().zip(&geom.eq_window) {
                *w = v_rec[j];
            }
            let mv = block_mean(&window);
            for w in window.iter_mut() {
                *w = *w * *w;
            }
            let mv2 = block_mean(&window);
            for (w, &j) in window.iter_mut().zip(&geom.eq_window) {
                let c = v_rec[j] - geom.v_ref;
                *w = c * c;
            }
            let mv2c = block_mean(&window);
            acc.eq.push([mv, mv2, mv2c]);
        }

        if !geom.ballistic.is_empty() && geom.ballistic_t4 > 0.0 {
            let mut num = 0.0;
            for &j in &geom.ballistic {
                let t = geom.times[j];
                num += t * t * z_rec[j] * z_rec[j];
            }
            acc.ballistic.push(num / geom.ballistic_t4);
        }

        if geom.diffusive.len() >= 3 {
            let m = geom.diffusive.len() as f64;
            let mut sz = 0.0;
            let mut stz = 0.0;
            for &j in &geom.diffusive {
                let z2 = z_rec[j] * z_rec[j];
                sz += z2;
                stz += geom.times[j] * z2;
            }
            let denom = m * geom.diff_stt - geom.diff_st * geom.diff_st;
            let slope = (m * stz - geom.diff_st * sz) / denom;
            let intercept = (sz - slope * geom.diff_st) / m;
            acc.diffusive.push([slope, intercept]);
        }
    }
    Ok(acc)
}

fn mean_and_se(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = values.clone().count() as f64;
    let mean = values.clone().sum::<f64>() / n;
    if n > 1.0 {
        let var = values.map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
        (mean, (var / n).sqrt())
    } else {
        (mean, 0.0)
    }
}

fn finalize(cfg: &SimConfig, geom: &Geometry, batches: Vec<BatchAccum>) -> EnsembleStats {
    let n_rec = geom.times.len();
    let mut total = BatchAccum::new(n_rec);
    for b in &batches {
        total.merge(b);
    }

    let p = cfg.n_paths as f64;
    let z2_0 = cfg.particle.initial_position_variance;
    let mut mean_v = Vec::with_capacity(n_rec);
    let mut stderr_v = Vec::with_capacity(n_rec);
    let mut mean_v2 = Vec::with_capacity(n_rec);
    let mut stderr_v2 = Vec::with_capacity(n_rec);
    let mut mean_z2 = Vec::with_capacity(n_rec);
    let mut stderr_z2 = Vec::with_capacity(n_rec);

    let se = |sum: f64, sum_sq: f64| {
        let var = ((sum_sq - sum * sum / p) / (p - 1.0)).max(0.0);
        (var / p).sqrt()
    };

    for j in 0..n_rec {
        mean_v.push(total.sum_v[j] / p);
        stderr_v.push(se(total.sum_v[j], total.sum_v2[j]));
        mean_v2.push(total.sum_v2[j] / p);
        stderr_v2.push(se(total.sum_v2[j], total.sum_v4[j]));
        mean_z2.push(total.sum_z2[j] / p + z2_0);
        stderr_z2.push(se(total.sum_z2[j], total.sum_z4[j]));
    }

    let equilibrium = if total.eq.len() == cfg.n_paths && !geom.eq_window.is_empty() {
        let (mv, mv_se) = mean_and_se(total.eq.iter().map(|e| e[0]));
        let (v2, v2_se) = mean_and_se(total.eq.iter().map(|e| e[1]));
        let (v2c, v2c_se) = mean_and_se(total.eq.iter().map(|e| e[2]));
        let w = geom.eq_window.len();
        let blocks = EQ_BLOCKS.min(w);
        Some(EquilibriumEstimate {
            mean_v: mv,
            mean_v_se: mv_se,
            v2,
            v2_se,
            v2_centered: v2c,
            v2_centered_se: v2c_se,
            v_ref: geom.v_ref,
            analytic_target: geom.v2_target,
            window_start: geom.times[geom.eq_window[0]],
            points_per_path: (w / blocks) * blocks,
        })
    } else {
        None
    };

    let regimes = if total.ballistic.len() == cfg.n_paths && total.diffusive.len() == cfg.n_paths {
        let (bal, bal_se) = mean_and_se(total.ballistic.iter().copied());
        let (slope, slope_se) = mean_and_se(total.diffusive.iter().map(|d| d[0]));
        let (icpt, icpt_se) = mean_and_se(total.diffusive.iter().map(|d| d[1]));
        Some(RegimeSummary {
            ballistic_mean: bal,
            ballistic_se: bal_se,
            n_ballistic_points: geom.ballistic.len(),
            diffusive_slope_mean: slope,
            diffusive_slope_se: slope_se,
            intercept_mean: icpt,
            intercept_se: icpt_se,
            n_diffusive_points: geom.diffusive.len(),
        })
    } else {
        None
    };

    EnsembleStats {
        times: geom.times.clone(),
        mean_v,
        stderr_v,
        mean_v2,
        stderr_v2,
        mean_z2,
        stderr_z2,
        n_paths: cfg.n_paths,
        z2_0,
        equilibrium,
        regimes,
    }
}

fn check_paths(cfg: &SimConfig) -> Result<(), SimError> {
    if cfg.n_paths < 2 {
        return Err(SimError::TooFewPaths { got: cfg.n_paths });
    }
    Ok(())
}

/// Run the configured ensemble, in parallel batches when the `parallel`
/// feature is enabled. Any per-path error aborts the whole run.
pub fn run_ensemble(cfg: &SimConfig) -> Result<EnsembleStats, SimError> {
    check_paths(cfg)?;
    let geom = prepare(cfg)?;
    let n_batches = cfg.n_paths.div_ceil(BATCH_SIZE);

    #[cfg(feature = "parallel")]
    let batches: Result<Vec<BatchAccum>, SimError> = (0..n_batches)
        .into_par_iter()
        .map(|b| run_batch(cfg, &geom, b))
        .collect();
    #[cfg(not(feature = "parallel"))]
    let batches: Result<Vec<BatchAccum>, SimError> =
        (0..n_batches).map(|b| run_batch(cfg, &geom, b)).collect();

    Ok(finalize(cfg, &geom, batches?))
}

/// Single-threaded reference runner; bit-identical to [`run_ensemble`]
/// by construction, kept callable for benchmarks and determinism checks.
pub fn run_ensemble_sequential(cfg: &SimConfig) -> Result<EnsembleStats, SimError> {
    check_paths(cfg)?;
    let geom = prepare(cfg)?;
    let n_batches = cfg.n_paths.div_ceil(BATCH_SIZE);
    let batches: Result<Vec<BatchAccum>, SimError> =
        (0..n_batches).map(|b| run_batch(cfg, &geom, b)).collect();
    Ok(finalize(cfg, &geom, batches?))
}

/// How a regime fit was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitSource {
    /// Cross-path average of per-path fits (the default when the run
    /// recorded them).
    PerPath,
    /// Least squares on the mean curve, errors from fit residuals.
    MeanCurve,
}

/// Ballistic and diffusive coefficients extracted from <z^2(t)>:
/// A from z^2 = A t^2 on gamma t <= 0.1, (B, c) from z^2 = B t + c on
/// gamma t >= 20. The intercept is quoted for the reported mean_z2 curve,
/// i.e. it includes the initial position variance offset.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct RegimeFit {
    pub ballistic: f64,
    pub ballistic_se: f64,
    pub n_ballistic: usize,
    pub diffusive: f64,
    pub diffusive_se: f64,
    pub intercept: f64,
    pub intercept_se: f64,
    pub n_diffusive: usize,
    pub source: FitSource,
}

/// Fit the two asymptotic regimes of the mean-square displacement.
///
/// Prefers the per-path fit summary recorded by the run; falls back to
/// least squares on the mean curve for externally assembled statistics.
/// Both windows must contain at least 3 recorded points.
pub fn fit_regimes(stats: &EnsembleStats, gamma: f64) -> Result<RegimeFit, SimError> {
    let ballistic_idx: Vec<usize> = stats
        .times
        .iter()
        .enumerate()
        .filter(|(_, &t)| {
            let x = gamma * t;
            x > 0.0 && x <= 0.1 * (1.0 + 1e-12)
        })
        .map(|(j, _)| j)
        .collect();
    let diffusive_idx: Vec<usize> = stats
        .times
        .iter()
        .enumerate()
        .filter(|(_, &t)| gamma * t >= 20.0 * (1.0 - 1e-12))
        .map(|(j, _)| j)
        .collect();

    if ballistic_idx.len() < 3 {
        return Err(SimError::InsufficientRange {
            regime: "ballistic",
            needed: 3,
            got: ballistic_idx.len(),
        });
    }
    if diffusive_idx.len() < 3 {
        return Err(SimError::InsufficientRange {
            regime: "diffusive",
            needed: 3,
            got: diffusive_idx.len(),
        });
    }

    if let Some(r) = &stats.regimes {
        return Ok(RegimeFit {
            ballistic: r.ballistic_mean,
            ballistic_se: r.ballistic_se,
            n_ballistic: r.n_ballistic_points,
            diffusive: r.diffusive_slope_mean,
            diffusive_se: r.diffusive_slope_se,
            intercept: r.intercept_mean + stats.z2_0,
            intercept_se: r.intercept_se,
            n_diffusive: r.n_diffusive_points,
            source: FitSource::PerPath,
        });
    }

    // Ballistic: through-origin fit of mean_z2 - z2_0 against t^2.
    let mut st4 = 0.0;
    let mut st2y = 0.0;
    for &j in &ballistic_idx {
        let t2 = stats.times[j] * stats.times[j];
        st4 += t2 * t2;
        st2y += t2 * (stats.mean_z2[j] - stats.z2_0);
    }
    let a = st2y / st4;
    let mb = ballistic_idx.len() as f64;
    let mut ss_res = 0.0;
    for &j in &ballistic_idx {
        let t2 = stats.times[j] * stats.times[j];
        let r = stats.mean_z2[j] - stats.z2_0 - a * t2;
        ss_res += r * r;
    }
    let a_se = (ss_res / (mb - 1.0) / st4).sqrt();

    // Diffusive: two-parameter least squares of mean_z2 against t.
    let md = diffusive_idx.len() as f64;
    let (mut st, mut stt, mut sy, mut sty) = (0.0, 0.0, 0.0, 0.0);
    for &j in &diffusive_idx {
        let t = stats.times[j];
        let y = stats.mean_z2[j];
        st += t;
        stt += t * t;
        sy += y;
        sty += t * y;
    }
    let denom = md * stt - st * st;
    let b = (md * sty - st * sy) / denom;
    let c = (sy - b * st) / md;
    let t_bar = st / md;
    let s_tt_centered = stt - md * t_bar * t_bar;
    let mut ss_res_d = 0.0;
    for &j in &diffusive_idx {
        let r = stats.mean_z2[j] - (b * stats.times[j] + c);
        ss_res_d += r * r;
    }
    let sigma2 = ss_res_d / (md - 2.0);
    let b_se = (sigma2 / s_tt_centered).sqrt();
    let c_se = (sigma2 * (1.0 / md + t_bar * t_bar / s_tt_centered)).sqrt();

    Ok(RegimeFit {
        ballistic: a,
        ballistic_se: a_se,
        n_ballistic: ballistic_idx.len(),
        diffusive: b,
        diffusive_se: b_se,
        intercept: c,
        intercept_se: c_se,
        n_diffusive: diffusive_idx.len(),
        source: FitSource::MeanCurve,
    })
}
