//! Identity suite behind `qvlab verify`.
//!
//! Each check pins one identity the library must satisfy, measures the
//! worst deviation over a small deterministic parameter sweep and
//! compares it against an explicit bound. Findings are informational
//! rows that quantify a known discrepancy without gating the verdict.

use std::f64::consts::PI;

use qvlab_core::analytic::{
    fdt_susceptibility, msd, v2_charge, v2_fdt, v2_mirror_exact, v2_mirror_exact_variant,
    v2_mirror_small_gamma_limit, MsdCurve,
};
use qvlab_core::langevin::equilibrium_v2_target;
use qvlab_core::noise::{
    empirical_covariance, substream_seed, synthesize, target_covariance, NoisePath,
    SpectralDensity,
};
use qvlab_core::params::ParticleParams;
use qvlab_core::quadrature::{integrate_1d_auto, v2_charge_quad, v2_mirror_quad};

pub struct Check {
    pub name: &'static str,
    pub measured: f64,
    pub bound: f64,
}

impl Check {
    pub fn pass(&self) -> bool {
        self.measured <= self.bound
    }

    /// How badly the bound is exceeded; ranks the worst offender.
    pub fn severity(&self) -> f64 {
        if self.bound > 0.0 {
            self.measured / self.bound
        } else if self.measured > 0.0 {
            f64::INFINITY
        } else {
            0.0
        }
    }
}

pub struct Finding {
    pub name: &'static str,
    pub value: f64,
    pub note: &'static str,
}

pub struct Verdict {
    pub checks: Vec<Check>,
    pub findings: Vec<Finding>,
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

/// Run every check. `perturb_exact` multiplies the exact mirror closed
/// form by (1 + eps) inside its closed-vs-quadrature comparison only, a
/// fault injection proving the suite would catch a broken transcription.
pub fn run_suite(seed: u64, perturb_exact: Option<f64>) -> Result<Verdict, String> {
    let eps = perturb_exact.unwrap_or(0.0);
    let mut checks = Vec::new();

    // Closed form of the charge variance against the quadrature oracle.
    let mut worst = 0.0f64;
    for &(gamma, m, cutoff) in &[(1.0, 1.0, 1.0), (2.0, 3.0, 5.0), (0.5, 2.0, 10.0), (1.0, 1.0, 0.3)] {
        let oracle = v2_charge_quad(gamma, m, cutoff).map_err(err)?;
        worst = worst.max(rel(v2_charge(gamma, m, cutoff), oracle.value));
    }
    checks.push(Check { name: "v2_charge_vs_quadrature", measured: worst, bound: 1e-8 });

    // Exact mirror variance against the spectrum-route quadrature. This
    // is the check --perturb-exact breaks on purpose.
    let mut worst = 0.0f64;
    for &g in &[0.01, 0.3, 1.0, 3.0] {
        let omega_p = PI * g;
        let gamma_m = PI * g * g;
        let oracle = v2_mirror_quad(gamma_m, 1.0, omega_p).map_err(err)?;
        let closed = v2_mirror_exact(g).map_err(err)? * (1.0 + eps);
        worst = worst.max(rel(closed, oracle.spectrum_route.value));
    }
    checks.push(Check { name: "v2_mirror_exact_vs_quadrature", measured: worst, bound: 1e-8 });

    // The two independent quadrature routes for the mirror agree.
    let mut worst = 0.0f64;
    for &g in &[0.3, 1.0] {
        let mq = v2_mirror_quad(PI * g * g, 1.0, PI * g).map_err(err)?;
        worst = worst.max(rel(mq.double_integral.value, mq.spectrum_route.value));
    }
    checks.push(Check { name: "v2_mirror_double_vs_spectrum_route", measured: worst, bound: 1e-8 });

    // Small-ratio asymptote reproduces the exact form at gamma ratio 1e-3.
    let g = 1e-3;
    checks.push(Check {
        name: "v2_mirror_small_ratio_limit",
        measured: rel(v2_mirror_small_gamma_limit(g), v2_mirror_exact(g).map_err(err)?),
        bound: 1e-2,
    });

    // The fluctuation-dissipation route and the spectral route share
    // their arithmetic, so they must agree to the bit everywhere.
    let mut mismatches = 0.0;
    for &gamma in &[1e-3, 0.1, 1.0, 10.0, 1e3] {
        for &m in &[0.5, 1.0, 2.0] {
            for &scale in &[0.1, 1.0, 10.0] {
                let cutoff = scale * gamma;
                if v2_fdt(gamma, m, cutoff).to_bits() != v2_charge(gamma, m, cutoff).to_bits() {
                    mismatches += 1.0;
                }
            }
        }
    }
    checks.push(Check { name: "fdt_identity_bitwise", measured: mismatches, bound: 0.0 });

    // alpha'(0) = 1/m and alpha''(gamma) = 1/(2m).
    let mut worst_static = 0.0f64;
    let mut worst_peak = 0.0f64;
    for &gamma in &[0.1, 1.0, 10.0] {
        for &m in &[0.5, 1.0, 2.0] {
            worst_static = worst_static.max(rel(fdt_susceptibility(0.0, gamma, m).real, 1.0 / m));
            worst_peak = worst_peak.max(rel(fdt_susceptibility(gamma, gamma, m).imag, 0.5 / m));
        }
    }
    checks.push(Check { name: "alpha_static_is_inverse_mass", measured: worst_static, bound: 1e-14 });
    checks.push(Check { name: "alpha_peak_is_half_inverse_mass", measured: worst_peak, bound: 1e-14 });

    // Static Kramers-Kronig closure: (2/pi) int alpha''/omega = alpha'(0),
    // quadrature to 50 gamma plus the closed Lorentzian tail.
    let mut worst = 0.0f64;
    for &(gamma, m) in &[(1.0, 1.0), (0.3, 2.0)] {
        let head = integrate_1d_auto(
            |w| gamma / (m * (gamma * gamma + w * w)),
            0.0,
            50.0 * gamma,
        )
        .map_err(err)?;
        let tail = (PI / 2.0 - 50.0f64.atan()) / m;
        let closure = (2.0 / PI) * (head.value + tail);
        worst = worst.max(rel(closure, fdt_susceptibility(0.0, gamma, m).real));
    }
    checks.push(Check { name: "kramers_kronig_static_closure", measured: worst, bound: 1e-8 });

    // Zero-lag covariance (total spectral mass) against its closed form.
    let mut worst = 0.0f64;
    for &(q, cutoff) in &[(1.0, 0.5), (2.0, 3.0)] {
        let s = SpectralDensity::ChargeOhmic { q, cutoff };
        let mass = target_covariance(&s, 0.0).map_err(err)?.value;
        worst = worst.max(rel(mass, q * q * cutoff * cutoff / (4.0 * PI)));
    }
    checks.push(Check { name: "spectrum_mass_charge", measured: worst, bound: 1e-10 });

    let mut worst = 0.0f64;
    for &omega_p in &[1.0, 2.6] {
        let s = SpectralDensity::MirrorPiecewise { omega_p };
        let mass = target_covariance(&s, 0.0).map_err(err)?.value;
        worst = worst.max(rel(mass, omega_p.powi(4) / (8.0 * PI * PI)));
    }
    checks.push(Check { name: "spectrum_mass_mirror", measured: worst, bound: 1e-10 });

    // The piecewise mirror density is continuous at omega_p and exactly
    // zero at and beyond the upper edge.
    let omega_p = 1.3;
    let s = SpectralDensity::MirrorPiecewise { omega_p };
    let delta = 1e-10 * omega_p;
    let jump = (s.eval(omega_p + delta) - s.eval(omega_p - delta)).abs() / s.eval(omega_p);
    let beyond = if s.eval(2.0 * omega_p) == 0.0 && s.eval(2.0 * omega_p + 1.0) == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    checks.push(Check {
        name: "spectrum_edge_continuity",
        measured: jump.max(beyond),
        bound: 1e-8,
    });

    // The integrator's equilibrium target reproduces both closed forms.
    let charge = ParticleParams::charge(2.0f64.sqrt(), 1.0).with_cutoff(1.0);
    checks.push(Check {
        name: "equilibrium_target_charge",
        measured: rel(
            equilibrium_v2_target(&charge).map_err(err)?,
            v2_charge(1.0, 1.0, 1.0),
        ),
        bound: 1e-8,
    });
    let mirror = ParticleParams::mirror(PI, 1.0);
    checks.push(Check {
        name: "equilibrium_target_mirror",
        measured: rel(
            equilibrium_v2_target(&mirror).map_err(err)?,
            v2_mirror_exact(1.0).map_err(err)?,
        ),
        bound: 1e-8,
    });

    // Synthesized covariance against its quadrature target, 3 sigma over
    // a fixed lag set. The charge ensemble is kept for the normality check.
    let charge_spectrum = SpectralDensity::ChargeOhmic { q: 1.0, cutoff: 0.5 };
    let (worst_z, charge_paths) = covariance_deviation(&charge_spectrum, seed, 0)?;
    checks.push(Check { name: "covariance_match_charge", measured: worst_z, bound: 3.0 });

    let mirror_spectrum = SpectralDensity::MirrorPiecewise { omega_p: 1.0 };
    let (worst_z, _) = covariance_deviation(&mirror_spectrum, seed, 10_000)?;
    checks.push(Check { name: "covariance_match_mirror", measured: worst_z, bound: 3.0 });

    // Marginals of the synthesized force are Gaussian: excess kurtosis
    // across paths at fixed sample indices, in units of its standard error.
    let n = charge_paths[0].samples.len();
    let mut worst = 0.0f64;
    for &j in &[0, n / 2, n - 1] {
        let values: Vec<f64> = charge_paths.iter().map(|p| p.samples[j]).collect();
        worst = worst.max(kurtosis_z(&values));
    }
    checks.push(Check { name: "noise_gaussianity_kurtosis", measured: worst, bound: 5.0 });

    // The closed-form msd curve never loses slope: its derivative
    // 2 (v2/gamma)(1 - e^(-gamma t)) is nondecreasing.
    let curve = MsdCurve { gamma: 1.0, v2_eq: 0.11, z2_0: 0.1 };
    let h = 0.1;
    let diffusive_slope = 2.0 * curve.v2_eq / curve.gamma;
    let mut prev = (msd(h, &curve) - msd(0.0, &curve)) / h;
    let mut worst = 0.0f64;
    for i in 1..3000 {
        let t = i as f64 * h;
        let slope = (msd(t + h, &curve) - msd(t, &curve)) / h;
        worst = worst.max((prev - slope) / diffusive_slope);
        prev = slope;
    }
    checks.push(Check { name: "msd_slope_monotone", measured: worst.max(0.0), bound: 1e-9 });

    // The alternate transcription of the mirror variance exceeds the
    // exact form by exactly (G^4/24) ln(G^4 + 4 G^2).
    let mut worst = 0.0f64;
    for &g in &[0.5, 1.0, 2.0] {
        let exact = v2_mirror_exact(g).map_err(err)?;
        let variant = v2_mirror_exact_variant(g).map_err(err)?;
        let g2 = g * g;
        let predicted = g2 * g2 / 24.0 * (g2 * g2 + 4.0 * g2).ln();
        worst = worst.max(rel(variant - exact, predicted));
    }
    checks.push(Check { name: "variant_difference_identity", measured: worst, bound: 1e-9 });

    // Report how far the alternate form sits from the oracle, so the
    // discrepancy is visible without failing the suite.
    let mut deviation = 0.0f64;
    for &g in &[0.3, 1.0, 3.0] {
        let oracle = v2_mirror_quad(PI * g * g, 1.0, PI * g).map_err(err)?;
        let variant = v2_mirror_exact_variant(g).map_err(err)?;
        deviation = deviation.max(rel(variant, oracle.spectrum_route.value));
    }
    let findings = vec![Finding {
        name: "alternate_mirror_form_deviation",
        value: deviation,
        note: "the alternate transcription overshoots the quadrature; \
               the exact form is the one every route agrees with",
    }];

    Ok(Verdict { checks, findings })
}

/// Worst |z| between empirical and target covariance over a fixed lag
/// set, for 200 paths of 2048 samples at the spectral step bound. The
/// synthesized paths are returned for reuse.
fn covariance_deviation(
    s: &SpectralDensity,
    seed: u64,
    path_offset: u64,
) -> Result<(f64, Vec<NoisePath>), String> {
    let n_paths = 200;
    let n = 2048;
    let dt = PI / (5.0 * s.max_frequency());
    let paths: Vec<NoisePath> = (0..n_paths)
        .map(|k| synthesize(s, dt, n, substream_seed(seed, path_offset + k, 0)))
        .collect::<Result<_, _>>()
        .map_err(err)?;

    let mut worst = 0.0f64;
    for &lag in &[0usize, 1, 2, 3, 5, 8] {
        let (emp, se) = empirical_covariance(&paths, lag).map_err(err)?;
        let target = target_covariance(s, lag as f64 * dt).map_err(err)?.value;
        if se > 0.0 {
            worst = worst.max(((emp - target) / se).abs());
        } else if emp != target {
            worst = f64::INFINITY;
        }
    }
    Ok((worst, paths))
}

/// |excess kurtosis| of a sample in units of its large-sample standard
/// error sqrt(24/n) under the Gaussian hypothesis.
fn kurtosis_z(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let mut m2 = 0.0;
    let mut m4 = 0.0;
    for &x in values {
        let d = x - mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    m2 /= n;
    m4 /= n;
    let excess = m4 / (m2 * m2) - 3.0;
    excess.abs() / (24.0 / n).sqrt()
}
