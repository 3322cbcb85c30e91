//! Acceptance gate: nine numbered end-to-end checks, one test per criterion,
//! each printing a single `criterion N [label]: PASS/FAIL (...)` line (visible
//! with `--nocapture`, and in the failure report otherwise).
//!
//! Two checks fail deliberately and carry their analysis in the assertion
//! message: the late-time diffusive-slope clause of criterion 5 (the vacuum
//! spectra vanish at zero frequency, so the mean-square displacement grows
//! logarithmically instead of linearly) and two of the four scale
//! reproductions of criterion 8 (the quoted round numbers imply a drag rate
//! without the 1/pi that the dissipation kernel carries everywhere else).
//! Loosening those bounds would hide genuine disagreements; the green clauses
//! around them pin down which parts of the chain are sound.

use std::f64::consts::{LN_2, PI};
use std::time::Instant;

use qvlab_core::analytic::{
    v2_charge, v2_fdt, v2_mirror_exact, v2_mirror_exact_variant, v2_mirror_small_gamma_limit,
};
use qvlab_core::langevin::{fit_regimes, predicted_msd, run_ensemble, SimConfig};
use qvlab_core::noise::{
    empirical_covariance, substream_seed, synthesize, target_covariance, NoisePath,
    SpectralDensity,
};
use qvlab_core::params::{estimate_si, ParticleParams};
use qvlab_core::quadrature::v2_mirror_quad;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Statistical gate shared by every ensemble comparison.
const SIGMA: f64 = 3.0;

/// Criterion 1: absolute relative tolerance and wall-clock budget for the
/// reference charge run.
const C1_REL_TOL: f64 = 0.02;
const C1_RUNTIME_S: f64 = 120.0;

/// Criterion 2: closed form vs double quadrature, and its time budget.
const C2_REL_TOL: f64 = 1e-8;
const C2_RUNTIME_S: f64 = 10.0;

/// Criterion 3: small-ratio limit agreement at gamma/omega_p = 1e-3.
const C3_REL_TOL: f64 = 1e-2;

/// Criterion 4: mirror FDT against the logarithmic small-ratio form.
const C4_MIRROR_REL_TOL: f64 = 1e-3;

/// Criterion 6: spectral mass identity for the mirror density.
const C6_MASS_REL_TOL: f64 = 1e-10;

/// Criterion 8: allowed gap, in decades, to the quoted laboratory scales.
const C8_MAX_DECADES: f64 = 1.0;

fn verdict(n: u32, label: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("criterion {n} [{label}]: {tag} ({detail})");
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

/// Plain two-parameter least squares, for slope references on exact curves.
fn ls_slope(ts: &[f64], ys: &[f64]) -> f64 {
    let n = ts.len() as f64;
    let st: f64 = ts.iter().sum();
    let sy: f64 = ys.iter().sum();
    let stt: f64 = ts.iter().map(|t| t * t).sum();
    let sty: f64 = ts.iter().zip(ys).map(|(t, y)| t * y).sum();
    (n * sty - st * sy) / (n * stt - st * st)
}

/// The reference charge: q = sqrt(2), m = 1 gives gamma = q^2/(2m) = 1 to
/// within one ulp, with the cutoff set at the drag rate.
fn reference_charge() -> (ParticleParams, f64) {
    let q = 2.0f64.sqrt();
    (ParticleParams::charge(q, 1.0).with_cutoff(1.0), q * q / 2.0)
}

#[test]
fn criterion_1_charge_equilibrium_matches_closed_form() {
    let (particle, gamma) = reference_charge();
    let cfg =
        SimConfig::new(particle, 0.01, 30.0, 10_000, 20_260_816, 2).with_equilibrium_start(true);
    let started = Instant::now();
    let stats = run_ensemble(&cfg).expect("reference charge ensemble");
    let elapsed = started.elapsed().as_secs_f64();

    let eq = stats.equilibrium.as_ref().expect("equilibrium window");
    let closed = gamma * LN_2 / (2.0 * PI);
    let z = (eq.v2 - closed) / eq.v2_se;
    let rel_err = rel(eq.v2, closed);

    let pass = z.abs() <= SIGMA && rel_err <= C1_REL_TOL && elapsed <= C1_RUNTIME_S;
    verdict(
        1,
        "charge equilibrium",
        pass,
        &format!(
            "<v^2> = {:.6} +/- {:.6} vs gamma ln2/(2 pi m) = {:.6}, z = {z:+.2}, \
             rel = {:.2}%, {elapsed:.1} s over {} paths",
            eq.v2,
            eq.v2_se,
            closed,
            100.0 * rel_err,
            stats.n_paths
        ),
    );
    assert!(
        z.abs() <= SIGMA,
        "tail <v^2> = {} +/- {} is {z:.2} standard errors from {closed}",
        eq.v2,
        eq.v2_se
    );
    assert!(
        rel_err <= C1_REL_TOL,
        "tail <v^2> = {} deviates {:.3}% from {closed}, above {:.0}%",
        eq.v2,
        100.0 * rel_err,
        100.0 * C1_REL_TOL
    );
    assert!(
        elapsed <= C1_RUNTIME_S,
        "reference run took {elapsed:.1} s, budget {C1_RUNTIME_S} s"
    );
}

#[test]
fn criterion_2_mirror_closed_form_matches_double_quadrature() {
    let started = Instant::now();
    let mut max_rel = 0.0f64;
    let mut max_variant_rel = 0.0f64;
    for ratio in [0.01, 0.1, 1.0, 3.0] {
        // m = 1: omega_p = pi * ratio, gamma_m = omega_p^2 / pi.
        let omega_p = PI * ratio;
        let gamma_m = PI * ratio * ratio;
        let closed = v2_mirror_exact(ratio).expect("closed form");
        let quad = v2_mirror_quad(gamma_m, 1.0, omega_p).expect("double quadrature");
        max_rel = max_rel.max(rel(closed, quad.double_integral.value));

        // The other printed transcription of the same expression. Its middle
        // term is inflated by (ratio^4/24) ln(ratio^4 + 4 ratio^2); quoting
        // the deviation here keeps the disagreement visible.
        let variant = v2_mirror_exact_variant(ratio).expect("variant transcription");
        max_variant_rel = max_variant_rel.max(rel(variant, closed));
    }
    let elapsed = started.elapsed().as_secs_f64();

    let pass = max_rel <= C2_REL_TOL && elapsed <= C2_RUNTIME_S;
    verdict(
        2,
        "mirror closed form vs quadrature",
        pass,
        &format!(
            "max rel dev {max_rel:.2e} over ratio in {{0.01, 0.1, 1, 3}}, {elapsed:.2} s; \
             alternate transcription deviates by up to {max_variant_rel:.1}x (reported, not used)"
        ),
    );
    assert!(
        max_rel <= C2_REL_TOL,
        "closed form deviates {max_rel:.3e} from the double integral, above {C2_REL_TOL:.0e}"
    );
    assert!(
        elapsed <= C2_RUNTIME_S,
        "quadrature sweep took {elapsed:.2} s, budget {C2_RUNTIME_S} s"
    );
}

#[test]
fn criterion_3_mirror_small_ratio_limit() {
    let ratio = 1e-3;
    let exact = v2_mirror_exact(ratio).expect("closed form");
    let limit = v2_mirror_small_gamma_limit(ratio);
    let rel_err = rel(exact, limit);

    let pass = rel_err <= C3_REL_TOL;
    verdict(
        3,
        "mirror small-ratio limit",
        pass,
        &format!(
            "exact {exact:.6e} vs (ratio^2/4)(ln4 - 1) = {limit:.6e}, rel {rel_err:.2e} at ratio = {ratio}"
        ),
    );
    assert!(
        pass,
        "small-ratio limit deviates {rel_err:.3e} from the exact form, above {C3_REL_TOL}"
    );
}

#[test]
fn criterion_4_fdt_routes_agree() {
    // The spectral route and the response-function route are the same
    // integral written two ways; the implementation evaluates them through
    // one kernel, so agreement must be bitwise, not approximate.
    let mut rng = ChaCha8Rng::seed_from_u64(0x0fd7);
    let mut mismatches = 0u32;
    for _ in 0..100 {
        let gamma = 10f64.powf(rng.random_range(-3.0..3.0));
        let mass = 10f64.powf(rng.random_range(-1.0..1.0));
        let cutoff = gamma * 10f64.powf(rng.random_range(-1.0..1.0));
        if v2_fdt(gamma, mass, cutoff).to_bits() != v2_charge(gamma, mass, cutoff).to_bits() {
            mismatches += 1;
        }
    }

    // Mirror FDT deep in the small-ratio regime: the Lorentzian response cut
    // at omega_p reduces to (gamma_m / pi m) ln(1/ratio).
    let ratio = 1e-4;
    let mass = 1.0;
    let omega_p = PI * mass * ratio;
    let gamma_m = omega_p * omega_p / (PI * mass);
    let via_fdt = v2_fdt(gamma_m, mass, omega_p);
    let log_form = gamma_m / (PI * mass) * (1.0 / ratio).ln();
    let mirror_rel = rel(via_fdt, log_form);

    let pass = mismatches == 0 && mirror_rel <= C4_MIRROR_REL_TOL;
    verdict(
        4,
        "fdt identities",
        pass,
        &format!(
            "{mismatches}/100 bitwise mismatches across random (gamma, m, cutoff); \
             mirror log form rel dev {mirror_rel:.2e} at ratio = {ratio}"
        ),
    );
    assert_eq!(
        mismatches, 0,
        "the two FDT routes disagree at {mismatches} of 100 random points"
    );
    assert!(
        mirror_rel <= C4_MIRROR_REL_TOL,
        "mirror FDT {via_fdt:.6e} deviates {mirror_rel:.3e} from the log form {log_form:.6e}"
    );
}

#[test]
fn criterion_5_msd_regimes() {
    let (particle, gamma) = reference_charge();
    let cfg = SimConfig::new(particle.clone(), 0.01, 30.0, 256, 51, 1).with_equilibrium_start(true);
    let stats = run_ensemble(&cfg).expect("msd ensemble");
    let fit = fit_regimes(&stats, gamma).expect("regime fit");
    let v2_0 = v2_charge(gamma, 1.0, 1.0);

    // Ballistic window, gamma t <= 0.1. The drag already bleeds a few
    // percent out of <z^2>/t^2 across the window (the equilibrium start
    // draws v(0) independent of the noise, so <v^2(t)> relaxes from below),
    // which is why the ensemble is sized so that 3 sigma covers it.
    let z_ballistic = (fit.ballistic - v2_0) / fit.ballistic_se;

    // Initial position variance must shift every recorded <z^2> by exactly
    // the configured constant. 0.3125 is dyadic, so the shift is exactly
    // representable and the comparison can be bitwise.
    let offset = 0.3125;
    let base_cfg =
        SimConfig::new(particle.clone(), 0.01, 8.0, 64, 77, 4).with_equilibrium_start(true);
    let offset_cfg = SimConfig::new(
        particle.clone().with_position_variance(offset),
        0.01,
        8.0,
        64,
        77,
        4,
    )
    .with_equilibrium_start(true);
    let base = run_ensemble(&base_cfg).expect("offset baseline");
    let shifted = run_ensemble(&offset_cfg).expect("offset run");
    let offset_exact = base
        .mean_z2
        .iter()
        .zip(&shifted.mean_z2)
        .all(|(a, b)| b.to_bits() == (a + offset).to_bits());

    // The ensemble must track the exact second moment of its own noise
    // representation at every recorded time.
    let pred = predicted_msd(&cfg).expect("mode-sum reference");
    let mut max_pred_z = 0.0f64;
    let mut pred_ok = true;
    for i in (0..stats.times.len()).step_by(50) {
        let diff = (stats.mean_z2[i] - pred[i]).abs();
        if diff > SIGMA * stats.stderr_z2[i] && diff > 0.0 {
            pred_ok = false;
        }
        if stats.stderr_z2[i] > 0.0 {
            max_pred_z = max_pred_z.max(diff / stats.stderr_z2[i]);
        }
    }

    // Late-time window, gamma t >= 20: the white-noise diffusion law.
    let slope_white = 2.0 * v2_0 / gamma;
    let z_diffusive = (fit.diffusive - slope_white) / fit.diffusive_se;

    // What the spectrum itself predicts for the same window, fit the same
    // way on the exact curve.
    let late: Vec<usize> = (0..stats.times.len())
        .filter(|&i| gamma * stats.times[i] >= 20.0)
        .collect();
    let late_t: Vec<f64> = late.iter().map(|&i| stats.times[i]).collect();
    let late_pred: Vec<f64> = late.iter().map(|&i| pred[i]).collect();
    let slope_pred = ls_slope(&late_t, &late_pred);

    let pass = z_ballistic.abs() <= SIGMA
        && offset_exact
        && pred_ok
        && z_diffusive.abs() <= SIGMA;
    verdict(
        5,
        "msd regimes",
        pass,
        &format!(
            "ballistic {:.4} +/- {:.4} vs <v^2(0)> = {v2_0:.4} (z = {z_ballistic:+.2}); \
             z2_0 offset bitwise: {offset_exact}; mode-sum match max |z| = {max_pred_z:.2}; \
             diffusive {:.4} +/- {:.4} vs 2<v^2>/gamma = {slope_white:.4} (z = {z_diffusive:+.2}, \
             spectrum's own window slope {slope_pred:.4})",
            fit.ballistic, fit.ballistic_se, fit.diffusive, fit.diffusive_se
        ),
    );
    assert!(
        z_ballistic.abs() <= SIGMA,
        "ballistic coefficient {} +/- {} misses <v^2(0)> = {v2_0} by {z_ballistic:.2} sigma",
        fit.ballistic,
        fit.ballistic_se
    );
    assert!(offset_exact, "z2_0 offset is not bitwise-exact pathwise");
    assert!(
        pred_ok,
        "ensemble <z^2> departs from its own mode-sum second moment, max |z| = {max_pred_z:.2}"
    );
    assert!(
        z_diffusive.abs() <= SIGMA,
        "late-time slope {} +/- {} vs white-noise 2<v^2>/gamma = {slope_white}: z = {z_diffusive:+.1}.\n\
         This clause states the classical diffusion law, which needs a finite noise density at\n\
         omega = 0. The vacuum density here is S(omega) = (q^2/2 pi) omega: it vanishes at the\n\
         origin, the velocity spectrum S/(m^2(gamma^2 + omega^2)) has no white plateau, and\n\
         <z^2(t)> grows like (q^2/pi m^2 gamma^2) ln t instead of linearly. d<z^2>/dt ~ 2/(pi t)\n\
         is ~0.025 across the fit window (gamma t in [20, 30]), an order below {slope_white:.3}.\n\
         The ensemble is faithful to its spectrum: the measured slope agrees with the exact\n\
         mode-sum curve's window slope {slope_pred:.4} within errors, and the pointwise mode-sum\n\
         check above is green. The gap is physics, not sampling: no run length or path count\n\
         closes it, because the log-growth derivative keeps falling while the white-noise value\n\
         stays fixed. A linear regime would require a spectrum with S(0) > 0.",
        fit.diffusive,
        fit.diffusive_se
    );
}

#[test]
fn criterion_6_synthesized_covariance_tracks_target() {
    let q = 2.0f64.sqrt();
    let cases = [
        (
            "charge",
            SpectralDensity::ChargeOhmic { q, cutoff: 1.0 },
            0xC6_0001u64,
        ),
        (
            "mirror",
            SpectralDensity::MirrorPiecewise { omega_p: 1.0 },
            0xC6_0002u64,
        ),
    ];

    let n = 2048;
    let n_paths = 200;
    let mut worst_z = 0.0f64;
    let mut violations: Vec<String> = Vec::new();
    for (name, spectrum, master) in cases {
        let dt = PI / (5.0 * spectrum.max_frequency());
        let paths: Vec<NoisePath> = (0..n_paths)
            .map(|k| {
                synthesize(&spectrum, dt, n, substream_seed(master, k, 0)).expect("synthesis")
            })
            .collect();

        // Every recorded lag out to tau = 10 / omega_max.
        let lag_max = (10.0 / (spectrum.max_frequency() * dt)).floor() as usize;
        for lag in 0..=lag_max {
            let (emp, se) = empirical_covariance(&paths, lag).expect("empirical covariance");
            let target = target_covariance(&spectrum, lag as f64 * dt).expect("target covariance");
            let diff = (emp - target.value).abs();
            let bound = SIGMA * se + target.abs_error_estimate;
            if diff > bound {
                violations.push(format!(
                    "{name} lag {lag}: |{emp:.4e} - {:.4e}| = {diff:.2e} > {bound:.2e}",
                    target.value
                ));
            }
            if se > 0.0 {
                worst_z = worst_z.max(diff / se);
            }
        }
    }

    // The mirror density integrates to omega_p^4 / 4 (omega_p = 1 here);
    // its zero-lag covariance is that mass over 2 pi^2.
    let mirror = SpectralDensity::MirrorPiecewise { omega_p: 1.0 };
    let c0 = target_covariance(&mirror, 0.0).expect("zero-lag covariance");
    let mass_rel = rel(2.0 * PI * PI * c0.value, 0.25);

    let pass = violations.is_empty() && mass_rel <= C6_MASS_REL_TOL;
    verdict(
        6,
        "noise covariance",
        pass,
        &format!(
            "{n_paths} paths x {n} samples, lags 0..=15 on both spectra, worst |z| = {worst_z:.2}; \
             spectral mass rel dev {mass_rel:.1e}"
        ),
    );
    assert!(
        violations.is_empty(),
        "covariance outside 3 se + quadrature error at:\n{}",
        violations.join("\n")
    );
    assert!(
        mass_rel <= C6_MASS_REL_TOL,
        "mirror spectral mass deviates {mass_rel:.3e} from omega_p^4/4"
    );
}

#[test]
fn criterion_7_drift_reference_is_held() {
    // Mirror: the drag references the frame moving at v0, so the ensemble
    // mean velocity must hold v0 while fluctuations equilibrate around it.
    let v0 = 0.05;
    let mirror = ParticleParams::mirror(0.5, 1.0).with_initial_velocity(v0);
    let gamma_m = 0.25 / PI;
    let cfg_m = SimConfig::new(mirror, 0.01 / gamma_m, 25.0 / gamma_m, 1024, 0x7a, 5);
    let stats_m = run_ensemble(&cfg_m).expect("mirror drift ensemble");
    let eq_m = stats_m.equilibrium.as_ref().expect("mirror window");
    let z_mirror = (eq_m.mean_v - v0) / eq_m.mean_v_se;

    // Charge: an initial boost decays; the mean velocity returns to zero.
    let (charged, _) = reference_charge();
    let cfg_c = SimConfig::new(
        charged.with_initial_velocity(v0),
        0.01,
        25.0,
        1024,
        0x7b,
        5,
    );
    let stats_c = run_ensemble(&cfg_c).expect("charge decay ensemble");
    let eq_c = stats_c.equilibrium.as_ref().expect("charge window");
    let z_charge = eq_c.mean_v / eq_c.mean_v_se;

    let pass = z_mirror.abs() <= SIGMA && z_charge.abs() <= SIGMA;
    verdict(
        7,
        "drift reference",
        pass,
        &format!(
            "mirror <v> = {:.5} +/- {:.5} vs v0 = {v0} (z = {z_mirror:+.2}); \
             boosted charge <v> = {:.5} +/- {:.5} vs 0 (z = {z_charge:+.2})",
            eq_m.mean_v, eq_m.mean_v_se, eq_c.mean_v, eq_c.mean_v_se
        ),
    );
    assert!(
        z_mirror.abs() <= SIGMA,
        "mirror mean velocity {} +/- {} drifted off v0 = {v0} by {z_mirror:.2} sigma",
        eq_m.mean_v,
        eq_m.mean_v_se
    );
    assert!(
        z_charge.abs() <= SIGMA,
        "boosted charge mean velocity {} +/- {} failed to decay to 0 ({z_charge:.2} sigma)",
        eq_c.mean_v,
        eq_c.mean_v_se
    );
}

#[test]
fn criterion_8_si_scale_reproduction() {
    let distance = 1e-2;
    let heavy = estimate_si(&ParticleParams::mirror(1e16, 1e-3), distance).expect("1 g mirror");
    let light = estimate_si(&ParticleParams::mirror(1e16, 1e-5), distance).expect("10 mg mirror");
    let dust = estimate_si(&ParticleParams::mirror(1e16, 1e-24), distance).expect("dust mirror");

    let ratio = heavy.gamma_ratio.expect("mirror ratio");
    let dec_ratio = (ratio / 1e-31).log10().abs();
    let dec_relax = (light.relaxation_time_s / 1e13).log10().abs();
    let dec_heavy_diff = (heavy.diffusion_time_s / 1e27).log10().abs();
    let dec_dust_diff = (dust.diffusion_time_s / 1e6).log10().abs();

    let pass = dec_ratio <= C8_MAX_DECADES
        && dec_relax <= C8_MAX_DECADES
        && dec_heavy_diff <= C8_MAX_DECADES
        && dec_dust_diff <= C8_MAX_DECADES;
    verdict(
        8,
        "si scale estimates",
        pass,
        &format!(
            "gamma/omega_p = {ratio:.2e} vs 1e-31 ({dec_ratio:.2} decades); \
             1/gamma = {:.2e} s vs 1e13 s ({dec_relax:.2} decades); \
             spreading times {:.2e} s vs 1e27 s ({dec_heavy_diff:.2} decades) and \
             {:.2e} s vs 1e6 s ({dec_dust_diff:.2} decades)",
            light.relaxation_time_s, heavy.diffusion_time_s, dust.diffusion_time_s
        ),
    );
    assert!(
        dec_heavy_diff <= C8_MAX_DECADES,
        "1 g spreading time {:.3e} s is {dec_heavy_diff:.2} decades from 1e27 s",
        heavy.diffusion_time_s
    );
    assert!(
        dec_dust_diff <= C8_MAX_DECADES,
        "1e-24 kg spreading time {:.3e} s is {dec_dust_diff:.2} decades from 1e6 s",
        dust.diffusion_time_s
    );
    assert!(
        dec_ratio <= C8_MAX_DECADES,
        "gamma/omega_p = {ratio:.4e} for (omega_p = 1e16 /s, m = 1e-3 kg) sits {dec_ratio:.2} decades\n\
         below the quoted 1e-31. The rate here is gamma = hbar omega_p^2/(pi m c^2); the quoted\n\
         round number is reproduced to one decade only if the 1/pi is dropped (that leaves 0.93\n\
         decades). The same factor appears in the relaxation-time clause below, and only there:\n\
         both quoted scales are pure gamma expressions, while the gamma-independent spreading\n\
         times above land within 0.03 decades. The 1/pi is kept because every closed form and\n\
         both quadrature routes in this workspace depend on it and agree to 1e-8."
    );
    assert!(
        dec_relax <= C8_MAX_DECADES,
        "1/gamma = {:.4e} s for (omega_p = 1e16 /s, m = 1e-5 kg) sits {dec_relax:.2} decades above\n\
         the quoted 1e13 s, the same convention gap as the ratio clause: dropping the 1/pi in\n\
         gamma leaves 0.93 decades. Kept as is; see the ratio assertion for the full analysis.",
        light.relaxation_time_s
    );
}

#[test]
fn criterion_9_universal_fluctuation_identity() {
    // Five randomized particles, alternating kinds, each checked against the
    // quadrature of its own spectrum: tail <(v - v_ref)^2> must equal
    // (1/m^2) integral S(omega)/(gamma^2 + omega^2) d omega.
    let mut rng = ChaCha8Rng::seed_from_u64(0x95EED5);
    let mut failures: Vec<String> = Vec::new();
    let mut zs: Vec<f64> = Vec::new();
    for i in 0..5u64 {
        let (particle, gamma) = if i % 2 == 0 {
            let mass = 10f64.powf(rng.random_range(-0.3..0.3));
            let gamma = 10f64.powf(rng.random_range(-0.5..0.5));
            let q = (2.0 * mass * gamma).sqrt();
            let cutoff = gamma * 10f64.powf(rng.random_range(-0.5..0.5));
            (ParticleParams::charge(q, mass).with_cutoff(cutoff), gamma)
        } else {
            let mass = 10f64.powf(rng.random_range(-0.3..0.3));
            let ratio = rng.random_range(0.05..0.8);
            let omega_p = PI * mass * ratio;
            (
                ParticleParams::mirror(omega_p, mass),
                omega_p * omega_p / (PI * mass),
            )
        };
        let omega_max = particle.spectrum().max_frequency();
        let dt = (0.01 / gamma).min(0.999 * PI / (5.0 * omega_max));
        let t_end = 25.0 / gamma;
        let n_steps = (t_end / dt).ceil() as usize;
        let stride = (n_steps / 500).max(1);
        let cfg = SimConfig::new(particle, dt, t_end, 768, 0x900 + i, stride)
            .with_equilibrium_start(true);
        let stats = run_ensemble(&cfg).expect("randomized ensemble");
        let eq = stats.equilibrium.as_ref().expect("equilibrium window");
        let z = (eq.v2_centered - eq.analytic_target) / eq.v2_centered_se;
        zs.push(z);
        if z.abs() > SIGMA {
            failures.push(format!(
                "set {i} ({:?}): <(v - v_ref)^2> = {:.5e} +/- {:.2e} vs quadrature {:.5e} (z = {z:+.2})",
                cfg.particle.kind, eq.v2_centered, eq.v2_centered_se, eq.analytic_target
            ));
        }
    }

    let detail: Vec<String> = zs.iter().map(|z| format!("{z:+.2}")).collect();
    verdict(
        9,
        "universal fluctuation identity",
        failures.is_empty(),
        &format!("z over 5 randomized spectra: [{}]", detail.join(", ")),
    );
    assert!(
        failures.is_empty(),
        "equilibrium variance off its spectrum's quadrature:\n{}",
        failures.join("\n")
    );
}
