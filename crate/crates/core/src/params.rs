//! Particle parameters, derived damping constants, and SI-unit estimates.
//!
//! Everything downstream works in natural units (hbar = c = 1), where a
//! mass is a rate. This module owns the only two dimensionful constants in
//! the crate and the conversions through them.

use crate::noise::SpectralDensity;

/// Reduced Planck constant in J s.
pub const HBAR_SI: f64 = 1.054571817e-34;
/// Speed of light in m/s.
pub const C_SI: f64 = 299_792_458.0;

/// Which coupling the particle has to the field.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ParticleKind {
    /// Point charge coupled to the field gradient; drag gamma = q^2 / 2m.
    Charge,
    /// Partially transmitting mirror with plasma frequency omega_p;
    /// drag gamma = omega_p^2 / pi m about the reference velocity.
    Mirror,
}

/// Physical inputs for one particle, in natural units.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ParticleParams {
    pub kind: ParticleKind,
    /// Rest mass (a rate in natural units).
    pub mass: f64,
    /// Charge strength q for [`ParticleKind::Charge`], plasma frequency
    /// omega_p for [`ParticleKind::Mirror`].
    pub coupling: f64,
    /// Spectral cutoff for the charge; `None` selects the self-consistent
    /// default cutoff = gamma. Must stay `None` for the mirror, whose
    /// spectrum ends at 2 omega_p by construction.
    pub cutoff: Option<f64>,
    /// Initial velocity; for the mirror this is also the reference
    /// velocity the drag relaxes towards. Non-relativistic: |v0| <= 0.1.
    pub initial_velocity: f64,
    /// Variance of the initial position around zero.
    pub initial_position_variance: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParamError {
    #[error("mass must be positive and finite, got {mass:e}")]
    InvalidMass { mass: f64 },
    #[error("coupling must be non-negative and finite, got {coupling:e}")]
    InvalidCoupling { coupling: f64 },
    #[error("cutoff must be positive and finite, got {cutoff:e}")]
    InvalidCutoff { cutoff: f64 },
    #[error("a cutoff applies only to the charge; the mirror spectrum ends at 2 omega_p")]
    CutoffNotApplicable,
    #[error("|initial velocity| must be <= 0.1 (non-relativistic), got {v0:e}")]
    VelocityOutOfRange { v0: f64 },
    #[error("initial position variance must be non-negative and finite, got {z2_0:e}")]
    InvalidPositionVariance { z2_0: f64 },
    #[error("distance must be positive and finite, got {distance:e}")]
    InvalidDistance { distance: f64 },
}

impl ParticleParams {
    /// A charge with strength `q` and mass `m`, at rest, with the default
    /// cutoff and zero initial position spread.
    pub fn charge(q: f64, mass: f64) -> Self {
        ParticleParams {
            kind: ParticleKind::Charge,
            mass,
            coupling: q,
            cutoff: None,
            initial_velocity: 0.0,
            initial_position_variance: 0.0,
        }
    }

    /// A mirror with plasma frequency `omega_p` and mass `m`, at rest.
    pub fn mirror(omega_p: f64, mass: f64) -> Self {
        ParticleParams {
            kind: ParticleKind::Mirror,
            mass,
            coupling: omega_p,
            cutoff: None,
            initial_velocity: 0.0,
            initial_position_variance: 0.0,
        }
    }

    pub fn with_cutoff(mut self, cutoff: f64) -> Self {
        self.cutoff = Some(cutoff);
        self
    }

    pub fn with_initial_velocity(mut self, v0: f64) -> Self {
        self.initial_velocity = v0;
        self
    }

    pub fn with_position_variance(mut self, z2_0: f64) -> Self {
        self.initial_position_variance = z2_0;
        self
    }

    /// Validate every invariant. A coupling of exactly zero is accepted as
    /// the degenerate free particle (zero drag, zero noise), which keeps
    /// the gamma -> 0 limits exercisable.
    pub fn validate(&self) -> Result<(), ParamError> {
        if !(self.mass > 0.0) || !self.mass.is_finite() {
            return Err(ParamError::InvalidMass { mass: self.mass });
        }
        if !(self.coupling >= 0.0) || !self.coupling.is_finite() {
            return Err(ParamError::InvalidCoupling { coupling: self.coupling });
        }
        match (self.kind, self.cutoff) {
            (ParticleKind::Mirror, Some(_)) => return Err(ParamError::CutoffNotApplicable),
            (ParticleKind::Charge, Some(c)) if !(c > 0.0) || !c.is_finite() => {
                return Err(ParamError::InvalidCutoff { cutoff: c })
            }
            _ => {}
        }
        if !(self.initial_velocity.abs() <= 0.1) {
            return Err(ParamError::VelocityOutOfRange { v0: self.initial_velocity });
        }
        if !(self.initial_position_variance >= 0.0) || !self.initial_position_variance.is_finite() {
            return Err(ParamError::InvalidPositionVariance {
                z2_0: self.initial_position_variance,
            });
        }
        Ok(())
    }

    /// The force spectral density this particle is driven by.
    pub fn spectrum(&self) -> SpectralDensity {
        match self.kind {
            ParticleKind::Charge => SpectralDensity::ChargeOhmic {
                q: self.coupling,
                cutoff: self.resolved_cutoff(),
            },
            ParticleKind::Mirror => SpectralDensity::MirrorPiecewise { omega_p: self.coupling },
        }
    }

    /// The charge's cutoff with the default applied; zero for the mirror
    /// (whose spectrum needs none).
    pub fn resolved_cutoff(&self) -> f64 {
        match self.kind {
            ParticleKind::Charge => self.cutoff.unwrap_or(self.coupling * self.coupling / (2.0 * self.mass)),
            ParticleKind::Mirror => 0.0,
        }
    }
}

/// Damping constants implied by a particle's parameters.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct DerivedConstants {
    /// Drag rate gamma.
    pub gamma: f64,
    /// Dimensionless ratio gamma / omega_p = omega_p / (pi m); mirrors only.
    pub gamma_ratio: Option<f64>,
    /// 1 / gamma (infinite for the degenerate free particle).
    pub relaxation_time: f64,
    /// The cutoff actually in force; charges only.
    pub cutoff: Option<f64>,
}

/// Compute gamma and friends, validating the parameters first.
pub fn derive_constants(p: &ParticleParams) -> Result<DerivedConstants, ParamError> {
    p.validate()?;
    let (gamma, gamma_ratio, cutoff) = match p.kind {
        ParticleKind::Charge => {
            let gamma = p.coupling * p.coupling / (2.0 * p.mass);
            (gamma, None, Some(p.resolved_cutoff()))
        }
        ParticleKind::Mirror => {
            let gamma = p.coupling * p.coupling / (std::f64::consts::PI * p.mass);
            let ratio = p.coupling / (std::f64::consts::PI * p.mass);
            (gamma, Some(ratio), None)
        }
    };
    Ok(DerivedConstants {
        gamma,
        gamma_ratio,
        relaxation_time: 1.0 / gamma,
        cutoff,
    })
}

/// Convert a mass in kg to the natural-unit rate m c^2 / hbar in 1/s.
pub fn mass_kg_to_natural(mass_kg: f64) -> f64 {
    mass_kg * C_SI * C_SI / HBAR_SI
}

/// Invert [`mass_kg_to_natural`].
pub fn natural_to_mass_kg(rate: f64) -> f64 {
    rate * HBAR_SI / (C_SI * C_SI)
}

/// Time for free quantum position spreading <z^2> ~ (hbar / m) t to cover
/// a distance d: t = d^2 m / hbar. Independent of the coupling, which is
/// what makes it the interesting scale to report.
pub fn universal_diffusion_time(mass_kg: f64, distance_m: f64) -> f64 {
    distance_m * distance_m * mass_kg / HBAR_SI
}

/// SI-unit summary of how (im)measurable a laboratory realization is.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct SiEstimates {
    pub mass_kg: f64,
    pub distance_m: f64,
    /// Drag rate in 1/s.
    pub gamma_per_s: f64,
    /// Dimensionless gamma / omega_p; mirrors only.
    pub gamma_ratio: Option<f64>,
    /// 1 / gamma in seconds.
    pub relaxation_time_s: f64,
    /// Position-spreading time over `distance_m`, in seconds.
    pub diffusion_time_s: f64,
}

/// Evaluate the derived scales for SI inputs: `p.mass` in kg and
/// `p.coupling` in 1/s (omega_p for a mirror, the frequency-equivalent
/// charge strength for a charge), over a target distance in meters.
pub fn estimate_si(p: &ParticleParams, distance_m: f64) -> Result<SiEstimates, ParamError> {
    p.validate()?;
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(ParamError::InvalidDistance { distance: distance_m });
    }
    let mass_natural = mass_kg_to_natural(p.mass);
    let natural = ParticleParams {
        mass: mass_natural,
        ..*p
    };
    let derived = derive_constants(&natural)?;
    Ok(SiEstimates {
        mass_kg: p.mass,
        distance_m,
        gamma_per_s: derived.gamma,
        gamma_ratio: derived.gamma_ratio,
        relaxation_time_s: derived.relaxation_time,
        diffusion_time_s: universal_diffusion_time(p.mass, distance_m),
    })
}
