// Copyright 2026 The coscat Authors
// SPDX-License-Identifier: Apache-2.0

//! Laboratory inputs and every rate derived from them.
//!
//! All frequencies and rates are angular (rad/s or 1/s); lengths in meters,
//! powers in watts. Conversions from Hz happen at the config boundary.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Speed of light in vacuum, m/s (exact).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Lab-level description of the tweezers, particles and cavity.
///
/// Per-particle vectors all have length `N`. Susceptibility and mass density
/// are shared by all particles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicalConfig {
    /// Tweezer powers `P_j` (W).
    pub tweezer_power: Vec<f64>,
    /// Tweezer waists `w_j` (m).
    pub tweezer_waist: Vec<f64>,
    /// Particle radii (m); volumes are `4πr³/3`.
    pub particle_radius: Vec<f64>,
    /// Trap-frequency offsets (rad/s) applied to each particle's nominal
    /// trap frequency by rescaling its tweezer power.
    pub trap_frequency_offset: Vec<f64>,
    pub susceptibility: f64,
    /// kg/m³
    pub mass_density: f64,
    /// Tweezer wavelength (m).
    pub wavelength: f64,
    pub cavity_length: f64,
    pub cavity_waist: f64,
    /// Cavity field decay rate κ (rad/s).
    pub cavity_linewidth: f64,
    /// Laser-cavity detuning Δ = ω_L − ω_c (rad/s).
    pub detuning: f64,
    /// Ground-state population of each mechanical mode before conditioning.
    pub ground_state_population: Vec<f64>,
    pub detector_efficiency: f64,
}

impl PhysicalConfig {
    pub fn num_particles(&self) -> usize {
        self.tweezer_power.len()
    }

    pub fn wavenumber(&self) -> f64 {
        2.0 * PI / self.wavelength
    }

    pub fn particle_volume(&self, j: usize) -> f64 {
        4.0 * PI * self.particle_radius[j].powi(3) / 3.0
    }

    /// Checks every invariant of the configuration.
    pub fn validate(&self) -> Result<()> {
        let n = self.num_particles();
        if n == 0 {
            return Err(Error::Domain("at least one particle is required".into()));
        }
        for (name, v) in [
            ("tweezer_waist", &self.tweezer_waist),
            ("particle_radius", &self.particle_radius),
            ("trap_frequency_offset", &self.trap_frequency_offset),
            ("ground_state_population", &self.ground_state_population),
        ] {
            if v.len() != n {
                return Err(Error::Domain(format!(
                    "{name} has {} entries but tweezer_power has {n}",
                    v.len()
                )));
            }
        }
        let positive = |name: &str, x: f64| {
            if x.is_finite() && x > 0.0 {
                Ok(())
            } else {
                Err(Error::Domain(format!("{name} must be positive and finite, got {x}")))
            }
        };
        for j in 0..n {
            positive("tweezer_power", self.tweezer_power[j])?;
            positive("tweezer_waist", self.tweezer_waist[j])?;
            positive("particle_radius", self.particle_radius[j])?;
            let p0 = self.ground_state_population[j];
            if !(p0 > 0.0 && p0 <= 1.0) {
                return Err(Error::Domain(format!(
                    "ground_state_population must lie in (0, 1], got {p0}"
                )));
            }
            let off = self.trap_frequency_offset[j];
            if !off.is_finite() {
                return Err(Error::Domain("trap_frequency_offset must be finite".into()));
            }
        }
        positive("susceptibility", self.susceptibility)?;
        positive("mass_density", self.mass_density)?;
        positive("wavelength", self.wavelength)?;
        positive("cavity_length", self.cavity_length)?;
        positive("cavity_waist", self.cavity_waist)?;
        positive("cavity_linewidth", self.cavity_linewidth)?;
        if !self.detuning.is_finite() {
            return Err(Error::Domain("detuning must be finite".into()));
        }
        let eta = self.detector_efficiency;
        if !(eta > 0.0 && eta <= 1.0) {
            return Err(Error::Domain(format!(
                "detector_efficiency must lie in (0, 1], got {eta}"
            )));
        }
        for j in 0..n {
            let w = self.nominal_trap_frequency(j) + self.trap_frequency_offset[j];
            if w <= 0.0 {
                return Err(Error::Domain(format!(
                    "trap_frequency_offset[{j}] drives the trap frequency to {w}"
                )));
            }
        }
        Ok(())
    }

    /// Trap frequency of particle `j` at its configured power, before offsets.
    pub fn nominal_trap_frequency(&self, j: usize) -> f64 {
        trap_frequency(
            self.susceptibility,
            self.tweezer_power[j],
            self.tweezer_waist[j],
            self.mass_density,
        )
    }

    /// Tweezer power after applying the trap-frequency offset (`ω ∝ √P`).
    pub fn effective_power(&self, j: usize) -> f64 {
        let off = self.trap_frequency_offset[j];
        if off == 0.0 {
            return self.tweezer_power[j];
        }
        let w0 = self.nominal_trap_frequency(j);
        let ratio = (w0 + off) / w0;
        self.tweezer_power[j] * ratio * ratio
    }

    /// Mean of the nominal trap frequencies. Equals the mean of the actual
    /// trap frequencies whenever the offsets sum to zero.
    pub fn mean_trap_frequency(&self) -> Result<f64> {
        let n = self.num_particles();
        let mut sum = 0.0;
        for j in 0..n {
            sum += derive_trap_frequency(self, j)?;
        }
        Ok(sum / n as f64)
    }

    pub fn with_detuning(&self, detuning: f64) -> Self {
        Self { detuning, ..self.clone() }
    }

    /// Copy tuned to the red (anti-Stokes) sideband, `Δ = −ω̄`.
    pub fn red_sideband(&self) -> Result<Self> {
        Ok(self.with_detuning(-self.mean_trap_frequency()?))
    }

    /// Copy tuned to the blue (Stokes) sideband, `Δ = +ω̄`.
    pub fn blue_sideband(&self) -> Result<Self> {
        Ok(self.with_detuning(self.mean_trap_frequency()?))
    }

    fn check_index(&self, j: usize) -> Result<()> {
        let len = self.num_particles();
        if j >= len {
            Err(Error::IndexOutOfRange { index: j, len })
        } else {
            Ok(())
        }
    }
}

/// `ω = 2√(χP) / (w²√(πcϱ))`.
pub fn trap_frequency(susceptibility: f64, power: f64, waist: f64, density: f64) -> f64 {
    2.0 * (susceptibility * power).sqrt() / (waist * waist * (PI * SPEED_OF_LIGHT * density).sqrt())
}

/// `g = (χ/2w)·√(P k³ V / (π V_c ϱ ω))`. Vanishes with the power.
pub fn coupling_rate(
    susceptibility: f64,
    power: f64,
    waist: f64,
    wavenumber: f64,
    particle_volume: f64,
    mode_volume: f64,
    density: f64,
    trap_frequency: f64,
) -> f64 {
    if power == 0.0 {
        return 0.0;
    }
    susceptibility / (2.0 * waist)
        * (power * wavenumber.powi(3) * particle_volume
            / (PI * mode_volume * density * trap_frequency))
            .sqrt()
}

/// Rayleigh recoil rate `P χ² V k⁵ / (15 π² c ϱ ω w²)`. Vanishes with the power.
pub fn rayleigh_scattering_rate(
    susceptibility: f64,
    power: f64,
    waist: f64,
    wavenumber: f64,
    particle_volume: f64,
    density: f64,
    trap_frequency: f64,
) -> f64 {
    if power == 0.0 {
        return 0.0;
    }
    power * susceptibility.powi(2) * particle_volume * wavenumber.powi(5)
        / (15.0 * PI * PI * SPEED_OF_LIGHT * density * trap_frequency * waist * waist)
}

/// Optical-spring frequency shift of one mechanical mode.
pub fn optical_spring_shift(coupling: f64, trap_frequency: f64, detuning: f64, linewidth: f64) -> f64 {
    let k2 = linewidth * linewidth;
    let plus = detuning + trap_frequency;
    let minus = detuning - trap_frequency;
    coupling * coupling * (plus / (k2 + plus * plus) + minus / (k2 + minus * minus))
}

/// Heating, cooling and net damping of one mode, with its steady occupation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SidebandRates {
    pub heating: f64,
    pub cooling: f64,
    pub net_damping: f64,
    /// `None` when `net_damping ≤ 0`.
    pub steady_occupation: Option<f64>,
}

/// `γ± = γsc + 2g²κ / (κ² + (Δ ∓ ω)²)`, `γ = γ− − γ+`, `n = γ+/γ`.
pub fn sideband_rates(
    scattering_rate: f64,
    coupling: f64,
    trap_frequency: f64,
    detuning: f64,
    linewidth: f64,
) -> SidebandRates {
    let k2 = linewidth * linewidth;
    let lorentz = |x: f64| 2.0 * coupling * coupling * linewidth / (k2 + x * x);
    let heating = scattering_rate + lorentz(detuning - trap_frequency);
    let cooling = scattering_rate + lorentz(detuning + trap_frequency);
    let net_damping = cooling - heating;
    let steady_occupation = (net_damping > 0.0).then(|| heating / net_damping);
    SidebandRates { heating, cooling, net_damping, steady_occupation }
}

/// `t_dec = ln((2n + √2 − 1) / 2n) / γ`.
pub fn verification_time(mean_damping: f64, mean_occupation: f64) -> Result<f64> {
    if !(mean_damping > 0.0) {
        return Err(Error::Degenerate(format!(
            "mean damping {mean_damping} is not positive"
        )));
    }
    if !(mean_occupation > 0.0) {
        return Err(Error::Degenerate(format!(
            "mean occupation {mean_occupation} is not positive"
        )));
    }
    let n2 = 2.0 * mean_occupation;
    Ok(((n2 + SQRT_2 - 1.0) / n2).ln() / mean_damping)
}

pub fn derive_trap_frequency(cfg: &PhysicalConfig, j: usize) -> Result<f64> {
    cfg.check_index(j)?;
    for (name, x) in [
        ("tweezer_power", cfg.tweezer_power[j]),
        ("tweezer_waist", cfg.tweezer_waist[j]),
        ("susceptibility", cfg.susceptibility),
        ("mass_density", cfg.mass_density),
    ] {
        if !(x > 0.0) {
            return Err(Error::Domain(format!("{name} must be positive, got {x}")));
        }
    }
    let w = trap_frequency(
        cfg.susceptibility,
        cfg.effective_power(j),
        cfg.tweezer_waist[j],
        cfg.mass_density,
    );
    if !(w > 0.0) {
        return Err(Error::Domain(format!("trap frequency of particle {j} is {w}")));
    }
    Ok(w)
}

/// Standing-wave Gaussian mode volume `π w² ℓ / 4`.
pub fn derive_mode_volume(cfg: &PhysicalConfig) -> Result<f64> {
    if !(cfg.cavity_length > 0.0) || !(cfg.cavity_waist > 0.0) {
        return Err(Error::Domain(format!(
            "cavity length {} and waist {} must be positive",
            cfg.cavity_length, cfg.cavity_waist
        )));
    }
    Ok(PI * cfg.cavity_waist * cfg.cavity_waist * cfg.cavity_length / 4.0)
}

pub fn derive_coupling(cfg: &PhysicalConfig, j: usize) -> Result<f64> {
    let omega = derive_trap_frequency(cfg, j)?;
    let vc = derive_mode_volume(cfg)?;
    if !(cfg.wavelength > 0.0) || !(cfg.particle_radius[j] > 0.0) {
        return Err(Error::Domain("wavelength and particle radius must be positive".into()));
    }
    Ok(coupling_rate(
        cfg.susceptibility,
        cfg.effective_power(j),
        cfg.tweezer_waist[j],
        cfg.wavenumber(),
        cfg.particle_volume(j),
        vc,
        cfg.mass_density,
        omega,
    ))
}

pub fn derive_scattering_rate(cfg: &PhysicalConfig, j: usize) -> Result<f64> {
    let omega = derive_trap_frequency(cfg, j)?;
    if !(cfg.wavelength > 0.0) || !(cfg.particle_radius[j] > 0.0) {
        return Err(Error::Domain("wavelength and particle radius must be positive".into()));
    }
    Ok(rayleigh_scattering_rate(
        cfg.susceptibility,
        cfg.effective_power(j),
        cfg.tweezer_waist[j],
        cfg.wavenumber(),
        cfg.particle_volume(j),
        cfg.mass_density,
        omega,
    ))
}

pub fn derive_optical_spring(cfg: &PhysicalConfig, j: usize) -> Result<f64> {
    let omega = derive_trap_frequency(cfg, j)?;
    let g = derive_coupling(cfg, j)?;
    Ok(optical_spring_shift(g, omega, cfg.detuning, cfg.cavity_linewidth))
}

/// Sideband rates at the configured detuning; fails when the mode is
/// heating-dominated and has no steady occupation.
pub fn derive_sideband_rates(cfg: &PhysicalConfig, j: usize) -> Result<SidebandRates> {
    let omega = derive_trap_frequency(cfg, j)?;
    let g = derive_coupling(cfg, j)?;
    let gsc = derive_scattering_rate(cfg, j)?;
    let rates = sideband_rates(gsc, g, omega, cfg.detuning, cfg.cavity_linewidth);
    if rates.steady_occupation.is_none() {
        return Err(Error::Degenerate(format!(
            "particle {j}: net damping {} ≤ 0 at detuning {}",
            rates.net_damping, cfg.detuning
        )));
    }
    Ok(rates)
}

/// Verification time on the red sideband, whatever the configured detuning.
pub fn derive_verification_time(cfg: &PhysicalConfig) -> Result<f64> {
    let red = cfg.red_sideband()?;
    let n = cfg.num_particles();
    let mut gamma = 0.0;
    let mut occ = 0.0;
    for j in 0..n {
        let r = derive_sideband_rates(&red, j)?;
        gamma += r.net_damping;
        occ += r.steady_occupation.unwrap_or_default();
    }
    verification_time(gamma / n as f64, occ / n as f64)
}

/// Every model rate for one detuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DerivedParams {
    pub detuning: f64,
    pub cavity_linewidth: f64,
    pub trap_frequency: Vec<f64>,
    pub mean_trap_frequency: f64,
    /// `ω_2 − ω_1`; zero for a single particle.
    pub mechanical_detuning: f64,
    pub coupling: Vec<f64>,
    pub mean_coupling: f64,
    pub mode_volume: f64,
    pub scattering_rate: Vec<f64>,
    pub optical_spring: Vec<f64>,
    pub heating_rate: Vec<f64>,
    pub cooling_rate: Vec<f64>,
    pub net_damping: Vec<f64>,
    pub mean_damping: f64,
    pub steady_occupation: Vec<f64>,
    /// `δω_m + δω_2^opt − δω_1^opt`; zero for a single particle.
    pub effective_detuning: f64,
    /// `pair_detuning[i][j] = ω_i + δω_i^opt − ω_j − δω_j^opt`.
    pub pair_detuning: Vec<Vec<f64>>,
    /// `pair_damping[i][j] = (γ_i + γ_j)/2`.
    pub pair_damping: Vec<Vec<f64>>,
    pub verification_time: f64,
}

impl DerivedParams {
    pub fn derive(cfg: &PhysicalConfig) -> Result<Self> {
        cfg.validate()?;
        let n = cfg.num_particles();
        let mut trap = Vec::with_capacity(n);
        let mut coupling = Vec::with_capacity(n);
        let mut scattering = Vec::with_capacity(n);
        let mut spring = Vec::with_capacity(n);
        let mut heating = Vec::with_capacity(n);
        let mut cooling = Vec::with_capacity(n);
        let mut damping = Vec::with_capacity(n);
        let mut occupation = Vec::with_capacity(n);
        for j in 0..n {
            trap.push(derive_trap_frequency(cfg, j)?);
            coupling.push(derive_coupling(cfg, j)?);
            scattering.push(derive_scattering_rate(cfg, j)?);
            spring.push(derive_optical_spring(cfg, j)?);
            let r = derive_sideband_rates(cfg, j)?;
            heating.push(r.heating);
            cooling.push(r.cooling);
            damping.push(r.net_damping);
            occupation.push(r.steady_occupation.unwrap_or_default());
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let shifted: Vec<f64> = trap.iter().zip(&spring).map(|(w, s)| w + s).collect();
        let pair_detuning = (0..n)
            .map(|i| (0..n).map(|j| shifted[i] - shifted[j]).collect())
            .collect();
        let pair_damping = (0..n)
            .map(|i| (0..n).map(|j| 0.5 * (damping[i] + damping[j])).collect())
            .collect();
        let (mechanical_detuning, effective_detuning) = if n >= 2 {
            (trap[1] - trap[0], shifted[1] - shifted[0])
        } else {
            (0.0, 0.0)
        };
        Ok(Self {
            detuning: cfg.detuning,
            cavity_linewidth: cfg.cavity_linewidth,
            mean_trap_frequency: mean(&trap),
            mechanical_detuning,
            mean_coupling: mean(&coupling),
            mode_volume: derive_mode_volume(cfg)?,
            mean_damping: mean(&damping),
            effective_detuning,
            pair_detuning,
            pair_damping,
            verification_time: derive_verification_time(cfg)?,
            trap_frequency: trap,
            coupling,
            scattering_rate: scattering,
            optical_spring: spring,
            heating_rate: heating,
            cooling_rate: cooling,
            net_damping: damping,
            steady_occupation: occupation,
        })
    }

    pub fn num_particles(&self) -> usize {
        self.trap_frequency.len()
    }

    /// Mode frequency including the optical-spring shift.
    pub fn shifted_frequency(&self, j: usize) -> f64 {
        self.trap_frequency[j] + self.optical_spring[j]
    }

    /// Photon-flux prefactor `2g²/κ` with the mean coupling.
    pub fn flux_prefactor(&self) -> f64 {
        2.0 * self.mean_coupling * self.mean_coupling / self.cavity_linewidth
    }
}
