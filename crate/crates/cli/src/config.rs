// Copyright 2026 The coscat Authors
// SPDX-License-Identifier: Apache-2.0

//! JSON run configuration.
//!
//! Rates and detunings are given in rad/s, or in Hz with a `_hz` suffix.
//! Per-particle keys take either one number for every particle or a list.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use coscat::fock::SpaceLayout;
use coscat::params::{DerivedParams, PhysicalConfig};
use coscat::protocol::{Engine, ProtocolSettings};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PerParticle {
    One(f64),
    Many(Vec<f64>),
}

impl PerParticle {
    fn expand(&self, key: &str, n: usize) -> Result<Vec<f64>, CliError> {
        match self {
            PerParticle::One(x) => Ok(vec![*x; n]),
            PerParticle::Many(v) if v.len() == n => Ok(v.clone()),
            PerParticle::Many(v) => Err(CliError::Config(format!(
                "`physical.{key}` has {} entries but num_particles is {n}",
                v.len()
            ))),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawPhysical {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub num_particles: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tweezer_power: Option<PerParticle>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tweezer_waist: Option<PerParticle>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub particle_radius: Option<PerParticle>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trap_frequency_offset: Option<PerParticle>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trap_frequency_offset_hz: Option<PerParticle>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mechanical_detuning: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mechanical_detuning_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub susceptibility: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mass_density: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wavelength: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cavity_length: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cavity_waist: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cavity_linewidth: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cavity_linewidth_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detuning: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detuning_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ground_state_population: Option<PerParticle>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detector_efficiency: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawLayout {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cavity_cutoff: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mechanical_cutoffs: Option<Cutoffs>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cutoffs {
    One(usize),
    Many(Vec<usize>),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawProtocol {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub engine: Option<Engine>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub horizon_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t0_over_kappa: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub grid_points: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rtol: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub atol: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawOutput {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub directory: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub format: Option<OutputFormat>,
}

/// The document as written.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawConfig {
    pub physical: RawPhysical,
    #[serde(default)]
    pub layout: RawLayout,
    #[serde(default)]
    pub protocol: RawProtocol,
    #[serde(default)]
    pub output: RawOutput,
}

/// A fully resolved run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub physical: PhysicalConfig,
    /// Whether the detuning was given; the read-out otherwise sits on the red
    /// sideband.
    pub explicit_detuning: bool,
    pub layout: SpaceLayout,
    pub engine: Engine,
    pub horizon: f64,
    pub t0_over_kappa: f64,
    pub grid_points: Option<usize>,
    pub rtol: f64,
    pub atol: f64,
    pub output_dir: PathBuf,
    pub format: OutputFormat,
}

pub const DEFAULT_OUTPUT_DIR: &str = "coscat-out";

fn required<T: Clone>(v: &Option<T>, key: &str) -> Result<T, CliError> {
    v.clone().ok_or_else(|| CliError::Config(format!("missing required key `{key}`")))
}

/// Accepts `key` in rad/s or `key_hz` in Hz, not both.
fn angular(rad: Option<f64>, hz: Option<f64>, key: &str) -> Result<Option<f64>, CliError> {
    match (rad, hz) {
        (Some(_), Some(_)) => Err(CliError::Config(format!(
            "`physical.{key}` and `physical.{key}_hz` are mutually exclusive"
        ))),
        (Some(x), None) => Ok(Some(x)),
        (None, Some(f)) => Ok(Some(2.0 * PI * f)),
        (None, None) => Ok(None),
    }
}

fn finite(x: f64, key: &str) -> Result<f64, CliError> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(CliError::Config(format!("`{key}` must be a finite number")))
    }
}

impl RawConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("invalid config: {e}")))
    }

    pub fn resolve(&self) -> Result<RunConfig, CliError> {
        let p = &self.physical;
        let n = required(&p.num_particles, "physical.num_particles")?;
        if n == 0 {
            return Err(CliError::Config("`physical.num_particles` must be at least 1".into()));
        }
        let per = |v: &Option<PerParticle>, key: &str| -> Result<Vec<f64>, CliError> {
            required(v, &format!("physical.{key}"))?.expand(key, n)
        };
        let linewidth = angular(p.cavity_linewidth, p.cavity_linewidth_hz, "cavity_linewidth")?
            .ok_or_else(|| CliError::Config("missing required key `physical.cavity_linewidth`".into()))?;
        let offsets = match (&p.trap_frequency_offset, &p.trap_frequency_offset_hz) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "`physical.trap_frequency_offset` and `physical.trap_frequency_offset_hz` are mutually exclusive".into(),
                ))
            }
            (Some(v), None) => Some(v.expand("trap_frequency_offset", n)?),
            (None, Some(v)) => Some(
                v.expand("trap_frequency_offset_hz", n)?
                    .into_iter()
                    .map(|f| 2.0 * PI * f)
                    .collect(),
            ),
            (None, None) => None,
        };
        let split = angular(p.mechanical_detuning, p.mechanical_detuning_hz, "mechanical_detuning")?;
        let offsets = match (offsets, split) {
            (Some(_), Some(_)) => {
                return Err(CliError::Config(
                    "give either `physical.trap_frequency_offset` or `physical.mechanical_detuning`".into(),
                ))
            }
            (Some(v), None) => v,
            (None, Some(d)) if n == 2 => vec![-0.5 * finite(d, "physical.mechanical_detuning")?, 0.5 * d],
            (None, Some(_)) => {
                return Err(CliError::Config(
                    "`physical.mechanical_detuning` needs exactly two particles; use trap_frequency_offset".into(),
                ))
            }
            (None, None) => vec![0.0; n],
        };
        let detuning = angular(p.detuning, p.detuning_hz, "detuning")?;

        let mut physical = PhysicalConfig {
            tweezer_power: per(&p.tweezer_power, "tweezer_power")?,
            tweezer_waist: per(&p.tweezer_waist, "tweezer_waist")?,
            particle_radius: per(&p.particle_radius, "particle_radius")?,
            trap_frequency_offset: offsets,
            susceptibility: required(&p.susceptibility, "physical.susceptibility")?,
            mass_density: required(&p.mass_density, "physical.mass_density")?,
            wavelength: required(&p.wavelength, "physical.wavelength")?,
            cavity_length: required(&p.cavity_length, "physical.cavity_length")?,
            cavity_waist: required(&p.cavity_waist, "physical.cavity_waist")?,
            cavity_linewidth: linewidth,
            detuning: 0.0,
            ground_state_population: per(&p.ground_state_population, "ground_state_population")?,
            detector_efficiency: p.detector_efficiency.unwrap_or(1.0),
        };
        physical.validate().map_err(|e| CliError::Config(e.to_string()))?;
        physical = match detuning {
            Some(d) => physical.with_detuning(finite(d, "physical.detuning")?),
            None => physical.red_sideband().map_err(|e| CliError::Config(e.to_string()))?,
        };

        let l = &self.layout;
        let mech = match l.mechanical_cutoffs.clone().unwrap_or(Cutoffs::One(2)) {
            Cutoffs::One(c) => vec![c; n],
            Cutoffs::Many(v) if v.len() == n => v,
            Cutoffs::Many(v) => {
                return Err(CliError::Config(format!(
                    "`layout.mechanical_cutoffs` has {} entries but num_particles is {n}",
                    v.len()
                )))
            }
        };
        let layout = SpaceLayout::new(l.cavity_cutoff.unwrap_or(1), mech).map_err(|e| CliError::Config(e.to_string()))?;

        let pr = &self.protocol;
        let horizon = finite(pr.horizon_s.unwrap_or(1e-3), "protocol.horizon_s")?;
        if horizon < 0.0 {
            return Err(CliError::Config("`protocol.horizon_s` must be ≥ 0".into()));
        }
        let t0_over_kappa = finite(pr.t0_over_kappa.unwrap_or(20.0), "protocol.t0_over_kappa")?;
        if t0_over_kappa <= 0.0 {
            return Err(CliError::Config("`protocol.t0_over_kappa` must be positive".into()));
        }
        if pr.grid_points.is_some_and(|g| g < 2) {
            return Err(CliError::Config("`protocol.grid_points` must be at least 2".into()));
        }
        let defaults = ProtocolSettings::default();
        let rtol = pr.rtol.unwrap_or(defaults.rtol);
        let atol = pr.atol.unwrap_or(defaults.atol);
        if !(rtol > 0.0 && atol > 0.0) {
            return Err(CliError::Config("integrator tolerances must be positive".into()));
        }

        let run = RunConfig {
            physical,
            explicit_detuning: detuning.is_some(),
            layout,
            engine: pr.engine.unwrap_or(Engine::Both),
            horizon,
            t0_over_kappa,
            grid_points: pr.grid_points,
            rtol,
            atol,
            output_dir: self.output.directory.clone().unwrap_or_else(|| DEFAULT_OUTPUT_DIR.into()),
            format: self.output.format.unwrap_or(OutputFormat::Csv),
        };
        // rate degeneracies (no net cooling on the read-out) are config errors
        run.readout_params()?;
        Ok(run)
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        RawConfig::from_json(&text)?.resolve()
    }

    /// Rates at the configured detuning.
    pub fn derived(&self) -> Result<DerivedParams, CliError> {
        DerivedParams::derive(&self.physical).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Rates on the red sideband, where the flux is read out.
    pub fn readout_params(&self) -> Result<DerivedParams, CliError> {
        let red = self.physical.red_sideband().map_err(|e| CliError::Config(e.to_string()))?;
        DerivedParams::derive(&red).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn settings(&self) -> ProtocolSettings {
        ProtocolSettings {
            engine: self.engine,
            horizon: self.horizon,
            t0_over_kappa: self.t0_over_kappa,
            grid_points: self.grid_points,
            rtol: self.rtol,
            atol: self.atol,
            track_min_eigenvalue: false,
            conditioned_override: None,
        }
    }

    /// Every setting spelled out in canonical units. Parsing the echo gives
    /// back this configuration.
    pub fn effective(&self) -> RawConfig {
        let p = &self.physical;
        let many = |v: &Vec<f64>| Some(PerParticle::Many(v.clone()));
        RawConfig {
            physical: RawPhysical {
                num_particles: Some(p.num_particles()),
                tweezer_power: many(&p.tweezer_power),
                tweezer_waist: many(&p.tweezer_waist),
                particle_radius: many(&p.particle_radius),
                trap_frequency_offset: many(&p.trap_frequency_offset),
                susceptibility: Some(p.susceptibility),
                mass_density: Some(p.mass_density),
                wavelength: Some(p.wavelength),
                cavity_length: Some(p.cavity_length),
                cavity_waist: Some(p.cavity_waist),
                cavity_linewidth: Some(p.cavity_linewidth),
                detuning: self.explicit_detuning.then_some(p.detuning),
                ground_state_population: many(&p.ground_state_population),
                detector_efficiency: Some(p.detector_efficiency),
                ..Default::default()
            },
            layout: RawLayout {
                cavity_cutoff: self.layout.cavity_cutoff(),
                mechanical_cutoffs: Some(Cutoffs::Many(self.layout.mech_cutoffs().to_vec())),
            },
            protocol: RawProtocol {
                engine: Some(self.engine),
                horizon_s: Some(self.horizon),
                t0_over_kappa: Some(self.t0_over_kappa),
                grid_points: self.grid_points,
                rtol: Some(self.rtol),
                atol: Some(self.atol),
            },
            output: RawOutput { directory: Some(self.output_dir.clone()), format: Some(self.format) },
        }
    }
}
