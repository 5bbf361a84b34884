// Copyright 2026 The coscat Authors
// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

use coscat::params::PhysicalConfig;
use std::f64::consts::PI;

/// Two 10 nm silica spheres in 1.5 W tweezers, split by 32 krad/s, on the
/// red sideband of a 318 kHz cavity.
pub fn reference(pop: f64) -> PhysicalConfig {
    PhysicalConfig {
        tweezer_power: vec![1.5, 1.5],
        tweezer_waist: vec![720e-9, 720e-9],
        particle_radius: vec![10e-9, 10e-9],
        trap_frequency_offset: vec![-16e3, 16e3],
        susceptibility: 2.4,
        mass_density: 2336.0,
        wavelength: 1560e-9,
        cavity_length: 12e-3,
        cavity_waist: 30e-6,
        cavity_linewidth: 2.0 * PI * 318e3,
        detuning: 0.0,
        ground_state_population: vec![pop, pop],
        detector_efficiency: 1.0,
    }
    .red_sideband()
    .unwrap()
}

pub fn max_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn peak(a: &[f64]) -> f64 {
    a.iter().copied().fold(0.0, f64::max)
}
