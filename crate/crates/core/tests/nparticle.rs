// Copyright 2026 The coscat Authors
// SPDX-License-Identifier: Apache-2.0

mod common;

use coscat::fock::SpaceLayout;
use coscat::protocol::{self, Engine, ProtocolSettings};
use coscat::reduced::TraceSource;
use common::reference;

fn three(offsets: [f64; 3]) -> coscat::params::PhysicalConfig {
    let mut cfg = reference(1.0);
    cfg.tweezer_power = vec![1.5; 3];
    cfg.tweezer_waist = vec![720e-9; 3];
    cfg.particle_radius = vec![10e-9; 3];
    cfg.ground_state_population = vec![1.0; 3];
    cfg.trap_frequency_offset = offsets.to_vec();
    cfg.red_sideband().unwrap()
}

#[test]
fn two_particles_match_plain_protocol_exactly() {
    let cfg = reference(0.95);
    let layout = SpaceLayout::new(1, vec![2, 2]).unwrap();
    let settings = ProtocolSettings { engine: Engine::Both, horizon: 3e-4, grid_points: Some(61), ..Default::default() };
    let a = protocol::run_protocol(&cfg, &layout, &settings).unwrap();
    let b = protocol::run_nparticle(&cfg, &layout, &settings).unwrap();
    assert_eq!(a.traces, b.run.traces);
    assert_eq!(a.summaries, b.run.summaries);
    assert_eq!(b.pairs.len(), 1);
    assert!(b.warnings.is_empty());
}

#[test]
fn w_state_pairs_and_start_flux() {
    let cfg = three([-32e3, 0.0, 48e3]);
    let layout = SpaceLayout::new(1, vec![1, 1, 1]).unwrap();
    let settings = ProtocolSettings { horizon: 5e-4, ..Default::default() };
    let r = protocol::run_nparticle(&cfg, &layout, &settings).unwrap();
    assert_eq!(r.pairs.len(), 3);
    let beats: Vec<f64> = r.pairs.iter().map(|p| p.effective_detuning.abs()).collect();
    for (b, want) in beats.iter().zip([32e3, 80e3, 48e3]) {
        assert!((b - want).abs() < 0.01 * want, "{b} vs {want}");
    }
    let s = r.run.summary(TraceSource::Analytic).unwrap();
    assert!(1.0 - s.conditioned_fidelity < 1e-10);
    let tr = r.run.trace(TraceSource::Analytic).unwrap();
    let expect = 3.0 * r.run.readout.flux_prefactor();
    assert!((tr.flux[0] - expect).abs() < 1e-9 * expect);
}

#[test]
fn degenerate_frequencies_warn() {
    let cfg = three([-32e3, 0.0, 0.0]);
    let layout = SpaceLayout::new(1, vec![1, 1, 1]).unwrap();
    let settings = ProtocolSettings { horizon: 1e-4, ..Default::default() };
    let r = protocol::run_nparticle(&cfg, &layout, &settings).unwrap();
    assert_eq!(r.warnings.len(), 1);
    assert!(r.warnings[0].contains("particles 1 and 2"));
    assert!(!r.pairs[2].resolvable);
}

#[test]
fn single_particle_rejected() {
    let mut cfg = reference(1.0);
    cfg.tweezer_power.truncate(1);
    cfg.tweezer_waist.truncate(1);
    cfg.particle_radius.truncate(1);
    cfg.ground_state_population.truncate(1);
    cfg.trap_frequency_offset = vec![0.0];
    let layout = SpaceLayout::new(1, vec![2]).unwrap();
    assert!(protocol::run_nparticle(&cfg, &layout, &ProtocolSettings::default()).is_err());
}
