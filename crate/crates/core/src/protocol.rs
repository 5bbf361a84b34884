// Copyright 2026 The coscat Authors
// SPDX-License-Identifier: Apache-2.0

//! The complete experiment: ground-state start, blue-sideband Stokes click,
//! switch to the red sideband, then conditional anti-Stokes flux and its
//! separability bounds from either engine.
//!
//! Reported times are measured from the Stokes click.

use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fock::{self, DensityMatrix, Mode, SpaceLayout};
use crate::lindblad::{self, EvolutionSpec, Liouvillian, MomentTrace};
use crate::params::{DerivedParams, PhysicalConfig};
use crate::reduced::{self, pairs, FluxTrace, MomentSet, TraceSource, Window};

/// Which engines to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Analytic,
    Full,
    Both,
}

impl Engine {
    pub fn sources(self) -> Vec<TraceSource> {
        match self {
            Engine::Analytic => vec![TraceSource::Analytic],
            Engine::Full => vec![TraceSource::Full],
            Engine::Both => vec![TraceSource::Analytic, TraceSource::Full],
        }
    }
}

/// Grid points per beat period used when no explicit count is given.
pub const POINTS_PER_BEAT: f64 = 20.0;
/// Grid size when there is no beat to resolve (a single particle).
pub const FALLBACK_POINTS: usize = 201;

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolSettings {
    pub engine: Engine,
    /// Read-out duration after the click (s).
    pub horizon: f64,
    /// Length of the blue segment of the full engine in units of `1/κ`.
    pub t0_over_kappa: f64,
    /// Number of grid points including `t = 0`; derived from the beat
    /// frequency when `None`.
    pub grid_points: Option<usize>,
    pub rtol: f64,
    pub atol: f64,
    pub track_min_eigenvalue: bool,
    /// Replaces the Stokes conditioning with a prepared mechanical state.
    pub conditioned_override: Option<DensityMatrix>,
}

impl Default for ProtocolSettings {
    fn default() -> Self {
        Self {
            engine: Engine::Analytic,
            horizon: 1e-3,
            t0_over_kappa: 20.0,
            grid_points: None,
            rtol: lindblad::DEFAULT_RTOL,
            atol: lindblad::DEFAULT_ATOL,
            track_min_eigenvalue: false,
            conditioned_override: None,
        }
    }
}

/// Scalar outcome of one engine's run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub engine: TraceSource,
    pub verification_time_s: f64,
    pub first_window_onset_s: Option<f64>,
    pub last_window_end_s: Option<f64>,
    pub window_count: usize,
    /// Mean spacing of window midpoints, skipping the window at the click.
    pub mean_window_spacing_s: Option<f64>,
    pub beat_period_s: Option<f64>,
    /// Overlap of the conditioned mechanical state with the W state.
    pub conditioned_fidelity: f64,
    pub windows: Vec<Window>,
}

#[derive(Debug, Clone)]
pub struct ProtocolRun {
    /// Rates on the red sideband, which govern the read-out.
    pub readout: DerivedParams,
    pub traces: Vec<FluxTrace>,
    pub summaries: Vec<RunSummary>,
    /// Raw moments of the full engine's read-out, when it ran.
    pub full_moments: Option<MomentTrace>,
    /// Integrator statistics of the full read-out segment.
    pub full_stats: Option<lindblad::EvolutionStats>,
}

impl ProtocolRun {
    pub fn trace(&self, source: TraceSource) -> Option<&FluxTrace> {
        self.traces.iter().find(|t| t.source == source)
    }

    pub fn summary(&self, source: TraceSource) -> Option<&RunSummary> {
        self.summaries.iter().find(|s| s.engine == source)
    }
}

/// Read-out grid from 0 to `horizon`.
pub fn readout_grid(dp: &DerivedParams, horizon: f64, points: Option<usize>) -> Result<Vec<f64>> {
    if !(horizon >= 0.0) || !horizon.is_finite() {
        return Err(Error::Domain(format!("horizon must be ≥ 0, got {horizon}")));
    }
    if horizon == 0.0 {
        return Ok(vec![0.0]);
    }
    let points = match points {
        Some(p) if p < 2 => return Err(Error::Domain("grid needs at least two points".into())),
        Some(p) => p,
        None => {
            let fastest = max_beat(dp);
            if fastest > 0.0 {
                let step = 2.0 * PI / (POINTS_PER_BEAT * fastest);
                (horizon / step).ceil() as usize + 1
            } else {
                FALLBACK_POINTS
            }
        }
    };
    Ok((0..points)
        .map(|k| if k + 1 == points { horizon } else { horizon * k as f64 / (points - 1) as f64 })
        .collect())
}

fn max_beat(dp: &DerivedParams) -> f64 {
    pairs(dp.num_particles())
        .map(|(i, j)| dp.pair_detuning[i][j].abs())
        .fold(0.0, f64::max)
}

/// `(|10…0⟩ + |01…0⟩ + … + |0…01⟩)/√N` on a mechanical layout.
pub fn w_state(layout: &SpaceLayout) -> DVector<Complex64> {
    let n = layout.num_mechanical();
    let offset = usize::from(layout.has_cavity());
    let mut psi = DVector::zeros(layout.dim());
    for j in 0..n {
        let mut occ = vec![0; n + offset];
        occ[j + offset] = 1;
        psi[layout.basis_index(&occ)] = Complex64::new(1.0 / (n as f64).sqrt(), 0.0);
    }
    psi
}

/// Thermal mechanical state matching the configured ground populations.
pub fn initial_mechanical_state(cfg: &PhysicalConfig, layout: &SpaceLayout) -> Result<DensityMatrix> {
    let occ: Vec<f64> = cfg
        .ground_state_population
        .iter()
        .map(|&p| fock::occupation_from_ground_population(p))
        .collect();
    fock::thermal_product_state(&layout.mechanical_part(), &occ)
}

fn summarize(source: TraceSource, trace: &FluxTrace, dp: &DerivedParams, fidelity: f64) -> RunSummary {
    let w = &trace.windows;
    let mids: Vec<f64> = w.iter().skip(1).map(|x| 0.5 * (x.start + x.end)).collect();
    let spacing = (mids.len() >= 2).then(|| (mids[mids.len() - 1] - mids[0]) / (mids.len() - 1) as f64);
    let beat = dp.effective_detuning.abs();
    RunSummary {
        engine: source,
        verification_time_s: dp.verification_time,
        first_window_onset_s: w.first().map(|x| x.start),
        last_window_end_s: w.last().map(|x| x.end),
        window_count: w.len(),
        mean_window_spacing_s: spacing,
        beat_period_s: (dp.num_particles() >= 2 && beat > 0.0).then(|| 2.0 * PI / beat),
        conditioned_fidelity: fidelity,
        windows: w.clone(),
    }
}

/// Analytic engine: condition the initial state with `B(Δ = +ω̄)` and
/// propagate the moments in closed form on the red sideband.
pub fn run_analytic(
    cfg: &PhysicalConfig,
    dp: &DerivedParams,
    layout: &SpaceLayout,
    times: &[f64],
    conditioned_override: Option<&DensityMatrix>,
) -> Result<(FluxTrace, RunSummary)> {
    let mech = layout.mechanical_part();
    let conditioned = match conditioned_override {
        Some(rho) => rho.clone(),
        None => {
            let initial = initial_mechanical_state(cfg, layout)?;
            let b = reduced::conditioning_operator(dp, dp.mean_trap_frequency, &mech)?;
            reduced::condition_state(&initial, &b)?
        }
    };
    if conditioned.layout() != &mech {
        return Err(Error::LayoutMismatch("conditioned state must live on the mechanical layout".into()));
    }
    let m0 = reduced::measure_moments(&conditioned, 0.0)?;
    let trace = reduced::analytic_trace(&m0, dp, times, cfg.detector_efficiency);
    let fidelity = conditioned.fidelity_with_pure(&w_state(&mech))?;
    let summary = summarize(TraceSource::Analytic, &trace, dp, fidelity);
    Ok((trace, summary))
}

/// State of cavity and mechanics right after the Stokes click of the full
/// engine, with the mechanical marginal's W-state fidelity.
pub fn full_conditioned_state(
    cfg: &PhysicalConfig,
    dp: &DerivedParams,
    layout: &SpaceLayout,
    settings: &ProtocolSettings,
) -> Result<DensityMatrix> {
    if !layout.has_cavity() {
        return Err(Error::LayoutMismatch("the full engine needs a cavity mode".into()));
    }
    let mech0 = initial_mechanical_state(cfg, layout)?;
    let rho0 = mech0.with_cavity_vacuum(layout.cavity_cutoff().unwrap_or(1))?;
    let h_blue = fock::build_hamiltonian(layout, dp, dp.mean_trap_frequency)?;
    let ops = fock::build_collapse_ops(layout, dp)?;
    // The click at t0 is the first Stokes photon, so the cavity emits nothing
    // before it: its jump term is dropped and the lost norm renormalized.
    let mut weights = vec![1.0; ops.len()];
    weights[0] = 0.0;
    let blue = Liouvillian::with_jump_weights(&h_blue, &ops, &weights)?;
    let t0 = settings.t0_over_kappa / dp.cavity_linewidth;
    let mut spec = EvolutionSpec::at_times(0.0, t0, vec![t0])?;
    spec.rtol = settings.rtol;
    spec.atol = settings.atol;
    spec.trace_preserving = false;
    let before = lindblad::evolve_with(&blue, &rho0, &spec)?.final_state;

    let b = fock::ladder(layout, Mode::Cavity)?;
    let bm = b.matrix();
    let after = bm * before.matrix() * bm.adjoint();
    let p = after.trace().re;
    if !(p > f64::MIN_POSITIVE) {
        return Err(Error::ZeroProbability);
    }
    let mut rho = DensityMatrix::from_matrix_unchecked(layout, after / Complex64::new(p, 0.0))?;
    rho.symmetrize();
    Ok(rho)
}

/// Full engine: integrate the master equation through the blue segment,
/// apply the cavity jump, then integrate the red read-out.
pub fn run_full(
    cfg: &PhysicalConfig,
    dp: &DerivedParams,
    layout: &SpaceLayout,
    times: &[f64],
    settings: &ProtocolSettings,
) -> Result<(FluxTrace, RunSummary, MomentTrace, lindblad::EvolutionStats)> {
    let mech = layout.mechanical_part();
    let rho = match &settings.conditioned_override {
        Some(m) => m.with_cavity_vacuum(layout.cavity_cutoff().unwrap_or(1))?,
        None => full_conditioned_state(cfg, dp, layout, settings)?,
    };
    let fidelity = rho.trace_out_cavity()?.fidelity_with_pure(&w_state(&mech))?;

    let h_red = fock::build_hamiltonian(layout, dp, dp.detuning)?;
    let ops = fock::build_collapse_ops(layout, dp)?;
    let red = Liouvillian::new(&h_red, &ops)?;
    let (moments, stats) = if times.len() == 1 {
        let probe = lindblad::StateProbe::new(layout)?;
        let rec = probe.record(&rho, 0.0, settings.track_min_eigenvalue)?;
        (MomentTrace { records: vec![rec] }, lindblad::EvolutionStats::default())
    } else {
        let mut spec = EvolutionSpec::at_times(0.0, *times.last().unwrap_or(&0.0), times.to_vec())?;
        spec.rtol = settings.rtol;
        spec.atol = settings.atol;
        spec.track_min_eigenvalue = settings.track_min_eigenvalue;
        let ev = lindblad::evolve_with(&red, &rho, &spec)?;
        (ev.trace, ev.stats)
    };

    let trace = full_flux_trace(&moments, dp, cfg.detector_efficiency);
    let summary = summarize(TraceSource::Full, &trace, dp, fidelity);
    Ok((trace, summary, moments, stats))
}

/// Flux and bounds from full-model moments.
///
/// The flux is `η(2g²/κ)⟨A†A⟩`, i.e. the anti-Stokes part of the cavity
/// output. The bound uses the measured occupations and the measured
/// occupation correlation with the contribution of its initial value removed
/// (`C_t − C_0 e^{−2γ_ij t}`), which is how the closed forms zero it.
pub fn full_flux_trace(moments: &MomentTrace, dp: &DerivedParams, efficiency: f64) -> FluxTrace {
    let Some(first) = moments.records.first() else {
        return FluxTrace::new(TraceSource::Full, vec![], vec![], vec![], vec![]);
    };
    let c0 = first.moments.correlations.clone();
    let t0 = first.moments.time;
    let n = dp.num_particles();
    let mut times = Vec::with_capacity(moments.records.len());
    let mut fl = Vec::with_capacity(times.capacity());
    let mut lo = Vec::with_capacity(times.capacity());
    let mut up = Vec::with_capacity(times.capacity());
    let mut cav = Vec::with_capacity(times.capacity());
    for rec in &moments.records {
        let m = &rec.moments;
        let t = m.time - t0;
        times.push(m.time);
        fl.push(reduced::flux(m, dp, efficiency));
        let correlations = pairs(n)
            .zip(&m.correlations)
            .zip(&c0)
            .map(|(((i, j), c), c_init)| c - c_init * (-2.0 * dp.pair_damping[i][j] * t).exp())
            .collect();
        let bound_moments = MomentSet { correlations, ..m.clone() };
        let (l, u) = reduced::separability_bound(&bound_moments, dp, efficiency);
        lo.push(l);
        up.push(u);
        cav.push(efficiency * 2.0 * dp.cavity_linewidth * rec.cavity_occupation.unwrap_or(0.0));
    }
    let mut trace = FluxTrace::new(TraceSource::Full, times, fl, lo, up);
    trace.cavity_output = Some(cav);
    trace
}

/// Runs the protocol with the selected engines. With [`Engine::Both`] the two
/// engines run in parallel.
pub fn run_protocol(cfg: &PhysicalConfig, layout: &SpaceLayout, settings: &ProtocolSettings) -> Result<ProtocolRun> {
    cfg.validate()?;
    if layout.num_mechanical() != cfg.num_particles() {
        return Err(Error::LayoutMismatch(format!(
            "layout has {} mechanical modes for {} particles",
            layout.num_mechanical(),
            cfg.num_particles()
        )));
    }
    let red = cfg.red_sideband()?;
    let dp = DerivedParams::derive(&red)?;
    let times = readout_grid(&dp, settings.horizon, settings.grid_points)?;
    let analytic = || run_analytic(&red, &dp, layout, &times, settings.conditioned_override.as_ref());
    let full = || run_full(&red, &dp, layout, &times, settings);

    let mut traces = Vec::new();
    let mut summaries = Vec::new();
    let mut full_moments = None;
    let mut full_stats = None;
    let (a, f) = match settings.engine {
        Engine::Analytic => (Some(analytic()), None),
        Engine::Full => (None, Some(full())),
        Engine::Both => {
            let (a, f) = rayon::join(analytic, full);
            (Some(a), Some(f))
        }
    };
    if let Some(a) = a {
        let (t, s) = a?;
        traces.push(t);
        summaries.push(s);
    }
    if let Some(f) = f {
        let (t, s, m, st) = f?;
        traces.push(t);
        summaries.push(s);
        full_moments = Some(m);
        full_stats = Some(st);
    }
    Ok(ProtocolRun { readout: dp, traces, summaries, full_moments, full_stats })
}

/// Beat of one particle pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairBeat {
    pub i: usize,
    pub j: usize,
    /// `δω_eff^ij` (rad/s)
    pub effective_detuning: f64,
    /// `γ_ij` (1/s)
    pub damping: f64,
    pub beat_period_s: Option<f64>,
    /// False when the beat is slower than the pair's decay.
    pub resolvable: bool,
}

#[derive(Debug, Clone)]
pub struct NParticleRun {
    pub run: ProtocolRun,
    pub pairs: Vec<PairBeat>,
    pub warnings: Vec<String>,
}

/// Protocol for `N ≥ 2` particles with a per-pair beat report.
pub fn run_nparticle(cfg: &PhysicalConfig, layout: &SpaceLayout, settings: &ProtocolSettings) -> Result<NParticleRun> {
    if cfg.num_particles() < 2 {
        return Err(Error::Domain("the N-particle protocol needs at least two particles".into()));
    }
    let run = run_protocol(cfg, layout, settings)?;
    let dp = &run.readout;
    let mut report = Vec::new();
    let mut warnings = Vec::new();
    for (i, j) in pairs(dp.num_particles()) {
        let det = dp.pair_detuning[i][j];
        let damping = dp.pair_damping[i][j];
        let resolvable = det.abs() > 2.0 * damping;
        if !resolvable {
            warnings.push(format!(
                "particles {i} and {j}: beat {det:.3e} rad/s is not resolvable against damping {damping:.3e} 1/s"
            ));
        }
        report.push(PairBeat {
            i,
            j,
            effective_detuning: det,
            damping,
            beat_period_s: (det != 0.0).then(|| 2.0 * PI / det.abs()),
            resolvable,
        });
    }
    Ok(NParticleRun { run, pairs: report, warnings })
}

/// Flux change under doubled cutoffs below which a layout counts as converged.
pub const CUTOFF_CONVERGENCE_TOL: f64 = 0.005;

/// Largest pointwise change of the full-engine flux, relative to its peak,
/// when every cutoff is doubled.
pub fn cutoff_convergence(cfg: &PhysicalConfig, layout: &SpaceLayout, settings: &ProtocolSettings) -> Result<f64> {
    let settings = ProtocolSettings { engine: Engine::Full, ..settings.clone() };
    let coarse = run_protocol(cfg, layout, &settings)?;
    let fine = run_protocol(cfg, &layout.doubled(), &settings)?;
    let a = coarse.trace(TraceSource::Full).expect("full trace");
    let b = fine.trace(TraceSource::Full).expect("full trace");
    let peak = a.flux.iter().copied().fold(0.0, f64::max);
    let worst = a.flux.iter().zip(&b.flux).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    Ok(worst / peak)
}
