// Copyright 2026 The coscat Authors
// SPDX-License-Identifier: Apache-2.0

//! Time integration of the full cavity + mechanics master equation
//!
//! `∂ρ = −i[H, ρ] + Σ_k r_k (c_k ρ c_k† − ½{c_k†c_k, ρ})`.
//!
//! States and operators are dense, but the generator is applied through the
//! nonzero entries of `H` and the collapse operators, which are all built from
//! ladder operators and therefore very sparse.

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fock::{self, CollapseOp, DensityMatrix, Mode, OperatorMatrix, SpaceLayout};
use crate::params::{DerivedParams, PhysicalConfig};
use crate::reduced::{MomentProbe, MomentSet};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Nonzero entries `(row, col, value)`.
#[derive(Debug, Clone)]
struct SparseOp {
    entries: Vec<(usize, usize, Complex64)>,
}

impl SparseOp {
    fn from_dense(m: &DMatrix<Complex64>) -> Self {
        let mut entries = Vec::new();
        for j in 0..m.ncols() {
            for i in 0..m.nrows() {
                let v = m[(i, j)];
                if v != Complex64::new(0.0, 0.0) {
                    entries.push((i, j, v));
                }
            }
        }
        // row-major order keeps the accumulation order independent of the
        // storage order of the source matrix
        entries.sort_by_key(|&(i, j, _)| (i, j));
        Self { entries }
    }
}

/// The generator of the master equation, ready to apply.
#[derive(Debug, Clone)]
pub struct Liouvillian {
    layout: SpaceLayout,
    /// `H − (i/2) Σ r_k c_k†c_k`
    effective: SparseOp,
    /// `(weight, c_k)` of the jump terms `weight · c_k ρ c_k†`.
    jumps: Vec<(f64, SparseOp)>,
}

impl Liouvillian {
    pub fn new(h: &OperatorMatrix, collapses: &[CollapseOp]) -> Result<Self> {
        Self::with_jump_weights(h, collapses, &vec![1.0; collapses.len()])
    }

    /// As [`new`](Self::new), but the jump term of collapse `k` is scaled by
    /// `jump_weights[k]` while its anticommutator is kept whole. A weight of
    /// zero yields the no-detection evolution of a monitored channel; the
    /// trace of the state then decays to the probability of no click.
    pub fn with_jump_weights(h: &OperatorMatrix, collapses: &[CollapseOp], jump_weights: &[f64]) -> Result<Self> {
        if jump_weights.len() != collapses.len() {
            return Err(Error::Domain("one jump weight per collapse operator is required".into()));
        }
        let layout = h.layout().clone();
        let mut eff = h.matrix().clone();
        let mut jumps = Vec::new();
        for (c, &w) in collapses.iter().zip(jump_weights) {
            if c.op.layout() != &layout {
                return Err(Error::LayoutMismatch("collapse operator layout differs from H".into()));
            }
            if c.rate == 0.0 {
                continue;
            }
            let m = c.op.matrix();
            eff -= (m.adjoint() * m) * Complex64::new(0.0, 0.5 * c.rate);
            if w != 0.0 {
                jumps.push((c.rate * w, SparseOp::from_dense(m)));
            }
        }
        Ok(Self { layout, effective: SparseOp::from_dense(&eff), jumps })
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    fn apply_into(&self, rho: &DMatrix<Complex64>, out: &mut DMatrix<Complex64>, scratch: &mut DMatrix<Complex64>) {
        let d = rho.nrows();
        let r = rho.as_slice();
        // scratch = H_eff ρ
        let m = scratch.as_mut_slice();
        m.fill(Complex64::new(0.0, 0.0));
        for &(i, k, v) in &self.effective.entries {
            for j in 0..d {
                m[i + j * d] += v * r[k + j * d];
            }
        }
        // out = −i (H_eff ρ − ρ H_eff†)
        let o = out.as_mut_slice();
        for j in 0..d {
            for i in 0..d {
                o[i + j * d] = -I * (m[i + j * d] - m[j + i * d].conj());
            }
        }
        for (w, c) in &self.jumps {
            for &(i, k, v) in &c.entries {
                let wv = v * *w;
                for &(j, l, u) in &c.entries {
                    o[i + j * d] += wv * r[k + l * d] * u.conj();
                }
            }
        }
    }

    pub fn apply(&self, rho: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        let d = rho.nrows();
        let mut out = DMatrix::zeros(d, d);
        let mut scratch = DMatrix::zeros(d, d);
        self.apply_into(rho, &mut out, &mut scratch);
        out
    }
}

/// `∂ρ` for the given Hamiltonian and dissipators.
pub fn rhs(rho: &DensityMatrix, h: &OperatorMatrix, collapses: &[CollapseOp]) -> Result<DMatrix<Complex64>> {
    if rho.layout() != h.layout() {
        return Err(Error::LayoutMismatch("state and Hamiltonian layouts differ".into()));
    }
    Ok(Liouvillian::new(h, collapses)?.apply(rho.matrix()))
}

/// Integration interval, output grid and tolerances.
#[derive(Debug, Clone, PartialEq)]
pub struct EvolutionSpec {
    pub t_start: f64,
    pub t_end: f64,
    /// Sorted times in `[t_start, t_end]` at which moments are recorded.
    pub output_times: Vec<f64>,
    pub rtol: f64,
    pub atol: f64,
    pub max_step: Option<f64>,
    /// Fail when the trace leaves `1 ± 1e-6` at an output time.
    pub trace_preserving: bool,
    /// Record the smallest eigenvalue at each output time.
    pub track_min_eigenvalue: bool,
}

pub const DEFAULT_RTOL: f64 = 1e-8;
pub const DEFAULT_ATOL: f64 = 1e-10;
pub const TRACE_DRIFT_TOL: f64 = 1e-6;

impl EvolutionSpec {
    /// `points` equally spaced outputs including both end points.
    pub fn uniform(t_start: f64, t_end: f64, points: usize) -> Result<Self> {
        if points < 2 {
            return Err(Error::Domain("a uniform grid needs at least two points".into()));
        }
        let times = (0..points)
            .map(|k| {
                if k + 1 == points {
                    t_end
                } else {
                    t_start + (t_end - t_start) * k as f64 / (points - 1) as f64
                }
            })
            .collect();
        Self::at_times(t_start, t_end, times)
    }

    pub fn at_times(t_start: f64, t_end: f64, output_times: Vec<f64>) -> Result<Self> {
        let spec = Self {
            t_start,
            t_end,
            output_times,
            rtol: DEFAULT_RTOL,
            atol: DEFAULT_ATOL,
            max_step: None,
            trace_preserving: true,
            track_min_eigenvalue: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.t_end > self.t_start) {
            return Err(Error::Domain(format!(
                "t_end ({}) must exceed t_start ({})",
                self.t_end, self.t_start
            )));
        }
        if !(self.rtol > 0.0 && self.atol > 0.0) {
            return Err(Error::Domain("tolerances must be positive".into()));
        }
        if let Some(h) = self.max_step {
            if !(h > 0.0) {
                return Err(Error::Domain("max_step must be positive".into()));
            }
        }
        let mut prev = self.t_start;
        for &t in &self.output_times {
            if !(t >= prev && t <= self.t_end) {
                return Err(Error::Domain("output times must be sorted within [t_start, t_end]".into()));
            }
            prev = t;
        }
        Ok(())
    }
}

/// Moments and diagnostics at one output time.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentRecord {
    pub moments: MomentSet,
    /// `⟨b†b⟩`, when the layout has a cavity.
    pub cavity_occupation: Option<f64>,
    pub trace: f64,
    pub min_eigenvalue: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MomentTrace {
    pub records: Vec<MomentRecord>,
}

impl MomentTrace {
    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.moments.time).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct EvolutionStats {
    pub accepted_steps: usize,
    pub rejected_steps: usize,
    /// Largest `max|ρ − ρ†|` seen before the per-step symmetrization.
    pub max_hermiticity_drift: f64,
}

#[derive(Debug, Clone)]
pub struct Evolution {
    pub trace: MomentTrace,
    pub final_state: DensityMatrix,
    pub stats: EvolutionStats,
}

/// Extracts a [`MomentRecord`] from full or mechanical-only states.
#[derive(Debug, Clone)]
pub struct StateProbe {
    moments: MomentProbe,
    cavity_number: Option<OperatorMatrix>,
}

impl StateProbe {
    pub fn new(layout: &SpaceLayout) -> Result<Self> {
        let cavity_number = if layout.has_cavity() {
            Some(fock::number(layout, Mode::Cavity)?)
        } else {
            None
        };
        Ok(Self { moments: MomentProbe::new(layout)?, cavity_number })
    }

    pub fn record(&self, rho: &DensityMatrix, time: f64, with_min_eig: bool) -> Result<MomentRecord> {
        Ok(MomentRecord {
            moments: self.moments.measure(rho, time)?,
            cavity_occupation: self
                .cavity_number
                .as_ref()
                .map(|n| fock::trace_product(rho.matrix(), n.matrix()).re),
            trace: rho.trace(),
            min_eigenvalue: with_min_eig.then(|| rho.min_eigenvalue()),
        })
    }
}

// Dormand–Prince 5(4) tableau; the generator is time independent, so the
// stage nodes are not needed.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const MAX_STEPS: usize = 50_000_000;

/// `y + h Σ a_i k_i` into `out`.
fn combine(out: &mut DMatrix<Complex64>, y: &DMatrix<Complex64>, h: f64, terms: &[(f64, &DMatrix<Complex64>)]) {
    let o = out.as_mut_slice();
    o.copy_from_slice(y.as_slice());
    for &(a, k) in terms {
        if a == 0.0 {
            continue;
        }
        let ha = h * a;
        for (x, kv) in o.iter_mut().zip(k.as_slice()) {
            *x += kv * ha;
        }
    }
}

/// Adaptive Dormand–Prince integration of `∂ρ = L ρ`, calling `observe` at
/// every output time. Returns the final matrix.
pub fn integrate<F>(
    liouvillian: &Liouvillian,
    rho0: &DMatrix<Complex64>,
    spec: &EvolutionSpec,
    mut observe: F,
) -> Result<(DMatrix<Complex64>, EvolutionStats)>
where
    F: FnMut(f64, &DMatrix<Complex64>) -> Result<()>,
{
    spec.validate()?;
    let d = rho0.nrows();
    let span = spec.t_end - spec.t_start;
    let max_step = spec.max_step.unwrap_or(span).min(span);
    let mut stats = EvolutionStats::default();

    let mut y = rho0.clone();
    let mut t = spec.t_start;
    let z = || DMatrix::<Complex64>::zeros(d, d);
    let (mut k1, mut k2, mut k3, mut k4, mut k5, mut k6, mut k7) = (z(), z(), z(), z(), z(), z(), z());
    let (mut tmp, mut ynew, mut scratch) = (z(), z(), z());

    let mut outputs = spec.output_times.iter().copied().peekable();
    while let Some(&to) = outputs.peek() {
        if to > t {
            break;
        }
        observe(to, &y)?;
        outputs.next();
    }

    liouvillian.apply_into(&y, &mut k1, &mut scratch);
    let norm = |m: &DMatrix<Complex64>| (m.iter().map(|z| z.norm_sqr()).sum::<f64>() / (d * d) as f64).sqrt();
    let (n0, n1) = (norm(&y), norm(&k1));
    let mut h = if n0 > 0.0 && n1 > 0.0 { 1e-3 * n0 / n1 } else { span * 1e-3 };
    h = h.min(max_step);

    while t < spec.t_end {
        if stats.accepted_steps + stats.rejected_steps > MAX_STEPS {
            return Err(Error::IntegrationFailure { time: t, reason: "step budget exhausted".into() });
        }
        let target = outputs.peek().copied().unwrap_or(spec.t_end).min(spec.t_end);
        let remaining = target - t;
        let clamped = h >= remaining;
        let step = if clamped { remaining } else { h };
        if step <= 1e-15 * t.abs().max(span) {
            return Err(Error::IntegrationFailure { time: t, reason: format!("step size underflow (h = {step:e})") });
        }

        combine(&mut tmp, &y, step, &[(A21, &k1)]);
        liouvillian.apply_into(&tmp, &mut k2, &mut scratch);
        combine(&mut tmp, &y, step, &[(A31, &k1), (A32, &k2)]);
        liouvillian.apply_into(&tmp, &mut k3, &mut scratch);
        combine(&mut tmp, &y, step, &[(A41, &k1), (A42, &k2), (A43, &k3)]);
        liouvillian.apply_into(&tmp, &mut k4, &mut scratch);
        combine(&mut tmp, &y, step, &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)]);
        liouvillian.apply_into(&tmp, &mut k5, &mut scratch);
        combine(&mut tmp, &y, step, &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)]);
        liouvillian.apply_into(&tmp, &mut k6, &mut scratch);
        combine(&mut ynew, &y, step, &[(A71, &k1), (A73, &k3), (A74, &k4), (A75, &k5), (A76, &k6)]);
        liouvillian.apply_into(&ynew, &mut k7, &mut scratch);

        // error estimate, real and imaginary parts weighted separately
        let mut acc = 0.0;
        {
            let (ys, yn) = (y.as_slice(), ynew.as_slice());
            let ks = [k1.as_slice(), k3.as_slice(), k4.as_slice(), k5.as_slice(), k6.as_slice(), k7.as_slice()];
            let es = [E1, E3, E4, E5, E6, E7];
            for idx in 0..ys.len() {
                let mut err = Complex64::new(0.0, 0.0);
                for (k, e) in ks.iter().zip(es) {
                    err += k[idx] * e;
                }
                err *= step;
                let sre = spec.atol + spec.rtol * ys[idx].re.abs().max(yn[idx].re.abs());
                let sim = spec.atol + spec.rtol * ys[idx].im.abs().max(yn[idx].im.abs());
                acc += (err.re / sre).powi(2) + (err.im / sim).powi(2);
            }
        }
        let err = (acc / (2 * d * d) as f64).sqrt();
        if !err.is_finite() {
            return Err(Error::IntegrationFailure { time: t, reason: "non-finite error estimate".into() });
        }
        let factor = if err == 0.0 { 10.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 10.0) };

        if err <= 1.0 {
            stats.accepted_steps += 1;
            t = if clamped { target } else { t + step };
            std::mem::swap(&mut y, &mut ynew);
            stats.max_hermiticity_drift = stats.max_hermiticity_drift.max(fock::max_abs(&(&y - y.adjoint())));
            fock::symmetrize_in_place(&mut y);
            // L commutes with the adjoint, so L((y + y†)/2) = (k7 + k7†)/2
            std::mem::swap(&mut k1, &mut k7);
            fock::symmetrize_in_place(&mut k1);
            while let Some(&to) = outputs.peek() {
                if to > t {
                    break;
                }
                observe(to, &y)?;
                outputs.next();
            }
            // keep the unclamped proposal so output times do not shrink steps
            h = if clamped { h.max(step * factor) } else { step * factor }.min(max_step);
        } else {
            stats.rejected_steps += 1;
            h = step * factor.min(1.0);
        }
    }
    Ok((y, stats))
}

/// Integrates with a prebuilt generator and records moments on the output grid.
pub fn evolve_with(liouvillian: &Liouvillian, rho0: &DensityMatrix, spec: &EvolutionSpec) -> Result<Evolution> {
    if rho0.layout() != liouvillian.layout() {
        return Err(Error::LayoutMismatch("state and generator layouts differ".into()));
    }
    let layout = rho0.layout().clone();
    let probe = StateProbe::new(&layout)?;
    let mut records = Vec::with_capacity(spec.output_times.len());
    let (last, stats) = integrate(liouvillian, rho0.matrix(), spec, |t, m| {
        let rho = DensityMatrix::from_matrix_unchecked(&layout, m.clone())?;
        let rec = probe.record(&rho, t, spec.track_min_eigenvalue)?;
        if spec.trace_preserving && (rec.trace - 1.0).abs() > TRACE_DRIFT_TOL {
            return Err(Error::IntegrationFailure {
                time: t,
                reason: format!("trace drifted to {}", rec.trace),
            });
        }
        records.push(rec);
        Ok(())
    })?;
    Ok(Evolution {
        trace: MomentTrace { records },
        final_state: DensityMatrix::from_matrix_unchecked(&layout, last)?,
        stats,
    })
}

pub fn evolve(rho0: &DensityMatrix, h: &OperatorMatrix, collapses: &[CollapseOp], spec: &EvolutionSpec) -> Result<Evolution> {
    evolve_with(&Liouvillian::new(h, collapses)?, rho0, spec)
}

/// Relative change per mechanical period below which the occupation is
/// considered stationary.
pub const STEADY_RTOL: f64 = 1e-4;

/// Cools both modes from the ground state on the red sideband and returns the
/// asymptotic `⟨a_j†a_j⟩` of each particle.
pub fn steady_occupation_check(cfg: &PhysicalConfig, layout: &SpaceLayout, max_time: f64) -> Result<Vec<f64>> {
    let red = cfg.red_sideband()?;
    let dp = DerivedParams::derive(&red)?;
    steady_occupation_check_with(&dp, layout, max_time)
}

/// As [`steady_occupation_check`], with explicit rates (`dp.detuning` is used).
pub fn steady_occupation_check_with(dp: &DerivedParams, layout: &SpaceLayout, max_time: f64) -> Result<Vec<f64>> {
    let h = fock::build_hamiltonian(layout, dp, dp.detuning)?;
    let ops = fock::build_collapse_ops(layout, dp)?;
    let liouv = Liouvillian::new(&h, &ops)?;
    let probe = StateProbe::new(layout)?;
    let n = layout.num_mechanical();
    let period = 2.0 * PI / dp.mean_trap_frequency;
    const CHUNK: usize = 64;

    let mut rho = fock::thermal_product_state(layout, &vec![0.0; n])?;
    let mut prev: Vec<f64> = vec![0.0; n];
    let mut t = 0.0;
    while t < max_time {
        let times: Vec<f64> = (1..=CHUNK).map(|k| t + period * k as f64).collect();
        let end = *times.last().unwrap();
        let spec = EvolutionSpec::at_times(t, end, times)?;
        let mut samples: Vec<Vec<f64>> = Vec::with_capacity(CHUNK);
        let (last, _) = integrate(&liouv, rho.matrix(), &spec, |tt, m| {
            let state = DensityMatrix::from_matrix_unchecked(layout, m.clone())?;
            samples.push(probe.record(&state, tt, false)?.moments.occupations);
            Ok(())
        })?;
        rho = DensityMatrix::from_matrix_unchecked(layout, last)?;
        for occ in samples {
            let settled = occ.iter().zip(&prev).all(|(a, b)| {
                let scale = a.abs().max(b.abs());
                (a - b).abs() <= STEADY_RTOL * scale || scale < 1e-12
            });
            prev = occ;
            if settled && t > 0.0 {
                return Ok(prev);
            }
        }
        t = end;
    }
    Err(Error::NonConvergence { max_time })
}

/// Mechanical-only model with the cavity adiabatically eliminated, in the
/// frame rotating at `ω̄` and after dropping terms rotating at `2ω̄`.
///
/// With `collective` the cavity acts through the collective jump operators
/// `Σ_j g_j a_j/(κ − i(Δ+ω_j))` and `Σ_j g_j a_j†/(κ − i(Δ−ω_j))` plus the
/// matching exchange couplings. Without it every particle has its own
/// sideband channels at rates `γ_j^±`, which is the model the closed-form
/// moments solve.
pub fn eliminated_cavity_model(
    dp: &DerivedParams,
    layout: &SpaceLayout,
    collective: bool,
) -> Result<(OperatorMatrix, Vec<CollapseOp>)> {
    if layout.has_cavity() {
        return Err(Error::LayoutMismatch("the eliminated model has no cavity mode".into()));
    }
    let n = layout.num_mechanical();
    if n != dp.num_particles() {
        return Err(Error::LayoutMismatch("mode count differs from parameter count".into()));
    }
    let a: Vec<OperatorMatrix> = (0..n).map(|j| fock::ladder(layout, Mode::Mechanical(j))).collect::<Result<_>>()?;
    let mut h = OperatorMatrix::zeros(layout);
    for j in 0..n {
        let nj = &a[j].adjoint() * &a[j];
        h = &h + &(&nj * (dp.shifted_frequency(j) - dp.mean_trap_frequency));
    }
    let kappa = dp.cavity_linewidth;
    let d = dp.detuning;
    let mut ops = Vec::new();
    if collective {
        let wbar = dp.mean_trap_frequency;
        let spring = (d + wbar) / (kappa * kappa + (d + wbar).powi(2)) + (d - wbar) / (kappa * kappa + (d - wbar).powi(2));
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    let hop = &a[i].adjoint() * &a[j];
                    h = &h + &(&hop * (dp.coupling[i] * dp.coupling[j] * spring));
                }
            }
        }
        let mut lower = OperatorMatrix::zeros(layout);
        let mut raise = OperatorMatrix::zeros(layout);
        for j in 0..n {
            let w = dp.trap_frequency[j];
            let g = Complex64::new(dp.coupling[j], 0.0);
            lower = &lower + &a[j].scale(g / Complex64::new(kappa, -(d + w)));
            raise = &raise + &a[j].adjoint().scale(g / Complex64::new(kappa, -(d - w)));
        }
        ops.push(CollapseOp { rate: 2.0 * kappa, op: lower });
        ops.push(CollapseOp { rate: 2.0 * kappa, op: raise });
        for j in 0..n {
            ops.push(CollapseOp { rate: dp.scattering_rate[j], op: a[j].clone() });
            ops.push(CollapseOp { rate: dp.scattering_rate[j], op: a[j].adjoint() });
        }
    } else {
        for j in 0..n {
            ops.push(CollapseOp { rate: dp.cooling_rate[j], op: a[j].clone() });
            ops.push(CollapseOp { rate: dp.heating_rate[j], op: a[j].adjoint() });
        }
    }
    Ok((h, ops))
}
