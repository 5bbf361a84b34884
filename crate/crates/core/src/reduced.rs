// Copyright 2026 The coscat Authors
// SPDX-License-Identifier: Apache-2.0

//! Weak-coupling model of the mechanical modes.
//!
//! Once the cavity is adiabatically eliminated the particles behave as
//! independent damped oscillators. Their second moments then evolve in
//! closed form, which gives the conditional anti-Stokes flux and the bound
//! that every separable state respects.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fock::{self, DensityMatrix, Mode, OperatorMatrix, SpaceLayout};
use crate::params::DerivedParams;

/// Unordered pairs `i < j` of `n` modes, in row-major order.
pub fn pairs(n: usize) -> impl Iterator<Item = (usize, usize)> {
    (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| (i, j)))
}

/// Position of pair `(i, j)`, `i < j`, in [`pairs`] order.
pub fn pair_index(n: usize, i: usize, j: usize) -> usize {
    debug_assert!(i < j && j < n);
    i * n - i * (i + 1) / 2 + (j - i - 1)
}

/// Second moments of the mechanical modes at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSet {
    pub time: f64,
    /// `⟨a_j†a_j⟩`
    pub occupations: Vec<f64>,
    /// `⟨a_i†a_j⟩` for `i < j`, in [`pairs`] order.
    pub coherences: Vec<Complex64>,
    /// `⟨a_i†a_i a_j†a_j⟩` for `i < j`, in [`pairs`] order.
    pub correlations: Vec<f64>,
}

impl MomentSet {
    pub fn vacuum(n: usize) -> Self {
        let p = n * n.saturating_sub(1) / 2;
        Self {
            time: 0.0,
            occupations: vec![0.0; n],
            coherences: vec![Complex64::new(0.0, 0.0); p],
            correlations: vec![0.0; p],
        }
    }

    pub fn num_modes(&self) -> usize {
        self.occupations.len()
    }

    /// `⟨a_i†a_j⟩` for any `i ≠ j`.
    pub fn coherence(&self, i: usize, j: usize) -> Complex64 {
        let n = self.num_modes();
        if i < j {
            self.coherences[pair_index(n, i, j)]
        } else {
            self.coherences[pair_index(n, j, i)].conj()
        }
    }

    pub fn correlation(&self, i: usize, j: usize) -> f64 {
        let n = self.num_modes();
        self.correlations[pair_index(n, i.min(j), i.max(j))]
    }

    /// Copy with every occupation correlation set to zero.
    pub fn without_correlations(&self) -> Self {
        Self { correlations: vec![0.0; self.correlations.len()], ..self.clone() }
    }

    /// Largest `|⟨a_i†a_j⟩|² − ⟨n_i⟩⟨n_j⟩` over all pairs (≤ 0 for any state).
    pub fn cauchy_schwarz_excess(&self) -> f64 {
        pairs(self.num_modes())
            .map(|(i, j)| self.coherence(i, j).norm_sqr() - self.occupations[i] * self.occupations[j])
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Precomputed moment operators for one layout.
#[derive(Debug, Clone)]
pub struct MomentProbe {
    layout: SpaceLayout,
    numbers: Vec<OperatorMatrix>,
    coherences: Vec<OperatorMatrix>,
    correlations: Vec<OperatorMatrix>,
}

impl MomentProbe {
    pub fn new(layout: &SpaceLayout) -> Result<Self> {
        let n = layout.num_mechanical();
        let ladders = (0..n)
            .map(|j| fock::ladder(layout, Mode::Mechanical(j)))
            .collect::<Result<Vec<_>>>()?;
        let numbers: Vec<_> = ladders.iter().map(|a| &a.adjoint() * a).collect();
        let coherences = pairs(n).map(|(i, j)| &ladders[i].adjoint() * &ladders[j]).collect();
        let correlations = pairs(n).map(|(i, j)| &numbers[i] * &numbers[j]).collect();
        Ok(Self { layout: layout.clone(), numbers, coherences, correlations })
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn measure(&self, rho: &DensityMatrix, time: f64) -> Result<MomentSet> {
        if rho.layout() != &self.layout {
            return Err(Error::LayoutMismatch("probe and state layouts differ".into()));
        }
        let m = rho.matrix();
        let ev = |op: &OperatorMatrix| fock::trace_product(m, op.matrix());
        Ok(MomentSet {
            time,
            occupations: self.numbers.iter().map(|o| ev(o).re).collect(),
            coherences: self.coherences.iter().map(ev).collect(),
            correlations: self.correlations.iter().map(|o| ev(o).re).collect(),
        })
    }
}

/// Moments of a state, for one-off use.
pub fn measure_moments(rho: &DensityMatrix, time: f64) -> Result<MomentSet> {
    MomentProbe::new(rho.layout())?.measure(rho, time)
}

/// Maps the reduced mechanical state onto the one-photon cavity block,
/// `ρ₁₁ = B ρ B†`, with
/// `B = i g [A/(κ − i(Δ + ω̄)) + A†/(κ − i(Δ − ω̄))]` and `A = Σ_j a_j`.
///
/// `layout` must be mechanical-only.
pub fn conditioning_operator(dp: &DerivedParams, detuning: f64, layout: &SpaceLayout) -> Result<OperatorMatrix> {
    if layout.has_cavity() {
        return Err(Error::LayoutMismatch("conditioning acts on the mechanical space only".into()));
    }
    if layout.num_mechanical() != dp.num_particles() {
        return Err(Error::LayoutMismatch("mode count differs from parameter count".into()));
    }
    let kappa = dp.cavity_linewidth;
    let wbar = dp.mean_trap_frequency;
    let ig = Complex64::new(0.0, dp.mean_coupling);
    let lower = ig / Complex64::new(kappa, -(detuning + wbar));
    let raise = ig / Complex64::new(kappa, -(detuning - wbar));
    let a = fock::collective_annihilation(layout)?;
    Ok(&a.scale(lower) + &a.adjoint().scale(raise))
}

/// `B ρ B† / tr(B ρ B†)` together with the click probability weight
/// `tr(B ρ B†)`.
pub fn condition_state_weighted(rho: &DensityMatrix, b: &OperatorMatrix) -> Result<(DensityMatrix, f64)> {
    if rho.layout() != b.layout() {
        return Err(Error::LayoutMismatch("state and operator layouts differ".into()));
    }
    let bm = b.matrix();
    let out = bm * rho.matrix() * bm.adjoint();
    let p = out.trace().re;
    if !(p > f64::MIN_POSITIVE) {
        return Err(Error::ZeroProbability);
    }
    let mut cond = DensityMatrix::from_matrix_unchecked(rho.layout(), out / Complex64::new(p, 0.0))?;
    cond.symmetrize();
    Ok((cond, p))
}

pub fn condition_state(rho: &DensityMatrix, b: &OperatorMatrix) -> Result<DensityMatrix> {
    condition_state_weighted(rho, b).map(|(s, _)| s)
}

/// Closed-form moment evolution under the reduced master equation for a
/// time `t` after `m0.time`. Rates are taken from `dp`.
pub fn evolve_moments(m0: &MomentSet, dp: &DerivedParams, t: f64) -> MomentSet {
    let n = m0.num_modes();
    debug_assert_eq!(n, dp.num_particles());
    let gamma = &dp.net_damping;
    let nss = &dp.steady_occupation;
    let decay: Vec<f64> = gamma.iter().map(|g| (-g * t).exp()).collect();

    let occupations = (0..n)
        .map(|j| m0.occupations[j] * decay[j] + nss[j] * -(-gamma[j] * t).exp_m1())
        .collect();

    let coherences = pairs(n)
        .map(|(i, j)| {
            let rot = Complex64::new(-dp.pair_damping[i][j] * t, dp.pair_detuning[i][j] * t).exp();
            m0.coherence(i, j) * rot
        })
        .collect();

    let correlations = pairs(n)
        .map(|(i, j)| {
            let both = (-2.0 * dp.pair_damping[i][j] * t).exp();
            m0.correlation(i, j) * both
                + nss[i] * nss[j] * (1.0 - both)
                + nss[i] * (m0.occupations[j] - nss[j]) * (decay[j] - both)
                + nss[j] * (m0.occupations[i] - nss[i]) * (decay[i] - both)
        })
        .collect();

    MomentSet { time: m0.time + t, occupations, coherences, correlations }
}

/// Anti-Stokes flux `η (2g²/κ) ⟨A†A⟩`.
pub fn flux(m: &MomentSet, dp: &DerivedParams, efficiency: f64) -> f64 {
    let incoherent: f64 = m.occupations.iter().sum();
    let coherent: f64 = m.coherences.iter().map(|c| c.re).sum();
    efficiency * dp.flux_prefactor() * (incoherent + 2.0 * coherent)
}

/// Flux interval `(lower, upper)` allowed for separable states with the
/// given occupations and occupation correlations.
pub fn separability_bound(m: &MomentSet, dp: &DerivedParams, efficiency: f64) -> (f64, f64) {
    let incoherent: f64 = m.occupations.iter().sum();
    let width: f64 = m.correlations.iter().map(|c| c.max(0.0).sqrt()).sum();
    let scale = efficiency * dp.flux_prefactor();
    let lower = (scale * (incoherent - 2.0 * width)).max(0.0);
    let upper = scale * (incoherent + 2.0 * width);
    (lower, upper)
}

/// Which engine produced a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TraceSource {
    Analytic,
    Full,
}

impl TraceSource {
    pub fn as_str(self) -> &'static str {
        match self {
            TraceSource::Analytic => "analytic",
            TraceSource::Full => "full",
        }
    }
}

/// Interval during which the flux lies outside the separability bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Window {
    pub start: f64,
    pub end: f64,
}

impl Window {
    pub fn duration(&self) -> f64 {
        self.end - self.start
    }
}

/// Conditional flux with its separability bounds on a common time grid.
/// Times are measured from the Stokes click.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FluxTrace {
    pub source: TraceSource,
    pub times: Vec<f64>,
    pub flux: Vec<f64>,
    pub bound_lower: Vec<f64>,
    pub bound_upper: Vec<f64>,
    pub windows: Vec<Window>,
    /// Raw cavity output `2κη⟨b†b⟩`, only from the full engine.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub cavity_output: Option<Vec<f64>>,
}

impl FluxTrace {
    pub fn new(source: TraceSource, times: Vec<f64>, flux: Vec<f64>, bound_lower: Vec<f64>, bound_upper: Vec<f64>) -> Self {
        let windows = find_verification_windows(&times, &flux, &bound_lower, &bound_upper);
        Self { source, times, flux, bound_lower, bound_upper, windows, cavity_output: None }
    }
}

/// Positive-excursion intervals of `excess`, with linear interpolation of
/// the zero crossings.
fn positive_intervals(times: &[f64], excess: &[f64]) -> Vec<Window> {
    let mut out = Vec::new();
    let mut open: Option<f64> = None;
    for k in 0..times.len() {
        let e = excess[k];
        if k == 0 {
            if e > 0.0 {
                open = Some(times[0]);
            }
            continue;
        }
        let (t0, t1, e0) = (times[k - 1], times[k], excess[k - 1]);
        let crossing = || t0 + (t1 - t0) * (e0 / (e0 - e));
        match (open, e > 0.0) {
            (None, true) => open = Some(crossing()),
            (Some(start), false) => {
                out.push(Window { start, end: crossing() });
                open = None;
            }
            _ => {}
        }
    }
    if let (Some(start), Some(&end)) = (open, times.last()) {
        out.push(Window { start, end });
    }
    out
}

/// Maximal intervals where `flux > upper` or `flux < lower`.
pub fn find_verification_windows(times: &[f64], flux: &[f64], lower: &[f64], upper: &[f64]) -> Vec<Window> {
    assert!(
        flux.len() == times.len() && lower.len() == times.len() && upper.len() == times.len(),
        "flux and bounds must share the time grid"
    );
    let above: Vec<f64> = flux.iter().zip(upper).map(|(f, u)| f - u).collect();
    let below: Vec<f64> = flux.iter().zip(lower).map(|(f, l)| l - f).collect();
    let mut all = positive_intervals(times, &above);
    all.extend(positive_intervals(times, &below));
    all.sort_by(|a, b| a.start.total_cmp(&b.start));
    let mut merged: Vec<Window> = Vec::with_capacity(all.len());
    for w in all {
        match merged.last_mut() {
            Some(last) if w.start <= last.end => last.end = last.end.max(w.end),
            _ => merged.push(w),
        }
    }
    merged
}

/// Conditional flux and bounds predicted by the closed forms, starting from
/// the moments of the conditioned state. The bound is evolved with the
/// initial occupation correlations removed.
pub fn analytic_trace(m0: &MomentSet, dp: &DerivedParams, times: &[f64], efficiency: f64) -> FluxTrace {
    let bound0 = m0.without_correlations();
    let mut fl = Vec::with_capacity(times.len());
    let mut lo = Vec::with_capacity(times.len());
    let mut up = Vec::with_capacity(times.len());
    for &t in times {
        fl.push(flux(&evolve_moments(m0, dp, t), dp, efficiency));
        let (l, u) = separability_bound(&evolve_moments(&bound0, dp, t), dp, efficiency);
        lo.push(l);
        up.push(u);
    }
    FluxTrace::new(TraceSource::Analytic, times.to_vec(), fl, lo, up)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::tests::fig2;
    use approx::assert_relative_eq;
    use crate::fock::max_abs;
    use nalgebra::DVector;

    fn dp() -> DerivedParams {
        DerivedParams::derive(&fig2()).unwrap()
    }

    fn psi0(layout: &SpaceLayout) -> DVector<Complex64> {
        let n = layout.num_mechanical();
        let mut psi = DVector::zeros(layout.dim());
        for j in 0..n {
            let mut occ = vec![0; n];
            occ[j] = 1;
            psi[layout.basis_index(&occ)] = Complex64::new(1.0 / (n as f64).sqrt(), 0.0);
        }
        psi
    }

    fn psi0_moments() -> MomentSet {
        MomentSet {
            time: 0.0,
            occupations: vec![0.5, 0.5],
            coherences: vec![Complex64::new(0.5, 0.0)],
            correlations: vec![0.0],
        }
    }

    #[test]
    fn pair_indexing() {
        for n in 1..6 {
            for (k, (i, j)) in pairs(n).enumerate() {
                assert_eq!(pair_index(n, i, j), k);
            }
        }
        assert_eq!(pairs(3).collect::<Vec<_>>(), vec![(0, 1), (0, 2), (1, 2)]);
    }

    #[test]
    fn conditioning_on_blue_sideband_from_vacuum() {
        let dp = dp();
        let mech = SpaceLayout::mechanical(vec![2, 2]).unwrap();
        let b = conditioning_operator(&dp, dp.mean_trap_frequency, &mech).unwrap();
        let vac = DensityMatrix::fock(&mech, &[0, 0]).unwrap();
        let (cond, p) = condition_state_weighted(&vac, &b).unwrap();
        let g = dp.mean_coupling;
        let k = dp.cavity_linewidth;
        assert_relative_eq!(p, 2.0 * g * g / (k * k), max_relative = 1e-13);
        let f = cond.fidelity_with_pure(&psi0(&mech)).unwrap();
        assert!(1.0 - f < 1e-12, "fidelity {f}");
        // the component is exactly (ig/κ)(|10⟩ + |01⟩)
        let col = b.matrix().column(0);
        let expect = Complex64::new(0.0, g / k);
        assert_relative_eq!((col[mech.basis_index(&[1, 0])] - expect).norm(), 0.0, epsilon = 1e-18);
        assert_relative_eq!((col[mech.basis_index(&[0, 1])] - expect).norm(), 0.0, epsilon = 1e-18);
    }

    #[test]
    fn conditioning_w_state() {
        let mut cfg = fig2();
        cfg.tweezer_power.push(1.5);
        cfg.tweezer_waist.push(720e-9);
        cfg.particle_radius.push(10e-9);
        cfg.trap_frequency_offset = vec![-32e3, 0.0, 48e3];
        cfg.ground_state_population.push(0.95);
        let dp = DerivedParams::derive(&cfg.red_sideband().unwrap()).unwrap();
        let mech = SpaceLayout::mechanical(vec![2, 2, 2]).unwrap();
        let b = conditioning_operator(&dp, dp.mean_trap_frequency, &mech).unwrap();
        let cond = condition_state(&DensityMatrix::fock(&mech, &[0, 0, 0]).unwrap(), &b).unwrap();
        assert!(1.0 - cond.fidelity_with_pure(&psi0(&mech)).unwrap() < 1e-12);
        let m = measure_moments(&cond, 0.0).unwrap();
        for c in &m.coherences {
            assert_relative_eq!(c.re, 1.0 / 3.0, epsilon = 1e-12);
        }
        assert_relative_eq!(flux(&m, &dp, 1.0), dp.flux_prefactor() * 3.0, max_relative = 1e-12);
    }

    #[test]
    fn thermal_conditioning_regression() {
        // Ground-state weight after conditioning a p0 = 0.95 thermal product
        // at cutoff 2. Independent dense evaluation: with x = n̄/(1+n̄),
        // z = 1 + x + x², the vacuum component arises only from B acting on
        // one-phonon states through the A term.
        let dp = dp();
        let mech = SpaceLayout::mechanical(vec![2, 2]).unwrap();
        let nbar = fock::occupation_from_ground_population(0.95);
        let rho = fock::thermal_product_state(&mech, &[nbar, nbar]).unwrap();
        let b = conditioning_operator(&dp, dp.mean_trap_frequency, &mech).unwrap();
        let cond = condition_state(&rho, &b).unwrap();
        assert!(cond.hermiticity_error() == 0.0);
        assert_relative_eq!(cond.trace(), 1.0, epsilon = 1e-13);
        assert!(cond.min_eigenvalue() > -1e-12);

        let bm = b.matrix();
        let x = nbar / (1.0 + nbar);
        let z = 1.0 + x + x * x;
        let p = |n: usize| x.powi(n as i32) / z;
        let mut total = 0.0;
        let mut vac = 0.0;
        for i in 0..mech.dim() {
            let occ = mech.occupations(i);
            let w = p(occ[0]) * p(occ[1]);
            let col = bm.column(i);
            let norm: f64 = col.iter().map(|c| c.norm_sqr()).sum();
            total += w * norm;
            vac += w * col[0].norm_sqr();
        }
        let ground = cond.matrix()[(0, 0)].re;
        assert_relative_eq!(ground, vac / total, max_relative = 1e-12);
        // independent numpy evaluation
        assert_relative_eq!(ground, 1.696774057318026e-3, max_relative = 1e-9);
    }

    #[test]
    fn identity_conditioning_and_zero_probability() {
        let mech = SpaceLayout::mechanical(vec![2, 2]).unwrap();
        let rho = fock::thermal_product_state(&mech, &[0.2, 0.4]).unwrap();
        let id = OperatorMatrix::identity(&mech);
        let same = condition_state(&rho, &id).unwrap();
        assert!(max_abs(&(same.matrix() - rho.matrix())) < 1e-15);
        let a = fock::ladder(&mech, Mode::Mechanical(0)).unwrap();
        let vac = DensityMatrix::fock(&mech, &[0, 0]).unwrap();
        assert_eq!(condition_state(&vac, &a), Err(Error::ZeroProbability));
    }

    #[test]
    fn evolve_moments_examples() {
        let dp = dp();
        let m0 = psi0_moments();
        assert_eq!(evolve_moments(&m0, &dp, 0.0), m0);

        let t = 1.7e-4;
        let m = evolve_moments(&m0, &dp, t);
        for j in 0..2 {
            let g = dp.net_damping[j];
            let expected = 0.5 * (-g * t).exp() + dp.steady_occupation[j] * (1.0 - (-g * t).exp());
            assert_relative_eq!(m.occupations[j], expected, max_relative = 1e-13);
        }
        // ⟨a_2†a_1⟩ = conj of stored ⟨a_1†a_2⟩ rotates as e^{iδω_eff t − γt}
        let c21 = m.coherence(1, 0);
        let expect = Complex64::new(0.5, 0.0)
            * Complex64::new(-dp.mean_damping * t, dp.effective_detuning * t).exp();
        assert_relative_eq!((c21 - expect).norm(), 0.0, epsilon = 1e-15);

        let late = evolve_moments(&m0, &dp, 1.0);
        assert_relative_eq!(late.occupations[0], dp.steady_occupation[0], max_relative = 1e-12);
        assert!(late.coherences[0].norm() < 1e-300);
        assert_relative_eq!(
            late.correlations[0],
            dp.steady_occupation[0] * dp.steady_occupation[1],
            max_relative = 1e-12
        );
    }

    #[test]
    fn coherence_magnitude_decays_exactly() {
        let dp = dp();
        let m0 = psi0_moments();
        for k in 0..50 {
            let t = k as f64 * 2e-5;
            let c = evolve_moments(&m0, &dp, t).coherences[0].norm();
            assert_relative_eq!(c, 0.5 * (-dp.mean_damping * t).exp(), max_relative = 1e-12);
        }
    }

    #[test]
    fn closed_forms_solve_the_moment_equations() {
        // d⟨n_j⟩/dt = −γ_j⟨n_j⟩ + γ_j^+
        // d⟨a_i†a_j⟩/dt = (i δ_ij − γ_ij)⟨a_i†a_j⟩
        // d⟨n_i n_j⟩/dt = −(γ_i+γ_j)⟨n_i n_j⟩ + γ_i^+⟨n_j⟩ + γ_j^+⟨n_i⟩
        let dp = dp();
        let m0 = MomentSet {
            time: 0.0,
            occupations: vec![0.6, 0.45],
            coherences: vec![Complex64::new(0.3, -0.1)],
            correlations: vec![0.07],
        };
        let h = 1e-9;
        for &t in &[1e-6, 5e-5, 3e-4, 8e-4] {
            let m = evolve_moments(&m0, &dp, t);
            let p = evolve_moments(&m0, &dp, t + h);
            let q = evolve_moments(&m0, &dp, t - h);
            let d = |a: f64, b: f64| (a - b) / (2.0 * h);
            let gp = |j: usize| dp.steady_occupation[j] * dp.net_damping[j];
            for j in 0..2 {
                let lhs = d(p.occupations[j], q.occupations[j]);
                let rhs = -dp.net_damping[j] * m.occupations[j] + gp(j);
                assert_relative_eq!(lhs, rhs, max_relative = 1e-6, epsilon = 1e-9);
            }
            let lhs = (p.coherences[0] - q.coherences[0]) / (2.0 * h);
            let rhs = Complex64::new(-dp.pair_damping[0][1], dp.pair_detuning[0][1]) * m.coherences[0];
            assert!((lhs - rhs).norm() <= 1e-6 * rhs.norm() + 1e-9);
            let lhs = d(p.correlations[0], q.correlations[0]);
            let rhs = -(dp.net_damping[0] + dp.net_damping[1]) * m.correlations[0]
                + gp(0) * m.occupations[1]
                + gp(1) * m.occupations[0];
            assert_relative_eq!(lhs, rhs, max_relative = 1e-6, epsilon = 1e-9);
        }
    }

    #[test]
    fn flux_examples() {
        let dp = dp();
        let f = flux(&psi0_moments(), &dp, 1.0);
        let g = dp.mean_coupling;
        assert_relative_eq!(f, 4.0 * g * g / dp.cavity_linewidth, max_relative = 1e-14);
        assert_relative_eq!(f, 7.4e3, max_relative = 0.01);
        assert_relative_eq!(flux(&psi0_moments(), &dp, 0.5), 0.5 * f, max_relative = 1e-15);

        let mixture = MomentSet { coherences: vec![Complex64::new(0.0, 0.0)], ..psi0_moments() };
        assert_relative_eq!(flux(&mixture, &dp, 1.0), dp.flux_prefactor(), max_relative = 1e-14);
        assert_eq!(flux(&MomentSet::vacuum(2), &dp, 1.0), 0.0);
    }

    #[test]
    fn bound_limits() {
        let dp = dp();
        let m0 = psi0_moments();
        let (lo, up) = separability_bound(&m0, &dp, 1.0);
        assert_eq!(lo, up);
        assert_relative_eq!(up, dp.flux_prefactor(), max_relative = 1e-14);
        assert!(flux(&m0, &dp, 1.0) > up);

        let late = evolve_moments(&m0, &dp, 1.0);
        let (lo, up) = separability_bound(&late, &dp, 1.0);
        let n = &dp.steady_occupation;
        assert_relative_eq!(up - lo, dp.flux_prefactor() * 4.0 * (n[0] * n[1]).sqrt(), max_relative = 1e-10);

        // lower bound clamps at zero
        let wide = MomentSet { correlations: vec![10.0], ..m0 };
        assert_eq!(separability_bound(&wide, &dp, 1.0).0, 0.0);
    }

    #[test]
    fn psi0_exits_bound_at_first_coherence_maximum() {
        let dp = dp();
        let t = 2.0 * std::f64::consts::PI / dp.effective_detuning;
        let tr = analytic_trace(&psi0_moments(), &dp, &[t], 1.0);
        assert!(tr.flux[0] > tr.bound_upper[0]);
    }

    #[test]
    fn windows_basic_cases() {
        let times: Vec<f64> = (0..11).map(|k| k as f64).collect();
        let lo = vec![1.0; 11];
        let up = vec![2.0; 11];
        assert!(find_verification_windows(&times, &vec![1.5; 11], &lo, &up).is_empty());
        let all = find_verification_windows(&times, &vec![3.0; 11], &lo, &up);
        assert_eq!(all, vec![Window { start: 0.0, end: 10.0 }]);

        // triangle crossing the upper bound at 2.5 and 7.5, dipping below
        // the lower bound between 9.5 and 10
        let flux = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 4.0, 3.0, 2.0, 1.0, 0.0]
            .into_iter()
            .map(|f: f64| f * 0.5 + 0.75)
            .collect::<Vec<_>>();
        let w = find_verification_windows(&times, &flux, &lo, &up);
        let expect = [(0.0, 0.5), (2.5, 7.5), (9.5, 10.0)];
        assert_eq!(w.len(), 3);
        for (win, (a, b)) in w.iter().zip(expect) {
            assert_relative_eq!(win.start, a, epsilon = 1e-12);
            assert_relative_eq!(win.end, b, epsilon = 1e-12);
        }
        let dip: Vec<f64> = flux.iter().map(|f| f - 0.3).collect();
        let w = find_verification_windows(&times, &dip, &lo, &up);
        let expect = [(0.0, 1.1), (3.1, 6.9), (8.9, 10.0)];
        assert_eq!(w.len(), 3);
        for (win, (a, b)) in w.iter().zip(expect) {
            assert_relative_eq!(win.start, a, epsilon = 1e-12);
            assert_relative_eq!(win.end, b, epsilon = 1e-12);
        }
    }

    mod props {
        use super::*;
        use nalgebra::DMatrix;
        use proptest::prelude::*;

        fn coherent(cutoff: usize, alpha: Complex64) -> DVector<Complex64> {
            let mut v = DVector::zeros(cutoff + 1);
            let mut amp = Complex64::new(1.0, 0.0);
            for n in 0..=cutoff {
                if n > 0 {
                    amp = amp * alpha / (n as f64).sqrt();
                }
                v[n] = amp;
            }
            let norm = v.norm();
            v / Complex64::new(norm, 0.0)
        }

        fn product_state(a: &DVector<Complex64>, b: &DVector<Complex64>) -> DMatrix<Complex64> {
            let psi = a.kronecker(b);
            &psi * psi.adjoint()
        }

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn separable_mixtures_stay_inside_bounds(
                comps in proptest::collection::vec(
                    (0.05f64..1.0, 0.0f64..1.6, 0.0f64..6.3, 0.0f64..1.6, 0.0f64..6.3, 0usize..4, 0usize..4, any::<bool>()),
                    1..5),
                t in 0.0f64..1e-3,
            ) {
                let dp = dp();
                let mech = SpaceLayout::mechanical(vec![3, 3]).unwrap();
                let mut rho = DMatrix::zeros(16, 16);
                let mut wsum = 0.0;
                for (w, r1, p1, r2, p2, n1, n2, fockish) in comps {
                    let (a, b) = if fockish {
                        let mut a = DVector::zeros(4); a[n1] = Complex64::new(1.0, 0.0);
                        let mut b = DVector::zeros(4); b[n2] = Complex64::new(1.0, 0.0);
                        (a, b)
                    } else {
                        (coherent(3, Complex64::from_polar(r1, p1)), coherent(3, Complex64::from_polar(r2, p2)))
                    };
                    rho += product_state(&a, &b) * Complex64::new(w, 0.0);
                    wsum += w;
                }
                let rho = DensityMatrix::from_matrix(&mech, rho / Complex64::new(wsum, 0.0)).unwrap();
                let m = measure_moments(&rho, 0.0).unwrap();
                for m in [m.clone(), evolve_moments(&m, &dp, t)] {
                    let f = flux(&m, &dp, 1.0);
                    let (lo, up) = separability_bound(&m, &dp, 1.0);
                    let tol = 1e-12 * up.max(1.0);
                    prop_assert!(f <= up + tol && f >= lo - tol, "flux {f} outside [{lo}, {up}]");
                }
            }
        }
    }
}
