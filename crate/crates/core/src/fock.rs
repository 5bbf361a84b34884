// Copyright 2026 The coscat Authors
// SPDX-License-Identifier: Apache-2.0

//! Truncated Fock spaces for one cavity mode and `N` mechanical modes.
//!
//! Basis states are ordered with the cavity as the most significant factor,
//! followed by mechanical modes `1..=N`, so that `|ℓ, n_1, …, n_N⟩` has index
//! `((ℓ·d_1 + n_1)·d_2 + n_2)…` where `d_j = cutoff_j + 1`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use std::ops::{Add, Mul, Sub};

use crate::error::{Error, Result};
use crate::params::DerivedParams;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Selects one factor of the tensor product.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Cavity,
    /// Zero-based particle index.
    Mechanical(usize),
}

/// Cutoffs of each mode; a cutoff `M` keeps Fock states `0..=M`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SpaceLayout {
    cavity: Option<usize>,
    mech: Vec<usize>,
}

impl SpaceLayout {
    /// Cavity plus mechanical modes.
    pub fn new(cavity_cutoff: usize, mech_cutoffs: Vec<usize>) -> Result<Self> {
        if cavity_cutoff < 1 {
            return Err(Error::Domain("cavity cutoff must be at least 1".into()));
        }
        Self::build(Some(cavity_cutoff), mech_cutoffs)
    }

    /// Mechanical modes only (no cavity factor).
    pub fn mechanical(mech_cutoffs: Vec<usize>) -> Result<Self> {
        Self::build(None, mech_cutoffs)
    }

    fn build(cavity: Option<usize>, mech: Vec<usize>) -> Result<Self> {
        if mech.is_empty() {
            return Err(Error::Domain("at least one mechanical mode is required".into()));
        }
        if mech.iter().any(|&m| m < 1) {
            return Err(Error::Domain("mechanical cutoffs must be at least 1".into()));
        }
        Ok(Self { cavity, mech })
    }

    pub fn cavity_cutoff(&self) -> Option<usize> {
        self.cavity
    }

    pub fn mech_cutoffs(&self) -> &[usize] {
        &self.mech
    }

    pub fn num_mechanical(&self) -> usize {
        self.mech.len()
    }

    pub fn has_cavity(&self) -> bool {
        self.cavity.is_some()
    }

    /// The same mechanical modes without the cavity.
    pub fn mechanical_part(&self) -> SpaceLayout {
        SpaceLayout { cavity: None, mech: self.mech.clone() }
    }

    /// Every cutoff doubled.
    pub fn doubled(&self) -> SpaceLayout {
        SpaceLayout {
            cavity: self.cavity.map(|c| 2 * c),
            mech: self.mech.iter().map(|m| 2 * m).collect(),
        }
    }

    /// Dimensions of the factors in tensor order.
    pub fn factor_dims(&self) -> Vec<usize> {
        self.cavity.iter().chain(&self.mech).map(|c| c + 1).collect()
    }

    pub fn dim(&self) -> usize {
        self.factor_dims().iter().product()
    }

    fn position(&self, mode: Mode) -> Result<usize> {
        let offset = usize::from(self.cavity.is_some());
        match mode {
            Mode::Cavity if self.cavity.is_some() => Ok(0),
            Mode::Cavity => Err(Error::LayoutMismatch("layout has no cavity mode".into())),
            Mode::Mechanical(j) if j < self.mech.len() => Ok(j + offset),
            Mode::Mechanical(j) => Err(Error::IndexOutOfRange { index: j, len: self.mech.len() }),
        }
    }

    /// Basis index of a product state; `occupations` follows the tensor order.
    pub fn basis_index(&self, occupations: &[usize]) -> usize {
        let dims = self.factor_dims();
        debug_assert_eq!(dims.len(), occupations.len());
        occupations.iter().zip(&dims).fold(0, |acc, (&n, &d)| {
            debug_assert!(n < d);
            acc * d + n
        })
    }

    /// Inverse of [`basis_index`](Self::basis_index).
    pub fn occupations(&self, mut index: usize) -> Vec<usize> {
        let dims = self.factor_dims();
        let mut occ = vec![0; dims.len()];
        for (slot, d) in occ.iter_mut().zip(&dims).rev() {
            *slot = index % d;
            index /= d;
        }
        occ
    }
}

/// Dense operator on a [`SpaceLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct OperatorMatrix {
    layout: SpaceLayout,
    matrix: DMatrix<Complex64>,
}

impl OperatorMatrix {
    pub fn from_matrix(layout: &SpaceLayout, matrix: DMatrix<Complex64>) -> Result<Self> {
        let d = layout.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::LayoutMismatch(format!(
                "matrix is {}x{}, layout dimension is {d}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { layout: layout.clone(), matrix })
    }

    pub fn identity(layout: &SpaceLayout) -> Self {
        let d = layout.dim();
        Self { layout: layout.clone(), matrix: DMatrix::identity(d, d) }
    }

    pub fn zeros(layout: &SpaceLayout) -> Self {
        let d = layout.dim();
        Self { layout: layout.clone(), matrix: DMatrix::zeros(d, d) }
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.matrix
    }

    pub fn adjoint(&self) -> Self {
        Self { layout: self.layout.clone(), matrix: self.matrix.adjoint() }
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self { layout: self.layout.clone(), matrix: &self.matrix * factor }
    }

    /// Largest absolute entry of `O − O†`.
    pub fn hermiticity_error(&self) -> f64 {
        max_abs(&(&self.matrix - self.matrix.adjoint()))
    }

    pub fn commutator(&self, other: &Self) -> Self {
        &(self * other) - &(other * self)
    }

    fn check_same(&self, other: &Self) {
        assert_eq!(self.layout, other.layout, "operator layouts differ");
    }
}

impl Mul for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        self.check_same(rhs);
        OperatorMatrix { layout: self.layout.clone(), matrix: &self.matrix * &rhs.matrix }
    }
}

impl Add for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn add(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        self.check_same(rhs);
        OperatorMatrix { layout: self.layout.clone(), matrix: &self.matrix + &rhs.matrix }
    }
}

impl Sub for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn sub(self, rhs: &OperatorMatrix) -> OperatorMatrix {
        self.check_same(rhs);
        OperatorMatrix { layout: self.layout.clone(), matrix: &self.matrix - &rhs.matrix }
    }
}

impl Mul<f64> for &OperatorMatrix {
    type Output = OperatorMatrix;
    fn mul(self, rhs: f64) -> OperatorMatrix {
        self.scale(Complex64::new(rhs, 0.0))
    }
}

pub(crate) fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().fold(0.0, |acc, z| acc.max(z.norm()))
}

/// Single-mode annihilation operator on `0..=cutoff`.
fn single_mode_annihilation(cutoff: usize) -> DMatrix<Complex64> {
    let d = cutoff + 1;
    let mut a = DMatrix::zeros(d, d);
    for n in 1..d {
        a[(n - 1, n)] = Complex64::new((n as f64).sqrt(), 0.0);
    }
    a
}

/// Annihilation operator of `mode`, embedded by Kronecker products with
/// identities on the other factors.
pub fn ladder(layout: &SpaceLayout, mode: Mode) -> Result<OperatorMatrix> {
    let target = layout.position(mode)?;
    let dims = layout.factor_dims();
    let mut full = DMatrix::from_element(1, 1, ONE);
    for (pos, &d) in dims.iter().enumerate() {
        let factor = if pos == target {
            single_mode_annihilation(d - 1)
        } else {
            DMatrix::identity(d, d)
        };
        full = full.kronecker(&factor);
    }
    OperatorMatrix::from_matrix(layout, full)
}

/// `a†a` for one mode.
pub fn number(layout: &SpaceLayout, mode: Mode) -> Result<OperatorMatrix> {
    let a = ladder(layout, mode)?;
    Ok(&a.adjoint() * &a)
}

/// Collective annihilation operator `A = Σ_j a_j` over the mechanical modes.
pub fn collective_annihilation(layout: &SpaceLayout) -> Result<OperatorMatrix> {
    let mut sum = OperatorMatrix::zeros(layout);
    for j in 0..layout.num_mechanical() {
        sum = &sum + &ladder(layout, Mode::Mechanical(j))?;
    }
    Ok(sum)
}

/// `H/ħ = −Δ b†b + Σ ω_j a_j†a_j − Σ g_j (b + b†)(a_j + a_j†)`.
pub fn build_hamiltonian(layout: &SpaceLayout, dp: &DerivedParams, detuning: f64) -> Result<OperatorMatrix> {
    if !layout.has_cavity() {
        return Err(Error::LayoutMismatch("the Hamiltonian needs a cavity mode".into()));
    }
    if layout.num_mechanical() != dp.num_particles() {
        return Err(Error::LayoutMismatch(format!(
            "layout has {} mechanical modes, parameters describe {}",
            layout.num_mechanical(),
            dp.num_particles()
        )));
    }
    let b = ladder(layout, Mode::Cavity)?;
    let b_quad = &b + &b.adjoint();
    let mut h = &(&b.adjoint() * &b) * (-detuning);
    for j in 0..layout.num_mechanical() {
        let a = ladder(layout, Mode::Mechanical(j))?;
        let a_quad = &a + &a.adjoint();
        h = &h + &(&(&a.adjoint() * &a) * dp.trap_frequency[j]);
        h = &h - &(&(&b_quad * &a_quad) * dp.coupling[j]);
    }
    // Exact Hermiticity: every term above is Hermitian up to rounding in
    // products of real matrices, so symmetrize once.
    let m = h.matrix();
    let sym = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    OperatorMatrix::from_matrix(layout, sym)
}

/// A dissipator `rate · L[op]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CollapseOp {
    /// 1/s
    pub rate: f64,
    pub op: OperatorMatrix,
}

/// Cavity loss `2κ L[b]` followed by `γ_j^sc (L[a_j] + L[a_j†])` per particle.
pub fn build_collapse_ops(layout: &SpaceLayout, dp: &DerivedParams) -> Result<Vec<CollapseOp>> {
    if layout.num_mechanical() != dp.num_particles() {
        return Err(Error::LayoutMismatch("mode count differs from parameter count".into()));
    }
    let mut ops = vec![CollapseOp {
        rate: 2.0 * dp.cavity_linewidth,
        op: ladder(layout, Mode::Cavity)?,
    }];
    for j in 0..layout.num_mechanical() {
        let a = ladder(layout, Mode::Mechanical(j))?;
        let creation = a.adjoint();
        ops.push(CollapseOp { rate: dp.scattering_rate[j], op: a });
        ops.push(CollapseOp { rate: dp.scattering_rate[j], op: creation });
    }
    Ok(ops)
}

/// Hermitian, unit-trace state on a [`SpaceLayout`].
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    layout: SpaceLayout,
    matrix: DMatrix<Complex64>,
}

pub const HERMITICITY_TOL: f64 = 1e-10;
pub const TRACE_TOL: f64 = 1e-8;

impl DensityMatrix {
    /// Validates Hermiticity and unit trace.
    pub fn from_matrix(layout: &SpaceLayout, matrix: DMatrix<Complex64>) -> Result<Self> {
        let rho = Self::from_matrix_unchecked(layout, matrix)?;
        let herm = rho.hermiticity_error();
        if herm > HERMITICITY_TOL {
            return Err(Error::InvalidState(format!("not Hermitian (max |ρ−ρ†| = {herm:e})")));
        }
        let tr = rho.trace();
        if (tr - 1.0).abs() > TRACE_TOL {
            return Err(Error::InvalidState(format!("trace is {tr}")));
        }
        Ok(rho)
    }

    /// Checks only the dimension; used for intermediate, unnormalized states.
    pub fn from_matrix_unchecked(layout: &SpaceLayout, matrix: DMatrix<Complex64>) -> Result<Self> {
        let d = layout.dim();
        if matrix.nrows() != d || matrix.ncols() != d {
            return Err(Error::LayoutMismatch(format!(
                "matrix is {}x{}, layout dimension is {d}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(Self { layout: layout.clone(), matrix })
    }

    /// `|ψ⟩⟨ψ|` for a normalized state vector.
    pub fn pure(layout: &SpaceLayout, psi: &DVector<Complex64>) -> Result<Self> {
        let norm = psi.norm();
        if norm == 0.0 {
            return Err(Error::InvalidState("zero state vector".into()));
        }
        let psi = psi / Complex64::new(norm, 0.0);
        Self::from_matrix(layout, &psi * psi.adjoint())
    }

    /// Pure product state with the given occupations in tensor order.
    pub fn fock(layout: &SpaceLayout, occupations: &[usize]) -> Result<Self> {
        let dims = layout.factor_dims();
        if occupations.len() != dims.len() || occupations.iter().zip(&dims).any(|(n, d)| n >= d) {
            return Err(Error::LayoutMismatch(format!(
                "occupations {occupations:?} do not fit factor dimensions {dims:?}"
            )));
        }
        let d = layout.dim();
        let mut m = DMatrix::zeros(d, d);
        let i = layout.basis_index(occupations);
        m[(i, i)] = ONE;
        Ok(Self { layout: layout.clone(), matrix: m })
    }

    pub fn layout(&self) -> &SpaceLayout {
        &self.layout
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn hermiticity_error(&self) -> f64 {
        max_abs(&(&self.matrix - self.matrix.adjoint()))
    }

    /// Smallest eigenvalue of the Hermitian part.
    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.matrix + self.matrix.adjoint()) * Complex64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// `⟨ψ|ρ|ψ⟩` for a normalized `ψ`.
    pub fn fidelity_with_pure(&self, psi: &DVector<Complex64>) -> Result<f64> {
        if psi.len() != self.layout.dim() {
            return Err(Error::LayoutMismatch("state vector dimension differs".into()));
        }
        Ok((psi.adjoint() * &self.matrix * psi)[(0, 0)].re / psi.norm_squared())
    }

    /// Partial trace over the cavity factor.
    pub fn trace_out_cavity(&self) -> Result<DensityMatrix> {
        let Some(cav) = self.layout.cavity_cutoff() else {
            return Err(Error::LayoutMismatch("layout has no cavity mode".into()));
        };
        let mech = self.layout.mechanical_part();
        let dm = mech.dim();
        let mut out = DMatrix::zeros(dm, dm);
        for l in 0..=cav {
            let block = self.matrix.view((l * dm, l * dm), (dm, dm));
            out += block;
        }
        Ok(DensityMatrix { layout: mech, matrix: out })
    }

    /// Product with the cavity vacuum, `|0⟩⟨0| ⊗ ρ`.
    pub fn with_cavity_vacuum(&self, cavity_cutoff: usize) -> Result<DensityMatrix> {
        if self.layout.has_cavity() {
            return Err(Error::LayoutMismatch("state already has a cavity mode".into()));
        }
        let layout = SpaceLayout::new(cavity_cutoff, self.layout.mech.clone())?;
        let mut vac = DMatrix::zeros(cavity_cutoff + 1, cavity_cutoff + 1);
        vac[(0, 0)] = ONE;
        Ok(DensityMatrix { layout, matrix: vac.kronecker(&self.matrix) })
    }

    /// `(ρ + ρ†)/2` in place.
    pub fn symmetrize(&mut self) {
        symmetrize_in_place(&mut self.matrix);
    }

    pub fn expectation(&self, op: &OperatorMatrix) -> Result<Complex64> {
        expectation(self, op)
    }
}

pub(crate) fn symmetrize_in_place(m: &mut DMatrix<Complex64>) {
    let d = m.nrows();
    for i in 0..d {
        m[(i, i)].im = 0.0;
        for j in (i + 1)..d {
            let avg = (m[(i, j)] + m[(j, i)].conj()) * 0.5;
            m[(i, j)] = avg;
            m[(j, i)] = avg.conj();
        }
    }
}

/// Cavity vacuum times per-mode thermal states, each renormalized on its
/// cutoff. Before truncation mode `j` has ground population `1/(1+n̄_j)`.
pub fn thermal_product_state(layout: &SpaceLayout, occupations: &[f64]) -> Result<DensityMatrix> {
    if occupations.len() != layout.num_mechanical() {
        return Err(Error::LayoutMismatch(format!(
            "{} occupations for {} mechanical modes",
            occupations.len(),
            layout.num_mechanical()
        )));
    }
    let mut factors: Vec<Vec<f64>> = Vec::new();
    if let Some(c) = layout.cavity_cutoff() {
        let mut vac = vec![0.0; c + 1];
        vac[0] = 1.0;
        factors.push(vac);
    }
    for (&nbar, &cutoff) in occupations.iter().zip(layout.mech_cutoffs()) {
        if !(nbar >= 0.0) || !nbar.is_finite() {
            return Err(Error::Domain(format!("thermal occupation must be ≥ 0, got {nbar}")));
        }
        let ratio = nbar / (1.0 + nbar);
        let weights: Vec<f64> = (0..=cutoff).map(|n| ratio.powi(n as i32)).collect();
        let z: f64 = weights.iter().sum();
        factors.push(weights.into_iter().map(|w| w / z).collect());
    }
    let d = layout.dim();
    let mut m = DMatrix::zeros(d, d);
    for i in 0..d {
        let occ = layout.occupations(i);
        let p: f64 = occ.iter().zip(&factors).map(|(&n, f)| f[n]).product();
        m[(i, i)] = Complex64::new(p, 0.0);
    }
    Ok(DensityMatrix { layout: layout.clone(), matrix: m })
}

/// Thermal occupation with ground population `p0`: `n̄ = (1 − p0)/p0`.
pub fn occupation_from_ground_population(p0: f64) -> f64 {
    (1.0 - p0) / p0
}

/// `tr(ρ O)`.
pub fn expectation(rho: &DensityMatrix, op: &OperatorMatrix) -> Result<Complex64> {
    if rho.layout != op.layout {
        return Err(Error::LayoutMismatch("state and operator layouts differ".into()));
    }
    Ok(trace_product(&rho.matrix, &op.matrix))
}

/// `tr(A B)` without forming the product.
pub(crate) fn trace_product(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Complex64 {
    let d = a.nrows();
    let mut acc = ZERO;
    for i in 0..d {
        for k in 0..d {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}
