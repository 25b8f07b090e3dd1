//! Truncated bosonic Fock space over a finite set of momentum modes.
//!
//! A state of the basis is an occupation vector `n = (n_1, …, n_M)` with
//! total boson number `|n| = Σ n_i ≤ N_max`. States are ordered by total
//! boson number and, inside each graded block, lexicographically descending,
//! so that the one-boson block lists `a†_1|0⟩, a†_2|0⟩, …` in mode order.
//!
//! One-boson vectors carry the quadrature weight of their cell:
//! the coefficient of mode `i` is `f(k_i)·√w_i`, which turns every continuum
//! inner product into a plain sum. With that convention
//!
//! ```text
//! a(f) = Σ_i conj(f_i) a_i,     a_i |n⟩ = √n_i |n − e_i⟩,
//! ```
//!
//! and `a†(f)` is its adjoint with components above `N_max` dropped.

use std::collections::HashMap;
use std::ops::Range;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::model::ModeGrid;

/// Default cap on the number of basis states.
pub const DEFAULT_BASIS_CAP: usize = 200_000;

/// Relative tolerance of the hermiticity flag.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// `binomial(n, k)` in 128-bit arithmetic, `None` on overflow.
pub fn binomial(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for j in 0..k {
        acc = acc.checked_mul((n - j) as u128)? / (j as u128 + 1);
    }
    Some(acc)
}

#[derive(Debug, Clone, Copy)]
struct Ladder {
    lower: u32,
    upper: u32,
    mode: u32,
    amp: f64,
}

/// Occupation-number basis of the truncated Fock space.
#[derive(Debug)]
pub struct FockBasis {
    num_modes: usize,
    max_bosons: usize,
    occ: Vec<u16>,
    totals: Vec<u16>,
    block_start: Vec<usize>,
    index: HashMap<Box<[u16]>, usize>,
    // a_mode |upper⟩ = amp |lower⟩
    ladder: Vec<Ladder>,
}

/// Enumerates the basis with the default size cap.
pub fn enumerate_basis(num_modes: usize, max_bosons: usize) -> Result<Arc<FockBasis>> {
    enumerate_basis_capped(num_modes, max_bosons, DEFAULT_BASIS_CAP)
}

/// Enumerates all occupation vectors with total at most `max_bosons`.
pub fn enumerate_basis_capped(
    num_modes: usize,
    max_bosons: usize,
    cap: usize,
) -> Result<Arc<FockBasis>> {
    if num_modes == 0 {
        return Err(invalid("num_modes must be at least 1"));
    }
    if max_bosons > u16::MAX as usize {
        return Err(invalid("max_bosons does not fit the occupation type"));
    }
    let size = binomial((num_modes + max_bosons) as u64, num_modes as u64).unwrap_or(u128::MAX);
    if size > cap as u128 {
        return Err(Error::BasisTooLarge { size, cap });
    }
    let size = size as usize;
    let m = num_modes;
    let mut occ = Vec::with_capacity(size * m);
    let mut totals = Vec::with_capacity(size);
    let mut block_start = Vec::with_capacity(max_bosons + 2);
    let mut scratch = vec![0u16; m];
    for n in 0..=max_bosons {
        block_start.push(totals.len());
        compositions(n as u16, 0, &mut scratch, &mut occ, &mut totals);
    }
    block_start.push(totals.len());
    debug_assert_eq!(totals.len(), size);

    let mut index = HashMap::with_capacity(size);
    for s in 0..size {
        index.insert(occ[s * m..(s + 1) * m].to_vec().into_boxed_slice(), s);
    }
    let mut ladder = Vec::new();
    for s in 0..size {
        scratch.copy_from_slice(&occ[s * m..(s + 1) * m]);
        for i in 0..m {
            let ni = scratch[i];
            if ni == 0 {
                continue;
            }
            scratch[i] -= 1;
            let lower = index[&scratch[..]];
            scratch[i] += 1;
            ladder.push(Ladder {
                lower: lower as u32,
                upper: s as u32,
                mode: i as u32,
                amp: (ni as f64).sqrt(),
            });
        }
    }
    Ok(Arc::new(FockBasis {
        num_modes,
        max_bosons,
        occ,
        totals,
        block_start,
        index,
        ladder,
    }))
}

fn compositions(remaining: u16, i: usize, cur: &mut [u16], occ: &mut Vec<u16>, totals: &mut Vec<u16>) {
    let m = cur.len();
    if i + 1 == m {
        cur[i] = remaining;
        occ.extend_from_slice(cur);
        totals.push(cur.iter().sum());
        return;
    }
    for v in (0..=remaining).rev() {
        cur[i] = v;
        compositions(remaining - v, i + 1, cur, occ, totals);
    }
}

impl FockBasis {
    pub fn len(&self) -> usize {
        self.totals.len()
    }

    /// Always false: the vacuum is part of every basis.
    pub fn is_empty(&self) -> bool {
        self.totals.is_empty()
    }

    pub fn num_modes(&self) -> usize {
        self.num_modes
    }

    pub fn max_bosons(&self) -> usize {
        self.max_bosons
    }

    /// Occupation vector of state `s`.
    pub fn state(&self, s: usize) -> &[u16] {
        &self.occ[s * self.num_modes..(s + 1) * self.num_modes]
    }

    /// Total boson number of state `s`.
    pub fn total(&self, s: usize) -> usize {
        self.totals[s] as usize
    }

    pub fn index_of(&self, occupation: &[u16]) -> Option<usize> {
        self.index.get(occupation).copied()
    }

    /// Index range of the graded block with exactly `n` bosons.
    pub fn block(&self, n: usize) -> Range<usize> {
        self.block_start[n]..self.block_start[n + 1]
    }

    pub fn states(&self) -> impl Iterator<Item = &[u16]> {
        self.occ.chunks_exact(self.num_modes)
    }

    fn same_shape(&self, other: &FockBasis) -> bool {
        self.num_modes == other.num_modes && self.max_bosons == other.max_bosons
    }

    /// Applies `a(f)` to raw coefficients.
    pub(crate) fn lower_into(&self, f: &[Complex64], psi: &[Complex64], out: &mut [Complex64]) {
        for l in &self.ladder {
            out[l.lower as usize] += f[l.mode as usize].conj() * l.amp * psi[l.upper as usize];
        }
    }

    /// Applies `a†(f)` to raw coefficients.
    pub(crate) fn raise_into(&self, f: &[Complex64], psi: &[Complex64], out: &mut [Complex64]) {
        for l in &self.ladder {
            out[l.upper as usize] += f[l.mode as usize] * l.amp * psi[l.lower as usize];
        }
    }

    /// Total momentum `K_n = Σ_i n_i k_i` of every state.
    pub fn total_momenta(&self, grid: &ModeGrid) -> Result<Vec<[f64; 3]>> {
        if grid.len() != self.num_modes {
            return Err(shape("grid and basis mode counts differ"));
        }
        Ok(self
            .states()
            .map(|n| {
                let mut k = [0.0; 3];
                for (i, &ni) in n.iter().enumerate() {
                    if ni > 0 {
                        let ki = grid.momentum(i);
                        for a in 0..3 {
                            k[a] += ni as f64 * ki[a];
                        }
                    }
                }
                k
            })
            .collect())
    }
}

fn check_same(a: &FockBasis, b: &FockBasis) -> Result<()> {
    if a.same_shape(b) {
        Ok(())
    } else {
        Err(shape("operands live on different bases"))
    }
}

/// Element of the discretized one-boson space, coefficients `f(k_i)·√w_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneBosonVector(Vec<Complex64>);

impl OneBosonVector {
    pub fn new(coeffs: Vec<Complex64>) -> Self {
        Self(coeffs)
    }

    pub fn from_real(coeffs: &[f64]) -> Self {
        Self(coeffs.iter().map(|&x| Complex64::new(x, 0.0)).collect())
    }

    pub fn zeros(m: usize) -> Self {
        Self(vec![Complex64::new(0.0, 0.0); m])
    }

    /// Unit vector at mode `i`.
    pub fn unit(m: usize, i: usize) -> Self {
        let mut v = Self::zeros(m);
        v.0[i] = Complex64::new(1.0, 0.0);
        v
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<Complex64> {
        self.0
    }

    /// `⟨self, other⟩`, antilinear in `self`.
    pub fn inner(&self, other: &Self) -> Complex64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|c| c.norm_sqr()).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Graph norm `‖f‖_ω = (‖f‖² + ‖ω^{-1/2} f‖²)^{1/2}`; infinite if `f`
    /// charges a mode with `ω_i ≤ 0`.
    pub fn omega_norm(&self, omega: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (c, &w) in self.0.iter().zip(omega) {
            let c2 = c.norm_sqr();
            if c2 == 0.0 {
                continue;
            }
            if w <= 0.0 {
                return f64::INFINITY;
            }
            acc += c2 * (1.0 + 1.0 / w);
        }
        acc.sqrt()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self(self.0.iter().map(|x| x * c).collect())
    }

    /// Mode-wise multiplication by a real symbol.
    pub fn mul_modes(&self, m: &[f64]) -> Self {
        Self(self.0.iter().zip(m).map(|(x, &y)| x * y).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        Self(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn conj(&self) -> Self {
        Self(self.0.iter().map(|x| x.conj()).collect())
    }

    pub fn is_real(&self) -> bool {
        self.0.iter().all(|c| c.im == 0.0)
    }
}

/// Coefficient vector over a [`FockBasis`].
#[derive(Debug, Clone)]
pub struct FockVector {
    basis: Arc<FockBasis>,
    coeffs: DVector<Complex64>,
}

impl FockVector {
    pub fn new(basis: Arc<FockBasis>, coeffs: DVector<Complex64>) -> Result<Self> {
        if coeffs.len() != basis.len() {
            return Err(shape(format!(
                "{} coefficients for a basis of {} states",
                coeffs.len(),
                basis.len()
            )));
        }
        Ok(Self { basis, coeffs })
    }

    pub fn zeros(basis: Arc<FockBasis>) -> Self {
        let n = basis.len();
        Self { basis, coeffs: DVector::zeros(n) }
    }

    /// Fock vacuum `Ω_F`.
    pub fn vacuum(basis: Arc<FockBasis>) -> Self {
        Self::basis_state(basis, 0)
    }

    pub fn basis_state(basis: Arc<FockBasis>, s: usize) -> Self {
        let mut v = Self::zeros(basis);
        v.coeffs[s] = Complex64::new(1.0, 0.0);
        v
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn coeffs(&self) -> &DVector<Complex64> {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut DVector<Complex64> {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> DVector<Complex64> {
        self.coeffs
    }

    pub fn inner(&self, other: &FockVector) -> Result<Complex64> {
        check_same(&self.basis, &other.basis)?;
        Ok(self.coeffs.dotc(&other.coeffs))
    }

    pub fn norm(&self) -> f64 {
        self.coeffs.norm()
    }
}

/// Storage of a [`FockOperator`].
#[derive(Debug, Clone)]
pub enum Storage {
    Dense(DMatrix<Complex64>),
    Diagonal(DVector<Complex64>),
}

/// Linear operator on the truncated Fock space.
#[derive(Debug, Clone)]
pub struct FockOperator {
    basis: Arc<FockBasis>,
    storage: Storage,
    hermitian: bool,
}

fn max_abs(it: impl Iterator<Item = Complex64>) -> f64 {
    it.fold(0.0, |m, c| m.max(c.norm()))
}

/// Hermiticity test at relative tolerance [`HERMITIAN_TOL`].
pub fn is_hermitian_matrix(m: &DMatrix<Complex64>) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = max_abs(m.iter().copied());
    let n = m.nrows();
    let mut dev: f64 = 0.0;
    for j in 0..n {
        for i in 0..=j {
            dev = dev.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    dev <= HERMITIAN_TOL * scale
}

impl FockOperator {
    pub fn from_dense(basis: Arc<FockBasis>, m: DMatrix<Complex64>) -> Result<Self> {
        let n = basis.len();
        if m.nrows() != n || m.ncols() != n {
            return Err(shape(format!(
                "{}x{} matrix for a basis of {} states",
                m.nrows(),
                m.ncols(),
                n
            )));
        }
        let hermitian = is_hermitian_matrix(&m);
        Ok(Self { basis, storage: Storage::Dense(m), hermitian })
    }

    pub fn from_diagonal(basis: Arc<FockBasis>, d: DVector<Complex64>) -> Result<Self> {
        if d.len() != basis.len() {
            return Err(shape("diagonal length differs from basis size"));
        }
        let scale = max_abs(d.iter().copied());
        let hermitian = d.iter().all(|c| c.im.abs() <= HERMITIAN_TOL * scale);
        Ok(Self { basis, storage: Storage::Diagonal(d), hermitian })
    }

    pub fn from_real_diagonal(basis: Arc<FockBasis>, d: &[f64]) -> Result<Self> {
        Self::from_diagonal(basis, DVector::from_iterator(d.len(), d.iter().map(|&x| Complex64::new(x, 0.0))))
    }

    pub fn identity(basis: Arc<FockBasis>) -> Self {
        let n = basis.len();
        Self {
            basis,
            storage: Storage::Diagonal(DVector::from_element(n, Complex64::new(1.0, 0.0))),
            hermitian: true,
        }
    }

    pub fn zero(basis: Arc<FockBasis>) -> Self {
        let n = basis.len();
        Self { basis, storage: Storage::Diagonal(DVector::zeros(n)), hermitian: true }
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn storage(&self) -> &Storage {
        &self.storage
    }

    pub fn is_hermitian(&self) -> bool {
        self.hermitian
    }

    pub fn is_diagonal(&self) -> bool {
        matches!(self.storage, Storage::Diagonal(_))
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    /// Dense matrix, materialized if the storage is diagonal.
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        match &self.storage {
            Storage::Dense(m) => m.clone(),
            Storage::Diagonal(d) => DMatrix::from_diagonal(d),
        }
    }

    pub fn into_dense(self) -> DMatrix<Complex64> {
        match self.storage {
            Storage::Dense(m) => m,
            Storage::Diagonal(d) => DMatrix::from_diagonal(&d),
        }
    }

    /// Diagonal entries (the diagonal of the dense matrix if dense).
    pub fn diagonal(&self) -> DVector<Complex64> {
        match &self.storage {
            Storage::Dense(m) => m.diagonal(),
            Storage::Diagonal(d) => d.clone(),
        }
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        match &self.storage {
            Storage::Dense(m) => m[(i, j)],
            Storage::Diagonal(d) => {
                if i == j {
                    d[i]
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }
        }
    }

    pub fn max_abs_entry(&self) -> f64 {
        match &self.storage {
            Storage::Dense(m) => max_abs(m.iter().copied()),
            Storage::Diagonal(d) => max_abs(d.iter().copied()),
        }
    }

    pub fn apply(&self, psi: &FockVector) -> Result<FockVector> {
        check_same(&self.basis, &psi.basis)?;
        let coeffs = match &self.storage {
            Storage::Dense(m) => m * &psi.coeffs,
            Storage::Diagonal(d) => d.component_mul(&psi.coeffs),
        };
        Ok(FockVector { basis: psi.basis.clone(), coeffs })
    }

    /// Operator product `self · rhs`.
    pub fn compose(&self, rhs: &FockOperator) -> Result<FockOperator> {
        check_same(&self.basis, &rhs.basis)?;
        let basis = self.basis.clone();
        match (&self.storage, &rhs.storage) {
            (Storage::Diagonal(a), Storage::Diagonal(b)) => Self::from_diagonal(basis, a.component_mul(b)),
            (Storage::Diagonal(a), Storage::Dense(b)) => {
                let mut m = b.clone();
                for (i, mut row) in m.row_iter_mut().enumerate() {
                    row *= a[i];
                }
                Self::from_dense(basis, m)
            }
            (Storage::Dense(a), Storage::Diagonal(b)) => {
                let mut m = a.clone();
                for (j, mut col) in m.column_iter_mut().enumerate() {
                    col *= b[j];
                }
                Self::from_dense(basis, m)
            }
            (Storage::Dense(a), Storage::Dense(b)) => Self::from_dense(basis, a * b),
        }
    }

    pub fn adjoint(&self) -> FockOperator {
        let storage = match &self.storage {
            Storage::Dense(m) => Storage::Dense(m.adjoint()),
            Storage::Diagonal(d) => Storage::Diagonal(d.map(|c| c.conj())),
        };
        Self { basis: self.basis.clone(), storage, hermitian: self.hermitian }
    }

    pub fn scale(&self, c: Complex64) -> FockOperator {
        let storage = match &self.storage {
            Storage::Dense(m) => Storage::Dense(m * c),
            Storage::Diagonal(d) => Storage::Diagonal(d * c),
        };
        let hermitian = self.hermitian && c.im == 0.0;
        Self { basis: self.basis.clone(), storage, hermitian }
    }

    pub fn add(&self, rhs: &FockOperator) -> Result<FockOperator> {
        check_same(&self.basis, &rhs.basis)?;
        match (&self.storage, &rhs.storage) {
            (Storage::Diagonal(a), Storage::Diagonal(b)) => Self::from_diagonal(self.basis.clone(), a + b),
            _ => Self::from_dense(self.basis.clone(), self.to_dense() + rhs.to_dense()),
        }
    }

    /// Largest entry modulus of `self − rhs`.
    pub fn max_entry_distance(&self, rhs: &FockOperator) -> Result<f64> {
        check_same(&self.basis, &rhs.basis)?;
        let d = self.to_dense() - rhs.to_dense();
        Ok(max_abs(d.iter().copied()))
    }
}

fn check_one_boson(basis: &FockBasis, f: &OneBosonVector) -> Result<()> {
    if f.len() != basis.num_modes() {
        return Err(shape(format!(
            "one-boson vector of length {} on {} modes",
            f.len(),
            basis.num_modes()
        )));
    }
    Ok(())
}

/// `a(f) ψ`.
pub fn annihilate(f: &OneBosonVector, psi: &FockVector) -> Result<FockVector> {
    check_one_boson(&psi.basis, f)?;
    let mut out = FockVector::zeros(psi.basis.clone());
    psi.basis.lower_into(f.as_slice(), psi.coeffs.as_slice(), out.coeffs.as_mut_slice());
    Ok(out)
}

/// `a†(f) ψ`, truncated at `N_max`.
pub fn create(f: &OneBosonVector, psi: &FockVector) -> Result<FockVector> {
    check_one_boson(&psi.basis, f)?;
    let mut out = FockVector::zeros(psi.basis.clone());
    psi.basis.raise_into(f.as_slice(), psi.coeffs.as_slice(), out.coeffs.as_mut_slice());
    Ok(out)
}

/// Dense matrix of `a(f)`.
pub fn annihilation_operator(basis: &Arc<FockBasis>, f: &OneBosonVector) -> Result<FockOperator> {
    check_one_boson(basis, f)?;
    let n = basis.len();
    let mut m = DMatrix::zeros(n, n);
    for l in &basis.ladder {
        m[(l.lower as usize, l.upper as usize)] += f.as_slice()[l.mode as usize].conj() * l.amp;
    }
    FockOperator::from_dense(basis.clone(), m)
}

/// Dense matrix of `a†(f)`.
pub fn creation_operator(basis: &Arc<FockBasis>, f: &OneBosonVector) -> Result<FockOperator> {
    check_one_boson(basis, f)?;
    let n = basis.len();
    let mut m = DMatrix::zeros(n, n);
    for l in &basis.ladder {
        m[(l.upper as usize, l.lower as usize)] += f.as_slice()[l.mode as usize] * l.amp;
    }
    FockOperator::from_dense(basis.clone(), m)
}

/// Second quantization `dΓ(m)`: diagonal with entry `Σ_i n_i m_i`.
pub fn second_quantize<T: Copy + Into<Complex64>>(basis: &Arc<FockBasis>, m: &[T]) -> Result<FockOperator> {
    if m.len() != basis.num_modes() {
        return Err(shape("symbol length differs from mode count"));
    }
    let d = DVector::from_iterator(
        basis.len(),
        basis.states().map(|n| {
            n.iter()
                .zip(m)
                .filter(|(&ni, _)| ni > 0)
                .map(|(&ni, &mi)| mi.into() * ni as f64)
                .sum::<Complex64>()
        }),
    );
    FockOperator::from_diagonal(basis.clone(), d)
}

/// Real diagonal of `dΓ(m)` for a real symbol.
pub(crate) fn second_quantize_real(basis: &FockBasis, m: &[f64]) -> Vec<f64> {
    basis
        .states()
        .map(|n| n.iter().zip(m).map(|(&ni, &mi)| ni as f64 * mi).sum())
        .collect()
}

/// Field operator `φ(f) = a(f) + a†(f)`.
pub fn field_op(basis: &Arc<FockBasis>, f: &OneBosonVector) -> Result<FockOperator> {
    check_one_boson(basis, f)?;
    let n = basis.len();
    let mut m = DMatrix::zeros(n, n);
    for l in &basis.ladder {
        let c = f.as_slice()[l.mode as usize] * l.amp;
        m[(l.upper as usize, l.lower as usize)] += c;
        m[(l.lower as usize, l.upper as usize)] += c.conj();
    }
    FockOperator::from_dense(basis.clone(), m)
}

/// Truncated `e^{a†(f)} = Σ_{n ≤ N_max} a†(f)^n / n!` as a dense matrix.
pub fn creation_exponential(basis: &FockBasis, f: &[Complex64]) -> DMatrix<Complex64> {
    let n = basis.len();
    let mut acc = DMatrix::<Complex64>::identity(n, n);
    let mut term = DMatrix::<Complex64>::identity(n, n);
    for k in 1..=basis.max_bosons() {
        let mut next = DMatrix::<Complex64>::zeros(n, n);
        let inv = 1.0 / k as f64;
        // a† only reaches states of total ≥ k from the previous term's support
        for l in &basis.ladder {
            let c = f[l.mode as usize] * (l.amp * inv);
            if c == Complex64::new(0.0, 0.0) {
                continue;
            }
            let (up, lo) = (l.upper as usize, l.lower as usize);
            for col in 0..n {
                let x = term[(lo, col)];
                if x != Complex64::new(0.0, 0.0) {
                    next[(up, col)] += c * x;
                }
            }
        }
        acc += &next;
        term = next;
    }
    acc
}

/// `F_t^ω(f) = Σ_n a†(f)^n/n! · e^{−t dΓ(ω)}` on the truncated basis.
pub fn f_operator(basis: &Arc<FockBasis>, t: f64, f: &OneBosonVector, omega: &[f64]) -> Result<FockOperator> {
    check_omega(basis, t, f, omega)?;
    let heat = heat_diagonal(basis, t, omega);
    let mut m = creation_exponential(basis, f.as_slice());
    for (j, mut col) in m.column_iter_mut().enumerate() {
        col *= Complex64::new(heat[j], 0.0);
    }
    FockOperator::from_dense(basis.clone(), m)
}

fn check_omega(basis: &FockBasis, t: f64, f: &OneBosonVector, omega: &[f64]) -> Result<()> {
    if !(t > 0.0) {
        return Err(invalid(format!("F_t requires t > 0, got {t}")));
    }
    check_one_boson(basis, f)?;
    if omega.len() != basis.num_modes() {
        return Err(shape("omega length differs from mode count"));
    }
    if omega.iter().any(|&w| !(w > 0.0)) {
        return Err(invalid("omega must be positive on every mode"));
    }
    Ok(())
}

/// Diagonal of `e^{−t dΓ(ω)}`.
pub fn heat_diagonal(basis: &FockBasis, t: f64, omega: &[f64]) -> Vec<f64> {
    second_quantize_real(basis, omega).into_iter().map(|e| (-t * e).exp()).collect()
}

/// `F_t^ω(f) ψ`.
pub fn apply_f(t: f64, f: &OneBosonVector, omega: &[f64], psi: &FockVector) -> Result<FockVector> {
    let basis = &psi.basis;
    check_omega(basis, t, f, omega)?;
    let heat = heat_diagonal(basis, t, omega);
    let mut term: Vec<Complex64> = psi.coeffs.iter().zip(&heat).map(|(c, h)| c * *h).collect();
    let mut acc = term.clone();
    for k in 1..=basis.max_bosons() {
        let mut next = vec![Complex64::new(0.0, 0.0); basis.len()];
        basis.raise_into(f.as_slice(), &term, &mut next);
        let inv = 1.0 / k as f64;
        for (a, x) in acc.iter_mut().zip(next.iter_mut()) {
            *x *= inv;
            *a += *x;
        }
        term = next;
    }
    FockVector::new(basis.clone(), DVector::from_vec(acc))
}

/// Exponential vector `ε(h)` truncated at `N_max`.
///
/// The coefficient of `|n⟩` is `∏_i h_i^{n_i} / √(n_i!)`, so that
/// `⟨ε(h₁), ε(h₂)⟩ = Σ_{n ≤ N_max} ⟨h₁, h₂⟩^n / n!`.
pub fn exponential_vector(basis: &Arc<FockBasis>, h: &OneBosonVector) -> Result<FockVector> {
    check_one_boson(basis, h)?;
    let coeffs = DVector::from_iterator(
        basis.len(),
        basis.states().map(|n| {
            let mut c = Complex64::new(1.0, 0.0);
            for (&ni, hi) in n.iter().zip(h.as_slice()) {
                for j in 1..=ni {
                    c *= hi / (j as f64).sqrt();
                }
            }
            c
        }),
    );
    FockVector::new(basis.clone(), coeffs)
}

/// Diagonal unitary `e^{i(P − dΓ(p̂))·x}`.
pub fn phase_translate(basis: &Arc<FockBasis>, grid: &ModeGrid, p: &[f64], x: &[f64]) -> Result<FockOperator> {
    let d = grid.dim();
    if p.len() != d || x.len() != d {
        return Err(shape(format!("P and x must have dimension {d}")));
    }
    let k = basis.total_momenta(grid)?;
    let diag = DVector::from_iterator(
        basis.len(),
        k.iter().map(|kn| {
            let arg: f64 = (0..d).map(|a| (p[a] - kn[a]) * x[a]).sum();
            Complex64::from_polar(1.0, arg)
        }),
    );
    FockOperator::from_diagonal(basis.clone(), diag)
}

/// Indicator over modes of a subset `θ`.
pub fn mode_mask(num_modes: usize, theta: &[usize]) -> Result<Vec<bool>> {
    let mut mask = vec![false; num_modes];
    for &i in theta {
        if i >= num_modes {
            return Err(invalid(format!("mode {i} out of range 0..{num_modes}")));
        }
        mask[i] = true;
    }
    Ok(mask)
}

/// Whether every occupied mode of state `s` lies in the mask.
pub fn supported_in(basis: &FockBasis, s: usize, mask: &[bool]) -> bool {
    basis.state(s).iter().zip(mask).all(|(&n, &inside)| n == 0 || inside)
}

/// Diagonal projection `Q_θ` onto states with all bosons in `θ`.
pub fn restriction_operator(basis: &Arc<FockBasis>, theta: &[usize]) -> Result<FockOperator> {
    let mask = mode_mask(basis.num_modes(), theta)?;
    let d: Vec<f64> = (0..basis.len())
        .map(|s| if supported_in(basis, s, &mask) { 1.0 } else { 0.0 })
        .collect();
    FockOperator::from_real_diagonal(basis.clone(), &d)
}

/// `Q_θ ψ`.
pub fn restrict_q(theta: &[usize], psi: &FockVector) -> Result<FockVector> {
    let mask = mode_mask(psi.basis.num_modes(), theta)?;
    let mut out = psi.clone();
    for s in 0..psi.basis.len() {
        if !supported_in(&psi.basis, s, &mask) {
            out.coeffs[s] = Complex64::new(0.0, 0.0);
        }
    }
    Ok(out)
}

/// Position of a vector relative to the discrete Fröhlich cone.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConeClass {
    StrictlyPositive,
    NonNegative,
    Outside,
}

/// Classifies `ψ` against the cone of non-negative coefficient vectors.
pub fn cone_check(psi: &FockVector, tol: f64) -> ConeClass {
    classify_coeffs(psi.coeffs.iter().copied(), tol)
}

pub(crate) fn classify_coeffs(coeffs: impl Iterator<Item = Complex64>, tol: f64) -> ConeClass {
    let mut strict = true;
    for c in coeffs {
        if c.im.abs() > tol || c.re < -tol {
            return ConeClass::Outside;
        }
        if !(c.re > tol) {
            strict = false;
        }
    }
    if strict {
        ConeClass::StrictlyPositive
    } else {
        ConeClass::NonNegative
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn basis_sizes() {
        let b = enumerate_basis(1, 2).unwrap();
        assert_eq!(b.len(), 3);
        assert_eq!(b.states().collect::<Vec<_>>(), vec![&[0u16][..], &[1], &[2]]);
        assert_eq!(enumerate_basis(2, 2).unwrap().len(), 6);
        let b = enumerate_basis(3, 4).unwrap();
        let mut brute = 0;
        for a in 0..=4 {
            for bb in 0..=4 {
                for cc in 0..=4 {
                    if a + bb + cc <= 4 {
                        brute += 1;
                        assert!(b.index_of(&[a, bb, cc]).is_some());
                    }
                }
            }
        }
        assert_eq!(b.len(), brute);
        assert_eq!(brute, 35);
    }

    #[test]
    fn basis_order_is_graded_lex() {
        let b = enumerate_basis(3, 2).unwrap();
        let states: Vec<Vec<u16>> = b.states().map(|s| s.to_vec()).collect();
        assert_eq!(states[0], vec![0, 0, 0]);
        assert_eq!(&states[1..4], &[vec![1, 0, 0], vec![0, 1, 0], vec![0, 0, 1]]);
        assert_eq!(states[4], vec![2, 0, 0]);
        for w in states.windows(2) {
            let (t0, t1): (u16, u16) = (w[0].iter().sum(), w[1].iter().sum());
            assert!(t0 < t1 || (t0 == t1 && w[0] > w[1]));
        }
        for (s, n) in states.iter().enumerate() {
            assert_eq!(b.index_of(n), Some(s));
        }
        assert_eq!(b.block(1), 1..4);
    }

    #[test]
    fn basis_cap() {
        assert!(matches!(
            enumerate_basis_capped(10, 10, 1000),
            Err(Error::BasisTooLarge { size: 184756, cap: 1000 })
        ));
        assert!(enumerate_basis(0, 1).is_err());
        assert!(enumerate_basis(10_000, 50).is_err());
    }

    #[test]
    fn ladder_rules() {
        let b = enumerate_basis(1, 3).unwrap();
        let vac = FockVector::vacuum(b.clone());
        let e1 = OneBosonVector::unit(1, 0);
        assert_eq!(annihilate(&e1, &vac).unwrap().norm(), 0.0);
        let two = FockVector::basis_state(b.clone(), 2);
        let low = annihilate(&e1, &two).unwrap();
        assert!((low.coeffs()[1] - c(2f64.sqrt())).norm() < 1e-15);
        assert_eq!(low.norm(), 2f64.sqrt());
        let up = create(&e1, &vac).unwrap();
        assert_eq!(up.coeffs()[1], c(1.0));
        let top = FockVector::basis_state(b.clone(), 3);
        assert_eq!(create(&e1, &top).unwrap().norm(), 0.0);
    }

    #[test]
    fn creation_is_adjoint_of_annihilation() {
        let b = enumerate_basis(2, 3).unwrap();
        let f = OneBosonVector::new(vec![Complex64::new(0.3, -0.7), Complex64::new(-1.1, 0.2)]);
        let a = annihilation_operator(&b, &f).unwrap().into_dense();
        let ad = creation_operator(&b, &f).unwrap().into_dense();
        assert!((a.adjoint() - ad).norm() <= 1e-12);
    }

    #[test]
    fn number_operator_and_dgamma() {
        let b = enumerate_basis(3, 3).unwrap();
        let n = second_quantize(&b, &[1.0, 1.0, 1.0]).unwrap();
        let s = b.index_of(&[1, 2, 0]).unwrap();
        assert_eq!(n.entry(s, s), c(3.0));
        let z = second_quantize(&b, &[0.0; 3]).unwrap();
        assert_eq!(z.max_abs_entry(), 0.0);
        let omega = [1.7, 0.4, 2.5];
        let d = second_quantize(&b, &omega).unwrap();
        let min1 = b.block(1).map(|s| d.entry(s, s).re).fold(f64::INFINITY, f64::min);
        assert_eq!(min1, 0.4);
    }

    #[test]
    fn field_operator_vacuum_expectation() {
        let b = enumerate_basis(2, 2).unwrap();
        let f = OneBosonVector::from_real(&[0.6, -1.3]);
        let phi = field_op(&b, &f).unwrap();
        assert!(phi.is_hermitian());
        let sq = phi.compose(&phi).unwrap();
        assert!((sq.entry(0, 0).re - f.norm_sq()).abs() < 1e-14);
        assert_eq!(field_op(&b, &OneBosonVector::zeros(2)).unwrap().max_abs_entry(), 0.0);
    }

    #[test]
    fn f_operator_with_zero_f_is_heat() {
        let b = enumerate_basis(2, 3).unwrap();
        let omega = [0.8, 1.9];
        let psi = FockVector::new(b.clone(), DVector::from_fn(b.len(), |i, _| c(1.0 + i as f64))).unwrap();
        let out = apply_f(0.7, &OneBosonVector::zeros(2), &omega, &psi).unwrap();
        let heat = heat_diagonal(&b, 0.7, &omega);
        for s in 0..b.len() {
            assert!((out.coeffs()[s] - psi.coeffs()[s] * heat[s]).norm() < 1e-15);
        }
        assert!(apply_f(0.0, &OneBosonVector::zeros(2), &omega, &psi).is_err());
    }

    #[test]
    fn apply_f_matches_matrix() {
        let b = enumerate_basis(2, 3).unwrap();
        let omega = [0.8, 1.9];
        let f = OneBosonVector::new(vec![Complex64::new(0.4, 0.1), Complex64::new(-0.3, 0.5)]);
        let psi = exponential_vector(&b, &OneBosonVector::from_real(&[0.2, -0.9])).unwrap();
        let v = apply_f(0.3, &f, &omega, &psi).unwrap();
        let m = f_operator(&b, 0.3, &f, &omega).unwrap();
        let w = m.apply(&psi).unwrap();
        assert!((v.coeffs() - w.coeffs()).norm() < 1e-13);
    }

    #[test]
    fn exponential_vector_basics() {
        let b = enumerate_basis(2, 4).unwrap();
        let e0 = exponential_vector(&b, &OneBosonVector::zeros(2)).unwrap();
        assert_eq!(e0.coeffs(), FockVector::vacuum(b.clone()).coeffs());
        let h = OneBosonVector::new(vec![Complex64::new(0.5, 0.3), Complex64::new(-0.4, 0.8)]);
        let e = exponential_vector(&b, &h).unwrap();
        let mut partial = 0.0;
        let mut term = 1.0;
        for n in 0..=4 {
            if n > 0 {
                term *= h.norm_sq() / n as f64;
            }
            partial += term;
        }
        assert!((e.norm().powi(2) - partial).abs() < 1e-13);
    }

    #[test]
    fn phase_translate_rules() {
        let grid = ModeGrid::from_cells(1, vec![(vec![0.5], 1.0), (vec![-0.5], 1.0)]).unwrap();
        let b = enumerate_basis(2, 2).unwrap();
        let id = phase_translate(&b, &grid, &[0.3], &[0.0]).unwrap();
        assert!(id.max_entry_distance(&FockOperator::identity(b.clone())).unwrap() < 1e-15);
        let ph = phase_translate(&b, &grid, &[0.3], &[1.7]).unwrap();
        assert!((ph.entry(0, 0) - Complex64::from_polar(1.0, 0.3 * 1.7)).norm() < 1e-15);
        assert!(phase_translate(&b, &grid, &[0.3, 0.1], &[1.0]).is_err());
    }

    #[test]
    fn restriction_rules() {
        let b = enumerate_basis(3, 2).unwrap();
        let all = restriction_operator(&b, &[0, 1, 2]).unwrap();
        assert!(all.max_entry_distance(&FockOperator::identity(b.clone())).unwrap() == 0.0);
        let none = restriction_operator(&b, &[]).unwrap();
        let d = none.diagonal();
        assert_eq!(d[0], c(1.0));
        assert!(d.iter().skip(1).all(|x| x.norm() == 0.0));
        assert!(restriction_operator(&b, &[3]).is_err());
    }

    #[test]
    fn cone_examples() {
        let b = enumerate_basis(1, 0).unwrap();
        assert_eq!(cone_check(&FockVector::vacuum(b), 0.0), ConeClass::StrictlyPositive);
        let b = enumerate_basis(2, 2).unwrap();
        assert_eq!(cone_check(&FockVector::vacuum(b.clone()), 0.0), ConeClass::NonNegative);
        let ones = FockVector::new(b.clone(), DVector::from_element(b.len(), c(1.0))).unwrap();
        assert_eq!(cone_check(&ones, 1e-9), ConeClass::StrictlyPositive);
        let mut neg = ones.clone();
        neg.coeffs_mut()[3] = c(-2e-9);
        assert_eq!(cone_check(&neg, 1e-9), ConeClass::Outside);
    }

    #[test]
    fn hermitian_flag() {
        let b = enumerate_basis(2, 1).unwrap();
        let mut m = DMatrix::<Complex64>::identity(3, 3);
        m[(0, 1)] = Complex64::new(0.0, 1.0);
        m[(1, 0)] = Complex64::new(0.0, -1.0);
        assert!(FockOperator::from_dense(b.clone(), m.clone()).unwrap().is_hermitian());
        m[(1, 0)] = Complex64::new(0.0, 1.0);
        assert!(!FockOperator::from_dense(b.clone(), m).unwrap().is_hermitian());
        assert!(FockOperator::from_dense(b, DMatrix::zeros(2, 2)).is_err());
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 2), Some(6));
        assert_eq!(binomial(7, 3), Some(35));
        assert_eq!(binomial(5, 0), Some(1));
    }
}
