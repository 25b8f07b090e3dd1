//! Dense matrix-exponential oracles.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::fock::{enumerate_basis, FockBasis, FockOperator, Storage};
use crate::model::{build_generator, build_hamiltonian, Model};
use crate::pathint::TimeProfile;

/// Eigenvalues (ascending) and orthonormal eigenvectors of a hermitian operator.
pub fn hermitian_eigen(h: &FockOperator) -> Result<(Vec<f64>, DMatrix<Complex64>)> {
    if !h.is_hermitian() {
        return Err(Error::NotHermitian);
    }
    let m = h.to_dense();
    let n = m.nrows();
    let (vals, vecs): (Vec<f64>, DMatrix<Complex64>) = if m.iter().all(|c| c.im == 0.0) {
        let re = m.map(|c| c.re);
        let e = SymmetricEigen::new(re);
        (e.eigenvalues.iter().copied().collect(), e.eigenvectors.map(|x| Complex64::new(x, 0.0)))
    } else {
        let e = SymmetricEigen::new(m);
        (e.eigenvalues.iter().copied().collect(), e.eigenvectors)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let sorted = order.iter().map(|&i| vals[i]).collect();
    let cols: Vec<DVector<Complex64>> = order.iter().map(|&i| vecs.column(i).into_owned()).collect();
    Ok((sorted, DMatrix::from_columns(&cols)))
}

/// `e^{−tH}` by eigendecomposition.
pub fn oracle_expm(h: &FockOperator, t: f64) -> Result<FockOperator> {
    if !(t >= 0.0 && t.is_finite()) {
        return Err(invalid(format!("oracle time must be non-negative, got {t}")));
    }
    if !h.is_hermitian() {
        return Err(Error::NotHermitian);
    }
    if let Storage::Diagonal(d) = h.storage() {
        return FockOperator::from_diagonal(h.basis().clone(), d.map(|c| Complex64::new((-t * c.re).exp(), 0.0)));
    }
    let (vals, vecs) = hermitian_eigen(h)?;
    let mut scaled = vecs.clone();
    for (j, mut col) in scaled.column_iter_mut().enumerate() {
        col *= Complex64::new((-t * vals[j]).exp(), 0.0);
    }
    let mut m = scaled * vecs.adjoint();
    symmetrize(&mut m);
    FockOperator::from_dense(h.basis().clone(), m)
}

fn symmetrize(m: &mut DMatrix<Complex64>) {
    let n = m.nrows();
    for i in 0..n {
        m[(i, i)].im = 0.0;
        for j in 0..i {
            let a = 0.5 * (m[(i, j)] + m[(j, i)].conj());
            m[(i, j)] = a;
            m[(j, i)] = a.conj();
        }
    }
}

/// Top-left `basis.len()` block of an operator on a larger graded basis.
pub fn compress(op: &FockOperator, basis: &Arc<FockBasis>) -> Result<FockOperator> {
    let n = basis.len();
    if op.basis().num_modes() != basis.num_modes() || op.basis().max_bosons() < basis.max_bosons() {
        return Err(invalid("compression target is not a sub-basis"));
    }
    let m = op.to_dense();
    FockOperator::from_dense(basis.clone(), m.view((0, 0), (n, n)).into_owned())
}

/// `P_N e^{−tH(P)} P_N` approximated on a basis with `extra` more bosons.
///
/// This is the quantity the Feynman–Kac estimator on the `N`-boson basis
/// targets: the path integral never truncates intermediate boson numbers.
pub fn compressed_oracle(model: &Model, p: &[f64], basis: &Arc<FockBasis>, extra: usize, t: f64) -> Result<FockOperator> {
    let big = enumerate_basis(basis.num_modes(), basis.max_bosons() + extra)?;
    let h = build_hamiltonian(model, p, &big)?;
    compress(&oracle_expm(&h, t)?, basis)
}

/// How a propagator is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PropagatorMethod {
    /// One exponential of the constant generator.
    Expm,
    /// Fourth-order Magnus steps on a mesh anchored at the start time.
    Magnus4,
}

/// Magnus step size.
pub const MAGNUS_STEP: f64 = 1.0 / 512.0;

/// Time-ordered solution of `∂_t S = −G(t) S`, `S_{s,s} = 1`.
pub fn propagator(
    model: &Model,
    profile: &TimeProfile,
    p: &[f64],
    s: f64,
    t: f64,
    basis: &Arc<FockBasis>,
) -> Result<(FockOperator, PropagatorMethod)> {
    if !(t >= s) {
        return Err(invalid(format!("propagator needs s ≤ t, got [{s}, {t}]")));
    }
    if t == s {
        return Ok((FockOperator::identity(basis.clone()), PropagatorMethod::Expm));
    }
    if profile.is_time_independent() {
        let g = build_generator(model, p, profile, s, basis)?;
        let op = if g.is_hermitian() {
            oracle_expm(&g, t - s)?
        } else {
            FockOperator::from_dense(basis.clone(), (g.to_dense() * Complex64::new(s - t, 0.0)).exp())?
        };
        return Ok((op, PropagatorMethod::Expm));
    }
    let c = 3f64.sqrt() / 6.0;
    let mut u = DMatrix::<Complex64>::identity(basis.len(), basis.len());
    let mut a = s;
    while a < t {
        let b = (a + MAGNUS_STEP).min(t);
        let h = b - a;
        let g1 = build_generator(model, p, profile, a + (0.5 - c) * h, basis)?.into_dense();
        let g2 = build_generator(model, p, profile, a + (0.5 + c) * h, basis)?.into_dense();
        let comm = &g1 * &g2 - &g2 * &g1;
        let omega = (&g1 + &g2) * Complex64::new(-0.5 * h, 0.0) - comm * Complex64::new(c * 0.5 * h * h, 0.0);
        u = omega.exp() * u;
        // next node on the mesh anchored at s
        let k = ((b - s) / MAGNUS_STEP).round();
        a = if (s + k * MAGNUS_STEP - b).abs() < 1e-12 { s + k * MAGNUS_STEP } else { b };
    }
    Ok((FockOperator::from_dense(basis.clone(), u)?, PropagatorMethod::Magnus4))
}

/// Propagator on an enlarged basis compressed to `basis`.
pub fn compressed_propagator(
    model: &Model,
    profile: &TimeProfile,
    p: &[f64],
    window: (f64, f64),
    basis: &Arc<FockBasis>,
    extra: usize,
) -> Result<FockOperator> {
    let big = enumerate_basis(basis.num_modes(), basis.max_bosons() + extra)?;
    let (op, _) = propagator(model, profile, p, window.0, window.1, &big)?;
    compress(&op, basis)
}
