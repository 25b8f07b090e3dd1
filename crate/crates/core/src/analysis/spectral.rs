//! Ground states and dispersion scans.

use std::sync::Arc;

use nalgebra::DVector;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::oracle::{hermitian_eigen, oracle_expm};
use crate::error::{Error, Result};
use crate::fock::{FockBasis, FockOperator};
use crate::model::{build_hamiltonian, Model};

/// Gap below which the ground state is treated as degenerate.
pub const GAP_THRESHOLD: f64 = 1e-10;

/// Largest basis on which [`ground_state`] runs the power-iteration cross-check.
pub const POWER_CHECK_MAX_DIM: usize = 600;

/// Lowest eigenpair of a hermitian operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralReport {
    pub energy: f64,
    pub gap: f64,
    /// Ground vector after removing the global phase; real parts.
    pub vector: Vec<f64>,
    /// Simple eigenvalue with strictly positive ground vector.
    pub perron: bool,
    /// Energy from power iteration on `e^{−t_power H}` (small bases only).
    pub power_energy: Option<f64>,
    pub t_power: f64,
}

fn operator_norm_bound(h: &FockOperator) -> f64 {
    let m = h.to_dense();
    (0..m.nrows())
        .map(|i| m.row(i).iter().map(|c| c.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn rayleigh(h: &nalgebra::DMatrix<Complex64>, v: &DVector<Complex64>) -> f64 {
    (v.adjoint() * h * v)[(0, 0)].re / v.norm_squared()
}

/// Power iteration on `e^{−tH}` with repeated squaring of the iteration
/// matrix; the energy is the Rayleigh quotient of `H`.
pub fn power_energy(h: &FockOperator, t_power: f64) -> Result<f64> {
    let n = h.dim();
    let hd = h.to_dense();
    let mut a = oracle_expm(h, t_power)?.into_dense();
    let v0 = DVector::from_fn(n, |i, _| Complex64::new(1.0 + 1e-3 * (i as f64 + 1.0).sqrt(), 0.0));
    let mut v = &a * &v0;
    let mut e = rayleigh(&hd, &v);
    for _ in 0..64 {
        a = &a * &a;
        let scale = a.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if !(scale > 0.0 && scale.is_finite()) {
            break;
        }
        a /= Complex64::new(scale, 0.0);
        v = &a * &v0;
        let next = rayleigh(&hd, &v);
        let done = (next - e).abs() <= 1e-14 * next.abs().max(1.0);
        e = next;
        if done {
            break;
        }
    }
    Ok(e)
}

/// Ground energy, gap and Perron flag by eigensolve, cross-checked by power
/// iteration up to [`POWER_CHECK_MAX_DIM`] states. `t_power` defaults to `1/‖H‖`.
pub fn ground_state(h: &FockOperator, t_power: Option<f64>) -> Result<SpectralReport> {
    let (vals, vecs) = hermitian_eigen(h)?;
    let energy = vals[0];
    let gap = if vals.len() > 1 { (vals[1] - vals[0]).max(0.0) } else { f64::INFINITY };
    let col = vecs.column(0);
    let pivot = col.iter().copied().max_by(|a, b| a.norm().total_cmp(&b.norm())).ok_or(Error::NotHermitian)?;
    let phase = pivot.conj() / pivot.norm();
    let vector: Vec<f64> = col.iter().map(|c| (c * phase).re).collect();
    let imag_free = col.iter().all(|c| (c * phase).im.abs() <= 1e-12);
    let perron = gap > GAP_THRESHOLD && imag_free && vector.iter().all(|&x| x > 0.0);
    let t_power = t_power.unwrap_or_else(|| 1.0 / operator_norm_bound(h).max(1e-300));
    let power_energy = if h.dim() <= POWER_CHECK_MAX_DIM { Some(power_energy(h, t_power)?) } else { None };
    Ok(SpectralReport { energy, gap, vector, perron, power_energy, t_power })
}

/// One row of a dispersion scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionRow {
    pub momentum: Vec<f64>,
    pub energy: f64,
    pub gap: f64,
    pub perron: bool,
    /// `E_0(P) ≥ E_0(0)`, reported only.
    pub above_zero_momentum: bool,
}

/// Dispersion scan table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DispersionScan {
    pub fingerprint: String,
    pub max_bosons: usize,
    pub energy_at_zero: f64,
    pub rows: Vec<DispersionRow>,
}

/// `E_0(P)`, gap and Perron flag for each `P`, in input order.
pub fn dispersion_scan(model: &Model, momenta: &[Vec<f64>], basis: &Arc<FockBasis>, t_power: Option<f64>) -> Result<DispersionScan> {
    let zero = vec![0.0; model.dim()];
    let e0 = ground_state(&build_hamiltonian(model, &zero, basis)?, t_power)?.energy;
    let rows = momenta
        .par_iter()
        .map(|p| {
            let r = ground_state(&build_hamiltonian(model, p, basis)?, t_power)?;
            Ok(DispersionRow {
                momentum: p.clone(),
                energy: r.energy,
                gap: r.gap,
                perron: r.perron,
                above_zero_momentum: r.energy >= e0 - 1e-12 * e0.abs().max(1.0),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DispersionScan { fingerprint: model.fingerprint(), max_bosons: basis.max_bosons(), energy_at_zero: e0, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fock::enumerate_basis;
    use nalgebra::DMatrix;

    #[test]
    fn two_by_two_ground_state() {
        let b = enumerate_basis(1, 1).unwrap();
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, -0.5, 1.5]).map(|x| Complex64::new(x, 0.0));
        let r = ground_state(&FockOperator::from_dense(b, m).unwrap(), None).unwrap();
        let exact = 0.75 - 3.25f64.sqrt() / 2.0;
        assert!((r.energy - exact).abs() < 1e-14);
        assert!((r.energy + 0.15139).abs() < 1e-5);
        assert!((r.gap - 3.25f64.sqrt()).abs() < 1e-13);
        assert!(r.perron);
        assert!((r.power_energy.unwrap() - r.energy).abs() <= 1e-9 * r.energy.abs());
    }

    #[test]
    fn degenerate_free_case_is_not_perron() {
        let b = enumerate_basis(2, 1).unwrap();
        let h = FockOperator::from_real_diagonal(b, &[0.0, 1.0, 1.0]).unwrap();
        let r = ground_state(&h, None).unwrap();
        assert_eq!(r.energy, 0.0);
        assert!(!r.perron);
        assert!((r.vector[0] - 1.0).abs() < 1e-15);
    }
}
