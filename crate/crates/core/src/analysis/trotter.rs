//! Trotter product check with the `Q_Θ` sandwich.
//!
//! For a split `Θ = θ₁ ∪ θ₂` of the modes and momenta `P₁, P₂`, the product
//!
//! ```text
//! Π_{i=1}^N [ Q_Θ e^{−(T/N) H_Θ(P₁+P₂)} Q_Θ e^{−(T/N) L} ]
//! ```
//!
//! converges to the propagator of two independent systems on `θ₁` and `θ₂`
//! with momenta `P₁` and `P₂`. `H_Θ` keeps the coupling only on `Θ`; on the
//! range of `Q_Θ` the limit is generated by `H_Θ(P₁+P₂) + L`.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::oracle::oracle_expm;
use crate::error::{invalid, Result};
use crate::fock::{restriction_operator, FockBasis};
use crate::model::{build_hamiltonian, build_l, Model};
use crate::stats::linear_fit;

/// Result of [`trotter_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrotterReport {
    pub fingerprint: String,
    pub n_values: Vec<usize>,
    /// Spectral-norm error `‖product_N − target‖₂`.
    pub errors: Vec<f64>,
    /// `errors[i] / errors[i+1]`.
    pub ratios: Vec<f64>,
    /// `−slope` of `log error` against `log N`.
    pub fitted_order: f64,
    pub target_norm: f64,
    /// Minimum of `L` on states supported in `Θ`.
    pub lower_bound: f64,
    pub monotone: bool,
    /// Dense products, one per `N` (row-major real parts).
    #[serde(skip)]
    pub products: Vec<DMatrix<Complex64>>,
}

fn spectral_norm(m: &DMatrix<Complex64>) -> f64 {
    m.clone().singular_values().iter().copied().fold(0.0, f64::max)
}

/// Product-formula errors against the exact target for each `N`.
#[allow(clippy::too_many_arguments)]
pub fn trotter_check(
    model: &Model,
    p1: &[f64],
    p2: &[f64],
    theta1: &[usize],
    theta2: &[usize],
    window: (f64, f64),
    n_list: &[usize],
    basis: &Arc<FockBasis>,
) -> Result<TrotterReport> {
    let (s, t) = window;
    if !(t > s) {
        return Err(invalid(format!("window needs s < t, got [{s}, {t}]")));
    }
    if n_list.contains(&0) {
        return Err(invalid("N values must be positive"));
    }
    let (l, lower_bound) = build_l(p1, p2, theta1, theta2, model.particle(), basis, model.grid())?;
    let theta: Vec<usize> = theta1.iter().chain(theta2).copied().collect();
    let restricted = model.restricted_to(&theta)?;
    let ptot: Vec<f64> = p1.iter().zip(p2).map(|(a, b)| a + b).collect();
    let h = build_hamiltonian(&restricted, &ptot, basis)?;
    let q = restriction_operator(basis, &theta)?.into_dense();
    let span = t - s;
    let target = &q * oracle_expm(&h.add(&l)?, span)?.into_dense() * &q;
    let ld = l.diagonal();
    let mut errors = Vec::with_capacity(n_list.len());
    let mut products = Vec::with_capacity(n_list.len());
    for &n in n_list {
        let dt = span / n as f64;
        let mut step = &q * oracle_expm(&h, dt)?.into_dense() * &q;
        for (j, mut col) in step.column_iter_mut().enumerate() {
            col *= Complex64::new((-dt * ld[j].re).exp(), 0.0);
        }
        let mut prod = DMatrix::identity(basis.len(), basis.len());
        for _ in 0..n {
            prod = &step * prod;
        }
        errors.push(spectral_norm(&(&prod - &target)));
        products.push(prod);
    }
    let ratios = errors.windows(2).map(|w| w[0] / w[1]).collect();
    let fitted_order = if n_list.len() >= 2 && errors.iter().all(|&e| e > 0.0) {
        let x: Vec<f64> = n_list.iter().map(|&n| (n as f64).ln()).collect();
        let y: Vec<f64> = errors.iter().map(|e| e.ln()).collect();
        -linear_fit(&x, &y).1
    } else {
        f64::NAN
    };
    Ok(TrotterReport {
        fingerprint: model.fingerprint(),
        n_values: n_list.to_vec(),
        monotone: errors.windows(2).all(|w| w[1] <= w[0]),
        errors,
        ratios,
        fitted_order,
        target_norm: spectral_norm(&target),
        lower_bound,
        products,
    })
}
