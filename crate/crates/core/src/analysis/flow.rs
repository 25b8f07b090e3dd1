//! Flow and evolution equations of time-dependent propagators.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::oracle::{compressed_propagator, propagator};
use crate::error::{invalid, Result};
use crate::fock::FockBasis;
use crate::model::{build_generator, Model};
use crate::pathint::{mc_semigroup_levels, McParams, SemigroupEstimate, TimeProfile};
use crate::stats::linear_fit;

/// How propagators are obtained in [`flow_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum FlowMode {
    Oracle,
    /// Independent seeds `seed`, `seed + 1`, `seed + 2` for `[s,t]`, `[s,r]`, `[r,t]`.
    Mc {
        mc: McParams,
        #[serde(default = "default_extra")]
        extra_bosons: usize,
    },
}

fn default_extra() -> usize {
    6
}

/// Result of [`flow_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowReport {
    pub fingerprint: String,
    pub times: [f64; 3],
    /// `max |S_{s,t} − S_{r,t} S_{s,r}|`; in Monte Carlo mode the expected
    /// truncation defect of the compressed propagators is subtracted first.
    pub defect: f64,
    /// `max defect_ij / tol_ij` (Monte Carlo mode).
    pub budget_ratio: Option<f64>,
    /// Largest entry of the expected truncation defect (Monte Carlo mode).
    pub truncation_defect: Option<f64>,
    pub pass: bool,
}

/// Default bound on the oracle flow defect.
pub const ORACLE_FLOW_TOL: f64 = 1e-10;

fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|c| c.norm()).fold(0.0, f64::max)
}

/// Checks `S_{s,t} = S_{r,t} S_{s,r}`.
#[allow(clippy::too_many_arguments)]
pub fn flow_check(
    model: &Model,
    profile: &TimeProfile,
    p: &[f64],
    times: (f64, f64, f64),
    mode: FlowMode,
    basis: &Arc<FockBasis>,
) -> Result<FlowReport> {
    let (s, r, t) = times;
    if !(s < r && r < t) {
        return Err(invalid(format!("flow check needs s < r < t, got {s}, {r}, {t}")));
    }
    match mode {
        FlowMode::Oracle => {
            let st = propagator(model, profile, p, s, t, basis)?.0.into_dense();
            let sr = propagator(model, profile, p, s, r, basis)?.0.into_dense();
            let rt = propagator(model, profile, p, r, t, basis)?.0.into_dense();
            let defect = max_abs(&(st - rt * sr));
            Ok(FlowReport {
                fingerprint: model.fingerprint(),
                times: [s, r, t],
                defect,
                budget_ratio: None,
                truncation_defect: None,
                pass: defect <= ORACLE_FLOW_TOL,
            })
        }
        FlowMode::Mc { mc, extra_bosons } => {
            let c = |w: (f64, f64)| compressed_propagator(model, profile, p, w, basis, extra_bosons).map(|o| o.into_dense());
            let expected = c((s, t))? - c((r, t))? * c((s, r))?;
            let run = |w: (f64, f64), k: u64| -> Result<(SemigroupEstimate, f64)> {
                // steps scale with the window so all three share one Δt
                let steps = ((mc.steps as f64) * (w.1 - w.0) / (t - s)).round().max(1.0) as usize;
                let params = McParams { seed: mc.seed.wrapping_add(k), steps, ..mc };
                let mut e = mc_semigroup_levels(model, profile, basis, p, w, &params, &[steps, 2 * steps], &[])?;
                let fine = e.pop().expect("two levels");
                let coarse = e.pop().expect("two levels");
                let bias = max_abs(&(coarse.mean.to_dense() - fine.mean.to_dense()));
                Ok((coarse, bias))
            };
            let (est_st, b_st) = run((s, t), 0)?;
            let (est_sr, b_sr) = run((s, r), 1)?;
            let (est_rt, b_rt) = run((r, t), 2)?;
            let (a, x, y) = (est_st.mean.to_dense(), est_rt.mean.to_dense(), est_sr.mean.to_dense());
            let diff = &a - &x * &y - &expected;
            let (se_a, se_x, se_y) = (&est_st.standard_error, &est_rt.standard_error, &est_sr.standard_error);
            let n = a.nrows();
            let abs_x = x.map(|c| c.norm());
            let abs_y = y.map(|c| c.norm());
            // first-order propagation of independent errors through the product
            let var_prod = abs_x.map(|v| v * v) * se_y.map(|v| v * v) + se_x.map(|v| v * v) * abs_y.map(|v| v * v);
            let quad = b_st + max_abs(&x) * b_sr * n as f64 + max_abs(&y) * b_rt * n as f64;
            let mut ratio = 0.0f64;
            for i in 0..n {
                for j in 0..n {
                    let tol = 3.0 * (se_a[(i, j)].powi(2) + var_prod[(i, j)]).sqrt() + quad;
                    let d = diff[(i, j)].norm();
                    ratio = ratio.max(if tol > 0.0 { d / tol } else if d > 1e-12 { f64::INFINITY } else { 0.0 });
                }
            }
            Ok(FlowReport {
                fingerprint: model.fingerprint(),
                times: [s, r, t],
                defect: max_abs(&diff),
                budget_ratio: Some(ratio),
                truncation_defect: Some(max_abs(&expected)),
                pass: ratio <= 1.0,
            })
        }
    }
}

/// Result of [`evolution_check`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionReport {
    pub fingerprint: String,
    pub window: [f64; 2],
    pub deltas: Vec<f64>,
    /// `‖(S_{s,t+δ} − S_{s,t})/δ + G(t) S_{s,t}‖_max`.
    pub residuals: Vec<f64>,
    pub fitted_order: f64,
    /// `‖S_{s,s} − 1‖_max`.
    pub initial_defect: f64,
}

/// Forward-difference residuals of `∂_t S_{s,t} = −G(t) S_{s,t}`.
pub fn evolution_check(
    model: &Model,
    profile: &TimeProfile,
    p: &[f64],
    window: (f64, f64),
    deltas: &[f64],
    basis: &Arc<FockBasis>,
) -> Result<EvolutionReport> {
    let (s, t) = window;
    if deltas.is_empty() || deltas.iter().any(|&d| !(d > 0.0)) {
        return Err(invalid("deltas must be positive"));
    }
    let id = DMatrix::<Complex64>::identity(basis.len(), basis.len());
    let initial_defect = max_abs(&(propagator(model, profile, p, s, s, basis)?.0.into_dense() - id));
    let base = propagator(model, profile, p, s, t, basis)?.0.into_dense();
    let g = build_generator(model, p, profile, t, basis)?.into_dense();
    let exact = -(&g * &base);
    let residuals: Vec<f64> = deltas
        .iter()
        .map(|&d| {
            let next = propagator(model, profile, p, s, t + d, basis)?.0.into_dense();
            Ok(max_abs(&((next - &base) / Complex64::new(d, 0.0) - &exact)))
        })
        .collect::<Result<_>>()?;
    let fitted_order = if deltas.len() >= 2 {
        let x: Vec<f64> = deltas.iter().map(|d| d.ln()).collect();
        let y: Vec<f64> = residuals.iter().map(|r| r.ln()).collect();
        linear_fit(&x, &y).1
    } else {
        f64::NAN
    };
    Ok(EvolutionReport {
        fingerprint: model.fingerprint(),
        window: [s, t],
        deltas: deltas.to_vec(),
        residuals,
        fitted_order,
        initial_defect,
    })
}
