//! Ultraviolet cutoff studies.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::spectral::ground_state;
use crate::error::{invalid, Result};
use crate::fock::enumerate_basis;
use crate::model::{
    build_hamiltonian, radial_renorm_energy, renorm_energy, BosonDispersion, CouplingSpec, GridSpec, Model, ModelSpec,
    ParticleDispersion, RenormMethod,
};
use crate::pathint::{mc_semigroup_renormalized, McParams};
use crate::stats::linear_fit;

/// How the grid follows the cutoff `Λ`; the grid cutoff always equals `Λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum RefinementRule {
    /// Constant cell side; `2Λ/spacing` must be an even integer.
    FixedSpacing { spacing: f64 },
    /// Constant number of cells per axis (must be even).
    FixedCells { cells_per_axis: usize },
}

impl RefinementRule {
    /// Model spec at cutoff `lambda_uv`.
    pub fn spec_at(&self, base: &ModelSpec, lambda_uv: f64) -> Result<ModelSpec> {
        let cells = match *self {
            RefinementRule::FixedSpacing { spacing } => {
                let c = 2.0 * lambda_uv / spacing;
                let r = c.round();
                if !(spacing > 0.0) || (c - r).abs() > 1e-9 || r < 2.0 {
                    return Err(invalid(format!("cutoff {lambda_uv} is not a whole number of cells of side {spacing}")));
                }
                r as usize
            }
            RefinementRule::FixedCells { cells_per_axis } => cells_per_axis,
        };
        Ok(ModelSpec {
            coupling: base.coupling.with_cutoff(Some(lambda_uv)),
            grid: GridSpec { cutoff: lambda_uv, cells_per_axis: cells },
            ..*base
        })
    }
}

/// Estimator of `E_0(Λ) − E_Λ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RenormEstimator {
    /// Ground energy of the dense `H(P)` on `N_max` bosons.
    Dense { max_bosons: usize },
    /// `−(1/t) log⟨Ω, e^{−t(H_Λ − E_Λ)}Ω⟩` by vacuum Monte Carlo, all cutoffs
    /// driven by common paths.
    VacuumMc { mc: McParams },
}

/// One cutoff of a renormalization scan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenormRow {
    pub cutoff: f64,
    pub modes: usize,
    /// Grid-sum renormalization energy.
    pub e_lambda: f64,
    /// Radial-quadrature renormalization energy.
    pub e_lambda_radial: f64,
    pub e0: f64,
    pub renormalized: f64,
    /// Standard error of `renormalized` (zero for dense runs).
    pub std_err: f64,
    /// `|renormalized(Λ_i) − renormalized(Λ_{i−1})|`.
    pub difference: Option<f64>,
}

/// Renormalization scan table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenormReport {
    pub base: ModelSpec,
    pub momentum: Vec<f64>,
    pub t: f64,
    pub estimator: RenormEstimator,
    pub rows: Vec<RenormRow>,
    /// Successive differences strictly decrease.
    pub cauchy: bool,
}

/// `E_Λ`, `E_0(Λ)` and `E_0(Λ) − E_Λ` over a cutoff ladder.
pub fn renorm_scan(
    base: &ModelSpec,
    cutoffs: &[f64],
    rule: RefinementRule,
    p: &[f64],
    t: f64,
    estimator: RenormEstimator,
) -> Result<RenormReport> {
    if cutoffs.is_empty() {
        return Err(invalid("empty cutoff list"));
    }
    let models: Vec<Model> = cutoffs.iter().map(|&l| rule.spec_at(base, l)?.build()).collect::<Result<_>>()?;
    let energies: Vec<(f64, f64)> = models
        .iter()
        .zip(cutoffs)
        .map(|(m, &l)| {
            Ok((
                renorm_energy(m, RenormMethod::GridSum)?,
                radial_renorm_energy(m.particle(), m.boson(), m.coupling(), m.dim(), l),
            ))
        })
        .collect::<Result<_>>()?;
    let values: Vec<(f64, f64)> = match estimator {
        RenormEstimator::Dense { max_bosons } => models
            .par_iter()
            .zip(&energies)
            .map(|(m, (e, _))| {
                let basis = enumerate_basis(m.num_modes(), max_bosons)?;
                let e0 = ground_state(&build_hamiltonian(m, p, &basis)?, None)?.energy;
                Ok((e0 - e, 0.0))
            })
            .collect::<Result<_>>()?,
        RenormEstimator::VacuumMc { mc } => {
            if !(t > 0.0) {
                return Err(invalid("vacuum Monte Carlo needs t > 0"));
            }
            mc_semigroup_renormalized(&models, 0, p, (0.0, t), &mc)?
                .iter()
                .map(|est| {
                    let v = est.vacuum().re;
                    let se = est.standard_error[(0, 0)];
                    (-v.ln() / t, se / (t * v.abs()))
                })
                .collect()
        }
    };
    let mut rows: Vec<RenormRow> = Vec::with_capacity(cutoffs.len());
    for (i, ((m, &l), (&(e, er), &(r, se)))) in models.iter().zip(cutoffs).zip(energies.iter().zip(&values)).enumerate() {
        rows.push(RenormRow {
            cutoff: l,
            modes: m.num_modes(),
            e_lambda: e,
            e_lambda_radial: er,
            e0: r + e,
            renormalized: r,
            std_err: se,
            difference: (i > 0).then(|| (r - rows[i - 1].renormalized).abs()),
        });
    }
    let diffs: Vec<f64> = rows.iter().filter_map(|r| r.difference).collect();
    let cauchy = diffs.windows(2).all(|w| w[1] < w[0]);
    Ok(RenormReport { base: *base, momentum: p.to_vec(), t, estimator, rows, cauchy })
}

/// Fitted `E_Λ ≈ a + b·log Λ` against the massless tail model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogSlopeReport {
    pub cutoffs: Vec<f64>,
    pub e_lambda: Vec<f64>,
    pub tail: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub tail_slope: f64,
    pub relative_error: f64,
}

/// Log-divergence slope of the radial `E_Λ`, compared with the slope of the
/// same integral for a massless boson (`ω(k) = |k|`), whose large-`Λ`
/// behavior it shares.
pub fn log_slope(
    particle: &ParticleDispersion,
    boson: &BosonDispersion,
    coupling: &CouplingSpec,
    d: usize,
    cutoffs: &[f64],
) -> Result<LogSlopeReport> {
    if cutoffs.len() < 2 {
        return Err(invalid("a slope fit needs at least two cutoffs"));
    }
    let massless = BosonDispersion::Massive { m: 0.0 };
    let e: Vec<f64> = cutoffs.iter().map(|&l| radial_renorm_energy(particle, boson, coupling, d, l)).collect();
    let tail: Vec<f64> = cutoffs.iter().map(|&l| radial_renorm_energy(particle, &massless, coupling, d, l)).collect();
    let x: Vec<f64> = cutoffs.iter().map(|l| l.ln()).collect();
    let (intercept, slope) = linear_fit(&x, &e);
    let (_, tail_slope) = linear_fit(&x, &tail);
    Ok(LogSlopeReport {
        cutoffs: cutoffs.to_vec(),
        e_lambda: e,
        tail,
        slope,
        intercept,
        tail_slope,
        relative_error: ((slope - tail_slope) / tail_slope).abs(),
    })
}
