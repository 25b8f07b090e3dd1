//! Monte Carlo estimates against the dense oracle.

use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::oracle::compressed_oracle;
use crate::error::Result;
use crate::fock::{FockBasis, OneBosonVector};
use crate::model::Model;
use crate::pathint::{mc_semigroup_levels, McParams, SemigroupEstimate, TimeProfile};

/// Options of [`fk_vs_oracle`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FkOptions {
    /// Extra bosons of the oracle basis before compression.
    #[serde(default = "default_extra")]
    pub extra_bosons: usize,
    /// Flip the sign of the coupling in the Monte Carlo run only.
    #[serde(default)]
    pub negative_control: bool,
    /// Bound on `max z` of the refined estimate.
    #[serde(default = "default_z")]
    pub z_max: f64,
}

fn default_extra() -> usize {
    6
}

fn default_z() -> f64 {
    4.0
}

impl Default for FkOptions {
    fn default() -> Self {
        Self { extra_bosons: default_extra(), negative_control: false, z_max: default_z() }
    }
}

/// One matrix entry of the comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FkEntry {
    pub row: usize,
    pub col: usize,
    pub oracle: [f64; 2],
    pub estimate: [f64; 2],
    pub std_err: f64,
    /// `|est_J − est_2J|`.
    pub quadrature_bias: f64,
    /// `|est_J − oracle|`.
    pub deviation: f64,
    /// `|est_2J − oracle| / SE_2J`.
    pub z_refined: f64,
    pub pass: bool,
}

/// Entrywise comparison of the estimator with `P_N e^{−tH(P)} P_N`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FkReport {
    pub fingerprint: String,
    pub seed: u64,
    pub n_paths: usize,
    pub steps: usize,
    pub momentum: Vec<f64>,
    pub t: f64,
    pub negative_control: bool,
    pub entries: Vec<FkEntry>,
    /// `max_ij |est_J − oracle| / (3·SE + bias)`; the run passes iff `≤ 1`.
    pub max_budget_ratio: f64,
    pub max_z_refined: f64,
    pub pass: bool,
}

/// Compares `mc_semigroup` at `J` and `2J` steps with the compressed oracle.
///
/// An entry passes when `|est_J − oracle| ≤ 3·SE_J + |est_J − est_2J|` and
/// the refined estimate stays within `z_max` standard errors.
pub fn fk_vs_oracle(
    model: &Model,
    p: &[f64],
    t: f64,
    basis: &Arc<FockBasis>,
    params: &McParams,
    opts: &FkOptions,
) -> Result<FkReport> {
    let oracle = compressed_oracle(model, p, basis, opts.extra_bosons, t)?.into_dense();
    let mc_model = if opts.negative_control {
        flipped_coupling(model)?
    } else {
        model.clone()
    };
    let profile = TimeProfile::nelson(&mc_model);
    let est = mc_semigroup_levels(&mc_model, &profile, basis, p, (0.0, t), params, &[params.steps, 2 * params.steps], &[])?;
    Ok(compare(model, p, t, &oracle, &est[0], &est[1], opts))
}

fn compare(
    model: &Model,
    p: &[f64],
    t: f64,
    oracle: &nalgebra::DMatrix<Complex64>,
    coarse: &SemigroupEstimate,
    fine: &SemigroupEstimate,
    opts: &FkOptions,
) -> FkReport {
    let (mc, mf) = (coarse.mean.to_dense(), fine.mean.to_dense());
    let n = mc.nrows();
    let mut entries = Vec::with_capacity(n * n);
    let (mut max_ratio, mut max_z) = (0.0f64, 0.0f64);
    for row in 0..n {
        for col in 0..n {
            let o = oracle[(row, col)];
            let (ec, ef) = (mc[(row, col)], mf[(row, col)]);
            let se = coarse.standard_error[(row, col)];
            let se_f = fine.standard_error[(row, col)];
            let bias = (ec - ef).norm();
            let deviation = (ec - o).norm();
            let budget = 3.0 * se + bias;
            let ratio = if budget > 0.0 { deviation / budget } else if deviation > 1e-12 { f64::INFINITY } else { 0.0 };
            let z = if se_f > 0.0 { (ef - o).norm() / se_f } else if (ef - o).norm() > 1e-12 { f64::INFINITY } else { 0.0 };
            max_ratio = max_ratio.max(ratio);
            max_z = max_z.max(z);
            entries.push(FkEntry {
                row,
                col,
                oracle: [o.re, o.im],
                estimate: [ec.re, ec.im],
                std_err: se,
                quadrature_bias: bias,
                deviation,
                z_refined: z,
                pass: ratio <= 1.0 && z <= opts.z_max,
            });
        }
    }
    FkReport {
        fingerprint: model.fingerprint(),
        seed: coarse.seed,
        n_paths: coarse.n_paths,
        steps: coarse.steps,
        momentum: p.to_vec(),
        t,
        negative_control: opts.negative_control,
        pass: entries.iter().all(|e| e.pass),
        entries,
        max_budget_ratio: max_ratio,
        max_z_refined: max_z,
    }
}

/// Sign-flipped coupling, for negative controls built by hand.
pub fn flipped_coupling(model: &Model) -> Result<Model> {
    model.with_coupling_vector(OneBosonVector::new(model.coupling_vector().as_slice().iter().map(|c| -c).collect()))
}
