//! Positivity audits against the occupation-basis cone.

use serde::{Deserialize, Serialize};

use crate::fock::FockOperator;
use crate::pathint::SemigroupEstimate;

/// Cone classification of an operator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Positivity {
    Improving,
    Preserving,
    Neither,
}

/// Result of a positivity audit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositivityReport {
    pub fingerprint: String,
    /// Smallest real part over all pairs of basis states.
    pub min_entry: f64,
    pub max_imag: f64,
    pub classification: Positivity,
    /// Scalar tolerance; for estimates the floor of the entrywise tolerance.
    pub tolerance: f64,
    /// `block_minima[n][m]`: smallest real part with row in block `n`, column in block `m`.
    pub block_minima: Vec<Vec<f64>>,
    /// Entries below their tolerance (estimates) or below `−tol` (operators).
    pub violations: usize,
}

fn block_minima(op: &FockOperator) -> Vec<Vec<f64>> {
    let b = op.basis();
    let nb = b.max_bosons() + 1;
    let m = op.to_dense();
    (0..nb)
        .map(|n| {
            (0..nb)
                .map(|k| {
                    let mut lo = f64::INFINITY;
                    for i in b.block(n) {
                        for j in b.block(k) {
                            lo = lo.min(m[(i, j)].re);
                        }
                    }
                    lo
                })
                .collect()
        })
        .collect()
}

/// Classifies an exact operator: improving if every entry is real with real
/// part `> tol`, preserving if every real part is `> −tol`.
pub fn positivity_audit(op: &FockOperator, tol: f64, fingerprint: &str) -> PositivityReport {
    let m = op.to_dense();
    let min_entry = m.iter().map(|c| c.re).fold(f64::INFINITY, f64::min);
    let max_imag = m.iter().map(|c| c.im.abs()).fold(0.0, f64::max);
    let classification = if max_imag > tol || min_entry <= -tol {
        Positivity::Neither
    } else if min_entry > tol {
        Positivity::Improving
    } else {
        Positivity::Preserving
    };
    PositivityReport {
        fingerprint: fingerprint.to_string(),
        min_entry,
        max_imag,
        classification,
        tolerance: tol,
        block_minima: block_minima(op),
        violations: m.iter().filter(|c| c.re <= -tol).count(),
    }
}

/// Classifies a Monte Carlo estimate entrywise with tolerance
/// `max(3·SE_ij, floor)`; only real parts enter the classification.
pub fn positivity_audit_estimate(est: &SemigroupEstimate, floor: f64) -> PositivityReport {
    let m = est.mean.to_dense();
    let mut improving = true;
    let mut violations = 0;
    for (c, se) in m.iter().zip(est.standard_error.iter()) {
        let tol = (3.0 * se).max(floor);
        if c.re <= -tol {
            violations += 1;
        }
        if c.re <= tol {
            improving = false;
        }
    }
    let classification = if violations > 0 {
        Positivity::Neither
    } else if improving {
        Positivity::Improving
    } else {
        Positivity::Preserving
    };
    PositivityReport {
        fingerprint: est.fingerprint.clone(),
        min_entry: m.iter().map(|c| c.re).fold(f64::INFINITY, f64::min),
        max_imag: m.iter().map(|c| c.im.abs()).fold(0.0, f64::max),
        classification,
        tolerance: floor,
        block_minima: block_minima(&est.mean),
        violations,
    }
}
