//! Parameter documentation of the experiment variants.

use crate::config::VARIANTS;
use crate::error::CliError;

const COMMON: &str = "Common keys: model (ModelSpec), max_bosons, experiment{kind,...}, seed, workers, output_dir, limits{max_basis,max_memory_bytes}.";

fn body(variant: &str) -> Option<&'static str> {
    Some(match variant {
        "validate-levy" => "Empirical characteristic-function test of the driving Lévy process: E[e^{ik·X_t}] = e^{−tΨ(k)} per (k, t), the two-time product identity for independent stationary increments, and for the relativistic process the inverse-Gaussian subordinator mean and Laplace transform.\nParameters: ks (list of d-vectors), times (list), n_samples, z_max (default 4).\nPass: every |z| ≤ z_max.",
        "build-hamiltonian" => "Assembles the fiber Hamiltonian H(P) = Ψ(P − dΓ(p̂)) + dΓ(ω) + φ(v) on the truncated Fock space and writes its matrix.\nParameters: momentum.\nAlways passes.",
        "mc-run" => "Monte Carlo Feynman–Kac estimate of the propagator S_{s,t}(P) = E[e^u F(U⁺) F(U⁻)† e^{i(P − dΓ(p̂))·(X_t − X_s)}].\nParameters: momentum, window [s, t], n_paths, steps, profile (nelson | ramped | custom).\nWrites mean_re.csv, mean_im.csv, std_err.csv.",
        "fk-vs-oracle" => "Compares the Monte Carlo estimate with the dense oracle P_N e^{−tH(P)} P_N computed on extra_bosons more bosons. An entry passes when |est_J − oracle| ≤ 3·SE + |est_J − est_2J|.\nParameters: momentum, t, n_paths, steps (J), extra_bosons (default 6), negative_control (flip the coupling sign in the estimator only), z_max (default 4).",
        "positivity-audit" => "Classifies e^{−tH(P)} against the Fröhlich cone of non-negative occupation-basis coefficients: improving (all entries > tol), preserving (all > −tol) or neither. Estimates use the entrywise tolerance max(3·SE, tolerance).\nParameters: momentum, t, source (oracle | mc), tolerance, n_paths and steps (mc), expect (optional classification; a mismatch exits 2).",
        "dispersion-scan" => "Ground energy E_0(P), spectral gap and Perron flag (simple, strictly positive ground vector) for each momentum. E_0(P) ≥ E_0(0) is reported, not asserted.\nParameters: momenta (list of d-vectors), t_power (optional).",
        "renorm-scan" => "Ultraviolet study over a cutoff ladder: renormalization energy E_Λ = −Σ|v_i|²/(Ψ(k_i)+ω(k_i)), ground energy E_0(Λ) and the subtraction E_0(Λ) − E_Λ with successive differences, plus the log-divergence slope of the radial E_Λ against the massless tail model.\nParameters: cutoffs, refinement {rule: fixed_spacing, spacing | fixed_cells, cells_per_axis}, momentum, t, estimator {kind: dense | vacuum-mc, n_paths, steps}.\nPass: successive differences strictly decrease.",
        "trotter-check" => "Trotter product with the Q-sandwich: Π_{i=1}^N [Q_Θ e^{−(T/N)H_Θ(P1+P2)} Q_Θ e^{−(T/N)L}] against the propagator of the split system, where Θ = θ1 ∪ θ2 and L = Ψ(P1 − K_θ1) + Ψ(P2 − K_θ2) − Ψ(P1 + P2 − K_Θ).\nParameters: p1, p2, theta1, theta2 (disjoint mode lists), window [s, t], n_list.\nPass: errors decrease monotonically in N.",
        "flow-check" => "Flow equation S_{s,t} = S_{r,t} S_{s,r} for the time-ordered propagator of the profile. Oracle mode uses exact propagators; mc mode uses independent seeds per window and a 3-SE plus quadrature budget.\nParameters: momentum, times [s, r, t], mode (oracle | mc), profile, n_paths and steps (mc), extra_bosons.",
        "evolution-check" => "Initial value problem ∂_t S_{s,t} = −G(t) S_{s,t}, S_{s,s} = 1, by forward differences of exact propagators over a δ ladder.\nParameters: momentum, window [s, t], deltas, profile, min_order (default 0.9).\nPass: fitted order ≥ min_order.",
        _ => return None,
    })
}

/// Parameter schema and mathematical content of a variant.
pub fn describe(variant: &str) -> Result<String, CliError> {
    let text = body(variant).ok_or_else(|| {
        CliError::Usage(format!("unknown variant `{variant}`; expected one of: {}", VARIANTS.join(", ")))
    })?;
    Ok(format!("{variant}\n\n{text}\n\n{COMMON}\n"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        assert!(describe("trotter-check").unwrap().contains("Q-sandwich"));
        assert!(describe("renorm-scan").unwrap().contains("E_Λ"));
        assert!(describe("bogus").is_err());
        for v in VARIANTS {
            assert!(describe(v).is_ok());
        }
    }
}
