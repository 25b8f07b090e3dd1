//! Fock algebra properties shared by the proptest suite and the acceptance run.

use std::sync::Arc;

use nalgebra::DVector;
use nelson_fk::fock::*;
use num_complex::Complex64;
use proptest::prelude::*;
use proptest::test_runner::TestCaseError;

#[derive(Debug, Clone)]
pub struct Case {
    pub basis: Arc<FockBasis>,
    pub f: OneBosonVector,
    pub g: OneBosonVector,
    pub h: OneBosonVector,
    pub psi: FockVector,
    pub phi: FockVector,
    pub omega: Vec<f64>,
    pub theta: Vec<usize>,
}

fn complex() -> impl Strategy<Value = Complex64> {
    (-1.0..1.0f64, -1.0..1.0f64).prop_map(|(a, b)| Complex64::new(a, b))
}

fn one_boson(m: usize, scale: f64) -> impl Strategy<Value = OneBosonVector> {
    prop::collection::vec(complex(), m).prop_map(move |v| OneBosonVector::new(v.into_iter().map(|c| c * scale).collect()))
}

/// Random `M ≤ 3`, `N_max ≤ 4` configurations.
pub fn case() -> impl Strategy<Value = Case> {
    (1usize..=3, 1usize..=4).prop_flat_map(|(m, n)| {
        let basis = enumerate_basis(m, n).unwrap();
        let d = basis.len();
        (
            Just(basis),
            one_boson(m, 1.0),
            one_boson(m, 1.0),
            one_boson(m, 0.8),
            prop::collection::vec(complex(), d),
            prop::collection::vec(complex(), d),
            prop::collection::vec(0.2..3.0f64, m),
            prop::collection::vec(any::<bool>(), m),
        )
            .prop_map(|(basis, f, g, h, a, b, omega, mask)| Case {
                psi: FockVector::new(basis.clone(), DVector::from_vec(a)).unwrap(),
                phi: FockVector::new(basis.clone(), DVector::from_vec(b)).unwrap(),
                theta: mask.iter().enumerate().filter(|(_, &k)| k).map(|(i, _)| i).collect(),
                basis,
                f,
                g,
                h,
                omega,
            })
    })
}

fn close(a: Complex64, b: Complex64, scale: f64) -> bool {
    (a - b).norm() <= 1e-12 * scale.max(1.0)
}

fn dist(a: &FockVector, b: &FockVector) -> f64 {
    (a.coeffs() - b.coeffs()).norm()
}

/// Zeroes the top graded block.
fn safe(psi: &FockVector) -> FockVector {
    let mut out = psi.clone();
    let top = psi.basis().block(psi.basis().max_bosons());
    for s in top {
        out.coeffs_mut()[s] = Complex64::new(0.0, 0.0);
    }
    out
}

/// `[a(f), a†(g)]ψ = ⟨f,g⟩ψ` and `[a(f), a(g)]ψ = 0` below the top level.
pub fn ccr(c: &Case) -> Result<(), TestCaseError> {
    let psi = safe(&c.psi);
    let lhs = annihilate(&c.f, &create(&c.g, &psi)?)?;
    let rhs = create(&c.g, &annihilate(&c.f, &psi)?)?;
    let comm = FockVector::new(psi.basis().clone(), lhs.coeffs() - rhs.coeffs()).unwrap();
    let expected = FockVector::new(psi.basis().clone(), psi.coeffs() * c.f.inner(&c.g)).unwrap();
    prop_assert!(dist(&comm, &expected) <= 1e-12 * (1.0 + psi.norm() * 10.0));
    let ab = annihilate(&c.f, &annihilate(&c.g, &psi)?)?;
    let ba = annihilate(&c.g, &annihilate(&c.f, &psi)?)?;
    prop_assert!(dist(&ab, &ba) <= 1e-12 * (1.0 + psi.norm() * 10.0));
    Ok(())
}

/// `⟨a(f)ψ, φ⟩ = ⟨ψ, a†(f)φ⟩` and `matrix(a†(f)) = matrix(a(f))†`.
pub fn adjointness(c: &Case) -> Result<(), TestCaseError> {
    let l = annihilate(&c.f, &c.psi)?.inner(&c.phi)?;
    let r = c.psi.inner(&create(&c.f, &c.phi)?)?;
    prop_assert!(close(l, r, c.psi.norm() * c.phi.norm() * 10.0));
    let a = annihilation_operator(&c.basis, &c.f)?;
    let ad = creation_operator(&c.basis, &c.f)?;
    prop_assert!(ad.max_entry_distance(&a.adjoint())? <= 1e-12 * (1.0 + c.f.norm()) * 3.0);
    Ok(())
}

/// `‖a(f)ψ‖ ≤ ‖ω^{−1/2} f‖ · ‖dΓ(ω)^{1/2} ψ‖`.
pub fn relative_bound(c: &Case) -> Result<(), TestCaseError> {
    let lhs = annihilate(&c.f, &c.psi)?.norm();
    let f_w: f64 = c.f.as_slice().iter().zip(&c.omega).map(|(x, w)| x.norm_sqr() / w).sum::<f64>().sqrt();
    let dg = second_quantize(&c.basis, &c.omega)?.diagonal();
    let half: f64 = c.psi.coeffs().iter().zip(dg.iter()).map(|(x, e)| x.norm_sqr() * e.re).sum::<f64>().sqrt();
    prop_assert!(lhs <= f_w * half * (1.0 + 1e-12) + 1e-14, "{lhs} > {}", f_w * half);
    Ok(())
}

/// Spectral norm of the truncated `F_t^ω(f)` is at most `e^{4‖f‖_ω²}`.
pub fn f_norm_bound(c: &Case) -> Result<(), TestCaseError> {
    for t in [0.1, 1.0, 10.0] {
        let op = f_operator(&c.basis, t, &c.f, &c.omega)?.into_dense();
        let norm = op.singular_values().iter().copied().fold(0.0, f64::max);
        let bound = (4.0 * c.f.omega_norm(&c.omega).powi(2)).exp();
        prop_assert!(norm <= bound * (1.0 + 1e-12), "t={t}: {norm} > {bound}");
    }
    Ok(())
}

/// `F_t^ω(f) ε(h) = ε(f + e^{−tω} h)` and `a(f) ε(h) = ⟨f,h⟩ ε(h)` below the top level.
pub fn exponential_vectors(c: &Case) -> Result<(), TestCaseError> {
    let eps = exponential_vector(&c.basis, &c.h)?;
    for t in [0.1, 1.0, 10.0] {
        let lhs = apply_f(t, &c.f, &c.omega, &eps)?;
        let decay: Vec<f64> = c.omega.iter().map(|w| (-t * w).exp()).collect();
        let rhs = exponential_vector(&c.basis, &c.f.add(&c.h.mul_modes(&decay)))?;
        prop_assert!(dist(&lhs, &rhs) <= 1e-12 * (1.0 + rhs.norm()));
    }
    let lowered = annihilate(&c.f, &eps)?;
    let expected = FockVector::new(c.basis.clone(), safe(&eps).coeffs() * c.f.inner(&c.h)).unwrap();
    prop_assert!(dist(&lowered, &expected) <= 1e-12 * (1.0 + expected.norm()));
    let n_max = c.basis.max_bosons() as i32;
    let z = c.h.inner(&c.g);
    let partial: Complex64 = (0..=n_max).map(|n| z.powi(n) / (1..=n).map(f64::from).product::<f64>()).sum();
    let e2 = exponential_vector(&c.basis, &c.g)?;
    prop_assert!(close(eps.inner(&e2)?, partial, partial.norm()));
    Ok(())
}

/// `Q_θ` and `1 − Q_θ` map the closed cone into itself; `Q_θ` is idempotent;
/// `e^{−t dΓ(ω)}` fixes the cone classification of every vector.
pub fn cone_and_projection(c: &Case) -> Result<(), TestCaseError> {
    let nonneg = FockVector::new(c.basis.clone(), c.psi.coeffs().map(|x| Complex64::new(x.norm(), 0.0))).unwrap();
    let q = restrict_q(&c.theta, &nonneg)?;
    prop_assert_ne!(cone_check(&q, 0.0), ConeClass::Outside);
    let rest = FockVector::new(c.basis.clone(), nonneg.coeffs() - q.coeffs()).unwrap();
    prop_assert_ne!(cone_check(&rest, 0.0), ConeClass::Outside);
    let qq = restrict_q(&c.theta, &q)?;
    prop_assert_eq!(qq.coeffs(), q.coeffs());
    let heat = heat_diagonal(&c.basis, 0.7, &c.omega);
    for v in [&nonneg, &c.psi] {
        let hv = FockVector::new(c.basis.clone(), DVector::from_iterator(c.basis.len(), v.coeffs().iter().zip(&heat).map(|(x, h)| x * *h))).unwrap();
        prop_assert_eq!(cone_check(&hv, 0.0), cone_check(v, 0.0));
    }
    Ok(())
}

pub type Property = fn(&Case) -> Result<(), TestCaseError>;

pub const PROPERTIES: [(&str, Property); 6] = [
    ("ccr", ccr),
    ("adjointness", adjointness),
    ("relative_bound", relative_bound),
    ("f_norm_bound", f_norm_bound),
    ("exponential_vectors", exponential_vectors),
    ("cone_and_projection", cone_and_projection),
];
