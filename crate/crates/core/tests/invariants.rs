//! Property tests for the model, process, path functional and oracle layers.

use nelson_fk::analysis::*;
use nelson_fk::fock::*;
use nelson_fk::levy::*;
use nelson_fk::model::*;
use nelson_fk::pathint::*;
use proptest::prelude::*;

#[derive(Debug, Clone)]
struct Setup {
    model: Model,
    n_max: usize,
    p: f64,
}

fn particle() -> impl Strategy<Value = ParticleDispersion> {
    prop_oneof![Just(ParticleDispersion::NonRel), (0.2..2.0f64).prop_map(|mass| ParticleDispersion::SemiRel { mass })]
}

/// One-dimensional models with 1 to 3 random modes and `λ < 0`.
fn setup() -> impl Strategy<Value = Setup> {
    (
        particle(),
        prop::collection::vec((-2.0..2.0f64, 0.2..1.5f64), 1..=3),
        0.3..2.0f64,
        -1.5..-0.05f64,
        1usize..=3,
        -1.0..1.0f64,
    )
        .prop_map(|(particle, cells, m, lambda, n_max, p)| {
            let cells = cells.into_iter().map(|(k, w)| (vec![k], w)).collect();
            let grid = ModeGrid::from_cells(1, cells).unwrap();
            let model = Model::new(particle, BosonDispersion::Massive { m }, CouplingSpec::NelsonUV { lambda, cutoff: None }, grid).unwrap();
            Setup { model, n_max, p }
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn hamiltonian_is_real_symmetric_with_nonpositive_off_diagonal(s in setup()) {
        let basis = enumerate_basis(s.model.num_modes(), s.n_max).unwrap();
        let h = build_hamiltonian(&s.model, &[s.p], &basis).unwrap().into_dense();
        for i in 0..basis.len() {
            for j in 0..basis.len() {
                prop_assert_eq!(h[(i, j)].im, 0.0);
                prop_assert!((h[(i, j)] - h[(j, i)]).norm() <= 1e-14);
                if i != j {
                    prop_assert!(h[(i, j)].re <= 0.0);
                }
            }
        }
    }

    #[test]
    fn oracle_is_positivity_improving(s in setup(), t in 0.1..3.0f64) {
        let basis = enumerate_basis(s.model.num_modes(), s.n_max).unwrap();
        let h = build_hamiltonian(&s.model, &[s.p], &basis).unwrap();
        let report = positivity_audit(&oracle_expm(&h, t).unwrap(), 0.0, "");
        prop_assert_eq!(report.classification, Positivity::Improving);
    }

    #[test]
    fn power_iteration_matches_eigensolve(s in setup()) {
        let basis = enumerate_basis(s.model.num_modes(), s.n_max).unwrap();
        let h = build_hamiltonian(&s.model, &[s.p], &basis).unwrap();
        let g = ground_state(&h, None).unwrap();
        let power = g.power_energy.unwrap();
        prop_assert!((power - g.energy).abs() <= 1e-9 * g.energy.abs().max(1.0), "{} vs {}", power, g.energy);
        prop_assert!(g.perron);
    }

    #[test]
    fn char_exponent_is_nonnegative(k in prop::collection::vec(-20.0..20.0f64, 3), mass in 0.0..3.0f64) {
        for spec in [LevyProcessSpec::BrownianNR { d: 3 }, LevyProcessSpec::RelativisticSR { d: 3, mass }] {
            prop_assert!(char_exponent(&spec, &k) >= 0.0);
            prop_assert_eq!(char_exponent(&spec, &[0.0; 3]), 0.0);
        }
    }

    #[test]
    fn single_form_is_real_part_of_double_form(s in setup(), seed in any::<u64>(), steps in 4usize..48) {
        let profile = TimeProfile::nelson(&s.model);
        let grid = TimeGrid::new(0.0, 1.2, steps).unwrap();
        let path = sample_path(&s.model.levy(), &grid, seed, 0).unwrap();
        let single = u_single_form(&profile, 0.0, 1.2, &path, s.model.grid(), s.model.omega()).unwrap();
        let (am, ap) = evolution_kernels(&profile, s.model.omega());
        let double = compute_u_double(&*am, &*ap, 0.0, 1.2, &path, s.model.grid()).unwrap();
        prop_assert!((single.re - double.re).abs() <= 1e-8, "{} vs {}", single, double);
    }

    #[test]
    fn functionals_grow_at_most_with_window_length(s in setup(), seed in any::<u64>(), t in 0.2..3.0f64) {
        let profile = TimeProfile::nelson(&s.model);
        let grid = TimeGrid::new(0.0, t, 32).unwrap();
        let path = sample_path(&s.model.levy(), &grid, seed, 1).unwrap();
        let f = compute_nelson_functionals(&s.model, &profile, (0.0, t), &path).unwrap();
        let g = s.model.coupling_vector().norm();
        prop_assert!(f.u_minus.norm() <= t * g * (1.0 + 1e-12));
        prop_assert!(f.u_plus.norm() <= t * g * (1.0 + 1e-12));
        prop_assert!(f.u.norm() <= t * t * g * g * (1.0 + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn trotter_error_decreases(lambda in -1.2..-0.2f64, p1 in -0.8..0.8f64, p2 in -0.8..0.8f64) {
        let grid = ModeGrid::from_cells(1, vec![(vec![0.5], 1.0), (vec![-0.5], 1.0)]).unwrap();
        let model = Model::new(ParticleDispersion::NonRel, BosonDispersion::Massive { m: 1.0 }, CouplingSpec::NelsonUV { lambda, cutoff: None }, grid).unwrap();
        let basis = enumerate_basis(2, 2).unwrap();
        let r = trotter_check(&model, &[p1], &[p2], &[0], &[1], (0.0, 1.0), &[4, 8, 16], &basis).unwrap();
        prop_assert!(r.monotone, "{:?}", r.errors);
    }
}
