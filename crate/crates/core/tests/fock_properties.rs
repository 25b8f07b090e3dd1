mod common;

use common::fock_properties::*;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn ccr_holds_below_the_top_level(c in case()) {
        ccr(&c)?;
    }

    #[test]
    fn creation_is_adjoint_of_annihilation(c in case()) {
        adjointness(&c)?;
    }

    #[test]
    fn annihilation_is_bounded_by_the_field_energy(c in case()) {
        relative_bound(&c)?;
    }

    #[test]
    fn f_operator_norm_bound(c in case()) {
        f_norm_bound(&c)?;
    }

    #[test]
    fn exponential_vector_identities(c in case()) {
        exponential_vectors(&c)?;
    }

    #[test]
    fn restrictions_preserve_the_cone(c in case()) {
        cone_and_projection(&c)?;
    }
}
