//! Monte Carlo Feynman–Kac simulation of translation-invariant Nelson-type
//! Hamiltonians on a truncated, momentum-discretized Fock space.
//!
//! The crate is organized bottom-up:
//!
//! - [`fock`]: occupation-number basis, ladder operators, `F_t^ω`, cone tests.
//! - [`model`]: grids, dispersions, couplings, `H(P)`, `E_Λ`, the remainder `L`.
//! - [`levy`]: Brownian and relativistic path sampling with statistical checks.
//! - [`pathint`]: path functionals and the Monte Carlo semigroup estimator.
//! - [`analysis`]: dense oracles and the verification suite.
//!
//! ```
//! use nelson_fk::prelude::*;
//!
//! let grid = ModeGrid::from_cells(1, vec![(vec![0.5], 1.0), (vec![-0.5], 1.0)]).unwrap();
//! let model = Model::new(
//!     ParticleDispersion::NonRel,
//!     BosonDispersion::Massive { m: 1.0 },
//!     CouplingSpec::NelsonUV { lambda: -0.8, cutoff: None },
//!     grid,
//! )
//! .unwrap();
//! let basis = enumerate_basis(2, 2).unwrap();
//! let h = build_hamiltonian(&model, &[0.0], &basis).unwrap();
//! let s = oracle_expm(&h, 1.0).unwrap();
//! assert!(s.to_dense().iter().all(|c| c.re > 0.0));
//! ```

// `!(x > 0.0)` comparisons deliberately reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod error;
pub mod fock;
pub mod io;
pub mod levy;
pub mod model;
pub mod pathint;
pub mod stats;

pub use error::{Error, Result};

/// Library version.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Common imports.
pub mod prelude {
    pub use crate::analysis::{
        dispersion_scan, evolution_check, fk_vs_oracle, flow_check, ground_state, oracle_expm, positivity_audit,
        positivity_audit_estimate, propagator, renorm_scan, trotter_check, Positivity,
    };
    pub use crate::error::{Error, Result};
    pub use crate::fock::{enumerate_basis, FockBasis, FockOperator, FockVector, OneBosonVector};
    pub use crate::levy::{sample_path, LevyPath, LevyProcessSpec, TimeGrid};
    pub use crate::model::{
        build_grid, build_hamiltonian, BosonDispersion, CouplingSpec, GridSpec, Model, ModelSpec, ModeGrid,
        ParticleDispersion,
    };
    pub use crate::pathint::{mc_semigroup, McParams, SemigroupEstimate, TimeProfile};
}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    struct Introduction;
    #[doc = include_str!("../../../book/src/fock-space.md")]
    struct FockSpace;
    #[doc = include_str!("../../../book/src/models.md")]
    struct Models;
    #[doc = include_str!("../../../book/src/levy.md")]
    struct Levy;
    #[doc = include_str!("../../../book/src/feynman-kac.md")]
    struct FeynmanKac;
    #[doc = include_str!("../../../book/src/positivity.md")]
    struct Positivity;
    #[doc = include_str!("../../../book/src/renormalization.md")]
    struct Renormalization;
    #[doc = include_str!("../../../book/src/trotter.md")]
    struct Trotter;
    #[doc = include_str!("../../../book/src/cli.md")]
    struct Cli;
}
