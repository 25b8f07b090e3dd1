//! Dense oracles and the verification suite built on them.

mod fk;
mod flow;
mod oracle;
mod positivity;
mod renorm;
mod spectral;
mod trotter;

pub use fk::{fk_vs_oracle, flipped_coupling, FkEntry, FkOptions, FkReport};
pub use flow::{evolution_check, flow_check, EvolutionReport, FlowMode, FlowReport, ORACLE_FLOW_TOL};
pub use oracle::{
    compress, compressed_oracle, compressed_propagator, hermitian_eigen, oracle_expm, propagator, PropagatorMethod,
    MAGNUS_STEP,
};
pub use positivity::{positivity_audit, positivity_audit_estimate, Positivity, PositivityReport};
pub use renorm::{log_slope, renorm_scan, LogSlopeReport, RefinementRule, RenormEstimator, RenormReport, RenormRow};
pub use spectral::{dispersion_scan, ground_state, power_energy, DispersionRow, DispersionScan, SpectralReport, GAP_THRESHOLD, POWER_CHECK_MAX_DIM};
pub use trotter::{trotter_check, TrotterReport};
