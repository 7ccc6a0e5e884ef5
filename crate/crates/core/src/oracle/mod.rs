//! Enumeration ground truth and independent cross-checks.

mod degeneracy;
mod enumerate;
mod identities;
mod stationarity;
mod suite;

pub use degeneracy::{
    degenerate_scheme_probe, likelihood_slice, separability_witness, DegeneracyReport, MixedWitness, Separability,
    SEPARABILITY_TOL,
};
pub use enumerate::{enumerate_log_z, enumerate_log_z_backward, exact_marginals, EnumerationBudget, ExactMarginals};
pub use identities::{check_identity, IdentityCheck, IdentityName};
pub use stationarity::stationarity_residuals;
pub use suite::{validation_suite, Fault, ValidationRow, IDENTITY_TOL, ORDER_TOL};
