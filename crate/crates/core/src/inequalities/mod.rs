//! Margin evaluators and randomized verifiers for the spectral concavity
//! inequalities, the comparison superadditivity, the Cauchy induction step,
//! the Jacobi inequalities on sampled solutions and the divergence-free
//! structure of the `sigma_k` coefficients.

mod fields;
mod scan;
mod spectral;

pub use fields::{
    divergence_residual, dual_jacobi_margin, jacobi_margin, DivergenceResiduals, LogEigenField, DEFAULT_GAP,
};
pub use scan::{
    cauchy_required_constant, cauchy_scan, estimate_constants, spectrum_above_threshold, superadditivity_scan,
    threshold_grid, zhang_ratios, zhang_scaling_residual, zhang_verify, ConstantKind, MarginReport, Witness,
    CONCAVITY_TOL, SUPERADDITIVITY_TOL, ZHANG_NORMALIZATIONS,
};
pub use spectral::{
    cauchy_margin, cauchy_parts, f_tilde, guan_sroka_margin, guan_sroka_parts, guan_sroka_terms,
    superadditivity_margin, superadditivity_terms, zhang_constant, zhang_margin, zhang_terms, Margin,
};
