//! Independent brute-force cross-checks and the inequality chain of the
//! nonexistence theorem.

mod curvature;
mod divergence;
mod identities;
mod theorem;
mod variation;

pub use curvature::{fd_curvature_check, DEFAULT_CURVATURE_STEP, MAX_CURVATURE_STEP, MIN_CURVATURE_STEP};
pub use divergence::{divergence_identity_check, DivergenceCheck};
pub use identities::{
    curvature_identity_suite, curvature_oracle_suite, gradient_split_residual, lemma_residuals,
    lemma_suite, random_instance, random_quadratic_factor, CurvatureOracleResiduals,
    CurvatureResiduals, LemmaResiduals, RandomInstance,
};
pub use theorem::{
    main_theorem_check, Inequality, Relation, TheoremVerdict, VerdictStatus, NODE_STREAM_OFFSET,
};
pub use variation::{
    fd_first_variation, fd_second_variation, SecondVariation, VariationPath, DEFAULT_T_STEP, FD_VARIATION_CHART_STEP,
};
