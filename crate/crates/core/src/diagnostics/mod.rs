//! Diagnostics on trajectories and refinement ladders.

pub mod balance;
pub mod basic;
pub mod flux;
pub mod measures;
pub mod report;
pub mod residuals;

pub use balance::{balance_identity_defect, balance_identity_oracle, Manufactured, TrigField, TrigMode};
pub use basic::{check_basic, entropy_dissipation_balance, rho_cauchy_l2, rho_distance, segregation_overlap, BasicChecks};
pub use flux::{flux_identification_gap, FluxGap};
pub use measures::{
    covariance_identity_residual, dirac_collapse_metric, estimate_cell_measures, first_hit_residual, ladder_cell_measures,
    two_point_margin, CellMeasure, CollapseSummary,
};
pub use report::{admissibility_report, AdmissibilityReport, Check, ReportOptions, RungReport};
pub use residuals::{
    affine_residual_norms, family_residual_map, family_residual_norms, weak_solution_residual, FamilyResidual, HMinusOne,
    WeakResidual,
};
