//! Numerical checks of the a priori estimates and of the identities used to
//! derive them.

mod estimates;
mod report;
mod spectral;

pub use estimates::{check_c0, check_c1, check_commutation, commutation_mismatch, K_STENCIL};
pub use report::{write_reports, EstimateReport, CSV_HEADER};
pub use spectral::{
    eigvec_field_checks, extremal_system_residual, structural_report, test_quantities,
    EigvecFieldReport, EigvecSample, ExtremalDetail, ExtremalReport, MonitorConfig,
    StructuralReport, TestQuantities, C_EXTREMAL,
};
