//! Conic formulation of causal-separability robustness problems.

pub mod certify;
pub mod cone;
pub mod embed;
pub mod scan;
pub mod solver;

pub use certify::{
    apply_witness, certify, certify_with, check_witness, verify_witness, CertificationResult, CertifyOptions, Verdict,
    WitnessFamily, WitnessReport,
};
pub use cone::{ConeKind, ConeSpec, FactorSplit};
pub use embed::embed_complex;
pub use scan::{threshold_scan, ScanOptions, ScanResult};
