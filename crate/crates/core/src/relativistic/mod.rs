//! Klein-Gordon and Dirac states synthesized from momentum-space branch
//! amplitudes, and spectral analysis of their moment series.

mod dirac;
mod kg;
mod zitter;

pub use dirac::{
    branch_basis, dirac_current, dirac_hamiltonian, dirac_synthesize, BranchBasis, DiracComponent,
    DiracSource, DiracState, DEGENERACY_TOLERANCE,
};
pub use kg::{
    kg_current, kg_evolve_and_synthesize, kg_omega, KGState, KgFields, KgSource, SHELL_TOLERANCE,
};
pub use zitter::{zitterbewegung_report, ZitterReport, ZITTER_FLOOR};
