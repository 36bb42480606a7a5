//! Moment integrals `I_m`, the far-field multipole series, Poynting power
//! and the polynomial non-radiation certificate.

mod certify;
mod farfield;
mod moments;

pub use certify::{
    certify_nonradiation, certify_series, Certification, CertifyTolerances, OrderCertificate,
};
pub use farfield::{
    farfield_b, farfield_e, larmor_power, radiate, radiated_power, FarFieldSample,
    ObservationGeometry, RadiationReport,
};
pub use moments::{
    compute_moment, direct_series, monomials, multinomial, CartesianMoments, MomentHistory,
    MomentSeries, BOUNDARY_DECAY_TOLERANCE,
};
