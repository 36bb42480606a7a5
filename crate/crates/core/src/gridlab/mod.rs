//! Shared numerical infrastructure: grids, quadrature, Fourier synthesis,
//! time derivatives, polynomial certification and spectra.

mod derivative;
mod fourier;
mod grid;
mod polyfit;
mod quadrature;
mod reduce;
mod spectrum;
mod time;
pub mod vec3;

pub use derivative::{fd_weights, min_samples, nth_time_derivative, Derivative};
pub use fourier::{check_conjugate, dft_synthesize, Fft3, Synthesizer};
pub use grid::{CVec3, FieldGrid, Payload, PayloadKind, Spinor, UniformGrid3, DEFAULT_NODE_BUDGET};
pub use polyfit::{fit_polynomial_degree, PolyFit};
pub use quadrature::{gauss_legendre, integrate_grid, SphereNode, SphereQuadrature};
pub use reduce::tree_reduce;
pub use spectrum::{
    band_power, scalar_spectrum, spectrum, Peak, Spectrum, Window, DEFAULT_PEAK_THRESHOLD,
    MIN_SPECTRUM_SAMPLES,
};
pub use time::TimeSampling;
pub use vec3::Vec3;
