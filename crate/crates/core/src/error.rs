use thiserror::Error;

/// Numerical and structural rejections raised by the simulation modules.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("node budget exceeded: {requested} samples requested, budget is {budget}")]
    BudgetExceeded { requested: usize, budget: usize },

    #[error("non-finite value at node {index}")]
    NonFinite { index: usize },

    #[error("grids are not conjugate: {0}")]
    NonConjugate(String),

    #[error("series too short: need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("band limit violated: worst margin {margin:.6} (needs > 0)")]
    BandLimit { margin: f64 },

    #[error(
        "packet escapes grid: {outside:.3e} of the norm lies outside; suggested half-extent {suggested_half_extent:?}"
    )]
    GridEscape {
        outside: f64,
        suggested_half_extent: [f64; 3],
    },

    #[error("current does not decay at the grid boundary: boundary/peak = {ratio:.3e}")]
    BoundaryDecay { ratio: f64 },

    #[error("under-resolved sampling: {samples_per_period:.2} samples per period of the fastest frequency (need >= 8)")]
    UnderResolved { samples_per_period: f64 },

    #[error("energy branches nearly degenerate at node {index}: separation {separation:.3e}")]
    DegenerateBranches { index: usize, separation: f64 },

    #[error("history window underflow: need [{need_start}, {need_end}], stored [{have_start}, {have_end}]")]
    HistoryWindow {
        need_start: f64,
        need_end: f64,
        have_start: f64,
        have_end: f64,
    },

    #[error("malformed container: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, Error>;
