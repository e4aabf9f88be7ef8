//! Coupling-time tails, variation-distance bounds, rate fits, and the
//! closed-form ergodicity constants.

mod bounds;
mod constants;
mod fit;
mod histogram;
mod tail;

pub use bounds::{
    beta_upper_bound, geometric_tail_check, moment_checks, moment_mgf_bounds, polylog_bound_check, polylog_neg,
    write_checks_csv, BoundTable, CheckRow, GeometricRow, PolylogCheck,
};
pub use constants::TheoryConstants;
pub use fit::{fit_beta, BetaFit, POOR_FIT_RMS};
pub use histogram::{histogram_tv, TvEstimate};
pub use tail::{estimate_tail, time_grid, tv_upper_bound, TailCurve};
