//! The N-body mean-field system with switching, its split coupling, the
//! radial function `G` with the drift condition it satisfies, and the small
//! built-in demo models.

mod builtins;
mod drift;
mod gfunc;
mod params;
pub mod quad;
mod sim;

pub use builtins::{default_ou, logistic_model, ou_benchmark, OuOracle};
pub use drift::{drift_condition_check, drift_condition_check_with, drift_grid, DriftReport, DriftRow};
pub use gfunc::{f_value, g_fn, g_infinity_bound, g_second, GFunctionTable, GParams, G_fn, CUTOFF_DROP, DEFAULT_TOL};
pub use params::{
    default_mf_rates, dissipation_excess, lambda_split, mf_drift, mf_model, MeanFieldModel, MeanFieldParams,
    SampledConstants, SplitDiffusion,
};
pub use sim::{mf_coupled_simulate, mf_euler_path, mf_meeting_time, write_mf_summary_csv, MfCouplingRow};
