//! The coupled process: reflection/march/independent diffusion coupling,
//! basic coupling of the switching rates, and meeting/coupling times.

mod certificate;
mod engine;
mod generator;
mod jump_law;
mod reflection;

pub use certificate::{empirical_tk_certificate, f_condition_check, FCheck, PairEstimate, TkCertificate};
pub use engine::{
    couple_batch, simulate_coupled, write_summary_csv, CoupledEvent, CoupledInit, CoupledOutcome, CoupledPath,
    CoupledState, CoupledStepper, CouplingSummary, StopRule, ZetaEvent, ZetaKind,
};
pub use generator::{coupling_generator_apply, CoupledTestFn, RadialFn};
pub use jump_law::{coupled_jump_law, expected_total, marginal_consistency_check, CoupledJumpLaw, RegimePair};
pub use reflection::{coupled_diffusion, coupling_case, reflection_matrix, CoupledDiffusion, CouplingCase, ReflectionMatrix};
