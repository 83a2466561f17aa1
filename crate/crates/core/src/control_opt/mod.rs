//! Direct computation of the value function over step-control catalogs, the
//! law-level value, the Krylov metric and the stability probe.

mod catalog;
mod direct;
mod krylov;
mod mkv;
mod stability;

pub use catalog::{enumerate_step_controls, ControlCatalog, DEFAULT_CATALOG_CAP};
pub use direct::{batched_values, value_direct, value_direct_in, DirectValue};
pub use krylov::krylov_distance;
pub use mkv::{joint_mkv_value, value_mkv, JointMkvValue, MkvValue};
pub use stability::{fitted_constant, perturbed_control, stability_probe, Perturbation, StabilityRow};
