//! Numerical laboratory for the random field Curie-Weiss model.
//!
//! * [`field_dist`]: the random-field law ν and seeded realizations.
//! * [`g_analysis`]: the function G, its derivatives, minima and phases.
//! * [`exact_engine`]: exact quenched law of the magnetization and the
//!   Gaussian-smoothed (Hubbard-Stratonovich) density.
//! * [`mc_engine`]: Glauber dynamics sampler.
//! * [`rate_theory`]: large and moderate deviation rate functions.
//! * [`verifier`]: experiments comparing finite-n laws to the limits.
//! * [`cli`]: the `rfcw` command line.

pub mod cli;
pub mod error;
pub mod exact_engine;
pub mod field_dist;
pub mod g_analysis;
pub mod json;
pub mod mc_engine;
pub mod numeric;
pub mod rate_theory;
pub mod verifier;

pub use error::{Error, Result};
pub use field_dist::{FieldDistribution, FieldRealization};
pub use g_analysis::{GFunction, MinimumInfo, Phase, PhaseClassification};
