//! Time integration: φ₁, exponential Euler on the coarse space and the
//! backward-Euler fine reference.

pub mod exponential;
pub mod phi;
pub mod reaction;
pub mod reference;

pub use exponential::{
    run_exponential, step_count, CoarsePencil, ExpEulerIntegrator, Species, StepperState, VelocityUpdate,
};
pub use phi::{exp_phi1, expm, phi1_dense};
pub use reaction::{Reaction, ReactionModel, SourceFn};
pub use reference::{backward_euler_reference, FineSnapshot, NewtonStats, ReferenceOptions, ReferenceSpecies};
