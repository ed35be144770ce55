pub mod assembly;
pub mod edgebasis;
pub mod error;
pub mod exec;
pub mod grid;
pub mod harness;
pub mod integrate;
pub mod msspace;
pub mod pou;
pub mod sparse;
