//! Local iterative Lie-Schwinger block-diagonalization of gapped quantum
//! lattice Hamiltonians on finite lattices, with exact-diagonalization checks
//! of the resulting effective Hamiltonian.

extern crate blas_src;

pub mod cli;
pub mod error;
pub mod expansion;
pub mod flow;
pub mod lattice;
pub mod lie_schwinger;
pub mod model;
pub mod tensor;
pub mod verify;

pub use error::{Error, Result};
pub use flow::{run_flow, FlowOptions, FlowState, InteractionMap};
pub use lattice::{LatticeSpec, Rect};
pub use model::ModelSpec;
pub use tensor::{LocalOp, C64};
