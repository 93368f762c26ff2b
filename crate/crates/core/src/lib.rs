//! Statevector simulation, parameter-shift differentiation and the quantum
//! encoder-decoder translation model built on them.

pub mod adam;
pub mod circuit;
pub mod corpus;
pub mod error;
mod fused;
pub mod gates;
pub mod gradient;
pub mod layers;
pub mod metrics;
pub mod model;
#[cfg(any(test, feature = "oracle"))]
pub mod oracle;
pub mod random_circuits;
pub mod statevector;
pub mod training;

pub use adam::{adam_step, OptimState};
pub use circuit::{run_circuit, Angle, ParamCircuit};
pub use error::{Error, Result};
pub use gates::{build_gate, GateKind, GateSpec};
pub use gradient::{finite_diff_grad, param_shift_grad, Jacobian};
pub use statevector::{apply_gate, deactivate_wire, expectation_z, new_state, StateVector, MAX_WIRES};
