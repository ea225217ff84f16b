//! Statevector and density-matrix simulation.
//!
//! Pure evolution is simulated on statevectors; density matrices only appear
//! when qubits are traced out.

mod exec;
mod gate;
mod mixed;
mod state;

pub use exec::{apply_gates, apply_gates_inverse, execute, run_circuit};
pub(crate) use exec::adjoint_angle_gradients;
pub use gate::{Gate, GateKind};
pub use mixed::{projection_prob, MixedState, DENSITY_TOL};
pub use state::{
    apply_gate, partial_trace, prob_zero_on, sample_zero_count, zero_state, PureState, MAX_QUBITS,
};
pub(crate) use state::check_register;
