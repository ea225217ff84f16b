use num_complex::Complex64;

use super::gate::{Gate, GateKind};
use super::state::PureState;
use crate::codec::ParamCircuit;
use crate::error::{Error, Result};

/// Applies `gates` in order with per-gate `angles`, shifted by `offset` qubits.
pub fn apply_gates(state: &mut PureState, gates: &[Gate], angles: &[f64], offset: usize) -> Result<()> {
    if gates.len() != angles.len() {
        return Err(Error::DimensionMismatch {
            expected: gates.len(),
            got: angles.len(),
        });
    }
    for (g, &a) in gates.iter().zip(angles) {
        state.apply_at(g, a, offset)?;
    }
    Ok(())
}

/// Applies the adjoint of the gate sequence: reversed order, negated angles.
pub fn apply_gates_inverse(
    state: &mut PureState,
    gates: &[Gate],
    angles: &[f64],
    offset: usize,
) -> Result<()> {
    if gates.len() != angles.len() {
        return Err(Error::DimensionMismatch {
            expected: gates.len(),
            got: angles.len(),
        });
    }
    for (g, &a) in gates.iter().zip(angles).rev() {
        state.apply_at(g, -a, offset)?;
    }
    Ok(())
}

/// Runs a gate list with explicit per-gate angles from |0...0>.
pub fn execute(n_qubits: usize, gates: &[Gate], angles: &[f64]) -> Result<PureState> {
    let mut s = PureState::zero(n_qubits)?;
    apply_gates(&mut s, gates, angles, 0)?;
    Ok(s)
}

/// Runs `circuit` from |0...0>. Data-scaled rotations use `params[slot] * feature`.
pub fn run_circuit(circuit: &ParamCircuit, params: &[f64], feature: Option<f64>) -> Result<PureState> {
    let angles = circuit.effective_angles(params, feature)?;
    execute(circuit.n_qubits(), circuit.gates(), &angles)
}

/// <a| P_target |b> for the Pauli generator of a rotation kind.
fn generator_braket(a: &[Complex64], b: &[Complex64], kind: GateKind, bit: usize) -> Complex64 {
    let i = Complex64::new(0.0, 1.0);
    let mut acc = Complex64::new(0.0, 0.0);
    let dim = a.len();
    let mut base = 0;
    while base < dim {
        for lo in base..base + bit {
            let hi = lo | bit;
            // (P b) at lo and hi
            let (pl, ph) = match kind {
                GateKind::Rx => (b[hi], b[lo]),
                GateKind::Ry => (-i * b[hi], i * b[lo]),
                GateKind::Rz => (b[lo], -b[hi]),
                _ => unreachable!(),
            };
            acc += a[lo].conj() * pl + a[hi].conj() * ph;
        }
        base += bit << 1;
    }
    acc
}

/// Reverse-mode derivatives of a real loss with respect to every gate angle.
///
/// `state` must be the output of the gate sequence and `cotangent` the
/// Wirtinger derivative ∂L/∂ψ* at that output. Non-rotation gates get 0.
pub(crate) fn adjoint_angle_gradients(
    gates: &[Gate],
    angles: &[f64],
    mut state: PureState,
    cotangent: Vec<Complex64>,
    offset: usize,
) -> Result<Vec<f64>> {
    let n = state.n_qubits();
    let mut lam = PureState::from_amplitudes(cotangent)?;
    let mut grads = vec![0.0; gates.len()];
    for (k, (g, &a)) in gates.iter().zip(angles).enumerate().rev() {
        if g.kind.is_rotation() {
            let bit = 1usize << (n - 1 - (g.target + offset));
            grads[k] = generator_braket(lam.amplitudes(), state.amplitudes(), g.kind, bit).im;
        }
        if g.kind != GateKind::Identity {
            state.apply_at(g, -a, offset)?;
            lam.apply_at(g, -a, offset)?;
        }
    }
    Ok(grads)
}
