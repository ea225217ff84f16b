use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The gate alphabet reachable from a chromosome, plus the identity filler.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GateKind {
    H,
    Rx,
    Ry,
    Rz,
    Cnot,
    Identity,
}

impl GateKind {
    pub fn is_rotation(self) -> bool {
        matches!(self, GateKind::Rx | GateKind::Ry | GateKind::Rz)
    }

    pub fn name(self) -> &'static str {
        match self {
            GateKind::H => "H",
            GateKind::Rx => "RX",
            GateKind::Ry => "RY",
            GateKind::Rz => "RZ",
            GateKind::Cnot => "CNOT",
            GateKind::Identity => "I",
        }
    }
}

/// A gate placed on a register.
///
/// Rotations read their angle from `param_slot` in the circuit parameter
/// vector; when `data_scaled` is set the angle is multiplied by the current
/// feature value.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub kind: GateKind,
    pub target: usize,
    pub control: Option<usize>,
    pub param_slot: Option<usize>,
    pub data_scaled: bool,
}

impl Gate {
    pub fn h(target: usize) -> Self {
        Self::fixed(GateKind::H, target)
    }

    pub fn identity(target: usize) -> Self {
        Self::fixed(GateKind::Identity, target)
    }

    pub fn cnot(control: usize, target: usize) -> Self {
        Gate {
            kind: GateKind::Cnot,
            target,
            control: Some(control),
            param_slot: None,
            data_scaled: false,
        }
    }

    pub fn rotation(kind: GateKind, target: usize, slot: usize, data_scaled: bool) -> Self {
        debug_assert!(kind.is_rotation());
        Gate {
            kind,
            target,
            control: None,
            param_slot: Some(slot),
            data_scaled,
        }
    }

    pub fn rx(target: usize, slot: usize) -> Self {
        Self::rotation(GateKind::Rx, target, slot, false)
    }

    pub fn ry(target: usize, slot: usize) -> Self {
        Self::rotation(GateKind::Ry, target, slot, false)
    }

    pub fn rz(target: usize, slot: usize) -> Self {
        Self::rotation(GateKind::Rz, target, slot, false)
    }

    fn fixed(kind: GateKind, target: usize) -> Self {
        Gate {
            kind,
            target,
            control: None,
            param_slot: None,
            data_scaled: false,
        }
    }

    /// Qubits touched by the gate.
    pub fn qubits(&self) -> impl Iterator<Item = usize> {
        self.control.into_iter().chain(std::iter::once(self.target))
    }

    /// Checks the structural invariants against a register size.
    pub fn validate(&self, n_qubits: usize) -> Result<()> {
        for q in self.qubits() {
            if q >= n_qubits {
                return Err(Error::QubitOutOfRange { index: q, n_qubits });
            }
        }
        match (self.kind, self.control) {
            (GateKind::Cnot, Some(c)) if c == self.target => {
                return Err(Error::InvalidArgument(format!(
                    "CNOT control and target coincide on qubit {c}"
                )))
            }
            (GateKind::Cnot, None) => {
                return Err(Error::InvalidArgument("CNOT without control".into()))
            }
            (k, Some(_)) if k != GateKind::Cnot => {
                return Err(Error::InvalidArgument(format!(
                    "{} gate cannot carry a control",
                    k.name()
                )))
            }
            _ => {}
        }
        if self.kind.is_rotation() != self.param_slot.is_some() {
            return Err(Error::InvalidArgument(format!(
                "{} gate parameter slot mismatch",
                self.kind.name()
            )));
        }
        Ok(())
    }
}
