//! Bit-string encoding of circuit architectures.
//!
//! A chromosome is a sequence of 5-bit genes. Gene `g` acts on qubit
//! `g mod n_qubits`. The first three bits choose the gate:
//!
//! | bits | gate |
//! |------|------|
//! | 000  | H    |
//! | 011  | RX   |
//! | 111  | RY   |
//! | 100  | RZ   |
//! | 001  | CNOT |
//! | else | I    |
//!
//! For rotations the last two bits pick the initial angle π, π/2, π/4, π/8;
//! for CNOT they pick the target offset 1..=4 from the control. Offsets wrap
//! modulo the register size and a CNOT that wraps onto its own control
//! decodes to the identity, so every bit string decodes.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::sim::{Gate, GateKind};

pub const GENE_BITS: usize = 5;

#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Chromosome {
    bits: Vec<bool>,
}

impl Chromosome {
    pub fn new(bits: Vec<bool>) -> Result<Self> {
        if bits.is_empty() || bits.len() % GENE_BITS != 0 {
            return Err(Error::MalformedChromosome(format!(
                "length {} is not a positive multiple of {GENE_BITS}",
                bits.len()
            )));
        }
        Ok(Chromosome { bits })
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub(crate) fn bits_mut(&mut self) -> &mut [bool] {
        &mut self.bits
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn n_gates(&self) -> usize {
        self.bits.len() / GENE_BITS
    }

    pub fn gene(&self, g: usize) -> &[bool] {
        &self.bits[g * GENE_BITS..(g + 1) * GENE_BITS]
    }

    /// Uniform random chromosome drawn from `rng`.
    pub fn random<R: Rng + ?Sized>(n_gates: usize, rng: &mut R) -> Result<Self> {
        if n_gates == 0 {
            return Err(invalid("a chromosome needs at least one gene"));
        }
        let bits = (0..n_gates * GENE_BITS).map(|_| rng.random::<bool>()).collect();
        Chromosome::new(bits)
    }
}

impl fmt::Display for Chromosome {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for &b in &self.bits {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl FromStr for Chromosome {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .trim()
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::MalformedChromosome(format!("unexpected character {other:?}"))),
            })
            .collect::<Result<Vec<_>>>()?;
        Chromosome::new(bits)
    }
}

impl TryFrom<String> for Chromosome {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Chromosome> for String {
    fn from(c: Chromosome) -> String {
        c.to_string()
    }
}

/// `n_gates` genes of i.i.d. uniform bits, reproducible from `seed`.
pub fn random_chromosome(n_gates: usize, seed: u64) -> Result<Chromosome> {
    Chromosome::random(n_gates, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Ordered gate list with a trainable parameter vector.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamCircuit {
    n_qubits: usize,
    gates: Vec<Gate>,
    n_params: usize,
    init_params: Vec<f64>,
}

impl ParamCircuit {
    /// Validates every gate and requires parameter slots to be allocated
    /// contiguously from 0 in gate order.
    pub fn new(n_qubits: usize, gates: Vec<Gate>, init_params: Vec<f64>) -> Result<Self> {
        if n_qubits == 0 {
            return Err(invalid("circuit needs at least one qubit"));
        }
        let mut next = 0;
        for g in &gates {
            g.validate(n_qubits)?;
            if let Some(slot) = g.param_slot {
                if slot != next {
                    return Err(invalid(format!(
                        "parameter slot {slot} out of order (expected {next})"
                    )));
                }
                next += 1;
            }
        }
        if init_params.len() != next {
            return Err(Error::DimensionMismatch {
                expected: next,
                got: init_params.len(),
            });
        }
        Ok(ParamCircuit {
            n_qubits,
            gates,
            n_params: next,
            init_params,
        })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn gates(&self) -> &[Gate] {
        &self.gates
    }

    pub fn n_params(&self) -> usize {
        self.n_params
    }

    pub fn init_params(&self) -> &[f64] {
        &self.init_params
    }

    pub fn has_data_scaled(&self) -> bool {
        self.gates.iter().any(|g| g.data_scaled)
    }

    /// Same circuit with the data-scaling flag of every rotation set to `on`.
    pub fn with_data_scaling(mut self, on: bool) -> Self {
        for g in &mut self.gates {
            if g.kind.is_rotation() {
                g.data_scaled = on;
            }
        }
        self
    }

    /// Per-gate rotation angle (0 for fixed gates).
    pub fn effective_angles(&self, params: &[f64], feature: Option<f64>) -> Result<Vec<f64>> {
        if params.len() != self.n_params {
            return Err(Error::DimensionMismatch {
                expected: self.n_params,
                got: params.len(),
            });
        }
        if feature.is_none() && self.has_data_scaled() {
            return Err(invalid("circuit has data-scaled gates but no feature value was given"));
        }
        let x = feature.unwrap_or(0.0);
        Ok(self
            .gates
            .iter()
            .map(|g| match g.param_slot {
                Some(s) if g.data_scaled => params[s] * x,
                Some(s) => params[s],
                None => 0.0,
            })
            .collect())
    }

    /// d(angle_gate)/d(param_slot) for each gate: the feature for
    /// data-scaled gates, 1 otherwise.
    pub(crate) fn angle_scale(&self, feature: f64) -> impl Iterator<Item = (Option<usize>, f64)> + '_ {
        self.gates
            .iter()
            .map(move |g| (g.param_slot, if g.data_scaled { feature } else { 1.0 }))
    }
}

/// Decodes a chromosome into a circuit whose rotations are all data-scaled.
pub fn decode(chromosome: &Chromosome, n_qubits: usize) -> Result<ParamCircuit> {
    if n_qubits == 0 {
        return Err(invalid("decode needs at least one qubit"));
    }
    let mut gates = Vec::with_capacity(chromosome.n_gates());
    let mut init = Vec::new();
    for g in 0..chromosome.n_gates() {
        let gene = chromosome.gene(g);
        let qubit = g % n_qubits;
        let tail = (gene[3] as usize) << 1 | gene[4] as usize;
        let gate = match (gene[0], gene[1], gene[2]) {
            (false, false, false) => Gate::h(qubit),
            (false, true, true) | (true, true, true) | (true, false, false) => {
                let kind = match (gene[0], gene[1]) {
                    (false, true) => GateKind::Rx,
                    (true, true) => GateKind::Ry,
                    _ => GateKind::Rz,
                };
                let slot = init.len();
                init.push(std::f64::consts::PI / (1u32 << tail) as f64);
                Gate::rotation(kind, qubit, slot, true)
            }
            (false, false, true) => {
                let target = (qubit + tail + 1) % n_qubits;
                if target == qubit {
                    Gate::identity(qubit)
                } else {
                    Gate::cnot(qubit, target)
                }
            }
            _ => Gate::identity(qubit),
        };
        gates.push(gate);
    }
    ParamCircuit::new(n_qubits, gates, init)
}

/// Depth and gate counts of a circuit. Identity gates are not counted and do
/// not add depth.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitMetrics {
    pub depth: usize,
    pub h: usize,
    pub rx: usize,
    pub ry: usize,
    pub rz: usize,
    pub cnot: usize,
}

impl CircuitMetrics {
    pub fn rotations(&self) -> usize {
        self.rx + self.ry + self.rz
    }

    pub fn total(&self) -> usize {
        self.h + self.rotations() + self.cnot
    }
}

/// Greedy as-soon-as-possible layering.
pub fn circuit_metrics(circuit: &ParamCircuit) -> CircuitMetrics {
    let mut layer = vec![0usize; circuit.n_qubits()];
    let mut m = CircuitMetrics::default();
    for g in circuit.gates() {
        match g.kind {
            GateKind::Identity => continue,
            GateKind::H => m.h += 1,
            GateKind::Rx => m.rx += 1,
            GateKind::Ry => m.ry += 1,
            GateKind::Rz => m.rz += 1,
            GateKind::Cnot => m.cnot += 1,
        }
        let l = g.qubits().map(|q| layer[q]).max().unwrap_or(0) + 1;
        for q in g.qubits() {
            layer[q] = l;
        }
        m.depth = m.depth.max(l);
    }
    m
}
