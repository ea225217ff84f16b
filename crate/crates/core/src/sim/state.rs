use std::f64::consts::FRAC_1_SQRT_2;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

use super::gate::{Gate, GateKind};
use super::mixed::MixedState;
use crate::error::{invalid, Error, Result};

/// Largest register the simulator will allocate.
pub const MAX_QUBITS: usize = 20;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);
const ONE: Complex64 = Complex64::new(1.0, 0.0);

/// Statevector over `n_qubits` qubits.
///
/// Basis index is the big-endian bit string of the register: qubit 0 is the
/// most significant bit.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    n_qubits: usize,
    amps: Vec<Complex64>,
}

pub(crate) fn check_register(what: &'static str, n_qubits: usize) -> Result<()> {
    if n_qubits == 0 {
        return Err(invalid(format!("{what}: register must have at least one qubit")));
    }
    if n_qubits > MAX_QUBITS {
        return Err(Error::Resource {
            what,
            requested: n_qubits,
            max: MAX_QUBITS,
        });
    }
    Ok(())
}

#[inline]
fn mask(n_qubits: usize, qubit: usize) -> usize {
    1 << (n_qubits - 1 - qubit)
}

impl PureState {
    /// |0...0> on `n_qubits` qubits.
    pub fn zero(n_qubits: usize) -> Result<Self> {
        check_register("zero state", n_qubits)?;
        let mut amps = vec![ZERO; 1 << n_qubits];
        amps[0] = ONE;
        Ok(PureState { n_qubits, amps })
    }

    /// Wraps raw amplitudes. The length must be a power of two; the vector is
    /// taken as given (no renormalisation).
    pub fn from_amplitudes(amps: Vec<Complex64>) -> Result<Self> {
        let len = amps.len();
        if len < 2 || !len.is_power_of_two() {
            return Err(invalid(format!(
                "amplitude vector length {len} is not a power of two >= 2"
            )));
        }
        let n_qubits = len.trailing_zeros() as usize;
        check_register("state", n_qubits)?;
        Ok(PureState { n_qubits, amps })
    }

    pub fn n_qubits(&self) -> usize {
        self.n_qubits
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amps
    }

    pub fn norm(&self) -> f64 {
        self.amps.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
    }

    /// <self|other>
    pub fn inner(&self, other: &PureState) -> Result<Complex64> {
        if self.dim() != other.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: other.dim(),
            });
        }
        Ok(inner(&self.amps, &other.amps))
    }

    /// |self> ⊗ |other>, with `self` on the leading (most significant) qubits.
    pub fn tensor(&self, other: &PureState) -> Result<PureState> {
        check_register("tensor product", self.n_qubits + other.n_qubits)?;
        let mut amps = Vec::with_capacity(self.dim() * other.dim());
        for a in &self.amps {
            amps.extend(other.amps.iter().map(|b| a * b));
        }
        Ok(PureState {
            n_qubits: self.n_qubits + other.n_qubits,
            amps,
        })
    }

    /// Applies `gate` in place. `angle` is ignored for H, CNOT and identity.
    pub fn apply(&mut self, gate: &Gate, angle: f64) -> Result<()> {
        self.apply_at(gate, angle, 0)
    }

    /// Applies `gate` with its qubit indices shifted by `offset`.
    pub fn apply_at(&mut self, gate: &Gate, angle: f64, offset: usize) -> Result<()> {
        for q in gate.qubits() {
            if q + offset >= self.n_qubits {
                return Err(Error::QubitOutOfRange {
                    index: q + offset,
                    n_qubits: self.n_qubits,
                });
            }
        }
        let target = gate.target + offset;
        match gate.kind {
            GateKind::Identity => {}
            GateKind::H => {
                let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
                self.apply_single(target, [h, h, h, -h]);
            }
            GateKind::Cnot => {
                let control = gate
                    .control
                    .ok_or_else(|| invalid("CNOT without control"))?
                    + offset;
                if control == target {
                    return Err(invalid("CNOT control equals target"));
                }
                self.apply_cnot(control, target);
            }
            kind => self.apply_single(target, rotation_matrix(kind, angle)),
        }
        Ok(())
    }

    /// Row-major 2x2 matrix [a, b, c, d] on `target`.
    fn apply_single(&mut self, target: usize, m: [Complex64; 4]) {
        let bit = mask(self.n_qubits, target);
        let [a, b, c, d] = m;
        let dim = self.amps.len();
        let mut base = 0;
        while base < dim {
            for i in base..base + bit {
                let j = i | bit;
                let (x, y) = (self.amps[i], self.amps[j]);
                self.amps[i] = a * x + b * y;
                self.amps[j] = c * x + d * y;
            }
            base += bit << 1;
        }
    }

    fn apply_cnot(&mut self, control: usize, target: usize) {
        let cbit = mask(self.n_qubits, control);
        let tbit = mask(self.n_qubits, target);
        for i in 0..self.amps.len() {
            if i & cbit != 0 && i & tbit == 0 {
                self.amps.swap(i, i | tbit);
            }
        }
    }

    fn subset_mask(&self, subset: &[usize]) -> Result<usize> {
        if subset.is_empty() {
            return Err(invalid("qubit subset must be nonempty"));
        }
        let mut m = 0;
        for &q in subset {
            if q >= self.n_qubits {
                return Err(Error::QubitOutOfRange {
                    index: q,
                    n_qubits: self.n_qubits,
                });
            }
            m |= mask(self.n_qubits, q);
        }
        Ok(m)
    }

    /// Probability that every qubit in `subset` reads 0, marginalising the rest.
    pub fn prob_zero_on(&self, subset: &[usize]) -> Result<f64> {
        let m = self.subset_mask(subset)?;
        let p: f64 = self
            .amps
            .iter()
            .enumerate()
            .filter(|(i, _)| i & m == 0)
            .map(|(_, a)| a.norm_sqr())
            .sum();
        Ok(p.clamp(0.0, 1.0))
    }

    /// Number of all-zero readouts on `subset` in `shots` simulated measurements.
    pub fn sample_zero_count(&self, subset: &[usize], shots: u64, seed: u64) -> Result<u64> {
        if shots == 0 {
            return Err(invalid("shot count must be at least 1"));
        }
        let p = self.prob_zero_on(subset)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dist = Binomial::new(shots, p).map_err(|e| invalid(e.to_string()))?;
        Ok(dist.sample(&mut rng))
    }

    /// Reduced density matrix over `keep` (kept qubits ordered ascending).
    pub fn partial_trace(&self, keep: &[usize]) -> Result<MixedState> {
        let keep_mask = self.subset_mask(keep)?;
        let n_keep = keep_mask.count_ones() as usize;
        let n_rest = self.n_qubits - n_keep;
        let dim_keep = 1usize << n_keep;
        let dim_rest = 1usize << n_rest;
        // Row k, column r of `a` holds the amplitude of the basis state whose
        // kept bits spell k and traced bits spell r.
        let mut a = DMatrix::<Complex64>::zeros(dim_keep, dim_rest);
        for (i, amp) in self.amps.iter().enumerate() {
            let (mut k, mut r) = (0usize, 0usize);
            for q in 0..self.n_qubits {
                let bit = (i >> (self.n_qubits - 1 - q)) & 1;
                if keep_mask & mask(self.n_qubits, q) != 0 {
                    k = (k << 1) | bit;
                } else {
                    r = (r << 1) | bit;
                }
            }
            a[(k, r)] = *amp;
        }
        let rho = &a * a.adjoint();
        MixedState::from_matrix_unchecked(n_keep, rho)
    }
}

pub(crate) fn inner(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn rotation_matrix(kind: GateKind, angle: f64) -> [Complex64; 4] {
    let (s, c) = (angle / 2.0).sin_cos();
    match kind {
        GateKind::Rx => [
            Complex64::new(c, 0.0),
            Complex64::new(0.0, -s),
            Complex64::new(0.0, -s),
            Complex64::new(c, 0.0),
        ],
        GateKind::Ry => [
            Complex64::new(c, 0.0),
            Complex64::new(-s, 0.0),
            Complex64::new(s, 0.0),
            Complex64::new(c, 0.0),
        ],
        GateKind::Rz => [
            Complex64::new(c, -s),
            ZERO,
            ZERO,
            Complex64::new(c, s),
        ],
        _ => unreachable!(),
    }
}

/// |0...0> on `n_qubits` qubits.
pub fn zero_state(n_qubits: usize) -> Result<PureState> {
    PureState::zero(n_qubits)
}

/// Returns U·state for a single gate.
pub fn apply_gate(state: &PureState, gate: &Gate, angle: f64) -> Result<PureState> {
    let mut out = state.clone();
    out.apply(gate, angle)?;
    Ok(out)
}

pub fn partial_trace(state: &PureState, keep: &[usize]) -> Result<MixedState> {
    state.partial_trace(keep)
}

pub fn prob_zero_on(state: &PureState, subset: &[usize]) -> Result<f64> {
    state.prob_zero_on(subset)
}

pub fn sample_zero_count(state: &PureState, subset: &[usize], shots: u64, seed: u64) -> Result<u64> {
    state.sample_zero_count(subset, shots, seed)
}
