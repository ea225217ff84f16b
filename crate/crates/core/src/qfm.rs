//! Target kernel, circuit-induced kernel and the kernel-fit objective.

use std::f64::consts::FRAC_PI_2;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::ParamCircuit;
use crate::error::{invalid, Error, Result};
use crate::optimize::Objective;
use crate::sim::{adjoint_angle_gradients, execute, run_circuit, PureState};

/// Gaussian kernel bandwidth and the square the fitting pairs are drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct KernelSpec {
    pub gamma: f64,
    pub a: f64,
    pub b: f64,
    pub n_pairs: usize,
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec {
            gamma: 0.1,
            a: -3.0,
            b: 3.0,
            n_pairs: 10_000,
        }
    }
}

impl KernelSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(invalid(format!("bandwidth must be positive, got {}", self.gamma)));
        }
        if !(self.a < self.b) || !self.a.is_finite() || !self.b.is_finite() {
            return Err(invalid(format!("interval [{}, {}] is empty", self.a, self.b)));
        }
        if self.n_pairs == 0 {
            return Err(invalid("need at least one kernel pair"));
        }
        Ok(())
    }
}

/// Fitting pairs (x, x'), each coordinate in the kernel interval.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSet {
    pub pairs: Vec<(f64, f64)>,
}

impl PairSet {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// exp(-γ Σ (x_i - x'_i)²)
pub fn gaussian_kernel_sq(x: &[f64], y: &[f64], gamma: f64) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            got: y.len(),
        });
    }
    let d2: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok((-gamma * d2).exp())
}

#[inline]
fn kernel_1d(x: f64, y: f64, gamma: f64) -> f64 {
    (-gamma * (x - y) * (x - y)).exp()
}

/// `spec.n_pairs` i.i.d. uniform pairs on [a, b]².
pub fn sample_pairs(spec: &KernelSpec, seed: u64) -> Result<PairSet> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = (0..spec.n_pairs)
        .map(|_| (rng.random_range(spec.a..=spec.b), rng.random_range(spec.a..=spec.b)))
        .collect();
    Ok(PairSet { pairs })
}

/// |<ψ(x)|ψ(x')>|² for a single-feature circuit.
pub fn circuit_kernel_sq(circuit: &ParamCircuit, params: &[f64], x: f64, y: f64) -> Result<f64> {
    let a = run_circuit(circuit, params, Some(x))?;
    let b = run_circuit(circuit, params, Some(y))?;
    Ok(a.inner(&b)?.norm_sqr().clamp(0.0, 1.0))
}

fn pair_error(circuit: &ParamCircuit, params: &[f64], (x, y): (f64, f64), gamma: f64) -> Result<f64> {
    let diff = kernel_1d(x, y, gamma) - circuit_kernel_sq(circuit, params, x, y)?;
    Ok(diff * diff)
}

/// Mean over pairs of (Gaussian kernel − circuit kernel)².
///
/// Per-pair terms are accumulated in pair order, so the result does not
/// depend on how the terms were scheduled.
pub fn kernel_mse(circuit: &ParamCircuit, params: &[f64], pairs: &PairSet, gamma: f64) -> Result<f64> {
    if pairs.is_empty() {
        return Err(invalid("empty pair set"));
    }
    let terms = pairs
        .pairs
        .par_iter()
        .map(|&p| pair_error(circuit, params, p, gamma))
        .collect::<Result<Vec<f64>>>()?;
    Ok(terms.iter().sum::<f64>() / pairs.len() as f64)
}

/// Accumulates the parameter gradient of one side of a pair.
fn side_gradient(
    circuit: &ParamCircuit,
    angles: &[f64],
    state: PureState,
    cotangent: Vec<Complex64>,
    feature: f64,
    grad: &mut [f64],
) -> Result<()> {
    let per_gate = adjoint_angle_gradients(circuit.gates(), angles, state, cotangent, 0)?;
    for ((slot, scale), g) in circuit.angle_scale(feature).zip(per_gate) {
        if let Some(s) = slot {
            grad[s] += g * scale;
        }
    }
    Ok(())
}

fn pair_value_and_gradient(
    circuit: &ParamCircuit,
    params: &[f64],
    (x, y): (f64, f64),
    gamma: f64,
    weight: f64,
) -> Result<(f64, Vec<f64>)> {
    let ang_a = circuit.effective_angles(params, Some(x))?;
    let ang_b = circuit.effective_angles(params, Some(y))?;
    let a = execute(circuit.n_qubits(), circuit.gates(), &ang_a)?;
    let b = execute(circuit.n_qubits(), circuit.gates(), &ang_b)?;
    let o = a.inner(&b)?;
    let k = o.norm_sqr();
    let diff = k - kernel_1d(x, y, gamma);
    let mut grad = vec![0.0; params.len()];
    if !grad.is_empty() {
        // L = w (K - t)²,  ∂K/∂a* = b conj(o),  ∂K/∂b* = a o
        let w = 2.0 * weight * diff;
        let cot_a = b.amplitudes().iter().map(|v| v * o.conj() * w).collect();
        let cot_b = a.amplitudes().iter().map(|v| v * o * w).collect();
        side_gradient(circuit, &ang_a, a, cot_a, x, &mut grad)?;
        side_gradient(circuit, &ang_b, b, cot_b, y, &mut grad)?;
    }
    Ok((weight * diff * diff, grad))
}

/// Kernel MSE over the selected pairs and its exact gradient (adjoint
/// differentiation). `indices = None` uses every pair.
pub fn kernel_mse_gradient(
    circuit: &ParamCircuit,
    params: &[f64],
    pairs: &PairSet,
    indices: Option<&[usize]>,
    gamma: f64,
) -> Result<(f64, Vec<f64>)> {
    let n = indices.map_or(pairs.len(), <[usize]>::len);
    if n == 0 {
        return Err(invalid("empty pair selection"));
    }
    let weight = 1.0 / n as f64;
    let pick = |i: usize| indices.map_or(i, |ix| ix[i]);
    let terms = (0..n)
        .into_par_iter()
        .map(|i| pair_value_and_gradient(circuit, params, pairs.pairs[pick(i)], gamma, weight))
        .collect::<Result<Vec<_>>>()?;
    let mut value = 0.0;
    let mut grad = vec![0.0; params.len()];
    for (v, g) in terms {
        value += v;
        for (acc, gi) in grad.iter_mut().zip(g) {
            *acc += gi;
        }
    }
    Ok((value, grad))
}

/// Gradient of [`kernel_mse`] by the two-term parameter-shift rule.
///
/// Each parameter enters both kernel arguments through angles θ·x and θ·x';
/// the chain rule combines a ±π/2 shift of each occurrence, weighted by the
/// feature value that scales it.
pub fn kernel_mse_gradient_shift(
    circuit: &ParamCircuit,
    params: &[f64],
    pairs: &PairSet,
    gamma: f64,
) -> Result<Vec<f64>> {
    if pairs.is_empty() {
        return Err(invalid("empty pair set"));
    }
    let n_q = circuit.n_qubits();
    let gates = circuit.gates();
    let weight = 1.0 / pairs.len() as f64;
    let mut grad = vec![0.0; params.len()];
    for &(x, y) in &pairs.pairs {
        let ang_a = circuit.effective_angles(params, Some(x))?;
        let ang_b = circuit.effective_angles(params, Some(y))?;
        let a = execute(n_q, gates, &ang_a)?;
        let b = execute(n_q, gates, &ang_b)?;
        let diff = a.inner(&b)?.norm_sqr() - kernel_1d(x, y, gamma);
        let outer = 2.0 * weight * diff;
        for (g, (slot, _)) in circuit.angle_scale(0.0).enumerate() {
            let Some(s) = slot else { continue };
            let shifted = |angles: &[f64], other: &PureState, sign: f64| -> Result<f64> {
                let mut ang = angles.to_vec();
                ang[g] += sign * FRAC_PI_2;
                let st = execute(n_q, gates, &ang)?;
                Ok(st.inner(other)?.norm_sqr())
            };
            let scale_a = if gates[g].data_scaled { x } else { 1.0 };
            let scale_b = if gates[g].data_scaled { y } else { 1.0 };
            let da = (shifted(&ang_a, &b, 1.0)? - shifted(&ang_a, &b, -1.0)?) / 2.0;
            let db = (shifted(&ang_b, &a, 1.0)? - shifted(&ang_b, &a, -1.0)?) / 2.0;
            grad[s] += outer * (scale_a * da + scale_b * db);
        }
    }
    Ok(grad)
}

/// Product state ⊗_j ψ(x_j), features stacked in order on `d * n_x` qubits.
pub fn qfm_state(circuit: &ParamCircuit, params: &[f64], x: &[f64]) -> Result<PureState> {
    let (first, rest) = x
        .split_first()
        .ok_or_else(|| invalid("feature vector must be nonempty"))?;
    crate::sim::check_register("feature-map state", circuit.n_qubits() * x.len())?;
    let mut state = run_circuit(circuit, params, Some(*first))?;
    for &xj in rest {
        state = state.tensor(&run_circuit(circuit, params, Some(xj))?)?;
    }
    Ok(state)
}

/// A feature-map circuit together with its trained angles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub circuit: ParamCircuit,
    pub params: Vec<f64>,
}

impl FeatureMap {
    pub fn new(circuit: ParamCircuit, params: Vec<f64>) -> Result<Self> {
        if params.len() != circuit.n_params() {
            return Err(Error::DimensionMismatch {
                expected: circuit.n_params(),
                got: params.len(),
            });
        }
        Ok(FeatureMap { circuit, params })
    }

    /// Qubits per feature.
    pub fn n_qubits(&self) -> usize {
        self.circuit.n_qubits()
    }

    pub fn state(&self, x: &[f64]) -> Result<PureState> {
        qfm_state(&self.circuit, &self.params, x)
    }

    /// Per-gate angles for feature value `x`.
    pub fn angles(&self, x: f64) -> Result<Vec<f64>> {
        self.circuit.effective_angles(&self.params, Some(x))
    }
}

/// Kernel-fit objective over a frozen pair set.
///
/// With `batch = Some(b)` every descent step uses `b` pairs drawn with
/// replacement from a schedule fixed by `batch_seed`, identical for every
/// circuit that is trained against the same objective.
#[derive(Clone, Debug)]
pub struct KernelFit<'a> {
    pub circuit: &'a ParamCircuit,
    pub pairs: &'a PairSet,
    pub gamma: f64,
    pub batch: Option<usize>,
    pub batch_seed: u64,
}

impl KernelFit<'_> {
    fn batch_indices(&self, epoch: usize, b: usize) -> Vec<usize> {
        let seed = crate::optimize::mix_seed(self.batch_seed, epoch as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..b).map(|_| rng.random_range(0..self.pairs.len())).collect()
    }
}

impl Objective for KernelFit<'_> {
    fn value(&self, params: &[f64]) -> Result<f64> {
        kernel_mse(self.circuit, params, self.pairs, self.gamma)
    }

    fn gradient(&self, params: &[f64]) -> Result<Vec<f64>> {
        Ok(kernel_mse_gradient(self.circuit, params, self.pairs, None, self.gamma)?.1)
    }

    fn step(&self, params: &[f64], epoch: usize) -> Result<(f64, Vec<f64>)> {
        match self.batch {
            Some(b) if b < self.pairs.len() => {
                let idx = self.batch_indices(epoch, b);
                kernel_mse_gradient(self.circuit, params, self.pairs, Some(&idx), self.gamma)
            }
            _ => kernel_mse_gradient(self.circuit, params, self.pairs, None, self.gamma),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::{decode, random_chromosome};
    use crate::sim::{Gate, GateKind};

    fn single_ry() -> ParamCircuit {
        ParamCircuit::new(1, vec![Gate::rotation(GateKind::Ry, 0, 0, true)], vec![1.0]).unwrap()
    }

    #[test]
    fn gaussian_examples() {
        assert_eq!(gaussian_kernel_sq(&[0.4, -1.0], &[0.4, -1.0], 0.1).unwrap(), 1.0);
        let v = gaussian_kernel_sq(&[10f64.sqrt()], &[0.0], 0.1).unwrap();
        assert!((v - (-1.0f64).exp()).abs() < 1e-12);
        assert!((v - 0.3679).abs() < 1e-4);
        assert!(gaussian_kernel_sq(&[0.0], &[0.0, 1.0], 0.1).is_err());
    }

    #[test]
    fn gaussian_factorises() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let x: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            let y: Vec<f64> = (0..2).map(|_| rng.random_range(-3.0..3.0)).collect();
            let joint = gaussian_kernel_sq(&x, &y, 0.1).unwrap();
            let prod = kernel_1d(x[0], y[0], 0.1) * kernel_1d(x[1], y[1], 0.1);
            assert!((joint - prod).abs() < 1e-12);
        }
    }

    #[test]
    fn pair_sampling() {
        let spec = KernelSpec::default();
        let p = sample_pairs(&spec, 11).unwrap();
        assert_eq!(p.len(), 10_000);
        assert!(p.pairs.iter().all(|&(x, y)| (-3.0..=3.0).contains(&x) && (-3.0..=3.0).contains(&y)));
        assert_eq!(p, sample_pairs(&spec, 11).unwrap());

        let eps = 1e-6;
        let narrow = KernelSpec { a: 1.0 - eps, b: 1.0, n_pairs: 50, ..spec };
        let p = sample_pairs(&narrow, 2).unwrap();
        assert!(p.pairs.iter().all(|&(x, y)| (x - y).abs() <= eps));
        assert!(sample_pairs(&KernelSpec { gamma: -1.0, ..spec }, 0).is_err());
    }

    #[test]
    fn circuit_kernel_examples() {
        let c = single_ry();
        assert!((circuit_kernel_sq(&c, &[1.0], 0.7, 0.7).unwrap() - 1.0).abs() < 1e-12);
        for &(x, y) in &[(0.3, -1.2), (2.5, 0.1), (-3.0, 3.0)] {
            let expect = ((x - y) / 2.0f64).cos().powi(2);
            assert!((circuit_kernel_sq(&c, &[1.0], x, y).unwrap() - expect).abs() < 1e-12);
        }
        let fixed = ParamCircuit::new(2, vec![Gate::h(0), Gate::ry(1, 0)], vec![0.4]).unwrap();
        assert!((circuit_kernel_sq(&fixed, &[0.4], -2.0, 1.5).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mse_examples() {
        // constant-1 circuit kernel against pairs with k² = e^-1
        let fixed = ParamCircuit::new(1, vec![Gate::h(0)], vec![]).unwrap();
        let d = 10f64.sqrt();
        let pairs = PairSet { pairs: vec![(0.0, d), (d, 0.0), (-d / 2.0, d / 2.0)] };
        let v = kernel_mse(&fixed, &[], &pairs, 0.1).unwrap();
        let expect = (1.0 - (-1.0f64).exp()).powi(2);
        assert!((v - expect).abs() < 1e-12);
        assert!((v - 0.3996).abs() < 1e-4);

        let c = single_ry();
        let spec = KernelSpec { n_pairs: 40, ..Default::default() };
        let p = sample_pairs(&spec, 5).unwrap();
        let mut rev = p.clone();
        rev.pairs.reverse();
        let a = kernel_mse(&c, &[0.8], &p, 0.1).unwrap();
        let b = kernel_mse(&c, &[0.8], &rev, 0.1).unwrap();
        assert!((a - b).abs() < 1e-14);
        assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn adjoint_shift_and_value_agree() {
        let spec = KernelSpec { n_pairs: 30, ..Default::default() };
        let pairs = sample_pairs(&spec, 9).unwrap();
        for seed in 0..5 {
            let c = decode(&random_chromosome(6, seed).unwrap(), 2).unwrap();
            let p = c.init_params().to_vec();
            let (v, g) = kernel_mse_gradient(&c, &p, &pairs, None, 0.1).unwrap();
            assert!((v - kernel_mse(&c, &p, &pairs, 0.1).unwrap()).abs() < 1e-12);
            let gs = kernel_mse_gradient_shift(&c, &p, &pairs, 0.1).unwrap();
            for (a, b) in g.iter().zip(&gs) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn qfm_state_examples() {
        let c = decode(&"0111011100001011110000110".parse().unwrap(), 2).unwrap();
        let p = c.init_params().to_vec();
        let one = qfm_state(&c, &p, &[0.4]).unwrap();
        assert_eq!(one, run_circuit(&c, &p, Some(0.4)).unwrap());

        let s = qfm_state(&c, &p, &[0.9, 0.9]).unwrap();
        assert_eq!(s.n_qubits(), 4);
        assert!((s.inner(&s).unwrap().re - 1.0).abs() < 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let x = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let y = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
            let joint = qfm_state(&c, &p, &x).unwrap().inner(&qfm_state(&c, &p, &y).unwrap()).unwrap().norm_sqr();
            let prod = circuit_kernel_sq(&c, &p, x[0], y[0]).unwrap() * circuit_kernel_sq(&c, &p, x[1], y[1]).unwrap();
            assert!((joint - prod).abs() < 1e-12);
        }
        assert!(qfm_state(&c, &p, &[]).is_err());
    }
}
