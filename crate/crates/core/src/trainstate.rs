//! Training-state preparation: the hardware-efficient ansatz over feature and
//! auxiliary qubits, its log-likelihood training, and the exact purification
//! used as a reference.

use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::ParamCircuit;
use crate::error::{invalid, Error, Result};
use crate::optimize::{gd_minimize, Objective};
use crate::qfm::FeatureMap;
use crate::sim::{adjoint_angle_gradients, check_register, execute, Gate, MixedState, PureState, DENSITY_TOL};

/// Guard added inside every logarithm of the likelihood.
pub const LL_EPS: f64 = 1e-12;

/// Eigenvalues at or below this count as zero when purifying.
pub const RANK_TOL: f64 = 1e-12;

/// Largest register for which dense density matrices are formed.
pub const MAX_DENSE_QUBITS: usize = 12;

/// Largest register for which the full purifying unitary is materialised.
pub const MAX_UNITARY_QUBITS: usize = 10;

/// Qubit layout of the training-state circuit. Feature registers come first
/// (feature `j` on qubits `j·n_x .. (j+1)·n_x`), auxiliary qubits last.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HEALayout {
    pub n_x: usize,
    pub d: usize,
    pub n_a: usize,
    pub n_layers: usize,
}

impl HEALayout {
    pub fn new(n_x: usize, d: usize, n_a: usize, n_layers: usize) -> Result<Self> {
        let layout = HEALayout { n_x, d, n_a, n_layers };
        layout.validate()?;
        Ok(layout)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_x == 0 || self.d == 0 || self.n_a == 0 || self.n_layers == 0 {
            return Err(invalid(format!("layout fields must all be positive: {self:?}")));
        }
        check_register("training-state circuit", self.n_qubits())
    }

    pub fn n_data(&self) -> usize {
        self.d * self.n_x
    }

    pub fn n_qubits(&self) -> usize {
        self.n_data() + self.n_a
    }

    pub fn n_params(&self) -> usize {
        2 * self.n_qubits() * (self.n_layers + 1)
    }

    pub fn circuit(&self) -> Result<ParamCircuit> {
        build_hea(self.n_qubits(), self.n_layers)
    }
}

/// Hardware-efficient ansatz: `n_layers` blocks of Ry, Rz on every qubit
/// followed by a CNOT chain q → q+1, then a closing Ry, Rz block. Angles
/// are free parameters (not data-scaled), initialised to zero.
pub fn build_hea(n_qubits: usize, n_layers: usize) -> Result<ParamCircuit> {
    check_register("hardware-efficient ansatz", n_qubits)?;
    let mut gates = Vec::with_capacity((n_layers + 1) * 3 * n_qubits);
    let mut slot = 0;
    let mut rotations = |gates: &mut Vec<Gate>| {
        for q in 0..n_qubits {
            gates.push(Gate::ry(q, slot));
            gates.push(Gate::rz(q, slot + 1));
            slot += 2;
        }
    };
    for _ in 0..n_layers {
        rotations(&mut gates);
        gates.extend((0..n_qubits.saturating_sub(1)).map(|q| Gate::cnot(q, q + 1)));
    }
    rotations(&mut gates);
    let n_params = 2 * n_qubits * (n_layers + 1);
    ParamCircuit::new(n_qubits, gates, vec![0.0; n_params])
}

/// Which form of the data log-likelihood to maximise.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Likelihood {
    /// log(Σ_i p_i + ε)
    #[default]
    LogOfSum,
    /// Σ_i log(p_i + ε)
    SumOfLogs,
}

impl std::str::FromStr for Likelihood {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "log-of-sum" => Ok(Likelihood::LogOfSum),
            "sum-of-logs" => Ok(Likelihood::SumOfLogs),
            other => Err(invalid(format!("unknown likelihood form {other:?}"))),
        }
    }
}

impl Likelihood {
    fn combine(self, probs: &[f64]) -> f64 {
        match self {
            Likelihood::LogOfSum => (probs.iter().sum::<f64>() + LL_EPS).ln(),
            Likelihood::SumOfLogs => probs.iter().map(|p| (p + LL_EPS).ln()).sum(),
        }
    }

    /// ∂L/∂p_i for every point.
    fn weights(self, probs: &[f64]) -> Vec<f64> {
        match self {
            Likelihood::LogOfSum => {
                let w = 1.0 / (probs.iter().sum::<f64>() + LL_EPS);
                vec![w; probs.len()]
            }
            Likelihood::SumOfLogs => probs.iter().map(|p| 1.0 / (p + LL_EPS)).collect(),
        }
    }
}

fn check_points(dataset: &[Vec<f64>], d: usize) -> Result<()> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    for x in dataset {
        if x.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: x.len() });
        }
    }
    Ok(())
}

fn check_feature_map(layout: &HEALayout, qfm: &FeatureMap) -> Result<()> {
    if qfm.n_qubits() != layout.n_x {
        return Err(Error::DimensionMismatch {
            expected: layout.n_x,
            got: qfm.n_qubits(),
        });
    }
    Ok(())
}

/// The prepared pure state U_D(θ)|0⟩ over data and auxiliary qubits.
pub fn prepare_state(layout: &HEALayout, params: &[f64]) -> Result<PureState> {
    layout.validate()?;
    let circuit = layout.circuit()?;
    execute(layout.n_qubits(), circuit.gates(), &circuit.effective_angles(params, None)?)
}

/// Data log-likelihood in its default log-of-sum form.
///
/// Each term is ⟨ψ(x_i)| Tr_a(|Φ⟩⟨Φ|) |ψ(x_i)⟩ with |Φ⟩ = U_D(θ)|0⟩.
pub fn log_likelihood(layout: &HEALayout, hea_params: &[f64], qfm: &FeatureMap, dataset: &[Vec<f64>]) -> Result<f64> {
    log_likelihood_with(layout, hea_params, qfm, dataset, Likelihood::LogOfSum)
}

pub fn log_likelihood_with(
    layout: &HEALayout,
    hea_params: &[f64],
    qfm: &FeatureMap,
    dataset: &[Vec<f64>],
    form: Likelihood,
) -> Result<f64> {
    check_feature_map(layout, qfm)?;
    check_points(dataset, layout.d)?;
    if layout.n_data() > MAX_DENSE_QUBITS {
        return Err(Error::Resource {
            what: "reduced training state",
            requested: layout.n_data(),
            max: MAX_DENSE_QUBITS,
        });
    }
    let phi = prepare_state(layout, hea_params)?;
    let data: Vec<usize> = (0..layout.n_data()).collect();
    let rho = phi.partial_trace(&data)?;
    let probs = dataset
        .par_iter()
        .map(|x| rho.projection_prob(&qfm.state(x)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(form.combine(&probs))
}

/// Likelihood with cached feature states, evaluated directly on the
/// prepared statevector.
struct StateFit {
    layout: HEALayout,
    circuit: ParamCircuit,
    features: Vec<Vec<Complex64>>,
    form: Likelihood,
}

impl StateFit {
    fn new(layout: &HEALayout, qfm: &FeatureMap, dataset: &[Vec<f64>], form: Likelihood) -> Result<Self> {
        layout.validate()?;
        check_feature_map(layout, qfm)?;
        check_points(dataset, layout.d)?;
        let features = dataset
            .par_iter()
            .map(|x| qfm.state(x).map(PureState::into_amplitudes))
            .collect::<Result<Vec<_>>>()?;
        Ok(StateFit {
            layout: *layout,
            circuit: layout.circuit()?,
            features,
            form,
        })
    }

    /// ⟨ψ_i|A_j⟩ for every auxiliary column j, with Φ[α·2^{n_a} + j] = A[α, j].
    fn overlaps(&self, phi: &[Complex64], psi: &[Complex64]) -> Vec<Complex64> {
        let n_aux = 1usize << self.layout.n_a;
        let mut v = vec![Complex64::new(0.0, 0.0); n_aux];
        for (alpha, p) in psi.iter().enumerate() {
            let pc = p.conj();
            for (j, vj) in v.iter_mut().enumerate() {
                *vj += pc * phi[alpha * n_aux + j];
            }
        }
        v
    }

    fn probs(&self, phi: &[Complex64]) -> Vec<f64> {
        self.features
            .iter()
            .map(|psi| self.overlaps(phi, psi).iter().map(|z| z.norm_sqr()).sum::<f64>().clamp(0.0, 1.0))
            .collect()
    }

    fn angles(&self, params: &[f64]) -> Result<Vec<f64>> {
        self.circuit.effective_angles(params, None)
    }

    fn value(&self, params: &[f64]) -> Result<f64> {
        let phi = execute(self.layout.n_qubits(), self.circuit.gates(), &self.angles(params)?)?;
        Ok(self.form.combine(&self.probs(phi.amplitudes())))
    }

    fn value_and_gradient(&self, params: &[f64]) -> Result<(f64, Vec<f64>)> {
        let angles = self.angles(params)?;
        let phi = execute(self.layout.n_qubits(), self.circuit.gates(), &angles)?;
        let amps = phi.amplitudes();
        let n_aux = 1usize << self.layout.n_a;
        let overlaps: Vec<Vec<Complex64>> = self.features.iter().map(|psi| self.overlaps(amps, psi)).collect();
        let probs: Vec<f64> = overlaps
            .iter()
            .map(|v| v.iter().map(|z| z.norm_sqr()).sum::<f64>().clamp(0.0, 1.0))
            .collect();
        let weights = self.form.weights(&probs);
        // ∂p_i/∂Φ*[α, j] = ψ_i[α] ⟨ψ_i|A_j⟩
        let mut cot = vec![Complex64::new(0.0, 0.0); amps.len()];
        for ((psi, v), w) in self.features.iter().zip(&overlaps).zip(&weights) {
            for (alpha, p) in psi.iter().enumerate() {
                let pw = p * w;
                for (j, vj) in v.iter().enumerate() {
                    cot[alpha * n_aux + j] += pw * vj;
                }
            }
        }
        let per_gate = adjoint_angle_gradients(self.circuit.gates(), &angles, phi.clone(), cot, 0)?;
        let mut grad = vec![0.0; params.len()];
        for (g, d) in self.circuit.gates().iter().zip(per_gate) {
            if let Some(s) = g.param_slot {
                grad[s] += d;
            }
        }
        Ok((self.form.combine(&probs), grad))
    }

    fn gradient_shift(&self, params: &[f64]) -> Result<Vec<f64>> {
        let angles = self.angles(params)?;
        let n = self.layout.n_qubits();
        let gates = self.circuit.gates();
        let base = execute(n, gates, &angles)?;
        let weights = self.form.weights(&self.probs(base.amplitudes()));
        let mut grad = vec![0.0; params.len()];
        for (k, g) in gates.iter().enumerate() {
            let Some(s) = g.param_slot else { continue };
            let shifted = |sign: f64| -> Result<Vec<f64>> {
                let mut a = angles.clone();
                a[k] += sign * FRAC_PI_2;
                Ok(self.probs(execute(n, gates, &a)?.amplitudes()))
            };
            let (up, down) = (shifted(1.0)?, shifted(-1.0)?);
            grad[s] += weights
                .iter()
                .zip(up.iter().zip(&down))
                .map(|(w, (u, d))| w * (u - d) / 2.0)
                .sum::<f64>();
        }
        Ok(grad)
    }
}

/// Log-likelihood and its gradient in the HEA angles (adjoint
/// differentiation on the prepared state).
pub fn log_likelihood_gradient(
    layout: &HEALayout,
    hea_params: &[f64],
    qfm: &FeatureMap,
    dataset: &[Vec<f64>],
    form: Likelihood,
) -> Result<(f64, Vec<f64>)> {
    StateFit::new(layout, qfm, dataset, form)?.value_and_gradient(hea_params)
}

/// Gradient of the log-likelihood by the parameter-shift rule.
pub fn log_likelihood_gradient_shift(
    layout: &HEALayout,
    hea_params: &[f64],
    qfm: &FeatureMap,
    dataset: &[Vec<f64>],
    form: Likelihood,
) -> Result<Vec<f64>> {
    StateFit::new(layout, qfm, dataset, form)?.gradient_shift(hea_params)
}

/// Descent on the negated likelihood.
struct Negated<'a>(&'a StateFit);

impl Objective for Negated<'_> {
    fn value(&self, params: &[f64]) -> Result<f64> {
        Ok(-self.0.value(params)?)
    }

    fn gradient(&self, params: &[f64]) -> Result<Vec<f64>> {
        Ok(self.0.value_and_gradient(params)?.1.into_iter().map(|g| -g).collect())
    }

    fn step(&self, params: &[f64], _epoch: usize) -> Result<(f64, Vec<f64>)> {
        let (v, g) = self.0.value_and_gradient(params)?;
        Ok((-v, g.into_iter().map(|x| -x).collect()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOptions {
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub likelihood: Likelihood,
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: 5000,
            learning_rate: 0.4,
            seed: 0,
            likelihood: Likelihood::LogOfSum,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub layout: HEALayout,
    pub params: Vec<f64>,
    /// Log-likelihood before each step, then at the returned parameters.
    pub ll_trace: Vec<f64>,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub likelihood: Likelihood,
}

impl TrainReport {
    pub fn initial(&self) -> f64 {
        self.ll_trace[0]
    }

    pub fn last(&self) -> f64 {
        *self.ll_trace.last().expect("trace is nonempty")
    }
}

/// Gradient ascent on the data log-likelihood from angles drawn uniformly
/// in [0, 2π) under `options.seed`.
pub fn train_state_circuit(
    layout: &HEALayout,
    qfm: &FeatureMap,
    dataset: &[Vec<f64>],
    options: &TrainOptions,
) -> Result<TrainReport> {
    let fit = StateFit::new(layout, qfm, dataset, options.likelihood)?;
    let mut rng = ChaCha8Rng::seed_from_u64(options.seed);
    let init: Vec<f64> = (0..layout.n_params()).map(|_| rng.random_range(0.0..TAU)).collect();
    let run = gd_minimize(&Negated(&fit), &init, options.epochs, options.learning_rate)?;
    Ok(TrainReport {
        layout: *layout,
        params: run.params,
        ll_trace: run.trace.into_iter().map(|v| -v).collect(),
        epochs: options.epochs,
        learning_rate: options.learning_rate,
        seed: options.seed,
        likelihood: options.likelihood,
    })
}

/// (1/N) Σ_i |ψ(x_i)⟩⟨ψ(x_i)| over the d·n_x feature qubits.
pub fn exact_rho_train(qfm: &FeatureMap, dataset: &[Vec<f64>]) -> Result<MixedState> {
    let d = dataset.first().ok_or(Error::EmptyDataset)?.len();
    check_points(dataset, d)?;
    let n = d * qfm.n_qubits();
    if n > MAX_DENSE_QUBITS {
        return Err(Error::Resource {
            what: "training density matrix",
            requested: n,
            max: MAX_DENSE_QUBITS,
        });
    }
    let states = dataset.iter().map(|x| qfm.state(x)).collect::<Result<Vec<_>>>()?;
    MixedState::mixture(&states)
}

/// Purification |Φ⟩ = Σ_{α,j} V_{α,β_j} √λ_j |α⟩|j⟩ of a density matrix,
/// data register first and ⌈log2 rank⌉ auxiliary qubits last.
#[derive(Clone, Debug, PartialEq)]
pub struct Purification {
    pub n_data: usize,
    pub n_aux: usize,
    pub rank: usize,
    pub state: PureState,
}

/// Eigendecomposes `rho` and builds its purification.
pub fn purify(rho: &MixedState) -> Result<Purification> {
    rho.validate(DENSITY_TOL)?;
    let n_data = rho.n_qubits();
    let eig = rho.matrix().clone().symmetric_eigen();
    let mut kept: Vec<(usize, f64)> = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .filter(|&(_, l)| l > RANK_TOL)
        .collect();
    kept.sort_by(|a, b| b.1.total_cmp(&a.1));
    let rank = kept.len();
    if rank == 0 {
        return Err(Error::InvalidDensity("no positive eigenvalue".into()));
    }
    let n_aux = rank.next_power_of_two().trailing_zeros() as usize;
    check_register("purification", n_data + n_aux)?;
    let aux_dim = 1usize << n_aux;
    let dim = rho.dim();
    let mut amps = vec![Complex64::new(0.0, 0.0); dim * aux_dim];
    for (j, &(beta, lambda)) in kept.iter().enumerate() {
        let s = lambda.sqrt();
        for alpha in 0..dim {
            amps[alpha * aux_dim + j] = eig.eigenvectors[(alpha, beta)] * s;
        }
    }
    let norm = amps.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    for a in &mut amps {
        *a /= norm;
    }
    Ok(Purification {
        n_data,
        n_aux,
        rank,
        state: PureState::from_amplitudes(amps)?,
    })
}

impl Purification {
    pub fn n_qubits(&self) -> usize {
        self.n_data + self.n_aux
    }

    /// Tr_a |Φ⟩⟨Φ|
    pub fn reduced(&self) -> Result<MixedState> {
        if self.n_aux == 0 {
            return Ok(MixedState::from_pure(&self.state));
        }
        self.state.partial_trace(&(0..self.n_data).collect::<Vec<_>>())
    }

    /// A unitary whose first column is |Φ⟩; the remaining columns are
    /// Gram-Schmidt completions of seeded random vectors.
    pub fn unitary(&self, seed: u64) -> Result<DMatrix<Complex64>> {
        let n = self.n_qubits();
        if n > MAX_UNITARY_QUBITS {
            return Err(Error::Resource {
                what: "purifying unitary",
                requested: n,
                max: MAX_UNITARY_QUBITS,
            });
        }
        let dim = self.state.dim();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut cols: Vec<Vec<Complex64>> = Vec::with_capacity(dim);
        cols.push(self.state.amplitudes().to_vec());
        while cols.len() < dim {
            let mut v: Vec<Complex64> = (0..dim)
                .map(|_| Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal)))
                .collect();
            // two passes keep the basis orthogonal to working precision
            for _ in 0..2 {
                for c in &cols {
                    let proj: Complex64 = c.iter().zip(&v).map(|(a, b)| a.conj() * b).sum();
                    for (vi, ci) in v.iter_mut().zip(c) {
                        *vi -= proj * ci;
                    }
                }
            }
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm < 1e-6 {
                continue;
            }
            for vi in &mut v {
                *vi /= norm;
            }
            cols.push(v);
        }
        Ok(DMatrix::from_fn(dim, dim, |r, c| cols[c][r]))
    }
}

/// The unitary of [`Purification::unitary`] for the purification of `rho`.
pub fn purification_unitary(rho: &MixedState, seed: u64) -> Result<DMatrix<Complex64>> {
    purify(rho)?.unitary(seed)
}

/// Sanity helper for tests and diagnostics: largest entry of |U†U − I|.
pub fn unitarity_error(u: &DMatrix<Complex64>) -> f64 {
    let prod = u.adjoint() * u;
    let mut worst: f64 = 0.0;
    for r in 0..prod.nrows() {
        for c in 0..prod.ncols() {
            let target = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((prod[(r, c)] - Complex64::new(target, 0.0)).norm());
        }
    }
    worst
}
