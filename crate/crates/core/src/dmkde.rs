//! The assembled density estimator: model files, exact and shot-based
//! estimates, the classical reference and normalised density grids.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::codec::{decode, Chromosome, ParamCircuit};
use crate::data::ScaleTransform;
use crate::error::{invalid, Error, Result};
use crate::optimize::{mix_seed, SearchMode};
use crate::qfm::{FeatureMap, KernelSpec};
use crate::sim::{apply_gates_inverse, MixedState, PureState};
use crate::trainstate::{build_hea, prepare_state, HEALayout, Likelihood, Purification, MAX_DENSE_QUBITS};

/// How the feature-map circuit is built.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum QfmArchitecture {
    /// Decoded from a searched chromosome.
    Chromosome { chromosome: Chromosome },
    /// Data-scaled hardware-efficient ansatz.
    Hea { layers: usize },
}

impl QfmArchitecture {
    pub fn circuit(&self, n_qubits: usize) -> Result<ParamCircuit> {
        match self {
            QfmArchitecture::Chromosome { chromosome } => decode(chromosome, n_qubits),
            QfmArchitecture::Hea { layers } => Ok(build_hea(n_qubits, *layers)?.with_data_scaling(true)),
        }
    }
}

/// Provenance of the feature-map search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchRecord {
    pub mode: SearchMode,
    pub seed: u64,
    pub kernel_mse: f64,
    pub depth: usize,
}

/// Provenance of the training-state fit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainRecord {
    pub seed: u64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub likelihood: Likelihood,
    pub initial_log_likelihood: f64,
    pub final_log_likelihood: f64,
}

/// Axis-aligned box with a resolution per dimension; grid values sit at
/// cell centres.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub bounds: Vec<(f64, f64)>,
    pub resolution: Vec<usize>,
}

impl GridSpec {
    pub fn new(bounds: Vec<(f64, f64)>, resolution: Vec<usize>) -> Result<Self> {
        if bounds.is_empty() || bounds.len() != resolution.len() {
            return Err(invalid("grid needs one resolution per bounded dimension"));
        }
        for &(lo, hi) in &bounds {
            if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(invalid(format!("grid axis [{lo}, {hi}] is empty")));
            }
        }
        if resolution.contains(&0) {
            return Err(invalid("grid resolution must be positive"));
        }
        let total = resolution.iter().try_fold(1usize, |acc, &r| acc.checked_mul(r));
        match total {
            Some(t) if t <= 1 << 26 => {}
            _ => return Err(invalid("grid has too many points")),
        }
        Ok(GridSpec { bounds, resolution })
    }

    /// Square grid of `resolution` cells per axis.
    pub fn uniform(bounds: Vec<(f64, f64)>, resolution: usize) -> Result<Self> {
        let r = vec![resolution; bounds.len()];
        Self::new(bounds, r)
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn len(&self) -> usize {
        self.resolution.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn cell_volume(&self) -> f64 {
        self.bounds
            .iter()
            .zip(&self.resolution)
            .map(|(&(lo, hi), &r)| (hi - lo) / r as f64)
            .product()
    }

    /// Centre of flat cell `index`; the last dimension varies fastest.
    pub fn point(&self, index: usize) -> Vec<f64> {
        let mut rem = index;
        let mut p = vec![0.0; self.dim()];
        for j in (0..self.dim()).rev() {
            let r = self.resolution[j];
            let (lo, hi) = self.bounds[j];
            let i = rem % r;
            rem /= r;
            p[j] = lo + (i as f64 + 0.5) * (hi - lo) / r as f64;
        }
        p
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        (0..self.len()).map(|i| self.point(i)).collect()
    }
}

/// Data bounding box widened by `3/√γ` on every side.
pub fn padded_bounds(points: &[Vec<f64>], gamma: f64) -> Result<Vec<(f64, f64)>> {
    let first = points.first().ok_or(Error::EmptyDataset)?;
    let pad = 3.0 / gamma.sqrt();
    Ok((0..first.len())
        .map(|j| {
            let (lo, hi) = points
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| (lo.min(p[j]), hi.max(p[j])));
            (lo - pad, hi + pad)
        })
        .collect())
}

/// Model file: the searched feature map, and once trained the layout and
/// angles of the training-state circuit.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DMKDEModel {
    /// Qubits per feature.
    pub n_x: usize,
    pub qfm: QfmArchitecture,
    pub qfm_params: Vec<f64>,
    pub kernel: KernelSpec,
    pub search: SearchRecord,
    pub layout: Option<HEALayout>,
    #[serde(default)]
    pub hea_params: Vec<f64>,
    pub train: Option<TrainRecord>,
    /// Scaling applied to raw data before training.
    pub scale: Option<ScaleTransform>,
    pub norm_constant: Option<f64>,
    /// Grid the normalisation constant was computed on.
    pub norm_grid: Option<GridSpec>,
}

impl DMKDEModel {
    /// Untrained model holding only a searched feature map.
    pub fn stub(n_x: usize, qfm: QfmArchitecture, qfm_params: Vec<f64>, kernel: KernelSpec, search: SearchRecord) -> Result<Self> {
        let model = DMKDEModel {
            n_x,
            qfm,
            qfm_params,
            kernel,
            search,
            layout: None,
            hea_params: Vec::new(),
            train: None,
            scale: None,
            norm_constant: None,
            norm_grid: None,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn feature_map(&self) -> Result<FeatureMap> {
        FeatureMap::new(self.qfm.circuit(self.n_x)?, self.qfm_params.clone())
    }

    pub fn is_trained(&self) -> bool {
        self.layout.is_some()
    }

    pub fn validate(&self) -> Result<()> {
        self.feature_map()?;
        if let Some(layout) = &self.layout {
            layout.validate()?;
            if layout.n_x != self.n_x {
                return Err(Error::DimensionMismatch {
                    expected: self.n_x,
                    got: layout.n_x,
                });
            }
            if self.hea_params.len() != layout.n_params() {
                return Err(Error::DimensionMismatch {
                    expected: layout.n_params(),
                    got: self.hea_params.len(),
                });
            }
        }
        if let Some(c) = self.norm_constant {
            if !(c > 0.0 && c.is_finite()) {
                return Err(invalid(format!("normalisation constant must be positive, got {c}")));
            }
        }
        Ok(())
    }

    /// Prepared circuit for estimation; requires a trained model.
    pub fn density_circuit(&self) -> Result<DensityCircuit> {
        self.validate()?;
        let layout = self.layout.ok_or_else(|| invalid("model has no trained training-state circuit"))?;
        let phi = prepare_state(&layout, &self.hea_params)?;
        DensityCircuit::new(self.feature_map()?, layout.d, layout.n_a, phi)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: DMKDEModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }
}

/// The estimation circuit of a model: a prepared state |Φ⟩ over `d`
/// feature registers and `n_aux` auxiliary qubits, and the feature map.
#[derive(Clone, Debug)]
pub struct DensityCircuit {
    qfm: FeatureMap,
    d: usize,
    n_aux: usize,
    phi: PureState,
    rho: MixedState,
}

impl DensityCircuit {
    pub fn new(qfm: FeatureMap, d: usize, n_aux: usize, phi: PureState) -> Result<Self> {
        let n_data = d * qfm.n_qubits();
        if n_data == 0 || phi.n_qubits() != n_data + n_aux {
            return Err(Error::DimensionMismatch {
                expected: n_data + n_aux,
                got: phi.n_qubits(),
            });
        }
        if n_data > MAX_DENSE_QUBITS {
            return Err(Error::Resource {
                what: "reduced training state",
                requested: n_data,
                max: MAX_DENSE_QUBITS,
            });
        }
        let rho = if n_aux == 0 {
            MixedState::from_pure(&phi)
        } else {
            phi.partial_trace(&(0..n_data).collect::<Vec<_>>())?
        };
        Ok(DensityCircuit { qfm, d, n_aux, phi, rho })
    }

    /// Uses an exact purification of ρ_train in place of the trained ansatz.
    pub fn from_purification(qfm: FeatureMap, d: usize, purification: &Purification) -> Result<Self> {
        Self::new(qfm, d, purification.n_aux, purification.state.clone())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_aux(&self) -> usize {
        self.n_aux
    }

    /// Tr_a |Φ⟩⟨Φ|
    pub fn reduced_state(&self) -> &MixedState {
        &self.rho
    }

    fn check_point(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.d {
            return Err(Error::DimensionMismatch {
                expected: self.d,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// ⟨ψ(x)| Tr_a(|Φ⟩⟨Φ|) |ψ(x)⟩, unnormalised and in [0, 1].
    pub fn estimate_exact(&self, x: &[f64]) -> Result<f64> {
        self.check_point(x)?;
        self.rho.projection_prob(&self.qfm.state(x)?)
    }

    /// State after U_⋆†(x) is applied to every feature register of |Φ⟩.
    fn unprepared(&self, x: &[f64]) -> Result<PureState> {
        self.check_point(x)?;
        let n_x = self.qfm.n_qubits();
        let mut state = self.phi.clone();
        for (j, &xj) in x.iter().enumerate() {
            apply_gates_inverse(&mut state, self.qfm.circuit.gates(), &self.qfm.angles(xj)?, j * n_x)?;
        }
        Ok(state)
    }

    /// Fraction of `shots` simulated runs reading all zeros on the feature
    /// registers; auxiliary outcomes are ignored.
    pub fn estimate_shots(&self, x: &[f64], shots: u64, seed: u64) -> Result<f64> {
        if shots == 0 {
            return Err(invalid("shot count must be at least 1"));
        }
        let state = self.unprepared(x)?;
        let data: Vec<usize> = (0..self.d * self.qfm.n_qubits()).collect();
        Ok(state.sample_zero_count(&data, shots, seed)? as f64 / shots as f64)
    }

    /// All-zero probability on the feature registers of the full circuit;
    /// the infinite-shot limit of [`Self::estimate_shots`].
    pub fn zero_probability(&self, x: &[f64]) -> Result<f64> {
        let state = self.unprepared(x)?;
        let data: Vec<usize> = (0..self.d * self.qfm.n_qubits()).collect();
        state.prob_zero_on(&data)
    }
}

pub fn estimate_exact(model: &DMKDEModel, x: &[f64]) -> Result<f64> {
    model.density_circuit()?.estimate_exact(x)
}

pub fn estimate_shots(model: &DMKDEModel, x: &[f64], shots: u64, seed: u64) -> Result<f64> {
    model.density_circuit()?.estimate_shots(x, shots, seed)
}

/// Feature states of a dataset, cached for repeated classical estimates.
pub struct ClassicalDmkde {
    qfm: FeatureMap,
    states: Vec<PureState>,
}

impl ClassicalDmkde {
    pub fn new(qfm: &FeatureMap, dataset: &[Vec<f64>]) -> Result<Self> {
        if dataset.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let states = dataset.par_iter().map(|x| qfm.state(x)).collect::<Result<Vec<_>>>()?;
        Ok(ClassicalDmkde { qfm: qfm.clone(), states })
    }

    /// (1/N) Σ_i |⟨ψ(x)|ψ(x_i)⟩|²
    pub fn estimate(&self, x: &[f64]) -> Result<f64> {
        let psi = self.qfm.state(x)?;
        let mut acc = 0.0;
        for s in &self.states {
            acc += psi.inner(s)?.norm_sqr();
        }
        Ok(acc / self.states.len() as f64)
    }
}

pub fn classical_dmkde(qfm: &FeatureMap, dataset: &[Vec<f64>], x: &[f64]) -> Result<f64> {
    ClassicalDmkde::new(qfm, dataset)?.estimate(x)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimateMode {
    Exact,
    Shots { shots: u64, seed: u64 },
}

/// Normalised density values on a grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub spec: GridSpec,
    pub values: Vec<f64>,
    pub norm_constant: f64,
}

impl DensityGrid {
    /// Riemann sum of the values times the cell volume.
    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.spec.cell_volume()
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// CSV with header `x0,x1,density` (one coordinate column per dimension).
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = (0..self.spec.dim()).map(|j| format!("x{j}")).collect();
        writeln!(w, "{},density", header.join(","))?;
        for (i, v) in self.values.iter().enumerate() {
            for c in self.spec.point(i) {
                write!(w, "{c:?},")?;
            }
            writeln!(w, "{v:?}")?;
        }
        Ok(())
    }

    /// 8-bit binary PGM with min-max scaling; rows run from high x1 to low.
    pub fn write_pgm<W: Write>(&self, mut w: W) -> Result<()> {
        if self.spec.dim() != 2 {
            return Err(invalid("image export needs a 2-D grid"));
        }
        let (nx, ny) = (self.spec.resolution[0], self.spec.resolution[1]);
        let lo = self.values.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = self.max();
        let span = if hi > lo { hi - lo } else { 1.0 };
        write!(w, "P5\n{nx} {ny}\n255\n")?;
        let mut bytes = Vec::with_capacity(nx * ny);
        for row in (0..ny).rev() {
            for col in 0..nx {
                let v = self.values[col * ny + row];
                bytes.push(((v - lo) / span * 255.0).round() as u8);
            }
        }
        w.write_all(&bytes)?;
        Ok(())
    }
}

/// Unnormalised estimates over a grid.
pub fn grid_values<F>(spec: &GridSpec, f: F) -> Result<Vec<f64>>
where
    F: Fn(usize, &[f64]) -> Result<f64> + Sync,
{
    (0..spec.len())
        .into_par_iter()
        .map(|i| f(i, &spec.point(i)))
        .collect()
}

/// Evaluates the model on a grid and normalises. An unset normalisation
/// constant is computed from this grid's Riemann sum and stored in the model.
pub fn density_grid(model: &mut DMKDEModel, spec: &GridSpec, mode: EstimateMode) -> Result<DensityGrid> {
    let circuit = model.density_circuit()?;
    if spec.dim() != circuit.d() {
        return Err(Error::DimensionMismatch {
            expected: circuit.d(),
            got: spec.dim(),
        });
    }
    let raw = match mode {
        EstimateMode::Exact => grid_values(spec, |_, x| circuit.estimate_exact(x))?,
        EstimateMode::Shots { shots, seed } => {
            grid_values(spec, |i, x| circuit.estimate_shots(x, shots, mix_seed(seed, i as u64)))?
        }
    };
    let norm = match model.norm_constant {
        Some(c) => c,
        None => {
            let c = normalisation_constant(&raw, spec)?;
            model.norm_constant = Some(c);
            model.norm_grid = Some(spec.clone());
            c
        }
    };
    Ok(DensityGrid {
        spec: spec.clone(),
        values: raw.iter().map(|v| v * norm).collect(),
        norm_constant: norm,
    })
}

/// 1 / (Σ values × cell volume).
pub fn normalisation_constant(raw: &[f64], spec: &GridSpec) -> Result<f64> {
    let mass = raw.iter().sum::<f64>() * spec.cell_volume();
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(invalid(format!("density has no mass on the grid (sum {mass})")));
    }
    Ok(1.0 / mass)
}
