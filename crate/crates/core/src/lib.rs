//! Density estimation by projecting onto a variationally prepared mixed
//! training state, with quantum feature-map circuits found by memetic search.
//!
//! The crate is organised bottom-up:
//!
//! * [`sim`]: statevector simulator, partial trace, projections, shot sampling
//! * [`codec`]: 5-bit gene encoding of circuit architectures
//! * [`qfm`]: target Gaussian kernel, circuit-induced kernel, kernel-fit objective
//! * [`optimize`]: gradient descent, genetic and memetic architecture search
//! * [`trainstate`]: hardware-efficient ansatz, log-likelihood training, exact purification
//! * [`dmkde`]: the assembled estimator and density grids
//! * [`eval`]: classical KDE, rejection sampling, k-NN KL divergence
//! * [`data`]: synthetic 2-D datasets, scaling and CSV IO

pub mod codec;
pub mod data;
pub mod dmkde;
pub mod error;
pub mod eval;
pub mod optimize;
pub mod qfm;
pub mod sim;
pub mod trainstate;

pub use codec::{circuit_metrics, decode, random_chromosome, Chromosome, CircuitMetrics, ParamCircuit};
pub use data::{Dataset, ScaleTransform};
pub use dmkde::{DMKDEModel, DensityCircuit, DensityGrid, GridSpec};
pub use error::{Error, Result};
pub use eval::KLDReport;
pub use optimize::{SearchConfig, SearchMode};
pub use qfm::{FeatureMap, KernelSpec, PairSet};
pub use sim::{Gate, GateKind, MixedState, PureState};
pub use trainstate::{HEALayout, TrainReport};
