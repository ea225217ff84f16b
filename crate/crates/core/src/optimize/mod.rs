//! Gradient descent and the genetic / memetic architecture search.

mod evolve;

pub use evolve::{evolve, hea_kernel_fit, write_trace_csv, Agent, DEFAULT_BATCH, Evolution, GenerationStats, HeaFit, SearchConfig, SearchMode};

use crate::error::{Error, Result};

/// Central finite-difference step.
pub const FD_STEP: f64 = 1e-4;

/// A real objective over a parameter vector.
pub trait Objective {
    fn value(&self, params: &[f64]) -> Result<f64>;

    fn gradient(&self, params: &[f64]) -> Result<Vec<f64>> {
        finite_difference(|p| self.value(p), params)
    }

    /// Value and gradient used by descent step `epoch`. Stochastic
    /// objectives override this to evaluate on a minibatch.
    fn step(&self, params: &[f64], _epoch: usize) -> Result<(f64, Vec<f64>)> {
        Ok((self.value(params)?, self.gradient(params)?))
    }
}

/// Adapts a plain closure; its gradient comes from finite differences.
pub struct FnObjective<F>(pub F);

impl<F: Fn(&[f64]) -> f64> Objective for FnObjective<F> {
    fn value(&self, params: &[f64]) -> Result<f64> {
        Ok((self.0)(params))
    }
}

fn finite_difference<F: Fn(&[f64]) -> Result<f64>>(f: F, params: &[f64]) -> Result<Vec<f64>> {
    let f0 = f(params)?;
    if !f0.is_finite() {
        return Err(Error::NonFinite(f0));
    }
    let mut p = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = p[i];
        p[i] = orig + FD_STEP;
        let up = f(&p)?;
        p[i] = orig - FD_STEP;
        let down = f(&p)?;
        p[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(if up.is_finite() { down } else { up }));
        }
        grad.push((up - down) / (2.0 * FD_STEP));
    }
    Ok(grad)
}

/// Central finite-difference gradient with step [`FD_STEP`].
pub fn gradient<F: Fn(&[f64]) -> f64>(objective: F, params: &[f64]) -> Result<Vec<f64>> {
    finite_difference(|p| Ok(objective(p)), params)
}

/// Result of a descent run. `trace[t]` is the objective seen at step `t`;
/// the last entry is the value at the returned parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Descent {
    pub params: Vec<f64>,
    pub trace: Vec<f64>,
}

/// Plain gradient descent: `θ ← θ − lr·∇f(θ)` for `epochs` steps.
pub fn gd_minimize(
    objective: &dyn Objective,
    init_params: &[f64],
    epochs: usize,
    learning_rate: f64,
) -> Result<Descent> {
    if epochs == 0 {
        return Err(Error::InvalidArgument("gradient descent needs at least one epoch".into()));
    }
    let mut params = init_params.to_vec();
    let mut trace = Vec::with_capacity(epochs + 1);
    for epoch in 0..epochs {
        let (value, grad) = objective.step(&params, epoch)?;
        if !value.is_finite() || grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Diverged { epoch, value });
        }
        trace.push(value);
        for (p, g) in params.iter_mut().zip(&grad) {
            *p -= learning_rate * g;
        }
    }
    let last = objective.value(&params)?;
    if !last.is_finite() || params.iter().any(|p| !p.is_finite()) {
        return Err(Error::Diverged { epoch: epochs, value: last });
    }
    trace.push(last);
    Ok(Descent { params, trace })
}

/// Derives an independent stream seed (splitmix64 finaliser).
pub fn mix_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
