//! Classical Gaussian KDE, rejection sampling and the k-NN estimate of the
//! Kullback-Leibler divergence.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dmkde::{density_grid, padded_bounds, DMKDEModel, EstimateMode, GridSpec};
use crate::error::{invalid, Error, Result};
use crate::optimize::mix_seed;

/// Default neighbour rank of [`kld_knn`].
pub const DEFAULT_K: usize = 5;

/// Default number of sampling seeds of [`evaluate_model_kld`].
pub const DEFAULT_KLD_SEEDS: usize = 50;

/// Replacement for a zero neighbour distance.
pub const MIN_DISTANCE: f64 = 1e-12;

/// Normalised Gaussian KDE (1/N)(γ/π)^{d/2} Σ_i exp(−γ‖x − x_i‖²).
pub fn gaussian_kde(dataset: &[Vec<f64>], gamma: f64, x: &[f64]) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let d = x.len();
    let mut acc = 0.0;
    for p in dataset {
        if p.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: p.len() });
        }
        let d2: f64 = p.iter().zip(x).map(|(a, b)| (a - b) * (a - b)).sum();
        acc += (-gamma * d2).exp();
    }
    Ok(acc / dataset.len() as f64 * (gamma / PI).powf(d as f64 / 2.0))
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Distance from `x` to its k-th nearest neighbour in `pool`, skipping the
/// entry at `skip`.
fn kth_distance(x: &[f64], pool: &[Vec<f64>], skip: Option<usize>, k: usize, buf: &mut Vec<f64>) -> f64 {
    buf.clear();
    for (j, p) in pool.iter().enumerate() {
        if Some(j) != skip {
            buf.push(sq_dist(x, p));
        }
    }
    let (_, kth, _) = buf.select_nth_unstable_by(k - 1, f64::total_cmp);
    kth.sqrt()
}

/// k-NN estimate of D(T‖P) from samples `x` of T and `x_prime` of P:
///
/// D̂ = (d/n) Σ_i log(s_k(x_i) / r_k(x_i)) + log(m / (n − 1)),
///
/// with r_k the distance to the k-th neighbour of x_i among the other
/// points of `x` and s_k the same distance within `x_prime`. Zero distances
/// are replaced by [`MIN_DISTANCE`] with a warning.
pub fn kld_knn(x: &[Vec<f64>], x_prime: &[Vec<f64>], k: usize) -> Result<f64> {
    let n = x.len();
    let m = x_prime.len();
    if k == 0 {
        return Err(invalid("k must be at least 1"));
    }
    if n <= k || m < k {
        return Err(invalid(format!("need n > k and m ≥ k (n = {n}, m = {m}, k = {k})")));
    }
    let d = x[0].len();
    if let Some(bad) = x.iter().chain(x_prime).find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch { expected: d, got: bad.len() });
    }
    let terms: Vec<(f64, bool)> = x
        .par_iter()
        .enumerate()
        .map_init(Vec::new, |buf, (i, xi)| {
            let r = kth_distance(xi, x, Some(i), k, buf);
            let s = kth_distance(xi, x_prime, None, k, buf);
            let clamped = r == 0.0 || s == 0.0;
            ((s.max(MIN_DISTANCE) / r.max(MIN_DISTANCE)).ln(), clamped)
        })
        .collect();
    let clamped = terms.iter().filter(|t| t.1).count();
    if clamped > 0 {
        log::warn!("{clamped} zero neighbour distances replaced by {MIN_DISTANCE:e}");
    }
    let sum: f64 = terms.iter().map(|t| t.0).sum();
    Ok(d as f64 / n as f64 * sum + (m as f64 / (n as f64 - 1.0)).ln())
}

/// Draws `count` points from the density `f` on a box by uniform proposals
/// accepted with probability f(x)/max_density.
pub fn rejection_sample<F>(f: F, bounds: &[(f64, f64)], max_density: f64, count: usize, seed: u64) -> Result<Vec<Vec<f64>>>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if count == 0 {
        return Err(invalid("sample count must be at least 1"));
    }
    if !(max_density > 0.0 && max_density.is_finite()) {
        return Err(invalid(format!("maximum density must be positive, got {max_density}")));
    }
    for &(lo, hi) in bounds {
        if !(lo < hi) {
            return Err(invalid(format!("sampling interval [{lo}, {hi}] is empty")));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(count);
    let mut exceeded = false;
    let mut proposals: u64 = 0;
    while out.len() < count {
        proposals += 1;
        if proposals > 1_000 * count as u64 + 1_000_000 {
            return Err(invalid("rejection sampler accepted too few proposals"));
        }
        let x: Vec<f64> = bounds.iter().map(|&(lo, hi)| rng.random_range(lo..hi)).collect();
        let fx = f(&x)?;
        if fx > max_density && !exceeded {
            exceeded = true;
            log::warn!("density {fx} exceeds the sampling bound {max_density}");
        }
        if rng.random::<f64>() * max_density < fx {
            out.push(x);
        }
    }
    Ok(out)
}

/// Pearson correlation of two equally long series; `None` if either is constant.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.is_empty() {
        return None;
    }
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va == 0.0 || vb == 0.0 {
        return None;
    }
    Some(cov / (va * vb).sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KLDReport {
    pub mean: f64,
    pub std_dev: f64,
    pub per_seed: Vec<f64>,
    pub k: usize,
    pub n: usize,
    pub m: usize,
}

impl KLDReport {
    /// Population mean and standard deviation of the per-seed values.
    pub fn from_values(per_seed: Vec<f64>, k: usize, n: usize, m: usize) -> Result<Self> {
        if per_seed.is_empty() {
            return Err(invalid("no KLD values"));
        }
        let len = per_seed.len() as f64;
        let mean = per_seed.iter().sum::<f64>() / len;
        let var = per_seed.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / len;
        Ok(KLDReport {
            mean,
            std_dev: var.sqrt(),
            per_seed,
            k,
            n,
            m,
        })
    }

    /// `seed,value` rows followed by a `# mean=… std=…` summary line.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "seed,value")?;
        for (s, v) in self.per_seed.iter().enumerate() {
            writeln!(w, "{s},{v:?}")?;
        }
        writeln!(w, "# mean={:?} std={:?} k={} n={} m={}", self.mean, self.std_dev, self.k, self.n, self.m)
    }
}

/// Resolution per axis of the grid used to normalise and bound the model
/// density before sampling.
pub const KLD_GRID_RESOLUTION: usize = 100;

/// Per seed, draws |dataset| points from the normalised model density over
/// the padded data box and compares them with the dataset by [`kld_knn`].
/// Sampling seeds are derived from `seed`.
pub fn evaluate_model_kld(model: &DMKDEModel, dataset: &[Vec<f64>], n_seeds: usize, k: usize, seed: u64) -> Result<KLDReport> {
    if n_seeds == 0 {
        return Err(invalid("need at least one seed"));
    }
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let bounds = padded_bounds(dataset, model.kernel.gamma)?;
    let spec = GridSpec::uniform(bounds.clone(), KLD_GRID_RESOLUTION)?;
    let mut work = model.clone();
    let grid = density_grid(&mut work, &spec, EstimateMode::Exact)?;
    let norm = grid.norm_constant;
    let bound = 1.1 * grid.max();
    let circuit = work.density_circuit()?;
    let m = dataset.len();
    let per_seed = (0..n_seeds)
        .into_par_iter()
        .map(|s| {
            let samples = rejection_sample(
                |x| Ok(circuit.estimate_exact(x)? * norm),
                &bounds,
                bound,
                m,
                mix_seed(seed, s as u64),
            )?;
            kld_knn(dataset, &samples, k)
        })
        .collect::<Result<Vec<f64>>>()?;
    KLDReport::from_values(per_seed, k, dataset.len(), m)
}
