use std::collections::HashMap;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{gd_minimize, mix_seed};
use crate::codec::{circuit_metrics, decode, Chromosome, GENE_BITS};
use crate::error::{invalid, Result};
use crate::qfm::{kernel_mse, sample_pairs, KernelFit, KernelSpec, PairSet};
use crate::trainstate::build_hea;

// Seed streams derived from the run seed. Genetic, memetic and HEA runs with
// the same seed share the pair set and (for the first two) the initial
// population.
const STREAM_PAIRS: u64 = 1;
const STREAM_POPULATION: u64 = 2;
const STREAM_HEA_INIT: u64 = 3;
const STREAM_BATCHES: u64 = 4;

/// Minibatch size used by local refinement unless configured otherwise.
pub const DEFAULT_BATCH: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SearchMode {
    Genetic,
    Memetic,
    Hea,
}

impl std::str::FromStr for SearchMode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "genetic" => Ok(SearchMode::Genetic),
            "memetic" => Ok(SearchMode::Memetic),
            "hea" => Ok(SearchMode::Hea),
            other => Err(invalid(format!("unknown search mode {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub mode: SearchMode,
    pub generations: usize,
    pub population: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    /// Per-bit flip probability.
    pub mutation_rate: f64,
    pub crossover_rate: f64,
    pub tournament_size: usize,
    pub elitism: usize,
    pub n_gates: usize,
    pub n_qubits: usize,
    pub seed: u64,
    /// Pairs per local-refinement step; `None` means full batch.
    pub batch: Option<usize>,
    /// Depth allowed before the +1 fitness penalty. `None` uses the depth of
    /// the single-layer hardware-efficient ansatz on `n_qubits`.
    pub depth_limit: Option<usize>,
}

impl SearchConfig {
    /// Search budget of the reference comparison: 30 generations of 15
    /// individuals, 2000 refinement epochs at learning rate 0.2.
    pub fn standard(mode: SearchMode, n_qubits: usize, seed: u64) -> Self {
        let n_gates = 4 * n_qubits;
        SearchConfig {
            mode,
            generations: 30,
            population: 15,
            epochs: 2000,
            learning_rate: 0.2,
            mutation_rate: 1.0 / (GENE_BITS * n_gates) as f64,
            crossover_rate: 0.9,
            tournament_size: 3,
            elitism: 1,
            n_gates,
            n_qubits,
            seed,
            batch: Some(DEFAULT_BATCH),
            depth_limit: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_qubits == 0 {
            return Err(invalid("n_qubits must be at least 1"));
        }
        if self.mode == SearchMode::Hea {
            if self.epochs == 0 {
                return Err(invalid("epochs must be at least 1"));
            }
            return Ok(());
        }
        if self.population < 2 {
            return Err(invalid("population must be at least 2"));
        }
        if self.elitism >= self.population {
            return Err(invalid("elitism must be smaller than the population"));
        }
        if self.generations == 0 || self.n_gates == 0 || self.tournament_size == 0 {
            return Err(invalid("generations, n_gates and tournament_size must be positive"));
        }
        for (name, r) in [("mutation_rate", self.mutation_rate), ("crossover_rate", self.crossover_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(invalid(format!("{name} must lie in [0, 1], got {r}")));
            }
        }
        if self.mode == SearchMode::Memetic && self.epochs == 0 {
            return Err(invalid("memetic search needs at least one refinement epoch"));
        }
        if self.batch == Some(0) {
            return Err(invalid("batch size must be positive"));
        }
        Ok(())
    }

    fn effective_depth_limit(&self) -> Result<usize> {
        match self.depth_limit {
            Some(d) => Ok(d),
            None => Ok(circuit_metrics(&build_hea(self.n_qubits, 1)?).depth),
        }
    }
}

/// An evaluated individual. In memetic mode `params` are the refined angles.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Agent {
    pub chromosome: Chromosome,
    pub params: Vec<f64>,
    /// Kernel MSE plus 1 if the circuit is deeper than the depth limit.
    pub fitness: f64,
    pub mse: f64,
    pub depth: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenerationStats {
    pub generation: usize,
    /// Best fitness in the current population.
    pub best: f64,
    pub mean: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Evolution {
    pub best: Agent,
    pub trace: Vec<GenerationStats>,
    pub pairs: PairSet,
}

struct Evaluator<'a> {
    config: &'a SearchConfig,
    pairs: &'a PairSet,
    gamma: f64,
    depth_limit: usize,
}

impl Evaluator<'_> {
    fn evaluate(&self, chromosome: &Chromosome) -> Result<Agent> {
        let circuit = decode(chromosome, self.config.n_qubits)?;
        let depth = circuit_metrics(&circuit).depth;
        let feasible = depth <= self.depth_limit;
        let init = circuit.init_params().to_vec();
        let init_mse = kernel_mse(&circuit, &init, self.pairs, self.gamma)?;
        let refine = self.config.mode == SearchMode::Memetic
            && feasible
            && circuit.n_params() > 0
            && circuit.has_data_scaled();
        let (params, mse) = if refine {
            let objective = KernelFit {
                circuit: &circuit,
                pairs: self.pairs,
                gamma: self.gamma,
                batch: self.config.batch,
                batch_seed: mix_seed(self.config.seed, STREAM_BATCHES),
            };
            match gd_minimize(&objective, &init, self.config.epochs, self.config.learning_rate) {
                Ok(run) => {
                    let mse = kernel_mse(&circuit, &run.params, self.pairs, self.gamma)?;
                    // local improvement is only kept when it helps on the full pair set
                    if mse < init_mse {
                        (run.params, mse)
                    } else {
                        (init, init_mse)
                    }
                }
                Err(e) => {
                    log::warn!("local refinement of {chromosome} failed: {e}");
                    (init, init_mse)
                }
            }
        } else {
            (init, init_mse)
        };
        Ok(Agent {
            chromosome: chromosome.clone(),
            params,
            fitness: mse + if feasible { 0.0 } else { 1.0 },
            mse,
            depth,
        })
    }
}

fn tournament<'a, R: Rng>(agents: &'a [Agent], size: usize, rng: &mut R) -> &'a Agent {
    (0..size)
        .map(|_| &agents[rng.random_range(0..agents.len())])
        .min_by(|a, b| a.fitness.total_cmp(&b.fitness))
        .expect("tournament size is positive")
}

/// Single-point crossover at a gene boundary.
fn crossover<R: Rng>(a: &Chromosome, b: &Chromosome, rng: &mut R) -> (Chromosome, Chromosome) {
    let genes = a.n_gates();
    if genes < 2 {
        return (a.clone(), b.clone());
    }
    let cut = rng.random_range(1..genes) * GENE_BITS;
    let mut c1 = a.clone();
    let mut c2 = b.clone();
    c1.bits_mut()[cut..].copy_from_slice(&b.bits()[cut..]);
    c2.bits_mut()[cut..].copy_from_slice(&a.bits()[cut..]);
    (c1, c2)
}

fn mutate<R: Rng>(c: &mut Chromosome, rate: f64, rng: &mut R) {
    for bit in c.bits_mut() {
        if rng.random_bool(rate) {
            *bit = !*bit;
        }
    }
}

fn stats(generation: usize, agents: &[Agent]) -> GenerationStats {
    let best = agents.iter().map(|a| a.fitness).fold(f64::INFINITY, f64::min);
    let mean = agents.iter().map(|a| a.fitness).sum::<f64>() / agents.len() as f64;
    GenerationStats { generation, best, mean }
}

/// Genetic or memetic search for a feature-map architecture.
///
/// `config.generations` counts evaluated populations, the random initial one
/// included. Identical chromosomes are evaluated once per run, so elites are
/// never re-refined. The result is fully determined by the configuration.
pub fn evolve(config: &SearchConfig, kernel: &KernelSpec) -> Result<Evolution> {
    config.validate()?;
    kernel.validate()?;
    if config.mode == SearchMode::Hea {
        return Err(invalid("evolve runs genetic or memetic searches; use hea_kernel_fit"));
    }
    let pairs = sample_pairs(kernel, mix_seed(config.seed, STREAM_PAIRS))?;
    let evaluator = Evaluator {
        config,
        pairs: &pairs,
        gamma: kernel.gamma,
        depth_limit: config.effective_depth_limit()?,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(config.seed, STREAM_POPULATION));
    let mut cache: HashMap<Chromosome, Agent> = HashMap::new();

    let mut evaluate_all = |chromosomes: Vec<Chromosome>| -> Result<Vec<Agent>> {
        let mut fresh: Vec<Chromosome> = Vec::new();
        for c in &chromosomes {
            if !cache.contains_key(c) && !fresh.contains(c) {
                fresh.push(c.clone());
            }
        }
        let done = fresh
            .par_iter()
            .map(|c| evaluator.evaluate(c))
            .collect::<Result<Vec<_>>>()?;
        for a in done {
            cache.insert(a.chromosome.clone(), a);
        }
        Ok(chromosomes.iter().map(|c| cache[c].clone()).collect())
    };

    let initial = (0..config.population)
        .map(|_| Chromosome::random(config.n_gates, &mut rng))
        .collect::<Result<Vec<_>>>()?;
    let mut agents = evaluate_all(initial)?;
    let mut trace = vec![stats(0, &agents)];
    let mut best = best_of(&agents).clone();

    for generation in 1..config.generations {
        let mut ranked = agents.clone();
        ranked.sort_by(|a, b| a.fitness.total_cmp(&b.fitness));
        let mut next: Vec<Chromosome> = ranked[..config.elitism].iter().map(|a| a.chromosome.clone()).collect();
        while next.len() < config.population {
            let p1 = tournament(&agents, config.tournament_size, &mut rng).chromosome.clone();
            let p2 = tournament(&agents, config.tournament_size, &mut rng).chromosome.clone();
            let (mut c1, mut c2) = if rng.random_bool(config.crossover_rate) {
                crossover(&p1, &p2, &mut rng)
            } else {
                (p1, p2)
            };
            mutate(&mut c1, config.mutation_rate, &mut rng);
            mutate(&mut c2, config.mutation_rate, &mut rng);
            next.push(c1);
            if next.len() < config.population {
                next.push(c2);
            }
        }
        agents = evaluate_all(next)?;
        trace.push(stats(generation, &agents));
        let gen_best = best_of(&agents);
        if gen_best.fitness < best.fitness {
            best = gen_best.clone();
        }
        log::debug!(
            "generation {generation}: best {:.6e} mean {:.6e}",
            trace[generation].best,
            trace[generation].mean
        );
    }
    Ok(Evolution { best, trace, pairs })
}

fn best_of(agents: &[Agent]) -> &Agent {
    agents
        .iter()
        .min_by(|a, b| a.fitness.total_cmp(&b.fitness))
        .expect("population is nonempty")
}

/// Kernel fit of a data-scaled hardware-efficient ansatz.
#[derive(Clone, Debug, PartialEq)]
pub struct HeaFit {
    pub params: Vec<f64>,
    pub trace: Vec<f64>,
    pub mse: f64,
    pub depth: usize,
}

/// Fits the angles of a fixed `n_layers` hardware-efficient ansatz with
/// data-scaled rotations. Initial angles are uniform in [0, 2π); the pair
/// set matches that of [`evolve`] under the same seed.
pub fn hea_kernel_fit(
    n_qubits: usize,
    n_layers: usize,
    kernel: &KernelSpec,
    epochs: usize,
    learning_rate: f64,
    seed: u64,
    batch: Option<usize>,
) -> Result<HeaFit> {
    if n_layers == 0 {
        return Err(invalid("the ansatz needs at least one layer"));
    }
    kernel.validate()?;
    let circuit = build_hea(n_qubits, n_layers)?.with_data_scaling(true);
    let pairs = sample_pairs(kernel, mix_seed(seed, STREAM_PAIRS))?;
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, STREAM_HEA_INIT));
    let init: Vec<f64> = (0..circuit.n_params())
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    let objective = KernelFit {
        circuit: &circuit,
        pairs: &pairs,
        gamma: kernel.gamma,
        batch,
        batch_seed: mix_seed(seed, STREAM_BATCHES),
    };
    let run = gd_minimize(&objective, &init, epochs, learning_rate)?;
    let mse = *run.trace.last().expect("trace is nonempty");
    Ok(HeaFit {
        params: run.params,
        trace: run.trace,
        mse,
        depth: circuit_metrics(&circuit).depth,
    })
}

/// Writes the per-generation log as CSV.
pub fn write_trace_csv<W: Write>(mut w: W, trace: &[GenerationStats]) -> std::io::Result<()> {
    writeln!(w, "generation,best_fitness,mean_fitness")?;
    for s in trace {
        writeln!(w, "{},{},{}", s.generation, s.best, s.mean)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(mode: SearchMode, seed: u64) -> (SearchConfig, KernelSpec) {
        let mut c = SearchConfig::standard(mode, 2, seed);
        c.generations = 6;
        c.population = 6;
        c.epochs = 40;
        c.batch = Some(16);
        (c, KernelSpec { n_pairs: 200, ..Default::default() })
    }

    #[test]
    fn config_validation() {
        let (mut c, _) = small(SearchMode::Genetic, 0);
        c.population = 1;
        assert!(c.validate().is_err());
        let (mut c, _) = small(SearchMode::Genetic, 0);
        c.elitism = c.population;
        assert!(c.validate().is_err());
        let (mut c, _) = small(SearchMode::Genetic, 0);
        c.mutation_rate = 1.5;
        assert!(c.validate().is_err());
        let (c, k) = small(SearchMode::Hea, 0);
        assert!(evolve(&c, &k).is_err());
    }

    #[test]
    fn standard_budget() {
        let c = SearchConfig::standard(SearchMode::Memetic, 3, 0);
        assert_eq!((c.generations, c.population, c.epochs, c.learning_rate), (30, 15, 2000, 0.2));
    }

    #[test]
    fn evolution_is_deterministic_and_elitist() {
        for mode in [SearchMode::Genetic, SearchMode::Memetic] {
            let (c, k) = small(mode, 5);
            let a = evolve(&c, &k).unwrap();
            let b = evolve(&c, &k).unwrap();
            assert_eq!(a.best, b.best);
            assert_eq!(a.trace, b.trace);
            assert_eq!(a.trace.len(), c.generations);
            assert!(a.trace.windows(2).all(|w| w[1].best <= w[0].best));
            assert_eq!(a.best.fitness, a.trace.last().unwrap().best);
        }
    }

    #[test]
    fn best_agent_fitness_is_consistent() {
        let (c, k) = small(SearchMode::Memetic, 2);
        let run = evolve(&c, &k).unwrap();
        let circuit = decode(&run.best.chromosome, c.n_qubits).unwrap();
        let mse = kernel_mse(&circuit, &run.best.params, &run.pairs, k.gamma).unwrap();
        assert!((mse - run.best.mse).abs() < 1e-15);
    }

    #[test]
    fn crossover_cuts_on_gene_boundaries() {
        let a: Chromosome = "0000000000000000000000000".parse().unwrap();
        let b: Chromosome = "1111111111111111111111111".parse().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..20 {
            let (c1, _) = crossover(&a, &b, &mut rng);
            let cut = c1.bits().iter().position(|&x| x).unwrap();
            assert_eq!(cut % GENE_BITS, 0);
        }
    }

    #[test]
    fn trace_csv_layout() {
        let mut out = Vec::new();
        write_trace_csv(&mut out, &[GenerationStats { generation: 0, best: 0.5, mean: 0.75 }]).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), "generation,best_fitness,mean_fitness\n0,0.5,0.75\n");
    }
}
