use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use log::{info, warn};
use serde::Serialize;

use memoqcd::data::{generate, read_csv, scale_to_interval, write_csv, GENERATORS};
use memoqcd::dmkde::{density_grid, padded_bounds, EstimateMode, QfmArchitecture, SearchRecord, TrainRecord};
use memoqcd::eval::evaluate_model_kld;
use memoqcd::optimize::{evolve, hea_kernel_fit, write_trace_csv};
use memoqcd::trainstate::{train_state_circuit, Likelihood, TrainOptions};
use memoqcd::{DMKDEModel, Dataset, GridSpec, HEALayout, KernelSpec, SearchConfig, SearchMode};

use crate::manifest::Recorder;
use crate::CliError;

/// Largest grid the training command evaluates for the normalisation constant.
const MAX_NORM_GRID: f64 = 1e6;

#[derive(Args, Debug, Serialize)]
pub struct SearchArgs {
    /// genetic, memetic or hea
    #[arg(long, default_value = "memetic")]
    pub mode: SearchMode,
    /// Qubits per feature.
    #[arg(long, default_value_t = 3)]
    pub qubits: usize,
    #[arg(long, default_value_t = 0.1)]
    pub gamma: f64,
    #[arg(long, default_value_t = 10_000)]
    pub pairs: usize,
    /// Interval the fitting pairs are drawn from.
    #[arg(long, num_args = 2, value_names = ["A", "B"], allow_negative_numbers = true, default_values_t = [-3.0, 3.0])]
    pub interval: Vec<f64>,
    #[arg(long, default_value_t = 30)]
    pub generations: usize,
    #[arg(long, default_value_t = 15)]
    pub population: usize,
    /// Gradient steps per refinement (memetic) or in total (hea).
    #[arg(long, default_value_t = 2000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.2)]
    pub lr: f64,
    /// Pairs per gradient step; 0 uses every pair.
    #[arg(long, default_value_t = memoqcd::optimize::DEFAULT_BATCH)]
    pub batch: usize,
    /// Ansatz layers in hea mode.
    #[arg(long, default_value_t = 1)]
    pub layers: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Model stub to write.
    #[arg(long)]
    pub out: PathBuf,
    /// Trace CSV; defaults to the stub path with extension `trace.csv`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct TrainArgs {
    /// Model stub from qfm-search.
    #[arg(long)]
    pub model: PathBuf,
    /// Training data CSV.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 5)]
    pub layers: usize,
    /// Auxiliary qubits.
    #[arg(long, default_value_t = 1)]
    pub aux: usize,
    #[arg(long, default_value_t = 5000)]
    pub epochs: usize,
    #[arg(long, default_value_t = 0.4)]
    pub lr: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// log-of-sum or sum-of-logs
    #[arg(long, default_value = "log-of-sum")]
    pub likelihood: Likelihood,
    /// Use the data as given instead of min-max scaling it onto the
    /// feature-map interval.
    #[arg(long)]
    pub no_scale: bool,
    /// Grid resolution per dimension for the normalisation constant; 0 skips it.
    #[arg(long, default_value_t = 100)]
    pub norm_resolution: usize,
    /// Trained model to write; defaults to overwriting the stub.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Log-likelihood trace CSV; defaults to the model path with extension `ll.csv`.
    #[arg(long)]
    pub trace: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Exact,
    Shots,
}

#[derive(Args, Debug, Serialize)]
pub struct EstimateArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Comma-separated coordinates, e.g. "0.5,-1".
    #[arg(long, allow_hyphen_values = true, required_unless_present = "grid", conflicts_with = "grid")]
    pub point: Option<String>,
    /// Grid resolution per dimension.
    #[arg(long)]
    pub grid: Option<usize>,
    /// Grid box as lo,hi per dimension, e.g. "-3,3,-3,3". Defaults to the
    /// model's normalisation grid.
    #[arg(long, allow_hyphen_values = true, requires = "grid")]
    pub bounds: Option<String>,
    /// Point coordinates are in the raw data space; map them through the
    /// model's scaling first.
    #[arg(long)]
    pub raw: bool,
    #[arg(long, value_enum, default_value_t = Mode::Exact)]
    pub mode: Mode,
    #[arg(long, default_value_t = 10_000)]
    pub shots: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// CSV, or PGM when the extension is `.pgm`. Stdout when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct KldArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Dataset in the same coordinates the model was trained from.
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long, default_value_t = 50, value_parser = clap::value_parser!(u64).range(1..))]
    pub seeds: u64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Skip the model's stored scaling.
    #[arg(long)]
    pub no_scale: bool,
    /// Per-seed report CSV.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug, Serialize)]
pub struct DatagenArgs {
    #[arg(long, value_parser = clap::builder::PossibleValuesParser::new(GENERATORS))]
    pub name: String,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn read_model(path: &Path) -> Result<DMKDEModel, CliError> {
    let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read model {}: {e}", path.display())))?;
    DMKDEModel::from_json(&text).map_err(|e| usage(format!("bad model file {}: {e}", path.display())))
}

fn read_data(path: &Path) -> Result<Dataset, CliError> {
    read_csv(path).map_err(|e| usage(format!("cannot load data {}: {e}", path.display())))
}

fn write_model(model: &DMKDEModel, path: &Path) -> Result<(), CliError> {
    fs::write(path, model.to_json()? + "\n")?;
    Ok(())
}

fn sibling(path: &Path, ext: &str) -> PathBuf {
    path.with_extension(ext)
}

fn parse_list(text: &str, what: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|e| usage(format!("bad {what} value {s:?}: {e}")))
        })
        .collect()
}

pub fn qfm_search(args: &SearchArgs) -> Result<(), CliError> {
    let kernel = KernelSpec {
        gamma: args.gamma,
        a: args.interval[0],
        b: args.interval[1],
        n_pairs: args.pairs,
    };
    kernel.validate().map_err(|e| usage(e.to_string()))?;
    let batch = (args.batch > 0).then_some(args.batch);
    let trace_path = args.trace.clone().unwrap_or_else(|| sibling(&args.out, "trace.csv"));
    let mut rec = Recorder::new("qfm-search", args, vec![args.seed]);

    let (arch, params, search) = if args.mode == SearchMode::Hea {
        if args.qubits == 0 {
            return Err(usage("--qubits must be at least 1"));
        }
        let fit = hea_kernel_fit(args.qubits, args.layers, &kernel, args.epochs, args.lr, args.seed, batch)?;
        let mut csv = String::from("epoch,mse\n");
        for (i, v) in fit.trace.iter().enumerate() {
            csv.push_str(&format!("{i},{v}\n"));
        }
        fs::write(&trace_path, csv)?;
        info!("hea fit: mse {:.3e}, depth {}", fit.mse, fit.depth);
        let search = SearchRecord {
            mode: args.mode,
            seed: args.seed,
            kernel_mse: fit.mse,
            depth: fit.depth,
        };
        (QfmArchitecture::Hea { layers: args.layers }, fit.params, search)
    } else {
        let mut config = SearchConfig::standard(args.mode, args.qubits, args.seed);
        config.generations = args.generations;
        config.population = args.population;
        config.epochs = args.epochs;
        config.learning_rate = args.lr;
        config.batch = batch;
        config.validate().map_err(|e| usage(e.to_string()))?;
        let run = evolve(&config, &kernel)?;
        let mut buf = Vec::new();
        write_trace_csv(&mut buf, &run.trace)?;
        fs::write(&trace_path, buf)?;
        let best = run.best;
        info!("best agent: mse {:.3e}, depth {}, fitness {:.3e}", best.mse, best.depth, best.fitness);
        let search = SearchRecord {
            mode: args.mode,
            seed: args.seed,
            kernel_mse: best.mse,
            depth: best.depth,
        };
        (QfmArchitecture::Chromosome { chromosome: best.chromosome }, best.params, search)
    };

    let stub = DMKDEModel::stub(args.qubits, arch, params, kernel, search)?;
    write_model(&stub, &args.out)?;
    println!("kernel mse {:e}, depth {}", stub.search.kernel_mse, stub.search.depth);
    rec.produced(&args.out);
    rec.produced(&trace_path);
    rec.finish(&args.out)?;
    Ok(())
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let mut model = read_model(&args.model)?;
    let raw = read_data(&args.data)?;
    if model.is_trained() {
        warn!("{} is already trained; its training state will be replaced", args.model.display());
    }
    let layout = HEALayout::new(model.n_x, raw.d, args.aux, args.layers)?;
    let data = if args.no_scale {
        raw
    } else {
        scale_to_interval(&raw, model.kernel.a, model.kernel.b)?
    };
    let options = TrainOptions {
        epochs: args.epochs,
        learning_rate: args.lr,
        seed: args.seed,
        likelihood: args.likelihood,
    };
    let out = args.out.clone().unwrap_or_else(|| args.model.clone());
    let trace_path = args.trace.clone().unwrap_or_else(|| sibling(&out, "ll.csv"));
    let mut rec = Recorder::new("train", args, vec![args.seed]);

    let report = train_state_circuit(&layout, &model.feature_map()?, &data.points, &options)?;
    info!("log-likelihood {:.4} -> {:.4}", report.initial(), report.last());
    model.layout = Some(layout);
    model.hea_params = report.params.clone();
    model.train = Some(TrainRecord {
        seed: args.seed,
        epochs: args.epochs,
        learning_rate: args.lr,
        likelihood: args.likelihood,
        initial_log_likelihood: report.initial(),
        final_log_likelihood: report.last(),
    });
    model.scale = data.scale.clone();
    model.norm_constant = None;
    model.norm_grid = None;

    if args.norm_resolution > 0 {
        let cap = MAX_NORM_GRID.powf(1.0 / data.d as f64).floor() as usize;
        let resolution = args.norm_resolution.min(cap.max(2));
        let spec = GridSpec::uniform(padded_bounds(&data.points, model.kernel.gamma)?, resolution)?;
        density_grid(&mut model, &spec, EstimateMode::Exact)?;
    }

    let mut csv = String::from("epoch,log_likelihood\n");
    for (i, v) in report.ll_trace.iter().enumerate() {
        csv.push_str(&format!("{i},{v}\n"));
    }
    fs::write(&trace_path, csv)?;
    write_model(&model, &out)?;
    println!("log-likelihood {} -> {}", report.initial(), report.last());
    rec.produced(&out);
    rec.produced(&trace_path);
    rec.finish(&out)?;
    Ok(())
}

pub fn estimate(args: &EstimateArgs) -> Result<(), CliError> {
    let model = read_model(&args.model)?;
    if !model.is_trained() {
        return Err(usage(format!("{} is an untrained stub; run train first", args.model.display())));
    }
    let mode = match args.mode {
        Mode::Exact => EstimateMode::Exact,
        Mode::Shots => {
            if args.shots == 0 {
                return Err(usage("--shots must be at least 1"));
            }
            EstimateMode::Shots {
                shots: args.shots,
                seed: args.seed,
            }
        }
    };
    let d = model.layout.map(|l| l.d).unwrap_or(0);
    let mut rec = Recorder::new("estimate", args, vec![args.seed]);

    let body: Vec<u8> = if let Some(text) = &args.point {
        let mut x = parse_list(text, "point")?;
        if x.len() != d {
            return Err(usage(format!("point has {} coordinates, the model expects {d}", x.len())));
        }
        if args.raw {
            match &model.scale {
                Some(s) => x = s.apply(&x),
                None => warn!("model stores no scaling; --raw has no effect"),
            }
        }
        let (a, b) = (model.kernel.a, model.kernel.b);
        if x.iter().any(|v| *v < a || *v > b) {
            warn!("point {x:?} lies outside the feature-map interval [{a}, {b}]; evaluating anyway");
        }
        let circuit = model.density_circuit()?;
        let value = match mode {
            EstimateMode::Exact => circuit.estimate_exact(&x)?,
            EstimateMode::Shots { shots, seed } => circuit.estimate_shots(&x, shots, seed)?,
        };
        let mut out = String::new();
        let coords: Vec<String> = (0..d).map(|j| format!("x{j}")).collect();
        out.push_str(&coords.join(","));
        out.push_str(",estimate");
        if model.norm_constant.is_some() {
            out.push_str(",density");
        }
        out.push('\n');
        for v in &x {
            out.push_str(&format!("{v:?},"));
        }
        out.push_str(&format!("{value:?}"));
        if let Some(c) = model.norm_constant {
            out.push_str(&format!(",{:?}", value * c));
        }
        out.push('\n');
        out.into_bytes()
    } else {
        let resolution = args.grid.expect("clap requires --point or --grid");
        if resolution == 0 {
            return Err(usage("--grid must be at least 1"));
        }
        let bounds = match (&args.bounds, &model.norm_grid) {
            (Some(text), _) => {
                let v = parse_list(text, "bounds")?;
                if v.len() != 2 * d {
                    return Err(usage(format!("--bounds needs {} values for a {d}-D model", 2 * d)));
                }
                v.chunks(2).map(|c| (c[0], c[1])).collect()
            }
            (None, Some(g)) => g.bounds.clone(),
            (None, None) => {
                let pad = 3.0 / model.kernel.gamma.sqrt();
                vec![(model.kernel.a - pad, model.kernel.b + pad); d]
            }
        };
        let spec = GridSpec::uniform(bounds, resolution)?;
        // Normalise over the exported grid itself so it carries unit mass.
        let mut work = model.clone();
        work.norm_constant = None;
        let grid = density_grid(&mut work, &spec, mode)?;
        let mut buf = Vec::new();
        let pgm = args.out.as_ref().is_some_and(|p| p.extension().is_some_and(|e| e == "pgm"));
        if pgm {
            grid.write_pgm(&mut buf)?;
        } else {
            grid.write_csv(&mut buf)?;
        }
        info!("grid of {} cells, mass {:.9}", spec.len(), grid.mass());
        buf
    };

    match &args.out {
        Some(path) => {
            fs::write(path, &body)?;
            rec.produced(path);
            rec.finish(path)?;
        }
        None => std::io::stdout().write_all(&body)?,
    }
    Ok(())
}

pub fn kld(args: &KldArgs) -> Result<(), CliError> {
    let model = read_model(&args.model)?;
    if !model.is_trained() {
        return Err(usage(format!("{} is an untrained stub; run train first", args.model.display())));
    }
    let data = read_data(&args.data)?;
    let points: Vec<Vec<f64>> = match (&model.scale, args.no_scale) {
        (Some(s), false) => data.points.iter().map(|p| s.apply(p)).collect(),
        _ => data.points,
    };
    let mut rec = Recorder::new("kld", args, vec![args.seed]);
    let report = evaluate_model_kld(&model, &points, args.seeds as usize, args.k as usize, args.seed)?;
    println!("kld {} ± {} over {} seeds", report.mean, report.std_dev, report.per_seed.len());
    if let Some(path) = &args.out {
        let mut buf = Vec::new();
        report.write_csv(&mut buf)?;
        fs::write(path, buf)?;
        rec.produced(path);
        rec.finish(path)?;
    }
    Ok(())
}

pub fn datagen(args: &DatagenArgs) -> Result<(), CliError> {
    let mut rec = Recorder::new("datagen", args, vec![args.seed]);
    let ds = generate(&args.name, args.n, args.noise, args.seed).map_err(|e| usage(e.to_string()))?;
    write_csv(&ds, &args.out)?;
    rec.produced(&args.out);
    rec.finish(&args.out)?;
    Ok(())
}
