//! Command-line front end: analytic tables, convergence experiments and the
//! learnt-projection pipeline.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use sdm_lab::analysis::{
    analytic_snr, critical_distance_vs_neurons, monte_carlo_snr, optimal_d_critical, optimal_d_memory_for_prob,
    optimal_d_snr, OptimalD,
};
use sdm_lab::engines::{build_engine, converge, ConvergeOptions, EngineKind, PatternSet, Query};
use sdm_lab::harness::config::Config;
use sdm_lab::harness::dataset::Dataset;
use sdm_lab::harness::export::{self, Format, Manifest};
use sdm_lab::harness::projection::{
    aggregate_projection, evaluate_projection, train_from, ProjectionModel, ProjectionRow,
};
use sdm_lab::harness::{aggregate, run_convergence_experiment, thread_pool, DatasetSource, RunOptions};
use sdm_lab::intersect::{binary_circle_intersection, continuous_cap_fraction, log_sum_exp};

use sdm_lab::vectorspace::{binary_to_unit, hamming_to_cosine, perturb_binary, perturb_continuous, BitVector, PatternStore};
use sdm_lab::weighting::{fit_beta, FitSource};
use sdm_lab::{Result, SdmError};

#[derive(Parser)]
#[command(name = "sdm-lab", version, about = "Sparse Distributed Memory and attention experiments")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (stdout when omitted).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum, default_value_t = OutFormat::Csv)]
    format: OutFormat,
    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "SDM_LAB_THREADS", default_value_t = 0)]
    threads: usize,
    /// Include every iterate of each convergence trace in the output.
    #[arg(long, global = true)]
    dump_iterates: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum OutFormat {
    Csv,
    Json,
}

impl From<OutFormat> for Format {
    fn from(f: OutFormat) -> Self {
        match f {
            OutFormat::Csv => Format::Csv,
            OutFormat::Json => Format::Json,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Space {
    Binary,
    Continuous,
}

#[derive(Subcommand)]
enum Command {
    /// Circle-intersection sizes and normalized read weights over d_v.
    Intersect {
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_values_t = vec![11])]
        d: Vec<usize>,
        #[arg(long, value_enum, default_value_t = Space::Binary)]
        space: Space,
    },
    /// Regress log intersection on cosine similarity to get softmax β.
    FitBeta {
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, value_delimiter = ',', default_values_t = vec![5, 11, 15])]
        d: Vec<usize>,
        #[arg(long, value_enum, default_value_t = Space::Binary)]
        source: Space,
    },
    /// Optimal Hamming radius under the SNR, memory-capacity and
    /// critical-distance criteria (both reference settings by default).
    OptimalD {
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        r: Option<f64>,
        /// Per-pattern retrieval probability for the memory criterion.
        #[arg(long, default_value_t = 0.99)]
        prob: f64,
    },
    /// Critical distance for every (d, r) combination.
    CriticalDistance {
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 10_000)]
        m: usize,
        #[arg(long, value_delimiter = ',', default_values_t = vec![1e6])]
        r: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_values_t = vec![431, 440, 448, 451, 460])]
        d: Vec<usize>,
    },
    /// Analytic versus Monte Carlo signal-to-noise over query distances.
    SnrSim {
        #[arg(long, default_value_t = 100)]
        n: usize,
        #[arg(long, default_value_t = 35)]
        d: usize,
        #[arg(long, default_value_t = 10_000.0)]
        r: f64,
        #[arg(long, default_value_t = 100)]
        m: usize,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0, 10, 20, 30, 40, 50, 60, 70])]
        dv: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        trials: usize,
    },
    /// One convergence trace on random patterns.
    Converge {
        #[arg(long, default_value = "BinarySDM")]
        engine: EngineKind,
        #[arg(long, default_value_t = 64)]
        n: usize,
        #[arg(long, default_value_t = 1024)]
        m: usize,
        #[arg(long, default_value_t = 11)]
        d: usize,
        #[arg(long)]
        r: Option<f64>,
        /// Bits flipped (or the cosine equivalent) in the initial query.
        #[arg(long, default_value_t = 8)]
        magnitude: usize,
        #[arg(long, default_value_t = 100)]
        max_iters: usize,
    },
    /// Full convergence experiment over engines, radii and perturbations.
    Experiment(ExperimentArgs),
    /// Train a latent projection on an image dataset.
    TrainProjection(DataArgs),
    /// Run the continuous engines through a trained projection.
    EvaluateProjection {
        /// Model JSON written by `train-projection`.
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        data: DataArgs,
    },
}

#[derive(Args)]
struct ExperimentArgs {
    #[arg(long, value_delimiter = ',')]
    engines: Option<Vec<EngineKind>>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    r: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    d: Option<Vec<usize>>,
    #[arg(long, value_delimiter = ',')]
    magnitudes: Option<Vec<usize>>,
    #[arg(long)]
    dataset_replicates: Option<usize>,
    #[arg(long)]
    perturbation_replicates: Option<usize>,
    /// Targets per replicate (all stored patterns when omitted).
    #[arg(long)]
    queries: Option<usize>,
    #[arg(long)]
    max_iters: Option<usize>,
    /// Dataset source: random-uniform, idx, raw-grayscale or csv.
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    data: Option<PathBuf>,
}

#[derive(Args)]
struct DataArgs {
    /// IDX image file.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Use only the first rows of the dataset.
    #[arg(long)]
    limit: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    engines: Option<Vec<EngineKind>>,
    #[arg(long, value_delimiter = ',')]
    magnitudes: Option<Vec<usize>>,
    #[arg(long)]
    queries: Option<usize>,
    /// Neuron counts for the finite-r sweep; `inf` for unbounded.
    #[arg(long, value_delimiter = ',')]
    rs: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: &'a str,
    message: String,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let record = ErrorRecord {
                error: e.kind(),
                message: e.to_string(),
            };
            eprintln!("{}", serde_json::to_string(&record).expect("error record serializes"));
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let common = cli.common;
    let mut config = match &common.config {
        Some(p) => Config::load(p)?,
        None => Config::default(),
    };
    let seed = common.seed.unwrap_or(config.experiment.seed);
    match cli.command {
        Command::Intersect { n, d, space } => intersect_table(&common, n, &d, space),
        Command::FitBeta { n, d, source } => {
            #[derive(Serialize)]
            struct Row {
                d: usize,
                n: usize,
                beta: f64,
                intercept: f64,
                r_squared: f64,
            }
            let source = match source {
                Space::Binary => FitSource::Binary,
                Space::Continuous => FitSource::Continuous,
            };
            let rows = d
                .iter()
                .map(|&d| {
                    fit_beta(d, n, source).map(|f| Row {
                        d,
                        n,
                        beta: f.beta,
                        intercept: f.log_intercept,
                        r_squared: f.r_squared,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            emit_table(&common, &rows)
        }
        Command::OptimalD { n, m, r, prob } => {
            let settings = match (n, m, r) {
                (None, None, None) => vec![(1000, 10_000, 1e6), (64, 1024, 2f64.powi(64))],
                (Some(n), Some(m), Some(r)) => vec![(n, m, r)],
                _ => return Err(SdmError::Config("give all of --n, --m and --r, or none".into())),
            };
            let mut rows: Vec<OptimalD> = Vec::new();
            for (n, m, r) in settings {
                rows.push(optimal_d_snr(n, m, r)?);
                rows.push(optimal_d_memory_for_prob(n, r, prob)?);
                rows.push(optimal_d_critical(n, m, r)?);
            }
            emit_table(&common, &rows)
        }
        Command::CriticalDistance { n, m, r, d } => emit_table(&common, &critical_distance_vs_neurons(&d, n, m, &r)?),
        Command::SnrSim { n, d, r, m, dv, trials } => {
            #[derive(Serialize)]
            struct Row {
                d_v: usize,
                analytic_snr: f64,
                simulated_snr: f64,
                standard_error: Option<f64>,
                trials: usize,
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let rows = dv
                .iter()
                .map(|&dv| {
                    let a = analytic_snr(dv, d, r, m, n)?;
                    let s = monte_carlo_snr(n, d, r, m, dv, trials, &mut rng)?;
                    Ok(Row {
                        d_v: dv,
                        analytic_snr: a.snr,
                        simulated_snr: s.snr,
                        standard_error: s.standard_error,
                        trials,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            emit_table(&common, &rows)
        }
        Command::Converge {
            engine,
            n,
            m,
            d,
            r,
            magnitude,
            max_iters,
        } => converge_once(&common, seed, engine, n, m, d, r, magnitude, max_iters),
        Command::Experiment(args) => experiment(&common, &mut config, seed, args),
        Command::TrainProjection(args) => train(&common, &mut config, seed, args),
        Command::EvaluateProjection { model, data } => evaluate(&common, &mut config, &model, data),
    }
}

fn write_output(common: &Common, text: &str) -> Result<()> {
    match &common.out {
        Some(p) => fs::write(p, text)?,
        None => io::stdout().lock().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn emit_table<T: Serialize>(common: &Common, rows: &[T]) -> Result<()> {
    let text = match common.format {
        OutFormat::Json => serde_json::to_string_pretty(rows).map_err(|e| SdmError::Numeric(e.to_string()))?,
        OutFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r).map_err(|e| SdmError::Numeric(e.to_string()))?;
            }
            String::from_utf8(w.into_inner().map_err(|e| SdmError::Numeric(e.to_string()))?)
                .expect("csv output is utf-8")
        }
    };
    write_output(common, &text)
}

fn intersect_table(common: &Common, n: usize, ds: &[usize], space: Space) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        d: usize,
        d_v: usize,
        log_intersection: f64,
        weight: f64,
    }
    let mut rows = Vec::new();
    for &d in ds {
        let logs: Vec<f64> = (0..=n)
            .map(|dv| match space {
                Space::Binary => binary_circle_intersection(dv, d, n).map(|w| w.ln()),
                Space::Continuous => {
                    let c = hamming_to_cosine(dv, n)?;
                    let cd = hamming_to_cosine(d, n)?;
                    continuous_cap_fraction(c, cd, n).map(f64::ln)
                }
            })
            .collect::<Result<_>>()?;
        let total = log_sum_exp(&logs);
        for (dv, &l) in logs.iter().enumerate() {
            rows.push(Row {
                d,
                d_v: dv,
                log_intersection: l,
                weight: (l - total).exp(),
            });
        }
    }
    emit_table(common, &rows)
}

#[allow(clippy::too_many_arguments)]
fn converge_once(
    common: &Common,
    seed: u64,
    engine: EngineKind,
    n: usize,
    m: usize,
    d: usize,
    r: Option<f64>,
    magnitude: usize,
    max_iters: usize,
) -> Result<()> {
    #[derive(Serialize)]
    struct Row {
        step: usize,
        distance_to_target: f64,
        #[serde(skip_serializing_if = "Option::is_none")]
        iterate: Option<String>,
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let patterns: Vec<BitVector> = (0..m).map(|_| BitVector::random(n, &mut rng)).collect();
    let target = patterns[0].clone();
    let (set, query, target) = if engine.is_binary() {
        let q = perturb_binary(&target, magnitude, &mut rng)?;
        (
            PatternSet::Binary(PatternStore::autoassociative(patterns)?.into()),
            Query::Binary(q),
            Query::Binary(target),
        )
    } else {
        let t = binary_to_unit(&target);
        let q = perturb_continuous(&t, hamming_to_cosine(magnitude, n)?, &mut rng)?;
        let dense = patterns.iter().map(binary_to_unit).collect();
        (
            PatternSet::Dense(PatternStore::autoassociative(dense)?.into()),
            Query::Dense(q),
            Query::Dense(t),
        )
    };
    let e = build_engine(engine, n, d, r, set, &mut rng)?;
    let trace = converge(
        &e,
        &query,
        &ConvergeOptions {
            max_iters,
            target: Some(&target),
            keep_iterates: common.dump_iterates,
        },
        &mut rng,
    )?;
    let rows: Vec<Row> = trace
        .distances
        .iter()
        .enumerate()
        .map(|(step, &dist)| Row {
            step,
            distance_to_target: dist,
            iterate: trace.iterates.get(step).map(render_query),
        })
        .collect();
    emit_table(common, &rows)
}

fn render_query(q: &Query) -> String {
    match q {
        Query::Binary(b) => b.iter().map(|bit| if bit { '1' } else { '0' }).collect(),
        Query::Dense(v) => v.as_slice().iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" "),
    }
}

fn experiment(common: &Common, config: &mut Config, seed: u64, args: ExperimentArgs) -> Result<()> {
    let e = &mut config.experiment;
    e.seed = seed;
    if let Some(v) = args.engines {
        e.engines = v;
    }
    if let Some(v) = args.n {
        e.n = v;
    }
    if let Some(v) = args.m {
        e.m = v;
    }
    if args.r.is_some() {
        e.r = args.r;
    }
    if let Some(v) = args.d {
        e.d = v;
    }
    if let Some(v) = args.magnitudes {
        e.magnitudes = v;
    }
    if let Some(v) = args.dataset_replicates {
        e.dataset_replicates = v;
    }
    if let Some(v) = args.perturbation_replicates {
        e.perturbation_replicates = v;
    }
    if args.queries.is_some() {
        e.queries = args.queries;
    }
    if let Some(v) = args.max_iters {
        e.max_iters = v;
    }
    if let Some(v) = args.dataset {
        config.dataset.source = v;
    }
    if args.data.is_some() {
        config.dataset.path = args.data;
    }
    if common.out.is_some() {
        config.experiment.output = common.out.clone();
    }
    let spec = config.experiment_spec()?;
    let started = Instant::now();
    let outcome = run_convergence_experiment(
        &spec,
        &RunOptions {
            threads: common.threads,
            dump_iterates: common.dump_iterates,
        },
    )?;
    for s in &outcome.skipped {
        eprintln!("skipped {} at d={} (replicate {}): {}", s.engine, s.d, s.dataset_replicate, s.error);
    }
    eprintln!("{} trials in {:.1?}", outcome.trials.len(), started.elapsed());
    let rows = aggregate(&spec, &outcome.trials);
    let manifest = Manifest::new(&spec, outcome.trials.len(), outcome.skipped);
    match &spec.output {
        Some(path) => {
            export::export_results(&manifest, &rows, common.format.into(), path)?;
            if common.dump_iterates {
                let mut trials = String::new();
                for t in &outcome.trials {
                    trials.push_str(&serde_json::to_string(t).map_err(|e| SdmError::Numeric(e.to_string()))?);
                    trials.push('\n');
                }
                let mut p = path.as_os_str().to_owned();
                p.push(".trials.jsonl");
                fs::write(PathBuf::from(p), trials)?;
            }
            Ok(())
        }
        None => match common.format {
            OutFormat::Csv => write_output(common, &export::to_csv(&rows)),
            OutFormat::Json => write_output(common, &export::to_json(&manifest, &rows)?),
        },
    }
}

fn load_images(config: &Config, args: &DataArgs) -> Result<Dataset> {
    let source = match &args.data {
        Some(path) => DatasetSource::Idx { path: path.clone() },
        None => config.dataset.to_source()?,
    };
    let data = source
        .load()?
        .ok_or_else(|| SdmError::Config("projection commands need an image dataset (--data)".into()))?;
    Ok(match args.limit.or(config.dataset.limit) {
        Some(k) => data.head(k),
        None => data,
    })
}

fn train(common: &Common, config: &mut Config, seed: u64, args: DataArgs) -> Result<()> {
    let data = load_images(config, &args)?;
    let cfg = &mut config.projection;
    if let Some(v) = args.epochs {
        cfg.epochs = v;
    }
    if let Some(v) = args.d {
        cfg.d = v;
    }
    if let Some(v) = args.learning_rate {
        cfg.learning_rate = v;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = ProjectionModel::random(data.dim(), cfg, &mut rng)?;
    let (model, stats) = train_from(model, &data.data, cfg, &mut rng)?;
    for s in &stats {
        eprintln!("epoch {} loss {:.6} ({} steps)", s.epoch, s.mean_loss, s.steps);
    }
    let text = serde_json::to_string(&model).map_err(|e| SdmError::Numeric(e.to_string()))?;
    write_output(common, &text)
}

fn evaluate(common: &Common, config: &mut Config, model: &Path, args: DataArgs) -> Result<()> {
    let data = load_images(config, &args)?;
    let model: ProjectionModel = serde_json::from_str(&fs::read_to_string(model)?).map_err(|e| SdmError::Format {
        offset: 0,
        message: format!("bad model file: {e}"),
    })?;
    let ev = &mut config.evaluation;
    ev.seed = common.seed.unwrap_or(ev.seed);
    if let Some(v) = args.engines {
        ev.engines = v;
    }
    if let Some(v) = args.d {
        ev.ds = vec![v];
    }
    if let Some(v) = args.magnitudes {
        ev.magnitudes = v;
    }
    if let Some(v) = args.queries {
        ev.queries = v;
    }
    if let Some(v) = args.rs {
        ev.rs = v;
    }
    let pool = thread_pool(common.threads)?;
    let trials = pool.install(|| evaluate_projection(&model, &data.data, ev))?;
    let rows: Vec<ProjectionRow> = aggregate_projection(ev, &trials);
    emit_table(common, &rows)
}
