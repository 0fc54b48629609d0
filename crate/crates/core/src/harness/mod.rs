//! Experiment orchestration: convergence experiments over many engines and
//! radii, deterministic per-trial seeding, parallel execution and
//! aggregation.

pub mod config;
pub mod dataset;
pub mod export;
pub mod projection;

use std::collections::HashMap;
use std::path::PathBuf;
use std::sync::Arc;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::engines::{build_engine, converge, ConvergeOptions, Engine, EngineKind, PatternSet, Query};
use crate::error::{Result, SdmError};
use crate::vectorspace::{perturb_binary, perturb_continuous, BitVector, DenseVector, PatternStore};
use dataset::Dataset;

/// Where an experiment's patterns come from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum DatasetSource {
    RandomUniform,
    Idx {
        path: PathBuf,
    },
    RawGrayscale {
        path: PathBuf,
        height: usize,
        width: usize,
        channels: usize,
    },
    Csv {
        path: PathBuf,
    },
}

impl DatasetSource {
    pub fn is_random(&self) -> bool {
        matches!(self, DatasetSource::RandomUniform)
    }

    /// Loads the file-backed sources; `None` for synthetic data.
    pub fn load(&self) -> Result<Option<Dataset>> {
        Ok(match self {
            DatasetSource::RandomUniform => None,
            DatasetSource::Idx { path } => Some(dataset::load_idx(path)?),
            DatasetSource::RawGrayscale {
                path,
                height,
                width,
                channels,
            } => Some(dataset::load_raw_grayscale(path, *height, *width, *channels)?),
            DatasetSource::Csv { path } => Some(dataset::load_csv_matrix(path)?),
        })
    }
}

/// A complete description of a convergence experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub engines: Vec<EngineKind>,
    pub n: usize,
    /// Neuron count; `None` means every address holds a neuron.  Engines that
    /// need a finite count fail to build without one.
    pub r: Option<f64>,
    pub m: usize,
    pub ds: Vec<usize>,
    /// Perturbation magnitudes in bits.  Continuous queries are perturbed to
    /// the equivalent cosine `1 − 2k/n`.
    pub magnitudes: Vec<usize>,
    pub dataset: DatasetSource,
    pub dataset_replicates: usize,
    pub perturbation_replicates: usize,
    /// Number of stored patterns used as targets per replicate; `None` uses
    /// all `m`.
    pub queries: Option<usize>,
    pub base_seed: u64,
    pub max_iters: usize,
    /// Resample perturbations until the target stays the closest pattern.
    /// Defaults to on for random data and off for loaded datasets.
    pub closest_guard: Option<bool>,
    pub output: Option<PathBuf>,
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(SdmError::Config(msg.to_string()));
        if self.engines.is_empty() || self.ds.is_empty() || self.magnitudes.is_empty() {
            return fail("engines, d and magnitudes must all be non-empty");
        }
        if self.m == 0 || self.n == 0 {
            return fail("n and m must be positive");
        }
        if self.dataset_replicates == 0 || self.perturbation_replicates == 0 {
            return fail("replicate counts must be positive");
        }
        if self.queries == Some(0) || self.queries.is_some_and(|q| q > self.m) {
            return fail("queries must lie in [1, m]");
        }
        if self.magnitudes.iter().any(|&k| k > self.n) {
            return fail("perturbation magnitudes cannot exceed n");
        }
        if self.max_iters == 0 {
            return fail("max_iters must be positive");
        }
        Ok(())
    }

    pub fn queries_per_replicate(&self) -> usize {
        self.queries.unwrap_or(self.m)
    }

    pub fn guard_enabled(&self) -> bool {
        self.closest_guard.unwrap_or(self.dataset.is_random())
    }

    /// Number of trials the experiment evaluates.
    pub fn trial_count(&self) -> usize {
        self.dataset_replicates
            * self.perturbation_replicates
            * self.queries_per_replicate()
            * self.magnitudes.len()
            * self.engines.len()
            * self.ds.len()
    }

    /// SHA-256 of the canonical JSON form of the spec.  The output path does
    /// not affect results and is left out.
    pub fn hash(&self) -> String {
        let canonical = ExperimentSpec {
            output: None,
            ..self.clone()
        };
        let json = serde_json::to_vec(&canonical).expect("spec serializes");
        hex_digest(&json)
    }
}

pub(crate) fn hex_digest(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Execution options that do not affect results.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    /// Worker threads; 0 picks the rayon default.
    pub threads: usize,
    /// Keep every iterate of each trace.
    pub dump_iterates: bool,
}

/// One convergence trial.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialResult {
    pub engine: EngineKind,
    pub d: usize,
    pub magnitude: usize,
    pub dataset_replicate: usize,
    pub perturbation_replicate: usize,
    pub pattern: usize,
    pub initial_cosine: f64,
    pub final_cosine: f64,
    /// Cosine between the target and the perturbed query before any read.
    pub baseline_cosine: f64,
    pub steps: usize,
    pub converged: bool,
    pub no_intersection: bool,
    pub seed: u64,
    /// Distances to the target along the trace.
    pub distances: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iterates: Option<Vec<Query>>,
}

/// Mean and spread of final cosines for one `(engine, d, magnitude)` cell.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub engine: EngineKind,
    pub d: usize,
    pub magnitude: usize,
    pub mean_final_cosine: f64,
    pub std_final_cosine: f64,
    pub baseline: f64,
    pub trials: usize,
    pub seed: u64,
}

/// An engine that could not be built (typically a resource limit).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkippedEngine {
    pub engine: EngineKind,
    pub d: usize,
    pub dataset_replicate: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutcome {
    pub trials: Vec<TrialResult>,
    pub skipped: Vec<SkippedEngine>,
}

/// Deterministic seed derived from a structured index, independent of
/// execution order.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mut h = Sha256::new();
    h.update(base.to_le_bytes());
    for p in parts {
        h.update(p.to_le_bytes());
    }
    u64::from_le_bytes(h.finalize()[..8].try_into().expect("digest has 8 bytes"))
}

/// Seed of one trial: shared by every engine and radius.
pub fn trial_seed(base: u64, dataset_replicate: usize, perturbation_replicate: usize, pattern: usize, magnitude: usize) -> u64 {
    derive_seed(
        base,
        &[
            0x7472_6961_6c,
            dataset_replicate as u64,
            perturbation_replicate as u64,
            pattern as u64,
            magnitude as u64,
        ],
    )
}

/// Stored patterns of one dataset replicate in both vector spaces.
struct Replicate {
    binary: Arc<PatternStore<BitVector>>,
    dense: Arc<PatternStore<DenseVector>>,
    targets: Vec<usize>,
}

fn build_replicate(spec: &ExperimentSpec, loaded: Option<&Dataset>, replicate: usize) -> Result<Replicate> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.base_seed, &[0x6461_7461, replicate as u64]));
    let raw = match loaded {
        None => dataset::random_uniform(spec.m, spec.n, &mut rng).data,
        Some(ds) => {
            if ds.dim() != spec.n {
                return Err(SdmError::Dimension {
                    expected: spec.n,
                    actual: ds.dim(),
                });
            }
            if ds.len() < spec.m {
                return Err(SdmError::Config(format!("dataset has {} rows, need m = {}", ds.len(), spec.m)));
            }
            let rows = sample(&mut rng, ds.len(), spec.m).into_vec();
            let mut x = ds.data.select(ndarray::Axis(0), &rows);
            // Centre image data so that sign binarization and cosines are
            // meaningful for nonnegative pixels.
            let mean = x.mean_axis(ndarray::Axis(0)).expect("m > 0");
            x -= &mean;
            x
        }
    };
    let binary: Vec<BitVector> = raw.rows().into_iter().map(|row| BitVector::from_fn(spec.n, |i| row[i] > 0.0)).collect();
    let dense: Vec<DenseVector> = raw.rows().into_iter().map(|row| DenseVector::new(row.to_vec()).normalized()).collect();
    if dense.iter().any(|v| !v.is_unit(1e-9)) {
        return Err(SdmError::domain("dataset contains an all-zero pattern"));
    }
    let q = spec.queries_per_replicate();
    let targets = if q == spec.m { (0..q).collect() } else { sample(&mut rng, spec.m, q).into_vec() };
    Ok(Replicate {
        binary: Arc::new(PatternStore::autoassociative(binary)?),
        dense: Arc::new(PatternStore::autoassociative(dense)?),
        targets,
    })
}

/// Attempts before the closest-pattern guard gives up and keeps the last
/// sample.
const GUARD_ATTEMPTS: usize = 1000;

fn binary_query(rep: &Replicate, target: usize, k: usize, guard: bool, rng: &mut ChaCha8Rng) -> Result<BitVector> {
    let t = &rep.binary.addresses()[target];
    let mut q = perturb_binary(t, k, rng)?;
    if guard {
        for _ in 0..GUARD_ATTEMPTS {
            let dt = q.distance(t);
            if rep.binary.addresses().iter().enumerate().all(|(i, a)| i == target || a.distance(&q) > dt) {
                break;
            }
            q = perturb_binary(t, k, rng)?;
        }
    }
    Ok(q)
}

fn dense_query(rep: &Replicate, target: usize, cos: f64, guard: bool, rng: &mut ChaCha8Rng) -> Result<DenseVector> {
    let t = &rep.dense.addresses()[target];
    let mut q = perturb_continuous(t, cos, rng)?;
    if guard {
        for _ in 0..GUARD_ATTEMPTS {
            let ct = q.dot(t);
            if rep.dense.addresses().iter().enumerate().all(|(i, a)| i == target || a.dot(&q) < ct) {
                break;
            }
            q = perturb_continuous(t, cos, rng)?;
        }
    }
    Ok(q)
}

/// A rayon pool with `threads` workers (0 = rayon's default).
pub fn thread_pool(threads: usize) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if threads > 0 {
        b = b.num_threads(threads);
    }
    b.build().map_err(|e| SdmError::Resource(format!("cannot start worker pool: {e}")))
}

/// Runs every `(dataset replicate, perturbation replicate, pattern,
/// magnitude, engine, d)` trial of `spec`.
///
/// Every trial's randomness comes from a seed derived from its structured
/// index, so results are bit-identical for any thread count.  Engines that
/// cannot be built (for instance explicit neurons at astronomically large r)
/// are skipped and reported rather than aborting the run.
pub fn run_convergence_experiment(spec: &ExperimentSpec, opts: &RunOptions) -> Result<ExperimentOutcome> {
    spec.validate()?;
    let loaded = spec.dataset.load()?;
    let pool = thread_pool(opts.threads)?;
    let guard = spec.guard_enabled();
    let mut trials = Vec::with_capacity(spec.trial_count());
    let mut skipped = Vec::new();

    for dr in 0..spec.dataset_replicates {
        let rep = build_replicate(spec, loaded.as_ref(), dr)?;
        let mut engines: Vec<(usize, EngineKind, Engine)> = Vec::new();
        for &d in &spec.ds {
            for &kind in &spec.engines {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(
                    spec.base_seed,
                    &[0x656e_67, dr as u64, d as u64, kind as u64],
                ));
                let patterns = if kind.is_binary() {
                    PatternSet::Binary(rep.binary.clone())
                } else {
                    PatternSet::Dense(rep.dense.clone())
                };
                match build_engine(kind, spec.n, d, spec.r, patterns, &mut rng) {
                    Ok(e) => engines.push((d, kind, e)),
                    Err(err @ (SdmError::Resource(_) | SdmError::Domain(_))) => skipped.push(SkippedEngine {
                        engine: kind,
                        d,
                        dataset_replicate: dr,
                        error: err.to_string(),
                    }),
                    Err(err) => return Err(err),
                }
            }
        }

        let mut items = Vec::new();
        for pr in 0..spec.perturbation_replicates {
            for (pi, &target) in rep.targets.iter().enumerate() {
                for &k in &spec.magnitudes {
                    items.push((pr, pi, target, k));
                }
            }
        }
        let batch: Vec<Result<Vec<TrialResult>>> = pool.install(|| {
            items
                .par_iter()
                .map(|&(pr, _pi, target, k)| run_item(spec, opts, &rep, &engines, dr, pr, target, k, guard))
                .collect()
        });
        for r in batch {
            trials.extend(r?);
        }
    }
    Ok(ExperimentOutcome { trials, skipped })
}

#[allow(clippy::too_many_arguments)]
fn run_item(
    spec: &ExperimentSpec,
    opts: &RunOptions,
    rep: &Replicate,
    engines: &[(usize, EngineKind, Engine)],
    dr: usize,
    pr: usize,
    target: usize,
    k: usize,
    guard: bool,
) -> Result<Vec<TrialResult>> {
    let seed = trial_seed(spec.base_seed, dr, pr, target, k);
    let needs_binary = engines.iter().any(|e| e.1.is_binary());
    let needs_dense = engines.iter().any(|e| !e.1.is_binary());
    let bq = if needs_binary {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[1]));
        Some(Query::Binary(binary_query(rep, target, k, guard, &mut rng)?))
    } else {
        None
    };
    let dq = if needs_dense {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[2]));
        let cos = 1.0 - 2.0 * k as f64 / spec.n as f64;
        Some(Query::Dense(dense_query(rep, target, cos, guard, &mut rng)?))
    } else {
        None
    };
    let bt = Query::Binary(rep.binary.addresses()[target].clone());
    let dt = Query::Dense(rep.dense.addresses()[target].clone());

    let mut out = Vec::with_capacity(engines.len());
    for (d, kind, engine) in engines {
        let (query, target_q) = if kind.is_binary() {
            (bq.as_ref().expect("binary query prepared"), &bt)
        } else {
            (dq.as_ref().expect("dense query prepared"), &dt)
        };
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[3, *d as u64, *kind as u64]));
        let trace = converge(
            engine,
            query,
            &ConvergeOptions {
                max_iters: spec.max_iters,
                target: Some(target_q),
                keep_iterates: opts.dump_iterates,
            },
            &mut rng,
        )?;
        let baseline = query.cosine(target_q)?;
        out.push(TrialResult {
            engine: *kind,
            d: *d,
            magnitude: k,
            dataset_replicate: dr,
            perturbation_replicate: pr,
            pattern: target,
            initial_cosine: baseline,
            final_cosine: trace.final_query.cosine(target_q)?,
            baseline_cosine: baseline,
            steps: trace.steps,
            converged: trace.converged,
            no_intersection: trace.no_intersection,
            seed,
            distances: trace.distances,
            iterates: opts.dump_iterates.then_some(trace.iterates),
        });
    }
    Ok(out)
}

/// Sample mean and (n−1) standard deviation; 0 spread for a single value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Aggregates trials per `(engine, d, magnitude)` in the spec's order.
pub fn aggregate(spec: &ExperimentSpec, trials: &[TrialResult]) -> Vec<AggregateRow> {
    let mut cells: HashMap<(EngineKind, usize, usize), (Vec<f64>, Vec<f64>)> = HashMap::new();
    for t in trials {
        let cell = cells.entry((t.engine, t.d, t.magnitude)).or_default();
        cell.0.push(t.final_cosine);
        cell.1.push(t.baseline_cosine);
    }
    let mut rows = Vec::new();
    for &engine in &spec.engines {
        for &d in &spec.ds {
            for &magnitude in &spec.magnitudes {
                if let Some((finals, baselines)) = cells.get(&(engine, d, magnitude)) {
                    let (mean, std) = mean_std(finals);
                    rows.push(AggregateRow {
                        engine,
                        d,
                        magnitude,
                        mean_final_cosine: mean,
                        std_final_cosine: std,
                        baseline: mean_std(baselines).0,
                        trials: finals.len(),
                        seed: spec.base_seed,
                    });
                }
            }
        }
    }
    rows
}
