//! The eight SDM / attention read-update algorithms and the iterative
//! convergence loop.
//!
//! Binary engines read from `{0,1}ⁿ`; continuous engines from the unit sphere.
//! Apart from [`EngineKind::BinaryNeuronSDM`], which places explicit neurons
//! and performs a distributed write, every engine takes the pattern view of
//! the read: each stored pattern is weighted directly by its (expected)
//! circle intersection with the query, or by the fitted softmax.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, SdmError};
use crate::vectorspace::{dot, BitVector, DenseVector, PatternStore};
use crate::weighting::{fit_beta, FitSource, KernelSpace, WeightKernel};

/// The closed set of read algorithms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EngineKind {
    /// Binary vectors, exact expected intersection weights, unlimited neurons.
    BinarySDM,
    /// As `BinarySDM` but with expected neuron counts for `r` neurons
    /// stochastically rounded to integers on every read.
    BinarySDMLimitedNeurons,
    /// Explicit random neurons with a distributed write and a neuron-view read.
    BinaryNeuronSDM,
    /// Binary vectors weighted by softmax with β fitted to the binary
    /// intersection.
    BinarySDMBinaryFitAttention,
    /// Unit vectors whose cosines are mapped back to Hamming distances and
    /// weighted by the binary intersection.
    ContinuousBinarySDM,
    /// Unit vectors weighted by the hyperspherical cap intersection.
    ContinuousSDM,
    /// Unit vectors weighted by softmax with β fitted to the binary
    /// intersection (standard attention).
    ContinuousSDMBinaryFitAttention,
    /// Unit vectors weighted by softmax with β fitted to the cap intersection.
    ContinuousSDMContinuousFitAttention,
}

impl EngineKind {
    pub const ALL: [EngineKind; 8] = [
        EngineKind::BinarySDM,
        EngineKind::BinarySDMLimitedNeurons,
        EngineKind::BinaryNeuronSDM,
        EngineKind::BinarySDMBinaryFitAttention,
        EngineKind::ContinuousBinarySDM,
        EngineKind::ContinuousSDM,
        EngineKind::ContinuousSDMBinaryFitAttention,
        EngineKind::ContinuousSDMContinuousFitAttention,
    ];

    /// The four engines that read from the unit sphere.
    pub const CONTINUOUS: [EngineKind; 4] = [
        EngineKind::ContinuousBinarySDM,
        EngineKind::ContinuousSDM,
        EngineKind::ContinuousSDMBinaryFitAttention,
        EngineKind::ContinuousSDMContinuousFitAttention,
    ];

    pub fn is_binary(self) -> bool {
        matches!(
            self,
            EngineKind::BinarySDM
                | EngineKind::BinarySDMLimitedNeurons
                | EngineKind::BinaryNeuronSDM
                | EngineKind::BinarySDMBinaryFitAttention
        )
    }

    pub fn name(self) -> &'static str {
        match self {
            EngineKind::BinarySDM => "BinarySDM",
            EngineKind::BinarySDMLimitedNeurons => "BinarySDMLimitedNeurons",
            EngineKind::BinaryNeuronSDM => "BinaryNeuronSDM",
            EngineKind::BinarySDMBinaryFitAttention => "BinarySDMBinaryFitAttention",
            EngineKind::ContinuousBinarySDM => "ContinuousBinarySDM",
            EngineKind::ContinuousSDM => "ContinuousSDM",
            EngineKind::ContinuousSDMBinaryFitAttention => "ContinuousSDMBinaryFitAttention",
            EngineKind::ContinuousSDMContinuousFitAttention => "ContinuousSDMContinuousFitAttention",
        }
    }
}

impl fmt::Display for EngineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EngineKind {
    type Err = SdmError;
    fn from_str(s: &str) -> Result<Self> {
        EngineKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| SdmError::Config(format!("unknown engine kind '{s}'")))
    }
}

/// Stored patterns in whichever space an engine reads from.
#[derive(Clone, Debug)]
pub enum PatternSet {
    Binary(Arc<PatternStore<BitVector>>),
    Dense(Arc<PatternStore<DenseVector>>),
}

/// A query (or read result) in either space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Query {
    Binary(BitVector),
    Dense(DenseVector),
}

impl Query {
    /// Cosine similarity to `other`; binary vectors are compared through the
    /// Hamming map `1 − 2d/n`.
    pub fn cosine(&self, other: &Query) -> Result<f64> {
        match (self, other) {
            (Query::Binary(a), Query::Binary(b)) => {
                check_dim(a.len(), b.len())?;
                Ok(1.0 - 2.0 * a.distance(b) as f64 / a.len() as f64)
            }
            (Query::Dense(a), Query::Dense(b)) => {
                check_dim(a.len(), b.len())?;
                Ok(a.cosine(b))
            }
            _ => Err(SdmError::domain("cannot compare binary and dense vectors")),
        }
    }

    /// Hamming distance for binary vectors, cosine distance `1 − cos` for
    /// dense ones.
    pub fn distance(&self, other: &Query) -> Result<f64> {
        match (self, other) {
            (Query::Binary(a), Query::Binary(b)) => {
                check_dim(a.len(), b.len())?;
                Ok(a.distance(b) as f64)
            }
            _ => Ok(1.0 - self.cosine(other)?),
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            Query::Binary(v) => v.len(),
            Query::Dense(v) => v.len(),
        }
    }
}

/// Explicit neurons: random addresses and integer superposition counters.
#[derive(Clone, Debug)]
pub struct NeuronStore {
    pub addresses: Vec<BitVector>,
    /// Row `τ` is `Σ bipolar(p_p^μ)` over patterns written to neuron `τ`.
    pub values: Vec<Vec<i32>>,
    /// Number of patterns written to each neuron.
    pub write_counts: Vec<u32>,
    pub d_write: usize,
}

/// Upper bound on the memory a neuron store may allocate.
pub const NEURON_STORE_BYTE_LIMIT: f64 = 4.0 * 1024.0 * 1024.0 * 1024.0;

impl NeuronStore {
    /// Samples `r` uniform random addresses and writes `patterns` to every
    /// neuron within `d_write` of each pattern address.
    pub fn random<R: Rng + ?Sized>(
        r: f64,
        n: usize,
        d_write: usize,
        patterns: &PatternStore<BitVector>,
        rng: &mut R,
    ) -> Result<Self> {
        check_dim(n, patterns.address_dim())?;
        let bytes = r * (n.div_ceil(8) + 4 * patterns.pointer_dim()) as f64;
        if !(r >= 1.0) || !r.is_finite() || r.fract() != 0.0 || bytes > NEURON_STORE_BYTE_LIMIT {
            return Err(SdmError::Resource(format!(
                "cannot allocate {r} neurons of dimension {n} ({bytes:.3e} bytes)"
            )));
        }
        let addresses = (0..r as usize).map(|_| BitVector::random(n, rng)).collect();
        Ok(Self::with_addresses(addresses, d_write, patterns))
    }

    /// Distributed write of `patterns` into neurons at the given addresses.
    pub fn with_addresses(addresses: Vec<BitVector>, d_write: usize, patterns: &PatternStore<BitVector>) -> Self {
        let p_dim = patterns.pointer_dim();
        let bipolar: Vec<Vec<i32>> = patterns
            .pointers()
            .iter()
            .map(|p| p.iter().map(|b| if b { 1 } else { -1 }).collect())
            .collect();
        let mut values = vec![vec![0i32; p_dim]; addresses.len()];
        let mut write_counts = vec![0u32; addresses.len()];
        for (tau, x) in addresses.iter().enumerate() {
            for (mu, a) in patterns.addresses().iter().enumerate() {
                if x.distance(a) <= d_write {
                    write_counts[tau] += 1;
                    for (v, b) in values[tau].iter_mut().zip(&bipolar[mu]) {
                        *v += b;
                    }
                }
            }
        }
        NeuronStore {
            addresses,
            values,
            write_counts,
            d_write,
        }
    }

    pub fn len(&self) -> usize {
        self.addresses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.addresses.is_empty()
    }

    /// Number of neurons within `d_read` of `query` that hold at least one
    /// written pattern.
    pub fn active_written(&self, query: &BitVector, d_read: usize) -> usize {
        self.addresses
            .iter()
            .zip(&self.write_counts)
            .filter(|(a, &c)| c > 0 && a.distance(query) <= d_read)
            .count()
    }

    /// Sum of the value rows of neurons within `d_read` of `query`, and the
    /// number of contributing neurons that were written to.
    pub fn read_sum(&self, query: &BitVector, d_read: usize) -> (Vec<i64>, usize) {
        let dim = self.values.first().map_or(0, Vec::len);
        let mut sum = vec![0i64; dim];
        let mut written = 0;
        for ((a, v), &c) in self.addresses.iter().zip(&self.values).zip(&self.write_counts) {
            if c == 0 || a.distance(query) > d_read {
                continue;
            }
            written += 1;
            for (s, &x) in sum.iter_mut().zip(v) {
                *s += i64::from(x);
            }
        }
        (sum, written)
    }
}

#[derive(Clone, Debug)]
enum Inner {
    BinaryKernel {
        kernel: WeightKernel,
        patterns: Arc<PatternStore<BitVector>>,
    },
    Neuron {
        store: NeuronStore,
        d_read: usize,
    },
    Continuous {
        kernel: WeightKernel,
        patterns: Arc<PatternStore<DenseVector>>,
    },
}

/// A built read engine.  Immutable after construction; share freely across
/// threads.
#[derive(Clone, Debug)]
pub struct Engine {
    pub kind: EngineKind,
    pub n: usize,
    pub d: usize,
    inner: Inner,
}

/// Result of one read.
#[derive(Clone, Debug, PartialEq)]
pub struct Update {
    pub query: Query,
    pub no_intersection: bool,
}

/// Builds an engine of the given kind.
///
/// `r` is the neuron count: required (and finite) for the limited-neuron and
/// explicit-neuron kinds, ignored by the others, which behave as if every
/// address held a neuron.
pub fn build_engine<R: Rng + ?Sized>(
    kind: EngineKind,
    n: usize,
    d: usize,
    r: Option<f64>,
    patterns: PatternSet,
    rng: &mut R,
) -> Result<Engine> {
    let inner = match (kind.is_binary(), patterns) {
        (true, PatternSet::Binary(patterns)) => {
            check_dim(n, patterns.address_dim())?;
            match kind {
                EngineKind::BinarySDM => Inner::BinaryKernel {
                    kernel: WeightKernel::binary_intersection(n, d)?,
                    patterns,
                },
                EngineKind::BinarySDMLimitedNeurons => Inner::BinaryKernel {
                    kernel: WeightKernel::binary_intersection(n, d)?.with_neuron_budget(require_r(kind, r)?)?,
                    patterns,
                },
                EngineKind::BinarySDMBinaryFitAttention => Inner::BinaryKernel {
                    kernel: WeightKernel::softmax(fit_beta(d, n, FitSource::Binary)?),
                    patterns,
                },
                EngineKind::BinaryNeuronSDM => Inner::Neuron {
                    store: NeuronStore::random(require_r(kind, r)?, n, d, &patterns, rng)?,
                    d_read: d,
                },
                _ => unreachable!("binary kinds handled above"),
            }
        }
        (false, PatternSet::Dense(patterns)) => {
            check_dim(n, patterns.address_dim())?;
            let kernel = match kind {
                EngineKind::ContinuousBinarySDM => WeightKernel::binary_intersection(n, d)?,
                EngineKind::ContinuousSDM => WeightKernel::continuous_intersection(n, d)?,
                EngineKind::ContinuousSDMBinaryFitAttention => {
                    WeightKernel::softmax(fit_beta(d, n, FitSource::Binary)?)
                }
                EngineKind::ContinuousSDMContinuousFitAttention => {
                    WeightKernel::softmax(fit_beta(d, n, FitSource::Continuous)?)
                }
                _ => unreachable!("continuous kinds handled above"),
            };
            Inner::Continuous { kernel, patterns }
        }
        (true, PatternSet::Dense(_)) | (false, PatternSet::Binary(_)) => {
            return Err(SdmError::domain(format!(
                "{kind} cannot read from patterns in the other vector space"
            )))
        }
    };
    Ok(Engine { kind, n, d, inner })
}

fn require_r(kind: EngineKind, r: Option<f64>) -> Result<f64> {
    match r {
        Some(r) if r > 0.0 && r.is_finite() => Ok(r),
        _ => Err(SdmError::domain(format!("{kind} requires a finite neuron count r"))),
    }
}

impl Engine {
    /// Applies a finite neuron budget to an intersection-weighted engine
    /// (used for the neuron-count sweeps over continuous engines).
    pub fn with_neuron_budget(mut self, r: f64) -> Result<Self> {
        match &mut self.inner {
            Inner::BinaryKernel { kernel, .. } | Inner::Continuous { kernel, .. } => {
                *kernel = kernel.clone().with_neuron_budget(r)?;
                Ok(self)
            }
            Inner::Neuron { .. } => Err(SdmError::domain("explicit-neuron engine already has a fixed r")),
        }
    }

    pub fn kernel(&self) -> Option<&WeightKernel> {
        match &self.inner {
            Inner::BinaryKernel { kernel, .. } | Inner::Continuous { kernel, .. } => Some(kernel),
            Inner::Neuron { .. } => None,
        }
    }

    pub fn neuron_store(&self) -> Option<&NeuronStore> {
        match &self.inner {
            Inner::Neuron { store, .. } => Some(store),
            _ => None,
        }
    }
}

/// One read-and-update step.
///
/// Binary engines return the all-zero vector when no pattern (or neuron)
/// intersects the query; continuous engines return the query unchanged.
/// Either way the `no_intersection` flag is set.
pub fn update_query<R: Rng + ?Sized>(engine: &Engine, query: &Query, rng: &mut R) -> Result<Update> {
    match (&engine.inner, query) {
        (Inner::BinaryKernel { kernel, patterns }, Query::Binary(q)) => {
            check_dim(engine.n, q.len())?;
            let log_w = BitVector::log_raw_weights(kernel, q, patterns.addresses());
            let w = kernel.normalize(&log_w, rng);
            if w.no_intersection {
                return Ok(Update {
                    query: Query::Binary(BitVector::zeros(patterns.pointer_dim())),
                    no_intersection: true,
                });
            }
            Ok(Update {
                query: Query::Binary(binary_majority_read(&w.values, patterns.pointers())),
                no_intersection: false,
            })
        }
        (Inner::Neuron { store, d_read }, Query::Binary(q)) => {
            check_dim(engine.n, q.len())?;
            let (sum, written) = store.read_sum(q, *d_read);
            let dim = sum.len();
            if written == 0 {
                return Ok(Update {
                    query: Query::Binary(BitVector::zeros(dim)),
                    no_intersection: true,
                });
            }
            Ok(Update {
                query: Query::Binary(BitVector::from_fn(dim, |i| sum[i] > 0)),
                no_intersection: false,
            })
        }
        (Inner::Continuous { kernel, patterns }, Query::Dense(q)) => {
            check_dim(engine.n, q.len())?;
            let log_w = DenseVector::log_raw_weights(kernel, q, patterns.addresses());
            let w = kernel.normalize(&log_w, rng);
            if w.no_intersection {
                return Ok(Update {
                    query: query.clone(),
                    no_intersection: true,
                });
            }
            let dim = patterns.pointer_dim();
            let sum = crate::weighting::weighted_sum(&w.values, patterns.pointers().iter().map(|p| p.as_slice()), dim);
            let mut out = DenseVector::new(sum);
            if patterns.mode() == crate::vectorspace::AssociationMode::Autoassociative {
                out = out.normalized();
            }
            Ok(Update {
                query: Query::Dense(out),
                no_intersection: false,
            })
        }
        _ => Err(SdmError::domain(format!(
            "{} received a query from the wrong vector space",
            engine.kind
        ))),
    }
}

/// Relative margin below which a weighted bit average is considered an exact
/// tie at one half.  Guards the threshold against floating-point residue when
/// weights are normalized.
const TIE_MARGIN: f64 = 1e-12;

/// Majority rule on the normalized weighted average of binary pointers.
fn binary_majority_read(weights: &[f64], pointers: &[BitVector]) -> BitVector {
    let dim = pointers[0].len();
    let mut ones = vec![0.0f64; dim];
    let mut comp = vec![0.0f64; dim];
    let mut total = 0.0;
    for (&w, p) in weights.iter().zip(pointers) {
        if w == 0.0 {
            continue;
        }
        total += w;
        for (wi, &word) in p.words().iter().enumerate() {
            let mut bits = word;
            while bits != 0 {
                let k = wi * 64 + bits.trailing_zeros() as usize;
                bits &= bits - 1;
                let y = w - comp[k];
                let t = ones[k] + y;
                comp[k] = (t - ones[k]) - y;
                ones[k] = t;
            }
        }
    }
    BitVector::from_fn(dim, |k| ones[k] - 0.5 * total > TIE_MARGIN * total)
}

/// The record of an iterated read.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ConvergenceTrace {
    /// Every state visited, starting with the initial query.  Empty unless
    /// iterates were requested.
    pub iterates: Vec<Query>,
    /// Distance to the target after each step (including the start), when a
    /// target was supplied: Hamming for binary engines, `1 − cos` for
    /// continuous ones.
    pub distances: Vec<f64>,
    pub final_query: Query,
    pub converged: bool,
    pub no_intersection: bool,
    pub steps: usize,
    pub final_distance_to_target: Option<f64>,
}

/// Cosine above which two successive continuous iterates count as identical.
pub const CONTINUOUS_FIXED_POINT: f64 = 1.0 - 1e-9;

/// Default iteration cap.
pub const DEFAULT_MAX_ITERS: usize = 100;

/// Options for [`converge`].
#[derive(Clone, Debug)]
pub struct ConvergeOptions<'a> {
    pub max_iters: usize,
    pub target: Option<&'a Query>,
    pub keep_iterates: bool,
}

impl Default for ConvergeOptions<'_> {
    fn default() -> Self {
        ConvergeOptions {
            max_iters: DEFAULT_MAX_ITERS,
            target: None,
            keep_iterates: true,
        }
    }
}

/// Iterates [`update_query`] until a fixed point, a no-intersection read or
/// the iteration cap.
pub fn converge<R: Rng + ?Sized>(
    engine: &Engine,
    query: &Query,
    opts: &ConvergeOptions<'_>,
    rng: &mut R,
) -> Result<ConvergenceTrace> {
    if opts.max_iters == 0 {
        return Err(SdmError::domain("max_iters must be at least 1"));
    }
    let mut current = query.clone();
    let mut iterates = Vec::new();
    let mut distances = Vec::new();
    let record = |q: &Query, iterates: &mut Vec<Query>, distances: &mut Vec<f64>| -> Result<()> {
        if opts.keep_iterates {
            iterates.push(q.clone());
        }
        if let Some(t) = opts.target {
            distances.push(q.distance(t)?);
        }
        Ok(())
    };
    record(&current, &mut iterates, &mut distances)?;
    let mut converged = false;
    let mut no_intersection = false;
    let mut steps = 0;
    while steps < opts.max_iters {
        let update = update_query(engine, &current, rng)?;
        steps += 1;
        record(&update.query, &mut iterates, &mut distances)?;
        if update.no_intersection {
            no_intersection = true;
            current = update.query;
            break;
        }
        let fixed = match (&current, &update.query) {
            (Query::Binary(a), Query::Binary(b)) => a == b,
            (Query::Dense(a), Query::Dense(b)) => dot(&a.values, &b.values) >= CONTINUOUS_FIXED_POINT,
            _ => false,
        };
        current = update.query;
        if fixed {
            converged = true;
            break;
        }
    }
    let final_distance_to_target = distances.last().copied().filter(|_| opts.target.is_some());
    Ok(ConvergenceTrace {
        iterates,
        distances,
        final_query: current,
        converged,
        no_intersection,
        steps,
        final_distance_to_target,
    })
}
