//! C ABI for `sdm-lab`.
//!
//! Every fallible function returns an [`SdmStatus`]; on failure a
//! human-readable message is stored per thread and can be fetched with
//! [`sdm_last_error_message`].  Pattern stores and engines are opaque handles
//! created by `*_new` functions and released by the matching `*_free`.
//!
//! Vectors cross the boundary as `double` arrays.  Binary vectors use one
//! element per bit, `0.0` or `1.0` (anything above `0.5` reads as a one).
//! An engine handle owns a random stream and must not be used from two
//! threads at once.

use std::cell::RefCell;
use std::ffi::{c_char, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sdm_lab::analysis::{
    critical_distance, optimal_d_critical, optimal_d_memory_for_prob, optimal_d_snr, OptimalD,
};
use sdm_lab::engines::{build_engine, converge, update_query, ConvergeOptions, Engine, EngineKind, PatternSet, Query};
use sdm_lab::intersect::{binary_circle_intersection, expected_neurons};
use sdm_lab::vectorspace::{BitVector, DenseVector, PatternStore};
use sdm_lab::weighting::{fit_beta, FitSource};
use sdm_lab::SdmError;

/// Result codes.  `SDM_STATUS_OK` is zero; everything else is an error.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SdmStatus {
    Ok = 0,
    NullPointer = 1,
    Dimension = 2,
    Domain = 3,
    Numeric = 4,
    Degenerate = 5,
    Resource = 6,
    Format = 7,
    Config = 8,
    Io = 9,
    BufferTooSmall = 10,
    Panic = 11,
}

/// Engine kinds, in the same order as the library's `EngineKind::ALL`.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SdmEngineKind {
    BinarySdm = 0,
    BinarySdmLimitedNeurons = 1,
    BinaryNeuronSdm = 2,
    BinarySdmBinaryFitAttention = 3,
    ContinuousBinarySdm = 4,
    ContinuousSdm = 5,
    ContinuousSdmBinaryFitAttention = 6,
    ContinuousSdmContinuousFitAttention = 7,
}

impl From<SdmEngineKind> for EngineKind {
    fn from(k: SdmEngineKind) -> Self {
        EngineKind::ALL[k as usize]
    }
}

/// Which optimality criterion `sdm_optimal_d` evaluates.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SdmCriterion {
    Snr = 0,
    Memory = 1,
    CriticalDistance = 2,
}

/// Opaque stored-pattern collection (binary or unit-norm dense).
pub struct SdmPatterns {
    set: PatternSet,
    n: usize,
    pointer_dim: usize,
}

/// Opaque read/update engine with its own random stream.
pub struct SdmEngine {
    engine: Engine,
    rng: ChaCha8Rng,
    pointer_dim: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &SdmError) -> SdmStatus {
    match e {
        SdmError::Dimension { .. } => SdmStatus::Dimension,
        SdmError::Domain(_) => SdmStatus::Domain,
        SdmError::Numeric(_) => SdmStatus::Numeric,
        SdmError::DegenerateDirection { .. } | SdmError::DegenerateFit(_) => SdmStatus::Degenerate,
        SdmError::Resource(_) => SdmStatus::Resource,
        SdmError::Format { .. } => SdmStatus::Format,
        SdmError::Config(_) => SdmStatus::Config,
        SdmError::Io(_) => SdmStatus::Io,
    }
}

enum Failure {
    Lib(SdmError),
    Null(&'static str),
    Buffer { needed: usize, given: usize },
}

impl From<SdmError> for Failure {
    fn from(e: SdmError) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `body`, converting errors and panics into status codes.
fn guard(body: impl FnOnce() -> Result<(), Failure>) -> SdmStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            SdmStatus::Ok
        }
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Ok(Err(Failure::Null(what))) => {
            set_error(format!("null pointer passed for {what}"));
            SdmStatus::NullPointer
        }
        Ok(Err(Failure::Buffer { needed, given })) => {
            set_error(format!("output buffer holds {given} elements, {needed} required"));
            SdmStatus::BufferTooSmall
        }
        Err(_) => {
            set_error("internal panic".to_string());
            SdmStatus::Panic
        }
    }
}

fn out_ref<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    // SAFETY: callers of the public functions promise that non-null output
    // pointers are valid for writes.
    unsafe { p.as_mut() }.ok_or(Failure::Null(what))
}

/// # Safety
/// `p` must be null or valid for reads of `len` elements.
unsafe fn in_slice<'a, T>(p: *const T, len: usize, what: &'static str) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(slice::from_raw_parts(p, len))
}

fn to_bits(values: &[f64]) -> BitVector {
    BitVector::from_fn(values.len(), |i| values[i] > 0.5)
}

fn query_from(engine: &Engine, values: &[f64]) -> Query {
    if engine.kind.is_binary() {
        Query::Binary(to_bits(values))
    } else {
        Query::Dense(DenseVector::new(values.to_vec()))
    }
}

fn write_query(q: &Query, out: &mut [f64]) {
    match q {
        Query::Binary(b) => {
            for (o, bit) in out.iter_mut().zip(b.iter()) {
                *o = if bit { 1.0 } else { 0.0 };
            }
        }
        Query::Dense(v) => out[..v.len()].copy_from_slice(v.as_slice()),
    }
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sdm_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (truncated and
/// always NUL-terminated when `len > 0`).  Returns the length the full
/// message needs including the terminator, or 0 if there is no error.
///
/// # Safety
/// `buf` must be null or valid for writes of `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn sdm_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| match &*e.borrow() {
        None => 0,
        Some(msg) => {
            let bytes = msg.as_bytes_with_nul();
            if !buf.is_null() && len > 0 {
                let k = (bytes.len() - 1).min(len - 1);
                ptr::copy_nonoverlapping(bytes.as_ptr().cast::<c_char>(), buf, k);
                *buf.add(k) = 0;
            }
            bytes.len()
        }
    })
}

/// Natural log of the number of points within Hamming distance `d` of two
/// points `d_v` apart in `{0,1}^n` (`-inf` when the circles are disjoint).
///
/// # Safety
/// `out_log` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sdm_binary_circle_intersection(n: usize, d: usize, d_v: usize, out_log: *mut f64) -> SdmStatus {
    guard(|| {
        *out_ref(out_log, "out_log")? = binary_circle_intersection(d_v, d, n)?.ln();
        Ok(())
    })
}

/// Expected number of neurons (out of `r` uniformly placed) in the
/// intersection.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sdm_expected_neurons(n: usize, d: usize, d_v: usize, r: f64, out: *mut f64) -> SdmStatus {
    guard(|| {
        *out_ref(out, "out")? = expected_neurons(d_v, d, n, r)?;
        Ok(())
    })
}

/// Softmax β fitted to the binary (`continuous == 0`) or hyperspherical
/// (`continuous != 0`) intersection at radius `d`.  Any output pointer may
/// be null.
///
/// # Safety
/// Non-null output pointers must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sdm_fit_beta(
    d: usize,
    n: usize,
    continuous: i32,
    out_beta: *mut f64,
    out_intercept: *mut f64,
    out_r_squared: *mut f64,
) -> SdmStatus {
    guard(|| {
        let source = if continuous != 0 { FitSource::Continuous } else { FitSource::Binary };
        let fit = fit_beta(d, n, source)?;
        for (p, v) in [(out_beta, fit.beta), (out_intercept, fit.log_intercept), (out_r_squared, fit.r_squared)] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Optimal Hamming radius and fraction of space under `criterion`.
/// `retrieval_prob` is used by the memory criterion only.
///
/// # Safety
/// `out_d` and `out_p` must be valid for writes.
#[no_mangle]
pub unsafe extern "C" fn sdm_optimal_d(
    criterion: SdmCriterion,
    n: usize,
    m: usize,
    r: f64,
    retrieval_prob: f64,
    out_d: *mut usize,
    out_p: *mut f64,
) -> SdmStatus {
    guard(|| {
        let out_d = out_ref(out_d, "out_d")?;
        let out_p = out_ref(out_p, "out_p")?;
        let o: OptimalD = match criterion {
            SdmCriterion::Snr => optimal_d_snr(n, m, r)?,
            SdmCriterion::Memory => optimal_d_memory_for_prob(n, r, retrieval_prob)?,
            SdmCriterion::CriticalDistance => optimal_d_critical(n, m, r)?,
        };
        *out_d = o.d_star;
        *out_p = o.p_star;
        Ok(())
    })
}

/// Largest query distance from which the expected read still moves toward
/// the target.
///
/// # Safety
/// `out` must be valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sdm_critical_distance(d: usize, n: usize, m: usize, r: f64, out: *mut usize) -> SdmStatus {
    guard(|| {
        *out_ref(out, "out")? = critical_distance(d, n, m, r)?;
        Ok(())
    })
}

/// Creates an autoassociative store of `m` binary patterns of dimension `n`
/// from a row-major `m × n` array of 0/1 values.
///
/// # Safety
/// `bits` must be valid for reads of `m * n` elements; `out` for a write.
#[no_mangle]
pub unsafe extern "C" fn sdm_patterns_new_binary(bits: *const f64, m: usize, n: usize, out: *mut *mut SdmPatterns) -> SdmStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let len = m.checked_mul(n).ok_or_else(|| SdmError::Resource("m × n overflows".into()))?;
        let values = in_slice(bits, len, "bits")?;
        let rows: Vec<BitVector> = values.chunks(n.max(1)).take(m).map(to_bits).collect();
        let store = PatternStore::autoassociative(rows)?;
        *out = Box::into_raw(Box::new(SdmPatterns {
            set: PatternSet::Binary(Arc::new(store)),
            n,
            pointer_dim: n,
        }));
        Ok(())
    })
}

/// Creates a store of `m` dense patterns.  Addresses (`m × n`, row-major)
/// are normalized to unit length.  `pointers` may be null for an
/// autoassociative store; otherwise it holds `m × pointer_dim` values
/// returned as-is by reads.
///
/// # Safety
/// `addresses` must be valid for `m * n` reads, non-null `pointers` for
/// `m * pointer_dim` reads, and `out` for a write.
#[no_mangle]
pub unsafe extern "C" fn sdm_patterns_new_dense(
    addresses: *const f64,
    m: usize,
    n: usize,
    pointers: *const f64,
    pointer_dim: usize,
    out: *mut *mut SdmPatterns,
) -> SdmStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let len = m.checked_mul(n).ok_or_else(|| SdmError::Resource("m × n overflows".into()))?;
        let a = in_slice(addresses, len, "addresses")?;
        let rows: Vec<DenseVector> = a.chunks(n.max(1)).take(m).map(|r| DenseVector::new(r.to_vec()).normalized()).collect();
        if rows.iter().any(|r| !r.is_unit(1e-9)) {
            return Err(SdmError::Domain("addresses must be nonzero and finite".into()).into());
        }
        let (store, pdim) = if pointers.is_null() {
            (PatternStore::autoassociative(rows)?, n)
        } else {
            let plen = m
                .checked_mul(pointer_dim)
                .ok_or_else(|| SdmError::Resource("m × pointer_dim overflows".into()))?;
            let p = in_slice(pointers, plen, "pointers")?;
            let prow = p.chunks(pointer_dim.max(1)).take(m).map(|r| DenseVector::new(r.to_vec())).collect();
            (PatternStore::heteroassociative(rows, prow)?, pointer_dim)
        };
        *out = Box::into_raw(Box::new(SdmPatterns {
            set: PatternSet::Dense(Arc::new(store)),
            n,
            pointer_dim: pdim,
        }));
        Ok(())
    })
}

/// Releases a pattern store.  Engines built from it stay valid.
///
/// # Safety
/// `patterns` must be null or a pointer returned by an `sdm_patterns_new_*`
/// function that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn sdm_patterns_free(patterns: *mut SdmPatterns) {
    if !patterns.is_null() {
        drop(Box::from_raw(patterns));
    }
}

/// Builds an engine of `kind` reading from `patterns`.  `r` is the neuron
/// count; pass a non-positive or non-finite value for the unbounded case
/// (the limited and explicit-neuron kinds require a finite `r`).
///
/// # Safety
/// `patterns` must be a live pattern handle and `out` valid for a write.
#[no_mangle]
pub unsafe extern "C" fn sdm_engine_new(
    kind: SdmEngineKind,
    d: usize,
    r: f64,
    patterns: *const SdmPatterns,
    seed: u64,
    out: *mut *mut SdmEngine,
) -> SdmStatus {
    guard(|| {
        let out = out_ref(out, "out")?;
        let p = patterns.as_ref().ok_or(Failure::Null("patterns"))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let r = (r > 0.0 && r.is_finite()).then_some(r);
        let engine = build_engine(kind.into(), p.n, d, r, p.set.clone(), &mut rng)?;
        *out = Box::into_raw(Box::new(SdmEngine {
            engine,
            rng,
            pointer_dim: p.pointer_dim,
        }));
        Ok(())
    })
}

/// Releases an engine.
///
/// # Safety
/// `engine` must be null or a live handle from [`sdm_engine_new`].
#[no_mangle]
pub unsafe extern "C" fn sdm_engine_free(engine: *mut SdmEngine) {
    if !engine.is_null() {
        drop(Box::from_raw(engine));
    }
}

/// Dimension of the vectors an engine's reads return.
///
/// # Safety
/// `engine` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn sdm_engine_output_dim(engine: *const SdmEngine) -> usize {
    engine.as_ref().map_or(0, |e| e.pointer_dim)
}

/// One read.  `query` has the engine's address dimension; `out` receives
/// `sdm_engine_output_dim` values.  `out_no_intersection` (may be null) is
/// set to 1 when nothing intersected the query.
///
/// # Safety
/// `engine` must be a live handle, `query` valid for `query_len` reads and
/// `out` for `out_len` writes.
#[no_mangle]
pub unsafe extern "C" fn sdm_engine_update(
    engine: *mut SdmEngine,
    query: *const f64,
    query_len: usize,
    out: *mut f64,
    out_len: usize,
    out_no_intersection: *mut i32,
) -> SdmStatus {
    guard(|| {
        let e = engine.as_mut().ok_or(Failure::Null("engine"))?;
        let q = in_slice(query, query_len, "query")?;
        if out_len < e.pointer_dim {
            return Err(Failure::Buffer {
                needed: e.pointer_dim,
                given: out_len,
            });
        }
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let update = update_query(&e.engine, &query_from(&e.engine, q), &mut e.rng)?;
        write_query(&update.query, slice::from_raw_parts_mut(out, out_len));
        if let Some(flag) = out_no_intersection.as_mut() {
            *flag = update.no_intersection as i32;
        }
        Ok(())
    })
}

/// Iterates reads from `query` until a fixed point, a read with no
/// intersection, or `max_iters` steps.  Only autoassociative stores can be
/// iterated.  `out` receives the final state; `out_steps` and
/// `out_converged` may be null.
///
/// # Safety
/// As for [`sdm_engine_update`].
#[no_mangle]
pub unsafe extern "C" fn sdm_engine_converge(
    engine: *mut SdmEngine,
    query: *const f64,
    query_len: usize,
    max_iters: usize,
    out: *mut f64,
    out_len: usize,
    out_steps: *mut usize,
    out_converged: *mut i32,
) -> SdmStatus {
    guard(|| {
        let e = engine.as_mut().ok_or(Failure::Null("engine"))?;
        if e.pointer_dim != e.engine.n {
            return Err(SdmError::Domain("only autoassociative stores can be iterated".into()).into());
        }
        let q = in_slice(query, query_len, "query")?;
        if out_len < e.pointer_dim {
            return Err(Failure::Buffer {
                needed: e.pointer_dim,
                given: out_len,
            });
        }
        if out.is_null() {
            return Err(Failure::Null("out"));
        }
        let opts = ConvergeOptions {
            max_iters,
            target: None,
            keep_iterates: false,
        };
        let trace = converge(&e.engine, &query_from(&e.engine, q), &opts, &mut e.rng)?;
        write_query(&trace.final_query, slice::from_raw_parts_mut(out, out_len));
        if let Some(s) = out_steps.as_mut() {
            *s = trace.steps;
        }
        if let Some(c) = out_converged.as_mut() {
            *c = trace.converged as i32;
        }
        Ok(())
    })
}
