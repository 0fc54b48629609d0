//! Read-weight kernels and the softmax approximation.
//!
//! A read in SDM weights every stored pattern by its circle intersection with
//! the query.  Because `ln I` is close to linear in the cosine similarity, the
//! weights are well approximated by `exp(β·cos)`, i.e. by softmax attention;
//! [`fit_beta`] recovers the `β` that makes the two agree.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Result, SdmError};
use crate::intersect::{
    continuous_cap_fraction, hypersphere_surface_area, BinaryIntersectionTable,
    ContinuousIntersectionTable,
};
use crate::vectorspace::{
    cosine_to_hamming, dot, hamming_to_cosine, BitVector, DenseVector, Dimensioned, PatternStore,
};

/// Which intersection the β regression is fitted to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitSource {
    Binary,
    Continuous,
}

/// Result of regressing `ln I` on cosine similarity.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaFit {
    pub beta: f64,
    pub log_intercept: f64,
    pub r_squared: f64,
    pub source: FitSource,
    pub d: usize,
    pub n: usize,
}

/// Ordinary least squares `y ≈ slope·x + intercept`; returns
/// `(slope, intercept, r²)`.
pub fn linear_regression(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let len = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / len;
    let my = ys.iter().sum::<f64>() / len;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    (slope, intercept, r2)
}

/// Fits `ln I(d_v) ≈ β·cos(d_v) + ln c₃` over the patterns inside the read
/// radius, `d_v ∈ {0, …, d−1}`, with `cos = 1 − 2d_v/n`.
///
/// The binary source regresses the log address count of the Hamming-ball
/// intersection; the continuous source the log area of the cap intersection at
/// the same cosines.
pub fn fit_beta(d: usize, n: usize, source: FitSource) -> Result<BetaFit> {
    if d <= 1 {
        return Err(SdmError::DegenerateFit(format!(
            "radius d={d} leaves fewer than two regression points"
        )));
    }
    if 2 * d >= n {
        return Err(SdmError::domain(format!("fit_beta requires d < n/2 (d={d}, n={n})")));
    }
    let xs: Vec<f64> = (0..d).map(|dv| hamming_to_cosine(dv, n)).collect::<Result<_>>()?;
    let ys: Vec<f64> = match source {
        FitSource::Binary => {
            let table = BinaryIntersectionTable::new(n, d)?;
            (0..d).map(|dv| table.log_count(dv)).collect()
        }
        FitSource::Continuous => {
            let cos_d = hamming_to_cosine(d, n)?;
            let ln_area = hypersphere_surface_area(n).ln();
            xs.iter()
                .map(|&c| continuous_cap_fraction(c, cos_d, n).map(|f| f.ln() + ln_area))
                .collect::<Result<_>>()?
        }
    };
    let (beta, log_intercept, r_squared) = linear_regression(&xs, &ys);
    Ok(BetaFit {
        beta,
        log_intercept,
        r_squared,
        source,
        d,
        n,
    })
}

/// Numerically stable `exp(β·xᵢ) / Σⱼ exp(β·xⱼ)`.
pub fn softmax(scores: &[f64], beta: f64) -> Vec<f64> {
    normalize_log_weights(&scores.iter().map(|s| beta * s).collect::<Vec<_>>())
        .unwrap_or_else(|| vec![1.0 / scores.len() as f64; scores.len()])
}

/// Turns log weights into normalized weights; `None` if every weight is zero.
pub fn normalize_log_weights(log_w: &[f64]) -> Option<Vec<f64>> {
    let max = log_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let mut w: Vec<f64> = log_w.iter().map(|l| (l - max).exp()).collect();
    let total = kahan_sum(w.iter().copied());
    w.iter_mut().for_each(|x| *x /= total);
    Some(w)
}

/// Compensated summation.
pub fn kahan_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut c = 0.0;
    for v in values {
        let y = v - c;
        let t = sum + y;
        c = (t - sum) - y;
        sum = t;
    }
    sum
}

/// `Σ wᵢ·vᵢ` over equal-length rows with per-component compensated
/// summation.  Rows with zero weight are skipped.
pub fn weighted_sum<'a>(weights: &[f64], rows: impl IntoIterator<Item = &'a [f64]>, dim: usize) -> Vec<f64> {
    let mut sum = vec![0.0; dim];
    let mut comp = vec![0.0; dim];
    for (&w, row) in weights.iter().zip(rows) {
        if w == 0.0 {
            continue;
        }
        for k in 0..dim {
            let y = w * row[k] - comp[k];
            let t = sum[k] + y;
            comp[k] = (t - sum[k]) - y;
            sum[k] = t;
        }
    }
    sum
}

/// Expected counts above this are passed through unquantized: at 2⁵³ the
/// integer grid is coarser than the floating-point one.
pub const QUANTIZE_LIMIT: f64 = 9_007_199_254_740_992.0;

/// Stochastic rounding `⌊e⌋ + Bernoulli(e − ⌊e⌋)`.
///
/// Inputs within `1e-9` (relative) of an integer are treated as that integer,
/// so counts that are exact in real arithmetic but carry floating-point
/// residue are not randomly perturbed.
pub fn quantize_neuron_counts<R: Rng + ?Sized>(expected: &[f64], rng: &mut R) -> Vec<f64> {
    expected.iter().map(|&e| quantize_one(e, rng)).collect()
}

#[inline]
fn quantize_one<R: Rng + ?Sized>(e: f64, rng: &mut R) -> f64 {
    debug_assert!(e >= 0.0);
    if !e.is_finite() || e > QUANTIZE_LIMIT {
        return e;
    }
    let nearest = e.round();
    if (e - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        return nearest;
    }
    let floor = e.floor();
    if rng.random::<f64>() < e - floor {
        floor + 1.0
    } else {
        floor
    }
}

/// Kind of read weighting.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelKind {
    BinaryIntersection,
    ContinuousIntersection,
    Softmax,
}

#[derive(Clone, Debug)]
enum KernelParams {
    Binary(BinaryIntersectionTable),
    Continuous(ContinuousIntersectionTable),
    Softmax(BetaFit),
}

/// A read-weighting strategy with its precomputed state.
///
/// Intersection kernels produce log weights in units of *fraction of the
/// space*, so `exp(log_w + ln r)` is an expected neuron count; the softmax
/// kernel produces `β·cos`.
#[derive(Clone, Debug)]
pub struct WeightKernel {
    pub n: usize,
    pub d: usize,
    params: KernelParams,
    neuron_budget: Option<f64>,
}

impl WeightKernel {
    pub fn binary_intersection(n: usize, d: usize) -> Result<Self> {
        Ok(WeightKernel {
            n,
            d,
            params: KernelParams::Binary(BinaryIntersectionTable::new(n, d)?),
            neuron_budget: None,
        })
    }

    pub fn continuous_intersection(n: usize, d: usize) -> Result<Self> {
        Self::continuous_intersection_with_points(n, d, ContinuousIntersectionTable::DEFAULT_POINTS)
    }

    pub fn continuous_intersection_with_points(n: usize, d: usize, points: usize) -> Result<Self> {
        let cos_d = hamming_to_cosine(d, n)?;
        Ok(WeightKernel {
            n,
            d,
            params: KernelParams::Continuous(ContinuousIntersectionTable::new(cos_d, n, points)?),
            neuron_budget: None,
        })
    }

    pub fn softmax(fit: BetaFit) -> Self {
        WeightKernel {
            n: fit.n,
            d: fit.d,
            params: KernelParams::Softmax(fit),
            neuron_budget: None,
        }
    }

    /// Limits the kernel to `r` neurons: expected counts are stochastically
    /// quantized before normalization.  Ignored by the softmax kernel, which
    /// has no neuron interpretation.
    pub fn with_neuron_budget(mut self, r: f64) -> Result<Self> {
        if !(r > 0.0) {
            return Err(SdmError::domain(format!("neuron budget must be positive, got {r}")));
        }
        if !matches!(self.params, KernelParams::Softmax(_)) {
            self.neuron_budget = Some(r);
        }
        Ok(self)
    }

    pub fn kind(&self) -> KernelKind {
        match self.params {
            KernelParams::Binary(_) => KernelKind::BinaryIntersection,
            KernelParams::Continuous(_) => KernelKind::ContinuousIntersection,
            KernelParams::Softmax(_) => KernelKind::Softmax,
        }
    }

    pub fn neuron_budget(&self) -> Option<f64> {
        self.neuron_budget
    }

    pub fn beta(&self) -> Option<f64> {
        match &self.params {
            KernelParams::Softmax(fit) => Some(fit.beta),
            _ => None,
        }
    }

    /// Log raw weight of a pattern at Hamming distance `d_v` from the query.
    #[inline]
    pub fn log_weight_from_distance(&self, d_v: usize) -> f64 {
        match &self.params {
            KernelParams::Binary(t) => t.log_expected(d_v, 0.0),
            KernelParams::Continuous(t) => t.log_fraction(1.0 - 2.0 * d_v as f64 / self.n as f64),
            KernelParams::Softmax(fit) => fit.beta * (1.0 - 2.0 * d_v as f64 / self.n as f64),
        }
    }

    /// Log raw weight of a pattern at cosine similarity `c` to the query.
    /// The binary kernel maps `c` to a Hamming distance first.
    #[inline]
    pub fn log_weight_from_cosine(&self, c: f64) -> f64 {
        let c = c.clamp(-1.0, 1.0);
        match &self.params {
            KernelParams::Binary(t) => {
                let d_v = cosine_to_hamming(c, self.n).expect("cosine clamped into range");
                t.log_expected(d_v, 0.0)
            }
            KernelParams::Continuous(t) => t.log_fraction(c),
            KernelParams::Softmax(fit) => fit.beta * c,
        }
    }

    /// Normalizes a vector of log raw weights, quantizing first if the kernel
    /// has a neuron budget.
    pub fn normalize<R: Rng + ?Sized>(&self, log_w: &[f64], rng: &mut R) -> Weights {
        let values = match self.neuron_budget {
            None => normalize_log_weights(log_w),
            Some(r) => {
                let ln_r = r.ln();
                let counts: Vec<f64> = log_w.iter().map(|l| quantize_one((l + ln_r).exp(), rng)).collect();
                let total = kahan_sum(counts.iter().copied());
                if total > 0.0 {
                    Some(counts.iter().map(|c| c / total).collect())
                } else {
                    None
                }
            }
        };
        match values {
            Some(values) => Weights {
                values,
                no_intersection: false,
            },
            None => Weights {
                values: vec![0.0; log_w.len()],
                no_intersection: true,
            },
        }
    }
}

/// Normalized read weights.  When no pattern has a nonzero weight the values
/// are all zero and `no_intersection` is set.
#[derive(Clone, Debug, PartialEq)]
pub struct Weights {
    pub values: Vec<f64>,
    pub no_intersection: bool,
}

/// Vector spaces a [`WeightKernel`] can read from.
pub trait KernelSpace: Dimensioned + Sized {
    fn log_raw_weights(kernel: &WeightKernel, query: &Self, addresses: &[Self]) -> Vec<f64>;
}

impl KernelSpace for BitVector {
    fn log_raw_weights(kernel: &WeightKernel, query: &Self, addresses: &[Self]) -> Vec<f64> {
        addresses
            .iter()
            .map(|a| kernel.log_weight_from_distance(query.distance(a)))
            .collect()
    }
}

impl KernelSpace for DenseVector {
    fn log_raw_weights(kernel: &WeightKernel, query: &Self, addresses: &[Self]) -> Vec<f64> {
        addresses
            .iter()
            .map(|a| kernel.log_weight_from_cosine(dot(&query.values, &a.values)))
            .collect()
    }
}

/// Normalized read weights of every stored pattern for `query`.
///
/// Dense queries and addresses are assumed unit-norm, so the dot product is
/// the cosine similarity.
pub fn kernel_weights<V: KernelSpace, R: Rng + ?Sized>(
    kernel: &WeightKernel,
    query: &V,
    patterns: &PatternStore<V>,
    rng: &mut R,
) -> Result<Weights> {
    check_dim(kernel.n, query.dim())?;
    check_dim(kernel.n, patterns.address_dim())?;
    let log_w = V::log_raw_weights(kernel, query, patterns.addresses());
    Ok(kernel.normalize(&log_w, rng))
}

/// One softmax attention step: `P_p · softmax(β P_aᵀ ξ)`.
///
/// Pointers are summed as given (not normalized); they may live in a
/// different space from the addresses.
pub fn attention_update(patterns: &PatternStore<DenseVector>, query: &DenseVector, beta: f64) -> Result<DenseVector> {
    check_dim(patterns.address_dim(), query.len())?;
    let scores: Vec<f64> = patterns.addresses().iter().map(|a| a.dot(query)).collect();
    let w = softmax(&scores, beta);
    let dim = patterns.pointer_dim();
    Ok(DenseVector::new(weighted_sum(
        &w,
        patterns.pointers().iter().map(|p| p.as_slice()),
        dim,
    )))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vectorspace::{binary_to_unit, perturb_binary};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn softmax_examples() {
        assert_eq!(softmax(&[2.0, 2.0, 2.0, 2.0], 7.0), vec![0.25; 4]);
        assert_eq!(softmax(&[1.0, -3.0], 0.0), vec![0.5; 2]);
        let w = softmax(&[1.0, 0.0], 4f64.ln());
        assert!((w[0] - 0.8).abs() < 1e-15 && (w[1] - 0.2).abs() < 1e-15);
        let w = softmax(&[1000.0, 999.0, -1e6], 1.0);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn regression_recovers_line() {
        let xs = [0.0, 1.0, 2.0, 3.0];
        let ys = [1.0, 3.0, 5.0, 7.0];
        let (m, b, r2) = linear_regression(&xs, &ys);
        assert!((m - 2.0).abs() < 1e-14 && (b - 1.0).abs() < 1e-14 && (r2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn fit_beta_is_deterministic_and_positive() {
        for d in 2..32 {
            let a = fit_beta(d, 64, FitSource::Binary).unwrap();
            let b = fit_beta(d, 64, FitSource::Binary).unwrap();
            assert_eq!(a, b);
            assert!(a.beta > 0.0, "d={d}");
        }
        assert!(matches!(fit_beta(1, 64, FitSource::Binary), Err(SdmError::DegenerateFit(_))));
        assert!(fit_beta(32, 64, FitSource::Binary).is_err());
    }

    #[test]
    fn fit_beta_matches_independent_regression() {
        // Oracle: normal equations solved directly from raw sums.
        let (d, n) = (11usize, 64usize);
        let table = BinaryIntersectionTable::new(n, d).unwrap();
        let pts: Vec<(f64, f64)> = (0..d)
            .map(|v| (1.0 - 2.0 * v as f64 / n as f64, table.log_count(v)))
            .collect();
        let k = pts.len() as f64;
        let sx: f64 = pts.iter().map(|p| p.0).sum();
        let sy: f64 = pts.iter().map(|p| p.1).sum();
        let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
        let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
        let slope = (k * sxy - sx * sy) / (k * sxx - sx * sx);
        let fit = fit_beta(d, n, FitSource::Binary).unwrap();
        assert!((fit.beta - slope).abs() < 1e-6 * slope);
        let resid: f64 = pts
            .iter()
            .map(|p| (p.1 - fit.beta * p.0 - fit.log_intercept).powi(2))
            .sum();
        let mean = sy / k;
        let total: f64 = pts.iter().map(|p| (p.1 - mean).powi(2)).sum();
        assert!((fit.r_squared - (1.0 - resid / total)).abs() < 1e-9);
    }

    #[test]
    fn continuous_fit_is_steeper_than_zero() {
        let fit = fit_beta(11, 64, FitSource::Continuous).unwrap();
        assert!(fit.beta > 0.0);
        assert!(fit.r_squared > 0.9);
    }

    #[test]
    fn quantization_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(quantize_neuron_counts(&[0.0, 3.0, 17.0], &mut rng), vec![0.0, 3.0, 17.0]);
        let draws = 100_000;
        let fours = (0..draws)
            .filter(|_| quantize_neuron_counts(&[3.6], &mut rng)[0] == 4.0)
            .count();
        assert!(((fours as f64 / draws as f64) - 0.6).abs() < 0.01);
        let mean: f64 = (0..draws).map(|_| quantize_neuron_counts(&[0.25], &mut rng)[0]).sum::<f64>() / draws as f64;
        assert!((mean - 0.25).abs() < 0.005);
        assert_eq!(quantize_neuron_counts(&[1e17], &mut rng), vec![1e17]);
    }

    fn random_store(m: usize, n: usize, seed: u64) -> PatternStore<BitVector> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        PatternStore::autoassociative((0..m).map(|_| BitVector::random(n, &mut rng)).collect()).unwrap()
    }

    #[test]
    fn single_pattern_gets_all_weight() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let store = random_store(1, 64, 1);
        let q = store.addresses()[0].clone();
        let fit = fit_beta(11, 64, FitSource::Binary).unwrap();
        for kernel in [
            WeightKernel::binary_intersection(64, 11).unwrap(),
            WeightKernel::continuous_intersection(64, 11).unwrap(),
            WeightKernel::softmax(fit),
        ] {
            assert_eq!(kernel_weights(&kernel, &q, &store, &mut rng).unwrap().values, vec![1.0]);
        }
    }

    #[test]
    fn equidistant_patterns_split_evenly() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = BitVector::zeros(64);
        let a = BitVector::from_fn(64, |i| i < 5);
        let b = BitVector::from_fn(64, |i| i >= 59);
        let store = PatternStore::autoassociative(vec![a, b]).unwrap();
        let fit = fit_beta(11, 64, FitSource::Binary).unwrap();
        for kernel in [
            WeightKernel::binary_intersection(64, 11).unwrap(),
            WeightKernel::continuous_intersection(64, 11).unwrap(),
            WeightKernel::softmax(fit),
        ] {
            assert_eq!(kernel_weights(&kernel, &q, &store, &mut rng).unwrap().values, vec![0.5, 0.5]);
        }
    }

    #[test]
    fn no_intersection_is_flagged() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let store = PatternStore::autoassociative(vec![BitVector::ones(64)]).unwrap();
        let kernel = WeightKernel::binary_intersection(64, 5).unwrap();
        let w = kernel_weights(&kernel, &BitVector::zeros(64), &store, &mut rng).unwrap();
        assert!(w.no_intersection);
        assert_eq!(w.values, vec![0.0]);
        assert!(kernel_weights(&kernel, &BitVector::zeros(63), &store, &mut rng).is_err());
    }

    // On a grid with one pattern per distance the two kernels differ visibly:
    // the intersection is flat across each odd/even pair of distances, which a
    // single exponential cannot follow.
    #[test]
    fn softmax_vs_binary_on_distance_grid() {
        let (n, d) = (64usize, 11usize);
        let soft = WeightKernel::softmax(fit_beta(d, n, FitSource::Binary).unwrap());
        let bin = WeightKernel::binary_intersection(n, d).unwrap();
        let lw_s: Vec<f64> = (0..=d).map(|v| soft.log_weight_from_distance(v)).collect();
        let lw_b: Vec<f64> = (0..=d).map(|v| bin.log_weight_from_distance(v)).collect();
        let ws = normalize_log_weights(&lw_s).unwrap();
        let wb = normalize_log_weights(&lw_b).unwrap();
        let l1: f64 = ws.iter().zip(&wb).map(|(a, b)| (a - b).abs()).sum();
        assert!(l1 > 0.2 && l1 < 0.3, "l1={l1}");
        for v in (1..d).step_by(2) {
            assert!((lw_b[v] - lw_b[v + 1]).abs() < 1e-9);
        }
    }

    #[test]
    fn softmax_tracks_binary_weights_on_random_patterns() {
        let (n, d) = (64usize, 11usize);
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let store = random_store(1024, n, 22);
        let soft = WeightKernel::softmax(fit_beta(d, n, FitSource::Binary).unwrap());
        let bin = WeightKernel::binary_intersection(n, d).unwrap();
        let mut worst = 0.0f64;
        for t in 0..50 {
            let q = perturb_binary(&store.addresses()[t], 1 + t % 8, &mut rng).unwrap();
            let inside: Vec<usize> = store
                .addresses()
                .iter()
                .map(|a| a.distance(&q))
                .filter(|&dv| dv <= d)
                .collect();
            let ws = normalize_log_weights(&inside.iter().map(|&v| soft.log_weight_from_distance(v)).collect::<Vec<_>>()).unwrap();
            let wb = normalize_log_weights(&inside.iter().map(|&v| bin.log_weight_from_distance(v)).collect::<Vec<_>>()).unwrap();
            let l1: f64 = ws.iter().zip(&wb).map(|(a, b)| (a - b).abs()).sum();
            worst = worst.max(l1);
        }
        assert!(worst <= 0.05, "worst l1={worst}");
    }

    #[test]
    fn target_weight_concentrates() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let store = random_store(1024, 64, 9);
        let kernel = WeightKernel::binary_intersection(64, 11).unwrap();
        for t in 0..20 {
            let q = perturb_binary(&store.addresses()[t], 8, &mut rng).unwrap();
            let w = kernel_weights(&kernel, &q, &store, &mut rng).unwrap();
            assert!(w.values[t] > 0.99, "t={t} w={}", w.values[t]);
        }
    }

    #[test]
    fn attention_update_examples() {
        let a = DenseVector::new(vec![1.0, 0.0]);
        let b = DenseVector::new(vec![0.0, 1.0]);
        let single = PatternStore::autoassociative(vec![a.clone()]).unwrap();
        assert_eq!(attention_update(&single, &b, 10.0).unwrap(), a);
        let pair = PatternStore::heteroassociative(
            vec![a.clone(), b.clone()],
            vec![DenseVector::new(vec![2.0, 0.0, 4.0]), DenseVector::new(vec![0.0, 2.0, 0.0])],
        )
        .unwrap();
        let q = DenseVector::new(vec![f64::sqrt(0.5), f64::sqrt(0.5)]);
        assert_eq!(attention_update(&pair, &q, 3.0).unwrap().values, vec![1.0, 1.0, 2.0]);
    }

    #[test]
    fn attention_matches_binary_kernel_update() {
        let (n, d) = (64usize, 11usize);
        let store = random_store(1024, n, 21);
        let dense: Vec<DenseVector> = store.addresses().iter().map(binary_to_unit).collect();
        let dstore = PatternStore::autoassociative(dense.clone()).unwrap();
        let fit = fit_beta(d, n, FitSource::Binary).unwrap();
        let kernel = WeightKernel::binary_intersection(n, d).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(22);
        for t in 0..20 {
            let q = perturb_binary(&store.addresses()[t], 6, &mut rng).unwrap();
            let qd = binary_to_unit(&q);
            let att = attention_update(&dstore, &qd, fit.beta).unwrap();
            let w = kernel_weights(&kernel, &q, &store, &mut rng).unwrap();
            let bin = DenseVector::new(weighted_sum(&w.values, dense.iter().map(|p| p.as_slice()), n));
            assert!(att.cosine(&bin) >= 0.999, "t={t}");
        }
    }

    proptest! {
        #[test]
        fn quantization_stays_within_one(e in 0.0f64..1e6, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let q = quantize_neuron_counts(&[e], &mut rng)[0];
            prop_assert!((q - e).abs() < 1.0);
            prop_assert_eq!(q, q.round());
        }

        #[test]
        fn softmax_sums_to_one_and_preserves_order(
            scores in proptest::collection::vec(-50.0f64..50.0, 1..40),
            beta in 0.0f64..40.0,
        ) {
            let w = softmax(&scores, beta);
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for i in 0..scores.len() {
                for j in 0..scores.len() {
                    if scores[i] > scores[j] {
                        prop_assert!(w[i] >= w[j]);
                    }
                }
            }
        }
    }
}
