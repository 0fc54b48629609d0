//! Signal-to-noise analysis, memory capacity, optimal read radii, critical
//! distances, Monte Carlo validation and the Hopfield special case.
//!
//! The analytic model places the target pattern at distance `d_v` from the
//! query and every other pattern at the orthogonal distance `n/2`.  Neuron
//! counts in each circle intersection are treated as Poisson, giving
//!
//! ```text
//! SNR = E[I*] / √(E[I*] + (m − 1)(E[I_μ] + E[I_μ]²))
//! ```

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::engines::NeuronStore;
use crate::error::{check_dim, Result, SdmError};
use crate::intersect::special::{normal_cdf, normal_quantile, normal_sf};
use crate::intersect::{log_binomial, log_sum_exp, BinaryIntersector};
use crate::vectorspace::{majority_bipolar, perturb_binary, BipolarVector, BitVector, PatternStore};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SnrSource {
    Analytic,
    Simulated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SnrEstimate {
    pub snr: f64,
    /// Mean number of neurons shared by the query and the target.
    pub expected_target_intersection: f64,
    /// Standard deviation of the summed read value along the target.
    pub noise_std: f64,
    pub source: SnrSource,
    pub trials: Option<usize>,
    /// Jackknife standard error of the simulated SNR; `None` for analytic
    /// estimates and for single-trial simulations, where it is undefined.
    pub standard_error: Option<f64>,
}

fn check_counts(m: usize, r: f64) -> Result<()> {
    if m == 0 {
        return Err(SdmError::domain("at least one stored pattern is required"));
    }
    if !(r > 0.0) {
        return Err(SdmError::domain(format!("neuron count r must be positive, got {r}")));
    }
    Ok(())
}

/// SNR from expected intersection sizes.
fn snr_from_expectations(e_target: f64, e_other: f64, m: usize) -> (f64, f64) {
    let noise = (e_target + (m - 1) as f64 * (e_other + e_other * e_other)).sqrt();
    let snr = if e_target > 0.0 { e_target / noise } else { 0.0 };
    (snr, noise)
}

/// SNR model for a fixed `(n, d, r, m)`, evaluating intersections lazily.
struct SnrModel {
    intersector: BinaryIntersector,
    ln_scale: f64,
    e_other: f64,
    m: usize,
}

impl SnrModel {
    fn new(d: usize, n: usize, m: usize, r: f64) -> Result<Self> {
        check_counts(m, r)?;
        let intersector = BinaryIntersector::new(n, d)?;
        let ln_scale = r.ln() - n as f64 * std::f64::consts::LN_2;
        let e_other = (intersector.log_count(n / 2) + ln_scale).exp();
        Ok(SnrModel {
            intersector,
            ln_scale,
            e_other,
            m,
        })
    }

    fn expected_target(&self, d_v: usize) -> f64 {
        (self.intersector.log_count(d_v) + self.ln_scale).exp()
    }

    fn snr(&self, d_v: usize) -> (f64, f64, f64) {
        let e_t = self.expected_target(d_v);
        let (snr, noise) = snr_from_expectations(e_t, self.e_other, self.m);
        (snr, e_t, noise)
    }

    fn new_distance(&self, d_v: usize) -> f64 {
        self.intersector.n as f64 * normal_sf(self.snr(d_v).0)
    }
}

/// Analytic SNR of a read whose target lies `d_v_target` from the query.
pub fn analytic_snr(d_v_target: usize, d: usize, r: f64, m: usize, n: usize) -> Result<SnrEstimate> {
    if d_v_target > n {
        return Err(SdmError::domain(format!("d_v={d_v_target} exceeds n={n}")));
    }
    let model = SnrModel::new(d, n, m, r)?;
    let (snr, e_t, noise) = model.snr(d_v_target);
    Ok(SnrEstimate {
        snr,
        expected_target_intersection: e_t,
        noise_std: noise,
        source: SnrSource::Analytic,
        trials: None,
        standard_error: None,
    })
}

/// Largest `r · n` (bits of neuron addresses) a simulation may allocate.
const SIMULATION_ADDRESS_BITS_LIMIT: f64 = 8.0 * 1024.0 * 1024.0 * 1024.0 * 8.0;

fn check_simulation(n: usize, d: usize, r: f64, d_v: usize) -> Result<usize> {
    if n == 0 || d > n || d_v > n {
        return Err(SdmError::domain(format!("invalid simulation geometry n={n} d={d} d_v={d_v}")));
    }
    if !(r >= 1.0) || !r.is_finite() || r.fract() != 0.0 || r * n as f64 > SIMULATION_ADDRESS_BITS_LIMIT {
        return Err(SdmError::Resource(format!("cannot simulate {r} neurons of dimension {n}")));
    }
    Ok(r as usize)
}

/// Places `r` random neurons and counts how many fall within `d` of both a
/// random point and a point `d_v` away from it.  One count per trial.
pub fn simulate_intersection_counts<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    r: f64,
    d_v: usize,
    trials: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let r = check_simulation(n, d, r, d_v)?;
    let mut counts = Vec::with_capacity(trials);
    for _ in 0..trials {
        let a = BitVector::random(n, rng);
        let b = perturb_binary(&a, d_v, rng)?;
        let mut hits = 0;
        for _ in 0..r {
            let x = BitVector::random(n, rng);
            if x.distance(&a) <= d && x.distance(&b) <= d {
                hits += 1;
            }
        }
        counts.push(hits);
    }
    Ok(counts)
}

/// Full neuron simulation of the read at a query `d_v_target` from its target.
///
/// Each trial draws `r` random neurons, a random target, `m − 1` random other
/// patterns and a query at exactly `d_v_target` from the target.  Every
/// pattern is written (bipolar) to every neuron within `d` of its address.
/// The summed read value at each bit, signed by the target's bit, is one
/// sample of `I* + noise`; the SNR is the mean over the standard deviation of
/// all samples pooled across trials.
pub fn monte_carlo_snr<R: Rng + ?Sized>(
    n: usize,
    d: usize,
    r: f64,
    m: usize,
    d_v_target: usize,
    trials: usize,
    rng: &mut R,
) -> Result<SnrEstimate> {
    check_counts(m, r)?;
    let r = check_simulation(n, d, r, d_v_target)?;
    if trials == 0 {
        return Err(SdmError::domain("at least one trial is required"));
    }
    // Per-trial sums of the samples and of their squares, and of the target
    // intersection size.
    let mut sums = Vec::with_capacity(trials);
    let mut target_total = 0.0;
    for _ in 0..trials {
        let target = BitVector::random(n, rng);
        let others: Vec<BitVector> = (0..m - 1).map(|_| BitVector::random(n, rng)).collect();
        let query = perturb_binary(&target, d_v_target, rng)?;
        let target_sign: Vec<i64> = target.iter().map(|b| if b { 1 } else { -1 }).collect();
        let mut read = vec![0i64; n];
        let mut target_hits = 0usize;
        for _ in 0..r {
            let x = BitVector::random(n, rng);
            // Only neurons the query reads from matter.
            if x.distance(&query) > d {
                continue;
            }
            if x.distance(&target) <= d {
                target_hits += 1;
                for (v, &s) in read.iter_mut().zip(&target_sign) {
                    *v += s;
                }
            }
            for p in &others {
                if x.distance(p) <= d {
                    for (i, v) in read.iter_mut().enumerate() {
                        *v += if p.get(i) { 1 } else { -1 };
                    }
                }
            }
        }
        let (mut s1, mut s2) = (0.0, 0.0);
        for (v, &s) in read.iter().zip(&target_sign) {
            let x = (v * s) as f64;
            s1 += x;
            s2 += x * x;
        }
        sums.push((s1, s2));
        target_total += target_hits as f64;
    }
    let samples = (trials * n) as f64;
    let (t1, t2) = sums.iter().fold((0.0, 0.0), |(a, b), &(x, y)| (a + x, b + y));
    let ratio = |s1: f64, s2: f64, count: f64| {
        let mean = s1 / count;
        let var = (s2 / count - mean * mean).max(0.0);
        let sd = var.sqrt();
        (if sd > 0.0 { mean / sd } else { 0.0 }, sd)
    };
    let (snr, sd) = ratio(t1, t2, samples);
    let standard_error = (trials > 1).then(|| {
        let per = (n * (trials - 1)) as f64;
        let loo: Vec<f64> = sums.iter().map(|&(x, y)| ratio(t1 - x, t2 - y, per).0).collect();
        let mean = loo.iter().sum::<f64>() / trials as f64;
        let k = trials as f64;
        ((k - 1.0) / k * loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>()).sqrt()
    });
    Ok(SnrEstimate {
        snr,
        expected_target_intersection: target_total / trials as f64,
        noise_std: sd,
        source: SnrSource::Simulated,
        trials: Some(trials),
        standard_error,
    })
}

/// Per-bit z-score giving whole-pattern retrieval probability `prob` over `n`
/// independent bits: `Φ⁻¹(prob^{1/n})`.
pub fn retrieval_z(prob: f64, n: usize) -> Result<f64> {
    if !(prob > 0.0 && prob < 1.0) || n == 0 {
        return Err(SdmError::domain(format!("retrieval probability {prob} must lie in (0, 1)")));
    }
    let per_bit = (prob.ln() / n as f64).exp();
    if per_bit > 0.5 {
        // Work from the upper tail so that probabilities near 1 keep their
        // precision.
        let tail = -(prob.ln() / n as f64).exp_m1();
        Ok(-normal_quantile(tail)?)
    } else {
        normal_quantile(per_bit)
    }
}

/// Number of random patterns storable at radius `d` while a noiseless query
/// still retrieves its target at per-bit z-score `z`.
///
/// Zero when even a single pattern cannot reach the required SNR.
pub fn memory_capacity(d: usize, r: f64, n: usize, z: f64) -> Result<f64> {
    if !(r > 0.0) || !(z > 0.0) {
        return Err(SdmError::domain("memory capacity needs r > 0 and z > 0"));
    }
    let p = crate::intersect::space_fraction(d, n)?;
    Ok(capacity_at_fraction(p, r, z))
}

fn capacity_at_fraction(p: f64, r: f64, z: f64) -> f64 {
    let e_t = p * r;
    let e_o = p * p * r;
    if e_t <= z * z {
        return 0.0;
    }
    (e_t * e_t / (z * z) - e_t) / (e_o + e_o * e_o) + 1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimalityCriterion {
    Snr,
    Memory,
    CriticalDistance,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimalD {
    pub d_star: usize,
    /// The optimal fraction of space: the closed-form optimum for the SNR and
    /// memory criteria, the space fraction at `d_star` for critical distance.
    pub p_star: f64,
    pub criterion: OptimalityCriterion,
    pub n: usize,
    pub m: Option<usize>,
    pub r: f64,
    pub retrieval_prob: Option<f64>,
    /// Critical distance at `d_star` (critical-distance criterion only).
    pub critical_distance: Option<usize>,
}

/// `ln P(X ≤ k)` for `X ~ Binomial(n, 1/2)`, for every `k ∈ [0, n]`.
pub fn binomial_log_cdf(n: usize) -> Vec<f64> {
    let ln2n = n as f64 * std::f64::consts::LN_2;
    let mut acc = f64::NEG_INFINITY;
    (0..=n)
        .map(|k| {
            acc = log_sum_exp(&[acc, log_binomial(n, k).0]);
            acc - ln2n
        })
        .collect()
}

/// Smallest `d` whose Hamming ball covers at least a fraction `p` of
/// `{0,1}ⁿ`.
pub fn inverse_binomial_cdf(p: f64, n: usize) -> Result<usize> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(SdmError::domain(format!("space fraction {p} must lie in (0, 1]")));
    }
    let ln_p = p.ln();
    // Absorb the last ulp of rounding in the accumulated log CDF.
    Ok(binomial_log_cdf(n)
        .iter()
        .position(|&c| c >= ln_p - 1e-12)
        .unwrap_or(n))
}

/// Radius maximizing the SNR of a noiseless read: `p* = (2mr)^{−1/3}`.
pub fn optimal_d_snr(n: usize, m: usize, r: f64) -> Result<OptimalD> {
    check_counts(m, r)?;
    let p_star = (2.0 * m as f64 * r).cbrt().recip();
    Ok(OptimalD {
        d_star: inverse_binomial_cdf(p_star, n)?,
        p_star,
        criterion: OptimalityCriterion::Snr,
        n,
        m: Some(m),
        r,
        retrieval_prob: None,
        critical_distance: None,
    })
}

/// Closed-form stationary point of the capacity in `p`.
pub fn memory_optimal_fraction(r: f64, z: f64) -> f64 {
    // The cube-root argument 2r⁴z² + r³z⁶ + 2√(r⁸z⁴ + r⁷z⁸) is factored as
    // r³·B so that large r does not overflow.
    let z2 = z * z;
    let b = 2.0 * r * z2 + z2 * z2 * z2 + 2.0 * z2 * (r * r + r * z2 * z2).sqrt();
    let c = b.cbrt();
    0.5 * (z2 * z2 / (r * c) + c / r + z2 / r)
}

/// Radius maximizing memory capacity at per-bit z-score `z`.
pub fn optimal_d_memory(n: usize, r: f64, z: f64) -> Result<OptimalD> {
    if !(r > 0.0) || !(z > 0.0) {
        return Err(SdmError::domain("optimal memory radius needs r > 0 and z > 0"));
    }
    let p_star = memory_optimal_fraction(r, z);
    Ok(OptimalD {
        d_star: inverse_binomial_cdf(p_star.min(1.0), n)?,
        p_star,
        criterion: OptimalityCriterion::Memory,
        n,
        m: None,
        r,
        retrieval_prob: None,
        critical_distance: None,
    })
}

/// [`optimal_d_memory`] with `z` derived from a whole-pattern retrieval
/// probability.
pub fn optimal_d_memory_for_prob(n: usize, r: f64, prob: f64) -> Result<OptimalD> {
    let mut out = optimal_d_memory(n, r, retrieval_z(prob, n)?)?;
    out.retrieval_prob = Some(prob);
    Ok(out)
}

/// Expected Hamming distance to the target after one read from distance
/// `d_v`: `n · (1 − Φ(SNR))`.
pub fn expected_new_distance(d_v: usize, d: usize, n: usize, m: usize, r: f64) -> Result<f64> {
    if d_v > n {
        return Err(SdmError::domain(format!("d_v={d_v} exceeds n={n}")));
    }
    Ok(SnrModel::new(d, n, m, r)?.new_distance(d_v))
}

/// Bit-fidelity `Φ(SNR)` of one read from distance `d_v`.
pub fn fidelity(d_v: usize, d: usize, n: usize, m: usize, r: f64) -> Result<f64> {
    Ok(normal_cdf(analytic_snr(d_v, d, r, m, n)?.snr))
}

/// Largest query-to-target distance from which one expected read moves the
/// query closer.
///
/// The scan over `d_v ∈ [1, n/2)` finds the first distance where the expected
/// new distance drops below `d_v`, and follows that convergent region to its
/// upper end; the critical distance is the last `d_v` in it.  Distances
/// beyond a divergent gap are not counted, since a query there is pushed away
/// before it can reach the convergent region.
///
/// A region that runs all the way to `n/2` without diverging is ambiguous.
/// If it starts close to the target (within `n/4`) every query is pulled
/// towards the target and the critical distance is the whole scan range.  If
/// it only starts near `n/2` it is the basin of the near-orthogonal fixed
/// point — reads returning slightly-better-than-random bits — and does not
/// count.  Zero when no distance converges.
pub fn critical_distance(d: usize, n: usize, m: usize, r: f64) -> Result<usize> {
    let model = SnrModel::new(d, n, m, r)?;
    Ok(critical_distance_with(&model))
}

fn critical_distance_with(model: &SnrModel) -> usize {
    let n = model.intersector.n;
    let upper = n.div_ceil(2);
    let mut run: Option<(usize, usize)> = None;
    for d_v in 1..upper {
        let f = model.new_distance(d_v);
        match run {
            Some((start, _)) if f <= d_v as f64 => run = Some((start, d_v)),
            Some((_, end)) => return end,
            None if f < d_v as f64 => run = Some((d_v, d_v)),
            // The expected new distance is nondecreasing in d_v, so no larger
            // d_v below n/2 can converge either.
            None if f >= (upper - 1) as f64 => return 0,
            None => {}
        }
    }
    match run {
        Some((start, end)) if 4 * start <= n => end,
        _ => 0,
    }
}

/// Radius maximizing the critical distance; ties go to the smaller radius.
pub fn optimal_d_critical(n: usize, m: usize, r: f64) -> Result<OptimalD> {
    check_counts(m, r)?;
    let mut best = (0usize, 0usize);
    for d in 1..n.div_ceil(2) {
        let cd = critical_distance_with(&SnrModel::new(d, n, m, r)?);
        if cd > best.1 {
            best = (d, cd);
        }
    }
    let d_star = best.0;
    Ok(OptimalD {
        d_star,
        p_star: crate::intersect::space_fraction(d_star, n)?,
        criterion: OptimalityCriterion::CriticalDistance,
        n,
        m: Some(m),
        r,
        retrieval_prob: None,
        critical_distance: Some(best.1),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalDistanceRow {
    pub d: usize,
    pub r: f64,
    pub critical_distance: usize,
}

/// Critical distance for every `(d, r)` combination, `d`-major.
pub fn critical_distance_vs_neurons(ds: &[usize], n: usize, m: usize, rs: &[f64]) -> Result<Vec<CriticalDistanceRow>> {
    let mut rows = Vec::with_capacity(ds.len() * rs.len());
    for &d in ds {
        for &r in rs {
            rows.push(CriticalDistanceRow {
                d,
                r,
                critical_distance: critical_distance(d, n, m, r)?,
            });
        }
    }
    Ok(rows)
}

/// One synchronous Hopfield update `g(P_p P_aᵀ ξ)`; autoassociative stores
/// use `P_p = P_a`.
pub fn hopfield_update(patterns: &PatternStore<BipolarVector>, query: &BipolarVector) -> Result<BipolarVector> {
    check_dim(patterns.address_dim(), query.len())?;
    let mut sum = vec![0.0f64; patterns.pointer_dim()];
    for (a, p) in patterns.addresses().iter().zip(patterns.pointers()) {
        let overlap = a.dot(query) as f64;
        for (s, &v) in sum.iter_mut().zip(&p.0) {
            *s += overlap * f64::from(v);
        }
    }
    Ok(majority_bipolar(&sum))
}

/// Unthresholded read of every neuron in `store`, each weighted by the bipolar
/// overlap between its address and the query, then bipolar-thresholded.
///
/// With neurons placed at the pattern addresses and a write radius of zero
/// this is exactly the Hopfield update.
pub fn degenerate_sdm_read(store: &NeuronStore, query: &BitVector) -> Result<BipolarVector> {
    let dim = store.values.first().map_or(0, Vec::len);
    let mut sum = vec![0.0f64; dim];
    for (addr, values) in store.addresses.iter().zip(&store.values) {
        check_dim(addr.len(), query.len())?;
        let overlap = (query.len() as f64) - 2.0 * addr.distance(query) as f64;
        for (s, &v) in sum.iter_mut().zip(values) {
            *s += overlap * f64::from(v);
        }
    }
    Ok(majority_bipolar(&sum))
}
