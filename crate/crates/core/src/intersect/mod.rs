//! Circle-intersection mathematics.
//!
//! The read weight a pattern receives in SDM is the number of neurons that lie
//! within radius `d` of both the query and the pattern address.  For uniformly
//! placed neurons that is `r / 2ⁿ` times the number of *addresses* in the
//! intersection of two Hamming balls, which this module computes exactly (in
//! log space, since the counts reach `2¹⁰⁰⁰`), approximates, and generalises
//! to caps on the unit hypersphere.

mod continuous;
pub mod special;

pub use continuous::{
    cap_fraction, continuous_cap_fraction, continuous_cap_intersection, hypersphere_surface_area,
    CapGeometry, ContinuousIntersectionTable,
};

use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};

use crate::error::{Result, SdmError};
use special::ln_gamma;

/// A nonnegative quantity stored as its natural logarithm.  `−∞` encodes an
/// exact zero.
#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LogWeight(pub f64);

impl LogWeight {
    pub const ZERO: LogWeight = LogWeight(f64::NEG_INFINITY);
    pub const ONE: LogWeight = LogWeight(0.0);

    pub fn from_value(v: f64) -> Self {
        LogWeight(v.ln())
    }

    pub fn ln(self) -> f64 {
        self.0
    }

    pub fn value(self) -> f64 {
        self.0.exp()
    }

    pub fn is_zero(self) -> bool {
        self.0 == f64::NEG_INFINITY
    }
}

/// `ln(eᵃ + eᵇ)` without overflow.
#[inline]
pub fn log_add(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

/// `ln Σ exp(xᵢ)`, summed in the given order after subtracting the maximum.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl Add for LogWeight {
    type Output = LogWeight;
    fn add(self, rhs: LogWeight) -> LogWeight {
        LogWeight(log_add(self.0, rhs.0))
    }
}

impl Mul for LogWeight {
    type Output = LogWeight;
    fn mul(self, rhs: LogWeight) -> LogWeight {
        LogWeight(self.0 + rhs.0)
    }
}

/// `ln C(n, k)`; zero weight when `k` is out of range.
pub fn log_binomial(n: usize, k: usize) -> LogWeight {
    if k > n {
        return LogWeight::ZERO;
    }
    if k == 0 || k == n {
        return LogWeight::ONE;
    }
    LogWeight(ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0))
}

/// Table of `ln k!` for `k ≤ n`, so that repeated binomials cost three loads.
#[derive(Clone, Debug)]
struct LnFactorials(Vec<f64>);

impl LnFactorials {
    fn new(n: usize) -> Self {
        LnFactorials((0..=n).map(|k| ln_gamma(k as f64 + 1.0)).collect())
    }

    #[inline]
    fn binom(&self, n: usize, k: usize) -> f64 {
        if k > n {
            f64::NEG_INFINITY
        } else {
            self.0[n] - self.0[k] - self.0[n - k]
        }
    }
}

fn check_binary_args(d_v: usize, d: usize, n: usize) -> Result<()> {
    if n == 0 {
        return Err(SdmError::domain("dimension must be positive"));
    }
    if d_v > n || d > n {
        return Err(SdmError::domain(format!(
            "d_v={d_v} and d={d} must both lie in [0, {n}]"
        )));
    }
    Ok(())
}

/// Number of addresses within Hamming distance `d` of two points that are
/// `d_v` apart, as a [`LogWeight`].
///
/// Split the coordinates into the `n − d_v` where the two points agree and
/// the `d_v` where they differ.  An address that matches both points on `a`
/// of the agreeing coordinates and the first point on `c` of the differing
/// ones is within `d` of both iff `c ∈ [max(0, j), d_v − j]` with
/// `j = n − d − a`, giving
///
/// ```text
/// Σ_{a = n−d−⌊d_v/2⌋}^{n−d_v}  C(n−d_v, a) · Σ_{c = max(0, j)}^{d_v − j} C(d_v, c).
/// ```
///
/// The inner range is symmetric about `d_v/2` and widens by one on each side
/// as `a` grows, so it is accumulated incrementally: the whole evaluation is
/// O(n) rather than O(n²).
pub fn binary_circle_intersection(d_v: usize, d: usize, n: usize) -> Result<LogWeight> {
    check_binary_args(d_v, d, n)?;
    Ok(LogWeight(intersection_with(&LnFactorials::new(n), d_v, d, n)))
}

fn intersection_with(lf: &LnFactorials, d_v: usize, d: usize, n: usize) -> f64 {
    let (n_i, d_i, dv_i) = (n as i64, d as i64, d_v as i64);
    let a_hi = n_i - dv_i;
    let a_lo = (n_i - d_i - dv_i / 2).max(0);
    if a_lo > a_hi {
        return f64::NEG_INFINITY;
    }
    let full_row = dv_i as f64 * std::f64::consts::LN_2;
    let binom_dv = |c: i64| lf.binom(d_v, c as usize);

    let mut j = n_i - d_i - a_lo;
    let mut central = if j <= 0 {
        full_row
    } else {
        let terms: Vec<f64> = (j..=dv_i - j).map(binom_dv).collect();
        log_sum_exp(&terms)
    };
    let mut terms = Vec::with_capacity((a_hi - a_lo + 1) as usize);
    for a in a_lo..=a_hi {
        if a > a_lo {
            j -= 1;
            if 2 * j > dv_i {
                // Range still empty (only reachable when a_lo was clamped at 0).
            } else if 2 * j == dv_i {
                central = binom_dv(j);
            } else if j > 0 {
                central = log_add(central, log_add(binom_dv(j), binom_dv(dv_i - j)));
            } else if j == 0 {
                central = full_row;
            }
        }
        terms.push(lf.binom(n - d_v, a as usize) + central);
    }
    // Largest summands sit at the top of the a-range; accumulate those first.
    terms.reverse();
    log_sum_exp(&terms)
}

/// Evaluates `ln I(d_v)` on demand for a fixed `(n, d)`, for scans that only
/// touch part of the `d_v` range.
#[derive(Clone, Debug)]
pub struct BinaryIntersector {
    pub n: usize,
    pub d: usize,
    lf: LnFactorials,
}

impl BinaryIntersector {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        check_binary_args(0, d, n)?;
        Ok(BinaryIntersector {
            n,
            d,
            lf: LnFactorials::new(n),
        })
    }

    /// `ln I(d_v)`; `d_v` must not exceed `n`.
    pub fn log_count(&self, d_v: usize) -> f64 {
        assert!(d_v <= self.n, "d_v={d_v} exceeds n={}", self.n);
        intersection_with(&self.lf, d_v, self.d, self.n)
    }
}

/// Expected number of uniformly placed neurons (out of `r`) in the
/// intersection: `exp(ln I − n ln 2 + ln r)`.
pub fn expected_neurons(d_v: usize, d: usize, n: usize, r: f64) -> Result<f64> {
    if !(r > 0.0) {
        return Err(SdmError::domain(format!("neuron count r must be positive, got {r}")));
    }
    let li = binary_circle_intersection(d_v, d, n)?;
    Ok((li.0 - n as f64 * std::f64::consts::LN_2 + r.ln()).exp())
}

/// Fraction of `{0,1}ⁿ` within distance `d` of a point: `Σ_{k≤d} C(n,k) / 2ⁿ`.
pub fn space_fraction(d: usize, n: usize) -> Result<f64> {
    Ok((binary_circle_intersection(0, d, n)?.0 - n as f64 * std::f64::consts::LN_2).exp())
}

/// Precomputed `ln I(d_v)` for every `d_v ∈ [0, n]` at a fixed `(n, d)`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BinaryIntersectionTable {
    pub n: usize,
    pub d: usize,
    log_counts: Vec<f64>,
}

impl BinaryIntersectionTable {
    pub fn new(n: usize, d: usize) -> Result<Self> {
        check_binary_args(0, d, n)?;
        let lf = LnFactorials::new(n);
        let log_counts = (0..=n).map(|dv| intersection_with(&lf, dv, d, n)).collect();
        Ok(BinaryIntersectionTable { n, d, log_counts })
    }

    /// `ln I(d_v)` (address count, not a fraction).
    #[inline]
    pub fn log_count(&self, d_v: usize) -> f64 {
        self.log_counts[d_v]
    }

    /// `ln` of the expected neuron count for `r` neurons.
    #[inline]
    pub fn log_expected(&self, d_v: usize, ln_r: f64) -> f64 {
        self.log_counts[d_v] - self.n as f64 * std::f64::consts::LN_2 + ln_r
    }

    pub fn log_counts(&self) -> &[f64] {
        &self.log_counts
    }
}

/// The stages of the exponential approximation to the largest summand.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct LargestTermBreakdown {
    /// `ln[C(n−d_v, n−d−⌊d_v/2⌋) · C(d_v, ⌊d_v/2⌋)]`.
    pub exact_summand: f64,
    /// Both binomials replaced by their Gaussian approximations.
    pub normal_approx: f64,
    /// Gaussian form after setting `⌊d_v/2⌋ ≈ d_v/2`, before linearising in
    /// `d_v`.
    pub pre_taylor: f64,
    /// The final exponential form, see [`largest_term_exponential_approx`].
    pub exponential: f64,
}

/// `ln[(2^{n+2}/(πn)) · exp(−(n−2d)²/(2n)) · exp(−(n−2d)²/(2n²) · d_v)]`.
///
/// A lower bound on the largest summand of the exact intersection which is
/// exactly exponential in `d_v`.
pub fn largest_term_exponential_approx(d_v: usize, d: usize, n: usize) -> Result<LogWeight> {
    check_approx_args(d_v, d, n)?;
    let (n, d, dv) = (n as f64, d as f64, d_v as f64);
    let gap = (n - 2.0 * d).powi(2);
    Ok(LogWeight(
        (n + 2.0) * std::f64::consts::LN_2 - (std::f64::consts::PI * n).ln() - gap / (2.0 * n)
            - gap / (2.0 * n * n) * dv,
    ))
}

fn check_approx_args(d_v: usize, d: usize, n: usize) -> Result<()> {
    check_binary_args(d_v, d, n)?;
    if 2 * d >= n || d_v >= 2 * d {
        return Err(SdmError::domain(format!(
            "exponential approximation requires d < n/2 and d_v < 2d (n={n}, d={d}, d_v={d_v})"
        )));
    }
    Ok(())
}

/// All approximation stages for one `(d_v, d, n)`.
pub fn largest_term_breakdown(d_v: usize, d: usize, n: usize) -> Result<LargestTermBreakdown> {
    check_approx_args(d_v, d, n)?;
    let half = d_v / 2;
    let exact_summand = log_binomial(n - d_v, n - d - half).0 + log_binomial(d_v, half).0;

    let ln_normal = |k: f64, trials: f64| {
        // ln[2^trials · N((k − trials/2)/√(trials/4))] with N the Gaussian
        // density of the standardised variable divided by the standard deviation.
        let sd = (trials / 4.0).sqrt();
        let z = (k - trials / 2.0) / sd;
        trials * std::f64::consts::LN_2 - 0.5 * (2.0 * std::f64::consts::PI).ln() - sd.ln() - 0.5 * z * z
    };
    let (nf, df, dvf) = (n as f64, d as f64, d_v as f64);
    let mut normal_approx = ln_normal(nf - df - half as f64, nf - dvf);
    if d_v > 0 {
        normal_approx += ln_normal(half as f64, dvf);
    }
    let pre_taylor = if d_v > 0 {
        (nf + 1.0) * std::f64::consts::LN_2
            - (std::f64::consts::PI * (dvf * (nf - dvf)).sqrt()).ln()
            - (nf - 2.0 * df).powi(2) / (2.0 * nf) / (1.0 - dvf / nf)
    } else {
        normal_approx
    };
    Ok(LargestTermBreakdown {
        exact_summand,
        normal_approx,
        pre_taylor,
        exponential: largest_term_exponential_approx(d_v, d, n)?.0,
    })
}

/// Largest dimension [`brute_force_intersection`] will enumerate.
pub const BRUTE_FORCE_MAX_N: usize = 22;

/// Counts, by enumerating all `2ⁿ` addresses, those within `d` of both the
/// origin and the point whose first `d_v` bits are set.
pub fn brute_force_intersection(d_v: usize, d: usize, n: usize) -> Result<u64> {
    if n > BRUTE_FORCE_MAX_N {
        return Err(SdmError::Resource(format!(
            "exhaustive enumeration limited to n <= {BRUTE_FORCE_MAX_N}, got {n}"
        )));
    }
    check_binary_args(d_v, d, n)?;
    let other: u64 = if d_v == 0 { 0 } else { (1u64 << d_v) - 1 };
    let d = d as u32;
    Ok((0u64..1u64 << n)
        .filter(|x| x.count_ones() <= d && (x ^ other).count_ones() <= d)
        .count() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;

    fn exact_binomial(n: u64, k: u64) -> BigUint {
        let mut acc = BigUint::from(1u32);
        for i in 0..k {
            acc = acc * BigUint::from(n - i) / BigUint::from(i + 1);
        }
        acc
    }

    fn big_to_f64(b: &BigUint) -> f64 {
        b.to_string().parse().unwrap()
    }

    #[test]
    fn log_binomial_small() {
        assert_eq!(log_binomial(10, 0), LogWeight::ONE);
        assert!(log_binomial(3, 4).is_zero());
        let exact = big_to_f64(&exact_binomial(64, 32));
        let got = log_binomial(64, 32).value();
        assert!(((got - exact) / exact).abs() < 1e-10);
        for n in 0..=64u64 {
            for k in 0..=n {
                let exact = big_to_f64(&exact_binomial(n, k));
                let got = log_binomial(n as usize, k as usize).value();
                assert!(((got - exact) / exact).abs() < 1e-12, "C({n},{k})");
            }
        }
    }

    #[test]
    fn log_binomial_large_against_exact_integer() {
        // ln of an exact big integer: ln(b) = ln(mantissa) + digits·ln(10).
        let b = exact_binomial(1000, 500).to_string();
        let head: f64 = format!("0.{}", &b[..17]).parse().unwrap();
        let oracle = head.ln() + b.len() as f64 * std::f64::consts::LN_10;
        let got = log_binomial(1000, 500).0;
        // Relative error 1e-9 in the value is an absolute error 1e-9 in the log.
        assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");
    }

    #[test]
    fn log_add_is_commutative() {
        let xs = [3.0, -1.0, 700.0, f64::NEG_INFINITY, 699.5];
        for &a in &xs {
            for &b in &xs {
                assert_eq!(log_add(a, b), log_add(b, a));
            }
        }
        assert_eq!(log_add(f64::NEG_INFINITY, f64::NEG_INFINITY), f64::NEG_INFINITY);
        let s = LogWeight(1.0) + LogWeight(2.0) + LogWeight(3.0);
        let t = LogWeight(3.0) + (LogWeight(1.0) + LogWeight(2.0));
        assert!((s.0 - t.0).abs() < 1e-12 * s.0.abs());
    }

    #[test]
    fn full_ball_at_zero_distance() {
        for n in [5usize, 20, 64] {
            for d in 0..=n {
                let ball: f64 = (0..=d).map(|k| log_binomial(n, k).value()).sum();
                let got = binary_circle_intersection(0, d, n).unwrap().value();
                assert!(((got - ball) / ball).abs() < 1e-12, "n={n} d={d}");
            }
        }
    }

    #[test]
    fn canonical_space_fraction() {
        let p = space_fraction(451, 1000).unwrap();
        assert!((p - 1.07e-3).abs() < 0.005e-3, "p={p}");
        let e = expected_neurons(0, 451, 1000, 1e6).unwrap();
        assert!((1070.0..=1072.0).contains(&e), "e={e}");
    }

    #[test]
    fn zero_beyond_twice_radius() {
        for n in [10usize, 64, 1000] {
            for d in [0, 1, 3, n / 4] {
                for dv in (2 * d + 1).min(n + 1)..=n {
                    assert!(binary_circle_intersection(dv, d, n).unwrap().is_zero());
                }
                if 2 * d <= n {
                    assert!(!binary_circle_intersection(2 * d, d, n).unwrap().is_zero());
                }
            }
        }
        assert_eq!(expected_neurons(30, 10, 64, 1e6).unwrap(), 0.0);
    }

    #[test]
    fn matches_enumeration_at_n10() {
        let got = binary_circle_intersection(4, 3, 10).unwrap().value().round() as u64;
        assert_eq!(got, brute_force_intersection(4, 3, 10).unwrap());
    }

    #[test]
    fn matches_enumeration_on_full_grid_n12() {
        let n = 12;
        for d in 0..=n {
            let table = BinaryIntersectionTable::new(n, d).unwrap();
            for dv in 0..=n {
                let exact = brute_force_intersection(dv, d, n).unwrap();
                assert_eq!(table.log_count(dv).exp().round() as u64, exact, "d={d} dv={dv}");
            }
        }
    }

    #[test]
    fn brute_force_examples() {
        assert_eq!(brute_force_intersection(0, 1, 3).unwrap(), 4);
        assert_eq!(brute_force_intersection(3, 1, 3).unwrap(), 0);
        assert!(brute_force_intersection(0, 1, 23).is_err());
    }

    #[test]
    fn monotone_in_distance() {
        for (n, d) in [(64, 11), (100, 35), (1000, 451)] {
            let t = BinaryIntersectionTable::new(n, d).unwrap();
            for dv in 1..=n {
                assert!(t.log_count(dv) <= t.log_count(dv - 1) * (1.0 + 1e-13) + 1e-12, "n={n} d={d} dv={dv} {} {}", t.log_count(dv - 1), t.log_count(dv));
            }
        }
    }

    // The curve is close to, but not exactly, linear in log space: the final
    // point before the support ends drops off sharply, which limits the
    // correlation over the full `[0, 2d−1]` range to about 0.975–0.982.
    #[test]
    fn log_linear_in_distance() {
        for d in [5usize, 11, 15] {
            let t = BinaryIntersectionTable::new(64, d).unwrap();
            let xs: Vec<f64> = (0..2 * d).map(|v| v as f64).collect();
            let ys: Vec<f64> = (0..2 * d).map(|v| t.log_count(v)).collect();
            let mx = xs.iter().sum::<f64>() / xs.len() as f64;
            let my = ys.iter().sum::<f64>() / ys.len() as f64;
            let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
            let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
            let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
            let r = sxy / (sxx * syy).sqrt();
            assert!(r < -0.97, "d={d} r={r}");
        }
    }

    #[test]
    fn exponential_approx_slope_and_bounds() {
        let (n, d) = (64usize, 11usize);
        let slope = -((n as f64 - 2.0 * d as f64).powi(2)) / (2.0 * (n * n) as f64);
        for dv in 0..2 * d - 1 {
            let a = largest_term_exponential_approx(dv, d, n).unwrap().0;
            let b = largest_term_exponential_approx(dv + 1, d, n).unwrap().0;
            assert!((b - a - slope).abs() < 1e-12);
        }
        assert!(largest_term_exponential_approx(22, 11, 64).is_err());
        assert!(largest_term_exponential_approx(0, 32, 64).is_err());
        // Lower bound on the full intersection in the canonical setting.
        let t = BinaryIntersectionTable::new(1000, 447).unwrap();
        for dv in 0..=100 {
            let approx = largest_term_exponential_approx(dv, 447, 1000).unwrap().0;
            assert!(approx <= t.log_count(dv), "dv={dv}");
        }
    }

    #[test]
    fn largest_summand_is_a_summand_and_lower_bound() {
        let (n, d) = (64usize, 11usize);
        let t = BinaryIntersectionTable::new(n, d).unwrap();
        for dv in 0..=6 {
            let b = largest_term_breakdown(dv, d, n).unwrap();
            let half = (dv / 2) as u64;
            let exact = big_to_f64(
                &(exact_binomial((n - dv) as u64, (n - d) as u64 - half) * exact_binomial(dv as u64, half)),
            );
            assert!(((b.exact_summand.exp() - exact) / exact).abs() < 1e-10);
            assert!(b.exact_summand <= t.log_count(dv) + 1e-12);
            // The Gaussian stage overestimates the binomial tail but stays
            // within a factor of e² of the exact summand.
            assert!((b.normal_approx - b.exact_summand).abs() < 2.0, "dv={dv} {b:?}");
        }
    }
}
