//! Intersections of hyperspherical caps.
//!
//! On the unit sphere `S^{n−1}` the analogue of a Hamming ball is a cap of
//! half-angle `θ = arccos(1 − 2d/n)`.  The intersection of two such caps whose
//! centres are `θ_v` apart is split by the hyperplane through their boundary
//! intersection into two pieces, each of which is a "cap segment"
//!
//! ```text
//! J(θ_a, θ_b) = π^{(n−1)/2} / Γ((n−1)/2) · ∫_{θ_a}^{θ_b} sin^{n−2}φ · I_{1 − (tan θ_a / tan φ)²}((n−2)/2, 1/2) dφ
//! ```
//!
//! with `θ_min = arctan(cos θ₁ / (cos θ₂ sin θ_v) − 1/tan θ_v)` locating the
//! hyperplane.  Everything here is computed as a *fraction of the sphere's
//! surface area*, which stays representable for any `n`.

use serde::{Deserialize, Serialize};

use super::special::{integrate, ln_gamma, regularized_incomplete_beta};
use crate::error::{Result, SdmError};

/// Below this inter-centre angle the caps are treated as coincident; the
/// `θ_min` formula is 0/0 there.
const COINCIDENT_ANGLE: f64 = 1e-9;

/// Quadrature tolerance relative to the area of a single cap.
const RELATIVE_TOLERANCE: f64 = 1e-12;

/// Angles describing two equal caps on the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapGeometry {
    pub theta_1: f64,
    pub theta_2: f64,
    pub theta_v: f64,
    pub theta_min: f64,
}

impl CapGeometry {
    pub fn new(cos_v: f64, cos_d: f64) -> Self {
        let theta_1 = cos_d.clamp(-1.0, 1.0).acos();
        let theta_2 = theta_1;
        let theta_v = cos_v.clamp(-1.0, 1.0).acos();
        let theta_min = (theta_1.cos() / (theta_2.cos() * theta_v.sin()) - 1.0 / theta_v.tan()).atan();
        CapGeometry {
            theta_1,
            theta_2,
            theta_v,
            theta_min,
        }
    }

    /// True when the caps do not overlap on the sphere.
    pub fn disjoint(&self) -> bool {
        self.theta_v >= self.theta_1 + self.theta_2
    }
}

/// Total surface area of the unit sphere in `ℝⁿ`: `2π^{n/2} / Γ(n/2)`.
pub fn hypersphere_surface_area(n: usize) -> f64 {
    assert!(n >= 1, "hypersphere dimension must be at least 1");
    let n = n as f64;
    (std::f64::consts::LN_2 + 0.5 * n * std::f64::consts::PI.ln() - ln_gamma(0.5 * n)).exp()
}

/// Fraction of `S^{n−1}` within angle `theta` of a fixed point.
pub fn cap_fraction(theta: f64, n: usize) -> Result<f64> {
    if n < 2 {
        return Err(SdmError::domain("cap area needs n >= 2"));
    }
    let theta = theta.clamp(0.0, std::f64::consts::PI);
    let s2 = theta.sin().powi(2).min(1.0);
    let half = 0.5 * regularized_incomplete_beta(s2, 0.5 * (n as f64 - 1.0), 0.5)?;
    Ok(if theta <= std::f64::consts::FRAC_PI_2 {
        half
    } else {
        1.0 - half
    })
}

/// `ln` of the ratio between the cap-segment prefactor
/// `π^{(n−1)/2}/Γ((n−1)/2)` and the sphere area.
fn ln_segment_prefactor(n: usize) -> f64 {
    let n = n as f64;
    ln_gamma(0.5 * n) - ln_gamma(0.5 * (n - 1.0)) - std::f64::consts::LN_2 - 0.5 * std::f64::consts::PI.ln()
}

fn segment_integral(theta_a: f64, theta_b: f64, n: usize, abs_tol: f64) -> Result<f64> {
    if theta_b <= theta_a {
        return Ok(0.0);
    }
    let shape = 0.5 * (n as f64 - 2.0);
    let tan_a = theta_a.tan();
    let mut failure = None;
    let value = integrate(
        |phi| {
            let ratio = tan_a / phi.tan();
            let x = (1.0 - ratio * ratio).clamp(0.0, 1.0);
            match regularized_incomplete_beta(x, shape, 0.5) {
                Ok(ib) => phi.sin().powi(n as i32 - 2) * ib,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        theta_a,
        theta_b,
        abs_tol,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(value),
    }
}

fn check_cap_args(cos_v: f64, cos_d: f64, n: usize) -> Result<()> {
    if n < 3 {
        return Err(SdmError::domain(format!("cap intersection needs n >= 3, got {n}")));
    }
    if !(cos_d > 0.0 && cos_d < 1.0) {
        return Err(SdmError::domain(format!("cap cosine {cos_d} outside (0, 1)")));
    }
    if !(-1.0..=1.0).contains(&cos_v) {
        return Err(SdmError::domain(format!("cosine {cos_v} outside [-1, 1]")));
    }
    Ok(())
}

/// Area of the intersection of two caps (cosine radius `cos_d`) whose centres
/// have cosine similarity `cos_v`, as a fraction of the sphere's area.
pub fn continuous_cap_fraction(cos_v: f64, cos_d: f64, n: usize) -> Result<f64> {
    check_cap_args(cos_v, cos_d, n)?;
    let g = CapGeometry::new(cos_v, cos_d);
    let single = cap_fraction(g.theta_1, n)?;
    if g.theta_v < COINCIDENT_ANGLE {
        return Ok(single);
    }
    if g.disjoint() {
        return Ok(0.0);
    }
    let ln_k = ln_segment_prefactor(n);
    let abs_tol = RELATIVE_TOLERANCE * single / ln_k.exp();
    let a = segment_integral(g.theta_min, g.theta_2, n, abs_tol)?;
    let b = segment_integral(g.theta_v - g.theta_min, g.theta_1, n, abs_tol)?;
    Ok(((a + b).ln() + ln_k).exp().min(single))
}

/// Absolute intersection area on the unit sphere.
pub fn continuous_cap_intersection(cos_v: f64, cos_d: f64, n: usize) -> Result<f64> {
    Ok(continuous_cap_fraction(cos_v, cos_d, n)? * hypersphere_surface_area(n))
}

/// `ln` of the cap-intersection fraction tabulated on a uniform grid in the
/// inter-centre angle, for fast repeated lookups.
///
/// Values are interpolated linearly in log space; the final grid cell, where
/// the intersection vanishes and the log diverges, is evaluated exactly.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContinuousIntersectionTable {
    pub n: usize,
    pub cos_d: f64,
    theta_max: f64,
    step: f64,
    log_fraction: Vec<f64>,
}

impl ContinuousIntersectionTable {
    pub const DEFAULT_POINTS: usize = 4097;

    pub fn new(cos_d: f64, n: usize, points: usize) -> Result<Self> {
        check_cap_args(1.0, cos_d, n)?;
        if points < 3 {
            return Err(SdmError::domain("intersection table needs at least 3 points"));
        }
        let theta_max = 2.0 * cos_d.acos();
        let step = theta_max / (points - 1) as f64;
        let log_fraction = (0..points)
            .map(|i| {
                let theta = if i + 1 == points { theta_max } else { i as f64 * step };
                continuous_cap_fraction(theta.cos(), cos_d, n).map(f64::ln)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(ContinuousIntersectionTable {
            n,
            cos_d,
            theta_max,
            step,
            log_fraction,
        })
    }

    /// `ln` fraction of the sphere in the intersection at cosine `cos_v`.
    pub fn log_fraction(&self, cos_v: f64) -> f64 {
        let theta = cos_v.clamp(-1.0, 1.0).acos();
        if theta >= self.theta_max {
            return f64::NEG_INFINITY;
        }
        let pos = theta / self.step;
        let i = pos.floor() as usize;
        if i + 2 >= self.log_fraction.len() {
            return continuous_cap_fraction(cos_v.clamp(-1.0, 1.0), self.cos_d, self.n)
                .map(f64::ln)
                .unwrap_or(f64::NEG_INFINITY);
        }
        let t = pos - i as f64;
        self.log_fraction[i] * (1.0 - t) + self.log_fraction[i + 1] * t
    }
}
