//! Closed-form stability predicates, workload bounds and capacities.
//!
//! All functions are pure. Boundary points (left-hand side exactly 1, or a
//! zero determinant) are reported as not stable.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{CrossingTimeDist, DemandProfile, HeadwayMatrix};
use crate::policy::PolicyKind;

/// Headways plus the crossing-time moments the bounds depend on.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ServiceParams {
    pub theta: HeadwayMatrix,
    pub r_mean: f64,
    pub r_var: f64,
    pub r_max: f64,
}

impl ServiceParams {
    pub fn new(theta: HeadwayMatrix, r_mean: f64, r_var: f64, r_max: f64) -> Result<Self> {
        let ok = r_mean.is_finite() && r_mean > 0.0 && r_var.is_finite() && r_var >= 0.0 && r_max >= r_mean;
        if !ok {
            return Err(Error::InvalidCrossingTime(format!(
                "need R̄ > 0, σ² ≥ 0, R_max ≥ R̄; got R̄={r_mean}, σ²={r_var}, R_max={r_max}"
            )));
        }
        Ok(Self {
            theta,
            r_mean,
            r_var,
            r_max,
        })
    }

    pub fn from_dist(theta: HeadwayMatrix, dist: &CrossingTimeDist) -> Result<Self> {
        Self::new(theta, dist.mean(), dist.variance(), dist.r_max())
    }

    /// Scales every time quantity by `c` (variance by `c²`).
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.theta.scaled(c)?, self.r_mean * c, self.r_var * c * c, self.r_max * c)
    }

    /// `Θ + R̄J`: mean service time for each (leader, follower) pair.
    fn service_matrix(&self) -> [[f64; 2]; 2] {
        let t = self.theta.as_array();
        let r = self.r_mean;
        [[t[0][0] + r, t[0][1] + r], [t[1][0] + r, t[1][1] + r]]
    }
}

/// Which form of the lower-right entry of `B(λ)` to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum B22Form {
    /// `(θ₁₂+θ₂₁+R̄+R_max)λ₂`, the class-exchange mirror of `b₁₁`.
    #[default]
    Symmetric,
    /// `(θ₁₂+θ₂₁+R̄+R_max)λ₁`, identical to `b₁₁`.
    Literal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Predicate {
    pub stable: bool,
    /// Left-hand side of the stability inequality minus one.
    pub margin: f64,
}

impl Predicate {
    fn from_lhs(lhs: f64) -> Self {
        Self {
            stable: lhs < 1.0,
            margin: lhs - 1.0,
        }
    }
}

/// Open interval of admissible LQF weights `β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BetaWindow {
    pub lower: f64,
    /// `f64::INFINITY` when `b₂₂ = 0`.
    pub upper: f64,
}

impl BetaWindow {
    pub fn contains(&self, beta: f64) -> bool {
        self.lower < beta && beta < self.upper
    }

    /// A representative interior point: 1 when admissible, otherwise the
    /// geometric midpoint (or twice the lower end for an unbounded window).
    pub fn representative(&self) -> f64 {
        if self.contains(1.0) {
            1.0
        } else if self.upper.is_infinite() {
            2.0 * self.lower.max(f64::MIN_POSITIVE)
        } else if self.lower > 0.0 {
            (self.lower * self.upper).sqrt()
        } else {
            0.5 * self.upper
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LqfPredicate {
    pub stable: bool,
    pub det: f64,
    pub beta_window: Option<BetaWindow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoefficientMatrices {
    pub a: [[f64; 2]; 2],
    pub b: [[f64; 2]; 2],
}

impl CoefficientMatrices {
    pub fn a_coeff(&self, row: usize) -> f64 {
        self.a[row][0]
    }

    pub fn det_b(&self) -> f64 {
        let b = &self.b;
        b[0][0] * b[1][1] - b[0][1] * b[1][0]
    }
}

/// FIFO load `(λᵀΘ/‖λ‖₁ + R̄)λ`.
pub fn fifo_load(lambda: &DemandProfile, params: &ServiceParams) -> f64 {
    let l = lambda.as_array();
    let total = lambda.total();
    if total == 0.0 {
        return 0.0;
    }
    let t = params.theta.as_array();
    let mut quad = 0.0;
    for i in 0..2 {
        for j in 0..2 {
            quad += l[i] * t[i][j] * l[j];
        }
    }
    quad / total + params.r_mean * total
}

/// MS load `Σ_k (θ_kk + R̄)λ_k`.
pub fn ms_load(lambda: &DemandProfile, params: &ServiceParams) -> f64 {
    let l = lambda.as_array();
    let t = params.theta.as_array();
    (t[0][0] + params.r_mean) * l[0] + (t[1][1] + params.r_mean) * l[1]
}

pub fn fifo_predicate(lambda: &DemandProfile, params: &ServiceParams) -> Predicate {
    Predicate::from_lhs(fifo_load(lambda, params))
}

pub fn ms_predicate(lambda: &DemandProfile, params: &ServiceParams) -> Predicate {
    Predicate::from_lhs(ms_load(lambda, params))
}

pub fn coefficient_matrices(lambda: &DemandProfile, params: &ServiceParams) -> CoefficientMatrices {
    coefficient_matrices_with(lambda, params, B22Form::Symmetric)
}

pub fn coefficient_matrices_with(lambda: &DemandProfile, params: &ServiceParams, form: B22Form) -> CoefficientMatrices {
    let [l1, l2] = lambda.as_array();
    let t = params.theta.as_array();
    let total = l1 + l2;
    let a1 = if total > 0.0 {
        (l1 * (t[0][0] - t[1][0]) + l2 * (t[0][1] - t[1][1])) / (2.0 * total)
    } else {
        0.0
    };
    let a2 = -a1;
    let (r, rmax) = (params.r_mean, params.r_max);
    let cross = t[0][1] + t[1][0] + r + rmax;
    let b11 = cross * l1;
    let b12 = (t[0][0] + r) * l1 + (t[1][0] - t[0][0]) * l2 - 1.0;
    let b21 = (t[0][1] - t[1][1]) * l1 + (t[1][1] + r) * l2 - 1.0;
    let b22 = match form {
        B22Form::Symmetric => cross * l2,
        B22Form::Literal => cross * l1,
    };
    CoefficientMatrices {
        a: [[a1, a1], [a2, a2]],
        b: [[b11, b12], [b21, b22]],
    }
}

/// `b₁₁/(−b₂₁) < β < −b₁₂/b₂₂`, or `None` when no positive `β` qualifies.
pub fn beta_window(coeffs: &CoefficientMatrices) -> Option<BetaWindow> {
    let [[b11, b12], [b21, b22]] = coeffs.b;
    if !(b21 < 0.0 && b12 < 0.0) {
        return None;
    }
    let lower = b11 / -b21;
    let upper = if b22 > 0.0 { -b12 / b22 } else { f64::INFINITY };
    (lower < upper).then_some(BetaWindow { lower, upper })
}

pub fn lqf_predicate(lambda: &DemandProfile, params: &ServiceParams) -> LqfPredicate {
    lqf_predicate_with(lambda, params, B22Form::Symmetric)
}

pub fn lqf_predicate_with(lambda: &DemandProfile, params: &ServiceParams, form: B22Form) -> LqfPredicate {
    let coeffs = coefficient_matrices_with(lambda, params, form);
    let det = coeffs.det_b();
    let window = beta_window(&coeffs);
    LqfPredicate {
        stable: det < 0.0 && window.is_some(),
        det,
        beta_window: window,
    }
}

/// Mixture moments of the per-vehicle service `θ_kk + R`, class drawn from `p`.
fn own_class_service_moments(p: [f64; 2], params: &ServiceParams) -> (f64, f64) {
    let t = params.theta.as_array();
    let diag = [t[0][0], t[1][1]];
    let r = params.r_mean;
    let d1 = diag[0] * p[0] + diag[1] * p[1];
    let d2 = diag[0] * diag[0] * p[0] + diag[1] * diag[1] * p[1];
    let mean = d1 + r;
    let second = d2 + 2.0 * d1 * r + r * r + params.r_var;
    (mean, second)
}

/// The lower-bound display evaluated term by term:
/// `diag(Θ)p + R̄ + (diag(Θ∘Θ)p + diag(Θ)R̄p + R̄² + σ²) / (2/‖λ‖ − 2‖λ‖(diag(Θ)p + R̄))`.
///
/// This is a sojourn-type quantity (it tends to `E[θ_kk] + R̄` as demand
/// vanishes) and is not a lower bound on the time-average workload; see
/// [`workload_lower_bound`] for that. `None` when `λ = 0` or the
/// denominator is not positive.
pub fn bound_w0(lambda: &DemandProfile, params: &ServiceParams) -> Option<f64> {
    let p = lambda.distribution()?;
    let total = lambda.total();
    let t = params.theta.as_array();
    let r = params.r_mean;
    let d1 = t[0][0] * p[0] + t[1][1] * p[1];
    let d2 = t[0][0] * t[0][0] * p[0] + t[1][1] * t[1][1] * p[1];
    let denom = 2.0 / total - 2.0 * total * (d1 + r);
    if denom <= 0.0 {
        return None;
    }
    Some(d1 + r + (d2 + d1 * r + r * r + params.r_var) / denom)
}

/// Pollaczek–Khinchin time-average workload `λE[S²]/(2(1−λE[S]))` of a
/// single-server queue whose services are `S = θ_kk + R`.
///
/// Every arrival raises the workload of the intersection by at least its
/// own-class service time under all three policies, so this bounds the
/// time-average of `‖X‖₁` from below for every policy. `None` outside the
/// MS region.
pub fn workload_lower_bound(lambda: &DemandProfile, params: &ServiceParams) -> Option<f64> {
    let Some(p) = lambda.distribution() else {
        return Some(0.0);
    };
    let total = lambda.total();
    let (mean, second) = own_class_service_moments(p, params);
    let rho = total * mean;
    (rho < 1.0).then(|| total * second / (2.0 * (1.0 - rho)))
}

fn mat_vec_inf(m: [[f64; 2]; 2], l: [f64; 2]) -> f64 {
    let v0 = m[0][0] * l[0] + m[0][1] * l[1];
    let v1 = m[1][0] * l[0] + m[1][1] * l[1];
    v0.abs().max(v1.abs())
}

/// FIFO upper bound `W̄1`; `None` outside the FIFO region.
pub fn bound_w1(lambda: &DemandProfile, params: &ServiceParams) -> Option<f64> {
    let load = fifo_load(lambda, params);
    if load >= 1.0 {
        return None;
    }
    let s = params.service_matrix();
    let a = coefficient_matrices(lambda, params).a;
    let half_var = 0.5 * params.r_var;
    let mut m = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            m[i][j] = s[i][j] * (0.5 * s[i][j] + a[i][j]) + half_var;
        }
    }
    Some(mat_vec_inf(m, lambda.as_array()) / (1.0 - load))
}

/// MS upper bound `W̄2`; `None` outside the MS region.
pub fn bound_w2(lambda: &DemandProfile, params: &ServiceParams) -> Option<f64> {
    let load = ms_load(lambda, params);
    if load >= 1.0 {
        return None;
    }
    let s = params.service_matrix();
    let mut m = [[0.0; 2]; 2];
    for i in 0..2 {
        for j in 0..2 {
            m[i][j] = s[i][j] * s[i][j] + params.r_var;
        }
    }
    let [l1, l2] = lambda.as_array();
    let t = params.theta.as_array();
    let switchover = if l1 + l2 > 0.0 {
        l1 * l2 / (l1 + l2) * ((t[1][0] - t[0][0]) + (t[0][1] - t[1][1]))
    } else {
        0.0
    };
    Some(mat_vec_inf(m, lambda.as_array()) / (2.0 - 2.0 * load) + switchover)
}

/// LQF upper bound `W̄3` for weight `β`; `None` unless the LQF predicate
/// holds, `β` lies in the window and the denominator is positive.
pub fn bound_w3(lambda: &DemandProfile, params: &ServiceParams, beta: f64) -> Option<f64> {
    let coeffs = coefficient_matrices(lambda, params);
    let pred = lqf_predicate(lambda, params);
    if !pred.stable || !pred.beta_window.is_some_and(|w| w.contains(beta)) {
        return None;
    }
    let b = coeffs.b;
    let num_max = (0..2)
        .map(|k| b[k][k] * b[k][k] + (b[k][1 - k] + 1.0).powi(2))
        .fold(f64::NEG_INFINITY, f64::max);
    let den_max = (0..2)
        .map(|k| b[k][k] + beta * b[k][1 - k])
        .fold(f64::NEG_INFINITY, f64::max);
    if den_max >= 0.0 {
        return None;
    }
    let scale = ((1.0 + beta * beta) / 2.0).sqrt();
    Some(scale * (num_max + params.r_var * lambda.total()) / -den_max)
}

/// Weights `β` inside the stability window for which the LQF bound's
/// denominator `max_k(b_kk + β b_{k,−k})` is negative, so the bound is finite.
/// Empty ranges give `None`.
pub fn bound_w3_beta_range(lambda: &DemandProfile, params: &ServiceParams) -> Option<BetaWindow> {
    let coeffs = coefficient_matrices(lambda, params);
    let window = lqf_predicate(lambda, params).beta_window?;
    let [[b11, b12], [b21, b22]] = coeffs.b;
    // b12, b21 < 0 inside any window
    let lower = window.lower.max(b11 / -b12).max(b22 / -b21);
    (lower < window.upper).then_some(BetaWindow {
        lower,
        upper: window.upper,
    })
}

/// Stability and bounds for one policy at one demand vector.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyBounds {
    pub stable: bool,
    /// FIFO/MS: load minus one. LQF: `det(B)`.
    pub margin: f64,
    /// Pollaczek–Khinchin workload lower bound.
    pub w0: Option<f64>,
    /// The lower-bound display evaluated literally, for reference.
    pub w0_literal: Option<f64>,
    pub w_upper: Option<f64>,
    pub beta_window: Option<BetaWindow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundsReport {
    pub lambda: [f64; 2],
    pub fifo: PolicyBounds,
    pub ms: PolicyBounds,
    pub lqf: PolicyBounds,
    pub beta: f64,
}

pub fn policy_bounds(lambda: &DemandProfile, params: &ServiceParams, policy: &PolicyKind) -> PolicyBounds {
    let w0_literal = bound_w0(lambda, params);
    match *policy {
        PolicyKind::Fifo => {
            let pred = fifo_predicate(lambda, params);
            PolicyBounds {
                stable: pred.stable,
                margin: pred.margin,
                w0: pred.stable.then(|| workload_lower_bound(lambda, params)).flatten(),
                w0_literal,
                w_upper: bound_w1(lambda, params),
                beta_window: None,
            }
        }
        PolicyKind::Ms { .. } => {
            let pred = ms_predicate(lambda, params);
            PolicyBounds {
                stable: pred.stable,
                margin: pred.margin,
                w0: workload_lower_bound(lambda, params),
                w0_literal,
                w_upper: bound_w2(lambda, params),
                beta_window: None,
            }
        }
        PolicyKind::Lqf { beta, .. } => {
            let pred = lqf_predicate(lambda, params);
            PolicyBounds {
                stable: pred.stable,
                margin: pred.det,
                w0: pred.stable.then(|| workload_lower_bound(lambda, params)).flatten(),
                w0_literal,
                w_upper: bound_w3(lambda, params, beta),
                beta_window: pred.beta_window,
            }
        }
    }
}

pub fn bounds_report(lambda: &DemandProfile, params: &ServiceParams, beta: f64) -> BoundsReport {
    BoundsReport {
        lambda: lambda.as_array(),
        fifo: policy_bounds(lambda, params, &PolicyKind::FIFO),
        ms: policy_bounds(lambda, params, &PolicyKind::MS),
        lqf: policy_bounds(lambda, params, &PolicyKind::lqf(beta)),
        beta,
    }
}

/// Absolute tolerance of the LQF ray bisection.
pub const CAPACITY_TOLERANCE: f64 = 1e-9;
const LQF_SCAN_STEPS: usize = 1000;

fn validate_direction(p: [f64; 2]) -> Result<()> {
    let ok = p.iter().all(|v| v.is_finite() && *v >= 0.0) && ((p[0] + p[1]) - 1.0).abs() < 1e-9;
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidDemand(format!("demand distribution must be a probability vector, got {p:?}")))
    }
}

/// Largest total demand `‖λ‖₁` along direction `p` at which `policy` is stable.
///
/// FIFO and MS invert their linear-in-`‖λ‖` loads. LQF scans `[0, MS capacity]`
/// for the first unstable point and bisects the bracket.
pub fn scalar_capacity(p: [f64; 2], policy: &PolicyKind, params: &ServiceParams) -> Result<f64> {
    validate_direction(p)?;
    let t = params.theta.as_array();
    let r = params.r_mean;
    let ms_cap = 1.0 / (p[0] * (t[0][0] + r) + p[1] * (t[1][1] + r));
    match policy {
        PolicyKind::Fifo => {
            let mut quad = 0.0;
            for i in 0..2 {
                for j in 0..2 {
                    quad += p[i] * t[i][j] * p[j];
                }
            }
            Ok(1.0 / (quad + r))
        }
        PolicyKind::Ms { .. } => Ok(ms_cap),
        PolicyKind::Lqf { .. } => {
            let stable_at = |s: f64| {
                let l = DemandProfile::new([p[0] * s, p[1] * s]).expect("nonnegative ray point");
                lqf_predicate(&l, params).stable
            };
            let step = ms_cap / LQF_SCAN_STEPS as f64;
            let mut lo = 0.0;
            let mut hi = None;
            for i in 1..=LQF_SCAN_STEPS {
                let s = step * i as f64;
                if stable_at(s) {
                    lo = s;
                } else {
                    hi = Some(s);
                    break;
                }
            }
            let Some(mut hi) = hi else {
                return Ok(ms_cap);
            };
            while hi - lo > CAPACITY_TOLERANCE {
                let mid = 0.5 * (lo + hi);
                if stable_at(mid) {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            Ok(0.5 * (lo + hi))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegionPoint {
    pub p: [f64; 2],
    pub capacity: f64,
    pub lambda: [f64; 2],
}

/// Direction `i` of a fan of `n` rays from `(1,0)` to `(0,1)`, uniform in angle.
pub fn ray_direction(i: usize, n: usize) -> [f64; 2] {
    if i + 1 == n {
        return [0.0, 1.0];
    }
    let phi = std::f64::consts::FRAC_PI_2 * i as f64 / (n - 1) as f64;
    let (s, c) = phi.sin_cos();
    let (c, s) = (c.max(0.0), s.max(0.0));
    [c / (c + s), s / (c + s)]
}

/// Stability boundary as a polyline over `resolution` rays.
pub fn capacity_region(policy: &PolicyKind, params: &ServiceParams, resolution: usize) -> Result<Vec<RegionPoint>> {
    if resolution < 2 {
        return Err(Error::InvalidConfig(format!("region resolution must be at least 2, got {resolution}")));
    }
    (0..resolution)
        .map(|i| {
            let p = ray_direction(i, resolution);
            let capacity = scalar_capacity(p, policy, params)?;
            Ok(RegionPoint {
                p,
                capacity,
                lambda: [p[0] * capacity, p[1] * capacity],
            })
        })
        .collect()
}

/// Four origin-destination classes in the order `[WE, WS, NS, NE]`:
/// the first two share the west approach, the last two the north approach.
pub const FOUR_OD_LABELS: [&str; 4] = ["WE", "WS", "NS", "NE"];
const APPROACH_CLASSES: [[usize; 2]; 2] = [[0, 1], [2, 3]];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourOdAggregate {
    /// Per-approach totals `[λ̄_W, λ̄_N]`.
    pub lambda: [f64; 2],
    /// Mixed headways `θ̄`, rows/columns ordered `[W, N]`.
    pub theta: [[f64; 2]; 2],
    /// Within-approach class weights `[[π_WE, π_WS], [π_NS, π_NE]]`.
    pub approach_weights: [[f64; 2]; 2],
}

impl FourOdAggregate {
    /// Mixture weights of block `(κ₁, κ₂)`; they sum to one.
    pub fn block_weights(&self, from: usize, to: usize) -> [[f64; 2]; 2] {
        let (a, b) = (self.approach_weights[from], self.approach_weights[to]);
        [[a[0] * b[0], a[0] * b[1]], [a[1] * b[0], a[1] * b[1]]]
    }

    pub fn demand(&self) -> Result<DemandProfile> {
        DemandProfile::new(self.lambda)
    }

    pub fn headway_matrix(&self) -> Result<HeadwayMatrix> {
        HeadwayMatrix::new(self.theta)
    }
}

/// Reduces a four-class intersection with turning to the two-approach model.
///
/// An approach without traffic mixes its classes with equal weights.
pub fn aggregate_four_od(lambda4: [f64; 4], theta4: [[f64; 4]; 4]) -> Result<FourOdAggregate> {
    if !lambda4.iter().all(|v| v.is_finite() && *v >= 0.0) {
        return Err(Error::InvalidDemand(format!("four-class demand must be finite and nonnegative, got {lambda4:?}")));
    }
    if !theta4.iter().flatten().all(|v| v.is_finite() && *v >= 0.0) {
        return Err(Error::InvalidHeadway("four-class headways must be finite and nonnegative".into()));
    }
    let mut lambda = [0.0; 2];
    let mut weights = [[0.5; 2]; 2];
    for (a, classes) in APPROACH_CLASSES.iter().enumerate() {
        let total = lambda4[classes[0]] + lambda4[classes[1]];
        lambda[a] = total;
        if total > 0.0 {
            weights[a] = [lambda4[classes[0]] / total, lambda4[classes[1]] / total];
        }
    }
    let mut theta = [[0.0; 2]; 2];
    for (from, fc) in APPROACH_CLASSES.iter().enumerate() {
        for (to, tc) in APPROACH_CLASSES.iter().enumerate() {
            let mut acc = 0.0;
            for (i, &k) in fc.iter().enumerate() {
                for (j, &l) in tc.iter().enumerate() {
                    acc += weights[from][i] * weights[to][j] * theta4[k][l];
                }
            }
            theta[from][to] = acc;
        }
    }
    Ok(FourOdAggregate {
        lambda,
        theta,
        approach_weights: weights,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn params_det() -> ServiceParams {
        let theta = HeadwayMatrix::new([[0.5, 1.0], [1.0, 0.5]]).unwrap();
        ServiceParams::new(theta, 0.5, 0.0, 0.5).unwrap()
    }

    fn params_var() -> ServiceParams {
        let theta = HeadwayMatrix::new([[0.5, 1.0], [1.0, 0.5]]).unwrap();
        ServiceParams::new(theta, 0.5, 0.1, 0.5 + 0.1f64.sqrt()).unwrap()
    }

    fn dp(l1: f64, l2: f64) -> DemandProfile {
        DemandProfile::new([l1, l2]).unwrap()
    }

    #[test]
    fn fifo_predicate_examples() {
        let p = params_det();
        let a = fifo_predicate(&dp(0.2, 0.2), &p);
        assert!(a.stable);
        assert_relative_eq!(a.margin, -0.5, epsilon = 1e-12);
        assert!(!fifo_predicate(&dp(0.4, 0.4), &p).stable);
        let tiny = fifo_predicate(&dp(1e-9, 0.0), &p);
        assert!(tiny.stable && tiny.margin < -0.999);
        assert_eq!(fifo_predicate(&dp(0.0, 0.0), &p).margin, -1.0);
    }

    #[test]
    fn ms_predicate_examples() {
        let p = params_det();
        let a = ms_predicate(&dp(0.4, 0.4), &p);
        assert!(a.stable);
        assert_relative_eq!(a.margin, -0.2, epsilon = 1e-12);
        assert!(!ms_predicate(&dp(0.5, 0.5), &p).stable);
    }

    #[test]
    fn w3_beta_range_gives_finite_bounds() {
        let p = params_det();
        let mut undefined_in_window = 0;
        let mut empty = Vec::new();
        for i in 1..20 {
            let p1 = i as f64 / 20.0;
            let Ok(cap) = scalar_capacity([p1, 1.0 - p1], &PolicyKind::lqf(1.0), &p) else {
                continue;
            };
            let l = dp(0.8 * cap * p1, 0.8 * cap * (1.0 - p1));
            let Some(window) = lqf_predicate(&l, &p).beta_window else {
                continue;
            };
            let Some(range) = bound_w3_beta_range(&l, &p) else {
                let b = coefficient_matrices(&l, &p).b;
                assert!(b[1][1] / -b[1][0] >= window.upper);
                empty.push(i);
                continue;
            };
            assert!(range.lower >= window.lower && range.upper == window.upper);
            assert!(bound_w3(&l, &p, range.representative()).is_some());
            let below = 0.5 * (window.lower + range.lower);
            if range.lower > window.lower && window.contains(below) {
                assert!(bound_w3(&l, &p, below).is_none());
                undefined_in_window += 1;
            }
        }
        assert!(undefined_in_window > 0);
        // class 2 dominant: the second row never turns negative inside the window
        assert_eq!(empty, vec![1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn lqf_predicate_hand_values() {
        let p = params_det();
        let c = coefficient_matrices(&dp(0.2, 0.2), &p);
        assert_relative_eq!(c.b[0][0], 0.6, epsilon = 1e-12);
        assert_relative_eq!(c.b[1][1], 0.6, epsilon = 1e-12);
        assert_relative_eq!(c.b[0][1], -0.7, epsilon = 1e-12);
        assert_relative_eq!(c.b[1][0], -0.7, epsilon = 1e-12);
        let pred = lqf_predicate(&dp(0.2, 0.2), &p);
        assert_relative_eq!(pred.det, -0.13, epsilon = 1e-12);
        let w = pred.beta_window.unwrap();
        assert_relative_eq!(w.lower, 6.0 / 7.0, epsilon = 1e-12);
        assert_relative_eq!(w.upper, 7.0 / 6.0, epsilon = 1e-12);
        assert!(pred.stable && w.contains(1.0));
        assert!(!lqf_predicate(&dp(0.23, 0.23), &p).stable);
        let tiny = lqf_predicate(&dp(1e-9, 1e-9), &p);
        assert!(tiny.stable);
        assert_relative_eq!(tiny.det, -1.0, epsilon = 1e-6);
    }

    #[test]
    fn literal_b22_is_a_copy_of_b11() {
        let p = params_det();
        let c = coefficient_matrices_with(&dp(0.1, 0.3), &p, B22Form::Literal);
        assert_eq!(c.b[1][1], c.b[0][0]);
        let s = coefficient_matrices(&dp(0.1, 0.3), &p);
        assert_relative_eq!(s.b[1][1], 3.0 * 0.3, epsilon = 1e-12);
    }

    #[test]
    fn a_rows_constant_and_antisymmetric() {
        let p = params_det();
        let c = coefficient_matrices(&dp(0.25, 0.25), &p);
        assert_eq!(c.a[0][0], c.a[0][1]);
        assert_eq!(c.a[1][0], c.a[1][1]);
        assert_relative_eq!(c.a[0][0] + c.a[1][0], 0.0);
    }

    #[test]
    fn w0_literal_spot_value() {
        let w0 = bound_w0(&dp(0.2, 0.2), &params_var()).unwrap();
        assert_relative_eq!(w0, 1.0 + 0.85 / 4.2, epsilon = 1e-12);
    }

    #[test]
    fn w0_literal_single_class_deterministic() {
        // θ₁₁ = R = 0.5, λ = 0.5: 1 + (0.25 + 0.25 + 0.25)/(4 − 1)
        let w0 = bound_w0(&dp(0.5, 0.0), &params_det()).unwrap();
        assert_relative_eq!(w0, 1.25, epsilon = 1e-12);
        // neither the M/D/1 workload (0.5) nor the M/D/1 sojourn time (1.5)
        assert!((w0 - 0.5).abs() > 0.1 && (w0 - 1.5).abs() > 0.1);
    }

    #[test]
    fn workload_lower_bound_matches_md1() {
        let w = workload_lower_bound(&dp(0.5, 0.0), &params_det()).unwrap();
        assert_relative_eq!(w, 0.5, epsilon = 1e-12);
        assert_eq!(workload_lower_bound(&dp(0.0, 0.0), &params_det()), Some(0.0));
        assert_eq!(workload_lower_bound(&dp(0.5, 0.5), &params_det()), None);
    }

    #[test]
    fn upper_bound_spot_values() {
        let p = params_var();
        let l = dp(0.2, 0.2);
        assert_relative_eq!(bound_w1(&l, &p).unwrap(), 0.69, epsilon = 1e-12);
        assert_relative_eq!(bound_w2(&l, &p).unwrap(), 0.675, epsilon = 1e-12);
        let pd = ServiceParams { r_max: 0.5, ..p };
        assert_relative_eq!(bound_w3(&l, &pd, 1.0).unwrap(), 4.9, epsilon = 1e-12);
        assert!(bound_w3(&l, &pd, 2.0).is_none());
    }

    #[test]
    fn w2_switchover_term_symmetric_specialization() {
        let p = params_var();
        let l = dp(0.3, 0.3);
        let t = p.theta.as_array();
        let w2 = bound_w2(&l, &p).unwrap();
        let term = l.total() / 4.0 * 2.0 * (t[0][1] - t[0][0]);
        let s = p.service_matrix();
        let row: f64 = (0..2).map(|j| (s[0][j] * s[0][j] + p.r_var) * 0.3).sum();
        assert_relative_eq!(w2 - row / (2.0 - 2.0 * ms_load(&l, &p)), term, epsilon = 1e-12);
    }

    #[test]
    fn bounds_undefined_outside_regions() {
        let p = params_var();
        assert!(bound_w1(&dp(0.4, 0.4), &p).is_none());
        assert!(bound_w2(&dp(0.5, 0.5), &p).is_none());
        assert!(bound_w0(&dp(0.0, 0.0), &p).is_none());
    }

    #[test]
    fn scalar_capacities() {
        let p = params_det();
        let half = [0.5, 0.5];
        assert_relative_eq!(scalar_capacity(half, &PolicyKind::FIFO, &p).unwrap(), 0.8, epsilon = 1e-12);
        assert_relative_eq!(scalar_capacity(half, &PolicyKind::MS, &p).unwrap(), 1.0, epsilon = 1e-12);
        let lqf = scalar_capacity(half, &PolicyKind::lqf(1.0), &p).unwrap();
        assert!((lqf - 4.0 / 9.0).abs() < 1e-6, "{lqf}");
        let one = [1.0, 0.0];
        assert_relative_eq!(scalar_capacity(one, &PolicyKind::FIFO, &p).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(scalar_capacity(one, &PolicyKind::MS, &p).unwrap(), 1.0, epsilon = 1e-12);
        assert!(scalar_capacity([0.7, 0.7], &PolicyKind::MS, &p).is_err());
    }

    #[test]
    fn region_rejects_low_resolution() {
        assert!(capacity_region(&PolicyKind::MS, &params_det(), 1).is_err());
        let r = capacity_region(&PolicyKind::MS, &params_det(), 2).unwrap();
        assert_eq!(r[0].p, [1.0, 0.0]);
        assert_relative_eq!(r[1].p[1], 1.0, epsilon = 1e-12);
    }

    fn example_theta4() -> [[f64; 4]; 4] {
        [
            [0.5, 0.5, 1.0, 1.0],
            [0.75, 0.75, 1.25, 1.25],
            [1.0, 1.0, 0.5, 0.5],
            [1.25, 1.25, 0.75, 0.75],
        ]
    }

    #[test]
    fn four_od_uniform() {
        let agg = aggregate_four_od([0.1; 4], example_theta4()).unwrap();
        assert_relative_eq!(agg.theta[0][0], 0.625, epsilon = 1e-12);
        assert_relative_eq!(agg.theta[0][1], 1.125, epsilon = 1e-12);
        assert_relative_eq!(agg.lambda[0], 0.2, epsilon = 1e-12);
        for a in 0..2 {
            for b in 0..2 {
                let s: f64 = agg.block_weights(a, b).iter().flatten().sum();
                assert_relative_eq!(s, 1.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn four_od_degenerate_mixture() {
        let agg = aggregate_four_od([0.2, 0.0, 0.1, 0.1], example_theta4()).unwrap();
        assert_relative_eq!(agg.theta[0][0], 0.5, epsilon = 1e-12);
        let empty = aggregate_four_od([0.0, 0.0, 0.1, 0.1], example_theta4()).unwrap();
        assert_eq!(empty.approach_weights[0], [0.5, 0.5]);
        assert!(aggregate_four_od([-0.1, 0.0, 0.0, 0.0], example_theta4()).is_err());
    }
}
