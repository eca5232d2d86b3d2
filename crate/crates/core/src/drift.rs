//! Generator of the FIFO Lyapunov function `V₁(x, y) = ½‖x‖₁² + a_y‖x‖₁`.
//!
//! Under FIFO, `y` is the class of the last vehicle in the sequence. Between
//! arrivals `‖x‖₁` drains at unit rate; a class-`k` arrival adds
//! `S = θ_{y,k} + R` and sets `y = k`.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analytics::{bound_w1, coefficient_matrices, fifo_load, ServiceParams};
use crate::error::{Error, Result};
use crate::model::{CrossingTimeDist, DemandProfile, IntersectionSpec, OdClass};
use crate::policy::PolicyKind;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftState {
    pub x: [f64; 2],
    pub y: OdClass,
}

impl DriftState {
    pub fn new(x: [f64; 2], y: OdClass) -> Result<Self> {
        if !x.iter().all(|v| v.is_finite() && *v >= 0.0) {
            return Err(Error::InfeasibleState(format!("workload must be finite and nonnegative, got {x:?}")));
        }
        if x[0] + x[1] > 0.0 && x[y.index()] == 0.0 {
            return Err(Error::InfeasibleState(format!(
                "last queued class {y} has no workload in x={x:?}"
            )));
        }
        Ok(Self { x, y })
    }

    pub fn norm1(&self) -> f64 {
        self.x[0] + self.x[1]
    }
}

/// Constants of the drift inequality `𝔸V₁ ≤ −c₁‖x‖₁ + d₁`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftConstants {
    /// `1 −` FIFO load.
    pub c1: f64,
    /// `‖((Θ+R̄J)∘(½(Θ+R̄J)+A) + ½σ²J)λ‖∞`, the numerator of the FIFO bound.
    pub d1: f64,
    /// `½ Σ_k λ_k E[(θ_kk+R)²]`, the diagonal-only constant.
    pub d1_diagonal: f64,
}

pub fn drift_constants(lambda: &DemandProfile, params: &ServiceParams) -> DriftConstants {
    let c1 = 1.0 - fifo_load(lambda, params);
    let d1 = bound_w1(lambda, params).map(|w| w * c1).unwrap_or(f64::INFINITY);
    let t = params.theta.as_array();
    let l = lambda.as_array();
    let d1_diagonal = 0.5
        * (0..2)
            .map(|k| l[k] * ((t[k][k] + params.r_mean).powi(2) + params.r_var))
            .sum::<f64>();
    DriftConstants { c1, d1, d1_diagonal }
}

fn service_moments(params: &ServiceParams, y: OdClass, k: OdClass) -> (f64, f64) {
    let m = params.theta.get(y, k) + params.r_mean;
    (m, m * m + params.r_var)
}

/// Exact generator value `𝔸V₁(x, y)`.
///
/// For `x ≠ 0`: `(−1 + Σ_k λ_k(θ_{y,k}+R̄) + λ_{−y}(a_{−y}−a_y))‖x‖₁
/// + ½Σ_k λ_k E[S_{y,k}²] + Σ_k λ_k a_k E[S_{y,k}] − a_y`.
/// For `x = 0` there is no drain: `Σ_k λ_k E[½S_{y,k}² + a_k S_{y,k}]`.
pub fn closed_form_drift(state: &DriftState, lambda: &DemandProfile, params: &ServiceParams) -> f64 {
    let a = coefficient_matrices(lambda, params);
    let y = state.y;
    let ay = a.a_coeff(y.index());
    let mut jump = 0.0;
    let mut slope = 0.0;
    for k in OdClass::ALL {
        let lk = lambda.rate(k);
        let ak = a.a_coeff(k.index());
        let (m1, m2) = service_moments(params, y, k);
        jump += lk * (0.5 * m2 + ak * m1);
        slope += lk * (m1 + ak - ay);
    }
    let n = state.norm1();
    if n == 0.0 {
        jump
    } else {
        (slope - 1.0) * n + jump - ay
    }
}

/// The drift expression without the `Σ_k λ_k a_k E[S_{y,k}]` term, i.e.
/// ignoring the change of `a_y` on the arriving work. It agrees with
/// [`closed_form_drift`] whenever `A(λ) = 0`.
pub fn closed_form_drift_reduced(state: &DriftState, lambda: &DemandProfile, params: &ServiceParams) -> f64 {
    let a = coefficient_matrices(lambda, params);
    let y = state.y;
    let ay = a.a_coeff(y.index());
    let mut slope = -1.0;
    let mut constant = -ay;
    for k in OdClass::ALL {
        let lk = lambda.rate(k);
        let (m1, m2) = service_moments(params, y, k);
        slope += lk * m1;
        constant += 0.5 * lk * m2;
    }
    let other = y.other();
    slope += lambda.rate(other) * (a.a_coeff(other.index()) - ay);
    slope * state.norm1() + constant
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloDrift {
    pub mean: f64,
    pub std_err: f64,
    pub samples: usize,
}

/// Monte Carlo estimate of `𝔸V₁(x, y)`: each sample draws the arriving
/// class and crossing time, and contributes `‖λ‖₁ΔV` plus the drain term.
pub fn monte_carlo_drift<R: rand::Rng + ?Sized>(
    state: &DriftState,
    lambda: &DemandProfile,
    params: &ServiceParams,
    dist: &CrossingTimeDist,
    samples: usize,
    rng: &mut R,
) -> MonteCarloDrift {
    let a = coefficient_matrices(lambda, params);
    let total = lambda.total();
    let y = state.y;
    let n = state.norm1();
    let ay = a.a_coeff(y.index());
    let v_before = 0.5 * n * n + ay * n;
    let drain = if n > 0.0 { -(n + ay) } else { 0.0 };
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..samples {
        let value = if total > 0.0 {
            let u: f64 = rng.random();
            let k = if u * total < lambda.rate(OdClass::One) {
                OdClass::One
            } else {
                OdClass::Two
            };
            let s = params.theta.get(y, k) + dist.sample(rng);
            let n_after = n + s;
            let v_after = 0.5 * n_after * n_after + a.a_coeff(k.index()) * n_after;
            total * (v_after - v_before) + drain
        } else {
            drain
        };
        sum += value;
        sum_sq += value * value;
    }
    let m = samples as f64;
    let mean = sum / m;
    let var = if samples > 1 {
        ((sum_sq - m * mean * mean) / (m - 1.0)).max(0.0)
    } else {
        0.0
    };
    MonteCarloDrift {
        mean,
        std_err: (var / m).sqrt(),
        samples,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftProbe {
    pub state: DriftState,
    pub closed_form: f64,
    pub reduced_form: f64,
    pub monte_carlo: MonteCarloDrift,
    pub constants: DriftConstants,
    /// `−c₁‖x‖₁ + d₁`.
    pub bound: f64,
}

impl DriftProbe {
    pub fn within_bound(&self, tol: f64) -> bool {
        self.closed_form <= self.bound + tol
    }

    /// `|MC − closed form|` in units of the Monte Carlo standard error.
    pub fn z_score(&self) -> f64 {
        let diff = self.monte_carlo.mean - self.closed_form;
        if self.monte_carlo.std_err > 0.0 {
            diff.abs() / self.monte_carlo.std_err
        } else if diff.abs() < 1e-9 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

/// Evaluates the FIFO drift at `state` in closed form and by Monte Carlo.
pub fn drift_probe(
    policy: &PolicyKind,
    state: DriftState,
    spec: &IntersectionSpec,
    samples: usize,
    seed: u64,
) -> Result<DriftProbe> {
    if !matches!(policy, PolicyKind::Fifo) {
        return Err(Error::WrongPolicy {
            expected: "FIFO",
            got: policy.name().to_string(),
        });
    }
    let params = ServiceParams::from_dist(spec.theta, &spec.crossing_time)?;
    let lambda = &spec.demand;
    let constants = drift_constants(lambda, &params);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(DriftProbe {
        state,
        closed_form: closed_form_drift(&state, lambda, &params),
        reduced_form: closed_form_drift_reduced(&state, lambda, &params),
        monte_carlo: monte_carlo_drift(&state, lambda, &params, &spec.crossing_time, samples, &mut rng),
        constants,
        bound: -constants.c1 * state.norm1() + constants.d1,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::HeadwayMatrix;
    use approx::assert_relative_eq;

    fn spec(l: [f64; 2]) -> IntersectionSpec {
        IntersectionSpec::new(
            HeadwayMatrix::new([[0.5, 1.0], [1.0, 0.5]]).unwrap(),
            CrossingTimeDist::two_point(0.5, 0.1).unwrap(),
            DemandProfile::new(l).unwrap(),
        )
        .unwrap()
    }

    fn params(s: &IntersectionSpec) -> ServiceParams {
        ServiceParams::from_dist(s.theta, &s.crossing_time).unwrap()
    }

    #[test]
    fn slope_equals_minus_c1_for_both_classes() {
        let s = spec([0.3, 0.1]);
        let p = params(&s);
        let c1 = drift_constants(&s.demand, &p).c1;
        for y in OdClass::ALL {
            let x = if y == OdClass::One { [5.0, 0.0] } else { [0.0, 5.0] };
            let x2 = if y == OdClass::One { [15.0, 0.0] } else { [0.0, 15.0] };
            let d1 = closed_form_drift(&DriftState::new(x, y).unwrap(), &s.demand, &p);
            let d2 = closed_form_drift(&DriftState::new(x2, y).unwrap(), &s.demand, &p);
            assert_relative_eq!((d2 - d1) / 10.0, -c1, epsilon = 1e-12);
        }
    }

    #[test]
    fn forms_agree_when_a_vanishes() {
        let s = spec([0.2, 0.2]);
        let p = params(&s);
        let st = DriftState::new([3.0, 4.0], OdClass::Two).unwrap();
        assert_relative_eq!(
            closed_form_drift(&st, &s.demand, &p),
            closed_form_drift_reduced(&st, &s.demand, &p),
            epsilon = 1e-12
        );
    }

    #[test]
    fn zero_state_drift_is_jump_only() {
        let s = spec([0.2, 0.2]);
        let p = params(&s);
        let st = DriftState::new([0.0, 0.0], OdClass::One).unwrap();
        // ½(0.2·1.1 + 0.2·2.35)
        assert_relative_eq!(closed_form_drift(&st, &s.demand, &p), 0.345, epsilon = 1e-12);
    }

    #[test]
    fn infeasible_state_rejected() {
        assert!(DriftState::new([0.0, 2.0], OdClass::One).is_err());
        assert!(DriftState::new([-1.0, 2.0], OdClass::Two).is_err());
    }

    #[test]
    fn non_fifo_rejected() {
        let st = DriftState::new([1.0, 0.0], OdClass::One).unwrap();
        let err = drift_probe(&PolicyKind::MS, st, &spec([0.2, 0.2]), 10, 1).unwrap_err();
        assert!(matches!(err, Error::WrongPolicy { .. }));
    }

    #[test]
    fn monte_carlo_agrees_with_closed_form() {
        let s = spec([0.3, 0.1]);
        let st = DriftState::new([20.0, 30.0], OdClass::One).unwrap();
        let probe = drift_probe(&PolicyKind::FIFO, st, &s, 200_000, 11).unwrap();
        assert!(probe.z_score() < 4.0, "{probe:?}");
    }
}
