//! Domain types and the deterministic inter-event dynamics of the
//! two-class intersection process.
//!
//! The hybrid state is the crossing sequence together with per-vehicle
//! residual service times. Between arrivals only the head of the sequence
//! drains, at unit rate; every other queued vehicle holds its full service
//! time (headway behind its predecessor plus its own crossing time).

use std::collections::VecDeque;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Traffic class (origin-destination pair) of a two-class intersection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum OdClass {
    One,
    Two,
}

impl OdClass {
    pub const ALL: [OdClass; 2] = [OdClass::One, OdClass::Two];

    /// Zero-based index, for array lookups.
    #[inline]
    pub fn index(self) -> usize {
        match self {
            OdClass::One => 0,
            OdClass::Two => 1,
        }
    }

    #[inline]
    pub fn from_index(i: usize) -> OdClass {
        match i {
            0 => OdClass::One,
            1 => OdClass::Two,
            _ => panic!("class index {i} out of range"),
        }
    }

    /// The opposing class.
    #[inline]
    pub fn other(self) -> OdClass {
        match self {
            OdClass::One => OdClass::Two,
            OdClass::Two => OdClass::One,
        }
    }

    /// One-based label used in logs and file formats.
    #[inline]
    pub fn number(self) -> u8 {
        self.index() as u8 + 1
    }
}

impl TryFrom<u8> for OdClass {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, Self::Error> {
        match v {
            1 => Ok(OdClass::One),
            2 => Ok(OdClass::Two),
            _ => Err(format!("class must be 1 or 2, got {v}")),
        }
    }
}

impl From<OdClass> for u8 {
    fn from(k: OdClass) -> u8 {
        k.number()
    }
}

impl fmt::Display for OdClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.number())
    }
}

/// Minimal crossing headways, indexed `[leader][follower]`, in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[[f64; 2]; 2]", into = "[[f64; 2]; 2]")]
pub struct HeadwayMatrix {
    theta: [[f64; 2]; 2],
}

impl HeadwayMatrix {
    /// Validates nonnegativity and strict cross-class dominance
    /// (`theta[i][j] > theta[i][i]` for `j != i`).
    pub fn new(theta: [[f64; 2]; 2]) -> Result<Self> {
        for (i, row) in theta.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::InvalidHeadway(format!(
                        "theta[{}][{}] = {v} must be finite and nonnegative",
                        i + 1,
                        j + 1
                    )));
                }
            }
        }
        for i in 0..2 {
            let j = 1 - i;
            if theta[i][j] <= theta[i][i] {
                return Err(Error::InvalidHeadway(format!(
                    "cross-class headway theta[{}][{}] = {} must exceed same-class headway theta[{}][{}] = {}",
                    i + 1,
                    j + 1,
                    theta[i][j],
                    i + 1,
                    i + 1,
                    theta[i][i]
                )));
            }
        }
        Ok(Self { theta })
    }

    /// Headway between a leader of class `leader` and a follower of class `follower`.
    #[inline]
    pub fn get(&self, leader: OdClass, follower: OdClass) -> f64 {
        self.theta[leader.index()][follower.index()]
    }

    #[inline]
    pub fn same(&self, k: OdClass) -> f64 {
        self.get(k, k)
    }

    pub fn as_array(&self) -> [[f64; 2]; 2] {
        self.theta
    }

    /// Same matrix with every entry multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let mut t = self.theta;
        t.iter_mut().flatten().for_each(|v| *v *= c);
        Self::new(t)
    }
}

impl TryFrom<[[f64; 2]; 2]> for HeadwayMatrix {
    type Error = Error;

    fn try_from(theta: [[f64; 2]; 2]) -> Result<Self> {
        Self::new(theta)
    }
}

impl From<HeadwayMatrix> for [[f64; 2]; 2] {
    fn from(h: HeadwayMatrix) -> Self {
        h.theta
    }
}

/// Distribution of the crossing time `R`, supported on a bounded positive interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case", deny_unknown_fields)]
pub enum CrossingTimeDist {
    Deterministic { r: f64 },
    Uniform { a: f64, b: f64 },
    Discrete { values: Vec<f64>, probs: Vec<f64> },
}

impl CrossingTimeDist {
    pub fn deterministic(r: f64) -> Result<Self> {
        let d = CrossingTimeDist::Deterministic { r };
        d.validate()?;
        Ok(d)
    }

    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        let d = CrossingTimeDist::Uniform { a, b };
        d.validate()?;
        Ok(d)
    }

    pub fn discrete(values: Vec<f64>, probs: Vec<f64>) -> Result<Self> {
        let d = CrossingTimeDist::Discrete { values, probs };
        d.validate()?;
        Ok(d)
    }

    /// Symmetric two-point law `mean ± sqrt(variance)` with equal weights.
    pub fn two_point(mean: f64, variance: f64) -> Result<Self> {
        if variance == 0.0 {
            return Self::deterministic(mean);
        }
        let s = variance.sqrt();
        Self::discrete(vec![mean - s, mean + s], vec![0.5, 0.5])
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidCrossingTime(m));
        match self {
            CrossingTimeDist::Deterministic { r } => {
                if !(r.is_finite() && *r > 0.0) {
                    return bad(format!("deterministic r = {r} must be finite and positive"));
                }
            }
            CrossingTimeDist::Uniform { a, b } => {
                if !(a.is_finite() && b.is_finite() && *a > 0.0 && a <= b) {
                    return bad(format!("uniform bounds must satisfy 0 < a <= b < inf, got a = {a}, b = {b}"));
                }
            }
            CrossingTimeDist::Discrete { values, probs } => {
                if values.is_empty() || values.len() != probs.len() {
                    return bad(format!(
                        "discrete law needs matching nonempty values/probs (got {} and {})",
                        values.len(),
                        probs.len()
                    ));
                }
                if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                    return bad(format!("discrete value {v} must be finite and positive"));
                }
                if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
                    return bad(format!("discrete probability {p} must be nonnegative"));
                }
                let total: f64 = probs.iter().sum();
                if (total - 1.0).abs() > 1e-9 {
                    return bad(format!("discrete probabilities sum to {total}, expected 1"));
                }
            }
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        match self {
            CrossingTimeDist::Deterministic { r } => *r,
            CrossingTimeDist::Uniform { a, b } => 0.5 * (a + b),
            CrossingTimeDist::Discrete { values, probs } => {
                values.iter().zip(probs).map(|(v, p)| v * p).sum()
            }
        }
    }

    pub fn variance(&self) -> f64 {
        match self {
            CrossingTimeDist::Deterministic { .. } => 0.0,
            CrossingTimeDist::Uniform { a, b } => (b - a).powi(2) / 12.0,
            CrossingTimeDist::Discrete { values, probs } => {
                let m = self.mean();
                values.iter().zip(probs).map(|(v, p)| p * (v - m).powi(2)).sum()
            }
        }
    }

    pub fn r_min(&self) -> f64 {
        match self {
            CrossingTimeDist::Deterministic { r } => *r,
            CrossingTimeDist::Uniform { a, .. } => *a,
            CrossingTimeDist::Discrete { values, probs } => values
                .iter()
                .zip(probs)
                .filter(|(_, p)| **p > 0.0)
                .map(|(v, _)| *v)
                .fold(f64::INFINITY, f64::min),
        }
    }

    pub fn r_max(&self) -> f64 {
        match self {
            CrossingTimeDist::Deterministic { r } => *r,
            CrossingTimeDist::Uniform { b, .. } => *b,
            CrossingTimeDist::Discrete { values, probs } => values
                .iter()
                .zip(probs)
                .filter(|(_, p)| **p > 0.0)
                .map(|(v, _)| *v)
                .fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            CrossingTimeDist::Deterministic { r } => *r,
            CrossingTimeDist::Uniform { a, b } => {
                if a == b {
                    *a
                } else {
                    rng.random_range(*a..=*b)
                }
            }
            CrossingTimeDist::Discrete { values, probs } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for (v, p) in values.iter().zip(probs) {
                    acc += p;
                    if u < acc {
                        return *v;
                    }
                }
                // rounding in the cumulative sum; fall back to the last supported value
                values
                    .iter()
                    .zip(probs)
                    .rev()
                    .find(|(_, p)| **p > 0.0)
                    .map(|(v, _)| *v)
                    .unwrap_or(values[values.len() - 1])
            }
        }
    }

    /// Same law with every support point multiplied by `c`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let d = match self {
            CrossingTimeDist::Deterministic { r } => CrossingTimeDist::Deterministic { r: r * c },
            CrossingTimeDist::Uniform { a, b } => CrossingTimeDist::Uniform { a: a * c, b: b * c },
            CrossingTimeDist::Discrete { values, probs } => CrossingTimeDist::Discrete {
                values: values.iter().map(|v| v * c).collect(),
                probs: probs.clone(),
            },
        };
        d.validate()?;
        Ok(d)
    }
}

/// Per-class Poisson arrival rates, in vehicles per second.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 2]", into = "[f64; 2]")]
pub struct DemandProfile {
    lambda: [f64; 2],
}

impl DemandProfile {
    pub fn new(lambda: [f64; 2]) -> Result<Self> {
        if lambda.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::InvalidDemand(format!(
                "arrival rates must be finite and nonnegative, got {lambda:?}"
            )));
        }
        Ok(Self { lambda })
    }

    /// Demand `total * p` along a distribution ray.
    pub fn along(p: [f64; 2], total: f64) -> Result<Self> {
        Self::new([p[0] * total, p[1] * total])
    }

    #[inline]
    pub fn rate(&self, k: OdClass) -> f64 {
        self.lambda[k.index()]
    }

    #[inline]
    pub fn as_array(&self) -> [f64; 2] {
        self.lambda
    }

    /// `‖λ‖₁`
    #[inline]
    pub fn total(&self) -> f64 {
        self.lambda[0] + self.lambda[1]
    }

    /// Distribution of demand `λ / ‖λ‖₁`; `None` for zero demand.
    pub fn distribution(&self) -> Option<[f64; 2]> {
        let t = self.total();
        (t > 0.0).then(|| [self.lambda[0] / t, self.lambda[1] / t])
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new([self.lambda[0] * c, self.lambda[1] * c])
    }
}

impl TryFrom<[f64; 2]> for DemandProfile {
    type Error = Error;

    fn try_from(l: [f64; 2]) -> Result<Self> {
        Self::new(l)
    }
}

impl From<DemandProfile> for [f64; 2] {
    fn from(d: DemandProfile) -> Self {
        d.lambda
    }
}

/// Static intersection parameters: headways, crossing-time law and demand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionSpec {
    pub theta: HeadwayMatrix,
    pub crossing_time: CrossingTimeDist,
    pub demand: DemandProfile,
}

impl IntersectionSpec {
    pub fn new(theta: HeadwayMatrix, crossing_time: CrossingTimeDist, demand: DemandProfile) -> Result<Self> {
        crossing_time.validate()?;
        Ok(Self {
            theta,
            crossing_time,
            demand,
        })
    }

    pub fn with_demand(&self, demand: DemandProfile) -> Self {
        Self {
            demand,
            ..self.clone()
        }
    }
}

/// `(k, n)`: the n-th vehicle of class k.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VehicleId {
    pub class: OdClass,
    pub index: u64,
}

impl VehicleId {
    pub fn new(class: OdClass, index: u64) -> Self {
        Self { class, index }
    }
}

impl fmt::Display for VehicleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.class, self.index)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VehicleRecord {
    pub id: VehicleId,
    /// Arrival epoch at the crossing zone if unimpeded.
    pub virtual_arrival: f64,
    /// Drawn crossing time `R`.
    pub crossing_time: f64,
    /// Headway behind the in-sequence predecessor plus `R`.
    pub service_time: f64,
    pub set_crossing_time: Option<f64>,
}

impl VehicleRecord {
    pub fn new(id: VehicleId, virtual_arrival: f64, crossing_time: f64) -> Self {
        Self {
            id,
            virtual_arrival,
            crossing_time,
            service_time: crossing_time,
            set_crossing_time: None,
        }
    }

    #[inline]
    pub fn class(&self) -> OdClass {
        self.id.class
    }
}

/// Per-class aggregate residual service time `X`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct AggregateState {
    pub x: [f64; 2],
}

impl AggregateState {
    #[inline]
    pub fn get(&self, k: OdClass) -> f64 {
        self.x[k.index()]
    }

    #[inline]
    pub fn norm1(&self) -> f64 {
        self.x[0] + self.x[1]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueuedVehicle {
    pub record: VehicleRecord,
    pub residual: f64,
}

/// A vehicle that has finished crossing.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Departure {
    pub record: VehicleRecord,
    pub time: f64,
}

/// The process state: crossing sequence `G` with residual service times `U`.
#[derive(Debug, Clone, PartialEq)]
pub struct HybridState {
    sequence: VecDeque<QueuedVehicle>,
    clock: f64,
    last_discharged: OdClass,
    /// Running per-class residual totals, kept in step with `sequence`.
    work: [f64; 2],
}

impl Default for HybridState {
    fn default() -> Self {
        Self::new(OdClass::One)
    }
}

impl HybridState {
    /// Empty system at time zero; `last_discharged` seeds the headway of the first arrival.
    pub fn new(last_discharged: OdClass) -> Self {
        Self {
            sequence: VecDeque::new(),
            clock: 0.0,
            last_discharged,
            work: [0.0; 2],
        }
    }

    #[inline]
    pub fn clock(&self) -> f64 {
        self.clock
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.sequence.is_empty()
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.sequence.len()
    }

    pub fn count(&self, k: OdClass) -> usize {
        self.sequence.iter().filter(|q| q.record.class() == k).count()
    }

    pub fn last_discharged(&self) -> OdClass {
        self.last_discharged
    }

    pub fn iter(&self) -> impl Iterator<Item = &QueuedVehicle> {
        self.sequence.iter()
    }

    pub fn get(&self, i: usize) -> Option<&QueuedVehicle> {
        self.sequence.get(i)
    }

    pub fn head(&self) -> Option<&QueuedVehicle> {
        self.sequence.front()
    }

    /// Class of the vehicle at the end of the sequence, or of the last
    /// discharged vehicle when the system is empty.
    pub fn tail_class(&self) -> OdClass {
        self.sequence
            .back()
            .map(|q| q.record.class())
            .unwrap_or(self.last_discharged)
    }

    /// Class of the vehicle immediately ahead of position `i`.
    pub fn predecessor_class(&self, i: usize) -> OdClass {
        if i == 0 {
            self.last_discharged
        } else {
            self.sequence[i - 1].record.class()
        }
    }

    /// Index of the last vehicle of class `k` in the sequence.
    pub fn last_index_of(&self, k: OdClass) -> Option<usize> {
        self.sequence.iter().rposition(|q| q.record.class() == k)
    }

    pub fn aggregate(&self) -> AggregateState {
        AggregateState { x: self.work }
    }

    /// `‖X‖₁`, the total residual work.
    pub fn workload(&self) -> f64 {
        self.work[0] + self.work[1]
    }

    /// [`aggregate`](Self::aggregate) recomputed from the residuals, without the running totals.
    pub fn aggregate_exact(&self) -> AggregateState {
        let mut x = [0.0; 2];
        for q in &self.sequence {
            x[q.record.class().index()] += q.residual;
        }
        AggregateState { x }
    }

    /// Places `record` at position `pos` with service time `θ(pred, k) + R`
    /// and re-derives the service time of the vehicle it now precedes.
    /// Position 0 is only allowed on an empty system: the head is never displaced.
    pub fn insert_with_headways(&mut self, pos: usize, mut record: VehicleRecord, theta: &HeadwayMatrix) {
        assert!(pos <= self.sequence.len(), "insert position out of range");
        assert!(pos > 0 || self.sequence.is_empty(), "the vehicle being served cannot be displaced");
        let pred = self.predecessor_class(pos);
        record.service_time = theta.get(pred, record.class()) + record.crossing_time;
        self.work[record.class().index()] += record.service_time;
        self.sequence.insert(
            pos,
            QueuedVehicle {
                record,
                residual: record.service_time,
            },
        );
        if pos + 1 < self.sequence.len() {
            self.refresh_service(pos + 1, theta);
        }
    }

    /// Places `record` at position `pos` with an explicitly given service time.
    pub fn insert_with_service(&mut self, pos: usize, mut record: VehicleRecord, service_time: f64) {
        assert!(pos <= self.sequence.len(), "insert position out of range");
        assert!(pos > 0 || self.sequence.is_empty(), "the vehicle being served cannot be displaced");
        record.service_time = service_time;
        self.work[record.class().index()] += service_time;
        self.sequence.insert(
            pos,
            QueuedVehicle {
                record,
                residual: service_time,
            },
        );
    }

    /// Re-derives the service time of a queued (non-head) vehicle from its
    /// current predecessor; returns the change in its residual.
    pub fn refresh_service(&mut self, i: usize, theta: &HeadwayMatrix) -> f64 {
        if i == 0 {
            return 0.0;
        }
        let pred = self.sequence[i - 1].record.class();
        let q = &mut self.sequence[i];
        let service = theta.get(pred, q.record.class()) + q.record.crossing_time;
        let delta = service - q.record.service_time;
        q.record.service_time = service;
        q.residual = service;
        self.work[q.record.class().index()] += delta;
        delta
    }

    /// Lets `dt` seconds elapse: the head drains at unit rate and departs when
    /// its residual reaches zero, then the next vehicle becomes head.
    pub fn advance(&mut self, dt: f64) -> Result<Vec<Departure>> {
        let mut out = Vec::new();
        self.advance_into(dt, &mut out)?;
        Ok(out)
    }

    /// As [`advance`](Self::advance), appending departures to `out`.
    pub fn advance_into(&mut self, dt: f64, out: &mut Vec<Departure>) -> Result<()> {
        if dt.is_nan() || dt < 0.0 {
            return Err(Error::NegativeStep(dt));
        }
        let start = self.clock;
        let mut remaining = dt;
        let mut elapsed = 0.0;
        while let Some(head) = self.sequence.front_mut() {
            if head.residual <= remaining {
                elapsed += head.residual;
                remaining -= head.residual;
                let q = self.sequence.pop_front().expect("head exists");
                self.work[q.record.class().index()] -= q.residual;
                self.last_discharged = q.record.class();
                out.push(Departure {
                    record: q.record,
                    time: start + elapsed,
                });
            } else {
                head.residual -= remaining;
                self.work[head.record.class().index()] -= remaining;
                break;
            }
        }
        if self.sequence.is_empty() {
            self.work = [0.0; 2];
        } else {
            // Subtraction round-off must not leave a cleared class slightly negative.
            self.work = self.work.map(|w| w.max(0.0));
        }
        self.clock = start + dt;
        Ok(())
    }
}

/// Free-function form of [`HybridState::aggregate`].
pub fn aggregate(state: &HybridState) -> AggregateState {
    state.aggregate()
}

/// Draws the next arrival: exponential gap with rate `‖λ‖₁`, class `k` with
/// probability `λ_k / ‖λ‖₁`. `None` when total demand is zero.
pub fn sample_interarrival<R: Rng + ?Sized>(rng: &mut R, demand: &DemandProfile) -> Option<(OdClass, f64)> {
    let total = demand.total();
    if total <= 0.0 {
        return None;
    }
    let e: f64 = Exp1.sample(rng);
    let u: f64 = rng.random();
    let class = if u * total < demand.rate(OdClass::One) {
        OdClass::One
    } else {
        OdClass::Two
    };
    Some((class, e / total))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn theta() -> HeadwayMatrix {
        HeadwayMatrix::new([[0.5, 1.0], [1.0, 0.5]]).unwrap()
    }

    fn rec(k: OdClass, n: u64, r: f64) -> VehicleRecord {
        VehicleRecord::new(VehicleId::new(k, n), 0.0, r)
    }

    fn state_with(residuals: &[(OdClass, f64)]) -> HybridState {
        let mut s = HybridState::default();
        for (n, &(k, u)) in residuals.iter().enumerate() {
            let pos = s.len();
            s.insert_with_service(pos, rec(k, n as u64 + 1, 0.1), u);
        }
        s
    }

    #[test]
    fn class_other_is_an_involution() {
        for k in OdClass::ALL {
            assert_eq!(k.other().other(), k);
            assert_ne!(k.other(), k);
        }
        assert_eq!(OdClass::One.other(), OdClass::Two);
    }

    #[test]
    fn headway_matrix_rejects_weak_cross_headway() {
        assert!(HeadwayMatrix::new([[0.5, 0.5], [1.0, 0.5]]).is_err());
        assert!(HeadwayMatrix::new([[0.5, 1.0], [-1.0, 0.5]]).is_err());
        assert!(HeadwayMatrix::new([[0.5, 1.0], [1.0, 0.5]]).is_ok());
    }

    #[test]
    fn crossing_time_moments() {
        let u = CrossingTimeDist::uniform(0.2, 0.8).unwrap();
        assert_relative_eq!(u.mean(), 0.5);
        assert_relative_eq!(u.variance(), 0.36 / 12.0);
        let d = CrossingTimeDist::two_point(0.5, 0.1).unwrap();
        assert_relative_eq!(d.mean(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(d.variance(), 0.1, epsilon = 1e-15);
        assert_relative_eq!(d.r_max(), 0.5 + 0.1f64.sqrt());
        assert!(CrossingTimeDist::uniform(-0.1, 0.5).is_err());
        assert!(CrossingTimeDist::discrete(vec![0.5], vec![0.9]).is_err());
    }

    #[test]
    fn crossing_time_samples_stay_in_support() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = CrossingTimeDist::uniform(0.3, 0.9).unwrap();
        for _ in 0..10_000 {
            let r = u.sample(&mut rng);
            assert!((0.3..=0.9).contains(&r));
        }
    }

    #[test]
    fn aggregate_of_empty_state_is_zero() {
        assert_eq!(aggregate(&HybridState::default()).x, [0.0, 0.0]);
    }

    #[test]
    fn aggregate_single_vehicle() {
        let s = state_with(&[(OdClass::One, 0.7)]);
        assert_eq!(s.aggregate().x, [0.7, 0.0]);
    }

    #[test]
    fn aggregate_sums_per_class() {
        let s = state_with(&[(OdClass::One, 0.3), (OdClass::Two, 1.2), (OdClass::One, 1.0)]);
        let x = s.aggregate().x;
        assert_relative_eq!(x[0], 1.3);
        assert_relative_eq!(x[1], 1.2);
    }

    #[test]
    fn advance_exact_drain_departs_head() {
        let mut s = state_with(&[(OdClass::One, 0.5), (OdClass::Two, 1.0)]);
        let d = s.advance(0.5).unwrap();
        assert_eq!(d.len(), 1);
        assert_relative_eq!(d[0].time, 0.5);
        assert_eq!(s.head().unwrap().record.class(), OdClass::Two);
        assert_eq!(s.last_discharged(), OdClass::One);
    }

    #[test]
    fn advance_idle_system() {
        let mut s = HybridState::default();
        let d = s.advance(3.0).unwrap();
        assert!(d.is_empty());
        assert!(s.is_empty());
        assert_relative_eq!(s.clock(), 3.0);
    }

    #[test]
    fn advance_multiple_departures_in_order() {
        let mut s = state_with(&[(OdClass::One, 0.4), (OdClass::Two, 0.6)]);
        let d = s.advance(1.0).unwrap();
        assert_eq!(d.len(), 2);
        assert_relative_eq!(d[0].time, 0.4);
        assert_relative_eq!(d[1].time, 1.0);
        assert_eq!(d[0].record.class(), OdClass::One);
        assert!(s.is_empty());
    }

    #[test]
    fn advance_rejects_negative_step() {
        let mut s = HybridState::default();
        assert_eq!(s.advance(-1.0), Err(Error::NegativeStep(-1.0)));
    }

    #[test]
    fn insertion_recomputes_follower_headway() {
        let th = theta();
        let mut s = HybridState::default();
        s.insert_with_headways(0, rec(OdClass::One, 1, 0.5), &th);
        s.insert_with_headways(1, rec(OdClass::One, 2, 0.5), &th);
        assert_relative_eq!(s.workload(), 2.0);
        // a class-2 vehicle between the two class-1 vehicles costs two switchovers
        s.insert_with_headways(1, rec(OdClass::Two, 1, 0.5), &th);
        assert_relative_eq!(s.get(1).unwrap().residual, 1.5);
        assert_relative_eq!(s.get(2).unwrap().residual, 1.5);
    }

    #[test]
    fn degenerate_mixture_always_class_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let demand = DemandProfile::new([1.0, 0.0]).unwrap();
        for _ in 0..1000 {
            assert_eq!(sample_interarrival(&mut rng, &demand).unwrap().0, OdClass::One);
        }
    }

    #[test]
    fn zero_demand_has_no_next_arrival() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        assert!(sample_interarrival(&mut rng, &DemandProfile::new([0.0, 0.0]).unwrap()).is_none());
    }

    #[test]
    fn interarrival_law_of_large_numbers() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let demand = DemandProfile::new([0.5, 0.5]).unwrap();
        let n = 100_000;
        let (mut ones, mut sum) = (0usize, 0.0);
        for _ in 0..n {
            let (k, dt) = sample_interarrival(&mut rng, &demand).unwrap();
            ones += (k == OdClass::One) as usize;
            sum += dt;
        }
        assert!((ones as f64 / n as f64 - 0.5).abs() < 0.01);
        assert!((sum / n as f64 - 1.0).abs() < 0.02);
    }

    #[test]
    fn interarrival_stream_is_deterministic() {
        let demand = DemandProfile::new([0.3, 0.7]).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100)
                .map(|_| sample_interarrival(&mut rng, &demand).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(9), draw(9));
    }
}
