//! Sequencing policies as arrival-handling rules over [`HybridState`].
//!
//! Each policy decides where in the crossing sequence a new arrival goes;
//! service times then follow from the actual in-sequence predecessor, so the
//! departure log always respects the headway matrix. The one exception is
//! [`MsMode::AggregateService`], which reproduces the aggregate min-switchover
//! update literally (switchover cost is charged only when the arrival finds
//! an empty system).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AggregateState, HeadwayMatrix, HybridState, OdClass, VehicleId, VehicleRecord};

/// Resolution of a tie `X₁ = βX₂` when ordering queues.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TieRule {
    /// Keep discharging the class currently being served.
    #[default]
    MaintainServingClass,
    /// Class 1 counts as the longer queue.
    PreferClassOne,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MsMode {
    /// Switchover headways are charged where they physically occur.
    #[default]
    SequenceExact,
    /// Service `θ_kk + R` whenever the system is nonempty, `θ_{-k,k} + R` otherwise.
    AggregateService,
}

/// Policy selection, as it appears in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum PolicyKind {
    Fifo,
    Ms {
        #[serde(default)]
        mode: MsMode,
    },
    Lqf {
        beta: f64,
        #[serde(default)]
        tie_rule: TieRule,
    },
}

impl PolicyKind {
    pub const FIFO: PolicyKind = PolicyKind::Fifo;
    pub const MS: PolicyKind = PolicyKind::Ms {
        mode: MsMode::SequenceExact,
    };

    pub fn lqf(beta: f64) -> PolicyKind {
        PolicyKind::Lqf {
            beta,
            tie_rule: TieRule::MaintainServingClass,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            PolicyKind::Fifo => "FIFO",
            PolicyKind::Ms { .. } => "MS",
            PolicyKind::Lqf { .. } => "LQF",
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let PolicyKind::Lqf { beta, .. } = self {
            if !(beta.is_finite() && *beta > 0.0) {
                return Err(Error::InvalidConfig(format!("LQF beta must be positive, got {beta}")));
            }
        }
        Ok(())
    }
}

/// FIFO auxiliary state: class at the end of the sequence (or last discharged).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FifoState {
    pub y: OdClass,
}

/// MS auxiliary state: class being (or last) discharged.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MsState {
    pub z: OdClass,
    pub mode: MsMode,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LqfState {
    pub beta: f64,
    pub tie_rule: TieRule,
}

impl LqfState {
    /// `Q`: the class whose weighted temporal queue is longer, `None` on a tie.
    /// Class 1 is longer when `X₁ > βX₂`, class 2 when `X₁ < βX₂`.
    pub fn longer_queue(&self, x: AggregateState) -> Option<OdClass> {
        let lhs = x.x[0];
        let rhs = self.beta * x.x[1];
        if lhs > rhs {
            Some(OdClass::One)
        } else if lhs < rhs {
            Some(OdClass::Two)
        } else {
            None
        }
    }
}

pub fn fifo_arrival(state: &mut HybridState, aux: &mut FifoState, record: VehicleRecord, theta: &HeadwayMatrix) {
    let pos = state.len();
    state.insert_with_headways(pos, record, theta);
    aux.y = record.class();
}

/// Exhaustive service: the arrival joins right behind the last vehicle of
/// its own class, or at the tail when its class is not in the sequence.
pub fn ms_arrival(state: &mut HybridState, aux: &mut MsState, record: VehicleRecord, theta: &HeadwayMatrix) {
    let k = record.class();
    let pos = state.last_index_of(k).map(|i| i + 1).unwrap_or(state.len());
    match aux.mode {
        MsMode::SequenceExact => state.insert_with_headways(pos, record, theta),
        MsMode::AggregateService => {
            let service = if state.workload() > 0.0 {
                theta.same(k) + record.crossing_time
            } else {
                theta.get(k.other(), k) + record.crossing_time
            };
            state.insert_with_service(pos, record, service);
        }
    }
    aux.z = state.head().map(|q| q.record.class()).unwrap_or(state.last_discharged());
}

/// Position at which an arrival of the shorter class is slotted under LQF:
/// after the first opposing vehicle that follows the last vehicle of its
/// own class, so it sits between two opposing vehicles. `None` means the
/// sequence offers no such slot and the arrival goes to the tail.
pub fn lqf_insertion_slot(state: &HybridState, k: OdClass) -> Option<usize> {
    let start = state.last_index_of(k).map(|i| i + 1).unwrap_or(0);
    (start..state.len())
        .find(|&i| state.get(i).map(|q| q.record.class()) == Some(k.other()))
        .map(|anchor| anchor + 1)
}

/// Longer-queue-first arrival. An arrival of the longer (or tied) class goes
/// to the tail; an arrival of the shorter class is slotted ahead of an
/// opposing vehicle (see [`lqf_insertion_slot`]). The head never moves.
pub fn lqf_arrival(state: &mut HybridState, aux: &LqfState, record: VehicleRecord, theta: &HeadwayMatrix) {
    let k = record.class();
    let q = aux.longer_queue(state.aggregate());
    let pos = match q {
        Some(longer) if longer == k.other() => lqf_insertion_slot(state, k).unwrap_or(state.len()),
        _ => state.len(),
    };
    state.insert_with_headways(pos, record, theta);
}

/// Number of consecutive departure pairs whose classes differ.
pub fn switchover_count<I: IntoIterator<Item = OdClass>>(departures: I) -> usize {
    let mut it = departures.into_iter();
    let Some(mut prev) = it.next() else {
        return 0;
    };
    let mut n = 0;
    for k in it {
        if k != prev {
            n += 1;
        }
        prev = k;
    }
    n
}

/// Runtime policy state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PolicyState {
    Fifo(FifoState),
    Ms(MsState),
    Lqf(LqfState),
}

impl PolicyState {
    pub fn new(kind: &PolicyKind, initial: OdClass) -> Self {
        match *kind {
            PolicyKind::Fifo => PolicyState::Fifo(FifoState { y: initial }),
            PolicyKind::Ms { mode } => PolicyState::Ms(MsState { z: initial, mode }),
            PolicyKind::Lqf { beta, tie_rule } => PolicyState::Lqf(LqfState { beta, tie_rule }),
        }
    }

    pub fn on_arrival(&mut self, state: &mut HybridState, record: VehicleRecord, theta: &HeadwayMatrix) {
        match self {
            PolicyState::Fifo(aux) => fifo_arrival(state, aux, record, theta),
            PolicyState::Ms(aux) => ms_arrival(state, aux, record, theta),
            PolicyState::Lqf(aux) => lqf_arrival(state, aux, record, theta),
        }
    }

    /// Refreshes discrete state after the head has moved on.
    pub fn after_departures(&mut self, state: &HybridState) {
        if let PolicyState::Ms(aux) = self {
            aux.z = state.head().map(|q| q.record.class()).unwrap_or(state.last_discharged());
        }
    }
}

/// Sequences a batch of vehicles that are all present at time zero (arriving
/// in the given order, no time elapsing between them) and returns the final
/// crossing sequence.
pub fn batch_sequence(
    kind: &PolicyKind,
    arrivals: &[(OdClass, f64)],
    theta: &HeadwayMatrix,
    initial: OdClass,
) -> Vec<VehicleRecord> {
    let mut state = HybridState::new(initial);
    let mut policy = PolicyState::new(kind, initial);
    let mut counters = [0u64; 2];
    for &(k, r) in arrivals {
        counters[k.index()] += 1;
        let rec = VehicleRecord::new(VehicleId::new(k, counters[k.index()]), 0.0, r);
        policy.on_arrival(&mut state, rec, theta);
    }
    state.iter().map(|q| q.record).collect()
}

/// Total discharge time of a batch: the sum of service times in sequence order.
pub fn makespan(sequence: &[VehicleRecord]) -> f64 {
    sequence.iter().map(|r| r.service_time).sum()
}
