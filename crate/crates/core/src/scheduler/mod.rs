//! Crossing-time windows: sequences become set crossing times.
//!
//! Set times follow `T_set(G_i) = max(earliest_i, T_set(G_{i−1}) + θ(leader, follower) + R̄)`
//! where `earliest_i` is the vehicle's minimal set time (raised when the
//! vehicle cannot physically make an earlier slot). The last vehicle to
//! have crossed anchors the first entry.

pub mod microsim;
pub mod trajectory;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{HeadwayMatrix, OdClass, VehicleId};
use crate::policy::{PolicyKind, TieRule};
pub use trajectory::{minimal_set_time, ApproachSpec};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub vehicle: VehicleId,
    /// Time the vehicle entered the approaching zone.
    pub t_e: f64,
    pub t_ms: f64,
    pub t_set: f64,
    /// Earliest admissible set time; starts at `t_ms`, raised by relaxation.
    pub floor: f64,
}

impl ScheduleEntry {
    pub fn new(vehicle: VehicleId, t_e: f64, approach: &ApproachSpec) -> Self {
        let t_ms = minimal_set_time(t_e, approach);
        Self {
            vehicle,
            t_e,
            t_ms,
            t_set: t_ms,
            floor: t_ms,
        }
    }

    pub fn class(&self) -> OdClass {
        self.vehicle.class
    }
}

/// The crossing sequence of vehicles that have not yet crossed, with set times.
#[derive(Debug, Clone, PartialEq)]
pub struct Schedule {
    entries: Vec<ScheduleEntry>,
    anchor: Option<ScheduleEntry>,
    theta: HeadwayMatrix,
    r_mean: f64,
}

impl Schedule {
    pub fn new(theta: HeadwayMatrix, r_mean: f64) -> Self {
        Self {
            entries: Vec::new(),
            anchor: None,
            theta,
            r_mean,
        }
    }

    pub fn entries(&self) -> &[ScheduleEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn anchor(&self) -> Option<&ScheduleEntry> {
        self.anchor.as_ref()
    }

    pub fn position(&self, vehicle: VehicleId) -> Option<usize> {
        self.entries.iter().position(|e| e.vehicle == vehicle)
    }

    /// `θ(leader, follower) + R̄`.
    pub fn gap(&self, leader: OdClass, follower: OdClass) -> f64 {
        self.theta.get(leader, follower) + self.r_mean
    }

    fn leader_of(&self, i: usize) -> Option<&ScheduleEntry> {
        if i == 0 {
            self.anchor.as_ref()
        } else {
            self.entries.get(i - 1)
        }
    }

    /// Reapplies the set-time recursion from position `i` onward. No set
    /// time falls before `now`.
    pub fn recompute_from(&mut self, i: usize, now: f64) {
        for j in i..self.entries.len() {
            let follower = self.entries[j].class();
            let after_leader = self
                .leader_of(j)
                .map(|l| l.t_set + self.gap(l.class(), follower))
                .unwrap_or(f64::NEG_INFINITY);
            let e = &mut self.entries[j];
            e.t_set = e.floor.max(now).max(after_leader);
        }
    }

    /// Raises the earliest admissible set time of entry `i` and propagates.
    pub fn relax(&mut self, i: usize, floor: f64, now: f64) {
        let e = &mut self.entries[i];
        if floor > e.floor {
            e.floor = floor;
            self.recompute_from(i, now);
        }
    }

    /// Sets entry `i`'s floor, without recomputing.
    pub fn set_floor(&mut self, i: usize, floor: f64) {
        let e = &mut self.entries[i];
        e.floor = floor.max(e.t_ms);
    }

    /// Removes the head after it crossed; it becomes the anchor.
    pub fn pop_head(&mut self) -> Option<ScheduleEntry> {
        if self.entries.is_empty() {
            return None;
        }
        let e = self.entries.remove(0);
        self.anchor = Some(e);
        Some(e)
    }

    /// Removes `vehicle` wherever it is; it becomes the anchor.
    pub fn remove(&mut self, vehicle: VehicleId) -> Option<ScheduleEntry> {
        let i = self.position(vehicle)?;
        let e = self.entries.remove(i);
        self.anchor = Some(e);
        Some(e)
    }

    /// FIFO: the arrival goes to the end.
    pub fn fifo_insert(&mut self, entry: ScheduleEntry, now: f64) -> usize {
        self.entries.push(entry);
        let i = self.entries.len() - 1;
        self.recompute_from(i, now);
        i
    }

    /// MS insertion. With `G_f` the last scheduled vehicle of the arrival's
    /// class: join right behind it when `T_ms ≤ T_set(G_f) + θ_kk + R̄`;
    /// otherwise scan `j = f, f+1, …` and insert before `G_{j+1}` at the
    /// first place where `T_ms ≤ T_set(G_{j+1}) + θ(k, c_{j+1}) + R̄` and
    /// `2(θ(k, c_{j+1}) + R̄) ≤ T_set(G_{j+1}) − T_set(G_j)`; failing that,
    /// append. Nothing is placed before position `frozen`. The recursion
    /// enforces every headway whichever slot is chosen.
    pub fn ms_insert(&mut self, entry: ScheduleEntry, frozen: usize, now: f64) -> usize {
        let k = entry.class();
        let frozen = frozen.min(self.entries.len());
        let Some(f) = self.entries.iter().rposition(|e| e.class() == k) else {
            return self.fifo_insert(entry, now);
        };
        let pos = if entry.t_ms <= self.entries[f].t_set + self.gap(k, k) {
            f + 1
        } else {
            let mut chosen = self.entries.len();
            for j in f..self.entries.len().saturating_sub(1) {
                let (gj, gn) = (&self.entries[j], &self.entries[j + 1]);
                let close_enough = entry.t_ms <= gn.t_set + self.gap(k, gn.class());
                let room = 2.0 * self.gap(k, gn.class()) <= gn.t_set - gj.t_set;
                if close_enough && room {
                    chosen = j + 1;
                    break;
                }
            }
            chosen
        };
        let pos = pos.max(frozen);
        self.entries.insert(pos, entry);
        self.recompute_from(pos, now);
        pos
    }

    /// LQF rebuild of every entry from `frozen` on: vehicles are taken one at
    /// a time from the class with the longer temporal queue
    /// `n_k(θ_kk + R̄)` (class 1 when `X₁ > βX₂`), ties per `tie_rule`.
    /// Order within a class is preserved. `waiting[k]` class-`k` vehicles
    /// held upstream of the zone still count towards queue `k`.
    pub fn lqf_rebuild(&mut self, beta: f64, tie_rule: TieRule, frozen: usize, waiting: [usize; 2], now: f64) {
        let frozen = frozen.min(self.entries.len());
        let tail: Vec<ScheduleEntry> = self.entries.drain(frozen..).collect();
        let mut queues: [std::collections::VecDeque<ScheduleEntry>; 2] = Default::default();
        for e in tail {
            queues[e.class().index()].push_back(e);
        }
        let mut serving = self
            .entries
            .last()
            .or(self.anchor.as_ref())
            .map(|e| e.class())
            .unwrap_or(OdClass::One);
        let unit = [self.gap(OdClass::One, OdClass::One), self.gap(OdClass::Two, OdClass::Two)];
        while !(queues[0].is_empty() && queues[1].is_empty()) {
            let x1 = (queues[0].len() + waiting[0]) as f64 * unit[0];
            let x2 = (queues[1].len() + waiting[1]) as f64 * unit[1];
            let next = if x1 > beta * x2 {
                OdClass::One
            } else if x1 < beta * x2 {
                OdClass::Two
            } else {
                match tie_rule {
                    TieRule::MaintainServingClass => serving,
                    TieRule::PreferClassOne => OdClass::One,
                }
            };
            let next = if queues[next.index()].is_empty() { next.other() } else { next };
            let e = queues[next.index()].pop_front().expect("nonempty queue");
            self.entries.push(e);
            serving = next;
        }
        self.recompute_from(frozen, now);
    }

    /// First consecutive pair (including the anchor) closer than its headway.
    pub fn first_violation(&self, tol: f64) -> Option<usize> {
        (0..self.entries.len()).find(|&i| {
            self.leader_of(i).is_some_and(|l| {
                let e = &self.entries[i];
                e.t_set - l.t_set < self.gap(l.class(), e.class()) - tol
            })
        })
    }
}

/// Policy-specific maintenance of a [`Schedule`].
#[derive(Debug, Clone, PartialEq)]
pub struct Scheduler {
    pub policy: PolicyKind,
    pub schedule: Schedule,
}

impl Scheduler {
    pub fn new(policy: PolicyKind, theta: HeadwayMatrix, r_mean: f64) -> Result<Self> {
        policy.validate()?;
        if !(r_mean.is_finite() && r_mean > 0.0) {
            return Err(Error::InvalidCrossingTime(format!("mean crossing time must be positive, got {r_mean}")));
        }
        Ok(Self {
            policy,
            schedule: Schedule::new(theta, r_mean),
        })
    }

    /// Schedules a newly entered vehicle; returns its position. `waiting`
    /// counts vehicles per class held upstream of the zone.
    pub fn on_arrival(&mut self, entry: ScheduleEntry, frozen: usize, waiting: [usize; 2], now: f64) -> usize {
        match self.policy {
            PolicyKind::Fifo => self.schedule.fifo_insert(entry, now),
            PolicyKind::Ms { .. } => self.schedule.ms_insert(entry, frozen, now),
            PolicyKind::Lqf { beta, tie_rule } => {
                self.schedule.fifo_insert(entry, now);
                self.schedule.lqf_rebuild(beta, tie_rule, frozen, waiting, now);
                self.schedule.position(entry.vehicle).expect("just inserted")
            }
        }
    }

    /// Called after a vehicle left the zone.
    pub fn on_departure(&mut self, frozen: usize, waiting: [usize; 2], now: f64) {
        if let PolicyKind::Lqf { beta, tie_rule } = self.policy {
            self.schedule.lqf_rebuild(beta, tie_rule, frozen, waiting, now);
        }
    }
}

/// Schedules a time-ordered stream of zone entries without kinematics: each
/// vehicle crosses exactly at its set time and leaves the schedule then.
/// Returns entries in crossing order with their final set times.
pub fn schedule_stream(
    policy: PolicyKind,
    arrivals: &[(VehicleId, f64)],
    theta: HeadwayMatrix,
    r_mean: f64,
    approach: &ApproachSpec,
) -> Result<Vec<ScheduleEntry>> {
    let mut sched = Scheduler::new(policy, theta, r_mean)?;
    let mut crossed = Vec::with_capacity(arrivals.len());
    let mut last_t = f64::NEG_INFINITY;
    for &(vehicle, t_e) in arrivals {
        if t_e < last_t {
            return Err(Error::InvalidConfig(format!("arrivals must be time-ordered; {vehicle} at {t_e}")));
        }
        last_t = t_e;
        while sched.schedule.entries().first().is_some_and(|e| e.t_set <= t_e) {
            let e = sched.schedule.pop_head().expect("head exists");
            crossed.push(e);
            sched.on_departure(0, [0, 0], e.t_set);
        }
        sched.on_arrival(ScheduleEntry::new(vehicle, t_e, approach), 0, [0, 0], t_e);
    }
    while let Some(e) = sched.schedule.pop_head() {
        crossed.push(e);
        sched.on_departure(0, [0, 0], e.t_set);
    }
    Ok(crossed)
}

/// First consecutive pair in a crossing-ordered list closer than `θ + R̄`.
pub fn first_headway_violation(
    crossed: &[ScheduleEntry],
    theta: &HeadwayMatrix,
    r_mean: f64,
    tol: f64,
) -> Option<usize> {
    crossed.windows(2).position(|w| {
        let need = theta.get(w[0].class(), w[1].class()) + r_mean;
        w[1].t_set - w[0].t_set < need - tol
    })
}
