//! Step-based kinematic micro-simulation of the approaching zone.
//!
//! One lane per class. Vehicles appear by a Bernoulli draw per step, enter
//! at `v_max` once the lane entrance is safe, follow the set-time trajectory
//! rule and leave when they reach the crossing zone. A follower brakes
//! whenever its next state would break the safe-distance invariant
//! `gap ≥ s + max(0, v_f² − v_l²) / (2|a₋|)`.

use std::collections::{HashMap, VecDeque};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::trajectory::{advance_kinematics, min_time_to_go, time_to_reach, tracking_command, ApproachSpec};
use super::{ScheduleEntry, Scheduler};
use crate::error::{Error, Result};
use crate::model::{DemandProfile, IntersectionSpec, OdClass, VehicleId};
use crate::policy::PolicyKind;
use crate::sim::replication_seed;

const ARRIVAL_STREAM: u64 = 1;
const CROSSING_STREAM: u64 = 2;
const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroSimConfig {
    pub spec: IntersectionSpec,
    pub policy: PolicyKind,
    pub approach: ApproachSpec,
    /// Vehicles are generated on `[0, horizon)`; the run continues until all have crossed.
    pub horizon: f64,
    pub seed: u64,
    pub record_trajectories: bool,
}

impl MicroSimConfig {
    pub fn new(spec: IntersectionSpec, policy: PolicyKind, approach: ApproachSpec, horizon: f64, seed: u64) -> Self {
        Self {
            spec,
            policy,
            approach,
            horizon,
            seed,
            record_trajectories: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.approach.validate()?;
        self.policy.validate()?;
        self.spec.crossing_time.validate()?;
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidConfig(format!("horizon must be positive, got {}", self.horizon)));
        }
        for k in OdClass::ALL {
            let p = self.spec.demand.rate(k) * self.approach.dt;
            if p > 1.0 {
                return Err(Error::InvalidConfig(format!(
                    "per-step arrival probability λ{k}·dt = {p} exceeds 1"
                )));
            }
        }
        Ok(())
    }

    /// Crossing time used in the set-time recursion: `R̄` for a deterministic
    /// crossing time, otherwise `R_max`, so every drawn `R` fits its slot.
    pub fn schedule_crossing_time(&self) -> f64 {
        let d = &self.spec.crossing_time;
        if d.r_max() - d.r_min() <= EPS {
            d.mean()
        } else {
            d.r_max()
        }
    }
}

/// A vehicle appearing upstream of the approaching zone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Arrival {
    pub class: OdClass,
    pub time: f64,
    /// Drawn crossing time `R`.
    pub crossing_time: f64,
}

/// Bernoulli arrivals on the step grid of `[0, horizon)`, with probability
/// `λ_k·dt` per class and step, and crossing times drawn from `spec`.
pub fn bernoulli_arrivals(spec: &IntersectionSpec, dt: f64, horizon: f64, seed: u64) -> Vec<Arrival> {
    let mut arrival_rng = ChaCha8Rng::seed_from_u64(seed);
    arrival_rng.set_stream(ARRIVAL_STREAM);
    let mut crossing_rng = ChaCha8Rng::seed_from_u64(seed);
    crossing_rng.set_stream(CROSSING_STREAM);
    let p = spec.demand.as_array().map(|l| (l * dt).min(1.0));
    let mut out = Vec::new();
    let mut n = 0u64;
    loop {
        let time = n as f64 * dt;
        if time >= horizon {
            break;
        }
        for k in OdClass::ALL {
            if arrival_rng.random::<f64>() < p[k.index()] {
                out.push(Arrival {
                    class: k,
                    time,
                    crossing_time: spec.crossing_time.sample(&mut crossing_rng),
                });
            }
        }
        n += 1;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayRecord {
    pub vehicle: VehicleId,
    pub generation_time: f64,
    pub entry_time: f64,
    pub crossing_time: f64,
    /// Set crossing time when the vehicle crossed.
    pub t_set: f64,
    /// `crossing − generation − L/v_max`.
    pub delay: f64,
}

impl DelayRecord {
    pub fn class(&self) -> OdClass {
        self.vehicle.class
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub vehicle: VehicleId,
    pub position: f64,
    pub speed: f64,
    /// Command applied over `[t, t + dt)`.
    pub accel: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroSimResult {
    pub seed: u64,
    /// In crossing order.
    pub delays: Vec<DelayRecord>,
    pub trajectories: Vec<TrajectoryPoint>,
    pub mean_delay: f64,
    /// Largest `|crossing − t_set|`.
    pub max_tracking_error: f64,
    /// Set times pushed back because the slot had become unreachable.
    pub relaxations: u64,
    /// Steps where car following overrode the trajectory rule.
    pub following_overrides: u64,
    /// Crossings by a vehicle that was not first in the schedule.
    pub order_violations: u64,
    /// Consecutive set times closer than `θ + R`.
    pub headway_violations: u64,
    /// Smallest `crossing gap − θ(leader, follower) − R_leader` over consecutive crossings.
    pub min_occupancy_slack: f64,
    pub switchovers: u64,
    /// Vehicles still upstream or in the zone when the run stopped.
    pub undrained: usize,
}

#[derive(Debug, Clone, Copy)]
struct Vehicle {
    x: f64,
    v: f64,
    generation: f64,
    entry: f64,
    r: f64,
}

/// Runs one replication on Bernoulli arrivals drawn from `config.seed`.
pub fn run_micro_sim(config: &MicroSimConfig) -> Result<MicroSimResult> {
    config.validate()?;
    let arrivals = bernoulli_arrivals(&config.spec, config.approach.dt, config.horizon, config.seed);
    run_micro_sim_with_arrivals(config, &arrivals)
}

/// Runs one replication on the given time-ordered arrivals.
pub fn run_micro_sim_with_arrivals(config: &MicroSimConfig, arrivals: &[Arrival]) -> Result<MicroSimResult> {
    config.validate()?;
    if arrivals.windows(2).any(|w| w[1].time < w[0].time) {
        return Err(Error::InvalidConfig("arrivals must be time-ordered".into()));
    }
    let ap = config.approach;
    let theta = config.spec.theta;
    let r_sched = config.schedule_crossing_time();
    let mut sched = Scheduler::new(config.policy, theta, r_sched)?;
    let brake = -ap.a_minus;
    let last_arrival = arrivals.last().map_or(0.0, |a| a.time);
    let max_time = config.horizon.max(last_arrival) + 3600.0_f64.max(config.horizon);

    let mut vehicles: HashMap<VehicleId, Vehicle> = HashMap::new();
    let mut lanes: [VecDeque<VehicleId>; 2] = Default::default();
    let mut buffers: [VecDeque<(VehicleId, f64, f64)>; 2] = Default::default();
    let mut counters = [0u64; 2];
    let mut next_arrival = 0usize;

    let mut delays = Vec::with_capacity(arrivals.len());
    let mut trajectories = Vec::new();
    let mut relaxations = 0u64;
    let mut overrides = 0u64;
    let mut order_violations = 0u64;
    let mut headway_violations = 0u64;
    let mut max_err: f64 = 0.0;
    let mut min_slack = f64::INFINITY;
    let mut switchovers = 0u64;
    let mut last_crossed: Option<(ScheduleEntry, f64, f64)> = None;

    let committed = |veh: &Vehicle| ap.length - veh.x <= veh.v * veh.v / (2.0 * brake) + veh.v * ap.dt + EPS;
    let frozen_count = |sched: &Scheduler, vehicles: &HashMap<VehicleId, Vehicle>| {
        sched
            .schedule
            .entries()
            .iter()
            .rposition(|e| committed(&vehicles[&e.vehicle]))
            .map_or(0, |i| i + 1)
    };

    let mut step = 0u64;
    loop {
        let now = step as f64 * ap.dt;
        while next_arrival < arrivals.len() && arrivals[next_arrival].time <= now + EPS {
            let a = arrivals[next_arrival];
            counters[a.class.index()] += 1;
            let id = VehicleId::new(a.class, counters[a.class.index()]);
            buffers[a.class.index()].push_back((id, a.time, a.crossing_time));
            next_arrival += 1;
        }
        let idle = next_arrival == arrivals.len() && vehicles.is_empty() && buffers.iter().all(|b| b.is_empty());
        if idle || now > max_time {
            break;
        }

        // slots that can no longer be reached move back
        let mut raised = false;
        for i in 0..sched.schedule.len() {
            let e = sched.schedule.entries()[i];
            let veh = &vehicles[&e.vehicle];
            let earliest = now + min_time_to_go((ap.length - veh.x).max(0.0), veh.v, &ap);
            if earliest > e.t_set + EPS {
                relaxations += 1;
            }
            if earliest > e.floor {
                sched.schedule.set_floor(i, earliest);
                raised = true;
            }
        }
        if raised {
            sched.schedule.recompute_from(0, now);
        }
        let queued_upstream = |buffers: &[VecDeque<(VehicleId, f64, f64)>; 2]| [buffers[0].len(), buffers[1].len()];

        // lane entrance
        for k in OdClass::ALL {
            let Some(&(id, generation, r)) = buffers[k.index()].front() else {
                continue;
            };
            let clear = lanes[k.index()].back().is_none_or(|lid| {
                let l = &vehicles[lid];
                let need = ap.safety_gap + (ap.v_max * ap.v_max - l.v * l.v).max(0.0) / (2.0 * brake);
                l.x >= need - EPS
            });
            if clear {
                buffers[k.index()].pop_front();
                vehicles.insert(
                    id,
                    Vehicle {
                        x: 0.0,
                        v: ap.v_max,
                        generation,
                        entry: now,
                        r,
                    },
                );
                lanes[k.index()].push_back(id);
                let frozen = frozen_count(&sched, &vehicles);
                let waiting = queued_upstream(&buffers);
                sched.on_arrival(ScheduleEntry::new(id, now, &ap), frozen, waiting, now);
            }
        }

        // motion
        let slots: HashMap<VehicleId, f64> = sched.schedule.entries().iter().map(|e| (e.vehicle, e.t_set)).collect();
        let mut crossed: Vec<(f64, VehicleId)> = Vec::new();
        let mut moves: Vec<(VehicleId, f64, f64)> = Vec::with_capacity(vehicles.len());
        for lane in &lanes {
            // leader's next position and speed, unless it crosses this step
            let mut leader_next: Option<(f64, f64)> = None;
            for id in lane {
                let veh = vehicles[id];
                let d = (ap.length - veh.x).max(0.0);
                let mut a = tracking_command(d, veh.v, slots[id] - now, &ap)?.accel;
                let (mut x1, mut v1) = advance_kinematics(veh.x, veh.v, a, ap.dt, ap.v_max);
                if let Some((xl, vl)) = leader_next {
                    let need = ap.safety_gap + (v1 * v1 - vl * vl).max(0.0) / (2.0 * brake);
                    if xl - x1 < need - EPS && a != ap.a_minus {
                        a = ap.a_minus;
                        (x1, v1) = advance_kinematics(veh.x, veh.v, a, ap.dt, ap.v_max);
                        overrides += 1;
                    }
                }
                if config.record_trajectories {
                    trajectories.push(TrajectoryPoint {
                        t: now,
                        vehicle: *id,
                        position: veh.x,
                        speed: veh.v,
                        accel: a,
                    });
                }
                match time_to_reach(veh.x, veh.v, a, ap.dt, ap.v_max, ap.length) {
                    Some(tau) => {
                        crossed.push((now + tau, *id));
                        leader_next = None;
                    }
                    None => leader_next = Some((x1, v1)),
                }
                moves.push((*id, x1, v1));
            }
        }
        for (id, x1, v1) in moves {
            let veh = vehicles.get_mut(&id).expect("moving vehicle exists");
            veh.x = x1;
            veh.v = v1;
        }

        // crossings
        crossed.sort_by(|a, b| a.0.total_cmp(&b.0));
        for (t_cross, id) in crossed {
            let lane = &mut lanes[id.class.index()];
            if lane.front() == Some(&id) {
                lane.pop_front();
            } else {
                lane.retain(|v| *v != id);
            }
            let veh = vehicles.remove(&id).expect("crossing vehicle exists");
            if sched.schedule.position(id) != Some(0) {
                order_violations += 1;
            }
            let entry = sched.schedule.remove(id).expect("crossing vehicle is scheduled");
            max_err = max_err.max((t_cross - entry.t_set).abs());
            if let Some((prev, prev_cross, prev_r)) = last_crossed {
                let need = theta.get(prev.class(), id.class);
                if entry.t_set - prev.t_set < need + r_sched - EPS {
                    headway_violations += 1;
                }
                min_slack = min_slack.min(t_cross - prev_cross - need - prev_r);
                if prev.class() != id.class {
                    switchovers += 1;
                }
            }
            last_crossed = Some((entry, t_cross, veh.r));
            delays.push(DelayRecord {
                vehicle: id,
                generation_time: veh.generation,
                entry_time: veh.entry,
                crossing_time: t_cross,
                t_set: entry.t_set,
                delay: t_cross - veh.generation - ap.traverse_time(),
            });
            let frozen = frozen_count(&sched, &vehicles);
            sched.on_departure(frozen, queued_upstream(&buffers), now + ap.dt);
        }

        // per-step spacing check
        for lane in &lanes {
            for pair in lane.iter().collect::<Vec<_>>().windows(2) {
                let (l, f) = (&vehicles[pair[0]], &vehicles[pair[1]]);
                let gap = l.x - f.x;
                if gap < ap.safety_gap - 1e-6 {
                    return Err(Error::SafetyViolation {
                        time: now + ap.dt,
                        leader: pair[0].to_string(),
                        follower: pair[1].to_string(),
                        gap,
                    });
                }
            }
        }
        step += 1;
    }

    let undrained = vehicles.len() + buffers.iter().map(|b| b.len()).sum::<usize>() + (arrivals.len() - next_arrival);
    let mean_delay = if delays.is_empty() {
        0.0
    } else {
        delays.iter().map(|d| d.delay).sum::<f64>() / delays.len() as f64
    };
    Ok(MicroSimResult {
        seed: config.seed,
        delays,
        trajectories,
        mean_delay,
        max_tracking_error: max_err,
        relaxations,
        following_overrides: overrides,
        order_violations,
        headway_violations,
        min_occupancy_slack: min_slack,
        switchovers,
        undrained,
    })
}

/// `count` replications in parallel; replication `i` uses
/// [`replication_seed`]`(config.seed, i)`.
pub fn run_micro_replications(config: &MicroSimConfig, count: usize) -> Result<Vec<MicroSimResult>> {
    (0..count as u64)
        .into_par_iter()
        .map(|i| {
            let mut c = config.clone();
            c.seed = replication_seed(config.seed, i);
            run_micro_sim(&c)
        })
        .collect()
}

/// Mean micro-sim delay under each policy on one shared arrival sample.
pub fn matched_delays(
    config: &MicroSimConfig,
    policies: &[PolicyKind],
) -> Result<Vec<(PolicyKind, MicroSimResult)>> {
    config.validate()?;
    let arrivals = bernoulli_arrivals(&config.spec, config.approach.dt, config.horizon, config.seed);
    policies
        .iter()
        .map(|p| {
            let mut c = config.clone();
            c.policy = *p;
            run_micro_sim_with_arrivals(&c, &arrivals).map(|r| (*p, r))
        })
        .collect()
}

/// Convenience for callers that only vary demand.
pub fn with_demand(config: &MicroSimConfig, demand: DemandProfile) -> MicroSimConfig {
    MicroSimConfig {
        spec: config.spec.with_demand(demand),
        ..config.clone()
    }
}
