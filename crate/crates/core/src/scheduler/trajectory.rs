//! Approach-zone kinematics and the bang-bang trajectory rule.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Geometry and vehicle limits of one approach lane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ApproachSpec {
    /// Length of the approaching zone [m].
    pub length: f64,
    /// Nominal and maximum speed [m/s].
    pub v_max: f64,
    /// Acceleration [m/s²], positive.
    pub a_plus: f64,
    /// Deceleration [m/s²], negative.
    pub a_minus: f64,
    /// Micro-simulation step [s].
    #[serde(default = "default_dt")]
    pub dt: f64,
    /// Minimum spacing between consecutive vehicles in a lane [m].
    pub safety_gap: f64,
}

fn default_dt() -> f64 {
    0.1
}

impl Default for ApproachSpec {
    fn default() -> Self {
        Self {
            length: 250.0,
            v_max: 15.0,
            a_plus: 2.0,
            a_minus: -4.0,
            dt: 0.1,
            safety_gap: 5.0,
        }
    }
}

impl ApproachSpec {
    pub fn validate(&self) -> Result<()> {
        let positive = [self.length, self.v_max, self.a_plus, self.dt, self.safety_gap];
        if !positive.iter().all(|v| v.is_finite() && *v > 0.0) || !(self.a_minus.is_finite() && self.a_minus < 0.0) {
            return Err(Error::InvalidApproach(format!(
                "need L, v_max, a₊, dt, safety gap > 0 and a₋ < 0, got {self:?}"
            )));
        }
        Ok(())
    }

    /// Free-flow traverse time `L / v_max`.
    pub fn traverse_time(&self) -> f64 {
        self.length / self.v_max
    }

    /// Distance needed to stop from speed `v`.
    pub fn stopping_distance(&self, v: f64) -> f64 {
        v * v / (2.0 * -self.a_minus)
    }
}

/// `T_ms = T_e + L / v_max`: the earliest possible crossing for a vehicle
/// entering at `T_e` at nominal speed.
pub fn minimal_set_time(entry_time: f64, approach: &ApproachSpec) -> f64 {
    entry_time + approach.traverse_time()
}

/// Minimal time to cover `d` metres from speed `v`: full acceleration up to
/// `v_max`, then cruising.
pub fn min_time_to_go(d: f64, v: f64, approach: &ApproachSpec) -> f64 {
    let a = approach.a_plus;
    let vm = approach.v_max;
    let accel_dist = (vm * vm - v * v) / (2.0 * a);
    if accel_dist > d {
        (-v + (v * v + 2.0 * a * d).sqrt()) / a
    } else {
        (vm - v) / a + (d - accel_dist) / vm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Command {
    /// One of `a₊`, `a₋` or 0.
    pub accel: f64,
    /// Minimal time to go from the current state [s].
    pub t_min: f64,
    /// Set when the slot cannot be met: the earliest feasible remaining time.
    pub relaxed_remaining: Option<f64>,
}

/// Acceleration for a vehicle `d` metres from the crossing at speed `v`
/// that should cross `remaining` seconds from now.
///
/// Accelerate when the minimal time to go is no shorter than the remaining
/// time and `v < v_max`; decelerate when it is shorter and `v > 0`; hold
/// otherwise. A slot that cannot be met is reported via `relaxed_remaining`.
pub fn plan_trajectory(d: f64, v: f64, remaining: f64, approach: &ApproachSpec) -> Result<Command> {
    const EPS: f64 = 1e-9;
    if !(d.is_finite() && v.is_finite()) || d < -EPS || d > approach.length + EPS {
        return Err(Error::InfeasibleState(format!(
            "distance to go {d} outside [0, {}]",
            approach.length
        )));
    }
    if v < -EPS || v > approach.v_max + EPS {
        return Err(Error::InfeasibleState(format!("speed {v} outside [0, {}]", approach.v_max)));
    }
    let v = v.clamp(0.0, approach.v_max);
    let t_min = min_time_to_go(d.max(0.0), v, approach);
    let accel = if v < approach.v_max && t_min >= remaining {
        approach.a_plus
    } else if v > 0.0 && t_min < remaining {
        approach.a_minus
    } else {
        0.0
    };
    Ok(Command {
        accel,
        t_min,
        relaxed_remaining: (t_min > remaining).then_some(t_min),
    })
}

/// Step-aware form of [`plan_trajectory`] used by the micro-simulator.
///
/// Late or exactly on time: same as the plain rule. Early: the slowest of
/// `a₋`, 0, `a₊` after which the slot is still reachable, so a vehicle never
/// brakes itself into a late arrival.
pub fn tracking_command(d: f64, v: f64, remaining: f64, approach: &ApproachSpec) -> Result<Command> {
    const EPS: f64 = 1e-9;
    let base = plan_trajectory(d, v, remaining, approach)?;
    if base.t_min >= remaining {
        return Ok(base);
    }
    let dt = approach.dt;
    let v0 = v.clamp(0.0, approach.v_max);
    let d0 = d.max(0.0);
    let mut options = Vec::with_capacity(3);
    if v0 > 0.0 {
        options.push(approach.a_minus);
    }
    options.push(0.0);
    if v0 < approach.v_max {
        options.push(approach.a_plus);
    }
    for a in options {
        let ok = match time_to_reach(0.0, v0, a, dt, approach.v_max, d0) {
            Some(tau) => tau >= remaining - EPS,
            None => {
                let (x1, v1) = advance_kinematics(0.0, v0, a, dt, approach.v_max);
                min_time_to_go(d0 - x1, v1, approach) <= remaining - dt + EPS
            }
        };
        if ok {
            return Ok(Command { accel: a, ..base });
        }
    }
    Ok(Command {
        accel: if v0 < approach.v_max { approach.a_plus } else { 0.0 },
        ..base
    })
}

/// Exact constant-acceleration motion over `dt`, with the speed held in
/// `[0, v_max]`: returns position and speed at the end of the step.
pub fn advance_kinematics(x: f64, v: f64, a: f64, dt: f64, v_max: f64) -> (f64, f64) {
    let bound = if a > 0.0 {
        v_max
    } else if a < 0.0 {
        0.0
    } else {
        return (x + v * dt, v);
    };
    let t_hit = ((bound - v) / a).max(0.0);
    if t_hit >= dt {
        (x + v * dt + 0.5 * a * dt * dt, v + a * dt)
    } else {
        let x_hit = x + v * t_hit + 0.5 * a * t_hit * t_hit;
        (x_hit + bound * (dt - t_hit), bound)
    }
}

/// Time within `[0, dt]` at which the motion of [`advance_kinematics`]
/// first reaches `target`, if it does.
pub fn time_to_reach(x: f64, v: f64, a: f64, dt: f64, v_max: f64, target: f64) -> Option<f64> {
    let need = target - x;
    if need <= 0.0 {
        return Some(0.0);
    }
    let (phase1, bound) = if a > 0.0 {
        (((v_max - v) / a).clamp(0.0, dt), v_max)
    } else if a < 0.0 {
        ((-v / a).clamp(0.0, dt), 0.0)
    } else {
        (0.0, v)
    };
    // constant-acceleration phase
    if phase1 > 0.0 {
        let reach1 = v * phase1 + 0.5 * a * phase1 * phase1;
        if reach1 >= need {
            let disc = (v * v + 2.0 * a * need).max(0.0);
            return Some((-v + disc.sqrt()) / a);
        }
        let rest = need - reach1;
        if bound <= 0.0 {
            return None;
        }
        let t = phase1 + rest / bound;
        return (t <= dt).then_some(t);
    }
    let speed = if a == 0.0 { v } else { bound };
    if speed <= 0.0 {
        return None;
    }
    let t = need / speed;
    (t <= dt).then_some(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn approach() -> ApproachSpec {
        ApproachSpec {
            length: 150.0,
            ..ApproachSpec::default()
        }
    }

    #[test]
    fn minimal_set_time_examples() {
        assert_relative_eq!(minimal_set_time(0.0, &approach()), 10.0);
        let zero = ApproachSpec {
            length: 0.0,
            ..approach()
        };
        assert_relative_eq!(minimal_set_time(4.2, &zero), 4.2);
        assert!(minimal_set_time(1.0, &approach()) < minimal_set_time(1.0 + 1e-9, &approach()));
    }

    #[test]
    fn cruise_at_v_max_holds_speed() {
        let ap = approach();
        let c = plan_trajectory(150.0, 15.0, 10.0, &ap).unwrap();
        assert_relative_eq!(c.t_min, 10.0);
        assert_eq!(c.accel, 0.0);
        assert!(c.relaxed_remaining.is_none());
    }

    #[test]
    fn standing_start_reaches_v_max() {
        let ap = approach();
        let t = min_time_to_go(150.0, 0.0, &ap);
        assert_relative_eq!(t, 15.0 / 2.0 + (150.0 - 225.0 / 4.0) / 15.0, epsilon = 1e-12);
    }

    #[test]
    fn short_distance_still_accelerating() {
        let ap = approach();
        // 10 m from standstill at 2 m/s²: √10 s
        assert_relative_eq!(min_time_to_go(10.0, 0.0, &ap), 10f64.sqrt(), epsilon = 1e-12);
    }

    #[test]
    fn early_vehicle_decelerates() {
        let ap = approach();
        assert_eq!(plan_trajectory(150.0, 15.0, 12.0, &ap).unwrap().accel, ap.a_minus);
        let late = plan_trajectory(150.0, 10.0, 5.0, &ap).unwrap();
        assert_eq!(late.accel, ap.a_plus);
        assert!(late.relaxed_remaining.unwrap() > 5.0);
    }

    #[test]
    fn impossible_states_rejected() {
        let ap = approach();
        assert!(plan_trajectory(151.0, 10.0, 5.0, &ap).is_err());
        assert!(plan_trajectory(100.0, 16.0, 5.0, &ap).is_err());
    }

    #[test]
    fn kinematics_clamp_speed() {
        let (x, v) = advance_kinematics(0.0, 14.9, 2.0, 0.1, 15.0);
        assert_relative_eq!(v, 15.0);
        // 0.05 s accelerating, 0.05 s at 15
        assert_relative_eq!(x, 14.9 * 0.05 + 0.5 * 2.0 * 0.0025 + 15.0 * 0.05, epsilon = 1e-12);
        let (x, v) = advance_kinematics(0.0, 0.2, -4.0, 0.1, 15.0);
        assert_eq!(v, 0.0);
        assert_relative_eq!(x, 0.2 * 0.05 - 2.0 * 0.0025, epsilon = 1e-12);
    }

    #[test]
    fn reach_time_consistent_with_kinematics() {
        for &(v, a) in &[(15.0, 0.0), (10.0, 2.0), (14.95, 2.0), (3.0, -4.0)] {
            let (x1, _) = advance_kinematics(0.0, v, a, 0.1, 15.0);
            let target = 0.7 * x1;
            let t = time_to_reach(0.0, v, a, 0.1, 15.0, target).unwrap();
            let (xt, _) = advance_kinematics(0.0, v, a, t, 15.0);
            assert_relative_eq!(xt, target, epsilon = 1e-9);
        }
        assert!(time_to_reach(0.0, 1.0, 0.0, 0.1, 15.0, 5.0).is_none());
    }

    #[test]
    fn tracking_lands_on_slot() {
        let ap = approach();
        for &slot in &[10.0, 10.05, 11.0, 13.7, 20.0, 40.0] {
            let (mut x, mut v, mut t) = (0.0, ap.v_max, 0.0);
            let crossing = loop {
                let c = tracking_command(ap.length - x, v, slot - t, &ap).unwrap();
                assert!([ap.a_plus, ap.a_minus, 0.0].contains(&c.accel));
                if let Some(tau) = time_to_reach(x, v, c.accel, ap.dt, ap.v_max, ap.length) {
                    break t + tau;
                }
                (x, v) = advance_kinematics(x, v, c.accel, ap.dt, ap.v_max);
                assert!((0.0..=ap.v_max).contains(&v));
                t += ap.dt;
            };
            assert!((crossing - slot).abs() <= ap.dt, "slot {slot} crossed at {crossing}");
        }
    }

    #[test]
    fn approach_validation() {
        assert!(ApproachSpec::default().validate().is_ok());
        let bad = ApproachSpec {
            a_minus: 1.0,
            ..ApproachSpec::default()
        };
        assert!(bad.validate().is_err());
    }
}
