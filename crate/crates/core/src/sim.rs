//! Seeded event-driven simulation of the intersection process.
//!
//! Time advances exactly from one arrival to the next; between arrivals the
//! workload `‖X‖₁` decreases at unit rate until it hits zero, so its time
//! integral is accumulated in closed form.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{sample_interarrival, Departure, HybridState, IntersectionSpec, OdClass, VehicleId, VehicleRecord};
use crate::policy::{PolicyKind, PolicyState};

/// Number of equal windows over `[warmup, horizon]` used by the stability verdict.
pub const VERDICT_WINDOWS: usize = 10;
/// Mean per-vehicle delay [s/veh] at which a demand point counts as congested.
pub const CONGESTION_DELAY: f64 = 10.0;

const ARRIVAL_STREAM: u64 = 1;
const CROSSING_STREAM: u64 = 2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub horizon: f64,
    /// Defaults to 10% of the horizon.
    pub warmup: Option<f64>,
    pub seed: u64,
    pub policy: PolicyKind,
    pub spec: IntersectionSpec,
    pub replication_count: usize,
    pub record_events: bool,
}

impl SimConfig {
    pub fn new(spec: IntersectionSpec, policy: PolicyKind, horizon: f64, seed: u64) -> Self {
        Self {
            horizon,
            warmup: None,
            seed,
            policy,
            spec,
            replication_count: 1,
            record_events: false,
        }
    }

    pub fn warmup(&self) -> f64 {
        self.warmup.unwrap_or(0.1 * self.horizon)
    }

    pub fn validate(&self) -> Result<()> {
        let warmup = self.warmup();
        if !(self.horizon.is_finite() && warmup.is_finite() && warmup >= 0.0 && self.horizon > warmup) {
            return Err(Error::InvalidConfig(format!(
                "need horizon > warmup ≥ 0, got horizon={} warmup={warmup}",
                self.horizon
            )));
        }
        if self.replication_count == 0 {
            return Err(Error::InvalidConfig("replication_count must be at least 1".into()));
        }
        self.policy.validate()?;
        self.spec.crossing_time.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Arrival,
    Departure,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimEvent {
    pub time: f64,
    pub kind: EventKind,
    pub vehicle: VehicleId,
    pub crossing_time: f64,
    pub service_time: f64,
    /// Position in the crossing sequence at insertion (arrivals only).
    pub position: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    Bounded,
    Growing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub seed: u64,
    /// Time average of `‖X‖₁` over `[warmup, horizon]`.
    pub time_avg_workload: f64,
    pub per_vehicle_delay_mean: f64,
    pub mean_system_time: f64,
    pub mean_number_in_system: f64,
    pub throughput: f64,
    pub arrivals: u64,
    pub departures: u64,
    pub switchovers: u64,
    pub max_workload: f64,
    pub stability_verdict: Verdict,
    pub window_means: Vec<f64>,
    pub events: Option<Vec<SimEvent>>,
}

/// Area under `w(u) = max(w0 − u, 0)` for `u ∈ [0, len]`.
fn drain_area(w0: f64, len: f64) -> f64 {
    if len <= w0 {
        w0 * len - 0.5 * len * len
    } else {
        0.5 * w0 * w0
    }
}

/// Accumulates piecewise quantities over `[warmup, horizon]` split into windows.
struct Integrator {
    warmup: f64,
    horizon: f64,
    window_len: f64,
    windows: Vec<f64>,
    number_area: f64,
}

impl Integrator {
    fn new(warmup: f64, horizon: f64) -> Self {
        Self {
            warmup,
            horizon,
            window_len: (horizon - warmup) / VERDICT_WINDOWS as f64,
            windows: vec![0.0; VERDICT_WINDOWS],
            number_area: 0.0,
        }
    }

    /// Adds the workload area over `[t0, t1]` given workload `w0` at `t0`.
    fn workload(&mut self, t0: f64, w0: f64, t1: f64) {
        let a = t0.max(self.warmup);
        let b = t1.min(self.horizon);
        if b <= a {
            return;
        }
        let mut s = a;
        while s < b {
            let idx = (((s - self.warmup) / self.window_len) as usize).min(VERDICT_WINDOWS - 1);
            let end = if idx == VERDICT_WINDOWS - 1 {
                b
            } else {
                (self.warmup + (idx + 1) as f64 * self.window_len).min(b)
            };
            if end <= s {
                break;
            }
            let ws = (w0 - (s - t0)).max(0.0);
            self.windows[idx] += drain_area(ws, end - s);
            s = end;
        }
    }

    /// Adds `n × overlap` for a constant number in system `n` over `[t0, t1]`.
    fn number(&mut self, t0: f64, t1: f64, n: usize) {
        let a = t0.max(self.warmup);
        let b = t1.min(self.horizon);
        if b > a {
            self.number_area += n as f64 * (b - a);
        }
    }
}

/// Finite-horizon stability verdict from windowed workload means.
pub fn stability_verdict(window_means: &[f64]) -> Verdict {
    let n = window_means.len();
    if n < 5 {
        return Verdict::Bounded;
    }
    let tail = &window_means[n - 5..];
    let increasing = tail.windows(2).all(|w| w[1] > w[0]);
    if increasing && window_means[n - 1] > 3.0 * window_means[0] {
        Verdict::Growing
    } else {
        Verdict::Bounded
    }
}

/// Delay of a departed vehicle: time in system beyond its own crossing time.
pub fn per_vehicle_delay(record: &VehicleRecord, departure_time: f64) -> Result<f64> {
    if departure_time < record.virtual_arrival {
        return Err(Error::DepartureBeforeArrival {
            vehicle: record.id.to_string(),
            departure: departure_time,
            arrival: record.virtual_arrival,
        });
    }
    // service ≥ R, so only rounding can push this below zero
    Ok((departure_time - record.virtual_arrival - record.crossing_time).max(0.0))
}

/// Runs a single replication with `config.seed`.
pub fn run(config: &SimConfig) -> Result<SimResult> {
    config.validate()?;
    let spec = &config.spec;
    let theta = &spec.theta;
    let warmup = config.warmup();
    let horizon = config.horizon;

    let mut arrival_rng = ChaCha8Rng::seed_from_u64(config.seed);
    arrival_rng.set_stream(ARRIVAL_STREAM);
    let mut crossing_rng = ChaCha8Rng::seed_from_u64(config.seed);
    crossing_rng.set_stream(CROSSING_STREAM);

    let mut state = HybridState::new(OdClass::One);
    let mut policy = PolicyState::new(&config.policy, OdClass::One);
    let mut integ = Integrator::new(warmup, horizon);
    let mut events = config.record_events.then(Vec::new);
    let mut departures: Vec<Departure> = Vec::new();

    let mut counters = [0u64; 2];
    let mut arrivals = 0u64;
    let mut departed = 0u64;
    let mut delay_sum = 0.0;
    let mut system_sum = 0.0;
    let mut switchovers = 0u64;
    let mut last_class: Option<OdClass> = None;
    let mut max_workload: f64 = 0.0;

    let mut t = 0.0;
    let mut workload = 0.0;
    let mut next = sample_interarrival(&mut arrival_rng, &spec.demand);
    loop {
        let t_next = match next {
            Some((_, gap)) if t + gap < horizon => t + gap,
            _ => horizon,
        };
        integ.workload(t, workload, t_next);
        departures.clear();
        let n_before = state.len();
        state.advance_into(t_next - t, &mut departures)?;
        let mut seg_start = t;
        for (i, d) in departures.iter().enumerate() {
            integ.number(seg_start, d.time, n_before - i);
            seg_start = d.time;
            if let Some(ev) = events.as_mut() {
                ev.push(SimEvent {
                    time: d.time,
                    kind: EventKind::Departure,
                    vehicle: d.record.id,
                    crossing_time: d.record.crossing_time,
                    service_time: d.record.service_time,
                    position: None,
                });
            }
            if d.time >= warmup {
                let k = d.record.class();
                if last_class.is_some_and(|c| c != k) {
                    switchovers += 1;
                }
                departed += 1;
                delay_sum += per_vehicle_delay(&d.record, d.time)?;
                system_sum += d.time - d.record.virtual_arrival;
            }
            last_class = Some(d.record.class());
        }
        integ.number(seg_start, t_next, state.len());
        policy.after_departures(&state);
        t = t_next;
        if t >= horizon {
            break;
        }

        let (k, _) = next.expect("arrival scheduled before horizon");
        counters[k.index()] += 1;
        arrivals += 1;
        let r = spec.crossing_time.sample(&mut crossing_rng);
        let record = VehicleRecord::new(VehicleId::new(k, counters[k.index()]), t, r);
        policy.on_arrival(&mut state, record, theta);
        workload = state.workload();
        if t >= warmup {
            max_workload = max_workload.max(workload);
        }
        if let Some(ev) = events.as_mut() {
            let pos = state.iter().position(|q| q.record.id == record.id);
            let placed = pos.and_then(|p| state.get(p)).map(|q| q.record).unwrap_or(record);
            ev.push(SimEvent {
                time: t,
                kind: EventKind::Arrival,
                vehicle: record.id,
                crossing_time: r,
                service_time: placed.service_time,
                position: pos,
            });
        }
        next = sample_interarrival(&mut arrival_rng, &spec.demand);
    }

    let span = horizon - warmup;
    let window_means: Vec<f64> = integ.windows.iter().map(|a| a / integ.window_len).collect();
    let total_area: f64 = integ.windows.iter().sum();
    let mean_or_zero = |sum: f64| if departed > 0 { sum / departed as f64 } else { 0.0 };
    Ok(SimResult {
        seed: config.seed,
        time_avg_workload: total_area / span,
        per_vehicle_delay_mean: mean_or_zero(delay_sum),
        mean_system_time: mean_or_zero(system_sum),
        mean_number_in_system: integ.number_area / span,
        throughput: departed as f64 / span,
        arrivals,
        departures: departed,
        switchovers,
        max_workload,
        stability_verdict: stability_verdict(&window_means),
        window_means,
        events,
    })
}

/// SplitMix64 output for `state + (i+1)·γ`: the seed of replication `i`.
pub fn replication_seed(master: u64, i: u64) -> u64 {
    let mut z = master.wrapping_add((i + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationSummary {
    pub results: Vec<SimResult>,
    pub mean_workload: f64,
    /// Standard error of the replication mean of the time-average workload.
    pub workload_std_err: f64,
    pub mean_delay: f64,
    pub delay_std_err: f64,
    /// Majority verdict across replications (ties count as growing).
    pub verdict: Verdict,
}

fn mean_and_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs `config.replication_count` independent replications in parallel.
/// Replication `i` uses [`replication_seed`]`(config.seed, i)`.
pub fn run_replications(config: &SimConfig) -> Result<ReplicationSummary> {
    config.validate()?;
    let results = (0..config.replication_count as u64)
        .into_par_iter()
        .map(|i| {
            let mut c = config.clone();
            c.seed = replication_seed(config.seed, i);
            run(&c)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(summarize(results))
}

pub fn summarize(results: Vec<SimResult>) -> ReplicationSummary {
    let w: Vec<f64> = results.iter().map(|r| r.time_avg_workload).collect();
    let d: Vec<f64> = results.iter().map(|r| r.per_vehicle_delay_mean).collect();
    let (mean_workload, workload_std_err) = mean_and_se(&w);
    let (mean_delay, delay_std_err) = mean_and_se(&d);
    let growing = results.iter().filter(|r| r.stability_verdict == Verdict::Growing).count();
    let verdict = if 2 * growing >= results.len() {
        Verdict::Growing
    } else {
        Verdict::Bounded
    };
    ReplicationSummary {
        results,
        mean_workload,
        workload_std_err,
        mean_delay,
        delay_std_err,
        verdict,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceRow {
    pub lambda1: f64,
    pub lambda2: f64,
    pub mean_delay: f64,
    pub time_avg_workload: f64,
    pub verdict: Verdict,
    pub congested: bool,
}

/// Mean delay at every grid point, rows in grid order. Every point reuses
/// the template's seed, so neighbouring points see coupled randomness.
pub fn estimate_delay_surface(grid: &[[f64; 2]], template: &SimConfig) -> Result<Vec<SurfaceRow>> {
    grid.par_iter()
        .map(|&lambda| {
            let demand = crate::model::DemandProfile::new(lambda)?;
            let mut c = template.clone();
            c.spec = template.spec.with_demand(demand);
            c.record_events = false;
            let s = run_replications(&c)?;
            Ok(SurfaceRow {
                lambda1: lambda[0],
                lambda2: lambda[1],
                mean_delay: s.mean_delay,
                time_avg_workload: s.mean_workload,
                verdict: s.verdict,
                congested: s.mean_delay >= CONGESTION_DELAY,
            })
        })
        .collect()
}

/// Checks that consecutive departures are separated by at least the
/// follower's headway behind its leader plus its own crossing time.
/// Returns the first offending pair.
pub fn check_departure_headways(
    events: &[SimEvent],
    theta: &crate::model::HeadwayMatrix,
    tol: f64,
) -> Option<(SimEvent, SimEvent)> {
    let deps: Vec<&SimEvent> = events.iter().filter(|e| e.kind == EventKind::Departure).collect();
    deps.windows(2).find_map(|w| {
        let (a, b) = (w[0], w[1]);
        let need = theta.get(a.vehicle.class, b.vehicle.class) + b.crossing_time;
        (b.time - a.time < need - tol).then_some((*a, *b))
    })
}
