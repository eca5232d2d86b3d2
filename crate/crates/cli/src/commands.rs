//! One function per subcommand. Each is a pure function of the config and
//! seed; results go to files in the output directory, a summary to stdout.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use sigfree_core::analytics::{bound_w3_beta_range, bounds_report, capacity_region, BetaWindow, BoundsReport};
use sigfree_core::drift::{drift_probe, DriftProbe, DriftState};
use sigfree_core::scheduler::microsim::{matched_delays, DelayRecord, TrajectoryPoint};
use sigfree_core::sim::{estimate_delay_surface, replication_seed, run_replications, SimEvent, Verdict};
use sigfree_core::{DemandProfile, MicroSimConfig, MicroSimResult, OdClass, PolicyKind, SimConfig, VehicleId};

use crate::config::ExperimentConfig;
use crate::output::{opt9, policy_tag, sig9, OutputDir};
use crate::CliError;

fn vehicle_id(v: VehicleId) -> String {
    format!("{}-{}", v.class.number(), v.index)
}

fn verdict_label(v: Verdict) -> &'static str {
    match v {
        Verdict::Bounded => "bounded",
        Verdict::Growing => "growing",
    }
}

#[derive(Serialize)]
struct BoundsOutput {
    #[serde(flatten)]
    report: BoundsReport,
    /// Weights for which the LQF upper display is defined.
    lqf_upper_beta_range: Option<BetaWindow>,
}

pub fn bounds(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let lambda = cfg.point_demand("bounds")?;
    let params = cfg.model()?.params;
    let output = BoundsOutput {
        report: bounds_report(&lambda, &params, cfg.beta),
        lqf_upper_beta_range: bound_w3_beta_range(&lambda, &params),
    };
    out.write_json("bounds.json", &output)?;
    println!("{}", serde_json::to_string_pretty(&output).map_err(|e| CliError::Runtime(e.to_string()))?);
    Ok(())
}

fn sim_template(
    cfg: &ExperimentConfig,
    policy: PolicyKind,
    seed: u64,
    demand: DemandProfile,
) -> Result<SimConfig, CliError> {
    let mut c = SimConfig::new(cfg.spec(demand)?, policy, cfg.sim.horizon, seed);
    c.warmup = cfg.sim.warmup;
    c.replication_count = cfg.sim.replications;
    c.record_events = cfg.sim.record_events;
    c.validate()?;
    Ok(c)
}

#[derive(Serialize)]
struct SimulateRow {
    policy: PolicyKind,
    mean_workload: f64,
    workload_std_err: f64,
    mean_delay: f64,
    delay_std_err: f64,
    verdict: Verdict,
    replications: Vec<sigfree_core::SimResult>,
}

pub fn simulate(cfg: &ExperimentConfig, seed: u64, out: &mut OutputDir) -> Result<(), CliError> {
    let lambda = cfg.point_demand("simulate")?;
    let mut rows = Vec::new();
    for policy in &cfg.policies {
        let c = sim_template(cfg, *policy, seed, lambda)?;
        let mut summary = run_replications(&c)?;
        if cfg.sim.record_events {
            let events: Vec<SimEvent> = summary.results[0].events.clone().unwrap_or_default();
            let rows: Vec<Vec<String>> = events
                .iter()
                .map(|e| {
                    vec![
                        sig9(e.time),
                        format!("{:?}", e.kind).to_lowercase(),
                        vehicle_id(e.vehicle),
                        e.vehicle.class.number().to_string(),
                        sig9(e.crossing_time),
                        sig9(e.service_time),
                        e.position.map(|p| p.to_string()).unwrap_or_default(),
                    ]
                })
                .collect();
            out.write_csv(
                &format!("events_{}.csv", policy_tag(policy)),
                &["t", "kind", "vehicle_id", "class", "crossing_time", "service_time", "position"],
                &rows,
            )?;
        }
        for r in &mut summary.results {
            r.events = None;
        }
        println!(
            "{}: mean workload {} ± {}, mean delay {} ± {}, {}",
            policy.name(),
            sig9(summary.mean_workload),
            sig9(summary.workload_std_err),
            sig9(summary.mean_delay),
            sig9(summary.delay_std_err),
            verdict_label(summary.verdict)
        );
        rows.push(SimulateRow {
            policy: *policy,
            mean_workload: summary.mean_workload,
            workload_std_err: summary.workload_std_err,
            mean_delay: summary.mean_delay,
            delay_std_err: summary.delay_std_err,
            verdict: summary.verdict,
            replications: summary.results,
        });
    }
    out.write_json("simulate.json", &rows)?;
    Ok(())
}

pub fn sweep(cfg: &ExperimentConfig, seed: u64, out: &mut OutputDir) -> Result<(), CliError> {
    let grid = cfg.grid_points()?;
    let mut per_policy = Vec::new();
    for policy in &cfg.policies {
        eprintln!("sweep: {} over {} demand points", policy.name(), grid.len());
        // Demand is replaced at each grid point.
        let mut template = sim_template(cfg, *policy, seed, DemandProfile::new([0.0, 0.0])?)?;
        template.record_events = false;
        per_policy.push(estimate_delay_surface(&grid, &template)?);
    }
    let mut rows = Vec::with_capacity(grid.len() * cfg.policies.len());
    for i in 0..grid.len() {
        for (policy, surface) in cfg.policies.iter().zip(&per_policy) {
            let r = &surface[i];
            rows.push(vec![
                sig9(r.lambda1),
                sig9(r.lambda2),
                policy_tag(policy),
                sig9(r.mean_delay),
                sig9(r.time_avg_workload),
                r.congested.to_string(),
                verdict_label(r.verdict).to_string(),
            ]);
        }
    }
    let path = out.write_csv(
        "sweep.csv",
        &["lambda1", "lambda2", "policy", "mean_delay", "time_avg_workload", "congested", "verdict"],
        &rows,
    )?;
    println!("{} rows -> {}", rows.len(), path.display());
    Ok(())
}

pub fn region(cfg: &ExperimentConfig, out: &mut OutputDir) -> Result<(), CliError> {
    let params = cfg.model()?.params;
    let rays = cfg.region.rays;
    let curves = cfg
        .policies
        .iter()
        .map(|p| capacity_region(p, &params, rays))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = Vec::new();
    for (policy, curve) in cfg.policies.iter().zip(&curves) {
        for (i, pt) in curve.iter().enumerate() {
            rows.push(vec![
                policy_tag(policy),
                i.to_string(),
                sig9(pt.p[0]),
                sig9(pt.p[1]),
                sig9(pt.capacity),
                sig9(pt.lambda[0]),
                sig9(pt.lambda[1]),
            ]);
        }
    }
    out.write_csv("region.csv", &["policy", "ray", "p1", "p2", "capacity", "lambda1", "lambda2"], &rows)?;

    let tags: Vec<String> = cfg.policies.iter().map(policy_tag).collect();
    let mut header = vec!["p1"];
    header.extend(tags.iter().map(String::as_str));
    let wide: Vec<Vec<String>> = (0..rays)
        .map(|i| {
            let mut row = vec![sig9(curves[0][i].p[0])];
            row.extend(curves.iter().map(|c| sig9(c[i].capacity)));
            row
        })
        .collect();
    out.write_csv("capacity_curve.csv", &header, &wide)?;
    println!("{} rays × {} policies", rays, cfg.policies.len());
    Ok(())
}

#[derive(Serialize)]
struct MicroSimRow {
    policy: PolicyKind,
    #[serde(flatten)]
    result: MicroSimResult,
}

pub fn micro_sim(cfg: &ExperimentConfig, seed: u64, out: &mut OutputDir) -> Result<(), CliError> {
    let lambda = cfg.point_demand("micro-sim")?;
    let mut c = MicroSimConfig::new(cfg.spec(lambda)?, cfg.policies[0], cfg.approach, cfg.micro_sim.horizon, seed);
    c.record_trajectories = cfg.micro_sim.record_trajectories;
    let results = matched_delays(&c, &cfg.policies)?;
    let mut summary = Vec::new();
    for (policy, mut result) in results {
        let tag = policy_tag(&policy);
        let delays: Vec<DelayRecord> = std::mem::take(&mut result.delays);
        let rows: Vec<Vec<String>> = delays
            .iter()
            .map(|d| {
                vec![
                    vehicle_id(d.vehicle),
                    d.class().number().to_string(),
                    sig9(d.entry_time),
                    sig9(d.crossing_time),
                    sig9(d.delay),
                ]
            })
            .collect();
        out.write_csv(
            &format!("delays_{tag}.csv"),
            &["vehicle_id", "class", "entry_time", "crossing_time", "delay"],
            &rows,
        )?;
        let traj: Vec<TrajectoryPoint> = std::mem::take(&mut result.trajectories);
        if c.record_trajectories {
            let rows: Vec<Vec<String>> = traj
                .iter()
                .map(|p| {
                    vec![
                        sig9(p.t),
                        vehicle_id(p.vehicle),
                        p.vehicle.class.number().to_string(),
                        sig9(p.position),
                        sig9(p.speed),
                        sig9(p.accel),
                    ]
                })
                .collect();
            out.write_csv(
                &format!("trajectories_{tag}.csv"),
                &["t", "vehicle_id", "class", "position", "speed", "accel"],
                &rows,
            )?;
        }
        println!(
            "{}: {} vehicles, mean delay {} s/veh, max tracking error {} s, {} relaxations",
            policy.name(),
            delays.len(),
            sig9(result.mean_delay),
            sig9(result.max_tracking_error),
            result.relaxations
        );
        summary.push(MicroSimRow { policy, result });
    }
    out.write_json("micro_sim.json", &summary)?;
    Ok(())
}

/// States uniform on `{x ≥ 0, ‖x‖₁ ≤ max}` with a consistent last class.
fn random_states(count: usize, max: f64, seed: u64) -> Vec<DriftState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let total = max * rng.random::<f64>().sqrt();
            let share: f64 = rng.random();
            let x = [total * share, total * (1.0 - share)];
            let mut y = if rng.random::<bool>() { OdClass::One } else { OdClass::Two };
            if x[0] + x[1] > 0.0 && x[y.index()] == 0.0 {
                y = y.other();
            }
            DriftState::new(x, y).expect("drawn state is feasible")
        })
        .collect()
}

pub fn drift_probe_cmd(cfg: &ExperimentConfig, seed: u64, out: &mut OutputDir) -> Result<(), CliError> {
    let lambda = cfg.point_demand("drift-probe")?;
    let spec = cfg.spec(lambda)?;
    let states = if cfg.drift.states.is_empty() {
        random_states(cfg.drift.random_states, cfg.drift.max_workload, seed)
    } else {
        cfg.drift
            .states
            .iter()
            .enumerate()
            .map(|(i, s)| {
                DriftState::new(s.x, s.y)
                    .map_err(|e| CliError::Validation(format!("config field `drift.states[{i}]`: {e}")))
            })
            .collect::<Result<_, _>>()?
    };
    let probes: Vec<DriftProbe> = states
        .par_iter()
        .enumerate()
        .map(|(i, s)| drift_probe(&PolicyKind::FIFO, *s, &spec, cfg.drift.samples, replication_seed(seed, i as u64)))
        .collect::<Result<_, _>>()?;
    let rows: Vec<Vec<String>> = probes
        .iter()
        .map(|p| {
            vec![
                sig9(p.state.x[0]),
                sig9(p.state.x[1]),
                p.state.y.number().to_string(),
                sig9(p.closed_form),
                sig9(p.reduced_form),
                sig9(p.monte_carlo.mean),
                sig9(p.monte_carlo.std_err),
                sig9(p.bound),
                p.within_bound(1e-12).to_string(),
                sig9(p.z_score()),
            ]
        })
        .collect();
    out.write_csv(
        "drift_probe.csv",
        &[
            "x1",
            "x2",
            "y",
            "closed_form",
            "reduced_form",
            "mc_mean",
            "mc_std_err",
            "bound",
            "within_bound",
            "z_score",
        ],
        &rows,
    )?;
    let within = probes.iter().filter(|p| p.within_bound(1e-12)).count();
    let agree = probes.iter().filter(|p| p.z_score() <= 3.0).count();
    let c = probes.first().map(|p| p.constants);
    println!(
        "{within}/{} states within the drift bound; Monte Carlo within 3 SE at {agree}/{}; c1 = {}, d1 = {}",
        probes.len(),
        probes.len(),
        opt9(c.map(|c| c.c1)),
        opt9(c.map(|c| c.d1))
    );
    Ok(())
}
