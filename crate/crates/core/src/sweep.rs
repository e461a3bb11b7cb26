//! Vehicle-count sweeps over seeded scenarios, emitted as CSV.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assignment::PickupPlan;
use crate::error::{Error, Result};
use crate::pipeline::{build_vehicles, own_car_routes, plan_evacuation};
use crate::routing::{CongestionEstimate, PlanOutcome};
use crate::scenario::{departure_times, generate, ScenarioSpec};
use crate::sim::{mean_std, run, SimResult};

pub const CSV_HEADER: &str = "vehicles,mean_evac_s,std_between_runs_s,mean_within_run_std_s,stranded";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub vehicles: usize,
    /// mean over repetitions of the per-run mean evacuation time
    pub mean_evac_s: f64,
    /// population std over repetitions of the per-run mean
    pub std_between_runs_s: f64,
    /// mean over repetitions of the per-run std across vehicles
    pub mean_within_run_std_s: f64,
    /// stranded vehicles summed over repetitions
    pub stranded: usize,
}

/// Seed of repetition `rep`; shared across vehicle counts so every count
/// sees the same seeker population and nested volunteer populations.
pub fn repetition_seed(base: u64, rep: usize) -> u64 {
    base.wrapping_add(rep as u64)
}

/// Generate, plan, assign and simulate one scenario.
pub fn run_scenario(spec: &ScenarioSpec) -> Result<SimResult> {
    let sc = generate(spec)?;
    let plan = plan_evacuation(
        &sc.network,
        &sc.zone,
        &sc.volunteers,
        &sc.seekers,
        &CongestionEstimate::unit(),
        &spec.assignment,
    )?;
    let departures = departure_times(spec, plan.routes.routes.len());
    let vehicles = build_vehicles(&sc.network, &plan.routes, &plan.pickups, spec.sim.dwell, &departures)?;
    let mut result = run(&sc.network, &vehicles, &spec.sim)?;
    result.unserved_seekers = plan.pickups.unserved.len();
    Ok(result)
}

/// Shared plan against the baseline where every seeker drives alone, on the
/// same scenario and with the same departure time per person. In the shared
/// run unserved seekers drive themselves.
#[derive(Debug, Clone)]
pub struct CarSharingRun {
    pub shared: SimResult,
    pub own_car: SimResult,
}

pub fn compare_car_sharing(spec: &ScenarioSpec) -> Result<CarSharingRun> {
    let sc = generate(spec)?;
    let unit = CongestionEstimate::unit();
    let plan = plan_evacuation(
        &sc.network,
        &sc.zone,
        &sc.volunteers,
        &sc.seekers,
        &unit,
        &spec.assignment,
    )?;
    let own = own_car_routes(&sc.network, &sc.zone, &sc.volunteers, &sc.seekers, &unit)?;

    let times = departure_times(spec, sc.volunteers.len() + sc.seekers.len());
    let ids = sc
        .volunteers
        .iter()
        .map(|v| v.id.as_str())
        .chain(sc.seekers.iter().map(|s| s.id.as_str()));
    let by_id: std::collections::HashMap<&str, f64> = ids.zip(times).collect();
    let departures =
        |routes: &PlanOutcome| -> Vec<f64> { routes.routes.iter().map(|r| by_id[r.volunteer_id.as_str()]).collect() };

    // seekers nobody can pick up still have to leave, in their own car
    let unserved: Vec<_> = sc
        .seekers
        .iter()
        .filter(|s| plan.pickups.unserved.contains(&s.id))
        .cloned()
        .collect();
    let solo = own_car_routes(&sc.network, &sc.zone, &[], &unserved, &unit)?;
    let mut mixed = plan.routes.clone();
    mixed.routes.extend(solo.routes);
    mixed.unreachable.extend(solo.unreachable);
    let mut vehicles = build_vehicles(&sc.network, &mixed, &plan.pickups, spec.sim.dwell, &departures(&mixed))?;
    vehicles.sort_by(|a, b| a.id.cmp(&b.id));
    let mut shared = run(&sc.network, &vehicles, &spec.sim)?;
    shared.unserved_seekers = plan.pickups.unserved.len();
    let vehicles = build_vehicles(
        &sc.network,
        &own,
        &PickupPlan::default(),
        spec.sim.dwell,
        &departures(&own),
    )?;
    let own_car = run(&sc.network, &vehicles, &spec.sim)?;
    Ok(CarSharingRun { shared, own_car })
}

pub fn sweep(spec: &ScenarioSpec, vehicle_counts: &[usize], repetitions: usize) -> Result<Vec<SweepRow>> {
    if repetitions == 0 {
        return Err(Error::field("reps", "repetitions must be at least 1"));
    }
    let jobs: Vec<(usize, usize)> = vehicle_counts
        .iter()
        .flat_map(|&n| (0..repetitions).map(move |r| (n, r)))
        .collect();
    let results: Vec<Result<SimResult>> = jobs
        .par_iter()
        .map(|&(n, r)| {
            let mut s = spec.clone();
            s.volunteers.count = n;
            s.seed = repetition_seed(spec.seed, r);
            s.sim.seed = s.seed;
            run_scenario(&s)
        })
        .collect();
    let mut results = results.into_iter();
    let mut rows = Vec::with_capacity(vehicle_counts.len());
    for &n in vehicle_counts {
        let runs: Vec<SimResult> = results.by_ref().take(repetitions).collect::<Result<_>>()?;
        let (mean, between) = mean_std(runs.iter().map(|r| r.mean_evac));
        let (within, _) = mean_std(runs.iter().map(|r| r.std_evac));
        rows.push(SweepRow {
            vehicles: n,
            mean_evac_s: mean,
            std_between_runs_s: between,
            mean_within_run_std_s: within,
            stranded: runs.iter().map(|r| r.stranded).sum(),
        });
    }
    Ok(rows)
}

pub fn write_csv<W: Write>(rows: &[SweepRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in rows {
        w.serialize(row).map_err(|e| Error::Io(std::io::Error::other(e)))?;
    }
    w.flush()?;
    Ok(())
}
