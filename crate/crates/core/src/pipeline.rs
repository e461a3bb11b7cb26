//! End-to-end composition: exits -> routes -> pickups -> vehicles.
//!
//! The CLI, the coordination service and the C ABI all go through these
//! functions so that every front end produces the same plan for the same
//! state.

use serde::{Deserialize, Serialize};

use crate::assignment::{assign, eligible_pairs, schedule_all, AssignmentConfig, PickupPlan, SeekerState};
use crate::error::Result;
use crate::exits::{compute_exits, ExitPoint};
use crate::geometry::Polygon;
use crate::network::RoadNetwork;
use crate::routing::{plan_routes, CongestionEstimate, PlanOutcome, VolunteerState};
use crate::sim::{run, SimConfig, SimResult, VehicleAgent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvacuationPlan {
    pub exits: Vec<ExitPoint>,
    pub routes: PlanOutcome,
    pub pickups: PickupPlan,
}

pub fn validate_seekers(seekers: &[SeekerState]) -> Result<()> {
    let mut seen = std::collections::BTreeSet::new();
    for s in seekers {
        s.validate()?;
        if !seen.insert(s.id.as_str()) {
            return Err(crate::Error::DuplicateId(format!("seeker {}", s.id)));
        }
    }
    Ok(())
}

/// Pickup assignment for an already computed route plan.
pub fn assign_pickups(routes: &PlanOutcome, seekers: &[SeekerState], cfg: &AssignmentConfig) -> Result<PickupPlan> {
    cfg.validate()?;
    validate_seekers(seekers)?;
    let pairs = eligible_pairs(&routes.routes, seekers, cfg);
    Ok(assign(&pairs, &routes.routes, seekers))
}

pub fn plan_evacuation(
    net: &RoadNetwork,
    zone: &Polygon,
    volunteers: &[VolunteerState],
    seekers: &[SeekerState],
    congestion: &CongestionEstimate,
    cfg: &AssignmentConfig,
) -> Result<EvacuationPlan> {
    let exits = compute_exits(net, zone)?;
    let routes = plan_routes(net, zone, &exits, volunteers, congestion)?;
    let pickups = assign_pickups(&routes, seekers, cfg)?;
    Ok(EvacuationPlan { exits, routes, pickups })
}

/// One vehicle per routed volunteer (volunteers already outside the zone
/// are not simulated). `departures` is indexed like `routes.routes`;
/// missing entries depart at 0.
pub fn build_vehicles(
    net: &RoadNetwork,
    routes: &PlanOutcome,
    pickups: &PickupPlan,
    dwell: f64,
    departures: &[f64],
) -> Result<Vec<VehicleAgent>> {
    let scheduled = schedule_all(net, &routes.routes, pickups, dwell)?;
    let departure_of = |id: &str| {
        routes
            .routes
            .iter()
            .position(|r| r.volunteer_id == id)
            .and_then(|i| departures.get(i).copied())
            .unwrap_or(0.0)
    };
    Ok(scheduled
        .into_iter()
        .map(|route| VehicleAgent {
            id: route.volunteer_id.clone(),
            departure_time: departure_of(&route.volunteer_id),
            route,
        })
        .collect())
}

/// Simulate a plan; the result carries the unserved-seeker count.
pub fn simulate_plan(
    net: &RoadNetwork,
    routes: &PlanOutcome,
    pickups: &PickupPlan,
    cfg: &SimConfig,
) -> Result<SimResult> {
    let vehicles = build_vehicles(net, routes, pickups, cfg.dwell, &[])?;
    let mut result = run(net, &vehicles, cfg)?;
    result.unserved_seekers = pickups.unserved.len();
    Ok(result)
}

/// Routes for the baseline where every seeker drives an own car instead
/// of riding with a volunteer.
pub fn own_car_routes(
    net: &RoadNetwork,
    zone: &Polygon,
    volunteers: &[VolunteerState],
    seekers: &[SeekerState],
    congestion: &CongestionEstimate,
) -> Result<PlanOutcome> {
    validate_seekers(seekers)?;
    let exits = compute_exits(net, zone)?;
    let mut drivers = volunteers.to_vec();
    drivers.extend(seekers.iter().map(|s| VolunteerState {
        id: s.id.clone(),
        x: s.x,
        y: s.y,
        seats: 0,
    }));
    plan_routes(net, zone, &exits, &drivers, congestion)
}
