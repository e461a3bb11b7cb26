//! Volunteer route planning: best exit per volunteer under a congestion
//! estimate.

use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exits::ExitPoint;
use crate::geometry::{point_in_polygon, Point2D, Polygon, Polyline};
use crate::network::{Link, RoadNetwork, Route, ShortestPathTree};

/// Upper bound on spare seats a volunteer may declare.
pub const MAX_SEATS: u32 = 8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VolunteerState {
    pub id: String,
    pub x: f64,
    pub y: f64,
    pub seats: u32,
}

impl VolunteerState {
    pub fn location(&self) -> Point2D {
        Point2D::new(self.x, self.y)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.location().is_finite() {
            return Err(Error::field(
                "location",
                format!("volunteer {} has non-finite location", self.id),
            ));
        }
        if self.seats > MAX_SEATS {
            return Err(Error::field(
                "seats",
                format!("volunteer {} declares {} seats (max {MAX_SEATS})", self.id, self.seats),
            ));
        }
        Ok(())
    }
}

/// Per-link speed multipliers in (0, 1]; a missing link means 1.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CongestionEstimate {
    pub multipliers: BTreeMap<String, f64>,
}

impl CongestionEstimate {
    pub fn unit() -> Self {
        Self::default()
    }

    pub fn multiplier(&self, link_id: &str) -> f64 {
        self.multipliers.get(link_id).copied().unwrap_or(1.0)
    }

    pub fn validate(&self) -> Result<()> {
        for (id, m) in &self.multipliers {
            if !(*m > 0.0 && *m <= 1.0) {
                return Err(Error::field(
                    "congestion",
                    format!("multiplier for link {id} is {m}, expected (0, 1]"),
                ));
            }
        }
        Ok(())
    }

    /// Congestion-adjusted traversal time of a link.
    pub fn link_time(&self, link: &Link) -> f64 {
        link.length / (link.free_speed * self.multiplier(&link.id))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteAssignment {
    pub volunteer_id: String,
    pub seats: u32,
    /// `None` for volunteers whose start node is already outside the zone.
    pub exit_id: Option<String>,
    pub route: Route,
    pub route_polyline: Option<Polyline>,
    pub travel_time: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlanOutcome {
    pub routes: Vec<RouteAssignment>,
    /// Volunteers whose start node has no path to any exit.
    pub unreachable: Vec<String>,
}

/// Nearest node to `p`; ties go to the smallest node id.
pub fn snap_to_network(net: &RoadNetwork, p: &Point2D) -> Result<String> {
    net.nodes()
        .iter()
        .map(|n| (n.location().distance(p), &n.id))
        .min_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(b.1)))
        .map(|(_, id)| id.clone())
        .ok_or_else(|| Error::validation("cannot snap to an empty network"))
}

/// Node locations along the route followed by the end point on the
/// terminal link; `None` if the route has no extent.
pub fn route_polyline(net: &RoadNetwork, route: &Route) -> Option<Polyline> {
    let mut pts: Vec<Point2D> = route
        .nodes
        .iter()
        .filter_map(|id| net.node(id).map(|n| n.location()))
        .collect();
    if let Some(tl) = route.terminal_link.as_deref().and_then(|id| net.link(id)) {
        let a = net.node(&tl.from)?.location();
        let b = net.node(&tl.to)?.location();
        pts.push(a.lerp(&b, route.offset));
    }
    Polyline::from_points_dedup(pts)
}

fn plan_one(
    net: &RoadNetwork,
    zone: &Polygon,
    exits: &[ExitPoint],
    v: &VolunteerState,
    congestion: &CongestionEstimate,
) -> Result<Option<RouteAssignment>> {
    let origin = snap_to_network(net, &v.location())?;
    let origin_loc = net.node(&origin).expect("snapped node exists").location();
    if !point_in_polygon(&origin_loc, zone) {
        return Ok(Some(RouteAssignment {
            volunteer_id: v.id.clone(),
            seats: v.seats,
            exit_id: None,
            route: Route::stationary(&origin),
            route_polyline: None,
            travel_time: 0.0,
        }));
    }
    let tree = ShortestPathTree::build(net, &origin, |l| congestion.link_time(l))?;
    let mut best: Option<(f64, &ExitPoint, Route)> = None;
    for exit in exits {
        let Some(found) = tree.route_to(&exit.target())? else {
            continue;
        };
        let better = match &best {
            None => true,
            Some((t, e, _)) => match found.travel_time.total_cmp(t) {
                std::cmp::Ordering::Less => true,
                std::cmp::Ordering::Equal => exit.id < e.id,
                std::cmp::Ordering::Greater => false,
            },
        };
        if better {
            best = Some((found.travel_time, exit, found.route));
        }
    }
    Ok(best.map(|(travel_time, exit, route)| RouteAssignment {
        volunteer_id: v.id.clone(),
        seats: v.seats,
        exit_id: Some(exit.id.clone()),
        route_polyline: route_polyline(net, &route),
        route,
        travel_time,
    }))
}

/// Assign each volunteer the exit with minimum congestion-adjusted travel
/// time (ties by exit id). Results are ordered by volunteer id.
pub fn plan_routes(
    net: &RoadNetwork,
    zone: &Polygon,
    exits: &[ExitPoint],
    volunteers: &[VolunteerState],
    congestion: &CongestionEstimate,
) -> Result<PlanOutcome> {
    if exits.is_empty() {
        return Err(Error::validation("no exits for zone"));
    }
    congestion.validate()?;
    let mut seen = BTreeSet::new();
    for v in volunteers {
        v.validate()?;
        if !seen.insert(v.id.as_str()) {
            return Err(Error::DuplicateId(format!("volunteer {}", v.id)));
        }
    }
    let mut sorted: Vec<&VolunteerState> = volunteers.iter().collect();
    sorted.sort_by(|a, b| a.id.cmp(&b.id));

    let planned: Vec<Result<Option<RouteAssignment>>> = sorted
        .par_iter()
        .map(|v| plan_one(net, zone, exits, v, congestion))
        .collect();

    let mut outcome = PlanOutcome::default();
    for (v, r) in sorted.iter().zip(planned) {
        match r? {
            Some(a) => outcome.routes.push(a),
            None => outcome.unreachable.push(v.id.clone()),
        }
    }
    Ok(outcome)
}
