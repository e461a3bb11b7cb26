//! On-route pickup assignment of seekers to volunteer vehicles.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{point_to_polyline, Point2D, EPS};
use crate::network::{RoadNetwork, Route};
use crate::routing::{RouteAssignment, VolunteerState};

pub const DEFAULT_MAX_PICKUP_DISTANCE: f64 = 200.0;
pub const DEFAULT_DWELL: f64 = 30.0;

fn default_party_size() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeekerState {
    pub id: String,
    pub x: f64,
    pub y: f64,
    #[serde(default = "default_party_size")]
    pub party_size: u32,
}

impl SeekerState {
    pub fn location(&self) -> Point2D {
        Point2D::new(self.x, self.y)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.location().is_finite() {
            return Err(Error::field(
                "location",
                format!("seeker {} has non-finite location", self.id),
            ));
        }
        if self.party_size == 0 {
            return Err(Error::field(
                "party_size",
                format!("seeker {} has party_size 0", self.id),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AssignmentConfig {
    pub max_pickup_distance: f64,
}

impl Default for AssignmentConfig {
    fn default() -> Self {
        AssignmentConfig {
            max_pickup_distance: DEFAULT_MAX_PICKUP_DISTANCE,
        }
    }
}

impl AssignmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.max_pickup_distance > 0.0 && self.max_pickup_distance.is_finite()) {
            return Err(Error::field("max_pickup_distance", "must be positive"));
        }
        Ok(())
    }
}

/// A seeker close enough to a volunteer's route to be picked up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EligiblePair {
    pub seeker_id: String,
    pub volunteer_id: String,
    pub distance: f64,
    /// arc length of the pickup point along the route
    pub s: f64,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PickupStop {
    pub seeker_id: String,
    pub x: f64,
    pub y: f64,
    pub s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PickupPlan {
    pub assignments: BTreeMap<String, String>,
    pub stops: BTreeMap<String, Vec<PickupStop>>,
    pub unserved: Vec<String>,
}

impl PickupPlan {
    pub fn assigned_party_size(&self, seekers: &[SeekerState]) -> u64 {
        seekers
            .iter()
            .filter(|s| self.assignments.contains_key(&s.id))
            .map(|s| s.party_size as u64)
            .sum()
    }
}

/// Anything that offers a number of seats under an id.
pub trait SeatProvider {
    fn provider_id(&self) -> &str;
    fn seats(&self) -> u32;
}

impl SeatProvider for VolunteerState {
    fn provider_id(&self) -> &str {
        &self.id
    }
    fn seats(&self) -> u32 {
        self.seats
    }
}

impl SeatProvider for RouteAssignment {
    fn provider_id(&self) -> &str {
        &self.volunteer_id
    }
    fn seats(&self) -> u32 {
        self.seats
    }
}

/// All (seeker, volunteer) pairs within the pickup distance of the
/// volunteer's route, sorted by (seeker id, volunteer id).
pub fn eligible_pairs(
    routes: &[RouteAssignment],
    seekers: &[SeekerState],
    cfg: &AssignmentConfig,
) -> Vec<EligiblePair> {
    let mut pairs = Vec::new();
    for seeker in seekers {
        let p = seeker.location();
        for r in routes {
            let Some(line) = &r.route_polyline else {
                continue;
            };
            if r.exit_id.is_none() {
                continue;
            }
            let (distance, s) = point_to_polyline(&p, line);
            if distance <= cfg.max_pickup_distance {
                let at = line.point_at(s);
                pairs.push(EligiblePair {
                    seeker_id: seeker.id.clone(),
                    volunteer_id: r.volunteer_id.clone(),
                    distance,
                    s,
                    x: at.x,
                    y: at.y,
                });
            }
        }
    }
    pairs.sort_by(|a, b| {
        a.seeker_id
            .cmp(&b.seeker_id)
            .then_with(|| a.volunteer_id.cmp(&b.volunteer_id))
    });
    pairs
}

struct Matcher<'a> {
    sizes: Vec<u32>,
    capacity: Vec<u32>,
    load: Vec<u32>,
    /// per volunteer, assigned seeker indices kept ascending
    members: Vec<Vec<usize>>,
    /// per seeker, candidate pair references ordered by (distance, volunteer id)
    candidates: Vec<Vec<(usize, &'a EligiblePair)>>,
    owner: Vec<Option<usize>>,
}

impl Matcher<'_> {
    fn free(&self, v: usize) -> u32 {
        self.capacity[v] - self.load[v]
    }

    fn attach(&mut self, s: usize, v: usize) {
        self.load[v] += self.sizes[s];
        let pos = self.members[v].binary_search(&s).unwrap_err();
        self.members[v].insert(pos, s);
        self.owner[s] = Some(v);
    }

    fn detach(&mut self, s: usize, v: usize) {
        self.load[v] -= self.sizes[s];
        let pos = self.members[v].binary_search(&s).unwrap();
        self.members[v].remove(pos);
        self.owner[s] = None;
    }

    /// Depth-first augmenting search: seat `s` directly, or displace one
    /// current passenger of a candidate volunteer onto another volunteer.
    fn augment(&mut self, s: usize, visited: &mut [bool]) -> bool {
        let cands: Vec<usize> = self.candidates[s].iter().map(|(v, _)| *v).collect();
        for v in cands {
            if visited[v] {
                continue;
            }
            visited[v] = true;
            let need = self.sizes[s];
            if self.free(v) >= need {
                self.attach(s, v);
                return true;
            }
            let members = self.members[v].clone();
            for m in members {
                if self.free(v) + self.sizes[m] < need {
                    continue;
                }
                self.detach(m, v);
                if self.augment(m, visited) {
                    self.attach(s, v);
                    return true;
                }
                self.attach(m, v);
            }
        }
        false
    }
}

/// Maximum total party size served, with no party split and no volunteer
/// over capacity.
///
/// Seekers are processed in ascending id order; each runs one augmenting
/// search over its candidates in ascending (distance, volunteer id) order.
/// With unit party sizes this is an exact maximum b-matching.
pub fn assign<V: SeatProvider>(pairs: &[EligiblePair], volunteers: &[V], seekers: &[SeekerState]) -> PickupPlan {
    let mut seeker_order: Vec<&SeekerState> = seekers.iter().collect();
    seeker_order.sort_by(|a, b| a.id.cmp(&b.id));
    seeker_order.dedup_by(|a, b| a.id == b.id);
    let seeker_idx: HashMap<&str, usize> = seeker_order
        .iter()
        .enumerate()
        .map(|(i, s)| (s.id.as_str(), i))
        .collect();
    let mut vol_order: Vec<&V> = volunteers.iter().collect();
    vol_order.sort_by(|a, b| a.provider_id().cmp(b.provider_id()));
    let vol_idx: HashMap<&str, usize> = vol_order
        .iter()
        .enumerate()
        .map(|(i, v)| (v.provider_id(), i))
        .collect();

    let mut candidates: Vec<Vec<(usize, &EligiblePair)>> = vec![Vec::new(); seeker_order.len()];
    for p in pairs {
        if let (Some(&s), Some(&v)) = (
            seeker_idx.get(p.seeker_id.as_str()),
            vol_idx.get(p.volunteer_id.as_str()),
        ) {
            candidates[s].push((v, p));
        }
    }
    for c in &mut candidates {
        c.sort_by(|a, b| {
            a.1.distance
                .total_cmp(&b.1.distance)
                .then_with(|| a.1.volunteer_id.cmp(&b.1.volunteer_id))
        });
        c.dedup_by(|a, b| a.0 == b.0);
    }

    let mut m = Matcher {
        sizes: seeker_order.iter().map(|s| s.party_size).collect(),
        capacity: vol_order.iter().map(|v| v.seats()).collect(),
        load: vec![0; vol_order.len()],
        members: vec![Vec::new(); vol_order.len()],
        candidates,
        owner: vec![None; seeker_order.len()],
    };
    for s in 0..seeker_order.len() {
        if m.sizes[s] == 0 {
            continue;
        }
        let mut visited = vec![false; vol_order.len()];
        m.augment(s, &mut visited);
    }

    let mut plan = PickupPlan::default();
    for (s, seeker) in seeker_order.iter().enumerate() {
        match m.owner[s] {
            Some(v) => {
                let vid = vol_order[v].provider_id().to_string();
                let pair = m.candidates[s]
                    .iter()
                    .find(|(cv, _)| *cv == v)
                    .map(|(_, p)| *p)
                    .expect("assignment follows an eligible pair");
                plan.stops.entry(vid.clone()).or_default().push(PickupStop {
                    seeker_id: seeker.id.clone(),
                    x: pair.x,
                    y: pair.y,
                    s: pair.s,
                });
                plan.assignments.insert(seeker.id.clone(), vid);
            }
            None => plan.unserved.push(seeker.id.clone()),
        }
    }
    for stops in plan.stops.values_mut() {
        stops.sort_by(|a, b| a.s.total_cmp(&b.s).then_with(|| a.seeker_id.cmp(&b.seeker_id)));
    }
    plan
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledStop {
    pub seeker_id: String,
    pub link_id: String,
    /// index into the route's legs: full links first, then the terminal link
    pub leg: usize,
    pub s: f64,
    pub dwell: f64,
}

/// A route annotated with where the vehicle stops and for how long.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduledRoute {
    pub volunteer_id: String,
    pub route: Route,
    pub stops: Vec<ScheduledStop>,
}

impl ScheduledRoute {
    pub fn without_stops(volunteer_id: &str, route: Route) -> Self {
        ScheduledRoute {
            volunteer_id: volunteer_id.to_string(),
            route,
            stops: Vec::new(),
        }
    }

    /// Link ids in traversal order, terminal link last.
    pub fn legs(&self) -> impl Iterator<Item = &String> {
        self.route.links.iter().chain(self.route.terminal_link.iter())
    }

    /// Total dwell seconds on leg `leg`.
    pub fn dwell_on_leg(&self, leg: usize) -> f64 {
        self.stops.iter().filter(|s| s.leg == leg).map(|s| s.dwell).sum()
    }
}

/// Map each stop to the route leg containing its arc position.
pub fn inject_stops(
    net: &RoadNetwork,
    route: &RouteAssignment,
    stops: &[PickupStop],
    dwell: f64,
) -> Result<ScheduledRoute> {
    if !(dwell >= 0.0 && dwell.is_finite()) {
        return Err(Error::field("dwell", "dwell must be non-negative"));
    }
    let r = &route.route;
    let mut ends = Vec::new();
    let mut acc = 0.0;
    let legs: Vec<&String> = r.links.iter().chain(r.terminal_link.iter()).collect();
    for (i, id) in legs.iter().enumerate() {
        let l = net.link(id).ok_or_else(|| Error::Lookup(format!("link {id}")))?;
        let a = net.node(&l.from).expect("validated network").location();
        let b = net.node(&l.to).expect("validated network").location();
        let frac = if i == r.links.len() { r.offset } else { 1.0 };
        acc += a.distance(&b) * frac;
        ends.push(acc);
    }
    let total = route.route_polyline.as_ref().map_or(0.0, |p| p.length());
    let mut out = Vec::with_capacity(stops.len());
    let mut last_s = f64::NEG_INFINITY;
    for stop in stops {
        if stop.s < last_s {
            return Err(Error::validation("stops are not sorted by arc position"));
        }
        last_s = stop.s;
        if stop.s < 0.0 || stop.s > total + EPS.max(total * 1e-12) || legs.is_empty() {
            return Err(Error::validation(format!(
                "stop for seeker {} at s={} lies beyond route length {total}",
                stop.seeker_id, stop.s
            )));
        }
        let leg = ends.iter().position(|&e| stop.s <= e + EPS).unwrap_or(legs.len() - 1);
        out.push(ScheduledStop {
            seeker_id: stop.seeker_id.clone(),
            link_id: legs[leg].clone(),
            leg,
            s: stop.s,
            dwell,
        });
    }
    Ok(ScheduledRoute {
        volunteer_id: route.volunteer_id.clone(),
        route: r.clone(),
        stops: out,
    })
}

/// Pair each routed volunteer with its scheduled stops.
pub fn schedule_all(
    net: &RoadNetwork,
    routes: &[RouteAssignment],
    pickups: &PickupPlan,
    dwell: f64,
) -> Result<Vec<ScheduledRoute>> {
    let known: BTreeSet<&str> = routes.iter().map(|r| r.volunteer_id.as_str()).collect();
    if let Some(v) = pickups.stops.keys().find(|v| !known.contains(v.as_str())) {
        return Err(Error::Lookup(format!("pickup volunteer {v} has no route")));
    }
    routes
        .iter()
        .filter(|r| r.exit_id.is_some())
        .map(|r| {
            let stops = pickups.stops.get(&r.volunteer_id).map(Vec::as_slice).unwrap_or(&[]);
            inject_stops(net, r, stops, dwell)
        })
        .collect()
}
