//! Independent oracles and random instance generators shared by the
//! integration and acceptance tests.

#![allow(dead_code)]

use std::collections::{HashMap, VecDeque};
use std::path::{Path, PathBuf};

use leavenow::assignment::{EligiblePair, SeekerState};
use leavenow::geometry::{Point2D, Polygon};
use leavenow::network::{Link, Node, RoadNetwork};
use leavenow::routing::VolunteerState;
use leavenow::sim::{SimEvent, SimObserver, StepSnapshot, VehicleAgent};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

pub fn fixture_text(name: &str) -> String {
    std::fs::read_to_string(fixture(name)).unwrap()
}

pub fn cli(args: &[&str]) -> (i32, String, String) {
    let mut out = Vec::new();
    let mut err = Vec::new();
    let code = leavenow::cli::dispatch(
        std::iter::once("leavenow").chain(args.iter().copied()),
        &mut out,
        &mut err,
    );
    (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
}

// ---------------------------------------------------------------- geometry

/// Winding number of `poly` around `p`; nonzero means inside.
pub fn winding_number(p: (f64, f64), poly: &[(f64, f64)]) -> i32 {
    let mut wn = 0;
    for i in 0..poly.len() {
        let a = poly[i];
        let b = poly[(i + 1) % poly.len()];
        let cross = (b.0 - a.0) * (p.1 - a.1) - (p.0 - a.0) * (b.1 - a.1);
        if a.1 <= p.1 {
            if b.1 > p.1 && cross > 0.0 {
                wn += 1;
            }
        } else if b.1 <= p.1 && cross < 0.0 {
            wn -= 1;
        }
    }
    wn
}

#[derive(Debug, Clone, Copy)]
pub struct OracleExit {
    pub offset: f64,
    pub x: f64,
    pub y: f64,
}

/// Every link tested against every polygon edge; a crossing is an exit when
/// the link is inside just before it and outside just after it.
pub fn brute_force_exits(nodes: &[Node], links: &[Link], zone: &[(f64, f64)]) -> Vec<(String, OracleExit)> {
    let pos: HashMap<&str, (f64, f64)> = nodes.iter().map(|n| (n.id.as_str(), (n.x, n.y))).collect();
    let mut out = Vec::new();
    for l in links {
        let a = pos[l.from.as_str()];
        let b = pos[l.to.as_str()];
        let d = (b.0 - a.0, b.1 - a.1);
        let mut ts = Vec::new();
        for i in 0..zone.len() {
            let p = zone[i];
            let q = zone[(i + 1) % zone.len()];
            let e = (q.0 - p.0, q.1 - p.1);
            let denom = d.0 * e.1 - d.1 * e.0;
            if denom == 0.0 {
                continue;
            }
            let w = (p.0 - a.0, p.1 - a.1);
            let t = (w.0 * e.1 - w.1 * e.0) / denom;
            let u = (w.0 * d.1 - w.1 * d.0) / denom;
            if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
                ts.push(t);
            }
        }
        ts.sort_by(f64::total_cmp);
        ts.dedup_by(|x, y| (*x - *y).abs() < 1e-12);
        for t in ts {
            let len = (d.0 * d.0 + d.1 * d.1).sqrt();
            let h = 1e-6 / len;
            let at = |s: f64| (a.0 + d.0 * s, a.1 + d.1 * s);
            // a crossing at the from-node itself counts as leaving
            let inside_before = t - h < 0.0 || winding_number(at(t - h), zone) != 0;
            let outside_after = t + h <= 1.0 && winding_number(at(t + h), zone) == 0;
            if inside_before && outside_after {
                let (x, y) = at(t);
                out.push((l.id.clone(), OracleExit { offset: t, x, y }));
            }
        }
    }
    out
}

/// Random simple quadrilateral: four points sorted by angle around their
/// centroid.
pub fn random_quad(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> Polygon {
    loop {
        let mut pts: Vec<(f64, f64)> = (0..4).map(|_| (rng.gen_range(lo..hi), rng.gen_range(lo..hi))).collect();
        let cx = pts.iter().map(|p| p.0).sum::<f64>() / 4.0;
        let cy = pts.iter().map(|p| p.1).sum::<f64>() / 4.0;
        pts.sort_by(|a, b| (a.1 - cy).atan2(a.0 - cx).total_cmp(&(b.1 - cy).atan2(b.0 - cx)));
        let pairs: Vec<[f64; 2]> = pts.iter().map(|p| [p.0, p.1]).collect();
        if let Ok(poly) = Polygon::from_pairs(&pairs) {
            // reject slivers; relative so small ranges still terminate
            if poly.area() > 0.01 * (hi - lo) * (hi - lo) {
                return poly;
            }
        }
    }
}

pub fn vertices(poly: &Polygon) -> Vec<(f64, f64)> {
    poly.vertices().iter().map(|p| (p.x, p.y)).collect()
}

// ----------------------------------------------------------------- routing

/// Random strongly-irregular digraph with integer link times, so every sum
/// of times is exact in f64.
pub fn random_graph(rng: &mut ChaCha8Rng, n: usize) -> (RoadNetwork, HashMap<String, f64>) {
    let nodes: Vec<Node> = (0..n)
        .map(|i| Node {
            id: format!("n{i:02}"),
            x: rng.gen_range(0.0..1000.0),
            y: rng.gen_range(0.0..1000.0),
        })
        .collect();
    let m = rng.gen_range(n..=4 * n);
    let mut links = Vec::new();
    let mut times = HashMap::new();
    for k in 0..m {
        let a = rng.gen_range(0..n);
        let mut b = rng.gen_range(0..n);
        while b == a {
            b = rng.gen_range(0..n);
        }
        let straight = Point2D::new(nodes[a].x, nodes[a].y).distance(&Point2D::new(nodes[b].x, nodes[b].y));
        let id = format!("l{k:03}");
        times.insert(id.clone(), rng.gen_range(1..=100) as f64);
        links.push(Link {
            id,
            from: nodes[a].id.clone(),
            to: nodes[b].id.clone(),
            length: straight + 1.0,
            free_speed: 10.0,
            lanes: 1,
            flow_capacity: 600.0,
        });
    }
    (RoadNetwork::new(nodes, links).unwrap(), times)
}

pub fn floyd_warshall(net: &RoadNetwork, time: &HashMap<String, f64>) -> Vec<Vec<f64>> {
    let n = net.nodes().len();
    let mut d = vec![vec![f64::INFINITY; n]; n];
    for (i, row) in d.iter_mut().enumerate() {
        row[i] = 0.0;
    }
    for l in net.links() {
        let a = net.node_idx(&l.from).unwrap();
        let b = net.node_idx(&l.to).unwrap();
        d[a][b] = d[a][b].min(time[&l.id]);
    }
    for k in 0..n {
        for i in 0..n {
            for j in 0..n {
                let via = d[i][k] + d[k][j];
                if via < d[i][j] {
                    d[i][j] = via;
                }
            }
        }
    }
    d
}

// -------------------------------------------------------------- assignment

/// Maximum number of unit-size seekers that can be seated, by exhaustive
/// search over every seeker's choice (memoized on remaining seats).
pub fn exhaustive_max(eligible: &[Vec<usize>], seats: &[u32]) -> usize {
    fn go(
        i: usize,
        eligible: &[Vec<usize>],
        left: &mut Vec<u32>,
        memo: &mut HashMap<(usize, Vec<u32>), usize>,
    ) -> usize {
        if i == eligible.len() {
            return 0;
        }
        if let Some(&v) = memo.get(&(i, left.clone())) {
            return v;
        }
        let mut best = go(i + 1, eligible, left, memo);
        for &v in &eligible[i] {
            if left[v] > 0 {
                left[v] -= 1;
                best = best.max(1 + go(i + 1, eligible, left, memo));
                left[v] += 1;
            }
        }
        memo.insert((i, left.clone()), best);
        best
    }
    go(0, eligible, &mut seats.to_vec(), &mut HashMap::new())
}

pub struct AssignmentInstance {
    pub volunteers: Vec<VolunteerState>,
    pub seekers: Vec<SeekerState>,
    pub pairs: Vec<EligiblePair>,
    /// per seeker, indices of eligible volunteers
    pub eligible: Vec<Vec<usize>>,
}

pub fn random_assignment(rng: &mut ChaCha8Rng) -> AssignmentInstance {
    let nv = rng.gen_range(1..=6);
    let ns = rng.gen_range(0..=10);
    let volunteers: Vec<VolunteerState> = (0..nv)
        .map(|i| VolunteerState {
            id: format!("v{i}"),
            x: 0.0,
            y: 0.0,
            seats: rng.gen_range(0..=3),
        })
        .collect();
    let seekers: Vec<SeekerState> = (0..ns)
        .map(|i| SeekerState {
            id: format!("s{i}"),
            x: 0.0,
            y: 0.0,
            party_size: 1,
        })
        .collect();
    let density = rng.gen_range(0.1..0.8);
    let mut pairs = Vec::new();
    let mut eligible = vec![Vec::new(); ns];
    for (si, s) in seekers.iter().enumerate() {
        for (vi, v) in volunteers.iter().enumerate() {
            if rng.gen_bool(density) {
                eligible[si].push(vi);
                pairs.push(EligiblePair {
                    seeker_id: s.id.clone(),
                    volunteer_id: v.id.clone(),
                    distance: rng.gen_range(0..200) as f64,
                    s: rng.gen_range(0.0..1000.0),
                    x: 0.0,
                    y: 0.0,
                });
            }
        }
    }
    pairs.shuffle(rng);
    AssignmentInstance {
        volunteers,
        seekers,
        pairs,
        eligible,
    }
}

// --------------------------------------------------------------- simulator

/// Free-flow time of a vehicle's route plus its total dwell, computed from
/// the network directly.
pub fn free_flow_bound(net: &RoadNetwork, agent: &VehicleAgent) -> f64 {
    let r = &agent.route.route;
    let mut t: f64 = r.links.iter().map(|id| net.link(id).unwrap().free_flow_time()).sum();
    if let Some(last) = &r.terminal_link {
        t += r.offset * net.link(last).unwrap().free_flow_time();
    }
    t + agent.route.stops.iter().map(|s| s.dwell).sum::<f64>()
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Where {
    Staged,
    On(usize),
    Exited,
    Stranded,
}

/// Rebuilds vehicle positions from the event stream alone and checks
/// conservation, storage and per-link FIFO at every step.
pub struct InvariantChecker {
    storage: Vec<usize>,
    place: Vec<Where>,
    occupancy: Vec<usize>,
    entry_order: Vec<VecDeque<usize>>,
    pub steps: usize,
    pub violations: Vec<String>,
}

impl InvariantChecker {
    pub fn new(net: &RoadNetwork, vehicles: usize, vehicle_length: f64) -> Self {
        let storage = net
            .links()
            .iter()
            .map(|l| ((l.length * l.lanes as f64 / vehicle_length).floor() as usize).max(1))
            .collect();
        InvariantChecker {
            storage,
            place: vec![Where::Staged; vehicles],
            occupancy: vec![0; net.links().len()],
            entry_order: vec![VecDeque::new(); net.links().len()],
            steps: 0,
            violations: Vec::new(),
        }
    }

    fn count(&self, w: impl Fn(&Where) -> bool) -> usize {
        self.place.iter().filter(|p| w(p)).count()
    }
}

impl SimObserver for InvariantChecker {
    fn on_event(&mut self, e: &SimEvent) {
        match *e {
            SimEvent::EnteredLink { vehicle, link, .. } => {
                self.place[vehicle] = Where::On(link);
                self.occupancy[link] += 1;
                self.entry_order[link].push_back(vehicle);
                if self.occupancy[link] > self.storage[link] {
                    self.violations.push(format!("link {link} over storage"));
                }
            }
            SimEvent::LeftLink { vehicle, link, .. } => {
                if self.place[vehicle] != Where::On(link) {
                    self.violations
                        .push(format!("vehicle {vehicle} left link {link} it was not on"));
                }
                match self.entry_order[link].pop_front() {
                    Some(first) if first == vehicle => {}
                    other => self
                        .violations
                        .push(format!("FIFO broken on link {link}: {other:?} before {vehicle}")),
                }
                self.occupancy[link] -= 1;
                self.place[vehicle] = Where::Staged;
            }
            SimEvent::Exited { vehicle, .. } => self.place[vehicle] = Where::Exited,
            SimEvent::Stranded { vehicle } => {
                if let Where::On(link) = self.place[vehicle] {
                    self.occupancy[link] -= 1;
                }
                self.place[vehicle] = Where::Stranded;
            }
        }
    }

    fn on_step(&mut self, s: &StepSnapshot<'_>) {
        self.steps += 1;
        let total = self.place.len();
        if s.staged + s.on_network + s.exited + s.stranded != total {
            self.violations.push(format!("conservation broken at t={}", s.time));
        }
        let on = self.count(|p| matches!(p, Where::On(_)));
        let exited = self.count(|p| *p == Where::Exited);
        let stranded = self.count(|p| *p == Where::Stranded);
        let staged = self.count(|p| *p == Where::Staged);
        if (on, exited, stranded) != (s.on_network, s.exited, s.stranded) || on + exited + stranded + staged != total {
            self.violations.push(format!(
                "event-derived counts ({staged},{on},{exited},{stranded}) disagree with snapshot at t={}",
                s.time
            ));
        }
        for (i, (&occ, &cap)) in self.occupancy.iter().zip(&self.storage).enumerate() {
            if occ > cap {
                self.violations
                    .push(format!("link {i} holds {occ} > {cap} at t={}", s.time));
            }
        }
        if s.stranded == 0 && self.occupancy != s.occupancy {
            self.violations.push(format!("occupancy mismatch at t={}", s.time));
        }
    }
}

/// Spearman rank correlation (average ranks on ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0 + 1.0;
            for k in i..=j {
                r[idx[k]] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

/// Network and vehicles of a generated scenario, planned and scheduled the
/// way the sweep does it.
pub fn scenario_vehicles(spec: &leavenow::scenario::ScenarioSpec) -> (RoadNetwork, Vec<VehicleAgent>) {
    use leavenow::pipeline::{build_vehicles, plan_evacuation};
    let sc = leavenow::scenario::generate(spec).unwrap();
    let plan = plan_evacuation(
        &sc.network,
        &sc.zone,
        &sc.volunteers,
        &sc.seekers,
        &leavenow::routing::CongestionEstimate::unit(),
        &spec.assignment,
    )
    .unwrap();
    let departures = leavenow::scenario::departure_times(spec, plan.routes.routes.len());
    let vehicles = build_vehicles(&sc.network, &plan.routes, &plan.pickups, spec.sim.dwell, &departures).unwrap();
    (sc.network, vehicles)
}

/// Run with the invariant checker attached; returns violations (empty when
/// everything held) and the number of steps observed.
pub fn checked_run(
    net: &RoadNetwork,
    vehicles: &[VehicleAgent],
    cfg: &leavenow::sim::SimConfig,
) -> (Vec<String>, usize) {
    let mut checker = InvariantChecker::new(net, vehicles.len(), cfg.vehicle_length);
    let result = leavenow::sim::run_observed(net, vehicles, cfg, &mut checker).unwrap();
    let mut violations = checker.violations;
    for (agent, outcome) in vehicles.iter().zip(&result.vehicles) {
        if let Some(t) = outcome.evacuation_time {
            let bound = free_flow_bound(net, agent);
            if t + 1e-9 < bound {
                violations.push(format!(
                    "vehicle {} evacuated in {t} < free-flow bound {bound}",
                    agent.id
                ));
            }
        }
    }
    (violations, checker.steps)
}

// ----------------------------------------------------------------- service

pub fn temp_service(dir: &Path) -> leavenow::service::Service {
    use leavenow::service::{bus::TopicBus, store::ManualClock, Service};
    use std::sync::Arc;
    Service::open(
        Some(dir.to_path_buf()),
        Arc::new(ManualClock::new(1_000, 7)),
        Arc::new(TopicBus::new()),
    )
    .unwrap()
}

pub fn grid3_session(svc: &leavenow::service::Service) -> String {
    use leavenow::service::CreateSession;
    let network = RoadNetwork::from_json_str(&fixture_text("grid3.json")).unwrap();
    svc.create_session(CreateSession {
        network,
        assignment: Default::default(),
    })
    .unwrap()
}

/// Drive a session on grid3 with a random mix of operations, ignoring the
/// ones the service rejects (they must leave no trace).
pub fn random_operations(svc: &leavenow::service::Service, session: &str, rng: &mut ChaCha8Rng, n: usize) {
    use leavenow::service::{Location, SeekerRegistration, VolunteerRegistration};
    let mut clients: Vec<String> = Vec::new();
    for _ in 0..n {
        let before = svc.snapshot(session).unwrap();
        let ok = match rng.gen_range(0..10) {
            0..=2 => svc
                .register_volunteer(
                    session,
                    VolunteerRegistration {
                        x: rng.gen_range(0.0..2000.0),
                        y: rng.gen_range(0.0..2000.0),
                        seats: rng.gen_range(0..4),
                    },
                )
                .map(|v| clients.push(v.client.id().to_string()))
                .is_ok(),
            3..=4 => svc
                .register_seeker(
                    session,
                    SeekerRegistration {
                        x: rng.gen_range(0.0..2000.0),
                        y: rng.gen_range(0.0..2000.0),
                        party_size: rng.gen_range(1..3),
                    },
                )
                .map(|v| clients.push(v.client.id().to_string()))
                .is_ok(),
            5..=6 => {
                let id = clients.choose(rng).cloned().unwrap_or_else(|| "v999999".into());
                let loc = Location {
                    x: rng.gen_range(0.0..2000.0),
                    y: rng.gen_range(0.0..2000.0),
                };
                svc.update_location(session, &id, loc).is_ok()
            }
            7 => svc.set_zone(session, random_quad(rng, 200.0, 1800.0)).is_ok(),
            _ => svc.replan(session).is_ok(),
        };
        if !ok {
            assert_eq!(
                svc.snapshot(session).unwrap(),
                before,
                "rejected operation changed state"
            );
        }
    }
}

/// Write a snapshot's inputs as the files the CLI reads: network, zone,
/// volunteers, seekers.
pub fn export_snapshot(snap: &leavenow::service::session::Snapshot, dir: &Path) -> [PathBuf; 4] {
    let write = |name: &str, text: String| {
        let p = dir.join(name);
        std::fs::write(&p, text).unwrap();
        p
    };
    let volunteers: Vec<&VolunteerState> = snap.volunteers.iter().map(|r| &r.state).collect();
    let seekers: Vec<&SeekerState> = snap.seekers.iter().map(|r| &r.state).collect();
    let zone = snap.zone.as_ref().expect("zone set").to_pairs();
    [
        write("network.json", snap.network.to_json()),
        write("zone.json", serde_json::to_string(&zone).unwrap()),
        write("volunteers.json", serde_json::to_string(&volunteers).unwrap()),
        write("seekers.json", serde_json::to_string(&seekers).unwrap()),
    ]
}

/// The published plan compared with the CLI run on the same inputs;
/// returns a description of the first mismatch.
pub fn plan_vs_cli(svc: &leavenow::service::Service, session: &str) -> Result<(), String> {
    use leavenow::cli::to_json_text;
    let snap = svc.snapshot(session).unwrap();
    let plan = snap.plan.clone().ok_or("no plan")?;
    let dir = tempfile::tempdir().unwrap();
    let [network, zone, volunteers, seekers] = export_snapshot(&snap, dir.path());
    let s = |p: &Path| p.to_str().unwrap().to_string();
    let (code, routes, err) = cli(&[
        "plan",
        "--network",
        &s(&network),
        "--zone",
        &s(&zone),
        "--volunteers",
        &s(&volunteers),
    ]);
    if code != 0 {
        return Err(format!("cli plan failed: {err}"));
    }
    if routes != to_json_text(&plan.routes) {
        return Err("routes differ".into());
    }
    let plan_file = dir.path().join("plan.json");
    std::fs::write(&plan_file, &routes).unwrap();
    let (code, pickups, err) = cli(&["assign", "--plan", &s(&plan_file), "--seekers", &s(&seekers)]);
    if code != 0 {
        return Err(format!("cli assign failed: {err}"));
    }
    if pickups != to_json_text(&plan.pickups) {
        return Err("pickups differ".into());
    }
    let pickup_file = dir.path().join("pickups.json");
    std::fs::write(&pickup_file, &pickups).unwrap();
    let (code, sim, err) = cli(&[
        "simulate",
        "--network",
        &s(&network),
        "--plan",
        &s(&plan_file),
        "--pickups",
        &s(&pickup_file),
    ]);
    if code != 0 {
        return Err(format!("cli simulate failed: {err}"));
    }
    let outcome = leavenow::routing::PlanOutcome {
        routes: plan.routes.clone(),
        unreachable: Vec::new(),
    };
    let direct =
        leavenow::pipeline::simulate_plan(&snap.network, &outcome, &plan.pickups, &Default::default()).unwrap();
    if sim != to_json_text(&direct) {
        return Err("simulation differs".into());
    }
    Ok(())
}
