//! Deterministic discrete-time link-queue traffic simulation.
//!
//! Each step runs three phases: staged vehicles whose departure time has
//! come enter their first link if it has storage room; vehicles whose
//! traversal time has elapsed move (in entry order) from the running part
//! of their link to its exit queue; then links, in ascending id order,
//! release queued vehicles while flow tokens last and the next link has
//! storage room. A vehicle released from its terminal link has crossed its
//! exit point and leaves the network.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};

use crate::assignment::ScheduledRoute;
use crate::error::{Error, Result};
use crate::network::RoadNetwork;
use crate::routing::CongestionEstimate;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// seconds
    pub time_step: f64,
    /// seconds
    pub horizon: f64,
    /// meters of storage taken by one vehicle
    pub vehicle_length: f64,
    /// seconds per pickup stop
    pub dwell: f64,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            time_step: 1.0,
            horizon: 14_400.0,
            vehicle_length: 7.5,
            dwell: 30.0,
            seed: 0,
        }
    }
}

impl SimConfig {
    // negated comparisons so NaN is rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if !(self.time_step > 0.0 && self.time_step.is_finite()) {
            return Err(Error::field("time_step", "time_step must be positive"));
        }
        if !(self.horizon >= self.time_step) {
            return Err(Error::field("horizon", "horizon must be at least one time step"));
        }
        if !(self.vehicle_length > 0.0) {
            return Err(Error::field("vehicle_length", "vehicle_length must be positive"));
        }
        if !(self.dwell >= 0.0) {
            return Err(Error::field("dwell", "dwell must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleAgent {
    pub id: String,
    pub route: ScheduledRoute,
    pub departure_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "state", rename_all = "kebab-case")]
pub enum VehicleState {
    Staged,
    OnLink { link: String, remaining: f64 },
    Queued { link: String },
    Exited { time: f64 },
    Stranded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleOutcome {
    pub id: String,
    /// seconds from departure to crossing the exit; `None` when stranded
    pub evacuation_time: Option<f64>,
    /// free-flow route time plus total dwell
    pub lower_bound: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct LinkStats {
    pub traversals: u64,
    /// summed free-flow traversal seconds (step-rounded)
    pub expected_s: f64,
    /// summed observed traversal seconds, dwell excluded
    pub observed_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub vehicles: Vec<VehicleOutcome>,
    pub mean_evac: f64,
    pub std_evac: f64,
    pub exited: usize,
    pub stranded: usize,
    pub unserved_seekers: usize,
    pub link_stats: BTreeMap<String, LinkStats>,
    pub congestion: CongestionEstimate,
}

/// Something the simulator reports to while running. Indices refer to
/// the input vehicle list and to `RoadNetwork::links()`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SimEvent {
    EnteredLink { vehicle: usize, link: usize, time: f64 },
    LeftLink { vehicle: usize, link: usize, time: f64 },
    Exited { vehicle: usize, time: f64 },
    Stranded { vehicle: usize },
}

#[derive(Debug)]
pub struct StepSnapshot<'a> {
    pub time: f64,
    pub staged: usize,
    pub on_network: usize,
    pub exited: usize,
    pub stranded: usize,
    pub occupancy: &'a [usize],
    pub storage: &'a [usize],
}

pub trait SimObserver {
    fn on_event(&mut self, _event: &SimEvent) {}
    fn on_step(&mut self, _step: &StepSnapshot<'_>) {}
}

impl SimObserver for () {}

struct Leg {
    link: usize,
    steps: u64,
    /// step-rounded free-flow seconds
    expected: f64,
    dwell: f64,
}

struct Vehicle {
    legs: Vec<Leg>,
    leg: usize,
    depart_step: u64,
    entered_step: u64,
    state: Phase,
}

#[derive(Clone, Copy, PartialEq)]
enum Phase {
    Staged,
    Running,
    Queued,
    Exited(u64),
    Stranded,
}

struct LinkQueue {
    running: VecDeque<(usize, u64)>,
    queue: VecDeque<usize>,
    storage: usize,
    flow_per_step: f64,
    tokens: f64,
    burst: f64,
}

impl LinkQueue {
    fn occupancy(&self) -> usize {
        self.running.len() + self.queue.len()
    }
}

fn steps_for(seconds: f64, dt: f64) -> u64 {
    let raw = seconds / dt;
    let rounded = raw.round();
    // absorb float noise such as 10.000000000000002
    let steps = if (raw - rounded).abs() < 1e-9 {
        rounded
    } else {
        raw.ceil()
    };
    (steps as u64).max(1)
}

/// Storage capacity in vehicles: floor(length * lanes / vehicle_length), at least 1.
pub fn storage_capacity(length: f64, lanes: u32, vehicle_length: f64) -> usize {
    ((length * lanes as f64 / vehicle_length).floor() as usize).max(1)
}

pub fn run(net: &RoadNetwork, vehicles: &[VehicleAgent], cfg: &SimConfig) -> Result<SimResult> {
    run_observed(net, vehicles, cfg, &mut ())
}

pub fn run_observed<O: SimObserver>(
    net: &RoadNetwork,
    agents: &[VehicleAgent],
    cfg: &SimConfig,
    observer: &mut O,
) -> Result<SimResult> {
    cfg.validate()?;
    let dt = cfg.time_step;
    let links = net.links();

    let mut vehicles = Vec::with_capacity(agents.len());
    let mut lower_bounds = Vec::with_capacity(agents.len());
    for a in agents {
        a.route.route.validate(net)?;
        if a.route.route.terminal_link.is_none() {
            return Err(Error::validation(format!("vehicle {} has no exit leg", a.id)));
        }
        if !(a.departure_time >= 0.0 && a.departure_time.is_finite()) {
            return Err(Error::validation(format!(
                "vehicle {} has negative departure time",
                a.id
            )));
        }
        let n_full = a.route.route.links.len();
        let mut legs = Vec::new();
        let mut bound = 0.0;
        for (i, id) in a.route.legs().enumerate() {
            let li = net
                .link_idx(id)
                .ok_or_else(|| Error::validation(format!("route references unknown link {id}")))?;
            let frac = if i == n_full { a.route.route.offset } else { 1.0 };
            let ff = frac * links[li].free_flow_time();
            let dwell = a.route.dwell_on_leg(i);
            bound += ff + dwell;
            legs.push(Leg {
                link: li,
                steps: steps_for(ff + dwell, dt),
                expected: steps_for(ff, dt) as f64 * dt,
                dwell,
            });
        }
        lower_bounds.push(bound);
        vehicles.push(Vehicle {
            legs,
            leg: 0,
            depart_step: steps_for_departure(a.departure_time, dt),
            entered_step: 0,
            state: Phase::Staged,
        });
    }

    let mut queues: Vec<LinkQueue> = links
        .iter()
        .map(|l| {
            let flow_per_step = l.flow_capacity * dt / 3600.0;
            LinkQueue {
                running: VecDeque::new(),
                queue: VecDeque::new(),
                storage: storage_capacity(l.length, l.lanes, cfg.vehicle_length),
                flow_per_step,
                tokens: flow_per_step.max(1.0),
                burst: flow_per_step.max(1.0),
            }
        })
        .collect();
    let storage: Vec<usize> = queues.iter().map(|q| q.storage).collect();
    let mut occupancy = vec![0usize; links.len()];
    let mut order: Vec<usize> = (0..links.len()).collect();
    order.sort_by(|&a, &b| links[a].id.cmp(&links[b].id));

    let mut stats: Vec<LinkStats> = vec![LinkStats::default(); links.len()];
    let mut staged: Vec<usize> = (0..vehicles.len()).collect();
    staged.sort_by_key(|&v| (vehicles[v].depart_step, v));
    let mut staged: VecDeque<usize> = staged.into();
    let mut waiting: Vec<usize> = Vec::new();
    let mut on_network = 0usize;
    let mut exited = 0usize;
    let last_step = (cfg.horizon / dt + 1e-9).floor() as u64;

    let mut t: u64 = 0;
    while t <= last_step && exited < vehicles.len() {
        let now = t as f64 * dt;

        // departures, in (departure step, input order)
        while staged.front().is_some_and(|&v| vehicles[v].depart_step <= t) {
            waiting.push(staged.pop_front().unwrap());
        }
        waiting.sort_unstable();
        let mut still_waiting = Vec::new();
        for v in waiting.drain(..) {
            let li = vehicles[v].legs[0].link;
            if queues[li].occupancy() < queues[li].storage {
                let steps = vehicles[v].legs[0].steps;
                queues[li].running.push_back((v, t + steps));
                vehicles[v].state = Phase::Running;
                vehicles[v].entered_step = t;
                on_network += 1;
                observer.on_event(&SimEvent::EnteredLink {
                    vehicle: v,
                    link: li,
                    time: now,
                });
            } else {
                still_waiting.push(v);
            }
        }
        waiting = still_waiting;

        // traversal done -> exit queue, strictly in entry order
        for q in queues.iter_mut() {
            while q.running.front().is_some_and(|&(_, ready)| ready <= t) {
                let (v, _) = q.running.pop_front().unwrap();
                vehicles[v].state = Phase::Queued;
                q.queue.push_back(v);
            }
        }

        // discharge
        for &li in &order {
            {
                let q = &mut queues[li];
                q.tokens = (q.tokens + q.flow_per_step).min(q.burst);
            }
            while queues[li].tokens >= 1.0 {
                let Some(&v) = queues[li].queue.front() else {
                    break;
                };
                let is_last = vehicles[v].leg + 1 == vehicles[v].legs.len();
                if !is_last {
                    let next = vehicles[v].legs[vehicles[v].leg + 1].link;
                    if queues[next].occupancy() >= queues[next].storage {
                        break;
                    }
                }
                queues[li].queue.pop_front();
                queues[li].tokens -= 1.0;
                let veh = &mut vehicles[v];
                let leg = &veh.legs[veh.leg];
                let s = &mut stats[li];
                s.traversals += 1;
                s.expected_s += leg.expected;
                s.observed_s += (t - veh.entered_step) as f64 * dt - leg.dwell;
                observer.on_event(&SimEvent::LeftLink {
                    vehicle: v,
                    link: li,
                    time: now,
                });
                if is_last {
                    veh.state = Phase::Exited(t);
                    on_network -= 1;
                    exited += 1;
                    observer.on_event(&SimEvent::Exited { vehicle: v, time: now });
                } else {
                    veh.leg += 1;
                    veh.entered_step = t;
                    veh.state = Phase::Running;
                    let next = veh.legs[veh.leg].link;
                    let ready = t + veh.legs[veh.leg].steps;
                    queues[next].running.push_back((v, ready));
                    observer.on_event(&SimEvent::EnteredLink {
                        vehicle: v,
                        link: next,
                        time: now,
                    });
                }
            }
        }

        for (o, q) in occupancy.iter_mut().zip(&queues) {
            *o = q.occupancy();
        }
        observer.on_step(&StepSnapshot {
            time: now,
            staged: staged.len() + waiting.len(),
            on_network,
            exited,
            stranded: 0,
            occupancy: &occupancy,
            storage: &storage,
        });
        t += 1;
    }

    let mut stranded = 0;
    for (v, veh) in vehicles.iter_mut().enumerate() {
        if !matches!(veh.state, Phase::Exited(_)) {
            veh.state = Phase::Stranded;
            stranded += 1;
            observer.on_event(&SimEvent::Stranded { vehicle: v });
        }
    }
    if stranded > 0 {
        observer.on_step(&StepSnapshot {
            time: t as f64 * dt,
            staged: 0,
            on_network: 0,
            exited,
            stranded,
            occupancy: &occupancy,
            storage: &storage,
        });
    }

    let outcomes: Vec<VehicleOutcome> = agents
        .iter()
        .zip(&vehicles)
        .zip(lower_bounds)
        .map(|((a, veh), lower_bound)| VehicleOutcome {
            id: a.id.clone(),
            evacuation_time: match veh.state {
                Phase::Exited(step) => Some(step as f64 * dt - a.departure_time),
                _ => None,
            },
            lower_bound,
        })
        .collect();
    let (mean_evac, std_evac) = mean_std(outcomes.iter().filter_map(|o| o.evacuation_time));
    let link_stats: BTreeMap<String, LinkStats> = stats
        .into_iter()
        .enumerate()
        .filter(|(_, s)| s.traversals > 0)
        .map(|(i, s)| (links[i].id.clone(), s))
        .collect();
    let mut result = SimResult {
        vehicles: outcomes,
        mean_evac,
        std_evac,
        exited,
        stranded,
        unserved_seekers: 0,
        link_stats,
        congestion: CongestionEstimate::unit(),
    };
    result.congestion = congestion_feedback(&result);
    Ok(result)
}

fn steps_for_departure(departure: f64, dt: f64) -> u64 {
    let raw = departure / dt;
    if (raw - raw.round()).abs() < 1e-9 {
        raw.round() as u64
    } else {
        raw.ceil() as u64
    }
}

/// Population mean and standard deviation; (0, 0) for an empty sample.
pub fn mean_std(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let v: Vec<f64> = values.collect();
    if v.is_empty() {
        return (0.0, 0.0);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Per-link speed multiplier: free-flow over observed mean traversal time,
/// clamped to (0, 1]. Links nobody traversed are left out (multiplier 1).
pub fn congestion_feedback(result: &SimResult) -> CongestionEstimate {
    let multipliers = result
        .link_stats
        .iter()
        .filter(|(_, s)| s.traversals > 0 && s.observed_s > 0.0)
        .map(|(id, s)| {
            let m = (s.expected_s / s.observed_s).min(1.0);
            (id.clone(), m.max(f64::MIN_POSITIVE))
        })
        .collect();
    CongestionEstimate { multipliers }
}

impl SimResult {
    pub fn state_of(&self, vehicle: usize) -> VehicleState {
        match self.vehicles[vehicle].evacuation_time {
            Some(time) => VehicleState::Exited { time },
            None => VehicleState::Stranded,
        }
    }
}
