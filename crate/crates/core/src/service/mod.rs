//! Coordination service: evacuation sessions with client registration,
//! operator zones and replans, persisted as event logs and pushed to
//! subscribers over a topic bus.

pub mod bus;
pub mod http;
pub mod session;
pub mod store;

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, MutexGuard, RwLock};

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::assignment::{AssignmentConfig, SeekerState};
use crate::error::{Error, Result};
use crate::exits::{compute_exits, ExitPoint};
use crate::geometry::{Point2D, Polygon};
use crate::network::RoadNetwork;
use crate::pipeline::plan_evacuation;
use crate::routing::{CongestionEstimate, VolunteerState};

use bus::{events_topic, plan_topic, Broker, Subscription, TopicBus};
use session::{Client, Event, EventRecord, PlanView, Role, SessionState, Snapshot};
use store::{log_path, read_log, Clock, EventLog, SystemClock};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub network: RoadNetwork,
    #[serde(default)]
    pub assignment: AssignmentConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolunteerRegistration {
    pub x: f64,
    pub y: f64,
    pub seats: u32,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeekerRegistration {
    pub x: f64,
    pub y: f64,
    #[serde(default = "one")]
    pub party_size: u32,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Location {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClientView {
    #[serde(flatten)]
    pub client: Client,
    pub updated_at: u64,
}

struct Slot {
    state: SessionState,
    log: Option<EventLog>,
}

pub struct Service {
    sessions: RwLock<BTreeMap<String, Arc<Mutex<Slot>>>>,
    next_session: Mutex<u64>,
    data_dir: Option<PathBuf>,
    clock: Arc<dyn Clock>,
    bus: Arc<dyn Broker>,
}

fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|p| p.into_inner())
}

fn session_number(id: &str) -> Option<u64> {
    id.strip_prefix("session-")?.parse().ok()
}

impl Service {
    /// In-memory service with the system clock.
    pub fn in_memory() -> Self {
        Self::open(None, Arc::new(SystemClock), Arc::new(TopicBus::new())).expect("no disk access")
    }

    /// Open a service, replaying every `*.jsonl` log under `data_dir`.
    pub fn open(data_dir: Option<PathBuf>, clock: Arc<dyn Clock>, bus: Arc<dyn Broker>) -> Result<Self> {
        let mut sessions = BTreeMap::new();
        let mut next = 1;
        if let Some(dir) = &data_dir {
            std::fs::create_dir_all(dir)?;
            let mut paths: Vec<PathBuf> = std::fs::read_dir(dir)?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.extension().is_some_and(|e| e == "jsonl"))
                .collect();
            paths.sort();
            for path in paths {
                let records = read_log(&path)?;
                if records.is_empty() {
                    log::warn!("{}: empty event log skipped", path.display());
                    continue;
                }
                let state =
                    SessionState::replay(&records).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
                if let Some(n) = session_number(&state.id) {
                    next = next.max(n + 1);
                }
                if let Some(plan) = &state.plan {
                    bus.publish(&plan_topic(&state.id), serde_json::to_value(plan)?, true);
                }
                log::info!("replayed session {} ({} events)", state.id, records.len());
                let slot = Slot {
                    log: Some(EventLog::open(path)?),
                    state,
                };
                sessions.insert(slot.state.id.clone(), Arc::new(Mutex::new(slot)));
            }
        }
        Ok(Service {
            sessions: RwLock::new(sessions),
            next_session: Mutex::new(next),
            data_dir,
            clock,
            bus,
        })
    }

    pub fn bus(&self) -> &Arc<dyn Broker> {
        &self.bus
    }

    pub fn session_ids(&self) -> Vec<String> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .keys()
            .cloned()
            .collect()
    }

    fn slot(&self, id: &str) -> Result<Arc<Mutex<Slot>>> {
        self.sessions
            .read()
            .unwrap_or_else(|p| p.into_inner())
            .get(id)
            .cloned()
            .ok_or_else(|| Error::NotFound(format!("session {id}")))
    }

    fn commit(&self, slot: &mut Slot, events: Vec<Event>) -> Result<Vec<EventRecord>> {
        let mut out = Vec::with_capacity(events.len());
        for event in events {
            let rec = EventRecord {
                seq: slot.state.log_position + 1,
                timestamp: self.clock.now_ms(),
                event,
            };
            if let Some(log) = &mut slot.log {
                log.append(&rec)?;
            }
            slot.state.apply(&rec)?;
            self.publish(&slot.state, &rec);
            out.push(rec);
        }
        Ok(out)
    }

    fn publish(&self, state: &SessionState, rec: &EventRecord) {
        let topic = events_topic(&state.id);
        let message = match &rec.event {
            Event::Register { client } => {
                json!({"event": "client-updated", "data": client_json(state, client.id())})
            }
            Event::UpdateLocation { client_id, .. } => {
                json!({"event": "client-updated", "data": client_json(state, client_id)})
            }
            Event::SetZone { zone } => {
                json!({"event": "zone-set", "data": {"zone": zone, "exits": state.exits}})
            }
            Event::PlanPublished { plan } => {
                let value = serde_json::to_value(plan).unwrap_or_default();
                self.bus.publish(&plan_topic(&state.id), value.clone(), true);
                json!({"event": "plan-published", "data": value})
            }
            Event::SessionCreated { .. } | Event::Replan { .. } => return,
        };
        self.bus.publish(&topic, message, false);
    }

    pub fn create_session(&self, req: CreateSession) -> Result<String> {
        req.assignment.validate()?;
        let mut next = lock(&self.next_session);
        let id = format!("session-{:06}", *next);
        let log = match &self.data_dir {
            Some(dir) => Some(EventLog::open(log_path(dir, &id))?),
            None => None,
        };
        let first = EventRecord {
            seq: 1,
            timestamp: self.clock.now_ms(),
            event: Event::SessionCreated {
                session_id: id.clone(),
                network: req.network,
                assignment: req.assignment,
            },
        };
        let mut slot = Slot {
            state: SessionState::from_first(&first)?,
            log,
        };
        if let Some(log) = &mut slot.log {
            log.append(&first)?;
        }
        *next += 1;
        self.sessions
            .write()
            .unwrap_or_else(|p| p.into_inner())
            .insert(id.clone(), Arc::new(Mutex::new(slot)));
        log::info!("created session {id}");
        Ok(id)
    }

    pub fn register_volunteer(&self, session: &str, reg: VolunteerRegistration) -> Result<ClientView> {
        let slot = self.slot(session)?;
        let mut slot = lock(&slot);
        let v = VolunteerState {
            id: slot.state.next_client_id(Role::Volunteer),
            x: reg.x,
            y: reg.y,
            seats: reg.seats,
        };
        v.validate()?;
        self.register(&mut slot, Client::Volunteer(v))
    }

    pub fn register_seeker(&self, session: &str, reg: SeekerRegistration) -> Result<ClientView> {
        let slot = self.slot(session)?;
        let mut slot = lock(&slot);
        let s = SeekerState {
            id: slot.state.next_client_id(Role::Seeker),
            x: reg.x,
            y: reg.y,
            party_size: reg.party_size,
        };
        s.validate()?;
        self.register(&mut slot, Client::Seeker(s))
    }

    fn register(&self, slot: &mut Slot, client: Client) -> Result<ClientView> {
        let id = client.id().to_string();
        self.commit(slot, vec![Event::Register { client }])?;
        client_view(&slot.state, &id)
    }

    pub fn update_location(&self, session: &str, client_id: &str, loc: Location) -> Result<ClientView> {
        if !Point2D::new(loc.x, loc.y).is_finite() {
            return Err(Error::field("location", "location must be finite"));
        }
        let slot = self.slot(session)?;
        let mut slot = lock(&slot);
        client_view(&slot.state, client_id)?;
        self.commit(
            &mut slot,
            vec![Event::UpdateLocation {
                client_id: client_id.to_string(),
                x: loc.x,
                y: loc.y,
            }],
        )?;
        client_view(&slot.state, client_id)
    }

    pub fn set_zone(&self, session: &str, zone: Polygon) -> Result<Vec<ExitPoint>> {
        let slot = self.slot(session)?;
        let mut slot = lock(&slot);
        // validates the polygon against the network before anything is logged
        compute_exits(&slot.state.network, &zone)?;
        self.commit(&mut slot, vec![Event::SetZone { zone }])?;
        Ok(slot.state.exits.clone())
    }

    /// Plan routes and pickups against the current client set and publish
    /// the result under the next version.
    pub fn replan(&self, session: &str) -> Result<PlanView> {
        let slot = self.slot(session)?;
        let mut slot = lock(&slot);
        let st = &slot.state;
        let zone = st
            .zone
            .clone()
            .ok_or_else(|| Error::Precondition("no zone set for this session".into()))?;
        if st.volunteers.is_empty() {
            return Err(Error::Precondition("no volunteers registered".into()));
        }
        let volunteers = st.volunteer_states();
        let seekers = st.seeker_states();
        let plan = plan_evacuation(
            &st.network,
            &zone,
            &volunteers,
            &seekers,
            &CongestionEstimate::unit(),
            &st.assignment,
        )?;
        let version = st.version() + 1;
        let view = PlanView {
            version,
            routes: plan.routes.routes,
            unreachable: plan.routes.unreachable,
            pickups: plan.pickups,
        };
        self.commit(
            &mut slot,
            vec![
                Event::Replan {
                    version,
                    volunteers: volunteers.len(),
                    seekers: seekers.len(),
                },
                Event::PlanPublished { plan: view.clone() },
            ],
        )?;
        log::info!("session {session}: published plan v{version}");
        Ok(view)
    }

    pub fn snapshot(&self, session: &str) -> Result<Snapshot> {
        let slot = self.slot(session)?;
        let slot = lock(&slot);
        Ok(slot.state.snapshot())
    }

    pub fn plan(&self, session: &str) -> Result<PlanView> {
        let slot = self.slot(session)?;
        let slot = lock(&slot);
        slot.state
            .plan
            .clone()
            .ok_or_else(|| Error::NotFound(format!("no plan published for session {session}")))
    }

    /// Subscribe to the session's event topic. The retained value is the
    /// last published plan, if any.
    pub fn subscribe(&self, session: &str) -> Result<Subscription> {
        let slot = self.slot(session)?;
        // hold the session lock so no event slips between the two reads
        let _guard = lock(&slot);
        let mut sub = self.bus.subscribe(&events_topic(session));
        sub.retained = self.bus.subscribe(&plan_topic(session)).retained;
        Ok(sub)
    }

    /// Rebuild the session from its on-disk log, independently of the live
    /// state.
    pub fn replay_from_disk(&self, session: &str) -> Result<Snapshot> {
        let slot = self.slot(session)?;
        let path = {
            let slot = lock(&slot);
            match &slot.log {
                Some(log) => log.path().to_path_buf(),
                None => return Err(Error::Precondition("session is not persisted".into())),
            }
        };
        Ok(SessionState::replay(&read_log(&path)?)?.snapshot())
    }
}

fn client_view(state: &SessionState, id: &str) -> Result<ClientView> {
    if let Some(v) = state.volunteers.get(id) {
        return Ok(ClientView {
            client: Client::Volunteer(v.state.clone()),
            updated_at: v.updated_at,
        });
    }
    if let Some(s) = state.seekers.get(id) {
        return Ok(ClientView {
            client: Client::Seeker(s.state.clone()),
            updated_at: s.updated_at,
        });
    }
    Err(Error::NotFound(format!("client {id}")))
}

fn client_json(state: &SessionState, id: &str) -> serde_json::Value {
    client_view(state, id)
        .ok()
        .and_then(|c| serde_json::to_value(c).ok())
        .unwrap_or_default()
}
