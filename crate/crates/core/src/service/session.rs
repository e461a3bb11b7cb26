//! Session state and the events that build it. State is only ever changed by
//! applying an [`EventRecord`], so replaying a log reproduces it exactly.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assignment::{AssignmentConfig, PickupPlan, SeekerState};
use crate::error::{Error, Result};
use crate::exits::{compute_exits, ExitPoint};
use crate::geometry::Polygon;
use crate::network::RoadNetwork;
use crate::routing::{RouteAssignment, VolunteerState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Volunteer,
    Seeker,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "role", rename_all = "lowercase")]
pub enum Client {
    Volunteer(VolunteerState),
    Seeker(SeekerState),
}

impl Client {
    pub fn id(&self) -> &str {
        match self {
            Client::Volunteer(v) => &v.id,
            Client::Seeker(s) => &s.id,
        }
    }
}

/// A registered client plus the time of its last change (ms since epoch).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registered<T> {
    #[serde(flatten)]
    pub state: T,
    pub updated_at: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanView {
    pub version: u64,
    pub routes: Vec<RouteAssignment>,
    pub unreachable: Vec<String>,
    pub pickups: PickupPlan,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "payload", rename_all = "kebab-case")]
pub enum Event {
    SessionCreated {
        session_id: String,
        network: RoadNetwork,
        #[serde(default)]
        assignment: AssignmentConfig,
    },
    Register {
        client: Client,
    },
    UpdateLocation {
        client_id: String,
        x: f64,
        y: f64,
    },
    SetZone {
        zone: Polygon,
    },
    /// Marks the client snapshot a plan was computed from.
    Replan {
        version: u64,
        volunteers: usize,
        seekers: usize,
    },
    PlanPublished {
        plan: PlanView,
    },
}

impl Event {
    pub fn kind(&self) -> &'static str {
        match self {
            Event::SessionCreated { .. } => "session-created",
            Event::Register { .. } => "register",
            Event::UpdateLocation { .. } => "update-location",
            Event::SetZone { .. } => "set-zone",
            Event::Replan { .. } => "replan",
            Event::PlanPublished { .. } => "plan-published",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub seq: u64,
    pub timestamp: u64,
    #[serde(flatten)]
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub session_id: String,
    pub network: Arc<RoadNetwork>,
    pub assignment: AssignmentConfig,
    pub zone: Option<Polygon>,
    pub exits: Vec<ExitPoint>,
    pub volunteers: Vec<Registered<VolunteerState>>,
    pub seekers: Vec<Registered<SeekerState>>,
    pub version: u64,
    pub plan: Option<PlanView>,
    pub log_position: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionState {
    pub id: String,
    pub network: Arc<RoadNetwork>,
    pub assignment: AssignmentConfig,
    pub zone: Option<Polygon>,
    pub exits: Vec<ExitPoint>,
    pub volunteers: BTreeMap<String, Registered<VolunteerState>>,
    pub seekers: BTreeMap<String, Registered<SeekerState>>,
    pub plan: Option<PlanView>,
    pub log_position: u64,
}

impl SessionState {
    /// State after the first record, which must be `session-created`.
    pub fn from_first(rec: &EventRecord) -> Result<Self> {
        let Event::SessionCreated {
            session_id,
            network,
            assignment,
        } = &rec.event
        else {
            return Err(Error::Parse(format!(
                "event log must start with session-created, found {}",
                rec.event.kind()
            )));
        };
        if rec.seq != 1 {
            return Err(Error::Parse(format!("first event has seq {}, expected 1", rec.seq)));
        }
        Ok(SessionState {
            id: session_id.clone(),
            network: Arc::new(network.clone()),
            assignment: *assignment,
            zone: None,
            exits: Vec::new(),
            volunteers: BTreeMap::new(),
            seekers: BTreeMap::new(),
            plan: None,
            log_position: 1,
        })
    }

    /// Rebuild a session from its complete log.
    pub fn replay(records: &[EventRecord]) -> Result<Self> {
        let (first, rest) = records
            .split_first()
            .ok_or_else(|| Error::Parse("empty event log".into()))?;
        let mut state = Self::from_first(first)?;
        for rec in rest {
            state.apply(rec)?;
        }
        Ok(state)
    }

    pub fn version(&self) -> u64 {
        self.plan.as_ref().map_or(0, |p| p.version)
    }

    pub fn next_client_id(&self, role: Role) -> String {
        match role {
            Role::Volunteer => format!("v{:06}", self.volunteers.len() + 1),
            Role::Seeker => format!("s{:06}", self.seekers.len() + 1),
        }
    }

    pub fn apply(&mut self, rec: &EventRecord) -> Result<()> {
        if rec.seq != self.log_position + 1 {
            return Err(Error::Parse(format!(
                "event seq {} does not follow {}",
                rec.seq, self.log_position
            )));
        }
        let at = rec.timestamp;
        match &rec.event {
            Event::SessionCreated { .. } => {
                return Err(Error::Parse(format!("duplicate session-created at seq {}", rec.seq)));
            }
            Event::Register { client } => {
                let taken = self.volunteers.contains_key(client.id()) || self.seekers.contains_key(client.id());
                if taken {
                    return Err(Error::DuplicateId(format!("client {}", client.id())));
                }
                match client {
                    Client::Volunteer(v) => {
                        self.volunteers.insert(
                            v.id.clone(),
                            Registered {
                                state: v.clone(),
                                updated_at: at,
                            },
                        );
                    }
                    Client::Seeker(s) => {
                        self.seekers.insert(
                            s.id.clone(),
                            Registered {
                                state: s.clone(),
                                updated_at: at,
                            },
                        );
                    }
                }
            }
            Event::UpdateLocation { client_id, x, y } => {
                if let Some(v) = self.volunteers.get_mut(client_id) {
                    (v.state.x, v.state.y, v.updated_at) = (*x, *y, at);
                } else if let Some(s) = self.seekers.get_mut(client_id) {
                    (s.state.x, s.state.y, s.updated_at) = (*x, *y, at);
                } else {
                    return Err(Error::NotFound(format!("client {client_id}")));
                }
            }
            Event::SetZone { zone } => {
                self.exits = compute_exits(&self.network, zone)?;
                self.zone = Some(zone.clone());
            }
            Event::Replan { .. } => {}
            Event::PlanPublished { plan } => {
                if plan.version <= self.version() {
                    return Err(Error::Parse(format!(
                        "plan version {} does not exceed {}",
                        plan.version,
                        self.version()
                    )));
                }
                self.plan = Some(plan.clone());
            }
        }
        self.log_position = rec.seq;
        Ok(())
    }

    pub fn volunteer_states(&self) -> Vec<VolunteerState> {
        self.volunteers.values().map(|r| r.state.clone()).collect()
    }

    pub fn seeker_states(&self) -> Vec<SeekerState> {
        self.seekers.values().map(|r| r.state.clone()).collect()
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            session_id: self.id.clone(),
            network: self.network.clone(),
            assignment: self.assignment,
            zone: self.zone.clone(),
            exits: self.exits.clone(),
            volunteers: self.volunteers.values().cloned().collect(),
            seekers: self.seekers.values().cloned().collect(),
            version: self.version(),
            plan: self.plan.clone(),
            log_position: self.log_position,
        }
    }
}
