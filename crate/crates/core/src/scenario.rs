//! Seeded synthetic scenarios: grid road network, square danger zone,
//! uniformly placed volunteers and seekers.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::assignment::{AssignmentConfig, SeekerState};
use crate::error::{Error, Result};
use crate::geometry::{point_in_polygon, Point2D, Polygon};
use crate::network::{Link, Node, RoadNetwork};
use crate::routing::{VolunteerState, MAX_SEATS};
use crate::sim::SimConfig;

/// Area of the default danger zone, m².
pub const DEFAULT_ZONE_AREA: f64 = 30.0e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LinkDefaults {
    pub free_speed: f64,
    pub lanes: u32,
    pub flow_capacity: f64,
}

impl Default for LinkDefaults {
    fn default() -> Self {
        LinkDefaults {
            free_speed: 13.89,
            lanes: 1,
            flow_capacity: 600.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VolunteerSpec {
    pub count: usize,
    /// seat counts drawn uniformly from this list
    pub seats: Vec<u32>,
}

impl Default for VolunteerSpec {
    fn default() -> Self {
        VolunteerSpec {
            count: 100,
            seats: vec![1, 2, 3, 4],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub grid_rows: usize,
    pub grid_cols: usize,
    /// meters between adjacent grid nodes
    pub cell: f64,
    /// defaults to a 30 km² square centered on the grid
    pub zone: Option<Polygon>,
    pub volunteers: VolunteerSpec,
    pub seekers: usize,
    pub seed: u64,
    pub link: LinkDefaults,
    pub assignment: AssignmentConfig,
    pub sim: SimConfig,
    /// departures drawn uniformly from [0, departure_window] seconds
    pub departure_window: f64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        ScenarioSpec {
            grid_rows: 13,
            grid_cols: 13,
            cell: 500.0,
            zone: None,
            volunteers: VolunteerSpec::default(),
            seekers: 100,
            seed: 1,
            link: LinkDefaults::default(),
            assignment: AssignmentConfig::default(),
            sim: SimConfig::default(),
            departure_window: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub network: RoadNetwork,
    pub zone: Polygon,
    pub volunteers: Vec<VolunteerState>,
    pub seekers: Vec<SeekerState>,
}

/// Link capacity of the congested preset, veh/h.
pub const CONGESTED_FLOW_CAPACITY: f64 = 50.0;
/// Departure spread of the congested preset, seconds.
pub const CONGESTED_DEPARTURE_WINDOW: f64 = 600.0;

impl ScenarioSpec {
    /// Default grid and zone with capacity low enough that a few hundred
    /// vehicles saturate the exits within the departure window.
    pub fn congested() -> Self {
        ScenarioSpec {
            link: LinkDefaults {
                flow_capacity: CONGESTED_FLOW_CAPACITY,
                ..LinkDefaults::default()
            },
            departure_window: CONGESTED_DEPARTURE_WINDOW,
            ..ScenarioSpec::default()
        }
    }

    pub fn extent(&self) -> (f64, f64) {
        (
            (self.grid_cols.saturating_sub(1)) as f64 * self.cell,
            (self.grid_rows.saturating_sub(1)) as f64 * self.cell,
        )
    }

    /// Square of [`DEFAULT_ZONE_AREA`] centered on the grid extent.
    pub fn default_zone(&self) -> Result<Polygon> {
        let (w, h) = self.extent();
        let half = DEFAULT_ZONE_AREA.sqrt() / 2.0;
        let (cx, cy) = (w / 2.0, h / 2.0);
        Polygon::from_pairs(&[
            [cx - half, cy - half],
            [cx + half, cy - half],
            [cx + half, cy + half],
            [cx - half, cy + half],
        ])
    }

    pub fn resolved_zone(&self) -> Result<Polygon> {
        match &self.zone {
            Some(z) => Ok(z.clone()),
            None => self.default_zone(),
        }
    }

    // negated comparisons so NaN is rejected too
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<()> {
        if self.grid_rows < 2 || self.grid_cols < 2 {
            return Err(Error::field("grid_rows", "grid needs at least 2 rows and 2 columns"));
        }
        if !(self.cell > 0.0 && self.cell.is_finite()) {
            return Err(Error::field("cell", "cell size must be positive"));
        }
        if self.volunteers.seats.is_empty() {
            return Err(Error::field("volunteers.seats", "seat distribution is empty"));
        }
        if self.volunteers.seats.iter().any(|&s| s > MAX_SEATS) {
            return Err(Error::field("volunteers.seats", format!("seats above {MAX_SEATS}")));
        }
        if !(self.departure_window >= 0.0) {
            return Err(Error::field("departure_window", "must be non-negative"));
        }
        self.assignment.validate()?;
        self.sim.validate()?;
        let zone = self.resolved_zone()?;
        let (lo, hi) = zone.bounding_box();
        let (w, h) = self.extent();
        if lo.x < 0.0 || lo.y < 0.0 || hi.x > w || hi.y > h {
            return Err(Error::field(
                "zone",
                format!("zone does not fit within the {w} x {h} m grid extent"),
            ));
        }
        Ok(())
    }
}

pub fn node_id(row: usize, col: usize) -> String {
    format!("n{row:03}_{col:03}")
}

/// Bidirectional grid, two directed links per edge, ids "from-to".
pub fn grid_network(rows: usize, cols: usize, cell: f64, link: &LinkDefaults) -> Result<RoadNetwork> {
    let mut nodes = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            nodes.push(Node {
                id: node_id(r, c),
                x: c as f64 * cell,
                y: r as f64 * cell,
            });
        }
    }
    let mut links = Vec::new();
    let mut add = |a: String, b: String| {
        links.push(Link {
            id: format!("{a}-{b}"),
            from: a,
            to: b,
            length: cell,
            free_speed: link.free_speed,
            lanes: link.lanes,
            flow_capacity: link.flow_capacity,
        });
    };
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                add(node_id(r, c), node_id(r, c + 1));
                add(node_id(r, c + 1), node_id(r, c));
            }
            if r + 1 < rows {
                add(node_id(r, c), node_id(r + 1, c));
                add(node_id(r + 1, c), node_id(r, c));
            }
        }
    }
    RoadNetwork::new(nodes, links)
}

fn sample_in_zone(rng: &mut ChaCha8Rng, zone: &Polygon) -> Point2D {
    let (lo, hi) = zone.bounding_box();
    loop {
        let p = Point2D::new(rng.gen_range(lo.x..hi.x), rng.gen_range(lo.y..hi.y));
        if point_in_polygon(&p, zone) {
            return p;
        }
    }
}

/// Build the scenario. Volunteers and seekers come from separate RNG
/// streams, so changing one count leaves the other population unchanged
/// and the first `k` volunteers are the same for every count `>= k`.
pub fn generate(spec: &ScenarioSpec) -> Result<Scenario> {
    spec.validate()?;
    let network = grid_network(spec.grid_rows, spec.grid_cols, spec.cell, &spec.link)?;
    let zone = spec.resolved_zone()?;

    let mut vrng = ChaCha8Rng::seed_from_u64(spec.seed);
    vrng.set_stream(1);
    let volunteers = (0..spec.volunteers.count)
        .map(|i| {
            let p = sample_in_zone(&mut vrng, &zone);
            let seats = spec.volunteers.seats[vrng.gen_range(0..spec.volunteers.seats.len())];
            VolunteerState {
                id: format!("v{i:05}"),
                x: p.x,
                y: p.y,
                seats,
            }
        })
        .collect();

    let mut srng = ChaCha8Rng::seed_from_u64(spec.seed);
    srng.set_stream(2);
    let seekers = (0..spec.seekers)
        .map(|i| {
            let p = sample_in_zone(&mut srng, &zone);
            SeekerState {
                id: format!("s{i:05}"),
                x: p.x,
                y: p.y,
                party_size: 1,
            }
        })
        .collect();

    Ok(Scenario {
        network,
        zone,
        volunteers,
        seekers,
    })
}

/// Departure times for `n` vehicles, deterministic in the spec seed.
pub fn departure_times(spec: &ScenarioSpec, n: usize) -> Vec<f64> {
    if spec.departure_window <= 0.0 {
        return vec![0.0; n];
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    rng.set_stream(3);
    (0..n)
        .map(|_| rng.gen_range(0.0..=spec.departure_window).floor())
        .collect()
}
