mod common;

use std::collections::BTreeMap;

use common::*;
use leavenow::assignment::{assign, eligible_pairs, inject_stops, AssignmentConfig, PickupStop, SeekerState};
use leavenow::exits::compute_exits;
use leavenow::geometry::{point_to_polyline, Polygon};
use leavenow::network::RoadNetwork;
use leavenow::routing::{plan_routes, CongestionEstimate, PlanOutcome, VolunteerState};
use leavenow::sim::{run, SimConfig, VehicleAgent};
use rand::Rng;

fn fixture_plan() -> (RoadNetwork, PlanOutcome) {
    let net = RoadNetwork::from_json_str(&fixture_text("grid3.json")).unwrap();
    let zone = Polygon::from_json(&fixture_text("square_zone.json")).unwrap();
    let volunteers: Vec<VolunteerState> = serde_json::from_str(&fixture_text("volunteers.json")).unwrap();
    let exits = compute_exits(&net, &zone).unwrap();
    let plan = plan_routes(&net, &zone, &exits, &volunteers, &CongestionEstimate::unit()).unwrap();
    (net, plan)
}

#[test]
fn matches_exhaustive_optimum() {
    for seed in 0..60 {
        let inst = random_assignment(&mut rng(seed));
        let plan = assign(&inst.pairs, &inst.volunteers, &inst.seekers);
        let best = exhaustive_max(
            &inst.eligible,
            &inst.volunteers.iter().map(|v| v.seats).collect::<Vec<_>>(),
        );
        assert_eq!(plan.assignments.len(), best, "seed {seed}");

        // feasibility
        let mut load: BTreeMap<&str, u32> = BTreeMap::new();
        for (s, v) in &plan.assignments {
            assert!(inst.pairs.iter().any(|p| &p.seeker_id == s && &p.volunteer_id == v));
            *load.entry(v.as_str()).or_default() += 1;
        }
        for v in &inst.volunteers {
            assert!(load.get(v.id.as_str()).copied().unwrap_or(0) <= v.seats);
        }
        assert_eq!(plan.assignments.len() + plan.unserved.len(), inst.seekers.len());
        assert_eq!(plan, assign(&inst.pairs, &inst.volunteers, &inst.seekers));
    }
}

#[test]
fn eligible_pairs_match_distance_scan() {
    let (_, plan) = fixture_plan();
    let seekers: Vec<SeekerState> = serde_json::from_str(&fixture_text("seekers.json")).unwrap();
    let cfg = AssignmentConfig::default();
    let pairs = eligible_pairs(&plan.routes, &seekers, &cfg);
    let mut want = Vec::new();
    for s in &seekers {
        for r in &plan.routes {
            let Some(line) = &r.route_polyline else { continue };
            // dense sampling gives an upper bound on the true distance
            let n = 20_000;
            let d = (0..=n)
                .map(|i| {
                    line.point_at(line.length() * i as f64 / n as f64)
                        .distance(&s.location())
                })
                .fold(f64::INFINITY, f64::min);
            let exact = point_to_polyline(&s.location(), line).0;
            assert!(exact <= d + 1e-9 && d - exact < line.length() / n as f64);
            if exact <= cfg.max_pickup_distance {
                want.push((s.id.clone(), r.volunteer_id.clone()));
            }
        }
    }
    want.sort();
    let got: Vec<(String, String)> = pairs
        .iter()
        .map(|p| (p.seeker_id.clone(), p.volunteer_id.clone()))
        .collect();
    assert_eq!(got, want);
}

#[test]
fn larger_pickup_distance_never_serves_fewer() {
    let (_, plan) = fixture_plan();
    let mut r = rng(11);
    let seekers: Vec<SeekerState> = (0..15)
        .map(|i| SeekerState {
            id: format!("s{i:02}"),
            x: r.gen_range(500.0..1500.0),
            y: r.gen_range(500.0..1500.0),
            party_size: 1,
        })
        .collect();
    let mut last = 0;
    for d in [10.0, 50.0, 100.0, 200.0, 400.0, 800.0] {
        let cfg = AssignmentConfig { max_pickup_distance: d };
        let served = assign(&eligible_pairs(&plan.routes, &seekers, &cfg), &plan.routes, &seekers)
            .assignments
            .len();
        assert!(served >= last);
        last = served;
    }
    assert!(last > 0);
}

fn simulate_one(net: &RoadNetwork, route: leavenow::assignment::ScheduledRoute) -> f64 {
    let agent = VehicleAgent {
        id: "v".into(),
        route,
        departure_time: 0.0,
    };
    run(net, &[agent], &SimConfig::default()).unwrap().vehicles[0]
        .evacuation_time
        .unwrap()
}

#[test]
fn one_stop_costs_at_least_the_dwell() {
    let (net, plan) = fixture_plan();
    let route = plan.routes.iter().find(|r| r.volunteer_id == "v1").unwrap();
    let mid = route.route_polyline.as_ref().unwrap().length() / 2.0;
    let stop = PickupStop {
        seeker_id: "s".into(),
        x: 0.0,
        y: 0.0,
        s: mid,
    };
    let plain = simulate_one(&net, inject_stops(&net, route, &[], 30.0).unwrap());
    let with_stop = simulate_one(&net, inject_stops(&net, route, &[stop], 30.0).unwrap());
    assert!(with_stop >= plain + 30.0, "{with_stop} vs {plain}");
}

#[test]
fn two_stops_on_one_link_accumulate() {
    let (net, plan) = fixture_plan();
    let route = plan.routes.iter().find(|r| r.volunteer_id == "v1").unwrap();
    let stops: Vec<PickupStop> = [100.0, 300.0]
        .iter()
        .enumerate()
        .map(|(i, &s)| PickupStop {
            seeker_id: format!("s{i}"),
            x: 0.0,
            y: 0.0,
            s,
        })
        .collect();
    let sched = inject_stops(&net, route, &stops, 30.0).unwrap();
    assert_eq!(sched.stops[0].link_id, sched.stops[1].link_id);
    assert_eq!(sched.dwell_on_leg(sched.stops[0].leg), 60.0);
    let beyond = PickupStop {
        seeker_id: "far".into(),
        x: 0.0,
        y: 0.0,
        s: 1e6,
    };
    assert!(inject_stops(&net, route, &[beyond], 30.0).is_err());
}
