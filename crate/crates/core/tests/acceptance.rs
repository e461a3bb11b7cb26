//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any failed.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use leavenow::assignment::assign;
use leavenow::exits::compute_exits;
use leavenow::network::{shortest_path, LinkTarget, ShortestPathTree};
use leavenow::scenario::{grid_network, LinkDefaults, ScenarioSpec};
use leavenow::service::Service;
use leavenow::sweep::{compare_car_sharing, sweep};
use rand::Rng;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<(), String> {
    let took = start.elapsed();
    check(took < limit, || format!("took {took:.1?}, limit {limit:?}"))
}

fn exit_correctness() -> Outcome {
    let start = Instant::now();
    let mut exits = 0;
    for seed in 0..100 {
        let mut r = rng(seed);
        let rows = r.gen_range(3..=12);
        let cols = r.gen_range(3..=12);
        let cell = r.gen_range(100.0..600.0);
        let net = grid_network(rows, cols, cell, &LinkDefaults::default()).map_err(|e| e.to_string())?;
        let (w, h) = ((cols - 1) as f64 * cell, (rows - 1) as f64 * cell);
        let zone = random_quad(&mut r, -0.1 * w.max(h), 1.1 * w.max(h));
        let got = compute_exits(&net, &zone).map_err(|e| e.to_string())?;
        let mut want = brute_force_exits(net.nodes(), net.links(), &vertices(&zone));
        want.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.offset.total_cmp(&b.1.offset)));
        check(got.len() == want.len(), || {
            format!("seed {seed}: {} exits, oracle {}", got.len(), want.len())
        })?;
        for (g, (link, o)) in got.iter().zip(&want) {
            check(
                &g.link_id == link && (g.x - o.x).abs() <= 1e-6 && (g.y - o.y).abs() <= 1e-6,
                || {
                    format!(
                        "seed {seed}: {} at ({}, {}) vs {link} at ({}, {})",
                        g.link_id, g.x, g.y, o.x, o.y
                    )
                },
            )?;
        }
        exits += got.len();
    }
    within(start, Duration::from_secs(10))?;
    Ok(format!("100 instances, {exits} exits, {:.2?}", start.elapsed()))
}

fn routing_correctness() -> Outcome {
    let mut pairs = 0;
    let mut routes = 0;
    for seed in 0..50 {
        let mut r = rng(10_000 + seed);
        let n = r.gen_range(2..=50);
        let (net, times) = random_graph(&mut r, n);
        let fw = floyd_warshall(&net, &times);
        for (origin, row) in fw.iter().enumerate() {
            let tree =
                ShortestPathTree::build(&net, &net.nodes()[origin].id, |l| times[&l.id]).map_err(|e| e.to_string())?;
            for (target, &want) in row.iter().enumerate() {
                let got = tree.time_to_node(target).unwrap_or(f64::INFINITY);
                check(got == want, || {
                    format!("seed {seed}: {origin}->{target} = {got}, oracle {want}")
                })?;
                pairs += 1;
            }
        }
        let targets: Vec<LinkTarget> = net
            .links()
            .iter()
            .map(|l| LinkTarget {
                link_id: l.id.clone(),
                offset: r.gen_range(0.0..=1.0),
            })
            .collect();
        let found = shortest_path(&net, &net.nodes()[0].id, &targets, |l| times[&l.id]).map_err(|e| e.to_string())?;
        for (_, p) in found {
            let summed = p.route.travel_time(&net, |l| times[&l.id]).map_err(|e| e.to_string())?;
            check((summed - p.travel_time).abs() <= 1e-6, || {
                format!("seed {seed}: route {summed} vs {}", p.travel_time)
            })?;
            routes += 1;
        }
    }
    Ok(format!("50 graphs, {pairs} node pairs exact, {routes} route sums"))
}

fn assignment_optimality() -> Outcome {
    let mut seated = 0;
    for seed in 0..200 {
        let inst = random_assignment(&mut rng(20_000 + seed));
        let plan = assign(&inst.pairs, &inst.volunteers, &inst.seekers);
        let seats: Vec<u32> = inst.volunteers.iter().map(|v| v.seats).collect();
        let best = exhaustive_max(&inst.eligible, &seats);
        check(plan.assignments.len() == best, || {
            format!("seed {seed}: {} assigned, optimum {best}", plan.assignments.len())
        })?;
        seated += best;
    }
    Ok(format!("200 instances optimal, {seated} seekers seated"))
}

fn simulator_invariants() -> Outcome {
    let mut steps = 0;
    for seed in 1..=20 {
        let mut spec = ScenarioSpec::congested();
        spec.seed = seed;
        spec.sim.seed = seed;
        let (net, vehicles) = scenario_vehicles(&spec);
        let (violations, n) = checked_run(&net, &vehicles, &spec.sim);
        check(violations.is_empty(), || {
            format!("seed {seed}: {} violations, first: {}", violations.len(), violations[0])
        })?;
        steps += n;
    }
    Ok(format!("20 runs, {steps} steps, zero violations"))
}

fn variation_growth() -> Outcome {
    let start = Instant::now();
    let counts = [100, 200, 300, 400, 500];
    let spec = ScenarioSpec::congested();
    let rows = sweep(&spec, &counts, 10).map_err(|e| e.to_string())?;
    let xs: Vec<f64> = rows.iter().map(|r| r.vehicles as f64).collect();
    let means: Vec<f64> = rows.iter().map(|r| r.mean_evac_s).collect();
    let rho = spearman(&xs, &means);
    let ratio = rows[4].mean_within_run_std_s / rows[0].mean_within_run_std_s;

    let mut control_spec = spec.clone();
    control_spec.link.flow_capacity = 1e6;
    let control = sweep(&control_spec, &[100, 500], 10).map_err(|e| e.to_string())?;
    let control_ratio = control[1].mean_within_run_std_s / control[0].mean_within_run_std_s;

    let summary = format!(
        "means {:?}, spearman {rho:.3}, std ratio {ratio:.2}, control ratio {control_ratio:.2}",
        means.iter().map(|m| m.round()).collect::<Vec<_>>()
    );
    check(rho >= 0.9, || format!("spearman {rho:.3} < 0.9; {summary}"))?;
    check(ratio >= 3.0, || format!("std ratio {ratio:.2} < 3; {summary}"))?;
    check(control_ratio <= 1.5, || {
        format!("control ratio {control_ratio:.2} > 1.5; {summary}")
    })?;
    within(start, Duration::from_secs(300))?;
    Ok(format!("{summary}, {:.1?}", start.elapsed()))
}

fn car_sharing_benefit() -> Outcome {
    let mut wins = 0;
    for seed in 1..=20 {
        let mut spec = ScenarioSpec::congested();
        spec.volunteers.count = 300;
        spec.seekers = 100;
        spec.seed = seed;
        spec.sim.seed = seed;
        let run = compare_car_sharing(&spec).map_err(|e| e.to_string())?;
        if run.shared.mean_evac <= run.own_car.mean_evac {
            wins += 1;
        }
    }
    check(wins >= 16, || format!("shared plan faster in {wins}/20, need 16"))?;
    Ok(format!("shared plan no slower in {wins}/20"))
}

fn service_soundness() -> Outcome {
    let mut replans = 0;
    for seed in 0..10 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let (sid, live) = {
            let svc = temp_service(dir.path());
            let sid = grid3_session(&svc);
            random_operations(&svc, &sid, &mut rng(30_000 + seed), 60);
            // the last replan may predate later operations
            let fresh = svc.replan(&sid).is_ok();
            let live = svc.snapshot(&sid).map_err(|e| e.to_string())?;
            let replayed = svc.replay_from_disk(&sid).map_err(|e| e.to_string())?;
            check(replayed == live, || {
                format!("seed {seed}: replay differs from live snapshot")
            })?;
            if fresh {
                plan_vs_cli(&svc, &sid).map_err(|e| format!("seed {seed}: {e}"))?;
                replans += 1;
            }
            (sid, live)
        };
        let reopened = temp_service(dir.path());
        let again = reopened.snapshot(&sid).map_err(|e| e.to_string())?;
        check(again == live, || {
            format!("seed {seed}: reopened service differs from live snapshot")
        })?;
    }
    // a session with a guaranteed plan, compared with the CLI
    let svc = Service::in_memory();
    let sid = grid3_session(&svc);
    random_operations(&svc, &sid, &mut rng(31_000), 30);
    svc.set_zone(
        &sid,
        leavenow::geometry::Polygon::from_json(&fixture_text("square_zone.json")).unwrap(),
    )
    .map_err(|e| e.to_string())?;
    svc.register_volunteer(
        &sid,
        leavenow::service::VolunteerRegistration {
            x: 1000.0,
            y: 1000.0,
            seats: 2,
        },
    )
    .map_err(|e| e.to_string())?;
    svc.replan(&sid).map_err(|e| e.to_string())?;
    plan_vs_cli(&svc, &sid)?;
    Ok(format!(
        "10 sequences replay bit-exactly, {} plans equal the CLI",
        replans + 1
    ))
}

fn main() {
    let criteria: [Criterion; 7] = [
        ("exit correctness", exit_correctness),
        ("routing correctness", routing_correctness),
        ("assignment optimality", assignment_optimality),
        ("simulator invariants", simulator_invariants),
        ("evacuation time variation vs vehicle count", variation_growth),
        ("car-sharing benefit", car_sharing_benefit),
        ("service soundness", service_soundness),
    ];
    // keep panic messages out of the report; they end up in the FAIL line
    std::panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (name, f) in criteria {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail} [{:.1?}]", start.elapsed()),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why} [{:.1?}]", start.elapsed());
            }
        }
    }
    println!(
        "{} of {} acceptance criteria passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
