//! Command-line front end. [`dispatch`] is the whole program minus process
//! setup, so tests can drive it with in-memory streams.

use std::fs;
use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::assignment::{AssignmentConfig, PickupPlan, SeekerState, DEFAULT_MAX_PICKUP_DISTANCE};
use crate::error::{Error, Result};
use crate::exits::compute_exits;
use crate::geometry::Polygon;
use crate::matsim::convert_matsim;
use crate::network::RoadNetwork;
use crate::pipeline::{assign_pickups, simulate_plan};
use crate::routing::{plan_routes, CongestionEstimate, PlanOutcome, RouteAssignment, VolunteerState};
use crate::scenario::{generate, ScenarioSpec};
use crate::service::bus::TopicBus;
use crate::service::store::SystemClock;
use crate::service::Service;
use crate::sim::SimConfig;
use crate::sweep::{sweep, write_csv};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 1;
pub const EXIT_IO: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "leavenow", version, about = "Evacuation planning and simulation backend")]
struct Cli {
    /// Override the seed of any scenario or simulation config
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Points where outbound links cross the zone boundary
    Exits {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        zone: PathBuf,
    },
    /// Fastest exit route for every volunteer
    Plan {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        zone: PathBuf,
        #[arg(long)]
        volunteers: PathBuf,
        #[arg(long)]
        congestion: Option<PathBuf>,
    },
    /// Assign seekers to volunteer routes
    Assign {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        seekers: PathBuf,
        #[arg(long, default_value_t = DEFAULT_MAX_PICKUP_DISTANCE)]
        max_distance: f64,
    },
    /// Run the link-queue simulation on a plan
    Simulate {
        #[arg(long)]
        network: PathBuf,
        #[arg(long)]
        plan: PathBuf,
        #[arg(long)]
        pickups: Option<PathBuf>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Evacuation statistics over vehicle counts, as CSV
    Sweep {
        #[arg(long)]
        scenario: PathBuf,
        /// comma separated vehicle counts
        #[arg(long, value_delimiter = ',', required = true)]
        counts: Vec<usize>,
        #[arg(long, default_value_t = 10)]
        reps: usize,
        /// defaults to stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a seeded synthetic scenario as JSON files
    GenScenario {
        #[arg(long)]
        spec: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Convert a MATSim network XML file to network JSON
    ConvertMatsim {
        #[arg(long)]
        input: PathBuf,
        /// defaults to stdout
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the coordination service
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "127.0.0.1")]
        bind: std::net::IpAddr,
        /// directory with the operator console bundle
        #[arg(long)]
        console: Option<PathBuf>,
    },
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    serde_json::from_str(&text).map_err(|e| match Error::from(e) {
        Error::Parse(msg) => Error::Parse(format!("{}: {msg}", path.display())),
        other => other,
    })
}

fn read_network(path: &Path) -> Result<RoadNetwork> {
    RoadNetwork::from_json_str(&read_text(path)?)
}

fn read_zone(path: &Path) -> Result<Polygon> {
    let pairs: Vec<[f64; 2]> = read_json(path)?;
    Polygon::from_pairs(&pairs)
}

fn read_plan(path: &Path) -> Result<PlanOutcome> {
    let routes: Vec<RouteAssignment> = read_json(path)?;
    Ok(PlanOutcome {
        routes,
        unreachable: Vec::new(),
    })
}

pub fn to_json_text<T: Serialize + ?Sized>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}

fn emit<T: Serialize + ?Sized>(out: &mut dyn Write, value: &T) -> Result<()> {
    out.write_all(to_json_text(value).as_bytes())?;
    Ok(())
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn run(cli: Cli, out: &mut dyn Write, err: &mut dyn Write) -> Result<()> {
    match cli.command {
        Command::Exits { network, zone } => {
            let net = read_network(&network)?;
            let zone = read_zone(&zone)?;
            emit(out, &compute_exits(&net, &zone)?)
        }
        Command::Plan {
            network,
            zone,
            volunteers,
            congestion,
        } => {
            let net = read_network(&network)?;
            let zone = read_zone(&zone)?;
            let volunteers: Vec<VolunteerState> = read_json(&volunteers)?;
            let congestion = match congestion {
                Some(p) => read_json(&p)?,
                None => CongestionEstimate::unit(),
            };
            let exits = compute_exits(&net, &zone)?;
            let plan = plan_routes(&net, &zone, &exits, &volunteers, &congestion)?;
            for id in &plan.unreachable {
                writeln!(err, "warning: volunteer {id} cannot reach any exit")?;
            }
            emit(out, &plan.routes)
        }
        Command::Assign {
            plan,
            seekers,
            max_distance,
        } => {
            let plan = read_plan(&plan)?;
            let seekers: Vec<SeekerState> = read_json(&seekers)?;
            let cfg = AssignmentConfig {
                max_pickup_distance: max_distance,
            };
            emit(out, &assign_pickups(&plan, &seekers, &cfg)?)
        }
        Command::Simulate {
            network,
            plan,
            pickups,
            config,
        } => {
            let net = read_network(&network)?;
            let plan = read_plan(&plan)?;
            let pickups: PickupPlan = match pickups {
                Some(p) => read_json(&p)?,
                None => PickupPlan::default(),
            };
            let mut cfg: SimConfig = match config {
                Some(p) => read_json(&p)?,
                None => SimConfig::default(),
            };
            if let Some(seed) = cli.seed {
                cfg.seed = seed;
            }
            emit(out, &simulate_plan(&net, &plan, &pickups, &cfg)?)
        }
        Command::Sweep {
            scenario,
            counts,
            reps,
            out: path,
        } => {
            let mut spec: ScenarioSpec = read_json(&scenario)?;
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            spec.validate()?;
            let rows = sweep(&spec, &counts, reps)?;
            match path {
                Some(p) => {
                    let mut buf = Vec::new();
                    write_csv(&rows, &mut buf)?;
                    write_file(&p, &String::from_utf8_lossy(&buf))
                }
                None => write_csv(&rows, out),
            }
        }
        Command::GenScenario { spec, out_dir } => {
            let mut spec: ScenarioSpec = read_json(&spec)?;
            if let Some(seed) = cli.seed {
                spec.seed = seed;
            }
            let sc = generate(&spec)?;
            fs::create_dir_all(&out_dir)?;
            write_file(&out_dir.join("network.json"), &to_json_text(&sc.network))?;
            write_file(&out_dir.join("zone.json"), &to_json_text(&sc.zone))?;
            write_file(&out_dir.join("volunteers.json"), &to_json_text(&sc.volunteers))?;
            write_file(&out_dir.join("seekers.json"), &to_json_text(&sc.seekers))
        }
        Command::ConvertMatsim { input, out: path } => {
            let conv = convert_matsim(&read_text(&input)?)?;
            for w in &conv.warnings {
                writeln!(err, "warning: {w}")?;
            }
            let text = to_json_text(&conv.network);
            match path {
                Some(p) => write_file(&p, &text),
                None => Ok(out.write_all(text.as_bytes())?),
            }
        }
        Command::Serve {
            port,
            data,
            bind,
            console,
        } => {
            let svc = Service::open(Some(data), Arc::new(SystemClock), Arc::new(TopicBus::new()))?;
            let runtime = tokio::runtime::Builder::new_multi_thread().enable_all().build()?;
            let addr = SocketAddr::new(bind, port);
            writeln!(err, "serving on http://{addr}")?;
            runtime.block_on(crate::service::http::serve(addr, Arc::new(svc), console))?;
            Ok(())
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_input_error() {
        EXIT_INPUT
    } else {
        EXIT_IO
    }
}

/// Parse `args` (program name first) and run the command.
pub fn dispatch<I, S>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                let _ = err.write_all(text.as_bytes());
                EXIT_INPUT
            } else {
                let _ = out.write_all(text.as_bytes());
                EXIT_OK
            };
        }
    };
    match run(cli, out, err) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}
