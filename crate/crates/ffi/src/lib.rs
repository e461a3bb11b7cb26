//! C ABI for the evacuation pipeline.
//!
//! Inputs and outputs are UTF-8 JSON in the same formats the CLI reads and
//! writes. Every function returns an [`LnStatus`]; on failure a message is
//! available from [`ln_last_error`] on the calling thread. Strings returned
//! through `out` parameters are owned by the caller and must be released
//! with [`ln_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use leavenow::assignment::{AssignmentConfig, PickupPlan, SeekerState};
use leavenow::cli::to_json_text;
use leavenow::exits::compute_exits;
use leavenow::geometry::Polygon;
use leavenow::network::RoadNetwork;
use leavenow::pipeline::{assign_pickups, simulate_plan};
use leavenow::routing::{plan_routes, CongestionEstimate, PlanOutcome, RouteAssignment, VolunteerState};
use leavenow::sim::SimConfig;
use leavenow::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LnStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Validation = 4,
    Precondition = 5,
    NotFound = 6,
    Io = 7,
    Panic = 8,
}

/// Opaque handle to a validated road network.
pub struct LnNetwork {
    inner: RoadNetwork,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> LnStatus {
    match e {
        Error::Parse(_) => LnStatus::Parse,
        Error::Validation { .. } | Error::DuplicateId(_) | Error::Lookup(_) => LnStatus::Validation,
        Error::Precondition(_) => LnStatus::Precondition,
        Error::NotFound(_) => LnStatus::NotFound,
        Error::Io(_) => LnStatus::Io,
    }
}

enum Failure {
    Status(LnStatus, String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Core(e.into())
    }
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LnStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LnStatus::Ok,
        Ok(Err(Failure::Status(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(&e.to_string());
            status_of(&e)
        }
        Err(panic) => {
            let msg = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".to_string());
            set_last_error(&format!("internal panic: {msg}"));
            LnStatus::Panic
        }
    }
}

unsafe fn text<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Status(LnStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Status(LnStatus::InvalidUtf8, format!("{name} is not valid UTF-8")))
}

unsafe fn optional_text<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, name).map(Some)
    }
}

unsafe fn network<'a>(p: *const LnNetwork) -> Result<&'a RoadNetwork, Failure> {
    p.as_ref()
        .map(|n| &n.inner)
        .ok_or_else(|| Failure::Status(LnStatus::NullArgument, "network is null".into()))
}

unsafe fn write_out(out: *mut *mut c_char, json: String) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure::Status(LnStatus::NullArgument, "out is null".into()));
    }
    let c = CString::new(json).map_err(|_| Failure::Status(LnStatus::Io, "output contains NUL".into()))?;
    *out = c.into_raw();
    Ok(())
}

fn zone_from(json: &str) -> Result<Polygon, Failure> {
    let pairs: Vec<[f64; 2]> = serde_json::from_str(json)?;
    Ok(Polygon::from_pairs(&pairs)?)
}

fn plan_from(json: &str) -> Result<PlanOutcome, Failure> {
    let routes: Vec<RouteAssignment> = serde_json::from_str(json)?;
    Ok(PlanOutcome {
        routes,
        unreachable: Vec::new(),
    })
}

/// Parse and validate a network.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer. The
/// handle written to `out` must be released with [`ln_network_free`].
#[no_mangle]
pub unsafe extern "C" fn ln_network_from_json(json: *const c_char, out: *mut *mut LnNetwork) -> LnStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Status(LnStatus::NullArgument, "out is null".into()));
        }
        let net = RoadNetwork::from_json_str(text(json, "json")?)?;
        *out = Box::into_raw(Box::new(LnNetwork { inner: net }));
        Ok(())
    })
}

/// # Safety
/// `net` must come from [`ln_network_from_json`] and not be used afterwards.
/// Null is ignored.
#[no_mangle]
pub unsafe extern "C" fn ln_network_free(net: *mut LnNetwork) {
    if !net.is_null() {
        drop(Box::from_raw(net));
    }
}

/// # Safety
/// `net` must be a live handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn ln_network_node_count(net: *const LnNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.inner.nodes().len())
}

/// # Safety
/// `net` must be a live handle or null (which yields 0).
#[no_mangle]
pub unsafe extern "C" fn ln_network_link_count(net: *const LnNetwork) -> usize {
    net.as_ref().map_or(0, |n| n.inner.links().len())
}

/// Exit points of `zone_json` (array of `[x, y]` pairs).
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ln_exits(net: *const LnNetwork, zone_json: *const c_char, out: *mut *mut c_char) -> LnStatus {
    guard(|| {
        let net = network(net)?;
        let zone = zone_from(text(zone_json, "zone_json")?)?;
        write_out(out, to_json_text(&compute_exits(net, &zone)?))
    })
}

/// Route assignments for every volunteer that can reach an exit.
/// `congestion_json` may be null for free-flow times.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ln_plan(
    net: *const LnNetwork,
    zone_json: *const c_char,
    volunteers_json: *const c_char,
    congestion_json: *const c_char,
    out: *mut *mut c_char,
) -> LnStatus {
    guard(|| {
        let net = network(net)?;
        let zone = zone_from(text(zone_json, "zone_json")?)?;
        let volunteers: Vec<VolunteerState> = serde_json::from_str(text(volunteers_json, "volunteers_json")?)?;
        let congestion = match optional_text(congestion_json, "congestion_json")? {
            Some(t) => serde_json::from_str(t)?,
            None => CongestionEstimate::unit(),
        };
        let exits = compute_exits(net, &zone)?;
        let plan = plan_routes(net, &zone, &exits, &volunteers, &congestion)?;
        write_out(out, to_json_text(&plan.routes))
    })
}

/// Pickup plan for `seekers_json` along the routes in `plan_json`.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ln_assign(
    plan_json: *const c_char,
    seekers_json: *const c_char,
    max_distance: f64,
    out: *mut *mut c_char,
) -> LnStatus {
    guard(|| {
        let plan = plan_from(text(plan_json, "plan_json")?)?;
        let seekers: Vec<SeekerState> = serde_json::from_str(text(seekers_json, "seekers_json")?)?;
        let cfg = AssignmentConfig {
            max_pickup_distance: max_distance,
        };
        write_out(out, to_json_text(&assign_pickups(&plan, &seekers, &cfg)?))
    })
}

/// Simulate a plan. `pickups_json` and `config_json` may be null.
///
/// # Safety
/// Pointers must be valid; strings NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn ln_simulate(
    net: *const LnNetwork,
    plan_json: *const c_char,
    pickups_json: *const c_char,
    config_json: *const c_char,
    out: *mut *mut c_char,
) -> LnStatus {
    guard(|| {
        let net = network(net)?;
        let plan = plan_from(text(plan_json, "plan_json")?)?;
        let pickups: PickupPlan = match optional_text(pickups_json, "pickups_json")? {
            Some(t) => serde_json::from_str(t)?,
            None => PickupPlan::default(),
        };
        let cfg: SimConfig = match optional_text(config_json, "config_json")? {
            Some(t) => serde_json::from_str(t)?,
            None => SimConfig::default(),
        };
        write_out(out, to_json_text(&simulate_plan(net, &plan, &pickups, &cfg)?))
    })
}

/// # Safety
/// `s` must come from this library or be null.
#[no_mangle]
pub unsafe extern "C" fn ln_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn ln_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version, static storage.
#[no_mangle]
pub extern "C" fn ln_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
