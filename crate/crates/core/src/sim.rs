//! Scenario files and the tick-driven protocol simulator.
//!
//! A scenario bundles the network, stations, coverage, trajectories, and
//! mechanism parameters. Ticks are one second long; all queries of a tick
//! form one shuffle batch. Mechanism parameters in scenario files are in
//! segment units (`epsilon` per segment, `radius_r` in segments), converted
//! through the network's segment length, matching how radii are swept.
//!
//! Every random decision draws from a stream derived from `(seed, purpose,
//! tick, ev)`, so runs are reproducible and per-EV work is order-independent.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cop;
use crate::dummy::{DummyConfig, Feasibility, QueryVector};
use crate::edge::{
    choose_destination, respond_nearest, shuffle_and_forward, submit_query, EvState,
};
use crate::error::{Error, Result};
use crate::mechanism::{build_channel, compute_delta, MechanismParams, ObfuscationChannel};
use crate::road_network::{
    load_graph_csv, load_stations_csv, nearest_available_station, EdgeCoverage, RoadNetwork,
    SegmentId, StationSet,
};

/// Seeded, collision-free random stream for one purpose at one point of the
/// simulation.
pub fn derive_rng(seed: u64, salt: u64, a: u64, b: u64) -> ChaCha8Rng {
    use rand::SeedableRng;
    let mut bytes = [0u8; 32];
    bytes[0..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&salt.to_le_bytes());
    bytes[16..24].copy_from_slice(&a.to_le_bytes());
    bytes[24..32].copy_from_slice(&b.to_le_bytes());
    ChaCha8Rng::from_seed(bytes)
}

pub const SALT_QUERY_TICKS: u64 = 1;
pub const SALT_QUERY: u64 = 2;
pub const SALT_SHUFFLE: u64 = 3;
pub const SALT_SCENARIO_GEN: u64 = 4;
pub const SALT_IBU_STREAM: u64 = 5;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum QueryTickPolicy {
    /// Each EV queries at `count` random distinct points of its trajectory.
    RandomPerEv { count: usize },
    /// Each EV queries at every trajectory point.
    EveryTick,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AvailabilityEvent {
    pub tick: u32,
    pub station_id: u32,
    pub available: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridTopology {
    pub rows: usize,
    pub cols: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Scenario {
    pub graph_file: String,
    pub stations_file: String,
    pub coverage: Vec<SegmentId>,
    pub trajectories_file: String,
    pub query_ticks: QueryTickPolicy,
    /// Locations per query, including the privatized one.
    pub m: usize,
    /// Privacy parameter per road segment.
    pub epsilon: f64,
    /// Truncation radius in road segments.
    pub radius_r: f64,
    /// Meters per second.
    pub max_speed: f64,
    pub seed: u64,
    pub ticks: u32,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub availability_schedule: Vec<AvailabilityEvent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridTopology>,
}

/// A scenario with all referenced files loaded and validated.
#[derive(Debug, Clone)]
pub struct LoadedScenario {
    pub scenario: Scenario,
    pub net: RoadNetwork,
    pub stations: StationSet,
    pub coverage: EdgeCoverage,
    /// `ev_id -> (tick, segment)` rows, time-ordered.
    pub trajectories: BTreeMap<u32, Vec<(u32, SegmentId)>>,
}

fn fail(msg: impl Into<String>) -> Error {
    Error::ScenarioValidation(msg.into())
}

/// Reads the scenario JSON and every file it references; paths are resolved
/// relative to the scenario file. All structural invariants are checked
/// here, so a loaded scenario simulates without validation surprises.
pub fn load_scenario(path: &Path) -> Result<LoadedScenario> {
    let text = std::fs::read_to_string(path)?;
    let scenario: Scenario = serde_json::from_str(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    let resolve = |file: &str| -> PathBuf {
        let p = Path::new(file);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            base.join(p)
        }
    };

    if scenario.m < 1 {
        return Err(fail("m must be at least 1"));
    }
    if !(scenario.epsilon.is_finite() && scenario.epsilon > 0.0) {
        return Err(fail(format!("epsilon must be positive, got {}", scenario.epsilon)));
    }
    if !(scenario.radius_r.is_finite() && scenario.radius_r >= 0.0) {
        return Err(fail(format!(
            "radius_r must be nonnegative, got {}",
            scenario.radius_r
        )));
    }
    if !(scenario.max_speed.is_finite() && scenario.max_speed > 0.0) {
        return Err(fail(format!(
            "max_speed must be positive, got {}",
            scenario.max_speed
        )));
    }
    if scenario.ticks < 1 {
        return Err(fail("ticks must be at least 1"));
    }
    if let QueryTickPolicy::RandomPerEv { count } = scenario.query_ticks {
        if count < 1 {
            return Err(fail("query_ticks.count must be at least 1"));
        }
    }

    let edges = load_graph_csv(&resolve(&scenario.graph_file))?;
    let net = RoadNetwork::build(&edges, segment_length_of(&scenario))?;
    let stations = load_stations_csv(&resolve(&scenario.stations_file), &net)?;
    if stations.stations().is_empty() {
        return Err(fail("stations file lists no stations"));
    }
    let coverage = EdgeCoverage::new(0, scenario.coverage.clone(), &net)?;
    let trajectories = load_trajectories_csv(&resolve(&scenario.trajectories_file))?;
    if trajectories.is_empty() {
        return Err(fail("trajectories file lists no EVs"));
    }
    for (&ev, rows) in &trajectories {
        for &(tick, segment) in rows {
            net.check_segment(segment)?;
            if tick >= scenario.ticks {
                return Err(fail(format!(
                    "ev {ev} has a trajectory point at tick {tick}, beyond the scenario's {} ticks",
                    scenario.ticks
                )));
            }
        }
    }
    for event in &scenario.availability_schedule {
        if stations.get(event.station_id).is_none() {
            return Err(fail(format!(
                "availability event references unknown station {}",
                event.station_id
            )));
        }
        if event.tick >= scenario.ticks {
            return Err(fail(format!(
                "availability event at tick {} is beyond the scenario's {} ticks",
                event.tick, scenario.ticks
            )));
        }
    }
    if let Some(grid) = scenario.grid {
        if grid.rows * grid.cols != net.node_count() {
            return Err(fail(format!(
                "grid {}x{} does not match the {}-node network",
                grid.rows,
                grid.cols,
                net.node_count()
            )));
        }
    }
    Ok(LoadedScenario {
        scenario,
        net,
        stations,
        coverage,
        trajectories,
    })
}

/// Scenario files describe mechanisms in segment units; the conversion
/// anchor is the standard 100 m discretization.
pub const SEGMENT_LENGTH_M: f64 = 100.0;

fn segment_length_of(_scenario: &Scenario) -> f64 {
    SEGMENT_LENGTH_M
}

pub fn write_scenario(path: &Path, scenario: &Scenario) -> Result<()> {
    let mut text = serde_json::to_string_pretty(scenario)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

/// Trajectories CSV: header `ev_id,tick,segment_id`.
pub fn load_trajectories_csv(path: &Path) -> Result<BTreeMap<u32, Vec<(u32, SegmentId)>>> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers: Vec<&str> = reader.headers()?.iter().collect();
    if headers != ["ev_id", "tick", "segment_id"] {
        return Err(fail(format!(
            "{}: expected header ev_id,tick,segment_id, got {}",
            path.display(),
            headers.join(",")
        )));
    }
    let mut trajectories: BTreeMap<u32, Vec<(u32, SegmentId)>> = BTreeMap::new();
    for record in reader.deserialize() {
        let (ev_id, tick, segment): (u32, u32, SegmentId) = record?;
        trajectories.entry(ev_id).or_default().push((tick, segment));
    }
    for (&ev, rows) in &mut trajectories {
        rows.sort_by_key(|&(t, _)| t);
        for pair in rows.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(fail(format!(
                    "ev {ev} has two trajectory points at tick {}",
                    pair[0].0
                )));
            }
        }
    }
    Ok(trajectories)
}

pub fn write_trajectories_csv(
    path: &Path,
    trajectories: &BTreeMap<u32, Vec<(u32, SegmentId)>>,
) -> Result<()> {
    use std::io::Write;
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "ev_id,tick,segment_id")?;
    for (ev, rows) in trajectories {
        for (tick, segment) in rows {
            writeln!(out, "{ev},{tick},{segment}")?;
        }
    }
    Ok(())
}

/// Per-run mechanism knobs; sweeps override the scenario's defaults cell by
/// cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimParams {
    /// Privacy parameter per segment.
    pub epsilon: f64,
    /// Truncation radius in segments.
    pub radius_segments: f64,
    pub m: usize,
    pub max_speed: f64,
    pub seed: u64,
}

impl SimParams {
    pub fn from_scenario(s: &Scenario) -> Self {
        SimParams {
            epsilon: s.epsilon,
            radius_segments: s.radius_r,
            m: s.m,
            max_speed: s.max_speed,
            seed: s.seed,
        }
    }
}

/// One trace row per query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRecord {
    pub tick: u32,
    pub ev_id: u32,
    pub true_segment: SegmentId,
    pub privatized_segment: SegmentId,
    pub chosen_station: u32,
    pub true_nearest_station: u32,
    pub cop_meters: f64,
    pub epsilon_total: f64,
    pub delta_total: f64,
}

#[derive(Debug, Clone)]
pub struct SimRun {
    pub params: SimParams,
    /// Additive slack of the channel used for every query of this run.
    pub channel_delta: f64,
    pub trace: Vec<TraceRecord>,
    /// Every location the third party saw, in batch order: the scrambled
    /// concatenation of all reported vectors.
    pub reported: Vec<SegmentId>,
    /// True location behind each query, one per trace row.
    pub true_query_locations: Vec<SegmentId>,
}

/// Builds the channel for the run and drives the protocol tick by tick.
///
/// Per the worst-case utility convention, `cop_meters` is computed from the
/// privatized location alone, even when a dummy happened to draw a closer
/// station; the chosen station (over the full response vector) is recorded
/// alongside.
pub fn run_simulation(loaded: &LoadedScenario, params: &SimParams) -> Result<SimRun> {
    let net = &loaded.net;
    let mech = MechanismParams::per_segment(
        params.epsilon,
        params.radius_segments,
        net.segment_length_k(),
    )?;
    let channel = build_channel(net, loaded.coverage.segments(), loaded.coverage.segments(), mech)?;
    let delta = compute_delta(&channel);
    run_simulation_with_channel(loaded, params, &channel, delta)
}

/// As [`run_simulation`] with a prebuilt channel (sweeps reuse deltas).
pub fn run_simulation_with_channel(
    loaded: &LoadedScenario,
    params: &SimParams,
    channel: &ObfuscationChannel,
    channel_delta: f64,
) -> Result<SimRun> {
    let net = &loaded.net;
    let cfg = DummyConfig::new(params.m, params.max_speed, Feasibility::Linked)?;
    let mut stations = loaded.stations.clone();
    let mut evs: BTreeMap<u32, EvState> = BTreeMap::new();
    for (&ev_id, rows) in &loaded.trajectories {
        let ticks = select_query_ticks(ev_id, rows, &loaded.scenario.query_ticks, params.seed);
        evs.insert(ev_id, EvState::new(ev_id, rows.clone(), ticks)?);
    }
    let mut schedule: Vec<&AvailabilityEvent> =
        loaded.scenario.availability_schedule.iter().collect();
    schedule.sort_by_key(|e| e.tick);
    let mut schedule = schedule.into_iter().peekable();

    let mut trace = Vec::new();
    let mut reported = Vec::new();
    let mut true_query_locations = Vec::new();
    for tick in 0..loaded.scenario.ticks {
        while let Some(event) = schedule.peek() {
            if event.tick > tick {
                break;
            }
            stations.set_available(event.station_id, event.available);
            schedule.next();
        }
        let mut queries: Vec<QueryVector> = Vec::new();
        for (&ev_id, ev) in evs.iter_mut() {
            if !ev.queries_at(tick) {
                continue;
            }
            let mut rng = derive_rng(params.seed, SALT_QUERY, tick as u64, ev_id as u64);
            queries.push(submit_query(
                ev,
                tick,
                net,
                &loaded.coverage,
                channel,
                channel_delta,
                &cfg,
                &mut rng,
            )?);
        }
        if queries.is_empty() {
            continue;
        }
        let mut shuffle_rng = derive_rng(params.seed, SALT_SHUFFLE, tick as u64, 0);
        let batch = shuffle_and_forward(&queries, &mut shuffle_rng)?;
        reported.extend_from_slice(&batch.scrambled);
        let response = respond_nearest(&batch, net, &stations)?;
        for q in &queries {
            let ev = &evs[&q.ev_id];
            let true_segment = ev.location_at(tick).expect("queried tick");
            let vector = &response.reassembled[&q.ev_id];
            let chosen = choose_destination(true_segment, vector, net).map_err(|e| {
                Error::Simulation(format!(
                    "tick {tick}, ev {}: no usable response entry ({e})",
                    q.ev_id
                ))
            })?;
            let true_nearest = nearest_available_station(net, &stations, true_segment)?;
            let cop_meters = cop::cop(net, &stations, true_segment, q.locations[0])?;
            true_query_locations.push(true_segment);
            trace.push(TraceRecord {
                tick,
                ev_id: q.ev_id,
                true_segment,
                privatized_segment: q.locations[0],
                chosen_station: chosen.station_id,
                true_nearest_station: true_nearest.station_id,
                cop_meters,
                epsilon_total: ev.budget.epsilon_total(),
                delta_total: ev.budget.delta_total(),
            });
        }
    }
    Ok(SimRun {
        params: *params,
        channel_delta,
        trace,
        reported,
        true_query_locations,
    })
}

fn select_query_ticks(
    ev_id: u32,
    rows: &[(u32, SegmentId)],
    policy: &QueryTickPolicy,
    seed: u64,
) -> Vec<u32> {
    match policy {
        QueryTickPolicy::EveryTick => rows.iter().map(|&(t, _)| t).collect(),
        QueryTickPolicy::RandomPerEv { count } => {
            let mut rng = derive_rng(seed, SALT_QUERY_TICKS, ev_id as u64, 0);
            let take = (*count).min(rows.len());
            let mut ticks: Vec<u32> = rand::seq::index::sample(&mut rng, rows.len(), take)
                .into_iter()
                .map(|i| rows[i].0)
                .collect();
            ticks.sort_unstable();
            ticks
        }
    }
}

pub fn write_trace_csv(path: &Path, trace: &[TraceRecord]) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    for record in trace {
        writer.serialize(record)?;
    }
    writer.flush()?;
    Ok(())
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let mut trace = Vec::new();
    for record in reader.deserialize() {
        trace.push(record?);
    }
    Ok(trace)
}

/// Re-validates every trace row's cost of privacy from scratch, replaying
/// the availability schedule. A mismatch means the trace and the analysis
/// code disagree.
pub fn audit_trace(
    trace: &[TraceRecord],
    net: &RoadNetwork,
    initial_stations: &StationSet,
    schedule: &[AvailabilityEvent],
) -> Result<()> {
    let mut records: Vec<&TraceRecord> = trace.iter().collect();
    records.sort_by_key(|r| (r.tick, r.ev_id));
    let mut events: Vec<&AvailabilityEvent> = schedule.iter().collect();
    events.sort_by_key(|e| e.tick);
    let mut events = events.into_iter().peekable();
    let mut stations = initial_stations.clone();
    for record in records {
        while let Some(event) = events.peek() {
            if event.tick > record.tick {
                break;
            }
            stations.set_available(event.station_id, event.available);
            events.next();
        }
        let expected = cop::cop(net, &stations, record.true_segment, record.privatized_segment)?;
        if expected != record.cop_meters {
            return Err(Error::Simulation(format!(
                "trace audit failed at tick {}, ev {}: recorded CoP {} but recomputed {}",
                record.tick, record.ev_id, record.cop_meters, expected
            )));
        }
    }
    Ok(())
}
