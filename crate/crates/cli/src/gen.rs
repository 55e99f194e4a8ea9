//! Synthetic scenario generation: a uniform grid and a two-cluster map
//! joined by a corridor, with random-walk trajectories that respect edge
//! directions.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ageoi::road_network::{grid_edges, write_graph_csv, write_stations_csv, SegmentId, Station};
use ageoi::sim::{
    derive_rng, write_scenario, write_trajectories_csv, GridTopology, QueryTickPolicy, Scenario,
    SALT_SCENARIO_GEN, SEGMENT_LENGTH_M,
};
use rand::Rng;

use crate::config::{ExperimentError, ExperimentResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioKind {
    /// Uniform grid; trajectories roam the whole map.
    Grid,
    /// Same grid, but every trajectory stays inside one of two dense blocks
    /// in opposite corners, so the query-location distribution has two
    /// heavy clusters on an otherwise quiet map.
    TwoCluster,
}

#[derive(Debug, Clone)]
pub struct GenParams {
    pub kind: ScenarioKind,
    /// Grid side length (per cluster for the two-cluster map).
    pub size: usize,
    pub stations: usize,
    pub evs: usize,
    pub ticks: u32,
    pub seed: u64,
    pub m: usize,
    pub epsilon: f64,
    pub radius_segments: f64,
    pub queries_per_ev: usize,
    /// Meters per second. The default is effectively unbounded so dummies
    /// stay uniform over the coverage, matching the mixed-channel model.
    pub max_speed: f64,
}

impl Default for GenParams {
    fn default() -> Self {
        GenParams {
            kind: ScenarioKind::Grid,
            size: 10,
            stations: 5,
            evs: 50,
            ticks: 30,
            seed: 7,
            m: 10,
            epsilon: 1.0,
            radius_segments: 10.0,
            queries_per_ev: 3,
            max_speed: 100_000.0,
        }
    }
}

/// Writes `graph.csv`, `stations.csv`, `trajectories.csv`, and
/// `scenario.json` under `out_dir`; returns the scenario path.
pub fn generate_synthetic_scenario(params: &GenParams, out_dir: &Path) -> ExperimentResult<PathBuf> {
    if params.size < 2 {
        return Err(ExperimentError::Validation("size must be at least 2".into()));
    }
    if params.evs < 1 || params.ticks < 2 || params.queries_per_ev < 1 {
        return Err(ExperimentError::Validation(
            "need at least one EV, two ticks, and one query per EV".into(),
        ));
    }
    let n = params.size;
    let edges = grid_edges(n, n, SEGMENT_LENGTH_M);
    let node_count = n * n;
    let grid = Some(GridTopology { rows: n, cols: n });
    // Walks start anywhere in these zones and never leave their own zone.
    let zones: Vec<Vec<SegmentId>> = match params.kind {
        ScenarioKind::Grid => vec![(0..node_count).collect()],
        ScenarioKind::TwoCluster => {
            let side = (n / 3).max(2);
            let block = |r0: usize, c0: usize| -> Vec<SegmentId> {
                let mut nodes = Vec::new();
                for r in r0..r0 + side {
                    for c in c0..c0 + side {
                        nodes.push(r * n + c);
                    }
                }
                nodes
            };
            vec![block(0, 0), block(n - side, n - side)]
        }
    };
    if params.stations < 1 || params.stations > node_count {
        return Err(ExperimentError::Validation(format!(
            "station count {} must be between 1 and {node_count}",
            params.stations
        )));
    }
    std::fs::create_dir_all(out_dir).map_err(ExperimentError::validation)?;
    write_graph_csv(&out_dir.join("graph.csv"), &edges).map_err(ExperimentError::runtime)?;

    let mut rng = derive_rng(params.seed, SALT_SCENARIO_GEN, 0, 0);
    let station_locations =
        rand::seq::index::sample(&mut rng, node_count, params.stations).into_vec();
    let stations: Vec<Station> = station_locations
        .iter()
        .enumerate()
        .map(|(i, &location)| Station {
            id: i as u32,
            location,
            available: true,
        })
        .collect();
    write_stations_csv(&out_dir.join("stations.csv"), &stations)
        .map_err(ExperimentError::runtime)?;

    // Directed random walks; every generated consecutive pair is an edge.
    let mut adjacency: Vec<Vec<SegmentId>> = vec![Vec::new(); node_count];
    for &(from, to, _) in &edges {
        adjacency[from].push(to);
    }
    let mut in_zone = vec![vec![false; node_count]; zones.len()];
    for (z, zone) in zones.iter().enumerate() {
        for &node in zone {
            in_zone[z][node] = true;
        }
    }
    let mut trajectories: BTreeMap<u32, Vec<(u32, SegmentId)>> = BTreeMap::new();
    for ev in 0..params.evs as u32 {
        let mut rng = derive_rng(params.seed, SALT_SCENARIO_GEN, 1, ev as u64);
        let zone = ev as usize % zones.len();
        let mut pos = zones[zone][rng.random_range(0..zones[zone].len())];
        let mut rows = Vec::with_capacity(params.ticks as usize);
        for tick in 0..params.ticks {
            rows.push((tick, pos));
            let next: Vec<SegmentId> = adjacency[pos]
                .iter()
                .copied()
                .filter(|&y| in_zone[zone][y])
                .collect();
            pos = next[rng.random_range(0..next.len())];
        }
        trajectories.insert(ev, rows);
    }
    write_trajectories_csv(&out_dir.join("trajectories.csv"), &trajectories)
        .map_err(ExperimentError::runtime)?;

    let scenario = Scenario {
        graph_file: "graph.csv".into(),
        stations_file: "stations.csv".into(),
        coverage: (0..node_count).collect(),
        trajectories_file: "trajectories.csv".into(),
        query_ticks: QueryTickPolicy::RandomPerEv {
            count: params.queries_per_ev,
        },
        m: params.m,
        epsilon: params.epsilon,
        radius_r: params.radius_segments,
        max_speed: params.max_speed,
        seed: params.seed,
        ticks: params.ticks,
        availability_schedule: vec![],
        grid,
    };
    let path = out_dir.join("scenario.json");
    write_scenario(&path, &scenario).map_err(ExperimentError::runtime)?;
    Ok(path)
}
