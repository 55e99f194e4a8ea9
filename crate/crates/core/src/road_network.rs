//! Road network as a weighted directed graph over discretized segments.
//!
//! Nodes are road segments of fixed length `k`; an edge `(i, j, w)` means
//! traffic can move from segment `i` to segment `j` at travel cost `w`
//! meters. Traversal distance is the shortest directed path cost and is in
//! general asymmetric. Unreachable pairs are reported as `None` at the API
//! surface (internally `f64::INFINITY`), never as a large finite number.

use std::borrow::Cow;
use std::cmp::Reverse;
use std::collections::BinaryHeap;
use std::io::Write;
use std::path::Path;

use ordered_float::OrderedFloat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense segment identifier in `0..node_count`.
pub type SegmentId = usize;

/// Internal sentinel for "no directed path". Only ever exposed as `None`.
pub const UNREACHABLE: f64 = f64::INFINITY;

/// All-pairs tables are precomputed up to this many nodes; above it,
/// per-source runs are computed on demand.
pub const DEFAULT_TABLE_THRESHOLD: usize = 5_000;

#[derive(Debug, Clone)]
pub struct RoadNetwork {
    out_edges: Vec<Vec<(SegmentId, f64)>>,
    in_edges: Vec<Vec<(SegmentId, f64)>>,
    edge_count: usize,
    segment_length_k: f64,
    /// Row-major all-pairs traversal distances, present when
    /// `node_count <= table_threshold`.
    table: Option<Vec<Vec<f64>>>,
}

impl RoadNetwork {
    /// Builds a validated network from a directed edge list. The node set is
    /// the union of all endpoints and must form the dense range `0..=max_id`.
    pub fn build(edges: &[(SegmentId, SegmentId, f64)], segment_length_k: f64) -> Result<Self> {
        Self::build_with_table_threshold(edges, segment_length_k, DEFAULT_TABLE_THRESHOLD)
    }

    pub fn build_with_table_threshold(
        edges: &[(SegmentId, SegmentId, f64)],
        segment_length_k: f64,
        table_threshold: usize,
    ) -> Result<Self> {
        if edges.is_empty() {
            return Err(Error::EmptyEdgeList);
        }
        if !(segment_length_k.is_finite() && segment_length_k > 0.0) {
            return Err(Error::InvalidParams(format!(
                "segment length k must be finite and positive, got {segment_length_k}"
            )));
        }
        let mut max_id = 0;
        for &(from, to, weight) in edges {
            if !weight.is_finite() {
                return Err(Error::NonFiniteWeight { from, to });
            }
            if weight < 0.0 {
                return Err(Error::NegativeWeight { from, to, weight });
            }
            max_id = max_id.max(from).max(to);
        }
        let n = max_id + 1;
        let mut seen = vec![false; n];
        let mut out_edges = vec![Vec::new(); n];
        let mut in_edges = vec![Vec::new(); n];
        for &(from, to, weight) in edges {
            seen[from] = true;
            seen[to] = true;
            out_edges[from].push((to, weight));
            in_edges[to].push((from, weight));
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(Error::SparseSegmentIds {
                missing,
                max: max_id,
            });
        }
        let mut net = RoadNetwork {
            out_edges,
            in_edges,
            edge_count: edges.len(),
            segment_length_k,
            table: None,
        };
        if n <= table_threshold {
            let rows: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|src| dijkstra(&net.out_edges, src))
                .collect();
            net.table = Some(rows);
        }
        Ok(net)
    }

    pub fn node_count(&self) -> usize {
        self.out_edges.len()
    }

    pub fn edge_count(&self) -> usize {
        self.edge_count
    }

    pub fn segment_length_k(&self) -> f64 {
        self.segment_length_k
    }

    pub fn nodes(&self) -> std::ops::Range<SegmentId> {
        0..self.node_count()
    }

    pub fn out_neighbors(&self, i: SegmentId) -> &[(SegmentId, f64)] {
        &self.out_edges[i]
    }

    pub fn check_segment(&self, id: SegmentId) -> Result<()> {
        if id < self.node_count() {
            Ok(())
        } else {
            Err(Error::InvalidSegment {
                id,
                nodes: self.node_count(),
            })
        }
    }

    /// Shortest directed travel distance from `i` to `j` in meters, or
    /// `None` when no directed path exists.
    pub fn traversal_distance(&self, i: SegmentId, j: SegmentId) -> Result<Option<f64>> {
        self.check_segment(i)?;
        self.check_segment(j)?;
        let d = match &self.table {
            Some(rows) => rows[i][j],
            None => dijkstra(&self.out_edges, i)[j],
        };
        Ok(if d.is_finite() { Some(d) } else { None })
    }

    /// Distances from `i` to every segment; unreachable entries are
    /// `f64::INFINITY`.
    pub fn distances_from(&self, i: SegmentId) -> Result<Cow<'_, [f64]>> {
        self.check_segment(i)?;
        Ok(match &self.table {
            Some(rows) => Cow::Borrowed(rows[i].as_slice()),
            None => Cow::Owned(dijkstra(&self.out_edges, i)),
        })
    }

    /// Distances from every segment to `j` (the inbound column), computed on
    /// the reversed graph; unreachable entries are `f64::INFINITY`.
    pub fn distances_to(&self, j: SegmentId) -> Result<Vec<f64>> {
        self.check_segment(j)?;
        Ok(match &self.table {
            Some(rows) => rows.iter().map(|row| row[j]).collect(),
            None => dijkstra(&self.in_edges, j),
        })
    }

    /// Closed ball `{y : d(x, y) <= r}`, ascending by segment id. Always
    /// contains `x` and is monotone in `r`.
    pub fn closed_ball(&self, x: SegmentId, r: f64) -> Result<Vec<SegmentId>> {
        if !(r.is_finite() && r >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "ball radius must be finite and nonnegative, got {r}"
            )));
        }
        let dist = self.distances_from(x)?;
        Ok(dist
            .iter()
            .enumerate()
            .filter(|(_, &d)| d <= r)
            .map(|(y, _)| y)
            .collect())
    }
}

fn dijkstra(adj: &[Vec<(SegmentId, f64)>], src: SegmentId) -> Vec<f64> {
    let mut dist = vec![UNREACHABLE; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[src] = 0.0;
    heap.push(Reverse((OrderedFloat(0.0), src)));
    while let Some(Reverse((OrderedFloat(d), node))) = heap.pop() {
        if d > dist[node] {
            continue;
        }
        for &(next, weight) in &adj[node] {
            let cand = d + weight;
            if cand < dist[next] {
                dist[next] = cand;
                heap.push(Reverse((OrderedFloat(cand), next)));
            }
        }
    }
    dist
}

/// Edge list of a 4-connected `rows x cols` grid with one road in each
/// direction between adjacent cells, all of weight `weight`.
pub fn grid_edges(rows: usize, cols: usize, weight: f64) -> Vec<(SegmentId, SegmentId, f64)> {
    let id = |r: usize, c: usize| r * cols + c;
    let mut edges = Vec::new();
    for r in 0..rows {
        for c in 0..cols {
            if c + 1 < cols {
                edges.push((id(r, c), id(r, c + 1), weight));
                edges.push((id(r, c + 1), id(r, c), weight));
            }
            if r + 1 < rows {
                edges.push((id(r, c), id(r + 1, c), weight));
                edges.push((id(r + 1, c), id(r, c), weight));
            }
        }
    }
    edges
}

// ---------------------------------------------------------------------------
// Stations
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Station {
    pub id: u32,
    pub location: SegmentId,
    pub available: bool,
}

/// Charging stations, kept sorted by id (ids are unique).
#[derive(Debug, Clone)]
pub struct StationSet {
    stations: Vec<Station>,
}

impl StationSet {
    pub fn new(mut stations: Vec<Station>, net: &RoadNetwork) -> Result<Self> {
        stations.sort_by_key(|s| s.id);
        for pair in stations.windows(2) {
            if pair[0].id == pair[1].id {
                return Err(Error::DuplicateStationId(pair[0].id));
            }
        }
        for s in &stations {
            net.check_segment(s.location)?;
        }
        Ok(StationSet { stations })
    }

    pub fn stations(&self) -> &[Station] {
        &self.stations
    }

    pub fn available(&self) -> impl Iterator<Item = &Station> {
        self.stations.iter().filter(|s| s.available)
    }

    pub fn get(&self, id: u32) -> Option<&Station> {
        self.stations.iter().find(|s| s.id == id)
    }

    /// Returns whether a station with this id exists.
    pub fn set_available(&mut self, id: u32, available: bool) -> bool {
        match self.stations.iter_mut().find(|s| s.id == id) {
            Some(s) => {
                s.available = available;
                true
            }
            None => false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NearestStation {
    pub station_id: u32,
    pub location: SegmentId,
    pub distance: f64,
}

/// Available station minimizing `d(x, station)`; ties go to the lowest
/// station id (stations are iterated in id order with a strict comparison).
pub fn nearest_available_station(
    net: &RoadNetwork,
    stations: &StationSet,
    x: SegmentId,
) -> Result<NearestStation> {
    let dist = net.distances_from(x)?;
    let mut best: Option<NearestStation> = None;
    for s in stations.available() {
        let d = dist[s.location];
        if !d.is_finite() {
            continue;
        }
        if best.as_ref().is_none_or(|b| d < b.distance) {
            best = Some(NearestStation {
                station_id: s.id,
                location: s.location,
                distance: d,
            });
        }
    }
    best.ok_or(Error::NoReachableStation)
}

// ---------------------------------------------------------------------------
// Edge coverage
// ---------------------------------------------------------------------------

/// The set of segments covered by one roadside edge aggregator.
#[derive(Debug, Clone)]
pub struct EdgeCoverage {
    pub edge_id: u32,
    segments: Vec<SegmentId>,
}

impl EdgeCoverage {
    /// Segments are deduplicated and kept in ascending order.
    pub fn new(edge_id: u32, mut segments: Vec<SegmentId>, net: &RoadNetwork) -> Result<Self> {
        segments.sort_unstable();
        segments.dedup();
        if segments.is_empty() {
            return Err(Error::EmptyCoverage);
        }
        for &s in &segments {
            net.check_segment(s)?;
        }
        Ok(EdgeCoverage { edge_id, segments })
    }

    pub fn segments(&self) -> &[SegmentId] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn contains(&self, x: SegmentId) -> bool {
        self.segments.binary_search(&x).is_ok()
    }
}

// ---------------------------------------------------------------------------
// File formats
// ---------------------------------------------------------------------------

/// Reads a graph CSV with header `from,to,weight_m`, one directed edge per
/// row.
pub fn load_graph_csv(path: &Path) -> Result<Vec<(SegmentId, SegmentId, f64)>> {
    let mut reader = csv::Reader::from_path(path)?;
    expect_header(&mut reader, &["from", "to", "weight_m"], path)?;
    let mut edges = Vec::new();
    for record in reader.deserialize() {
        let (from, to, weight_m): (SegmentId, SegmentId, f64) = record?;
        edges.push((from, to, weight_m));
    }
    Ok(edges)
}

pub fn write_graph_csv(path: &Path, edges: &[(SegmentId, SegmentId, f64)]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "from,to,weight_m")?;
    for &(from, to, weight) in edges {
        writeln!(out, "{from},{to},{weight}")?;
    }
    Ok(())
}

/// Reads a stations CSV with header `station_id,segment_id,available`
/// (available is 0 or 1).
pub fn load_stations_csv(path: &Path, net: &RoadNetwork) -> Result<StationSet> {
    let mut reader = csv::Reader::from_path(path)?;
    expect_header(&mut reader, &["station_id", "segment_id", "available"], path)?;
    let mut stations = Vec::new();
    for record in reader.deserialize() {
        let (id, location, available): (u32, SegmentId, u8) = record?;
        if available > 1 {
            return Err(Error::ScenarioValidation(format!(
                "station {id}: available must be 0 or 1, got {available}"
            )));
        }
        stations.push(Station {
            id,
            location,
            available: available == 1,
        });
    }
    StationSet::new(stations, net)
}

pub fn write_stations_csv(path: &Path, stations: &[Station]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "station_id,segment_id,available")?;
    for s in stations {
        writeln!(out, "{},{},{}", s.id, s.location, u8::from(s.available))?;
    }
    Ok(())
}

fn expect_header<R: std::io::Read>(
    reader: &mut csv::Reader<R>,
    expected: &[&str],
    path: &Path,
) -> Result<()> {
    let headers = reader.headers()?;
    let got: Vec<&str> = headers.iter().collect();
    if got != expected {
        return Err(Error::ScenarioValidation(format!(
            "{}: expected header {}, got {}",
            path.display(),
            expected.join(","),
            got.join(",")
        )));
    }
    Ok(())
}
