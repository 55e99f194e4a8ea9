//! Cost-of-privacy analysis: graph Voronoi decompositions over stations,
//! fenced cells that guarantee privacy for free, the exact probability of a
//! zero-cost query, and identifiability of the true location under the
//! dummy-augmented mechanism.
//!
//! Cost of privacy of one query is the extra travel distance caused by
//! answering the nearest-station question at the privatized location
//! instead of the true one: `d(x, st(z)) - d(x, st(x))` for true location
//! `x` and privatized location `z`. A segment whose radius-`r` ball stays
//! inside its own Voronoi cell can never pay: every report within the
//! truncation radius still names the same station.

use std::collections::{BTreeMap, HashSet};
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mechanism::ObfuscationChannel;
use crate::road_network::{
    nearest_available_station, EdgeCoverage, RoadNetwork, SegmentId, StationSet,
};

/// Partition of reachable segments by nearest available station.
#[derive(Debug, Clone)]
pub struct VoronoiDecomposition {
    cells: BTreeMap<u32, Vec<SegmentId>>,
    assignment: Vec<Option<u32>>,
    unassigned: Vec<SegmentId>,
}

impl VoronoiDecomposition {
    pub fn cells(&self) -> &BTreeMap<u32, Vec<SegmentId>> {
        &self.cells
    }

    pub fn cell(&self, station_id: u32) -> &[SegmentId] {
        self.cells.get(&station_id).map_or(&[], Vec::as_slice)
    }

    pub fn station_of(&self, x: SegmentId) -> Option<u32> {
        self.assignment.get(x).copied().flatten()
    }

    /// Segments from which no available station is reachable.
    pub fn unassigned(&self) -> &[SegmentId] {
        &self.unassigned
    }
}

/// Assigns every segment to its nearest available station (distance measured
/// segment -> station); equidistant ties go to the lowest station id.
/// Segments that reach no station are excluded and reported separately.
pub fn voronoi(net: &RoadNetwork, stations: &StationSet) -> Result<VoronoiDecomposition> {
    let available: Vec<_> = stations.available().collect();
    if available.is_empty() {
        return Err(Error::NoReachableStation);
    }
    // Inbound distance columns, one per station, in ascending id order.
    let columns: Vec<(u32, Vec<f64>)> = available
        .iter()
        .map(|s| Ok((s.id, net.distances_to(s.location)?)))
        .collect::<Result<_>>()?;
    let mut cells: BTreeMap<u32, Vec<SegmentId>> = BTreeMap::new();
    let mut assignment = vec![None; net.node_count()];
    let mut unassigned = Vec::new();
    for x in net.nodes() {
        let mut best: Option<(f64, u32)> = None;
        for (id, column) in &columns {
            let d = column[x];
            if d.is_finite() && best.is_none_or(|(bd, _)| d < bd) {
                best = Some((d, *id));
            }
        }
        match best {
            Some((_, id)) => {
                assignment[x] = Some(id);
                cells.entry(id).or_default().push(x);
            }
            None => unassigned.push(x),
        }
    }
    Ok(VoronoiDecomposition {
        cells,
        assignment,
        unassigned,
    })
}

/// Cells shrunk by the truncation radius: the segments whose whole
/// radius-`r` ball stays inside their own cell.
#[derive(Debug, Clone)]
pub struct FencedCells {
    pub radius_r: f64,
    fenced: BTreeMap<u32, Vec<SegmentId>>,
}

impl FencedCells {
    pub fn cells(&self) -> &BTreeMap<u32, Vec<SegmentId>> {
        &self.fenced
    }

    pub fn cell(&self, station_id: u32) -> &[SegmentId] {
        self.fenced.get(&station_id).map_or(&[], Vec::as_slice)
    }

    pub fn contains(&self, station_id: u32, x: SegmentId) -> bool {
        self.cell(station_id).binary_search(&x).is_ok()
    }

    pub fn all_segments(&self) -> impl Iterator<Item = (u32, SegmentId)> + '_ {
        self.fenced
            .iter()
            .flat_map(|(&id, segs)| segs.iter().map(move |&s| (id, s)))
    }
}

pub fn fenced_voronoi(
    dec: &VoronoiDecomposition,
    net: &RoadNetwork,
    r: f64,
) -> Result<FencedCells> {
    if !(r.is_finite() && r >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "fence radius must be finite and nonnegative, got {r}"
        )));
    }
    let mut fenced = BTreeMap::new();
    for (&station_id, segs) in dec.cells() {
        let cell: HashSet<SegmentId> = segs.iter().copied().collect();
        let mut kept = Vec::new();
        for &x in segs {
            let ball = net.closed_ball(x, r)?;
            if ball.iter().all(|y| cell.contains(y)) {
                kept.push(x);
            }
        }
        fenced.insert(station_id, kept);
    }
    Ok(FencedCells {
        radius_r: r,
        fenced,
    })
}

/// Extra travel distance caused by querying from `privatized_x` instead of
/// `true_x`. Nonnegative whenever availability is static within the query.
pub fn cop(
    net: &RoadNetwork,
    stations: &StationSet,
    true_x: SegmentId,
    privatized_x: SegmentId,
) -> Result<f64> {
    let st_true = nearest_available_station(net, stations, true_x)?;
    let st_priv = nearest_available_station(net, stations, privatized_x)?;
    let answered = net
        .traversal_distance(true_x, st_priv.location)?
        .ok_or(Error::NoReachableStation)?;
    let cost = answered - st_true.distance;
    debug_assert!(cost >= 0.0, "chosen station beat the true nearest");
    Ok(cost)
}

/// Exact probability that one privatized query costs nothing, from the
/// channel row: the mass the channel puts inside the true location's own
/// Voronoi cell. Exactly 1 when the whole truncation ball stays in the cell.
pub fn zero_cop_probability(
    net: &RoadNetwork,
    stations: &StationSet,
    ch: &ObfuscationChannel,
    true_x: SegmentId,
) -> Result<f64> {
    let dec = voronoi(net, stations)?;
    zero_cop_probability_in(net, &dec, ch, true_x)
}

/// As [`zero_cop_probability`], reusing a precomputed decomposition.
pub fn zero_cop_probability_in(
    net: &RoadNetwork,
    dec: &VoronoiDecomposition,
    ch: &ObfuscationChannel,
    true_x: SegmentId,
) -> Result<f64> {
    let station = dec.station_of(true_x).ok_or(Error::NoReachableStation)?;
    let cell = dec.cell(station);
    let ball = net.closed_ball(true_x, ch.params().radius_r)?;
    let cell_set: HashSet<SegmentId> = cell.iter().copied().collect();
    if ball.iter().all(|y| cell_set.contains(y)) {
        return Ok(1.0);
    }
    let row = ch.row(true_x)?;
    let mut p = 0.0;
    for &y in cell {
        if let Some(j) = ch.codomain_index(y) {
            p += row[j];
        }
    }
    Ok(p.min(1.0))
}

/// Identifiability of a true location: the probability that an adversary
/// picking one of the `m` reported locations lands strictly within `alpha`
/// meters of it.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentifiabilityReport {
    /// Closed form `(1/m) c_x exp(-eps alpha)` at the worst row.
    pub beta_closed_form: f64,
    /// Exact channel mass: `(1/m) sum_{d(x,y) < alpha} P[y|x] +
    /// ((m-1)/m) |ball(x, alpha) in coverage| / |coverage|`, maximized
    /// over x.
    pub beta_exact: f64,
    /// Domain point attaining the exact maximum.
    pub worst_x: SegmentId,
}

/// Computes both the closed-form and the exact identifiability bound for the
/// truncated Laplace channel `ch` mixed with `m - 1` uniform dummies over
/// `coverage`. `alpha` is in meters; the comparison is strict.
pub fn identifiability(
    ch: &ObfuscationChannel,
    m: usize,
    alpha: f64,
    coverage: &EdgeCoverage,
) -> Result<IdentifiabilityReport> {
    if m < 1 {
        return Err(Error::InvalidParams("m must be at least 1".into()));
    }
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::InvalidParams(format!(
            "alpha must be finite and nonnegative, got {alpha}"
        )));
    }
    let params = ch.params();
    let alpha_units = alpha / params.distance_unit_scale;
    let m_f = m as f64;
    let mut beta_exact = f64::NEG_INFINITY;
    let mut beta_closed = f64::NEG_INFINITY;
    let mut worst_x = ch.domain()[0];
    for &x in ch.domain() {
        let row = ch.row(x)?;
        let mut laplace_mass = 0.0;
        for (j, &y) in ch.codomain().iter().enumerate() {
            if ch.distance_units(x, y)? < alpha_units {
                laplace_mass += row[j];
            }
        }
        let mut near = 0usize;
        for &y in coverage.segments() {
            let du = ch.distance_units(x, y)?;
            if du < alpha_units {
                near += 1;
            }
        }
        let uniform_mass = near as f64 / coverage.len() as f64;
        let exact = laplace_mass / m_f + (m_f - 1.0) / m_f * uniform_mass;
        if exact > beta_exact {
            beta_exact = exact;
            worst_x = x;
        }
        let closed = ch.row_normalizer(x)? * (-params.epsilon * alpha_units).exp() / m_f;
        beta_closed = beta_closed.max(closed);
    }
    Ok(IdentifiabilityReport {
        beta_closed_form: beta_closed,
        beta_exact,
        worst_x,
    })
}

/// Whether `x` has a strictly unique nearest available station. On tied
/// segments the analytic zero-cost probability undercounts: a report landing
/// in an equidistant foreign cell also costs nothing.
pub fn unique_nearest(net: &RoadNetwork, stations: &StationSet, x: SegmentId) -> bool {
    let Ok(dist) = net.distances_from(x) else {
        return false;
    };
    let mut best = f64::INFINITY;
    let mut count = 0;
    for s in stations.available() {
        let d = dist[s.location];
        if d < best {
            best = d;
            count = 1;
        } else if d == best {
            count += 1;
        }
    }
    count == 1
}

/// Epsilon an undisguised (no dummies) mechanism must drop to in order to
/// match the identifiability of `m` locations per query: `epsilon / ln m`.
pub fn epsilon_rescale_without_dummies(epsilon: f64, m: usize) -> Result<f64> {
    if m < 2 {
        return Err(Error::InvalidParams(
            "rescaling needs at least 2 locations per query".into(),
        ));
    }
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::InvalidParams(format!(
            "epsilon must be finite and positive, got {epsilon}"
        )));
    }
    Ok(epsilon / (m as f64).ln())
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CopRecord {
    pub true_segment: SegmentId,
    pub privatized_segment: SegmentId,
    pub cop_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CopAggregate {
    pub n: usize,
    pub mean_cop_m: f64,
    pub frac_zero: f64,
    /// Wilson score interval at 95% for the zero-cost fraction.
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone)]
pub struct CopReport {
    pub records: Vec<CopRecord>,
    pub aggregate: CopAggregate,
}

impl CopReport {
    pub fn from_records(records: Vec<CopRecord>) -> Self {
        let aggregate = aggregate_cop(records.iter().map(|r| r.cop_m));
        CopReport { records, aggregate }
    }
}

pub fn aggregate_cop(cops: impl IntoIterator<Item = f64>) -> CopAggregate {
    let cops: Vec<f64> = cops.into_iter().collect();
    let n = cops.len();
    if n == 0 {
        return CopAggregate {
            n: 0,
            mean_cop_m: 0.0,
            frac_zero: 0.0,
            ci_low: 0.0,
            ci_high: 0.0,
        };
    }
    let mean = cops.iter().sum::<f64>() / n as f64;
    let zeros = cops.iter().filter(|&&c| c == 0.0).count();
    let (ci_low, ci_high) = wilson_interval(zeros, n, Z_95);
    CopAggregate {
        n,
        mean_cop_m: mean,
        frac_zero: zeros as f64 / n as f64,
        ci_low,
        ci_high,
    }
}

/// Two-sided 95% normal quantile.
pub const Z_95: f64 = 1.959963984540054;

/// Wilson score interval for a binomial proportion.
pub fn wilson_interval(successes: usize, n: usize, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let n_f = n as f64;
    let p = successes as f64 / n_f;
    let z2 = z * z;
    let center = (p + z2 / (2.0 * n_f)) / (1.0 + z2 / n_f);
    let half = z * (p * (1.0 - p) / n_f + z2 / (4.0 * n_f * n_f)).sqrt() / (1.0 + z2 / n_f);
    ((center - half).max(0.0), (center + half).min(1.0))
}

/// Per-cell audit CSV: `station_id,segment_id`, cells in station order.
pub fn write_voronoi_csv(path: &Path, dec: &VoronoiDecomposition) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "station_id,segment_id")?;
    for (&station_id, segs) in dec.cells() {
        for &s in segs {
            writeln!(out, "{station_id},{s}")?;
        }
    }
    Ok(())
}
