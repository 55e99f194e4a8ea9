//! Dummy-location generation and the mixed report channel.
//!
//! Each query reports `m` locations: one privatized true location and
//! `m - 1` dummies. Dummies on a first query are uniform over the edge
//! coverage; on linked queries they must be reachable from at least one
//! location of the previous reported vector within the speed budget, so an
//! observer cannot discard them as physically impossible continuations.
//! Dummies span the whole coverage rather than a ball around the true
//! location, so their center of mass carries no signal.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mechanism::{ChannelKind, MechanismParams, ObfuscationChannel};
use crate::road_network::{EdgeCoverage, RoadNetwork, SegmentId};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feasibility {
    /// Ignore any previous query; sample every vector like a first query.
    UnconstrainedFirstQuery,
    /// Constrain dummies to speed-feasible continuations of the previous
    /// reported vector.
    Linked,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DummyConfig {
    /// Total locations per query, including the privatized one.
    pub m: usize,
    /// Meters per second.
    pub max_speed: f64,
    pub feasibility: Feasibility,
}

impl DummyConfig {
    pub fn new(m: usize, max_speed: f64, feasibility: Feasibility) -> Result<Self> {
        if m < 1 {
            return Err(Error::InvalidParams("m must be at least 1".into()));
        }
        if !(max_speed.is_finite() && max_speed > 0.0) {
            return Err(Error::InvalidParams(format!(
                "max speed must be finite and positive, got {max_speed}"
            )));
        }
        Ok(DummyConfig {
            m,
            max_speed,
            feasibility,
        })
    }
}

/// One EV's reported vector: `locations[0]` is the privatized true location
/// until the edge shuffle erases the ordering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryVector {
    pub ev_id: u32,
    /// Seconds; ticks are one second long.
    pub timestamp: u32,
    pub locations: Vec<SegmentId>,
}

/// Draws `m - 1` dummy locations inside the coverage.
///
/// With a previous vector, candidates are the coverage segments reachable
/// from at least one previous location within `max_speed * elapsed` meters;
/// without one (or with `UnconstrainedFirstQuery`), the whole coverage.
/// Sampling is uniform, without replacement while the feasible set is large
/// enough.
pub fn generate_dummies(
    net: &RoadNetwork,
    coverage: &EdgeCoverage,
    prev: Option<&QueryVector>,
    elapsed: f64,
    cfg: &DummyConfig,
    rng: &mut impl rand::Rng,
) -> Result<Vec<SegmentId>> {
    if cfg.m == 1 {
        return Ok(Vec::new());
    }
    let linked = matches!(cfg.feasibility, Feasibility::Linked) && prev.is_some();
    let feasible: Vec<SegmentId> = if linked {
        let prev = prev.expect("checked above");
        if !(elapsed.is_finite() && elapsed > 0.0) {
            return Err(Error::InvalidParams(format!(
                "elapsed time since the previous query must be positive, got {elapsed}"
            )));
        }
        let budget = cfg.max_speed * elapsed;
        let mut reachable = vec![false; net.node_count()];
        for &p in &prev.locations {
            let dist = net.distances_from(p)?;
            for &y in coverage.segments() {
                if dist[y] <= budget {
                    reachable[y] = true;
                }
            }
        }
        coverage
            .segments()
            .iter()
            .copied()
            .filter(|&y| reachable[y])
            .collect()
    } else {
        coverage.segments().to_vec()
    };
    if feasible.is_empty() {
        return Err(Error::InfeasibleContinuation);
    }

    let wanted = cfg.m - 1;
    if feasible.len() >= wanted {
        let picked = rand::seq::index::sample(rng, feasible.len(), wanted);
        Ok(picked.into_iter().map(|i| feasible[i]).collect())
    } else {
        Ok((0..wanted)
            .map(|_| feasible[rng.random_range(0..feasible.len())])
            .collect())
    }
}

/// After `k` queries with `m` locations each, any interpolated trajectory is
/// the real one with probability at least `m^-k`.
pub fn trajectory_hypotheses_lower_bound(k_queries: u32, m: usize) -> f64 {
    debug_assert!(k_queries >= 1 && m >= 1);
    (m as f64).powi(-(k_queries as i32))
}

/// Channel describing one reported location marginally: with probability
/// `1/m` it went through the truncated Laplace channel, otherwise it is
/// uniform over the coverage.
///
/// Rows become `(1/m) L[x][y] + ((m-1)/m) / |coverage|` for `y` in the
/// coverage. The coverage must lie within the channel codomain; `m = 1`
/// returns the channel unchanged.
pub fn mixed_channel(
    ch: &ObfuscationChannel,
    m: usize,
    coverage: &EdgeCoverage,
) -> Result<ObfuscationChannel> {
    if m < 1 {
        return Err(Error::InvalidParams("m must be at least 1".into()));
    }
    if m == 1 {
        return Ok(ch.clone());
    }
    let cov_cols: Vec<usize> = coverage
        .segments()
        .iter()
        .map(|&y| {
            ch.codomain_index(y).ok_or_else(|| {
                Error::InvalidParams(format!(
                    "coverage segment {y} is outside the channel codomain"
                ))
            })
        })
        .collect::<Result<_>>()?;

    let laplace_weight = 1.0 / m as f64;
    let uniform_mass = (m as f64 - 1.0) / m as f64 / coverage.len() as f64;
    let matrix: Vec<Vec<f64>> = ch
        .domain()
        .iter()
        .map(|&x| {
            let row = ch.row(x).expect("domain row");
            let mut mixed: Vec<f64> = row.iter().map(|&p| laplace_weight * p).collect();
            for &j in &cov_cols {
                mixed[j] += uniform_mass;
            }
            mixed
        })
        .collect();
    let normalizers = ch
        .domain()
        .iter()
        .map(|&x| ch.row_normalizer(x).expect("domain row"))
        .collect();
    let dist_units = ch
        .domain()
        .iter()
        .map(|&x| {
            ch.codomain()
                .iter()
                .map(|&y| ch.distance_units(x, y).expect("codomain column"))
                .collect()
        })
        .collect();
    ObfuscationChannel::from_parts(
        ch.domain().to_vec(),
        ch.codomain().to_vec(),
        matrix,
        normalizers,
        dist_units,
        ch.params(),
        ChannelKind::Mixed { m },
    )
}

/// Uniform channel over the coverage: every row is `1 / |coverage|`. The
/// `m -> inf` limit of the mixed channel.
pub fn uniform_channel(
    net: &RoadNetwork,
    coverage: &EdgeCoverage,
    params: MechanismParams,
) -> Result<ObfuscationChannel> {
    let segs = coverage.segments().to_vec();
    let n = segs.len();
    let row = vec![1.0 / n as f64; n];
    let dist_units: Vec<Vec<f64>> = segs
        .iter()
        .map(|&x| {
            let dist = net.distances_from(x).expect("validated coverage");
            segs.iter()
                .map(|&y| dist[y] / params.distance_unit_scale)
                .collect()
        })
        .collect();
    ObfuscationChannel::from_parts(
        segs.clone(),
        segs,
        vec![row; n],
        vec![1.0 / n as f64; n],
        dist_units,
        params,
        ChannelKind::Mixed { m: usize::MAX },
    )
}
