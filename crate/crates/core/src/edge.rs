//! Three-tier query protocol: EVs submit location vectors, the edge
//! aggregator shuffles all locations of a tick into one scrambled batch
//! while privately keeping the id ledger, the third-party responder answers
//! each location with its nearest available station, and the edge
//! reassembles per-EV response vectors.
//!
//! The ledger never crosses the third-party boundary: the only payload that
//! tier sees is [`ShuffleBatch::third_party_payload`], which carries bare
//! segment ids with no EV identifiers and no vector boundaries.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::Serialize;

use crate::dummy::{generate_dummies, DummyConfig, QueryVector};
use crate::error::{Error, Result};
use crate::mechanism::{sample_private_location, ObfuscationChannel, PrivacyBudget};
use crate::road_network::{
    nearest_available_station, EdgeCoverage, NearestStation, RoadNetwork, SegmentId, StationSet,
};

/// One EV across the simulation: where it actually is, when it queries, and
/// what privacy budget it has spent.
#[derive(Debug, Clone)]
pub struct EvState {
    pub ev_id: u32,
    trajectory: BTreeMap<u32, SegmentId>,
    query_ticks: Vec<u32>,
    pub budget: PrivacyBudget,
    last_query: Option<QueryVector>,
}

impl EvState {
    pub fn new(
        ev_id: u32,
        trajectory: Vec<(u32, SegmentId)>,
        query_ticks: Vec<u32>,
    ) -> Result<Self> {
        let trajectory: BTreeMap<u32, SegmentId> = trajectory.into_iter().collect();
        for &t in &query_ticks {
            if !trajectory.contains_key(&t) {
                return Err(Error::MissingTrajectoryPoint { ev: ev_id, tick: t });
            }
        }
        let mut query_ticks = query_ticks;
        query_ticks.sort_unstable();
        query_ticks.dedup();
        Ok(EvState {
            ev_id,
            trajectory,
            query_ticks,
            budget: PrivacyBudget::new(),
            last_query: None,
        })
    }

    pub fn location_at(&self, tick: u32) -> Option<SegmentId> {
        self.trajectory.get(&tick).copied()
    }

    pub fn trajectory(&self) -> impl Iterator<Item = (u32, SegmentId)> + '_ {
        self.trajectory.iter().map(|(&t, &s)| (t, s))
    }

    pub fn query_ticks(&self) -> &[u32] {
        &self.query_ticks
    }

    pub fn queries_at(&self, tick: u32) -> bool {
        self.query_ticks.binary_search(&tick).is_ok()
    }

    pub fn last_query(&self) -> Option<&QueryVector> {
        self.last_query.as_ref()
    }
}

/// Builds the EV's reported vector for this tick: the privatized true
/// location first, then the dummies. Composes the EV's budget with the
/// channel's `(epsilon, delta)`.
///
/// `delta` is the channel's additive slack, precomputed once per channel.
#[allow(clippy::too_many_arguments)]
pub fn submit_query(
    ev: &mut EvState,
    tick: u32,
    net: &RoadNetwork,
    coverage: &EdgeCoverage,
    ch: &ObfuscationChannel,
    delta: f64,
    cfg: &DummyConfig,
    rng: &mut impl rand::Rng,
) -> Result<QueryVector> {
    let true_location = ev
        .location_at(tick)
        .ok_or(Error::MissingTrajectoryPoint {
            ev: ev.ev_id,
            tick,
        })?;
    if !coverage.contains(true_location) {
        return Err(Error::QueryOutsideCoverage {
            ev: ev.ev_id,
            tick,
            segment: true_location,
        });
    }
    let privatized = sample_private_location(ch, true_location, rng)?;
    let elapsed = match &ev.last_query {
        Some(prev) => (tick - prev.timestamp) as f64,
        None => 0.0,
    };
    let dummies = generate_dummies(net, coverage, ev.last_query.as_ref(), elapsed, cfg, rng)?;
    let mut locations = Vec::with_capacity(cfg.m);
    locations.push(privatized);
    locations.extend(dummies);
    let query = QueryVector {
        ev_id: ev.ev_id,
        timestamp: tick,
        locations,
    };
    ev.budget.compose(ch.params().epsilon, delta)?;
    ev.last_query = Some(query.clone());
    Ok(query)
}

/// All reported locations of one tick in scrambled order, with the private
/// ledger mapping each position back to its EV and vector slot.
#[derive(Debug, Clone)]
pub struct ShuffleBatch {
    pub time_t: u32,
    pub scrambled: Vec<SegmentId>,
    /// `ledger[i] = (ev_id, slot)`: scrambled position `i` came from slot
    /// `slot` of that EV's vector. Edge-internal; never serialized for the
    /// third party.
    ledger: Vec<(u32, usize)>,
}

/// What the third-party responder is allowed to see: the tick and the bare
/// locations.
#[derive(Debug, Serialize)]
pub struct ThirdPartyRequest<'a> {
    pub time_t: u32,
    pub locations: &'a [SegmentId],
}

impl ShuffleBatch {
    pub fn third_party_payload(&self) -> ThirdPartyRequest<'_> {
        ThirdPartyRequest {
            time_t: self.time_t,
            locations: &self.scrambled,
        }
    }

    pub fn len(&self) -> usize {
        self.scrambled.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scrambled.is_empty()
    }
}

/// Flattens the tick's query vectors and applies a uniformly random
/// permutation (Fisher-Yates). All vectors must share one tick.
pub fn shuffle_and_forward(
    queries: &[QueryVector],
    rng: &mut impl rand::Rng,
) -> Result<ShuffleBatch> {
    let time_t = queries.first().map(|q| q.timestamp).unwrap_or(0);
    for q in queries {
        if q.timestamp != time_t {
            return Err(Error::MixedTicks(time_t, q.timestamp));
        }
    }
    let mut entries: Vec<(SegmentId, (u32, usize))> = queries
        .iter()
        .flat_map(|q| {
            q.locations
                .iter()
                .enumerate()
                .map(|(slot, &loc)| (loc, (q.ev_id, slot)))
        })
        .collect();
    entries.shuffle(rng);
    let (scrambled, ledger) = entries.into_iter().unzip();
    Ok(ShuffleBatch {
        time_t,
        scrambled,
        ledger,
    })
}

/// Per-location nearest-station answers and the per-EV reassembled vectors.
#[derive(Debug, Clone)]
pub struct ResponseBatch {
    pub time_t: u32,
    /// Parallel to the scrambled batch; `None` when no available station is
    /// reachable from that location.
    pub answers: Vec<Option<NearestStation>>,
    /// `ev_id ->` response vector, one entry per slot of the EV's query.
    pub reassembled: BTreeMap<u32, Vec<Option<NearestStation>>>,
}

/// Answers every scrambled location with its nearest available station and
/// reassembles per-EV vectors through the ledger. Individual unreachable
/// locations fail per entry, not the batch.
pub fn respond_nearest(
    batch: &ShuffleBatch,
    net: &RoadNetwork,
    stations: &StationSet,
) -> Result<ResponseBatch> {
    if stations.available().next().is_none() {
        return Err(Error::NoReachableStation);
    }
    let answers: Vec<Option<NearestStation>> = batch
        .scrambled
        .iter()
        .map(|&loc| nearest_available_station(net, stations, loc).ok())
        .collect();

    let mut sizes: BTreeMap<u32, usize> = BTreeMap::new();
    for &(ev, slot) in &batch.ledger {
        let size = sizes.entry(ev).or_insert(0);
        *size = (*size).max(slot + 1);
    }
    let mut reassembled: BTreeMap<u32, Vec<Option<NearestStation>>> = sizes
        .into_iter()
        .map(|(ev, size)| (ev, vec![None; size]))
        .collect();
    for (i, &(ev, slot)) in batch.ledger.iter().enumerate() {
        reassembled.get_mut(&ev).expect("ledger key")[slot] = answers[i];
    }
    Ok(ResponseBatch {
        time_t: batch.time_t,
        answers,
        reassembled,
    })
}

/// The station the EV actually drives to: the response entry minimizing the
/// travel distance from its true location, ties to the lowest station id.
pub fn choose_destination(
    true_location: SegmentId,
    response: &[Option<NearestStation>],
    net: &RoadNetwork,
) -> Result<NearestStation> {
    if response.iter().all(|r| r.is_none()) {
        return Err(Error::EmptyResponse);
    }
    let dist = net.distances_from(true_location)?;
    let mut best: Option<(f64, NearestStation)> = None;
    for station in response.iter().flatten() {
        let d = dist[station.location];
        if !d.is_finite() {
            continue;
        }
        let better = match &best {
            None => true,
            Some((bd, bs)) => d < *bd || (d == *bd && station.station_id < bs.station_id),
        };
        if better {
            best = Some((d, *station));
        }
    }
    match best {
        // Report the travel cost from the true location, not from the
        // privatized one the responder answered.
        Some((d, station)) => Ok(NearestStation {
            distance: d,
            ..station
        }),
        None => Err(Error::NoReachableStation),
    }
}
