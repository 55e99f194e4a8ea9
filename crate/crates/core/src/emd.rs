//! Exact earth mover's distance between segment distributions under the
//! road-network metric, solved as a minimum-cost flow.
//!
//! The ground cost between support points is the symmetrized traversal
//! distance `(d(i, j) + d(j, i)) / 2`; the directed distance alone is not a
//! metric, and optimal transport needs one. Masses are quantized to `1e-12`
//! quanta (largest-remainder rounding keeps totals exact), surplus moves
//! from over-supplied to under-supplied points along shortest augmenting
//! paths with Johnson potentials. Direct source-to-sink arcs suffice: the
//! symmetrized cost satisfies the triangle inequality, so routing through an
//! intermediate support point never wins.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use ordered_float::OrderedFloat;

use crate::error::{Error, Result};
use crate::ibu::DiscreteDistribution;
use crate::road_network::RoadNetwork;

/// Mass quanta per unit of probability.
const QUANTA: u64 = 1_000_000_000_000;

/// Exact optimal-transport cost in meters between `p` and `q`, which must
/// share a support universe. Errors with [`Error::UnreachableMass`] when
/// mass would have to cross between mutually unreachable components.
pub fn emd(net: &RoadNetwork, p: &DiscreteDistribution, q: &DiscreteDistribution) -> Result<f64> {
    if p.support() != q.support() {
        return Err(Error::SupportMismatch);
    }
    let support = p.support();
    let n = support.len();

    // Symmetrized ground metric over the support.
    let mut cost = vec![vec![f64::INFINITY; n]; n];
    let rows: Vec<Vec<f64>> = support
        .iter()
        .map(|&s| Ok(net.distances_from(s)?.to_vec()))
        .collect::<Result<_>>()?;
    for i in 0..n {
        for j in 0..n {
            let out = rows[i][support[j]];
            let back = rows[j][support[i]];
            if out.is_finite() && back.is_finite() {
                cost[i][j] = (out + back) / 2.0;
            }
        }
    }

    let pq = quantize(p.mass());
    let qq = quantize(q.mass());
    let balance: Vec<i64> = pq
        .iter()
        .zip(&qq)
        .map(|(&a, &b)| a as i64 - b as i64)
        .collect();

    let sources: Vec<usize> = (0..n).filter(|&i| balance[i] > 0).collect();
    let sinks: Vec<usize> = (0..n).filter(|&i| balance[i] < 0).collect();
    if sources.is_empty() {
        return Ok(0.0);
    }
    check_reachability(support, &cost, &balance)?;

    let plan = min_cost_transport(
        &sources.iter().map(|&i| balance[i] as u64).collect::<Vec<_>>(),
        &sinks.iter().map(|&i| (-balance[i]) as u64).collect::<Vec<_>>(),
        &|s, t| cost[sources[s]][sinks[t]],
    );

    let mut total = 0.0;
    for (s, row) in plan.iter().enumerate() {
        for (t, &flow) in row.iter().enumerate() {
            if flow > 0 {
                total += flow as f64 / QUANTA as f64 * cost[sources[s]][sinks[t]];
            }
        }
    }
    Ok(total)
}

/// Largest-remainder rounding to `QUANTA` total quanta.
fn quantize(mass: &[f64]) -> Vec<u64> {
    let sum: f64 = mass.iter().sum();
    let scaled: Vec<f64> = mass.iter().map(|&m| m / sum * QUANTA as f64).collect();
    let mut quanta: Vec<u64> = scaled.iter().map(|&s| s.floor() as u64).collect();
    let total: u64 = quanta.iter().sum();
    let mut order: Vec<usize> = (0..mass.len()).collect();
    order.sort_by_key(|&i| (Reverse(OrderedFloat(scaled[i] - scaled[i].floor())), i));
    if total < QUANTA {
        for &i in order.iter().take((QUANTA - total) as usize) {
            quanta[i] += 1;
        }
    } else {
        let mut excess = total - QUANTA;
        for &i in order.iter().rev() {
            if excess == 0 {
                break;
            }
            if quanta[i] > 0 {
                quanta[i] -= 1;
                excess -= 1;
            }
        }
    }
    quanta
}

/// Mass must balance within every mutual-reachability class.
fn check_reachability(
    support: &[crate::road_network::SegmentId],
    cost: &[Vec<f64>],
    balance: &[i64],
) -> Result<()> {
    let n = support.len();
    let mut class = vec![usize::MAX; n];
    let mut next_class = 0;
    for start in 0..n {
        if class[start] != usize::MAX {
            continue;
        }
        let mut stack = vec![start];
        class[start] = next_class;
        while let Some(i) = stack.pop() {
            for j in 0..n {
                if class[j] == usize::MAX && cost[i][j].is_finite() {
                    class[j] = next_class;
                    stack.push(j);
                }
            }
        }
        next_class += 1;
    }
    let mut class_balance = vec![0i64; next_class];
    for i in 0..n {
        class_balance[class[i]] += balance[i];
    }
    if class_balance.iter().all(|&b| b == 0) {
        return Ok(());
    }
    // Name one stranded source and one sink it cannot reach.
    let bad = class_balance.iter().position(|&b| b != 0).expect("nonzero");
    let i = (0..n)
        .find(|&i| class[i] == bad && balance[i] > 0)
        .or_else(|| (0..n).find(|&i| class[i] == bad))
        .expect("class member");
    let j = (0..n)
        .find(|&j| class[j] != bad && balance[j] < 0)
        .or_else(|| (0..n).find(|&j| class[j] != bad))
        .unwrap_or(i);
    Err(Error::UnreachableMass(support[i], support[j]))
}

/// Successive shortest augmenting paths with potentials on the bipartite
/// transportation graph. Returns the flow plan in quanta.
fn min_cost_transport(
    supply: &[u64],
    demand: &[u64],
    cost: &dyn Fn(usize, usize) -> f64,
) -> Vec<Vec<u64>> {
    let ns = supply.len();
    let nt = demand.len();
    let mut surplus = supply.to_vec();
    let mut deficit = demand.to_vec();
    let mut flow = vec![vec![0u64; nt]; ns];
    let mut pot = vec![0.0f64; ns + nt]; // sources then sinks
    let mut remaining: u64 = surplus.iter().sum();

    while remaining > 0 {
        // Dijkstra on the residual graph from every surplus source.
        let mut dist = vec![f64::INFINITY; ns + nt];
        let mut parent = vec![usize::MAX; ns + nt];
        let mut done = vec![false; ns + nt];
        let mut heap = BinaryHeap::new();
        for s in 0..ns {
            if surplus[s] > 0 {
                dist[s] = 0.0;
                heap.push(Reverse((OrderedFloat(0.0), s)));
            }
        }
        let mut target = usize::MAX;
        while let Some(Reverse((OrderedFloat(d), v))) = heap.pop() {
            if done[v] || d > dist[v] {
                continue;
            }
            done[v] = true;
            if v >= ns && deficit[v - ns] > 0 {
                target = v;
                break;
            }
            if v < ns {
                // Forward arcs source -> sink.
                for t in 0..nt {
                    let c = cost(v, t);
                    if !c.is_finite() {
                        continue;
                    }
                    let rc = (c + pot[v] - pot[ns + t]).max(0.0);
                    if d + rc < dist[ns + t] {
                        dist[ns + t] = d + rc;
                        parent[ns + t] = v;
                        heap.push(Reverse((OrderedFloat(d + rc), ns + t)));
                    }
                }
            } else {
                // Reverse arcs sink -> source where flow remains.
                let t = v - ns;
                for s in 0..ns {
                    if flow[s][t] == 0 {
                        continue;
                    }
                    let rc = (-cost(s, t) + pot[v] - pot[s]).max(0.0);
                    if d + rc < dist[s] {
                        dist[s] = d + rc;
                        parent[s] = v;
                        heap.push(Reverse((OrderedFloat(d + rc), s)));
                    }
                }
            }
        }
        assert!(
            target != usize::MAX,
            "no augmenting path despite balanced reachable mass"
        );
        let reached = dist[target];

        // Bottleneck along the alternating path.
        let sink = target - ns;
        let mut amount = deficit[sink];
        let mut v = target;
        while parent[v] != usize::MAX {
            let u = parent[v];
            if v >= ns {
                // u is a source feeding sink v.
            } else {
                // Reverse arc: flow from source v to sink (u - ns) shrinks.
                amount = amount.min(flow[v][u - ns]);
            }
            v = u;
        }
        amount = amount.min(surplus[v]);
        debug_assert!(amount > 0);

        // Apply the augmentation.
        let start = v;
        let mut v = target;
        while parent[v] != usize::MAX {
            let u = parent[v];
            if v >= ns {
                flow[u][v - ns] += amount;
            } else {
                flow[v][u - ns] -= amount;
            }
            v = u;
        }
        surplus[start] -= amount;
        deficit[sink] -= amount;
        remaining -= amount;

        // Johnson potential update keeps reduced costs nonnegative.
        for v in 0..ns + nt {
            if dist[v].is_finite() {
                pot[v] += dist[v].min(reached);
            } else {
                pot[v] += reached;
            }
        }
    }
    flow
}
