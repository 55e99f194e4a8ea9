//! Discrete truncated Laplace obfuscation channel and its privacy accounting.
//!
//! A channel row assigns probability proportional to `exp(-eps * d(x, y))`
//! to every output `y` within travel distance `r` of the input `x` and zero
//! beyond, normalized per row (ball sizes differ across inputs, so the
//! normalizer is per-source). Distances in exponents are measured in units
//! of `distance_unit_scale` meters, one road segment by convention, so the
//! usual `eps` ranges apply to segment-valued radii.
//!
//! The additive slack `delta` achieved by a truncated channel is the maximum
//! over outputs and ordered input pairs of
//! `(exp(-eps d) P[y|x1] - P[y|x2]) / exp((1 - eps) d)`, clamped at zero,
//! and the indistinguishability inequality it certifies is
//! `P[y|x1] <= exp(eps d) P[y|x2] + delta exp(d)`.

use std::collections::HashMap;
use std::io::Write;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::road_network::{RoadNetwork, SegmentId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MechanismParams {
    /// Privacy parameter per distance unit; strictly positive.
    pub epsilon: f64,
    /// Truncation radius in meters.
    pub radius_r: f64,
    /// Meters per distance unit used in exponents.
    pub distance_unit_scale: f64,
}

impl MechanismParams {
    pub fn new(epsilon: f64, radius_r: f64, distance_unit_scale: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return Err(Error::InvalidParams(format!(
                "epsilon must be finite and positive, got {epsilon}"
            )));
        }
        if !(radius_r.is_finite() && radius_r >= 0.0) {
            return Err(Error::InvalidParams(format!(
                "radius must be finite and nonnegative, got {radius_r}"
            )));
        }
        if !(distance_unit_scale.is_finite() && distance_unit_scale > 0.0) {
            return Err(Error::InvalidParams(format!(
                "distance unit scale must be finite and positive, got {distance_unit_scale}"
            )));
        }
        Ok(MechanismParams {
            epsilon,
            radius_r,
            distance_unit_scale,
        })
    }

    /// Parameters in segment units: `epsilon` per segment, radius in
    /// segments, on a network with segment length `k` meters.
    pub fn per_segment(epsilon: f64, radius_segments: f64, k: f64) -> Result<Self> {
        Self::new(epsilon, radius_segments * k, k)
    }

    pub fn radius_units(&self) -> f64 {
        self.radius_r / self.distance_unit_scale
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ChannelKind {
    /// Built by `build_channel`; support is exactly the truncation ball.
    TruncatedLaplace,
    /// Convex combination with the uniform channel over coverage; support
    /// extends to the whole coverage.
    Mixed { m: usize },
}

/// Row-stochastic conditional report probabilities `P[y | x]` with the
/// distances that shaped them.
#[derive(Debug, Clone)]
pub struct ObfuscationChannel {
    domain: Vec<SegmentId>,
    codomain: Vec<SegmentId>,
    domain_index: HashMap<SegmentId, usize>,
    codomain_index: HashMap<SegmentId, usize>,
    matrix: Vec<Vec<f64>>,
    row_normalizers: Vec<f64>,
    /// Travel distance in exponent units, domain row by codomain column;
    /// `f64::INFINITY` when unreachable.
    dist_units: Vec<Vec<f64>>,
    params: MechanismParams,
    kind: ChannelKind,
}

/// Discrete truncated Laplace channel over `domain -> codomain`.
///
/// `matrix[x][y] = c_x * exp(-eps * d(x, y))` for `d(x, y) <= r`, zero
/// beyond the radius; `c_x` normalizes each row. Exponents are computed in
/// log space with a max shift before exponentiation.
pub fn build_channel(
    net: &RoadNetwork,
    domain: &[SegmentId],
    codomain: &[SegmentId],
    params: MechanismParams,
) -> Result<ObfuscationChannel> {
    // Re-validate: params may have been constructed literally.
    let params = MechanismParams::new(params.epsilon, params.radius_r, params.distance_unit_scale)?;
    if domain.is_empty() || codomain.is_empty() {
        return Err(Error::InvalidParams(
            "channel domain and codomain must be nonempty".into(),
        ));
    }
    for &y in codomain {
        net.check_segment(y)?;
    }
    let codomain_index = index_of(codomain, "codomain")?;
    let domain_index = index_of(domain, "domain")?;
    for &x in domain {
        if !codomain_index.contains_key(&x) {
            return Err(Error::DomainNotInCodomain(x));
        }
    }

    let scale = params.distance_unit_scale;
    let rows: Vec<(Vec<f64>, f64, Vec<f64>)> = domain
        .par_iter()
        .map(|&x| {
            let dist_m = net.distances_from(x).expect("validated segment");
            let dist_units: Vec<f64> = codomain.iter().map(|&y| dist_m[y] / scale).collect();
            let logits: Vec<Option<f64>> = codomain
                .iter()
                .zip(&dist_units)
                .map(|(&y, &du)| {
                    let dm = dist_m[y];
                    (dm <= params.radius_r).then(|| -params.epsilon * du)
                })
                .collect();
            let max_logit = logits
                .iter()
                .flatten()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max);
            debug_assert!(max_logit.is_finite(), "x is always inside its own ball");
            let shifted_sum: f64 = logits
                .iter()
                .flatten()
                .map(|&l| (l - max_logit).exp())
                .sum();
            let row: Vec<f64> = logits
                .iter()
                .map(|l| match l {
                    Some(l) => (l - max_logit).exp() / shifted_sum,
                    None => 0.0,
                })
                .collect();
            // c_x = 1 / sum(exp(logit)) = exp(-max) / sum(exp(logit - max)).
            let normalizer = (-max_logit).exp() / shifted_sum;
            (row, normalizer, dist_units)
        })
        .collect();

    let mut matrix = Vec::with_capacity(rows.len());
    let mut row_normalizers = Vec::with_capacity(rows.len());
    let mut dist_units = Vec::with_capacity(rows.len());
    for (row, c, d) in rows {
        matrix.push(row);
        row_normalizers.push(c);
        dist_units.push(d);
    }
    Ok(ObfuscationChannel {
        domain: domain.to_vec(),
        codomain: codomain.to_vec(),
        domain_index,
        codomain_index,
        matrix,
        row_normalizers,
        dist_units,
        params,
        kind: ChannelKind::TruncatedLaplace,
    })
}

fn index_of(ids: &[SegmentId], what: &str) -> Result<HashMap<SegmentId, usize>> {
    let mut index = HashMap::with_capacity(ids.len());
    for (i, &id) in ids.iter().enumerate() {
        if index.insert(id, i).is_some() {
            return Err(Error::InvalidParams(format!(
                "duplicate segment {id} in channel {what}"
            )));
        }
    }
    Ok(index)
}

impl ObfuscationChannel {
    pub(crate) fn from_parts(
        domain: Vec<SegmentId>,
        codomain: Vec<SegmentId>,
        matrix: Vec<Vec<f64>>,
        row_normalizers: Vec<f64>,
        dist_units: Vec<Vec<f64>>,
        params: MechanismParams,
        kind: ChannelKind,
    ) -> Result<Self> {
        let domain_index = index_of(&domain, "domain")?;
        let codomain_index = index_of(&codomain, "codomain")?;
        for row in &matrix {
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::NotNormalized(sum));
            }
        }
        Ok(ObfuscationChannel {
            domain,
            codomain,
            domain_index,
            codomain_index,
            matrix,
            row_normalizers,
            dist_units,
            params,
            kind,
        })
    }

    pub fn domain(&self) -> &[SegmentId] {
        &self.domain
    }

    pub fn codomain(&self) -> &[SegmentId] {
        &self.codomain
    }

    pub fn params(&self) -> MechanismParams {
        self.params
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    pub fn domain_index(&self, x: SegmentId) -> Result<usize> {
        self.domain_index
            .get(&x)
            .copied()
            .ok_or(Error::NotInDomain(x))
    }

    pub fn codomain_index(&self, y: SegmentId) -> Option<usize> {
        self.codomain_index.get(&y).copied()
    }

    /// Row of conditional probabilities for input `x`, ordered as the
    /// codomain.
    pub fn row(&self, x: SegmentId) -> Result<&[f64]> {
        Ok(&self.matrix[self.domain_index(x)?])
    }

    /// `P[y | x]`; zero for outputs outside the codomain.
    pub fn prob(&self, x: SegmentId, y: SegmentId) -> Result<f64> {
        let row = self.row(x)?;
        Ok(self
            .codomain_index(y)
            .map_or(0.0, |j| row[j]))
    }

    pub fn row_normalizer(&self, x: SegmentId) -> Result<f64> {
        Ok(self.row_normalizers[self.domain_index(x)?])
    }

    /// Travel distance `x -> y` in exponent units.
    pub fn distance_units(&self, x: SegmentId, y: SegmentId) -> Result<f64> {
        let i = self.domain_index(x)?;
        let j = self
            .codomain_index(y)
            .ok_or(Error::InvalidSegment {
                id: y,
                nodes: self.codomain.len(),
            })?;
        Ok(self.dist_units[i][j])
    }

    /// Cumulative-sum sampler for one row; useful in tight sampling loops.
    pub fn row_sampler(&self, x: SegmentId) -> Result<RowSampler<'_>> {
        let row = &self.matrix[self.domain_index(x)?];
        let mut cumulative = Vec::with_capacity(row.len());
        let mut acc = 0.0;
        for &p in row {
            acc += p;
            cumulative.push(acc);
        }
        Ok(RowSampler {
            codomain: &self.codomain,
            cumulative,
        })
    }
}

/// Inverse-CDF sampler over a single channel row.
pub struct RowSampler<'a> {
    codomain: &'a [SegmentId],
    cumulative: Vec<f64>,
}

impl RowSampler<'_> {
    pub fn sample(&self, rng: &mut impl rand::Rng) -> SegmentId {
        let u: f64 = rng.random::<f64>() * self.cumulative.last().copied().unwrap_or(1.0);
        let idx = self.cumulative.partition_point(|&c| c <= u);
        self.codomain[idx.min(self.codomain.len() - 1)]
    }
}

/// Draws a privatized location for `x` from the channel row. Every draw is
/// within the truncation radius by construction.
pub fn sample_private_location(
    ch: &ObfuscationChannel,
    x: SegmentId,
    rng: &mut impl rand::Rng,
) -> Result<SegmentId> {
    Ok(ch.row_sampler(x)?.sample(rng))
}

/// Worst-case additive slack achieved by the channel at its own epsilon.
pub fn compute_delta(ch: &ObfuscationChannel) -> f64 {
    delta_report(ch).delta
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaWitness {
    pub output: SegmentId,
    pub x1: SegmentId,
    pub x2: SegmentId,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeltaReport {
    pub delta: f64,
    /// Maximizing triple when `delta > 0`.
    pub witness: Option<DeltaWitness>,
    /// Largest pair distance (in units) for which `delta * exp(d)` stays a
    /// probability; infinite when `delta == 0`.
    pub max_valid_distance_units: f64,
}

/// Maximizes `(exp(-eps d) P[y|x1] - P[y|x2]) / exp((1 - eps) d)` over
/// outputs and ordered domain pairs, clamped at zero. Pairs with no directed
/// path are skipped: the indistinguishability bound is vacuous in the limit
/// `d -> inf`.
pub fn delta_report(ch: &ObfuscationChannel) -> DeltaReport {
    let eps = ch.params.epsilon;
    let n = ch.domain.len();
    let mut best = 0.0_f64;
    let mut witness = None;
    for i1 in 0..n {
        for i2 in 0..n {
            if i1 == i2 {
                continue;
            }
            // d(x1, x2) with x2 looked up as an output of x1's row.
            let j2 = ch.codomain_index(ch.domain[i2]).expect("domain in codomain");
            let d = ch.dist_units[i1][j2];
            if !d.is_finite() {
                continue;
            }
            let decay = (-eps * d).exp();
            let growth = ((eps - 1.0) * d).exp();
            for j in 0..ch.codomain.len() {
                let term = decay * ch.matrix[i1][j] - ch.matrix[i2][j];
                if term <= 0.0 {
                    continue;
                }
                let cand = term * growth;
                if cand > best {
                    best = cand;
                    witness = Some(DeltaWitness {
                        output: ch.codomain[j],
                        x1: ch.domain[i1],
                        x2: ch.domain[i2],
                    });
                }
            }
        }
    }
    DeltaReport {
        delta: best,
        witness,
        max_valid_distance_units: if best > 0.0 { -best.ln() } else { f64::INFINITY },
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgeoiWitness {
    pub outputs: Vec<SegmentId>,
    pub x1: SegmentId,
    pub x2: SegmentId,
    /// `P[S|x1] - exp(eps d) P[S|x2] - delta exp(d)`; positive means the
    /// bound is violated.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgeoiCheck {
    pub holds: bool,
    /// Worst singleton witness (largest slack), even when the bound holds.
    pub witness: AgeoiWitness,
    /// Exhaustive subset check, run when the codomain has at most
    /// `SET_LEVEL_LIMIT` outputs.
    pub set_level: Option<SetLevelCheck>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SetLevelCheck {
    pub holds: bool,
    pub worst: AgeoiWitness,
}

/// Codomain size up to which `verify_ageoi` also enumerates every output
/// subset.
pub const SET_LEVEL_LIMIT: usize = 12;

const VERIFY_REL_TOL: f64 = 1e-9;
const VERIFY_ABS_TOL: f64 = 1e-12;

/// Checks `P[y|x1] <= exp(eps d(x1,x2)) P[y|x2] + delta exp(d(x1,x2))` for
/// every singleton output and ordered pair of domain points. On small
/// codomains the same bound is additionally reported for every output set.
pub fn verify_ageoi(ch: &ObfuscationChannel, epsilon: f64, delta: f64) -> AgeoiCheck {
    let mut worst: Option<AgeoiWitness> = None;
    for_each_pair(ch, |i1, i2, d| {
        let grow_eps = (epsilon * d).exp();
        let grow_unit = d.exp();
        for j in 0..ch.codomain.len() {
            let lhs = ch.matrix[i1][j];
            let rhs = grow_eps * ch.matrix[i2][j] + delta * grow_unit;
            let slack = lhs - rhs;
            if worst.as_ref().is_none_or(|w| slack > w.slack) {
                worst = Some(AgeoiWitness {
                    outputs: vec![ch.codomain[j]],
                    x1: ch.domain[i1],
                    x2: ch.domain[i2],
                    slack,
                });
            }
        }
    });
    let witness = worst.expect("domain is nonempty");
    let holds = !violates(&witness, ch, epsilon, delta);

    let set_level = (ch.codomain.len() <= SET_LEVEL_LIMIT).then(|| {
        let mut worst: Option<AgeoiWitness> = None;
        for_each_pair(ch, |i1, i2, d| {
            let grow_eps = (epsilon * d).exp();
            let grow_unit = d.exp();
            for mask in 1u32..(1 << ch.codomain.len()) {
                let (mut p1, mut p2) = (0.0, 0.0);
                for j in 0..ch.codomain.len() {
                    if mask & (1 << j) != 0 {
                        p1 += ch.matrix[i1][j];
                        p2 += ch.matrix[i2][j];
                    }
                }
                let slack = p1 - (grow_eps * p2 + delta * grow_unit);
                if worst.as_ref().is_none_or(|w| slack > w.slack) {
                    let outputs = (0..ch.codomain.len())
                        .filter(|j| mask & (1 << j) != 0)
                        .map(|j| ch.codomain[j])
                        .collect();
                    worst = Some(AgeoiWitness {
                        outputs,
                        x1: ch.domain[i1],
                        x2: ch.domain[i2],
                        slack,
                    });
                }
            }
        });
        let worst = worst.expect("domain is nonempty");
        SetLevelCheck {
            holds: !violates(&worst, ch, epsilon, delta),
            worst,
        }
    });

    AgeoiCheck {
        holds,
        witness,
        set_level,
    }
}

fn violates(w: &AgeoiWitness, ch: &ObfuscationChannel, epsilon: f64, delta: f64) -> bool {
    // Recompute the bound sides so the tolerance is relative to the bound,
    // not to the stored slack.
    let i1 = ch.domain_index(w.x1).expect("witness from domain");
    let i2 = ch.domain_index(w.x2).expect("witness from domain");
    let j2 = ch.codomain_index(w.x2).expect("domain in codomain");
    let d = ch.dist_units[i1][j2];
    let (mut lhs, mut rhs) = (0.0, delta * d.exp());
    for y in &w.outputs {
        let j = ch.codomain_index(*y).expect("witness from codomain");
        lhs += ch.matrix[i1][j];
        rhs += (epsilon * d).exp() * ch.matrix[i2][j];
    }
    lhs > rhs * (1.0 + VERIFY_REL_TOL) + VERIFY_ABS_TOL
}

/// Ordered domain pairs with finite directed distance, including `x1 == x2`.
fn for_each_pair(ch: &ObfuscationChannel, mut f: impl FnMut(usize, usize, f64)) {
    for i1 in 0..ch.domain.len() {
        for i2 in 0..ch.domain.len() {
            let j2 = ch.codomain_index(ch.domain[i2]).expect("domain in codomain");
            let d = ch.dist_units[i1][j2];
            if d.is_finite() {
                f(i1, i2, d);
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Budget accounting
// ---------------------------------------------------------------------------

/// Additively composed privacy spend: after events `(eps_i, delta_i)` the
/// mechanism pair is `(sum eps_i, sum delta_i)`-geo-indistinguishable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PrivacyBudget {
    epsilon_total: f64,
    delta_total: f64,
    events: Vec<(f64, f64)>,
}

impl PrivacyBudget {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn compose(&mut self, epsilon: f64, delta: f64) -> Result<()> {
        if epsilon < 0.0 || delta < 0.0 || !epsilon.is_finite() || !delta.is_finite() {
            return Err(Error::NegativeBudgetEvent { epsilon, delta });
        }
        self.epsilon_total += epsilon;
        self.delta_total += delta;
        self.events.push((epsilon, delta));
        Ok(())
    }

    pub fn epsilon_total(&self) -> f64 {
        self.epsilon_total
    }

    pub fn delta_total(&self) -> f64 {
        self.delta_total
    }

    pub fn events(&self) -> &[(f64, f64)] {
        &self.events
    }
}

// ---------------------------------------------------------------------------
// Export
// ---------------------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
pub struct ChannelSidecar {
    pub params: MechanismParams,
    pub kind: ChannelKind,
    pub domain: Vec<SegmentId>,
    pub codomain: Vec<SegmentId>,
    pub row_normalizers: Vec<f64>,
    /// Entries below this probability were omitted from the CSV.
    pub csv_min_prob: f64,
}

/// Writes `x,y,prob` rows for entries with probability at least `min_prob`,
/// and a JSON sidecar with the parameters and per-row normalizers.
pub fn export_channel(
    ch: &ObfuscationChannel,
    csv_path: &Path,
    sidecar_path: &Path,
    min_prob: f64,
) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(csv_path)?);
    writeln!(out, "x,y,prob")?;
    for (i, &x) in ch.domain.iter().enumerate() {
        for (j, &y) in ch.codomain.iter().enumerate() {
            let p = ch.matrix[i][j];
            if p >= min_prob && p > 0.0 {
                writeln!(out, "{x},{y},{p}")?;
            }
        }
    }
    let sidecar = ChannelSidecar {
        params: ch.params,
        kind: ch.kind,
        domain: ch.domain.clone(),
        codomain: ch.codomain.clone(),
        row_normalizers: ch.row_normalizers.clone(),
        csv_min_prob: min_prob,
    };
    std::fs::write(sidecar_path, serde_json::to_string_pretty(&sidecar)?)?;
    Ok(())
}
