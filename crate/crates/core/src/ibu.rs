//! Iterative Bayesian update: recovers the distribution of true query
//! locations from the sanitized report stream and a known channel.
//!
//! Starting from any full-support estimate, each step reweights by the
//! posterior of the observed empirical distribution:
//! `theta'(x) = sum_y q(y) * theta(x) C[x][y] / sum_z theta(z) C[z][y]`.
//! This is an EM iteration, so the observed-data log-likelihood
//! `sum_y q(y) ln(sum_x theta(x) C[x][y])` never decreases, and the fixed
//! points include every `theta` whose pushforward through the channel equals
//! `q` exactly.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::mechanism::ObfuscationChannel;
use crate::road_network::{RoadNetwork, SegmentId};

/// Probability mass function over an ordered list of segments.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteDistribution {
    support: Vec<SegmentId>,
    mass: Vec<f64>,
    index: HashMap<SegmentId, usize>,
}

impl DiscreteDistribution {
    pub fn new(support: Vec<SegmentId>, mass: Vec<f64>) -> Result<Self> {
        if support.len() != mass.len() {
            return Err(Error::SupportMismatch);
        }
        let mut index = HashMap::with_capacity(support.len());
        for (i, &s) in support.iter().enumerate() {
            if index.insert(s, i).is_some() {
                return Err(Error::InvalidParams(format!(
                    "duplicate segment {s} in distribution support"
                )));
            }
        }
        for (i, &m) in mass.iter().enumerate() {
            if !(m.is_finite() && m >= 0.0) {
                return Err(Error::NegativeMass { index: i, mass: m });
            }
        }
        let sum: f64 = mass.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::NotNormalized(sum));
        }
        Ok(DiscreteDistribution {
            support,
            mass,
            index,
        })
    }

    pub fn uniform(support: Vec<SegmentId>) -> Result<Self> {
        let n = support.len();
        if n == 0 {
            return Err(Error::InvalidParams("empty support".into()));
        }
        Self::new(support, vec![1.0 / n as f64; n])
    }

    pub fn point_mass(support: Vec<SegmentId>, at: SegmentId) -> Result<Self> {
        let mut mass = vec![0.0; support.len()];
        let pos = support
            .iter()
            .position(|&s| s == at)
            .ok_or(Error::OutOfSupport(at))?;
        mass[pos] = 1.0;
        Self::new(support, mass)
    }

    pub fn support(&self) -> &[SegmentId] {
        &self.support
    }

    pub fn mass(&self) -> &[f64] {
        &self.mass
    }

    pub fn get(&self, segment: SegmentId) -> Option<f64> {
        self.index.get(&segment).map(|&i| self.mass[i])
    }

    pub fn is_full_support(&self) -> bool {
        self.mass.iter().all(|&m| m > 0.0)
    }

    pub fn tv_distance(&self, other: &Self) -> Result<f64> {
        if self.support != other.support {
            return Err(Error::SupportMismatch);
        }
        Ok(self
            .mass
            .iter()
            .zip(&other.mass)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
            / 2.0)
    }

    pub fn sample(&self, rng: &mut impl rand::Rng) -> SegmentId {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (i, &m) in self.mass.iter().enumerate() {
            acc += m;
            if u < acc {
                return self.support[i];
            }
        }
        *self.support.last().expect("nonempty support")
    }
}

/// Frequencies of each observation over the given support.
pub fn empirical_distribution(
    observations: &[SegmentId],
    support: &[SegmentId],
) -> Result<DiscreteDistribution> {
    if observations.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let mut counts = vec![0u64; support.len()];
    let index: HashMap<SegmentId, usize> = support
        .iter()
        .enumerate()
        .map(|(i, &s)| (s, i))
        .collect();
    for &obs in observations {
        match index.get(&obs) {
            Some(&i) => counts[i] += 1,
            None => return Err(Error::OutOfSupport(obs)),
        }
    }
    let n = observations.len() as f64;
    let mass: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
    DiscreteDistribution::new(support.to_vec(), mass)
}

/// Numerical floor below which a used channel column counts as degenerate.
const DENOMINATOR_FLOOR: f64 = 1e-300;

/// One Bayesian update of `theta` against the observed distribution `q`.
pub fn ibu_step(
    theta: &DiscreteDistribution,
    q: &DiscreteDistribution,
    ch: &ObfuscationChannel,
) -> Result<DiscreteDistribution> {
    check_supports(theta, q, ch)?;
    let denom = pushforward(theta, ch)?;
    let mut next = vec![0.0; theta.support.len()];
    for (j, &qy) in q.mass.iter().enumerate() {
        if qy == 0.0 {
            continue;
        }
        if denom[j] < DENOMINATOR_FLOOR {
            return Err(Error::DegenerateChannelColumn {
                output: ch.codomain()[j],
            });
        }
        let scale = qy / denom[j];
        for (i, &x) in theta.support.iter().enumerate() {
            if theta.mass[i] == 0.0 {
                continue;
            }
            let row = ch.row(x).expect("support checked");
            next[i] += theta.mass[i] * row[j] * scale;
        }
    }
    let sum: f64 = next.iter().sum();
    debug_assert!((sum - 1.0).abs() <= 1e-9, "update drifted: sum = {sum}");
    for v in &mut next {
        *v /= sum;
    }
    DiscreteDistribution::new(theta.support.clone(), next)
}

/// Pushforward of `theta` through the channel: `sum_x theta(x) C[x][y]` per
/// output column.
fn pushforward(theta: &DiscreteDistribution, ch: &ObfuscationChannel) -> Result<Vec<f64>> {
    let mut denom = vec![0.0; ch.codomain().len()];
    for (i, &x) in theta.support.iter().enumerate() {
        let tx = theta.mass[i];
        if tx == 0.0 {
            continue;
        }
        let row = ch.row(x)?;
        for (j, &p) in row.iter().enumerate() {
            denom[j] += tx * p;
        }
    }
    Ok(denom)
}

/// Observed-data log-likelihood `sum_y q(y) ln(sum_x theta(x) C[x][y])`.
pub fn log_likelihood(
    theta: &DiscreteDistribution,
    q: &DiscreteDistribution,
    ch: &ObfuscationChannel,
) -> Result<f64> {
    check_supports(theta, q, ch)?;
    let denom = pushforward(theta, ch)?;
    let mut ll = 0.0;
    for (j, &qy) in q.mass.iter().enumerate() {
        if qy == 0.0 {
            continue;
        }
        if denom[j] < DENOMINATOR_FLOOR {
            return Err(Error::DegenerateChannelColumn {
                output: ch.codomain()[j],
            });
        }
        ll += qy * denom[j].ln();
    }
    Ok(ll)
}

fn check_supports(
    theta: &DiscreteDistribution,
    q: &DiscreteDistribution,
    ch: &ObfuscationChannel,
) -> Result<()> {
    if theta.support != ch.domain() || q.support != ch.codomain() {
        return Err(Error::SupportMismatch);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct IbuOptions {
    pub iterations: usize,
    /// Defaults to uniform over the channel domain; must have full support.
    pub theta0: Option<DiscreteDistribution>,
    /// Stop once total variation between consecutive estimates drops below
    /// this.
    pub early_stop_tv: Option<f64>,
    pub record_trajectory: bool,
}

impl Default for IbuOptions {
    fn default() -> Self {
        IbuOptions {
            iterations: 100,
            theta0: None,
            early_stop_tv: None,
            record_trajectory: false,
        }
    }
}

/// Reference against which a per-iteration EMD curve is recorded.
#[derive(Clone, Copy)]
pub struct EmdReference<'a> {
    pub net: &'a RoadNetwork,
    pub reference: &'a DiscreteDistribution,
}

#[derive(Debug, Clone)]
pub struct IbuRun {
    /// Final estimate.
    pub theta: DiscreteDistribution,
    pub iterations_run: usize,
    /// Log-likelihood of `theta_t` for `t = 0..=iterations_run`;
    /// nondecreasing by the EM property.
    pub logliks: Vec<f64>,
    /// `emd_curve[t]` is the distance of `theta_{t+1}` to the reference.
    pub emd_curve: Option<Vec<f64>>,
    /// `theta_0..=theta_n` when requested.
    pub trajectory: Option<Vec<DiscreteDistribution>>,
}

/// Runs IBU on the raw observation stream.
pub fn run_ibu(
    observations: &[SegmentId],
    ch: &ObfuscationChannel,
    opts: &IbuOptions,
    emd_ref: Option<EmdReference<'_>>,
) -> Result<IbuRun> {
    if opts.iterations < 1 {
        return Err(Error::InvalidParams("iterations must be at least 1".into()));
    }
    let q = empirical_distribution(observations, ch.codomain())?;
    let mut theta = match &opts.theta0 {
        Some(t0) => {
            if t0.support != ch.domain() {
                return Err(Error::SupportMismatch);
            }
            if !t0.is_full_support() {
                return Err(Error::InvalidParams(
                    "initial estimate must have full support".into(),
                ));
            }
            t0.clone()
        }
        None => DiscreteDistribution::uniform(ch.domain().to_vec())?,
    };
    let mut logliks = vec![log_likelihood(&theta, &q, ch)?];
    let mut emd_curve = emd_ref.map(|_| Vec::new());
    let mut trajectory = opts.record_trajectory.then(|| vec![theta.clone()]);
    let mut iterations_run = 0;
    for _ in 0..opts.iterations {
        let next = ibu_step(&theta, &q, ch)?;
        iterations_run += 1;
        let ll = log_likelihood(&next, &q, ch)?;
        debug_assert!(
            ll + 1e-12 >= *logliks.last().expect("nonempty"),
            "EM ascent violated: {} -> {ll}",
            logliks.last().expect("nonempty")
        );
        logliks.push(ll);
        if let (Some(curve), Some(r)) = (&mut emd_curve, emd_ref) {
            curve.push(crate::emd::emd(r.net, &next, r.reference)?);
        }
        if let Some(trail) = &mut trajectory {
            trail.push(next.clone());
        }
        let tv = next.tv_distance(&theta)?;
        theta = next;
        if let Some(tol) = opts.early_stop_tv {
            if tv < tol {
                break;
            }
        }
    }
    Ok(IbuRun {
        theta,
        iterations_run,
        logliks,
        emd_curve,
        trajectory,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dummy::uniform_channel;
    use crate::mechanism::{build_channel, ChannelKind, MechanismParams, ObfuscationChannel};
    use crate::road_network::{EdgeCoverage, RoadNetwork};
    use crate::test_util::symmetric_line;

    fn identity_channel(net: &RoadNetwork) -> ObfuscationChannel {
        let domain: Vec<SegmentId> = net.nodes().collect();
        build_channel(
            net,
            &domain,
            &domain,
            MechanismParams::per_segment(1.0, 0.0, 100.0).unwrap(),
        )
        .unwrap()
    }

    /// Hand-built 3x3 channel over segments 0..3 at unit spacing.
    fn hand_channel(rows: [[f64; 3]; 3]) -> ObfuscationChannel {
        let domain = vec![0, 1, 2];
        let dist_units: Vec<Vec<f64>> = (0..3)
            .map(|i| {
                (0..3)
                    .map(|j| (i as f64 - j as f64).abs())
                    .collect()
            })
            .collect();
        ObfuscationChannel::from_parts(
            domain.clone(),
            domain,
            rows.iter().map(|r| r.to_vec()).collect(),
            vec![1.0; 3],
            dist_units,
            MechanismParams::per_segment(1.0, 2.0, 100.0).unwrap(),
            ChannelKind::TruncatedLaplace,
        )
        .unwrap()
    }

    #[test]
    fn empirical_distribution_examples() {
        let support = vec![10, 20, 30];
        let d = empirical_distribution(&[10, 10, 20, 20], &support).unwrap();
        assert_eq!(d.mass(), &[0.5, 0.5, 0.0]);
        let d = empirical_distribution(&[30], &support).unwrap();
        assert_eq!(d.mass(), &[0.0, 0.0, 1.0]);
        assert!(matches!(
            empirical_distribution(&[], &support),
            Err(Error::EmptyObservations)
        ));
        assert!(matches!(
            empirical_distribution(&[99], &support),
            Err(Error::OutOfSupport(99))
        ));
    }

    #[test]
    fn empirical_distribution_concentrates_by_lln() {
        let support: Vec<SegmentId> = (0..6).collect();
        let truth =
            DiscreteDistribution::new(support.clone(), vec![0.4, 0.25, 0.15, 0.1, 0.07, 0.03])
                .unwrap();
        let mut rng = crate::test_rng(41);
        let draws: Vec<SegmentId> = (0..10_000).map(|_| truth.sample(&mut rng)).collect();
        let empirical = empirical_distribution(&draws, &support).unwrap();
        assert!(empirical.tv_distance(&truth).unwrap() < 0.05);
    }

    #[test]
    fn identity_channel_converges_in_one_step() {
        let net = symmetric_line(4);
        let ch = identity_channel(&net);
        let q = empirical_distribution(&[0, 0, 1, 3], ch.codomain()).unwrap();
        let theta0 = DiscreteDistribution::uniform(ch.domain().to_vec()).unwrap();
        let theta1 = ibu_step(&theta0, &q, &ch).unwrap();
        for (a, b) in theta1.mass().iter().zip(q.mass()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_channel_is_uninformative() {
        let net = symmetric_line(4);
        let cov = EdgeCoverage::new(0, net.nodes().collect(), &net).unwrap();
        let params = MechanismParams::per_segment(1.0, 2.0, 100.0).unwrap();
        let ch = uniform_channel(&net, &cov, params).unwrap();
        let theta0 =
            DiscreteDistribution::new(ch.domain().to_vec(), vec![0.1, 0.2, 0.3, 0.4]).unwrap();
        let q = empirical_distribution(&[0, 1, 1, 2, 3, 3, 3], ch.codomain()).unwrap();
        let theta1 = ibu_step(&theta0, &q, &ch).unwrap();
        for (a, b) in theta1.mass().iter().zip(theta0.mass()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn hand_computed_three_by_three_step() {
        // Channel rows, q, and one update computed by hand:
        // denom = q-weighted column sums under theta0 = (0.5, 0.3, 0.2).
        let ch = hand_channel([[0.7, 0.2, 0.1], [0.25, 0.5, 0.25], [0.1, 0.3, 0.6]]);
        let theta0 =
            DiscreteDistribution::new(vec![0, 1, 2], vec![0.5, 0.3, 0.2]).unwrap();
        let q = DiscreteDistribution::new(vec![0, 1, 2], vec![0.4, 0.35, 0.25]).unwrap();
        let got = ibu_step(&theta0, &q, &ch).unwrap();
        // Frozen from a spreadsheet-style evaluation of the update formula.
        let want = [
            0.478_530_375_542_750_57,
            0.313_301_181_291_654_07,
            0.208_168_443_165_595_38,
        ];
        for (g, w) in got.mass().iter().zip(&want) {
            assert!((g - w).abs() < 1e-12, "{g} vs {w}");
        }
    }

    #[test]
    fn exact_pushforward_is_a_fixed_point() {
        let net = symmetric_line(5);
        let domain: Vec<SegmentId> = net.nodes().collect();
        let ch = build_channel(
            &net,
            &domain,
            &domain,
            MechanismParams::per_segment(0.7, 3.0, 100.0).unwrap(),
        )
        .unwrap();
        let star = DiscreteDistribution::new(
            domain.clone(),
            vec![0.3, 0.1, 0.25, 0.15, 0.2],
        )
        .unwrap();
        // q = star pushed through the channel, exactly.
        let mut q_mass = vec![0.0; 5];
        for (i, &x) in domain.iter().enumerate() {
            for (j, &p) in ch.row(x).unwrap().iter().enumerate() {
                q_mass[j] += star.mass()[i] * p;
            }
        }
        let sum: f64 = q_mass.iter().sum();
        for v in &mut q_mass {
            *v /= sum;
        }
        let q = DiscreteDistribution::new(domain.clone(), q_mass).unwrap();
        let next = ibu_step(&star, &q, &ch).unwrap();
        for (a, b) in next.mass().iter().zip(star.mass()) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn degenerate_column_is_reported() {
        // Output column 2 gets observed mass but no prior mass can reach it.
        let ch = hand_channel([[0.5, 0.5, 0.0], [0.5, 0.5, 0.0], [0.4, 0.6, 0.0]]);
        let theta0 = DiscreteDistribution::uniform(vec![0, 1, 2]).unwrap();
        let q = DiscreteDistribution::new(vec![0, 1, 2], vec![0.4, 0.4, 0.2]).unwrap();
        assert!(matches!(
            ibu_step(&theta0, &q, &ch),
            Err(Error::DegenerateChannelColumn { output: 2 })
        ));
    }

    #[test]
    fn run_ibu_identity_recovers_empirical_exactly() {
        let net = symmetric_line(4);
        let ch = identity_channel(&net);
        let observations = [0, 1, 1, 2, 2, 2, 3];
        let run = run_ibu(
            &observations,
            &ch,
            &IbuOptions {
                iterations: 5,
                ..Default::default()
            },
            None,
        )
        .unwrap();
        let q = empirical_distribution(&observations, ch.codomain()).unwrap();
        for (a, b) in run.theta.mass().iter().zip(q.mass()) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(run.logliks.len(), run.iterations_run + 1);
        for pair in run.logliks.windows(2) {
            assert!(pair[1] + 1e-12 >= pair[0]);
        }
    }

    #[test]
    fn early_stop_halts_after_convergence() {
        let net = symmetric_line(4);
        let ch = identity_channel(&net);
        let run = run_ibu(
            &[0, 1, 2, 3, 3],
            &ch,
            &IbuOptions {
                iterations: 100,
                early_stop_tv: Some(1e-8),
                ..Default::default()
            },
            None,
        )
        .unwrap();
        assert!(run.iterations_run < 100);
    }
}
