//! Dummy-impact pairing: `(epsilon, m)` with dummies against the
//! identifiability-matched `(epsilon / ln m, m = 1)` configuration.

use std::io::Write;
use std::path::PathBuf;

use ageoi::cop::{aggregate_cop, epsilon_rescale_without_dummies, identifiability, CopAggregate};
use ageoi::sim::load_scenario;

use crate::config::{
    cell_seed, fmt_param, ExperimentConfig, ExperimentError, ExperimentResult,
};
use crate::sweep::{simulate_cell, ChannelCache};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arm {
    /// `m` locations per query at the configured epsilon.
    Dummies,
    /// One location per query at `epsilon / ln m`.
    Rescaled,
    /// One location per query at the configured epsilon (no pairing).
    Baseline,
}

impl Arm {
    pub fn label(self) -> &'static str {
        match self {
            Arm::Dummies => "dummies",
            Arm::Rescaled => "rescaled",
            Arm::Baseline => "baseline",
        }
    }
}

#[derive(Debug, Clone)]
pub struct DummyImpactRow {
    pub epsilon: f64,
    pub r_segments: f64,
    pub m: usize,
    pub arm: Arm,
    /// Epsilon the channel actually ran at.
    pub epsilon_effective: f64,
    pub aggregate: CopAggregate,
    pub beta_exact: f64,
    pub beta_closed_form: f64,
}

#[derive(Debug)]
pub struct DummyImpactReport {
    pub rows: Vec<DummyImpactRow>,
    pub summary_file: PathBuf,
}

/// For every epsilon and every `m >= 2`, runs the dummy arm and its
/// identifiability-matched no-dummy arm on the same per-pair seed; `m = 1`
/// entries run as unpaired baselines. Identifiability is evaluated at
/// `alpha_segments` with both the exact channel mass and the closed form.
pub fn run_dummy_impact(cfg: &ExperimentConfig) -> ExperimentResult<DummyImpactReport> {
    cfg.validate()?;
    let loaded = load_scenario(&cfg.scenario).map_err(ExperimentError::validation)?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(ExperimentError::runtime)?;
    let alpha_m = cfg.alpha_segments * loaded.net.segment_length_k();

    let mut channels = ChannelCache::new(&loaded);
    let mut rows = Vec::new();
    let mut cell_index = 0u64;
    for &epsilon in &cfg.epsilons {
        for &r in &cfg.radii {
            for &m in &cfg.m_list {
                let seed = cell_seed(cfg.seed, cell_index);
                cell_index += 1;
                if m == 1 {
                    rows.push(run_arm(
                        cfg, &loaded, &mut channels, epsilon, epsilon, r, 1, Arm::Baseline, seed,
                        alpha_m,
                    )?);
                    continue;
                }
                rows.push(run_arm(
                    cfg, &loaded, &mut channels, epsilon, epsilon, r, m, Arm::Dummies, seed,
                    alpha_m,
                )?);
                let rescaled = epsilon_rescale_without_dummies(epsilon, m)
                    .map_err(ExperimentError::validation)?;
                rows.push(run_arm(
                    cfg, &loaded, &mut channels, epsilon, rescaled, r, 1, Arm::Rescaled, seed,
                    alpha_m,
                )?);
            }
        }
    }

    let summary_file = cfg.output_dir.join("dummy_impact.csv");
    write_summary(&summary_file, &rows)?;
    Ok(DummyImpactReport { rows, summary_file })
}

#[allow(clippy::too_many_arguments)]
fn run_arm(
    cfg: &ExperimentConfig,
    loaded: &ageoi::sim::LoadedScenario,
    channels: &mut ChannelCache<'_>,
    epsilon_nominal: f64,
    epsilon_effective: f64,
    r: f64,
    m: usize,
    arm: Arm,
    seed: u64,
    alpha_m: f64,
) -> ExperimentResult<DummyImpactRow> {
    let (channel, delta) = {
        let entry = channels.get(epsilon_effective, r)?;
        (entry.0.clone(), entry.1)
    };
    let trace = simulate_cell(
        loaded,
        &channel,
        delta,
        epsilon_effective,
        r,
        m,
        seed,
        cfg.trials,
    )?;
    let beta = identifiability(&channel, m, alpha_m, &loaded.coverage)
        .map_err(ExperimentError::runtime)?;
    Ok(DummyImpactRow {
        epsilon: epsilon_nominal,
        r_segments: r,
        m,
        arm,
        epsilon_effective,
        aggregate: aggregate_cop(trace.iter().map(|t| t.cop_meters)),
        beta_exact: beta.beta_exact,
        beta_closed_form: beta.beta_closed_form,
    })
}

fn write_summary(path: &PathBuf, rows: &[DummyImpactRow]) -> ExperimentResult<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(ExperimentError::runtime)?,
    );
    (|| -> std::io::Result<()> {
        writeln!(
            out,
            "epsilon,r,m,arm,epsilon_effective,mean_cop_m,frac_zero_cop,ci_low,ci_high,beta_exact,beta_closed_form"
        )?;
        for row in rows {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{},{},{}",
                fmt_param(row.epsilon),
                fmt_param(row.r_segments),
                row.m,
                row.arm.label(),
                row.epsilon_effective,
                row.aggregate.mean_cop_m,
                row.aggregate.frac_zero,
                row.aggregate.ci_low,
                row.aggregate.ci_high,
                row.beta_exact,
                row.beta_closed_form
            )?;
        }
        Ok(())
    })()
    .map_err(ExperimentError::runtime)
}
