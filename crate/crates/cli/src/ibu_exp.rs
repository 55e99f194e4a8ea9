//! IBU recovery experiment: simulate the sanitized stream, invert it with
//! the mixed channel, and track the earth mover's distance to the realized
//! truth per iteration.

use std::io::Write;
use std::path::{Path, PathBuf};

use ageoi::dummy::mixed_channel;
use ageoi::emd::emd;
use ageoi::ibu::{
    empirical_distribution, run_ibu, DiscreteDistribution, EmdReference, IbuOptions,
};
use ageoi::road_network::SegmentId;
use ageoi::sim::{load_scenario, run_simulation_with_channel, GridTopology, SimParams};

use crate::config::{
    cell_seed, fmt_param, trial_seed, ExperimentConfig, ExperimentError, ExperimentResult,
};
use crate::sweep::ChannelCache;

#[derive(Debug, Clone)]
pub struct IbuCell {
    pub epsilon: f64,
    pub r_segments: f64,
    pub m: usize,
    pub observations: usize,
    pub iterations_run: usize,
    /// Distance of the raw reported empirical distribution to the truth.
    pub emd_reported_m: f64,
    /// Distance of the final estimate to the truth (true query locations).
    pub emd_final_m: f64,
    /// Distance of the final estimate to the reported-stream distribution.
    pub emd_final_vs_reported_m: f64,
    pub loglik_final: f64,
    pub emd_curve: Vec<f64>,
    pub curve_file: PathBuf,
}

#[derive(Debug)]
pub struct IbuReport {
    pub cells: Vec<IbuCell>,
    pub summary_file: PathBuf,
}

/// Runs IBU for every `(epsilon, r, m)` cell. Per cell it writes the EMD/
/// log-likelihood curve, the final estimate, the two reference
/// distributions (true query locations and the full reported stream), and a
/// heatmap grid when the scenario declares grid topology.
pub fn run_ibu_experiment(cfg: &ExperimentConfig) -> ExperimentResult<IbuReport> {
    cfg.validate()?;
    let loaded = load_scenario(&cfg.scenario).map_err(ExperimentError::validation)?;
    std::fs::create_dir_all(&cfg.output_dir).map_err(ExperimentError::runtime)?;

    let mut channels = ChannelCache::new(&loaded);
    let mut cells = Vec::new();
    let mut cell_index = 0u64;
    for &epsilon in &cfg.epsilons {
        for &r in &cfg.radii {
            for &m in &cfg.m_list {
                let seed = cell_seed(cfg.seed, cell_index);
                cell_index += 1;
                let (channel, delta) = {
                    let entry = channels.get(epsilon, r)?;
                    (entry.0.clone(), entry.1)
                };
                // Sanitized stream across trials.
                let mut reported: Vec<SegmentId> = Vec::new();
                let mut true_locations: Vec<SegmentId> = Vec::new();
                for trial in 0..cfg.trials {
                    let params = SimParams {
                        epsilon,
                        radius_segments: r,
                        m,
                        max_speed: loaded.scenario.max_speed,
                        seed: trial_seed(seed, trial as u64),
                    };
                    let run = run_simulation_with_channel(&loaded, &params, &channel, delta)
                        .map_err(ExperimentError::runtime)?;
                    reported.extend(run.reported);
                    true_locations.extend(run.true_query_locations);
                }

                let support = loaded.coverage.segments().to_vec();
                let truth = empirical_distribution(&true_locations, &support)
                    .map_err(ExperimentError::runtime)?;
                let reported_dist = empirical_distribution(&reported, &support)
                    .map_err(ExperimentError::runtime)?;
                let mixed = mixed_channel(&channel, m, &loaded.coverage)
                    .map_err(ExperimentError::runtime)?;
                let run = run_ibu(
                    &reported,
                    &mixed,
                    &IbuOptions {
                        iterations: cfg.iterations,
                        ..Default::default()
                    },
                    Some(EmdReference {
                        net: &loaded.net,
                        reference: &truth,
                    }),
                )
                .map_err(ExperimentError::runtime)?;

                let suffix = format!("eps{}_r{}_m{}", fmt_param(epsilon), fmt_param(r), m);
                let curve_file = cfg.output_dir.join(format!("ibu_curve_{suffix}.csv"));
                let curve = run.emd_curve.clone().expect("reference was provided");
                write_curve(&curve_file, &curve, &run.logliks)?;
                write_distribution(
                    &cfg.output_dir.join(format!("ibu_theta_{suffix}.csv")),
                    &run.theta,
                )?;
                write_distribution(
                    &cfg.output_dir.join(format!("truth_true_{suffix}.csv")),
                    &truth,
                )?;
                write_distribution(
                    &cfg.output_dir.join(format!("truth_reported_{suffix}.csv")),
                    &reported_dist,
                )?;
                if let Some(grid) = loaded.scenario.grid {
                    write_heatmap(
                        &cfg.output_dir.join(format!("ibu_heatmap_{suffix}.csv")),
                        &run.theta,
                        grid,
                    )?;
                }

                let emd_reported_m =
                    emd(&loaded.net, &reported_dist, &truth).map_err(ExperimentError::runtime)?;
                let emd_final_m =
                    emd(&loaded.net, &run.theta, &truth).map_err(ExperimentError::runtime)?;
                let emd_final_vs_reported_m = emd(&loaded.net, &run.theta, &reported_dist)
                    .map_err(ExperimentError::runtime)?;
                cells.push(IbuCell {
                    epsilon,
                    r_segments: r,
                    m,
                    observations: reported.len(),
                    iterations_run: run.iterations_run,
                    emd_reported_m,
                    emd_final_m,
                    emd_final_vs_reported_m,
                    loglik_final: *run.logliks.last().expect("nonempty"),
                    emd_curve: curve,
                    curve_file,
                });
            }
        }
    }

    let summary_file = cfg.output_dir.join("ibu_summary.csv");
    write_summary(&summary_file, &cells)?;
    Ok(IbuReport {
        cells,
        summary_file,
    })
}

fn write_curve(path: &Path, emd_curve: &[f64], logliks: &[f64]) -> ExperimentResult<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(ExperimentError::runtime)?,
    );
    (|| -> std::io::Result<()> {
        writeln!(out, "iteration,emd_m,loglik")?;
        for (t, &d) in emd_curve.iter().enumerate() {
            writeln!(out, "{},{},{}", t + 1, d, logliks[t + 1])?;
        }
        Ok(())
    })()
    .map_err(ExperimentError::runtime)
}

fn write_distribution(path: &Path, dist: &DiscreteDistribution) -> ExperimentResult<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(ExperimentError::runtime)?,
    );
    (|| -> std::io::Result<()> {
        writeln!(out, "segment_id,mass")?;
        for (s, m) in dist.support().iter().zip(dist.mass()) {
            writeln!(out, "{s},{m}")?;
        }
        Ok(())
    })()
    .map_err(ExperimentError::runtime)
}

fn write_heatmap(path: &Path, dist: &DiscreteDistribution, grid: GridTopology) -> ExperimentResult<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(ExperimentError::runtime)?,
    );
    (|| -> std::io::Result<()> {
        writeln!(out, "row,col,mass")?;
        for (s, m) in dist.support().iter().zip(dist.mass()) {
            writeln!(out, "{},{},{}", s / grid.cols, s % grid.cols, m)?;
        }
        Ok(())
    })()
    .map_err(ExperimentError::runtime)
}

fn write_summary(path: &Path, cells: &[IbuCell]) -> ExperimentResult<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(ExperimentError::runtime)?,
    );
    (|| -> std::io::Result<()> {
        writeln!(
            out,
            "epsilon,r,m,observations,iterations,emd_reported_m,emd_final_m,emd_final_vs_reported_m,loglik_final"
        )?;
        for c in cells {
            writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                fmt_param(c.epsilon),
                fmt_param(c.r_segments),
                c.m,
                c.observations,
                c.iterations_run,
                c.emd_reported_m,
                c.emd_final_m,
                c.emd_final_vs_reported_m,
                c.loglik_final
            )?;
        }
        Ok(())
    })()
    .map_err(ExperimentError::runtime)
}
