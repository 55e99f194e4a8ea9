//! Cost-of-privacy sweep over `(epsilon, r, m)` cells.

use std::collections::HashMap;
use std::io::Write;
use std::path::PathBuf;

use ageoi::cop::{aggregate_cop, CopAggregate};
use ageoi::mechanism::{build_channel, compute_delta, MechanismParams, ObfuscationChannel};
use ageoi::sim::{
    audit_trace, load_scenario, read_trace_csv, run_simulation_with_channel, write_trace_csv,
    LoadedScenario, SimParams, TraceRecord,
};

use crate::config::{
    cell_seed, fmt_param, trial_seed, ExperimentConfig, ExperimentError, ExperimentResult,
};

#[derive(Debug, Clone)]
pub struct SweepCell {
    pub epsilon: f64,
    pub r_segments: f64,
    pub m: usize,
    pub aggregate: CopAggregate,
    pub trace_file: PathBuf,
}

#[derive(Debug)]
pub struct SweepReport {
    pub cells: Vec<SweepCell>,
    pub summary_file: PathBuf,
    pub output_dir: PathBuf,
}

/// Caches one channel (and its delta) per `(epsilon, radius)`: the channel
/// does not depend on `m` or the trial.
pub(crate) struct ChannelCache<'a> {
    loaded: &'a LoadedScenario,
    cache: HashMap<(u64, u64), (ObfuscationChannel, f64)>,
}

impl<'a> ChannelCache<'a> {
    pub fn new(loaded: &'a LoadedScenario) -> Self {
        ChannelCache {
            loaded,
            cache: HashMap::new(),
        }
    }

    pub fn get(&mut self, epsilon: f64, r_segments: f64) -> ExperimentResult<&(ObfuscationChannel, f64)> {
        let key = (epsilon.to_bits(), r_segments.to_bits());
        if !self.cache.contains_key(&key) {
            let params = MechanismParams::per_segment(
                epsilon,
                r_segments,
                self.loaded.net.segment_length_k(),
            )
            .map_err(ExperimentError::validation)?;
            let channel = build_channel(
                &self.loaded.net,
                self.loaded.coverage.segments(),
                self.loaded.coverage.segments(),
                params,
            )
            .map_err(ExperimentError::runtime)?;
            let delta = compute_delta(&channel);
            self.cache.insert(key, (channel, delta));
        }
        Ok(&self.cache[&key])
    }
}

pub(crate) fn simulate_cell(
    loaded: &LoadedScenario,
    channel: &ObfuscationChannel,
    delta: f64,
    epsilon: f64,
    r_segments: f64,
    m: usize,
    seed: u64,
    trials: usize,
) -> ExperimentResult<Vec<TraceRecord>> {
    let mut trace = Vec::new();
    for trial in 0..trials {
        let params = SimParams {
            epsilon,
            radius_segments: r_segments,
            m,
            max_speed: loaded.scenario.max_speed,
            seed: trial_seed(seed, trial as u64),
        };
        let run = run_simulation_with_channel(loaded, &params, channel, delta)
            .map_err(ExperimentError::runtime)?;
        trace.extend(run.trace);
    }
    Ok(trace)
}

/// Runs the sweep, writes one trace CSV per cell plus `summary.csv`, and
/// re-validates every written trace against a from-scratch CoP computation.
pub fn run_cop_sweep(cfg: &ExperimentConfig) -> ExperimentResult<SweepReport> {
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
                let trace =
                    simulate_cell(&loaded, &channel, delta, epsilon, r, m, seed, cfg.trials)?;
                let trace_file = cfg.output_dir.join(format!(
                    "trace_eps{}_r{}_m{}.csv",
                    fmt_param(epsilon),
                    fmt_param(r),
                    m
                ));
                write_trace_csv(&trace_file, &trace).map_err(ExperimentError::runtime)?;
                // Self-audit: the file on disk must re-validate from scratch.
                let reread = read_trace_csv(&trace_file).map_err(ExperimentError::runtime)?;
                audit_trace(
                    &reread,
                    &loaded.net,
                    &loaded.stations,
                    &loaded.scenario.availability_schedule,
                )
                .map_err(ExperimentError::runtime)?;
                cells.push(SweepCell {
                    epsilon,
                    r_segments: r,
                    m,
                    aggregate: aggregate_cop(trace.iter().map(|t| t.cop_meters)),
                    trace_file,
                });
            }
        }
    }

    let summary_file = cfg.output_dir.join("summary.csv");
    write_summary(&summary_file, &cells)?;
    Ok(SweepReport {
        cells,
        summary_file,
        output_dir: cfg.output_dir.clone(),
    })
}

fn write_summary(path: &PathBuf, cells: &[SweepCell]) -> ExperimentResult<()> {
    let mut out = std::io::BufWriter::new(
        std::fs::File::create(path).map_err(ExperimentError::runtime)?,
    );
    (|| -> std::io::Result<()> {
        writeln!(out, "epsilon,r,m,mean_cop_m,frac_zero_cop,ci_low,ci_high")?;
        for c in cells {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                fmt_param(c.epsilon),
                fmt_param(c.r_segments),
                c.m,
                c.aggregate.mean_cop_m,
                c.aggregate.frac_zero,
                c.aggregate.ci_low,
                c.aggregate.ci_high
            )?;
        }
        Ok(())
    })()
    .map_err(ExperimentError::runtime)
}
