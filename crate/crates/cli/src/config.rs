use std::fmt;
use std::path::PathBuf;

pub type ExperimentResult<T> = std::result::Result<T, ExperimentError>;

/// Errors split by exit code: scenario or parameter problems abort before
/// any simulation (exit 2), everything after is a runtime failure (exit 3).
#[derive(Debug)]
pub enum ExperimentError {
    Validation(String),
    Runtime(String),
}

impl ExperimentError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ExperimentError::Validation(_) => 2,
            ExperimentError::Runtime(_) => 3,
        }
    }

    pub fn validation(err: impl fmt::Display) -> Self {
        ExperimentError::Validation(err.to_string())
    }

    pub fn runtime(err: impl fmt::Display) -> Self {
        ExperimentError::Runtime(err.to_string())
    }
}

impl fmt::Display for ExperimentError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ExperimentError::Validation(msg) => write!(f, "validation: {msg}"),
            ExperimentError::Runtime(msg) => write!(f, "runtime: {msg}"),
        }
    }
}

impl std::error::Error for ExperimentError {}

/// Sweep definition shared by the experiment families.
#[derive(Debug, Clone)]
pub struct ExperimentConfig {
    pub scenario: PathBuf,
    /// Privacy parameters per segment; all positive.
    pub epsilons: Vec<f64>,
    /// Truncation radii in segments; zero is allowed as the identity cell.
    pub radii: Vec<f64>,
    pub m_list: Vec<usize>,
    /// Simulation repetitions per sweep cell.
    pub trials: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Identifiability radius in segments (dummy-impact reporting).
    pub alpha_segments: f64,
    /// IBU iterations.
    pub iterations: usize,
}

impl ExperimentConfig {
    pub fn validate(&self) -> ExperimentResult<()> {
        if self.epsilons.is_empty() || self.radii.is_empty() || self.m_list.is_empty() {
            return Err(ExperimentError::Validation(
                "epsilon, radius, and m lists must be nonempty".into(),
            ));
        }
        for &e in &self.epsilons {
            if !(e.is_finite() && e > 0.0) {
                return Err(ExperimentError::Validation(format!(
                    "epsilon values must be positive, got {e}"
                )));
            }
        }
        for &r in &self.radii {
            if !(r.is_finite() && r >= 0.0) {
                return Err(ExperimentError::Validation(format!(
                    "radius values must be nonnegative, got {r}"
                )));
            }
        }
        if self.m_list.iter().any(|&m| m < 1) {
            return Err(ExperimentError::Validation("m values must be at least 1".into()));
        }
        if self.trials < 1 {
            return Err(ExperimentError::Validation("trials must be at least 1".into()));
        }
        if self.iterations < 1 {
            return Err(ExperimentError::Validation(
                "iterations must be at least 1".into(),
            ));
        }
        if !(self.alpha_segments.is_finite() && self.alpha_segments >= 0.0) {
            return Err(ExperimentError::Validation(format!(
                "alpha must be nonnegative, got {}",
                self.alpha_segments
            )));
        }
        Ok(())
    }
}

/// Per-cell seed: the master seed xored with the cell index, then one trial
/// index mixed in so repeated trials stay independent.
pub fn cell_seed(master: u64, cell_index: u64) -> u64 {
    master ^ cell_index
}

pub fn trial_seed(cell: u64, trial: u64) -> u64 {
    // SplitMix64 step over the trial counter.
    let mut z = cell ^ (trial.wrapping_add(1)).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Compact float for file names: `1` not `1.0`, `0.2` as written.
pub fn fmt_param(v: f64) -> String {
    if v == v.trunc() && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        format!("{v}")
    }
}
