use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("edge list is empty")]
    EmptyEdgeList,
    #[error("negative weight {weight} on edge ({from}, {to})")]
    NegativeWeight { from: usize, to: usize, weight: f64 },
    #[error("non-finite weight on edge ({from}, {to})")]
    NonFiniteWeight { from: usize, to: usize },
    #[error("segment ids are not dense: id {missing} is never an edge endpoint but {max} is")]
    SparseSegmentIds { missing: usize, max: usize },
    #[error("invalid segment id {id} (network has {nodes} nodes)")]
    InvalidSegment { id: usize, nodes: usize },
    #[error("duplicate station id {0}")]
    DuplicateStationId(u32),
    #[error("no available station is reachable")]
    NoReachableStation,
    #[error("invalid mechanism parameters: {0}")]
    InvalidParams(String),
    #[error("channel domain is not a subset of its codomain (segment {0})")]
    DomainNotInCodomain(usize),
    #[error("segment {0} is not in the channel domain")]
    NotInDomain(usize),
    #[error("negative budget event (epsilon={epsilon}, delta={delta})")]
    NegativeBudgetEvent { epsilon: f64, delta: f64 },
    #[error("no segment in coverage is reachable from the previous query within the speed budget")]
    InfeasibleContinuation,
    #[error("coverage is empty")]
    EmptyCoverage,
    #[error("query vectors in one batch must share a tick (saw {0} and {1})")]
    MixedTicks(u32, u32),
    #[error("response vector is empty")]
    EmptyResponse,
    #[error("ev {ev} has no trajectory point at tick {tick}")]
    MissingTrajectoryPoint { ev: u32, tick: u32 },
    #[error("ev {ev} queries at tick {tick} from segment {segment} outside the coverage")]
    QueryOutsideCoverage { ev: u32, tick: u32, segment: usize },
    #[error("channel column for output {output} carries observed mass but zero prior mass")]
    DegenerateChannelColumn { output: usize },
    #[error("distribution is not normalized (mass sums to {0})")]
    NotNormalized(f64),
    #[error("negative mass {mass} at support index {index}")]
    NegativeMass { index: usize, mass: f64 },
    #[error("empty observation stream")]
    EmptyObservations,
    #[error("observation {0} is outside the distribution support")]
    OutOfSupport(usize),
    #[error("distributions must share a support universe")]
    SupportMismatch,
    #[error("positive mass on mutually unreachable segments (e.g. {0} and {1})")]
    UnreachableMass(usize, usize),
    #[error("scenario validation: {0}")]
    ScenarioValidation(String),
    #[error("simulation: {0}")]
    Simulation(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
