use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid problem:\n{0}")]
    InvalidProblem(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("value table would have {nodes} nodes, cap is {cap}; decompose the problem or coarsen the grid")]
    GridCap { nodes: usize, cap: usize },
    #[error("problem infeasible on grid")]
    InfeasibleOnGrid,
    #[error("point {value} outside grid box [{lower}, {upper}] in dimension {dim}")]
    OutsideGrid { dim: usize, value: f64, lower: f64, upper: f64 },
    #[error("scenario {scenario}, stage {stage}, subsystem {subsystem}: policy returned a non-finite control")]
    NonFiniteControl { scenario: usize, stage: usize, subsystem: usize },
    #[error("non-finite sample at row {0}")]
    NonFiniteSample(usize),
    #[error("deviance undefined")]
    DevianceUndefined,
    #[error("non-finite residual at stage {stage}, scenario {scenario}")]
    NonFiniteResidual { stage: usize, scenario: usize },
    #[error("infeasible node {0}")]
    InfeasibleNode(usize),
    #[error("tree search needs {evaluations:.3e} evaluations, cap is {cap:.3e}")]
    TreeCap { evaluations: f64, cap: f64 },
    #[error("stage {stage}: {source}")]
    AtStage { stage: usize, source: Box<Error> },
    #[error("subsystem {subsystem}: {source}")]
    AtSubsystem { subsystem: usize, source: Box<Error> },
    #[error("iteration {iteration}: {source}")]
    AtIteration { iteration: usize, source: Box<Error> },
    #[error("{0}")]
    Io(String),
}

impl Error {
    pub fn at_stage(self, stage: usize) -> Self {
        Error::AtStage { stage, source: Box::new(self) }
    }

    pub fn at_subsystem(self, subsystem: usize) -> Self {
        Error::AtSubsystem { subsystem, source: Box::new(self) }
    }

    /// Library module the failure originated in.
    pub fn module(&self) -> &'static str {
        match self {
            Error::InvalidProblem(_) => "model",
            Error::InvalidArgument(_) | Error::Io(_) => "io",
            Error::GridCap { .. } | Error::InfeasibleOnGrid | Error::OutsideGrid { .. } => "dp",
            Error::NonFiniteControl { .. } => "scenario",
            Error::NonFiniteSample(_) | Error::DevianceUndefined => "condexp",
            Error::NonFiniteResidual { .. } => "dadp",
            Error::InfeasibleNode(_) | Error::TreeCap { .. } => "bench",
            Error::AtStage { source, .. } | Error::AtSubsystem { source, .. } => source.module(),
            Error::AtIteration { source, .. } => source.module(),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}
