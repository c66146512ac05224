use thiserror::Error;

use crate::rational::{format_q, Vector};

pub type Result<T, E = Error> = std::result::Result<T, E>;

fn show(v: &Vector) -> String {
    let parts: Vec<String> = v.iter().map(format_q).collect();
    format!("({})", parts.join(", "))
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    // tree construction
    #[error("node {node:?}: branch probability must be strictly positive")]
    NonPositiveProbability { node: String },
    #[error("children of node {node:?} have probabilities summing to {sum}, not 1")]
    ProbabilitySumNotOne { node: String, sum: String },
    #[error("node {node:?} refers to missing parent {parent:?}")]
    DanglingNode { node: String, parent: String },
    #[error("malformed tree: {0}")]
    MalformedTree(String),
    #[error("time {t} outside 0..={horizon}")]
    TimeOutOfRange { t: usize, horizon: usize },

    // enlargements and stopping times
    #[error("time {t}: enlarged partition does not refine the base atoms")]
    NotARefinement { t: usize },
    #[error("time {t}: enlarged partition is not refined by the partition at time {next}", next = t + 1)]
    NotMonotone { t: usize },
    #[error("time {t}: {reason}")]
    NotAPartition { t: usize, reason: String },
    #[error("stopping time is not adapted: {{tau = {t}}} is not a union of time-{t} atoms")]
    NotAStoppingTime { t: usize },

    // processes and integrals
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("process is not adapted to the filtration at time {t}")]
    NotAdapted { t: usize },
    #[error("integrand is not predictable at time {t}")]
    NotPredictable { t: usize },
    #[error("function table has no entry at time {t}, atom {atom}, value {}", show(.value))]
    IncompleteFunctionTable { t: usize, atom: usize, value: Vector },

    // constraint systems and linear solves
    #[error("jump value at time {t}, leaf {leaf} matches no constraint process")]
    ConstraintMismatch { t: usize, leaf: usize },
    #[error("time {t}, atom {atom}: partition class is not a union of time-{t} atoms")]
    PartitionNotMeasurable { t: usize, atom: usize },
    #[error("time {t}, atom {atom}: weight vanishes")]
    VanishingWeight { t: usize, atom: usize },
    #[error("column {column} is not orthogonal to the probability vector")]
    NotOrthogonal { column: usize },
    #[error("weights do not form a probability vector")]
    NotProbabilityVector,
    #[error("span hypothesis fails for target {target}; orthogonal witness {}", show(.witness))]
    SpanDeficient { target: usize, witness: Vector },
    #[error("matrix has rank {rank}, full row rank {needed} required")]
    RankDeficient { rank: usize, needed: usize },

    // representation
    #[error("process is not a martingale: conditional mean of the increment at time {t}, atom {atom} is nonzero")]
    NotAMartingale { t: usize, atom: usize },
    #[error("no representation at time {t}, atom {atom}")]
    NoRepresentation { t: usize, atom: usize },
    #[error("random variable is not measurable: {0}")]
    NotMeasurable(String),

    // enlargement
    #[error("process is not strictly positive at time {t}")]
    NotStrictlyPositive { t: usize },
    #[error("not a deflator: {0}")]
    NotADeflator(String),
    #[error("process is not increasing at time {t}")]
    NotIncreasing { t: usize },
    #[error("time {t}, atom {atom}: degenerate partition")]
    DegeneratePartition { t: usize, atom: usize },

    // front door
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unknown check {0:?}")]
    UnknownCheck(String),
    #[error("unknown reference {0:?}")]
    UnknownReference(String),
    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
