use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid trading grid: {0}")]
    Grid(String),
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("unsupported schema {0:?}, expected \"equiterm/1\"")]
    Schema(String),
    #[error("covariance is not positive definite: {0}")]
    NotPositiveDefinite(String),
    #[error("scenario parse error: {0}")]
    Parse(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum QpError {
    #[error("no feasible point: {0}")]
    Infeasible(String),
    #[error("objective unbounded along a feasible ray")]
    Unbounded,
    #[error("active-set iteration limit ({0}) reached")]
    IterationLimit(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EquilibriumError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("player {player} failed: {source}")]
    Player { player: String, source: QpError },
    #[error("initial prices have length {got}, expected {expected}")]
    InitialPrices { got: usize, expected: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProcessError {
    #[error("ensemble is empty")]
    Empty,
    #[error("path {path}: {msg}")]
    Path { path: usize, msg: String },
    #[error("weights must be positive and sum to one (sum = {0})")]
    Weights(f64),
    #[error("filtration is not a tree: {0}")]
    Filtration(String),
    #[error("drift is not admissible: {0}")]
    Drift(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OracleError {
    #[error(transparent)]
    Equilibrium(#[from] EquilibriumError),
    #[error(transparent)]
    Qp(#[from] QpError),
    #[error("oracle precondition failed: {0}")]
    Precondition(String),
    #[error("oracle did not converge: {0}")]
    NoConvergence(String),
}
