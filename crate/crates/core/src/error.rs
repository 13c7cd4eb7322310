use thiserror::Error;

/// Which sufficient condition a gain set failed to satisfy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inequality {
    /// `G^T A + A^T G - 2 G^T G < 0`
    DesignMatrix,
    /// Lower bound on the linear state-observer gain omega.
    Omega,
    /// `phi_i > 0`: sign gain theta dominates the input-estimation error.
    Theta,
    /// `psi_i > 0`: sign gain pi dominates the input derivative.
    Pi,
}

impl std::fmt::Display for Inequality {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Inequality::DesignMatrix => "G^T A + A^T G - 2 G^T G < 0",
            Inequality::Omega => "omega_i lower bound",
            Inequality::Theta => "phi_i > 0 (theta_i bound)",
            Inequality::Pi => "psi_i > 0 (pi_i bound)",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("communication graph is not connected")]
    GraphNotConnected,
    #[error("agent index {index} out of range for {n} agents")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("agent {agent} has an empty k-hop neighborhood")]
    EmptyNeighborhood { agent: usize },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionError { expected: usize, got: usize },
    #[error("numerical error: {0}")]
    NumericalError(String),
    #[error("design matrix violates G^T A + A^T G - 2 G^T G < 0 (lambda_max = {lambda_max})")]
    GainConditionViolated { lambda_max: f64 },
    #[error("coupling matrix of agent {agent} is not positive definite (lambda_min = {lambda_min})")]
    CouplingNotPd { agent: usize, lambda_min: f64 },
    #[error("gains of agent {agent} do not certify convergence: {inequality} (margin {margin})")]
    CertificateInfeasible {
        agent: usize,
        inequality: Inequality,
        margin: f64,
    },
    #[error("agent {agent} has no message from neighbor {neighbor}")]
    MissingNeighborData { agent: usize, neighbor: usize },
    #[error("protocol error: {0}")]
    ProtocolError(String),
    #[error("simulation diverged at t = {time} (agent {agent})")]
    DivergenceDetected { time: f64, agent: usize },
    #[error("agent {agent} left the state box at t = {time} (component {component} = {value})")]
    StateBoxExited {
        time: f64,
        agent: usize,
        component: usize,
        value: f64,
    },
    #[error("anchoring failure: {0}")]
    AnchoringViolation(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
