use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario: {0}")]
    Parse(String),
    #[error("invalid scenario at `{id}`: {reason}")]
    Validation { id: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RouteError {
    #[error("unknown junction `{0}`")]
    UnknownJunction(String),
    #[error("unknown street `{0}`")]
    UnknownStreet(String),
    #[error("no route from `{from}` to `{to}`")]
    NoRoute { from: String, to: String },
    #[error("street `{next}` does not start where `{after}` ends")]
    BrokenChain { after: String, next: String },
}

#[derive(Debug, Clone, Error)]
pub enum TransportError {
    #[error("invalid url `{0}`")]
    InvalidUrl(String),
    #[error("{0} unreachable")]
    Unreachable(String),
    #[error("transport failure: {0}")]
    Io(String),
}

/// Request-level failures, each carrying its HTTP status.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ProtocolError {
    #[error("bad request: {0}")]
    BadRequest(String),
    #[error("forbidden: {0}")]
    Forbidden(String),
    #[error("not found: {0}")]
    NotFound(String),
    #[error("conflict: {0}")]
    Conflict(String),
    #[error("gone: {0}")]
    Gone(String),
    #[error("unavailable: {0}")]
    Unavailable(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl ProtocolError {
    pub fn status(&self) -> u16 {
        match self {
            ProtocolError::BadRequest(_) => 400,
            ProtocolError::Forbidden(_) => 403,
            ProtocolError::NotFound(_) => 404,
            ProtocolError::Conflict(_) => 409,
            ProtocolError::Gone(_) => 410,
            ProtocolError::Unavailable(_) => 503,
            ProtocolError::Internal(_) => 500,
        }
    }
}

#[derive(Debug, Clone, Error)]
pub enum MigrationError {
    #[error("migration conflict for `{agent_id}`: receiver already hosts a different body")]
    Conflict { agent_id: String },
    #[error("receiver temporarily cannot host `{agent_id}`")]
    Unavailable { agent_id: String },
    #[error("receiver rejected `{agent_id}` with status {status}: {message}")]
    Rejected {
        agent_id: String,
        status: u16,
        message: String,
    },
    #[error(transparent)]
    Transport(#[from] TransportError),
}

/// Failures that abort a service's tick or a whole run.
#[derive(Debug, Clone, Error)]
pub enum SimError {
    #[error("invariant breach: {0}")]
    InvariantBreach(String),
    #[error(transparent)]
    Migration(#[from] MigrationError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error(transparent)]
    Route(#[from] RouteError),
    #[error("unexpected response from {url}: status {status}")]
    UnexpectedStatus { url: String, status: u16 },
    #[error("{0}")]
    Other(String),
}
