use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}:{line}: {msg}", file.display())]
    Parse {
        file: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("session {id}: {msg}")]
    InvalidSession { id: String, msg: String },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("numeric failure: {msg} (parameters: {snapshot})")]
    Numeric { msg: String, snapshot: String },

    #[error(
        "infeasible observation count in session {session}: {events} events, \
         {instances} instances emitting at most {c_max} each"
    )]
    Infeasible {
        session: String,
        events: usize,
        instances: usize,
        c_max: usize,
    },

    #[error("enumeration refused: L={instances}, M={events} exceeds the limit L<=12, M<=4")]
    EnumerationGuard { instances: usize, events: usize },

    #[error("session {0} has no true labels")]
    MissingLabels(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn numeric(msg: impl Into<String>, params: &[f64]) -> Self {
        let shown: Vec<String> = params.iter().take(16).map(|v| format!("{v:.6e}")).collect();
        let more = if params.len() > 16 { ", ..." } else { "" };
        Error::Numeric {
            msg: msg.into(),
            snapshot: format!("[{}{more}]", shown.join(", ")),
        }
    }
}
