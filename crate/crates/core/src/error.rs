use std::path::PathBuf;

use chrono::NaiveDateTime;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("Mie series failed for x = {x}, m = {m_re}{m_im:+}i: {detail}")]
    MieFailure {
        x: f64,
        m_re: f64,
        m_im: f64,
        detail: String,
    },

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: u64,
        message: String,
    },

    #[error("missing weather samples at {}", format_gaps(.0))]
    WeatherGap(Vec<NaiveDateTime>),

    #[error("fit failed: {0}")]
    FitFailure(String),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

fn format_gaps(ts: &[NaiveDateTime]) -> String {
    const SHOWN: usize = 8;
    let mut s = ts
        .iter()
        .take(SHOWN)
        .map(|t| t.format("%Y-%m-%dT%H:%M:%S").to_string())
        .collect::<Vec<_>>()
        .join(", ");
    if ts.len() > SHOWN {
        s.push_str(&format!(" (+{} more)", ts.len() - SHOWN));
    }
    s
}

impl Error {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    /// True for errors caused by bad inputs or configuration rather than by a
    /// computation that failed on valid inputs.
    pub fn is_usage(&self) -> bool {
        matches!(
            self,
            Error::Domain(_)
                | Error::Validation(_)
                | Error::Config(_)
                | Error::Parse { .. }
                | Error::Io { .. }
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;
