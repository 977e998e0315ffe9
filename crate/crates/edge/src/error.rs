use thiserror::Error;

#[derive(Debug, Error)]
pub enum EdgeError {
    #[error(transparent)]
    Core(#[from] xrflux_core::Error),

    #[error("invalid config: {0}")]
    Config(#[from] xrflux_core::ConfigError),

    #[error("bind {addr}: {source}")]
    Bind {
        addr: String,
        #[source]
        source: std::io::Error,
    },

    #[error("server: {0}")]
    Serve(#[source] std::io::Error),

    #[error("request to {url}: {source}")]
    Http {
        url: String,
        #[source]
        source: reqwest::Error,
    },

    #[error("{url} answered {status}: {body}")]
    Status { url: String, status: u16, body: String },

    #[error("{url}: {message}")]
    Protocol { url: String, message: String },
}
