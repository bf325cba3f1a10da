//! Command-line pipeline over the core library: synthetic corpus
//! generation, preprocessing into storage backends, distributed training,
//! read-path benchmarking, and container inspection.

pub mod bench;
pub mod config;
pub mod gen;
pub mod inspect;
pub mod metrics;
pub mod preprocess;
pub mod train;

use thiserror::Error;

/// Errors surfaced to the process exit path. `Invalid` and `BadData` are
/// caller mistakes (exit 2): bad flag combinations, out-of-range values, or
/// input rejected by policy. Everything else is a runtime failure (exit 1).
#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Invalid(String),
    #[error("{0}")]
    BadData(String),
    #[error("{0}")]
    Integrity(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Table(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Load(#[from] gapnet_core::dataload::LoadError),
    #[error(transparent)]
    Pack(#[from] gapnet_core::gpack::GpackError),
    #[error(transparent)]
    Encode(#[from] gapnet_core::graphenc::EncodeError),
    #[error(transparent)]
    Model(#[from] gapnet_core::gcnn::GcnnError),
    #[error(transparent)]
    Distributed(#[from] gapnet_core::ddp::DdpError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Invalid(_) | CliError::BadData(_) => 2,
            _ => 1,
        }
    }
}

pub(crate) fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Invalid(msg.into())
}

/// User-facing backend label. The packed backend is named after its
/// container format on the command line.
pub fn backend_label(b: gapnet_core::dataload::Backend) -> &'static str {
    use gapnet_core::dataload::Backend;
    match b {
        Backend::Inline => "inline",
        Backend::Object => "object",
        Backend::Packed => "gpack",
    }
}
