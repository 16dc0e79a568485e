//! Play server and shared plumbing for the `builder` command-line tool.

pub mod protocol;
pub mod server;
pub mod session;

use builder_core::model::ModelError;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("bad message: {0}")]
    Protocol(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
