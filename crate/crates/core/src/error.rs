use std::io;

use thiserror::Error;

use crate::model::{GridletId, GridletStatus};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid resource {id}: {reason}")]
    InvalidResource { id: String, reason: String },

    #[error("testbed is empty")]
    EmptyTestbed,

    #[error("duplicate resource id {0}")]
    DuplicateResource(String),

    #[error("invalid workload: {0}")]
    InvalidWorkload(String),

    #[error("invalid experiment: {0}")]
    InvalidExperiment(String),

    #[error("gridlet {id}: illegal transition {from:?} -> {to:?}")]
    IllegalTransition {
        id: GridletId,
        from: GridletStatus,
        to: GridletStatus,
    },

    #[error("gridlet {0} is already present on resource {1}")]
    DuplicateAdmit(GridletId, String),

    #[error("gridlet {0} is not on resource {1}")]
    UnknownGridlet(GridletId, String),

    #[error("unknown resource index {0}")]
    UnknownResource(usize),

    #[error("malformed json: {0}")]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}
