use std::path::PathBuf;

use thiserror::Error;

use crate::simcore::SimTime;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("event scheduled at {at} but clock is already at {now}")]
    ScheduleInPast { at: SimTime, now: SimTime },

    #[error("packet {seq} of flow {flow_id} was not delivered")]
    NotDelivered { flow_id: u32, seq: u64 },

    #[error("feedback references unknown sequence number {0}")]
    UnknownSequence(u64),

    #[error("jain index of an all-zero rate vector is undefined")]
    AllZeroRates,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown scenario `{0}`")]
    UnknownScenario(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
}

pub type Result<T, E = SimError> = std::result::Result<T, E>;
