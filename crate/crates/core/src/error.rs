use thiserror::Error;

use crate::geometry::Vec2;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("query point ({}, {}) lies outside the terrain bounds", .0.x, .0.y)]
    OutOfBounds(Vec2),

    #[error("obstacle placement failed in subterrain {level} after {attempts} attempts")]
    PlacementExhausted { level: usize, attempts: usize },

    #[error("free-space sampling exhausted: accepted {accepted} of {requested} points")]
    SamplingExhausted { accepted: usize, requested: usize },

    #[error("start configuration is in collision")]
    StartInCollision,

    #[error("agents are co-located; object frame is undefined")]
    DegenerateFrame,

    #[error("path already completed")]
    PathCompleted,

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("planning failed: {0}")]
    Planning(String),

    #[error("unknown scenario {0:?}")]
    UnknownScenario(String),

    #[error("unknown method {0:?}")]
    UnknownMethod(String),

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
