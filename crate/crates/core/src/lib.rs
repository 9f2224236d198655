//! Toolkit for two legged agents carrying a bar through cluttered terrain.

pub mod bench;
pub mod config;
pub mod elevation;
pub mod env;
pub mod error;
pub mod geometry;
pub mod prm;
pub mod reward;
pub mod sim;
pub mod terrain;
pub mod trajectory;
pub mod waypoints;

pub use error::{Error, Result};
