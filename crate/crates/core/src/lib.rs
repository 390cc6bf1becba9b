//! Digital twin of a liquid-cooled data center: blade-group thermal model,
//! CDU loops, evaporative cooling towers, heat recovery, and a multi-agent
//! control environment.

pub mod baseline;
pub mod blade;
pub mod control;
pub mod env;
pub mod error;
pub mod hru;
pub mod metrics;
pub mod psychro;
pub mod topology;
pub mod tower;
pub mod trace;

pub use error::{Error, Result};
pub use topology::SystemTopology;
