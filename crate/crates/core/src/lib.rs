//! Multi-object search in 3D voxel grids: octree beliefs, abstract
//! multi-resolution planning, a simulator and an experiment runner.

pub mod abstraction;
pub mod bench;
pub mod domain;
pub mod error;
pub mod grid;
pub mod octree;
pub mod par;
pub mod planner;
pub mod sim;

pub use error::{Error, Result};
