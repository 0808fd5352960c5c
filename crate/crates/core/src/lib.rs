//! Boundary-layer limits and effective boundary data for periodic
//! divergence-form elliptic problems.

pub mod error;
pub mod experiments;
pub mod fields;
pub mod grid;
pub mod interp;
pub mod lattice;
pub mod linalg;
pub mod operators;
pub mod report;
pub mod strip;
pub mod boundary_layer;
pub mod config;
pub mod homogenization;
pub mod second_cell;
mod discrete;
