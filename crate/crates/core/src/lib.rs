//! FLIP fluid simulation on a staggered grid.

pub mod binning;
pub mod grid;
pub mod particles;
pub mod pressure;
pub mod sim;
pub mod surface;
pub mod transfer;
