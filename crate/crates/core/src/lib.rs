//! Finite-field linear coding with syndrome-decoding packet repair and spark-optimized
//! code designs, plus a Monte Carlo simulator for a multi-drone relay network.

pub mod cli;
pub mod code;
pub mod design;
pub mod fqlinalg;
pub mod ppr;
pub mod relay;
pub mod sim;
