//! Schema-driven generation of edge-labeled graphs and regular path query
//! workloads with controlled selectivity.

pub mod config;
pub mod distributions;
pub mod graphgen;
pub mod selalgebra;
pub mod selstructs;
pub mod querygen;
pub mod oracle;
pub mod translate;
