pub mod common;
pub mod corpus;
pub mod energy;
pub mod geometry;
pub mod graph;
pub mod replay;
pub mod synth;
