//! Behavior-graph analysis of long chain-of-thought traces.
//!
//! A trace is a sequence of reasoning steps; every edge between consecutive
//! steps carries one of four behavior labels (normal operation, deep
//! reasoning, self-reflection, exploration). On top of that data model the
//! crate provides:
//!
//! - [`trace`]: segmentation, boxed-answer extraction and JSONL corpus I/O.
//! - [`annotate`]: the edge-labelling prompt, verdict parsing and macro-F1.
//! - [`bondgraph`]: transition-matrix estimation, stationary distributions,
//!   Pearson similarity of transfer graphs and sample-size stability curves.
//! - [`geometry`]: exact t-SNE, adaptive-threshold clustering, folding
//!   metrics, minimum enclosing balls and information phase trajectories.
//! - [`energy`]: attention energies per bond type and Monte Carlo checks of
//!   rotary logit ordering, the sample-size concentration bound, soft-min path
//!   aggregation, ergodic equilibrium and Boltzmann routing.
//! - [`synth`]: random-walk synthesis over a target transfer graph, keyword
//!   rewriting plans and summarization transforms.
//!
//! Randomized routines take an explicit seed and an [`Exec`] mode. Results
//! are bit-identical between sequential and parallel execution.

pub mod annotate;
pub mod bondgraph;
pub mod energy;
pub mod error;
pub mod exec;
pub mod geometry;
pub mod report;
pub mod seed;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
pub use exec::Exec;
pub use trace::{BehaviorLabel, LabeledTrace, Step, Trace};
