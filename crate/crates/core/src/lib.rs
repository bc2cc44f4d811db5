//! Core library for simulating populations of reward-bearing agent units.
//!
//! The model: an *environment* maps (history, action) pairs to exact rational
//! distributions over observations.  *Units* accumulate integer multiples of a
//! currency quantum as they act; they can spawn further units.  *Partitions*
//! group units so a joint policy can drive them together.  On top of the
//! simulator sit analysis tools: exhaustive enumeration of the histories a
//! (policy, environment) pair can realize, exact and Monte-Carlo entropy of
//! the next joint observation, and mechanical checkers for structural
//! properties of groundings and run logs.
//!
//! All probability arithmetic is exact (`BigRational`); floats appear only at
//! the final logarithm step of entropy computations.  Simulation is
//! deterministic: one master seed, counter-based substreams, and ordered
//! containers everywhere.

pub mod agents;
pub mod dist;
pub mod entropy;
pub mod fixtures;
pub mod grounding;
pub mod model;
pub mod propcheck;
pub mod rng;
pub mod sim;
pub mod units;
