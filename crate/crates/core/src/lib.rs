//! Logical hidden Markov models: sequence models over ground logical atoms
//! whose transitions are probability-labelled clauses, with inference,
//! parameter estimation and structure search.

pub mod logic;
pub mod model;
pub mod semantics;
pub mod learn;
pub mod structure;
pub mod cli;
