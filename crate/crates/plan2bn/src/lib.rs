//! plan2bn compiles hierarchical procedural plan libraries into discrete
//! belief networks and answers plan-recognition queries over them.
//!
//! The pipeline has three stages:
//!
//! 1. [`plan_model`] parses and validates a textual plan library (KAs with
//!    purposes, context conditions, and sequenced or branching bodies).
//! 2. [`compiler`] translates the library into a [`bayes_net::BeliefNetwork`]
//!    whose variables stand for goals, actions, evidence, and context, with
//!    conditional probability tables synthesized from the plan structure.
//! 3. [`recognition`] feeds timestamped observations into the network and
//!    reports posterior beliefs over every goal in the library.
//!
//! The `plan2bn` binary exposes all of this on the command line.

pub mod bayes_net;
pub mod cli;
pub mod compiler;
pub mod plan_model;
pub mod recognition;
