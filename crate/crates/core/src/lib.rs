//! A modular deep reinforcement learning framework.
//!
//! Agents, networks, buffers, environments and optimizers are selected by
//! name from four-table configuration documents and can be combined freely.
//! Training runs in a single process, in synchronous actor/learner rounds, or
//! with asynchronous actors, with a separate evaluation worker recording
//! scores into a run directory.

pub mod nn;
pub mod networks;
pub mod buffers;
pub mod config;
pub mod envs;
pub mod agents;
pub mod logging;
pub mod runtime;
pub mod cli;
