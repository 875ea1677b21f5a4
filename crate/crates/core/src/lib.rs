//! Stochastic project scheduling with expected-NPV maximization.
//!
//! A project is a precedence DAG of activities with stochastic integer
//! durations and duration-dependent cash flows. Scheduling it is cast as a
//! discrete-time Markov decision process; the crate provides:
//!
//! - [`project`]: the network model, CPM bounds and NPV evaluation
//! - [`instance`]: random instance generation and the on-disk format
//! - [`env`]: the scheduling MDP environment with action masking
//! - [`nn`]: a from-scratch fully connected Q-network with Adam
//! - [`agent`]: the DDQN training loop, replay buffer and tabular sanity learner
//! - [`baselines`]: exact deterministic solver, EV|PI, rigid/dynamic policies,
//!   and finite-horizon backward induction
//! - [`bench`]: the gap metric and experiment harness

pub mod agent;
pub mod baselines;
pub mod bench;
pub mod env;
pub mod error;
pub mod instance;
pub mod nn;
pub mod project;

pub use error::{Error, Result};
