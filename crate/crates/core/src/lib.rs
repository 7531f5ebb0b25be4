//! Seeding and pricing workers for several crowdsourcing tasks that spread
//! through one social network at the same time.
//!
//! * [`graph`]: the network, one diffusion layer per task, locations and
//!   subarea qualities.
//! * [`diffusion`]: Monte-Carlo and exact evaluators of the objective.
//! * [`rrset`]: multi-task reverse-reachable sampling and coverage estimates.
//! * [`opimc`]: greedy coverage, confidence bounds and the doubling driver.
//! * [`auction`]: winner selection and critical payments.

pub mod auction;
pub mod diffusion;
pub mod error;
pub mod graph;
pub mod market;
pub mod opimc;
pub mod rng;
pub mod rrset;

pub use error::{Error, Result};
pub use graph::{NodeId, TaskGraph};
pub use market::{Bidder, Market, TaskSet, UserId};
pub use rrset::RrCollection;
