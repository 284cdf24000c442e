//! Deterministic discrete-event simulator for mobile ad hoc networks running
//! multipath on-demand routing, optionally under black-hole attack and with
//! monitor nodes that detect and blacklist the attackers.
//!
//! A run is fully determined by its [`Scenario`] (including the seed).

pub mod adversary;
pub mod campaign;
pub mod engine;
pub mod ids;
pub mod metrics;
pub mod mobility;
pub mod node;
pub mod results;
pub mod rng;
pub mod routing;
pub mod scenario;
pub mod sim;
pub mod time;
pub mod trace;
pub mod traffic;

use std::fmt;

pub use campaign::{run_campaign, run_campaign_with, CampaignError, CampaignRow, CampaignSpec, CampaignTable};
pub use metrics::{Counters, MetricsLedger};
pub use node::{DropCause, NodeState, Role};
pub use results::{RunSummary, ResultsRecord};
pub use scenario::{ConfigError, Mode, Scenario};
pub use sim::{run_scenario, Detection, FinishedRun, SimError, Simulation};
pub use time::{SimDuration, SimTime};
pub use trace::{Recount, TraceRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::str::FromStr for NodeId {
    type Err = std::num::ParseIntError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(NodeId)
    }
}
