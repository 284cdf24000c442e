//! Experiment configuration. Serialized as a flat TOML table; every field has
//! a default so a config file only needs the keys it changes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::AttackerProfile;
use crate::node::ProtocolParams;
use crate::time::SimDuration;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Normal,
    Attack,
    Ids,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Normal, Mode::Attack, Mode::Ids];

    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Normal => "normal",
            Mode::Attack => "attack",
            Mode::Ids => "ids",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Mode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode {s:?} (expected normal, attack or ids)"))
    }
}

/// Times are in seconds, distances in metres, speeds in m/s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Scenario {
    pub node_count: u32,
    pub width: f64,
    pub height: f64,
    pub range: f64,
    pub v_min: f64,
    pub v_max: f64,
    pub pause: f64,
    pub duration: f64,
    pub mode: Mode,
    pub attacker_count: u32,
    pub ids_count: u32,
    pub flow_count: u32,
    pub cbr_rate: f64,
    pub payload_size: u32,
    pub flow_start_min: f64,
    pub flow_start_max: f64,
    pub seed: u64,
    pub mobility_tick: f64,
    /// Nodes appear at uniform times in `[0, join_window]` instead of all at t=0.
    pub staggered_join: bool,
    pub join_window: f64,
    pub per_hop_latency: f64,
    pub jitter: f64,
    pub active_route_lifetime: f64,
    pub discovery_timeout: f64,
    pub retry_limit: u32,
    pub discovery_backoff: f64,
    pub data_ttl: u32,
    pub buffer_capacity: u32,
    pub rreq_cache_lifetime: f64,
    pub fake_hop_count: u32,
    pub seq_inflation: u32,
    pub audit_interval: f64,
    pub audit_min_packets: u32,
    pub confirm_window: f64,
    pub ids_global_view: bool,
    pub metrics_interval: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        Scenario {
            node_count: 50,
            width: 800.0,
            height: 800.0,
            range: 250.0,
            v_min: 3.0,
            v_max: 30.0,
            pause: 0.0,
            duration: 100.0,
            mode: Mode::Normal,
            attacker_count: 4,
            ids_count: 2,
            flow_count: 10,
            cbr_rate: 3.0,
            payload_size: 512,
            flow_start_min: 1.0,
            flow_start_max: 5.0,
            seed: 1,
            mobility_tick: 0.1,
            staggered_join: false,
            join_window: 10.0,
            per_hop_latency: 0.002,
            jitter: 0.0005,
            active_route_lifetime: 10.0,
            discovery_timeout: 1.0,
            retry_limit: 3,
            discovery_backoff: 2.0,
            data_ttl: 32,
            buffer_capacity: 64,
            rreq_cache_lifetime: 10.0,
            fake_hop_count: 1,
            seq_inflation: 100,
            audit_interval: 1.0,
            audit_min_packets: 5,
            confirm_window: 0.5,
            ids_global_view: false,
            metrics_interval: 1.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid value for `{field}`: {reason}")]
    Invalid { field: &'static str, reason: String },
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot serialize config: {0}")]
    Serialize(#[from] toml::ser::Error),
}

fn invalid(field: &'static str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        field,
        reason: reason.into(),
    }
}

fn positive(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be a positive number, got {v}")))
    }
}

fn non_negative(field: &'static str, v: f64) -> Result<(), ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(invalid(field, format!("must be a non-negative number, got {v}")))
    }
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let s: Scenario = toml::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    /// Parses without validating, for callers that adjust fields first.
    pub fn from_toml_unchecked(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    /// Total nodes simulated, including monitors.
    pub fn total_nodes(&self) -> u32 {
        self.node_count + self.monitors()
    }

    /// Attackers actually placed (none in normal mode).
    pub fn attackers(&self) -> u32 {
        if self.mode == Mode::Normal {
            0
        } else {
            self.attacker_count
        }
    }

    pub fn monitors(&self) -> u32 {
        if self.mode == Mode::Ids {
            self.ids_count
        } else {
            0
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.node_count < 2 {
            return Err(invalid("node_count", "need at least 2 nodes"));
        }
        positive("width", self.width)?;
        positive("height", self.height)?;
        positive("range", self.range)?;
        non_negative("v_min", self.v_min)?;
        non_negative("v_max", self.v_max)?;
        if self.v_max > 0.0 && self.v_min <= 0.0 {
            return Err(invalid("v_min", "must be positive when nodes move (v_max > 0)"));
        }
        if self.v_max > 0.0 && self.v_min > self.v_max {
            return Err(invalid("v_min", format!("exceeds v_max ({} > {})", self.v_min, self.v_max)));
        }
        non_negative("pause", self.pause)?;
        positive("duration", self.duration)?;
        match self.mode {
            Mode::Attack | Mode::Ids if self.attacker_count == 0 => {
                return Err(invalid("attacker_count", format!("must be at least 1 in {} mode", self.mode)));
            }
            Mode::Ids if self.ids_count == 0 => {
                return Err(invalid("ids_count", "must be at least 1 in ids mode"));
            }
            _ => {}
        }
        let honest = self.node_count.saturating_sub(self.attacker_count);
        if self.attacker_count >= self.node_count || honest < 2 {
            return Err(invalid("attacker_count", "must leave at least 2 honest nodes"));
        }
        if self.flow_count > honest {
            return Err(invalid("flow_count", format!("at most {honest} flows with distinct honest sources")));
        }
        positive("cbr_rate", self.cbr_rate)?;
        if self.payload_size == 0 {
            return Err(invalid("payload_size", "must be positive"));
        }
        non_negative("flow_start_min", self.flow_start_min)?;
        non_negative("flow_start_max", self.flow_start_max)?;
        if self.flow_start_min > self.flow_start_max {
            return Err(invalid("flow_start_min", "exceeds flow_start_max"));
        }
        if self.flow_start_max > self.duration {
            return Err(invalid("flow_start_max", "flows must start before the run ends"));
        }
        if self.seed > i64::MAX as u64 {
            return Err(invalid("seed", "must be below 2^63"));
        }
        positive("mobility_tick", self.mobility_tick)?;
        non_negative("join_window", self.join_window)?;
        positive("per_hop_latency", self.per_hop_latency)?;
        non_negative("jitter", self.jitter)?;
        if self.jitter > self.per_hop_latency {
            return Err(invalid("jitter", "must not exceed per_hop_latency"));
        }
        positive("active_route_lifetime", self.active_route_lifetime)?;
        positive("discovery_timeout", self.discovery_timeout)?;
        if self.retry_limit == 0 {
            return Err(invalid("retry_limit", "must be at least 1"));
        }
        if !(self.discovery_backoff.is_finite() && self.discovery_backoff >= 1.0) {
            return Err(invalid("discovery_backoff", "must be at least 1"));
        }
        if self.data_ttl == 0 {
            return Err(invalid("data_ttl", "must be at least 1"));
        }
        positive("rreq_cache_lifetime", self.rreq_cache_lifetime)?;
        if self.fake_hop_count == 0 {
            return Err(invalid("fake_hop_count", "must be at least 1"));
        }
        if self.seq_inflation == 0 {
            return Err(invalid("seq_inflation", "must be at least 1"));
        }
        positive("audit_interval", self.audit_interval)?;
        if self.audit_min_packets == 0 {
            return Err(invalid("audit_min_packets", "must be at least 1"));
        }
        positive("confirm_window", self.confirm_window)?;
        if self.confirm_window <= self.per_hop_latency + self.jitter {
            return Err(invalid("confirm_window", "must exceed the worst-case hop latency"));
        }
        positive("metrics_interval", self.metrics_interval)?;
        Ok(())
    }

    pub fn protocol_params(&self) -> ProtocolParams {
        ProtocolParams {
            discovery_timeout: SimDuration::from_secs_f64(self.discovery_timeout),
            retry_limit: self.retry_limit,
            discovery_backoff: self.discovery_backoff,
            data_ttl: self.data_ttl,
            buffer_capacity: self.buffer_capacity as usize,
            active_route_lifetime: SimDuration::from_secs_f64(self.active_route_lifetime),
            rreq_cache_lifetime: SimDuration::from_secs_f64(self.rreq_cache_lifetime),
            attacker: AttackerProfile {
                fake_hop_count: self.fake_hop_count,
                seq_inflation: self.seq_inflation,
            },
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn defaults_are_valid() {
        Scenario::default().validate().unwrap();
    }

    #[test]
    fn ids_mode_without_monitors_names_the_field() {
        let s = Scenario {
            mode: Mode::Ids,
            ids_count: 0,
            ..Scenario::default()
        };
        let err = s.validate().unwrap_err();
        assert!(err.to_string().contains("ids_count"), "{err}");
    }

    #[test]
    fn attack_mode_needs_attackers() {
        let s = Scenario {
            mode: Mode::Attack,
            attacker_count: 0,
            ..Scenario::default()
        };
        assert!(s.validate().unwrap_err().to_string().contains("attacker_count"));
    }

    #[test]
    fn normal_mode_places_no_attackers_or_monitors() {
        let s = Scenario::default();
        assert_eq!((s.attackers(), s.monitors(), s.total_nodes()), (0, 0, 50));
        let s = Scenario { mode: Mode::Ids, ..s };
        assert_eq!((s.attackers(), s.monitors(), s.total_nodes()), (4, 2, 52));
    }

    #[test]
    fn partial_config_uses_defaults() {
        let s = Scenario::from_toml("node_count = 20\nmode = \"attack\"\n").unwrap();
        assert_eq!(s.node_count, 20);
        assert_eq!(s.mode, Mode::Attack);
        assert_eq!(s.range, 250.0);
    }

    #[test]
    fn unknown_key_is_rejected() {
        assert!(Scenario::from_toml("nodes = 20\n").is_err());
    }

    proptest! {
        #[test]
        fn toml_round_trip(
            node_count in 2u32..200,
            width in 1.0f64..5000.0,
            v_min in 0.1f64..10.0,
            extra in 0.0f64..40.0,
            seed in 0u64..(i64::MAX as u64),
            mode in prop::sample::select(Mode::ALL.to_vec()),
            global in any::<bool>(),
            jitter in 0.0f64..0.002,
        ) {
            let s = Scenario {
                node_count,
                width,
                v_min,
                v_max: v_min + extra,
                seed,
                mode,
                ids_global_view: global,
                jitter,
                ..Scenario::default()
            };
            let text = s.to_toml().unwrap();
            let back: Scenario = toml::from_str(&text).unwrap();
            prop_assert_eq!(back, s);
        }
    }
}
