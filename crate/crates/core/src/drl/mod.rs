//! Actor-critic and value-based agents, in model-free and
//! optimization-driven flavours, plus the training loop that couples them to
//! the environment and the inner solver.

pub mod adam;
pub mod ddpg;
pub mod dqn;
pub mod mlp;
pub mod replay;
pub mod train;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::env::StateEncoding;
use crate::error::{validation, Result};
use crate::numerics::RngStream;

pub use adam::Adam;
pub use ddpg::{DdpgAgent, Proposal, TrainStats};
pub use dqn::DqnAgent;
pub use mlp::{soft_update, Activation, MlpNet};
pub use replay::{ReplayBuffer, Transition};
pub use train::{run_training, RunRecord, TrainingOutput};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentKind {
    #[serde(rename = "mf-ddpg")]
    MfDdpg,
    #[serde(rename = "od-ddpg")]
    OdDdpg,
    #[serde(rename = "mf-dqn")]
    MfDqn,
    #[serde(rename = "od-dqn")]
    OdDqn,
    #[serde(rename = "ao-only")]
    AoOnly,
}

impl AgentKind {
    pub const ALL: [AgentKind; 5] = [
        AgentKind::MfDdpg,
        AgentKind::OdDdpg,
        AgentKind::MfDqn,
        AgentKind::OdDqn,
        AgentKind::AoOnly,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AgentKind::MfDdpg => "mf-ddpg",
            AgentKind::OdDdpg => "od-ddpg",
            AgentKind::MfDqn => "mf-dqn",
            AgentKind::OdDqn => "od-dqn",
            AgentKind::AoOnly => "ao-only",
        }
    }

    pub fn optimization_driven(self) -> bool {
        matches!(self, AgentKind::OdDdpg | AgentKind::OdDqn)
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AgentKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        AgentKind::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| validation(format!("unknown agent kind `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    ModelFree,
    OptimizationDriven,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub lr_actor: f64,
    pub lr_critic: f64,
    pub lr_q: f64,
    pub tau: f64,
    pub batch: usize,
    pub buffer_capacity: usize,
    pub warmup: usize,
    pub noise_sigma: f64,
    /// Per-episode multiplier on the exploration noise.
    pub noise_decay: f64,
    pub p_opt_start: f64,
    pub p_opt_end: f64,
    /// Fraction of all training steps over which p_opt is annealed.
    pub p_opt_anneal_frac: f64,
    pub rho_levels: usize,
    /// Transmit power levels in the model-free DQN codebook.
    pub power_levels: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Per-episode multiplier on ε.
    pub epsilon_decay: f64,
    pub hidden: Vec<usize>,
    /// ρ grid size for the alternating-optimization baseline.
    pub ao_rho_grid: usize,
    /// Observation used by optimization-driven agents. Model-free agents
    /// always see the full channel coefficients.
    pub od_state: StateEncoding,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            lr_actor: 1e-4,
            lr_critic: 1e-3,
            lr_q: 1e-3,
            tau: 0.005,
            batch: 64,
            buffer_capacity: 100_000,
            warmup: 500,
            noise_sigma: 0.2,
            noise_decay: 0.999,
            p_opt_start: 1.0,
            p_opt_end: 0.1,
            p_opt_anneal_frac: 0.5,
            rho_levels: 11,
            power_levels: 8,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay: 0.99,
            hidden: vec![128, 128],
            ao_rho_grid: 11,
            od_state: StateEncoding::Compact,
        }
    }
}

fn prob(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(validation(format!("{name} = {v} is not a probability")))
    }
}

impl AgentConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("lr_actor", self.lr_actor),
            ("lr_critic", self.lr_critic),
            ("lr_q", self.lr_q),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(validation(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(validation(format!("tau must lie in (0, 1], got {}", self.tau)));
        }
        if self.batch == 0 {
            return Err(validation("batch must be positive"));
        }
        if self.buffer_capacity == 0 || self.warmup > self.buffer_capacity {
            return Err(validation("buffer_capacity must be positive and >= warmup"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(validation("noise_sigma must be non-negative"));
        }
        prob("noise_decay", self.noise_decay)?;
        prob("p_opt_start", self.p_opt_start)?;
        prob("p_opt_end", self.p_opt_end)?;
        prob("p_opt_anneal_frac", self.p_opt_anneal_frac)?;
        prob("epsilon_start", self.epsilon_start)?;
        prob("epsilon_end", self.epsilon_end)?;
        prob("epsilon_decay", self.epsilon_decay)?;
        if self.rho_levels < 2 {
            return Err(validation("rho_levels must be >= 2"));
        }
        if self.power_levels < 2 {
            return Err(validation("power_levels must be >= 2"));
        }
        if self.ao_rho_grid < 2 {
            return Err(validation("ao_rho_grid must be >= 2"));
        }
        if self.hidden.contains(&0) {
            return Err(validation("hidden widths must be positive"));
        }
        Ok(())
    }

    /// p_opt after `step` of `total` training steps.
    pub fn p_opt_at(&self, step: usize, total: usize) -> f64 {
        let span = self.p_opt_anneal_frac * total as f64;
        if span <= 0.0 {
            return self.p_opt_end;
        }
        let f = (step as f64 / span).min(1.0);
        self.p_opt_start + (self.p_opt_end - self.p_opt_start) * f
    }
}

/// Target used for training: the optimizer's value replaces the network's
/// when it is larger, with probability `p_opt`.
pub fn merge_target(y_net: f64, y_opt: f64, p_opt: f64, rng: &mut RngStream) -> f64 {
    if y_opt > y_net && rng.uniform() < p_opt {
        y_opt
    } else {
        y_net
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn merge_target_rules() {
        let mut rng = RngStream::new(1, 1);
        for _ in 0..1000 {
            let a = rng.normal();
            let b = rng.normal();
            assert_eq!(merge_target(a, a.max(b) + 1.0, 1.0, &mut rng), a.max(b) + 1.0);
            assert_eq!(merge_target(a, b, 0.0, &mut rng), a);
            assert_eq!(merge_target(a.max(b), a.min(b), rng.uniform(), &mut rng), a.max(b));
            assert!(merge_target(a, b, rng.uniform(), &mut rng) >= a);
        }
        let hits = (0..10_000)
            .filter(|_| merge_target(0.0, 1.0, 0.3, &mut rng) == 1.0)
            .count();
        assert!((hits as f64 / 1e4 - 0.3).abs() < 0.02);
    }

    #[test]
    fn agent_kind_round_trip() {
        for k in AgentKind::ALL {
            assert_eq!(k.as_str().parse::<AgentKind>().unwrap(), k);
        }
        assert!("ddpg".parse::<AgentKind>().is_err());
    }

    #[test]
    fn config_validation_and_schedule() {
        let c = AgentConfig::default();
        c.validate().unwrap();
        assert_eq!(c.p_opt_at(0, 1000), 1.0);
        assert!((c.p_opt_at(250, 1000) - 0.55).abs() < 1e-12);
        assert!((c.p_opt_at(500, 1000) - 0.1).abs() < 1e-12);
        assert!((c.p_opt_at(900, 1000) - 0.1).abs() < 1e-12);
        for bad in [
            AgentConfig { tau: 0.0, ..c.clone() },
            AgentConfig { tau: 1.5, ..c.clone() },
            AgentConfig { p_opt_end: 1.2, ..c.clone() },
            AgentConfig { rho_levels: 1, ..c.clone() },
            AgentConfig { warmup: 10, buffer_capacity: 5, ..c.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
