//! Experiment configuration files.
//!
//! Every section is optional; missing keys take the documented defaults and
//! unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::channel::{ChannelParams, Geometry};
use crate::drl::{AgentConfig, AgentKind};
use crate::env::SystemConfig;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSection {
    pub agent: AgentKind,
    pub episodes: usize,
    /// Independent trainings; repetition `i` uses seed `base_seed + i`.
    pub repetitions: usize,
    pub base_seed: u64,
    pub output: PathBuf,
    /// Also write per-step wall times to `timing.csv`. Off by default because
    /// wall times differ between otherwise identical runs.
    pub record_timing: bool,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            agent: AgentKind::OdDdpg,
            episodes: 300,
            repetitions: 10,
            base_seed: 1,
            output: PathBuf::from("out"),
            record_timing: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSection {
    /// IRS x-coordinates along the AP-user line, meters.
    pub positions: Vec<f64>,
    /// IRS offset from the AP-user line, meters.
    pub irs_height: f64,
    /// IRS power demands to sweep, watts.
    pub p_irs_levels: Vec<f64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        SweepSection {
            positions: vec![10.0, 12.0, 14.0, 16.0, 18.0],
            irs_height: 5.0,
            p_irs_levels: vec![0.0, 20e-6],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalabilitySection {
    /// `(M, N)` pairs.
    pub sizes: Vec<[usize; 2]>,
    /// od-ddpg episodes timed per size.
    pub episodes: usize,
    /// Decision epochs of the AO baseline timed per size.
    pub ao_epochs: usize,
    /// Degree of the fitted polynomial in `M·N`.
    pub fit_degree: usize,
}

impl Default for ScalabilitySection {
    fn default() -> Self {
        ScalabilitySection {
            sizes: vec![[2, 8], [4, 16], [4, 32], [8, 64]],
            episodes: 15,
            ao_epochs: 1000,
            fit_degree: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub instances: usize,
    /// 2 uses the dense direction grid, larger values the restart descent.
    pub m: usize,
    pub n: usize,
    pub grid_points: usize,
    pub restarts: usize,
    /// Draw instances with an active harvesting constraint; otherwise
    /// SNR-only instances checked against the closed form.
    pub harvest: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        SolverSection {
            instances: 100,
            m: 2,
            n: 8,
            grid_points: 400,
            restarts: 200,
            harvest: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingLawSection {
    /// Ascending IRS sizes.
    pub n_list: Vec<usize>,
    pub draws: usize,
}

impl Default for ScalingLawSection {
    fn default() -> Self {
        ScalingLawSection {
            n_list: vec![4, 8, 16, 32, 64],
            draws: 1000,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub system: SystemConfig,
    pub geometry: Geometry,
    pub channel: ChannelParams,
    pub agent: AgentConfig,
    pub sweep: SweepSection,
    pub scalability: ScalabilitySection,
    pub solver: SolverSection,
    pub scaling_law: ScalingLawSection,
}

fn keyed(key: &str, r: Result<()>) -> Result<()> {
    r.map_err(|e| match e {
        Error::Validation(msg) => Error::Config {
            key: key.to_string(),
            msg,
        },
        other => other,
    })
}

fn check(key: &str, ok: bool, msg: &str) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::Config {
            key: key.to_string(),
            msg: msg.to_string(),
        })
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config {
            key: e
                .span()
                .map(|s| text[s].lines().next().unwrap_or("").trim().to_string())
                .unwrap_or_default(),
            msg: e.message().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config {
            key: String::new(),
            msg: e.to_string(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        keyed("system", self.system.validate())?;
        keyed("geometry", self.geometry.validate())?;
        keyed("channel", self.channel.validate())?;
        keyed("agent", self.agent.validate())?;
        let e = &self.experiment;
        check("experiment.episodes", e.episodes >= 1, "must be >= 1")?;
        check("experiment.repetitions", e.repetitions >= 1, "must be >= 1")?;
        let s = &self.sweep;
        check(
            "sweep.positions",
            s.positions
                .iter()
                .all(|&x| x > 0.0 && x < self.geometry.d_ap_user),
            "every position must lie strictly between AP and user",
        )?;
        check("sweep.irs_height", s.irs_height >= 0.0, "must be non-negative")?;
        check(
            "sweep.p_irs_levels",
            s.p_irs_levels.iter().all(|&p| p >= 0.0 && p.is_finite()),
            "demands must be non-negative",
        )?;
        let sc = &self.scalability;
        check(
            "scalability.sizes",
            !sc.sizes.is_empty() && sc.sizes.iter().all(|&[m, n]| m >= 1 && n >= 1),
            "need at least one size with M, N >= 1",
        )?;
        check("scalability.episodes", sc.episodes >= 1, "must be >= 1")?;
        check("scalability.ao_epochs", sc.ao_epochs >= 1, "must be >= 1")?;
        let so = &self.solver;
        check("solver.instances", so.instances >= 1, "must be >= 1")?;
        check("solver.m", so.m >= 2 || !so.harvest, "harvest instances need m >= 2")?;
        check("solver.n", so.n >= 1, "must be >= 1")?;
        check("solver.grid_points", so.grid_points >= 2, "must be >= 2")?;
        check("solver.restarts", so.restarts >= 1, "must be >= 1")?;
        let sl = &self.scaling_law;
        check(
            "scaling_law.n_list",
            !sl.n_list.is_empty()
                && sl.n_list[0] >= 1
                && sl.n_list.windows(2).all(|w| w[0] < w[1]),
            "must be non-empty, positive and strictly ascending",
        )?;
        check("scaling_law.draws", sl.draws >= 1, "must be >= 1")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
    }

    #[test]
    fn round_trip_is_identity() {
        let mut c = ExperimentConfig::default();
        c.experiment.agent = AgentKind::MfDqn;
        c.system.p_irs_w = 20e-6;
        c.agent.hidden = vec![32, 16];
        c.sweep.positions = vec![11.5, 17.25];
        let text = c.to_toml().unwrap();
        let back = ExperimentConfig::from_toml(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml().unwrap(), text);
    }

    #[test]
    fn unknown_key_is_rejected() {
        let err = ExperimentConfig::from_toml("[system]\nantennas = 4\n").unwrap_err();
        assert!(err.to_string().contains("antennas"), "{err}");
    }

    #[test]
    fn invalid_value_names_the_section() {
        let err = ExperimentConfig::from_toml("[agent]\ntau = 0.0\n").unwrap_err();
        match err {
            Error::Config { key, .. } => assert_eq!(key, "agent"),
            other => panic!("unexpected {other}"),
        }
        let err = ExperimentConfig::from_toml("[sweep]\npositions = [25.0]\n").unwrap_err();
        assert!(matches!(err, Error::Config { ref key, .. } if key == "sweep.positions"));
        let err = ExperimentConfig::from_toml("[experiment]\nagent = \"ppo\"\n").unwrap_err();
        assert!(matches!(err, Error::Config { .. }));
    }
}
