//! Episode loop shared by every agent kind.

use std::time::Instant;

use crate::drl::ddpg::{DdpgAgent, Proposal};
use crate::drl::dqn::DqnAgent;
use crate::drl::replay::{ReplayBuffer, Transition};
use crate::drl::{AgentConfig, AgentKind, Mode};
use crate::env::{Action, Env, StateEncoding};
use crate::error::Result;
use crate::inneropt::{ao_baseline, optimize_given_rho};
use crate::numerics::RngStream;

const STREAM_INIT: u64 = 10;
const STREAM_EXPLORE: u64 = 11;
const STREAM_REPLAY: u64 = 12;
const STREAM_SELECT: u64 = 13;

/// One row per environment step.
#[derive(Clone, Debug, PartialEq)]
pub struct RunRecord {
    pub seed: u64,
    pub episode: usize,
    pub step: usize,
    pub reward_raw: f64,
    pub p_tx_w: f64,
    pub rho: f64,
    pub feasible: bool,
    pub executed_was_optimized: bool,
    pub epoch_wall_time_s: f64,
}

#[derive(Clone, Debug)]
pub struct TrainingOutput {
    pub records: Vec<RunRecord>,
    /// Calls into the inner solver (candidate solves or AO runs).
    pub inner_calls: usize,
    pub train_steps: usize,
}

impl TrainingOutput {
    pub fn mean_epoch_time_s(&self) -> f64 {
        if self.records.is_empty() {
            return 0.0;
        }
        self.records.iter().map(|r| r.epoch_wall_time_s).sum::<f64>() / self.records.len() as f64
    }
}

enum Learner {
    Ddpg(Box<DdpgAgent>),
    Dqn(Box<DqnAgent>),
    None,
}

impl Learner {
    fn act(&self, state: &[f64], rng: &mut RngStream) -> Result<Proposal> {
        match self {
            Learner::Ddpg(a) => a.act(state, true, rng),
            Learner::Dqn(a) => {
                let i = a.act(state, true, rng)?;
                Ok(a.decode(i))
            }
            Learner::None => unreachable!("ao-only has no learner"),
        }
    }

    fn q_value(&self, state: &[f64], raw: &[f64]) -> Result<f64> {
        match self {
            Learner::Ddpg(a) => a.q_value(state, raw),
            Learner::Dqn(a) => Ok(a.q_values(state)?[raw[0] as usize]),
            Learner::None => Ok(0.0),
        }
    }

    fn target_value(&self, state: &[f64]) -> Result<f64> {
        match self {
            Learner::Ddpg(a) => a.target_value(state),
            Learner::Dqn(a) => a.target_value(state),
            Learner::None => Ok(0.0),
        }
    }

    fn set_p_opt(&mut self, p: f64) {
        match self {
            Learner::Ddpg(a) => a.set_p_opt(p),
            Learner::Dqn(a) => a.set_p_opt(p),
            Learner::None => {}
        }
    }

    fn end_episode(&mut self) {
        match self {
            Learner::Ddpg(a) => a.decay_noise(),
            Learner::Dqn(a) => a.decay_epsilon(),
            Learner::None => {}
        }
    }

    fn train(&mut self, buffer: &ReplayBuffer, rng: &mut RngStream) -> Result<()> {
        match self {
            Learner::Ddpg(a) => a.train_step(buffer, rng).map(|_| ()),
            Learner::Dqn(a) => a.train_step(buffer, rng).map(|_| ()),
            Learner::None => Ok(()),
        }
    }
}

/// Train `kind` on `env` for `episodes` episodes. The environment carries
/// its own channel stream; agent initialization, exploration, replay
/// sampling and candidate selection use streams derived from `seed`.
pub fn run_training(
    kind: AgentKind,
    env: &mut Env,
    agent_cfg: &AgentConfig,
    episodes: usize,
    seed: u64,
) -> Result<TrainingOutput> {
    agent_cfg.validate()?;
    let cfg = env.config().clone();
    let mut init_rng = RngStream::new(seed, STREAM_INIT);
    let mut explore_rng = RngStream::new(seed, STREAM_EXPLORE);
    let mut replay_rng = RngStream::new(seed, STREAM_REPLAY);
    let mut select_rng = RngStream::new(seed, STREAM_SELECT);

    env.set_state_encoding(match kind {
        AgentKind::OdDdpg | AgentKind::OdDqn => agent_cfg.od_state,
        _ => StateEncoding::Full,
    });
    let state_dim = env.state_len();
    let mode = if kind.optimization_driven() {
        Mode::OptimizationDriven
    } else {
        Mode::ModelFree
    };
    let mut learner = match kind {
        AgentKind::MfDdpg | AgentKind::OdDdpg => Learner::Ddpg(Box::new(DdpgAgent::new(
            mode,
            state_dim,
            cfg.m,
            cfg.n,
            cfg.p_max_w,
            cfg.discount,
            agent_cfg,
            &mut init_rng,
        )?)),
        AgentKind::MfDqn | AgentKind::OdDqn => Learner::Dqn(Box::new(DqnAgent::new(
            mode,
            state_dim,
            cfg.m,
            cfg.n,
            cfg.p_max_w,
            cfg.discount,
            agent_cfg,
            &mut init_rng,
        )?)),
        AgentKind::AoOnly => Learner::None,
    };

    let mut buffer = ReplayBuffer::new(agent_cfg.buffer_capacity, agent_cfg.warmup)?;
    let total_steps = episodes * cfg.episode_len;
    let mut records = Vec::with_capacity(total_steps);
    let mut inner_calls = 0;
    let mut train_steps = 0;
    let mut global_step = 0;
    // beamformer carried over from the last executed action
    let mut held: Option<Action> = None;

    for episode in 0..episodes {
        let mut state = env.reset()?;
        for step in 0..cfg.episode_len {
            let start = Instant::now();
            let p_opt = agent_cfg.p_opt_at(global_step, total_steps);
            learner.set_p_opt(p_opt);

            let (executed, stored_action, reward_opt, optimized) = match kind {
                AgentKind::AoOnly => {
                    let ch = env.channels().expect("reset above");
                    let ao = ao_baseline(ch, &cfg, agent_cfg.ao_rho_grid)?;
                    inner_calls += 1;
                    (ao.solution.action(), Vec::new(), None, true)
                }
                AgentKind::MfDdpg | AgentKind::MfDqn => {
                    let prop = learner.act(state.as_slice(), &mut explore_rng)?;
                    let (w, theta) = prop.beam.expect("model-free proposals carry a beam");
                    let action = Action::new(prop.rho, w, theta, cfg.p_max_w)?;
                    (action, prop.raw, None, false)
                }
                AgentKind::OdDdpg | AgentKind::OdDqn => {
                    let prop = learner.act(state.as_slice(), &mut explore_rng)?;
                    let ch = env.channels().expect("reset above");
                    let cand = optimize_given_rho(prop.rho, ch, &cfg)?;
                    inner_calls += 1;
                    env.observe_reward(cand.reward);
                    let r_opt = env.normalize_reward(cand.reward);
                    let use_opt = match &held {
                        None => true,
                        Some(_) => {
                            let s_hat = env.state_with(prop.rho, r_opt)?;
                            let est_opt = r_opt + cfg.discount * learner.target_value(s_hat.as_slice())?;
                            let est_prop = learner.q_value(state.as_slice(), &prop.raw)?;
                            est_opt > est_prop && select_rng.uniform() < p_opt
                        }
                    };
                    let action = if use_opt {
                        cand.action()
                    } else {
                        let h = held.as_ref().expect("checked above");
                        Action {
                            rho: prop.rho,
                            w: h.w.clone(),
                            theta: h.theta.clone(),
                        }
                    };
                    (action, prop.raw, Some(r_opt), use_opt)
                }
            };

            let out = env.step(&executed)?;
            if kind != AgentKind::AoOnly {
                buffer.push(Transition {
                    state: state.0,
                    action: stored_action,
                    reward: out.reward_norm,
                    reward_opt,
                    next_state: out.next_state.0.clone(),
                    done: out.done,
                    executed_was_optimized: optimized,
                })?;
                if buffer.ready() {
                    learner.train(&buffer, &mut replay_rng)?;
                    train_steps += 1;
                }
            }
            records.push(RunRecord {
                seed,
                episode,
                step,
                reward_raw: out.reward,
                p_tx_w: out.info.p_tx_w,
                rho: executed.rho,
                feasible: out.info.feasible,
                executed_was_optimized: optimized,
                epoch_wall_time_s: start.elapsed().as_secs_f64(),
            });
            held = Some(executed);
            state = out.next_state;
            global_step += 1;
        }
        learner.end_episode();
    }

    Ok(TrainingOutput {
        records,
        inner_calls,
        train_steps,
    })
}
