//! Value-based agent over a discrete action grid.
//!
//! Optimization-driven mode indexes `rho_levels` values of ρ. Model-free
//! mode indexes a joint codebook of ρ level × transmit power level × DFT
//! beam, with all IRS phases at zero.

use std::f64::consts::TAU;

use crate::drl::adam::Adam;
use crate::drl::ddpg::{Proposal, TrainStats};
use crate::drl::mlp::{soft_update, Activation, MlpNet};
use crate::drl::replay::ReplayBuffer;
use crate::drl::{merge_target, AgentConfig, Mode};
use crate::error::{validation, Error, Result};
use crate::numerics::{CVec, RngStream, C64};

#[derive(Clone, Debug)]
pub struct DqnAgent {
    mode: Mode,
    m: usize,
    n: usize,
    p_max: f64,
    discount: f64,
    cfg: AgentConfig,
    state_dim: usize,
    pub q: MlpNet,
    pub q_target: MlpNet,
    opt: Adam,
    epsilon: f64,
    p_opt: f64,
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

impl DqnAgent {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mode: Mode,
        state_dim: usize,
        m: usize,
        n: usize,
        p_max: f64,
        discount: f64,
        cfg: &AgentConfig,
        rng: &mut RngStream,
    ) -> Result<Self> {
        cfg.validate()?;
        if !(0.0..1.0).contains(&discount) {
            return Err(validation(format!("discount {discount} outside [0, 1)")));
        }
        let actions = match mode {
            Mode::OptimizationDriven => cfg.rho_levels,
            Mode::ModelFree => cfg.rho_levels * cfg.power_levels * m,
        };
        let mut widths = vec![state_dim];
        widths.extend_from_slice(&cfg.hidden);
        widths.push(actions);
        let q = MlpNet::new(&widths, vec![Activation::Linear; actions], rng)?;
        Ok(DqnAgent {
            mode,
            m,
            n,
            p_max,
            discount,
            cfg: cfg.clone(),
            state_dim,
            q_target: q.clone(),
            opt: Adam::new(q.param_count()),
            q,
            epsilon: cfg.epsilon_start,
            p_opt: cfg.p_opt_start,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn num_actions(&self) -> usize {
        self.q.output_dim()
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn set_epsilon(&mut self, e: f64) {
        self.epsilon = e.clamp(0.0, 1.0);
    }

    pub fn decay_epsilon(&mut self) {
        self.epsilon = (self.epsilon * self.cfg.epsilon_decay).max(self.cfg.epsilon_end);
    }

    pub fn p_opt(&self) -> f64 {
        self.p_opt
    }

    pub fn set_p_opt(&mut self, p: f64) {
        self.p_opt = p.clamp(0.0, 1.0);
    }

    pub fn q_values(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.q.forward(state)
    }

    /// `max_a Q_target(s, a)`.
    pub fn target_value(&self, state: &[f64]) -> Result<f64> {
        let q = self.q_target.forward(state)?;
        Ok(q.iter().copied().fold(f64::NEG_INFINITY, f64::max))
    }

    /// ε-greedy index; greedy ties go to the lowest index.
    pub fn act(&self, state: &[f64], explore: bool, rng: &mut RngStream) -> Result<usize> {
        let q = self.q.forward(state)?;
        if explore && rng.uniform() < self.epsilon {
            return Ok(rng.below(q.len()));
        }
        Ok(argmax(&q))
    }

    pub fn decode(&self, idx: usize) -> Proposal {
        let levels = self.cfg.rho_levels;
        let raw = vec![idx as f64];
        match self.mode {
            Mode::OptimizationDriven => Proposal {
                raw,
                rho: idx as f64 / (levels - 1) as f64,
                beam: None,
            },
            Mode::ModelFree => {
                let m = self.m;
                let pl = self.cfg.power_levels;
                let beam = idx % m;
                let p = (idx / m) % pl;
                let r = idx / (m * pl);
                // log-spaced from p_max·1e-4 up to p_max
                let power = self.p_max * 10f64.powf(-4.0 * (1.0 - p as f64 / (pl - 1) as f64));
                let amp = (power / m as f64).sqrt();
                let w: CVec = (0..m)
                    .map(|k| C64::from_polar(amp, TAU * (beam * k) as f64 / m as f64))
                    .collect();
                Proposal {
                    raw,
                    rho: r as f64 / (levels - 1) as f64,
                    beam: Some((w, vec![0.0; self.n])),
                }
            }
        }
    }

    pub fn train_step(&mut self, buffer: &ReplayBuffer, rng: &mut RngStream) -> Result<TrainStats> {
        let batch = self.cfg.batch;
        let idx = buffer.sample_indices(batch, rng)?;
        let sd = self.state_dim;
        let na = self.num_actions();
        let mut s = Vec::with_capacity(batch * sd);
        let mut s2 = Vec::with_capacity(batch * sd);
        let mut acts = Vec::with_capacity(batch);
        for &i in &idx {
            let t = buffer.get(i).expect("sampled index in range");
            let a = t.action.first().copied().unwrap_or(-1.0);
            if t.state.len() != sd || t.next_state.len() != sd || !(0.0..na as f64).contains(&a) {
                return Err(Error::State("transition shape does not match agent".into()));
            }
            s.extend_from_slice(&t.state);
            s2.extend_from_slice(&t.next_state);
            acts.push(a as usize);
        }
        let q2 = self.q_target.forward_batch(&s2, batch)?;
        let fwd = self.q.forward_batch(&s, batch)?;
        let mut up = vec![0.0; batch * na];
        let mut loss = 0.0;
        let mut objective = 0.0;
        for (k, &i) in idx.iter().enumerate() {
            let t = buffer.get(i).unwrap();
            let next = &q2.output()[k * na..(k + 1) * na];
            let boot = if t.done {
                0.0
            } else {
                self.discount * next.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            let y_net = t.reward + boot;
            let y = match (self.mode, t.reward_opt) {
                (Mode::OptimizationDriven, Some(r_opt)) => {
                    merge_target(y_net, r_opt + boot, self.p_opt, rng)
                }
                _ => y_net,
            };
            let row = &fwd.output()[k * na..(k + 1) * na];
            let d = row[acts[k]] - y;
            loss += d * d;
            up[k * na + acts[k]] = 2.0 * d / batch as f64;
            objective += row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        }
        let mut grads = vec![0.0; self.q.param_count()];
        self.q.backward(&fwd, &up, Some(&mut grads), false)?;
        self.opt.step(self.q.params_mut(), &grads, self.cfg.lr_q)?;
        soft_update(&mut self.q_target, &self.q, self.cfg.tau)?;
        Ok(TrainStats {
            critic_loss: loss / batch as f64,
            actor_objective: objective / batch as f64,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drl::replay::Transition;

    fn cfg() -> AgentConfig {
        AgentConfig {
            hidden: vec![16],
            batch: 16,
            warmup: 16,
            ..AgentConfig::default()
        }
    }

    #[test]
    fn full_exploration_is_uniform() {
        let mut rng = RngStream::new(1, 10);
        let mut a = DqnAgent::new(Mode::OptimizationDriven, 4, 2, 3, 1.0, 0.9, &cfg(), &mut rng).unwrap();
        a.set_epsilon(1.0);
        let k = a.num_actions();
        let mut counts = vec![0usize; k];
        let s = [0.3, -0.2, 0.1, 0.9];
        let draws = 10_000;
        for _ in 0..draws {
            counts[a.act(&s, true, &mut rng).unwrap()] += 1;
        }
        let e = draws as f64 / k as f64;
        let chi2: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
        // 10 degrees of freedom, 0.999 quantile ≈ 29.6
        assert!(chi2 < 29.6, "chi2 = {chi2}");
    }

    #[test]
    fn greedy_picks_hand_set_argmax() {
        let mut rng = RngStream::new(2, 10);
        let c = AgentConfig {
            hidden: vec![],
            rho_levels: 5,
            ..cfg()
        };
        let mut a = DqnAgent::new(Mode::OptimizationDriven, 2, 1, 1, 1.0, 0.9, &c, &mut rng).unwrap();
        // single linear layer: zero weights, biases set the Q table
        let p = a.q.params_mut();
        for v in p.iter_mut() {
            *v = 0.0;
        }
        let bias = [0.1, 0.7, -0.3, 0.5, 0.2];
        let nb = bias.len();
        let len = p.len();
        p[len - nb..].copy_from_slice(&bias);
        a.set_epsilon(0.0);
        assert_eq!(a.act(&[1.0, -1.0], true, &mut rng).unwrap(), 1);
        assert_eq!(a.decode(1).rho, 0.25);
    }

    #[test]
    fn bandit_converges_to_best_arm() {
        let mut rng = RngStream::new(3, 10);
        let c = AgentConfig {
            rho_levels: 2,
            lr_q: 1e-2,
            tau: 0.05,
            ..cfg()
        };
        let mut a = DqnAgent::new(Mode::OptimizationDriven, 2, 1, 1, 1.0, 0.0, &c, &mut rng).unwrap();
        let mut buf = ReplayBuffer::new(1000, 16).unwrap();
        let s = vec![0.5, -0.5];
        a.set_epsilon(0.5);
        for _ in 0..600 {
            let i = a.act(&s, true, &mut rng).unwrap();
            let r = if i == 1 { 1.0 } else { 0.2 };
            buf.push(Transition {
                state: s.clone(),
                action: vec![i as f64],
                reward: r,
                reward_opt: None,
                next_state: s.clone(),
                done: true,
                executed_was_optimized: false,
            })
            .unwrap();
            if buf.ready() {
                a.train_step(&buf, &mut rng).unwrap();
            }
        }
        assert_eq!(a.act(&s, false, &mut rng).unwrap(), 1);
        let q = a.q_values(&s).unwrap();
        assert!((q[1] - 1.0).abs() < 0.1 && (q[0] - 0.2).abs() < 0.1, "{q:?}");
    }

    #[test]
    fn model_free_codebook_respects_power_cap() {
        let mut rng = RngStream::new(4, 10);
        let a = DqnAgent::new(Mode::ModelFree, 4, 3, 5, 2.0, 0.9, &cfg(), &mut rng).unwrap();
        assert_eq!(a.num_actions(), 11 * 8 * 3);
        let mut seen_max = 0.0f64;
        for i in 0..a.num_actions() {
            let p = a.decode(i);
            let (w, theta) = p.beam.unwrap();
            assert!(w.norm_sqr() <= 2.0 * (1.0 + 1e-12));
            seen_max = seen_max.max(w.norm_sqr());
            assert_eq!(theta, vec![0.0; 5]);
            assert!((0.0..=1.0).contains(&p.rho));
        }
        assert!((seen_max - 2.0).abs() < 1e-12);
    }
}
