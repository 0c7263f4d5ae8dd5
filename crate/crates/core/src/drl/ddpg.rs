//! Deterministic policy-gradient actor-critic.
//!
//! In optimization-driven mode the actor emits ρ only. In model-free mode it
//! emits `[ρ, Re/Im direction (2M), power fraction, phases (N)]`.

use std::f64::consts::TAU;

use crate::drl::adam::Adam;
use crate::drl::mlp::{soft_update, Activation, MlpNet};
use crate::drl::replay::ReplayBuffer;
use crate::drl::{merge_target, AgentConfig, Mode};
use crate::error::{validation, Error, Result};
use crate::numerics::{wrap_phase, CVec, RngStream, C64};

/// Actor output after exploration noise, and its decoded form.
#[derive(Clone, Debug, PartialEq)]
pub struct Proposal {
    pub raw: Vec<f64>,
    pub rho: f64,
    /// `(w, θ)` for model-free agents.
    pub beam: Option<(CVec, Vec<f64>)>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainStats {
    pub critic_loss: f64,
    pub actor_objective: f64,
}

#[derive(Clone, Debug)]
pub struct DdpgAgent {
    mode: Mode,
    m: usize,
    n: usize,
    p_max: f64,
    discount: f64,
    cfg: AgentConfig,
    state_dim: usize,
    pub actor: MlpNet,
    pub actor_target: MlpNet,
    pub critic: MlpNet,
    pub critic_target: MlpNet,
    actor_opt: Adam,
    critic_opt: Adam,
    sigma: f64,
    p_opt: f64,
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<usize> {
    let mut w = vec![input];
    w.extend_from_slice(hidden);
    w.push(output);
    w
}

impl DdpgAgent {
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
        let acts = match mode {
            Mode::OptimizationDriven => vec![Activation::Sigmoid],
            Mode::ModelFree => {
                let mut a = vec![Activation::Sigmoid];
                a.extend(std::iter::repeat_n(Activation::Linear, 2 * m));
                a.push(Activation::Sigmoid);
                a.extend(std::iter::repeat_n(Activation::ScaledSigmoid(TAU), n));
                a
            }
        };
        let action_dim = acts.len();
        let actor = MlpNet::new(&widths(state_dim, &cfg.hidden, action_dim), acts, rng)?;
        let critic = MlpNet::new(
            &widths(state_dim + action_dim, &cfg.hidden, 1),
            vec![Activation::Linear],
            rng,
        )?;
        Ok(DdpgAgent {
            mode,
            m,
            n,
            p_max,
            discount,
            cfg: cfg.clone(),
            state_dim,
            actor_target: actor.clone(),
            critic_target: critic.clone(),
            actor_opt: Adam::new(actor.param_count()),
            critic_opt: Adam::new(critic.param_count()),
            actor,
            critic,
            sigma: cfg.noise_sigma,
            p_opt: cfg.p_opt_start,
        })
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn action_dim(&self) -> usize {
        self.actor.output_dim()
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    pub fn set_sigma(&mut self, sigma: f64) {
        self.sigma = sigma;
    }

    pub fn decay_noise(&mut self) {
        self.sigma *= self.cfg.noise_decay;
    }

    pub fn p_opt(&self) -> f64 {
        self.p_opt
    }

    pub fn set_p_opt(&mut self, p: f64) {
        self.p_opt = p.clamp(0.0, 1.0);
    }

    /// Actor output for `state`, with Gaussian noise when exploring.
    pub fn act(&self, state: &[f64], explore: bool, rng: &mut RngStream) -> Result<Proposal> {
        let mut raw = self.actor.forward(state)?;
        if explore && self.sigma > 0.0 {
            let phase_start = raw.len() - if self.mode == Mode::ModelFree { self.n } else { 0 };
            for (i, v) in raw.iter_mut().enumerate() {
                let scale = if i >= phase_start { TAU } else { 1.0 };
                *v += self.sigma * scale * rng.normal();
            }
        }
        Ok(self.decode(raw))
    }

    /// Clip or wrap a raw action vector and decode it.
    pub fn decode(&self, mut raw: Vec<f64>) -> Proposal {
        raw[0] = raw[0].clamp(0.0, 1.0);
        if self.mode == Mode::OptimizationDriven {
            return Proposal {
                rho: raw[0],
                raw,
                beam: None,
            };
        }
        let m = self.m;
        let pidx = 1 + 2 * m;
        raw[pidx] = raw[pidx].clamp(0.0, 1.0);
        for t in &mut raw[pidx + 1..] {
            *t = wrap_phase(*t);
        }
        let dir: CVec = (0..m)
            .map(|k| C64::new(raw[1 + 2 * k], raw[2 + 2 * k]))
            .collect();
        let dir = dir.normalized().unwrap_or_else(|| {
            let mut e = CVec::zeros(m);
            e[0] = C64::new(1.0, 0.0);
            e
        });
        let w = dir.scaled_re((self.p_max * raw[pidx]).sqrt());
        let theta = raw[pidx + 1..].to_vec();
        Proposal {
            rho: raw[0],
            raw,
            beam: Some((w, theta)),
        }
    }

    fn critic_input(&self, states: &[f64], actions: &[f64], batch: usize) -> Vec<f64> {
        let ad = self.action_dim();
        let mut x = Vec::with_capacity(batch * (self.state_dim + ad));
        for b in 0..batch {
            x.extend_from_slice(&states[b * self.state_dim..(b + 1) * self.state_dim]);
            x.extend_from_slice(&actions[b * ad..(b + 1) * ad]);
        }
        x
    }

    /// Online critic value of a raw action.
    pub fn q_value(&self, state: &[f64], raw: &[f64]) -> Result<f64> {
        if raw.len() != self.action_dim() {
            return Err(validation("action length does not match actor output"));
        }
        let x = self.critic_input(state, raw, 1);
        Ok(self.critic.forward(&x)?[0])
    }

    /// `Q_target(s, μ_target(s))`.
    pub fn target_value(&self, state: &[f64]) -> Result<f64> {
        let a = self.actor_target.forward(state)?;
        let x = self.critic_input(state, &a, 1);
        Ok(self.critic_target.forward(&x)?[0])
    }

    /// Mean of `Q(s, μ(s))` over the batch and its gradient with respect to
    /// the actor parameters.
    pub fn actor_objective_grad(&self, states: &[f64], batch: usize) -> Result<(f64, Vec<f64>)> {
        let ad = self.action_dim();
        let sd = self.state_dim;
        let afwd = self.actor.forward_batch(states, batch)?;
        let x = self.critic_input(states, afwd.output(), batch);
        let cfwd = self.critic.forward_batch(&x, batch)?;
        let objective = cfwd.output().iter().sum::<f64>() / batch as f64;
        let up = vec![1.0 / batch as f64; batch];
        let gx = self
            .critic
            .backward(&cfwd, &up, None, true)?
            .expect("input gradient requested");
        let mut ga = Vec::with_capacity(batch * ad);
        for b in 0..batch {
            let row = &gx[b * (sd + ad)..(b + 1) * (sd + ad)];
            ga.extend_from_slice(&row[sd..]);
        }
        let mut grads = vec![0.0; self.actor.param_count()];
        self.actor.backward(&afwd, &ga, Some(&mut grads), false)?;
        Ok((objective, grads))
    }

    /// One critic and one actor update on a uniform mini-batch, then soft
    /// target updates.
    pub fn train_step(&mut self, buffer: &ReplayBuffer, rng: &mut RngStream) -> Result<TrainStats> {
        let batch = self.cfg.batch;
        let idx = buffer.sample_indices(batch, rng)?;
        let sd = self.state_dim;
        let ad = self.action_dim();
        let mut s = Vec::with_capacity(batch * sd);
        let mut a = Vec::with_capacity(batch * ad);
        let mut s2 = Vec::with_capacity(batch * sd);
        for &i in &idx {
            let t = buffer.get(i).expect("sampled index in range");
            if t.state.len() != sd || t.next_state.len() != sd || t.action.len() != ad {
                return Err(Error::State("transition shape does not match agent".into()));
            }
            s.extend_from_slice(&t.state);
            a.extend_from_slice(&t.action);
            s2.extend_from_slice(&t.next_state);
        }

        let a2 = self.actor_target.forward_batch(&s2, batch)?;
        let x2 = self.critic_input(&s2, a2.output(), batch);
        let q2 = self.critic_target.forward_batch(&x2, batch)?;
        let mut y = Vec::with_capacity(batch);
        for (k, &i) in idx.iter().enumerate() {
            let t = buffer.get(i).unwrap();
            let boot = if t.done { 0.0 } else { self.discount * q2.output()[k] };
            let y_net = t.reward + boot;
            let target = match (self.mode, t.reward_opt) {
                (Mode::OptimizationDriven, Some(r_opt)) => {
                    merge_target(y_net, r_opt + boot, self.p_opt, rng)
                }
                _ => y_net,
            };
            y.push(target);
        }

        let x = self.critic_input(&s, &a, batch);
        let cfwd = self.critic.forward_batch(&x, batch)?;
        let mut loss = 0.0;
        let mut up = Vec::with_capacity(batch);
        for (q, t) in cfwd.output().iter().zip(&y) {
            let d = q - t;
            loss += d * d;
            up.push(2.0 * d / batch as f64);
        }
        loss /= batch as f64;
        let mut cgrads = vec![0.0; self.critic.param_count()];
        self.critic.backward(&cfwd, &up, Some(&mut cgrads), false)?;
        self.critic_opt
            .step(self.critic.params_mut(), &cgrads, self.cfg.lr_critic)?;

        let (objective, mut agrads) = self.actor_objective_grad(&s, batch)?;
        for g in &mut agrads {
            *g = -*g;
        }
        self.actor_opt
            .step(self.actor.params_mut(), &agrads, self.cfg.lr_actor)?;

        soft_update(&mut self.critic_target, &self.critic, self.cfg.tau)?;
        soft_update(&mut self.actor_target, &self.actor, self.cfg.tau)?;
        Ok(TrainStats {
            critic_loss: loss,
            actor_objective: objective,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::drl::replay::Transition;

    fn small_cfg() -> AgentConfig {
        AgentConfig {
            hidden: vec![16, 16],
            batch: 8,
            warmup: 1,
            ..AgentConfig::default()
        }
    }

    fn agent(mode: Mode, seed: u64) -> DdpgAgent {
        let mut rng = RngStream::new(seed, 10);
        DdpgAgent::new(mode, 6, 2, 3, 1.0, 0.9, &small_cfg(), &mut rng).unwrap()
    }

    #[test]
    fn deterministic_without_noise() {
        let a = agent(Mode::ModelFree, 1);
        let s = [0.1, -0.3, 0.5, 0.0, 1.0, 0.2];
        let mut r1 = RngStream::new(1, 1);
        let mut r2 = RngStream::new(2, 1);
        assert_eq!(a.act(&s, false, &mut r1).unwrap(), a.act(&s, false, &mut r2).unwrap());
    }

    #[test]
    fn outputs_respect_bounds() {
        let mut rng = RngStream::new(3, 1);
        for mode in [Mode::OptimizationDriven, Mode::ModelFree] {
            let mut a = agent(mode, 2);
            a.set_sigma(1.0);
            for _ in 0..10_000 {
                let s: Vec<f64> = (0..6).map(|_| rng.normal()).collect();
                let p = a.act(&s, true, &mut rng).unwrap();
                assert!((0.0..=1.0).contains(&p.rho));
                if let Some((w, theta)) = p.beam {
                    assert!(w.norm_sqr() <= 1.0 * (1.0 + 1e-12));
                    assert!(theta.iter().all(|t| (0.0..TAU).contains(t)));
                    assert_eq!((w.len(), theta.len()), (2, 3));
                }
            }
            assert_eq!(a.action_dim(), if mode == Mode::ModelFree { 9 } else { 1 });
        }
    }

    #[test]
    fn actor_through_critic_gradient_matches_finite_differences() {
        let mut rng = RngStream::new(4, 1);
        let h = 1e-6;
        for trial in 0..20 {
            let mode = if trial % 2 == 0 { Mode::ModelFree } else { Mode::OptimizationDriven };
            let mut a = agent(mode, 100 + trial);
            for p in a.critic.params_mut() {
                *p += 0.2 * rng.normal();
            }
            for p in a.actor.params_mut() {
                *p += 0.2 * rng.normal();
            }
            let batch = 3;
            let s: Vec<f64> = (0..batch * 6).map(|_| rng.normal()).collect();
            let (_, g) = a.actor_objective_grad(&s, batch).unwrap();
            for k in (0..a.actor.param_count()).step_by(7) {
                let mut plus = a.clone();
                plus.actor.params_mut()[k] += h;
                let mut minus = a.clone();
                minus.actor.params_mut()[k] -= h;
                let fd = (plus.actor_objective_grad(&s, batch).unwrap().0
                    - minus.actor_objective_grad(&s, batch).unwrap().0)
                    / (2.0 * h);
                if fd.abs() > 1e-7 || g[k].abs() > 1e-7 {
                    let rel = (fd - g[k]).abs() / fd.abs().max(g[k].abs());
                    assert!(rel < 1e-3, "param {k}: fd {fd} vs {}", g[k]);
                }
            }
        }
    }

    fn single_transition(reward: f64, reward_opt: Option<f64>) -> ReplayBuffer {
        let mut b = ReplayBuffer::new(1, 1).unwrap();
        b.push(Transition {
            state: vec![0.2, -0.1, 0.4, 0.0, 0.3, 1.0],
            action: vec![0.7],
            reward,
            reward_opt,
            next_state: vec![0.1, 0.1, 0.1, 0.1, 0.1, 0.1],
            done: false,
            executed_was_optimized: false,
        })
        .unwrap();
        b
    }

    #[test]
    fn frozen_batch_reduces_critic_loss() {
        let mut a = agent(Mode::OptimizationDriven, 5);
        let b = single_transition(1.0, None);
        let mut rng = RngStream::new(5, 1);
        let first = a.train_step(&b, &mut rng).unwrap().critic_loss;
        let mut last = first;
        for _ in 0..100 {
            last = a.train_step(&b, &mut rng).unwrap().critic_loss;
        }
        assert!(last < first, "{last} !< {first}");
    }

    #[test]
    fn zero_discount_targets_immediate_reward() {
        let mut rng = RngStream::new(6, 10);
        let cfg = AgentConfig {
            batch: 1,
            lr_critic: 1e-2,
            ..small_cfg()
        };
        let mut a = DdpgAgent::new(Mode::OptimizationDriven, 6, 2, 3, 1.0, 0.0, &cfg, &mut rng).unwrap();
        a.set_p_opt(1.0);
        // the optimizer reward dominates, so the merged target is 0.8
        let b = single_transition(0.3, Some(0.8));
        for _ in 0..2000 {
            a.train_step(&b, &mut rng).unwrap();
        }
        let t = b.get(0).unwrap();
        let q = a.q_value(&t.state, &t.action).unwrap();
        assert!((q - 0.8).abs() < 1e-3, "q = {q}");
    }

    #[test]
    fn zero_rewards_with_zero_critic_is_a_fixed_point() {
        let mut a = agent(Mode::OptimizationDriven, 7);
        for p in a.critic.params_mut() {
            *p = 0.0;
        }
        a.critic_target = a.critic.clone();
        let before = a.critic.clone();
        let b = single_transition(0.0, Some(0.0));
        let mut rng = RngStream::new(7, 1);
        for _ in 0..10 {
            let st = a.train_step(&b, &mut rng).unwrap();
            assert_eq!(st.critic_loss, 0.0);
        }
        assert_eq!(a.critic.params(), before.params());
    }

    #[test]
    fn train_before_warmup_is_state_error() {
        let mut a = agent(Mode::OptimizationDriven, 8);
        let b = ReplayBuffer::new(10, 5).unwrap();
        let mut rng = RngStream::new(8, 1);
        assert!(matches!(a.train_step(&b, &mut rng), Err(Error::State(_))));
    }
}
