//! The decision process: features, action evaluation, reward, and episodes.

use serde::{Deserialize, Serialize};

use crate::channel::{
    evolve_channels, sample_channels, ChannelParams, ChannelRealization, ChannelView, Geometry,
};
use crate::error::{validation, Error, Result};
use crate::numerics::{wrap_phase, CVec, RngStream, C64};

/// Relative slack applied to every feasibility comparison.
pub const FEAS_RTOL: f64 = 1e-9;

/// Which data rate counts as "successfully transmitted" in the reward.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardRate {
    /// `log2(1 + γ_min)` when every constraint holds.
    #[default]
    Threshold,
    /// `log2(1 + snr)` when every constraint holds.
    Achievable,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SystemConfig {
    /// AP antennas.
    pub m: usize,
    /// IRS elements.
    pub n: usize,
    pub snr_min_db: f64,
    pub noise_w: f64,
    /// Energy-harvesting efficiency.
    pub eta: f64,
    /// IRS power demand.
    pub p_irs_w: f64,
    /// AP transmit power cap.
    pub p_max_w: f64,
    /// Constant power added to the reward denominator.
    pub p_circuit_w: f64,
    pub discount: f64,
    pub episode_len: usize,
    #[serde(default)]
    pub reward_rate: RewardRate,
}

impl Default for SystemConfig {
    fn default() -> Self {
        SystemConfig {
            m: 4,
            n: 20,
            snr_min_db: 10.0,
            noise_w: 1e-11,
            eta: 0.5,
            p_irs_w: 0.0,
            p_max_w: 1.0,
            p_circuit_w: 1e-3,
            discount: 0.95,
            episode_len: 100,
            reward_rate: RewardRate::Threshold,
        }
    }
}

impl SystemConfig {
    pub fn gamma_min(&self) -> f64 {
        10f64.powf(self.snr_min_db / 10.0)
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.n == 0 {
            return Err(validation("m and n must be >= 1"));
        }
        for (name, v) in [
            ("p_irs_w", self.p_irs_w),
            ("p_max_w", self.p_max_w),
            ("p_circuit_w", self.p_circuit_w),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(validation(format!("{name} must be >= 0, got {v}")));
            }
        }
        if !(self.noise_w > 0.0) {
            return Err(validation("noise_w must be > 0"));
        }
        if !(self.eta > 0.0 && self.eta <= 1.0) {
            return Err(validation("eta must be in (0, 1]"));
        }
        if !(0.0..1.0).contains(&self.discount) {
            return Err(validation("discount must be in [0, 1)"));
        }
        if self.episode_len == 0 {
            return Err(validation("episode_len must be >= 1"));
        }
        if !self.snr_min_db.is_finite() {
            return Err(validation("snr_min_db must be finite"));
        }
        Ok(())
    }
}

/// Joint control: power-splitting ratio, AP beamformer, IRS phases.
#[derive(Clone, Debug, PartialEq)]
pub struct Action {
    pub rho: f64,
    pub w: CVec,
    pub theta: Vec<f64>,
}

impl Action {
    /// Checked constructor; phases are wrapped into `[0, 2π)`.
    pub fn new(rho: f64, w: CVec, theta: Vec<f64>, p_max_w: f64) -> Result<Self> {
        let a = Action {
            rho,
            w,
            theta: theta.into_iter().map(wrap_phase).collect(),
        };
        a.validate(p_max_w)?;
        Ok(a)
    }

    pub fn validate(&self, p_max_w: f64) -> Result<()> {
        if !(0.0..=1.0).contains(&self.rho) {
            return Err(validation(format!("rho {} outside [0, 1]", self.rho)));
        }
        if !self.w.is_finite() {
            return Err(validation("beamformer has non-finite entries"));
        }
        if self.w.norm_sqr() > p_max_w * (1.0 + FEAS_RTOL) {
            return Err(validation(format!(
                "transmit power {} exceeds cap {p_max_w}",
                self.w.norm_sqr()
            )));
        }
        if self.theta.iter().any(|t| !t.is_finite()) {
            return Err(validation("non-finite phase"));
        }
        Ok(())
    }
}

/// Composite channel `g` with `gᴴ = h_dᴴ + √ρ · h_rᴴ · diag(e^{jθ}) · H`.
pub fn composite_channel(ch: ChannelView<'_>, theta: &[f64], rho: f64) -> CVec {
    let m = ch.m();
    let sr = rho.sqrt();
    let mut g = ch.h_d.clone();
    if sr == 0.0 {
        return g;
    }
    for (n, &t) in theta.iter().enumerate() {
        // conj of (conj(h_r,n) e^{jθ_n}) scales row n of H
        let coeff = (ch.h_r[n].conj() * C64::from_polar(1.0, t)).conj() * sr;
        let row = ch.h.row(n);
        for k in 0..m {
            g[k] += coeff * row[k].conj();
        }
    }
    g
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub snr_linear: f64,
    pub harvested_w: f64,
    pub p_tx_w: f64,
    pub feasible: bool,
}

pub fn evaluate(action: &Action, ch: ChannelView<'_>, cfg: &SystemConfig) -> Evaluation {
    let g = composite_channel(ch, &action.theta, action.rho);
    let snr_linear = g.dot(&action.w).norm_sqr() / cfg.noise_w;
    let incident = ch.h.mul_vec(&action.w).norm_sqr();
    let harvested_w = cfg.eta * (1.0 - action.rho) * incident;
    let p_tx_w = action.w.norm_sqr();
    let feasible = snr_linear >= cfg.gamma_min() * (1.0 - FEAS_RTOL)
        && harvested_w >= cfg.p_irs_w * (1.0 - FEAS_RTOL)
        && p_tx_w <= cfg.p_max_w * (1.0 + FEAS_RTOL)
        && snr_linear > 0.0;
    Evaluation {
        snr_linear,
        harvested_w,
        p_tx_w,
        feasible,
    }
}

/// Delivered bits per joule: rate when feasible (else 0) over total power.
pub fn compute_reward(eval: &Evaluation, cfg: &SystemConfig) -> f64 {
    if !eval.feasible {
        return 0.0;
    }
    let rate = match cfg.reward_rate {
        RewardRate::Threshold => (1.0 + cfg.gamma_min()).log2(),
        RewardRate::Achievable => (1.0 + eval.snr_linear).log2(),
    };
    rate / (eval.p_tx_w + cfg.p_circuit_w)
}

/// Snap phases to `2^phase_bits` uniform levels and ρ to `rho_levels`
/// uniform levels on `[0, 1]`; exact ties go to the smaller level.
pub fn quantize_action(action: &Action, phase_bits: u32, rho_levels: usize) -> Result<Action> {
    if phase_bits == 0 || phase_bits > 52 {
        return Err(validation("phase_bits must be in 1..=52"));
    }
    if rho_levels < 2 {
        return Err(validation("rho_levels must be >= 2"));
    }
    let levels = 1u64 << phase_bits;
    let step = std::f64::consts::TAU / levels as f64;
    let theta = action
        .theta
        .iter()
        .map(|&t| {
            let k = nearest_index(wrap_phase(t) / step) % levels;
            k as f64 * step
        })
        .collect();
    let span = (rho_levels - 1) as f64;
    let j = nearest_index(action.rho.clamp(0.0, 1.0) * span);
    Ok(Action {
        rho: (j as f64 / span).min(1.0),
        w: action.w.clone(),
        theta,
    })
}

fn nearest_index(x: f64) -> u64 {
    let lo = x.floor();
    if x - lo > 0.5 {
        lo as u64 + 1
    } else {
        lo as u64
    }
}

/// Observation vector fed to the agents.
#[derive(Clone, Debug, PartialEq)]
pub struct State(pub Vec<f64>);

impl State {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn state_len(m: usize, n: usize) -> usize {
    2 * m + 2 * n * m + 2
}

/// Which observation the environment emits.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StateEncoding {
    /// Every channel coefficient, see [`build_state`].
    #[default]
    Full,
    /// Fixed-length channel-strength summary, see [`build_compact_state`].
    Compact,
}

pub const COMPACT_STATE_LEN: usize = 7;

impl StateEncoding {
    pub fn len(self, m: usize, n: usize) -> usize {
        match self {
            StateEncoding::Full => state_len(m, n),
            StateEncoding::Compact => COMPACT_STATE_LEN,
        }
    }

    pub fn build(self, ch: &ChannelRealization, prev_rho: f64, prev_reward_norm: f64) -> State {
        match self {
            StateEncoding::Full => build_state(ch, prev_rho, prev_reward_norm),
            StateEncoding::Compact => build_compact_state(ch, prev_rho, prev_reward_norm),
        }
    }
}

/// Features: scaled `est_h_d` (Re block, Im block), scaled cascaded
/// coefficients `conj(est_h_r,n)·est_H[n,m]` (Re block, Im block), then the
/// previous ρ and previous normalized reward.
pub fn build_state(ch: &ChannelRealization, prev_rho: f64, prev_reward_norm: f64) -> State {
    let est = ch.estimate();
    let (m, n) = (est.m(), est.n());
    let sd = 1.0 / ch.gains.direct.sqrt();
    let sc = 1.0 / (ch.gains.ap_irs * ch.gains.irs_user).sqrt();
    let mut f = Vec::with_capacity(state_len(m, n));
    f.extend(est.h_d.iter().map(|z| z.re * sd));
    f.extend(est.h_d.iter().map(|z| z.im * sd));
    let cascade: Vec<C64> = (0..n)
        .flat_map(|i| {
            let hr = est.h_r[i].conj();
            est.h.row(i).iter().map(move |&x| hr * x * sc)
        })
        .collect();
    f.extend(cascade.iter().map(|z| z.re));
    f.extend(cascade.iter().map(|z| z.im));
    f.push(prev_rho);
    f.push(prev_reward_norm);
    State(f)
}

/// Size-independent features of the estimates, each scaled to order one:
/// per-antenna direct energy, per-coefficient AP→IRS and IRS→user energy,
/// coherent reflected amplitude and AP→IRS energy along the direct MRT
/// direction, then the previous ρ and previous normalized reward.
pub fn build_compact_state(ch: &ChannelRealization, prev_rho: f64, prev_reward_norm: f64) -> State {
    let est = ch.estimate();
    let (m, n) = (est.m() as f64, est.n() as f64);
    let g = ch.gains;
    let direct = est.h_d.norm_sqr() / (m * g.direct);
    let ap_irs = est.h.norm_sqr() / (n * m * g.ap_irs);
    let irs_user = est.h_r.norm_sqr() / (n * g.irs_user);
    let (coherent, along) = match est.h_d.normalized() {
        Some(w0) => {
            let hw = est.h.mul_vec(&w0);
            let amp: f64 = est.h_r.iter().zip(hw.iter()).map(|(a, b)| a.norm() * b.norm()).sum();
            (
                amp / (n * (g.ap_irs * g.irs_user).sqrt()),
                hw.norm_sqr() / (n * g.ap_irs),
            )
        }
        None => (0.0, 0.0),
    };
    State(vec![
        direct,
        ap_irs,
        irs_user,
        coherent,
        along,
        prev_rho,
        prev_reward_norm,
    ])
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub p_tx_w: f64,
    pub snr_linear: f64,
    pub harvested_w: f64,
    pub feasible: bool,
}

#[derive(Clone, Debug)]
pub struct StepOutcome {
    /// Raw reward.
    pub reward: f64,
    /// Reward divided by the running maximum.
    pub reward_norm: f64,
    pub next_state: State,
    pub done: bool,
    pub info: StepInfo,
}

/// Running maximum of observed rewards.
#[derive(Clone, Copy, Debug, Default)]
pub struct RewardScale {
    max: f64,
}

impl RewardScale {
    pub fn observe(&mut self, r: f64) {
        if r.is_finite() && r > self.max {
            self.max = r;
        }
    }

    pub fn normalize(&self, r: f64) -> f64 {
        if self.max > 0.0 {
            r / self.max
        } else {
            0.0
        }
    }

    pub fn max(&self) -> f64 {
        self.max
    }
}

/// One stateful, single-threaded environment instance.
pub struct Env {
    cfg: SystemConfig,
    geom: Geometry,
    params: ChannelParams,
    rng: RngStream,
    channels: Option<ChannelRealization>,
    t: usize,
    prev_rho: f64,
    prev_reward_norm: f64,
    scale: RewardScale,
    encoding: StateEncoding,
}

impl Env {
    pub fn new(
        cfg: SystemConfig,
        geom: Geometry,
        params: ChannelParams,
        rng: RngStream,
    ) -> Result<Self> {
        cfg.validate()?;
        geom.validate()?;
        params.validate()?;
        Ok(Env {
            cfg,
            geom,
            params,
            rng,
            channels: None,
            t: 0,
            prev_rho: 0.0,
            prev_reward_norm: 0.0,
            scale: RewardScale::default(),
            encoding: StateEncoding::Full,
        })
    }

    pub fn config(&self) -> &SystemConfig {
        &self.cfg
    }

    pub fn channel_params(&self) -> &ChannelParams {
        &self.params
    }

    pub fn state_len(&self) -> usize {
        self.encoding.len(self.cfg.m, self.cfg.n)
    }

    pub fn state_encoding(&self) -> StateEncoding {
        self.encoding
    }

    /// Takes effect from the next observation.
    pub fn set_state_encoding(&mut self, encoding: StateEncoding) {
        self.encoding = encoding;
    }

    /// Fresh channels, step counter 0, previous-action features zeroed.
    pub fn reset(&mut self) -> Result<State> {
        let ch = sample_channels(
            &self.geom,
            &self.params,
            self.cfg.m,
            self.cfg.n,
            &mut self.rng,
        )?;
        self.t = 0;
        self.prev_rho = 0.0;
        self.prev_reward_norm = 0.0;
        let s = self.encoding.build(&ch, 0.0, 0.0);
        self.channels = Some(ch);
        Ok(s)
    }

    pub fn channels(&self) -> Option<&ChannelRealization> {
        self.channels.as_ref()
    }

    pub fn steps_taken(&self) -> usize {
        self.t
    }

    pub fn is_done(&self) -> bool {
        self.t >= self.cfg.episode_len
    }

    pub fn observe_reward(&mut self, r: f64) {
        self.scale.observe(r);
    }

    pub fn normalize_reward(&self, r: f64) -> f64 {
        self.scale.normalize(r)
    }

    pub fn reward_scale(&self) -> RewardScale {
        self.scale
    }

    /// Current observation with the previous-action features overridden.
    pub fn state_with(&self, rho: f64, reward_norm: f64) -> Result<State> {
        let ch = self
            .channels
            .as_ref()
            .ok_or_else(|| Error::State("environment not reset".into()))?;
        Ok(self.encoding.build(ch, rho, reward_norm))
    }

    pub fn step(&mut self, action: &Action) -> Result<StepOutcome> {
        let ch = self
            .channels
            .as_ref()
            .ok_or_else(|| Error::State("step called before reset".into()))?;
        if self.t >= self.cfg.episode_len {
            return Err(Error::State(format!(
                "episode finished after {} steps",
                self.cfg.episode_len
            )));
        }
        if action.w.len() != self.cfg.m || action.theta.len() != self.cfg.n {
            return Err(validation("action shape does not match (M, N)"));
        }
        action.validate(self.cfg.p_max_w)?;

        let eval = evaluate(action, ch.truth(), &self.cfg);
        let reward = compute_reward(&eval, &self.cfg);
        self.scale.observe(reward);
        let reward_norm = self.scale.normalize(reward);

        let next = evolve_channels(ch, &self.params, &mut self.rng);
        self.t += 1;
        self.prev_rho = action.rho;
        self.prev_reward_norm = reward_norm;
        let next_state = self.encoding.build(&next, action.rho, reward_norm);
        self.channels = Some(next);

        Ok(StepOutcome {
            reward,
            reward_norm,
            next_state,
            done: self.t >= self.cfg.episode_len,
            info: StepInfo {
                p_tx_w: eval.p_tx_w,
                snr_linear: eval.snr_linear,
                harvested_w: eval.harvested_w,
                feasible: eval.feasible,
            },
        })
    }
}
