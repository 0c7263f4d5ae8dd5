//! Model-based inner optimization: heuristic phase alignment, exact
//! two-constraint transmit-power minimization, the candidate action for a
//! given power-splitting ratio, and an alternating-optimization baseline.
//!
//! The active-beamforming problem
//!
//! ```text
//! minimize ‖w‖²  s.t.  |gᴴw|² ≥ c1,  ‖Hw‖² ≥ c2
//! ```
//!
//! has exactly two quadratic constraints, so its semidefinite relaxation is
//! tight and an optimal `w` is a top eigenvector of `λ1·ggᴴ + λ2·HᴴH` for some
//! multipliers. Writing `w = s·d` with `‖d‖ = 1`, the least power along `d` is
//! `s²(d) = max(c1/dᴴAd, c2/dᴴBd)`, and normalizing the multipliers leaves a
//! one-parameter family `d(t)` which we search directly.

pub mod oracle;

use std::time::Instant;

use crate::channel::{ChannelRealization, ChannelView};
use crate::env::{composite_channel, compute_reward, evaluate, Action, SystemConfig};
use crate::error::Result;
use crate::numerics::{top_eigpair, top_eigpair_from, wrap_phase, CMat, CVec};

/// Grid resolution over the multiplier ratio `t ∈ [0, 1]`.
pub const DIRECTION_GRID: usize = 64;
/// Final bracket width of the golden-section refinement.
pub const GOLDEN_WIDTH: f64 = 1e-4;
/// Convergence tolerance passed to the eigen-solver.
pub const EIG_TOL: f64 = 1e-10;

const AO_MAX_ITERS: usize = 50;
const AO_REL_TOL: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct InnerSolution {
    pub rho: f64,
    pub w: CVec,
    pub theta: Vec<f64>,
    pub p_tx_w: f64,
    pub feasible: bool,
    pub reward: f64,
}

impl InnerSolution {
    pub fn action(&self) -> Action {
        Action {
            rho: self.rho,
            w: self.w.clone(),
            theta: self.theta.clone(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct AoResult {
    pub solution: InnerSolution,
    pub rho: f64,
    pub iterations: usize,
    pub wall_time_s: f64,
    /// Accepted objective values of the winning ρ, in order.
    pub objective_trace: Vec<f64>,
}

impl AoResult {
    pub fn feasible(&self) -> bool {
        self.solution.feasible
    }
}

/// Phases that make every reflected term co-phased with `h_dᴴw` for the
/// given transmit direction `w`.
pub fn align_phases_to(ch: ChannelView<'_>, w: &CVec) -> Vec<f64> {
    let hw = ch.h.mul_vec(w);
    let reference = ch.h_d.dot(w).arg();
    (0..ch.n())
        .map(|n| wrap_phase(reference - (ch.h_r[n].conj() * hw[n]).arg()))
        .collect()
}

/// Heuristic passive beamforming that reinforces the direct link.
///
/// Reference direction `w0 = h_d/‖h_d‖`; with a zero direct channel it falls
/// back to the top right-singular direction of `H`.
pub fn align_phases(ch: ChannelView<'_>) -> Vec<f64> {
    let w0 = match ch.h_d.normalized() {
        Some(w0) => w0,
        None => match top_eigpair(&ch.h.gram(), EIG_TOL) {
            Ok(e) => e.vector,
            Err(_) => return vec![0.0; ch.n()],
        },
    };
    align_phases_to(ch, &w0)
}

/// Constants of the two constraints for a given configuration and ρ.
pub fn constraint_levels(cfg: &SystemConfig, rho: f64) -> (f64, f64) {
    let c1 = cfg.gamma_min() * cfg.noise_w;
    let c2 = if cfg.p_irs_w == 0.0 {
        0.0
    } else if rho >= 1.0 {
        f64::INFINITY
    } else {
        cfg.p_irs_w / (cfg.eta * (1.0 - rho))
    };
    (c1, c2)
}

struct DirectionSearch<'a> {
    g: &'a CVec,
    h: &'a CMat,
    a_norm: CMat,
    b_norm: CMat,
    c1: f64,
    c2: f64,
}

impl DirectionSearch<'_> {
    fn power(&self, d: &CVec) -> f64 {
        let snr_gain = self.g.dot(d).norm_sqr();
        let harvest_gain = self.h.mul_vec(d).norm_sqr();
        let p1 = if snr_gain > 0.0 {
            self.c1 / snr_gain
        } else {
            f64::INFINITY
        };
        let p2 = if self.c2 == 0.0 {
            0.0
        } else if harvest_gain > 0.0 {
            self.c2 / harvest_gain
        } else {
            f64::INFINITY
        };
        p1.max(p2)
    }

    fn direction(&self, t: f64, warm: Option<&CVec>) -> Result<CVec> {
        let mix = self.a_norm.lin_comb(1.0 - t, &self.b_norm, t);
        Ok(top_eigpair_from(&mix, EIG_TOL, warm)?.vector)
    }

    /// Best `(power, direction)` over the grid plus golden-section refinement.
    fn run(&self) -> Result<(f64, CVec)> {
        let mut dirs: Vec<CVec> = Vec::with_capacity(DIRECTION_GRID);
        let mut powers = Vec::with_capacity(DIRECTION_GRID);
        for i in 0..DIRECTION_GRID {
            let t = i as f64 / (DIRECTION_GRID - 1) as f64;
            let d = self.direction(t, dirs.last())?;
            powers.push(self.power(&d));
            dirs.push(d);
        }
        let best = (0..DIRECTION_GRID)
            .min_by(|&i, &j| powers[i].total_cmp(&powers[j]))
            .unwrap();
        let step = 1.0 / (DIRECTION_GRID - 1) as f64;
        let mut lo = (best as f64 - 1.0).max(0.0) * step;
        let mut hi = (best as f64 + 1.0).min((DIRECTION_GRID - 1) as f64) * step;
        let mut best_p = powers[best];
        let mut best_d = dirs[best].clone();

        let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
        let mut x1 = hi - inv_phi * (hi - lo);
        let mut x2 = lo + inv_phi * (hi - lo);
        let mut d1 = self.direction(x1, Some(&best_d))?;
        let mut d2 = self.direction(x2, Some(&best_d))?;
        let mut f1 = self.power(&d1);
        let mut f2 = self.power(&d2);
        while hi - lo > GOLDEN_WIDTH {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                d2 = d1.clone();
                f2 = f1;
                x1 = hi - inv_phi * (hi - lo);
                d1 = self.direction(x1, Some(&d2))?;
                f1 = self.power(&d1);
            } else {
                lo = x1;
                x1 = x2;
                d1 = d2.clone();
                f1 = f2;
                x2 = lo + inv_phi * (hi - lo);
                d2 = self.direction(x2, Some(&d1))?;
                f2 = self.power(&d2);
            }
        }
        for (f, d) in [(f1, d1), (f2, d2)] {
            if f < best_p {
                best_p = f;
                best_d = d;
            }
        }
        Ok((best_p, best_d))
    }
}

/// Minimum-power active beamformer for composite channel `g` and AP→IRS
/// channel `h` at fixed ρ, with `theta` carried into the solution.
///
/// Tries the maximum-ratio closed form first and falls back to the direction
/// search when it misses the harvesting constraint. The returned beamformer
/// never exceeds `p_max_w`; when the requirement does, it is clipped and the
/// solution is marked infeasible.
pub fn solve_active(
    g: &CVec,
    h: &CMat,
    rho: f64,
    theta: Vec<f64>,
    cfg: &SystemConfig,
) -> Result<InnerSolution> {
    let (c1, c2) = constraint_levels(cfg, rho);
    let infeasible = |w: CVec, theta: Vec<f64>| {
        let p = w.norm_sqr();
        InnerSolution {
            rho,
            w,
            theta,
            p_tx_w: p,
            feasible: false,
            reward: 0.0,
        }
    };

    let g_norm_sq = g.norm_sqr();
    if g_norm_sq == 0.0 {
        return Ok(infeasible(CVec::zeros(g.len()), theta));
    }
    let mrt = g.scaled_re(c1.sqrt() / g_norm_sq);

    let (power, w) = if c2 == 0.0 || h.mul_vec(&mrt).norm_sqr() >= c2 {
        (c1 / g_norm_sq, mrt)
    } else if !c2.is_finite() || h.norm_sqr() == 0.0 {
        return Ok(infeasible(clip_power(mrt, cfg.p_max_w), theta));
    } else {
        let search = DirectionSearch {
            g,
            h,
            a_norm: CMat::outer(g).scaled_re(1.0 / g_norm_sq),
            b_norm: h.gram().scaled_re(1.0 / h.norm_sqr()),
            c1,
            c2,
        };
        let (p, d) = search.run()?;
        if !p.is_finite() {
            return Ok(infeasible(CVec::zeros(g.len()), theta));
        }
        (p, d.scaled_re(p.sqrt()))
    };

    if power > cfg.p_max_w * (1.0 + crate::env::FEAS_RTOL) {
        return Ok(infeasible(clip_power(w, cfg.p_max_w), theta));
    }
    Ok(InnerSolution {
        rho,
        p_tx_w: w.norm_sqr(),
        w,
        theta,
        feasible: true,
        reward: 0.0,
    })
}

fn clip_power(w: CVec, p_max: f64) -> CVec {
    let p = w.norm_sqr();
    if p > p_max && p > 0.0 {
        w.scaled_re((p_max / p).sqrt())
    } else {
        w
    }
}

/// Candidate `(w', θ')` for ρ, designed on the estimates and scored on the
/// true channels. `feasible` reports true-channel feasibility.
pub fn optimize_given_rho(
    rho: f64,
    ch: &ChannelRealization,
    cfg: &SystemConfig,
) -> Result<InnerSolution> {
    let rho = rho.clamp(0.0, 1.0);
    let est = ch.estimate();
    let theta = align_phases(est);
    let g = composite_channel(est, &theta, rho);
    let mut sol = solve_active(&g, est.h, rho, theta, cfg)?;
    score_on_truth(&mut sol, ch, cfg);
    Ok(sol)
}

fn score_on_truth(sol: &mut InnerSolution, ch: &ChannelRealization, cfg: &SystemConfig) {
    let eval = evaluate(&sol.action(), ch.truth(), cfg);
    sol.p_tx_w = eval.p_tx_w;
    sol.feasible = sol.feasible && eval.feasible;
    sol.reward = if sol.feasible {
        compute_reward(&eval, cfg)
    } else {
        0.0
    };
}

fn objective(sol: &InnerSolution) -> f64 {
    if sol.feasible {
        sol.p_tx_w
    } else {
        f64::INFINITY
    }
}

/// Alternating optimization over a uniform ρ grid: per-element phase
/// updates against the direct term, then `solve_active`, keeping a block
/// update only when transmit power does not increase.
pub fn ao_baseline(ch: &ChannelRealization, cfg: &SystemConfig, rho_grid: usize) -> Result<AoResult> {
    if rho_grid < 2 {
        return Err(crate::error::validation("rho_grid must be >= 2"));
    }
    let start = Instant::now();
    let est = ch.estimate();
    let mut iterations = 0;
    let mut best: Option<(InnerSolution, Vec<f64>)> = None;

    for j in 0..rho_grid {
        let rho = j as f64 / (rho_grid - 1) as f64;
        let theta = align_phases(est);
        let g = composite_channel(est, &theta, rho);
        let mut cur = solve_active(&g, est.h, rho, theta, cfg)?;
        let mut trace = vec![objective(&cur)];

        for _ in 0..AO_MAX_ITERS {
            iterations += 1;
            let theta = align_phases_to(est, &cur.w);
            let g = composite_channel(est, &theta, rho);
            let cand = solve_active(&g, est.h, rho, theta, cfg)?;
            let (old, new) = (objective(&cur), objective(&cand));
            if new > old || !new.is_finite() {
                break;
            }
            cur = cand;
            trace.push(new);
            if (old - new) <= AO_REL_TOL * old {
                break;
            }
        }

        let better = match &best {
            None => true,
            Some((b, _)) => objective(&cur) < objective(b) * (1.0 - 1e-12),
        };
        if better {
            best = Some((cur, trace));
        }
    }

    let (mut solution, objective_trace) = best.expect("rho_grid >= 2");
    score_on_truth(&mut solution, ch, cfg);
    Ok(AoResult {
        rho: solution.rho,
        solution,
        iterations,
        wall_time_s: start.elapsed().as_secs_f64(),
        objective_trace,
    })
}

/// Power needed along unit direction `d`, exposed for diagnostics.
pub fn required_power(g: &CVec, h: &CMat, c1: f64, c2: f64, d: &CVec) -> f64 {
    let s = DirectionSearch {
        g,
        h,
        a_norm: CMat::zeros(0, 0),
        b_norm: CMat::zeros(0, 0),
        c1,
        c2,
    };
    s.power(d)
}
