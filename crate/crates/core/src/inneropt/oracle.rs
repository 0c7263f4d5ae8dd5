//! Brute-force references for the two-constraint power minimization.
//!
//! These share no code with the direction search: they evaluate
//! `max(c1/|gᴴd|², c2/‖Hd‖²)` directly over explicit direction sets.

use std::f64::consts::{FRAC_PI_2, TAU};

use crate::env::SystemConfig;
use crate::numerics::{CMat, CVec, RngStream, C64};

/// One synthetic instance of `min ‖w‖² s.t. |gᴴw|² ≥ c1, ‖Hw‖² ≥ c2`.
#[derive(Clone, Debug)]
pub struct PowerInstance {
    pub g: CVec,
    pub h: CMat,
    pub c1: f64,
    pub c2: f64,
}

fn power_along(inst: &PowerInstance, d: &[C64]) -> f64 {
    let mut gd = C64::new(0.0, 0.0);
    for (gi, di) in inst.g.iter().zip(d) {
        gd += gi.conj() * di;
    }
    let mut hd = 0.0;
    for r in 0..inst.h.rows() {
        let row = inst.h.row(r);
        let mut acc = C64::new(0.0, 0.0);
        for (a, b) in row.iter().zip(d) {
            acc += a * b;
        }
        hd += acc.norm_sqr();
    }
    let p1 = inst.c1 / gd.norm_sqr();
    let p2 = if inst.c2 == 0.0 { 0.0 } else { inst.c2 / hd };
    p1.max(p2)
}

impl PowerInstance {
    /// Draw an instance where both constraints bind at the optimum: the
    /// maximum-ratio beam misses the harvesting level, and the pure
    /// harvesting beam misses the SNR level. Needs `m >= 2`: with a single
    /// antenna both beams coincide.
    pub fn random_both_active(rng: &mut RngStream, m: usize, n: usize) -> PowerInstance {
        assert!(m >= 2, "both constraints can only bind with m >= 2");
        loop {
            let g: CVec = (0..m).map(|_| rng.cn()).collect();
            let h = CMat::from_fn(n, m, |_, _| rng.cn());
            let c1 = 1.0;
            let mrt = g.scaled_re(1.0 / g.norm_sqr());
            let harvest_at_mrt = h.mul_vec(&mrt).norm_sqr();
            let c2 = harvest_at_mrt * (1.5 + 3.0 * rng.uniform());
            let inst = PowerInstance { g, h, c1, c2 };
            // harvesting-only optimum: top right-singular direction of H
            let (lam, v) = top_right_singular(&inst.h);
            let w = v.scaled_re((c2 / lam).sqrt());
            if inst.g.dot(&w).norm_sqr() < c1 {
                return inst;
            }
        }
    }

    /// Instance with no harvesting demand.
    pub fn random_snr_only(rng: &mut RngStream, m: usize, n: usize) -> PowerInstance {
        let g: CVec = (0..m).map(|_| rng.cn()).collect();
        let h = CMat::from_fn(n, m, |_, _| rng.cn());
        PowerInstance {
            g,
            h,
            c1: 0.5 + rng.uniform(),
            c2: 0.0,
        }
    }

    pub fn power(&self, d: &CVec) -> f64 {
        power_along(self, d.as_slice())
    }

    /// A system configuration whose constraint levels at ρ = 0 are exactly
    /// `c1` and `c2`.
    pub fn system_config(&self) -> SystemConfig {
        SystemConfig {
            m: self.g.len(),
            n: self.h.rows(),
            snr_min_db: 10.0 * self.c1.log10(),
            noise_w: 1.0,
            eta: 1.0,
            p_irs_w: self.c2,
            p_max_w: 1e12,
            ..SystemConfig::default()
        }
    }
}

/// Plain power iteration with many fixed sweeps (used only to build instances).
fn top_right_singular(h: &CMat) -> (f64, CVec) {
    let gram = h.gram();
    let mut v: CVec = (0..gram.rows()).map(|k| C64::new(1.0 + k as f64, 0.3)).collect();
    let mut lam = 0.0;
    for _ in 0..2000 {
        let next = gram.mul_vec(&v);
        lam = next.norm();
        v = next.scaled_re(1.0 / lam);
    }
    (lam, v)
}

/// Dense grid over the complex unit sphere in C² with the global phase
/// fixed: `d = (cos a, sin a·e^{jφ})`, `a ∈ [0, π/2]`, `φ ∈ [0, 2π)`,
/// followed by three zoomed re-grids around the best point.
pub fn dense_grid_m2(inst: &PowerInstance, points: usize) -> f64 {
    assert_eq!(inst.g.len(), 2, "dense grid oracle is for M = 2");
    let eval = |a: f64, phi: f64| {
        let d = [C64::new(a.cos(), 0.0), C64::from_polar(a.sin(), phi)];
        power_along(inst, &d)
    };
    let mut best = (f64::INFINITY, 0.0, 0.0);
    for i in 0..points {
        let a = FRAC_PI_2 * i as f64 / (points - 1) as f64;
        for j in 0..points {
            let phi = TAU * j as f64 / points as f64;
            let p = eval(a, phi);
            if p < best.0 {
                best = (p, a, phi);
            }
        }
    }
    let mut span_a = FRAC_PI_2 / (points - 1) as f64;
    let mut span_phi = TAU / points as f64;
    for _ in 0..3 {
        let (_, a0, phi0) = best;
        let k = 40;
        for i in 0..=k {
            let a = (a0 - span_a + 2.0 * span_a * i as f64 / k as f64).clamp(0.0, FRAC_PI_2);
            for j in 0..=k {
                let phi = phi0 - span_phi + 2.0 * span_phi * j as f64 / k as f64;
                let p = eval(a, phi);
                if p < best.0 {
                    best = (p, a, phi);
                }
            }
        }
        span_a /= 10.0;
        span_phi /= 10.0;
    }
    best.0
}

/// Best of `restarts` local searches from Gaussian starting points.
///
/// Each local search is a pattern search over the `2M` real coordinates of
/// an unnormalized direction, polling ± each coordinate axis plus `2M` random
/// directions, doubling the step after a success and halving it after a failure.
pub fn random_restart_descent(inst: &PowerInstance, restarts: usize, rng: &mut RngStream) -> f64 {
    let m = inst.g.len();
    let dim = 2 * m;
    let obj = |x: &[f64]| {
        let nrm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
        if nrm == 0.0 {
            return f64::INFINITY;
        }
        let d: Vec<C64> = (0..m)
            .map(|k| C64::new(x[2 * k] / nrm, x[2 * k + 1] / nrm))
            .collect();
        power_along(inst, &d)
    };
    let mut best = f64::INFINITY;
    for _ in 0..restarts {
        let mut x: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
        let mut fx = obj(&x);
        let mut step = 0.5;
        while step > 1e-8 {
            let mut improved = false;
            let mut polls: Vec<Vec<f64>> = Vec::with_capacity(4 * dim);
            for k in 0..dim {
                for s in [1.0, -1.0] {
                    let mut e = vec![0.0; dim];
                    e[k] = s;
                    polls.push(e);
                }
            }
            for _ in 0..2 * dim {
                let r: Vec<f64> = (0..dim).map(|_| rng.normal()).collect();
                let rn = r.iter().map(|v| v * v).sum::<f64>().sqrt();
                polls.push(r.into_iter().map(|v| v / rn).collect());
            }
            for dir in &polls {
                let cand: Vec<f64> = x.iter().zip(dir).map(|(a, b)| a + step * b).collect();
                let fc = obj(&cand);
                if fc < fx {
                    // the objective is scale-free; keep x on the unit sphere
                    let nrm = cand.iter().map(|v| v * v).sum::<f64>().sqrt();
                    x = cand.into_iter().map(|v| v / nrm).collect();
                    fx = fc;
                    improved = true;
                    break;
                }
            }
            // expand after a success so ridges are followed in few polls
            step *= if improved { 2.0 } else { 0.5 };
            step = step.min(0.5);
        }
        best = best.min(fx);
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracles_agree_at_m2() {
        let mut rng = RngStream::new(21, 1);
        for _ in 0..5 {
            let inst = PowerInstance::random_both_active(&mut rng, 2, 4);
            let grid = dense_grid_m2(&inst, 200);
            let rr = random_restart_descent(&inst, 50, &mut rng);
            assert!((grid - rr).abs() <= 1e-3 * grid, "{grid} vs {rr}");
        }
    }

    #[test]
    fn snr_only_matches_closed_form() {
        let mut rng = RngStream::new(22, 1);
        let inst = PowerInstance::random_snr_only(&mut rng, 2, 3);
        let exact = inst.c1 / inst.g.norm_sqr();
        let grid = dense_grid_m2(&inst, 200);
        assert!((grid - exact).abs() <= 1e-6 * exact);
    }
}
