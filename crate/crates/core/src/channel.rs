//! Channel generation: log-distance path loss, Rayleigh/Rician fading,
//! Gauss-Markov evolution, and bounded estimation errors.

use serde::{Deserialize, Serialize};

use crate::error::{validation, Result};
use crate::numerics::{CMat, CVec, RngStream, C64};

/// Link distances in meters. The three are independent configuration values.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Geometry {
    pub d_ap_user: f64,
    pub d_ap_irs: f64,
    pub d_irs_user: f64,
}

impl Default for Geometry {
    fn default() -> Self {
        Geometry {
            d_ap_user: 20.0,
            d_ap_irs: 10.0,
            d_irs_user: 5.0,
        }
    }
}

impl Geometry {
    pub fn new(d_ap_user: f64, d_ap_irs: f64, d_irs_user: f64) -> Result<Self> {
        let g = Geometry {
            d_ap_user,
            d_ap_irs,
            d_irs_user,
        };
        g.validate()?;
        Ok(g)
    }

    /// IRS at horizontal offset `x` from the AP along the AP–User segment,
    /// raised `height` meters above it.
    pub fn planar(d_ap_user: f64, x: f64, height: f64) -> Result<Self> {
        if !(x > 0.0 && x < d_ap_user) {
            return Err(validation(format!(
                "IRS position {x} must lie strictly inside (0, {d_ap_user})"
            )));
        }
        Geometry::new(
            d_ap_user,
            x.hypot(height),
            (d_ap_user - x).hypot(height),
        )
    }

    pub fn validate(&self) -> Result<()> {
        for (name, d) in [
            ("d_ap_user", self.d_ap_user),
            ("d_ap_irs", self.d_ap_irs),
            ("d_irs_user", self.d_irs_user),
        ] {
            if !(d > 0.0 && d.is_finite()) {
                return Err(validation(format!("{name} must be positive, got {d}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChannelParams {
    /// Path loss at the 1 m reference distance, dB.
    pub l0_db: f64,
    /// Path-loss exponent.
    pub alpha: f64,
    /// Per-step Gauss-Markov correlation.
    pub corr: f64,
    /// Relative radius of the estimation-error ball.
    pub eps: f64,
    /// Rician K-factor (linear). Zero gives Rayleigh fading.
    #[serde(default)]
    pub rician_k: f64,
}

impl Default for ChannelParams {
    fn default() -> Self {
        ChannelParams {
            l0_db: 30.0,
            alpha: 3.5,
            corr: 0.95,
            eps: 0.0,
            rician_k: 0.0,
        }
    }
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.l0_db > 0.0) {
            return Err(validation(format!("l0_db must be > 0, got {}", self.l0_db)));
        }
        if !(self.alpha >= 2.0) {
            return Err(validation(format!("alpha must be >= 2, got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.corr) {
            return Err(validation(format!("corr must be in [0,1], got {}", self.corr)));
        }
        if !(0.0..1.0).contains(&self.eps) {
            return Err(validation(format!("eps must be in [0,1), got {}", self.eps)));
        }
        if !(self.rician_k >= 0.0 && self.rician_k.is_finite()) {
            return Err(validation(format!(
                "rician_k must be >= 0, got {}",
                self.rician_k
            )));
        }
        Ok(())
    }
}

/// Linear power gain of one hop: `10^(−(L0 + 10·α·log10 d)/10)`.
pub fn link_gain(d: f64, params: &ChannelParams) -> Result<f64> {
    if !(d >= 1.0) {
        return Err(validation(format!(
            "distance {d} m is below the 1 m reference distance"
        )));
    }
    let loss_db = params.l0_db + 10.0 * params.alpha * d.log10();
    Ok(10f64.powf(-loss_db / 10.0))
}

/// Per-hop linear power gains.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LinkGains {
    pub direct: f64,
    pub ap_irs: f64,
    pub irs_user: f64,
}

impl LinkGains {
    pub fn from_geometry(geom: &Geometry, params: &ChannelParams) -> Result<Self> {
        geom.validate()?;
        Ok(LinkGains {
            direct: link_gain(geom.d_ap_user, params)?,
            ap_irs: link_gain(geom.d_ap_irs, params)?,
            irs_user: link_gain(geom.d_irs_user, params)?,
        })
    }
}

/// Borrowed view of one channel triple (either truth or estimate).
#[derive(Clone, Copy, Debug)]
pub struct ChannelView<'a> {
    /// AP→User, length M.
    pub h_d: &'a CVec,
    /// AP→IRS, N×M.
    pub h: &'a CMat,
    /// IRS→User, length N.
    pub h_r: &'a CVec,
}

impl ChannelView<'_> {
    pub fn m(&self) -> usize {
        self.h_d.len()
    }

    pub fn n(&self) -> usize {
        self.h_r.len()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelRealization {
    pub h_d: CVec,
    pub h: CMat,
    pub h_r: CVec,
    pub est_h_d: CVec,
    pub est_h: CMat,
    pub est_h_r: CVec,
    pub gains: LinkGains,
}

impl ChannelRealization {
    pub fn truth(&self) -> ChannelView<'_> {
        ChannelView {
            h_d: &self.h_d,
            h: &self.h,
            h_r: &self.h_r,
        }
    }

    pub fn estimate(&self) -> ChannelView<'_> {
        ChannelView {
            h_d: &self.est_h_d,
            h: &self.est_h,
            h_r: &self.est_h_r,
        }
    }

    pub fn m(&self) -> usize {
        self.h_d.len()
    }

    pub fn n(&self) -> usize {
        self.h_r.len()
    }

    /// Build from known true channels, with estimates equal to the truth.
    pub fn exact(h_d: CVec, h: CMat, h_r: CVec, gains: LinkGains) -> Self {
        ChannelRealization {
            est_h_d: h_d.clone(),
            est_h: h.clone(),
            est_h_r: h_r.clone(),
            h_d,
            h,
            h_r,
            gains,
        }
    }
}

fn los_weights(gain: f64, k: f64) -> (f64, f64) {
    (
        (gain * k / (k + 1.0)).sqrt(),
        (gain / (k + 1.0)).sqrt(),
    )
}

fn fading_block(rng: &mut RngStream, len: usize, gain: f64, k: f64) -> Vec<C64> {
    let (los, nlos) = los_weights(gain, k);
    (0..len).map(|_| C64::new(los, 0.0) + rng.cn() * nlos).collect()
}

fn evolve_block(old: &[C64], rng: &mut RngStream, gain: f64, k: f64, corr: f64) -> Vec<C64> {
    let (los, nlos) = los_weights(gain, k);
    let mean = C64::new(los, 0.0);
    let innov = (1.0 - corr * corr).max(0.0).sqrt();
    old.iter()
        .map(|&h| {
            // keep the innovation draw even at corr = 1 so stream usage is fixed
            let fresh = rng.cn() * nlos;
            mean + (h - mean) * corr + fresh * innov
        })
        .collect()
}

/// Entrywise perturbation `h + Δ`, Δ uniform in the ball `‖Δ‖ ≤ eps·‖h‖`.
pub fn perturb_estimate(h: &[C64], eps: f64, rng: &mut RngStream) -> Vec<C64> {
    if eps == 0.0 || h.is_empty() {
        return h.to_vec();
    }
    let radius = eps * h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let dir: Vec<C64> = (0..h.len()).map(|_| C64::new(rng.normal(), rng.normal())).collect();
    let dn = dir.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
    let dim = 2.0 * h.len() as f64;
    let r = radius * rng.uniform().powf(1.0 / dim);
    let s = if dn > 0.0 { r / dn } else { 0.0 };
    h.iter().zip(dir).map(|(&x, d)| x + d * s).collect()
}

pub fn perturb_vec(h: &CVec, eps: f64, rng: &mut RngStream) -> CVec {
    CVec::new(perturb_estimate(h.as_slice(), eps, rng))
}

pub fn perturb_mat(h: &CMat, eps: f64, rng: &mut RngStream) -> CMat {
    CMat::from_row_major(h.rows(), h.cols(), perturb_estimate(h.as_slice(), eps, rng))
        .expect("shape preserved")
}

fn with_estimates(
    h_d: CVec,
    h: CMat,
    h_r: CVec,
    gains: LinkGains,
    eps: f64,
    rng: &mut RngStream,
) -> ChannelRealization {
    let est_h_d = perturb_vec(&h_d, eps, rng);
    let est_h = perturb_mat(&h, eps, rng);
    let est_h_r = perturb_vec(&h_r, eps, rng);
    ChannelRealization {
        h_d,
        h,
        h_r,
        est_h_d,
        est_h,
        est_h_r,
        gains,
    }
}

/// Draw a fresh realization for `m` AP antennas and `n` IRS elements.
pub fn sample_channels(
    geom: &Geometry,
    params: &ChannelParams,
    m: usize,
    n: usize,
    rng: &mut RngStream,
) -> Result<ChannelRealization> {
    if m == 0 || n == 0 {
        return Err(validation(format!("need M >= 1 and N >= 1, got M={m}, N={n}")));
    }
    params.validate()?;
    let gains = LinkGains::from_geometry(geom, params)?;
    let k = params.rician_k;
    let h_d = CVec::new(fading_block(rng, m, gains.direct, k));
    let h = CMat::from_row_major(n, m, fading_block(rng, n * m, gains.ap_irs, k))?;
    let h_r = CVec::new(fading_block(rng, n, gains.irs_user, k));
    Ok(with_estimates(h_d, h, h_r, gains, params.eps, rng))
}

/// One Gauss-Markov step of every true block, followed by fresh estimates.
pub fn evolve_channels(
    prev: &ChannelRealization,
    params: &ChannelParams,
    rng: &mut RngStream,
) -> ChannelRealization {
    let g = prev.gains;
    let k = params.rician_k;
    let c = params.corr;
    let h_d = CVec::new(evolve_block(prev.h_d.as_slice(), rng, g.direct, k, c));
    let h = CMat::from_row_major(
        prev.h.rows(),
        prev.h.cols(),
        evolve_block(prev.h.as_slice(), rng, g.ap_irs, k, c),
    )
    .expect("shape preserved");
    let h_r = CVec::new(evolve_block(prev.h_r.as_slice(), rng, g.irs_user, k, c));
    with_estimates(h_d, h, h_r, g, params.eps, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params() -> ChannelParams {
        ChannelParams::default()
    }

    #[test]
    fn link_gain_reference_values() {
        let p = params();
        assert!((link_gain(1.0, &p).unwrap() - 1e-3).abs() < 1e-18);
        let q = ChannelParams { alpha: 2.7, l0_db: 41.0, ..p };
        assert!((link_gain(1.0, &q).unwrap() - 10f64.powf(-4.1)).abs() < 1e-20);
        let g10 = link_gain(10.0, &p).unwrap();
        assert!((g10 - 3.1622776601683795e-7).abs() < 1e-19);
        assert!(link_gain(0.5, &p).is_err());
    }

    #[test]
    fn link_gain_monotone() {
        let p = params();
        let mut last = f64::INFINITY;
        for i in 0..100 {
            let d = 1.01 + i as f64 * 0.7;
            let g = link_gain(d, &p).unwrap();
            assert!(g < last);
            last = g;
            let steeper = ChannelParams { alpha: 4.0, ..p };
            assert!(link_gain(d, &steeper).unwrap() < g);
        }
    }

    #[test]
    fn shapes() {
        let mut rng = RngStream::new(1, 1);
        let ch = sample_channels(&Geometry::default(), &params(), 4, 8, &mut rng).unwrap();
        assert_eq!(ch.h_d.len(), 4);
        assert_eq!((ch.h.rows(), ch.h.cols()), (8, 4));
        assert_eq!(ch.h_r.len(), 8);
        assert_eq!(ch.est_h_d, ch.h_d);
        assert_eq!(ch.est_h, ch.h);
        assert_eq!(ch.est_h_r, ch.h_r);
    }

    #[test]
    fn direct_energy_matches_link_gain() {
        let p = params();
        let g = Geometry::default();
        let mut rng = RngStream::new(2, 1);
        let draws = 10_000;
        let m = 4;
        let mean: f64 = (0..draws)
            .map(|_| sample_channels(&g, &p, m, 2, &mut rng).unwrap().h_d.norm_sqr() / m as f64)
            .sum::<f64>()
            / draws as f64;
        let expect = link_gain(g.d_ap_user, &p).unwrap();
        assert!((mean / expect - 1.0).abs() < 0.03, "{}", mean / expect);
    }

    #[test]
    fn halving_distances_scales_energy_by_two_to_alpha() {
        let p = params();
        let far = Geometry::new(20.0, 10.0, 6.0).unwrap();
        let near = Geometry::new(10.0, 5.0, 3.0).unwrap();
        let energy = |g: &Geometry, seed| {
            let mut rng = RngStream::new(seed, 4);
            (0..10_000)
                .map(|_| sample_channels(g, &p, 2, 2, &mut rng).unwrap().h_d.norm_sqr())
                .sum::<f64>()
        };
        let ratio = energy(&near, 3) / energy(&far, 4);
        let expect = 2f64.powf(p.alpha);
        assert!((ratio / expect - 1.0).abs() < 0.05, "{ratio} vs {expect}");
    }

    #[test]
    fn evolve_degenerate_correlations() {
        let g = Geometry::default();
        let mut rng = RngStream::new(5, 1);
        let p1 = ChannelParams { corr: 1.0, ..params() };
        let ch = sample_channels(&g, &p1, 3, 5, &mut rng).unwrap();
        let next = evolve_channels(&ch, &p1, &mut rng);
        assert_eq!(next.h_d, ch.h_d);
        assert_eq!(next.h, ch.h);
        assert_eq!(next.h_r, ch.h_r);

        // corr = 0: successive draws are uncorrelated
        let p0 = ChannelParams { corr: 0.0, ..params() };
        let mut cur = sample_channels(&g, &p0, 1, 1, &mut rng).unwrap();
        let scale = cur.gains.direct;
        let (mut cross, mut energy) = (C64::new(0.0, 0.0), 0.0);
        for _ in 0..10_000 {
            let nx = evolve_channels(&cur, &p0, &mut rng);
            cross += nx.h_d[0] * cur.h_d[0].conj() / scale;
            energy += cur.h_d[0].norm_sqr() / scale;
            cur = nx;
        }
        assert!((cross / energy).norm() < 0.03);
    }

    #[test]
    fn evolve_lag_one_correlation_and_stationary_variance() {
        let g = Geometry::default();
        let p = ChannelParams { corr: 0.95, ..params() };
        let mut rng = RngStream::new(8, 1);
        let mut cur = sample_channels(&g, &p, 2, 2, &mut rng).unwrap();
        let scale = cur.gains.direct;
        let (mut cross, mut energy, mut var_sum) = (C64::new(0.0, 0.0), 0.0, 0.0);
        let steps = 10_000;
        for _ in 0..steps {
            let nx = evolve_channels(&cur, &p, &mut rng);
            for i in 0..2 {
                cross += nx.h_d[i] * cur.h_d[i].conj() / scale;
                energy += cur.h_d[i].norm_sqr() / scale;
                var_sum += nx.h_d[i].norm_sqr() / scale;
            }
            cur = nx;
        }
        let rho = (cross / energy).re;
        assert!((rho - 0.95).abs() < 0.02, "{rho}");
        let var = var_sum / (2 * steps) as f64;
        assert!((var - 1.0).abs() < 0.05, "{var}");
    }

    #[test]
    fn perturbation_stays_in_ball_and_covers_it() {
        let mut rng = RngStream::new(9, 2);
        let h: Vec<C64> = (0..3).map(|_| rng.cn()).collect();
        let hn = h.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        assert_eq!(perturb_estimate(&h, 0.0, &mut rng), h);
        let eps = 0.1;
        let mut max_frac: f64 = 0.0;
        for i in 0..100_000 {
            let out = perturb_estimate(&h, eps, &mut rng);
            let dn = out
                .iter()
                .zip(&h)
                .map(|(a, b)| (a - b).norm_sqr())
                .sum::<f64>()
                .sqrt();
            let frac = dn / (eps * hn);
            if i < 10_000 {
                assert!(frac <= 1.0 + 1e-12);
            }
            max_frac = max_frac.max(frac);
        }
        assert!(max_frac >= 0.99 && max_frac <= 1.0 + 1e-12, "{max_frac}");
    }

    #[test]
    fn estimate_errors_bounded_per_block() {
        let p = ChannelParams { eps: 0.2, ..params() };
        let mut rng = RngStream::new(10, 2);
        for _ in 0..200 {
            let ch = sample_channels(&Geometry::default(), &p, 4, 6, &mut rng).unwrap();
            assert!(ch.est_h_d.sub(&ch.h_d).norm() <= 0.2 * ch.h_d.norm() * (1.0 + 1e-12));
            let dh = ch.est_h.lin_comb(1.0, &ch.h, -1.0).norm_sqr().sqrt();
            assert!(dh <= 0.2 * ch.h.norm_sqr().sqrt() * (1.0 + 1e-12));
            assert!(ch.est_h_r.sub(&ch.h_r).norm() <= 0.2 * ch.h_r.norm() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn planar_helper() {
        let g = Geometry::planar(20.0, 10.0, 5.0).unwrap();
        assert!((g.d_ap_irs - 125f64.sqrt()).abs() < 1e-12);
        assert!((g.d_irs_user - 125f64.sqrt()).abs() < 1e-12);
        assert!(Geometry::planar(20.0, 0.0, 5.0).is_err());
        assert!(Geometry::planar(20.0, 20.0, 5.0).is_err());
    }

    #[test]
    fn rician_mean_component() {
        let p = ChannelParams { rician_k: 3.0, ..params() };
        let mut rng = RngStream::new(12, 1);
        let g = Geometry::default();
        let mut acc = C64::new(0.0, 0.0);
        let draws = 5000;
        let mut gain = 0.0;
        for _ in 0..draws {
            let ch = sample_channels(&g, &p, 1, 1, &mut rng).unwrap();
            acc += ch.h_d[0];
            gain = ch.gains.direct;
        }
        let mean = acc / draws as f64 / gain.sqrt();
        assert!((mean.re - (0.75f64).sqrt()).abs() < 0.03 && mean.im.abs() < 0.03);
    }
}
