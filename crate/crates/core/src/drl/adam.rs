//! Adaptive moment estimation with bias correction.

use crate::error::{validation, Result};

#[derive(Clone, Debug)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(len: usize) -> Self {
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(validation(format!(
                "adam: {} params, {} grads, state for {}",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for i in 0..params.len() {
            let g = grads[i];
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g;
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g;
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + self.eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut opt = Adam::new(3);
        let mut p = vec![1.0, -2.0, 0.5];
        opt.step(&mut p, &[0.0; 3], 0.1).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 0.5]);
    }

    #[test]
    fn first_step_moves_by_lr_sign() {
        for g in [3.7, -0.02, 1e3] {
            let mut opt = Adam::new(1);
            let mut p = [0.0];
            opt.step(&mut p, &[g], 1e-3).unwrap();
            assert!((p[0] + 1e-3 * g.signum()).abs() < 1e-6);
        }
    }

    #[test]
    fn two_hand_computed_steps() {
        // lr 0.1, g1 = 2, g2 = -1
        // t=1: m=0.2, v=0.004, m̂=2, v̂=4 → Δ = -0.1·2/(2+1e-8)
        // t=2: m=0.18-0.1=0.08, v=0.003996+0.001=0.004996,
        //      m̂=0.08/0.19, v̂=0.004996/0.001999
        let mut opt = Adam::new(1);
        let mut p = [1.0];
        opt.step(&mut p, &[2.0], 0.1).unwrap();
        let p1 = 1.0 - 0.1 * 2.0 / (2.0 + 1e-8);
        assert!((p[0] - p1).abs() < 1e-12);
        opt.step(&mut p, &[-1.0], 0.1).unwrap();
        let mh = 0.08 / 0.19;
        let vh: f64 = 0.004996 / (1.0 - 0.999f64 * 0.999);
        let p2 = p1 - 0.1 * mh / (vh.sqrt() + 1e-8);
        assert!((p[0] - p2).abs() < 1e-12);
    }

    #[test]
    fn shape_mismatch_rejected() {
        let mut opt = Adam::new(2);
        let mut p = vec![0.0; 3];
        assert!(opt.step(&mut p, &[0.0; 3], 0.1).is_err());
    }
}
