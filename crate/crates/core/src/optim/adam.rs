use crate::error::{Error, Result};
use crate::render::RowOrigin;

/// Adam over a flat `N x d` parameter matrix with per-column learning rates.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    d: usize,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
}

impl Adam {
    pub fn new(rows: usize, d: usize) -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
            d,
            m: vec![0.0; rows * d],
            v: vec![0.0; rows * d],
            step: 0,
        }
    }

    pub fn rows(&self) -> usize {
        self.m.len() / self.d
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// One update. `lr` holds one learning rate per column.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64], lr: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::shape(
                format!("{} parameters", self.m.len()),
                format!("{} parameters, {} gradients", params.len(), grads.len()),
            ));
        }
        if lr.len() != self.d {
            return Err(Error::shape(format!("{} learning rates", self.d), lr.len()));
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (i, ((p, g), (m, v))) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
            .enumerate()
        {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr[i % self.d] * m_hat / (v_hat.sqrt() + self.eps);
        }
        Ok(())
    }

    /// Carries moments over a densification: kept rows keep theirs, new rows
    /// start from zero.
    pub fn remap(&mut self, origins: &[RowOrigin]) {
        let d = self.d;
        let mut m = vec![0.0; origins.len() * d];
        let mut v = vec![0.0; origins.len() * d];
        for (new, origin) in origins.iter().enumerate() {
            if let RowOrigin::Kept(old) = *origin {
                m[new * d..(new + 1) * d].copy_from_slice(&self.m[old * d..(old + 1) * d]);
                v[new * d..(new + 1) * d].copy_from_slice(&self.v[old * d..(old + 1) * d]);
            }
        }
        self.m = m;
        self.v = v;
    }

    /// Fresh state for `rows` new parameters (e.g. after prototype replacement).
    pub fn reset(&mut self, rows: usize) {
        self.m = vec![0.0; rows * self.d];
        self.v = vec![0.0; rows * self.d];
        self.step = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params() {
        let mut adam = Adam::new(2, 3);
        let mut p = vec![1.0, -2.0, 3.0, 0.5, 0.25, 7.0];
        let before = p.clone();
        adam.step(&mut p, &[0.0; 6], &[0.1; 3]).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn constant_gradient_moves_by_lr() {
        // m_hat = g and v_hat = g^2 exactly under bias correction, so every
        // step is lr * g / |g|.
        let mut adam = Adam::new(1, 2);
        let mut p = vec![0.0, 0.0];
        for k in 1..=200 {
            let before = p.clone();
            adam.step(&mut p, &[3.0, -0.02], &[0.01, 0.5]).unwrap();
            let du = [(p[0] - before[0]) / 0.01, (p[1] - before[1]) / 0.5];
            assert!((du[0] + 1.0).abs() < 1e-9, "step {k}: {du:?}");
            assert!((du[1] - 1.0).abs() < 1e-9, "step {k}: {du:?}");
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut adam = Adam::new(2, 2);
        let mut p = vec![0.0; 3];
        assert!(adam.step(&mut p, &[0.0; 3], &[0.1; 2]).is_err());
    }

    #[test]
    fn remap_and_reset_resize_moments() {
        let mut adam = Adam::new(2, 1);
        let mut p = vec![1.0, 2.0];
        adam.step(&mut p, &[1.0, -1.0], &[0.1]).unwrap();
        adam.remap(&[RowOrigin::Kept(1), RowOrigin::New, RowOrigin::Kept(0)]);
        assert_eq!(adam.rows(), 3);
        assert_eq!(adam.m[1], 0.0);
        assert!(adam.m[0] < 0.0 && adam.m[2] > 0.0);
        adam.reset(5);
        assert_eq!(adam.rows(), 5);
        assert_eq!(adam.steps(), 0);
    }
}
