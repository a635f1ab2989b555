use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Bias-corrected Adam over an ordered list of parameter blocks.
///
/// Moment buffers are allocated on the first step from the block sizes and
/// must keep the same layout afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig) -> Self {
        AdamState {
            config,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// One update. Each item is `(block name, parameters, gradient)`.
    /// Nothing is modified if any gradient is non-finite.
    pub fn update<'a, I>(&mut self, blocks: I) -> Result<()>
    where
        I: IntoIterator<Item = (&'a str, &'a mut [f64], &'a [f64])>,
    {
        let mut blocks: Vec<_> = blocks.into_iter().collect();
        for (name, p, g) in &blocks {
            if p.len() != g.len() {
                return Err(Error::dim(format!("adam block {name}"), "parameter", p.len(), g.len()));
            }
            if let Some(i) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("gradient of {name} at index {i}")));
            }
        }
        if self.m.is_empty() {
            self.m = blocks.iter().map(|(_, p, _)| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != blocks.len() || self.m.iter().zip(&blocks).any(|(m, (_, p, _))| m.len() != p.len()) {
            return Err(Error::shape("adam", "parameter layout changed between steps"));
        }

        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for (b, (_, p, g)) in blocks.iter_mut().enumerate() {
            let (m, v) = (&mut self.m[b], &mut self.v[b]);
            for i in 0..p.len() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut adam = AdamState::new(AdamConfig::default());
        let mut p = vec![1.0, -2.0];
        adam.update([("w", p.as_mut_slice(), [0.5, 0.5].as_slice())]).unwrap();
        let after_first = p.clone();
        adam.update([("w", p.as_mut_slice(), [0.0, 0.0].as_slice())]).unwrap();
        // m decays but is non-zero, so parameters still move; with a fresh
        // state and zero gradient they must not.
        assert_ne!(p, after_first);
        let mut fresh = AdamState::new(AdamConfig::default());
        let mut q = vec![1.0, -2.0];
        fresh.update([("w", q.as_mut_slice(), [0.0, 0.0].as_slice())]).unwrap();
        assert_eq!(q, vec![1.0, -2.0]);
        assert_eq!(fresh.step, 1);
        let m_before = adam.m[0][0];
        adam.update([("w", p.as_mut_slice(), [0.0, 0.0].as_slice())]).unwrap();
        assert!((adam.m[0][0] - 0.9 * m_before).abs() < 1e-18);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut adam = AdamState::new(AdamConfig::default());
        let mut p = vec![0.0, 0.0, 0.0];
        adam.update([("w", p.as_mut_slice(), [3.0, -0.01, 250.0].as_slice())]).unwrap();
        assert!((p[0] + 1e-3).abs() < 1e-9);
        assert!((p[1] - 1e-3).abs() < 1e-8);
        assert!((p[2] + 1e-3).abs() < 1e-9);
    }

    #[test]
    fn non_finite_gradient_names_block() {
        let mut adam = AdamState::new(AdamConfig::default());
        let mut a = vec![0.0];
        let mut b = vec![0.0];
        let err = adam
            .update([
                ("enc.conv1", a.as_mut_slice(), [1.0].as_slice()),
                ("rel.fc2", b.as_mut_slice(), [f64::NAN].as_slice()),
            ])
            .unwrap_err();
        assert!(err.to_string().contains("rel.fc2"));
        assert_eq!(a, vec![0.0]);
        assert_eq!(adam.step, 0);
    }
}
