//! Global gradient clipping and the adaptive-moment optimizer with
//! decoupled weight decay.
//!
//! Moment buffers are kept in the same scalar type as the parameters, so a
//! checkpoint round trip restores them bit-for-bit and a resumed run tracks
//! an uninterrupted one exactly. Per-element updates are computed in `f64`
//! and rounded once on store, which keeps the arithmetic identical whether
//! the state lives in memory or was just reloaded.

use std::collections::BTreeMap;

use ndarray::ArrayD;

use crate::error::{Error, Result};
use crate::nn::{Param, Real};

/// Scale all gradients so their joint L2 norm is at most `max_norm`.
/// Returns the pre-clip norm.
pub fn clip_global_norm<F: Real>(params: &mut [&mut Param<F>], max_norm: f64) -> f64 {
    let mut sq = 0.0f64;
    for p in params.iter() {
        for &g in p.grad.iter() {
            let g = g.as_f64();
            sq += g * g;
        }
    }
    let norm = sq.sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = F::of(max_norm / norm);
        for p in params.iter_mut() {
            p.grad.mapv_inplace(|g| g * scale);
        }
    }
    norm
}

/// Adam with decoupled weight decay: the decay multiplies parameter values
/// directly (never enters the moment estimates) and only touches parameters
/// flagged for decay — conv/linear weights, not norm affines or biases.
#[derive(Debug)]
pub struct AdamW<F: Real> {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Update steps applied so far; drives bias correction.
    pub step: u64,
    m: BTreeMap<String, ArrayD<F>>,
    v: BTreeMap<String, ArrayD<F>>,
}

impl<F: Real> Default for AdamW<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Real> AdamW<F> {
    pub fn new() -> Self {
        AdamW { beta1: 0.9, beta2: 0.999, eps: 1e-8, step: 0, m: BTreeMap::new(), v: BTreeMap::new() }
    }

    /// Apply one update from the gradients accumulated in `params`.
    ///
    /// Order per parameter: decoupled decay `w *= 1 - lr * wd` first, then
    /// the bias-corrected adaptive step.
    pub fn update(
        &mut self,
        params: &mut [&mut Param<F>],
        lr: f64,
        weight_decay: f64,
    ) -> Result<()> {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step as i32);
        let c2 = 1.0 - self.beta2.powi(self.step as i32);
        for p in params.iter_mut() {
            let Param { name, value, grad, decay } = &mut **p;
            let m = self
                .m
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(value.raw_dim()));
            let v = self
                .v
                .entry(name.clone())
                .or_insert_with(|| ArrayD::zeros(value.raw_dim()));
            if m.shape() != value.shape() || v.shape() != value.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "optimizer state for {name} does not match the parameter shape"
                )));
            }
            let decay_scale = if *decay { 1.0 - lr * weight_decay } else { 1.0 };
            for (((w, g), mi), vi) in
                value.iter_mut().zip(grad.iter()).zip(m.iter_mut()).zip(v.iter_mut())
            {
                let g = g.as_f64();
                let m_new = self.beta1 * mi.as_f64() + (1.0 - self.beta1) * g;
                let v_new = self.beta2 * vi.as_f64() + (1.0 - self.beta2) * g * g;
                *mi = F::of(m_new);
                *vi = F::of(v_new);
                let step = lr * (m_new / c1) / ((v_new / c2).sqrt() + self.eps);
                *w = F::of(w.as_f64() * decay_scale - step);
            }
        }
        Ok(())
    }

    /// Moment buffers as named tensors (`adam.m.*` / `adam.v.*`) for
    /// checkpointing alongside the model state.
    pub fn state_tensors(&self) -> Vec<(String, ArrayD<f32>)> {
        let mut out = Vec::new();
        for (name, t) in &self.m {
            out.push((format!("adam.m.{name}"), t.mapv(|x| x.as_f64() as f32)));
        }
        for (name, t) in &self.v {
            out.push((format!("adam.v.{name}"), t.mapv(|x| x.as_f64() as f32)));
        }
        out
    }

    /// Restore moment buffers saved by [`AdamW::state_tensors`]; tensors
    /// without the `adam.` prefix are ignored so a combined checkpoint can be
    /// fed directly.
    pub fn load_state(&mut self, tensors: &[(String, ArrayD<f32>)], step: u64) -> Result<()> {
        self.m.clear();
        self.v.clear();
        for (name, t) in tensors {
            if let Some(rest) = name.strip_prefix("adam.m.") {
                self.m.insert(rest.to_string(), t.mapv(|x| F::of(x as f64)));
            } else if let Some(rest) = name.strip_prefix("adam.v.") {
                self.v.insert(rest.to_string(), t.mapv(|x| F::of(x as f64)));
            }
        }
        if self.m.len() != self.v.len() {
            return Err(Error::InvalidInput(
                "optimizer checkpoint has unpaired moment tensors".into(),
            ));
        }
        self.step = step;
        Ok(())
    }

    /// Number of parameters with moment state.
    pub fn tracked(&self) -> usize {
        self.m.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr1;

    fn scalar_param(name: &str, value: f64, decay: bool) -> Param<f64> {
        Param::new(name, arr1(&[value]).into_dyn(), decay)
    }

    #[test]
    fn single_step_matches_hand_computation() {
        let mut p = scalar_param("w", 1.0, false);
        p.grad.fill(1.0);
        let mut opt = AdamW::<f64>::new();
        opt.update(&mut [&mut p], 0.1, 0.0).unwrap();
        // m = 0.1, v = 0.001; bias-corrected both exactly 1.0; step size
        // lr / (1 + eps).
        let expect = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((p.value[[0]] - expect).abs() < 1e-15, "{} vs {expect}", p.value[[0]]);
    }

    #[test]
    fn two_steps_match_independent_recurrence() {
        let grads = [0.5, -0.25];
        let (lr, b1, b2, eps) = (0.05, 0.9, 0.999, 1e-8);
        let mut p = scalar_param("w", 2.0, false);
        let mut opt = AdamW::<f64>::new();
        // Independent replay of the textbook recurrence.
        let (mut w, mut m, mut v) = (2.0f64, 0.0f64, 0.0f64);
        for (t, &g) in grads.iter().enumerate() {
            p.zero_grad();
            p.grad.fill(g);
            opt.update(&mut [&mut p], lr, 0.0).unwrap();
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let c1 = 1.0 - b1.powi(t as i32 + 1);
            let c2 = 1.0 - b2.powi(t as i32 + 1);
            w -= lr * (m / c1) / ((v / c2).sqrt() + eps);
        }
        assert!((p.value[[0]] - w).abs() < 1e-15);
        assert_eq!(opt.step, 2);
    }

    #[test]
    fn decay_is_decoupled_and_respects_flags() {
        // Zero gradient: the adaptive step is exactly zero, so only the
        // decay multiplier acts, and only on flagged parameters.
        let mut decayed = scalar_param("w", 1.0, true);
        let mut plain = scalar_param("b", 1.0, false);
        let mut opt = AdamW::<f64>::new();
        opt.update(&mut [&mut decayed, &mut plain], 0.1, 0.5).unwrap();
        assert_eq!(decayed.value[[0]], 0.95);
        assert_eq!(plain.value[[0]], 1.0);
    }

    #[test]
    fn clip_scales_down_to_max_norm_only_when_needed() {
        let mut a = scalar_param("a", 0.0, false);
        let mut b = scalar_param("b", 0.0, false);
        a.grad.fill(3.0);
        b.grad.fill(4.0);
        {
            let mut params = [&mut a, &mut b];
            let pre = clip_global_norm(&mut params, 0.25);
            assert!((pre - 5.0).abs() < 1e-12);
        }
        let post = (a.grad[[0]].powi(2) + b.grad[[0]].powi(2)).sqrt();
        assert!((post - 0.25).abs() < 1e-12);
        // Already within budget: untouched.
        a.grad.fill(0.1);
        b.grad.fill(0.0);
        let mut params = [&mut a, &mut b];
        let pre = clip_global_norm(&mut params, 0.25);
        assert!((pre - 0.1).abs() < 1e-12);
        assert_eq!(params[0].grad[[0]], 0.1);
    }

    #[test]
    fn state_round_trip_resumes_bit_identically() {
        let make = || {
            vec![
                Param::new("w1", arr1(&[0.5f32, -0.25, 1.5]).into_dyn(), true),
                Param::new("w2", arr1(&[2.0f32]).into_dyn(), false),
            ]
        };
        let grads: Vec<Vec<f32>> = vec![
            vec![1.0, -0.5, 0.25],
            vec![0.1, 0.2, -0.3],
            vec![-1.0, 0.5, 0.0],
            vec![0.7, -0.7, 0.7],
            vec![0.01, 0.02, 0.03],
        ];
        let apply = |params: &mut Vec<Param<f32>>, opt: &mut AdamW<f32>, g: &[f32]| {
            params[0].grad = arr1(g).into_dyn();
            params[1].grad = arr1(&[g[0] * 0.5]).into_dyn();
            let mut refs: Vec<&mut Param<f32>> = params.iter_mut().collect();
            opt.update(&mut refs, 3e-3, 1e-2).unwrap();
        };

        // Uninterrupted run.
        let mut p_full = make();
        let mut opt_full = AdamW::<f32>::new();
        for g in &grads {
            apply(&mut p_full, &mut opt_full, g);
        }

        // Interrupted after 3 steps: save, reload, continue.
        let mut p_a = make();
        let mut opt_a = AdamW::<f32>::new();
        for g in &grads[..3] {
            apply(&mut p_a, &mut opt_a, g);
        }
        let saved = opt_a.state_tensors();
        let mut opt_b = AdamW::<f32>::new();
        opt_b.load_state(&saved, opt_a.step).unwrap();
        assert_eq!(opt_b.tracked(), 2);
        for g in &grads[3..] {
            apply(&mut p_a, &mut opt_b, g);
        }

        for (full, resumed) in p_full.iter().zip(p_a.iter()) {
            for (x, y) in full.value.iter().zip(resumed.value.iter()) {
                assert_eq!(x.to_bits(), y.to_bits(), "{} diverged", full.name);
            }
        }
    }

    #[test]
    fn stale_shape_is_rejected() {
        let mut p = scalar_param("w", 1.0, false);
        let mut opt = AdamW::<f64>::new();
        opt.update(&mut [&mut p], 0.1, 0.0).unwrap();
        let mut grown = Param::new("w", arr1(&[1.0f64, 2.0]).into_dyn(), false);
        assert!(matches!(
            opt.update(&mut [&mut grown], 0.1, 0.0).unwrap_err(),
            Error::ShapeMismatch(_)
        ));
    }
}
