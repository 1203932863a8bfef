//! Per-channel normalization over `(T, H, W)` with learned affine and
//! EMA running statistics.
//!
//! Statistics are computed per sample rather than per batch, so a training
//! step's math never depends on which other samples share the batch; this is
//! what makes whole runs reproducible under any batch composition. Running
//! means/variances are tracked with an exponential moving average and used
//! verbatim in eval mode, as in conventional batch normalization.

use ndarray::{Array1, Array4, Axis};

use crate::error::{Error, Result};
use crate::nn::{Param, Real};

#[derive(Debug, Clone)]
pub struct Norm3d<F: Real> {
    pub gamma: Param<F>,
    pub beta: Param<F>,
    pub running_mean: Array1<F>,
    pub running_var: Array1<F>,
    pub momentum: f64,
    pub eps: f64,
    channels: usize,
    cache: Option<Cache<F>>,
}

#[derive(Debug, Clone)]
struct Cache<F> {
    xhat: Array4<F>,
    inv_std: Array1<F>,
}

impl<F: Real> Norm3d<F> {
    pub fn new(name: &str, channels: usize) -> Self {
        Norm3d {
            gamma: Param::new(
                format!("{name}.gamma"),
                ndarray::ArrayD::from_elem(vec![channels], F::one()),
                false,
            ),
            beta: Param::new(
                format!("{name}.beta"),
                ndarray::ArrayD::zeros(vec![channels]),
                false,
            ),
            running_mean: Array1::zeros(channels),
            running_var: Array1::from_elem(channels, F::one()),
            momentum: 0.1,
            eps: 1e-5,
            channels,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn forward(&mut self, x: &Array4<F>, train: bool) -> Result<Array4<F>> {
        let (c, t, h, w) = x.dim();
        if c != self.channels {
            return Err(Error::ShapeMismatch(format!(
                "norm expects {} channels, got {c}",
                self.channels
            )));
        }
        let n = (t * h * w) as f64;
        let mut y = Array4::zeros(x.raw_dim());
        if train {
            let mut xhat = Array4::zeros(x.raw_dim());
            let mut inv_std = Array1::zeros(c);
            for ch in 0..c {
                let xc = x.index_axis(Axis(0), ch);
                // f64 accumulation for stable statistics regardless of F.
                let mean = xc.iter().map(|v| v.as_f64()).sum::<f64>() / n;
                let var = xc.iter().map(|v| (v.as_f64() - mean).powi(2)).sum::<f64>() / n;
                let istd = 1.0 / (var + self.eps).sqrt();
                inv_std[ch] = F::of(istd);
                let mf = F::of(mean);
                let sf = F::of(istd);
                let mut xh = xhat.index_axis_mut(Axis(0), ch);
                xh.assign(&xc);
                xh.mapv_inplace(|v| (v - mf) * sf);
                let g = self.gamma.value[ch];
                let b = self.beta.value[ch];
                let mut yc = y.index_axis_mut(Axis(0), ch);
                yc.assign(&xh);
                yc.mapv_inplace(|v| v * g + b);
                // EMA update with per-sample statistics.
                let m = F::of(self.momentum);
                self.running_mean[ch] =
                    self.running_mean[ch] * (F::one() - m) + F::of(mean) * m;
                self.running_var[ch] = self.running_var[ch] * (F::one() - m) + F::of(var) * m;
            }
            self.cache = Some(Cache { xhat, inv_std });
        } else {
            for ch in 0..c {
                let mean = self.running_mean[ch];
                let istd = F::of(1.0 / (self.running_var[ch].as_f64() + self.eps).sqrt());
                let g = self.gamma.value[ch];
                let b = self.beta.value[ch];
                let xc = x.index_axis(Axis(0), ch);
                let mut yc = y.index_axis_mut(Axis(0), ch);
                yc.assign(&xc);
                yc.mapv_inplace(|v| (v - mean) * istd * g + b);
            }
        }
        Ok(y)
    }

    /// Backward through a training-mode forward. Accumulates affine
    /// gradients and returns the input gradient.
    pub fn backward(&mut self, gy: &Array4<F>) -> Result<Array4<F>> {
        let cache = self.cache.take().ok_or_else(|| {
            Error::InvalidInput("norm backward called without cached training forward".into())
        })?;
        let (c, t, h, w) = gy.dim();
        let n = F::of((t * h * w) as f64);
        let mut dx = Array4::zeros(gy.raw_dim());
        for ch in 0..c {
            let g = self.gamma.value[ch];
            let xh = cache.xhat.index_axis(Axis(0), ch);
            let gc = gy.index_axis(Axis(0), ch);
            // Affine gradients.
            let mut dgamma = F::zero();
            let mut dbeta = F::zero();
            for (&gv, &xv) in gc.iter().zip(xh.iter()) {
                dgamma = dgamma + gv * xv;
                dbeta = dbeta + gv;
            }
            self.gamma.grad[ch] = self.gamma.grad[ch] + dgamma;
            self.beta.grad[ch] = self.beta.grad[ch] + dbeta;
            // Input gradient: istd * (ghat - mean(ghat) - xhat * mean(ghat*xhat)),
            // with ghat = gy * gamma.
            let mut m1 = F::zero();
            let mut m2 = F::zero();
            for (&gv, &xv) in gc.iter().zip(xh.iter()) {
                let gh = gv * g;
                m1 = m1 + gh;
                m2 = m2 + gh * xv;
            }
            m1 = m1 / n;
            m2 = m2 / n;
            let istd = cache.inv_std[ch];
            let mut dc = dx.index_axis_mut(Axis(0), ch);
            for ((d, &gv), &xv) in dc.iter_mut().zip(gc.iter()).zip(xh.iter()) {
                *d = istd * (gv * g - m1 - xv * m2);
            }
        }
        Ok(dx)
    }
}
