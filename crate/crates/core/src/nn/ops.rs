//! Pointwise and reduction layers: ReLU6, global average pooling,
//! inverted dropout and the linear classifier head.

use ndarray::{Array1, Array2, Array4};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{normal_init, Param, Real};

/// `clamp(x, 0, 6)`, the MobileNet activation.
#[derive(Debug, Clone, Default)]
pub struct Relu6<F> {
    y_cache: Option<Array4<F>>,
}

impl<F: Real> Relu6<F> {
    pub fn new() -> Self {
        Relu6 { y_cache: None }
    }

    pub fn forward(&mut self, x: &Array4<F>, train: bool) -> Array4<F> {
        let six = F::of(6.0);
        let y = x.mapv(|v| v.max(F::zero()).min(six));
        if train {
            self.y_cache = Some(y.clone());
        }
        y
    }

    pub fn backward(&mut self, gy: &Array4<F>) -> Result<Array4<F>> {
        let y = self.y_cache.take().ok_or_else(|| {
            Error::InvalidInput("relu6 backward called without cached forward".into())
        })?;
        let six = F::of(6.0);
        let mut dx = gy.clone();
        dx.zip_mut_with(&y, |d, &yv| {
            if yv <= F::zero() || yv >= six {
                *d = F::zero();
            }
        });
        Ok(dx)
    }
}

/// Mean over `(T, H, W)`, producing a `[C]` descriptor.
#[derive(Debug, Clone, Default)]
pub struct GlobalAvgPool {
    in_dims: Option<[usize; 4]>,
}

impl GlobalAvgPool {
    pub fn new() -> Self {
        GlobalAvgPool { in_dims: None }
    }

    pub fn forward<F: Real>(&mut self, x: &Array4<F>, train: bool) -> Array1<F> {
        let (c, t, h, w) = x.dim();
        let n = F::of((t * h * w) as f64);
        let mut y = Array1::zeros(c);
        for ch in 0..c {
            y[ch] = x.index_axis(ndarray::Axis(0), ch).sum() / n;
        }
        if train {
            self.in_dims = Some([c, t, h, w]);
        }
        y
    }

    pub fn backward<F: Real>(&mut self, gy: &Array1<F>) -> Result<Array4<F>> {
        let [c, t, h, w] = self.in_dims.take().ok_or_else(|| {
            Error::InvalidInput("pool backward called without cached forward".into())
        })?;
        let n = F::of((t * h * w) as f64);
        let mut dx = Array4::zeros((c, t, h, w));
        for ch in 0..c {
            let g = gy[ch] / n;
            dx.index_axis_mut(ndarray::Axis(0), ch).fill(g);
        }
        Ok(dx)
    }
}

/// Inverted dropout on the pooled descriptor: kept units are scaled by
/// `1/(1-p)` so eval needs no rescaling. Identity when `p == 0` or in eval.
#[derive(Debug, Clone)]
pub struct Dropout {
    pub p: f64,
    mask_cache: Option<Array1<f64>>,
}

impl Dropout {
    pub fn new(p: f64) -> Self {
        assert!((0.0..1.0).contains(&p), "dropout p must be in [0, 1)");
        Dropout { p, mask_cache: None }
    }

    pub fn forward<F: Real>(&mut self, x: &Array1<F>, train: bool, rng: &mut ChaCha8Rng) -> Array1<F> {
        if !train || self.p == 0.0 {
            self.mask_cache = None;
            return x.clone();
        }
        let keep = 1.0 - self.p;
        let mask =
            Array1::from_shape_simple_fn(x.len(), || {
                if rng.random::<f64>() < self.p {
                    0.0
                } else {
                    1.0 / keep
                }
            });
        let y = ndarray::Zip::from(x).and(&mask).map_collect(|&v, &m| v * F::of(m));
        self.mask_cache = Some(mask);
        y
    }

    pub fn backward<F: Real>(&mut self, gy: &Array1<F>) -> Array1<F> {
        match self.mask_cache.take() {
            Some(mask) => ndarray::Zip::from(gy).and(&mask).map_collect(|&g, &m| g * F::of(m)),
            None => gy.clone(),
        }
    }
}

/// Fully connected head `y = W x + b`.
#[derive(Debug, Clone)]
pub struct Linear<F: Real> {
    pub w: Param<F>,
    pub b: Param<F>,
    x_cache: Option<Array1<F>>,
}

impl<F: Real> Linear<F> {
    pub fn new(name: &str, in_features: usize, out_features: usize, rng: &mut ChaCha8Rng) -> Self {
        Linear {
            w: Param::new(
                format!("{name}.weight"),
                normal_init(&[out_features, in_features], 0.01, rng),
                true,
            ),
            b: Param::new(format!("{name}.bias"), ndarray::ArrayD::zeros(vec![out_features]), false),
            x_cache: None,
        }
    }

    pub fn forward(&mut self, x: &Array1<F>, train: bool) -> Result<Array1<F>> {
        let (o, i) = {
            let d = self.w.value.shape();
            (d[0], d[1])
        };
        if x.len() != i {
            return Err(Error::ShapeMismatch(format!(
                "linear expects {i} inputs, got {}",
                x.len()
            )));
        }
        let w2: Array2<F> = self
            .w
            .value
            .view()
            .into_shape_with_order((o, i))
            .expect("standard layout")
            .to_owned();
        let mut y = w2.dot(x);
        for (yi, bv) in y.iter_mut().zip(self.b.value.iter()) {
            *yi = *yi + *bv;
        }
        if train {
            self.x_cache = Some(x.clone());
        }
        Ok(y)
    }

    pub fn backward(&mut self, gy: &Array1<F>) -> Result<Array1<F>> {
        let x = self.x_cache.take().ok_or_else(|| {
            Error::InvalidInput("linear backward called without cached forward".into())
        })?;
        let (o, i) = {
            let d = self.w.value.shape();
            (d[0], d[1])
        };
        let mut wg = self
            .w
            .grad
            .view_mut()
            .into_shape_with_order((o, i))
            .expect("standard layout");
        for r in 0..o {
            let g = gy[r];
            for c in 0..i {
                wg[[r, c]] = wg[[r, c]] + g * x[c];
            }
        }
        for (bg, &g) in self.b.grad.iter_mut().zip(gy.iter()) {
            *bg = *bg + g;
        }
        let w2 = self
            .w
            .value
            .view()
            .into_shape_with_order((o, i))
            .expect("standard layout");
        Ok(w2.t().dot(gy))
    }
}
