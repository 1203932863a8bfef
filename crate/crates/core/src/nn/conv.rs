//! 3D convolution with three execution paths:
//! - pointwise (1x1x1, stride 1): a plain GEMM over flattened cells,
//! - depthwise (groups == channels): direct loops over kernel taps with
//!   contiguous inner slices,
//! - general (currently groups == 1): im2col followed by GEMM.
//!
//! All paths are bias-free (the backbone always follows convolutions with a
//! normalization layer, which has its own shift).

use ndarray::{s, Array2, Array4, Axis, Ix5};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::{he_normal, Param, Real};

#[derive(Debug, Clone)]
pub struct Conv3d<F: Real> {
    pub w: Param<F>,
    pub stride: [usize; 3],
    pub padding: [usize; 3],
    pub groups: usize,
    /// First layer of the network: input gradients are never consumed, so
    /// `backward` skips the col2im scatter entirely.
    pub skip_input_grad: bool,
    in_channels: usize,
    out_channels: usize,
    kernel: [usize; 3],
    x_cache: Option<Array4<F>>,
    cols_cache: Option<Array2<F>>,
}

/// Valid output range along one axis for a kernel tap: all `o` with
/// `0 <= o*stride + tap - pad < in_len`.
fn tap_range(out_len: usize, stride: usize, tap: usize, pad: usize, in_len: usize) -> (usize, usize) {
    let off = tap as i64 - pad as i64;
    let lo = if off >= 0 { 0 } else { ((-off) as usize).div_ceil(stride) };
    let max_i = in_len as i64 - 1 - off;
    if max_i < 0 {
        return (0, 0);
    }
    let hi = (max_i as usize / stride + 1).min(out_len);
    (lo.min(hi), hi)
}

impl<F: Real> Conv3d<F> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: &str,
        in_channels: usize,
        out_channels: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        padding: [usize; 3],
        groups: usize,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel.contains(&0) || stride.contains(&0) {
            return Err(Error::InvalidInput("conv dims must be positive".into()));
        }
        if groups == 0 || in_channels % groups != 0 || out_channels % groups != 0 {
            return Err(Error::InvalidInput(format!(
                "groups {groups} must divide channels {in_channels}/{out_channels}"
            )));
        }
        let depthwise = groups == in_channels && groups == out_channels;
        if groups != 1 && !depthwise {
            return Err(Error::Unimplemented(
                "grouped conv supported only as depthwise (groups == cin == cout)".into(),
            ));
        }
        let k3 = kernel[0] * kernel[1] * kernel[2];
        let shape = [out_channels, in_channels / groups, kernel[0], kernel[1], kernel[2]];
        let fan_out = out_channels * k3 / groups;
        let w = Param::new(format!("{name}.weight"), he_normal(&shape, fan_out, rng), true);
        Ok(Conv3d {
            w,
            stride,
            padding,
            groups,
            skip_input_grad: false,
            in_channels,
            out_channels,
            kernel,
            x_cache: None,
            cols_cache: None,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn kernel(&self) -> [usize; 3] {
        self.kernel
    }

    fn out_spatial(&self, input: [usize; 3]) -> Result<[usize; 3]> {
        let mut out = [0usize; 3];
        for a in 0..3 {
            let padded = input[a] + 2 * self.padding[a];
            if padded < self.kernel[a] {
                return Err(Error::ShapeMismatch(format!(
                    "axis {a}: input {} + padding too small for kernel {}",
                    input[a], self.kernel[a]
                )));
            }
            out[a] = (padded - self.kernel[a]) / self.stride[a] + 1;
        }
        Ok(out)
    }

    /// Output `[C, T, H, W]` for a given input shape.
    pub fn out_dims(&self, input: [usize; 4]) -> Result<[usize; 4]> {
        if input[0] != self.in_channels {
            return Err(Error::ShapeMismatch(format!(
                "conv expects {} input channels, got {}",
                self.in_channels, input[0]
            )));
        }
        let sp = self.out_spatial([input[1], input[2], input[3]])?;
        Ok([self.out_channels, sp[0], sp[1], sp[2]])
    }

    fn is_pointwise(&self) -> bool {
        self.groups == 1
            && self.kernel == [1, 1, 1]
            && self.stride == [1, 1, 1]
            && self.padding == [0, 0, 0]
    }

    fn is_depthwise(&self) -> bool {
        self.groups > 1
    }

    pub fn forward(&mut self, x: &Array4<F>, train: bool) -> Result<Array4<F>> {
        let (cin, t, h, w) = x.dim();
        let out_dims = self.out_dims([cin, t, h, w])?;
        let y = if self.is_pointwise() {
            self.forward_pointwise(x, out_dims, train)
        } else if self.is_depthwise() {
            self.forward_depthwise(x, out_dims, train)
        } else {
            self.forward_general(x, out_dims, train)
        };
        Ok(y)
    }

    /// Propagate output gradients; accumulates into `w.grad` and returns the
    /// input gradient (or `None` when `skip_input_grad`).
    pub fn backward(&mut self, gy: &Array4<F>) -> Result<Option<Array4<F>>> {
        if self.is_pointwise() {
            self.backward_pointwise(gy)
        } else if self.is_depthwise() {
            self.backward_depthwise(gy)
        } else {
            self.backward_general(gy)
        }
    }

    // ---- pointwise -------------------------------------------------------

    fn forward_pointwise(&mut self, x: &Array4<F>, out_dims: [usize; 4], train: bool) -> Array4<F> {
        let (cin, t, h, w) = x.dim();
        let n = t * h * w;
        let x2 = x.view().into_shape_with_order((cin, n)).expect("standard layout");
        let w2 = self
            .w
            .value
            .view()
            .into_shape_with_order((self.out_channels, cin))
            .expect("standard layout");
        let y2 = w2.dot(&x2);
        if train {
            self.x_cache = Some(x.clone());
        }
        y2.into_shape_with_order((out_dims[0], out_dims[1], out_dims[2], out_dims[3]))
            .expect("len matches")
    }

    fn backward_pointwise(&mut self, gy: &Array4<F>) -> Result<Option<Array4<F>>> {
        let x = self.x_cache.take().ok_or_else(|| {
            Error::InvalidInput("conv backward called without cached forward".into())
        })?;
        let (cin, t, h, w) = x.dim();
        let n = t * h * w;
        let x2 = x.view().into_shape_with_order((cin, n)).expect("standard layout");
        let gy2 = gy
            .view()
            .into_shape_with_order((self.out_channels, n))
            .map_err(|_| Error::ShapeMismatch("conv backward: gradient shape".into()))?;
        let dw = gy2.dot(&x2.t());
        let mut wg = self
            .w
            .grad
            .view_mut()
            .into_shape_with_order((self.out_channels, cin))
            .expect("standard layout");
        wg += &dw;
        if self.skip_input_grad {
            return Ok(None);
        }
        let w2 = self
            .w
            .value
            .view()
            .into_shape_with_order((self.out_channels, cin))
            .expect("standard layout");
        let dx2 = w2.t().dot(&gy2);
        Ok(Some(dx2.into_shape_with_order((cin, t, h, w)).expect("len matches")))
    }

    // ---- depthwise -------------------------------------------------------

    fn forward_depthwise(&mut self, x: &Array4<F>, out_dims: [usize; 4], train: bool) -> Array4<F> {
        let (_, t, h, w) = x.dim();
        let [c, to, ho, wo] = out_dims;
        let [kt, kh, kw] = self.kernel;
        let [st, sh, sw] = self.stride;
        let [pt, ph, pw] = self.padding;
        let mut y = Array4::<F>::zeros((c, to, ho, wo));
        let wv5 = self.w.value.view().into_dimensionality::<Ix5>().expect("conv weight is 5d");
        for ch in 0..c {
            let xc = x.index_axis(Axis(0), ch);
            let mut yc = y.index_axis_mut(Axis(0), ch);
            for dt in 0..kt {
                let (t_lo, t_hi) = tap_range(to, st, dt, pt, t);
                for dh in 0..kh {
                    let (h_lo, h_hi) = tap_range(ho, sh, dh, ph, h);
                    for dw in 0..kw {
                        let (w_lo, w_hi) = tap_range(wo, sw, dw, pw, w);
                        if w_lo >= w_hi {
                            continue;
                        }
                        let coef = wv5[[ch, 0, dt, dh, dw]];
                        let iw_lo = w_lo * sw + dw - pw;
                        let iw_hi = (w_hi - 1) * sw + dw - pw + 1;
                        for ot in t_lo..t_hi {
                            let it = ot * st + dt - pt;
                            for oh in h_lo..h_hi {
                                let ih = oh * sh + dh - ph;
                                let src = xc.slice(s![it, ih, iw_lo..iw_hi;sw]);
                                let mut dst = yc.slice_mut(s![ot, oh, w_lo..w_hi]);
                                dst.zip_mut_with(&src, |d, &v| *d = *d + coef * v);
                            }
                        }
                    }
                }
            }
        }
        if train {
            self.x_cache = Some(x.clone());
        }
        y
    }

    fn backward_depthwise(&mut self, gy: &Array4<F>) -> Result<Option<Array4<F>>> {
        let x = self.x_cache.take().ok_or_else(|| {
            Error::InvalidInput("conv backward called without cached forward".into())
        })?;
        let (c, t, h, w) = x.dim();
        let (_, to, ho, wo) = gy.dim();
        let [kt, kh, kw] = self.kernel;
        let [st, sh, sw] = self.stride;
        let [pt, ph, pw] = self.padding;
        let mut dx = Array4::<F>::zeros((c, t, h, w));
        let wv5 = self.w.value.view().into_dimensionality::<Ix5>().expect("conv weight is 5d");
        let mut wg5 = self.w.grad.view_mut().into_dimensionality::<Ix5>().expect("conv grad is 5d");
        for ch in 0..c {
            let xc = x.index_axis(Axis(0), ch);
            let gc = gy.index_axis(Axis(0), ch);
            let mut dxc = dx.index_axis_mut(Axis(0), ch);
            for dt in 0..kt {
                let (t_lo, t_hi) = tap_range(to, st, dt, pt, t);
                for dh in 0..kh {
                    let (h_lo, h_hi) = tap_range(ho, sh, dh, ph, h);
                    for dw in 0..kw {
                        let (w_lo, w_hi) = tap_range(wo, sw, dw, pw, w);
                        if w_lo >= w_hi {
                            continue;
                        }
                        let coef = wv5[[ch, 0, dt, dh, dw]];
                        let mut dcoef = F::zero();
                        let iw_lo = w_lo * sw + dw - pw;
                        let iw_hi = (w_hi - 1) * sw + dw - pw + 1;
                        for ot in t_lo..t_hi {
                            let it = ot * st + dt - pt;
                            for oh in h_lo..h_hi {
                                let ih = oh * sh + dh - ph;
                                let src = xc.slice(s![it, ih, iw_lo..iw_hi;sw]);
                                let g = gc.slice(s![ot, oh, w_lo..w_hi]);
                                dcoef = dcoef + src.iter().zip(g.iter()).map(|(&a, &b)| a * b).sum();
                                if !self.skip_input_grad {
                                    let mut d = dxc.slice_mut(s![it, ih, iw_lo..iw_hi;sw]);
                                    d.zip_mut_with(&g, |dv, &gv| *dv = *dv + coef * gv);
                                }
                            }
                        }
                        wg5[[ch, 0, dt, dh, dw]] = wg5[[ch, 0, dt, dh, dw]] + dcoef;
                    }
                }
            }
        }
        Ok(if self.skip_input_grad { None } else { Some(dx) })
    }

    // ---- general (im2col) ------------------------------------------------

    fn im2col(&self, x: &Array4<F>, out_sp: [usize; 3]) -> Array2<F> {
        let (cin, t, h, w) = x.dim();
        let [to, ho, wo] = out_sp;
        let [kt, kh, kw] = self.kernel;
        let [st, sh, sw] = self.stride;
        let [pt, ph, pw] = self.padding;
        let n = to * ho * wo;
        let mut cols = Array2::<F>::zeros((cin * kt * kh * kw, n));
        for c in 0..cin {
            let xc = x.index_axis(Axis(0), c);
            for dt in 0..kt {
                let (t_lo, t_hi) = tap_range(to, st, dt, pt, t);
                for dh in 0..kh {
                    let (h_lo, h_hi) = tap_range(ho, sh, dh, ph, h);
                    for dw in 0..kw {
                        let (w_lo, w_hi) = tap_range(wo, sw, dw, pw, w);
                        if w_lo >= w_hi {
                            continue;
                        }
                        let r = ((c * kt + dt) * kh + dh) * kw + dw;
                        let mut row = cols.row_mut(r);
                        let iw_lo = w_lo * sw + dw - pw;
                        let iw_hi = (w_hi - 1) * sw + dw - pw + 1;
                        for ot in t_lo..t_hi {
                            let it = ot * st + dt - pt;
                            for oh in h_lo..h_hi {
                                let ih = oh * sh + dh - ph;
                                let base = (ot * ho + oh) * wo;
                                let src = xc.slice(s![it, ih, iw_lo..iw_hi;sw]);
                                let mut dst = row.slice_mut(s![base + w_lo..base + w_hi]);
                                dst.assign(&src);
                            }
                        }
                    }
                }
            }
        }
        cols
    }

    fn forward_general(&mut self, x: &Array4<F>, out_dims: [usize; 4], train: bool) -> Array4<F> {
        let [cout, to, ho, wo] = out_dims;
        let cols = self.im2col(x, [to, ho, wo]);
        let ck3 = cols.dim().0;
        let w2 = self
            .w
            .value
            .view()
            .into_shape_with_order((cout, ck3))
            .expect("standard layout");
        let y2 = w2.dot(&cols);
        if train {
            self.cols_cache = Some(cols);
            if !self.skip_input_grad {
                // Only the input *shape* is needed for col2im; keep it cheaply.
                self.x_cache = Some(Array4::zeros(x.raw_dim()));
            }
        }
        y2.into_shape_with_order((cout, to, ho, wo)).expect("len matches")
    }

    fn backward_general(&mut self, gy: &Array4<F>) -> Result<Option<Array4<F>>> {
        let cols = self.cols_cache.take().ok_or_else(|| {
            Error::InvalidInput("conv backward called without cached forward".into())
        })?;
        let (cout, to, ho, wo) = gy.dim();
        let n = to * ho * wo;
        let ck3 = cols.dim().0;
        let gy2 = gy
            .view()
            .into_shape_with_order((cout, n))
            .map_err(|_| Error::ShapeMismatch("conv backward: gradient shape".into()))?;
        let dw = gy2.dot(&cols.t());
        let mut wg = self
            .w
            .grad
            .view_mut()
            .into_shape_with_order((cout, ck3))
            .expect("standard layout");
        wg += &dw;
        if self.skip_input_grad {
            return Ok(None);
        }
        let x_shape = self.x_cache.take().ok_or_else(|| {
            Error::InvalidInput("conv backward called without cached input shape".into())
        })?;
        let w2 = self
            .w
            .value
            .view()
            .into_shape_with_order((cout, ck3))
            .expect("standard layout");
        let dcols = w2.t().dot(&gy2);
        // col2im scatter-add (exact reverse of im2col).
        let mut dx = x_shape;
        let (cin, t, h, w) = dx.dim();
        let [kt, kh, kw] = self.kernel;
        let [st, sh, sw] = self.stride;
        let [pt, ph, pw] = self.padding;
        for c in 0..cin {
            let mut dxc = dx.index_axis_mut(Axis(0), c);
            for dt in 0..kt {
                let (t_lo, t_hi) = tap_range(to, st, dt, pt, t);
                for dh in 0..kh {
                    let (h_lo, h_hi) = tap_range(ho, sh, dh, ph, h);
                    for dw_ in 0..kw {
                        let (w_lo, w_hi) = tap_range(wo, sw, dw_, pw, w);
                        if w_lo >= w_hi {
                            continue;
                        }
                        let r = ((c * kt + dt) * kh + dh) * kw + dw_;
                        let row = dcols.row(r);
                        let iw_lo = w_lo * sw + dw_ - pw;
                        let iw_hi = (w_hi - 1) * sw + dw_ - pw + 1;
                        for ot in t_lo..t_hi {
                            let it = ot * st + dt - pt;
                            for oh in h_lo..h_hi {
                                let ih = oh * sh + dh - ph;
                                let base = (ot * ho + oh) * wo;
                                let src = row.slice(s![base + w_lo..base + w_hi]);
                                let mut d = dxc.slice_mut(s![it, ih, iw_lo..iw_hi;sw]);
                                d.zip_mut_with(&src, |dv, &sv| *dv = *dv + sv);
                            }
                        }
                    }
                }
            }
        }
        Ok(Some(dx))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use ndarray::{ArrayD, IxDyn};
    use rand::Rng;

    fn rand_array4(dims: (usize, usize, usize, usize), rng: &mut ChaCha8Rng) -> Array4<f64> {
        Array4::from_shape_simple_fn(dims, || rng.random::<f64>() * 2.0 - 1.0)
    }

    /// Scalar loss = sum(y * proj) with a fixed random projection, so
    /// dL/dy = proj and parameter/input gradients can be FD-checked.
    fn fd_check_conv(
        mut conv: Conv3d<f64>,
        x: Array4<f64>,
        check_input_grad: bool,
        rng: &mut ChaCha8Rng,
    ) {
        let y = conv.forward(&x, true).unwrap();
        let proj = Array4::from_shape_simple_fn(y.dim(), || rng.random::<f64>() * 2.0 - 1.0);
        conv.w.zero_grad();
        let dx = conv.backward(&proj).unwrap();

        let eps = 1e-6;
        // Weight gradient.
        let wdims: Vec<usize> = conv.w.value.shape().to_vec();
        let mut checked = 0;
        let total = conv.w.value.len();
        for idx in 0..total {
            // Sample a subset on big tensors to keep the test fast.
            if total > 60 && idx % 7 != 0 {
                continue;
            }
            let nd = IxDyn(&unflatten(idx, &wdims));
            let orig = conv.w.value[&nd];
            conv.w.value[&nd] = orig + eps;
            let yp = conv.forward(&x, false).unwrap();
            conv.w.value[&nd] = orig - eps;
            let ym = conv.forward(&x, false).unwrap();
            conv.w.value[&nd] = orig;
            let fd = ((&yp - &ym) * &proj).sum() / (2.0 * eps);
            let an = conv.w.grad[&nd];
            let denom = fd.abs().max(an.abs()).max(1e-6);
            assert!((fd - an).abs() / denom < 1e-4, "dW[{nd:?}]: fd {fd} vs analytic {an}");
            checked += 1;
        }
        assert!(checked > 0);

        if check_input_grad {
            let dx = dx.expect("input grad requested");
            let total = x.len();
            for idx in 0..total {
                if total > 60 && idx % 13 != 0 {
                    continue;
                }
                let dims = x.dim();
                let nd = unflatten(idx, &[dims.0, dims.1, dims.2, dims.3]);
                let nd = (nd[0], nd[1], nd[2], nd[3]);
                let mut xp = x.clone();
                xp[nd] += eps;
                let mut xm = x.clone();
                xm[nd] -= eps;
                let yp = conv.forward(&xp, false).unwrap();
                let ym = conv.forward(&xm, false).unwrap();
                let fd = ((&yp - &ym) * &proj).sum() / (2.0 * eps);
                let an = dx[nd];
                let denom = fd.abs().max(an.abs()).max(1e-6);
                assert!((fd - an).abs() / denom < 1e-4, "dX[{nd:?}]: fd {fd} vs analytic {an}");
            }
        }
    }

    fn unflatten(mut idx: usize, dims: &[usize]) -> Vec<usize> {
        let mut out = vec![0; dims.len()];
        for a in (0..dims.len()).rev() {
            out[a] = idx % dims[a];
            idx /= dims[a];
        }
        out
    }

    #[test]
    fn identity_kernel_reproduces_input() {
        let mut rng = rng_from_seed(1);
        let mut conv =
            Conv3d::<f64>::new("id", 1, 1, [3, 3, 3], [1, 1, 1], [1, 1, 1], 1, &mut rng).unwrap();
        conv.w.value = ArrayD::zeros(IxDyn(&[1, 1, 3, 3, 3]));
        conv.w.value[IxDyn(&[0, 0, 1, 1, 1])] = 1.0;
        let x = rand_array4((1, 4, 5, 5), &mut rng);
        let y = conv.forward(&x, false).unwrap();
        assert!((&y - &x).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn output_dims_follow_stride_and_padding() {
        let mut rng = rng_from_seed(2);
        let conv =
            Conv3d::<f32>::new("s", 3, 8, [3, 3, 3], [1, 2, 2], [1, 1, 1], 1, &mut rng).unwrap();
        assert_eq!(conv.out_dims([3, 16, 112, 112]).unwrap(), [8, 16, 56, 56]);
        assert!(conv.out_dims([4, 16, 112, 112]).is_err());
    }

    #[test]
    fn general_conv_gradients_match_finite_differences() {
        let mut rng = rng_from_seed(3);
        let conv =
            Conv3d::<f64>::new("g", 2, 3, [3, 3, 3], [1, 2, 2], [1, 1, 1], 1, &mut rng).unwrap();
        let x = rand_array4((2, 4, 6, 6), &mut rng);
        fd_check_conv(conv, x, true, &mut rng);
    }

    #[test]
    fn depthwise_conv_gradients_match_finite_differences() {
        let mut rng = rng_from_seed(4);
        let conv =
            Conv3d::<f64>::new("d", 3, 3, [3, 3, 3], [2, 2, 2], [1, 1, 1], 3, &mut rng).unwrap();
        let x = rand_array4((3, 5, 6, 6), &mut rng);
        fd_check_conv(conv, x, true, &mut rng);
    }

    #[test]
    fn pointwise_conv_gradients_match_finite_differences() {
        let mut rng = rng_from_seed(5);
        let conv =
            Conv3d::<f64>::new("p", 4, 6, [1, 1, 1], [1, 1, 1], [0, 0, 0], 1, &mut rng).unwrap();
        let x = rand_array4((4, 3, 4, 4), &mut rng);
        fd_check_conv(conv, x, true, &mut rng);
    }

    #[test]
    fn skip_input_grad_returns_none() {
        let mut rng = rng_from_seed(6);
        let mut conv =
            Conv3d::<f64>::new("f", 2, 2, [3, 3, 3], [1, 1, 1], [1, 1, 1], 1, &mut rng).unwrap();
        conv.skip_input_grad = true;
        let x = rand_array4((2, 4, 4, 4), &mut rng);
        let y = conv.forward(&x, true).unwrap();
        let gy = Array4::from_elem(y.dim(), 1.0);
        assert!(conv.backward(&gy).unwrap().is_none());
    }

    #[test]
    fn unsupported_group_layout_is_rejected() {
        let mut rng = rng_from_seed(7);
        assert!(Conv3d::<f32>::new("x", 4, 8, [3, 3, 3], [1, 1, 1], [1, 1, 1], 2, &mut rng).is_err());
    }

    #[test]
    fn depthwise_matches_general_on_single_channel() {
        // With one channel the depthwise and im2col paths compute the same
        // convolution; compare them on identical weights.
        let mut rng = rng_from_seed(8);
        let mut conv =
            Conv3d::<f64>::new("a", 1, 1, [3, 3, 3], [1, 2, 1], [1, 0, 1], 1, &mut rng).unwrap();
        let x = rand_array4((1, 5, 7, 6), &mut rng);
        let out_dims = conv.out_dims([1, 5, 7, 6]).unwrap();
        let general = conv.forward_general(&x, out_dims, false);
        let depthwise = conv.forward_depthwise(&x, out_dims, false);
        assert!((&general - &depthwise).iter().all(|v| v.abs() < 1e-10));
    }
}
