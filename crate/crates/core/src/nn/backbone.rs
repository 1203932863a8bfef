//! Resource-efficient 3D MobileNetV2 classifier.
//!
//! Architecture: a 3x3x3 stem with stride (1, 2, 2), seven groups of
//! inverted-residual blocks (expansion t, channels c, repeats n, stride s):
//!
//! ```text
//! t  c    n  s
//! 1  16   1  (1,1,1)
//! 6  24   2  (2,2,2)
//! 6  32   3  (2,2,2)
//! 6  64   4  (2,2,2)
//! 6  96   3  (1,1,1)
//! 6  160  3  (2,2,2)
//! 6  320  1  (2,2,2 -> 1,1,1 in this variant)
//! ```
//!
//! followed by a 1x1x1 conv to 1280 features, global average pooling,
//! dropout and a linear head. The width multiplier scales every channel
//! count by truncation (`int(c * w)`); the 1280-wide feature stays fixed for
//! multipliers <= 1.
//!
//! Feature maps are numbered for the excitation hook: 1 is the stem output,
//! `1 + i + 1` is the output of block `i`. Excitation is strictly a training
//! construct: passing it to an eval forward is an error, so the inference
//! path cannot contain it.

use std::collections::BTreeMap;

use ndarray::{Array1, Array3, Array4, ArrayD};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::nn::conv::Conv3d;
use crate::nn::excite::{excite_backward, excite_forward};
use crate::nn::flops::LayerOp;
use crate::nn::norm::Norm3d;
use crate::nn::ops::{Dropout, GlobalAvgPool, Linear, Relu6};
use crate::nn::{Param, Real};
use crate::rng::derived_rng;

/// One inverted-residual stage description (pre-scaling).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BlockSetting {
    pub expand: usize,
    pub channels: usize,
    pub repeats: usize,
    pub stride: [usize; 3],
}

/// Static architecture description; the single source of truth for layer
/// construction and analytic FLOPs accounting.
#[derive(Debug, Clone, PartialEq)]
pub struct ArchSpec {
    pub name: String,
    pub in_channels: usize,
    pub stem_channels: usize,
    pub settings: Vec<BlockSetting>,
    pub last_channel: usize,
    pub width_mult: f64,
    pub num_classes: usize,
    pub dropout: f64,
}

/// Channel scaling by truncation, floored at 1.
pub fn scale_channels(c: usize, width_mult: f64) -> usize {
    ((c as f64 * width_mult) as usize).max(1)
}

impl ArchSpec {
    /// The classifier used throughout: 3D MobileNetV2 at a given width.
    pub fn mobilenet_v2(width_mult: f64, num_classes: usize, dropout: f64) -> Self {
        ArchSpec {
            name: "mobilenet3d_v2".into(),
            in_channels: 3,
            stem_channels: 32,
            settings: vec![
                BlockSetting { expand: 1, channels: 16, repeats: 1, stride: [1, 1, 1] },
                BlockSetting { expand: 6, channels: 24, repeats: 2, stride: [2, 2, 2] },
                BlockSetting { expand: 6, channels: 32, repeats: 3, stride: [2, 2, 2] },
                BlockSetting { expand: 6, channels: 64, repeats: 4, stride: [2, 2, 2] },
                BlockSetting { expand: 6, channels: 96, repeats: 3, stride: [1, 1, 1] },
                BlockSetting { expand: 6, channels: 160, repeats: 3, stride: [2, 2, 2] },
                BlockSetting { expand: 6, channels: 320, repeats: 1, stride: [1, 1, 1] },
            ],
            last_channel: 1280,
            width_mult,
            num_classes,
            dropout,
        }
    }

    pub fn scaled_stem(&self) -> usize {
        scale_channels(self.stem_channels, self.width_mult)
    }

    pub fn scaled_last(&self) -> usize {
        if self.width_mult > 1.0 {
            scale_channels(self.last_channel, self.width_mult)
        } else {
            self.last_channel
        }
    }

    /// Flattened per-repeat block parameters after width scaling:
    /// `(in, hidden, out, stride, has_expand)`.
    fn scaled_blocks(&self) -> Vec<(usize, usize, usize, [usize; 3], bool)> {
        let mut out = Vec::new();
        let mut cin = self.scaled_stem();
        for s in &self.settings {
            let cout = scale_channels(s.channels, self.width_mult);
            for r in 0..s.repeats {
                let stride = if r == 0 { s.stride } else { [1, 1, 1] };
                let hidden = ((cin as f64 * s.expand as f64).round() as usize).max(1);
                out.push((cin, hidden, cout, stride, s.expand != 1));
                cin = cout;
            }
        }
        out
    }

    /// Compute-bearing layers (convs and the linear head) for FLOPs
    /// accounting; identical regardless of excitation configuration.
    pub fn layer_ops(&self) -> Vec<LayerOp> {
        let mut ops = Vec::new();
        ops.push(LayerOp::Conv {
            name: "stem".into(),
            cin: self.in_channels,
            cout: self.scaled_stem(),
            kernel: [3, 3, 3],
            stride: [1, 2, 2],
            padding: [1, 1, 1],
            groups: 1,
        });
        for (i, (cin, hidden, cout, stride, has_expand)) in
            self.scaled_blocks().into_iter().enumerate()
        {
            if has_expand {
                ops.push(LayerOp::Conv {
                    name: format!("block{i}.expand"),
                    cin,
                    cout: hidden,
                    kernel: [1, 1, 1],
                    stride: [1, 1, 1],
                    padding: [0, 0, 0],
                    groups: 1,
                });
            }
            ops.push(LayerOp::Conv {
                name: format!("block{i}.depthwise"),
                cin: hidden,
                cout: hidden,
                kernel: [3, 3, 3],
                stride,
                padding: [1, 1, 1],
                groups: hidden,
            });
            ops.push(LayerOp::Conv {
                name: format!("block{i}.project"),
                cin: hidden,
                cout,
                kernel: [1, 1, 1],
                stride: [1, 1, 1],
                padding: [0, 0, 0],
                groups: 1,
            });
        }
        let last_in = self
            .scaled_blocks()
            .last()
            .map(|&(_, _, cout, _, _)| cout)
            .unwrap_or_else(|| self.scaled_stem());
        ops.push(LayerOp::Conv {
            name: "head".into(),
            cin: last_in,
            cout: self.scaled_last(),
            kernel: [1, 1, 1],
            stride: [1, 1, 1],
            padding: [0, 0, 0],
            groups: 1,
        });
        ops.push(LayerOp::Linear {
            name: "classifier".into(),
            cin: self.scaled_last(),
            cout: self.num_classes,
        });
        ops
    }
}

#[derive(Debug)]
struct InvertedResidual<F: Real> {
    expand: Option<(Conv3d<F>, Norm3d<F>, Relu6<F>)>,
    dw: Conv3d<F>,
    dw_norm: Norm3d<F>,
    dw_act: Relu6<F>,
    project: Conv3d<F>,
    project_norm: Norm3d<F>,
    use_residual: bool,
}

impl<F: Real> InvertedResidual<F> {
    fn new(
        name: &str,
        cin: usize,
        hidden: usize,
        cout: usize,
        stride: [usize; 3],
        has_expand: bool,
        rng: &mut ChaCha8Rng,
    ) -> Result<Self> {
        let expand = if has_expand {
            Some((
                Conv3d::new(
                    &format!("{name}.expand"),
                    cin,
                    hidden,
                    [1, 1, 1],
                    [1, 1, 1],
                    [0, 0, 0],
                    1,
                    rng,
                )?,
                Norm3d::new(&format!("{name}.expand_norm"), hidden),
                Relu6::new(),
            ))
        } else {
            None
        };
        Ok(InvertedResidual {
            expand,
            dw: Conv3d::new(
                &format!("{name}.depthwise"),
                hidden,
                hidden,
                [3, 3, 3],
                stride,
                [1, 1, 1],
                hidden,
                rng,
            )?,
            dw_norm: Norm3d::new(&format!("{name}.depthwise_norm"), hidden),
            dw_act: Relu6::new(),
            project: Conv3d::new(
                &format!("{name}.project"),
                hidden,
                cout,
                [1, 1, 1],
                [1, 1, 1],
                [0, 0, 0],
                1,
                rng,
            )?,
            project_norm: Norm3d::new(&format!("{name}.project_norm"), cout),
            use_residual: stride == [1, 1, 1] && cin == cout,
        })
    }

    fn out_dims(&self, input: [usize; 4]) -> Result<[usize; 4]> {
        let after_expand = match &self.expand {
            Some((c, _, _)) => c.out_dims(input)?,
            None => input,
        };
        let after_dw = self.dw.out_dims(after_expand)?;
        self.project.out_dims(after_dw)
    }

    fn forward(&mut self, x: &Array4<F>, train: bool) -> Result<Array4<F>> {
        let mut h = match &mut self.expand {
            Some((conv, norm, act)) => {
                let a = conv.forward(x, train)?;
                let b = norm.forward(&a, train)?;
                act.forward(&b, train)
            }
            None => x.clone(),
        };
        h = self.dw.forward(&h, train)?;
        h = self.dw_norm.forward(&h, train)?;
        h = self.dw_act.forward(&h, train);
        h = self.project.forward(&h, train)?;
        let mut y = self.project_norm.forward(&h, train)?;
        if self.use_residual {
            y += x;
        }
        Ok(y)
    }

    fn backward(&mut self, gy: &Array4<F>) -> Result<Array4<F>> {
        let g = self.project_norm.backward(gy)?;
        let g = self
            .project
            .backward(&g)?
            .ok_or_else(|| Error::InvalidInput("project conv must produce input grads".into()))?;
        let g = self.dw_act.backward(&g)?;
        let g = self.dw_norm.backward(&g)?;
        let g = self
            .dw
            .backward(&g)?
            .ok_or_else(|| Error::InvalidInput("depthwise conv must produce input grads".into()))?;
        let mut g = match &mut self.expand {
            Some((conv, norm, act)) => {
                let g = act.backward(&g)?;
                let g = norm.backward(&g)?;
                conv.backward(&g)?
                    .ok_or_else(|| Error::InvalidInput("expand conv must produce input grads".into()))?
            }
            None => g,
        };
        if self.use_residual {
            g += gy;
        }
        Ok(g)
    }

    fn collect_params<'a>(&'a mut self, out: &mut Vec<&'a mut Param<F>>) {
        if let Some((conv, norm, _)) = &mut self.expand {
            out.push(&mut conv.w);
            out.push(&mut norm.gamma);
            out.push(&mut norm.beta);
        }
        out.push(&mut self.dw.w);
        out.push(&mut self.dw_norm.gamma);
        out.push(&mut self.dw_norm.beta);
        out.push(&mut self.project.w);
        out.push(&mut self.project_norm.gamma);
        out.push(&mut self.project_norm.beta);
    }

    fn norms_mut(&mut self) -> Vec<&mut Norm3d<F>> {
        let mut v = Vec::new();
        if let Some((_, norm, _)) = &mut self.expand {
            v.push(norm);
        }
        v.push(&mut self.dw_norm);
        v.push(&mut self.project_norm);
        v
    }
}

/// Training-time excitation inputs: decayed strength plus one mask per
/// excitable feature index.
pub struct ExcitationInputs<'a> {
    pub alpha: f64,
    pub masks: &'a BTreeMap<usize, Array3<u8>>,
}

#[derive(Debug)]
pub struct MobileNet3dV2<F: Real> {
    pub spec: ArchSpec,
    stem: Conv3d<F>,
    stem_norm: Norm3d<F>,
    stem_act: Relu6<F>,
    blocks: Vec<InvertedResidual<F>>,
    head: Conv3d<F>,
    head_norm: Norm3d<F>,
    head_act: Relu6<F>,
    pool: GlobalAvgPool,
    dropout: Dropout,
    classifier: Linear<F>,
    // Masks applied during the last training forward, kept for backward.
    excite_stem: Option<(Array3<u8>, f64)>,
    excite_blocks: Vec<Option<(Array3<u8>, f64)>>,
}

impl<F: Real> MobileNet3dV2<F> {
    /// Build with weights drawn from a seed-derived stream; identical seeds
    /// give identical parameters.
    pub fn new(spec: ArchSpec, seed: u64) -> Result<Self> {
        let mut rng = derived_rng(seed, "model-init", 0);
        let mut stem = Conv3d::new(
            "stem",
            spec.in_channels,
            spec.scaled_stem(),
            [3, 3, 3],
            [1, 2, 2],
            [1, 1, 1],
            1,
            &mut rng,
        )?;
        stem.skip_input_grad = true;
        let stem_norm = Norm3d::new("stem_norm", spec.scaled_stem());
        let mut blocks = Vec::new();
        for (i, (cin, hidden, cout, stride, has_expand)) in
            spec.scaled_blocks().into_iter().enumerate()
        {
            blocks.push(InvertedResidual::new(
                &format!("block{i}"),
                cin,
                hidden,
                cout,
                stride,
                has_expand,
                &mut rng,
            )?);
        }
        let last_in = spec
            .scaled_blocks()
            .last()
            .map(|&(_, _, cout, _, _)| cout)
            .unwrap_or_else(|| spec.scaled_stem());
        let head = Conv3d::new(
            "head",
            last_in,
            spec.scaled_last(),
            [1, 1, 1],
            [1, 1, 1],
            [0, 0, 0],
            1,
            &mut rng,
        )?;
        let head_norm = Norm3d::new("head_norm", spec.scaled_last());
        let classifier = Linear::new("classifier", spec.scaled_last(), spec.num_classes, &mut rng);
        let n_blocks = blocks.len();
        Ok(MobileNet3dV2 {
            dropout: Dropout::new(spec.dropout),
            spec,
            stem,
            stem_norm,
            stem_act: Relu6::new(),
            blocks,
            head,
            head_norm,
            head_act: Relu6::new(),
            pool: GlobalAvgPool::new(),
            classifier,
            excite_stem: None,
            excite_blocks: vec![None; n_blocks],
        })
    }

    /// Shapes of the excitable feature maps for a given input shape:
    /// entry 0 is the input itself, 1 the stem output, `1 + i + 1` block `i`.
    pub fn feature_dims(&self, input: [usize; 4]) -> Result<Vec<[usize; 4]>> {
        let mut dims = vec![input];
        let mut cur = self.stem.out_dims(input)?;
        dims.push(cur);
        for b in &self.blocks {
            cur = b.out_dims(cur)?;
            dims.push(cur);
        }
        Ok(dims)
    }

    /// Raw (pre-evidence) class outputs.
    ///
    /// `excitation` is only legal in training mode; `rng` is required when
    /// training with non-zero dropout.
    pub fn forward(
        &mut self,
        x: &Array4<F>,
        train: bool,
        excitation: Option<&ExcitationInputs<'_>>,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Array1<F>> {
        if excitation.is_some() && !train {
            return Err(Error::InvalidInput(
                "excitation is a training-only construct; eval forward must not receive it".into(),
            ));
        }
        self.excite_stem = None;
        for e in &mut self.excite_blocks {
            *e = None;
        }

        let mut h = self.stem.forward(x, train)?;
        h = self.stem_norm.forward(&h, train)?;
        h = self.stem_act.forward(&h, train);
        if let Some(exc) = excitation {
            if let Some(mask) = exc.masks.get(&1) {
                h = excite_forward(&h, mask, exc.alpha)?;
                if train {
                    self.excite_stem = Some((mask.clone(), exc.alpha));
                }
            }
        }
        for (i, block) in self.blocks.iter_mut().enumerate() {
            h = block.forward(&h, train)?;
            if let Some(exc) = excitation {
                if let Some(mask) = exc.masks.get(&(i + 2)) {
                    h = excite_forward(&h, mask, exc.alpha)?;
                    if train {
                        self.excite_blocks[i] = Some((mask.clone(), exc.alpha));
                    }
                }
            }
        }
        h = self.head.forward(&h, train)?;
        h = self.head_norm.forward(&h, train)?;
        h = self.head_act.forward(&h, train);
        let pooled = self.pool.forward(&h, train);
        let dropped = if train && self.dropout.p > 0.0 {
            let rng = rng.as_deref_mut().ok_or_else(|| {
                Error::InvalidInput("training forward with dropout requires an RNG".into())
            })?;
            self.dropout.forward(&pooled, true, rng)
        } else {
            // Eval (or p = 0): identity, no RNG consumed.
            let mut throwaway = crate::rng::rng_from_seed(0);
            self.dropout.forward(&pooled, false, &mut throwaway)
        };
        self.classifier.forward(&dropped, train)
    }

    /// Accumulate parameter gradients from output gradients. Must follow a
    /// training-mode forward.
    pub fn backward(&mut self, g_out: &Array1<F>) -> Result<()> {
        let g = self.classifier.backward(g_out)?;
        let g = self.dropout.backward(&g);
        let g = self.pool.backward(&g)?;
        let g = self.head_act.backward(&g)?;
        let g = self.head_norm.backward(&g)?;
        let mut g = self
            .head
            .backward(&g)?
            .ok_or_else(|| Error::InvalidInput("head conv must produce input grads".into()))?;
        for i in (0..self.blocks.len()).rev() {
            if let Some((mask, alpha)) = self.excite_blocks[i].take() {
                g = excite_backward(&g, &mask, alpha)?;
            }
            g = self.blocks[i].backward(&g)?;
        }
        if let Some((mask, alpha)) = self.excite_stem.take() {
            g = excite_backward(&g, &mask, alpha)?;
        }
        let g = self.stem_act.backward(&g)?;
        let g = self.stem_norm.backward(&g)?;
        let none = self.stem.backward(&g)?;
        debug_assert!(none.is_none(), "stem skips input grads");
        Ok(())
    }

    /// All trainable parameters in a fixed traversal order.
    pub fn params_mut(&mut self) -> Vec<&mut Param<F>> {
        let mut out = Vec::new();
        out.push(&mut self.stem.w);
        out.push(&mut self.stem_norm.gamma);
        out.push(&mut self.stem_norm.beta);
        for b in &mut self.blocks {
            b.collect_params(&mut out);
        }
        out.push(&mut self.head.w);
        out.push(&mut self.head_norm.gamma);
        out.push(&mut self.head_norm.beta);
        out.push(&mut self.classifier.w);
        out.push(&mut self.classifier.b);
        out
    }

    pub fn zero_grad(&mut self) {
        for p in self.params_mut() {
            p.zero_grad();
        }
    }

    pub fn num_params(&mut self) -> usize {
        self.params_mut().iter().map(|p| p.numel()).sum()
    }

    /// Full state (parameters plus running statistics) as named f32 tensors.
    pub fn state_tensors(&mut self) -> Vec<(String, ArrayD<f32>)> {
        let mut out: Vec<(String, ArrayD<f32>)> = Vec::new();
        for p in self.params_mut() {
            out.push((p.name.clone(), p.value.mapv(|v| v.as_f64() as f32)));
        }
        for norm in self.all_norms() {
            out.push((
                format!("{}.running_mean", norm_base_name(&norm.gamma.name)),
                norm.running_mean.mapv(|v| v.as_f64() as f32).into_dyn(),
            ));
            out.push((
                format!("{}.running_var", norm_base_name(&norm.gamma.name)),
                norm.running_var.mapv(|v| v.as_f64() as f32).into_dyn(),
            ));
        }
        out
    }

    /// Load a state previously produced by [`Self::state_tensors`]. Names
    /// and shapes must match exactly; extras or gaps are errors.
    pub fn load_state(&mut self, tensors: &[(String, ArrayD<f32>)]) -> Result<()> {
        let map: BTreeMap<&str, &ArrayD<f32>> =
            tensors.iter().map(|(n, t)| (n.as_str(), t)).collect();
        if map.len() != tensors.len() {
            return Err(Error::InvalidInput("duplicate tensor names in state".into()));
        }
        let mut consumed = 0usize;
        for p in self.params_mut() {
            let t = map.get(p.name.as_str()).ok_or_else(|| {
                Error::MissingArtifact(format!("state tensor {} absent", p.name))
            })?;
            if t.shape() != p.value.shape() {
                return Err(Error::ShapeMismatch(format!(
                    "{}: checkpoint {:?} vs model {:?}",
                    p.name,
                    t.shape(),
                    p.value.shape()
                )));
            }
            p.value = t.mapv(|v| F::of(v as f64));
            consumed += 1;
        }
        for norm in self.all_norms() {
            let base = norm_base_name(&norm.gamma.name).to_string();
            for (suffix, target) in [("running_mean", true), ("running_var", false)] {
                let name = format!("{base}.{suffix}");
                let t = map
                    .get(name.as_str())
                    .ok_or_else(|| Error::MissingArtifact(format!("state tensor {name} absent")))?;
                if t.len() != norm.channels() {
                    return Err(Error::ShapeMismatch(format!("{name}: wrong length")));
                }
                let vals = t.iter().map(|&v| F::of(v as f64)).collect::<Array1<F>>();
                if target {
                    norm.running_mean = vals;
                } else {
                    norm.running_var = vals;
                }
                consumed += 1;
            }
        }
        if consumed != tensors.len() {
            return Err(Error::InvalidInput(format!(
                "state has {} tensors, model consumed {consumed}",
                tensors.len()
            )));
        }
        Ok(())
    }

    fn all_norms(&mut self) -> Vec<&mut Norm3d<F>> {
        let mut v = vec![&mut self.stem_norm];
        for b in &mut self.blocks {
            v.extend(b.norms_mut());
        }
        v.push(&mut self.head_norm);
        v
    }
}

fn norm_base_name(gamma_name: &str) -> &str {
    gamma_name.strip_suffix(".gamma").unwrap_or(gamma_name)
}

/// Backbone registry. The efficient-3D-CNN family evaluated for this system;
/// only the selected design is implemented.
pub const BACKBONE_CANDIDATES: &[&str] = &[
    "mobilenet3d_v1",
    "mobilenet3d_v2",
    "shufflenet3d_v1",
    "shufflenet3d_v2",
    "squeezenet3d",
];

/// Instantiate a backbone by registry key.
pub fn build_backbone<F: Real>(
    arch: &str,
    width_mult: f64,
    num_classes: usize,
    dropout: f64,
    seed: u64,
) -> Result<MobileNet3dV2<F>> {
    match arch {
        "mobilenet3d_v2" => {
            MobileNet3dV2::new(ArchSpec::mobilenet_v2(width_mult, num_classes, dropout), seed)
        }
        other if BACKBONE_CANDIDATES.contains(&other) => Err(Error::Unimplemented(format!(
            "backbone {other} is registered but not implemented; use mobilenet3d_v2"
        ))),
        other => Err(Error::InvalidInput(format!(
            "unknown backbone {other}; candidates: {BACKBONE_CANDIDATES:?}"
        ))),
    }
}
