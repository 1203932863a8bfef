//! Analytic multiply-add accounting over the compute-bearing layers.
//!
//! Conventions: one multiply-accumulate (MAC) = 2 FLOPs; a convolution costs
//! `(kT*kH*kW*Cin/groups) * Cout * Tout * Hout * Wout` MACs; biases and
//! normalization are ignored (they are sub-percent noise at these scales).
//! The count depends only on the architecture description and input shape,
//! never on excitation configuration, which has no inference-time layers.

use serde::Serialize;

use crate::error::{Error, Result};

/// A compute-bearing layer in propagation order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum LayerOp {
    Conv {
        name: String,
        cin: usize,
        cout: usize,
        kernel: [usize; 3],
        stride: [usize; 3],
        padding: [usize; 3],
        groups: usize,
    },
    /// Acts on the pooled `[cin]` descriptor.
    Linear { name: String, cin: usize, cout: usize },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerCost {
    pub name: String,
    pub macs: u64,
    pub flops: u64,
    /// Output shape after this layer (`[C]` for linear).
    pub out_dims: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FlopsReport {
    pub input_dims: [usize; 4],
    pub layers: Vec<LayerCost>,
    pub total_macs: u64,
    pub total_flops: u64,
    /// Trainable parameters in the counted layers (conv weights plus linear
    /// weight/bias; normalization affines excluded here).
    pub counted_params: u64,
}

/// Propagate `input` (`[C, T, H, W]`) through the op list, accumulating MACs.
pub fn count_flops(ops: &[LayerOp], input: [usize; 4]) -> Result<FlopsReport> {
    if input.contains(&0) {
        return Err(Error::InvalidInput("input dims must be positive".into()));
    }
    let mut cur = input;
    let mut pooled = false;
    let mut layers = Vec::new();
    let mut total: u64 = 0;
    let mut params: u64 = 0;
    for op in ops {
        match op {
            LayerOp::Conv { name, cin, cout, kernel, stride, padding, groups } => {
                if pooled {
                    return Err(Error::InvalidInput(format!(
                        "conv {name} after pooling in op list"
                    )));
                }
                if cur[0] != *cin {
                    return Err(Error::ShapeMismatch(format!(
                        "{name}: expects {cin} channels, got {}",
                        cur[0]
                    )));
                }
                if *groups == 0 || cin % groups != 0 || cout % groups != 0 {
                    return Err(Error::InvalidInput(format!("{name}: bad groups {groups}")));
                }
                let mut out = [*cout, 0, 0, 0];
                for a in 0..3 {
                    let padded = cur[a + 1] + 2 * padding[a];
                    if padded < kernel[a] {
                        return Err(Error::ShapeMismatch(format!(
                            "{name}: axis {a} collapses below kernel"
                        )));
                    }
                    out[a + 1] = (padded - kernel[a]) / stride[a] + 1;
                }
                let k3 = (kernel[0] * kernel[1] * kernel[2]) as u64;
                let cells = (out[1] * out[2] * out[3]) as u64;
                let macs = k3 * (*cin as u64 / *groups as u64) * *cout as u64 * cells;
                params += k3 * (*cin as u64 / *groups as u64) * *cout as u64;
                total += macs;
                layers.push(LayerCost {
                    name: name.clone(),
                    macs,
                    flops: 2 * macs,
                    out_dims: out.to_vec(),
                });
                cur = out;
            }
            LayerOp::Linear { name, cin, cout } => {
                // Global average pooling collapses T/H/W before the head;
                // afterwards only the feature count propagates.
                if cur[0] != *cin {
                    return Err(Error::ShapeMismatch(format!(
                        "{name}: expects {cin} features, got {}",
                        cur[0]
                    )));
                }
                pooled = true;
                cur = [*cout, 1, 1, 1];
                let macs = (*cin as u64) * (*cout as u64);
                params += (*cin as u64) * (*cout as u64) + *cout as u64;
                total += macs;
                layers.push(LayerCost {
                    name: name.clone(),
                    macs,
                    flops: 2 * macs,
                    out_dims: vec![*cout],
                });
            }
        }
    }
    Ok(FlopsReport {
        input_dims: input,
        layers,
        total_macs: total,
        total_flops: 2 * total,
        counted_params: params,
    })
}

/// FLOPs for a dense matmul of `rows` stacked vectors against a
/// `cin x cout` weight (bias ignored, 2 FLOPs per MAC).
pub fn linear_flops(rows: usize, cin: usize, cout: usize) -> u64 {
    2 * rows as u64 * cin as u64 * cout as u64
}

/// Pick the candidate width whose FLOPs at `input` are closest to
/// `target_gflops`; ties resolve to the smaller width.
pub fn select_width(
    candidates: &[f64],
    target_gflops: f64,
    input: [usize; 4],
    num_classes: usize,
    arch: impl Fn(f64) -> Vec<LayerOp>,
) -> Result<(f64, u64)> {
    if candidates.is_empty() {
        return Err(Error::InvalidInput("no width candidates".into()));
    }
    let mut sorted: Vec<f64> = candidates.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("widths are finite"));
    let _ = num_classes;
    let mut best: Option<(f64, u64, f64)> = None;
    for &w in &sorted {
        let report = count_flops(&arch(w), input)?;
        let g = report.total_flops as f64 / 1e9;
        let diff = (g - target_gflops).abs();
        let better = match &best {
            None => true,
            Some((_, _, d)) => diff < *d,
        };
        if better {
            best = Some((w, report.total_flops, diff));
        }
    }
    let (w, flops, _) = best.expect("candidates non-empty");
    Ok((w, flops))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::backbone::ArchSpec;

    #[test]
    fn single_conv_worked_example() {
        // 3x3x3 kernel, 1 input channel, 64 outputs, one output cell:
        // MACs = 27 * 64, FLOPs = 2 * 27 * 64 = 3456.
        let ops = vec![LayerOp::Conv {
            name: "c".into(),
            cin: 1,
            cout: 64,
            kernel: [3, 3, 3],
            stride: [1, 1, 1],
            padding: [0, 0, 0],
            groups: 1,
        }];
        let r = count_flops(&ops, [1, 3, 3, 3]).unwrap();
        assert_eq!(r.total_flops, 3456);
        assert_eq!(r.layers[0].out_dims, vec![64, 1, 1, 1]);
    }

    #[test]
    fn linear_worked_example() {
        // 8 vectors of 16 features into 32 outputs: 2*8*16*32 = 8192 FLOPs.
        assert_eq!(linear_flops(8, 16, 32), 8192);
        // In-network, the head runs on the single pooled descriptor.
        let ops = vec![LayerOp::Linear { name: "fc".into(), cin: 16, cout: 32 }];
        let r = count_flops(&ops, [16, 1, 1, 1]).unwrap();
        assert_eq!(r.total_flops, 2 * 16 * 32);
        // Chained linears must agree on feature counts.
        let bad = vec![
            LayerOp::Linear { name: "a".into(), cin: 16, cout: 32 },
            LayerOp::Linear { name: "b".into(), cin: 16, cout: 8 },
        ];
        assert!(count_flops(&bad, [16, 1, 1, 1]).is_err());
    }

    #[test]
    fn depthwise_divides_by_groups() {
        let ops = vec![LayerOp::Conv {
            name: "dw".into(),
            cin: 8,
            cout: 8,
            kernel: [3, 3, 3],
            stride: [1, 1, 1],
            padding: [1, 1, 1],
            groups: 8,
        }];
        let r = count_flops(&ops, [8, 2, 4, 4]).unwrap();
        // 27 * (8/8) * 8 * 32 cells = 6912 MACs.
        assert_eq!(r.total_macs, 27 * 8 * 32);
    }

    #[test]
    fn full_network_lands_near_half_gigaflop_at_width_0_7() {
        let spec = ArchSpec::mobilenet_v2(0.7, 2, 0.2);
        let r = count_flops(&spec.layer_ops(), [3, 16, 112, 112]).unwrap();
        let g = r.total_flops as f64 / 1e9;
        assert!((0.45..0.75).contains(&g), "0.7x network: {g} GFLOPs");
        // Width 1.0 is roughly double.
        let spec = ArchSpec::mobilenet_v2(1.0, 2, 0.2);
        let r1 = count_flops(&spec.layer_ops(), [3, 16, 112, 112]).unwrap();
        assert!(r1.total_flops > r.total_flops);
        let g1 = r1.total_flops as f64 / 1e9;
        assert!((0.9..1.3).contains(&g1), "1.0x network: {g1} GFLOPs");
    }

    #[test]
    fn flops_scale_monotonically_with_width() {
        let widths = [0.45, 0.7, 1.0, 1.5];
        let mut prev = 0u64;
        for w in widths {
            let spec = ArchSpec::mobilenet_v2(w, 2, 0.2);
            let r = count_flops(&spec.layer_ops(), [3, 16, 112, 112]).unwrap();
            assert!(r.total_flops > prev, "width {w} not monotone");
            prev = r.total_flops;
        }
    }

    #[test]
    fn width_selection_targets_the_budget() {
        let (w, flops) = select_width(
            &[0.45, 0.7, 1.0],
            0.55,
            [3, 16, 112, 112],
            2,
            |w| ArchSpec::mobilenet_v2(w, 2, 0.2).layer_ops(),
        )
        .unwrap();
        assert_eq!(w, 0.7, "0.7x should be nearest 0.55 GFLOPs, got {w} ({flops} FLOPs)");
        let g = flops as f64 / 1e9;
        assert!((g - 0.55).abs() / 0.55 <= 0.25, "selected width off budget: {g} GFLOPs");
    }

    #[test]
    fn shape_mismatches_are_rejected() {
        let ops = vec![LayerOp::Conv {
            name: "c".into(),
            cin: 4,
            cout: 8,
            kernel: [3, 3, 3],
            stride: [1, 1, 1],
            padding: [0, 0, 0],
            groups: 1,
        }];
        assert!(count_flops(&ops, [3, 8, 8, 8]).is_err()); // channel mismatch
        assert!(count_flops(&ops, [4, 2, 8, 8]).is_err()); // T below kernel
    }
}
