//! Training-only excitation: adds the channel-mean of a feature map back
//! into itself wherever a person-region mask is set, steering early features
//! towards annotated person regions without any inference-time cost.
//!
//! `f_e = f + alpha_n * (mean_c(f) (x) m)`, where `m` is a binary mask at the
//! feature map's resolution and `alpha_n = 0.5 (1 + cos(pi n / N))` decays
//! from 1 to 0 over training, so the layer is exactly identity by the end
//! and is never applied at inference.

use ndarray::{Array3, Array4, Axis};

use crate::error::{Error, Result};
use crate::geometry::BoxF;
use crate::nn::Real;

/// Excitation strength at epoch `n` of `N`: cosine decay from 1 to 0.
pub fn excite_alpha(epoch: usize, total_epochs: usize) -> f64 {
    if total_epochs == 0 {
        return 0.0;
    }
    let t = epoch.min(total_epochs) as f64 / total_epochs as f64;
    0.5 * (1.0 + (std::f64::consts::PI * t).cos())
}

/// Rasterize per-frame person boxes (given in network-input coordinates)
/// onto a feature map grid.
///
/// A cell is set when its center, mapped back to input coordinates, falls
/// inside any box (half-open containment). Feature frame `j` samples input
/// frame `floor((j + 0.5) * T_in / T_f)`, which is the identity when the
/// temporal extents match.
pub fn build_mask(
    boxes_per_frame: &[Vec<BoxF>],
    input_hw: (usize, usize),
    feat_dims: (usize, usize, usize),
) -> Result<Array3<u8>> {
    let (t_in, (h_in, w_in)) = (boxes_per_frame.len(), input_hw);
    let (t_f, h_f, w_f) = feat_dims;
    if t_in == 0 || t_f == 0 || h_f == 0 || w_f == 0 {
        return Err(Error::InvalidInput("empty mask dimensions".into()));
    }
    let mut mask = Array3::<u8>::zeros((t_f, h_f, w_f));
    let sy = h_in as f32 / h_f as f32;
    let sx = w_in as f32 / w_f as f32;
    for j in 0..t_f {
        let src_t = (((j as f32 + 0.5) * t_in as f32 / t_f as f32) as usize).min(t_in - 1);
        let boxes = &boxes_per_frame[src_t];
        if boxes.is_empty() {
            continue;
        }
        for y in 0..h_f {
            let cy = (y as f32 + 0.5) * sy;
            for x in 0..w_f {
                let cx = (x as f32 + 0.5) * sx;
                if boxes.iter().any(|b| cx >= b.x0 && cx < b.x1 && cy >= b.y0 && cy < b.y1) {
                    mask[[j, y, x]] = 1;
                }
            }
        }
    }
    Ok(mask)
}

/// Forward excitation: `y = x + alpha * (mean_c(x) (x) mask)` broadcast over
/// channels. With `alpha == 0` or an all-zero mask this is the identity.
pub fn excite_forward<F: Real>(x: &Array4<F>, mask: &Array3<u8>, alpha: f64) -> Result<Array4<F>> {
    let (c, t, h, w) = x.dim();
    if mask.dim() != (t, h, w) {
        return Err(Error::ShapeMismatch(format!(
            "mask {:?} does not match feature {:?}",
            mask.dim(),
            (t, h, w)
        )));
    }
    let a = F::of(alpha);
    let cf = F::of(c as f64);
    // Channel mean, masked.
    let mut boost: Array3<F> = Array3::zeros((t, h, w));
    for ch in 0..c {
        boost += &x.index_axis(Axis(0), ch);
    }
    ndarray::Zip::from(&mut boost).and(mask).for_each(|b, &m| {
        *b = if m == 0 { F::zero() } else { *b / cf * a };
    });
    let mut y = x.clone();
    for ch in 0..c {
        let mut yc = y.index_axis_mut(Axis(0), ch);
        yc += &boost;
    }
    Ok(y)
}

/// Backward of [`excite_forward`]:
/// `gx = gy + (alpha / C) * mask (x) sum_c(gy)`.
pub fn excite_backward<F: Real>(
    gy: &Array4<F>,
    mask: &Array3<u8>,
    alpha: f64,
) -> Result<Array4<F>> {
    let (c, t, h, w) = gy.dim();
    if mask.dim() != (t, h, w) {
        return Err(Error::ShapeMismatch("mask does not match gradient".into()));
    }
    let scale = F::of(alpha / c as f64);
    let mut summed: Array3<F> = Array3::zeros((t, h, w));
    for ch in 0..c {
        summed += &gy.index_axis(Axis(0), ch);
    }
    ndarray::Zip::from(&mut summed).and(mask).for_each(|s, &m| {
        *s = if m == 0 { F::zero() } else { *s * scale };
    });
    let mut gx = gy.clone();
    for ch in 0..c {
        let mut gc = gx.index_axis_mut(Axis(0), ch);
        gc += &summed;
    }
    Ok(gx)
}

/// Mask cell coverage in `[0, 1]` (diagnostic).
pub fn mask_coverage(mask: &Array3<u8>) -> f64 {
    if mask.is_empty() {
        return 0.0;
    }
    mask.iter().filter(|&&m| m != 0).count() as f64 / mask.len() as f64
}

/// Convenience for building the single-frame spatial mask used in tests.
pub fn mask_from_grid(rows: &[&[u8]]) -> Array3<u8> {
    let h = rows.len();
    let w = rows[0].len();
    let mut m = Array3::zeros((1, h, w));
    for (y, row) in rows.iter().enumerate() {
        for (x, &v) in row.iter().enumerate() {
            m[[0, y, x]] = v;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    #[test]
    fn alpha_decays_cosine_from_one_to_zero() {
        let n = 50;
        assert!((excite_alpha(0, n) - 1.0).abs() < 1e-12);
        assert!((excite_alpha(n, n) - 0.0).abs() < 1e-12);
        assert!((excite_alpha(25, n) - 0.5).abs() < 1e-12);
        for e in 0..n {
            assert!(excite_alpha(e, n) >= excite_alpha(e + 1, n));
        }
        // Clamped past the end.
        assert_eq!(excite_alpha(n + 10, n), 0.0);
    }

    #[test]
    fn excite_matches_hand_example() {
        // Two channels, one 2x2 frame, mask only at (0,0), alpha 0.5:
        // channel mean at (0,0) is (1+5)/2 = 3, so both channels gain 1.5.
        let mut x = Array4::<f64>::zeros((2, 1, 2, 2));
        x[[0, 0, 0, 0]] = 1.0;
        x[[0, 0, 0, 1]] = 2.0;
        x[[0, 0, 1, 0]] = 3.0;
        x[[0, 0, 1, 1]] = 4.0;
        x[[1, 0, 0, 0]] = 5.0;
        x[[1, 0, 0, 1]] = 6.0;
        x[[1, 0, 1, 0]] = 7.0;
        x[[1, 0, 1, 1]] = 8.0;
        let mask = mask_from_grid(&[&[1, 0], &[0, 0]]);
        let y = excite_forward(&x, &mask, 0.5).unwrap();
        assert_eq!(y[[0, 0, 0, 0]], 2.5);
        assert_eq!(y[[1, 0, 0, 0]], 6.5);
        // Unmasked cells untouched.
        assert_eq!(y[[0, 0, 0, 1]], 2.0);
        assert_eq!(y[[1, 0, 1, 1]], 8.0);
    }

    #[test]
    fn zero_alpha_or_zero_mask_is_identity() {
        let mut rng = rng_from_seed(31);
        let x = Array4::from_shape_simple_fn((3, 2, 4, 4), || rng.random::<f64>());
        let zero_mask = Array3::zeros((2, 4, 4));
        let full_mask = Array3::ones((2, 4, 4));
        assert_eq!(excite_forward(&x, &zero_mask, 0.7).unwrap(), x);
        assert_eq!(excite_forward(&x, &full_mask, 0.0).unwrap(), x);
    }

    #[test]
    fn excite_backward_matches_finite_differences() {
        let mut rng = rng_from_seed(32);
        let x = Array4::from_shape_simple_fn((3, 2, 3, 3), || rng.random::<f64>() - 0.5);
        let mask = {
            let mut m = Array3::zeros((2, 3, 3));
            m[[0, 0, 0]] = 1;
            m[[1, 2, 1]] = 1;
            m[[1, 1, 1]] = 1;
            m
        };
        let proj = Array4::from_shape_simple_fn((3, 2, 3, 3), || rng.random::<f64>() - 0.5);
        let gx = excite_backward(&proj, &mask, 0.65).unwrap();
        let eps = 1e-6;
        for idx in [(0, 0, 0, 0), (1, 1, 1, 1), (2, 1, 2, 1), (0, 1, 0, 2)] {
            let mut xp = x.clone();
            xp[idx] += eps;
            let mut xm = x.clone();
            xm[idx] -= eps;
            let lp = (&excite_forward(&xp, &mask, 0.65).unwrap() * &proj).sum();
            let lm = (&excite_forward(&xm, &mask, 0.65).unwrap() * &proj).sum();
            let fd = (lp - lm) / (2.0 * eps);
            assert!(
                (fd - gx[idx]).abs() / fd.abs().max(gx[idx].abs()).max(1e-8) < 1e-6,
                "gx[{idx:?}] fd {fd} vs {}",
                gx[idx]
            );
        }
    }

    #[test]
    fn mask_rasterization_uses_cell_centers() {
        // 4x4 input, 2x2 feature grid: cell centers at input coords 1 and 3.
        // A box [0,2)x[0,2) covers only the center (1,1) -> top-left cell.
        let boxes = vec![vec![BoxF::new(0.0, 0.0, 2.0, 2.0)]];
        let m = build_mask(&boxes, (4, 4), (1, 2, 2)).unwrap();
        assert_eq!(m[[0, 0, 0]], 1);
        assert_eq!(m[[0, 0, 1]], 0);
        assert_eq!(m[[0, 1, 0]], 0);
        assert_eq!(m[[0, 1, 1]], 0);
        // Full-frame box sets every cell.
        let boxes = vec![vec![BoxF::new(0.0, 0.0, 4.0, 4.0)]];
        let m = build_mask(&boxes, (4, 4), (1, 2, 2)).unwrap();
        assert!(m.iter().all(|&v| v == 1));
        // No boxes -> empty mask.
        let m = build_mask(&[vec![]], (4, 4), (1, 2, 2)).unwrap();
        assert!(m.iter().all(|&v| v == 0));
    }

    #[test]
    fn temporal_mapping_is_identity_when_lengths_match() {
        let boxes = vec![
            vec![BoxF::new(0.0, 0.0, 4.0, 4.0)],
            vec![],
            vec![BoxF::new(0.0, 0.0, 4.0, 4.0)],
        ];
        let m = build_mask(&boxes, (4, 4), (3, 1, 1)).unwrap();
        assert_eq!(m[[0, 0, 0]], 1);
        assert_eq!(m[[1, 0, 0]], 0);
        assert_eq!(m[[2, 0, 0]], 1);
    }
}
