//! Per-pixel adaptive mixture-of-Gaussians background model.
//!
//! Each pixel maintains up to K weighted Gaussians over intensity. An
//! incoming value is matched to the best component within
//! `match_sigma` standard deviations; matched components are pulled towards
//! the value at the learning rate, unmatched weights decay, and a miss
//! replaces the weakest component. Components are ranked by `weight/sigma`
//! and the top mass up to `background_ratio` is declared background; a pixel
//! is foreground when its value matched no background component.

use ndarray::{Array2, ArrayView2};

use crate::config::MogConfig;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct MogModel {
    width: usize,
    height: usize,
    cfg: MogConfig,
    /// Flattened `[pixel][component]` state.
    weight: Vec<f32>,
    mean: Vec<f32>,
    var: Vec<f32>,
    initialized: bool,
}

impl MogModel {
    pub fn new(width: usize, height: usize, cfg: MogConfig) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidInput("background model needs positive dims".into()));
        }
        if cfg.components == 0 {
            return Err(Error::InvalidInput("background model needs >= 1 component".into()));
        }
        let n = width * height * cfg.components;
        Ok(MogModel {
            width,
            height,
            cfg,
            weight: vec![0.0; n],
            mean: vec![0.0; n],
            var: vec![0.0; n],
            initialized: false,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    /// Ingest one grayscale frame (values in `[0, 255]`), returning the
    /// foreground mask. The first frame seeds the model and yields an
    /// all-background mask.
    pub fn update(&mut self, frame: ArrayView2<'_, f32>) -> Result<Array2<bool>> {
        let (h, w) = frame.dim();
        if (w, h) != (self.width, self.height) {
            return Err(Error::ShapeMismatch(format!(
                "frame {w}x{h} vs model {}x{}",
                self.width, self.height
            )));
        }
        if frame.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("frame intensity".into()));
        }
        let k = self.cfg.components;
        let mut mask = Array2::from_elem((h, w), false);

        if !self.initialized {
            for (idx, &x) in frame.iter().enumerate() {
                let base = idx * k;
                self.weight[base] = 1.0;
                self.mean[base] = x;
                self.var[base] = self.cfg.initial_variance;
            }
            self.initialized = true;
            return Ok(mask);
        }

        let rho = self.cfg.learning_rate;
        let gate2 = self.cfg.match_sigma * self.cfg.match_sigma;
        for (idx, &x) in frame.iter().enumerate() {
            let base = idx * k;
            let weights = &mut self.weight[base..base + k];
            let means = &mut self.mean[base..base + k];
            let vars = &mut self.var[base..base + k];

            // Best matching live component by fitness weight/sigma.
            let mut matched: Option<usize> = None;
            let mut best_fit = f32::NEG_INFINITY;
            for c in 0..k {
                if weights[c] <= 0.0 {
                    continue;
                }
                let d = x - means[c];
                if d * d <= gate2 * vars[c] {
                    let fit = weights[c] / vars[c].sqrt();
                    if fit > best_fit {
                        best_fit = fit;
                        matched = Some(c);
                    }
                }
            }

            match matched {
                Some(c) => {
                    for wv in weights.iter_mut() {
                        *wv *= 1.0 - rho;
                    }
                    weights[c] += rho;
                    let d = x - means[c];
                    means[c] += rho * d;
                    vars[c] = ((1.0 - rho) * vars[c] + rho * d * d)
                        .max(self.cfg.variance_floor);
                }
                None => {
                    // Replace the weakest slot (empty slots weigh 0 and win).
                    let mut weakest = 0;
                    for c in 1..k {
                        if weights[c] < weights[weakest] {
                            weakest = c;
                        }
                    }
                    means[weakest] = x;
                    vars[weakest] = self.cfg.initial_variance;
                    weights[weakest] = rho;
                    let total: f32 = weights.iter().sum();
                    for wv in weights.iter_mut() {
                        *wv /= total;
                    }
                }
            }

            // Background set: top-ranked components until cumulative weight
            // reaches the background ratio (the crossing component included).
            let mut order: Vec<usize> = (0..k).filter(|&c| weights[c] > 0.0).collect();
            order.sort_by(|&a, &b| {
                let fa = weights[a] / vars[a].sqrt();
                let fb = weights[b] / vars[b].sqrt();
                fb.partial_cmp(&fa).expect("fitness is finite").then(a.cmp(&b))
            });
            let mut cum = 0.0f32;
            let mut is_bg = false;
            for &c in &order {
                let in_bg_set = cum < self.cfg.background_ratio;
                cum += weights[c];
                if Some(c) == matched {
                    is_bg = in_bg_set;
                    break;
                }
                if !in_bg_set {
                    break;
                }
            }
            let y = idx / w;
            let xcol = idx % w;
            mask[[y, xcol]] = !is_bg;
        }
        Ok(mask)
    }
}
