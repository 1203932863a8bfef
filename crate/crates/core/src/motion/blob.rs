//! Connected-component extraction from foreground masks.

use ndarray::ArrayView2;

use crate::geometry::BoxPx;

/// One 8-connected foreground region.
#[derive(Debug, Clone, PartialEq)]
pub struct Blob {
    pub bbox: BoxPx,
    /// Mean of member pixel coordinates, (x, y).
    pub centroid: (f64, f64),
    /// Number of member pixels.
    pub area: u64,
}

/// Extract 8-connected components with at least `min_area` pixels,
/// ordered by scan position of their first pixel (row-major), which makes
/// the output deterministic for a given mask.
pub fn extract_blobs(mask: ArrayView2<'_, bool>, min_area: u64) -> Vec<Blob> {
    let (h, w) = mask.dim();
    let mut seen = vec![false; h * w];
    let mut blobs = Vec::new();
    let mut queue: Vec<(usize, usize)> = Vec::new();

    for sy in 0..h {
        for sx in 0..w {
            if !mask[[sy, sx]] || seen[sy * w + sx] {
                continue;
            }
            queue.clear();
            queue.push((sy, sx));
            seen[sy * w + sx] = true;
            let (mut min_x, mut min_y, mut max_x, mut max_y) = (sx, sy, sx, sy);
            let (mut sum_x, mut sum_y, mut area) = (0u64, 0u64, 0u64);
            while let Some((y, x)) = queue.pop() {
                area += 1;
                sum_x += x as u64;
                sum_y += y as u64;
                min_x = min_x.min(x);
                min_y = min_y.min(y);
                max_x = max_x.max(x);
                max_y = max_y.max(y);
                let y0 = y.saturating_sub(1);
                let x0 = x.saturating_sub(1);
                for ny in y0..=(y + 1).min(h - 1) {
                    for nx in x0..=(x + 1).min(w - 1) {
                        let i = ny * w + nx;
                        if mask[[ny, nx]] && !seen[i] {
                            seen[i] = true;
                            queue.push((ny, nx));
                        }
                    }
                }
            }
            if area >= min_area {
                blobs.push(Blob {
                    bbox: BoxPx::new(
                        min_x as u32,
                        min_y as u32,
                        (max_x + 1) as u32,
                        (max_y + 1) as u32,
                    ),
                    centroid: (sum_x as f64 / area as f64, sum_y as f64 / area as f64),
                    area,
                });
            }
        }
    }
    blobs
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn mask_from(rows: &[&str]) -> Array2<bool> {
        let h = rows.len();
        let w = rows[0].len();
        let mut m = Array2::from_elem((h, w), false);
        for (y, row) in rows.iter().enumerate() {
            for (x, ch) in row.chars().enumerate() {
                m[[y, x]] = ch == '#';
            }
        }
        m
    }

    #[test]
    fn single_rectangle_blob() {
        let m = mask_from(&[
            "......",
            ".###..",
            ".###..",
            "......",
        ]);
        let blobs = extract_blobs(m.view(), 1);
        assert_eq!(blobs.len(), 1);
        let b = &blobs[0];
        assert_eq!(b.bbox, BoxPx::new(1, 1, 4, 3));
        assert_eq!(b.area, 6);
        assert_eq!(b.centroid, (2.0, 1.5));
    }

    #[test]
    fn diagonal_pixels_join_via_8_connectivity() {
        let m = mask_from(&[
            "#...",
            ".#..",
            "..#.",
        ]);
        let blobs = extract_blobs(m.view(), 1);
        assert_eq!(blobs.len(), 1);
        assert_eq!(blobs[0].area, 3);
        assert_eq!(blobs[0].bbox, BoxPx::new(0, 0, 3, 3));
        assert_eq!(blobs[0].centroid, (1.0, 1.0));
    }

    #[test]
    fn separate_components_and_area_filter() {
        let m = mask_from(&[
            "##...#",
            "##....",
            "......",
            "....##",
            "....##",
        ]);
        let all = extract_blobs(m.view(), 1);
        assert_eq!(all.len(), 3);
        // Ordered by first scan position: top-left 2x2, lone pixel, bottom 2x2.
        assert_eq!(all[0].bbox, BoxPx::new(0, 0, 2, 2));
        assert_eq!(all[1].bbox, BoxPx::new(5, 0, 6, 1));
        assert_eq!(all[2].bbox, BoxPx::new(4, 3, 6, 5));
        let filtered = extract_blobs(m.view(), 2);
        assert_eq!(filtered.len(), 2);
        assert!(filtered.iter().all(|b| b.area == 4));
    }

    #[test]
    fn empty_mask_yields_nothing() {
        let m = Array2::from_elem((4, 4), false);
        assert!(extract_blobs(m.view(), 1).is_empty());
    }

    #[test]
    fn full_mask_is_one_blob() {
        let m = Array2::from_elem((3, 5), true);
        let blobs = extract_blobs(m.view(), 1);
        assert_eq!(blobs.len(), 1);
        assert_eq!(blobs[0].area, 15);
        assert_eq!(blobs[0].bbox, BoxPx::new(0, 0, 5, 3));
        assert_eq!(blobs[0].centroid, (2.0, 1.0));
    }
}
