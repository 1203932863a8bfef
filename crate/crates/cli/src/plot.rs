//! Minimal PNG chart renderer for precision-recall curves.
//!
//! Draws straight into an RGB buffer: axes, a 0.1-spaced grid, tick labels
//! from a tiny built-in digit font, one polyline per curve, and numbered
//! legend swatches. No text-shaping or font dependencies, so output is
//! deterministic byte-for-byte for the same inputs.

use image::{Rgb, RgbImage};

pub const WIDTH: u32 = 640;
pub const HEIGHT: u32 = 480;

const MARGIN_LEFT: u32 = 48;
const MARGIN_RIGHT: u32 = 16;
const MARGIN_TOP: u32 = 16;
const MARGIN_BOTTOM: u32 = 36;

const BG: Rgb<u8> = Rgb([255, 255, 255]);
const AXIS: Rgb<u8> = Rgb([32, 32, 32]);
const GRID: Rgb<u8> = Rgb([220, 220, 220]);

/// Curve colors, cycled in order.
pub const PALETTE: [(Rgb<u8>, &str); 6] = [
    (Rgb([31, 119, 180]), "blue"),
    (Rgb([214, 39, 40]), "red"),
    (Rgb([44, 160, 44]), "green"),
    (Rgb([255, 127, 14]), "orange"),
    (Rgb([148, 103, 189]), "purple"),
    (Rgb([23, 190, 207]), "teal"),
];

/// 3x5 bitmap glyphs for '0'-'9' and '.', one row per byte, low 3 bits used.
fn glyph(c: char) -> [u8; 5] {
    match c {
        '0' => [0b111, 0b101, 0b101, 0b101, 0b111],
        '1' => [0b010, 0b110, 0b010, 0b010, 0b111],
        '2' => [0b111, 0b001, 0b111, 0b100, 0b111],
        '3' => [0b111, 0b001, 0b111, 0b001, 0b111],
        '4' => [0b101, 0b101, 0b111, 0b001, 0b001],
        '5' => [0b111, 0b100, 0b111, 0b001, 0b111],
        '6' => [0b111, 0b100, 0b111, 0b101, 0b111],
        '7' => [0b111, 0b001, 0b010, 0b010, 0b010],
        '8' => [0b111, 0b101, 0b111, 0b101, 0b111],
        '9' => [0b111, 0b101, 0b111, 0b001, 0b111],
        '.' => [0b000, 0b000, 0b000, 0b000, 0b010],
        _ => [0b000; 5],
    }
}

fn put(img: &mut RgbImage, x: i64, y: i64, color: Rgb<u8>) {
    if x >= 0 && y >= 0 && (x as u32) < img.width() && (y as u32) < img.height() {
        img.put_pixel(x as u32, y as u32, color);
    }
}

/// Render `text` (digits and dots) with the top-left corner at (x, y).
fn draw_text(img: &mut RgbImage, x: i64, y: i64, text: &str, color: Rgb<u8>) {
    let mut cx = x;
    for c in text.chars() {
        let g = glyph(c);
        for (row, bits) in g.iter().enumerate() {
            for col in 0..3 {
                if bits & (0b100 >> col) != 0 {
                    put(img, cx + col as i64, y + row as i64, color);
                }
            }
        }
        cx += 4;
    }
}

fn draw_line(img: &mut RgbImage, x0: i64, y0: i64, x1: i64, y1: i64, color: Rgb<u8>) {
    // Bresenham; endpoints may fall outside the buffer and are clipped per pixel.
    let (dx, dy) = ((x1 - x0).abs(), -(y1 - y0).abs());
    let (sx, sy) = (if x0 < x1 { 1 } else { -1 }, if y0 < y1 { 1 } else { -1 });
    let (mut x, mut y, mut err) = (x0, y0, dx + dy);
    loop {
        put(img, x, y, color);
        if x == x1 && y == y1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// A named precision-recall polyline in unit coordinates.
pub struct Curve {
    pub points: Vec<(f64, f64)>,
    pub color: Rgb<u8>,
}

struct Frame {
    x0: u32,
    y0: u32,
    x1: u32,
    y1: u32,
}

impl Frame {
    fn to_px(&self, recall: f64, precision: f64) -> (i64, i64) {
        let w = (self.x1 - self.x0) as f64;
        let h = (self.y1 - self.y0) as f64;
        let x = self.x0 as f64 + recall.clamp(0.0, 1.0) * w;
        let y = self.y1 as f64 - precision.clamp(0.0, 1.0) * h;
        (x.round() as i64, y.round() as i64)
    }
}

/// Render the overlaid curves into a fresh image.
pub fn render(curves: &[Curve]) -> RgbImage {
    let mut img = RgbImage::from_pixel(WIDTH, HEIGHT, BG);
    let frame = Frame {
        x0: MARGIN_LEFT,
        y0: MARGIN_TOP,
        x1: WIDTH - MARGIN_RIGHT,
        y1: HEIGHT - MARGIN_BOTTOM,
    };

    // Grid and tick labels every 0.1 on both unit axes.
    for i in 0..=10u32 {
        let v = f64::from(i) / 10.0;
        let (gx, gy) = frame.to_px(v, v);
        if i > 0 && i < 10 {
            draw_line(&mut img, gx, frame.y0 as i64, gx, frame.y1 as i64, GRID);
            draw_line(&mut img, frame.x0 as i64, gy, frame.x1 as i64, gy, GRID);
        }
        let label = format!("{v:.1}");
        // x-axis (recall) labels under the frame, centered on the tick.
        draw_text(&mut img, gx - 5, frame.y1 as i64 + 6, &label, AXIS);
        // y-axis (precision) labels left of the frame.
        draw_text(&mut img, frame.x0 as i64 - 18, gy - 2, &label, AXIS);
        draw_line(&mut img, gx, frame.y1 as i64, gx, frame.y1 as i64 + 3, AXIS);
        draw_line(&mut img, frame.x0 as i64 - 3, gy, frame.x0 as i64, gy, AXIS);
    }

    // Axis frame on top of the grid.
    let (x0, y0, x1, y1) =
        (frame.x0 as i64, frame.y0 as i64, frame.x1 as i64, frame.y1 as i64);
    draw_line(&mut img, x0, y0, x1, y0, AXIS);
    draw_line(&mut img, x0, y1, x1, y1, AXIS);
    draw_line(&mut img, x0, y0, x0, y1, AXIS);
    draw_line(&mut img, x1, y0, x1, y1, AXIS);

    for curve in curves {
        let mut prev: Option<(i64, i64)> = None;
        for &(recall, precision) in &curve.points {
            let p = frame.to_px(recall, precision);
            if let Some(q) = prev {
                draw_line(&mut img, q.0, q.1, p.0, p.1, curve.color);
            } else {
                put(&mut img, p.0, p.1, curve.color);
            }
            prev = Some(p);
        }
    }

    // Numbered swatches in the lower-left corner, matching stdout legend order.
    for (i, curve) in curves.iter().enumerate() {
        let sy = frame.y1 as i64 - 12 - 10 * (curves.len() - 1 - i) as i64;
        let sx = frame.x0 as i64 + 8;
        for dy in 0..6 {
            draw_line(&mut img, sx, sy + dy, sx + 14, sy + dy, curve.color);
        }
        draw_text(&mut img, sx + 18, sy, &format!("{}", i + 1), AXIS);
    }

    img
}
