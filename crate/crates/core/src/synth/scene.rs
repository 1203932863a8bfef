//! Scenario scripting and sprite rendering.
//!
//! Every scenario is compiled to per-frame lists of filled rectangles:
//! `actor` rects define the ground-truth track (boxes are exactly the
//! rasterized bounds of what was drawn), `scenery` rects (a delivered
//! package resting on the ground) render but do not count as the actor.
//! Positions are scripted in f32 and rounded once, so rendering and ground
//! truth cannot disagree.

use image::{Rgb, RgbImage};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::data::{ActivitySpan, Label, SubjectTrack};
use crate::geometry::BoxPx;
use crate::rng::rng_from_seed;

use super::camera::{shade_channel, CameraParams};
use super::ScenarioKind;

/// One video to render.
#[derive(Debug, Clone)]
pub struct SceneSpec<'a> {
    pub kind: ScenarioKind,
    pub camera: &'a CameraParams,
    pub frames: u32,
}

/// A rendered scene with exact ground truth.
#[derive(Debug, Clone)]
pub struct Scene {
    pub frames: Vec<RgbImage>,
    pub tracks: Vec<SubjectTrack>,
    pub video_tag: Label,
    pub activities: Vec<ActivitySpan>,
}

/// An axis-aligned filled rectangle, half-open, signed so sprites can
/// partially leave the frame.
#[derive(Debug, Clone, Copy)]
struct Rect {
    x0: i32,
    y0: i32,
    x1: i32,
    y1: i32,
    shade: i16,
}

impl Rect {
    fn new(x0: i32, y0: i32, x1: i32, y1: i32, shade: i16) -> Rect {
        Rect { x0, y0, x1, y1, shade }
    }

    /// Visible part within a `w`×`h` frame, if any.
    fn clipped(&self, w: u32, h: u32) -> Option<BoxPx> {
        let x0 = self.x0.max(0);
        let y0 = self.y0.max(0);
        let x1 = self.x1.min(w as i32);
        let y1 = self.y1.min(h as i32);
        if x0 >= x1 || y0 >= y1 {
            return None;
        }
        Some(BoxPx::new(x0 as u32, y0 as u32, x1 as u32, y1 as u32))
    }
}

fn draw(frame: &mut RgbImage, rect: &Rect, tint: [i16; 3]) {
    let Some(b) = rect.clipped(frame.width(), frame.height()) else { return };
    let px = Rgb([
        shade_channel(rect.shade, tint[0]),
        shade_channel(rect.shade, tint[1]),
        shade_channel(rect.shade, tint[2]),
    ]);
    for y in b.y0..b.y1 {
        for x in b.x0..b.x1 {
            frame.put_pixel(x, y, px);
        }
    }
}

/// Union of the visible parts of `rects`.
fn bounds(rects: &[Rect], w: u32, h: u32) -> Option<BoxPx> {
    let mut acc: Option<BoxPx> = None;
    for r in rects {
        if let Some(b) = r.clipped(w, h) {
            acc = Some(match acc {
                Some(u) => u.union_bounds(&b),
                None => b,
            });
        }
    }
    acc
}

/// Body/head proportions of a person sprite.
#[derive(Debug, Clone, Copy)]
struct ActorShape {
    body_w: i32,
    body_h: i32,
    head: i32,
    shade: i16,
}

impl ActorShape {
    fn sample(rng: &mut ChaCha8Rng, width_scale: f32) -> ActorShape {
        let body_h: i32 = rng.random_range(34..=48);
        let body_w = (((body_h as f32) * 0.38 * width_scale).round() as i32).max(10);
        let head = ((body_w as f32 * 0.8).round() as i32).max(7);
        let shade: i16 = rng.random_range(205..=245);
        ActorShape { body_w, body_h, head, shade }
    }

    /// Standing pose: body topped by an overlapping head, feet on `bottom`
    /// (exclusive), lifted by `bob` pixels while striding.
    fn standing(&self, cx: i32, bottom: i32, bob: i32) -> Vec<Rect> {
        let by1 = bottom - bob;
        let by0 = by1 - self.body_h;
        let bx0 = cx - self.body_w / 2;
        let hy1 = by0 + 1;
        let hx0 = cx - self.head / 2;
        vec![
            Rect::new(bx0, by0, bx0 + self.body_w, by1, self.shade),
            Rect::new(hx0, hy1 - self.head, hx0 + self.head, hy1, self.shade),
        ]
    }

    /// Crouched pose: wider, 62%-height body, head dropped with it.
    fn crouched(&self, cx: i32, bottom: i32) -> Vec<Rect> {
        let w = (self.body_w as f32 * 1.45).round() as i32;
        let h = ((self.body_h as f32 * 0.62).round() as i32).max(12);
        let by0 = bottom - h;
        let bx0 = cx - w / 2;
        let hy1 = by0 + 1;
        let hx0 = cx - self.head / 2;
        vec![
            Rect::new(bx0, by0, bx0 + w, bottom, self.shade),
            Rect::new(hx0, hy1 - self.head, hx0 + self.head, hy1, self.shade),
        ]
    }
}

#[derive(Debug, Clone, Copy)]
struct PackageShape {
    w: i32,
    h: i32,
    shade: i16,
}

impl PackageShape {
    fn sample(rng: &mut ChaCha8Rng) -> PackageShape {
        PackageShape {
            w: rng.random_range(10..=14),
            h: rng.random_range(7..=10),
            shade: rng.random_range(150..=185),
        }
    }

    fn at_center(&self, cx: i32, cy: i32) -> Rect {
        let x0 = cx - self.w / 2;
        let y0 = cy - self.h / 2;
        Rect::new(x0, y0, x0 + self.w, y0 + self.h, self.shade)
    }

    /// Carried in front of the body (1 px overlap keeps the sprite one
    /// connected region).
    fn carried(&self, shape: &ActorShape, cx: i32, bottom: i32, bob: i32, dir: i32) -> Rect {
        let cy = bottom - bob - (shape.body_h as f32 * 0.45).round() as i32;
        let x0 = if dir >= 0 {
            cx + shape.body_w / 2 - 1
        } else {
            cx - shape.body_w / 2 + 1 - self.w
        };
        Rect::new(x0, cy - self.h / 2, x0 + self.w, cy - self.h / 2 + self.h, self.shade)
    }
}

/// Per-frame draw lists for one scenario.
struct Script {
    actor: Vec<Vec<Rect>>,
    scenery: Vec<Vec<Rect>>,
    tag: Label,
}

fn stride_bob(step: i32, half_period: i32) -> i32 {
    (step / half_period.max(1)) % 2
}

fn delivery(cam: &CameraParams, frames: u32, rng: &mut ChaCha8Rng) -> Script {
    let shape = ActorShape::sample(rng, 1.0);
    let pkg = PackageShape::sample(rng);
    let bob_half: i32 = rng.random_range(3..=5);
    let x_spawn: f32 = rng.random_range(30..=70) as f32;
    let t0: u32 = rng.random_range(4..=10);
    let mut stoop_len: u32 = rng.random_range(14..=22);
    let bottom = cam.walk_line as i32;

    let drop_cx = cam.door_center() as i32;
    let drop_x0 = drop_cx - pkg.w / 2;
    let stand_cx = (drop_x0 - 2 - shape.body_w / 2) as f32;
    let dist = stand_cx - x_spawn;
    debug_assert!(dist > 40.0, "door too close to the walkway entry");

    let budget = (frames.saturating_sub(t0 + stoop_len + 4)).max(12) as f32;
    let speed = (1.72 * dist / budget).clamp(2.6, 8.0) * rng.random_range(1.0..1.12);
    let approach = (dist / speed).ceil() as u32;
    let retreat_speed = speed * 1.4;
    let mut retreat = (dist / retreat_speed).ceil() as u32;
    while t0 + approach + stoop_len + retreat > frames - 2 && stoop_len > 8 {
        stoop_len -= 1;
    }
    let end_cap = (frames - 2).saturating_sub(t0 + approach + stoop_len);
    retreat = retreat.min(end_cap).max(1);
    let lower_n = (stoop_len / 2).min(6).max(1);

    // Carry point at the last approach step, where lowering starts.
    let carry_from = pkg.carried(&shape, stand_cx.round() as i32, bottom, 0, 1);
    let rest = pkg.at_center(drop_x0 + pkg.w / 2, bottom - pkg.h / 2);

    let mut actor = Vec::with_capacity(frames as usize);
    let mut scenery = Vec::with_capacity(frames as usize);
    for f in 0..frames {
        let mut a = Vec::new();
        let mut s = Vec::new();
        if f >= t0 {
            let k = f - t0;
            if k < approach {
                let cx = (x_spawn + speed * (k + 1) as f32).min(stand_cx).round() as i32;
                let bob = stride_bob(k as i32, bob_half);
                a = shape.standing(cx, bottom, bob);
                a.push(pkg.carried(&shape, cx, bottom, bob, 1));
            } else if k < approach + stoop_len {
                let j = k - approach;
                a = shape.crouched(stand_cx.round() as i32, bottom);
                if j < lower_n {
                    // Package slides from the hands down to the doorstep.
                    let t = (j + 1) as f32 / lower_n as f32;
                    let x = carry_from.x0 as f32 + (rest.x0 - carry_from.x0) as f32 * t;
                    let y = carry_from.y0 as f32 + (rest.y0 - carry_from.y0) as f32 * t;
                    let (x, y) = (x.round() as i32, y.round() as i32);
                    a.push(Rect::new(x, y, x + pkg.w, y + pkg.h, pkg.shade));
                } else {
                    s.push(rest);
                }
            } else if k < approach + stoop_len + retreat {
                let m = k - approach - stoop_len;
                let cx = (stand_cx - retreat_speed * (m + 1) as f32).round() as i32;
                if cx as f32 > x_spawn {
                    a = shape.standing(cx, bottom, stride_bob(m as i32, bob_half));
                }
                s.push(rest);
            } else {
                s.push(rest);
            }
        }
        actor.push(a);
        scenery.push(s);
    }
    Script { actor, scenery, tag: Label::Delivery }
}

fn walk_by(cam: &CameraParams, frames: u32, rng: &mut ChaCha8Rng) -> Script {
    let shape = ActorShape::sample(rng, 1.0);
    let bob_half: i32 = rng.random_range(3..=5);
    let t0: u32 = rng.random_range(4..=12);
    let rightward = rng.random_bool(0.5);
    let bottom = cam.walk_line as i32;
    let half = (shape.body_w.max(shape.head) / 2 + 2) as f32;
    let w = cam.width as f32;

    let dist = w + 2.0 * half;
    let budget = (frames.saturating_sub(t0 + 4)).max(12) as f32;
    let speed = (dist * rng.random_range(0.75..1.0) / budget).clamp(2.4, 7.0);

    let mut actor = Vec::with_capacity(frames as usize);
    for f in 0..frames {
        let mut a = Vec::new();
        if f >= t0 {
            let k = f - t0;
            let travelled = speed * k as f32;
            let cx = if rightward { -half + travelled } else { w + half - travelled };
            a = shape.standing(cx.round() as i32, bottom, stride_bob(k as i32, bob_half));
        }
        actor.push(a);
    }
    Script { actor, scenery: vec![Vec::new(); frames as usize], tag: Label::NonDelivery }
}

fn resident_exit(cam: &CameraParams, frames: u32, rng: &mut ChaCha8Rng) -> Script {
    let shape = ActorShape::sample(rng, 1.25);
    let bob_half: i32 = rng.random_range(3..=5);
    let t0: u32 = rng.random_range(4..=12);
    let pause: u32 = rng.random_range(4..=8);
    let bottom = cam.walk_line as i32;
    let start_cx = cam.door_center() as f32;
    let half = (shape.body_w.max(shape.head) / 2 + 2) as f32;

    let dist = start_cx + half;
    let budget = (frames.saturating_sub(t0 + pause + 4)).max(12) as f32;
    let speed = (1.05 * dist / budget).clamp(3.0, 8.0) * rng.random_range(1.0..1.1);

    let mut actor = Vec::with_capacity(frames as usize);
    for f in 0..frames {
        let mut a = Vec::new();
        if f >= t0 {
            let k = f - t0;
            if k < pause {
                a = shape.standing(start_cx.round() as i32, bottom, 0);
            } else {
                let m = k - pause;
                let cx = start_cx - speed * (m + 1) as f32;
                if cx > -half {
                    a = shape.standing(cx.round() as i32, bottom, stride_bob(m as i32, bob_half));
                }
            }
        }
        actor.push(a);
    }
    Script { actor, scenery: vec![Vec::new(); frames as usize], tag: Label::NonDelivery }
}

fn static_distractor(cam: &CameraParams, frames: u32, rng: &mut ChaCha8Rng) -> Script {
    let w: i32 = rng.random_range(10..=13);
    let h: i32 = rng.random_range(10..=14);
    let x0: i32 = rng.random_range(8..(cam.width as i32 / 2 - w));
    let y_max = (cam.horizon as i32 - h - 8).max(17);
    let y0: i32 = rng.random_range(16..y_max.max(17));
    let shade_a: i16 = rng.random_range(175..=205);
    let shade_b = shade_a - rng.random_range(60..=80);

    let mut actor = Vec::with_capacity(frames as usize);
    for f in 0..frames {
        // ±1 px sway with a 4-frame period, brightness flicker every frame.
        let dx = [0, 1, 0, -1][(f % 4) as usize];
        let shade = if f % 2 == 0 { shade_a } else { shade_b };
        actor.push(vec![Rect::new(x0 + dx, y0, x0 + dx + w, y0 + h, shade)]);
    }
    Script { actor, scenery: vec![Vec::new(); frames as usize], tag: Label::NonDelivery }
}

/// Render one scenario deterministically from its seed.
pub fn generate_scene(spec: &SceneSpec<'_>, seed: u64) -> Scene {
    let cam = spec.camera;
    let mut rng = rng_from_seed(seed);
    let script = match spec.kind {
        ScenarioKind::Delivery => delivery(cam, spec.frames, &mut rng),
        ScenarioKind::WalkBy => walk_by(cam, spec.frames, &mut rng),
        ScenarioKind::ResidentExit => resident_exit(cam, spec.frames, &mut rng),
        ScenarioKind::StaticDistractor => static_distractor(cam, spec.frames, &mut rng),
    };

    let mut frames = Vec::with_capacity(spec.frames as usize);
    let mut boxes = std::collections::BTreeMap::new();
    for f in 0..spec.frames as usize {
        let mut frame = cam.background().clone();
        for r in &script.scenery[f] {
            draw(&mut frame, r, cam.tint);
        }
        for r in &script.actor[f] {
            draw(&mut frame, r, cam.tint);
        }
        if let Some(b) = bounds(&script.actor[f], cam.width, cam.height) {
            boxes.insert(f as u32, b);
        }
        frames.push(frame);
    }

    let track = SubjectTrack { id: 0, tag: script.tag, boxes };
    let activities = track
        .frame_interval()
        .map(|iv| ActivitySpan {
            kind: spec.kind.name().to_string(),
            start_frame: iv.start,
            end_frame: iv.end,
        })
        .into_iter()
        .collect();
    Scene {
        frames,
        tracks: vec![track],
        video_tag: spec.kind.video_tag(),
        activities,
    }
}
