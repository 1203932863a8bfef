//! Greedy nearest-centroid blob tracker.
//!
//! Each frame, live tracks are matched to blobs by ascending centroid
//! distance (ties broken by track id, then blob index), one blob per track.
//! Unmatched blobs open new tracks; tracks unmatched for more than
//! `max_missed` consecutive frames are closed and returned. Tracks that
//! reach `max_event_frames` observed span are flushed so a stuck object
//! cannot accumulate without bound; the object re-enters as a new track.

use crate::geometry::BoxPx;

use super::blob::Blob;

#[derive(Debug, Clone)]
pub struct TrackerConfig {
    pub max_match_dist: f64,
    pub max_missed: u32,
    pub max_event_frames: u32,
}

/// One contiguous observation segment of a moving region.
#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    pub start_frame: u32,
    /// Last frame with a matched observation.
    pub last_frame: u32,
    /// Number of frames with a matched observation.
    pub observed: u32,
    /// Union of observed bounding boxes.
    pub union_box: BoxPx,
    /// Most recent centroid, (x, y).
    pub centroid: (f64, f64),
    missed: u32,
    sum_x: f64,
    sum_y: f64,
    sum_xx: f64,
    sum_yy: f64,
}

impl Track {
    fn open(id: u64, frame: u32, blob: &Blob) -> Self {
        let mut t = Track {
            id,
            start_frame: frame,
            last_frame: frame,
            observed: 0,
            union_box: blob.bbox,
            centroid: blob.centroid,
            missed: 0,
            sum_x: 0.0,
            sum_y: 0.0,
            sum_xx: 0.0,
            sum_yy: 0.0,
        };
        t.absorb(frame, blob);
        t
    }

    fn absorb(&mut self, frame: u32, blob: &Blob) {
        self.last_frame = frame;
        self.observed += 1;
        self.missed = 0;
        self.union_box = self.union_box.union_bounds(&blob.bbox);
        self.centroid = blob.centroid;
        self.sum_x += blob.centroid.0;
        self.sum_y += blob.centroid.1;
        self.sum_xx += blob.centroid.0 * blob.centroid.0;
        self.sum_yy += blob.centroid.1 * blob.centroid.1;
    }

    /// Total variance of the observed centroid positions: var(x) + var(y).
    pub fn centroid_variance(&self) -> f64 {
        if self.observed == 0 {
            return 0.0;
        }
        let n = self.observed as f64;
        let mx = self.sum_x / n;
        let my = self.sum_y / n;
        let vx = (self.sum_xx / n - mx * mx).max(0.0);
        let vy = (self.sum_yy / n - my * my).max(0.0);
        vx + vy
    }

    /// Frames spanned from first to last observation, inclusive.
    pub fn span(&self) -> u32 {
        self.last_frame - self.start_frame + 1
    }
}

#[derive(Debug)]
pub struct Tracker {
    cfg: TrackerConfig,
    next_id: u64,
    active: Vec<Track>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Tracker { cfg, next_id: 0, active: Vec::new() }
    }

    /// Advance one frame. Returns tracks closed at this step.
    pub fn step(&mut self, frame: u32, blobs: &[Blob]) -> Vec<Track> {
        // All candidate pairs within the gate, cheapest first; ties resolve
        // by track id then blob index so matching is order-independent.
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (ti, t) in self.active.iter().enumerate() {
            for (bi, b) in blobs.iter().enumerate() {
                let dx = t.centroid.0 - b.centroid.0;
                let dy = t.centroid.1 - b.centroid.1;
                let d = (dx * dx + dy * dy).sqrt();
                if d <= self.cfg.max_match_dist {
                    pairs.push((d, ti, bi));
                }
            }
        }
        pairs.sort_by(|a, b| {
            a.0.partial_cmp(&b.0)
                .expect("distance is finite")
                .then(self.active[a.1].id.cmp(&self.active[b.1].id))
                .then(a.2.cmp(&b.2))
        });

        let mut track_used = vec![false; self.active.len()];
        let mut blob_used = vec![false; blobs.len()];
        for &(_, ti, bi) in &pairs {
            if track_used[ti] || blob_used[bi] {
                continue;
            }
            track_used[ti] = true;
            blob_used[bi] = true;
            self.active[ti].absorb(frame, &blobs[bi]);
        }

        for (bi, b) in blobs.iter().enumerate() {
            if !blob_used[bi] {
                let t = Track::open(self.next_id, frame, b);
                self.next_id += 1;
                self.active.push(t);
            }
        }

        let mut closed = Vec::new();
        let cfg = &self.cfg;
        let mut kept = Vec::with_capacity(self.active.len());
        for mut t in self.active.drain(..) {
            if t.last_frame == frame {
                if t.span() >= cfg.max_event_frames {
                    closed.push(t);
                } else {
                    kept.push(t);
                }
            } else {
                t.missed += 1;
                if t.missed > cfg.max_missed {
                    closed.push(t);
                } else {
                    kept.push(t);
                }
            }
        }
        self.active = kept;
        closed
    }

    /// Close every remaining track (end of stream).
    pub fn finish(&mut self) -> Vec<Track> {
        let mut out: Vec<Track> = self.active.drain(..).collect();
        out.sort_by_key(|t| t.id);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob_at(x: f64, y: f64) -> Blob {
        let cx = x.round() as u32;
        let cy = y.round() as u32;
        Blob {
            bbox: BoxPx::new(cx.saturating_sub(2), cy.saturating_sub(2), cx + 3, cy + 3),
            centroid: (x, y),
            area: 25,
        }
    }

    fn cfg() -> TrackerConfig {
        TrackerConfig { max_match_dist: 50.0, max_missed: 10, max_event_frames: 3600 }
    }

    #[test]
    fn follows_a_moving_blob() {
        let mut tr = Tracker::new(cfg());
        for f in 0..20u32 {
            let closed = tr.step(f, &[blob_at(10.0 + 3.0 * f as f64, 50.0)]);
            assert!(closed.is_empty());
        }
        let done = tr.finish();
        assert_eq!(done.len(), 1);
        let t = &done[0];
        assert_eq!(t.observed, 20);
        assert_eq!((t.start_frame, t.last_frame), (0, 19));
        assert_eq!(t.union_box, BoxPx::new(8, 48, 70, 53));
        assert!(t.centroid_variance() > 100.0);
    }

    #[test]
    fn stationary_blob_has_tiny_variance() {
        let mut tr = Tracker::new(cfg());
        for f in 0..30u32 {
            tr.step(f, &[blob_at(100.0, 100.0)]);
        }
        let done = tr.finish();
        assert_eq!(done.len(), 1);
        assert!(done[0].centroid_variance() < 1e-9);
    }

    #[test]
    fn track_closes_after_max_missed() {
        let mut tr = Tracker::new(TrackerConfig { max_missed: 3, ..cfg() });
        tr.step(0, &[blob_at(10.0, 10.0)]);
        let mut closed_at = None;
        for f in 1..10u32 {
            let closed = tr.step(f, &[]);
            if !closed.is_empty() {
                closed_at = Some((f, closed));
                break;
            }
        }
        let (f, closed) = closed_at.expect("track should close");
        assert_eq!(f, 4); // misses at frames 1..=4 exceed max_missed=3
        assert_eq!(closed[0].observed, 1);
        assert_eq!(closed[0].last_frame, 0);
    }

    #[test]
    fn two_blobs_keep_distinct_identities() {
        let mut tr = Tracker::new(cfg());
        for f in 0..15u32 {
            let x = f as f64 * 2.0;
            tr.step(f, &[blob_at(10.0 + x, 10.0), blob_at(200.0 - x, 10.0)]);
        }
        let done = tr.finish();
        assert_eq!(done.len(), 2);
        assert_eq!(done[0].id, 0);
        assert_eq!(done[1].id, 1);
        assert!(done.iter().all(|t| t.observed == 15));
        // Track 0 moved right from 10; track 1 moved left from 200.
        assert!(done[0].centroid.0 < 60.0);
        assert!(done[1].centroid.0 > 150.0);
    }

    #[test]
    fn greedy_matching_prefers_nearest() {
        let mut tr = Tracker::new(cfg());
        tr.step(0, &[blob_at(0.0, 0.0), blob_at(30.0, 0.0)]);
        // Both tracks could take the blob at 20; the nearer (track 1) wins,
        // track 0 takes the one at 5.
        tr.step(1, &[blob_at(20.0, 0.0), blob_at(5.0, 0.0)]);
        let done = tr.finish();
        assert_eq!(done[0].centroid, (5.0, 0.0));
        assert_eq!(done[1].centroid, (20.0, 0.0));
    }

    #[test]
    fn long_track_is_flushed_at_cap() {
        let mut tr = Tracker::new(TrackerConfig { max_event_frames: 50, ..cfg() });
        let mut flushed = Vec::new();
        for f in 0..120u32 {
            flushed.extend(tr.step(f, &[blob_at(10.0, 10.0)]));
        }
        flushed.extend(tr.finish());
        // 120 frames with a 50-frame cap: segments of 50, 50, 20.
        assert_eq!(flushed.len(), 3);
        assert_eq!(flushed[0].span(), 50);
        assert_eq!(flushed[1].span(), 50);
        assert_eq!(flushed[2].span(), 20);
        assert_eq!(flushed[2].last_frame, 119);
    }

    #[test]
    fn far_blob_opens_new_track_instead_of_teleporting() {
        let mut tr = Tracker::new(cfg());
        tr.step(0, &[blob_at(10.0, 10.0)]);
        tr.step(1, &[blob_at(300.0, 200.0)]); // outside 50px gate
        let done = tr.finish();
        assert_eq!(done.len(), 2);
        assert_eq!(done[0].observed, 1);
        assert_eq!(done[1].start_frame, 1);
    }
}
