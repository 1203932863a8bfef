//! Corpus assembly.
//!
//! Renders every camera/video combination to the directory layout the
//! dataset stage consumes, writes exact annotations next to the frames,
//! derives camera-disjoint splits and records a summary manifest. The whole
//! tree is a pure function of the configuration, so a rerun with the same
//! seed reproduces every byte.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::config::{Config, SynthConfig};
use crate::data::{
    annotation_path, annotations_dir, make_splits, video_dir, VideoAnnotation,
    CORPUS_MANIFEST_FILE, SPLITS_FILE,
};
use crate::error::{Error, Result};
use crate::imaging::{frame_filename, write_jpeg};
use crate::rng::{derive_seed, derived_rng};

use super::camera::CameraParams;
use super::scene::{generate_scene, SceneSpec};
use super::{scenario_sequence, ScenarioKind};

pub const CORPUS_SCHEMA_VERSION: u32 = 1;

/// Summary written as `manifest.json` at the corpus root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub schema_version: u32,
    pub seed: u64,
    pub cameras: u32,
    pub videos_per_camera: u32,
    pub total_videos: u32,
    pub width: u32,
    pub height: u32,
    pub fps: u32,
    pub frames_per_video: u32,
    pub jpeg_quality: u8,
    pub scenario_counts: BTreeMap<String, u32>,
    pub delivery_videos: u32,
    pub non_delivery_videos: u32,
}

impl CorpusManifest {
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<CorpusManifest> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                Error::MissingArtifact(format!("corpus manifest {}", path.display()))
            }
            _ => Error::io(path, e),
        })?;
        let m: CorpusManifest = serde_json::from_str(&text)?;
        if m.schema_version != CORPUS_SCHEMA_VERSION {
            return Err(Error::Decode(format!(
                "{}: unsupported corpus schema {}",
                path.display(),
                m.schema_version
            )));
        }
        Ok(m)
    }
}

fn check_generator_limits(s: &SynthConfig) -> Result<()> {
    fn bail(msg: String) -> Result<()> {
        Err(Error::Config(msg))
    }
    if s.cameras < 3 {
        return bail(format!("{} cameras cannot form disjoint splits; need >= 3", s.cameras));
    }
    if s.videos_per_camera < 3 {
        return bail("videos_per_camera must be >= 3 so every camera sees both classes".into());
    }
    if s.width < 240 || s.height < 160 {
        return bail(format!("{}x{} too small for the scene layout (min 240x160)", s.width, s.height));
    }
    if s.width > 640 || s.height > 640 {
        return bail(format!("{}x{} too large; the scripts target <= 640px frames", s.width, s.height));
    }
    if s.frames_per_video < 60 || s.frames_per_video < s.width / 4 {
        return bail(format!(
            "frames_per_video {} too short; need >= max(60, width/4) for the scripts to complete",
            s.frames_per_video
        ));
    }
    Ok(())
}

/// Assign a scenario to every video (camera-major order). Global counts
/// follow the configured weights; the order within each camera is shuffled
/// deterministically; every camera is repaired to contain at least one
/// delivery and one non-delivery video so camera-disjoint splits always see
/// both classes.
pub fn plan_scenarios(s: &SynthConfig, seed: u64) -> Result<Vec<ScenarioKind>> {
    check_generator_limits(s)?;
    let cams = s.cameras as usize;
    let per = s.videos_per_camera as usize;
    let weights = [
        s.weight_delivery,
        s.weight_walk_by,
        s.weight_resident_exit,
        s.weight_static_distractor,
    ];
    let mut plan = scenario_sequence(cams * per, weights);
    for cam in 0..cams {
        let mut rng = derived_rng(seed, "scenario-order", cam as u64);
        plan[cam * per..(cam + 1) * per].shuffle(&mut rng);
    }
    repair_class_coverage(&mut plan, cams, per)?;
    Ok(plan)
}

/// Swap videos between cameras until every camera has at least one delivery
/// and one non-delivery video (donors are the cameras richest in the needed
/// class). Global scenario counts are preserved; errors when the corpus
/// simply has too few videos of a class to go around.
fn repair_class_coverage(
    plan: &mut [ScenarioKind],
    cams: usize,
    per: usize,
) -> Result<()> {
    for needed in [true, false] {
        loop {
            let has = |cam: usize| {
                plan[cam * per..(cam + 1) * per]
                    .iter()
                    .filter(|k| k.video_tag().is_delivery() == needed)
                    .count()
            };
            let Some(poor) = (0..cams).find(|&c| has(c) == 0) else { break };
            let donor = (0..cams).max_by_key(|&c| has(c)).expect("cameras >= 3");
            if has(donor) < 2 {
                return Err(Error::Config(format!(
                    "scenario weights leave no {} videos to give camera {poor}",
                    if needed { "delivery" } else { "non-delivery" }
                )));
            }
            let donor_slot = (donor * per..(donor + 1) * per)
                .find(|&g| plan[g].video_tag().is_delivery() == needed)
                .expect("donor has the class");
            let poor_slot = poor * per; // any slot: the camera has none of `needed`
            plan.swap(donor_slot, poor_slot);
        }
    }
    Ok(())
}

/// Render and write a full corpus under `root`.
pub fn build_corpus(cfg: &Config, root: &Path) -> Result<CorpusManifest> {
    cfg.validate()?;
    let s = &cfg.synth;
    let plan = plan_scenarios(s, cfg.seed)?;

    let videos_root = root.join("videos");
    if videos_root.is_dir()
        && std::fs::read_dir(&videos_root)
            .map_err(|e| Error::io(&videos_root, e))?
            .next()
            .is_some()
    {
        return Err(Error::InvalidInput(format!(
            "{} already contains videos; refusing to mix corpora",
            videos_root.display()
        )));
    }
    std::fs::create_dir_all(&videos_root).map_err(|e| Error::io(&videos_root, e))?;
    let ann_dir = annotations_dir(root);
    std::fs::create_dir_all(&ann_dir).map_err(|e| Error::io(&ann_dir, e))?;

    let mut scenario_counts: BTreeMap<String, u32> = BTreeMap::new();
    let mut delivery_videos = 0u32;
    let mut camera_ids = Vec::new();
    for cam_idx in 0..s.cameras {
        let camera = CameraParams::derive(cfg.seed, cam_idx, s.width, s.height);
        camera_ids.push(camera.camera_id.clone());
        for v in 0..s.videos_per_camera {
            let g = (cam_idx * s.videos_per_camera + v) as usize;
            let kind = plan[g];
            let video_id = format!("{}_v{v:02}", camera.camera_id);
            let spec = SceneSpec { kind, camera: &camera, frames: s.frames_per_video };
            let scene = generate_scene(&spec, derive_seed(cfg.seed, "scene", g as u64));

            let dir = video_dir(root, &video_id);
            std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
            for (f, frame) in scene.frames.iter().enumerate() {
                write_jpeg(&dir.join(frame_filename(f as u32)), frame, s.jpeg_quality)?;
            }
            let ann = VideoAnnotation {
                schema_version: VideoAnnotation::SCHEMA_VERSION,
                video_id: video_id.clone(),
                camera_id: camera.camera_id.clone(),
                width: s.width,
                height: s.height,
                num_frames: s.frames_per_video,
                fps: s.fps,
                video_tag: scene.video_tag,
                tracks: scene.tracks,
                activities: scene.activities,
            };
            ann.save(&annotation_path(root, &video_id))?;

            *scenario_counts.entry(kind.name().to_string()).or_insert(0) += 1;
            if scene.video_tag.is_delivery() {
                delivery_videos += 1;
            }
        }
    }

    let splits = make_splits(&camera_ids, &cfg.labeling.split_ratios, cfg.seed)?;
    splits.save(&root.join(SPLITS_FILE))?;

    let total_videos = s.cameras * s.videos_per_camera;
    let manifest = CorpusManifest {
        schema_version: CORPUS_SCHEMA_VERSION,
        seed: cfg.seed,
        cameras: s.cameras,
        videos_per_camera: s.videos_per_camera,
        total_videos,
        width: s.width,
        height: s.height,
        fps: s.fps,
        frames_per_video: s.frames_per_video,
        jpeg_quality: s.jpeg_quality,
        scenario_counts,
        delivery_videos,
        non_delivery_videos: total_videos - delivery_videos,
    };
    manifest.save(&root.join(CORPUS_MANIFEST_FILE))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{list_video_ids, SplitsFile};

    fn tiny_config() -> Config {
        let mut cfg = Config::default();
        cfg.seed = 21;
        cfg.synth.cameras = 3;
        cfg.synth.videos_per_camera = 3;
        cfg.synth.width = 240;
        cfg.synth.height = 160;
        cfg.synth.frames_per_video = 60;
        cfg
    }

    #[test]
    fn plan_respects_weights_and_class_coverage() {
        let mut s = SynthConfig::default();
        s.cameras = 30;
        s.videos_per_camera = 10;
        let plan = plan_scenarios(&s, 5).unwrap();
        assert_eq!(plan.len(), 300);
        let deliveries = plan.iter().filter(|k| k.video_tag().is_delivery()).count();
        // Weights 3:2:2:2 target a 1:2 delivery:non-delivery balance.
        let ratio = (plan.len() - deliveries) as f64 / deliveries as f64;
        assert!((ratio - 2.0).abs() <= 0.2, "class ratio 1:{ratio:.2}");
        for cam in 0..30 {
            let slice = &plan[cam * 10..(cam + 1) * 10];
            assert!(slice.iter().any(|k| k.video_tag().is_delivery()), "camera {cam}");
            assert!(slice.iter().any(|k| !k.video_tag().is_delivery()), "camera {cam}");
        }
    }

    #[test]
    fn repair_moves_deliveries_to_starved_cameras() {
        use ScenarioKind::{Delivery as D, WalkBy as W};
        // Camera 0 hoards every delivery; cameras 1 and 2 have none.
        let mut plan = vec![D, D, D, W, W, W, W, W, W];
        repair_class_coverage(&mut plan, 3, 3).unwrap();
        for cam in 0..3 {
            let slice = &plan[cam * 3..(cam + 1) * 3];
            assert!(slice.iter().any(|k| k.video_tag().is_delivery()), "camera {cam}");
            assert!(slice.iter().any(|k| !k.video_tag().is_delivery()), "camera {cam}");
        }
        let total = plan.iter().filter(|k| k.video_tag().is_delivery()).count();
        assert_eq!(total, 3, "repair must not change global counts");

        // Too few deliveries to go around: repair reports the dead end.
        let mut plan = vec![D, W, W, W, W, W, W, W, W];
        let err = repair_class_coverage(&mut plan, 3, 3).unwrap_err();
        assert!(matches!(err, Error::Config(_)));

        // The inverse starvation (all deliveries) is repaired the same way.
        let mut plan = vec![W, W, W, D, D, D, D, D, D];
        repair_class_coverage(&mut plan, 3, 3).unwrap();
        for cam in 0..3 {
            let slice = &plan[cam * 3..(cam + 1) * 3];
            assert!(slice.iter().any(|k| !k.video_tag().is_delivery()), "camera {cam}");
            assert!(slice.iter().any(|k| k.video_tag().is_delivery()), "camera {cam}");
        }
    }

    #[test]
    fn plan_rejects_impossible_weights() {
        let mut s = SynthConfig::default();
        s.cameras = 8;
        s.videos_per_camera = 4;
        // 8 cameras need 8 deliveries, but weights yield only ~1 in 32.
        s.weight_delivery = 1;
        s.weight_walk_by = 1000;
        let err = plan_scenarios(&s, 0).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn generator_limits_are_enforced() {
        let mut s = SynthConfig::default();
        s.cameras = 2;
        assert!(matches!(plan_scenarios(&s, 0).unwrap_err(), Error::Config(_)));
        let mut s = SynthConfig::default();
        s.frames_per_video = 30;
        assert!(matches!(plan_scenarios(&s, 0).unwrap_err(), Error::Config(_)));
        let mut s = SynthConfig::default();
        s.width = 100;
        assert!(matches!(plan_scenarios(&s, 0).unwrap_err(), Error::Config(_)));
    }

    #[test]
    fn corpus_layout_is_complete_and_consistent() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config();
        let manifest = build_corpus(&cfg, dir.path()).unwrap();
        assert_eq!(manifest.total_videos, 9);
        assert_eq!(
            manifest.delivery_videos + manifest.non_delivery_videos,
            manifest.total_videos
        );
        assert_eq!(manifest.scenario_counts.values().sum::<u32>(), 9);

        let ids = list_video_ids(dir.path()).unwrap();
        assert_eq!(ids.len(), 9);
        let mut per_camera: BTreeMap<String, (u32, u32)> = BTreeMap::new();
        for id in &ids {
            let ann = VideoAnnotation::load(&annotation_path(dir.path(), id)).unwrap();
            assert_eq!(&ann.video_id, id);
            assert_eq!(ann.num_frames, 60);
            assert_eq!(ann.tracks.len(), 1);
            assert!(!ann.tracks[0].boxes.is_empty());
            let entry = per_camera.entry(ann.camera_id.clone()).or_insert((0, 0));
            if ann.video_tag.is_delivery() {
                entry.0 += 1;
            } else {
                entry.1 += 1;
            }
            // Every frame file the annotation claims must decode.
            let frames = crate::imaging::FrameDir::open(video_dir(dir.path(), id)).unwrap();
            assert_eq!(crate::imaging::FrameSource::len(&frames), 60);
        }
        assert_eq!(per_camera.len(), 3);
        for (cam, (del, non)) in &per_camera {
            assert!(*del >= 1 && *non >= 1, "camera {cam}: {del} deliveries, {non} non");
        }

        let splits = SplitsFile::load(&dir.path().join(SPLITS_FILE)).unwrap();
        let mut all: Vec<&String> =
            splits.train.iter().chain(&splits.val).chain(&splits.test).collect();
        all.sort();
        assert_eq!(all.len(), 3, "each camera lands in exactly one split");
        assert_eq!(manifest, CorpusManifest::load(&dir.path().join(CORPUS_MANIFEST_FILE)).unwrap());
    }

    #[test]
    fn corpus_regenerates_byte_identically() {
        let cfg = tiny_config();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        build_corpus(&cfg, a.path()).unwrap();
        build_corpus(&cfg, b.path()).unwrap();
        for rel in [
            CORPUS_MANIFEST_FILE.to_string(),
            SPLITS_FILE.to_string(),
            "annotations/cam01_v02.json".to_string(),
            "videos/cam00_v00/frame_000000.jpg".to_string(),
            "videos/cam02_v01/frame_000030.jpg".to_string(),
        ] {
            let x = std::fs::read(a.path().join(&rel)).unwrap();
            let y = std::fs::read(b.path().join(&rel)).unwrap();
            assert_eq!(x, y, "{rel} differs between reruns");
        }
    }

    #[test]
    fn nonempty_video_directory_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = tiny_config();
        build_corpus(&cfg, dir.path()).unwrap();
        let err = build_corpus(&cfg, dir.path()).unwrap_err();
        assert!(matches!(err, Error::InvalidInput(_)));
    }
}
