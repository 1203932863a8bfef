//! Camera-disjoint train/val/test split assignment.
//!
//! All videos from one camera land in the same split so evaluation measures
//! generalization to unseen scenes. Cameras are shuffled deterministically
//! and counts are apportioned by largest remainder with at least one camera
//! per split.

use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::derived_rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Split> {
        match s {
            "train" => Ok(Split::Train),
            "val" => Ok(Split::Val),
            "test" => Ok(Split::Test),
            _ => Err(Error::InvalidInput(format!("unknown split {s:?}"))),
        }
    }
}

/// Camera ids per split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitsFile {
    pub schema_version: u32,
    pub train: Vec<String>,
    pub val: Vec<String>,
    pub test: Vec<String>,
}

impl SplitsFile {
    pub const SCHEMA_VERSION: u32 = 1;

    pub fn cameras(&self, split: Split) -> &[String] {
        match split {
            Split::Train => &self.train,
            Split::Val => &self.val,
            Split::Test => &self.test,
        }
    }

    pub fn split_of(&self, camera: &str) -> Option<Split> {
        for s in Split::ALL {
            if self.cameras(s).iter().any(|c| c == camera) {
                return Some(s);
            }
        }
        None
    }

    pub fn load(path: &Path) -> Result<SplitsFile> {
        let text = std::fs::read_to_string(path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => {
                Error::MissingArtifact(format!("splits {}", path.display()))
            }
            _ => Error::io(path, e),
        })?;
        let f: SplitsFile = serde_json::from_str(&text)?;
        if f.schema_version != Self::SCHEMA_VERSION {
            return Err(Error::Decode(format!(
                "{}: unsupported splits schema {}",
                path.display(),
                f.schema_version
            )));
        }
        Ok(f)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Apportion `total` items across ratios by largest remainder, forcing at
/// least one item per bucket.
fn apportion(total: usize, ratios: &[f64; 3]) -> [usize; 3] {
    let quotas: Vec<f64> = ratios.iter().map(|r| r * total as f64).collect();
    let mut counts = [0usize; 3];
    for (c, q) in counts.iter_mut().zip(&quotas) {
        *c = q.floor() as usize;
    }
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - quotas[a].floor();
        let rb = quotas[b] - quotas[b].floor();
        rb.partial_cmp(&ra).expect("finite remainders").then(a.cmp(&b))
    });
    for i in 0..(total - assigned) {
        counts[order[i % 3]] += 1;
    }
    // Min-one repair: move from the fullest bucket into empty ones.
    loop {
        let Some(empty) = counts.iter().position(|&c| c == 0) else { break };
        let donor = (0..3).max_by_key(|&i| counts[i]).expect("three buckets");
        counts[donor] -= 1;
        counts[empty] += 1;
    }
    counts
}

/// Assign cameras to splits. Requires at least three cameras.
pub fn make_splits(cameras: &[String], ratios: &[f64; 3], seed: u64) -> Result<SplitsFile> {
    let mut unique: Vec<String> = cameras.to_vec();
    unique.sort();
    unique.dedup();
    if unique.len() < 3 {
        return Err(Error::InvalidInput(format!(
            "need at least 3 cameras for disjoint splits, got {}",
            unique.len()
        )));
    }
    let mut rng = derived_rng(seed, "splits", 0);
    unique.shuffle(&mut rng);
    let counts = apportion(unique.len(), ratios);
    let mut train: Vec<String> = unique[..counts[0]].to_vec();
    let mut val: Vec<String> = unique[counts[0]..counts[0] + counts[1]].to_vec();
    let mut test: Vec<String> = unique[counts[0] + counts[1]..].to_vec();
    train.sort();
    val.sort();
    test.sort();
    Ok(SplitsFile { schema_version: SplitsFile::SCHEMA_VERSION, train, val, test })
}
