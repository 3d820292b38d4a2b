//! Cross-validation bookkeeping and softmax ensembling.
//!
//! Fold models trained by an external framework emit per-class
//! probability maps; ensembling averages them voxel-wise and takes the
//! per-voxel argmax to produce a discrete prediction.
//!
//! On disk a probability volume is one float32 NIfTI per channel plus a
//! JSON sidecar `{channels: [{label, path}], dims, spacing}`; channel
//! paths are relative to the sidecar.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nifti;
use crate::volume::{LabelVolume, ScalarVolume};

/// Per-voxel class probabilities, channel-major
/// (`data[c * nx*ny*nz + voxel]`).
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVolume {
    /// Class count; channel index doubles as the class label.
    pub channels: usize,
    /// Voxel counts along x, y, z.
    pub dims: [usize; 3],
    /// Voxel spacing in mm.
    pub spacing: [f32; 3],
    /// Origin carried from the channel files.
    pub origin: [f32; 3],
    /// Probabilities, channel-major.
    pub data: Vec<f32>,
}

impl ProbabilityVolume {
    /// Maximum usable channel count (channel indices become u8 labels).
    pub const MAX_CHANNELS: usize = 255;

    /// Build a probability volume, checking that every entry lies in
    /// [0, 1] and every voxel's channel sum is 1 within 1e-5.
    pub fn new(
        channels: usize,
        dims: [usize; 3],
        spacing: [f32; 3],
        origin: [f32; 3],
        data: Vec<f32>,
    ) -> Result<Self> {
        if channels == 0 || channels > Self::MAX_CHANNELS {
            return Err(Error::Shape(format!(
                "channel count must be 1..={}, got {channels}",
                Self::MAX_CHANNELS
            )));
        }
        let plane = dims[0] * dims[1] * dims[2];
        if plane == 0 || data.len() != channels * plane {
            return Err(Error::Shape(format!(
                "data length {} does not match {channels} channels of dims {dims:?}",
                data.len()
            )));
        }
        for &v in &data {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Data(format!(
                    "probability {v} outside [0, 1]"
                )));
            }
        }
        for voxel in 0..plane {
            let sum: f64 = (0..channels)
                .map(|c| f64::from(data[c * plane + voxel]))
                .sum();
            if (sum - 1.0).abs() > 1e-5 {
                return Err(Error::Data(format!(
                    "voxel {voxel}: channel sum {sum} deviates from 1 beyond 1e-5"
                )));
            }
        }
        Ok(Self {
            channels,
            dims,
            spacing,
            origin,
            data,
        })
    }

    /// Voxels per channel.
    pub fn voxels_per_channel(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Probabilities of channel `c`.
    pub fn channel(&self, c: usize) -> &[f32] {
        let plane = self.voxels_per_channel();
        &self.data[c * plane..(c + 1) * plane]
    }
}

/// Voxel-wise, channel-wise arithmetic mean of the members.
pub fn average_probs(members: &[ProbabilityVolume]) -> Result<ProbabilityVolume> {
    let first = members
        .first()
        .ok_or_else(|| Error::Shape("cannot average an empty member list".into()))?;
    for (i, m) in members.iter().enumerate().skip(1) {
        if m.channels != first.channels || m.dims != first.dims {
            return Err(Error::Shape(format!(
                "member {i} has {} channels / dims {:?}, expected {} / {:?}",
                m.channels, m.dims, first.channels, first.dims
            )));
        }
    }
    let inv = 1.0 / members.len() as f64;
    let data: Vec<f32> = (0..first.data.len())
        .map(|i| {
            let sum: f64 = members.iter().map(|m| f64::from(m.data[i])).sum();
            (sum * inv) as f32
        })
        .collect();
    ProbabilityVolume::new(first.channels, first.dims, first.spacing, first.origin, data)
}

/// Per-voxel argmax over channels, ties toward the lowest channel index
/// (which biases ties toward background, channel 0).
pub fn argmax_labels(probs: &ProbabilityVolume) -> LabelVolume {
    let plane = probs.voxels_per_channel();
    let mut labels = vec![0u8; plane];
    let mut best = probs.channel(0).to_vec();
    for c in 1..probs.channels {
        let chan = probs.channel(c);
        for (i, (&score, b)) in chan.iter().zip(best.iter_mut()).enumerate() {
            if score > *b {
                *b = score;
                labels[i] = c as u8;
            }
        }
    }
    let allowed: Vec<u8> = (0..probs.channels as u8).collect();
    LabelVolume::new_with_labels(probs.dims, probs.spacing, probs.origin, labels, &allowed)
        .expect("argmax labels are within the channel range")
}

/// Assignment of case ids to cross-validation folds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldAssignment {
    /// Fold count.
    pub k: usize,
    /// Case ids per fold, each sorted; fold sizes differ by at most one.
    pub folds: Vec<Vec<String>>,
}

impl FoldAssignment {
    /// Fold index of a case id, if assigned.
    pub fn fold_of(&self, case_id: &str) -> Option<usize> {
        self.folds
            .iter()
            .position(|fold| fold.iter().any(|id| id == case_id))
    }
}

/// Deterministic k-fold split.
///
/// The ids are sorted lexicographically, shuffled by a Fisher–Yates
/// shuffle driven by ChaCha8 keyed with `seed`
/// (`ChaCha8Rng::seed_from_u64` + `SliceRandom::shuffle` of rand 0.8),
/// and dealt round-robin: the i-th shuffled id lands in fold `i mod k`.
/// Reimplementations that follow this recipe reproduce the split
/// exactly.
pub fn kfold_split(case_ids: &[String], k: usize, seed: u64) -> Result<FoldAssignment> {
    if k < 2 {
        return Err(Error::Config(format!("fold count must be >= 2, got {k}")));
    }
    if case_ids.len() < k {
        return Err(Error::Config(format!(
            "cannot split {} cases into {k} folds",
            case_ids.len()
        )));
    }
    let unique: BTreeSet<&str> = case_ids.iter().map(String::as_str).collect();
    if unique.len() != case_ids.len() {
        return Err(Error::Manifest(
            "case ids must be unique for a fold split".into(),
        ));
    }

    let mut sorted: Vec<String> = case_ids.to_vec();
    sorted.sort_unstable();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sorted.shuffle(&mut rng);

    let mut folds = vec![Vec::new(); k];
    for (i, id) in sorted.into_iter().enumerate() {
        folds[i % k].push(id);
    }
    for fold in &mut folds {
        fold.sort_unstable();
    }
    Ok(FoldAssignment { k, folds })
}

/// One channel entry of the probability sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarChannel {
    /// Class label of this channel.
    pub label: u8,
    /// Channel NIfTI path, relative to the sidecar.
    pub path: String,
}

/// Probability-volume sidecar: `{channels: [{label, path}], dims, spacing}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProbSidecar {
    /// Channel files in label order.
    pub channels: Vec<SidecarChannel>,
    /// Voxel counts along x, y, z.
    pub dims: [usize; 3],
    /// Voxel spacing in mm.
    pub spacing: [f32; 3],
}

/// Write a probability volume as one float32 NIfTI per channel plus a
/// `<stem>.json` sidecar in `dir`. Returns the sidecar path.
pub fn write_probability_volume(
    probs: &ProbabilityVolume,
    dir: impl AsRef<Path>,
    stem: &str,
) -> Result<PathBuf> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut channels = Vec::with_capacity(probs.channels);
    for c in 0..probs.channels {
        let name = format!("{stem}_c{c}.nii.gz");
        let volume = ScalarVolume::new(
            probs.dims,
            probs.spacing,
            probs.origin,
            probs.channel(c).to_vec(),
        )?;
        nifti::write_scalar(&volume, dir.join(&name))?;
        channels.push(SidecarChannel {
            label: c as u8,
            path: name,
        });
    }
    let sidecar = ProbSidecar {
        channels,
        dims: probs.dims,
        spacing: probs.spacing,
    };
    let path = dir.join(format!("{stem}.json"));
    std::fs::write(
        &path,
        serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"),
    )?;
    Ok(path)
}

/// Read a probability volume from its sidecar. Channel labels must be
/// exactly 0..C-1 (in any order); per-channel geometry must match the
/// sidecar.
pub fn read_probability_volume(sidecar_path: impl AsRef<Path>) -> Result<ProbabilityVolume> {
    let sidecar_path = sidecar_path.as_ref();
    let text = std::fs::read_to_string(sidecar_path).map_err(|e| Error::Parse {
        path: sidecar_path.to_path_buf(),
        message: format!("cannot read sidecar: {e}"),
    })?;
    let sidecar: ProbSidecar = serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: sidecar_path.to_path_buf(),
        message: e.to_string(),
    })?;

    let channels = sidecar.channels.len();
    let labels: BTreeSet<u8> = sidecar.channels.iter().map(|c| c.label).collect();
    let expected: BTreeSet<u8> = (0..channels as u8).collect();
    if labels != expected {
        return Err(Error::Format(format!(
            "{}: channel labels {labels:?} are not exactly 0..{channels}",
            sidecar_path.display()
        )));
    }

    let dir = sidecar_path.parent().unwrap_or_else(|| Path::new("."));
    let plane = sidecar.dims[0] * sidecar.dims[1] * sidecar.dims[2];
    let mut data = vec![0.0f32; channels * plane];
    let mut origin = [0.0f32; 3];

    let mut ordered = sidecar.channels.clone();
    ordered.sort_by_key(|c| c.label);
    for entry in &ordered {
        let volume = nifti::read_scalar(dir.join(&entry.path))?;
        if volume.dims != sidecar.dims {
            return Err(Error::Shape(format!(
                "channel {} dims {:?} do not match sidecar dims {:?}",
                entry.label, volume.dims, sidecar.dims
            )));
        }
        if entry.label == 0 {
            origin = volume.origin;
        }
        let c = entry.label as usize;
        data[c * plane..(c + 1) * plane].copy_from_slice(&volume.data);
    }

    ProbabilityVolume::new(channels, sidecar.dims, sidecar.spacing, origin, data)
}
