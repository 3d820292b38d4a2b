//! Tumor-signal augmentation: darkened-tumor variants of labeled cases.
//!
//! Tumors can present with heterogeneous, partly dark signal on T2-like
//! images. To expose a segmentation model to that appearance, each
//! labeled case gets a variant whose tumor voxels are scaled down (50%
//! by default), doubling the training set. Labels are untouched.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifest::{CaseEntry, DatasetManifest};
use crate::volume::{LabelVolume, ScalarVolume, LABEL_TUMOR, TASK_LABELS};

/// Suffix appended to case ids and volume filenames of augmented variants.
pub const AT_SUFFIX: &str = "_at";

/// Parameters of the tumor-signal reduction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentSpec {
    /// Label whose voxels are scaled (default: the tumor label).
    pub target_label: u8,
    /// Multiplier applied to the target voxels, in (0, 1].
    pub intensity_factor: f32,
}

impl Default for AugmentSpec {
    fn default() -> Self {
        Self {
            target_label: LABEL_TUMOR,
            intensity_factor: 0.5,
        }
    }
}

impl AugmentSpec {
    /// Check the parameter ranges.
    pub fn validate(&self) -> Result<()> {
        if !(self.intensity_factor > 0.0 && self.intensity_factor <= 1.0) {
            return Err(Error::Config(format!(
                "intensity_factor must be in (0, 1], got {}",
                self.intensity_factor
            )));
        }
        if !TASK_LABELS.contains(&self.target_label) {
            return Err(Error::Config(format!(
                "target_label {} is not in the task label set {:?}",
                self.target_label, TASK_LABELS
            )));
        }
        Ok(())
    }
}

/// Scale the voxels under `spec.target_label` by `spec.intensity_factor`,
/// leaving every other voxel (and the labels themselves) unchanged.
pub fn reduce_tumor_signal(
    volume: &ScalarVolume,
    labels: &LabelVolume,
    spec: &AugmentSpec,
) -> Result<ScalarVolume> {
    spec.validate()?;
    if volume.dims != labels.dims {
        return Err(Error::Shape(format!(
            "volume dims {:?} do not match label dims {:?}",
            volume.dims, labels.dims
        )));
    }
    let data = volume
        .data
        .iter()
        .zip(&labels.data)
        .map(|(&v, &l)| {
            if l == spec.target_label {
                v * spec.intensity_factor
            } else {
                v
            }
        })
        .collect();
    volume.with_data(data)
}

/// Filename for the augmented variant of a volume: `_at` inserted before
/// the `.nii` / `.nii.gz` suffix.
pub fn at_variant_path(path: &std::path::Path) -> std::path::PathBuf {
    let name = path
        .file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default();
    let new_name = if let Some(base) = name.strip_suffix(".nii.gz") {
        format!("{base}{AT_SUFFIX}.nii.gz")
    } else if let Some(base) = name.strip_suffix(".nii") {
        format!("{base}{AT_SUFFIX}.nii")
    } else {
        format!("{name}{AT_SUFFIX}")
    };
    path.with_file_name(new_name)
}

/// Double a manifest: every labeled, not-yet-augmented case gains an
/// augmented-tumor variant with the `_at` id suffix, flagged
/// `augmented`, and an image path next to the original. Labels are
/// shared with the source case since augmentation never changes them.
/// Cases already flagged as augmented, and unlabeled cases, pass
/// through unchanged.
///
/// The augmented image files are *referenced*, not written; use
/// [`reduce_tumor_signal`] (or the `augment` CLI command) to materialize
/// them.
pub fn expand_dataset(manifest: &DatasetManifest, spec: &AugmentSpec) -> Result<DatasetManifest> {
    spec.validate()?;
    manifest.check_unique_ids()?;
    manifest.check_files_exist()?;

    let existing: std::collections::BTreeSet<&str> = manifest
        .cases
        .iter()
        .map(|c| c.case_id.as_str())
        .collect();

    let mut cases = Vec::with_capacity(manifest.cases.len() * 2);
    for case in &manifest.cases {
        cases.push(case.clone());
        if case.augmented || case.label.is_none() {
            continue;
        }
        let variant_id = format!("{}{AT_SUFFIX}", case.case_id);
        if existing.contains(variant_id.as_str()) {
            continue; // variant already present: expansion is idempotent
        }
        cases.push(CaseEntry {
            case_id: variant_id,
            image: at_variant_path(&case.image),
            label: case.label.clone(),
            domain: case.domain,
            augmented: true,
        });
    }

    let expanded = DatasetManifest {
        dataset: manifest.dataset.clone(),
        cases,
    };
    expanded.check_unique_ids()?;
    Ok(expanded)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::manifest::Domain;
    use crate::nifti;
    use crate::pipeline::{crop_label_xy, crop_scalar_xy, slice_z};
    use std::path::PathBuf;
    use tempfile::tempdir;

    fn pair(dims: [usize; 3]) -> (ScalarVolume, LabelVolume) {
        let n = dims[0] * dims[1] * dims[2];
        let data: Vec<f32> = (0..n).map(|i| (i % 13) as f32 / 13.0).collect();
        let labels: Vec<u8> = (0..n).map(|i| (i % 3) as u8).collect();
        (
            ScalarVolume::new(dims, [1.0; 3], [0.0; 3], data).unwrap(),
            LabelVolume::new(dims, [1.0; 3], [0.0; 3], labels).unwrap(),
        )
    }

    #[test]
    fn halves_exactly_the_target_voxels() {
        let (v, l) = pair([4, 4, 2]);
        let out = reduce_tumor_signal(&v, &l, &AugmentSpec::default()).unwrap();
        for i in 0..v.data.len() {
            if l.data[i] == 1 {
                assert_eq!(out.data[i], v.data[i] * 0.5);
            } else {
                assert_eq!(out.data[i], v.data[i]);
            }
        }
        assert_eq!(
            reduce_tumor_signal(&v, &l, &AugmentSpec::default())
                .unwrap()
                .data[l.data.iter().position(|&x| x == 1).unwrap()],
            v.data[l.data.iter().position(|&x| x == 1).unwrap()] * 0.5
        );
    }

    #[test]
    fn factor_one_is_the_identity() {
        let (v, l) = pair([3, 3, 3]);
        let spec = AugmentSpec {
            intensity_factor: 1.0,
            ..AugmentSpec::default()
        };
        let out = reduce_tumor_signal(&v, &l, &spec).unwrap();
        assert_eq!(out.data, v.data);
    }

    #[test]
    fn dims_mismatch_is_a_shape_error() {
        let (v, _) = pair([3, 3, 3]);
        let (_, l) = pair([3, 3, 4]);
        let err = reduce_tumor_signal(&v, &l, &AugmentSpec::default()).unwrap_err();
        assert!(matches!(err, Error::Shape(_)));
    }

    #[test]
    fn never_increases_nonnegative_volumes() {
        let (v, l) = pair([5, 4, 3]);
        let out = reduce_tumor_signal(&v, &l, &AugmentSpec::default()).unwrap();
        for i in 0..v.data.len() {
            assert!(out.data[i] <= v.data[i]);
            if l.data[i] == 1 && v.data[i] > 0.0 {
                assert!(out.data[i] < v.data[i]);
            }
        }
    }

    #[test]
    fn commutes_with_crop_and_slice() {
        let (v, l) = pair([12, 10, 4]);
        let spec = AugmentSpec::default();

        let aug_then_crop = {
            let aug = reduce_tumor_signal(&v, &l, &spec).unwrap();
            crop_scalar_xy(&aug, (6, 5), 8).unwrap().0
        };
        let crop_then_aug = {
            let (cv, _) = crop_scalar_xy(&v, (6, 5), 8).unwrap();
            let (cl, _) = crop_label_xy(&l, (6, 5), 8).unwrap();
            reduce_tumor_signal(&cv, &cl, &spec).unwrap()
        };
        assert_eq!(aug_then_crop.data, crop_then_aug.data);

        let aug = reduce_tumor_signal(&v, &l, &spec).unwrap();
        assert_eq!(slice_z(&aug).slices.concat(), aug.data);
    }

    #[test]
    fn at_paths_keep_the_volume_suffix() {
        assert_eq!(
            at_variant_path(&PathBuf::from("/data/case_1.nii.gz")),
            PathBuf::from("/data/case_1_at.nii.gz")
        );
        assert_eq!(
            at_variant_path(&PathBuf::from("case_1.nii")),
            PathBuf::from("case_1_at.nii")
        );
    }

    fn on_disk_manifest(dir: &std::path::Path, n: usize) -> DatasetManifest {
        let mut cases = Vec::new();
        for i in 0..n {
            let id = format!("case_{i:03}");
            let image = dir.join(format!("{id}.nii"));
            let label = dir.join(format!("{id}_label.nii"));
            let (v, l) = pair([2, 2, 2]);
            nifti::write_scalar(&v, &image).unwrap();
            nifti::write_label(&l, &label).unwrap();
            cases.push(CaseEntry {
                case_id: id,
                image,
                label: Some(label),
                domain: Domain::CeT1,
                augmented: false,
            });
        }
        DatasetManifest {
            dataset: "synthetic".into(),
            cases,
        }
    }

    #[test]
    fn expansion_doubles_labeled_cases() {
        let dir = tempdir().unwrap();
        let m = on_disk_manifest(dir.path(), 1);
        let out = expand_dataset(&m, &AugmentSpec::default()).unwrap();
        assert_eq!(out.cases.len(), 2);
        assert_eq!(out.cases[1].case_id, "case_000_at");
        assert!(out.cases[1].augmented);
        assert_eq!(out.cases[1].label, m.cases[0].label);
    }

    #[test]
    fn expansion_of_empty_manifest_is_empty() {
        let m = DatasetManifest {
            dataset: "empty".into(),
            cases: vec![],
        };
        let out = expand_dataset(&m, &AugmentSpec::default()).unwrap();
        assert!(out.cases.is_empty());
    }

    #[test]
    fn expansion_is_idempotent_on_augmented_cases() {
        let dir = tempdir().unwrap();
        let m = on_disk_manifest(dir.path(), 2);
        let once = expand_dataset(&m, &AugmentSpec::default()).unwrap();
        assert_eq!(once.cases.len(), 4);
        // Materialize the referenced variant images, then expand again.
        for case in once.cases.iter().filter(|c| c.augmented) {
            let (v, _) = pair([2, 2, 2]);
            nifti::write_scalar(&v, &case.image).unwrap();
        }
        let twice = expand_dataset(&once, &AugmentSpec::default()).unwrap();
        assert_eq!(twice.cases.len(), 4);
        assert!(!twice.cases.iter().any(|c| c.case_id.ends_with("_at_at")));
    }

    #[test]
    fn expansion_requires_existing_files() {
        let m = DatasetManifest {
            dataset: "ghost".into(),
            cases: vec![CaseEntry {
                case_id: "a".into(),
                image: PathBuf::from("/nonexistent/a.nii"),
                label: Some(PathBuf::from("/nonexistent/a_label.nii")),
                domain: Domain::CeT1,
                augmented: false,
            }],
        };
        let err = expand_dataset(&m, &AugmentSpec::default()).unwrap_err();
        assert!(matches!(err, Error::Manifest(_)));
    }

    #[test]
    fn out_of_range_factor_rejected() {
        let spec = AugmentSpec {
            intensity_factor: 1.5,
            ..AugmentSpec::default()
        };
        assert!(matches!(spec.validate(), Err(Error::Config(_))));
        let spec = AugmentSpec {
            intensity_factor: 0.0,
            ..AugmentSpec::default()
        };
        assert!(spec.validate().is_err());
    }
}
