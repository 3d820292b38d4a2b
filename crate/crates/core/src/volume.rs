//! Volume data model: scalar intensity volumes and integer label volumes
//! on a regular 3D grid with physical voxel spacing.
//!
//! Voxel data is stored x-fastest (`x + nx*(y + ny*z)`), matching the
//! on-disk order of NIfTI-1. Volumes are immutable after construction;
//! all pipeline operations return new volumes.

use crate::error::{Error, Result};
use crate::nifti::NiftiHeader;

/// Labels used by this segmentation task: background, VS tumor, cochlea.
pub const TASK_LABELS: [u8; 3] = [0, 1, 2];

/// Label value for the vestibular schwannoma (tumor).
pub const LABEL_TUMOR: u8 = 1;

/// Label value for the cochlea.
pub const LABEL_COCHLEA: u8 = 2;

fn check_geometry(dims: [usize; 3], spacing: [f32; 3], data_len: usize) -> Result<()> {
    if dims.contains(&0) {
        return Err(Error::Shape(format!(
            "volume dims must be positive, got {dims:?}"
        )));
    }
    let n = dims[0]
        .checked_mul(dims[1])
        .and_then(|p| p.checked_mul(dims[2]))
        .ok_or_else(|| Error::Shape(format!("volume dims overflow: {dims:?}")))?;
    if data_len != n {
        return Err(Error::Shape(format!(
            "data length {data_len} does not match dims {dims:?} ({n} voxels)"
        )));
    }
    for (axis, &s) in spacing.iter().enumerate() {
        if !s.is_finite() || s <= 0.0 {
            return Err(Error::Data(format!(
                "spacing[{axis}] must be finite and > 0, got {s}"
            )));
        }
    }
    Ok(())
}

/// 3D grid of scalar intensities with physical voxel spacing and origin.
#[derive(Debug, Clone)]
pub struct ScalarVolume {
    /// Voxel counts along x, y, z.
    pub dims: [usize; 3],
    /// Voxel spacing in mm along x, y, z; strictly positive.
    pub spacing: [f32; 3],
    /// Physical position of the first voxel center, in mm.
    pub origin: [f32; 3],
    /// Intensities, x-fastest, length `dims[0]*dims[1]*dims[2]`.
    pub data: Vec<f32>,
    /// Header of the file this volume was loaded from, if any. Carried
    /// so orientation fields survive a read/modify/write round trip.
    pub source_header: Option<Box<NiftiHeader>>,
}

impl ScalarVolume {
    /// Build a volume, validating the type invariants.
    pub fn new(
        dims: [usize; 3],
        spacing: [f32; 3],
        origin: [f32; 3],
        data: Vec<f32>,
    ) -> Result<Self> {
        check_geometry(dims, spacing, data.len())?;
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite voxel value {bad}")));
        }
        Ok(Self {
            dims,
            spacing,
            origin,
            data,
            source_header: None,
        })
    }

    /// Linear index of voxel (x, y, z).
    #[inline]
    pub fn idx(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    /// Total voxel count.
    pub fn num_voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }

    /// Replace the voxel data, keeping geometry. Lengths must match.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self> {
        let mut v = Self::new(self.dims, self.spacing, self.origin, data)?;
        v.source_header = self.source_header.clone();
        Ok(v)
    }
}

// Equality is geometric: the carried source header is provenance, not content.
impl PartialEq for ScalarVolume {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self.spacing == other.spacing
            && self.origin == other.origin
            && self.data == other.data
    }
}

/// 3D grid of integer class labels sharing the [`ScalarVolume`] geometry.
#[derive(Debug, Clone)]
pub struct LabelVolume {
    /// Voxel counts along x, y, z.
    pub dims: [usize; 3],
    /// Voxel spacing in mm along x, y, z; strictly positive.
    pub spacing: [f32; 3],
    /// Physical position of the first voxel center, in mm.
    pub origin: [f32; 3],
    /// Labels, x-fastest, length `dims[0]*dims[1]*dims[2]`.
    pub data: Vec<u8>,
    /// Header of the file this volume was loaded from, if any.
    pub source_header: Option<Box<NiftiHeader>>,
}

impl LabelVolume {
    /// Build a label volume validated against [`TASK_LABELS`].
    pub fn new(
        dims: [usize; 3],
        spacing: [f32; 3],
        origin: [f32; 3],
        data: Vec<u8>,
    ) -> Result<Self> {
        Self::new_with_labels(dims, spacing, origin, data, &TASK_LABELS)
    }

    /// Build a label volume validated against a caller-supplied label set.
    pub fn new_with_labels(
        dims: [usize; 3],
        spacing: [f32; 3],
        origin: [f32; 3],
        data: Vec<u8>,
        allowed: &[u8],
    ) -> Result<Self> {
        check_geometry(dims, spacing, data.len())?;
        if let Some(bad) = data.iter().find(|l| !allowed.contains(l)) {
            return Err(Error::Data(format!(
                "label {bad} outside the configured label set {allowed:?}"
            )));
        }
        Ok(Self {
            dims,
            spacing,
            origin,
            data,
            source_header: None,
        })
    }

    /// Linear index of voxel (x, y, z).
    #[inline]
    pub fn idx(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.dims[0] * (y + self.dims[1] * z)
    }

    /// Total voxel count.
    pub fn num_voxels(&self) -> usize {
        self.dims[0] * self.dims[1] * self.dims[2]
    }
}

impl PartialEq for LabelVolume {
    fn eq(&self, other: &Self) -> bool {
        self.dims == other.dims
            && self.spacing == other.spacing
            && self.origin == other.origin
            && self.data == other.data
    }
}

/// Either volume kind, as returned by the file reader.
#[derive(Debug, Clone, PartialEq)]
pub enum Volume {
    /// Scalar intensity volume.
    Scalar(ScalarVolume),
    /// Integer label volume.
    Label(LabelVolume),
}

impl Volume {
    /// Voxel counts along x, y, z.
    pub fn dims(&self) -> [usize; 3] {
        match self {
            Volume::Scalar(v) => v.dims,
            Volume::Label(v) => v.dims,
        }
    }

    /// Voxel spacing in mm.
    pub fn spacing(&self) -> [f32; 3] {
        match self {
            Volume::Scalar(v) => v.spacing,
            Volume::Label(v) => v.spacing,
        }
    }

    /// Unwrap a scalar volume.
    pub fn into_scalar(self) -> Result<ScalarVolume> {
        match self {
            Volume::Scalar(v) => Ok(v),
            Volume::Label(_) => Err(Error::Mode("expected a scalar volume, got labels".into())),
        }
    }

    /// Unwrap a label volume.
    pub fn into_label(self) -> Result<LabelVolume> {
        match self {
            Volume::Label(v) => Ok(v),
            Volume::Scalar(_) => Err(Error::Mode("expected a label volume, got scalars".into())),
        }
    }
}
