//! Volume preprocessing chain for 2D translation models: resample to a
//! common voxel spacing, scale intensities to [0, 1], estimate the
//! bright-mass center axis, crop in-plane around it, and slice along z.
//! [`stack_z`] is the exact inverse of the slicing step and is used to
//! rebuild volumes from translated slices.
//!
//! All operations are pure functions on immutable inputs; cases can be
//! processed in parallel without shared state.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{LabelVolume, ScalarVolume};

/// Interpolation mode for resampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    /// Trilinear interpolation, clamping samples to the volume boundary.
    Trilinear,
    /// Closest source voxel center, ties toward the lower index.
    Nearest,
}

/// How label volumes are resampled.
///
/// Nearest-neighbor is the default. The one-hot alternative trilinearly
/// interpolates a per-class indicator volume and takes the per-voxel
/// argmax, for pipelines that want smooth label boundaries.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LabelInterpolation {
    /// Nearest source voxel (default).
    Nearest,
    /// Trilinear on one-hot indicators, then per-voxel argmax.
    TrilinearOneHot,
}

/// Configuration for [`preprocess_case`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Common voxel spacing all cases are resampled to, in mm.
    pub target_spacing: [f32; 3],
    /// In-plane crop width and height in voxels; must be even.
    pub crop_size: usize,
    /// Intensity percentile defining the bright-voxel set for the
    /// center-axis estimate, in (0, 1).
    pub percentile: f64,
    /// Label resampling mode.
    pub label_interpolation: LabelInterpolation,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            target_spacing: [0.6, 0.6, 1.0],
            crop_size: 256,
            percentile: 0.75,
            label_interpolation: LabelInterpolation::Nearest,
        }
    }
}

impl PipelineConfig {
    /// Check the config invariants.
    pub fn validate(&self) -> Result<()> {
        for (axis, &s) in self.target_spacing.iter().enumerate() {
            if !s.is_finite() || s <= 0.0 {
                return Err(Error::Config(format!(
                    "target_spacing[{axis}] must be finite and > 0, got {s}"
                )));
            }
        }
        if self.crop_size == 0 || !self.crop_size.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "crop_size must be positive and even, got {}",
                self.crop_size
            )));
        }
        if !(self.percentile > 0.0 && self.percentile < 1.0) {
            return Err(Error::Config(format!(
                "percentile must be in (0, 1), got {}",
                self.percentile
            )));
        }
        Ok(())
    }
}

/// Ordered 2D slices of one cropped volume plus the metadata needed to
/// reassemble it exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct SliceStack {
    /// Slice width in voxels (x).
    pub width: usize,
    /// Slice height in voxels (y).
    pub height: usize,
    /// One image per z index, x-fastest, each `width * height` long.
    pub slices: Vec<Vec<f32>>,
    /// Voxel spacing of the sliced volume.
    pub spacing: [f32; 3],
    /// Origin of the sliced volume.
    pub origin: [f32; 3],
    /// In-plane offset of the crop window within the pre-crop volume;
    /// negative values mean the window extended past the lower bound.
    pub crop_offset: [i64; 2],
    /// Dims of the volume the crop was taken from.
    pub source_dims: [usize; 3],
}

impl SliceStack {
    /// Number of slices.
    pub fn len(&self) -> usize {
        self.slices.len()
    }

    /// True when the stack holds no slices.
    pub fn is_empty(&self) -> bool {
        self.slices.is_empty()
    }
}

// Geometry shared by every resample: output grid size and the mapping
// from an output voxel index to a (fractional) input index. Output voxel
// centers are placed so the physical extent of the volume is preserved.
struct ResampleGrid {
    dims_out: [usize; 3],
    // input index = index_out * step + shift, per axis
    step: [f64; 3],
    shift: [f64; 3],
    spacing_out: [f32; 3],
    origin_out: [f32; 3],
}

fn resample_grid(
    dims: [usize; 3],
    spacing: [f32; 3],
    origin: [f32; 3],
    target: [f32; 3],
) -> Result<ResampleGrid> {
    let mut grid = ResampleGrid {
        dims_out: [1; 3],
        step: [1.0; 3],
        shift: [0.0; 3],
        spacing_out: target,
        origin_out: origin,
    };
    for axis in 0..3 {
        let t = target[axis];
        if !t.is_finite() || t <= 0.0 {
            return Err(Error::Config(format!(
                "target spacing[{axis}] must be finite and > 0, got {t}"
            )));
        }
        let s_in = f64::from(spacing[axis]);
        let s_out = f64::from(t);
        let n_in = dims[axis] as f64;
        grid.dims_out[axis] = ((n_in * s_in / s_out).round() as usize).max(1);
        // Centers: input voxel i sits at (i + 0.5) * s_in from the grid
        // corner, output voxel k at (k + 0.5) * s_out.
        grid.step[axis] = s_out / s_in;
        grid.shift[axis] = 0.5 * s_out / s_in - 0.5;
        grid.origin_out[axis] = (f64::from(origin[axis]) + 0.5 * (s_out - s_in)) as f32;
    }
    Ok(grid)
}

#[inline]
fn nearest_index(x: f64, n: usize) -> usize {
    // Ties (fraction exactly .5) resolve toward the lower index.
    let x = x.clamp(0.0, (n - 1) as f64);
    (x - 0.5).ceil() as usize
}

/// Resample a scalar volume to the target spacing.
///
/// The output grid has `round(n * spacing / target)` voxels per axis
/// (minimum 1) and covers the same physical extent as the input.
pub fn resample_scalar(
    volume: &ScalarVolume,
    target_spacing: [f32; 3],
    mode: Interpolation,
) -> Result<ScalarVolume> {
    let grid = resample_grid(volume.dims, volume.spacing, volume.origin, target_spacing)?;
    let [nx, ny, nz] = volume.dims;
    let [ox, oy, oz] = grid.dims_out;
    let mut data = vec![0.0f32; ox * oy * oz];

    match mode {
        Interpolation::Nearest => {
            let xs: Vec<usize> = (0..ox)
                .map(|k| nearest_index(k as f64 * grid.step[0] + grid.shift[0], nx))
                .collect();
            let ys: Vec<usize> = (0..oy)
                .map(|k| nearest_index(k as f64 * grid.step[1] + grid.shift[1], ny))
                .collect();
            let zs: Vec<usize> = (0..oz)
                .map(|k| nearest_index(k as f64 * grid.step[2] + grid.shift[2], nz))
                .collect();
            for (k, &sz) in zs.iter().enumerate() {
                for (j, &sy) in ys.iter().enumerate() {
                    let src_row = nx * (sy + ny * sz);
                    let dst_row = ox * (j + oy * k);
                    for (i, &sx) in xs.iter().enumerate() {
                        data[dst_row + i] = volume.data[src_row + sx];
                    }
                }
            }
        }
        Interpolation::Trilinear => {
            // Per-axis sample positions: (lower index, upper index, fraction).
            let axis_samples = |n_out: usize, axis: usize, n_in: usize| {
                (0..n_out)
                    .map(|k| {
                        let x = (k as f64 * grid.step[axis] + grid.shift[axis])
                            .clamp(0.0, (n_in - 1) as f64);
                        let lo = x.floor() as usize;
                        let hi = (lo + 1).min(n_in - 1);
                        (lo, hi, x - lo as f64)
                    })
                    .collect::<Vec<_>>()
            };
            let xs = axis_samples(ox, 0, nx);
            let ys = axis_samples(oy, 1, ny);
            let zs = axis_samples(oz, 2, nz);
            for (k, &(z0, z1, fz)) in zs.iter().enumerate() {
                for (j, &(y0, y1, fy)) in ys.iter().enumerate() {
                    let dst_row = ox * (j + oy * k);
                    for (i, &(x0, x1, fx)) in xs.iter().enumerate() {
                        let at = |x: usize, y: usize, z: usize| {
                            f64::from(volume.data[x + nx * (y + ny * z)])
                        };
                        let c00 = at(x0, y0, z0) * (1.0 - fx) + at(x1, y0, z0) * fx;
                        let c10 = at(x0, y1, z0) * (1.0 - fx) + at(x1, y1, z0) * fx;
                        let c01 = at(x0, y0, z1) * (1.0 - fx) + at(x1, y0, z1) * fx;
                        let c11 = at(x0, y1, z1) * (1.0 - fx) + at(x1, y1, z1) * fx;
                        let c0 = c00 * (1.0 - fy) + c10 * fy;
                        let c1 = c01 * (1.0 - fy) + c11 * fy;
                        data[dst_row + i] = (c0 * (1.0 - fz) + c1 * fz) as f32;
                    }
                }
            }
        }
    }

    let mut out = ScalarVolume::new(grid.dims_out, grid.spacing_out, grid.origin_out, data)?;
    out.source_header = volume.source_header.clone();
    Ok(out)
}

/// Resample a label volume with nearest-neighbor interpolation.
///
/// Trilinear mode is rejected: interpolating categorical labels directly
/// is ill-defined. See [`resample_label_onehot`] for the smooth variant.
pub fn resample_label(
    volume: &LabelVolume,
    target_spacing: [f32; 3],
    mode: Interpolation,
) -> Result<LabelVolume> {
    if mode == Interpolation::Trilinear {
        return Err(Error::Mode(
            "trilinear interpolation is not valid for label volumes; \
             use nearest or one-hot trilinear"
                .into(),
        ));
    }
    let grid = resample_grid(volume.dims, volume.spacing, volume.origin, target_spacing)?;
    let [nx, ny, nz] = volume.dims;
    let [ox, oy, oz] = grid.dims_out;
    let xs: Vec<usize> = (0..ox)
        .map(|k| nearest_index(k as f64 * grid.step[0] + grid.shift[0], nx))
        .collect();
    let ys: Vec<usize> = (0..oy)
        .map(|k| nearest_index(k as f64 * grid.step[1] + grid.shift[1], ny))
        .collect();
    let zs: Vec<usize> = (0..oz)
        .map(|k| nearest_index(k as f64 * grid.step[2] + grid.shift[2], nz))
        .collect();
    let mut data = vec![0u8; ox * oy * oz];
    for (k, &sz) in zs.iter().enumerate() {
        for (j, &sy) in ys.iter().enumerate() {
            let src_row = nx * (sy + ny * sz);
            let dst_row = ox * (j + oy * k);
            for (i, &sx) in xs.iter().enumerate() {
                data[dst_row + i] = volume.data[src_row + sx];
            }
        }
    }
    let mut out = LabelVolume::new_with_labels(
        grid.dims_out,
        grid.spacing_out,
        grid.origin_out,
        data,
        &label_set(volume),
    )?;
    out.source_header = volume.source_header.clone();
    Ok(out)
}

fn label_set(volume: &LabelVolume) -> Vec<u8> {
    let mut seen = [false; 256];
    for &l in &volume.data {
        seen[l as usize] = true;
    }
    (0..=255u8).filter(|&l| seen[l as usize]).collect()
}

/// Resample a label volume by trilinearly interpolating one-hot
/// indicators per class and taking the per-voxel argmax (ties toward the
/// smaller label).
pub fn resample_label_onehot(
    volume: &LabelVolume,
    target_spacing: [f32; 3],
) -> Result<LabelVolume> {
    let labels = label_set(volume);
    let mut best_score: Vec<f32> = Vec::new();
    let mut best_label: Vec<u8> = Vec::new();
    let mut out_geom: Option<([usize; 3], [f32; 3], [f32; 3])> = None;

    for &l in &labels {
        let indicator: Vec<f32> = volume
            .data
            .iter()
            .map(|&v| if v == l { 1.0 } else { 0.0 })
            .collect();
        let mut iv = ScalarVolume::new(volume.dims, volume.spacing, volume.origin, indicator)?;
        iv.source_header = None;
        let resampled = resample_scalar(&iv, target_spacing, Interpolation::Trilinear)?;
        if best_score.is_empty() {
            best_score = vec![f32::NEG_INFINITY; resampled.data.len()];
            best_label = vec![labels[0]; resampled.data.len()];
            out_geom = Some((resampled.dims, resampled.spacing, resampled.origin));
        }
        for (i, &score) in resampled.data.iter().enumerate() {
            if score > best_score[i] {
                best_score[i] = score;
                best_label[i] = l;
            }
        }
    }

    let (dims, spacing, origin) = out_geom.expect("label volumes are non-empty");
    let mut out = LabelVolume::new_with_labels(dims, spacing, origin, best_label, &labels)?;
    out.source_header = volume.source_header.clone();
    Ok(out)
}

/// Scale intensities to [0, 1] with an affine map of the min/max range.
/// Constant volumes map to all zeros.
pub fn normalize_intensity(volume: &ScalarVolume) -> ScalarVolume {
    let mut min = f32::INFINITY;
    let mut max = f32::NEG_INFINITY;
    for &v in &volume.data {
        min = min.min(v);
        max = max.max(v);
    }
    let range = max - min;
    let data = if range > 0.0 {
        volume.data.iter().map(|&v| (v - min) / range).collect()
    } else {
        vec![0.0; volume.data.len()]
    };
    debug_assert!(data.iter().all(|v| v.is_finite()));
    ScalarVolume {
        dims: volume.dims,
        spacing: volume.spacing,
        origin: volume.origin,
        data,
        source_header: volume.source_header.clone(),
    }
}

/// Estimate the in-plane center of bright mass.
///
/// The threshold is the nearest-rank `percentile` of all voxel values;
/// the center is the mean (x, y) of voxels *strictly above* it, rounded
/// half-up to the nearest voxel. When no voxel is above the threshold
/// (e.g. constant volumes) the geometric center `(nx/2, ny/2)` is
/// returned.
pub fn compute_center_axis(volume: &ScalarVolume, percentile: f64) -> (usize, usize) {
    let n = volume.data.len();
    let rank = ((percentile * n as f64).ceil() as usize).clamp(1, n);
    let mut sorted = volume.data.clone();
    let (_, threshold, _) = sorted.select_nth_unstable_by(rank - 1, f32::total_cmp);
    let threshold = *threshold;

    let [nx, ny, _nz] = volume.dims;
    let mut count: u64 = 0;
    let mut sum_x: u64 = 0;
    let mut sum_y: u64 = 0;
    let mut i = 0;
    for _z in 0..volume.dims[2] {
        for y in 0..ny {
            for x in 0..nx {
                if volume.data[i] > threshold {
                    count += 1;
                    sum_x += x as u64;
                    sum_y += y as u64;
                }
                i += 1;
            }
        }
    }
    if count == 0 {
        return (nx / 2, ny / 2);
    }
    let round_half_up = |sum: u64| ((sum as f64 / count as f64) + 0.5).floor() as usize;
    (round_half_up(sum_x), round_half_up(sum_y))
}

fn crop_window(center: (i64, i64), size: usize) -> ([i64; 2], i64) {
    let half = (size / 2) as i64;
    ([center.0 - half, center.1 - half], size as i64)
}

fn crop_plane<T: Copy + Default>(
    src: &[T],
    dims: [usize; 3],
    offset: [i64; 2],
    size: usize,
) -> Vec<T> {
    let [nx, ny, nz] = dims;
    let mut out = vec![T::default(); size * size * nz];
    let i_lo = (-offset[0]).clamp(0, size as i64) as usize;
    let i_hi = (nx as i64 - offset[0]).clamp(0, size as i64) as usize;
    for z in 0..nz {
        for j in 0..size {
            let sy = offset[1] + j as i64;
            if sy < 0 || sy >= ny as i64 || i_lo >= i_hi {
                continue;
            }
            let src_row = nx * (sy as usize + ny * z);
            let dst_row = size * (j + size * z);
            let sx = (offset[0] + i_lo as i64) as usize;
            out[dst_row + i_lo..dst_row + i_hi]
                .copy_from_slice(&src[src_row + sx..src_row + sx + (i_hi - i_lo)]);
        }
    }
    out
}

fn cropped_origin(origin: [f32; 3], spacing: [f32; 3], offset: [i64; 2]) -> [f32; 3] {
    [
        (f64::from(origin[0]) + offset[0] as f64 * f64::from(spacing[0])) as f32,
        (f64::from(origin[1]) + offset[1] as f64 * f64::from(spacing[1])) as f32,
        origin[2],
    ]
}

/// Crop a scalar volume to a `size × size` in-plane window centered on
/// `center`, zero-padding outside the volume. Returns the cropped volume
/// and the window offset needed to invert the crop.
pub fn crop_scalar_xy(
    volume: &ScalarVolume,
    center: (i64, i64),
    size: usize,
) -> Result<(ScalarVolume, [i64; 2])> {
    if size == 0 {
        return Err(Error::Config("crop size must be > 0".into()));
    }
    let (offset, _) = crop_window(center, size);
    let data = crop_plane(&volume.data, volume.dims, offset, size);
    let mut out = ScalarVolume::new(
        [size, size, volume.dims[2]],
        volume.spacing,
        cropped_origin(volume.origin, volume.spacing, offset),
        data,
    )?;
    out.source_header = volume.source_header.clone();
    Ok((out, offset))
}

/// Crop a label volume with the same window arithmetic as
/// [`crop_scalar_xy`]; out-of-bounds voxels become background (0).
pub fn crop_label_xy(
    volume: &LabelVolume,
    center: (i64, i64),
    size: usize,
) -> Result<(LabelVolume, [i64; 2])> {
    if size == 0 {
        return Err(Error::Config("crop size must be > 0".into()));
    }
    let (offset, _) = crop_window(center, size);
    let data = crop_plane(&volume.data, volume.dims, offset, size);
    let mut allowed = label_set(volume);
    if !allowed.contains(&0) {
        allowed.push(0); // padding introduces background
    }
    let mut out = LabelVolume::new_with_labels(
        [size, size, volume.dims[2]],
        volume.spacing,
        cropped_origin(volume.origin, volume.spacing, offset),
        data,
        &allowed,
    )?;
    out.source_header = volume.source_header.clone();
    Ok((out, offset))
}

/// Split a volume into one 2D image per z index.
pub fn slice_z(volume: &ScalarVolume) -> SliceStack {
    let [nx, ny, nz] = volume.dims;
    let plane = nx * ny;
    let slices = (0..nz)
        .map(|z| volume.data[z * plane..(z + 1) * plane].to_vec())
        .collect();
    SliceStack {
        width: nx,
        height: ny,
        slices,
        spacing: volume.spacing,
        origin: volume.origin,
        crop_offset: [0, 0],
        source_dims: volume.dims,
    }
}

/// Rebuild a volume from a slice stack; exact inverse of [`slice_z`].
pub fn stack_z(stack: &SliceStack) -> Result<ScalarVolume> {
    if stack.slices.is_empty() {
        return Err(Error::Shape("slice stack is empty".into()));
    }
    let plane = stack.width * stack.height;
    let mut data = Vec::with_capacity(plane * stack.slices.len());
    for (k, slice) in stack.slices.iter().enumerate() {
        if slice.len() != plane {
            return Err(Error::Shape(format!(
                "slice {k} has {} voxels, expected {} ({}x{})",
                slice.len(),
                plane,
                stack.width,
                stack.height
            )));
        }
        data.extend_from_slice(slice);
    }
    ScalarVolume::new(
        [stack.width, stack.height, stack.slices.len()],
        stack.spacing,
        stack.origin,
        data,
    )
}

/// Run the full preprocessing chain on one case: resample, normalize,
/// estimate the center axis, crop, and slice. The label volume, when
/// present, is resampled (per the configured label mode) and cropped
/// with the same window, staying voxel-aligned with the slices.
pub fn preprocess_case(
    volume: &ScalarVolume,
    label: Option<&LabelVolume>,
    config: &PipelineConfig,
) -> Result<(SliceStack, Option<LabelVolume>)> {
    config.validate()?;
    if let Some(l) = label {
        if l.dims != volume.dims {
            return Err(Error::Shape(format!(
                "label dims {:?} do not match image dims {:?}",
                l.dims, volume.dims
            )));
        }
    }

    let resampled = resample_scalar(volume, config.target_spacing, Interpolation::Trilinear)?;
    let normalized = normalize_intensity(&resampled);
    let (cx, cy) = compute_center_axis(&normalized, config.percentile);
    let center = (cx as i64, cy as i64);
    let (cropped, offset) = crop_scalar_xy(&normalized, center, config.crop_size)?;

    let mut stack = slice_z(&cropped);
    stack.crop_offset = offset;
    stack.source_dims = resampled.dims;

    let cropped_label = match label {
        Some(l) => {
            // The label grid must follow the image grid exactly, so tiny
            // header spacing discrepancies must not change the output
            // dims: resample the label on the image's spacing.
            let mut aligned = l.clone();
            aligned.spacing = volume.spacing;
            aligned.origin = volume.origin;
            let resampled_label = match config.label_interpolation {
                LabelInterpolation::Nearest => {
                    resample_label(&aligned, config.target_spacing, Interpolation::Nearest)?
                }
                LabelInterpolation::TrilinearOneHot => {
                    resample_label_onehot(&aligned, config.target_spacing)?
                }
            };
            let (c, _) = crop_label_xy(&resampled_label, center, config.crop_size)?;
            Some(c)
        }
        None => None,
    };

    Ok((stack, cropped_label))
}
