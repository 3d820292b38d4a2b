//! On-disk slice-stack layout shared with external 2D translation models.
//!
//! A case directory holds one file per slice plus a `case.json` sidecar
//! naming the slices in z order and carrying the geometry needed by
//! [`crate::pipeline::stack_z`]. Slices are either raw little-endian
//! 32-bit floats (`.f32`, lossless) or 16-bit grayscale PNG (`.png`,
//! intensities quantized from [0, 1] to [0, 65535]) for translators that
//! only accept image files. Import accepts both layouts.

use std::io::Read;
use std::path::Path;

use byteorder::{ByteOrder, LittleEndian};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::SliceStack;

/// Name of the per-case sidecar file.
pub const SIDECAR_NAME: &str = "case.json";

/// Pixel encoding of exported slices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SliceFormat {
    /// Raw little-endian 32-bit floats, `width * height` values.
    F32,
    /// 16-bit grayscale PNG, quantized from [0, 1].
    Png16,
}

impl SliceFormat {
    fn extension(self) -> &'static str {
        match self {
            SliceFormat::F32 => "f32",
            SliceFormat::Png16 => "png",
        }
    }
}

/// Sidecar describing one exported case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SliceSidecar {
    /// Case identifier the export belongs to.
    pub case_id: String,
    /// Pixel encoding of the slice files.
    pub format: SliceFormat,
    /// Slice width in voxels.
    pub width: usize,
    /// Slice height in voxels.
    pub height: usize,
    /// Number of slices (z extent).
    pub count: usize,
    /// Slice filenames in z order, relative to the sidecar.
    pub slices: Vec<String>,
    /// Voxel spacing of the reassembled volume, mm.
    pub spacing: [f32; 3],
    /// Origin of the reassembled volume, mm.
    pub origin: [f32; 3],
    /// In-plane crop offset applied during preprocessing.
    pub crop_offset: [i64; 2],
    /// Dims of the pre-crop volume.
    pub source_dims: [usize; 3],
}

fn parse_err(path: &Path, message: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

/// Write a slice stack into `dir` as individual slice files plus the
/// `case.json` sidecar. The directory is created if needed.
pub fn export_slices(
    stack: &SliceStack,
    case_id: &str,
    dir: impl AsRef<Path>,
    format: SliceFormat,
) -> Result<SliceSidecar> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;

    let mut names = Vec::with_capacity(stack.len());
    for (k, slice) in stack.slices.iter().enumerate() {
        let name = format!("slice_{k:04}.{}", format.extension());
        let path = dir.join(&name);
        match format {
            SliceFormat::F32 => {
                let mut bytes = vec![0u8; slice.len() * 4];
                LittleEndian::write_f32_into(slice, &mut bytes);
                std::fs::write(&path, bytes)?;
            }
            SliceFormat::Png16 => {
                let pixels: Vec<u16> = slice
                    .iter()
                    .map(|&v| (f64::from(v).clamp(0.0, 1.0) * 65535.0).round() as u16)
                    .collect();
                let img = image::ImageBuffer::<image::Luma<u16>, Vec<u16>>::from_raw(
                    stack.width as u32,
                    stack.height as u32,
                    pixels,
                )
                .expect("pixel buffer matches dimensions");
                img.save(&path)
                    .map_err(|e| Error::Format(format!("{}: PNG encode: {e}", path.display())))?;
            }
        }
        names.push(name);
    }

    let sidecar = SliceSidecar {
        case_id: case_id.to_string(),
        format,
        width: stack.width,
        height: stack.height,
        count: stack.len(),
        slices: names,
        spacing: stack.spacing,
        origin: stack.origin,
        crop_offset: stack.crop_offset,
        source_dims: stack.source_dims,
    };
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    std::fs::write(dir.join(SIDECAR_NAME), json)?;
    Ok(sidecar)
}

/// Read the sidecar of an exported case directory.
pub fn read_sidecar(dir: impl AsRef<Path>) -> Result<SliceSidecar> {
    let path = dir.as_ref().join(SIDECAR_NAME);
    let text = std::fs::read_to_string(&path)
        .map_err(|e| parse_err(&path, format!("cannot read sidecar: {e}")))?;
    let sidecar: SliceSidecar =
        serde_json::from_str(&text).map_err(|e| parse_err(&path, e))?;
    if sidecar.slices.len() != sidecar.count {
        return Err(parse_err(
            &path,
            format!(
                "sidecar lists {} slices but count = {}",
                sidecar.slices.len(),
                sidecar.count
            ),
        ));
    }
    Ok(sidecar)
}

/// Load an exported (possibly translated) case directory back into a
/// [`SliceStack`]. Every slice named by the sidecar must exist and match
/// the sidecar dimensions.
pub fn import_slices(dir: impl AsRef<Path>) -> Result<SliceStack> {
    let dir = dir.as_ref();
    let sidecar = read_sidecar(dir)?;
    let plane = sidecar.width * sidecar.height;

    let mut slices = Vec::with_capacity(sidecar.count);
    for name in &sidecar.slices {
        let path = dir.join(name);
        if !path.exists() {
            return Err(Error::Format(format!(
                "{}: slice {name} listed in sidecar is missing",
                dir.display()
            )));
        }
        let slice = match sidecar.format {
            SliceFormat::F32 => {
                let mut bytes = Vec::new();
                std::fs::File::open(&path)?.read_to_end(&mut bytes)?;
                if bytes.len() != plane * 4 {
                    return Err(Error::Format(format!(
                        "{}: expected {} bytes ({}x{} f32), got {}",
                        path.display(),
                        plane * 4,
                        sidecar.width,
                        sidecar.height,
                        bytes.len()
                    )));
                }
                let mut values = vec![0.0f32; plane];
                LittleEndian::read_f32_into(&bytes, &mut values);
                values
            }
            SliceFormat::Png16 => {
                let img = image::open(&path)
                    .map_err(|e| Error::Format(format!("{}: PNG decode: {e}", path.display())))?;
                let buf = img.into_luma16();
                if (buf.width() as usize, buf.height() as usize)
                    != (sidecar.width, sidecar.height)
                {
                    return Err(Error::Format(format!(
                        "{}: PNG is {}x{}, sidecar says {}x{}",
                        path.display(),
                        buf.width(),
                        buf.height(),
                        sidecar.width,
                        sidecar.height
                    )));
                }
                buf.into_raw()
                    .iter()
                    .map(|&p| (f64::from(p) / 65535.0) as f32)
                    .collect()
            }
        };
        slices.push(slice);
    }

    Ok(SliceStack {
        width: sidecar.width,
        height: sidecar.height,
        slices,
        spacing: sidecar.spacing,
        origin: sidecar.origin,
        crop_offset: sidecar.crop_offset,
        source_dims: sidecar.source_dims,
    })
}
