//! Single-file NIfTI-1 reading and writing.
//!
//! Supports uncompressed `.nii` and gzip-compressed `.nii.gz` images
//! (compression detected by magic bytes, not extension), little- or
//! big-endian files (byte order detected via the `dim[0]` heuristic of
//! the NIfTI-1 specification), and the three datatypes this toolkit
//! needs: unsigned 8-bit, signed 16-bit, and 32-bit float.
//!
//! The 348-byte header is kept as an opaque little-endian buffer inside
//! [`NiftiHeader`]; only the fields this toolkit relies on are parsed.
//! Orientation fields (quaternion, sform rows) pass through verbatim on
//! a read/modify/write round trip and are never interpreted — all
//! geometry uses `pixdim` spacing, and the volume origin maps to the
//! `qoffset` fields.

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{BigEndian, ByteOrder, LittleEndian};
use flate2::read::MultiGzDecoder;
use flate2::write::GzEncoder;

use crate::error::{Error, Result};
use crate::volume::{LabelVolume, ScalarVolume, Volume, TASK_LABELS};

/// NIfTI-1 header length in bytes.
pub const HEADER_SIZE: usize = 348;

/// Offset of the voxel data in files written by this toolkit
/// (348-byte header + 4-byte extension flag).
pub const DATA_OFFSET: u32 = 352;

const MAGIC_SINGLE_FILE: &[u8; 4] = b"n+1\0";

/// NIfTI-1 datatype codes supported by this toolkit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(i16)]
pub enum DataType {
    /// Unsigned 8-bit integer (code 2).
    UInt8 = 2,
    /// Signed 16-bit integer (code 4).
    Int16 = 4,
    /// 32-bit IEEE float (code 16).
    Float32 = 16,
}

impl DataType {
    /// Parse a datatype code, rejecting anything outside the supported set.
    pub fn from_code(code: i16) -> Result<Self> {
        match code {
            2 => Ok(Self::UInt8),
            4 => Ok(Self::Int16),
            16 => Ok(Self::Float32),
            other => Err(Error::Unsupported(format!(
                "NIfTI datatype code {other} (supported: 2=uint8, 4=int16, 16=float32)"
            ))),
        }
    }

    /// Bytes per voxel.
    pub const fn byte_size(self) -> usize {
        match self {
            Self::UInt8 => 1,
            Self::Int16 => 2,
            Self::Float32 => 4,
        }
    }
}

/// Which volume kind to decode a file into.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VolumeKind {
    /// Decode as scalar intensities with `scl_slope`/`scl_inter` applied.
    Scalar,
    /// Decode as integer labels; scaling must produce exact integers.
    Label,
}

// Byte layout of every multi-byte numeric field in the NIfTI-1 header,
// as (offset, element size, element count). Used to normalize a
// big-endian header to little-endian without interpreting the fields.
const NUMERIC_FIELDS: &[(usize, usize, usize)] = &[
    (0, 4, 1),    // sizeof_hdr
    (32, 4, 1),   // extents
    (36, 2, 1),   // session_error
    (40, 2, 8),   // dim
    (56, 4, 3),   // intent_p1..p3
    (68, 2, 1),   // intent_code
    (70, 2, 1),   // datatype
    (72, 2, 1),   // bitpix
    (74, 2, 1),   // slice_start
    (76, 4, 8),   // pixdim
    (108, 4, 1),  // vox_offset
    (112, 4, 1),  // scl_slope
    (116, 4, 1),  // scl_inter
    (120, 2, 1),  // slice_end
    (124, 4, 1),  // cal_max
    (128, 4, 1),  // cal_min
    (132, 4, 1),  // slice_duration
    (136, 4, 1),  // toffset
    (140, 4, 1),  // glmax
    (144, 4, 1),  // glmin
    (252, 2, 1),  // qform_code
    (254, 2, 1),  // sform_code
    (256, 4, 3),  // quatern_b..d
    (268, 4, 3),  // qoffset_x..z
    (280, 4, 12), // srow_x, srow_y, srow_z
];

/// Parsed NIfTI-1 header backed by the raw 348 bytes.
///
/// The buffer is normalized to little-endian on load, so unrecognized
/// fields survive a round trip byte-for-byte (for little-endian sources)
/// or value-for-value (for big-endian sources).
#[derive(Debug, Clone)]
pub struct NiftiHeader {
    raw: [u8; HEADER_SIZE],
}

impl Default for NiftiHeader {
    fn default() -> Self {
        let mut raw = [0u8; HEADER_SIZE];
        LittleEndian::write_i32(&mut raw[0..4], HEADER_SIZE as i32);
        raw[38] = b'r'; // "regular" flag, kept for ANALYZE compatibility
        LittleEndian::write_f32(&mut raw[76..80], 1.0); // pixdim[0] = qfac
        LittleEndian::write_i16(&mut raw[252..254], 1); // qform_code: scaled axes
        raw[344..348].copy_from_slice(MAGIC_SINGLE_FILE);
        Self { raw }
    }
}

impl NiftiHeader {
    /// Parse a header from the first 348 bytes of a file, detecting byte
    /// order via `dim[0]` and validating the single-file magic.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_SIZE {
            return Err(Error::Format(format!(
                "file too short for a NIfTI-1 header: {} bytes",
                bytes.len()
            )));
        }
        let magic = &bytes[344..348];
        if magic != MAGIC_SINGLE_FILE {
            return Err(Error::Format(format!(
                "bad magic {magic:?}, expected single-file NIfTI-1 tag"
            )));
        }

        let mut raw = [0u8; HEADER_SIZE];
        raw.copy_from_slice(&bytes[..HEADER_SIZE]);

        // dim[0] holds the dimensionality, 1..=7; a value outside that
        // range read little-endian means the file is byte-swapped.
        let dim0_le = LittleEndian::read_i16(&raw[40..42]);
        let little_endian = if (1..=7).contains(&dim0_le) {
            true
        } else {
            let dim0_be = BigEndian::read_i16(&raw[40..42]);
            if (1..=7).contains(&dim0_be) {
                false
            } else {
                return Err(Error::Format(format!(
                    "dim[0] = {dim0_le} invalid in either byte order"
                )));
            }
        };
        if !little_endian {
            for &(offset, size, count) in NUMERIC_FIELDS {
                for i in 0..count {
                    raw[offset + i * size..offset + (i + 1) * size].reverse();
                }
            }
        }

        let header = Self { raw };
        header.validate()?;
        Ok(header)
    }

    fn validate(&self) -> Result<()> {
        let ndim = self.ndim();
        if !(1..=7).contains(&ndim) {
            return Err(Error::Format(format!("dim[0] must be 1..=7, got {ndim}")));
        }
        for i in 1..=ndim as usize {
            if self.dim(i) < 1 {
                return Err(Error::Format(format!(
                    "dim[{i}] must be >= 1, got {}",
                    self.dim(i)
                )));
            }
        }
        let datatype = self.datatype()?;
        let bitpix = LittleEndian::read_i16(&self.raw[72..74]);
        let expected = (datatype.byte_size() * 8) as i16;
        if bitpix != expected {
            return Err(Error::Format(format!(
                "bitpix {bitpix} does not match datatype (expected {expected})"
            )));
        }
        let vox_offset = self.vox_offset();
        if !vox_offset.is_finite() || vox_offset.fract() != 0.0 || vox_offset < HEADER_SIZE as f32 {
            return Err(Error::Format(format!(
                "vox_offset must be an integer >= {HEADER_SIZE}, got {vox_offset}"
            )));
        }
        Ok(())
    }

    /// Number of dimensions (`dim[0]`).
    pub fn ndim(&self) -> i16 {
        LittleEndian::read_i16(&self.raw[40..42])
    }

    /// Size along dimension `i` (1-based, `dim[i]`).
    pub fn dim(&self, i: usize) -> i16 {
        LittleEndian::read_i16(&self.raw[40 + 2 * i..42 + 2 * i])
    }

    /// Datatype code, decoded.
    pub fn datatype(&self) -> Result<DataType> {
        DataType::from_code(LittleEndian::read_i16(&self.raw[70..72]))
    }

    /// Voxel size along dimension `i` (1-based, `pixdim[i]`).
    pub fn pixdim(&self, i: usize) -> f32 {
        LittleEndian::read_f32(&self.raw[76 + 4 * i..80 + 4 * i])
    }

    /// Data scaling slope; 0 means "no scaling stored".
    pub fn scl_slope(&self) -> f32 {
        LittleEndian::read_f32(&self.raw[112..116])
    }

    /// Data scaling intercept.
    pub fn scl_inter(&self) -> f32 {
        LittleEndian::read_f32(&self.raw[116..120])
    }

    /// Offset of the voxel data within the file.
    pub fn vox_offset(&self) -> f32 {
        LittleEndian::read_f32(&self.raw[108..112])
    }

    /// Origin of the volume: the `qoffset_{x,y,z}` fields.
    pub fn origin(&self) -> [f32; 3] {
        [
            LittleEndian::read_f32(&self.raw[268..272]),
            LittleEndian::read_f32(&self.raw[272..276]),
            LittleEndian::read_f32(&self.raw[276..280]),
        ]
    }

    /// The raw little-endian header bytes.
    pub fn as_bytes(&self) -> &[u8; HEADER_SIZE] {
        &self.raw
    }

    // Rewrite the fields owned by the toolkit, leaving everything else
    // (orientation, description, intent) untouched.
    fn set_geometry(&mut self, dims: [usize; 3], spacing: [f32; 3], origin: [f32; 3]) {
        LittleEndian::write_i16(&mut self.raw[40..42], 3);
        for i in 0..3 {
            LittleEndian::write_i16(&mut self.raw[42 + 2 * i..44 + 2 * i], dims[i] as i16);
            LittleEndian::write_f32(&mut self.raw[80 + 4 * i..84 + 4 * i], spacing[i]);
            LittleEndian::write_f32(&mut self.raw[268 + 4 * i..272 + 4 * i], origin[i]);
        }
        for i in 4..8 {
            LittleEndian::write_i16(&mut self.raw[40 + 2 * i..42 + 2 * i], 1);
        }
    }

    fn set_datatype(&mut self, datatype: DataType) {
        LittleEndian::write_i16(&mut self.raw[70..72], datatype as i16);
        LittleEndian::write_i16(&mut self.raw[72..74], (datatype.byte_size() * 8) as i16);
    }

    fn set_scaling(&mut self, slope: f32, inter: f32) {
        LittleEndian::write_f32(&mut self.raw[112..116], slope);
        LittleEndian::write_f32(&mut self.raw[116..120], inter);
    }

    fn set_vox_offset(&mut self, offset: u32) {
        LittleEndian::write_f32(&mut self.raw[108..112], offset as f32);
    }
}

fn is_gzip(bytes: &[u8]) -> bool {
    bytes.len() >= 2 && bytes[0] == 0x1f && bytes[1] == 0x8b
}

fn read_file_bytes(path: &Path) -> Result<Vec<u8>> {
    let bytes = std::fs::read(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    if is_gzip(&bytes) {
        let mut decoder = MultiGzDecoder::new(&bytes[..]);
        let mut out = Vec::new();
        decoder.read_to_end(&mut out).map_err(|e| {
            Error::Format(format!("{}: gzip decode failed: {e}", path.display()))
        })?;
        Ok(out)
    } else {
        Ok(bytes)
    }
}

// Volume dims from the header, squeezing trailing singleton dimensions.
fn header_dims(header: &NiftiHeader) -> Result<[usize; 3]> {
    let ndim = header.ndim() as usize;
    for i in 4..=ndim {
        if header.dim(i) != 1 {
            return Err(Error::Unsupported(format!(
                "{ndim}-dimensional image with dim[{i}] = {} (only 3D volumes, \
                 or higher-dimensional images with singleton extra dims, are supported)",
                header.dim(i)
            )));
        }
    }
    let mut dims = [1usize; 3];
    for (i, d) in dims.iter_mut().enumerate().take(ndim.min(3)) {
        *d = header.dim(i + 1) as usize;
    }
    Ok(dims)
}

fn header_spacing(header: &NiftiHeader) -> Result<[f32; 3]> {
    let ndim = (header.ndim() as usize).min(3);
    let mut spacing = [1.0f32; 3];
    for (i, s) in spacing.iter_mut().enumerate().take(ndim) {
        *s = header.pixdim(i + 1);
        if !s.is_finite() || *s <= 0.0 {
            return Err(Error::Format(format!(
                "pixdim[{}] must be finite and > 0, got {s}",
                i + 1
            )));
        }
    }
    Ok(spacing)
}

// Decode the voxel payload to f64, honoring datatype and byte order.
fn decode_voxels(
    bytes: &[u8],
    header: &NiftiHeader,
    n_voxels: usize,
    path: &Path,
) -> Result<Vec<f64>> {
    let datatype = header.datatype()?;
    let start = header.vox_offset() as usize;
    let need = n_voxels * datatype.byte_size();
    if bytes.len() < start + need {
        return Err(Error::Format(format!(
            "{}: truncated voxel data ({} bytes past offset {start}, need {need})",
            path.display(),
            bytes.len().saturating_sub(start),
        )));
    }
    let payload = &bytes[start..start + need];

    // Header bytes were normalized to little-endian, but the payload was
    // not; detect the original order again from the file bytes.
    let file_le = (1..=7).contains(&LittleEndian::read_i16(&bytes[40..42]));

    let mut out = Vec::with_capacity(n_voxels);
    match datatype {
        DataType::UInt8 => out.extend(payload.iter().map(|&b| f64::from(b))),
        DataType::Int16 => {
            for chunk in payload.chunks_exact(2) {
                let v = if file_le {
                    LittleEndian::read_i16(chunk)
                } else {
                    BigEndian::read_i16(chunk)
                };
                out.push(f64::from(v));
            }
        }
        DataType::Float32 => {
            for chunk in payload.chunks_exact(4) {
                let v = if file_le {
                    LittleEndian::read_f32(chunk)
                } else {
                    BigEndian::read_f32(chunk)
                };
                out.push(f64::from(v));
            }
        }
    }
    Ok(out)
}

/// Read a single-file NIfTI-1 image as the requested volume kind.
///
/// Scalar volumes have `scl_slope`/`scl_inter` applied when the slope is
/// nonzero. Label volumes must decode to exact integers within the
/// configured label set.
pub fn read_nifti(path: impl AsRef<Path>, kind: VolumeKind) -> Result<Volume> {
    let path = path.as_ref();
    let bytes = read_file_bytes(path)?;
    let header = NiftiHeader::from_bytes(&bytes)
        .map_err(|e| prefix_path(e, path))?;
    let dims = header_dims(&header).map_err(|e| prefix_path(e, path))?;
    let spacing = header_spacing(&header).map_err(|e| prefix_path(e, path))?;
    let origin = header.origin();
    let n_voxels = dims[0] * dims[1] * dims[2];
    let raw = decode_voxels(&bytes, &header, n_voxels, path)?;

    let slope = header.scl_slope();
    let inter = header.scl_inter();
    let scaled = slope != 0.0 && (slope != 1.0 || inter != 0.0);

    match kind {
        VolumeKind::Scalar => {
            let mut data = Vec::with_capacity(n_voxels);
            for v in raw {
                let v = if scaled {
                    v * f64::from(slope) + f64::from(inter)
                } else {
                    v
                };
                let v = v as f32;
                if !v.is_finite() {
                    return Err(Error::Data(format!(
                        "{}: non-finite voxel value after scaling",
                        path.display()
                    )));
                }
                data.push(v);
            }
            let mut volume = ScalarVolume::new(dims, spacing, origin, data)?;
            volume.source_header = Some(Box::new(header));
            Ok(Volume::Scalar(volume))
        }
        VolumeKind::Label => {
            let mut data = Vec::with_capacity(n_voxels);
            for v in raw {
                let v = if scaled {
                    v * f64::from(slope) + f64::from(inter)
                } else {
                    v
                };
                if !v.is_finite() || v.fract() != 0.0 || !(0.0..=255.0).contains(&v) {
                    return Err(Error::Data(format!(
                        "{}: voxel value {v} is not a valid integer label",
                        path.display()
                    )));
                }
                data.push(v as u8);
            }
            let mut volume =
                LabelVolume::new_with_labels(dims, spacing, origin, data, &TASK_LABELS)
                    .map_err(|e| prefix_path(e, path))?;
            volume.source_header = Some(Box::new(header));
            Ok(Volume::Label(volume))
        }
    }
}

/// Read a scalar volume (shorthand for [`read_nifti`] with [`VolumeKind::Scalar`]).
pub fn read_scalar(path: impl AsRef<Path>) -> Result<ScalarVolume> {
    read_nifti(path, VolumeKind::Scalar)?.into_scalar()
}

/// Read a label volume (shorthand for [`read_nifti`] with [`VolumeKind::Label`]).
pub fn read_label(path: impl AsRef<Path>) -> Result<LabelVolume> {
    read_nifti(path, VolumeKind::Label)?.into_label()
}

fn prefix_path(err: Error, path: &Path) -> Error {
    match err {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        Error::Unsupported(m) => Error::Unsupported(format!("{}: {m}", path.display())),
        Error::Data(m) => Error::Data(format!("{}: {m}", path.display())),
        other => other,
    }
}

fn write_bytes(path: &Path, header: &NiftiHeader, payload: &[u8]) -> Result<()> {
    let gzip = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("gz"));
    let mut buf = Vec::with_capacity(DATA_OFFSET as usize + payload.len());
    buf.extend_from_slice(header.as_bytes());
    buf.extend_from_slice(&[0u8; 4]); // extension flag: none
    buf.extend_from_slice(payload);

    let with_path =
        |e: std::io::Error| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())));
    if gzip {
        let file = std::fs::File::create(path).map_err(with_path)?;
        let mut encoder = GzEncoder::new(file, flate2::Compression::default());
        encoder.write_all(&buf).map_err(with_path)?;
        encoder.finish().map_err(with_path)?;
    } else {
        std::fs::write(path, &buf).map_err(with_path)?;
    }
    Ok(())
}

/// Write a scalar volume as 32-bit float, `scl_slope=1`, `scl_inter=0`.
///
/// Compresses when the path ends in `.gz`. Orientation fields from the
/// volume's source header, if any, are carried over verbatim.
pub fn write_scalar(volume: &ScalarVolume, path: impl AsRef<Path>) -> Result<()> {
    // Re-validate: the fields are public, so a caller can build an
    // invalid volume without going through the constructor.
    let checked = ScalarVolume::new(
        volume.dims,
        volume.spacing,
        volume.origin,
        volume.data.clone(),
    )?;

    let mut header = volume
        .source_header
        .as_deref()
        .cloned()
        .unwrap_or_default();
    header.set_geometry(checked.dims, checked.spacing, checked.origin);
    header.set_datatype(DataType::Float32);
    header.set_scaling(1.0, 0.0);
    header.set_vox_offset(DATA_OFFSET);

    let mut payload = vec![0u8; checked.data.len() * 4];
    LittleEndian::write_f32_into(&checked.data, &mut payload);
    write_bytes(path.as_ref(), &header, &payload)
}

/// Write a label volume as unsigned 8-bit, `scl_slope=1`, `scl_inter=0`.
pub fn write_label(volume: &LabelVolume, path: impl AsRef<Path>) -> Result<()> {
    let checked = LabelVolume::new_with_labels(
        volume.dims,
        volume.spacing,
        volume.origin,
        volume.data.clone(),
        &TASK_LABELS,
    )?;

    let mut header = volume
        .source_header
        .as_deref()
        .cloned()
        .unwrap_or_default();
    header.set_geometry(checked.dims, checked.spacing, checked.origin);
    header.set_datatype(DataType::UInt8);
    header.set_scaling(1.0, 0.0);
    header.set_vox_offset(DATA_OFFSET);

    write_bytes(path.as_ref(), &header, &checked.data)
}

/// Write either volume kind (scalar → float32, label → uint8).
pub fn write_nifti(volume: &Volume, path: impl AsRef<Path>) -> Result<()> {
    match volume {
        Volume::Scalar(v) => write_scalar(v, path),
        Volume::Label(v) => write_label(v, path),
    }
}
