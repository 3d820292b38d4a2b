//! Fréchet distance between Gaussian summaries of feature sets, used to
//! score how closely a set of translated images matches the target
//! domain. Feature extraction happens outside this toolkit; features
//! arrive as files (CSV or raw float matrices).
//!
//! For Gaussians (μ_a, Σ_a), (μ_b, Σ_b) the squared Fréchet distance is
//! `||μ_a − μ_b||² + Tr(Σ_a + Σ_b − 2 (Σ_a Σ_b)^{1/2})`. The matrix
//! square-root trace is computed in its symmetric form: with
//! `A = Σ_a^{1/2}` (spectral square root), the trace term uses the
//! eigenvalues of `A Σ_b A`. Eigenvalues slightly below zero (round-off)
//! are clamped; anything below `−1e-6 · max|eig|` makes the covariance
//! invalid. Covariances use the unbiased (n−1) estimator, matching the
//! dominant convention of published implementations — the biased
//! variant changes results noticeably at small n.

use std::path::Path;

use byteorder::ByteOrder;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Deserialize;

use crate::error::{Error, Result};

/// An n×d matrix of feature vectors, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    /// Sample count (≥ 2, so a covariance exists).
    pub n: usize,
    /// Feature dimension.
    pub d: usize,
    data: Vec<f64>,
}

impl FeatureSet {
    /// Build a feature set from row-major data.
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self> {
        if n < 2 {
            return Err(Error::InsufficientSamples { got: n, need: 2 });
        }
        if d == 0 || data.len() != n * d {
            return Err(Error::Shape(format!(
                "feature data length {} does not match {n}x{d}",
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite feature value {bad}")));
        }
        Ok(Self { n, d, data })
    }

    /// Row `i` as a slice of length `d`.
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }
}

/// Mean vector and covariance matrix of a feature set.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianSummary {
    /// Column means, length d.
    pub mu: DVector<f64>,
    /// d×d covariance, symmetric.
    pub sigma: DMatrix<f64>,
}

impl GaussianSummary {
    /// Build a summary, checking shape and symmetry (within `1e-10`
    /// relative to the largest entry). Positive semi-definiteness is
    /// verified spectrally inside [`frechet_distance`].
    pub fn new(mu: DVector<f64>, sigma: DMatrix<f64>) -> Result<Self> {
        let d = mu.len();
        if sigma.nrows() != d || sigma.ncols() != d {
            return Err(Error::Shape(format!(
                "covariance is {}x{}, expected {d}x{d}",
                sigma.nrows(),
                sigma.ncols()
            )));
        }
        let scale = sigma.amax().max(1.0);
        for i in 0..d {
            for j in (i + 1)..d {
                if (sigma[(i, j)] - sigma[(j, i)]).abs() > 1e-10 * scale {
                    return Err(Error::InvalidCovariance(format!(
                        "asymmetric at ({i}, {j}): {} vs {}",
                        sigma[(i, j)],
                        sigma[(j, i)]
                    )));
                }
            }
        }
        Ok(Self { mu, sigma })
    }
}

/// Column means and unbiased sample covariance (n−1 divisor).
pub fn summarize(features: &FeatureSet) -> Result<GaussianSummary> {
    let (n, d) = (features.n, features.d);
    if n < 2 {
        return Err(Error::InsufficientSamples { got: n, need: 2 });
    }
    let mut mu = DVector::zeros(d);
    for i in 0..n {
        for (j, &v) in features.row(i).iter().enumerate() {
            mu[j] += v;
        }
    }
    mu /= n as f64;

    let mut sigma = DMatrix::zeros(d, d);
    let mut centered = vec![0.0f64; d];
    for i in 0..n {
        for (j, &v) in features.row(i).iter().enumerate() {
            centered[j] = v - mu[j];
        }
        for j in 0..d {
            let cj = centered[j];
            for k in j..d {
                sigma[(j, k)] += cj * centered[k];
            }
        }
    }
    sigma /= (n - 1) as f64;
    for j in 0..d {
        for k in (j + 1)..d {
            sigma[(k, j)] = sigma[(j, k)];
        }
    }
    GaussianSummary::new(mu, sigma)
}

// Eigenvalues of a symmetric matrix, rejecting anything meaningfully
// negative and clamping round-off negatives to zero.
fn checked_eigenvalues(matrix: &DMatrix<f64>, context: &str) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let eig = SymmetricEigen::new(matrix.clone());
    let max_abs = eig
        .eigenvalues
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let floor = -1e-6 * max_abs;
    let mut values = eig.eigenvalues;
    for v in values.iter_mut() {
        if *v < floor {
            return Err(Error::InvalidCovariance(format!(
                "{context}: eigenvalue {v} below tolerance {floor:e}"
            )));
        }
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    Ok((eig.eigenvectors, values))
}

// Spectral square root of a symmetric PSD matrix.
fn psd_sqrt(matrix: &DMatrix<f64>, context: &str) -> Result<DMatrix<f64>> {
    let (vectors, values) = checked_eigenvalues(matrix, context)?;
    let sqrt_values = DVector::from_iterator(values.len(), values.iter().map(|v| v.sqrt()));
    Ok(&vectors * DMatrix::from_diagonal(&sqrt_values) * vectors.transpose())
}

/// Fréchet distance between two Gaussian summaries; non-negative,
/// symmetric, zero for identical inputs.
pub fn frechet_distance(a: &GaussianSummary, b: &GaussianSummary) -> Result<f64> {
    let d = a.mu.len();
    if b.mu.len() != d {
        return Err(Error::Shape(format!(
            "feature dimensions differ: {d} vs {}",
            b.mu.len()
        )));
    }

    let sqrt_a = psd_sqrt(&a.sigma, "first covariance")?;
    let mut inner = &sqrt_a * &b.sigma * &sqrt_a;
    // Symmetrize before the spectral step: the product picks up tiny
    // asymmetries from rounding.
    for i in 0..d {
        for j in (i + 1)..d {
            let s = 0.5 * (inner[(i, j)] + inner[(j, i)]);
            inner[(i, j)] = s;
            inner[(j, i)] = s;
        }
    }
    let (_, inner_values) = checked_eigenvalues(&inner, "second covariance")?;
    let sqrt_trace: f64 = inner_values.iter().map(|v| v.sqrt()).sum();

    let delta = &a.mu - &b.mu;
    let distance = delta.norm_squared() + a.sigma.trace() + b.sigma.trace() - 2.0 * sqrt_trace;
    Ok(distance.max(0.0))
}

#[derive(Debug, Deserialize)]
struct RawSidecar {
    n: usize,
    d: usize,
}

fn parse_err(path: &Path, message: impl std::fmt::Display) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

fn read_csv_features(path: &Path) -> Result<FeatureSet> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| parse_err(path, e))?;

    let mut data: Vec<f64> = Vec::new();
    let mut d = 0usize;
    let mut rows = 0usize;
    for (index, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(path, e))?;
        if record.is_empty() || (record.len() == 1 && record[0].is_empty()) {
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> =
            record.iter().map(str::parse::<f64>).collect();
        match parsed {
            Ok(values) => {
                if d == 0 {
                    d = values.len();
                } else if values.len() != d {
                    let line = record
                        .position()
                        .map(|p| p.line().to_string())
                        .unwrap_or_else(|| "?".into());
                    return Err(parse_err(
                        path,
                        format!("line {line}: {} columns, expected {d}", values.len()),
                    ));
                }
                data.extend(values);
                rows += 1;
            }
            Err(e) => {
                // A non-numeric first record is an optional header row.
                if index == 0 && rows == 0 {
                    continue;
                }
                let line = record
                    .position()
                    .map(|p| p.line().to_string())
                    .unwrap_or_else(|| "?".into());
                return Err(parse_err(path, format!("line {line}: {e}")));
            }
        }
    }
    if rows == 0 {
        return Err(parse_err(path, "no data rows"));
    }
    FeatureSet::new(rows, d, data)
}

fn read_raw_features(path: &Path) -> Result<FeatureSet> {
    let sidecar_path = {
        let mut name = path.as_os_str().to_owned();
        name.push(".json");
        std::path::PathBuf::from(name)
    };
    let sidecar_text = std::fs::read_to_string(&sidecar_path)
        .map_err(|e| parse_err(&sidecar_path, format!("cannot read sidecar: {e}")))?;
    let sidecar: RawSidecar =
        serde_json::from_str(&sidecar_text).map_err(|e| parse_err(&sidecar_path, e))?;

    let bytes = std::fs::read(path)?;
    let expected = sidecar.n * sidecar.d * 4;
    if bytes.len() != expected {
        return Err(parse_err(
            path,
            format!(
                "expected {expected} bytes for {}x{} float32, got {}",
                sidecar.n,
                sidecar.d,
                bytes.len()
            ),
        ));
    }
    let mut values = vec![0.0f32; sidecar.n * sidecar.d];
    byteorder::LittleEndian::read_f32_into(&bytes, &mut values);
    FeatureSet::new(
        sidecar.n,
        sidecar.d,
        values.into_iter().map(f64::from).collect(),
    )
}

/// Load a feature file: `.csv` (one sample per row, optional header) or
/// raw little-endian float32 with a `<file>.json` sidecar `{n, d}`.
/// The format is chosen by extension.
pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureSet> {
    let path = path.as_ref();
    let is_csv = path
        .extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| e.eq_ignore_ascii_case("csv"));
    if is_csv {
        read_csv_features(path)
    } else {
        read_raw_features(path)
    }
}

/// Fréchet distance between the Gaussian summaries of two feature files.
pub fn fid_between_files(path_a: impl AsRef<Path>, path_b: impl AsRef<Path>) -> Result<f64> {
    let a = summarize(&read_features(path_a)?)?;
    let b = summarize(&read_features(path_b)?)?;
    frechet_distance(&a, &b)
}
