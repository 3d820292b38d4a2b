//! Segmentation evaluation: per-label Dice overlap, average symmetric
//! surface distance (ASSD) in millimeters, and mean ± std aggregation
//! across cases.
//!
//! Conventions, chosen here because published challenge evaluators do
//! not always document theirs:
//!
//! - `dice(∅, ∅) = 1.0`, `dice(∅, non-empty) = 0.0`
//! - the surface of a mask is its 6-connected boundary, with the volume
//!   border treated as background
//! - distances are measured between voxel centers, scaled per axis by
//!   the voxel spacing; no sub-voxel interpolation
//! - ASSD is *undefined* (an error, not a sentinel value) when either
//!   surface is empty; aggregation excludes and counts such cases

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::edt::squared_distance_field;
use crate::error::{Error, MaskSide, Result};
use crate::volume::LabelVolume;

/// Binary foreground mask with the geometry of the volume it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryMask {
    /// Voxel counts along x, y, z.
    pub dims: [usize; 3],
    /// Voxel spacing in mm.
    pub spacing: [f64; 3],
    /// Foreground flags, x-fastest.
    pub data: Vec<bool>,
}

impl BinaryMask {
    /// Build a mask, validating dims against the data length.
    pub fn new(dims: [usize; 3], spacing: [f64; 3], data: Vec<bool>) -> Result<Self> {
        if data.len() != dims[0] * dims[1] * dims[2] {
            return Err(Error::Shape(format!(
                "mask data length {} does not match dims {dims:?}",
                data.len()
            )));
        }
        Ok(Self {
            dims,
            spacing,
            data,
        })
    }

    /// Select one label of a label volume as the foreground.
    pub fn from_label(volume: &LabelVolume, label: u8) -> Self {
        Self {
            dims: volume.dims,
            spacing: volume.spacing.map(f64::from),
            data: volume.data.iter().map(|&l| l == label).collect(),
        }
    }

    fn foreground_count(&self) -> u64 {
        self.data.iter().filter(|&&b| b).count() as u64
    }
}

/// Dice overlap `2|P∩G| / (|P| + |G|)`.
pub fn dice(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    if pred.dims != gt.dims {
        return Err(Error::Shape(format!(
            "mask dims differ: {:?} vs {:?}",
            pred.dims, gt.dims
        )));
    }
    let p = pred.foreground_count();
    let g = gt.foreground_count();
    if p + g == 0 {
        return Ok(1.0);
    }
    let overlap = pred
        .data
        .iter()
        .zip(&gt.data)
        .filter(|&(&a, &b)| a && b)
        .count() as u64;
    Ok(2.0 * overlap as f64 / (p + g) as f64)
}

/// Surface of a mask: every foreground voxel with at least one
/// 6-connected neighbor that is background or outside the volume.
pub fn extract_surface(mask: &BinaryMask) -> Vec<[usize; 3]> {
    let [nx, ny, nz] = mask.dims;
    let at = |x: usize, y: usize, z: usize| mask.data[x + nx * (y + ny * z)];
    let mut surface = Vec::new();
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                if !at(x, y, z) {
                    continue;
                }
                let exposed = x == 0
                    || !at(x - 1, y, z)
                    || x + 1 == nx
                    || !at(x + 1, y, z)
                    || y == 0
                    || !at(x, y - 1, z)
                    || y + 1 == ny
                    || !at(x, y + 1, z)
                    || z == 0
                    || !at(x, y, z - 1)
                    || z + 1 == nz
                    || !at(x, y, z + 1);
                if exposed {
                    surface.push([x, y, z]);
                }
            }
        }
    }
    surface
}

/// Average symmetric surface distance in mm.
///
/// With surfaces `S_P`, `S_G` and `d(x, S)` the minimum Euclidean
/// distance from voxel center `x` to any voxel center of `S`:
/// `(Σ_{p∈S_P} d(p, S_G) + Σ_{g∈S_G} d(g, S_P)) / (|S_P| + |S_G|)`.
///
/// Nearest distances come from an exact spacing-aware distance
/// transform seeded on the opposite surface.
pub fn assd(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    if pred.dims != gt.dims {
        return Err(Error::Shape(format!(
            "mask dims differ: {:?} vs {:?}",
            pred.dims, gt.dims
        )));
    }
    if pred.spacing != gt.spacing {
        return Err(Error::Shape(format!(
            "mask spacings differ: {:?} vs {:?}",
            pred.spacing, gt.spacing
        )));
    }
    let surface_p = extract_surface(pred);
    let surface_g = extract_surface(gt);
    match (surface_p.is_empty(), surface_g.is_empty()) {
        (true, true) => return Err(Error::UndefinedMetric {
            side: MaskSide::Both,
        }),
        (true, false) => {
            return Err(Error::UndefinedMetric {
                side: MaskSide::Prediction,
            })
        }
        (false, true) => {
            return Err(Error::UndefinedMetric {
                side: MaskSide::GroundTruth,
            })
        }
        (false, false) => {}
    }

    let [nx, ny, _] = pred.dims;
    let mut seeds = vec![false; pred.data.len()];
    for &[x, y, z] in &surface_g {
        seeds[x + nx * (y + ny * z)] = true;
    }
    let to_g = squared_distance_field(&seeds, pred.dims, pred.spacing);

    seeds.iter_mut().for_each(|s| *s = false);
    for &[x, y, z] in &surface_p {
        seeds[x + nx * (y + ny * z)] = true;
    }
    let to_p = squared_distance_field(&seeds, pred.dims, pred.spacing);

    let sum_p: f64 = surface_p
        .iter()
        .map(|&[x, y, z]| to_g[x + nx * (y + ny * z)].sqrt())
        .sum();
    let sum_g: f64 = surface_g
        .iter()
        .map(|&[x, y, z]| to_p[x + nx * (y + ny * z)].sqrt())
        .sum();
    Ok((sum_p + sum_g) / (surface_p.len() + surface_g.len()) as f64)
}

/// Per-case evaluation results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseMetrics {
    /// Dice per evaluated label.
    pub dice: BTreeMap<u8, f64>,
    /// ASSD per evaluated label, `null` where undefined.
    pub assd_mm: BTreeMap<u8, Option<f64>>,
    /// Reason per label whose ASSD is undefined.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub assd_missing: BTreeMap<u8, String>,
    /// Arithmetic mean of the per-label Dice values.
    pub mean_dice: f64,
}

/// Evaluate one prediction against its ground truth on the given labels.
///
/// Undefined ASSD values are recorded with a reason instead of failing
/// the case; shape mismatches are errors.
pub fn evaluate_case(pred: &LabelVolume, gt: &LabelVolume, labels: &[u8]) -> Result<CaseMetrics> {
    if pred.dims != gt.dims {
        return Err(Error::Shape(format!(
            "prediction dims {:?} do not match ground truth {:?}",
            pred.dims, gt.dims
        )));
    }
    if pred.spacing != gt.spacing {
        return Err(Error::Shape(format!(
            "prediction spacing {:?} does not match ground truth {:?}",
            pred.spacing, gt.spacing
        )));
    }

    let mut metrics = CaseMetrics {
        dice: BTreeMap::new(),
        assd_mm: BTreeMap::new(),
        assd_missing: BTreeMap::new(),
        mean_dice: 0.0,
    };
    for &label in labels {
        let mask_p = BinaryMask::from_label(pred, label);
        let mask_g = BinaryMask::from_label(gt, label);
        metrics.dice.insert(label, dice(&mask_p, &mask_g)?);
        match assd(&mask_p, &mask_g) {
            Ok(mm) => {
                metrics.assd_mm.insert(label, Some(mm));
            }
            Err(Error::UndefinedMetric { side }) => {
                metrics.assd_mm.insert(label, None);
                metrics
                    .assd_missing
                    .insert(label, format!("{side} surface is empty"));
            }
            Err(other) => return Err(other),
        }
    }
    metrics.mean_dice =
        metrics.dice.values().sum::<f64>() / metrics.dice.len().max(1) as f64;
    Ok(metrics)
}

/// Mean and sample standard deviation of one metric across cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryStat {
    /// Mean over the defined values.
    pub mean: f64,
    /// Sample standard deviation (n−1 divisor); 0.0 for a single case.
    pub std: f64,
    /// Number of defined values.
    pub count: usize,
}

impl SummaryStat {
    fn from_values(values: &[f64]) -> Self {
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = if n > 1 {
            let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                / (n - 1) as f64;
            var.sqrt()
        } else {
            0.0
        };
        Self {
            mean,
            std,
            count: n,
        }
    }

    /// `mean±std` with four decimal places, e.g. `0.8500±0.0707`.
    pub fn formatted(&self) -> String {
        format!("{:.4}±{:.4}", self.mean, self.std)
    }
}

/// Aggregated Dice and ASSD for one label.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelAggregate {
    /// Dice statistics over all cases.
    pub dice: SummaryStat,
    /// ASSD statistics over the cases where it was defined, if any.
    pub assd_mm: Option<SummaryStat>,
    /// Cases excluded from the ASSD statistics because it was undefined.
    pub assd_excluded: usize,
}

/// Mean ± std of every metric over a set of cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    /// Number of cases aggregated.
    pub cases: usize,
    /// Mean-Dice statistics.
    pub mean_dice: SummaryStat,
    /// Per-label statistics, keyed by label value.
    pub labels: BTreeMap<u8, LabelAggregate>,
}

/// Aggregate per-case metrics into mean ± sample-std summaries.
pub fn aggregate(cases: &[CaseMetrics]) -> Result<AggregateReport> {
    if cases.is_empty() {
        return Err(Error::InsufficientSamples { got: 0, need: 1 });
    }
    let mean_dice: Vec<f64> = cases.iter().map(|c| c.mean_dice).collect();

    let mut labels: BTreeMap<u8, LabelAggregate> = BTreeMap::new();
    let label_set: std::collections::BTreeSet<u8> = cases
        .iter()
        .flat_map(|c| c.dice.keys().copied())
        .collect();
    for label in label_set {
        let dice_values: Vec<f64> = cases
            .iter()
            .filter_map(|c| c.dice.get(&label).copied())
            .collect();
        let assd_values: Vec<f64> = cases
            .iter()
            .filter_map(|c| c.assd_mm.get(&label).copied().flatten())
            .collect();
        let defined_entries = cases
            .iter()
            .filter(|c| c.assd_mm.contains_key(&label))
            .count();
        labels.insert(
            label,
            LabelAggregate {
                dice: SummaryStat::from_values(&dice_values),
                assd_mm: if assd_values.is_empty() {
                    None
                } else {
                    Some(SummaryStat::from_values(&assd_values))
                },
                assd_excluded: defined_entries - assd_values.len(),
            },
        );
    }

    Ok(AggregateReport {
        cases: cases.len(),
        mean_dice: SummaryStat::from_values(&mean_dice),
        labels,
    })
}

/// Human-readable name of a task label.
pub fn label_name(label: u8) -> String {
    match label {
        0 => "Background".into(),
        1 => "Tumor".into(),
        2 => "Cochlea".into(),
        other => format!("Label {other}"),
    }
}

/// Render an aggregate report as an aligned plain-text table with one
/// row per experiment: mean Dice first, then Dice and ASSD per label.
pub fn render_table(reports: &[(String, &AggregateReport)]) -> String {
    let mut columns = vec!["Experiment".to_string(), "Mean Dice".to_string()];
    let mut label_order: Vec<u8> = Vec::new();
    for (_, report) in reports {
        for &label in report.labels.keys() {
            if !label_order.contains(&label) {
                label_order.push(label);
            }
        }
    }
    label_order.sort_unstable();
    for &label in &label_order {
        columns.push(format!("{} Dice", label_name(label)));
        columns.push(format!("{} ASSD", label_name(label)));
    }

    let mut rows: Vec<Vec<String>> = vec![columns];
    for (name, report) in reports {
        let mut row = vec![name.clone(), report.mean_dice.formatted()];
        for &label in &label_order {
            match report.labels.get(&label) {
                Some(agg) => {
                    row.push(agg.dice.formatted());
                    row.push(match &agg.assd_mm {
                        Some(stat) if agg.assd_excluded == 0 => stat.formatted(),
                        Some(stat) => {
                            format!("{} ({} excl.)", stat.formatted(), agg.assd_excluded)
                        }
                        None => "undefined".to_string(),
                    });
                }
                None => {
                    row.push("-".into());
                    row.push("-".into());
                }
            }
        }
        rows.push(row);
    }

    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}
