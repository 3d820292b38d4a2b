//! Shared helpers for the CLI integration and acceptance suites:
//! synthetic datasets with a tumor-like ellipsoid (label 1) and a small
//! bright pair (label 2), plus a runner for the compiled binary.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Output;

use modaprep_core::manifest::{CaseEntry, DatasetManifest, Domain};
use modaprep_core::nifti;
use modaprep_core::volume::{LabelVolume, ScalarVolume};

// Small deterministic hash for reproducible "noise".
pub fn hash01(i: u64, salt: u64) -> f64 {
    let h = i
        .wrapping_mul(6364136223846793005)
        .wrapping_add(salt.wrapping_mul(1442695040888963407));
    ((h >> 11) as f64) / ((1u64 << 53) as f64)
}

/// One synthetic case: a bright ellipsoid "tumor" (label 1) near the
/// volume center and a bright two-blob "cochlea" pair (label 2) beside
/// it, over a dim noisy background.
pub fn synthetic_case(
    seed: u64,
    dims: [usize; 3],
    spacing: [f32; 3],
) -> (ScalarVolume, LabelVolume) {
    let [nx, ny, nz] = dims;
    let center = [
        nx as f64 / 2.0 + hash01(seed, 1) * 2.0 - 1.0,
        ny as f64 / 2.0 + hash01(seed, 2) * 2.0 - 1.0,
        nz as f64 / 2.0,
    ];
    let semi_axes = [
        nx as f64 / 7.0 + hash01(seed, 3),
        ny as f64 / 7.0 + hash01(seed, 4),
        (nz as f64 / 4.0).max(1.5),
    ];
    let cochlea_y_offset = ny as f64 / 5.0;
    let cochlea_centers = [
        [center[0] + nx as f64 / 4.0, center[1] - cochlea_y_offset, center[2]],
        [center[0] + nx as f64 / 4.0, center[1] + cochlea_y_offset, center[2]],
    ];
    let cochlea_radius = 2.0;

    let mut data = vec![0.0f32; nx * ny * nz];
    let mut labels = vec![0u8; nx * ny * nz];
    let mut i = 0usize;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let noise = 0.02 + 0.05 * hash01(i as u64, seed);
                let mut value = noise;
                let mut label = 0u8;

                let e = [
                    (x as f64 - center[0]) / semi_axes[0],
                    (y as f64 - center[1]) / semi_axes[1],
                    (z as f64 - center[2]) / semi_axes[2],
                ];
                if e[0] * e[0] + e[1] * e[1] + e[2] * e[2] <= 1.0 {
                    value = 0.9 + 0.05 * hash01(i as u64, seed + 7);
                    label = 1;
                } else {
                    for c in &cochlea_centers {
                        let d2 = (x as f64 - c[0]).powi(2)
                            + (y as f64 - c[1]).powi(2)
                            + (z as f64 - c[2]).powi(2);
                        if d2 <= cochlea_radius * cochlea_radius {
                            value = 0.8 + 0.05 * hash01(i as u64, seed + 13);
                            label = 2;
                        }
                    }
                }
                data[i] = value as f32;
                labels[i] = label;
                i += 1;
            }
        }
    }

    (
        ScalarVolume::new(dims, spacing, [0.0; 3], data).unwrap(),
        LabelVolume::new(dims, spacing, [0.0; 3], labels).unwrap(),
    )
}

/// Write `n` synthetic cases plus a manifest (absolute paths) into
/// `dir/raw`, returning the manifest path.
pub fn write_dataset(dir: &Path, n: usize, dims: [usize; 3], spacing: [f32; 3]) -> PathBuf {
    let raw = dir.join("raw");
    std::fs::create_dir_all(&raw).unwrap();
    let mut cases = Vec::new();
    for i in 0..n {
        let id = format!("case_{i:03}");
        let (volume, labels) = synthetic_case(i as u64 + 1, dims, spacing);
        let image = raw.join(format!("{id}.nii.gz"));
        let label = raw.join(format!("{id}_label.nii.gz"));
        nifti::write_scalar(&volume, &image).unwrap();
        nifti::write_label(&labels, &label).unwrap();
        cases.push(CaseEntry {
            case_id: id,
            image,
            label: Some(label),
            domain: Domain::CeT1,
            augmented: false,
        });
    }
    let manifest = DatasetManifest {
        dataset: "synthetic".into(),
        cases,
    };
    let path = dir.join("manifest.json");
    manifest.save(&path).unwrap();
    path
}

/// Run the compiled `modaprep` binary with the given arguments.
pub fn modaprep(args: &[&str]) -> Output {
    std::process::Command::new(env!("CARGO_BIN_EXE_modaprep"))
        .args(args)
        .output()
        .expect("binary runs")
}

/// Run the binary with extra environment variables set.
pub fn modaprep_env(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = std::process::Command::new(env!("CARGO_BIN_EXE_modaprep"));
    cmd.args(args);
    for (key, value) in envs {
        cmd.env(key, value);
    }
    cmd.output().expect("binary runs")
}

pub fn stdout_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stdout).into_owned()
}

pub fn stderr_of(output: &Output) -> String {
    String::from_utf8_lossy(&output.stderr).into_owned()
}
