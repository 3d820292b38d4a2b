//! Acceptance suite: one test per release criterion, each printing a
//! `[PASS criterion N]` line (visible with `--nocapture`). Every
//! tolerance is pinned here; independent oracles (raw-byte NIfTI
//! builder, per-voxel trilinear interpolation, set-counting Dice,
//! pairwise surface distances, closed-form Gaussian distances) live in
//! this file and never call the code paths they check.
//!
//! Run with: `cargo test -p modaprep-cli --test acceptance`

mod common;

use std::time::Instant;

use byteorder::{ByteOrder, LittleEndian};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tempfile::tempdir;

use common::*;
use modaprep_core::augment::{expand_dataset, reduce_tumor_signal, AugmentSpec};
use modaprep_core::ensemble::{argmax_labels, average_probs, kfold_split, ProbabilityVolume};
use modaprep_core::fid::{frechet_distance, summarize, FeatureSet, GaussianSummary};
use modaprep_core::manifest::RunConfig;
use modaprep_core::metrics::{assd, dice, extract_surface, BinaryMask};
use modaprep_core::nifti::{read_label, read_scalar, write_label, write_scalar};
use modaprep_core::pipeline::{
    compute_center_axis, crop_label_xy, crop_scalar_xy, resample_scalar, slice_z, stack_z,
    Interpolation,
};
use modaprep_core::volume::{LabelVolume, ScalarVolume};
use modaprep_core::Error;

fn random_dims(rng: &mut ChaCha8Rng, max: usize) -> [usize; 3] {
    [
        rng.gen_range(1..=max),
        rng.gen_range(1..=max),
        rng.gen_range(1..=max),
    ]
}

fn random_spacing(rng: &mut ChaCha8Rng) -> [f32; 3] {
    [
        rng.gen_range(0.3..3.0),
        rng.gen_range(0.3..3.0),
        rng.gen_range(0.3..3.0),
    ]
}

fn random_scalar_volume(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> ScalarVolume {
    let n = dims[0] * dims[1] * dims[2];
    let data: Vec<f32> = (0..n).map(|_| rng.gen_range(-100.0..100.0)).collect();
    let origin = [
        rng.gen_range(-50.0..50.0),
        rng.gen_range(-50.0..50.0),
        rng.gen_range(-50.0..50.0),
    ];
    ScalarVolume::new(dims, random_spacing(rng), origin, data).unwrap()
}

fn random_label_volume(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> LabelVolume {
    let n = dims[0] * dims[1] * dims[2];
    let data: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=2)).collect();
    LabelVolume::new(dims, random_spacing(rng), [0.0; 3], data).unwrap()
}

// ---------------------------------------------------------------------
// Criterion 1: NIfTI round trip, 100 randomized volumes, three
// datatypes, bit-exact dims/spacing/data, < 10 s.
// ---------------------------------------------------------------------

// Independent NIfTI-1 byte builder, laid out straight from the public
// format description (little-endian only).
fn oracle_nifti_bytes(dims: [usize; 3], spacing: [f32; 3], datatype: i16, payload: &[u8]) -> Vec<u8> {
    let mut h = vec![0u8; 352];
    LittleEndian::write_i32(&mut h[0..4], 348);
    LittleEndian::write_i16(&mut h[40..42], 3);
    let bitpix: i16 = match datatype {
        2 => 8,
        4 => 16,
        16 => 32,
        _ => panic!("oracle supports u8/i16/f32"),
    };
    for i in 0..3 {
        LittleEndian::write_i16(&mut h[42 + 2 * i..44 + 2 * i], dims[i] as i16);
        LittleEndian::write_f32(&mut h[80 + 4 * i..84 + 4 * i], spacing[i]);
    }
    LittleEndian::write_i16(&mut h[70..72], datatype);
    LittleEndian::write_i16(&mut h[72..74], bitpix);
    LittleEndian::write_f32(&mut h[76..80], 1.0);
    LittleEndian::write_f32(&mut h[108..112], 352.0);
    h[344..348].copy_from_slice(b"n+1\0");
    h.extend_from_slice(payload);
    h
}

#[test]
fn criterion_01_nifti_round_trip() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let dir = tempdir().unwrap();

    for i in 0..100 {
        let dims = random_dims(&mut rng, 64);
        let gz = if i % 2 == 0 { ".gz" } else { "" };
        match i % 3 {
            0 => {
                // float32 scalar volume through the production writer
                let v = random_scalar_volume(&mut rng, dims);
                let path = dir.path().join(format!("v{i}.nii{gz}"));
                write_scalar(&v, &path).unwrap();
                let back = read_scalar(&path).unwrap();
                assert_eq!(back.dims, v.dims);
                assert_eq!(back.spacing, v.spacing);
                assert_eq!(back.origin, v.origin);
                assert_eq!(back.data, v.data);
            }
            1 => {
                // uint8 label volume through the production writer
                let v = random_label_volume(&mut rng, dims);
                let path = dir.path().join(format!("v{i}.nii{gz}"));
                write_label(&v, &path).unwrap();
                let back = read_label(&path).unwrap();
                assert_eq!(back.dims, v.dims);
                assert_eq!(back.spacing, v.spacing);
                assert_eq!(back.data, v.data);
            }
            _ => {
                // int16 file from the independent byte builder, read,
                // re-written, re-read: both reads must agree bit-exactly.
                let n = dims[0] * dims[1] * dims[2];
                let values: Vec<i16> = (0..n).map(|_| rng.gen_range(-3000..3000)).collect();
                let mut payload = vec![0u8; n * 2];
                LittleEndian::write_i16_into(&values, &mut payload);
                let spacing = random_spacing(&mut rng);
                let path = dir.path().join(format!("v{i}.nii"));
                std::fs::write(&path, oracle_nifti_bytes(dims, spacing, 4, &payload)).unwrap();

                let first = read_scalar(&path).unwrap();
                assert_eq!(first.dims, dims);
                assert_eq!(first.spacing, spacing);
                let expect: Vec<f32> = values.iter().map(|&v| f32::from(v)).collect();
                assert_eq!(first.data, expect);

                let rewritten = dir.path().join(format!("v{i}_rt.nii{gz}"));
                write_scalar(&first, &rewritten).unwrap();
                let second = read_scalar(&rewritten).unwrap();
                assert_eq!(second, first);
            }
        }
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}, limit 10 s");
    println!("[PASS criterion 1] NIfTI round trip: 100 volumes, 3 datatypes, bit-exact ({elapsed:?})");
}

// ---------------------------------------------------------------------
// Criterion 2: resample identity at own spacing (exact nearest, 1e-6
// trilinear) and 1.2 mm -> 0.6 mm upsampling against an independent
// per-voxel trilinear oracle within 1e-6, < 30 s.
// ---------------------------------------------------------------------

// Direct evaluation of the trilinear formula at every output voxel.
fn oracle_trilinear(v: &ScalarVolume, target: [f32; 3]) -> (Vec<f64>, [usize; 3]) {
    let [nx, ny, nz] = v.dims;
    let mut dims_out = [0usize; 3];
    for a in 0..3 {
        dims_out[a] = ((v.dims[a] as f64 * f64::from(v.spacing[a]) / f64::from(target[a])).round()
            as usize)
            .max(1);
    }
    let mut out = Vec::with_capacity(dims_out.iter().product());
    for z in 0..dims_out[2] {
        for y in 0..dims_out[1] {
            for x in 0..dims_out[0] {
                let voxel = [x, y, z];
                let mut coord = [0.0f64; 3];
                for a in 0..3 {
                    let c = (voxel[a] as f64 + 0.5) * f64::from(target[a])
                        / f64::from(v.spacing[a])
                        - 0.5;
                    coord[a] = c.clamp(0.0, (v.dims[a] - 1) as f64);
                }
                let lo = [
                    coord[0].floor() as usize,
                    coord[1].floor() as usize,
                    coord[2].floor() as usize,
                ];
                let hi = [
                    (lo[0] + 1).min(nx - 1),
                    (lo[1] + 1).min(ny - 1),
                    (lo[2] + 1).min(nz - 1),
                ];
                let frac = [
                    coord[0] - lo[0] as f64,
                    coord[1] - lo[1] as f64,
                    coord[2] - lo[2] as f64,
                ];
                let mut acc = 0.0f64;
                for corner in 0..8usize {
                    let pick = |bit: usize| (corner >> bit) & 1 == 1;
                    let xi = if pick(0) { hi[0] } else { lo[0] };
                    let yi = if pick(1) { hi[1] } else { lo[1] };
                    let zi = if pick(2) { hi[2] } else { lo[2] };
                    let w = (if pick(0) { frac[0] } else { 1.0 - frac[0] })
                        * (if pick(1) { frac[1] } else { 1.0 - frac[1] })
                        * (if pick(2) { frac[2] } else { 1.0 - frac[2] });
                    acc += w * f64::from(v.data[xi + nx * (yi + ny * zi)]);
                }
                out.push(acc);
            }
        }
    }
    (out, dims_out)
}

#[test]
fn criterion_02_resample_identity_and_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);

    for _ in 0..20 {
        let dims = random_dims(&mut rng, 12);
        let v = random_scalar_volume(&mut rng, dims);
        let near = resample_scalar(&v, v.spacing, Interpolation::Nearest).unwrap();
        assert_eq!(near.dims, v.dims);
        assert_eq!(near.data, v.data, "nearest identity must be exact");
        let tri = resample_scalar(&v, v.spacing, Interpolation::Trilinear).unwrap();
        assert_eq!(tri.dims, v.dims);
        for (a, b) in tri.data.iter().zip(&v.data) {
            assert!((a - b).abs() <= 1e-6, "trilinear identity: {a} vs {b}");
        }
    }

    for _ in 0..50 {
        let dims = random_dims(&mut rng, 8);
        let n = dims[0] * dims[1] * dims[2];
        let data: Vec<f32> = (0..n).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let v = ScalarVolume::new(dims, [1.2, 1.2, 1.2], [0.0; 3], data).unwrap();
        let out = resample_scalar(&v, [0.6, 0.6, 0.6], Interpolation::Trilinear).unwrap();
        let (expect, dims_out) = oracle_trilinear(&v, [0.6, 0.6, 0.6]);
        assert_eq!(out.dims, dims_out);
        for (a, b) in out.data.iter().zip(&expect) {
            assert!((f64::from(*a) - b).abs() <= 1e-6, "{a} vs {b}");
        }
    }

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 30.0, "took {elapsed:?}, limit 30 s");
    println!("[PASS criterion 2] resample identity + 50-volume trilinear oracle within 1e-6 ({elapsed:?})");
}

// ---------------------------------------------------------------------
// Criterion 3: stack_z(slice_z(v)) == v bit-exactly, 100 volumes, < 10 s.
// ---------------------------------------------------------------------

#[test]
fn criterion_03_slice_stack_round_trip() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for _ in 0..100 {
        let dims = random_dims(&mut rng, 32);
        let v = random_scalar_volume(&mut rng, dims);
        let back = stack_z(&slice_z(&v)).unwrap();
        assert_eq!(back, v);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}, limit 10 s");
    println!("[PASS criterion 3] slice/stack round trip bit-exact on 100 volumes ({elapsed:?})");
}

// ---------------------------------------------------------------------
// Criterion 4: center axis on single-bright-voxel volumes, constant
// fallback, invariance under a monotone intensity transform.
// ---------------------------------------------------------------------

#[test]
fn criterion_04_center_axis() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);

    for _ in 0..50 {
        let dims = [
            rng.gen_range(4..24),
            rng.gen_range(4..24),
            rng.gen_range(2..8),
        ];
        let bright = [
            rng.gen_range(0..dims[0]),
            rng.gen_range(0..dims[1]),
            rng.gen_range(0..dims[2]),
        ];
        let mut data = vec![0.0f32; dims[0] * dims[1] * dims[2]];
        data[bright[0] + dims[0] * (bright[1] + dims[1] * bright[2])] = 1.0;
        let v = ScalarVolume::new(dims, [1.0; 3], [0.0; 3], data).unwrap();
        assert_eq!(compute_center_axis(&v, 0.75), (bright[0], bright[1]));
    }

    for _ in 0..10 {
        let dims = random_dims(&mut rng, 16);
        let level = rng.gen_range(0.0..5.0);
        let v = ScalarVolume::new(
            dims,
            [1.0; 3],
            [0.0; 3],
            vec![level; dims[0] * dims[1] * dims[2]],
        )
        .unwrap();
        assert_eq!(compute_center_axis(&v, 0.75), (dims[0] / 2, dims[1] / 2));
    }

    for _ in 0..50 {
        let dims = random_dims(&mut rng, 16);
        let n = dims[0] * dims[1] * dims[2];
        let data: Vec<f32> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let v = ScalarVolume::new(dims, [1.0; 3], [0.0; 3], data.clone()).unwrap();
        let squared =
            ScalarVolume::new(dims, [1.0; 3], [0.0; 3], data.iter().map(|x| x * x).collect())
                .unwrap();
        assert_eq!(
            compute_center_axis(&v, 0.75),
            compute_center_axis(&squared, 0.75),
            "center must be invariant under squaring"
        );
    }

    println!("[PASS criterion 4] center axis: bright voxel exact, constant fallback, monotone invariance");
}

// ---------------------------------------------------------------------
// Criterion 5: augmentation halves exactly the label-1 voxels, labels
// byte-identical, commutes with cropping; 105-case manifest -> 210.
// ---------------------------------------------------------------------

#[test]
fn criterion_05_augmentation() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let spec = AugmentSpec::default();

    for _ in 0..50 {
        let dims = random_dims(&mut rng, 16);
        let n = dims[0] * dims[1] * dims[2];
        let data: Vec<f32> = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..=2)).collect();
        let spacing = random_spacing(&mut rng);
        let v = ScalarVolume::new(dims, spacing, [0.0; 3], data).unwrap();
        let l = LabelVolume::new(dims, spacing, [0.0; 3], labels).unwrap();
        let labels_before = l.data.clone();

        let out = reduce_tumor_signal(&v, &l, &spec).unwrap();
        for i in 0..n {
            if l.data[i] == 1 {
                assert_eq!(out.data[i], v.data[i] * 0.5, "label-1 voxel must halve");
            } else {
                assert_eq!(out.data[i], v.data[i], "other voxels must be untouched");
            }
        }
        assert_eq!(l.data, labels_before, "labels must stay byte-identical");

        // augment then crop == crop then augment
        let size = 8usize;
        let center = (
            rng.gen_range(0..dims[0] as i64 + 4) - 2,
            rng.gen_range(0..dims[1] as i64 + 4) - 2,
        );
        let (aug_crop, _) = crop_scalar_xy(&out, center, size).unwrap();
        let (crop_v, _) = crop_scalar_xy(&v, center, size).unwrap();
        let (crop_l, _) = crop_label_xy(&l, center, size).unwrap();
        let crop_aug = reduce_tumor_signal(&crop_v, &crop_l, &spec).unwrap();
        assert_eq!(aug_crop.data, crop_aug.data, "augment must commute with crop");
    }

    // 105 labeled cases double to 210.
    let dir = tempdir().unwrap();
    let manifest_path = write_dataset(dir.path(), 105, [4, 4, 4], [1.0; 3]);
    let manifest = modaprep_core::manifest::DatasetManifest::load(&manifest_path).unwrap();
    assert_eq!(manifest.cases.len(), 105);
    let expanded = expand_dataset(&manifest, &spec).unwrap();
    assert_eq!(expanded.cases.len(), 210, "105 cases must expand to 210");
    assert_eq!(expanded.cases.iter().filter(|c| c.augmented).count(), 105);

    println!("[PASS criterion 5] augmentation exact on 50 pairs, commutes with crop, 105 -> 210 cases");
}

// ---------------------------------------------------------------------
// Criterion 6: Dice equals a set-counting oracle exactly on 500 random
// mask pairs up to 16^3, including the empty-mask conventions.
// ---------------------------------------------------------------------

fn oracle_dice(p: &BinaryMask, g: &BinaryMask) -> f64 {
    let foreground = |m: &BinaryMask| -> std::collections::HashSet<usize> {
        m.data
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect()
    };
    let sp = foreground(p);
    let sg = foreground(g);
    if sp.is_empty() && sg.is_empty() {
        return 1.0;
    }
    2.0 * sp.intersection(&sg).count() as f64 / (sp.len() + sg.len()) as f64
}

fn random_mask(rng: &mut ChaCha8Rng, dims: [usize; 3], density: f64) -> BinaryMask {
    let n = dims[0] * dims[1] * dims[2];
    let data: Vec<bool> = (0..n).map(|_| rng.gen_bool(density)).collect();
    BinaryMask::new(dims, [0.6, 0.6, 1.0], data).unwrap()
}

#[test]
fn criterion_06_dice_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(606);

    for _ in 0..500 {
        let dims = [
            rng.gen_range(1..=16),
            rng.gen_range(1..=16),
            rng.gen_range(1..=16),
        ];
        let density = rng.gen_range(0.0..0.8);
        let p = random_mask(&mut rng, dims, density);
        let g = random_mask(&mut rng, dims, density);
        assert_eq!(dice(&p, &g).unwrap(), oracle_dice(&p, &g));
    }

    let empty = BinaryMask::new([4, 4, 4], [0.6, 0.6, 1.0], vec![false; 64]).unwrap();
    let mut one = vec![false; 64];
    one[13] = true;
    let single = BinaryMask::new([4, 4, 4], [0.6, 0.6, 1.0], one).unwrap();
    assert_eq!(dice(&empty, &empty).unwrap(), 1.0);
    assert_eq!(dice(&empty, &single).unwrap(), 0.0);
    assert_eq!(dice(&single, &empty).unwrap(), 0.0);

    println!("[PASS criterion 6] Dice equals the counting oracle on 500 pairs + empty conventions");
}

// ---------------------------------------------------------------------
// Criterion 7: ASSD matches the O(S^2) pairwise oracle within 1e-9
// relative on 200 pairs up to 16^3 at (0.6, 0.6, 1.0) mm; single-voxel
// masks one x-step apart give exactly 0.6 mm.
// ---------------------------------------------------------------------

fn oracle_assd(p: &BinaryMask, g: &BinaryMask) -> Option<f64> {
    let sp = extract_surface(p);
    let sg = extract_surface(g);
    if sp.is_empty() || sg.is_empty() {
        return None;
    }
    let dist = |a: &[usize; 3], b: &[usize; 3]| -> f64 {
        let mut acc = 0.0;
        for axis in 0..3 {
            let d = (a[axis] as f64 - b[axis] as f64) * p.spacing[axis];
            acc += d * d;
        }
        acc.sqrt()
    };
    let sum_p: f64 = sp
        .iter()
        .map(|a| sg.iter().map(|b| dist(a, b)).fold(f64::INFINITY, f64::min))
        .sum();
    let sum_g: f64 = sg
        .iter()
        .map(|a| sp.iter().map(|b| dist(a, b)).fold(f64::INFINITY, f64::min))
        .sum();
    Some((sum_p + sum_g) / (sp.len() + sg.len()) as f64)
}

#[test]
fn criterion_07_assd_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);

    let mut checked = 0usize;
    while checked < 200 {
        let dims = [
            rng.gen_range(2..=16),
            rng.gen_range(2..=16),
            rng.gen_range(2..=16),
        ];
        let density_p = rng.gen_range(0.05..0.6);
        let density_g = rng.gen_range(0.05..0.6);
        let p = random_mask(&mut rng, dims, density_p);
        let g = random_mask(&mut rng, dims, density_g);
        let Some(slow) = oracle_assd(&p, &g) else {
            continue; // empty surface: undefined, not part of this count
        };
        let fast = assd(&p, &g).unwrap();
        assert!(
            (fast - slow).abs() <= 1e-9 * slow.max(1e-12),
            "{fast} vs {slow} on dims {dims:?}"
        );
        checked += 1;
    }

    let mut a = vec![false; 5 * 5 * 5];
    let mut b = vec![false; 5 * 5 * 5];
    a[1 + 5 * (2 + 5 * 2)] = true;
    b[2 + 5 * (2 + 5 * 2)] = true;
    let ma = BinaryMask::new([5, 5, 5], [0.6, 0.6, 1.0], a).unwrap();
    let mb = BinaryMask::new([5, 5, 5], [0.6, 0.6, 1.0], b).unwrap();
    assert_eq!(assd(&ma, &mb).unwrap(), 0.6, "one x-step must be exactly 0.6 mm");

    println!("[PASS criterion 7] ASSD matches the pairwise oracle on 200 pairs within 1e-9");
}

// ---------------------------------------------------------------------
// Criterion 8: Fréchet distance — self-distance and symmetry within
// 1e-8, diagonal closed form within 1e-8 on 100 cases, sampled 4-D
// Gaussian (n = 1e5) within 3% of the analytic distance, < 60 s.
// ---------------------------------------------------------------------

fn diag_summary(mu: &[f64], variances: &[f64]) -> GaussianSummary {
    GaussianSummary::new(
        nalgebra_vec(mu),
        nalgebra::DMatrix::from_diagonal(&nalgebra_vec(variances)),
    )
    .unwrap()
}

fn nalgebra_vec(v: &[f64]) -> nalgebra::DVector<f64> {
    nalgebra::DVector::from_column_slice(v)
}

#[test]
fn criterion_08_frechet_distance() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(808);

    // Self-distance on full (non-diagonal) sample covariances.
    for _ in 0..10 {
        let n = 64;
        let d = 5;
        let data: Vec<f64> = (0..n * d).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let s = summarize(&FeatureSet::new(n, d, data).unwrap()).unwrap();
        assert!(frechet_distance(&s, &s).unwrap() < 1e-8);
    }

    // Diagonal closed form: ||dmu||^2 + sum (sqrt(a) - sqrt(b))^2.
    for _ in 0..100 {
        let d = rng.gen_range(1..=6);
        let mu_a: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let mu_b: Vec<f64> = (0..d).map(|_| rng.gen_range(-3.0..3.0)).collect();
        let var_a: Vec<f64> = (0..d).map(|_| rng.gen_range(0.01..4.0)).collect();
        let var_b: Vec<f64> = (0..d).map(|_| rng.gen_range(0.01..4.0)).collect();
        let a = diag_summary(&mu_a, &var_a);
        let b = diag_summary(&mu_b, &var_b);
        let got = frechet_distance(&a, &b).unwrap();
        let want: f64 = (0..d)
            .map(|j| {
                (mu_a[j] - mu_b[j]).powi(2) + (var_a[j].sqrt() - var_b[j].sqrt()).powi(2)
            })
            .sum();
        assert!((got - want).abs() <= 1e-8, "{got} vs {want}");
        let sym = frechet_distance(&b, &a).unwrap();
        assert!((got - sym).abs() <= 1e-8, "symmetry: {got} vs {sym}");
        assert!(got >= 0.0);
    }

    // Sampled 4-D Gaussians against the analytic distance between the
    // generators (diagonal, so the closed form is independent).
    let mu_a = [0.0, 1.0, -0.5, 2.0];
    let mu_b = [0.5, 0.0, 0.5, 1.0];
    let var_a = [1.0, 2.0, 0.5, 1.5];
    let var_b = [2.0, 1.0, 1.5, 0.5];
    let analytic: f64 = (0..4)
        .map(|j| (mu_a[j] - mu_b[j]) * (mu_a[j] - mu_b[j])
            + (f64::sqrt(var_a[j]) - f64::sqrt(var_b[j])).powi(2))
        .sum();

    let n = 100_000;
    let sample = |rng: &mut ChaCha8Rng, mu: &[f64; 4], var: &[f64; 4]| -> FeatureSet {
        let normal = rand_distr::StandardNormal;
        let mut data = Vec::with_capacity(n * 4);
        for _ in 0..n {
            for j in 0..4 {
                let z: f64 = rng.sample(normal);
                data.push(mu[j] + z * var[j].sqrt());
            }
        }
        FeatureSet::new(n, 4, data).unwrap()
    };
    let sa = summarize(&sample(&mut rng, &mu_a, &var_a)).unwrap();
    let sb = summarize(&sample(&mut rng, &mu_b, &var_b)).unwrap();
    let sampled = frechet_distance(&sa, &sb).unwrap();
    let rel = (sampled - analytic).abs() / analytic;
    assert!(
        rel <= 0.03,
        "sampled {sampled} vs analytic {analytic} ({:.2}% off)",
        rel * 100.0
    );

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 60.0, "took {elapsed:?}, limit 60 s");
    println!(
        "[PASS criterion 8] Fréchet: closed forms within 1e-8, sampled case {:.2}% off analytic ({elapsed:?})",
        rel * 100.0
    );
}

// ---------------------------------------------------------------------
// Criterion 9: ensembling stays on the simplex (1e-5), argmax agrees
// with a per-voxel loop, and the 105-id / k=5 split gives five folds of
// 21 deterministically.
// ---------------------------------------------------------------------

#[test]
fn criterion_09_ensemble() {
    let mut rng = ChaCha8Rng::seed_from_u64(909);

    for _ in 0..50 {
        let dims = [
            rng.gen_range(2..8),
            rng.gen_range(2..8),
            rng.gen_range(1..4),
        ];
        let channels = rng.gen_range(2..=4);
        let members: Vec<ProbabilityVolume> = (0..rng.gen_range(1..=5))
            .map(|_| {
                let plane = dims[0] * dims[1] * dims[2];
                let mut data = vec![0.0f32; channels * plane];
                for voxel in 0..plane {
                    let weights: Vec<f64> =
                        (0..channels).map(|_| rng.gen_range(0.01..1.0)).collect();
                    let total: f64 = weights.iter().sum();
                    for (c, w) in weights.iter().enumerate() {
                        data[c * plane + voxel] = (w / total) as f32;
                    }
                }
                ProbabilityVolume::new(channels, dims, [0.6, 0.6, 1.0], [0.0; 3], data).unwrap()
            })
            .collect();

        let mean = average_probs(&members).unwrap();
        let plane = mean.voxels_per_channel();
        for voxel in 0..plane {
            let sum: f64 = (0..channels)
                .map(|c| f64::from(mean.data[c * plane + voxel]))
                .sum();
            assert!((sum - 1.0).abs() <= 1e-5, "simplex violated: {sum}");
        }

        let labels = argmax_labels(&mean);
        for voxel in 0..plane {
            let mut best_c = 0u8;
            let mut best_v = f32::NEG_INFINITY;
            for c in 0..channels {
                let v = mean.data[c * plane + voxel];
                if v > best_v {
                    best_v = v;
                    best_c = c as u8;
                }
            }
            assert_eq!(labels.data[voxel], best_c, "argmax oracle disagreement");
        }
    }

    let ids: Vec<String> = (0..105).map(|i| format!("case_{i:03}")).collect();
    let split = kfold_split(&ids, 5, 7).unwrap();
    assert!(split.folds.iter().all(|f| f.len() == 21), "105/5 must be five folds of 21");
    assert_eq!(split, kfold_split(&ids, 5, 7).unwrap(), "split must be deterministic");

    println!("[PASS criterion 9] ensemble simplex/argmax on 50 sets; 105-id split = 5 x 21, deterministic");
}

// ---------------------------------------------------------------------
// Criterion 10: end-to-end smoke on a synthetic 8-case dataset through
// the binary: preprocess -> augment -> stack -> evaluate, with
// self-evaluation of the ground truth scoring perfectly; < 2 min.
// ---------------------------------------------------------------------

fn run_smoke_pipeline(root: &std::path::Path, jobs: &str) -> (std::path::PathBuf, std::path::PathBuf) {
    let manifest = write_dataset(root, 8, [48, 40, 12], [0.9, 0.9, 1.5]);
    let prep = root.join("prep");

    let output = modaprep(&[
        "preprocess",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        prep.to_str().unwrap(),
        "--jobs",
        jobs,
    ]);
    assert!(output.status.success(), "preprocess: {}", stderr_of(&output));

    let output = modaprep(&[
        "augment",
        "--manifest",
        manifest.to_str().unwrap(),
        "--jobs",
        jobs,
    ]);
    assert!(output.status.success(), "augment: {}", stderr_of(&output));
    let expanded =
        modaprep_core::manifest::DatasetManifest::load(root.join("manifest_at.json")).unwrap();
    assert_eq!(expanded.cases.len(), 16, "8 cases must double to 16");

    let stacked = root.join("stacked");
    let output = modaprep(&[
        "stack",
        prep.to_str().unwrap(),
        "--out",
        stacked.to_str().unwrap(),
        "--jobs",
        jobs,
    ]);
    assert!(output.status.success(), "stack: {}", stderr_of(&output));

    let eval_path = root.join("evaluation.json");
    let output = modaprep(&[
        "evaluate",
        "--pred",
        prep.to_str().unwrap(),
        "--gt",
        prep.to_str().unwrap(),
        "--out",
        eval_path.to_str().unwrap(),
        "--name",
        "smoke",
        "--jobs",
        jobs,
    ]);
    assert!(output.status.success(), "evaluate: {}", stderr_of(&output));
    let stdout = stdout_of(&output);
    assert!(
        stdout.contains("1.0000±0.0000"),
        "self-evaluation must report mean Dice 1.0000±0.0000:\n{stdout}"
    );

    (eval_path, prep.join("report.json"))
}

#[test]
fn criterion_10_end_to_end_smoke() {
    let start = Instant::now();
    let dir = tempdir().unwrap();
    let (eval_path, _) = run_smoke_pipeline(dir.path(), "2");

    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&eval_path).unwrap()).unwrap();
    assert_eq!(report["aggregate"]["cases"], 8);
    assert_eq!(report["aggregate"]["mean_dice"]["mean"], 1.0);
    assert_eq!(report["aggregate"]["mean_dice"]["std"], 0.0);
    for label in ["1", "2"] {
        assert_eq!(report["aggregate"]["labels"][label]["dice"]["mean"], 1.0);
        assert_eq!(report["aggregate"]["labels"][label]["assd_mm"]["mean"], 0.0);
    }

    // The stacked volumes are the untouched exports: bit-exact inverses.
    let rebuilt = read_scalar(dir.path().join("stacked/case_000.nii.gz")).unwrap();
    let case_dir = dir.path().join("prep/case_000");
    let expected = stack_z(&modaprep_core::slice_io::import_slices(&case_dir).unwrap()).unwrap();
    assert_eq!(rebuilt, expected);

    let elapsed = start.elapsed();
    assert!(elapsed.as_secs_f64() < 120.0, "took {elapsed:?}, limit 2 min");
    println!("[PASS criterion 10] 8-case smoke: preprocess -> augment -> stack -> evaluate, Dice 1.0000±0.0000 ({elapsed:?})");
}

// ---------------------------------------------------------------------
// Criterion 11: the smoke pipeline is deterministic across worker
// counts: --jobs 1 and --jobs 8 produce byte-identical JSON reports.
// ---------------------------------------------------------------------

#[test]
fn criterion_11_determinism_across_job_counts() {
    let dir_serial = tempdir().unwrap();
    let dir_parallel = tempdir().unwrap();
    let (eval_1, report_1) = run_smoke_pipeline(dir_serial.path(), "1");
    let (eval_8, report_8) = run_smoke_pipeline(dir_parallel.path(), "8");

    let eval_bytes_1 = std::fs::read(&eval_1).unwrap();
    let eval_bytes_8 = std::fs::read(&eval_8).unwrap();
    assert_eq!(
        eval_bytes_1, eval_bytes_8,
        "evaluation reports must be byte-identical across --jobs"
    );
    let report_bytes_1 = std::fs::read(&report_1).unwrap();
    let report_bytes_8 = std::fs::read(&report_8).unwrap();
    assert_eq!(report_bytes_1, report_bytes_8);

    println!("[PASS criterion 11] --jobs 1 and --jobs 8 produce byte-identical reports");
}

// ---------------------------------------------------------------------
// Provenance: the persisted run configuration detects drift.
// ---------------------------------------------------------------------

#[test]
fn run_config_provenance_round_trip() {
    let dir = tempdir().unwrap();
    let manifest = write_dataset(dir.path(), 1, [16, 16, 4], [1.0; 3]);
    let out = dir.path().join("prep");
    let output = modaprep(&[
        "preprocess",
        "--manifest",
        manifest.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(output.status.success(), "{}", stderr_of(&output));

    let config = RunConfig::default();
    assert!(config.check_provenance(&out).unwrap());
    let mut drifted = config;
    drifted.seed = 99;
    assert!(matches!(
        drifted.check_provenance(&out),
        Err(Error::Config(_))
    ));
}
