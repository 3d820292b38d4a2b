//! Exact Euclidean distance transform on a 3D grid with anisotropic
//! voxel spacing.
//!
//! Separable lower-envelope-of-parabolas algorithm: each axis pass
//! computes, per 1D line, `min_j (f[j] + ((i - j) * w)^2)` in linear
//! time, where `w` is the physical spacing along the axis. Composing the
//! three passes yields the exact squared Euclidean distance from every
//! voxel to the nearest seed voxel, measured between voxel centers in mm.

/// Squared distance from every voxel to the nearest seed.
///
/// `seeds` marks zero-distance voxels, x-fastest layout. Voxels with no
/// seed anywhere in the grid come back as `f64::INFINITY`.
pub fn squared_distance_field(seeds: &[bool], dims: [usize; 3], spacing: [f64; 3]) -> Vec<f64> {
    let [nx, ny, nz] = dims;
    assert_eq!(seeds.len(), nx * ny * nz, "seed grid does not match dims");

    let mut field: Vec<f64> = seeds
        .iter()
        .map(|&s| if s { 0.0 } else { f64::INFINITY })
        .collect();

    let mut line = vec![0.0f64; nx.max(ny).max(nz)];
    let mut out = vec![0.0f64; line.len()];
    let mut scratch = EnvelopeScratch::new(line.len());

    // x pass
    for z in 0..nz {
        for y in 0..ny {
            let base = nx * (y + ny * z);
            line[..nx].copy_from_slice(&field[base..base + nx]);
            envelope_1d(&line[..nx], spacing[0], &mut out[..nx], &mut scratch);
            field[base..base + nx].copy_from_slice(&out[..nx]);
        }
    }
    // y pass
    for z in 0..nz {
        for x in 0..nx {
            for y in 0..ny {
                line[y] = field[x + nx * (y + ny * z)];
            }
            envelope_1d(&line[..ny], spacing[1], &mut out[..ny], &mut scratch);
            for y in 0..ny {
                field[x + nx * (y + ny * z)] = out[y];
            }
        }
    }
    // z pass
    for y in 0..ny {
        for x in 0..nx {
            for z in 0..nz {
                line[z] = field[x + nx * (y + ny * z)];
            }
            envelope_1d(&line[..nz], spacing[2], &mut out[..nz], &mut scratch);
            for z in 0..nz {
                field[x + nx * (y + ny * z)] = out[z];
            }
        }
    }

    field
}

struct EnvelopeScratch {
    // parabola apex indices and boundaries of the lower envelope
    apex: Vec<usize>,
    boundary: Vec<f64>,
}

impl EnvelopeScratch {
    fn new(n: usize) -> Self {
        Self {
            apex: vec![0; n],
            boundary: vec![0.0; n + 1],
        }
    }
}

// 1D transform: out[i] = min_j (f[j] + ((i - j) * w)^2). Parabolas with
// infinite height never enter the envelope; an all-infinite line stays
// infinite.
fn envelope_1d(f: &[f64], w: f64, out: &mut [f64], scratch: &mut EnvelopeScratch) {
    let n = f.len();
    let w2 = w * w;
    let apex = &mut scratch.apex;
    let boundary = &mut scratch.boundary;

    let mut k = 0usize; // index of the rightmost envelope parabola
    let mut started = false;

    for q in 0..n {
        if f[q].is_infinite() {
            continue;
        }
        if !started {
            apex[0] = q;
            boundary[0] = f64::NEG_INFINITY;
            boundary[1] = f64::INFINITY;
            started = true;
            continue;
        }
        // Intersection of the parabola at q with the rightmost envelope
        // parabola; pop parabolas it dominates.
        loop {
            let p = apex[k];
            let s = ((f[q] + (q as f64 * q as f64) * w2)
                - (f[p] + (p as f64 * p as f64) * w2))
                / (2.0 * w2 * (q as f64 - p as f64));
            if s <= boundary[k] {
                if k == 0 {
                    apex[0] = q;
                    boundary[0] = f64::NEG_INFINITY;
                    boundary[1] = f64::INFINITY;
                    break;
                }
                k -= 1;
            } else {
                k += 1;
                apex[k] = q;
                boundary[k] = s;
                boundary[k + 1] = f64::INFINITY;
                break;
            }
        }
    }

    if !started {
        out[..n].copy_from_slice(&f[..n]);
        return;
    }

    let mut k = 0usize;
    for (i, slot) in out.iter_mut().enumerate().take(n) {
        while boundary[k + 1] < i as f64 {
            k += 1;
        }
        let p = apex[k];
        let d = i as f64 - p as f64;
        *slot = f[p] + d * d * w2;
    }
}
