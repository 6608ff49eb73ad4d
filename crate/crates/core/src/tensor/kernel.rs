//! Squared Euclidean distance micro-kernels.
//!
//! Every entry is produced by the same reduction regardless of which code path
//! computes it: four interleaved fused-multiply-add lanes over the leading
//! `dim - dim % 4` coordinates, combined as `(l0 + l1) + (l2 + l3)`, followed by
//! the tail coordinates folded in sequentially. The AVX2 path and the scalar
//! path therefore agree bitwise, which makes the blocked driver independent of
//! tile placement and block size. It also gives exact zeros for identical rows
//! and exact symmetry, since `(a - b)^2` and `(b - a)^2` round identically.

const LANES: usize = 4;

/// Cache tile used inside a block; has no effect on results.
const TILE_ROWS: usize = 64;
const TILE_COLS: usize = 256;

#[inline(always)]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let body = a.len() - a.len() % LANES;
    let mut acc = [0.0f64; LANES];
    for (ca, cb) in a[..body]
        .chunks_exact(LANES)
        .zip(b[..body].chunks_exact(LANES))
    {
        for l in 0..LANES {
            let d = ca[l] - cb[l];
            acc[l] = d.mul_add(d, acc[l]);
        }
    }
    fold_tail((acc[0] + acc[1]) + (acc[2] + acc[3]), &a[body..], &b[body..])
}

#[inline(always)]
fn fold_tail(mut s: f64, a: &[f64], b: &[f64]) -> f64 {
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        s = d.mul_add(d, s);
    }
    s
}

/// Fills `out[i * ld + j]` with the squared distance between row `i` of `a`
/// and row `j` of `b`. Both inputs are row-major with `dim` columns.
pub(crate) fn sq_dist_tile(a: &[f64], b: &[f64], dim: usize, out: &mut [f64], ld: usize) {
    let na = a.len().checked_div(dim).unwrap_or(0);
    let nb = b.len().checked_div(dim).unwrap_or(0);
    if dim == 0 {
        return;
    }
    for i0 in (0..na).step_by(TILE_ROWS) {
        let i1 = (i0 + TILE_ROWS).min(na);
        for j0 in (0..nb).step_by(TILE_COLS) {
            let j1 = (j0 + TILE_COLS).min(nb);
            let at = &a[i0 * dim..i1 * dim];
            let bt = &b[j0 * dim..j1 * dim];
            let off = i0 * ld + j0;
            #[cfg(target_arch = "x86_64")]
            {
                if std::arch::is_x86_feature_detected!("avx2")
                    && std::arch::is_x86_feature_detected!("fma")
                {
                    // SAFETY: the required CPU features were detected above.
                    unsafe { avx2::tile(at, bt, dim, &mut out[off..], ld) };
                    continue;
                }
            }
            scalar_tile(at, bt, dim, &mut out[off..], ld);
        }
    }
}

fn scalar_tile(a: &[f64], b: &[f64], dim: usize, out: &mut [f64], ld: usize) {
    for (i, ra) in a.chunks_exact(dim).enumerate() {
        let row = &mut out[i * ld..];
        for (j, rb) in b.chunks_exact(dim).enumerate() {
            row[j] = sq_dist(ra, rb);
        }
    }
}

#[cfg(target_arch = "x86_64")]
mod avx2 {
    use super::{fold_tail, sq_dist, LANES};
    use std::arch::x86_64::*;

    const MR: usize = 4;
    const NR: usize = 2;

    #[target_feature(enable = "avx2,fma")]
    unsafe fn hsum(v: __m256d) -> f64 {
        let mut buf = [0.0f64; LANES];
        _mm256_storeu_pd(buf.as_mut_ptr(), v);
        (buf[0] + buf[1]) + (buf[2] + buf[3])
    }

    /// Register-blocked 4x2 micro-kernel; edges fall back to the scalar
    /// reduction, which produces identical bits.
    #[target_feature(enable = "avx2,fma")]
    pub(super) unsafe fn tile(a: &[f64], b: &[f64], dim: usize, out: &mut [f64], ld: usize) {
        let na = a.len() / dim;
        let nb = b.len() / dim;
        let body = dim - dim % LANES;
        let ap = a.as_ptr();
        let bp = b.as_ptr();

        let full_i = na - na % MR;
        let full_j = nb - nb % NR;
        let mut i = 0;
        while i < full_i {
            let mut j = 0;
            while j < full_j {
                let mut acc = [_mm256_setzero_pd(); MR * NR];
                let mut t = 0;
                while t < body {
                    let vb0 = _mm256_loadu_pd(bp.add(j * dim + t));
                    let vb1 = _mm256_loadu_pd(bp.add((j + 1) * dim + t));
                    for r in 0..MR {
                        let va = _mm256_loadu_pd(ap.add((i + r) * dim + t));
                        let d0 = _mm256_sub_pd(va, vb0);
                        let d1 = _mm256_sub_pd(va, vb1);
                        acc[r * NR] = _mm256_fmadd_pd(d0, d0, acc[r * NR]);
                        acc[r * NR + 1] = _mm256_fmadd_pd(d1, d1, acc[r * NR + 1]);
                    }
                    t += LANES;
                }
                for r in 0..MR {
                    let ra = &a[(i + r) * dim..(i + r + 1) * dim];
                    for c in 0..NR {
                        let rb = &b[(j + c) * dim..(j + c + 1) * dim];
                        let s = hsum(acc[r * NR + c]);
                        out[(i + r) * ld + j + c] = fold_tail(s, &ra[body..], &rb[body..]);
                    }
                }
                j += NR;
            }
            for r in i..i + MR {
                for c in full_j..nb {
                    out[r * ld + c] = sq_dist(&a[r * dim..(r + 1) * dim], &b[c * dim..(c + 1) * dim]);
                }
            }
            i += MR;
        }
        for r in full_i..na {
            for c in 0..nb {
                out[r * ld + c] = sq_dist(&a[r * dim..(r + 1) * dim], &b[c * dim..(c + 1) * dim]);
            }
        }
    }
}
