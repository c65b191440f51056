//! Dense products for batched passes, backed by `matrixmultiply`.
//!
//! All matrices are row-major. `matrixmultiply` is single-threaded and picks
//! its SIMD kernel once per process, so repeated runs on one machine produce
//! identical bits.

/// `z += x * w` with `x: batch x n_in`, `w: n_in x n_out`, `z: batch x n_out`.
pub(crate) fn gemm_acc(x: &[f64], w: &[f64], z: &mut [f64], batch: usize, n_in: usize, n_out: usize) {
    assert!(x.len() == batch * n_in && w.len() == n_in * n_out && z.len() == batch * n_out);
    // SAFETY: the asserted lengths cover every element addressed by the
    // dimensions and strides below; `z` is exclusively borrowed.
    unsafe {
        matrixmultiply::dgemm(
            batch,
            n_in,
            n_out,
            1.0,
            x.as_ptr(),
            n_in as isize,
            1,
            w.as_ptr(),
            n_out as isize,
            1,
            1.0,
            z.as_mut_ptr(),
            n_out as isize,
            1,
        );
    }
}

/// `g += x^T * d` with `x: batch x n_in`, `d: batch x n_out`, `g: n_in x n_out`.
pub(crate) fn gemm_tn_acc(x: &[f64], d: &[f64], g: &mut [f64], batch: usize, n_in: usize, n_out: usize) {
    assert!(x.len() == batch * n_in && d.len() == batch * n_out && g.len() == n_in * n_out);
    // SAFETY: as above; `x` is read through transposed strides.
    unsafe {
        matrixmultiply::dgemm(
            n_in,
            batch,
            n_out,
            1.0,
            x.as_ptr(),
            1,
            n_in as isize,
            d.as_ptr(),
            n_out as isize,
            1,
            1.0,
            g.as_mut_ptr(),
            n_out as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    #[test]
    fn products_match_naive_loops() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for &(batch, n_in, n_out) in &[(64, 8, 64), (7, 5, 9), (4, 64, 8), (1, 1, 1), (13, 64, 64)] {
            let x = random(batch * n_in, &mut rng);
            let w = random(n_in * n_out, &mut rng);
            let z0 = random(batch * n_out, &mut rng);
            let mut z = z0.clone();
            gemm_acc(&x, &w, &mut z, batch, n_in, n_out);
            for b in 0..batch {
                for j in 0..n_out {
                    let mut s = z0[b * n_out + j];
                    for i in 0..n_in {
                        s += x[b * n_in + i] * w[i * n_out + j];
                    }
                    assert!((z[b * n_out + j] - s).abs() < 1e-12);
                }
            }

            let d = random(batch * n_out, &mut rng);
            let g0 = random(n_in * n_out, &mut rng);
            let mut g = g0.clone();
            gemm_tn_acc(&x, &d, &mut g, batch, n_in, n_out);
            for i in 0..n_in {
                for j in 0..n_out {
                    let mut s = g0[i * n_out + j];
                    for b in 0..batch {
                        s += x[b * n_in + i] * d[b * n_out + j];
                    }
                    assert!((g[i * n_out + j] - s).abs() < 1e-12);
                }
            }
        }
    }
}
