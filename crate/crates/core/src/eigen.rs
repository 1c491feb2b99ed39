//! Symmetric eigensolver behind every spectrum that feeds an exponent.
//!
//! Cyclic Jacobi with the classic threshold schedule. Each step is an exact
//! plane rotation accumulated straight into the frame, so an eigenvalue can
//! never detach from its eigenvector. The general-purpose solver this
//! replaced returned orthogonal frames whose pairing with the eigenvalues
//! was wrong for near-diagonal matrices of wide dynamic range, the exact
//! shape of a rotated thermal state in the number basis.

use nalgebra::{DMatrix, DVector};

/// Eigenvalues (unsorted) with the orthogonal frame carrying them, columns
/// matched to positions. The input must be square and finite; it is
/// symmetrized before iteration, so roundoff-level asymmetry is tolerated.
pub(crate) fn jacobi_eigen(a: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "eigensolver needs a square matrix");
    assert!(
        a.iter().all(|x| x.is_finite()),
        "eigensolver needs finite entries"
    );
    if n == 0 {
        return (DVector::zeros(0), DMatrix::identity(0, 0));
    }
    // upper triangle of the working matrix; the lower one goes stale
    let mut m = vec![0.0_f64; n * n];
    for i in 0..n {
        for j in i..n {
            m[i * n + j] = 0.5 * (a[(i, j)] + a[(j, i)]);
        }
    }
    // frame stored transposed: row k is eigenvector k, so a rotation mixes
    // two contiguous rows
    let mut vt = vec![0.0_f64; n * n];
    for k in 0..n {
        vt[k * n + k] = 1.0;
    }
    let mut d: Vec<f64> = (0..n).map(|k| m[k * n + k]).collect();
    let mut cumulative = d.clone();
    let mut shifts = vec![0.0_f64; n];
    for sweep in 0..50 {
        let mut off = 0.0_f64;
        for p in 0..n {
            for q in p + 1..n {
                off += m[p * n + q].abs();
            }
        }
        if off == 0.0 {
            let values = DVector::from_vec(d);
            let frame = DMatrix::from_fn(n, n, |r, c| vt[c * n + r]);
            return (values, frame);
        }
        let thresh = if sweep < 3 {
            0.2 * off / (n * n) as f64
        } else {
            0.0
        };
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = m[p * n + q];
                let g = 100.0 * apq.abs();
                // dust far below both diagonal entries is finished
                if sweep > 3
                    && d[p].abs() + g == d[p].abs()
                    && d[q].abs() + g == d[q].abs()
                {
                    m[p * n + q] = 0.0;
                    continue;
                }
                if apq.abs() <= thresh {
                    continue;
                }
                let h = d[q] - d[p];
                let t = if h.abs() + g == h.abs() {
                    apq / h
                } else {
                    let theta = 0.5 * h / apq;
                    let t = 1.0 / (theta.abs() + (1.0 + theta * theta).sqrt());
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);
                let shift = t * apq;
                shifts[p] -= shift;
                shifts[q] += shift;
                d[p] -= shift;
                d[q] += shift;
                m[p * n + q] = 0.0;
                for j in 0..p {
                    rotate(&mut m, j * n + p, j * n + q, s, tau);
                }
                for j in p + 1..q {
                    rotate(&mut m, p * n + j, j * n + q, s, tau);
                }
                for j in q + 1..n {
                    rotate(&mut m, p * n + j, q * n + j, s, tau);
                }
                let (head, tail) = vt.split_at_mut(q * n);
                let rp = &mut head[p * n..p * n + n];
                let rq = &mut tail[..n];
                for (x, y) in rp.iter_mut().zip(rq.iter_mut()) {
                    let (gx, gy) = (*x, *y);
                    *x = gx - s * (gy + gx * tau);
                    *y = gy + s * (gx - gy * tau);
                }
            }
        }
        // fold the accumulated first-order shifts back into the diagonal
        for k in 0..n {
            cumulative[k] += shifts[k];
            d[k] = cumulative[k];
            shifts[k] = 0.0;
        }
    }
    panic!("jacobi eigensolver did not converge in 50 sweeps");
}

#[inline]
fn rotate(arr: &mut [f64], i: usize, j: usize, s: f64, tau: f64) {
    let g = arr[i];
    let h = arr[j];
    arr[i] = g - s * (h + g * tau);
    arr[j] = h + s * (g - h * tau);
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn reconstruction_gap(
        a: &DMatrix<f64>,
        d: &DVector<f64>,
        v: &DMatrix<f64>,
    ) -> f64 {
        (v * DMatrix::from_diagonal(d) * v.transpose() - a).amax()
    }

    fn orthogonality_gap(v: &DMatrix<f64>) -> f64 {
        let n = v.nrows();
        (v.transpose() * v - DMatrix::<f64>::identity(n, n)).amax()
    }

    #[test]
    fn diagonal_input_comes_back_exactly() {
        let diag = [0.7, 1e-3, 0.0, 3.0e-20, 0.2];
        let a = DMatrix::from_diagonal(&DVector::from_row_slice(&diag));
        let (d, v) = jacobi_eigen(&a);
        for (k, &want) in diag.iter().enumerate() {
            assert_eq!(d[k], want);
        }
        assert_eq!(v, DMatrix::identity(5, 5));
    }

    #[test]
    fn random_dense_matrices_reconstruct() {
        let mut rng = ChaCha12Rng::seed_from_u64(4021);
        for n in [1usize, 2, 3, 7, 24, 61] {
            let raw = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
            let a = &raw + raw.transpose();
            let (d, v) = jacobi_eigen(&a);
            let scale = a.amax().max(1.0);
            assert!(
                orthogonality_gap(&v) < 1e-13,
                "frame not orthogonal at n = {n}"
            );
            assert!(
                reconstruction_gap(&a, &d, &v) < 1e-13 * scale,
                "reconstruction failed at n = {n}"
            );
            let trace: f64 = (0..n).map(|k| a[(k, k)]).sum();
            let sum: f64 = d.iter().sum();
            assert!((trace - sum).abs() < 1e-12 * scale * n as f64);
        }
    }

    /// Geometric diagonal spanning twenty-odd orders of magnitude plus
    /// off-diagonal dust. This is the shape that broke the solver this
    /// module replaced: the pairing of values to vectors must survive.
    #[test]
    fn wide_dynamic_range_with_dust_keeps_the_pairing() {
        let mut rng = ChaCha12Rng::seed_from_u64(518);
        let n = 120usize;
        let mut a = DMatrix::zeros(n, n);
        for k in 0..n {
            a[(k, k)] = 0.7 * 0.65_f64.powi((k % 40) as i32);
        }
        for i in 0..n {
            for j in i + 1..n {
                let dust = 1e-17 * rng.gen_range(-1.0..1.0_f64);
                a[(i, j)] = dust;
                a[(j, i)] = dust;
            }
        }
        let (d, v) = jacobi_eigen(&a);
        assert!(orthogonality_gap(&v) < 1e-13);
        assert!(reconstruction_gap(&a, &d, &v) < 1e-14);
    }

    #[test]
    fn clustered_eigenvalues_stay_consistent() {
        let mut rng = ChaCha12Rng::seed_from_u64(99);
        let n = 12usize;
        let raw = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let q = (&raw + raw.transpose()).symmetric_eigen().eigenvectors;
        assert!(orthogonality_gap(&q) < 1e-12, "test frame unusable");
        let mut spread = Vec::with_capacity(n);
        for k in 0..n {
            let base = if k < 6 { 1.0 } else { 0.25 };
            spread.push(base * (1.0 + 1e-14 * k as f64));
        }
        let a = &q
            * DMatrix::from_diagonal(&DVector::from_vec(spread))
            * q.transpose();
        let (d, v) = jacobi_eigen(&a);
        assert!(orthogonality_gap(&v) < 1e-13);
        assert!(reconstruction_gap(&a, &d, &v) < 1e-13);
    }

    #[test]
    fn zero_matrix_is_fine() {
        let a = DMatrix::zeros(4, 4);
        let (d, v) = jacobi_eigen(&a);
        assert!(d.iter().all(|&x| x == 0.0));
        assert_eq!(v, DMatrix::identity(4, 4));
    }
}
