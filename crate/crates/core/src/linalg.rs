//! Dense complex linear algebra for the zero-forcing path: Gram matrices,
//! Cholesky factorization of Hermitian positive definite matrices, and the
//! inverse/trace/condition quantities derived from it.
//!
//! Rectangular matrices are column-major; square Hermitian matrices are
//! row-major `n x n`.

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Condition number above which a Gram matrix is treated as singular.
pub const CONDITION_LIMIT: f64 = 1e12;

/// `G^T conj(G)` for a column-major `m x k` matrix, as a row-major `k x k`
/// Hermitian matrix: entry `(a, b)` is `sum_i g[i, a] * conj(g[i, b])`.
pub fn gram_transpose_conj(g: &[Complex64], m: usize, k: usize) -> Vec<Complex64> {
    assert_eq!(g.len(), m * k);
    if m == 0 || k == 0 {
        return vec![Complex64::new(0.0, 0.0); k * k];
    }
    // Row a of `h` is [Re g_a | Im g_a], so Re(gram) = h h^T and, with
    // T = Im(G)^T Re(G), Im(gram) = T - T^T.
    let mut h = Vec::with_capacity(2 * m * k);
    for col in g.chunks_exact(m) {
        h.extend(col.iter().map(|c| c.re));
        h.extend(col.iter().map(|c| c.im));
    }
    let row = 2 * m as isize;
    let mut re = vec![0.0f64; k * k];
    let mut t = vec![0.0f64; k * k];
    // SAFETY: `h` is k x 2m row-major; the real block starts at column 0 and
    // the imaginary block at column m, so all strided reads stay inside it.
    unsafe {
        let hp = h.as_ptr();
        matrixmultiply::dgemm(
            k,
            2 * m,
            k,
            1.0,
            hp,
            row,
            1,
            hp,
            1,
            row,
            0.0,
            re.as_mut_ptr(),
            k as isize,
            1,
        );
        matrixmultiply::dgemm(
            k,
            m,
            k,
            1.0,
            hp.add(m),
            row,
            1,
            hp,
            1,
            row,
            0.0,
            t.as_mut_ptr(),
            k as isize,
            1,
        );
    }
    let mut out = Vec::with_capacity(k * k);
    for a in 0..k {
        for b in 0..k {
            let re_ab = if a <= b { re[a * k + b] } else { re[b * k + a] };
            out.push(Complex64::new(re_ab, t[a * k + b] - t[b * k + a]));
        }
    }
    out
}

/// `A^T conj(B)` for column-major `m x ka` and `m x kb` matrices, as a
/// row-major `ka x kb` matrix.
pub fn cross_transpose_conj(
    a: &[Complex64],
    b: &[Complex64],
    m: usize,
    ka: usize,
    kb: usize,
) -> Vec<Complex64> {
    assert_eq!(a.len(), m * ka);
    assert_eq!(b.len(), m * kb);
    let mut re = vec![0.0f64; ka * kb];
    let mut im = vec![0.0f64; ka * kb];
    if m == 0 || ka == 0 || kb == 0 {
        return vec![Complex64::new(0.0, 0.0); ka * kb];
    }
    let pa = a.as_ptr() as *const f64;
    let pb = b.as_ptr() as *const f64;
    let col_a = 2 * m as isize;
    // Real parts sit at even f64 offsets, imaginary parts at odd ones.
    // SAFETY: Complex64 is repr(C) {re, im}; every (row, col) index reached
    // by the strides below stays inside `a`/`b`, and the outputs are
    // distinct, correctly sized buffers.
    unsafe {
        let (ar, ai) = (pa, pa.add(1));
        let (br, bi) = (pb, pb.add(1));
        // Re = Ar^T Br + Ai^T Bi
        matrixmultiply::dgemm(
            ka,
            m,
            kb,
            1.0,
            ar,
            col_a,
            2,
            br,
            2,
            col_a,
            0.0,
            re.as_mut_ptr(),
            kb as isize,
            1,
        );
        matrixmultiply::dgemm(
            ka,
            m,
            kb,
            1.0,
            ai,
            col_a,
            2,
            bi,
            2,
            col_a,
            1.0,
            re.as_mut_ptr(),
            kb as isize,
            1,
        );
        // Im = Ai^T Br - Ar^T Bi
        matrixmultiply::dgemm(
            ka,
            m,
            kb,
            1.0,
            ai,
            col_a,
            2,
            br,
            2,
            col_a,
            0.0,
            im.as_mut_ptr(),
            kb as isize,
            1,
        );
        matrixmultiply::dgemm(
            ka,
            m,
            kb,
            -1.0,
            ar,
            col_a,
            2,
            bi,
            2,
            col_a,
            1.0,
            im.as_mut_ptr(),
            kb as isize,
            1,
        );
    }
    re.into_iter()
        .zip(im)
        .map(|(r, i)| Complex64::new(r, i))
        .collect()
}

/// `sum a_p * conj(b_p)` on split storage.
#[inline]
fn dot_conj(ar: &[f64], ai: &[f64], br: &[f64], bi: &[f64]) -> (f64, f64) {
    let n = ar.len();
    let (ar, ai, br, bi) = (&ar[..n], &ai[..n], &br[..n], &bi[..n]);
    let mut re = [0.0f64; 4];
    let mut im = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        for l in 0..4 {
            let p = 4 * c + l;
            re[l] += ar[p] * br[p] + ai[p] * bi[p];
            im[l] += ai[p] * br[p] - ar[p] * bi[p];
        }
    }
    let mut r = (re[0] + re[1]) + (re[2] + re[3]);
    let mut i = (im[0] + im[1]) + (im[2] + im[3]);
    for p in 4 * chunks..n {
        r += ar[p] * br[p] + ai[p] * bi[p];
        i += ai[p] * br[p] - ar[p] * bi[p];
    }
    (r, i)
}

/// `sum a_p * b_p` on split storage.
#[inline]
fn dot(ar: &[f64], ai: &[f64], br: &[f64], bi: &[f64]) -> (f64, f64) {
    let n = ar.len();
    let (ar, ai, br, bi) = (&ar[..n], &ai[..n], &br[..n], &bi[..n]);
    let mut re = [0.0f64; 4];
    let mut im = [0.0f64; 4];
    let chunks = n / 4;
    for c in 0..chunks {
        for l in 0..4 {
            let p = 4 * c + l;
            re[l] += ar[p] * br[p] - ai[p] * bi[p];
            im[l] += ar[p] * bi[p] + ai[p] * br[p];
        }
    }
    let mut r = (re[0] + re[1]) + (re[2] + re[3]);
    let mut i = (im[0] + im[1]) + (im[2] + im[3]);
    for p in 4 * chunks..n {
        r += ar[p] * br[p] - ai[p] * bi[p];
        i += ar[p] * bi[p] + ai[p] * br[p];
    }
    (r, i)
}

/// Block size of the blocked factorization and inversion.
const BLOCK: usize = 64;

/// Strided view of a split-storage complex matrix.
#[derive(Clone, Copy)]
struct View {
    re: *const f64,
    im: *const f64,
    rs: isize,
    cs: isize,
}

impl View {
    /// Row-major plane pair with leading dimension `ld`, starting at `(r, c)`.
    ///
    /// # Safety
    /// `(r, c)` must lie inside both planes.
    unsafe fn at(re: *const f64, im: *const f64, ld: usize, r: usize, c: usize) -> View {
        let off = r * ld + c;
        View {
            re: re.add(off),
            im: im.add(off),
            rs: ld as isize,
            cs: 1,
        }
    }

    fn t(self) -> View {
        View {
            rs: self.cs,
            cs: self.rs,
            ..self
        }
    }
}

/// `C += alpha * op(A) op(B)` with `op` optional conjugation, `A` m x k,
/// `B` k x n, all in split storage.
///
/// # Safety
/// The views must describe in-bounds regions, and `C` must not overlap `A`
/// or `B`.
#[allow(clippy::too_many_arguments)]
unsafe fn zgemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: View,
    conj_a: bool,
    b: View,
    conj_b: bool,
    c: View,
) {
    if m == 0 || k == 0 || n == 0 {
        return;
    }
    let sa = if conj_a { -1.0 } else { 1.0 };
    let sb = if conj_b { -1.0 } else { 1.0 };
    let (cr, ci) = (c.re as *mut f64, c.im as *mut f64);
    matrixmultiply::dgemm(
        m, k, n, alpha, a.re, a.rs, a.cs, b.re, b.rs, b.cs, 1.0, cr, c.rs, c.cs,
    );
    matrixmultiply::dgemm(
        m,
        k,
        n,
        -alpha * sa * sb,
        a.im,
        a.rs,
        a.cs,
        b.im,
        b.rs,
        b.cs,
        1.0,
        cr,
        c.rs,
        c.cs,
    );
    matrixmultiply::dgemm(
        m,
        k,
        n,
        alpha * sb,
        a.re,
        a.rs,
        a.cs,
        b.im,
        b.rs,
        b.cs,
        1.0,
        ci,
        c.rs,
        c.cs,
    );
    matrixmultiply::dgemm(
        m,
        k,
        n,
        alpha * sa,
        a.im,
        a.rs,
        a.cs,
        b.re,
        b.rs,
        b.cs,
        1.0,
        ci,
        c.rs,
        c.cs,
    );
}

/// Lower-triangular factor `L` with `A = L L^H`, stored split into real and
/// imaginary row-major planes.
#[derive(Debug, Clone)]
pub struct Cholesky {
    n: usize,
    re: Vec<f64>,
    im: Vec<f64>,
}

impl Cholesky {
    /// Factors a row-major Hermitian matrix; only the lower triangle is read.
    /// A non-positive pivot is reported as an infinitely ill-conditioned
    /// matrix.
    pub fn factor(a: &[Complex64], n: usize) -> Result<Self> {
        assert_eq!(a.len(), n * n);
        let mut re = vec![0.0; n * n];
        let mut im = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                re[i * n + j] = a[i * n + j].re;
                im[i * n + j] = a[i * n + j].im;
            }
        }
        // Right-looking by column blocks: factor the panel, then subtract
        // its outer product from the trailing lower triangle.
        for k0 in (0..n).step_by(BLOCK) {
            let k1 = (k0 + BLOCK).min(n);
            for i in k0..n {
                for j in k0..k1.min(i + 1) {
                    let (sr, si) = dot_conj(
                        &re[i * n + k0..i * n + j],
                        &im[i * n + k0..i * n + j],
                        &re[j * n + k0..j * n + j],
                        &im[j * n + k0..j * n + j],
                    );
                    let (vr, vi) = (re[i * n + j] - sr, im[i * n + j] - si);
                    if i == j {
                        if !(vr > 0.0) || !vr.is_finite() {
                            return Err(Error::Singular {
                                condition: f64::INFINITY,
                            });
                        }
                        re[i * n + i] = vr.sqrt();
                        im[i * n + i] = 0.0;
                    } else {
                        let d = re[j * n + j];
                        re[i * n + j] = vr / d;
                        im[i * n + j] = vi / d;
                    }
                }
            }
            for r0 in (k1..n).step_by(BLOCK) {
                let r1 = (r0 + BLOCK).min(n);
                let (pr, pi) = (re.as_mut_ptr(), im.as_mut_ptr());
                // SAFETY: the panel columns k0..k1 and the target columns
                // k1..r1 are disjoint; all regions lie inside the n x n planes.
                unsafe {
                    let panel = View::at(pr, pi, n, r0, k0);
                    let rows = View::at(pr, pi, n, k1, k0);
                    let target = View::at(pr, pi, n, r0, k1);
                    zgemm(
                        r1 - r0,
                        k1 - k0,
                        r1 - k1,
                        -1.0,
                        panel,
                        false,
                        rows.t(),
                        true,
                        target,
                    );
                }
            }
        }
        // The block updates also touched the strict upper triangle.
        for i in 0..n {
            for j in i + 1..n {
                re[i * n + j] = 0.0;
                im[i * n + j] = 0.0;
            }
        }
        Ok(Cholesky { n, re, im })
    }

    /// `L^{-1}` as split row-major planes, by blocked forward substitution.
    fn inverse_factor(&self) -> (Vec<f64>, Vec<f64>) {
        let n = self.n;
        let (lr, li) = (&self.re, &self.im);
        let mut xr = vec![0.0; n * n];
        let mut xi = vec![0.0; n * n];
        for r0 in (0..n).step_by(BLOCK) {
            let r1 = (r0 + BLOCK).min(n);
            for i in r0..r1 {
                xr[i * n + i] = 1.0;
            }
            // X[r0..r1, ..r0] = -L[r0..r1, ..r0] X[..r0, ..r0]
            let (pr, pi) = (xr.as_mut_ptr(), xi.as_mut_ptr());
            // SAFETY: rows ..r0 and rows r0..r1 of X are disjoint; L is a
            // separate allocation.
            unsafe {
                let l = View::at(lr.as_ptr(), li.as_ptr(), n, r0, 0);
                zgemm(
                    r1 - r0,
                    r0,
                    r0,
                    -1.0,
                    l,
                    false,
                    View::at(pr, pi, n, 0, 0),
                    false,
                    View::at(pr, pi, n, r0, 0),
                );
            }
            // then solve with the diagonal block, row by row
            for i in r0..r1 {
                for p in r0..i {
                    let (a, b) = (lr[i * n + p], li[i * n + p]);
                    let (head, tail) = xr.split_at_mut(i * n);
                    let (yr, dr) = (&head[p * n..p * n + r1], &mut tail[..r1]);
                    let (head_i, tail_i) = xi.split_at_mut(i * n);
                    let (yi, di) = (&head_i[p * n..p * n + r1], &mut tail_i[..r1]);
                    for c in 0..r1 {
                        dr[c] -= a * yr[c] - b * yi[c];
                        di[c] -= a * yi[c] + b * yr[c];
                    }
                }
                let d = 1.0 / lr[i * n + i];
                for c in 0..r1 {
                    xr[i * n + c] *= d;
                    xi[i * n + c] *= d;
                }
            }
        }
        (xr, xi)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, b: &mut [Complex64]) {
        let n = self.n;
        assert_eq!(b.len(), n);
        let mut yr: Vec<f64> = b.iter().map(|c| c.re).collect();
        let mut yi: Vec<f64> = b.iter().map(|c| c.im).collect();
        // L y = b
        for i in 0..n {
            let (sr, si) = dot(
                &self.re[i * n..i * n + i],
                &self.im[i * n..i * n + i],
                &yr[..i],
                &yi[..i],
            );
            let d = self.re[i * n + i];
            yr[i] = (yr[i] - sr) / d;
            yi[i] = (yi[i] - si) / d;
        }
        // L^H x = y, sweeping rows of L from the bottom
        for i in (0..n).rev() {
            let d = self.re[i * n + i];
            let (xr, xi) = (yr[i] / d, yi[i] / d);
            yr[i] = xr;
            yi[i] = xi;
            let (lr, li) = (&self.re[i * n..i * n + i], &self.im[i * n..i * n + i]);
            for p in 0..i {
                // y_p -= conj(L[i][p]) * x_i
                yr[p] -= lr[p] * xr + li[p] * xi;
                yi[p] -= lr[p] * xi - li[p] * xr;
            }
        }
        for (c, (r, i)) in b.iter_mut().zip(yr.into_iter().zip(yi)) {
            *c = Complex64::new(r, i);
        }
    }

    /// `Tr(A^{-1}) = ||L^{-1}||_F^2`.
    pub fn trace_inverse(&self) -> f64 {
        let (xr, xi) = self.inverse_factor();
        xr.iter().chain(&xi).map(|v| v * v).sum()
    }

    /// Full inverse `L^{-H} L^{-1}` as a row-major Hermitian matrix.
    pub fn inverse(&self) -> Vec<Complex64> {
        let n = self.n;
        let (xr, xi) = self.inverse_factor();
        let mut ir = vec![0.0; n * n];
        let mut ii = vec![0.0; n * n];
        // SAFETY: the output planes are separate allocations of size n x n.
        unsafe {
            let x = View::at(xr.as_ptr(), xi.as_ptr(), n, 0, 0);
            zgemm(
                n,
                n,
                n,
                1.0,
                x.t(),
                true,
                x,
                false,
                View::at(ir.as_mut_ptr(), ii.as_mut_ptr(), n, 0, 0),
            );
        }
        ir.into_iter()
            .zip(ii)
            .map(|(r, i)| Complex64::new(r, i))
            .collect()
    }

    /// Estimate of `||A^{-1}||_1` by Hager's method (LAPACK `xLACON` style),
    /// using only solves with the factor. Never exceeds the true norm.
    pub fn inverse_norm1_estimate(&self) -> f64 {
        let n = self.n;
        if n == 1 {
            let d = self.re[0];
            return 1.0 / (d * d);
        }
        let sign = |y: &[Complex64]| -> Vec<Complex64> {
            y.iter()
                .map(|c| {
                    let a = c.norm();
                    if a > 0.0 {
                        c / a
                    } else {
                        Complex64::new(1.0, 0.0)
                    }
                })
                .collect()
        };
        let argmax = |z: &[Complex64]| -> (usize, f64) {
            z.iter()
                .enumerate()
                .map(|(i, c)| (i, c.norm()))
                .fold((0, -1.0), |acc, v| if v.1 > acc.1 { v } else { acc })
        };

        let mut y = vec![Complex64::new(1.0 / n as f64, 0.0); n];
        self.solve_in_place(&mut y);
        let mut best: f64 = y.iter().map(|c| c.norm()).sum();
        let mut z = sign(&y);
        self.solve_in_place(&mut z);
        let (mut j, _) = argmax(&z);
        for _ in 0..4 {
            let mut y = vec![Complex64::new(0.0, 0.0); n];
            y[j] = Complex64::new(1.0, 0.0);
            self.solve_in_place(&mut y);
            let est: f64 = y.iter().map(|c| c.norm()).sum();
            if est <= best {
                break;
            }
            best = est;
            let mut z = sign(&y);
            self.solve_in_place(&mut z);
            let (next, zmax) = argmax(&z);
            if next == j || zmax <= z[j].re {
                break;
            }
            j = next;
        }
        // Higham's alternating-sign test vector guards against the rare
        // cases where the iteration stalls well below the norm.
        let mut v: Vec<Complex64> = (0..n)
            .map(|i| {
                let s = if i % 2 == 0 { 1.0 } else { -1.0 };
                Complex64::new(s * (1.0 + i as f64 / (n - 1) as f64), 0.0)
            })
            .collect();
        self.solve_in_place(&mut v);
        let alt = 2.0 * v.iter().map(|c| c.norm()).sum::<f64>() / (3.0 * n as f64);
        best.max(alt)
    }
}

/// Maximum absolute column sum of a row-major `n x n` matrix.
pub fn norm1(a: &[Complex64], n: usize) -> f64 {
    (0..n)
        .map(|j| (0..n).map(|i| a[i * n + j].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Factors a Hermitian positive definite matrix and rejects it when the
/// 1-norm condition estimate exceeds [`CONDITION_LIMIT`].
pub fn factor_guarded(a: &[Complex64], n: usize) -> Result<(Cholesky, f64)> {
    let chol = Cholesky::factor(a, n)?;
    let condition = norm1(a, n) * chol.inverse_norm1_estimate();
    if !(condition <= CONDITION_LIMIT) {
        return Err(Error::Singular { condition });
    }
    Ok((chol, condition))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<Complex64> {
        (0..rows * cols)
            .map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
            .collect()
    }

    /// Column-major `m x k` entry-by-entry reference.
    fn naive_gram(g: &[Complex64], m: usize, k: usize) -> Vec<Complex64> {
        let mut out = vec![c(0.0, 0.0); k * k];
        for a in 0..k {
            for b in 0..k {
                out[a * k + b] = (0..m).map(|i| g[a * m + i] * g[b * m + i].conj()).sum();
            }
        }
        out
    }

    fn matmul(a: &[Complex64], b: &[Complex64], n: usize) -> Vec<Complex64> {
        let mut out = vec![c(0.0, 0.0); n * n];
        for i in 0..n {
            for j in 0..n {
                out[i * n + j] = (0..n).map(|p| a[i * n + p] * b[p * n + j]).sum();
            }
        }
        out
    }

    #[test]
    fn gram_matches_naive() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for (m, k) in [(1, 1), (5, 3), (37, 11), (64, 64)] {
            let g = random_matrix(&mut rng, m, k);
            let fast = gram_transpose_conj(&g, m, k);
            let slow = naive_gram(&g, m, k);
            for (x, y) in fast.iter().zip(&slow) {
                assert!((x - y).norm() < 1e-12, "{m}x{k}");
            }
        }
    }

    #[test]
    fn cholesky_solve_and_inverse() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for n in [1, 2, 3, 7, 20, 33, 64, 101] {
            let g = random_matrix(&mut rng, n + 5, n);
            let a = gram_transpose_conj(&g, n + 5, n);
            let chol = Cholesky::factor(&a, n).unwrap();
            let inv = chol.inverse();
            let prod = matmul(&a, &inv, n);
            for i in 0..n {
                for j in 0..n {
                    let want = if i == j { 1.0 } else { 0.0 };
                    assert!((prod[i * n + j] - c(want, 0.0)).norm() < 1e-10, "n = {n}");
                }
            }
            let tr: f64 = (0..n).map(|i| inv[i * n + i].re).sum();
            assert!(((chol.trace_inverse() - tr) / tr).abs() < 1e-12);
        }
    }

    #[test]
    fn singular_matrix_is_rejected() {
        // rank one: g g^H
        let g = [c(1.0, 0.5), c(2.0, -1.0)];
        let a: Vec<Complex64> = (0..2)
            .flat_map(|i| (0..2).map(move |j| g[i] * g[j].conj()))
            .collect();
        assert!(matches!(factor_guarded(&a, 2), Err(Error::Singular { .. })));
        // nearly singular diagonal
        let a = vec![c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1e-13, 0.0)];
        match factor_guarded(&a, 2) {
            Err(Error::Singular { condition }) => assert!((condition / 1e13 - 1.0).abs() < 1e-9),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn condition_estimate_is_a_tight_lower_bound() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for n in [2, 5, 16, 40] {
            for _ in 0..5 {
                let g = random_matrix(&mut rng, n + 2, n);
                let a = gram_transpose_conj(&g, n + 2, n);
                let chol = Cholesky::factor(&a, n).unwrap();
                let exact = norm1(&chol.inverse(), n);
                let est = chol.inverse_norm1_estimate();
                assert!(est <= exact * (1.0 + 1e-10), "{est} > {exact}");
                assert!(est >= exact / 3.0, "n = {n}: {est} vs {exact}");
            }
        }
    }

    proptest! {
        #[test]
        fn trace_inverse_scales_inversely(seed in 0u64..1000, s in 0.1f64..10.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let g = random_matrix(&mut rng, 6, 3);
            let scaled: Vec<Complex64> = g.iter().map(|x| x * s).collect();
            let t1 = Cholesky::factor(&gram_transpose_conj(&g, 6, 3), 3).unwrap().trace_inverse();
            let t2 = Cholesky::factor(&gram_transpose_conj(&scaled, 6, 3), 3).unwrap().trace_inverse();
            prop_assert!((t2 * s * s / t1 - 1.0).abs() < 1e-9);
        }
    }
}
