//! Real Schur decomposition by Hessenberg reduction and Francis double-shift
//! QR, block reordering, and the eigenvalue entry point built on it.

use num_complex::Complex64;

use super::lu::Lu;
use super::matrix::Matrix;
use crate::error::{Error, Result};

const EPS: f64 = f64::EPSILON;

/// `A = Z·T·Zᵀ` with `Z` orthogonal and `T` upper quasi-triangular.
///
/// Real eigenvalues sit in 1×1 diagonal blocks; complex conjugate pairs sit
/// in 2×2 blocks with nonzero subdiagonal.
#[derive(Debug, Clone)]
pub struct RealSchur {
    pub t: Matrix,
    pub z: Matrix,
}

impl RealSchur {
    pub fn decompose(a: &Matrix) -> Result<Self> {
        if !a.is_square() {
            return Err(Error::Dimension(format!(
                "Schur decomposition needs a square matrix, got {}x{}",
                a.rows(),
                a.cols()
            )));
        }
        if !a.is_finite() {
            return Err(Error::NonFinite("eigenvalue input"));
        }
        let (mut t, mut z) = hessenberg(a);
        francis_qr(&mut t, &mut z)?;
        Ok(Self { t, z })
    }

    pub fn dim(&self) -> usize {
        self.t.rows()
    }

    /// Start index and size of every diagonal block.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        let n = self.dim();
        let mut out = Vec::new();
        let mut i = 0;
        while i < n {
            let size = if i + 1 < n && self.t[(i + 1, i)] != 0.0 { 2 } else { 1 };
            out.push((i, size));
            i += size;
        }
        out
    }

    pub fn eigenvalues(&self) -> Vec<Complex64> {
        let mut out = Vec::with_capacity(self.dim());
        for (i, size) in self.blocks() {
            if size == 1 {
                out.push(Complex64::new(self.t[(i, i)], 0.0));
            } else {
                let (l1, l2) = block_eigenvalues(&self.t, i);
                out.push(l1);
                out.push(l2);
            }
        }
        out
    }

    /// Moves every diagonal block whose eigenvalue satisfies `select` to the
    /// leading positions. Returns the dimension of the selected subspace.
    pub fn reorder(&mut self, select: impl Fn(Complex64) -> bool) -> Result<usize> {
        let n = self.dim();
        let mut ks = 0;
        let mut i = 0;
        while i < n {
            let size = if i + 1 < n && self.t[(i + 1, i)] != 0.0 { 2 } else { 1 };
            let lambda = if size == 1 {
                Complex64::new(self.t[(i, i)], 0.0)
            } else {
                block_eigenvalues(&self.t, i).0
            };
            if select(lambda) {
                let mut pos = i;
                while pos > ks {
                    let prev = if pos >= 2 && self.t[(pos - 1, pos - 2)] != 0.0 { 2 } else { 1 };
                    swap_blocks(&mut self.t, &mut self.z, pos - prev, prev, size)?;
                    pos -= prev;
                }
                ks += size;
            }
            i += size;
        }
        Ok(ks)
    }
}

/// Eigenvalues of a real square matrix (balanced, then real Schur).
pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex64>> {
    if !a.is_square() {
        return Err(Error::Dimension(format!(
            "eigenvalues need a square matrix, got {}x{}",
            a.rows(),
            a.cols()
        )));
    }
    let (balanced, _) = balance(a);
    Ok(RealSchur::decompose(&balanced)?.eigenvalues())
}

/// Largest real part of the spectrum (spectral abscissa).
pub fn spectral_abscissa(a: &Matrix) -> Result<f64> {
    Ok(eigenvalues(a)?
        .iter()
        .map(|l| l.re)
        .fold(f64::NEG_INFINITY, f64::max))
}

/// Diagonal similarity `D⁻¹·A·D` with power-of-two scalings that equalizes
/// row and column norms. Returns the balanced matrix and the diagonal of `D`.
pub fn balance(a: &Matrix) -> (Matrix, Vec<f64>) {
    const RADIX: f64 = 2.0;
    let n = a.rows();
    let mut m = a.clone();
    let mut scale = vec![1.0; n];
    let mut done = false;
    let mut sweeps = 0;
    while !done && sweeps < 100 {
        done = true;
        sweeps += 1;
        for i in 0..n {
            let mut c = 0.0;
            let mut r = 0.0;
            for j in 0..n {
                if j != i {
                    c += m[(j, i)].abs();
                    r += m[(i, j)].abs();
                }
            }
            if c == 0.0 || r == 0.0 {
                continue;
            }
            let s = c + r;
            let mut f = 1.0;
            let mut g = r / RADIX;
            while c < g {
                f *= RADIX;
                c *= RADIX * RADIX;
            }
            g = r * RADIX;
            while c > g {
                f /= RADIX;
                c /= RADIX * RADIX;
            }
            if (c + r) / f < 0.95 * s {
                done = false;
                scale[i] *= f;
                for j in 0..n {
                    m[(i, j)] /= f;
                    m[(j, i)] *= f;
                }
            }
        }
    }
    (m, scale)
}

fn block_eigenvalues(t: &Matrix, i: usize) -> (Complex64, Complex64) {
    let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
    let mean = 0.5 * (a + d);
    let half = 0.5 * (a - d);
    let disc = half * half + b * c;
    if disc >= 0.0 {
        let r = disc.sqrt();
        (Complex64::new(mean + r, 0.0), Complex64::new(mean - r, 0.0))
    } else {
        let r = (-disc).sqrt();
        (Complex64::new(mean, r), Complex64::new(mean, -r))
    }
}

/// Householder reflector `I − β·v·vᵀ` mapping `x` onto a multiple of `e₁`.
fn householder(x: &[f64]) -> (Vec<f64>, f64) {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        return (vec![0.0; x.len()], 0.0);
    }
    let alpha = if x[0] >= 0.0 { -norm } else { norm };
    let mut v = x.to_vec();
    v[0] -= alpha;
    let vtv: f64 = v.iter().map(|a| a * a).sum();
    if vtv == 0.0 {
        return (v, 0.0);
    }
    (v, 2.0 / vtv)
}

/// Applies `P = I − β v vᵀ` from the left to rows `r0..r0+len` over `cols`.
fn reflect_rows(m: &mut Matrix, r0: usize, v: &[f64], beta: f64, cols: std::ops::Range<usize>) {
    if beta == 0.0 {
        return;
    }
    for j in cols {
        let mut h = 0.0;
        for (k, vk) in v.iter().enumerate() {
            h += vk * m[(r0 + k, j)];
        }
        h *= beta;
        for (k, vk) in v.iter().enumerate() {
            m[(r0 + k, j)] -= h * vk;
        }
    }
}

/// Applies `P` from the right to columns `c0..c0+len` over `rows`.
fn reflect_cols(m: &mut Matrix, c0: usize, v: &[f64], beta: f64, rows: std::ops::Range<usize>) {
    if beta == 0.0 {
        return;
    }
    for i in rows {
        let mut h = 0.0;
        for (k, vk) in v.iter().enumerate() {
            h += vk * m[(i, c0 + k)];
        }
        h *= beta;
        for (k, vk) in v.iter().enumerate() {
            m[(i, c0 + k)] -= h * vk;
        }
    }
}

fn hessenberg(a: &Matrix) -> (Matrix, Matrix) {
    let n = a.rows();
    let mut h = a.clone();
    let mut z = Matrix::identity(n);
    for k in 0..n.saturating_sub(2) {
        let x: Vec<f64> = (k + 1..n).map(|i| h[(i, k)]).collect();
        let (v, beta) = householder(&x);
        reflect_rows(&mut h, k + 1, &v, beta, k..n);
        reflect_cols(&mut h, k + 1, &v, beta, 0..n);
        reflect_cols(&mut z, k + 1, &v, beta, 0..n);
        for i in k + 2..n {
            h[(i, k)] = 0.0;
        }
    }
    (h, z)
}

fn rotate(t: &mut Matrix, z: &mut Matrix, m: usize, cs: f64, sn: f64) {
    let n = t.rows();
    for j in m..n {
        let (h1, h2) = (t[(m, j)], t[(m + 1, j)]);
        t[(m, j)] = cs * h1 + sn * h2;
        t[(m + 1, j)] = -sn * h1 + cs * h2;
    }
    for i in 0..n {
        let (h1, h2) = (t[(i, m)], t[(i, m + 1)]);
        t[(i, m)] = cs * h1 + sn * h2;
        t[(i, m + 1)] = -sn * h1 + cs * h2;
        let (z1, z2) = (z[(i, m)], z[(i, m + 1)]);
        z[(i, m)] = cs * z1 + sn * z2;
        z[(i, m + 1)] = -sn * z1 + cs * z2;
    }
}

/// Triangularizes a 2×2 diagonal block with real eigenvalues; leaves complex
/// pairs untouched.
fn standardize_2x2(t: &mut Matrix, z: &mut Matrix, m: usize) {
    let (a, b, c, d) = (t[(m, m)], t[(m, m + 1)], t[(m + 1, m)], t[(m + 1, m + 1)]);
    if c == 0.0 {
        return;
    }
    let half = 0.5 * (a - d);
    let disc = half * half + b * c;
    if disc < 0.0 {
        return;
    }
    let root = disc.sqrt();
    let lambda = 0.5 * (a + d) + if half >= 0.0 { root } else { -root };
    let (u0, u1) = {
        let first = (lambda - d, c);
        let second = (b, lambda - a);
        if first.0.hypot(first.1) >= second.0.hypot(second.1) {
            first
        } else {
            second
        }
    };
    let r = u0.hypot(u1);
    if r == 0.0 {
        return;
    }
    rotate(t, z, m, u0 / r, u1 / r);
    t[(m + 1, m)] = 0.0;
}

fn francis_qr(h: &mut Matrix, z: &mut Matrix) -> Result<()> {
    let n = h.rows();
    if n < 2 {
        return Ok(());
    }
    let norm = h.max_abs().max(f64::MIN_POSITIVE);
    let mut p = n - 1;
    let mut iter = 0usize;
    let mut total = 0usize;
    let cap = 100 * n;
    loop {
        // locate the top of the unreduced trailing block
        let mut l = p;
        while l > 0 {
            let mut s = h[(l - 1, l - 1)].abs() + h[(l, l)].abs();
            if s == 0.0 {
                s = norm;
            }
            if h[(l, l - 1)].abs() < EPS * s {
                h[(l, l - 1)] = 0.0;
                break;
            }
            l -= 1;
        }
        if l == p {
            if p == 0 {
                break;
            }
            p -= 1;
            iter = 0;
            if p == 0 {
                break;
            }
            continue;
        }
        if l + 1 == p {
            standardize_2x2(h, z, l);
            if p < 2 {
                break;
            }
            p -= 2;
            iter = 0;
            if p == 0 {
                break;
            }
            continue;
        }
        iter += 1;
        total += 1;
        if total > cap {
            return Err(Error::NoConvergence {
                deflated: n - 1 - p,
                n,
            });
        }
        francis_step(h, z, l, p, iter.is_multiple_of(10));
    }
    // clear rounding below the subdiagonal
    for i in 2..n {
        for j in 0..i - 1 {
            h[(i, j)] = 0.0;
        }
    }
    Ok(())
}

fn francis_step(h: &mut Matrix, z: &mut Matrix, l: usize, p: usize, exceptional: bool) {
    let n = h.rows();
    let m = p - 1;
    let (s, t) = if exceptional {
        let w = h[(p, p - 1)].abs() + h[(p - 1, p - 2)].abs();
        (1.5 * w, w * w)
    } else {
        (
            h[(m, m)] + h[(p, p)],
            h[(m, m)] * h[(p, p)] - h[(m, p)] * h[(p, m)],
        )
    };
    let mut x = h[(l, l)] * h[(l, l)] + h[(l, l + 1)] * h[(l + 1, l)] - s * h[(l, l)] + t;
    let mut y = h[(l + 1, l)] * (h[(l, l)] + h[(l + 1, l + 1)] - s);
    let mut zz = h[(l + 2, l + 1)] * h[(l + 1, l)];
    for k in l..=p - 2 {
        let (v, beta) = householder(&[x, y, zz]);
        let r = if k > l { k - 1 } else { l };
        reflect_rows(h, k, &v, beta, r..n);
        let rmax = (k + 3).min(p);
        reflect_cols(h, k, &v, beta, 0..rmax + 1);
        reflect_cols(z, k, &v, beta, 0..n);
        if k > l {
            h[(k + 1, k - 1)] = 0.0;
            h[(k + 2, k - 1)] = 0.0;
        }
        x = h[(k + 1, k)];
        y = h[(k + 2, k)];
        if k + 3 <= p {
            zz = h[(k + 3, k)];
        }
    }
    let (v, beta) = householder(&[x, y]);
    reflect_rows(h, p - 1, &v, beta, (p - 2)..n);
    reflect_cols(h, p - 1, &v, beta, 0..p + 1);
    reflect_cols(z, p - 1, &v, beta, 0..n);
    h[(p, p - 2)] = 0.0;
}

/// Swaps the adjacent diagonal blocks of sizes `p` (at `j`) and `q` (at `j+p`)
/// by solving the block Sylvester equation and applying the orthogonal
/// factor of `[−X; I]`.
fn swap_blocks(t: &mut Matrix, z: &mut Matrix, j: usize, p: usize, q: usize) -> Result<()> {
    let n = t.rows();
    let m = p + q;
    // A11·X − X·A22 = A12 in column-major vec form
    let dim = p * q;
    let mut k = Matrix::zeros(dim, dim);
    let mut rhs = vec![0.0; dim];
    for c in 0..q {
        for r in 0..p {
            let row = c * p + r;
            rhs[row] = t[(j + r, j + p + c)];
            for r2 in 0..p {
                k[(row, c * p + r2)] += t[(j + r, j + r2)];
            }
            for c2 in 0..q {
                k[(row, c2 * p + r)] -= t[(j + p + c2, j + p + c)];
            }
        }
    }
    let x = Lu::factor(&k)
        .map_err(|_| Error::NoConvergence { deflated: j, n })?
        .solve_vec(&rhs);
    // M = [−X; I_q], m×q
    let mut mm = Matrix::zeros(m, q);
    for c in 0..q {
        for r in 0..p {
            mm[(r, c)] = -x[c * p + r];
        }
        mm[(p + c, c)] = 1.0;
    }
    let mut qmat = Matrix::identity(m);
    for c in 0..q {
        let col: Vec<f64> = (c..m).map(|i| mm[(i, c)]).collect();
        let (v, beta) = householder(&col);
        reflect_rows(&mut mm, c, &v, beta, 0..q);
        reflect_cols(&mut qmat, c, &v, beta, 0..m);
    }
    // T ← Qᵀ T Q on the window, Z ← Z Q
    let window_rows: Vec<Vec<f64>> = (0..m)
        .map(|i| (j..n).map(|col| t[(j + i, col)]).collect())
        .collect();
    for i in 0..m {
        for (cidx, col) in (j..n).enumerate() {
            let mut s = 0.0;
            for (kk, wr) in window_rows.iter().enumerate() {
                s += qmat[(kk, i)] * wr[cidx];
            }
            t[(i + j, col)] = s;
        }
    }
    right_multiply_window(t, j, &qmat, j + m);
    right_multiply_window(z, j, &qmat, n);
    for r in q..m {
        for c in 0..q {
            t[(j + r, j + c)] = 0.0;
        }
    }
    if q == 2 {
        standardize_2x2(t, z, j);
    }
    if p == 2 {
        standardize_2x2(t, z, j + q);
    }
    Ok(())
}

/// `target[0..rows, j..j+m] ← target[0..rows, j..j+m] · q`.
fn right_multiply_window(target: &mut Matrix, j: usize, q: &Matrix, rows: usize) {
    let m = q.rows();
    for i in 0..rows {
        let old: Vec<f64> = (0..m).map(|c| target[(i, j + c)]).collect();
        for c in 0..m {
            let mut s = 0.0;
            for (kk, o) in old.iter().enumerate() {
                s += o * q[(kk, c)];
            }
            target[(i, j + c)] = s;
        }
    }
}
