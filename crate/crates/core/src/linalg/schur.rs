use faer::dyn_stack::{MemBuffer, MemStack, StackReq};
use faer::linalg::evd::hessenberg;
use faer::linalg::householder;
use faer::{Conj, Par};

use super::{check_finite, check_square, DenseMatrix, LinalgError};

/// Complex eigenvalue as a `(re, im)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Eigenvalue {
    pub re: f64,
    pub im: f64,
}

/// Real Schur form `A = Q T Qᵀ` with `Q` orthogonal and `T` upper
/// quasi-triangular (1×1 and 2×2 diagonal blocks, the latter holding complex
/// conjugate pairs).
#[derive(Debug, Clone)]
pub struct SchurForm {
    pub q: DenseMatrix,
    pub t: DenseMatrix,
}

impl SchurForm {
    pub fn dim(&self) -> usize {
        self.t.nrows()
    }

    /// Diagonal blocks as `(start, size)`.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        let n = self.dim();
        let mut out = Vec::with_capacity(n);
        let mut i = 0;
        while i < n {
            if i + 1 < n && self.t[(i + 1, i)] != 0.0 {
                out.push((i, 2));
                i += 2;
            } else {
                out.push((i, 1));
                i += 1;
            }
        }
        out
    }

    pub fn eigenvalues(&self) -> Vec<Eigenvalue> {
        let t = &self.t;
        let mut out = Vec::with_capacity(self.dim());
        for (i, size) in self.blocks() {
            if size == 1 {
                out.push(Eigenvalue { re: t[(i, i)], im: 0.0 });
            } else {
                let (a, b, c, d) = (t[(i, i)], t[(i, i + 1)], t[(i + 1, i)], t[(i + 1, i + 1)]);
                let (r1, i1, r2, i2) = block_eigenvalues(a, b, c, d);
                out.push(Eigenvalue { re: r1, im: i1 });
                out.push(Eigenvalue { re: r2, im: i2 });
            }
        }
        out
    }

    pub fn spectral_abscissa(&self) -> f64 {
        self.eigenvalues()
            .iter()
            .map(|e| e.re)
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Schur form of `Aᵀ`, obtained by reversing the index order:
    /// `Aᵀ = (Q J)(J Tᵀ J)(Q J)ᵀ` with `J` the reversal permutation.
    pub fn transposed(&self) -> SchurForm {
        let n = self.dim();
        let q = DenseMatrix::from_fn(n, n, |i, j| self.q[(i, n - 1 - j)]);
        let t = DenseMatrix::from_fn(n, n, |i, j| self.t[(n - 1 - j, n - 1 - i)]);
        SchurForm { q, t }
    }
}

fn block_eigenvalues(a: f64, b: f64, c: f64, d: f64) -> (f64, f64, f64, f64) {
    let tr = 0.5 * (a + d);
    let det = (a - tr) * (d - tr) - b * c;
    if det >= 0.0 {
        let im = det.sqrt();
        (tr, im, tr, -im)
    } else {
        let r = (-det).sqrt();
        (tr + r, 0.0, tr - r, 0.0)
    }
}

/// Real Schur decomposition of a square matrix.
pub fn schur(a: &DenseMatrix) -> Result<SchurForm, LinalgError> {
    check_square(a, "schur input")?;
    check_finite(a)?;
    let n = a.nrows();
    if n <= 1 {
        return Ok(SchurForm { q: DenseMatrix::identity(n, n), t: a.clone() });
    }
    let (h, z) = hessenberg_reduce(a);
    let mut hw = Work::from_mat(&h);
    let mut zw = Work::from_mat(&z);
    francis_qr(&mut hw, &mut zw)?;
    let t = hw.to_mat();
    let q = zw.to_mat();
    Ok(SchurForm { q, t })
}

fn hessenberg_reduce(a: &DenseMatrix) -> (DenseMatrix, DenseMatrix) {
    let n = a.nrows();
    let par = Par::Seq;
    let bs = faer::linalg::qr::no_pivoting::factor::recommended_block_size::<f64>(n - 1, n - 1);
    let mut h = a.clone();
    let mut hh = DenseMatrix::zeros(bs, n - 1);
    let req = StackReq::any_of(&[
        hessenberg::hessenberg_in_place_scratch::<f64>(n, bs, par, Default::default()),
        householder::apply_block_householder_sequence_on_the_right_in_place_scratch::<f64>(
            n - 1,
            bs,
            n - 1,
        ),
    ]);
    let mut buf = MemBuffer::new(req);
    let stack = MemStack::new(&mut buf);
    hessenberg::hessenberg_in_place(h.as_mut(), hh.as_mut(), par, stack, Default::default());
    let mut z = DenseMatrix::identity(n, n);
    householder::apply_block_householder_sequence_on_the_right_in_place_with_conj(
        h.as_ref().submatrix(1, 0, n - 1, n - 1),
        hh.as_ref(),
        Conj::No,
        z.as_mut().submatrix_mut(1, 1, n - 1, n - 1),
        par,
        stack,
    );
    for j in 0..n {
        for i in (j + 2)..n {
            h[(i, j)] = 0.0;
        }
    }
    (h, z)
}

/// Contiguous column-major scratch copy (leading dimension `n`).
struct Work {
    n: usize,
    d: Vec<f64>,
}

impl Work {
    fn from_mat(m: &DenseMatrix) -> Self {
        let n = m.nrows();
        let mut d = Vec::with_capacity(n * n);
        for j in 0..n {
            d.extend(m.col(j).iter());
        }
        Self { n, d }
    }

    fn to_mat(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n, self.n, |i, j| self.d[i + j * self.n])
    }

    #[inline(always)]
    fn at(&self, i: usize, j: usize) -> f64 {
        self.d[i + j * self.n]
    }

    #[inline(always)]
    fn set(&mut self, i: usize, j: usize, v: f64) {
        self.d[i + j * self.n] = v;
    }

    /// Applies `I - τ v vᵀ` (v = [1, v2, v3]) from the right to columns
    /// `k..k+nr` over rows `r0..r1`.
    fn reflect_cols(&mut self, k: usize, nr: usize, r0: usize, r1: usize, t: [f64; 3], v: [f64; 3]) {
        let n = self.n;
        let (head, tail) = self.d.split_at_mut((k + 1) * n);
        let c0 = &mut head[k * n + r0..k * n + r1];
        if nr == 3 {
            let (c1, c2) = tail.split_at_mut(n);
            let c1 = &mut c1[r0..r1];
            let c2 = &mut c2[r0..r1];
            for ((x, y), w) in c0.iter_mut().zip(c1.iter_mut()).zip(c2.iter_mut()) {
                let sum = *x + v[1] * *y + v[2] * *w;
                *x -= sum * t[0];
                *y -= sum * t[1];
                *w -= sum * t[2];
            }
        } else {
            let c1 = &mut tail[r0..r1];
            for (x, y) in c0.iter_mut().zip(c1.iter_mut()) {
                let sum = *x + v[1] * *y;
                *x -= sum * t[0];
                *y -= sum * t[1];
            }
        }
    }

    /// Applies `I - τ v vᵀ` from the left to rows `k..k+nr` over columns
    /// `c0..c1`.
    fn reflect_rows(&mut self, k: usize, nr: usize, c0: usize, c1: usize, t: [f64; 3], v: [f64; 3]) {
        let n = self.n;
        for j in c0..c1 {
            let col = &mut self.d[j * n + k..j * n + k + nr];
            if nr == 3 {
                let sum = col[0] + v[1] * col[1] + v[2] * col[2];
                col[0] -= sum * t[0];
                col[1] -= sum * t[1];
                col[2] -= sum * t[2];
            } else {
                let sum = col[0] + v[1] * col[1];
                col[0] -= sum * t[0];
                col[1] -= sum * t[1];
            }
        }
    }

    /// Plane rotation of rows `i, i+1` over columns `c0..c1`.
    fn rot_rows(&mut self, i: usize, c0: usize, c1: usize, cs: f64, sn: f64) {
        for j in c0..c1 {
            let x = self.at(i, j);
            let y = self.at(i + 1, j);
            self.set(i, j, cs * x + sn * y);
            self.set(i + 1, j, cs * y - sn * x);
        }
    }

    /// Plane rotation of columns `j, j+1` over rows `r0..r1`.
    fn rot_cols(&mut self, j: usize, r0: usize, r1: usize, cs: f64, sn: f64) {
        let n = self.n;
        let (head, tail) = self.d.split_at_mut((j + 1) * n);
        let x = &mut head[j * n + r0..j * n + r1];
        let y = &mut tail[r0..r1];
        for (a, b) in x.iter_mut().zip(y.iter_mut()) {
            let (p, q) = (*a, *b);
            *a = cs * p + sn * q;
            *b = cs * q - sn * p;
        }
    }
}

/// Householder generator: returns `(beta, tau, v[1..])` with
/// `(I - τ v vᵀ) [alpha; x] = [beta; 0]`, `v[0] = 1`.
fn householder3(alpha: f64, x: &[f64]) -> (f64, f64, [f64; 2]) {
    let xnorm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let mut v = [0.0; 2];
    if xnorm == 0.0 {
        return (alpha, 0.0, v);
    }
    let beta = -alpha.hypot(xnorm).copysign(alpha);
    let tau = (beta - alpha) / beta;
    let scale = 1.0 / (alpha - beta);
    for (vi, xi) in v.iter_mut().zip(x) {
        *vi = xi * scale;
    }
    (beta, tau, v)
}

/// Standardizes a 2×2 block. Returns the rotation `(cs, sn)` and overwrites
/// `(a, b, c, d)`; afterwards either `c == 0` (real pair) or `a == d` and
/// `b c < 0` (complex pair).
fn standardize_2x2(a: &mut f64, b: &mut f64, c: &mut f64, d: &mut f64) -> (f64, f64) {
    let eps = f64::EPSILON;
    let (mut cs, mut sn);
    if *c == 0.0 {
        cs = 1.0;
        sn = 0.0;
    } else if *b == 0.0 {
        cs = 0.0;
        sn = 1.0;
        std::mem::swap(a, d);
        *b = -*c;
        *c = 0.0;
    } else if *a - *d == 0.0 && b.signum() != c.signum() {
        cs = 1.0;
        sn = 0.0;
    } else {
        let temp = *a - *d;
        let mut p = 0.5 * temp;
        let bcmax = b.abs().max(c.abs());
        let bcmis = b.abs().min(c.abs()) * b.signum() * c.signum();
        let scale = p.abs().max(bcmax);
        let mut z = (p / scale) * p + (bcmax / scale) * bcmis;
        if z >= 4.0 * eps {
            z = p + (scale.sqrt() * z.sqrt()).copysign(p);
            *a = *d + z;
            *d -= (bcmax / z) * bcmis;
            let tau = c.hypot(z);
            cs = z / tau;
            sn = *c / tau;
            *b -= *c;
            *c = 0.0;
        } else {
            let sigma = *b + *c;
            let tau = sigma.hypot(temp);
            cs = (0.5 * (1.0 + sigma.abs() / tau)).sqrt();
            sn = -(p / (tau * cs)) * if sigma >= 0.0 { 1.0 } else { -1.0 };
            let aa = *a * cs + *b * sn;
            let bb = -*a * sn + *b * cs;
            let cc = *c * cs + *d * sn;
            let dd = -*c * sn + *d * cs;
            *a = aa * cs + cc * sn;
            *b = bb * cs + dd * sn;
            *c = -aa * sn + cc * cs;
            *d = -bb * sn + dd * cs;
            let mid = 0.5 * (*a + *d);
            *a = mid;
            *d = mid;
            if *c != 0.0 {
                if *b != 0.0 {
                    if b.signum() == c.signum() {
                        let sab = b.abs().sqrt();
                        let sac = c.abs().sqrt();
                        p = (sab * sac).copysign(*c);
                        let tau = 1.0 / (*b + *c).abs().sqrt();
                        *a = mid + p;
                        *d = mid - p;
                        *b -= *c;
                        *c = 0.0;
                        let cs1 = sab * tau;
                        let sn1 = sac * tau;
                        let t = cs * cs1 - sn * sn1;
                        sn = cs * sn1 + sn * cs1;
                        cs = t;
                    }
                } else {
                    *b = -*c;
                    *c = 0.0;
                    let t = cs;
                    cs = -sn;
                    sn = t;
                }
            }
        }
    }
    (cs, sn)
}

/// Francis double-shift QR on an upper Hessenberg matrix, accumulating the
/// transformations into `z`. Follows the structure of LAPACK's small-matrix
/// driver (deflation test of Ahues and Tisseur, exceptional shifts every ten
/// iterations without deflation).
fn francis_qr(h: &mut Work, z: &mut Work) -> Result<(), LinalgError> {
    let n = h.n;
    let ulp = f64::EPSILON;
    let smlnum = f64::MIN_POSITIVE * (n as f64 / ulp);
    let itmax = 30 * n.max(10);
    let mut kdefl = 0usize;

    // `i` is the last row of the active window (inclusive).
    let mut i = n as isize - 1;
    while i >= 0 {
        let iu = i as usize;
        let mut l = 0usize;
        let mut converged = false;
        for _its in 0..=itmax {
            // Look for a single small subdiagonal element.
            let mut k = iu;
            while k > l {
                let hkk1 = h.at(k, k - 1).abs();
                if hkk1 <= smlnum {
                    break;
                }
                let mut tst = h.at(k - 1, k - 1).abs() + h.at(k, k).abs();
                if tst == 0.0 {
                    if k >= 2 {
                        tst += h.at(k - 1, k - 2).abs();
                    }
                    if k + 1 < n {
                        tst += h.at(k + 1, k).abs();
                    }
                }
                if hkk1 <= ulp * tst {
                    let hk1k = h.at(k - 1, k).abs();
                    let ab = hkk1.max(hk1k);
                    let ba = hkk1.min(hk1k);
                    let diff = (h.at(k - 1, k - 1) - h.at(k, k)).abs();
                    let aa = h.at(k, k).abs().max(diff);
                    let bb = h.at(k, k).abs().min(diff);
                    let s = aa + ab;
                    if ba * (ab / s) <= smlnum.max(ulp * (bb * (aa / s))) {
                        break;
                    }
                }
                k -= 1;
            }
            l = k;
            if l > 0 {
                h.set(l, l - 1, 0.0);
            }
            if l + 1 >= iu {
                converged = true;
                break;
            }
            kdefl += 1;

            let (h11, h12, h21, h22);
            if kdefl % 20 == 0 {
                let s = h.at(iu, iu - 1).abs() + h.at(iu - 1, iu - 2).abs();
                h11 = 0.75 * s + h.at(iu, iu);
                h12 = -0.4375 * s;
                h21 = s;
                h22 = h11;
            } else if kdefl % 10 == 0 {
                let s = h.at(l + 1, l).abs() + h.at(l + 2, l + 1).abs();
                h11 = 0.75 * s + h.at(l, l);
                h12 = -0.4375 * s;
                h21 = s;
                h22 = h11;
            } else {
                h11 = h.at(iu - 1, iu - 1);
                h21 = h.at(iu, iu - 1);
                h12 = h.at(iu - 1, iu);
                h22 = h.at(iu, iu);
            }
            let s = h11.abs() + h12.abs() + h21.abs() + h22.abs();
            let (rt1r, rt1i, rt2r, rt2i);
            if s == 0.0 {
                rt1r = 0.0;
                rt1i = 0.0;
                rt2r = 0.0;
                rt2i = 0.0;
            } else {
                let (h11, h12, h21, h22) = (h11 / s, h12 / s, h21 / s, h22 / s);
                let tr = 0.5 * (h11 + h22);
                let det = (h11 - tr) * (h22 - tr) - h12 * h21;
                let rtdisc = det.abs().sqrt();
                if det >= 0.0 {
                    rt1r = tr * s;
                    rt2r = rt1r;
                    rt1i = rtdisc * s;
                    rt2i = -rt1i;
                } else {
                    let a = tr + rtdisc;
                    let b = tr - rtdisc;
                    let r = if (a - h22).abs() <= (b - h22).abs() { a } else { b } * s;
                    rt1r = r;
                    rt2r = r;
                    rt1i = 0.0;
                    rt2i = 0.0;
                }
            }

            // Look for two consecutive small subdiagonal elements.
            let mut v = [0.0f64; 3];
            let mut m = iu - 2;
            loop {
                let h21s = h.at(m + 1, m);
                let s = (h.at(m, m) - rt2r).abs() + rt2i.abs() + h21s.abs();
                let h21s = h21s / s;
                v[0] = h21s * h.at(m, m + 1) + (h.at(m, m) - rt1r) * ((h.at(m, m) - rt2r) / s)
                    - rt1i * (rt2i / s);
                v[1] = h21s * (h.at(m, m) + h.at(m + 1, m + 1) - rt1r - rt2r);
                v[2] = h21s * h.at(m + 2, m + 1);
                let s = v[0].abs() + v[1].abs() + v[2].abs();
                v.iter_mut().for_each(|x| *x /= s);
                if m == l {
                    break;
                }
                let h00 = h.at(m, m - 1).abs() * (v[1].abs() + v[2].abs());
                let h01 = v[0].abs() * (h.at(m - 1, m - 1).abs() + h.at(m, m).abs() + h.at(m + 1, m + 1).abs());
                if h00 <= ulp * h01 {
                    break;
                }
                m -= 1;
            }

            // Double-shift sweep.
            for k in m..iu {
                let nr = 3.min(iu - k + 1);
                if k > m {
                    for (r, vr) in v.iter_mut().enumerate().take(nr) {
                        *vr = h.at(k + r, k - 1);
                    }
                }
                let (beta, t1, tail) = householder3(v[0], &v[1..nr]);
                v[0] = beta;
                v[1] = tail[0];
                if nr == 3 {
                    v[2] = tail[1];
                }
                if k > m {
                    h.set(k, k - 1, beta);
                    h.set(k + 1, k - 1, 0.0);
                    if k + 2 <= iu {
                        h.set(k + 2, k - 1, 0.0);
                    }
                } else if m > l {
                    let x = h.at(k, k - 1) * (1.0 - t1);
                    h.set(k, k - 1, x);
                }
                let vv = [1.0, v[1], if nr == 3 { v[2] } else { 0.0 }];
                let tt = [t1, t1 * vv[1], t1 * vv[2]];
                h.reflect_rows(k, nr, k, n, tt, vv);
                h.reflect_cols(k, nr, 0, (k + 3).min(iu) + 1, tt, vv);
                z.reflect_cols(k, nr, 0, n, tt, vv);
            }
        }
        if !converged {
            return Err(LinalgError::NoConvergence { what: "Schur QR iteration" });
        }
        if l + 1 == iu {
            let (mut a, mut b, mut c, mut d) =
                (h.at(iu - 1, iu - 1), h.at(iu - 1, iu), h.at(iu, iu - 1), h.at(iu, iu));
            let (cs, sn) = standardize_2x2(&mut a, &mut b, &mut c, &mut d);
            h.set(iu - 1, iu - 1, a);
            h.set(iu - 1, iu, b);
            h.set(iu, iu - 1, c);
            h.set(iu, iu, d);
            if iu + 1 < n {
                h.rot_rows(iu - 1, iu + 1, n, cs, sn);
            }
            h.rot_cols(iu - 1, 0, iu - 1, cs, sn);
            z.rot_cols(iu - 1, 0, n, cs, sn);
        }
        kdefl = 0;
        i = l as isize - 1;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::super::fro;
    use super::*;

    fn check(a: &DenseMatrix) -> SchurForm {
        let s = schur(a).unwrap();
        let n = a.nrows();
        let recon = &s.q * &s.t * s.q.transpose();
        assert!(fro(&(recon - a)) <= 1e-12 * fro(a).max(1.0) * (n as f64).sqrt());
        let orth = s.q.transpose() * &s.q - DenseMatrix::identity(n, n);
        assert!(fro(&orth) <= 1e-12 * (n as f64).sqrt());
        for j in 0..n {
            for i in (j + 2)..n {
                assert_eq!(s.t[(i, j)], 0.0);
            }
        }
        // No two consecutive nonzero subdiagonals.
        for i in 1..n.saturating_sub(1) {
            assert!(s.t[(i, i - 1)] == 0.0 || s.t[(i + 1, i)] == 0.0);
        }
        s
    }

    #[test]
    fn swap_matrix_has_eigenvalues_plus_minus_one() {
        let mut a = DenseMatrix::zeros(2, 2);
        a[(0, 1)] = 1.0;
        a[(1, 0)] = 1.0;
        let s = check(&a);
        let mut ev: Vec<f64> = s.eigenvalues().iter().map(|e| e.re).collect();
        ev.sort_by(f64::total_cmp);
        assert!((ev[0] + 1.0).abs() < 1e-14 && (ev[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rotation_has_complex_pair() {
        let mut a = DenseMatrix::zeros(2, 2);
        a[(0, 1)] = -2.0;
        a[(1, 0)] = 2.0;
        let s = check(&a);
        let ev = s.eigenvalues();
        assert!(ev[0].re.abs() < 1e-14 && (ev[0].im.abs() - 2.0).abs() < 1e-14);
        assert_eq!(s.blocks(), vec![(0, 2)]);
    }

    #[test]
    fn random_matrices_reconstruct() {
        for (n, seed) in [(3, 1), (7, 2), (50, 3), (120, 4)] {
            let a = random(n, n, seed);
            let s = check(&a);
            let trace: f64 = (0..n).map(|i| a[(i, i)]).sum();
            let sum: f64 = s.eigenvalues().iter().map(|e| e.re).sum();
            assert!((trace - sum).abs() < 1e-10 * n as f64);
        }
    }

    #[test]
    fn triangular_and_degenerate_inputs() {
        let mut a = DenseMatrix::zeros(5, 5);
        for j in 0..5 {
            for i in 0..=j {
                a[(i, j)] = (i + 2 * j) as f64;
            }
        }
        check(&a);
        check(&DenseMatrix::zeros(4, 4));
        check(&DenseMatrix::identity(6, 6));
        // Jordan-like block with repeated eigenvalues.
        let mut j = DenseMatrix::identity(6, 6) * -1.0;
        for i in 0..5 {
            j[(i, i + 1)] = 1.0;
        }
        check(&j);
    }

    #[test]
    fn transposed_form_is_schur_of_transpose() {
        let a = random(30, 30, 9);
        let s = schur(&a).unwrap();
        let st = s.transposed();
        let recon = &st.q * &st.t * st.q.transpose();
        assert!(fro(&(recon - a.transpose())) < 1e-11);
        for j in 0..30 {
            for i in (j + 2)..30 {
                assert_eq!(st.t[(i, j)], 0.0);
            }
        }
    }
}
