use super::schur::{schur, SchurForm};
use super::{check_finite, check_square, fro, DenseMatrix, LinalgError};

/// Solves `A X + X Aᵀ + W = 0` for stable `A` (every eigenvalue with
/// `Re λ < -stability_margin`). The result is symmetrized.
pub fn solve_lyapunov(
    a: &DenseMatrix,
    w: &DenseMatrix,
    stability_margin: f64,
) -> Result<DenseMatrix, LinalgError> {
    check_square(a, "Lyapunov matrix")?;
    let s = schur(a)?;
    solve_lyapunov_schur(&s, w, stability_margin)
}

/// Same as [`solve_lyapunov`] with a precomputed Schur form of `A`. Pass
/// [`SchurForm::transposed`] to solve the dual equation `Aᵀ X + X A + W = 0`.
pub fn solve_lyapunov_schur(
    s: &SchurForm,
    w: &DenseMatrix,
    stability_margin: f64,
) -> Result<DenseMatrix, LinalgError> {
    let n = s.dim();
    if w.nrows() != n || w.ncols() != n {
        return Err(LinalgError::Dimension(format!(
            "Lyapunov rhs must be {n}x{n}, got {}x{}",
            w.nrows(),
            w.ncols()
        )));
    }
    check_finite(w)?;
    let abscissa = s.spectral_abscissa();
    if n > 0 && abscissa >= -stability_margin {
        return Err(LinalgError::NotStable { abscissa });
    }
    let rhs = -(s.q.transpose() * w * &s.q);
    let y = solve_quasi_triangular(s, &rhs)?;
    let x = &s.q * y * s.q.transpose();
    Ok(DenseMatrix::from_fn(n, n, |i, j| 0.5 * (x[(i, j)] + x[(j, i)])))
}

/// Relative residual `‖A X + X Aᵀ + W‖_F / ‖W‖_F` (absolute when `W = 0`).
pub fn lyapunov_residual(a: &DenseMatrix, x: &DenseMatrix, w: &DenseMatrix) -> f64 {
    let ax = a * x;
    let r = &ax + ax.transpose() + w;
    let scale = fro(w);
    if scale == 0.0 {
        fro(&r)
    } else {
        fro(&r) / scale
    }
}

/// Solves `T Y + Y Tᵀ = R` for upper quasi-triangular `T`, sweeping column
/// blocks from the last one and, inside each, row blocks from the bottom.
fn solve_quasi_triangular(s: &SchurForm, r: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    let n = s.dim();
    let blocks = s.blocks();
    let mut t = vec![0.0; n * n];
    let mut y = vec![0.0; n * n];
    for j in 0..n {
        for i in 0..n {
            t[i + j * n] = s.t[(i, j)];
            y[i + j * n] = r[(i, j)];
        }
    }
    let tn = fro(&s.t).max(f64::MIN_POSITIVE);

    for &(c0, q) in blocks.iter().rev() {
        let mut m = [[0.0; 2]; 2];
        for (f, row) in m.iter_mut().enumerate().take(q) {
            for (g, v) in row.iter_mut().enumerate().take(q) {
                *v = t[(c0 + f) + (c0 + g) * n];
            }
        }
        for &(i0, p) in blocks.iter().rev() {
            let mut tii = [[0.0; 2]; 2];
            for (e, row) in tii.iter_mut().enumerate().take(p) {
                for (g, v) in row.iter_mut().enumerate().take(p) {
                    *v = t[(i0 + e) + (i0 + g) * n];
                }
            }
            let mut rhs = [0.0; 4];
            for f in 0..q {
                for e in 0..p {
                    rhs[e + p * f] = y[(i0 + e) + (c0 + f) * n];
                }
            }
            let sol = small_sylvester(&tii, p, &m, q, &rhs, tn)?;
            for f in 0..q {
                for e in 0..p {
                    y[(i0 + e) + (c0 + f) * n] = sol[e + p * f];
                }
            }
            if i0 > 0 {
                for f in 0..q {
                    let d = c0 + f;
                    for e in 0..p {
                        let coef = sol[e + p * f];
                        if coef == 0.0 {
                            continue;
                        }
                        let tcol = &t[(i0 + e) * n..(i0 + e) * n + i0];
                        let ycol = &mut y[d * n..d * n + i0];
                        for (yv, tv) in ycol.iter_mut().zip(tcol) {
                            *yv -= tv * coef;
                        }
                    }
                }
            }
        }
        // Move the solved columns to the right-hand sides of earlier blocks.
        let (head, tail) = y.split_at_mut(c0 * n);
        for f in 0..q {
            let d = c0 + f;
            let ysolved = &tail[f * n..(f + 1) * n];
            for c in 0..c0 {
                let coef = t[c + d * n];
                if coef == 0.0 {
                    continue;
                }
                let ycol = &mut head[c * n..(c + 1) * n];
                for (yv, sv) in ycol.iter_mut().zip(ysolved) {
                    *yv -= coef * sv;
                }
            }
        }
    }
    Ok(DenseMatrix::from_fn(n, n, |i, j| y[i + j * n]))
}

/// Solves `T Y + Y Mᵀ = R` with `T` p×p and `M` q×q (p, q ≤ 2) by Gaussian
/// elimination on the Kronecker form. `R` and the result are column-major.
fn small_sylvester(
    tii: &[[f64; 2]; 2],
    p: usize,
    m: &[[f64; 2]; 2],
    q: usize,
    rhs: &[f64; 4],
    scale: f64,
) -> Result<[f64; 4], LinalgError> {
    let k = p * q;
    let mut a = [[0.0; 4]; 4];
    let mut b = *rhs;
    for f in 0..q {
        for e in 0..p {
            let row = e + p * f;
            for g in 0..p {
                a[row][g + p * f] += tii[e][g];
            }
            for h in 0..q {
                a[row][e + p * h] += m[f][h];
            }
        }
    }
    for col in 0..k {
        let piv = (col..k)
            .max_by(|&x, &y| a[x][col].abs().total_cmp(&a[y][col].abs()))
            .unwrap_or(col);
        if a[piv][col].abs() <= f64::EPSILON * scale {
            return Err(LinalgError::SingularBlock(tii[0][0], m[0][0]));
        }
        a.swap(col, piv);
        b.swap(col, piv);
        for row in (col + 1)..k {
            let factor = a[row][col] / a[col][col];
            if factor != 0.0 {
                for c in col..k {
                    a[row][c] -= factor * a[col][c];
                }
                b[row] -= factor * b[col];
            }
        }
    }
    let mut x = [0.0; 4];
    for row in (0..k).rev() {
        let mut acc = b[row];
        for c in (row + 1)..k {
            acc -= a[row][c] * x[c];
        }
        x[row] = acc / a[row][row];
    }
    Ok(x)
}

#[cfg(test)]
mod tests {
    use super::super::testing::*;
    use super::*;

    #[test]
    fn scalar_equation() {
        // -2p + 2 = 0 gives p = 1.
        let a = DenseMatrix::from_fn(1, 1, |_, _| -1.0);
        let w = DenseMatrix::from_fn(1, 1, |_, _| 2.0);
        let x = solve_lyapunov(&a, &w, 1e-12).unwrap();
        assert!((x[(0, 0)] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn negative_identity_halves_rhs() {
        let a = DenseMatrix::identity(6, 6) * -1.0;
        let w = random_spd(6, 1);
        let x = solve_lyapunov(&a, &w, 1e-12).unwrap();
        assert!(fro(&(x * 2.0 - &w)) < 1e-13 * fro(&w));
    }

    #[test]
    fn random_stable_residual_and_symmetry() {
        for (n, seed) in [(5, 1), (40, 2), (150, 3)] {
            let a = random_stable(n, seed);
            let b = random(n, 2, seed + 100);
            let w = &b * b.transpose();
            let x = solve_lyapunov(&a, &w, 1e-12).unwrap();
            assert!(lyapunov_residual(&a, &x, &w) < 1e-10, "n={n}");
            assert!(fro(&(&x - x.transpose())) == 0.0);
        }
    }

    #[test]
    fn dual_equation_via_transposed_schur() {
        let a = random_stable(60, 11);
        let c = random(3, 60, 12);
        let w = c.transpose() * &c;
        let s = schur(&a).unwrap();
        let x = solve_lyapunov_schur(&s.transposed(), &w, 1e-12).unwrap();
        assert!(lyapunov_residual(&a.transpose().to_owned(), &x, &w) < 1e-10);
    }

    #[test]
    fn complex_pairs_are_handled() {
        // Block diagonal with rotations: eigenvalues -0.5 ± k i.
        let n = 8;
        let mut a = DenseMatrix::identity(n, n) * -0.5;
        for k in 0..n / 2 {
            a[(2 * k, 2 * k + 1)] = (k + 1) as f64;
            a[(2 * k + 1, 2 * k)] = -((k + 1) as f64);
        }
        let mix = random(n, n, 5) + DenseMatrix::identity(n, n) * 3.0;
        let a = &mix * a * super::super::inverse(&mix).unwrap();
        let w = random_spd(n, 6);
        let x = solve_lyapunov(&a, &w, 1e-12).unwrap();
        assert!(lyapunov_residual(&a, &x, &w) < 1e-10);
    }

    #[test]
    fn unstable_input_is_rejected() {
        let mut a = DenseMatrix::identity(3, 3) * -1.0;
        a[(2, 2)] = 0.0;
        let err = solve_lyapunov(&a, &DenseMatrix::identity(3, 3), 1e-12).unwrap_err();
        assert!(matches!(err, LinalgError::NotStable { .. }));
    }
}
