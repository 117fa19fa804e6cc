use super::{check_finite, check_square, solve, DenseMatrix, LinalgError};

const THETA: [(usize, f64); 4] = [
    (3, 1.495_585_217_958_292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504_178_996_162_932e-1),
    (9, 2.097_847_961_257_068),
];
const THETA13: f64 = 5.371_920_351_148_152;

const B3: [f64; 4] = [120., 60., 12., 1.];
const B5: [f64; 6] = [30240., 15120., 3360., 420., 30., 1.];
const B7: [f64; 8] = [17297280., 8648640., 1995840., 277200., 25200., 1512., 56., 1.];
const B9: [f64; 10] = [
    17643225600.,
    8821612800.,
    2075673600.,
    302702400.,
    30270240.,
    2162160.,
    110880.,
    3960.,
    90.,
    1.,
];
const B13: [f64; 14] = [
    64764752532480000.,
    32382376266240000.,
    7771770303897600.,
    1187353796428800.,
    129060195264000.,
    10559470521600.,
    670442572800.,
    33522128640.,
    1323241920.,
    40840800.,
    960960.,
    16380.,
    182.,
    1.,
];

const MAX_SQUARINGS: u32 = 1000;

fn norm1(a: &DenseMatrix) -> f64 {
    (0..a.ncols())
        .map(|j| a.col(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a Padé approximant of
/// degree 3, 5, 7, 9 or 13 chosen from the 1-norm.
pub fn expm(a: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    check_square(a, "expm input")?;
    check_finite(a)?;
    let n = a.nrows();
    let ident = DenseMatrix::identity(n, n);
    if n == 0 {
        return Ok(ident);
    }
    let nrm = norm1(a);
    for &(m, theta) in &THETA {
        if nrm <= theta {
            let coef: &[f64] = match m {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            return low_order(a, coef, &ident);
        }
    }
    let s = if nrm > THETA13 { (nrm / THETA13).log2().ceil() as i64 } else { 0 };
    if s > MAX_SQUARINGS as i64 {
        return Err(LinalgError::ExpmOverflow { squarings: s as u32 });
    }
    let s = s.max(0) as u32;
    let a = a * (0.5f64).powi(s as i32);
    let b = &B13;
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let u_inner = &a6 * (&a6 * b[13] + &a4 * b[11] + &a2 * b[9]);
    let u = &a * (u_inner + &a6 * b[7] + &a4 * b[5] + &a2 * b[3] + &ident * b[1]);
    let v_inner = &a6 * (&a6 * b[12] + &a4 * b[10] + &a2 * b[8]);
    let v = v_inner + &a6 * b[6] + &a4 * b[4] + &a2 * b[2] + &ident * b[0];
    let mut r = solve(&(&v - &u), &(&v + &u))?;
    for _ in 0..s {
        r = &r * &r;
    }
    check_finite(&r).map_err(|_| LinalgError::ExpmOverflow { squarings: s })?;
    Ok(r)
}

fn low_order(a: &DenseMatrix, b: &[f64], ident: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    let a2 = a * a;
    let mut pow = ident.clone();
    let mut u = ident * b[1];
    let mut v = ident * b[0];
    for k in 1..b.len() / 2 {
        pow = &pow * &a2;
        u += &pow * b[2 * k + 1];
        v += &pow * b[2 * k];
    }
    let u = a * u;
    solve(&(&v - &u), &(&v + &u))
}
