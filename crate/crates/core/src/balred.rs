//! Stabilizing transform, square-root balancing, truncation and
//! residualization.
//!
//! The CME `dp/dt = 𝒜 p` has a zero eigenvalue. Eliminating the first state
//! through `p₁ = 1 − Σ_{i>1} pᵢ` turns it into the stable system
//!
//! ```text
//! dz/dt = A z + b h(t),   y = C z + d h(t)
//! A = 𝒜₂₂ − a₂₁ 1ᵀ,  b = a₂₁,  C = 𝒞 [−1ᵀ; I],  d = 𝒞 e₁
//! ```
//!
//! driven by the unit step `h`. A nonzero `z(0)` becomes an impulse channel.

use std::fmt;
use std::str::FromStr;

use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{
    self, lyapunov_residual, schur, solve, solve_lyapunov_schur, sym_eig, svd, DenseMatrix,
    LinalgError, Tolerances,
};
use crate::statespace::{Boundary, Generator, OutputMatrix};

/// Largest generator for which `stabilize` verifies the spectrum directly.
pub const SPECTRUM_CHECK_LIMIT: usize = 200;

#[derive(Debug, Error)]
pub enum BalredError {
    #[error("generator must use reflecting boundaries (got an absorbing truncation)")]
    NotReflecting,
    #[error("state space needs at least 2 states, got {0}")]
    TooSmall(usize),
    #[error("invalid initial distribution: {0}")]
    BadInitial(String),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("chain is reducible: {closed_classes} closed communicating classes (need exactly 1)")]
    Reducible { closed_classes: usize },
    #[error("stabilized matrix is not stable (spectral abscissa {abscissa:e})")]
    Unstable { abscissa: f64 },
    #[error("trace mismatch after stabilization: generator {full:e}, stable system {stable:e}")]
    TraceMismatch { full: f64, stable: f64 },
    #[error("all Hankel singular values vanish: output is decoupled from input")]
    Degenerate,
    #[error("order {k} out of range 1..={q}")]
    OrderOutOfRange { k: usize, q: usize },
    #[error("trailing block A22 is singular; residualization impossible")]
    SingularA22,
    #[error("reduced matrix is not stable (spectral abscissa {abscissa:e})")]
    UnstableReduced { abscissa: f64 },
    #[error("model file line {line}: {msg}")]
    Format { line: usize, msg: String },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

type Result<T> = std::result::Result<T, BalredError>;

/// Stable LTI system obtained from the CME.
#[derive(Debug, Clone)]
pub struct StableSystem {
    pub a: DenseMatrix,
    /// Column 0: step channel `a₂₁`. Column 1 (only if `z0 ≠ 0`): impulse
    /// channel `z0`.
    pub b: DenseMatrix,
    pub c: DenseMatrix,
    pub d: Vec<f64>,
    pub z0: Vec<f64>,
    /// Trace of the originating generator.
    pub generator_trace: f64,
}

impl StableSystem {
    pub fn order(&self) -> usize {
        self.a.nrows()
    }

    pub fn num_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn num_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn has_impulse(&self) -> bool {
        self.b.ncols() == 2
    }

    /// Feedthrough matrix `[d, 0]`.
    pub fn feedthrough(&self) -> DenseMatrix {
        feedthrough(&self.d, self.num_inputs())
    }

    /// Steady-state gain `D − C A⁻¹ B`.
    pub fn dc_gain(&self) -> Result<DenseMatrix> {
        dc_gain(&self.a, &self.b, &self.c, &self.feedthrough())
    }
}

fn feedthrough(d: &[f64], inputs: usize) -> DenseMatrix {
    DenseMatrix::from_fn(d.len(), inputs, |i, j| if j == 0 { d[i] } else { 0.0 })
}

fn dc_gain(a: &DenseMatrix, b: &DenseMatrix, c: &DenseMatrix, d: &DenseMatrix) -> Result<DenseMatrix> {
    if a.nrows() == 0 {
        return Ok(d.clone());
    }
    let x = solve(a, b)?;
    Ok(d - c * x)
}

/// Number of closed communicating classes of the chain whose transition
/// graph is the off-diagonal sparsity of `gen`.
pub fn closed_classes(gen: &Generator) -> usize {
    let m = gen.matrix();
    let n = m.ncols();
    let mut g: DiGraph<(), ()> = DiGraph::with_capacity(n, m.nnz());
    let nodes: Vec<_> = (0..n).map(|_| g.add_node(())).collect();
    for j in 0..n {
        for (i, v) in m.column(j) {
            if i != j && v != 0.0 {
                g.add_edge(nodes[j], nodes[i], ());
            }
        }
    }
    let sccs = tarjan_scc(&g);
    let mut comp = vec![0usize; n];
    for (c, members) in sccs.iter().enumerate() {
        for node in members {
            comp[node.index()] = c;
        }
    }
    let mut open = vec![false; sccs.len()];
    for e in g.raw_edges() {
        let (s, t) = (comp[e.source().index()], comp[e.target().index()]);
        if s != t {
            open[s] = true;
        }
    }
    open.iter().filter(|o| !**o).count()
}

/// Eliminates the first state and returns the stable system.
pub fn stabilize(
    gen: &Generator,
    out: &OutputMatrix,
    p0: &[f64],
    tol: &Tolerances,
) -> Result<StableSystem> {
    if gen.boundary() != Boundary::Reflecting {
        return Err(BalredError::NotReflecting);
    }
    let w = gen.dim();
    if w < 2 {
        return Err(BalredError::TooSmall(w));
    }
    if p0.len() != w {
        return Err(BalredError::Dimension(format!(
            "initial distribution has {} entries, state space has {w}",
            p0.len()
        )));
    }
    if out.matrix.ncols() != w {
        return Err(BalredError::Dimension(format!(
            "output matrix has {} columns, state space has {w}",
            out.matrix.ncols()
        )));
    }
    if let Some(i) = p0.iter().position(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(BalredError::BadInitial(format!("entry {i} is {}", p0[i])));
    }
    let total: f64 = p0.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(BalredError::BadInitial(format!("entries sum to {total}")));
    }
    let classes = closed_classes(gen);
    if classes != 1 {
        return Err(BalredError::Reducible { closed_classes: classes });
    }

    let full = gen.to_dense();
    let n = w - 1;
    let a = DenseMatrix::from_fn(n, n, |i, j| full[(i + 1, j + 1)] - full[(i + 1, 0)]);
    let z0: Vec<f64> = p0[1..].to_vec();
    let impulse = z0.iter().any(|&v| v != 0.0);
    let inputs = if impulse { 2 } else { 1 };
    let b = DenseMatrix::from_fn(n, inputs, |i, j| if j == 0 { full[(i + 1, 0)] } else { z0[i] });
    let cm = &out.matrix;
    let c = DenseMatrix::from_fn(cm.nrows(), n, |i, j| cm[(i, j + 1)] - cm[(i, 0)]);
    let d: Vec<f64> = (0..cm.nrows()).map(|i| cm[(i, 0)]).collect();

    let generator_trace: f64 = (0..w).map(|i| full[(i, i)]).sum();
    let stable_trace: f64 = (0..n).map(|i| a[(i, i)]).sum();
    if (generator_trace - stable_trace).abs() > 1e-9 * generator_trace.abs().max(1.0) {
        return Err(BalredError::TraceMismatch { full: generator_trace, stable: stable_trace });
    }
    if w <= SPECTRUM_CHECK_LIMIT {
        let abscissa = linalg::spectral_abscissa(&a)?;
        if abscissa >= -tol.stability_margin {
            return Err(BalredError::Unstable { abscissa });
        }
    }
    Ok(StableSystem { a, b, c, d, z0, generator_trace })
}

/// Balanced realization with its Hankel singular values.
#[derive(Debug, Clone)]
pub struct BalancedSystem {
    pub a: DenseMatrix,
    pub b: DenseMatrix,
    pub c: DenseMatrix,
    pub d: Vec<f64>,
    /// Descending and strictly positive; `hsv.len()` is the minimal order `q`.
    pub hsv: Vec<f64>,
    /// Order of the stable system before minimal-realization cutoff.
    pub full_order: usize,
    /// Relative residuals of the controllability and observability Lyapunov
    /// solves.
    pub gramian_residuals: (f64, f64),
}

impl BalancedSystem {
    pub fn q(&self) -> usize {
        self.hsv.len()
    }

    pub fn num_inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn num_outputs(&self) -> usize {
        self.c.nrows()
    }

    pub fn feedthrough(&self) -> DenseMatrix {
        feedthrough(&self.d, self.num_inputs())
    }

    pub fn dc_gain(&self) -> Result<DenseMatrix> {
        dc_gain(&self.a, &self.b, &self.c, &self.feedthrough())
    }

    fn check_order(&self, k: usize) -> Result<()> {
        if k == 0 || k > self.q() {
            return Err(BalredError::OrderOutOfRange { k, q: self.q() });
        }
        Ok(())
    }
}

/// Square root of a PSD matrix as `L` with `S = L Lᵀ`, dropping eigenvalues
/// below `clip · λ_max`.
fn psd_factor(s: &DenseMatrix, clip: f64) -> Result<DenseMatrix> {
    let (vals, vecs) = sym_eig(s)?;
    let lmax = vals.first().copied().unwrap_or(0.0);
    if !(lmax > 0.0) {
        return Ok(DenseMatrix::zeros(s.nrows(), 0));
    }
    let keep = vals.iter().take_while(|&&v| v > clip * lmax).count();
    Ok(DenseMatrix::from_fn(s.nrows(), keep, |i, j| vecs[(i, j)] * vals[j].sqrt()))
}

/// Square-root balancing. The state is first rescaled by a diagonal
/// similarity (which leaves the Hankel singular values unchanged) so that the
/// Gramians of badly scaled chains are computed accurately.
pub fn balance(sys: &StableSystem, tol: &Tolerances) -> Result<BalancedSystem> {
    let n = sys.order();
    let (scale, a) = linalg::diagonal_balance(&sys.a)?;
    let b = DenseMatrix::from_fn(n, sys.num_inputs(), |i, j| sys.b[(i, j)] / scale[i]);
    let c = DenseMatrix::from_fn(sys.num_outputs(), n, |i, j| sys.c[(i, j)] * scale[j]);
    let s = schur(&a)?;
    let wb = &b * b.transpose();
    let wc = c.transpose() * &c;
    let p = solve_lyapunov_schur(&s, &wb, tol.stability_margin).map_err(stability)?;
    let q = solve_lyapunov_schur(&s.transposed(), &wc, tol.stability_margin).map_err(stability)?;
    drop(s);
    let res_p = lyapunov_residual(&a, &p, &wb);
    let at = a.transpose().to_owned();
    let res_q = lyapunov_residual(&at, &q, &wc);
    drop(at);
    if res_p > tol.lyapunov_residual || res_q > tol.lyapunov_residual {
        log::warn!("Lyapunov residuals {res_p:.3e} / {res_q:.3e} exceed {:.1e}", tol.lyapunov_residual);
    }

    let lp = psd_factor(&p, tol.gramian_clip)?;
    drop(p);
    let lq = psd_factor(&q, tol.gramian_clip)?;
    drop(q);
    if lp.ncols() == 0 || lq.ncols() == 0 {
        return Err(BalredError::Degenerate);
    }
    let m = lq.transpose() * &lp;
    let dec = svd(&m)?;
    let s1 = dec.s[0];
    // Below this level the output is indistinguishable from rounding noise.
    let floor =
        f64::EPSILON * linalg::fro(&sys.b) * linalg::fro(&sys.c) / linalg::fro(&sys.a).max(f64::MIN_POSITIVE);
    if !(s1 > floor) {
        return Err(BalredError::Degenerate);
    }
    let order = dec.s.iter().take_while(|&&v| v >= tol.hankel_cutoff * s1).count();
    let hsv: Vec<f64> = dec.s[..order].to_vec();
    let scale: Vec<f64> = hsv.iter().map(|v| 1.0 / v.sqrt()).collect();
    let v = DenseMatrix::from_fn(lp.ncols(), order, |i, j| dec.v[(i, j)] * scale[j]);
    let t = &lp * v;
    let u = DenseMatrix::from_fn(lq.ncols(), order, |i, j| dec.u[(i, j)] * scale[j]);
    let tinv = u.transpose() * lq.transpose();
    let a = &tinv * &a * &t;
    let b = &tinv * &b;
    let c = &c * &t;
    log::debug!("balanced {n} -> minimal order {order}, sigma1 = {s1:.6e}");
    Ok(BalancedSystem {
        a,
        b,
        c,
        d: sys.d.clone(),
        hsv,
        full_order: n,
        gramian_residuals: (res_p, res_q),
    })
}

fn stability(e: LinalgError) -> BalredError {
    match e {
        LinalgError::NotStable { abscissa } => BalredError::Unstable { abscissa },
        other => other.into(),
    }
}

/// `2 Σ_{i>k} σᵢ`.
pub fn error_bound(bal: &BalancedSystem, k: usize) -> Result<f64> {
    bal.check_order(k)?;
    Ok(2.0 * bal.hsv[k..].iter().rev().sum::<f64>())
}

/// Smallest `k` with `σ_{k+1} < ratio · σ₁`, or `q` if there is none.
pub fn suggest_order(bal: &BalancedSystem, ratio: f64) -> usize {
    let Some(&s1) = bal.hsv.first() else {
        return 0;
    };
    bal.hsv
        .iter()
        .position(|&s| s < ratio * s1)
        .unwrap_or(bal.q())
        .max(1)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Truncation,
    Residualization,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Truncation => "truncation",
            Method::Residualization => "residualization",
        })
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "truncation" | "truncate" => Ok(Method::Truncation),
            "residualization" | "residualize" => Ok(Method::Residualization),
            _ => Err(format!("unknown method `{s}` (expected truncate or residualize)")),
        }
    }
}

/// Order-`k` reduced model `dx/dt = A11 x + B1 u`, `y = C1 x + D u` with
/// `u = (h(t), δ(t))`.
#[derive(Debug, Clone)]
pub struct ReducedModel {
    pub a11: DenseMatrix,
    pub b1: DenseMatrix,
    pub c1: DenseMatrix,
    pub d: DenseMatrix,
    pub k: usize,
    pub method: Method,
    pub bound: f64,
    /// Hankel singular values of the retained states.
    pub hsv: Vec<f64>,
}

impl ReducedModel {
    pub fn num_inputs(&self) -> usize {
        self.b1.ncols()
    }

    pub fn num_outputs(&self) -> usize {
        self.c1.nrows()
    }

    pub fn has_impulse(&self) -> bool {
        self.b1.ncols() == 2
    }

    pub fn dc_gain(&self) -> Result<DenseMatrix> {
        dc_gain(&self.a11, &self.b1, &self.c1, &self.d)
    }

    fn verify_stable(self, tol: &Tolerances) -> Result<Self> {
        let abscissa = linalg::spectral_abscissa(&self.a11)?;
        if abscissa >= -tol.stability_margin {
            return Err(BalredError::UnstableReduced { abscissa });
        }
        Ok(self)
    }

    /// Text serialization: a header of `key value` lines followed by dense
    /// matrices in column-major order, 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        s.push_str("cme-reduce-model 1\n");
        s.push_str(&format!("method {}\n", self.method));
        s.push_str(&format!("order {}\n", self.k));
        s.push_str(&format!("inputs {}\n", self.num_inputs()));
        s.push_str(&format!("outputs {}\n", self.num_outputs()));
        s.push_str(&format!("bound {:.16e}\n", self.bound));
        s.push_str(&format!("hsv {}\n", self.hsv.len()));
        for v in &self.hsv {
            s.push_str(&format!("{v:.16e}\n"));
        }
        for (name, m) in [("A11", &self.a11), ("B1", &self.b1), ("C1", &self.c1), ("D", &self.d)] {
            s.push_str(&format!("{name} {} {}\n", m.nrows(), m.ncols()));
            for j in 0..m.ncols() {
                for i in 0..m.nrows() {
                    s.push_str(&format!("{:.16e}\n", m[(i, j)]));
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut last = 0;
        let mut next = |what: &str| -> Result<(usize, &str)> {
            let got = lines.next();
            if let Some((n, _)) = got {
                last = n;
            }
            got.ok_or_else(|| BalredError::Format { line: last + 1, msg: format!("expected {what}") })
        };
        fn fail<T>(line: usize, msg: impl Into<String>) -> Result<T> {
            Err(BalredError::Format { line, msg: msg.into() })
        }
        fn keyed<'a>(line: (usize, &'a str), key: &str) -> Result<(usize, Vec<&'a str>)> {
            let mut it = line.1.split_whitespace();
            if it.next() != Some(key) {
                return fail(line.0, format!("expected `{key}`"));
            }
            Ok((line.0, it.collect()))
        }
        fn num<T: FromStr>(line: usize, s: Option<&&str>) -> Result<T> {
            s.and_then(|v| v.parse().ok())
                .map_or_else(|| fail(line, "malformed number"), Ok)
        }

        let (ln, rest) = keyed(next("header")?, "cme-reduce-model")?;
        if rest != ["1"] {
            return fail(ln, "unsupported format version");
        }
        let (ln, rest) = keyed(next("method")?, "method")?;
        let method: Method = match rest.first().map(|m| m.parse()) {
            Some(Ok(m)) => m,
            _ => return fail(ln, "unknown method"),
        };
        let (ln, rest) = keyed(next("order")?, "order")?;
        let k: usize = num(ln, rest.first())?;
        let (ln, rest) = keyed(next("inputs")?, "inputs")?;
        let inputs: usize = num(ln, rest.first())?;
        let (ln, rest) = keyed(next("outputs")?, "outputs")?;
        let outputs: usize = num(ln, rest.first())?;
        let (ln, rest) = keyed(next("bound")?, "bound")?;
        let bound: f64 = num(ln, rest.first())?;
        let (ln, rest) = keyed(next("hsv")?, "hsv")?;
        let nh: usize = num(ln, rest.first())?;
        let mut hsv = Vec::with_capacity(nh);
        for _ in 0..nh {
            let (ln, v) = next("hsv value")?;
            hsv.push(num(ln, Some(&v))?);
        }
        let mut mats = Vec::with_capacity(4);
        for (name, rows, cols) in [("A11", k, k), ("B1", k, inputs), ("C1", outputs, k), ("D", outputs, inputs)] {
            let (ln, rest) = keyed(next(name)?, name)?;
            let (r, c): (usize, usize) = (num(ln, rest.first())?, num(ln, rest.get(1))?);
            if (r, c) != (rows, cols) {
                return fail(ln, format!("{name} must be {rows}x{cols}, got {r}x{c}"));
            }
            let mut m = DenseMatrix::zeros(r, c);
            for j in 0..c {
                for i in 0..r {
                    let (ln, v) = next("matrix entry")?;
                    m[(i, j)] = num(ln, Some(&v))?;
                }
            }
            mats.push(m);
        }
        if let Some((ln, _)) = lines.next() {
            return fail(ln, "trailing content");
        }
        let [a11, b1, c1, d]: [DenseMatrix; 4] = mats.try_into().expect("four blocks parsed");
        Ok(ReducedModel { a11, b1, c1, d, k, method, bound, hsv })
    }
}

impl fmt::Display for ReducedModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_text())
    }
}

fn block(m: &DenseMatrix, r0: usize, r1: usize, c0: usize, c1: usize) -> DenseMatrix {
    DenseMatrix::from_fn(r1 - r0, c1 - c0, |i, j| m[(r0 + i, c0 + j)])
}

/// Keeps the leading `k` balanced states.
pub fn truncate(bal: &BalancedSystem, k: usize, tol: &Tolerances) -> Result<ReducedModel> {
    let bound = error_bound(bal, k)?;
    let (m, r) = (bal.num_inputs(), bal.num_outputs());
    ReducedModel {
        a11: block(&bal.a, 0, k, 0, k),
        b1: block(&bal.b, 0, k, 0, m),
        c1: block(&bal.c, 0, r, 0, k),
        d: bal.feedthrough(),
        k,
        method: Method::Truncation,
        bound,
        hsv: bal.hsv[..k].to_vec(),
    }
    .verify_stable(tol)
}

/// Solves the trailing balanced states out at steady state.
pub fn residualize(bal: &BalancedSystem, k: usize, tol: &Tolerances) -> Result<ReducedModel> {
    let bound = error_bound(bal, k)?;
    let (q, m, r) = (bal.q(), bal.num_inputs(), bal.num_outputs());
    let a11 = block(&bal.a, 0, k, 0, k);
    let b1 = block(&bal.b, 0, k, 0, m);
    let c1 = block(&bal.c, 0, r, 0, k);
    let d = bal.feedthrough();
    let model = if k == q {
        ReducedModel { a11, b1, c1, d, k, method: Method::Residualization, bound, hsv: bal.hsv.clone() }
    } else {
        let a12 = block(&bal.a, 0, k, k, q);
        let a21 = block(&bal.a, k, q, 0, k);
        let a22 = block(&bal.a, k, q, k, q);
        let b2 = block(&bal.b, k, q, 0, m);
        let c2 = block(&bal.c, 0, r, k, q);
        let rhs = DenseMatrix::from_fn(q - k, k + m, |i, j| if j < k { a21[(i, j)] } else { b2[(i, j - k)] });
        let x = solve(&a22, &rhs).map_err(|e| match e {
            LinalgError::Singular => BalredError::SingularA22,
            other => other.into(),
        })?;
        let xa = block(&x, 0, q - k, 0, k);
        let xb = block(&x, 0, q - k, k, k + m);
        ReducedModel {
            a11: &a11 - &a12 * &xa,
            b1: &b1 - &a12 * &xb,
            c1: &c1 - &c2 * &xa,
            d: &d - &c2 * &xb,
            k,
            method: Method::Residualization,
            bound,
            hsv: bal.hsv[..k].to_vec(),
        }
    };
    model.verify_stable(tol)
}

/// Dispatches to [`truncate`] or [`residualize`].
pub fn reduce(bal: &BalancedSystem, k: usize, method: Method, tol: &Tolerances) -> Result<ReducedModel> {
    match method {
        Method::Truncation => truncate(bal, k, tol),
        Method::Residualization => residualize(bal, k, tol),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{fro, solve_lyapunov};
    use crate::network::parse_network;
    use crate::statespace::{build_generator, build_output, enumerate_states, OutputSelector};

    fn two_state(kf: f64, kb: f64) -> (Generator, OutputMatrix) {
        let net = parse_network(&format!(
            "species: A B\nreaction: A -> B @ {kf}\nreaction: B -> A @ {kb}\ninit: A=1 B=0\n"
        ))
        .unwrap();
        let space = enumerate_states(&net, &Default::default()).unwrap();
        let gen = build_generator(&net, &space);
        let out = build_output(&OutputSelector::single_state(vec![0, 1]), &space).unwrap();
        (gen, out)
    }

    fn reversible(kf: f64, kb: f64, n: i64) -> (Generator, OutputMatrix, Vec<f64>) {
        let net = parse_network(&format!(
            "species: S1 S2\nreaction: S1 -> S2 @ {kf}\nreaction: S2 -> S1 @ {kb}\ninit: S1={n} S2=0\n"
        ))
        .unwrap();
        let space = enumerate_states(&net, &Default::default()).unwrap();
        let gen = build_generator(&net, &space);
        let out = build_output(&OutputSelector::single_state(vec![0, n]), &space).unwrap();
        let p0 = space.point_mass(0);
        (gen, out, p0)
    }

    #[test]
    fn two_state_chain_by_hand() {
        let (gen, out) = two_state(3.0, 2.0);
        let sys = stabilize(&gen, &out, &[1.0, 0.0], &Tolerances::default()).unwrap();
        assert_eq!(sys.order(), 1);
        assert!((sys.a[(0, 0)] + 5.0).abs() < 1e-15);
        assert!((sys.b[(0, 0)] - 3.0).abs() < 1e-15);
        assert!((sys.c[(0, 0)] - 1.0).abs() < 1e-15);
        assert_eq!(sys.d, vec![0.0]);
        assert!(!sys.has_impulse());
    }

    #[test]
    fn uniform_initial_adds_impulse_channel() {
        let (gen, out) = two_state(3.0, 2.0);
        let sys = stabilize(&gen, &out, &[0.5, 0.5], &Tolerances::default()).unwrap();
        assert!(sys.has_impulse());
        assert_eq!(sys.z0, vec![0.5]);
        assert_eq!(sys.b[(0, 1)], 0.5);
    }

    #[test]
    fn bad_initial_distributions_rejected() {
        let (gen, out) = two_state(1.0, 1.0);
        let tol = Tolerances::default();
        assert!(matches!(stabilize(&gen, &out, &[0.6, 0.6], &tol), Err(BalredError::BadInitial(_))));
        assert!(matches!(stabilize(&gen, &out, &[1.5, -0.5], &tol), Err(BalredError::BadInitial(_))));
        assert!(matches!(stabilize(&gen, &out, &[1.0], &tol), Err(BalredError::Dimension(_))));
    }

    #[test]
    fn two_absorbing_states_are_reducible() {
        let net = parse_network("species: A B C\nreaction: A -> B @ 1\nreaction: A -> C @ 1\ninit: A=1\n").unwrap();
        let space = enumerate_states(&net, &Default::default()).unwrap();
        let gen = build_generator(&net, &space);
        let out = build_output(&OutputSelector::single_state(vec![0, 1, 0]), &space).unwrap();
        let err = stabilize(&gen, &out, &space.point_mass(0), &Tolerances::default()).unwrap_err();
        assert!(matches!(err, BalredError::Reducible { closed_classes: 2 }));
    }

    #[test]
    fn single_absorbing_state_is_accepted() {
        // Transient states feeding one absorbing state still leave a simple
        // zero eigenvalue.
        let net = parse_network("species: S P\nreaction: S -> P @ 2\ninit: S=4\n").unwrap();
        let space = enumerate_states(&net, &Default::default()).unwrap();
        let gen = build_generator(&net, &space);
        let out = build_output(&OutputSelector::single_state(vec![0, 4]), &space).unwrap();
        let sys = stabilize(&gen, &out, &space.point_mass(0), &Tolerances::default()).unwrap();
        assert_eq!(sys.order(), 4);
    }

    #[test]
    fn spectrum_and_trace_are_preserved() {
        // A birth-death generator is similar to the symmetric tridiagonal
        // matrix with off-diagonals sqrt(q_ij q_ji), whose spectrum is an
        // independent oracle.
        let (gen, out, p0) = reversible(2.0, 1.0, 20);
        let sys = stabilize(&gen, &out, &p0, &Tolerances::default()).unwrap();
        let full = gen.to_dense();
        let w = full.nrows();
        let sym = DenseMatrix::from_fn(w, w, |i, j| {
            if i == j {
                full[(i, i)]
            } else {
                (full[(i, j)] * full[(j, i)]).sqrt()
            }
        });
        let (mut oracle, _) = linalg::sym_eig(&sym).unwrap();
        assert!(oracle[0].abs() < 1e-9);
        oracle.remove(0);
        oracle.sort_by(f64::total_cmp);
        let ev = linalg::eigenvalues(&sys.a).unwrap();
        assert!(ev.iter().all(|e| e.im.abs() < 1e-8));
        let mut ev_a: Vec<f64> = ev.iter().map(|e| e.re).collect();
        ev_a.sort_by(f64::total_cmp);
        for (x, y) in oracle.iter().zip(&ev_a) {
            assert!((x - y).abs() < 1e-8, "{x} vs {y}");
        }
        let trace: f64 = (0..20).map(|i| sys.a[(i, i)]).sum();
        assert!((sys.generator_trace - trace).abs() < 1e-9 * trace.abs());
    }

    #[test]
    fn scalar_system_balances_to_one_half() {
        let sys = StableSystem {
            a: DenseMatrix::from_fn(1, 1, |_, _| -1.0),
            b: DenseMatrix::from_fn(1, 1, |_, _| 1.0),
            c: DenseMatrix::from_fn(1, 1, |_, _| 1.0),
            d: vec![0.0],
            z0: vec![0.0],
            generator_trace: -1.0,
        };
        let bal = balance(&sys, &Tolerances::default()).unwrap();
        assert_eq!(bal.q(), 1);
        assert!((bal.hsv[0] - 0.5).abs() < 1e-15);
        assert!((bal.a[(0, 0)] + 1.0).abs() < 1e-14);
        assert!((bal.b[(0, 0)].abs() - 1.0).abs() < 1e-14);
        assert!((bal.b[(0, 0)] * bal.c[(0, 0)] - 1.0).abs() < 1e-14);
    }

    fn gramians_are_balanced(bal: &BalancedSystem) {
        let q = bal.q();
        let p = solve_lyapunov(&bal.a, &(&bal.b * bal.b.transpose()), 1e-12).unwrap();
        let at = bal.a.transpose().to_owned();
        let qq = solve_lyapunov(&at, &(bal.c.transpose() * &bal.c), 1e-12).unwrap();
        let s1 = bal.hsv[0];
        for g in [&p, &qq] {
            let mut off = 0.0;
            for j in 0..q {
                for i in 0..q {
                    if i == j {
                        assert!((g[(i, i)] - bal.hsv[i]).abs() <= 1e-6 * bal.hsv[i] + 1e-7 * s1, "diag {i}");
                    } else {
                        off += g[(i, j)] * g[(i, j)];
                    }
                }
            }
            assert!(off.sqrt() <= 1e-6 * s1 * q as f64);
        }
    }

    #[test]
    fn balanced_gramians_are_diagonal() {
        let (gen, out, p0) = reversible(5.0, 1.0, 30);
        let tol = Tolerances::default();
        let sys = stabilize(&gen, &out, &p0, &tol).unwrap();
        let bal = balance(&sys, &tol).unwrap();
        assert!(bal.gramian_residuals.0 < 1e-8 && bal.gramian_residuals.1 < 1e-8);
        assert!(bal.hsv.windows(2).all(|w| w[0] >= w[1]) && bal.hsv.iter().all(|&s| s > 0.0));
        gramians_are_balanced(&bal);
    }

    #[test]
    fn bounds_orders_and_dc_gain() {
        let (gen, out, p0) = reversible(5.0, 1.0, 30);
        let tol = Tolerances::default();
        let sys = stabilize(&gen, &out, &p0, &tol).unwrap();
        let bal = balance(&sys, &tol).unwrap();
        let q = bal.q();
        assert_eq!(error_bound(&bal, q).unwrap(), 0.0);
        assert!(error_bound(&bal, 0).is_err() && error_bound(&bal, q + 1).is_err());
        for k in 1..q {
            let (b0, b1) = (error_bound(&bal, k).unwrap(), error_bound(&bal, k + 1).unwrap());
            assert!(b0 >= b1);
            assert!((b0 - b1 - 2.0 * bal.hsv[k]).abs() <= 1e-14 * b0);
        }
        let full_gain = sys.dc_gain().unwrap()[(0, 0)];
        let bal_gain = bal.dc_gain().unwrap()[(0, 0)];
        assert!((bal_gain - full_gain).abs() < 1e-6 * full_gain.abs(), "{bal_gain} {full_gain}");
        for k in [1, 3, q] {
            let r = residualize(&bal, k, &tol).unwrap();
            let g = r.dc_gain().unwrap()[(0, 0)];
            assert!((g - bal_gain).abs() <= 1e-9 * bal_gain.abs(), "k={k}");
            assert_eq!(r.bound, error_bound(&bal, k).unwrap());
        }
        let t = truncate(&bal, q, &tol).unwrap();
        assert!(fro(&(&t.a11 - &bal.a)) == 0.0);
    }

    fn fake_balanced(hsv: Vec<f64>) -> BalancedSystem {
        let q = hsv.len();
        BalancedSystem {
            a: DenseMatrix::identity(q, q) * -1.0,
            b: DenseMatrix::zeros(q, 1),
            c: DenseMatrix::zeros(1, q),
            d: vec![0.0],
            hsv,
            full_order: q,
            gramian_residuals: (0.0, 0.0),
        }
    }

    #[test]
    fn suggest_order_threshold() {
        assert_eq!(suggest_order(&fake_balanced(vec![1.0, 1e-1, 1e-5]), 1e-3), 2);
        assert_eq!(suggest_order(&fake_balanced(vec![1.0]), 1e-3), 1);
        assert_eq!(suggest_order(&fake_balanced(vec![1.0, 0.5, 0.2]), 1e-3), 3);
    }

    #[test]
    fn model_text_round_trip() {
        let (gen, out, p0) = reversible(5.0, 1.0, 12);
        let tol = Tolerances::default();
        let sys = stabilize(&gen, &out, &p0, &tol).unwrap();
        let bal = balance(&sys, &tol).unwrap();
        for method in [Method::Truncation, Method::Residualization] {
            let m = reduce(&bal, 3, method, &tol).unwrap();
            let text = m.to_text();
            let back = ReducedModel::from_text(&text).unwrap();
            assert_eq!(back.method, method);
            assert_eq!(back.k, 3);
            assert_eq!(back.bound, m.bound);
            assert_eq!(back.hsv, m.hsv);
            for (x, y) in [(&back.a11, &m.a11), (&back.b1, &m.b1), (&back.c1, &m.c1), (&back.d, &m.d)] {
                assert!(fro(&(x - y)) == 0.0);
            }
            assert_eq!(back.to_text(), text);
        }
    }

    #[test]
    fn model_text_errors_carry_line() {
        let err = ReducedModel::from_text("cme-reduce-model 1\nmethod truncation\norder x\n").unwrap_err();
        assert!(matches!(err, BalredError::Format { line: 3, .. }), "{err}");
        let err = ReducedModel::from_text("cme-reduce-model 1\nmethod magic\n").unwrap_err();
        assert!(matches!(err, BalredError::Format { line: 2, .. }));
    }
}
