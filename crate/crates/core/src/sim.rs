//! Trajectories from the full CME, reduced models, Gillespie ensembles and a
//! finite state projection, plus comparison metrics.

use std::collections::BTreeMap;
use std::fmt;
use std::io::{self, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::balred::{BalredError, ReducedModel};
use crate::linalg::{self, expm, mat_vec, solve, DenseMatrix, LinalgError, Tolerances};
use crate::network::ReactionNetwork;
use crate::statespace::{
    build_generator_with, enumerate_ball, Boundary, EnumerationOptions, Generator, OutputMatrix,
    StateSpace, StateSpaceError,
};

/// Largest state space integrated with dense matrix exponentials.
pub const DENSE_LIMIT: usize = 6000;

/// Name of the SSA random generator, recorded in output metadata.
pub const SSA_GENERATOR: &str = "ChaCha8Rng (rand_chacha 0.9), run r seeded with seed XOR r";

#[derive(Debug, Error)]
pub enum SimError {
    #[error("time grid must be finite, nonnegative and strictly increasing")]
    BadGrid,
    #[error("{w} states exceed the dense limit {limit}; use fsp or a reduced model")]
    TooLarge { w: usize, limit: usize },
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("probability not conserved at t={time}: sum {sum:.3e}, min entry {min:.3e}")]
    Conservation { time: f64, sum: f64, min: f64 },
    #[error("trajectories are sampled on different time grids")]
    GridMismatch,
    #[error("invalid SSA configuration: {0}")]
    SsaConfig(String),
    #[error("FSP budget must lie in (0, 1), got {0}")]
    FspBudget(f64),
    #[error("error transient did not settle within horizon {horizon:.3e} s")]
    NotSettled { horizon: f64 },
    #[error(transparent)]
    StateSpace(#[from] StateSpaceError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Balred(#[from] BalredError),
}

type Result<T> = std::result::Result<T, SimError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Cme,
    Reduced,
    Fsp,
    Ssa,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Cme => "cme",
            Source::Reduced => "reduced",
            Source::Fsp => "fsp",
            Source::Ssa => "ssa",
        })
    }
}

/// Sampled vectors (full distributions or outputs) on a time grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub values: Vec<Vec<f64>>,
    pub source: Source,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.values.first().map_or(0, Vec::len)
    }

    /// Applies the output matrix to every sample.
    pub fn outputs(&self, out: &OutputMatrix) -> Trajectory {
        Trajectory {
            times: self.times.clone(),
            values: self.values.iter().map(|p| out.apply(p)).collect(),
            source: self.source,
        }
    }

    /// Component `i` over time.
    pub fn series(&self, i: usize) -> Vec<f64> {
        self.values.iter().map(|v| v[i]).collect()
    }

    /// CSV with header `time,y1,..,yr`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        write!(w, "time")?;
        for i in 0..self.dim() {
            write!(w, ",y{}", i + 1)?;
        }
        writeln!(w)?;
        for (t, v) in self.times.iter().zip(&self.values) {
            write!(w, "{t:.16e}")?;
            for x in v {
                write!(w, ",{x:.16e}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }
}

/// Sidecar describing how a trajectory was produced.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub source: Source,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub generator: Option<String>,
    pub parameters: BTreeMap<String, String>,
    pub tolerances: Tolerances,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
}

/// Time grid `start..=stop` with `count` points, linear or logarithmic.
pub fn time_grid(start: f64, stop: f64, count: usize, log: bool) -> Result<Vec<f64>> {
    if count == 0 || !(start.is_finite() && stop.is_finite()) || start < 0.0 || stop < start {
        return Err(SimError::BadGrid);
    }
    if count == 1 {
        return Ok(vec![start]);
    }
    let grid: Vec<f64> = if log {
        if start <= 0.0 {
            return Err(SimError::BadGrid);
        }
        let (a, b) = (start.ln(), stop.ln());
        (0..count)
            .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
            .collect()
    } else {
        (0..count)
            .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
            .collect()
    };
    check_grid(&grid)?;
    Ok(grid)
}

fn check_grid(times: &[f64]) -> Result<()> {
    let ok = times.iter().all(|t| t.is_finite() && *t >= 0.0)
        && times.windows(2).all(|w| w[1] > w[0]);
    if ok {
        Ok(())
    } else {
        Err(SimError::BadGrid)
    }
}

/// `x ↦ e^{M Δt} x`, caching the exponential for recently used steps.
struct Stepper<'a> {
    m: &'a DenseMatrix,
    cache: Vec<(f64, DenseMatrix)>,
}

impl<'a> Stepper<'a> {
    fn new(m: &'a DenseMatrix) -> Self {
        Self { m, cache: Vec::new() }
    }

    fn step(&mut self, dt: f64, x: &[f64]) -> Result<Vec<f64>> {
        if dt == 0.0 {
            return Ok(x.to_vec());
        }
        let hit = self
            .cache
            .iter()
            .position(|(h, _)| (h - dt).abs() <= 1e-12 * dt);
        let idx = match hit {
            Some(i) => i,
            None => {
                if self.cache.len() >= 4 {
                    self.cache.remove(0);
                }
                self.cache.push((dt, expm(&(self.m * dt))?));
                self.cache.len() - 1
            }
        };
        Ok(mat_vec(&self.cache[idx].1, x))
    }
}

fn propagate(m: &DenseMatrix, x0: &[f64], times: &[f64]) -> Result<Vec<Vec<f64>>> {
    let mut stepper = Stepper::new(m);
    let mut out = Vec::with_capacity(times.len());
    let mut x = x0.to_vec();
    let mut t = 0.0;
    for &ti in times {
        x = stepper.step(ti - t, &x)?;
        t = ti;
        out.push(x.clone());
    }
    Ok(out)
}

/// Integrates `dp/dt = 𝒜 p` by matrix-exponential stepping.
pub fn solve_cme(gen: &Generator, p0: &[f64], times: &[f64], tol: &Tolerances) -> Result<Trajectory> {
    check_grid(times)?;
    let w = gen.dim();
    if p0.len() != w {
        return Err(SimError::Dimension(format!(
            "initial distribution has {} entries, state space has {w}",
            p0.len()
        )));
    }
    if w > DENSE_LIMIT {
        return Err(SimError::TooLarge { w, limit: DENSE_LIMIT });
    }
    let values = propagate(&gen.to_dense(), p0, times)?;
    if gen.boundary() == Boundary::Reflecting {
        for (t, p) in times.iter().zip(&values) {
            let sum: f64 = p.iter().sum();
            let min = p.iter().copied().fold(f64::INFINITY, f64::min);
            if (sum - 1.0).abs() > tol.probability_sum || min < tol.probability_floor {
                return Err(SimError::Conservation { time: *t, sum, min });
            }
        }
    }
    Ok(Trajectory { times: times.to_vec(), values, source: Source::Cme })
}

/// Stationary distribution of a chain with one closed class.
pub fn stationary_distribution(gen: &Generator) -> Result<Vec<f64>> {
    let w = gen.dim();
    if w > DENSE_LIMIT {
        return Err(SimError::TooLarge { w, limit: DENSE_LIMIT });
    }
    let mut m = gen.to_dense();
    for j in 0..w {
        m[(0, j)] = 1.0;
    }
    let rhs = DenseMatrix::from_fn(w, 1, |i, _| if i == 0 { 1.0 } else { 0.0 });
    let x = solve(&m, &rhs)?;
    Ok((0..w).map(|i| x[(i, 0)]).collect())
}

/// Output of the reduced model under the unit step (plus the impulse at
/// `t = 0` when the model has that channel):
/// `y(t) = C1 (e^{A11 t}(b_δ + A11⁻¹ b_h) − A11⁻¹ b_h) + d`.
pub fn solve_reduced(model: &ReducedModel, times: &[f64]) -> Result<Trajectory> {
    check_grid(times)?;
    let k = model.a11.nrows();
    let bh = DenseMatrix::from_fn(k, 1, |i, _| model.b1[(i, 0)]);
    let xs = solve(&model.a11, &bh)?;
    let xs: Vec<f64> = (0..k).map(|i| xs[(i, 0)]).collect();
    let w0: Vec<f64> = (0..k)
        .map(|i| xs[i] + if model.has_impulse() { model.b1[(i, 1)] } else { 0.0 })
        .collect();
    let r = model.num_outputs();
    let d: Vec<f64> = (0..r).map(|i| model.d[(i, 0)]).collect();
    let states = propagate(&model.a11, &w0, times)?;
    let values = states
        .into_iter()
        .map(|w| {
            let z: Vec<f64> = w.iter().zip(&xs).map(|(a, b)| a - b).collect();
            mat_vec(&model.c1, &z).iter().zip(&d).map(|(y, d)| y + d).collect()
        })
        .collect();
    Ok(Trajectory { times: times.to_vec(), values, source: Source::Reduced })
}

/// Error metrics between two output trajectories on the same grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Per-output sup-norm error.
    pub sup: Vec<f64>,
    /// Per-output L2 error (trapezoidal rule).
    pub l2: Vec<f64>,
    pub sup_max: f64,
    /// L2 norm of the error vector signal.
    pub l2_total: f64,
    /// `l2_total / ‖u‖` with `u` the unit step on the same horizon.
    pub gain: f64,
    pub horizon: f64,
}

fn trapezoid(times: &[f64], f: impl Fn(usize) -> f64) -> f64 {
    times
        .windows(2)
        .enumerate()
        .map(|(i, w)| 0.5 * (w[1] - w[0]) * (f(i) + f(i + 1)))
        .sum()
}

/// Compares a reference trajectory with an approximation.
pub fn compare(full: &Trajectory, red: &Trajectory) -> Result<Metrics> {
    if full.times.len() != red.times.len()
        || full.times.iter().zip(&red.times).any(|(a, b)| (a - b).abs() > 1e-12 * a.abs().max(1.0))
    {
        return Err(SimError::GridMismatch);
    }
    if full.dim() != red.dim() {
        return Err(SimError::Dimension(format!(
            "outputs differ in size: {} vs {}",
            full.dim(),
            red.dim()
        )));
    }
    let r = full.dim();
    let err: Vec<Vec<f64>> = full
        .values
        .iter()
        .zip(&red.values)
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
        .collect();
    let sup: Vec<f64> = (0..r)
        .map(|i| err.iter().map(|e| e[i].abs()).fold(0.0, f64::max))
        .collect();
    let l2: Vec<f64> = (0..r)
        .map(|i| trapezoid(&full.times, |n| err[n][i] * err[n][i]).sqrt())
        .collect();
    let l2_total = l2.iter().map(|v| v * v).sum::<f64>().sqrt();
    let horizon = match (full.times.first(), full.times.last()) {
        (Some(a), Some(b)) => b - a,
        _ => 0.0,
    };
    let gain = if horizon > 0.0 { l2_total / horizon.sqrt() } else { 0.0 };
    Ok(Metrics {
        sup_max: sup.iter().copied().fold(0.0, f64::max),
        sup,
        l2,
        l2_total,
        gain,
        horizon,
    })
}

/// Settings for [`realized_l2_gain`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainOptions {
    /// First horizon; defaults to eight time constants of the slowest
    /// reduced mode.
    pub initial_horizon: Option<f64>,
    /// Grid intervals per horizon.
    pub intervals: usize,
    /// Accept the horizon once the transient part of the squared error over
    /// its second half is below this fraction of the accumulated integral.
    pub tail_fraction: f64,
    pub max_doublings: usize,
}

impl Default for GainOptions {
    fn default() -> Self {
        Self { initial_horizon: None, intervals: 8192, tail_fraction: 0.01, max_doublings: 24 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GainEstimate {
    /// `‖y − y_red‖_{L2[0,τ]} / ‖h‖_{L2[0,τ]}`.
    pub gain: f64,
    pub horizon: f64,
    /// Transient tail share of the squared error integral at acceptance.
    pub tail_fraction: f64,
    pub sup_error: f64,
}

/// Measures the L2 gain of the reduction error under the unit step on a
/// horizon that grows until the error transient has died out.
///
/// By causality the ratio over any `[0, τ]` is a lower estimate of the
/// error system's L2 gain, so it never exceeds a valid certificate.
pub fn realized_l2_gain(
    gen: &Generator,
    out: &OutputMatrix,
    p0: &[f64],
    model: &ReducedModel,
    opts: &GainOptions,
    tol: &Tolerances,
) -> Result<GainEstimate> {
    let r = out.nrows();
    if model.num_outputs() != r {
        return Err(SimError::Dimension(format!(
            "model has {} outputs, selector has {r}",
            model.num_outputs()
        )));
    }
    let y_full_inf = out.apply(&stationary_distribution(gen)?);
    let gain_red = model.dc_gain()?;
    let e_inf: Vec<f64> = (0..r).map(|i| y_full_inf[i] - gain_red[(i, 0)]).collect();

    let mut tau = match opts.initial_horizon {
        Some(t) if t > 0.0 => t,
        _ => {
            let alpha = linalg::spectral_abscissa(&model.a11)?;
            8.0 / alpha.abs().max(1e-12)
        }
    };
    let n = opts.intervals.max(16);
    for _ in 0..=opts.max_doublings {
        let times: Vec<f64> = (0..=n).map(|i| tau * i as f64 / n as f64).collect();
        let full = solve_cme(gen, p0, &times, tol)?.outputs(out);
        let red = solve_reduced(model, &times)?;
        let err: Vec<Vec<f64>> = full
            .values
            .iter()
            .zip(&red.values)
            .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x - y).collect())
            .collect();
        let total = trapezoid(&times, |i| err[i].iter().map(|e| e * e).sum());
        let half = &times[n / 2..];
        let tail = trapezoid(half, |i| {
            err[i + n / 2].iter().zip(&e_inf).map(|(e, f)| (e - f) * (e - f)).sum()
        });
        let frac = if total > 0.0 { tail / total } else { 0.0 };
        // Errors at rounding level count as settled.
        let noise = (1e3 * f64::EPSILON).powi(2) * tau * r as f64;
        if frac <= opts.tail_fraction || tail <= noise {
            let sup_error = err.iter().flatten().map(|e| e.abs()).fold(0.0, f64::max);
            return Ok(GainEstimate { gain: (total / tau).sqrt(), horizon: tau, tail_fraction: frac, sup_error });
        }
        tau *= 2.0;
    }
    Err(SimError::NotSettled { horizon: tau })
}

/// Speed-up exponent `η = log10((t_full − t_red) / t_red)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Eta {
    Value { eta: f64 },
    /// `t_full ≤ t_red`: no speed-up, η undefined.
    Undefined { t_full: f64, t_red: f64 },
}

impl Eta {
    pub fn value(&self) -> Option<f64> {
        match self {
            Eta::Value { eta } => Some(*eta),
            Eta::Undefined { .. } => None,
        }
    }
}

impl fmt::Display for Eta {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Eta::Value { eta } => write!(f, "{eta:.4}"),
            Eta::Undefined { t_full, t_red } => {
                write!(f, "undefined (t_full={t_full:.3e} s <= t_red={t_red:.3e} s)")
            }
        }
    }
}

pub fn speedup_eta(t_full: f64, t_red: f64) -> Eta {
    if t_full > t_red && t_red > 0.0 {
        Eta::Value { eta: ((t_full - t_red) / t_red).log10() }
    } else {
        Eta::Undefined { t_full, t_red }
    }
}

/// Gillespie ensemble configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SsaConfig {
    pub seed: u64,
    pub runs: usize,
    pub t_max: f64,
    /// Strictly increasing record times within `[0, t_max]`.
    pub record: Vec<f64>,
}

impl SsaConfig {
    fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(SimError::SsaConfig("runs must be at least 1".into()));
        }
        if !(self.t_max.is_finite() && self.t_max >= 0.0) {
            return Err(SimError::SsaConfig(format!("t_max {} is not a valid time", self.t_max)));
        }
        check_grid(&self.record).map_err(|_| SimError::SsaConfig("record grid must be strictly increasing".into()))?;
        if self.record.last().is_some_and(|&t| t > self.t_max) {
            return Err(SimError::SsaConfig("record times exceed t_max".into()));
        }
        Ok(())
    }
}

/// Random stream for run `run` of an ensemble seeded with `seed`.
pub fn run_rng(seed: u64, run: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed ^ run)
}

/// Jump chain of one SSA realization up to `t_max`: `states[i]` holds on
/// `[times[i], times[i+1])`.
#[derive(Debug, Clone, PartialEq)]
pub struct SsaPath {
    pub times: Vec<f64>,
    pub states: Vec<Vec<i64>>,
    /// Reaction index fired at each jump.
    pub reactions: Vec<usize>,
}

struct Direct<'a> {
    net: &'a ReactionNetwork,
    jumps: Vec<Vec<i64>>,
    props: Vec<f64>,
}

impl<'a> Direct<'a> {
    fn new(net: &'a ReactionNetwork) -> Self {
        let stoich = net.stoichiometry();
        let jumps = stoich.columns().map(<[i64]>::to_vec).collect();
        Self { net, jumps, props: vec![0.0; net.num_reactions()] }
    }

    /// Samples the next event from `state`: `(waiting time, reaction)`, or
    /// `None` when every propensity vanishes.
    fn next<R: Rng>(&mut self, state: &[i64], rng: &mut R) -> Option<(f64, usize)> {
        self.net.propensities(state, &mut self.props);
        let a0: f64 = self.props.iter().sum();
        if !(a0 > 0.0) {
            return None;
        }
        let u1: f64 = rng.random();
        let dt = -(1.0 - u1).ln() / a0;
        let target = rng.random::<f64>() * a0;
        let mut acc = 0.0;
        let mut chosen = None;
        for (k, &a) in self.props.iter().enumerate() {
            if a > 0.0 {
                chosen = Some(k);
                acc += a;
                if target < acc {
                    break;
                }
            }
        }
        chosen.map(|k| (dt, k))
    }

    fn apply(&self, state: &mut [i64], k: usize) {
        for (s, d) in state.iter_mut().zip(&self.jumps[k]) {
            *s += d;
        }
    }
}

/// One direct-method realization, recording every jump.
pub fn ssa_path<R: Rng>(net: &ReactionNetwork, rng: &mut R, t_max: f64) -> SsaPath {
    let mut sim = Direct::new(net);
    let mut state = net.initial_state().to_vec();
    let mut path = SsaPath { times: vec![0.0], states: vec![state.clone()], reactions: Vec::new() };
    let mut t = 0.0;
    while let Some((dt, k)) = sim.next(&state, rng) {
        t += dt;
        if t > t_max {
            break;
        }
        sim.apply(&mut state, k);
        path.times.push(t);
        path.states.push(state.clone());
        path.reactions.push(k);
    }
    path
}

/// One realization sampled at the record times.
pub fn ssa_sample<R: Rng>(net: &ReactionNetwork, rng: &mut R, record: &[f64]) -> Vec<Vec<i64>> {
    let mut sim = Direct::new(net);
    let mut state = net.initial_state().to_vec();
    let mut out = Vec::with_capacity(record.len());
    let mut t = 0.0;
    let mut next_rec = 0;
    let t_end = record.last().copied().unwrap_or(0.0);
    loop {
        let event = sim.next(&state, rng);
        let t_next = event.map_or(f64::INFINITY, |(dt, _)| t + dt);
        while next_rec < record.len() && record[next_rec] < t_next {
            out.push(state.clone());
            next_rec += 1;
        }
        match event {
            Some((_, k)) if t_next <= t_end => {
                sim.apply(&mut state, k);
                t = t_next;
            }
            _ => break,
        }
    }
    out
}

/// States of every run at every record time.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub record: Vec<f64>,
    /// `samples[run][time]`.
    pub samples: Vec<Vec<Vec<i64>>>,
    pub seed: u64,
}

impl Ensemble {
    pub fn runs(&self) -> usize {
        self.samples.len()
    }

    /// Empirical distribution over `space` at record index `ti`, and the
    /// mass that fell outside it.
    pub fn distribution(&self, ti: usize, space: &StateSpace) -> (Vec<f64>, f64) {
        let mut p = vec![0.0; space.len()];
        let mut outside = 0.0;
        let inc = 1.0 / self.runs() as f64;
        for run in &self.samples {
            match space.index_of(&run[ti]) {
                Some(i) => p[i] += inc,
                None => outside += inc,
            }
        }
        (p, outside)
    }

    /// Empirical marginal of one species at record index `ti`.
    pub fn marginal(&self, ti: usize, species: usize) -> BTreeMap<i64, f64> {
        let mut m = BTreeMap::new();
        let inc = 1.0 / self.runs() as f64;
        for run in &self.samples {
            *m.entry(run[ti][species]).or_insert(0.0) += inc;
        }
        m
    }

    /// Empirical outputs `𝒞 p̂(t)` over the record grid.
    pub fn outputs(&self, out: &OutputMatrix, space: &StateSpace) -> Trajectory {
        let values = (0..self.record.len())
            .map(|ti| out.apply(&self.distribution(ti, space).0))
            .collect();
        Trajectory { times: self.record.clone(), values, source: Source::Ssa }
    }
}

/// Direct-method ensemble. Run `r` uses the stream [`run_rng`]`(seed, r)`, so
/// the result does not depend on scheduling.
pub fn ssa_ensemble(net: &ReactionNetwork, cfg: &SsaConfig) -> Result<Ensemble> {
    cfg.validate()?;
    let one = |r: usize| ssa_sample(net, &mut run_rng(cfg.seed, r as u64), &cfg.record);
    #[cfg(feature = "parallel")]
    let samples = {
        use rayon::prelude::*;
        (0..cfg.runs).into_par_iter().map(one).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let samples = (0..cfg.runs).map(one).collect();
    Ok(Ensemble { record: cfg.record.clone(), samples, seed: cfg.seed })
}

/// `½ Σ |p − q|`, padding the shorter vector with zeros.
pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    let n = p.len().max(q.len());
    0.5 * (0..n)
        .map(|i| (p.get(i).copied().unwrap_or(0.0) - q.get(i).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// Total variation between two integer-supported marginals.
pub fn total_variation_maps(p: &BTreeMap<i64, f64>, q: &BTreeMap<i64, f64>) -> f64 {
    let keys: std::collections::BTreeSet<_> = p.keys().chain(q.keys()).collect();
    0.5 * keys
        .into_iter()
        .map(|k| (p.get(k).copied().unwrap_or(0.0) - q.get(k).copied().unwrap_or(0.0)).abs())
        .sum::<f64>()
}

/// Exact marginal of one species from a distribution over `space`.
pub fn marginal(p: &[f64], space: &StateSpace, species: usize) -> BTreeMap<i64, f64> {
    let mut m = BTreeMap::new();
    for (s, &v) in space.iter().zip(p) {
        *m.entry(s[species]).or_insert(0.0) += v;
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FspOptions {
    /// Admissible 1-norm mass defect, in (0, 1).
    pub eps: f64,
    /// Breadth-first radius of the first projection.
    pub initial_radius: usize,
    pub max_states: usize,
}

impl Default for FspOptions {
    fn default() -> Self {
        Self { eps: 1e-3, initial_radius: 0, max_states: DENSE_LIMIT }
    }
}

#[derive(Debug, Clone)]
pub struct FspResult {
    pub space: StateSpace,
    pub p: Vec<f64>,
    /// `1 − Σ p`.
    pub defect: f64,
    pub radius: usize,
    pub iterations: usize,
    /// The projection covers the whole reachable set.
    pub complete: bool,
}

/// Finite state projection: grows a breadth-first ball around the support of
/// `p0` one layer at a time until the leaked mass at `t` is at most `eps`
/// (or the ball covers the reachable set).
pub fn fsp_solve(
    net: &ReactionNetwork,
    p0: &[(Vec<i64>, f64)],
    t: f64,
    opts: &FspOptions,
) -> Result<FspResult> {
    if !(opts.eps > 0.0 && opts.eps < 1.0) {
        return Err(SimError::FspBudget(opts.eps));
    }
    if !(t.is_finite() && t >= 0.0) {
        return Err(SimError::BadGrid);
    }
    let seeds: Vec<Vec<i64>> = p0.iter().map(|(s, _)| s.clone()).collect();
    let enum_opts = EnumerationOptions { caps: None, max_states: opts.max_states };
    let mut radius = opts.initial_radius;
    let mut iterations = 0;
    loop {
        iterations += 1;
        let ball = enumerate_ball(net, &seeds, Some(radius), &enum_opts)?;
        let gen = build_generator_with(net, &ball.space, Boundary::Absorbing);
        let mut x0 = vec![0.0; ball.space.len()];
        for (s, v) in p0 {
            if let Some(i) = ball.space.index_of(s) {
                x0[i] += v;
            }
        }
        let p = propagate(&gen.to_dense(), &x0, &[t])?.pop().unwrap_or_default();
        let defect = 1.0 - p.iter().sum::<f64>();
        if defect <= opts.eps || ball.complete {
            return Ok(FspResult {
                space: ball.space,
                p,
                defect,
                radius: ball.radius,
                iterations,
                complete: ball.complete,
            });
        }
        radius = ball.radius + 1;
    }
}
