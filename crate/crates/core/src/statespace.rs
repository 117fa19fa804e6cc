//! Reachable state sets, sparse infinitesimal generators and output matrices.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::DenseMatrix;
use crate::network::ReactionNetwork;

/// Default hard limit on the number of enumerated states.
pub const DEFAULT_MAX_STATES: usize = 200_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StateSpaceError {
    #[error("state explosion: more than {limit} reachable states (set a cap or use FSP)")]
    Explosion { limit: usize },
    #[error("seed state {0:?} is invalid for this network")]
    InvalidSeed(Vec<i64>),
    #[error("generator invariant violated: {0}")]
    GeneratorInvariant(String),
    #[error("output selector: {0}")]
    Selector(String),
}

/// Ordered, indexed set of population vectors.
///
/// States are stored contiguously; state `i` occupies
/// `data[i * n .. (i + 1) * n]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    n: usize,
    data: Vec<i64>,
    index: HashMap<Vec<i64>, usize>,
}

impl StateSpace {
    fn empty(n: usize) -> Self {
        Self { n, data: Vec::new(), index: HashMap::new() }
    }

    fn push(&mut self, s: Vec<i64>) -> usize {
        let i = self.len();
        self.data.extend_from_slice(&s);
        self.index.insert(s, i);
        i
    }

    /// Number of states `w`.
    pub fn len(&self) -> usize {
        if self.n == 0 {
            self.index.len()
        } else {
            self.data.len() / self.n
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn num_species(&self) -> usize {
        self.n
    }

    pub fn state(&self, i: usize) -> &[i64] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// 0-based ordinal of a population vector.
    pub fn index_of(&self, s: &[i64]) -> Option<usize> {
        self.index.get(s).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = &[i64]> {
        (0..self.len()).map(move |i| self.state(i))
    }

    /// Point mass on state `i`.
    pub fn point_mass(&self, i: usize) -> Vec<f64> {
        let mut p = vec![0.0; self.len()];
        p[i] = 1.0;
        p
    }

    /// CSV with a header row, 1-based ordinals and one column per species.
    pub fn write_csv<W: Write>(&self, names: &[&str], mut out: W) -> io::Result<()> {
        writeln!(out, "ordinal,{}", names.join(","))?;
        for (i, s) in self.iter().enumerate() {
            let row: Vec<String> = s.iter().map(i64::to_string).collect();
            writeln!(out, "{},{}", i + 1, row.join(","))?;
        }
        Ok(())
    }
}

/// Limits applied while exploring the reachable set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnumerationOptions {
    /// Optional inclusive upper bound per species.
    pub caps: Option<Vec<Option<i64>>>,
    pub max_states: usize,
}

impl Default for EnumerationOptions {
    fn default() -> Self {
        Self { caps: None, max_states: DEFAULT_MAX_STATES }
    }
}

impl EnumerationOptions {
    fn admits(&self, s: &[i64]) -> bool {
        if s.iter().any(|&v| v < 0) {
            return false;
        }
        match &self.caps {
            Some(caps) => s
                .iter()
                .zip(caps)
                .all(|(&v, cap)| cap.is_none_or(|c| v <= c)),
            None => true,
        }
    }
}

/// Result of a bounded breadth-first exploration.
#[derive(Debug, Clone)]
pub struct Ball {
    pub space: StateSpace,
    /// Number of breadth-first layers explored.
    pub radius: usize,
    /// True when no admissible state outside the ball is reachable.
    pub complete: bool,
}

/// Enumerates every state reachable from the initial population.
///
/// Layers are explored breadth first; inside a layer states are sorted
/// lexicographically, so the initial state is always ordinal 0.
pub fn enumerate_states(
    network: &ReactionNetwork,
    options: &EnumerationOptions,
) -> Result<StateSpace, StateSpaceError> {
    Ok(enumerate_ball(network, &[network.initial_state().to_vec()], None, options)?.space)
}

/// Breadth-first ball of `radius` layers around `seeds` (unbounded when `None`).
///
/// A move along reaction `k` is followed only where that reaction has
/// positive propensity.
pub fn enumerate_ball(
    network: &ReactionNetwork,
    seeds: &[Vec<i64>],
    radius: Option<usize>,
    options: &EnumerationOptions,
) -> Result<Ball, StateSpaceError> {
    let n = network.num_species();
    let stoich = network.stoichiometry();
    let mut space = StateSpace::empty(n);
    let mut frontier = Vec::new();
    for s in seeds {
        if s.len() != n || !options.admits(s) {
            return Err(StateSpaceError::InvalidSeed(s.clone()));
        }
        if space.index_of(s).is_none() {
            frontier.push(space.push(s.clone()));
        }
    }
    if space.len() > options.max_states {
        return Err(StateSpaceError::Explosion { limit: options.max_states });
    }

    let expand = |space: &StateSpace, frontier: &[usize]| -> BTreeSet<Vec<i64>> {
        let mut next = BTreeSet::new();
        for &i in frontier {
            let s = space.state(i);
            for (r, jump) in network.reactions().iter().zip(stoich.columns()) {
                if jump.iter().all(|&d| d == 0) || r.propensity(s) <= 0.0 {
                    continue;
                }
                let t: Vec<i64> = s.iter().zip(jump).map(|(a, b)| a + b).collect();
                if options.admits(&t) && space.index_of(&t).is_none() {
                    next.insert(t);
                }
            }
        }
        next
    };

    let mut layers = 0;
    while !frontier.is_empty() && radius.is_none_or(|r| layers < r) {
        let next = expand(&space, &frontier);
        if space.len() + next.len() > options.max_states {
            return Err(StateSpaceError::Explosion { limit: options.max_states });
        }
        frontier = next.into_iter().map(|t| space.push(t)).collect();
        if !frontier.is_empty() {
            layers += 1;
        }
    }
    let complete = frontier.is_empty() || expand(&space, &frontier).is_empty();
    Ok(Ball { space, radius: layers, complete })
}

/// Compressed sparse column matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CscMatrix {
    nrows: usize,
    ncols: usize,
    col_ptr: Vec<usize>,
    row_idx: Vec<usize>,
    values: Vec<f64>,
}

impl CscMatrix {
    /// Assembles from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; ncols + 1];
        for &(_, j, _) in triplets {
            counts[j + 1] += 1;
        }
        for j in 0..ncols {
            counts[j + 1] += counts[j];
        }
        let mut next = counts.clone();
        let mut rows = vec![0usize; triplets.len()];
        let mut vals = vec![0.0; triplets.len()];
        for &(i, j, v) in triplets {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) out of bounds");
            rows[next[j]] = i;
            vals[next[j]] = v;
            next[j] += 1;
        }

        let mut col_ptr = Vec::with_capacity(ncols + 1);
        let mut row_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        col_ptr.push(0);
        let mut scratch: Vec<(usize, f64)> = Vec::new();
        for j in 0..ncols {
            scratch.clear();
            scratch.extend((counts[j]..counts[j + 1]).map(|p| (rows[p], vals[p])));
            scratch.sort_by_key(|&(i, _)| i);
            for &(i, v) in &scratch {
                match row_idx.last() {
                    Some(&last) if last == i && row_idx.len() > col_ptr[j] => {
                        *values.last_mut().unwrap() += v;
                    }
                    _ => {
                        row_idx.push(i);
                        values.push(v);
                    }
                }
            }
            col_ptr.push(row_idx.len());
        }
        Self { nrows, ncols, col_ptr, row_idx, values }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// `(row, value)` pairs of column `j`, rows ascending.
    pub fn column(&self, j: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        self.row_idx[r.clone()].iter().copied().zip(self.values[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let r = self.col_ptr[j]..self.col_ptr[j + 1];
        match self.row_idx[r.clone()].binary_search(&i) {
            Ok(p) => self.values[r.start + p],
            Err(_) => 0.0,
        }
    }

    /// `y = A x`.
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (j, &xj) in x.iter().enumerate() {
            if xj != 0.0 {
                for (i, a) in self.column(j) {
                    y[i] += a * xj;
                }
            }
        }
    }

    pub fn column_sums(&self) -> Vec<f64> {
        (0..self.ncols).map(|j| self.column(j).map(|(_, v)| v).sum()).collect()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(self.nrows, self.ncols);
        for j in 0..self.ncols {
            for (i, v) in self.column(j) {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Matrix Market coordinate format, 1-based indices.
    pub fn write_matrix_market<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "%%MatrixMarket matrix coordinate real general")?;
        writeln!(out, "{} {} {}", self.nrows, self.ncols, self.nnz())?;
        for j in 0..self.ncols {
            for (i, v) in self.column(j) {
                writeln!(out, "{} {} {:.16e}", i + 1, j + 1, v)?;
            }
        }
        Ok(())
    }
}

/// Treatment of transitions that leave an enumerated (capped or truncated) set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Boundary {
    /// Leaving transitions are dropped entirely; columns still sum to zero.
    Reflecting,
    /// The diagonal keeps the full outflow, so probability leaks out (FSP).
    Absorbing,
}

/// Sparse infinitesimal generator `𝒜` over a [`StateSpace`], entries in s⁻¹.
#[derive(Debug, Clone, PartialEq)]
pub struct Generator {
    matrix: CscMatrix,
    boundary: Boundary,
}

impl Generator {
    pub fn matrix(&self) -> &CscMatrix {
        &self.matrix
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    pub fn dim(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        self.matrix.to_dense()
    }

    /// Checks sign structure and (for reflecting generators) zero column sums
    /// within `tol` times the largest column magnitude.
    pub fn check_invariants(&self, tol: f64) -> Result<(), StateSpaceError> {
        for j in 0..self.dim() {
            let mut sum = 0.0;
            let mut scale = 0.0f64;
            for (i, v) in self.matrix.column(j) {
                if i == j && v > 0.0 {
                    return Err(StateSpaceError::GeneratorInvariant(format!(
                        "positive diagonal entry {v} at {j}"
                    )));
                }
                if i != j && v < 0.0 {
                    return Err(StateSpaceError::GeneratorInvariant(format!(
                        "negative rate {v} at ({i}, {j})"
                    )));
                }
                sum += v;
                scale = scale.max(v.abs());
            }
            if self.boundary == Boundary::Reflecting && sum.abs() > tol * scale.max(f64::MIN_POSITIVE) {
                return Err(StateSpaceError::GeneratorInvariant(format!(
                    "column {j} sums to {sum:e}"
                )));
            }
        }
        Ok(())
    }
}

/// Assembles `𝒜` with reflecting boundaries.
pub fn build_generator(network: &ReactionNetwork, space: &StateSpace) -> Generator {
    build_generator_with(network, space, Boundary::Reflecting)
}

/// Assembles `𝒜`: `𝒜[j][i] += a_k(s_i)` whenever `s_j = s_i + n_k`, and the
/// diagonal collects the outflow.
pub fn build_generator_with(
    network: &ReactionNetwork,
    space: &StateSpace,
    boundary: Boundary,
) -> Generator {
    let w = space.len();
    let stoich = network.stoichiometry();
    let mut triplets = Vec::with_capacity(w * (network.num_reactions() + 1));
    let mut target = vec![0i64; space.num_species()];
    for i in 0..w {
        let s = space.state(i);
        let mut outflow = 0.0;
        for (r, jump) in network.reactions().iter().zip(stoich.columns()) {
            let a = r.propensity(s);
            if a <= 0.0 || jump.iter().all(|&d| d == 0) {
                continue;
            }
            for ((t, a0), d) in target.iter_mut().zip(s).zip(jump) {
                *t = a0 + d;
            }
            match space.index_of(&target) {
                Some(j) => {
                    triplets.push((j, i, a));
                    outflow += a;
                }
                None if boundary == Boundary::Absorbing => outflow += a,
                None => {}
            }
        }
        triplets.push((i, i, -outflow));
    }
    Generator {
        matrix: CscMatrix::from_triplets(w, w, &triplets),
        boundary,
    }
}

/// Predicate on a single population vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum StatePredicate {
    /// Exactly this population vector.
    State(Vec<i64>),
    /// `lo <= s[species] <= hi` (molecules, inclusive).
    Range { species: usize, lo: i64, hi: i64 },
}

impl StatePredicate {
    pub fn matches(&self, s: &[i64]) -> bool {
        match self {
            StatePredicate::State(v) => v.as_slice() == s,
            StatePredicate::Range { species, lo, hi } => (*lo..=*hi).contains(&s[*species]),
        }
    }

    fn validate(&self, n: usize) -> Result<(), StateSpaceError> {
        match self {
            StatePredicate::State(v) if v.len() != n => Err(StateSpaceError::Selector(format!(
                "state has {} entries, expected {n}",
                v.len()
            ))),
            StatePredicate::Range { species, .. } if *species >= n => Err(
                StateSpaceError::Selector(format!("species index {species} out of range")),
            ),
            StatePredicate::Range { lo, hi, .. } if lo > hi => Err(StateSpaceError::Selector(
                format!("empty range {lo}..={hi}"),
            )),
            _ => Ok(()),
        }
    }
}

/// One row of `𝒞`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum SelectorRow {
    Single(StatePredicate),
    /// Sum of `weight` over every matching predicate.
    WeightedSum(Vec<(StatePredicate, f64)>),
}

/// Which (combinations of) state probabilities form the output `y = 𝒞 p`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputSelector {
    pub rows: Vec<SelectorRow>,
}

impl OutputSelector {
    pub fn new(rows: Vec<SelectorRow>) -> Self {
        Self { rows }
    }

    pub fn single_state(state: Vec<i64>) -> Self {
        Self::new(vec![SelectorRow::Single(StatePredicate::State(state))])
    }

    pub fn push(&mut self, row: SelectorRow) {
        self.rows.push(row);
    }

    /// Parses one row of the command-line selector language:
    /// `state NAME=INT ...` or `range NAME LO HI`.
    pub fn parse_row(spec: &str, network: &ReactionNetwork) -> Result<SelectorRow, StateSpaceError> {
        let err = |m: String| StateSpaceError::Selector(m);
        let mut words = spec.split_whitespace();
        match words.next() {
            Some("state") => {
                let mut state = vec![0i64; network.num_species()];
                for w in words {
                    let (name, value) = w
                        .split_once('=')
                        .ok_or_else(|| err(format!("expected NAME=INT, got `{w}`")))?;
                    let i = network
                        .species_index(name)
                        .ok_or_else(|| err(format!("unknown species `{name}`")))?;
                    state[i] = value.parse().map_err(|_| err(format!("invalid count `{value}`")))?;
                }
                Ok(SelectorRow::Single(StatePredicate::State(state)))
            }
            Some("range") => {
                let parts: Vec<&str> = words.collect();
                let [name, lo, hi] = parts.as_slice() else {
                    return Err(err("expected `range NAME LO HI`".into()));
                };
                let species = network
                    .species_index(name)
                    .ok_or_else(|| err(format!("unknown species `{name}`")))?;
                let lo = lo.parse().map_err(|_| err(format!("invalid bound `{lo}`")))?;
                let hi = hi.parse().map_err(|_| err(format!("invalid bound `{hi}`")))?;
                Ok(SelectorRow::Single(StatePredicate::Range { species, lo, hi }))
            }
            _ => Err(err(format!("unrecognised selector `{spec}`"))),
        }
    }
}

/// Dense `r × w` output matrix.
#[derive(Debug, Clone)]
pub struct OutputMatrix {
    pub matrix: DenseMatrix,
    /// Rows whose predicates matched no state (left as zeros).
    pub empty_rows: Vec<usize>,
}

impl OutputMatrix {
    pub fn nrows(&self) -> usize {
        self.matrix.nrows()
    }

    /// `y = 𝒞 p`.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        (0..self.matrix.nrows())
            .map(|r| p.iter().enumerate().map(|(i, &pi)| self.matrix[(r, i)] * pi).sum())
            .collect()
    }
}

impl fmt::Display for OutputMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{} output matrix", self.matrix.nrows(), self.matrix.ncols())
    }
}

/// Builds `𝒞` for `selector` over `space`.
pub fn build_output(
    selector: &OutputSelector,
    space: &StateSpace,
) -> Result<OutputMatrix, StateSpaceError> {
    let n = space.num_species();
    let w = space.len();
    let mut matrix = DenseMatrix::zeros(selector.rows.len(), w);
    let mut empty_rows = Vec::new();
    for (r, row) in selector.rows.iter().enumerate() {
        let mut hit = false;
        match row {
            SelectorRow::Single(StatePredicate::State(v)) => {
                StatePredicate::State(v.clone()).validate(n)?;
                if let Some(i) = space.index_of(v) {
                    matrix[(r, i)] = 1.0;
                    hit = true;
                }
            }
            SelectorRow::Single(pred) => {
                pred.validate(n)?;
                for (i, s) in space.iter().enumerate() {
                    if pred.matches(s) {
                        matrix[(r, i)] = 1.0;
                        hit = true;
                    }
                }
            }
            SelectorRow::WeightedSum(terms) => {
                for (pred, _) in terms {
                    pred.validate(n)?;
                }
                for (i, s) in space.iter().enumerate() {
                    for (pred, weight) in terms {
                        if pred.matches(s) {
                            matrix[(r, i)] += weight;
                            hit = true;
                        }
                    }
                }
            }
        }
        if !hit {
            log::warn!("output row {r} matches no enumerated state");
            empty_rows.push(r);
        }
    }
    Ok(OutputMatrix { matrix, empty_rows })
}
