//! Reaction networks: species, stoichiometry and propensity functions.
//!
//! Networks are read from a line-oriented text format:
//!
//! ```text
//! # reversible isomerisation
//! species: S1 S2
//! reaction: S1 -> S2 @ 150
//! reaction: S2 -> S1 @ 1
//! reaction: 2 A -> 0 @ 0.5
//! reaction: S -> P @ mm(1, 2)
//! init: S1=300 S2=0
//! ```
//!
//! Species absent from the `init` line start at zero. Directives may appear in
//! any order, but every species must be declared on a `species` line.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// A chemical species and its slot in the population vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Species {
    pub name: String,
    pub index: usize,
}

/// Rate law of a reaction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum PropensityKind {
    /// Mass action with rate constant `rate` (s⁻¹ for orders 0 and 1,
    /// (molecules·s)⁻¹ for order 2).
    MassAction { rate: f64 },
    /// `vmax * s / (km + s)` on the single reactant.
    MichaelisMenten { vmax: f64, km: f64 },
}

/// One reaction channel. Each species appears at most once per side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reaction {
    /// `(species index, count)` consumed by one firing.
    pub reactants: Vec<(usize, u32)>,
    /// `(species index, count)` produced by one firing.
    pub products: Vec<(usize, u32)>,
    pub propensity: PropensityKind,
}

impl Reaction {
    /// Number of molecules consumed by one firing.
    pub fn order(&self) -> u32 {
        self.reactants.iter().map(|&(_, c)| c).sum()
    }

    /// Rate at which this reaction fires from `state`. Zero whenever a
    /// reactant count is insufficient.
    pub fn propensity(&self, state: &[i64]) -> f64 {
        if self
            .reactants
            .iter()
            .any(|&(i, c)| state[i] < i64::from(c))
        {
            return 0.0;
        }
        match self.propensity {
            PropensityKind::MassAction { rate } => match self.reactants.as_slice() {
                [] => rate,
                [(i, 1)] => rate * state[*i] as f64,
                [(i, 1), (j, 1)] => rate * state[*i] as f64 * state[*j] as f64,
                [(i, 2)] => {
                    let s = state[*i] as f64;
                    rate * s * (s - 1.0) / 2.0
                }
                _ => unreachable!("reaction order validated at construction"),
            },
            PropensityKind::MichaelisMenten { vmax, km } => {
                let s = state[self.reactants[0].0] as f64;
                vmax * s / (km + s)
            }
        }
    }
}

/// Net change of each species per firing, `n × m`, stored column by column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StoichMatrix {
    species: usize,
    reactions: usize,
    entries: Vec<i64>,
}

impl StoichMatrix {
    pub fn nrows(&self) -> usize {
        self.species
    }

    pub fn ncols(&self) -> usize {
        self.reactions
    }

    /// Jump vector of reaction `k`.
    pub fn column(&self, k: usize) -> &[i64] {
        &self.entries[k * self.species..(k + 1) * self.species]
    }

    pub fn get(&self, species: usize, reaction: usize) -> i64 {
        self.entries[reaction * self.species + species]
    }

    pub fn columns(&self) -> impl Iterator<Item = &[i64]> {
        (0..self.reactions).map(move |k| self.column(k))
    }
}

/// Validated reaction network with its initial population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReactionNetwork {
    species: Vec<Species>,
    reactions: Vec<Reaction>,
    initial_state: Vec<i64>,
}

impl ReactionNetwork {
    /// Builds a network from already-resolved parts.
    pub fn new(
        names: Vec<String>,
        reactions: Vec<Reaction>,
        initial_state: Vec<i64>,
    ) -> Result<Self, ParseError> {
        let mut seen = HashMap::new();
        for (i, name) in names.iter().enumerate() {
            if !is_identifier(name) {
                return Err(ParseError::whole(ParseErrorKind::Syntax(format!(
                    "invalid species name `{name}`"
                ))));
            }
            if seen.insert(name.as_str(), i).is_some() {
                return Err(ParseError::whole(ParseErrorKind::DuplicateSpecies(
                    name.clone(),
                )));
            }
        }
        if initial_state.len() != names.len() {
            return Err(ParseError::whole(ParseErrorKind::Syntax(format!(
                "initial state has {} entries for {} species",
                initial_state.len(),
                names.len()
            ))));
        }
        if let Some(&v) = initial_state.iter().find(|&&v| v < 0) {
            return Err(ParseError::whole(ParseErrorKind::NegativeCount(v)));
        }
        for r in &reactions {
            validate_reaction(r, names.len()).map_err(ParseError::whole)?;
        }
        let species = names
            .into_iter()
            .enumerate()
            .map(|(index, name)| Species { name, index })
            .collect();
        Ok(Self {
            species,
            reactions,
            initial_state,
        })
    }

    pub fn species(&self) -> &[Species] {
        &self.species
    }

    pub fn reactions(&self) -> &[Reaction] {
        &self.reactions
    }

    pub fn initial_state(&self) -> &[i64] {
        &self.initial_state
    }

    pub fn num_species(&self) -> usize {
        self.species.len()
    }

    pub fn num_reactions(&self) -> usize {
        self.reactions.len()
    }

    pub fn species_index(&self, name: &str) -> Option<usize> {
        self.species.iter().position(|s| s.name == name)
    }

    /// Same network started from a different population vector.
    pub fn with_initial_state(&self, initial_state: Vec<i64>) -> Result<Self, ParseError> {
        Self::new(
            self.species.iter().map(|s| s.name.clone()).collect(),
            self.reactions.clone(),
            initial_state,
        )
    }

    /// Stoichiometric matrix with entries `products - reactants`.
    pub fn stoichiometry(&self) -> StoichMatrix {
        let n = self.num_species();
        let m = self.num_reactions();
        let mut entries = vec![0i64; n * m];
        for (k, r) in self.reactions.iter().enumerate() {
            for &(i, c) in &r.reactants {
                entries[k * n + i] -= i64::from(c);
            }
            for &(i, c) in &r.products {
                entries[k * n + i] += i64::from(c);
            }
        }
        StoichMatrix {
            species: n,
            reactions: m,
            entries,
        }
    }

    /// All propensities at `state`, in reaction order.
    pub fn propensities(&self, state: &[i64], out: &mut [f64]) {
        for (slot, r) in out.iter_mut().zip(&self.reactions) {
            *slot = r.propensity(state);
        }
    }

    /// Renders the network in the text format accepted by [`parse_network`].
    pub fn to_text(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for ReactionNetwork {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<&str> = self.species.iter().map(|s| s.name.as_str()).collect();
        writeln!(f, "species: {}", names.join(" "))?;
        let side = |terms: &[(usize, u32)]| -> String {
            if terms.is_empty() {
                return "0".to_string();
            }
            terms
                .iter()
                .map(|&(i, c)| {
                    if c == 1 {
                        names[i].to_string()
                    } else {
                        format!("{c} {}", names[i])
                    }
                })
                .collect::<Vec<_>>()
                .join(" + ")
        };
        for r in &self.reactions {
            let rate = match r.propensity {
                PropensityKind::MassAction { rate } => format!("{rate:?}"),
                PropensityKind::MichaelisMenten { vmax, km } => format!("mm({vmax:?}, {km:?})"),
            };
            writeln!(
                f,
                "reaction: {} -> {} @ {rate}",
                side(&r.reactants),
                side(&r.products)
            )?;
        }
        let init: Vec<String> = self
            .species
            .iter()
            .zip(&self.initial_state)
            .map(|(s, v)| format!("{}={v}", s.name))
            .collect();
        writeln!(f, "init: {}", init.join(" "))
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseErrorKind {
    #[error("syntax error: {0}")]
    Syntax(String),
    #[error("unknown species `{0}`")]
    UnknownSpecies(String),
    #[error("duplicate species `{0}`")]
    DuplicateSpecies(String),
    #[error("species `{0}` appears twice on one side of a reaction")]
    RepeatedTerm(String),
    #[error("rate parameters must be positive and finite, got {0}")]
    NonpositiveRate(f64),
    #[error("reaction order {0} is not supported (mass action allows at most two reactant molecules)")]
    UnsupportedOrder(u32),
    #[error("Michaelis-Menten propensity needs exactly one reactant molecule")]
    MichaelisMentenArity,
    #[error("stoichiometric counts must be positive integers")]
    ZeroCount,
    #[error("molecule counts must be nonnegative, got {0}")]
    NegativeCount(i64),
    #[error("species `{0}` initialised twice")]
    DuplicateInit(String),
    #[error("missing `species:` line")]
    MissingSpecies,
    #[error("missing `init:` line")]
    MissingInit,
}

/// Parse or validation failure. `line == 0` refers to the document as a whole.
#[derive(Debug, Clone, PartialEq, Error)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub kind: ParseErrorKind,
}

impl ParseError {
    fn at(line: usize, column: usize, kind: ParseErrorKind) -> Self {
        Self { line, column, kind }
    }

    fn whole(kind: ParseErrorKind) -> Self {
        Self::at(0, 0, kind)
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.line == 0 {
            write!(f, "{}", self.kind)
        } else {
            write!(f, "line {}, column {}: {}", self.line, self.column, self.kind)
        }
    }
}

fn is_identifier(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

fn validate_rate(v: f64) -> Result<(), ParseErrorKind> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(ParseErrorKind::NonpositiveRate(v))
    }
}

fn validate_reaction(r: &Reaction, n: usize) -> Result<(), ParseErrorKind> {
    for side in [&r.reactants, &r.products] {
        for (pos, &(i, c)) in side.iter().enumerate() {
            if i >= n {
                return Err(ParseErrorKind::UnknownSpecies(format!("#{i}")));
            }
            if c == 0 {
                return Err(ParseErrorKind::ZeroCount);
            }
            if side[..pos].iter().any(|&(j, _)| j == i) {
                return Err(ParseErrorKind::RepeatedTerm(format!("#{i}")));
            }
        }
    }
    match r.propensity {
        PropensityKind::MassAction { rate } => {
            validate_rate(rate)?;
            if r.order() > 2 {
                return Err(ParseErrorKind::UnsupportedOrder(r.order()));
            }
        }
        PropensityKind::MichaelisMenten { vmax, km } => {
            validate_rate(vmax)?;
            validate_rate(km)?;
            if r.reactants.len() != 1 || r.reactants[0].1 != 1 {
                return Err(ParseErrorKind::MichaelisMentenArity);
            }
        }
    }
    Ok(())
}

/// A slice of the current line with its 1-based starting column.
#[derive(Clone, Copy)]
struct Span<'a> {
    text: &'a str,
    column: usize,
}

impl<'a> Span<'a> {
    fn trim(self) -> Self {
        let start = self.text.len() - self.text.trim_start().len();
        Span {
            text: self.text.trim(),
            column: self.column + self.text[..start].chars().count(),
        }
    }

    fn split_at(self, byte: usize, sep_len: usize) -> (Self, Self) {
        let (a, b) = (&self.text[..byte], &self.text[byte + sep_len..]);
        let col_b = self.column + self.text[..byte + sep_len].chars().count();
        (
            Span { text: a, column: self.column },
            Span { text: b, column: col_b },
        )
    }

    fn split(self, sep: char) -> Vec<Self> {
        let mut out = Vec::new();
        let mut rest = self;
        while let Some(pos) = rest.text.find(sep) {
            let (a, b) = rest.split_at(pos, sep.len_utf8());
            out.push(a);
            rest = b;
        }
        out.push(rest);
        out
    }

    fn words(self) -> Vec<Self> {
        let mut out = Vec::new();
        let mut col = self.column;
        let mut start: Option<(usize, usize)> = None;
        for (byte, ch) in self.text.char_indices() {
            if ch.is_whitespace() {
                if let Some((b, c)) = start.take() {
                    out.push(Span { text: &self.text[b..byte], column: c });
                }
            } else if start.is_none() {
                start = Some((byte, col));
            }
            col += 1;
        }
        if let Some((b, c)) = start {
            out.push(Span { text: &self.text[b..], column: c });
        }
        out
    }
}

struct Pending<'a> {
    line: usize,
    span: Span<'a>,
}

/// Parses and validates a network description.
pub fn parse_network(text: &str) -> Result<ReactionNetwork, ParseError> {
    let mut species: Vec<String> = Vec::new();
    let mut species_seen = false;
    let mut reactions: Vec<Pending> = Vec::new();
    let mut init: Option<Pending> = None;

    for (lineno, raw) in text.lines().enumerate() {
        let line = lineno + 1;
        let content = raw.split('#').next().unwrap_or("");
        let span = Span { text: content, column: 1 }.trim();
        if span.text.is_empty() {
            continue;
        }
        let Some(colon) = span.text.find(':') else {
            return Err(ParseError::at(
                line,
                span.column,
                ParseErrorKind::Syntax("expected `directive: ...`".into()),
            ));
        };
        let (head, body) = span.split_at(colon, 1);
        let body = body.trim();
        match head.text.trim() {
            "species" => {
                species_seen = true;
                for w in body.words() {
                    if !is_identifier(w.text) || w.text == "0" {
                        return Err(ParseError::at(
                            line,
                            w.column,
                            ParseErrorKind::Syntax(format!("invalid species name `{}`", w.text)),
                        ));
                    }
                    if species.iter().any(|s| s == w.text) {
                        return Err(ParseError::at(
                            line,
                            w.column,
                            ParseErrorKind::DuplicateSpecies(w.text.to_string()),
                        ));
                    }
                    species.push(w.text.to_string());
                }
            }
            "reaction" => reactions.push(Pending { line, span: body }),
            "init" => {
                if init.is_some() {
                    return Err(ParseError::at(
                        line,
                        head.column,
                        ParseErrorKind::Syntax("duplicate `init:` line".into()),
                    ));
                }
                init = Some(Pending { line, span: body });
            }
            other => {
                return Err(ParseError::at(
                    line,
                    head.column,
                    ParseErrorKind::Syntax(format!("unknown directive `{other}`")),
                ))
            }
        }
    }

    if !species_seen {
        return Err(ParseError::whole(ParseErrorKind::MissingSpecies));
    }
    let Some(init) = init else {
        return Err(ParseError::whole(ParseErrorKind::MissingInit));
    };

    let lookup = |line: usize, w: Span| -> Result<usize, ParseError> {
        species.iter().position(|s| s == w.text).ok_or_else(|| {
            ParseError::at(line, w.column, ParseErrorKind::UnknownSpecies(w.text.to_string()))
        })
    };

    let mut parsed = Vec::with_capacity(reactions.len());
    for p in &reactions {
        parsed.push(parse_reaction(p.line, p.span, &lookup)?);
    }

    let mut initial_state = vec![0i64; species.len()];
    let mut assigned = vec![false; species.len()];
    for w in init.span.words() {
        let Some(eq) = w.text.find('=') else {
            return Err(ParseError::at(
                init.line,
                w.column,
                ParseErrorKind::Syntax("expected NAME=COUNT".into()),
            ));
        };
        let (name, value) = w.split_at(eq, 1);
        let idx = lookup(init.line, name)?;
        let count: i64 = value.text.parse().map_err(|_| {
            ParseError::at(
                init.line,
                value.column,
                ParseErrorKind::Syntax(format!("invalid count `{}`", value.text)),
            )
        })?;
        if count < 0 {
            return Err(ParseError::at(init.line, value.column, ParseErrorKind::NegativeCount(count)));
        }
        if std::mem::replace(&mut assigned[idx], true) {
            return Err(ParseError::at(
                init.line,
                name.column,
                ParseErrorKind::DuplicateInit(name.text.to_string()),
            ));
        }
        initial_state[idx] = count;
    }

    ReactionNetwork::new(species, parsed, initial_state)
}

fn parse_reaction(
    line: usize,
    span: Span,
    lookup: &dyn Fn(usize, Span) -> Result<usize, ParseError>,
) -> Result<Reaction, ParseError> {
    let syntax = |col: usize, msg: &str| ParseError::at(line, col, ParseErrorKind::Syntax(msg.into()));
    let Some(arrow) = span.text.find("->") else {
        return Err(syntax(span.column, "expected `->`"));
    };
    let (lhs, rest) = span.split_at(arrow, 2);
    let Some(at) = rest.text.find('@') else {
        return Err(syntax(rest.column, "expected `@ RATE`"));
    };
    let (rhs, rate) = rest.split_at(at, 1);
    let reactants = parse_side(line, lhs.trim(), lookup)?;
    let products = parse_side(line, rhs.trim(), lookup)?;
    let rate = rate.trim();

    let propensity = if let Some(inner) = rate.text.strip_prefix("mm(") {
        let Some(inner) = inner.strip_suffix(')') else {
            return Err(syntax(rate.column, "expected `mm(VMAX, KM)`"));
        };
        let args = Span { text: inner, column: rate.column + 3 }.split(',');
        if args.len() != 2 {
            return Err(syntax(rate.column, "expected `mm(VMAX, KM)`"));
        }
        let vmax = parse_rate(line, args[0].trim())?;
        let km = parse_rate(line, args[1].trim())?;
        PropensityKind::MichaelisMenten { vmax, km }
    } else {
        PropensityKind::MassAction { rate: parse_rate(line, rate)? }
    };

    let reaction = Reaction { reactants, products, propensity };
    validate_reaction(&reaction, usize::MAX).map_err(|kind| ParseError::at(line, span.column, kind))?;
    Ok(reaction)
}

fn parse_rate(line: usize, w: Span) -> Result<f64, ParseError> {
    let v: f64 = w.text.parse().map_err(|_| {
        ParseError::at(line, w.column, ParseErrorKind::Syntax(format!("invalid number `{}`", w.text)))
    })?;
    validate_rate(v).map_err(|k| ParseError::at(line, w.column, k))?;
    Ok(v)
}

fn parse_side(
    line: usize,
    span: Span,
    lookup: &dyn Fn(usize, Span) -> Result<usize, ParseError>,
) -> Result<Vec<(usize, u32)>, ParseError> {
    if span.text == "0" || span.text == "∅" {
        return Ok(Vec::new());
    }
    if span.text.is_empty() {
        return Err(ParseError::at(
            line,
            span.column,
            ParseErrorKind::Syntax("empty reaction side (write `0`)".into()),
        ));
    }
    let mut terms: Vec<(usize, u32)> = Vec::new();
    for term in span.split('+') {
        let term = term.trim();
        let words = term.words();
        let (count, name) = match words.as_slice() {
            [single] => {
                let digits = single.text.bytes().take_while(u8::is_ascii_digit).count();
                if digits == 0 {
                    (1, *single)
                } else {
                    let (c, n) = single.split_at(digits, 0);
                    (parse_count(line, c)?, n)
                }
            }
            [c, n] => (parse_count(line, *c)?, *n),
            _ => {
                return Err(ParseError::at(
                    line,
                    term.column,
                    ParseErrorKind::Syntax("expected `[COUNT] SPECIES`".into()),
                ))
            }
        };
        let idx = lookup(line, name)?;
        if terms.iter().any(|&(j, _)| j == idx) {
            return Err(ParseError::at(
                line,
                name.column,
                ParseErrorKind::RepeatedTerm(name.text.to_string()),
            ));
        }
        terms.push((idx, count));
    }
    Ok(terms)
}

fn parse_count(line: usize, w: Span) -> Result<u32, ParseError> {
    match w.text.parse::<u32>() {
        Ok(0) => Err(ParseError::at(line, w.column, ParseErrorKind::ZeroCount)),
        Ok(c) => Ok(c),
        Err(_) => Err(ParseError::at(
            line,
            w.column,
            ParseErrorKind::Syntax(format!("invalid count `{}`", w.text)),
        )),
    }
}
