//! WebAssembly entry points for the browser demo. Every export takes plain
//! numbers and returns a JSON document for the page to plot.

use cme_reduce::balred::{self, BalancedSystem};
use cme_reduce::linalg::Tolerances;
use cme_reduce::network::{parse_network, ReactionNetwork};
use cme_reduce::sim;
use cme_reduce::statespace::{
    build_generator, build_output, enumerate_states, EnumerationOptions, Generator, OutputMatrix,
    OutputSelector, StateSpace,
};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Keeps dense balancing responsive in the browser.
pub const MAX_STATES: usize = 700;

type Result<T> = std::result::Result<T, String>;

struct Model {
    net: ReactionNetwork,
    space: StateSpace,
    gen: Generator,
    out: OutputMatrix,
}

fn model(text: &str, output: &str) -> Result<Model> {
    let net = parse_network(text).map_err(|e| e.to_string())?;
    let opts = EnumerationOptions { max_states: MAX_STATES, ..Default::default() };
    let space = enumerate_states(&net, &opts).map_err(|e| e.to_string())?;
    let gen = build_generator(&net, &space);
    let row = OutputSelector::parse_row(output, &net).map_err(|e| e.to_string())?;
    let out = build_output(&OutputSelector::new(vec![row]), &space).map_err(|e| e.to_string())?;
    Ok(Model { net, space, gen, out })
}

fn balanced(m: &Model, tol: &Tolerances) -> Result<BalancedSystem> {
    let sys = balred::stabilize(&m.gen, &m.out, &m.space.point_mass(0), tol).map_err(|e| e.to_string())?;
    balred::balance(&sys, tol).map_err(|e| e.to_string())
}

fn grid(t_stop: f64, points: usize) -> Result<Vec<f64>> {
    if points < 2 || points > 2000 {
        return Err("points must be between 2 and 2000".into());
    }
    sim::time_grid(0.0, t_stop, points, false).map_err(|e| e.to_string())
}

fn first(t: &sim::Trajectory) -> Vec<f64> {
    t.series(0)
}

fn positive_rate(name: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(format!("{name} must be a positive rate"))
    }
}

/// Reversible isomerization `A ⇌ B` starting from `n` molecules of A,
/// observed through the probability of full conversion.
pub fn reversible(kf: f64, kb: f64, n: u32, k: usize, t_stop: f64, points: usize) -> Result<Value> {
    positive_rate("kf", kf)?;
    positive_rate("kb", kb)?;
    let text = format!("species: A B\nreaction: A -> B @ {kf}\nreaction: B -> A @ {kb}\ninit: A={n}\n");
    let m = model(&text, &format!("state A=0 B={n}"))?;
    let tol = Tolerances::default();
    let bal = balanced(&m, &tol)?;
    let k = k.clamp(1, bal.q());
    let reduced = balred::truncate(&bal, k, &tol).map_err(|e| e.to_string())?;
    let times = grid(t_stop, points)?;
    let full = sim::solve_cme(&m.gen, &m.space.point_mass(0), &times, &tol)
        .map_err(|e| e.to_string())?
        .outputs(&m.out);
    let red = sim::solve_reduced(&reduced, &times).map_err(|e| e.to_string())?;
    let metrics = sim::compare(&full, &red).map_err(|e| e.to_string())?;
    let bounds: Vec<f64> = (1..=bal.q()).map(|i| balred::error_bound(&bal, i).unwrap_or(0.0)).collect();
    Ok(json!({
        "states": m.space.len(),
        "q": bal.q(),
        "k": k,
        "hsv": bal.hsv,
        "bounds": bounds,
        "bound": reduced.bound,
        "times": times,
        "full": first(&full),
        "reduced": first(&red),
        "sup_error": metrics.sup_max,
        "grid_gain": metrics.gain,
    }))
}

/// Catalytic conversion `S + E ⇌ C → P + E` (all rates 1) against its
/// balanced reduction and the one-species Michaelis–Menten model.
pub fn enzyme(s0: u32, e0: u32, k: usize, t_stop: f64, points: usize) -> Result<Value> {
    if s0 == 0 || e0 == 0 {
        return Err("substrate and enzyme counts must be positive".into());
    }
    let text = format!(
        "species: S E C P\nreaction: S + E -> C @ 1\nreaction: C -> S + E @ 1\n\
         reaction: C -> P + E @ 1\ninit: S={s0} E={e0}\n"
    );
    let m = model(&text, &format!("state S=0 E={e0} C=0 P={s0}"))?;
    let tol = Tolerances::default();
    let bal = balanced(&m, &tol)?;
    let k = k.clamp(1, bal.q());
    let reduced = balred::truncate(&bal, k, &tol).map_err(|e| e.to_string())?;
    let times = grid(t_stop, points)?;
    let full = sim::solve_cme(&m.gen, &m.space.point_mass(0), &times, &tol)
        .map_err(|e| e.to_string())?
        .outputs(&m.out);
    let red = sim::solve_reduced(&reduced, &times).map_err(|e| e.to_string())?;

    // vmax = k3·E_T, km = (k2 + k3)/k1.
    let mm_text = format!("species: S P\nreaction: S -> P @ mm({e0}, 2)\ninit: S={s0}\n");
    let mm = model(&mm_text, &format!("state S=0 P={s0}"))?;
    let mm_traj = sim::solve_cme(&mm.gen, &mm.space.point_mass(0), &times, &tol)
        .map_err(|e| e.to_string())?
        .outputs(&mm.out);
    Ok(json!({
        "states": m.space.len(),
        "q": bal.q(),
        "k": k,
        "bound": reduced.bound,
        "times": times,
        "full": first(&full),
        "reduced": first(&red),
        "michaelis_menten": first(&mm_traj),
        "sup_error_reduced": sim::compare(&full, &red).map_err(|e| e.to_string())?.sup_max,
        "sup_error_mm": sim::compare(&full, &mm_traj).map_err(|e| e.to_string())?.sup_max,
    }))
}

/// Gillespie histogram of B in `A ⇌ B` at time `t` next to the exact CME
/// marginal.
pub fn ssa_histogram(kf: f64, kb: f64, n: u32, runs: usize, t: f64, seed: u64) -> Result<Value> {
    positive_rate("kf", kf)?;
    positive_rate("kb", kb)?;
    if runs == 0 || runs > 100_000 {
        return Err("runs must be between 1 and 100000".into());
    }
    if !(t.is_finite() && t > 0.0) {
        return Err("time must be positive".into());
    }
    let text = format!("species: A B\nreaction: A -> B @ {kf}\nreaction: B -> A @ {kb}\ninit: A={n}\n");
    let m = model(&text, &format!("state A=0 B={n}"))?;
    let cfg = sim::SsaConfig { seed, runs, t_max: t, record: vec![t] };
    let ens = sim::ssa_ensemble(&m.net, &cfg).map_err(|e| e.to_string())?;
    let tol = Tolerances::default();
    let exact = sim::solve_cme(&m.gen, &m.space.point_mass(0), &[t], &tol).map_err(|e| e.to_string())?;
    let b = m.net.species_index("B").ok_or("missing species B")?;
    let empirical = ens.marginal(0, b);
    let cme = sim::marginal(&exact.values[0], &m.space, b);
    let tv = sim::total_variation_maps(&empirical, &cme);
    let counts: Vec<i64> = (0..=i64::from(n)).collect();
    let lookup = |map: &std::collections::BTreeMap<i64, f64>| -> Vec<f64> {
        counts.iter().map(|c| map.get(c).copied().unwrap_or(0.0)).collect()
    };
    Ok(json!({
        "counts": counts,
        "ssa": lookup(&empirical),
        "cme": lookup(&cme),
        "tv": tv,
        "runs": runs,
        "seed": seed,
        "generator": sim::SSA_GENERATOR,
    }))
}

fn export(r: Result<Value>) -> std::result::Result<String, JsValue> {
    r.map(|v| v.to_string()).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = reversibleExplorer)]
pub fn reversible_explorer(
    kf: f64,
    kb: f64,
    n: u32,
    k: usize,
    t_stop: f64,
    points: usize,
) -> std::result::Result<String, JsValue> {
    export(reversible(kf, kb, n, k, t_stop, points))
}

#[wasm_bindgen(js_name = enzymeExplorer)]
pub fn enzyme_explorer(s0: u32, e0: u32, k: usize, t_stop: f64, points: usize) -> std::result::Result<String, JsValue> {
    export(enzyme(s0, e0, k, t_stop, points))
}

#[wasm_bindgen(js_name = ssaHistogram)]
pub fn ssa_histogram_js(kf: f64, kb: f64, n: u32, runs: usize, t: f64, seed: u64) -> std::result::Result<String, JsValue> {
    export(ssa_histogram(kf, kb, n, runs, t, seed))
}
