use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use cme_reduce::balred::{self, BalancedSystem, Method, ReducedModel};
use cme_reduce::linalg::Tolerances;
use cme_reduce::network::{parse_network, ReactionNetwork};
use cme_reduce::sim::{self, Eta, Trajectory, TrajectoryMeta};
use cme_reduce::statespace::{
    build_generator, build_output, enumerate_states, EnumerationOptions, Generator, OutputMatrix,
    OutputSelector, StateSpace,
};

#[derive(Parser)]
#[command(name = "cme-reduce", version, about = "Reduced-order models of chemical master equations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Serialize)]
#[serde(tag = "subcommand", rename_all = "lowercase")]
enum Command {
    /// Enumerate the reachable states and write the generator.
    Enumerate(EnumerateArgs),
    /// Balance and reduce; write the model, Hankel spectrum and bound report.
    Reduce(ReduceArgs),
    /// Solve the full CME and the reduced model on a time grid and compare.
    Simulate(SimulateArgs),
    /// Run a seeded Gillespie ensemble.
    Ssa(SsaArgs),
    /// Time full versus reduced solves over a range of molecule counts.
    Bench(BenchArgs),
}

#[derive(Args, Serialize)]
struct NetworkArgs {
    /// Network description file.
    #[arg(long)]
    network: PathBuf,
    /// Abort enumeration beyond this many states.
    #[arg(long, default_value_t = 2_000_000)]
    max_states: usize,
}

#[derive(Args, Serialize)]
struct OutDir {
    /// Directory for the written artifacts.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Serialize)]
struct OrderArgs {
    /// Reduced order k.
    #[arg(long)]
    order: Option<usize>,
    /// Pick the smallest k with sigma_{k+1} < ratio * sigma_1.
    #[arg(long, conflicts_with = "order")]
    suggest_ratio: Option<f64>,
    #[arg(long, value_enum, default_value_t = MethodArg::Truncate)]
    method: MethodArg,
    /// Relative Hankel singular value cutoff for the minimal realization.
    #[arg(long, default_value_t = 1e-12)]
    hankel_cutoff: f64,
    /// Relative eigenvalue clip for the Gramian factors.
    #[arg(long, default_value_t = f64::EPSILON)]
    gramian_clip: f64,
}

#[derive(Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum MethodArg {
    Truncate,
    Residualize,
}

impl From<MethodArg> for Method {
    fn from(m: MethodArg) -> Self {
        match m {
            MethodArg::Truncate => Method::Truncation,
            MethodArg::Residualize => Method::Residualization,
        }
    }
}

#[derive(Args, Serialize)]
struct GridArgs {
    #[arg(long, default_value_t = 0.0)]
    t_start: f64,
    #[arg(long)]
    t_stop: f64,
    #[arg(long, default_value_t = 101)]
    points: usize,
    /// Logarithmic spacing (requires t_start > 0).
    #[arg(long)]
    log: bool,
}

#[derive(Args, Serialize)]
struct EnumerateArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Serialize)]
struct ReduceArgs {
    #[command(flatten)]
    network: NetworkArgs,
    /// Output row, e.g. `state S1=0 S2=300` or `range P 0 30`. Repeat to stack rows.
    #[arg(long = "output", required = true)]
    outputs: Vec<String>,
    #[command(flatten)]
    order: OrderArgs,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    network: NetworkArgs,
    /// Output row, e.g. `state S1=0 S2=300` or `range P 0 30`. Repeat to stack rows.
    #[arg(long = "output", required = true)]
    outputs: Vec<String>,
    #[command(flatten)]
    order: OrderArgs,
    /// Use a model written by `reduce` instead of reducing again.
    #[arg(long)]
    model: Option<PathBuf>,
    #[command(flatten)]
    grid: GridArgs,
    /// Skip the full CME solve (and all comparisons).
    #[arg(long)]
    no_full: bool,
    /// Skip the adaptive-horizon L2 gain measurement.
    #[arg(long)]
    no_adaptive_gain: bool,
    /// Also run a finite state projection at t_stop with this mass budget.
    #[arg(long)]
    fsp_eps: Option<f64>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Serialize)]
struct SsaArgs {
    #[command(flatten)]
    network: NetworkArgs,
    #[arg(long)]
    seed: u64,
    #[arg(long, default_value_t = 1000)]
    runs: usize,
    #[command(flatten)]
    grid: GridArgs,
    /// Output rows for the empirical outputs CSV.
    #[arg(long = "output")]
    outputs: Vec<String>,
    #[command(flatten)]
    out: OutDir,
}

#[derive(Args, Serialize)]
struct BenchArgs {
    #[command(flatten)]
    network: NetworkArgs,
    /// Initial molecule counts, comma separated.
    #[arg(long, value_delimiter = ',', required = true)]
    counts: Vec<i64>,
    /// Species whose initial count is set to each value (default: those
    /// with a nonzero initial count).
    #[arg(long, value_delimiter = ',')]
    species: Vec<String>,
    /// Output row template; `{n}` is replaced by the count.
    #[arg(long = "output", required = true)]
    outputs: Vec<String>,
    #[command(flatten)]
    order: OrderArgs,
    #[command(flatten)]
    grid: GridArgs,
    #[arg(long, default_value_t = 5)]
    repetitions: usize,
    #[command(flatten)]
    out: OutDir,
}

impl OrderArgs {
    fn validate(&self) -> Result<()> {
        ensure!(
            self.order.is_some() || self.suggest_ratio.is_some(),
            "one of --order or --suggest-ratio is required"
        );
        if let Some(k) = self.order {
            ensure!(k >= 1, "--order must be at least 1");
        }
        if let Some(r) = self.suggest_ratio {
            ensure!(r > 0.0 && r < 1.0, "--suggest-ratio must lie in (0, 1)");
        }
        ensure!(self.hankel_cutoff >= 0.0 && self.hankel_cutoff < 1.0, "--hankel-cutoff must lie in [0, 1)");
        ensure!(self.gramian_clip >= 0.0 && self.gramian_clip < 1.0, "--gramian-clip must lie in [0, 1)");
        Ok(())
    }

    fn tolerances(&self) -> Tolerances {
        Tolerances { hankel_cutoff: self.hankel_cutoff, gramian_clip: self.gramian_clip, ..Tolerances::default() }
    }

    fn pick(&self, bal: &BalancedSystem) -> usize {
        match (self.order, self.suggest_ratio) {
            (Some(k), _) => k,
            (None, Some(r)) => balred::suggest_order(bal, r),
            (None, None) => unreachable!("validated"),
        }
    }
}

impl GridArgs {
    fn validate(&self) -> Result<Vec<f64>> {
        ensure!(self.points >= 1, "--points must be at least 1");
        sim::time_grid(self.t_start, self.t_stop, self.points, self.log)
            .context("invalid time grid (need 0 <= t_start <= t_stop, t_start > 0 with --log)")
    }
}

struct Problem {
    net: ReactionNetwork,
    space: StateSpace,
    gen: Generator,
    out: Option<OutputMatrix>,
    p0: Vec<f64>,
}

fn load_network(args: &NetworkArgs) -> Result<ReactionNetwork> {
    let text = fs::read_to_string(&args.network)
        .with_context(|| format!("reading {}", args.network.display()))?;
    parse_network(&text).with_context(|| format!("parsing {}", args.network.display()))
}

fn selector(net: &ReactionNetwork, rows: &[String]) -> Result<OutputSelector> {
    let rows = rows
        .iter()
        .map(|r| OutputSelector::parse_row(r, net).with_context(|| format!("output `{r}`")))
        .collect::<Result<_>>()?;
    Ok(OutputSelector::new(rows))
}

fn build(net: ReactionNetwork, rows: &[String], max_states: usize) -> Result<Problem> {
    let sel = if rows.is_empty() { None } else { Some(selector(&net, rows)?) };
    let opts = EnumerationOptions { max_states, ..Default::default() };
    let space = enumerate_states(&net, &opts).context("enumerate")?;
    let gen = build_generator(&net, &space);
    gen.check_invariants(Tolerances::default().column_sum).context("generator invariants")?;
    let out = sel.map(|s| build_output(&s, &space)).transpose().context("output matrix")?;
    let p0 = space.point_mass(0);
    Ok(Problem { net, space, gen, out, p0 })
}

fn reduce(p: &Problem, args: &OrderArgs) -> Result<(BalancedSystem, ReducedModel, f64)> {
    let tol = args.tolerances();
    let out = p.out.as_ref().context("an output selector is required")?;
    let t = Instant::now();
    let sys = balred::stabilize(&p.gen, out, &p.p0, &tol).context("stabilize")?;
    let bal = balred::balance(&sys, &tol).context("balance")?;
    let k = args.pick(&bal);
    let model = balred::reduce(&bal, k, args.method.into(), &tol).context("reduce")?;
    Ok((bal, model, t.elapsed().as_secs_f64()))
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn prepare(out: &OutDir) -> Result<&Path> {
    fs::create_dir_all(&out.out_dir)
        .with_context(|| format!("creating {}", out.out_dir.display()))?;
    Ok(&out.out_dir)
}

fn species_names(net: &ReactionNetwork) -> Vec<&str> {
    net.species().iter().map(|s| s.name.as_str()).collect()
}

fn cmd_enumerate(args: &EnumerateArgs) -> Result<()> {
    let net = load_network(&args.network)?;
    let dir = prepare(&args.out)?;
    let p = build(net, &[], args.network.max_states)?;
    let mut w = create(dir, "states.csv")?;
    p.space.write_csv(&species_names(&p.net), &mut w)?;
    w.flush()?;
    let mut w = create(dir, "generator.mtx")?;
    p.gen.matrix().write_matrix_market(&mut w)?;
    w.flush()?;
    println!("w={} nnz={}", p.space.len(), p.gen.matrix().nnz());
    Ok(())
}

fn cmd_reduce(args: &ReduceArgs, config: &serde_json::Value) -> Result<()> {
    args.order.validate()?;
    let net = load_network(&args.network)?;
    let dir = prepare(&args.out)?;
    let p = build(net, &args.outputs, args.network.max_states)?;
    let (bal, model, secs) = reduce(&p, &args.order)?;

    fs::write(dir.join("model.txt"), model.to_text()).context("writing model.txt")?;
    let mut w = create(dir, "hsv.csv")?;
    writeln!(w, "k,sigma_k,bound_k")?;
    for (i, s) in bal.hsv.iter().enumerate() {
        writeln!(w, "{},{:.16e},{:.16e}", i + 1, s, balred::error_bound(&bal, i + 1)?)?;
    }
    w.flush()?;

    let mut w = create(dir, "report.txt")?;
    writeln!(w, "states: {}", p.space.len())?;
    writeln!(w, "minimal order q: {}", bal.q())?;
    writeln!(w, "reduced order k: {}", model.k)?;
    writeln!(w, "method: {}", model.method)?;
    writeln!(w, "error bound: {:.10e}", model.bound)?;
    writeln!(w, "sigma_1: {:.10e}", bal.hsv[0])?;
    writeln!(w, "gramian residuals: {:.3e} {:.3e}", bal.gramian_residuals.0, bal.gramian_residuals.1)?;
    writeln!(w, "reduction time (s): {secs:.3}")?;
    writeln!(w, "config:\n{}", serde_json::to_string_pretty(config)?)?;
    w.flush()?;
    println!("w={} q={} k={} bound={:.7e}", p.space.len(), bal.q(), model.k, model.bound);
    Ok(())
}

fn write_trajectory(dir: &Path, stem: &str, traj: &Trajectory, meta: &TrajectoryMeta) -> Result<()> {
    let mut w = create(dir, &format!("{stem}.csv"))?;
    traj.write_csv(&mut w)?;
    w.flush()?;
    write_json(dir, &format!("{stem}.meta.json"), meta)
}

fn meta(source: sim::Source, config: &serde_json::Value, tol: &Tolerances, bound: Option<f64>) -> TrajectoryMeta {
    let parameters = config
        .as_object()
        .map(|m| m.iter().map(|(k, v)| (k.clone(), v.to_string())).collect())
        .unwrap_or_default();
    TrajectoryMeta { source, seed: None, generator: None, parameters, tolerances: *tol, bound }
}

fn negatives(traj: &Trajectory) -> serde_json::Value {
    let vals = traj.values.iter().flatten();
    let count = vals.clone().filter(|&&v| v < 0.0).count();
    let min = vals.copied().fold(f64::INFINITY, f64::min);
    json!({ "count": count, "min": min })
}

fn cmd_simulate(args: &SimulateArgs, config: &serde_json::Value) -> Result<()> {
    if args.model.is_none() {
        args.order.validate()?;
    }
    let times = args.grid.validate()?;
    if let Some(eps) = args.fsp_eps {
        ensure!(eps > 0.0 && eps < 1.0, "--fsp-eps must lie in (0, 1)");
    }
    let tol = args.order.tolerances();
    let net = load_network(&args.network)?;
    let dir = prepare(&args.out)?;
    let p = build(net, &args.outputs, args.network.max_states)?;
    let out = p.out.as_ref().context("an output selector is required")?;

    let model = match &args.model {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ReducedModel::from_text(&text).context("model file")?
        }
        None => reduce(&p, &args.order)?.1,
    };
    ensure!(
        model.num_outputs() == out.nrows(),
        "model has {} outputs but {} output rows were given",
        model.num_outputs(),
        out.nrows()
    );

    let red = sim::solve_reduced(&model, &times).context("solve reduced")?;
    write_trajectory(dir, "reduced", &red, &meta(sim::Source::Reduced, config, &tol, Some(model.bound)))?;
    let mut metrics = json!({
        "order": model.k,
        "method": model.method.to_string(),
        "bound": model.bound,
        "reduced_negative_outputs": negatives(&red),
    });

    let mut full_dist = None;
    if !args.no_full {
        let traj = sim::solve_cme(&p.gen, &p.p0, &times, &tol).context("solve full CME")?;
        let full = traj.outputs(out);
        write_trajectory(dir, "full", &full, &meta(sim::Source::Cme, config, &tol, None))?;
        let m = sim::compare(&full, &red)?;
        let mut satisfied = m.gain <= model.bound;
        metrics["sup_error"] = json!(m.sup);
        metrics["sup_error_max"] = json!(m.sup_max);
        metrics["l2_error"] = json!(m.l2);
        metrics["grid_l2_gain"] = json!(m.gain);
        if !args.no_adaptive_gain {
            let g = sim::realized_l2_gain(&p.gen, out, &p.p0, &model, &Default::default(), &tol)
                .context("adaptive L2 gain")?;
            satisfied &= g.gain <= model.bound;
            metrics["realized_l2_gain"] = json!(g.gain);
            metrics["realized_gain_horizon"] = json!(g.horizon);
        }
        metrics["bound_satisfied"] = json!(if satisfied { "yes" } else { "no" });
        full_dist = traj.values.last().cloned();
    }

    if let Some(eps) = args.fsp_eps {
        let t = *times.last().unwrap_or(&0.0);
        let init = vec![(p.net.initial_state().to_vec(), 1.0)];
        let opts = sim::FspOptions { eps, max_states: args.network.max_states.min(sim::DENSE_LIMIT), ..Default::default() };
        let fsp = sim::fsp_solve(&p.net, &init, t, &opts).context("finite state projection")?;
        let sel = selector(&p.net, &args.outputs)?;
        let y = build_output(&sel, &fsp.space)?.apply(&fsp.p);
        let mut entry = json!({
            "time": t,
            "states": fsp.space.len(),
            "radius": fsp.radius,
            "defect": fsp.defect,
            "complete": fsp.complete,
            "outputs": y,
        });
        if let Some(exact) = &full_dist {
            let mut padded = vec![0.0; p.space.len()];
            for (s, v) in fsp.space.iter().zip(&fsp.p) {
                if let Some(i) = p.space.index_of(s) {
                    padded[i] = *v;
                }
            }
            entry["l1_vs_cme"] = json!(2.0 * sim::total_variation(&padded, exact));
        }
        metrics["fsp"] = entry;
    }
    metrics["config"] = config.clone();
    write_json(dir, "metrics.json", &metrics)?;
    match metrics.get("bound_satisfied") {
        Some(v) => println!("bound={:.7e} bound_satisfied={}", model.bound, v.as_str().unwrap_or("?")),
        None => println!("bound={:.7e}", model.bound),
    }
    Ok(())
}

fn cmd_ssa(args: &SsaArgs, config: &serde_json::Value) -> Result<()> {
    ensure!(args.runs >= 1, "--runs must be at least 1");
    let times = args.grid.validate()?;
    let net = load_network(&args.network)?;
    let dir = prepare(&args.out)?;
    let names = species_names(&net);
    let tol = Tolerances::default();
    let mut m = meta(sim::Source::Ssa, config, &tol, None);
    m.seed = Some(args.seed);
    m.generator = Some(sim::SSA_GENERATOR.to_string());
    m.parameters.insert("runs".into(), args.runs.to_string());

    if args.runs == 1 {
        let path = sim::ssa_path(&net, &mut sim::run_rng(args.seed, 0), args.grid.t_stop);
        let mut w = create(dir, "path.csv")?;
        writeln!(w, "time,{}", names.join(","))?;
        for (t, s) in path.times.iter().zip(&path.states) {
            let row: Vec<String> = s.iter().map(i64::to_string).collect();
            writeln!(w, "{t:.16e},{}", row.join(","))?;
        }
        w.flush()?;
        write_json(dir, "ssa.meta.json", &m)?;
        println!("jumps={}", path.reactions.len());
        return Ok(());
    }

    let cfg = sim::SsaConfig { seed: args.seed, runs: args.runs, t_max: args.grid.t_stop, record: times.clone() };
    let ens = sim::ssa_ensemble(&net, &cfg).context("ssa")?;

    let mut w = create(dir, "distribution.csv")?;
    writeln!(w, "time,{},probability", names.join(","))?;
    for (ti, t) in times.iter().enumerate() {
        let mut counts = std::collections::BTreeMap::new();
        for run in &ens.samples {
            *counts.entry(&run[ti]).or_insert(0usize) += 1;
        }
        for (s, c) in counts {
            let row: Vec<String> = s.iter().map(i64::to_string).collect();
            writeln!(w, "{t:.16e},{},{:.16e}", row.join(","), c as f64 / args.runs as f64)?;
        }
    }
    w.flush()?;

    // Comparison against the CME where the state space is small enough.
    let opts = EnumerationOptions { max_states: sim::DENSE_LIMIT, ..Default::default() };
    match enumerate_states(&net, &opts) {
        Ok(space) => {
            let gen = build_generator(&net, &space);
            let exact = sim::solve_cme(&gen, &space.point_mass(0), &times, &tol).context("solve full CME")?;
            let mut w = create(dir, "tv.csv")?;
            writeln!(w, "time,tv")?;
            let mut worst: f64 = 0.0;
            for (ti, t) in times.iter().enumerate() {
                let tv = sim::total_variation(&ens.distribution(ti, &space).0, &exact.values[ti]);
                worst = worst.max(tv);
                writeln!(w, "{t:.16e},{tv:.16e}")?;
            }
            w.flush()?;
            if !args.outputs.is_empty() {
                let out = build_output(&selector(&net, &args.outputs)?, &space)?;
                let mut w = create(dir, "outputs.csv")?;
                ens.outputs(&out, &space).write_csv(&mut w)?;
                w.flush()?;
            }
            println!("runs={} max_tv={worst:.4e}", args.runs);
        }
        Err(e) => {
            log::warn!("no CME comparison: {e}");
            println!("runs={}", args.runs);
        }
    }
    write_json(dir, "ssa.meta.json", &m)?;
    Ok(())
}

fn cmd_bench(args: &BenchArgs, config: &serde_json::Value) -> Result<()> {
    args.order.validate()?;
    let times = args.grid.validate()?;
    ensure!(args.repetitions >= 1, "--repetitions must be at least 1");
    ensure!(args.counts.iter().all(|&n| n >= 0), "--counts must be nonnegative");
    let base = load_network(&args.network)?;
    let targets: Vec<usize> = if args.species.is_empty() {
        (0..base.num_species()).filter(|&i| base.initial_state()[i] != 0).collect()
    } else {
        args.species
            .iter()
            .map(|s| base.species_index(s).with_context(|| format!("unknown species `{s}`")))
            .collect::<Result<_>>()?
    };
    if targets.is_empty() {
        bail!("no species to scale; pass --species");
    }
    let dir = prepare(&args.out)?;
    let tol = args.order.tolerances();
    let mut w = create(dir, "bench.csv")?;
    writeln!(w, "# wall-clock timings are hardware-dependent")?;
    writeln!(w, "count,w,k,t_full_s,t_red_s,eta")?;
    println!("# wall-clock timings are hardware-dependent");
    println!("{:>6} {:>8} {:>4} {:>12} {:>12}  eta", "count", "w", "k", "t_full_s", "t_red_s");
    for &n in &args.counts {
        let mut init = base.initial_state().to_vec();
        for &i in &targets {
            init[i] = n;
        }
        let net = base.with_initial_state(init)?;
        let rows: Vec<String> = args.outputs.iter().map(|r| r.replace("{n}", &n.to_string())).collect();
        let p = build(net, &rows, args.network.max_states).with_context(|| format!("count {n}"))?;
        let (_, model, _) = reduce(&p, &args.order).with_context(|| format!("count {n}"))?;
        let mut t_full = Vec::with_capacity(args.repetitions);
        let mut t_red = Vec::with_capacity(args.repetitions);
        for _ in 0..args.repetitions {
            let t = Instant::now();
            std::hint::black_box(sim::solve_cme(&p.gen, &p.p0, &times, &tol)?);
            t_full.push(t.elapsed().as_secs_f64());
            let t = Instant::now();
            std::hint::black_box(sim::solve_reduced(&model, &times)?);
            t_red.push(t.elapsed().as_secs_f64());
        }
        let (tf, tr) = (median(t_full), median(t_red));
        let eta = sim::speedup_eta(tf, tr);
        let eta_csv = match eta {
            Eta::Value { eta } => format!("{eta:.6}"),
            Eta::Undefined { .. } => "undefined".to_string(),
        };
        writeln!(w, "{n},{},{},{tf:.6e},{tr:.6e},{eta_csv}", p.space.len(), model.k)?;
        println!("{n:>6} {:>8} {:>4} {tf:>12.4e} {tr:>12.4e}  {eta}", p.space.len(), model.k);
    }
    w.flush()?;
    write_json(dir, "bench.meta.json", config)?;
    Ok(())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn run(cli: &Cli) -> Result<()> {
    let config = serde_json::to_value(&cli.command)?;
    match &cli.command {
        Command::Enumerate(a) => cmd_enumerate(a),
        Command::Reduce(a) => cmd_reduce(a, &config),
        Command::Simulate(a) => cmd_simulate(a, &config),
        Command::Ssa(a) => cmd_ssa(a, &config),
        Command::Bench(a) => cmd_bench(a, &config),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
