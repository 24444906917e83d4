//! `rollpack`: run online bin packing heuristics, evaluate their expected
//! cost over random arrival orders, and reproduce the reference experiments.
//!
//! JSON goes to stdout and human-readable summaries to stderr. Exit codes:
//! 0 when every assertion passes, 1 when one fails, 2 for usage or input
//! errors.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_rational::Ratio;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value as Json};

use rollpack_core::engine::{exact_expectation_capped, DEFAULT_ENUMERATION_CAP};
use rollpack_core::experiments::{crosscheck_checks, experiment_spec, Check};
use rollpack_core::markov::{
    bf_rate, iid_ratio_lower_bound, opt_rate_upper, simulate_and_crosscheck, stationary_closed_form,
    State,
};
use rollpack_core::{
    fmt_rational, monte_carlo_expectation, named_instance, named_order, opt, pack, parse_instance,
    parse_ratio, rational_to_f64, run_experiment, Algorithm, Error, ExperimentParams, FuzzConfig, FuzzTarget,
    Instance, Permutation, EXPERIMENTS,
};

#[derive(Parser)]
#[command(name = "rollpack", version, about, long_about = None)]
struct Cli {
    /// Worker threads for enumeration, sampling and fuzzing [default: all cores].
    /// Results do not depend on this.
    #[arg(long, global = true, env = "ROLLPACK_THREADS")]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Pack one arrival order and print the bins.
    Pack(PackArgs),
    /// Expected bin count over uniformly random arrival orders.
    Expect(ExpectArgs),
    /// The nine-state chain for Best Fit on sizes {1/4, 1/3}.
    Markov(MarkovArgs),
    /// Run a named experiment and check it against its declared targets.
    Reproduce(ReproduceArgs),
    /// Randomized search for counterexamples to the structural properties.
    Fuzz(FuzzArgs),
}

#[derive(Args)]
#[group(required = true, multiple = false)]
struct Source {
    /// Instance file (JSON: {"items": ["1/2", "0.3", ...]}).
    path: Option<PathBuf>,
    /// A built-in instance, e.g. lemma7, prop3-k3, monotonicity-ce-a, example1.
    #[arg(long)]
    instance: Option<String>,
}

#[derive(Args)]
struct PackArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value = "best-fit", value_parser = parse_alg)]
    alg: Algorithm,
    /// Arrival order as a JSON array of item ids. Default: the instance's own
    /// order (the listed order, or the built-in sequence for named instances).
    #[arg(long, conflicts_with = "seed")]
    perm: Option<PathBuf>,
    /// Draw a uniformly random arrival order from this seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Exact,
    Mc,
}

#[derive(Args)]
struct ExpectArgs {
    #[command(flatten)]
    source: Source,
    #[arg(long, default_value = "best-fit", value_parser = parse_alg)]
    alg: Algorithm,
    #[arg(long, value_enum, default_value = "exact")]
    mode: Mode,
    #[arg(long, default_value_t = 100_000)]
    samples: u64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Largest number of distinct orderings enumerated in exact mode.
    #[arg(long, default_value_t = DEFAULT_ENUMERATION_CAP)]
    cap: u128,
}

#[derive(Args)]
struct MarkovArgs {
    /// Probability of the 1/4 item, in (0, 1).
    #[arg(long, required_unless_present = "sweep", conflicts_with = "sweep")]
    p: Option<String>,
    /// Grid `start:end:step` of p values; emits CSV.
    #[arg(long)]
    sweep: Option<String>,
    /// Also run Best Fit on this many sampled items and compare with the chain.
    #[arg(long, requires = "p")]
    simulate: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Tabular output (the stationary vector) as CSV instead of JSON.
    #[arg(long)]
    csv: bool,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Experiment name, or `all`.
    #[arg(required_unless_present = "list")]
    experiment: Option<String>,
    /// List the experiments and their declared targets.
    #[arg(long)]
    list: bool,
    #[arg(long, default_value_t = ExperimentParams::default().seed)]
    seed: u64,
    /// Monte Carlo samples per instance.
    #[arg(long, default_value_t = ExperimentParams::default().samples)]
    samples: u64,
    /// Override the fuzz trial count of the experiment.
    #[arg(long)]
    trials: Option<u64>,
    /// Items simulated in the chain cross-check.
    #[arg(long, default_value_t = ExperimentParams::default().simulate)]
    simulate: usize,
}

#[derive(Args)]
struct FuzzArgs {
    #[arg(long, value_parser = parse_target)]
    target: FuzzTarget,
    #[arg(long, default_value_t = 10_000)]
    trials: u64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Lists have at most 2 * k-max items.
    #[arg(long, default_value_t = 8)]
    k_max: usize,
    /// Monotonicity only: allow items in (1/4, 1/3], where violations are expected.
    #[arg(long, alias = "allow-small")]
    allow_small_items: bool,
    /// Where to write the witness on a violation
    /// [default: rollpack-witness-<target>-<seed>.json].
    #[arg(long)]
    witness: Option<PathBuf>,
}

fn parse_alg(s: &str) -> Result<Algorithm, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_target(s: &str) -> Result<FuzzTarget, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

/// `Ok(false)` means an assertion failed.
fn run(cli: Cli) -> Result<bool> {
    if let Some(n) = cli.threads {
        if n == 0 {
            bail!("--threads must be at least 1");
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the worker pool")?;
    }
    match cli.command {
        Command::Pack(a) => cmd_pack(a),
        Command::Expect(a) => cmd_expect(a),
        Command::Markov(a) => cmd_markov(a),
        Command::Reproduce(a) => cmd_reproduce(a),
        Command::Fuzz(a) => cmd_fuzz(a),
    }
}

fn provenance() -> Json {
    json!({
        "tool": "rollpack",
        "version": env!("CARGO_PKG_VERSION"),
        "args": std::env::args().skip(1).collect::<Vec<_>>(),
        "threads": rayon::current_num_threads(),
    })
}

/// Prints `body` with a `provenance` field to stdout.
fn emit(body: impl Serialize) -> Result<()> {
    let mut value = serde_json::to_value(body)?;
    if let Json::Object(map) = &mut value {
        map.insert("provenance".into(), provenance());
    } else {
        value = json!({ "result": value, "provenance": provenance() });
    }
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, &value)?;
    writeln!(out)?;
    Ok(())
}

fn print_checks(title: &str, checks: &[Check]) {
    eprintln!("{title}");
    for c in checks {
        let tag = if c.pass { "PASS" } else { "FAIL" };
        eprintln!("  {tag}  {}: {} (expected {})", c.name, c.observed, c.expected);
    }
}

fn load(source: &Source) -> Result<(Instance, Option<Permutation>)> {
    let (instance, order) = match (&source.path, &source.instance) {
        (Some(path), _) => (
            parse_instance(path).with_context(|| format!("reading {}", path.display()))?,
            None,
        ),
        (None, Some(name)) => (named_instance(name)?, named_order(name)),
        (None, None) => unreachable!("clap requires a source"),
    };
    if instance.is_empty() {
        bail!("instance has no items");
    }
    Ok((instance, order))
}

fn read_permutation(path: &Path, n: usize) -> Result<Permutation> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let order: Vec<usize> = serde_json::from_str(&text)
        .with_context(|| format!("{} is not a JSON array of item ids", path.display()))?;
    let perm = Permutation::new(order)?;
    perm.check(n)?;
    Ok(perm)
}

fn cmd_pack(a: PackArgs) -> Result<bool> {
    let (instance, named) = load(&a.source)?;
    let n = instance.len();
    let (perm, order_source) = match (&a.perm, a.seed) {
        (Some(path), _) => (read_permutation(path, n)?, json!({ "file": path })),
        (None, Some(seed)) => {
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            (Permutation::new(order)?, json!({ "seed": seed }))
        }
        (None, None) => (
            named.unwrap_or_else(|| Permutation::identity(n)),
            json!("given"),
        ),
    };
    let packing = pack(&instance, &perm, a.alg)?;
    let bins: Vec<Json> = packing
        .bins()
        .iter()
        .zip(packing.configs())
        .map(|(b, config)| {
            let load = b.load();
            json!({
                "items": b.items(),
                "sizes": b.sizes(),
                "load": format!("{}/{}", load.numer(), load.denom()),
                "config": config.to_string(),
            })
        })
        .collect();
    let optimum = opt(&instance).ok().map(|o| o.bin_count);

    eprintln!(
        "{} on {} ({} items): {} bins{}",
        a.alg,
        instance.label().unwrap_or("instance"),
        n,
        packing.bin_count(),
        optimum.map(|o| format!(", OPT = {o}")).unwrap_or_default()
    );
    eprintln!("  {:>3}  {:>9}  {:<6}  items", "bin", "load", "config");
    for (i, b) in bins.iter().enumerate() {
        eprintln!(
            "  {:>3}  {:>9}  {:<6}  {}",
            i + 1,
            b["load"].as_str().unwrap_or(""),
            b["config"].as_str().unwrap_or(""),
            b["items"]
        );
    }

    emit(json!({
        "instance": instance,
        "algorithm": a.alg,
        "order": perm,
        "order_source": order_source,
        "bins_used": packing.bin_count(),
        "opt": optimum,
        "bins": bins,
    }))?;
    Ok(true)
}

fn cmd_expect(a: ExpectArgs) -> Result<bool> {
    let (instance, _) = load(&a.source)?;
    let report = match a.mode {
        Mode::Exact => exact_expectation_capped(&instance, a.alg, a.cap).map_err(|e| match e {
            Error::EnumerationCap { .. } => anyhow!("{e} (--mode mc --samples N)"),
            e => e.into(),
        })?,
        Mode::Mc => monte_carlo_expectation(&instance, a.alg, a.samples, a.seed)?,
    };
    let show = |v: &rollpack_core::Value| match v.exact() {
        Some(r) => format!("{} ({:.6})", fmt_rational(r), v.to_f64()),
        None => format!("{:.6}", v.to_f64()),
    };
    eprintln!(
        "{} on {}: E[bins] = {}{}",
        a.alg,
        instance.label().unwrap_or("instance"),
        show(&report.expectation),
        report.stderr.map(|s| format!(" +/- {s:.6}")).unwrap_or_default()
    );
    if let (Some(o), Some(r)) = (&report.opt, &report.ratio) {
        eprintln!("  OPT = {}, ratio = {}", show(o), show(r));
    }
    for (bins, p) in &report.distribution {
        eprintln!("  P[{bins} bins] = {}", show(p));
    }
    emit(&report)?;
    Ok(true)
}

fn parse_p(s: &str) -> Result<Ratio<i64>> {
    let p = parse_ratio(s)?;
    if p <= Ratio::new(0, 1) || p >= Ratio::new(1, 1) {
        bail!("p = {p} must lie strictly between 0 and 1");
    }
    Ok(p)
}

#[derive(Serialize)]
struct SweepCsvRow {
    p: String,
    p_approx: f64,
    bf_rate: f64,
    opt_rate: f64,
    ratio: f64,
    ratio_exact: String,
}

fn exact_json(r: &rollpack_core::Rational) -> Json {
    json!({ "exact": fmt_rational(r), "approx": rational_to_f64(r) })
}

fn cmd_markov(a: MarkovArgs) -> Result<bool> {
    if let Some(spec) = &a.sweep {
        return markov_sweep(spec);
    }
    let p = parse_p(a.p.as_deref().expect("clap requires --p or --sweep"))?;
    let w = stationary_closed_form(p)?;
    let rate = bf_rate(p)?;
    let opt_rate = opt_rate_upper(p)?;
    let ratio = iid_ratio_lower_bound(p)?;
    let exceeds = ratio > rollpack_core::Rational::new(11.into(), 10.into());

    eprintln!("p = {p}: theta = {}, lambda = {}", fmt_rational(&w.theta), fmt_rational(&w.lambda));
    for s in State::ALL {
        eprintln!("  w_{s} = {}", fmt_rational(w.get(s)));
    }
    eprintln!(
        "  bins per item {} / OPT per item <= {} => ratio >= {} ({:.6}){}",
        fmt_rational(&rate),
        fmt_rational(&opt_rate),
        fmt_rational(&ratio),
        rational_to_f64(&ratio),
        if exceeds { ", above 11/10" } else { "" }
    );

    let mut pass = true;
    let mut body = json!({
        "p": format!("{}/{}", p.numer(), p.denom()),
        "theta": exact_json(&w.theta),
        "lambda": exact_json(&w.lambda),
        "omega": w,
        "bf_rate": exact_json(&rate),
        "opt_rate_upper": exact_json(&opt_rate),
        "ratio": exact_json(&ratio),
        "exceeds-11-10": exceeds,
    });
    if let Some(n) = a.simulate {
        let report = simulate_and_crosscheck(p, n, a.seed)?;
        let checks = crosscheck_checks(&report);
        print_checks(&format!("simulation of {n} items (seed {})", a.seed), &checks);
        pass = checks.iter().all(|c| c.pass);
        body["crosscheck"] = serde_json::to_value(&report)?;
        body["checks"] = serde_json::to_value(&checks)?;
        body["pass"] = json!(pass);
    }

    if a.csv {
        let mut out = csv::Writer::from_writer(std::io::stdout().lock());
        out.write_record(["state", "exact", "approx"])?;
        for s in State::ALL {
            let v = w.get(s);
            out.write_record([
                s.to_string(),
                fmt_rational(v),
                rational_to_f64(v).to_string(),
            ])?;
        }
        out.flush()?;
    } else {
        emit(body)?;
    }
    Ok(pass)
}

fn markov_sweep(spec: &str) -> Result<bool> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [start, end, step] = parts[..] else {
        bail!("--sweep expects start:end:step, got `{spec}`");
    };
    let (start, end, step) = (parse_p(start)?, parse_p(end)?, parse_ratio(step)?);
    if step <= Ratio::new(0, 1) {
        bail!("sweep step must be positive");
    }
    let mut out = csv::Writer::from_writer(std::io::stdout().lock());
    let mut best: Option<(Ratio<i64>, rollpack_core::Rational)> = None;
    let mut p = start;
    let mut rows = 0;
    while p <= end {
        let rate = bf_rate(p)?;
        let opt_rate = opt_rate_upper(p)?;
        let ratio = &rate / &opt_rate;
        out.serialize(SweepCsvRow {
            p: format!("{}/{}", p.numer(), p.denom()),
            p_approx: *p.numer() as f64 / *p.denom() as f64,
            bf_rate: rational_to_f64(&rate),
            opt_rate: rational_to_f64(&opt_rate),
            ratio: rational_to_f64(&ratio),
            ratio_exact: fmt_rational(&ratio),
        })?;
        if best.as_ref().is_none_or(|(_, b)| ratio > *b) {
            best = Some((p, ratio));
        }
        rows += 1;
        p += step;
    }
    out.flush()?;
    if let Some((p, r)) = best {
        eprintln!(
            "{rows} grid points; largest ratio {} ({:.6}) at p = {p} (grid maximum only)",
            fmt_rational(&r),
            rational_to_f64(&r)
        );
    }
    Ok(true)
}

fn cmd_reproduce(a: ReproduceArgs) -> Result<bool> {
    if a.list {
        for e in EXPERIMENTS {
            eprintln!("{:<18} {}", e.name, e.summary);
            for t in e.expected {
                eprintln!("{:<18}   - {t}", "");
            }
        }
        emit(json!({ "experiments": EXPERIMENTS }))?;
        return Ok(true);
    }
    let name = a.experiment.as_deref().expect("clap requires a name without --list");
    let names: Vec<&str> = if name == "all" {
        EXPERIMENTS.iter().map(|e| e.name).collect()
    } else {
        vec![experiment_spec(name)?.name]
    };
    let params = ExperimentParams {
        seed: a.seed,
        samples: a.samples,
        trials: a.trials,
        simulate: a.simulate,
    };
    let mut reports = Vec::new();
    for n in names {
        let r = run_experiment(n, &params)?;
        print_checks(
            &format!(
                "{} {} ({:.0} ms)",
                if r.pass { "PASS" } else { "FAIL" },
                r.experiment,
                r.elapsed_ms
            ),
            &r.checks,
        );
        reports.push(r);
    }
    let pass = reports.iter().all(|r| r.pass);
    if reports.len() == 1 {
        emit(&reports[0])?;
    } else {
        emit(json!({ "pass": pass, "reports": reports }))?;
    }
    Ok(pass)
}

fn cmd_fuzz(a: FuzzArgs) -> Result<bool> {
    if a.allow_small_items && a.target != FuzzTarget::Monotonicity {
        bail!("--allow-small-items applies to the monotonicity target only");
    }
    let config = FuzzConfig {
        allow_small: a.allow_small_items,
        ..FuzzConfig::new(a.trials, a.seed, a.k_max)
    };
    let report = rollpack_core::structure::fuzz(a.target, &config);
    // Small items are where monotonicity is known to fail.
    let expect_violations = a.allow_small_items;
    let pass = (report.violations > 0) == expect_violations;
    eprintln!(
        "{}: {} trials, {} checks, {} violations ({})",
        a.target.name(),
        a.trials,
        report.checks,
        report.violations,
        if expect_violations { "violations expected" } else { "none expected" }
    );
    let mut witness_path = None;
    if let Some(w) = &report.witness {
        let path = a.witness.clone().unwrap_or_else(|| {
            PathBuf::from(format!("rollpack-witness-{}-{}.json", a.target.name(), a.seed))
        });
        fs::write(&path, serde_json::to_string_pretty(w)?)
            .with_context(|| format!("writing {}", path.display()))?;
        eprintln!("  witness (trial {}): {}; written to {}", w.trial, w.detail, path.display());
        witness_path = Some(path);
    }
    let mut body = serde_json::to_value(&report)?;
    body["expect_violations"] = json!(expect_violations);
    body["witness_file"] = json!(witness_path);
    body["pass"] = json!(pass);
    emit(body)?;
    Ok(pass)
}
