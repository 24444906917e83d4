//! Named reproduction experiments. Each declares its targets up front,
//! runs, and reports one [`Check`] per assertion.
//!
//! The per-criterion functions are public so callers can time them
//! separately; an experiment is a fixed sequence of them.

use std::fmt::Display;
use std::time::Instant;

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::Zero;
use serde::Serialize;

use crate::engine::{
    best_representative, exact_expectation, exact_expectation_capped, iid_exact_expectation,
    sample_orders, DiscreteDistribution, DEFAULT_ENUMERATION_CAP,
};
use crate::error::{Error, Result};
use crate::families::{
    abs_lb_instance, counterexample_monotonicity, example1_sequence, large_lb_instance,
    random_lm_instance, ABS_LB_EPSILON, DEFAULT_DENOM_BOUND, LARGE_LB_EPSILON,
};
use crate::markov::{
    balance_residuals, build_chain, closed_form_vector, compare_with_figure, iid_ratio_lower_bound,
    simulate_and_crosscheck, stationarity_residual, stationary_numeric, CrosscheckReport,
};
use crate::packing::{best_fit_pack, Algorithm, TieBreak};
use crate::size::{fmt_rational, Rational};
use crate::structure::{
    eq1_accounting, fuzz, good_order_count, lemma3_exhaustive, monotonicity_check, theorem1_check,
    FuzzConfig, FuzzTarget, LmInstance,
};

/// A named experiment and the outcomes it must reproduce.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct ExperimentSpec {
    pub name: &'static str,
    pub summary: &'static str,
    pub expected: &'static [&'static str],
}

pub const EXPERIMENTS: &[ExperimentSpec] = &[
    ExperimentSpec {
        name: "monotonicity-ce",
        summary: "Best Fit is not monotone once items in (1/4, 1/3] are allowed, but is above 1/3",
        expected: &[
            "BF(I) = 4 and BF(I') = 3 on the seven-item lists",
            "no monotonicity or relation violations on lists above 1/3",
            "at least one violation when items in (1/4, 1/3] are allowed",
        ],
    },
    ExperimentSpec {
        name: "abs-lb-13-10",
        summary: "five-item instance with exact random-order ratio 13/10",
        expected: &["E[BF] = 13/5, OPT = 2, ratio = 13/10 exactly"],
    },
    ExperimentSpec {
        name: "large-lb-6-5",
        summary: "k = 3 large-item instance with ratio above 6/5",
        expected: &[
            "720 orders, never more than 4 bins",
            "at least 440 orders use 4 bins",
            "ratio >= 65/54 > 6/5",
        ],
    },
    ExperimentSpec {
        name: "markov-11-10",
        summary: "nine-state chain for sizes {1/4, 1/3} gives an i.i.d. ratio above 11/10",
        expected: &[
            "derived transitions equal the reference table",
            "closed form satisfies every balance equation exactly on p = i/100",
            "numeric and closed-form stationary vectors agree to 1e-12",
            "ratio bound at p = 3/5 exceeds 11/10 exactly",
            "simulation stays in A-I, frequencies within 5e-3, rate within 1%",
        ],
    },
    ExperimentSpec {
        name: "theorem1",
        summary: "E[BF] <= 5k/4 + 1/4 on LM instances",
        expected: &[
            "exact bound for k <= 4 with E[X] = k/2 and odd-parity probability 1/2",
            "Monte Carlo bound within 4 standard errors for 5 <= k <= 8",
        ],
    },
    ExperimentSpec {
        name: "prop2-absolute",
        summary: "small large-item instances: 16 of 24 orders use 2 bins for k = 2",
        expected: &["k = 2: 16 orders with 2 bins, 8 with 3, ratio 7/6", "k = 3: ratio <= 31/24"],
    },
    ExperimentSpec {
        name: "lemma3-exhaustive",
        summary: "LM-bins >= good-order pairs on every order (k <= 3) and on samples (k <= 8)",
        expected: &["zero violations under both tie rules"],
    },
    ExperimentSpec {
        name: "lemma5-bridge",
        summary: "some multiset's random-order ratio dominates the i.i.d. ratio",
        expected: &["best representative ratio >= i.i.d. ratio for F(3/5), n = 2..8"],
    },
    ExperimentSpec {
        name: "claims-roundwise",
        summary: "component edge counts and alternating paths at every round",
        expected: &["zero violations over 1000 random runs", "the fixed k = 4 sequence replays to 5 bins"],
    },
];

pub fn experiment_spec(name: &str) -> Result<&'static ExperimentSpec> {
    EXPERIMENTS.iter().find(|e| e.name == name).ok_or_else(|| {
        let known: Vec<&str> = EXPERIMENTS.iter().map(|e| e.name).collect();
        Error::Parameter(format!("unknown experiment `{name}`; known: {}", known.join(", ")))
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub expected: String,
    pub observed: String,
    pub pass: bool,
}

impl Check {
    pub fn new(name: impl Into<String>, expected: impl Display, observed: impl Display, pass: bool) -> Check {
        Check {
            name: name.into(),
            expected: expected.to_string(),
            observed: observed.to_string(),
            pass,
        }
    }

    fn eq<T: PartialEq + Display>(name: impl Into<String>, expected: T, observed: T) -> Check {
        let pass = expected == observed;
        Check::new(name, expected, observed, pass)
    }
}

/// Sizes of the randomized parts. Defaults match the acceptance targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ExperimentParams {
    pub seed: u64,
    /// Monte Carlo samples per instance.
    pub samples: u64,
    /// Fuzz trials; `None` uses each experiment's own count.
    pub trials: Option<u64>,
    /// Items simulated for the chain cross-check.
    pub simulate: usize,
}

impl Default for ExperimentParams {
    fn default() -> Self {
        ExperimentParams {
            seed: 1,
            samples: 100_000,
            trials: None,
            simulate: 1_000_000,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExperimentReport {
    pub experiment: &'static str,
    pub expected: &'static [&'static str],
    pub params: ExperimentParams,
    pub checks: Vec<Check>,
    pub elapsed_ms: f64,
    pub pass: bool,
}

pub fn run_experiment(name: &str, params: &ExperimentParams) -> Result<ExperimentReport> {
    let spec = experiment_spec(name)?;
    let start = Instant::now();
    let p = params;
    let checks = match spec.name {
        "monotonicity-ce" => [monotonicity_counterexample()?, prop1_suite(p)].concat(),
        "abs-lb-13-10" => abs_lower_bound()?,
        "large-lb-6-5" => large_lower_bound()?,
        "markov-11-10" => [markov_chain()?, chain_crosscheck(p)?].concat(),
        "theorem1" => theorem1_desk(p)?,
        "prop2-absolute" => prop2_cases()?,
        "lemma3-exhaustive" => lemma3_suite(p)?,
        "lemma5-bridge" => lemma5_bridge()?,
        "claims-roundwise" => claims_roundwise(p)?,
        _ => unreachable!("registry and dispatch list the same names"),
    };
    Ok(ExperimentReport {
        experiment: spec.name,
        expected: spec.expected,
        params: *params,
        pass: checks.iter().all(|c| c.pass),
        checks,
        elapsed_ms: start.elapsed().as_secs_f64() * 1e3,
    })
}

fn q(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

fn show(r: &Rational) -> String {
    fmt_rational(r)
}

/// Count of orders (out of `total`) with probability `p`.
fn orders_with(p: &Rational, total: u128) -> Rational {
    p * Rational::from_integer(BigInt::from(total))
}

pub fn monotonicity_counterexample() -> Result<Vec<Check>> {
    let (a, b) = counterexample_monotonicity();
    let m = monotonicity_check(&a, &b)?;
    Ok(vec![
        Check::eq("BF(I)", 4, m.bf),
        Check::eq("BF(I')", 3, m.bf_inflated),
        Check::eq("all items above 1/3", false, m.guaranteed),
    ])
}

pub fn prop1_suite(p: &ExperimentParams) -> Vec<Check> {
    let trials = p.trials.unwrap_or(10_000);
    let cfg = FuzzConfig::new(trials, p.seed, 8);
    let mono = fuzz(FuzzTarget::Monotonicity, &cfg);
    let rel = fuzz(FuzzTarget::Relation, &cfg);
    // Violations with small items turn up about once per 10^4 lists, so the
    // search gets ten times the budget to find one for any seed.
    let small = fuzz(
        FuzzTarget::Monotonicity,
        &FuzzConfig {
            allow_small: true,
            trials: 10 * trials,
            ..cfg
        },
    );
    vec![
        Check::eq(
            format!("monotonicity violations above 1/3 ({} checks)", mono.checks),
            0,
            mono.violations,
        ),
        Check::eq(
            format!("relation violations above 1/3 ({} checks)", rel.checks),
            0,
            rel.violations,
        ),
        Check::new(
            format!("violations with items in (1/4, 1/3] ({} checks)", small.checks),
            ">= 1",
            small.violations,
            small.violations >= 1,
        ),
    ]
}

pub fn abs_lower_bound() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for eps in [ABS_LB_EPSILON, Ratio::new(1, 96)] {
        let r = exact_expectation(&abs_lb_instance(eps)?, Algorithm::BEST_FIT)?;
        let e = r.exact_expectation().cloned().unwrap_or_else(Rational::zero);
        let ratio = r.exact_ratio().cloned().unwrap_or_else(Rational::zero);
        checks.push(Check::eq(format!("E[BF] at eps = {eps}"), show(&q(13, 5)), show(&e)));
        checks.push(Check::eq(format!("ratio at eps = {eps}"), show(&q(13, 10)), show(&ratio)));
    }
    Ok(checks)
}

pub fn large_lower_bound() -> Result<Vec<Check>> {
    let lm = large_lb_instance(3, LARGE_LB_EPSILON)?;
    let r = exact_expectation(lm.instance(), Algorithm::BEST_FIT)?;
    let max_bins = r.distribution.keys().max().copied().unwrap_or(0);
    let four = orders_with(&r.probability(4), r.orderings);
    let ratio = r.exact_ratio().cloned().unwrap_or_else(Rational::zero);
    Ok(vec![
        Check::eq("orders enumerated", 720, r.orderings),
        Check::new("most bins used", "<= 4", max_bins, max_bins <= 4),
        Check::new("orders using 4 bins", ">= 440", show(&four), four >= q(440, 1)),
        Check::new("ratio", ">= 65/54", show(&ratio), ratio >= q(65, 54)),
        Check::new("ratio above 6/5", "> 6/5", show(&ratio), ratio > q(6, 5)),
    ])
}

pub fn prop2_cases() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let k2 = large_lb_instance(2, LARGE_LB_EPSILON)?;
    for tie in [TieBreak::EarliestOpened, TieBreak::LatestOpened] {
        let r = exact_expectation(k2.instance(), Algorithm::BestFit(tie))?;
        let alg = Algorithm::BestFit(tie);
        let two = orders_with(&r.probability(2), r.orderings);
        let three = orders_with(&r.probability(3), r.orderings);
        let ratio = r.exact_ratio().cloned().unwrap_or_else(Rational::zero);
        checks.push(Check::eq(format!("k = 2 orders with 2 bins ({alg})"), "16/1".to_string(), show(&two)));
        checks.push(Check::eq(format!("k = 2 orders with 3 bins ({alg})"), "8/1".to_string(), show(&three)));
        checks.push(Check::eq(format!("k = 2 ratio ({alg})"), show(&q(7, 6)), show(&ratio)));
    }
    let k3 = large_lb_instance(3, LARGE_LB_EPSILON)?;
    let r = exact_expectation(k3.instance(), Algorithm::BEST_FIT)?;
    let ratio = r.exact_ratio().cloned().unwrap_or_else(Rational::zero);
    checks.push(Check::new("k = 3 ratio", "<= 31/24", show(&ratio), ratio <= q(31, 24)));
    Ok(checks)
}

fn theorem1_instances(seed: u64, count: u64, k_range: std::ops::RangeInclusive<usize>) -> Result<Vec<LmInstance>> {
    let ks: Vec<usize> = k_range.collect();
    let mut out = Vec::new();
    for i in 0..count {
        let k = ks[i as usize % ks.len()];
        out.push(random_lm_instance(k, seed.wrapping_mul(1_000_003).wrapping_add(i), DEFAULT_DENOM_BOUND)?);
    }
    for &k in &ks {
        out.push(large_lb_instance(k, LARGE_LB_EPSILON)?);
    }
    Ok(out)
}

pub fn theorem1_desk(p: &ExperimentParams) -> Result<Vec<Check>> {
    let exact = theorem1_instances(p.seed, 100, 1..=4)?;
    let (mut bound_fail, mut inter_fail) = (Vec::new(), Vec::new());
    for lm in &exact {
        let o = theorem1_check(lm)?;
        if !o.holds {
            bound_fail.push(format!("{} E = {}", lm.instance().label().unwrap_or("?"), show(&o.expectation)));
        }
        if !o.intermediates_hold {
            inter_fail.push(lm.instance().label().unwrap_or("?").to_owned());
        }
    }
    let sampled = theorem1_instances(p.seed, 4, 5..=8)?;
    let mut mc_fail = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for (i, lm) in sampled.iter().enumerate() {
        let k = lm.k() as f64;
        let stats = sample_orders(lm.instance(), Algorithm::BEST_FIT, p.samples, p.seed ^ i as u64);
        let bound = 1.25 * k + 0.25;
        let z = (stats.mean() - bound) / stats.stderr().max(f64::MIN_POSITIVE);
        worst = worst.max(z);
        if stats.mean() > bound + 4.0 * stats.stderr() {
            mc_fail.push(format!("{} mean {:.4}", lm.instance().label().unwrap_or("?"), stats.mean()));
        }
    }
    let list = |v: &[String]| if v.is_empty() { "none".to_string() } else { v.join("; ") };
    Ok(vec![
        Check::new(
            format!("exact E[BF] <= 5k/4 + 1/4 ({} instances, k <= 4)", exact.len()),
            "none",
            list(&bound_fail),
            bound_fail.is_empty(),
        ),
        Check::new("E[X] = k/2 and Pr[k - X odd] = 1/2", "none", list(&inter_fail), inter_fail.is_empty()),
        Check::new(
            format!("sampled mean <= bound + 4 stderr ({} instances, 5 <= k <= 8, {} samples)", sampled.len(), p.samples),
            "none",
            format!("{} (largest z = {worst:.2})", list(&mc_fail)),
            mc_fail.is_empty(),
        ),
    ])
}

pub fn lemma3_suite(p: &ExperimentParams) -> Result<Vec<Check>> {
    let mut instances = Vec::new();
    for k in 1..=3usize {
        instances.push(large_lb_instance(k, LARGE_LB_EPSILON)?);
        for i in 0..10 {
            instances.push(random_lm_instance(k, p.seed.wrapping_add(100 * k as u64 + i), 120)?);
        }
    }
    let (mut perms, mut viol) = (0u128, 0u128);
    for lm in &instances {
        for tie in [TieBreak::EarliestOpened, TieBreak::LatestOpened] {
            let r = lemma3_exhaustive(lm, tie)?;
            perms += r.permutations;
            viol += r.lemma3_violations + r.eq1_violations;
        }
    }
    let trials = p.trials.unwrap_or(100_000);
    let sampled = fuzz(FuzzTarget::Lemma3, &FuzzConfig::new(trials, p.seed, 8));
    Ok(vec![
        Check::eq(
            format!("exhaustive violations, k <= 3 ({} instances, {perms} orders x tie rule)", instances.len()),
            0,
            viol,
        ),
        Check::eq(
            format!("sampled violations, k <= 8 ({trials} orders, both tie rules)"),
            0,
            sampled.violations,
        ),
    ])
}

pub fn claims_roundwise(p: &ExperimentParams) -> Result<Vec<Check>> {
    let trials = p.trials.unwrap_or(1_000);
    let r = fuzz(FuzzTarget::Claims, &FuzzConfig::new(trials, p.seed, 8));
    let (lm, order) = example1_sequence();
    let packing = best_fit_pack(lm.instance(), &order)?;
    let eq1 = eq1_accounting(&lm, &order)?;
    Ok(vec![
        Check::eq(format!("claim violations ({trials} runs, {} checks)", r.checks), 0, r.violations),
        Check::eq("k = 4 sequence good-order pairs", 2, good_order_count(&lm, &order)),
        Check::eq("k = 4 sequence bins", 5, packing.bin_count()),
        Check::eq("k = 4 sequence bins predicted from LM-bins", eq1.bf, eq1.predicted),
    ])
}

pub fn markov_chain() -> Result<Vec<Check>> {
    let p35 = Ratio::new(3, 5);
    let mismatches = compare_with_figure(&build_chain(p35)?);
    let (mut balance_bad, mut stat_bad) = (Vec::new(), Vec::new());
    let mut max_diff = 0.0f64;
    for i in 1..100 {
        let p = Ratio::new(i, 100);
        let w = closed_form_vector(p)?;
        if balance_residuals(&w).iter().any(|r| !r.is_zero()) {
            balance_bad.push(p.to_string());
        }
        let model = build_chain(p)?;
        if stationarity_residual(&model, &w).iter().any(|r| !r.is_zero()) {
            stat_bad.push(p.to_string());
        }
        let numeric = stationary_numeric(&model)?;
        for (a, b) in numeric.iter().zip(w.to_f64()) {
            max_diff = max_diff.max((a - b).abs());
        }
    }
    let ratio = iid_ratio_lower_bound(p35)?;
    let list = |v: &[String]| if v.is_empty() { "none".to_string() } else { v.join(", ") };
    Ok(vec![
        Check::new("transitions differing from the diagram", "none", list(&mismatches), mismatches.is_empty()),
        Check::new("balance equations failing on p = i/100", "none", list(&balance_bad), balance_bad.is_empty()),
        Check::new("stationarity failing on p = i/100", "none", list(&stat_bad), stat_bad.is_empty()),
        Check::new("numeric vs closed form", "<= 1e-12", format!("{max_diff:.3e}"), max_diff <= 1e-12),
        Check::eq("ratio bound at p = 3/5", show(&q(8875, 8041)), show(&ratio)),
        Check::new("ratio bound exceeds 11/10", "> 11/10", show(&ratio), ratio > q(11, 10)),
    ])
}

pub fn chain_crosscheck(p: &ExperimentParams) -> Result<Vec<Check>> {
    let r = simulate_and_crosscheck(Ratio::new(3, 5), p.simulate, p.seed)?;
    Ok(crosscheck_checks(&r))
}

/// Assertions on a chain/simulation cross-check report.
pub fn crosscheck_checks(r: &CrosscheckReport) -> Vec<Check> {
    vec![
        Check::eq(format!("arrivals outside A-I ({} items)", r.n), 0, r.unlisted_states),
        Check::new(
            "state frequencies vs stationary vector",
            "<= 5e-3",
            format!("{:.2e}", r.max_deviation),
            r.max_deviation <= 5e-3,
        ),
        Check::new(
            "bins per item vs w_A + q w_G",
            "relative error <= 1%",
            format!("{:.4} vs {:.4} ({:.2e})", r.rate, r.bf_rate, r.rate_relative_error),
            r.rate_relative_error <= 0.01,
        ),
        Check::eq("opened bins = departures from A + G-to-H moves", true, r.tally_matches),
    ]
}

pub fn lemma5_bridge() -> Result<Vec<Check>> {
    let dist = DiscreteDistribution::quarter_third(Ratio::new(3, 5))?;
    let mut bad = Vec::new();
    let mut detail = Vec::new();
    for n in 2..=8 {
        let rep = best_representative(&dist, n, Algorithm::BEST_FIT)?;
        let iid = iid_exact_expectation(&dist, n, Algorithm::BEST_FIT)?;
        let same = iid.exact_ratio() == Some(&rep.iid_ratio);
        if !rep.holds || !same {
            bad.push(n.to_string());
        }
        detail.push(format!("n={n}: {} >= {}", show(&rep.ratio), show(&rep.iid_ratio)));
    }
    // One representative checked independently by full enumeration.
    let rep = best_representative(&dist, 7, Algorithm::BEST_FIT)?;
    let direct = exact_expectation_capped(&rep.instance, Algorithm::BEST_FIT, DEFAULT_ENUMERATION_CAP)?;
    Ok(vec![
        Check::new(
            "n with representative ratio below the i.i.d. ratio",
            "none",
            if bad.is_empty() { format!("none ({})", detail.join("; ")) } else { bad.join(", ") },
            bad.is_empty(),
        ),
        Check::eq(
            "n = 7 representative ratio by direct enumeration",
            show(&rep.ratio),
            direct.exact_ratio().map(show).unwrap_or_default(),
        ),
    ])
}
