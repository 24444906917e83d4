//! Expected bin counts under uniformly random arrival order and under i.i.d.
//! inputs.
//!
//! Exact enumeration visits each distinct ordering of the size multiset once.
//! Items of equal size are interchangeable for every implemented heuristic
//! (placement depends only on loads and opening order), so each distinct
//! ordering stands for the same number of raw permutations and the
//! distinct orderings are equally likely.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, Zero};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::opt::{self, DEFAULT_EXACT_CAP};
use crate::packing::{Algorithm, UnitPacker};
use crate::size::{fmt_rational, rational_to_f64, to_big, Rational, Size};

pub const DEFAULT_ENUMERATION_CAP: u128 = 10_000_000;

/// Samples per Monte Carlo shard. Shards are the unit of seeding, so the
/// result depends on (seed, samples) only, never on the thread count.
const SHARD: u64 = 1 << 12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EvalMode {
    ExactEnumeration,
    MonteCarlo,
    IidExact,
    IidSimulated,
}

/// A reported quantity: exact rational (serialized as `"num/den"` plus a
/// float) or a floating-point estimate.
#[derive(Clone, Debug, PartialEq)]
pub enum Value {
    Exact(Rational),
    Approx(f64),
}

impl Value {
    pub fn exact(&self) -> Option<&Rational> {
        match self {
            Value::Exact(r) => Some(r),
            Value::Approx(_) => None,
        }
    }

    pub fn to_f64(&self) -> f64 {
        match self {
            Value::Exact(r) => rational_to_f64(r),
            Value::Approx(x) => *x,
        }
    }
}

impl Serialize for Value {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeMap;
        match self {
            Value::Exact(r) => {
                let mut m = s.serialize_map(Some(2))?;
                m.serialize_entry("exact", &fmt_rational(r))?;
                m.serialize_entry("approx", &rational_to_f64(r))?;
                m.end()
            }
            Value::Approx(x) => {
                let mut m = s.serialize_map(Some(1))?;
                m.serialize_entry("approx", x)?;
                m.end()
            }
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct ExpectationReport {
    pub label: Option<String>,
    pub algorithm: Algorithm,
    pub mode: EvalMode,
    pub expectation: Value,
    /// Sampled modes only.
    pub stderr: Option<f64>,
    pub ci95: Option<[f64; 2]>,
    /// `OPT(I)`, or `E[OPT]` in i.i.d. modes; absent if it could not be computed.
    pub opt: Option<Value>,
    pub ratio: Option<Value>,
    /// bins -> probability (exact) or empirical frequency (sampled).
    pub distribution: BTreeMap<usize, Value>,
    /// Distinct orderings, raw permutations represented, samples, or outcomes.
    pub orderings: u128,
    pub permutations_total: u128,
    pub samples: Option<u64>,
    pub seed: Option<u64>,
}

impl ExpectationReport {
    pub fn exact_expectation(&self) -> Option<&Rational> {
        self.expectation.exact()
    }

    pub fn exact_ratio(&self) -> Option<&Rational> {
        self.ratio.as_ref().and_then(Value::exact)
    }

    /// Exact probability of using exactly `bins` bins (exact modes).
    pub fn probability(&self, bins: usize) -> Rational {
        self.distribution
            .get(&bins)
            .and_then(Value::exact)
            .cloned()
            .unwrap_or_else(Rational::zero)
    }
}

fn big(n: u128) -> BigInt {
    BigInt::from(n)
}

fn factorial(n: usize) -> Option<u128> {
    (1..=n as u128).try_fold(1u128, |acc, k| acc.checked_mul(k))
}

/// Number of distinct orderings of a multiset with the given multiplicities.
pub fn multinomial(counts: &[usize]) -> Option<u128> {
    let mut total = 0usize;
    let mut acc: u128 = 1;
    for &c in counts {
        for k in 1..=c {
            total += 1;
            // acc * total / k stays integral: acc is C(total-1, k-1)-scaled.
            acc = acc.checked_mul(total as u128)? / k as u128;
        }
    }
    Some(acc)
}

/// Bin-count histogram over all distinct orderings of the size multiset.
#[derive(Clone, Debug, Default)]
pub struct OrderingCounts {
    /// `counts[b]`: number of distinct orderings using `b` bins.
    pub counts: Vec<u128>,
    pub orderings: u128,
}

impl OrderingCounts {
    fn merge(mut self, other: OrderingCounts) -> OrderingCounts {
        if self.counts.len() < other.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (b, c) in other.counts.into_iter().enumerate() {
            self.counts[b] += c;
        }
        self.orderings += other.orderings;
        self
    }

    pub fn expectation(&self) -> Rational {
        let num: u128 = self
            .counts
            .iter()
            .enumerate()
            .map(|(b, c)| b as u128 * c)
            .sum();
        Rational::new(big(num), big(self.orderings.max(1)))
    }

    pub fn distribution(&self) -> BTreeMap<usize, Rational> {
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(b, &c)| (b, Rational::new(big(c), big(self.orderings))))
            .collect()
    }
}

struct SizeClasses {
    units: Vec<u64>,
    counts: Vec<usize>,
}

fn size_classes(instance: &Instance) -> SizeClasses {
    let mut by_size: BTreeMap<u64, usize> = BTreeMap::new();
    for &u in instance.units() {
        *by_size.entry(u).or_default() += 1;
    }
    SizeClasses {
        units: by_size.keys().copied().collect(),
        counts: by_size.values().copied().collect(),
    }
}

fn distinct_dfs(
    classes: &SizeClasses,
    remaining: &mut [usize],
    left: usize,
    packer: &UnitPacker,
    out: &mut OrderingCounts,
) {
    if left == 0 {
        let b = packer.bins();
        if out.counts.len() <= b {
            out.counts.resize(b + 1, 0);
        }
        out.counts[b] += 1;
        out.orderings += 1;
        return;
    }
    for c in 0..remaining.len() {
        if remaining[c] == 0 {
            continue;
        }
        remaining[c] -= 1;
        let mut next = packer.clone();
        next.push(classes.units[c]);
        distinct_dfs(classes, remaining, left - 1, &next, out);
        remaining[c] += 1;
    }
}

/// Enumerates every distinct ordering of `instance`'s sizes.
pub fn enumerate_orderings(instance: &Instance, alg: Algorithm, cap: u128) -> Result<OrderingCounts> {
    let classes = size_classes(instance);
    let count = multinomial(&classes.counts).unwrap_or(u128::MAX);
    if count > cap {
        return Err(Error::EnumerationCap { count, cap });
    }
    let root = UnitPacker::for_instance(alg, instance);
    if instance.is_empty() {
        return Ok(OrderingCounts {
            counts: vec![1],
            orderings: 1,
        });
    }
    let n = instance.len();
    let result = (0..classes.units.len())
        .into_par_iter()
        .map(|first| {
            let mut remaining = classes.counts.clone();
            remaining[first] -= 1;
            let mut packer = root.clone();
            packer.push(classes.units[first]);
            let mut out = OrderingCounts::default();
            distinct_dfs(&classes, &mut remaining, n - 1, &packer, &mut out);
            out
        })
        .reduce(OrderingCounts::default, OrderingCounts::merge);
    Ok(result)
}

fn opt_value(instance: &Instance) -> Option<usize> {
    match opt::opt(instance) {
        Ok(r) => Some(r.bin_count),
        Err(_) => None,
    }
}

pub fn exact_expectation(instance: &Instance, alg: Algorithm) -> Result<ExpectationReport> {
    exact_expectation_capped(instance, alg, DEFAULT_ENUMERATION_CAP)
}

pub fn exact_expectation_capped(
    instance: &Instance,
    alg: Algorithm,
    cap: u128,
) -> Result<ExpectationReport> {
    let counts = enumerate_orderings(instance, alg, cap)?;
    let expectation = counts.expectation();
    let opt = opt_value(instance);
    let ratio = opt
        .filter(|&o| o > 0)
        .map(|o| Value::Exact(&expectation / Rational::from_integer(BigInt::from(o))));
    Ok(ExpectationReport {
        label: instance.label().map(str::to_owned),
        algorithm: alg,
        mode: EvalMode::ExactEnumeration,
        expectation: Value::Exact(expectation),
        stderr: None,
        ci95: None,
        opt: opt.map(|o| Value::Exact(Rational::from_integer(BigInt::from(o)))),
        ratio,
        distribution: counts
            .distribution()
            .into_iter()
            .map(|(b, p)| (b, Value::Exact(p)))
            .collect(),
        orderings: counts.orderings,
        permutations_total: factorial(instance.len()).unwrap_or(u128::MAX),
        samples: None,
        seed: None,
    })
}

/// Running sums of sampled bin counts; integer-valued, so merging is exact
/// and order-independent.
#[derive(Clone, Debug, Default)]
pub struct SampleStats {
    pub samples: u64,
    pub sum: u64,
    pub sum_sq: u128,
    pub counts: Vec<u64>,
}

impl SampleStats {
    pub fn record(&mut self, bins: usize) {
        self.samples += 1;
        self.sum += bins as u64;
        self.sum_sq += (bins as u128) * (bins as u128);
        if self.counts.len() <= bins {
            self.counts.resize(bins + 1, 0);
        }
        self.counts[bins] += 1;
    }

    pub fn merge(mut self, other: SampleStats) -> SampleStats {
        self.samples += other.samples;
        self.sum += other.sum;
        self.sum_sq += other.sum_sq;
        if self.counts.len() < other.counts.len() {
            self.counts.resize(other.counts.len(), 0);
        }
        for (b, c) in other.counts.into_iter().enumerate() {
            self.counts[b] += c;
        }
        self
    }

    pub fn mean(&self) -> f64 {
        self.sum as f64 / self.samples as f64
    }

    /// Standard error of the mean from the unbiased sample variance.
    pub fn stderr(&self) -> f64 {
        if self.samples < 2 {
            return 0.0;
        }
        let n = self.samples as u128;
        let s = self.sum as u128;
        let spread = n * self.sum_sq - s * s;
        let var = spread as f64 / (n * (n - 1)) as f64;
        (var / n as f64).sqrt()
    }
}

/// Per-shard generator: the ChaCha stream number is the shard index.
pub fn shard_rng(seed: u64, shard: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(shard);
    rng
}

/// Bin counts of `alg` over `samples` uniformly random orders (Fisher-Yates).
pub fn sample_orders(instance: &Instance, alg: Algorithm, samples: u64, seed: u64) -> SampleStats {
    let shards = samples.div_ceil(SHARD);
    let root = UnitPacker::for_instance(alg, instance);
    (0..shards)
        .into_par_iter()
        .map(|shard| {
            let mut rng = shard_rng(seed, shard);
            let mut order: Vec<usize> = (0..instance.len()).collect();
            let mut packer = root.clone();
            let mut stats = SampleStats::default();
            let todo = SHARD.min(samples - shard * SHARD);
            for _ in 0..todo {
                order.shuffle(&mut rng);
                packer.reset();
                for &i in &order {
                    packer.push(instance.units()[i]);
                }
                stats.record(packer.bins());
            }
            stats
        })
        .reduce(SampleStats::default, SampleStats::merge)
}

pub fn monte_carlo_expectation(
    instance: &Instance,
    alg: Algorithm,
    samples: u64,
    seed: u64,
) -> Result<ExpectationReport> {
    if samples == 0 {
        return Err(Error::Parameter("samples must be at least 1".into()));
    }
    let stats = sample_orders(instance, alg, samples, seed);
    let mean = stats.mean();
    let stderr = stats.stderr();
    let opt = opt_value(instance);
    Ok(ExpectationReport {
        label: instance.label().map(str::to_owned),
        algorithm: alg,
        mode: EvalMode::MonteCarlo,
        expectation: Value::Approx(mean),
        stderr: Some(stderr),
        ci95: Some([mean - 1.96 * stderr, mean + 1.96 * stderr]),
        opt: opt.map(|o| Value::Exact(Rational::from_integer(BigInt::from(o)))),
        ratio: opt.filter(|&o| o > 0).map(|o| Value::Approx(mean / o as f64)),
        distribution: stats
            .counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(|(b, &c)| {
                (
                    b,
                    Value::Exact(Rational::new(BigInt::from(c), BigInt::from(samples))),
                )
            })
            .collect(),
        orderings: samples as u128,
        permutations_total: factorial(instance.len()).unwrap_or(u128::MAX),
        samples: Some(samples),
        seed: Some(seed),
    })
}

/// A finite distribution over item sizes with exact probabilities.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DiscreteDistribution {
    support: Vec<(Size, Ratio<i64>)>,
}

impl DiscreteDistribution {
    pub fn new(mut support: Vec<(Size, Ratio<i64>)>) -> Result<DiscreteDistribution> {
        if support.is_empty() {
            return Err(Error::Distribution("empty support".into()));
        }
        support.sort_by_key(|(s, _)| *s);
        if support.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Distribution("repeated support size".into()));
        }
        if support.iter().any(|(_, p)| *p <= Ratio::zero()) {
            return Err(Error::Distribution("probabilities must be positive".into()));
        }
        let total: Rational = support.iter().map(|(_, p)| to_big(p)).sum();
        if !total.is_one() {
            return Err(Error::Distribution(format!(
                "probabilities sum to {}",
                fmt_rational(&total)
            )));
        }
        Ok(DiscreteDistribution { support })
    }

    /// `1/4` with probability `p`, `1/3` with probability `1 - p`.
    pub fn quarter_third(p: Ratio<i64>) -> Result<DiscreteDistribution> {
        DiscreteDistribution::new(vec![
            (Size::new(1, 4)?, p),
            (Size::new(1, 3)?, Ratio::one() - p),
        ])
    }

    pub fn support(&self) -> &[(Size, Ratio<i64>)] {
        &self.support
    }

    fn unit_sizes(&self) -> (u64, Vec<u64>) {
        let unit = self
            .support
            .iter()
            .fold(1u64, |acc, (s, _)| acc.lcm(&(s.denom() as u64)));
        let units = self
            .support
            .iter()
            .map(|(s, _)| s.numer() as u64 * (unit / s.denom() as u64))
            .collect();
        (unit, units)
    }
}

/// One equivalence class of i.i.d. outcomes: all orderings of one multiset.
#[derive(Clone, Debug)]
pub struct ClassOutcome {
    /// Multiplicity of each support point.
    pub multiplicities: Vec<usize>,
    pub instance: Instance,
    /// Probability that the i.i.d. sample is some ordering of this multiset.
    pub probability: Rational,
    /// `E[ALG(H^sigma)]` over uniform orders of this multiset.
    pub expected_alg: Rational,
    pub opt: usize,
    pub counts: OrderingCounts,
}

impl ClassOutcome {
    pub fn ratio(&self) -> Option<Rational> {
        (self.opt > 0).then(|| &self.expected_alg / Rational::from_integer(BigInt::from(self.opt)))
    }
}

fn compositions(n: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![n]];
    }
    let mut out = Vec::new();
    for first in (0..=n).rev() {
        for mut rest in compositions(n - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Groups all `|support|^n` outcomes into multiset classes. Each ordered
/// outcome of a class has probability `prod p_i^{m_i}`, and a class holds
/// `multinomial(m)` distinct orderings.
pub fn iid_classes(
    dist: &DiscreteDistribution,
    n: usize,
    alg: Algorithm,
    cap: u128,
) -> Result<Vec<ClassOutcome>> {
    let outcomes = (dist.support.len() as u128)
        .checked_pow(n as u32)
        .unwrap_or(u128::MAX);
    if outcomes > cap {
        return Err(Error::EnumerationCap {
            count: outcomes,
            cap,
        });
    }
    if n > DEFAULT_EXACT_CAP {
        return Err(Error::OptTooLarge {
            n,
            cap: DEFAULT_EXACT_CAP,
        });
    }
    compositions(n, dist.support.len())
        .into_par_iter()
        .map(|mults| {
            let mut items = Vec::with_capacity(n);
            let mut weight = Rational::one();
            for (i, &m) in mults.iter().enumerate() {
                let (size, p) = dist.support[i];
                items.extend(std::iter::repeat_n(size, m));
                weight *= num_traits::pow(to_big(&p), m);
            }
            let instance = Instance::new(items)?;
            let counts = enumerate_orderings(&instance, alg, cap)?;
            let probability = weight * Rational::from_integer(big(counts.orderings));
            Ok(ClassOutcome {
                expected_alg: counts.expectation(),
                opt: opt::opt(&instance)?.bin_count,
                multiplicities: mults,
                instance,
                probability,
                counts,
            })
        })
        .collect()
}

pub fn iid_exact_expectation(
    dist: &DiscreteDistribution,
    n: usize,
    alg: Algorithm,
) -> Result<ExpectationReport> {
    let classes = iid_classes(dist, n, alg, DEFAULT_ENUMERATION_CAP)?;
    Ok(iid_report(&classes, n, alg))
}

fn iid_report(classes: &[ClassOutcome], n: usize, alg: Algorithm) -> ExpectationReport {
    let mut e_alg = Rational::zero();
    let mut e_opt = Rational::zero();
    let mut dist: BTreeMap<usize, Rational> = BTreeMap::new();
    for c in classes {
        e_alg += &c.probability * &c.expected_alg;
        e_opt += &c.probability * Rational::from_integer(BigInt::from(c.opt));
        for (b, p) in c.counts.distribution() {
            *dist.entry(b).or_insert_with(Rational::zero) += &c.probability * p;
        }
    }
    let ratio = (!e_opt.is_zero()).then(|| Value::Exact(&e_alg / &e_opt));
    ExpectationReport {
        label: None,
        algorithm: alg,
        mode: EvalMode::IidExact,
        expectation: Value::Exact(e_alg),
        stderr: None,
        ci95: None,
        opt: Some(Value::Exact(e_opt)),
        ratio,
        distribution: dist.into_iter().map(|(b, p)| (b, Value::Exact(p))).collect(),
        orderings: classes.iter().map(|c| c.counts.orderings).sum(),
        permutations_total: factorial(n).unwrap_or(u128::MAX),
        samples: None,
        seed: None,
    }
}

/// The multiset whose random-order ratio is largest, compared against the
/// i.i.d. ratio `E[ALG] / E[OPT]`.
#[derive(Clone, Debug)]
pub struct Representative {
    pub instance: Instance,
    pub ratio: Rational,
    pub iid_ratio: Rational,
    /// `ratio >= iid_ratio`.
    pub holds: bool,
}

pub fn best_representative(
    dist: &DiscreteDistribution,
    n: usize,
    alg: Algorithm,
) -> Result<Representative> {
    if n == 0 {
        return Err(Error::Parameter("n must be at least 1".into()));
    }
    let classes = iid_classes(dist, n, alg, DEFAULT_ENUMERATION_CAP)?;
    let report = iid_report(&classes, n, alg);
    let iid_ratio = report
        .exact_ratio()
        .cloned()
        .expect("E[OPT] > 0 for n >= 1");
    let best = classes
        .iter()
        .filter_map(|c| c.ratio().map(|r| (r, c)))
        .max_by(|a, b| a.0.cmp(&b.0))
        .expect("at least one class");
    Ok(Representative {
        instance: best.1.instance.clone(),
        holds: best.0 >= iid_ratio,
        ratio: best.0,
        iid_ratio,
    })
}

/// Bounds on OPT for a sampled i.i.d. list.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct OptEstimate {
    /// `ceil(sum of sizes)`.
    pub volume_lower: usize,
    /// Each size packed on its own: `sum_s ceil(N_s / floor(1/s))`. For
    /// sizes {1/4, 1/3} this is `ceil(N4/4) + ceil(N3/3)`.
    pub class_upper: usize,
    /// Exact OPT when `n` is within the exact cap.
    pub exact: Option<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct IidSample {
    pub n: usize,
    pub bins_used: usize,
    /// Number of draws of each support point.
    pub draws: Vec<usize>,
    pub opt_estimate: OptEstimate,
    pub seed: u64,
}

struct Sampler {
    cumulative: Vec<u64>,
    total: u64,
}

impl Sampler {
    fn new(dist: &DiscreteDistribution) -> Sampler {
        let denom = dist
            .support
            .iter()
            .fold(1u64, |acc, (_, p)| acc.lcm(&(*p.denom() as u64)));
        let mut acc = 0;
        let cumulative = dist
            .support
            .iter()
            .map(|(_, p)| {
                acc += *p.numer() as u64 * (denom / *p.denom() as u64);
                acc
            })
            .collect();
        Sampler {
            cumulative,
            total: denom,
        }
    }

    fn draw(&self, rng: &mut impl Rng) -> usize {
        let x = rng.random_range(0..self.total);
        self.cumulative.partition_point(|&c| c <= x)
    }
}

/// Streams `n` i.i.d. draws through `alg`. `observe` sees the loads of bins
/// still able to receive an item before each arrival, the support index of
/// the arriving item, and whether it opened a bin.
pub fn iid_simulate_observed(
    dist: &DiscreteDistribution,
    n: usize,
    seed: u64,
    alg: Algorithm,
    mut observe: impl FnMut(&[u64], usize, bool),
) -> IidSample {
    let (unit, units) = dist.unit_sizes();
    let mut packer = UnitPacker::new(alg, unit, units.iter().copied().min().unwrap_or(1));
    let sampler = Sampler::new(dist);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut draws = vec![0usize; units.len()];
    let mut sequence = Vec::with_capacity(if n <= DEFAULT_EXACT_CAP { n } else { 0 });
    let mut before: Vec<u64> = Vec::new();
    for _ in 0..n {
        let k = sampler.draw(&mut rng);
        draws[k] += 1;
        if n <= DEFAULT_EXACT_CAP {
            sequence.push(dist.support[k].0);
        }
        before.clear();
        before.extend_from_slice(packer.open_loads());
        let opened = packer.push(units[k]);
        observe(&before, k, opened);
    }

    let volume: u128 = draws
        .iter()
        .zip(&units)
        .map(|(&c, &u)| c as u128 * u as u128)
        .sum();
    let class_upper = draws
        .iter()
        .zip(&dist.support)
        .map(|(&c, (s, _))| c.div_ceil((s.denom() / s.numer()) as usize))
        .sum();
    let exact = (n <= DEFAULT_EXACT_CAP)
        .then(|| Instance::new(sequence).ok())
        .flatten()
        .and_then(|inst| opt::opt(&inst).ok())
        .map(|r| r.bin_count);
    IidSample {
        n,
        bins_used: packer.bins(),
        draws,
        opt_estimate: OptEstimate {
            volume_lower: volume.div_ceil(unit as u128) as usize,
            class_upper,
            exact,
        },
        seed,
    }
}

pub fn iid_simulate(dist: &DiscreteDistribution, n: usize, seed: u64, alg: Algorithm) -> IidSample {
    iid_simulate_observed(dist, n, seed, alg, |_, _, _| {})
}

/// Visits all `n!` labeled permutations (Heap's algorithm), split across
/// threads by first element, folding into per-thread accumulators.
pub fn fold_permutations<A, I, F, R>(n: usize, cap: u128, init: I, fold: F, reduce: R) -> Result<A>
where
    A: Send,
    I: Fn() -> A + Sync + Send,
    F: Fn(&mut A, &[usize]) + Sync + Send,
    R: Fn(A, A) -> A + Sync + Send,
{
    let total = factorial(n).unwrap_or(u128::MAX);
    if total > cap {
        return Err(Error::EnumerationCap { count: total, cap });
    }
    if n == 0 {
        let mut acc = init();
        fold(&mut acc, &[]);
        return Ok(acc);
    }
    Ok((0..n)
        .into_par_iter()
        .map(|first| {
            let mut acc = init();
            let mut perm: Vec<usize> = std::iter::once(first)
                .chain((0..n).filter(|&i| i != first))
                .collect();
            heap_permute(&mut perm, 1, &mut |p| fold(&mut acc, p));
            acc
        })
        .reduce(&init, &reduce))
}

/// Iterative Heap's algorithm over `perm[fixed..]`.
fn heap_permute(perm: &mut [usize], fixed: usize, visit: &mut impl FnMut(&[usize])) {
    let k = perm.len() - fixed;
    let mut c = vec![0usize; k];
    visit(perm);
    let mut i = 1;
    while i < k {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(fixed, fixed + i);
            } else {
                perm.swap(fixed + c[i], fixed + i);
            }
            visit(perm);
            c[i] += 1;
            i = 1;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
}

/// Ratio as a float, exact or sampled.
pub fn ratio_of(report: &ExpectationReport) -> Option<f64> {
    report.ratio.as_ref().map(Value::to_f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packing::TieBreak;
    use proptest::prelude::*;

    fn inst(items: &[&str]) -> Instance {
        Instance::from_strs(items).unwrap()
    }

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }

    /// Best Fit written directly over rationals, earliest bin on ties.
    fn naive_best_fit(sizes: &[Ratio<i64>]) -> usize {
        let mut loads: Vec<Ratio<i64>> = Vec::new();
        for &s in sizes {
            let mut best: Option<usize> = None;
            for (i, &l) in loads.iter().enumerate() {
                if l + s <= Ratio::one() && best.is_none_or(|b| l > loads[b]) {
                    best = Some(i);
                }
            }
            match best {
                Some(b) => loads[b] += s,
                None => loads.push(s),
            }
        }
        loads.len()
    }

    /// Mean over all n! labeled permutations.
    fn naive_expectation(instance: &Instance) -> Rational {
        let n = instance.len();
        let sizes: Vec<Ratio<i64>> = instance.items().iter().map(|s| s.value()).collect();
        let (sum, count) = fold_permutations(
            n,
            u128::MAX,
            || (0u128, 0u128),
            |acc, p| {
                let seq: Vec<_> = p.iter().map(|&i| sizes[i]).collect();
                acc.0 += naive_best_fit(&seq) as u128;
                acc.1 += 1;
            },
            |a, b| (a.0 + b.0, a.1 + b.1),
        )
        .unwrap();
        Rational::new(big(sum), big(count))
    }

    #[test]
    fn multinomial_counts() {
        assert_eq!(multinomial(&[]), Some(1));
        assert_eq!(multinomial(&[3]), Some(1));
        assert_eq!(multinomial(&[1, 1, 1]), Some(6));
        assert_eq!(multinomial(&[2, 2]), Some(6));
        assert_eq!(multinomial(&[4, 2, 2]), Some(420));
    }

    #[test]
    fn permutation_fold_visits_each_once() {
        let seen = fold_permutations(
            5,
            u128::MAX,
            Vec::new,
            |acc: &mut Vec<Vec<usize>>, p| acc.push(p.to_vec()),
            |mut a, b| {
                a.extend(b);
                a
            },
        )
        .unwrap();
        let mut sorted = seen.clone();
        sorted.sort();
        sorted.dedup();
        assert_eq!(seen.len(), 120);
        assert_eq!(sorted.len(), 120);
        assert!(fold_permutations(13, 1000, || (), |_, _| {}, |_, _| ()).is_err());
    }

    #[test]
    fn two_halves_always_share() {
        let r = exact_expectation(&inst(&["1/2", "1/2"]), Algorithm::BEST_FIT).unwrap();
        assert_eq!(r.exact_expectation(), Some(&q(1, 1)));
        assert_eq!(r.exact_ratio(), Some(&q(1, 1)));
        assert_eq!(r.orderings, 1);
        assert_eq!(r.permutations_total, 2);
    }

    #[test]
    fn empty_instance() {
        let r = exact_expectation(&Instance::new(vec![]).unwrap(), Algorithm::BEST_FIT).unwrap();
        assert_eq!(r.exact_expectation(), Some(&q(0, 1)));
        assert!(r.ratio.is_none());
    }

    #[test]
    fn cap_is_reported() {
        let items: Vec<String> = (1..=12).map(|i| format!("{i}/100")).collect();
        let err = exact_expectation_capped(&Instance::from_strs(&items).unwrap(), Algorithm::BEST_FIT, 1000)
            .unwrap_err();
        assert!(matches!(err, Error::EnumerationCap { count: 479001600, cap: 1000 }));
    }

    #[test]
    fn distribution_sums_to_one() {
        let i = inst(&["3/5", "2/5", "1/2", "1/2", "1/4"]);
        let r = exact_expectation(&i, Algorithm::BEST_FIT).unwrap();
        let total: Rational = r.distribution.values().map(|v| v.exact().unwrap().clone()).sum();
        assert!(total.is_one());
    }

    #[test]
    fn monte_carlo_is_seed_deterministic_and_close() {
        let i = inst(&["501/1000", "501/1000", "499/1000", "499/1000", "3/1000"]);
        let a = monte_carlo_expectation(&i, Algorithm::BEST_FIT, 20_000, 7).unwrap();
        let b = monte_carlo_expectation(&i, Algorithm::BEST_FIT, 20_000, 7).unwrap();
        assert_eq!(a.expectation, b.expectation);
        let exact = exact_expectation(&i, Algorithm::BEST_FIT).unwrap();
        let diff = (a.expectation.to_f64() - exact.expectation.to_f64()).abs();
        assert!(diff < 5.0 * a.stderr.unwrap() + 1e-9, "diff {diff}");
    }

    #[test]
    fn monte_carlo_single_sample() {
        let r = monte_carlo_expectation(&inst(&["1/2"]), Algorithm::BEST_FIT, 1, 0).unwrap();
        assert_eq!(r.stderr, Some(0.0));
        assert!(monte_carlo_expectation(&inst(&["1/2"]), Algorithm::BEST_FIT, 0, 0).is_err());
    }

    #[test]
    fn monte_carlo_independent_of_threads() {
        let i = inst(&["3/5", "2/5", "1/2", "1/2", "1/4", "1/3", "2/3"]);
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| sample_orders(&i, Algorithm::BEST_FIT, 50_000, 11))
        };
        let (a, b) = (run(1), run(4));
        assert_eq!((a.sum, a.sum_sq, a.counts), (b.sum, b.sum_sq, b.counts));
    }

    #[test]
    fn distribution_validation() {
        let s = |n, d| Size::new(n, d).unwrap();
        let p = Ratio::new;
        assert!(DiscreteDistribution::new(vec![]).is_err());
        assert!(DiscreteDistribution::new(vec![(s(1, 2), p(1, 2))]).is_err());
        assert!(DiscreteDistribution::new(vec![(s(1, 2), p(1, 2)), (s(1, 2), p(1, 2))]).is_err());
        assert!(DiscreteDistribution::new(vec![(s(1, 2), p(0, 1)), (s(1, 3), p(1, 1))]).is_err());
        assert!(DiscreteDistribution::quarter_third(p(3, 5)).is_ok());
        assert!(DiscreteDistribution::quarter_third(p(1, 1)).is_err());
    }

    #[test]
    fn iid_two_halves() {
        let d = DiscreteDistribution::new(vec![(Size::new(1, 2).unwrap(), Ratio::one())]).unwrap();
        let r = iid_exact_expectation(&d, 2, Algorithm::BEST_FIT).unwrap();
        assert_eq!(r.exact_expectation(), Some(&q(1, 1)));
    }

    /// Outcome-by-outcome average over all |support|^n ordered samples.
    fn naive_iid(d: &DiscreteDistribution, n: usize) -> (Rational, Rational) {
        let k = d.support().len();
        let mut e_alg = Rational::zero();
        let mut e_opt = Rational::zero();
        for code in 0..k.pow(n as u32) {
            let mut c = code;
            let mut seq = Vec::new();
            let mut prob = Rational::one();
            for _ in 0..n {
                let (s, p) = d.support()[c % k];
                c /= k;
                seq.push(s);
                prob *= to_big(&p);
            }
            let sizes: Vec<_> = seq.iter().map(|s| s.value()).collect();
            let o = opt::opt(&Instance::new(seq).unwrap()).unwrap().bin_count;
            e_alg += &prob * Rational::from_integer(BigInt::from(naive_best_fit(&sizes)));
            e_opt += prob * Rational::from_integer(BigInt::from(o));
        }
        (e_alg, e_opt)
    }

    #[test]
    fn iid_matches_outcome_enumeration() {
        let d = DiscreteDistribution::quarter_third(Ratio::new(3, 5)).unwrap();
        for n in 1..=7 {
            let r = iid_exact_expectation(&d, n, Algorithm::BEST_FIT).unwrap();
            let (e_alg, e_opt) = naive_iid(&d, n);
            assert_eq!(r.exact_expectation(), Some(&e_alg), "n={n}");
            assert_eq!(r.opt.as_ref().and_then(Value::exact), Some(&e_opt), "n={n}");
        }
    }

    #[test]
    fn some_class_reaches_iid_ratio() {
        let d = DiscreteDistribution::new(vec![
            (Size::new(1, 2).unwrap(), Ratio::new(1, 3)),
            (Size::new(2, 5).unwrap(), Ratio::new(1, 3)),
            (Size::new(3, 5).unwrap(), Ratio::new(1, 3)),
        ])
        .unwrap();
        for n in 1..=6 {
            let rep = best_representative(&d, n, Algorithm::BEST_FIT).unwrap();
            assert!(rep.holds, "n={n}");
        }
    }

    #[test]
    fn iid_simulation_bounds() {
        let d = DiscreteDistribution::quarter_third(Ratio::new(3, 5)).unwrap();
        let s = iid_simulate(&d, 20, 3, Algorithm::BEST_FIT);
        let e = &s.opt_estimate;
        let exact = e.exact.unwrap();
        assert!(e.volume_lower <= exact && exact <= e.class_upper);
        assert!(exact <= s.bins_used);
        assert_eq!(s.draws.iter().sum::<usize>(), 20);

        let big_run = iid_simulate(&d, 100_000, 3, Algorithm::BEST_FIT);
        assert!(big_run.opt_estimate.exact.is_none());
        assert!(big_run.opt_estimate.volume_lower <= big_run.opt_estimate.class_upper);
        let again = iid_simulate(&d, 100_000, 3, Algorithm::BEST_FIT);
        assert_eq!(big_run.bins_used, again.bins_used);
    }

    #[test]
    fn sampler_frequencies() {
        let d = DiscreteDistribution::quarter_third(Ratio::new(3, 5)).unwrap();
        let s = iid_simulate(&d, 200_000, 9, Algorithm::BEST_FIT);
        let freq = s.draws[0] as f64 / 200_000.0;
        assert!((freq - 0.6).abs() < 0.005, "{freq}");
    }

    #[test]
    fn report_serializes_exact_values() {
        let r = exact_expectation(&inst(&["1/2", "1/2", "3/4"]), Algorithm::BEST_FIT).unwrap();
        let json = serde_json::to_value(&r).unwrap();
        assert_eq!(json["expectation"]["exact"], "2/1");
        assert_eq!(json["algorithm"], "best-fit");
        assert_eq!(json["mode"], "exact_enumeration");
    }

    fn arb_items() -> impl Strategy<Value = Vec<(i64, i64)>> {
        prop::collection::vec((1i64..=12, prop::sample::select(vec![2i64, 3, 4, 5, 6, 12])), 0..7)
    }

    proptest! {
        #[test]
        fn distinct_orderings_match_all_permutations(raw in arb_items()) {
            let items: Vec<Size> = raw
                .iter()
                .map(|&(n, d)| Size::new(n.min(d), d).unwrap())
                .collect();
            let i = Instance::new(items).unwrap();
            let r = exact_expectation(&i, Algorithm::BEST_FIT).unwrap();
            prop_assert_eq!(r.exact_expectation().unwrap(), &naive_expectation(&i));
        }

        #[test]
        fn expectation_bounded_by_opt_and_n(raw in arb_items()) {
            let items: Vec<Size> = raw
                .iter()
                .map(|&(n, d)| Size::new(n.min(d), d).unwrap())
                .collect();
            let n = items.len();
            let i = Instance::new(items).unwrap();
            for alg in [Algorithm::BEST_FIT, Algorithm::BestFit(TieBreak::LatestOpened), Algorithm::FirstFit, Algorithm::NextFit] {
                let r = exact_expectation(&i, alg).unwrap();
                let e = r.exact_expectation().unwrap().clone();
                let o = r.opt.as_ref().and_then(Value::exact).unwrap().clone();
                prop_assert!(e >= o);
                prop_assert!(e <= Rational::from_integer(BigInt::from(n)));
            }
        }
    }
}
