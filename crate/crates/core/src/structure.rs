//! Structural checks on Best Fit packings of items larger than 1/3.
//!
//! For LM-structured lists (k pairs of a large and a medium item that fit
//! together) this covers good-order pairs, LM-bin counts, the matching graph
//! between Best Fit and optimal pairings, and the bin-count identity. For
//! general lists above 1/3 it covers monotonicity under item inflation and
//! the round-by-round relation between the two packings. Randomized
//! fuzzers drive all of these with per-trial seeds.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_rational::Ratio;
use num_traits::{One, Zero};
use petgraph::unionfind::UnionFind;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::engine::{fold_permutations, shard_rng, DEFAULT_ENUMERATION_CAP};
use crate::error::{Error, Result};
use crate::instance::{Instance, Permutation};
use crate::packing::{count_bins, pack, pack_prefix, Algorithm, Packing, TieBreak, UnitPacker};
use crate::size::{Rational, Size, SizeClass};

/// A list of `k` LM-pairs: large item `l_i > 1/2`, medium item
/// `m_i in (1/3, 1/2]`, `l_i + m_i <= 1`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LmInstance {
    instance: Instance,
    /// `pair[id]`: index of the LM-pair containing item `id`.
    pair: Vec<usize>,
    large: Vec<bool>,
}

impl LmInstance {
    pub fn new(instance: Instance) -> Result<LmInstance> {
        let pairs = instance
            .lm_pairs()
            .ok_or_else(|| Error::InvalidPairs("instance has no LM-pair metadata".into()))?
            .to_vec();
        let mut pair = vec![0; instance.len()];
        let mut large = vec![false; instance.len()];
        for (i, &(l, m)) in pairs.iter().enumerate() {
            if instance.size(l).class() != SizeClass::Large {
                return Err(Error::InvalidPairs(format!("item {l} is not larger than 1/2")));
            }
            if instance.size(m).class() != SizeClass::Medium {
                return Err(Error::InvalidPairs(format!("item {m} is not in (1/3, 1/2]")));
            }
            pair[l] = i;
            pair[m] = i;
            large[l] = true;
        }
        Ok(LmInstance {
            instance,
            pair,
            large,
        })
    }

    /// Pairs `(l_i, m_i)` laid out as ids `l_i = i`, `m_i = k + i`.
    pub fn from_pairs(pairs: &[(Size, Size)]) -> Result<LmInstance> {
        let k = pairs.len();
        let items = pairs
            .iter()
            .map(|p| p.0)
            .chain(pairs.iter().map(|p| p.1))
            .collect();
        let ids = (0..k).map(|i| (i, k + i)).collect();
        LmInstance::new(Instance::with_pairs(items, ids)?)
    }

    pub fn labeled(mut self, label: impl Into<String>) -> LmInstance {
        self.instance = self.instance.labeled(label);
        self
    }

    pub fn k(&self) -> usize {
        self.pairs().len()
    }

    pub fn instance(&self) -> &Instance {
        &self.instance
    }

    pub fn pairs(&self) -> &[(usize, usize)] {
        self.instance.lm_pairs().expect("validated")
    }

    pub fn is_large(&self, id: usize) -> bool {
        self.large[id]
    }

    pub fn pair_of(&self, id: usize) -> usize {
        self.pair[id]
    }

    /// The other item of `id`'s LM-pair.
    pub fn partner(&self, id: usize) -> usize {
        let (l, m) = self.pairs()[self.pair[id]];
        if id == l {
            m
        } else {
            l
        }
    }
}

/// Number of pairs whose large item arrives before its medium item.
pub fn good_order_count(lm: &LmInstance, perm: &Permutation) -> usize {
    let pos = perm.positions();
    lm.pairs().iter().filter(|&&(l, m)| pos[l] < pos[m]).count()
}

/// Number of bins holding exactly one large and one medium item.
pub fn lm_bin_count(packing: &Packing) -> usize {
    packing.lm_bin_count()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Lemma3Outcome {
    pub holds: bool,
    pub good_pairs: usize,
    pub lm_bins: usize,
}

/// Best Fit leaves at least as many LM-bins as there are good-order pairs.
pub fn verify_lemma3(lm: &LmInstance, perm: &Permutation) -> Result<Lemma3Outcome> {
    verify_lemma3_with(lm, perm, TieBreak::EarliestOpened)
}

pub fn verify_lemma3_with(lm: &LmInstance, perm: &Permutation, tie: TieBreak) -> Result<Lemma3Outcome> {
    let packing = pack(lm.instance(), perm, Algorithm::BestFit(tie))?;
    let x = good_order_count(lm, perm);
    let y = lm_bin_count(&packing);
    Ok(Lemma3Outcome {
        holds: y >= x,
        good_pairs: x,
        lm_bins: y,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct OptEdge {
    pub pair: usize,
    pub large: usize,
    pub medium: usize,
    pub good_order: bool,
}

/// Items visible after `round` arrivals, with Best Fit's LM-bins and the
/// optimal pairing as two matchings between medium and large items.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MatchGraph {
    pub round: usize,
    pub larges: Vec<usize>,
    pub mediums: Vec<usize>,
    /// `(large, medium)` sharing a bin.
    pub bf_edges: Vec<(usize, usize)>,
    pub opt_edges: Vec<OptEdge>,
    #[serde(skip)]
    sizes: Vec<Size>,
}

impl MatchGraph {
    pub fn size(&self, id: usize) -> Size {
        self.sizes[id]
    }

    fn bf_partner(&self, id: usize) -> Option<usize> {
        self.bf_edges.iter().find_map(|&(l, m)| {
            if l == id {
                Some(m)
            } else if m == id {
                Some(l)
            } else {
                None
            }
        })
    }

    fn opt_edge(&self, id: usize) -> Option<&OptEdge> {
        self.opt_edges
            .iter()
            .find(|e| e.large == id || e.medium == id)
    }
}

pub fn build_match_graph(lm: &LmInstance, perm: &Permutation, round: usize) -> Result<MatchGraph> {
    build_match_graph_with(lm, perm, round, TieBreak::EarliestOpened)
}

pub fn build_match_graph_with(
    lm: &LmInstance,
    perm: &Permutation,
    round: usize,
    tie: TieBreak,
) -> Result<MatchGraph> {
    let n = lm.instance().len();
    perm.check(n)?;
    if round == 0 || round > n {
        return Err(Error::Parameter(format!("round {round} outside 1..={n}")));
    }
    let packing = pack_prefix(lm.instance(), perm, Algorithm::BestFit(tie), round);
    Ok(graph_from_packing(lm, perm, round, &packing))
}

fn graph_from_packing(lm: &LmInstance, perm: &Permutation, round: usize, packing: &Packing) -> MatchGraph {
    let visible = &perm.order()[..round];
    let pos = perm.positions();
    let (larges, mediums): (Vec<usize>, Vec<usize>) = visible.iter().partition(|&&id| lm.is_large(id));
    let bf_edges = packing
        .bins()
        .iter()
        .filter_map(|b| match b.items() {
            &[x, y] if lm.is_large(x) != lm.is_large(y) => {
                Some(if lm.is_large(x) { (x, y) } else { (y, x) })
            }
            _ => None,
        })
        .collect();
    let opt_edges = lm
        .pairs()
        .iter()
        .enumerate()
        .filter(|(_, &(l, m))| pos[l] < round && pos[m] < round)
        .map(|(i, &(l, m))| OptEdge {
            pair: i,
            large: l,
            medium: m,
            good_order: pos[l] < pos[m],
        })
        .collect();
    MatchGraph {
        round,
        larges,
        mediums,
        bf_edges,
        opt_edges,
        sizes: lm.instance().items().to_vec(),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ComponentCount {
    pub vertices: Vec<usize>,
    pub bf_edges: usize,
    pub good_opt_edges: usize,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Claim1Outcome {
    pub holds: bool,
    pub per_component: Vec<ComponentCount>,
}

/// In every connected component, BF-edges are at least as many as
/// good-order OPT-edges.
pub fn verify_claim1(graph: &MatchGraph) -> Claim1Outcome {
    let n = graph.sizes.len();
    let mut uf = UnionFind::<usize>::new(n);
    for &(l, m) in &graph.bf_edges {
        uf.union(l, m);
    }
    for e in &graph.opt_edges {
        uf.union(e.large, e.medium);
    }
    let mut comps: BTreeMap<usize, ComponentCount> = BTreeMap::new();
    for &v in graph.larges.iter().chain(&graph.mediums) {
        comps
            .entry(uf.find(v))
            .or_insert_with(|| ComponentCount {
                vertices: Vec::new(),
                bf_edges: 0,
                good_opt_edges: 0,
                holds: true,
            })
            .vertices
            .push(v);
    }
    for &(l, _) in &graph.bf_edges {
        comps.get_mut(&uf.find(l)).expect("visible").bf_edges += 1;
    }
    for e in graph.opt_edges.iter().filter(|e| e.good_order) {
        comps.get_mut(&uf.find(e.large)).expect("visible").good_opt_edges += 1;
    }
    let mut per_component: Vec<ComponentCount> = comps
        .into_values()
        .map(|mut c| {
            c.vertices.sort_unstable();
            c.holds = c.bf_edges >= c.good_opt_edges;
            c
        })
        .collect();
    per_component.sort_by_key(|c| c.vertices[0]);
    Claim1Outcome {
        holds: per_component.iter().all(|c| c.holds),
        per_component,
    }
}

/// A maximal path `b_w, a_{w-1}, b_{w-1}, ..., a_1, b_1` where `{a_j, b_{j+1}}`
/// are BF-edges, `{a_j, b_j}` good-order OPT-edges, and `b_1` is alone in
/// its bin. Listed from `b_1` outwards.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AlternatingPath {
    pub items: Vec<usize>,
    /// `b_w`.
    pub start: Size,
    /// `b_1`.
    pub end: Size,
    pub holds: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Claim2Outcome {
    pub holds: bool,
    pub paths: Vec<AlternatingPath>,
}

/// Every maximal alternating path ending in a large item without a BF-edge
/// starts at a large item no smaller than that end.
pub fn verify_claim2(graph: &MatchGraph) -> Claim2Outcome {
    let mut paths = Vec::new();
    for &end in &graph.larges {
        if graph.bf_partner(end).is_some() {
            continue;
        }
        let mut items = vec![end];
        let mut cur = end;
        while let Some(a) = graph
            .opt_edge(cur)
            .filter(|e| e.good_order && e.large == cur)
            .map(|e| e.medium)
        {
            let Some(next) = graph.bf_partner(a) else {
                break;
            };
            if items.contains(&next) {
                break;
            }
            items.push(a);
            items.push(next);
            cur = next;
        }
        let (s, e) = (graph.size(cur), graph.size(end));
        paths.push(AlternatingPath {
            items,
            start: s,
            end: e,
            holds: s >= e,
        });
    }
    Claim2Outcome {
        holds: paths.iter().all(|p| p.holds),
        paths,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Eq1Outcome {
    pub bf: usize,
    pub k: usize,
    pub lm_bins: usize,
    pub predicted: usize,
    pub holds: bool,
}

/// `BF = Y + (k - Y) + ceil((k - Y) / 2)`: LM-bins, L-bins, and the unmatched
/// mediums paired up.
pub fn eq1_accounting(lm: &LmInstance, perm: &Permutation) -> Result<Eq1Outcome> {
    eq1_accounting_with(lm, perm, TieBreak::EarliestOpened)
}

pub fn eq1_accounting_with(lm: &LmInstance, perm: &Permutation, tie: TieBreak) -> Result<Eq1Outcome> {
    let packing = pack(lm.instance(), perm, Algorithm::BestFit(tie))?;
    Ok(eq1_from_packing(lm, &packing))
}

fn eq1_from_packing(lm: &LmInstance, packing: &Packing) -> Eq1Outcome {
    let k = lm.k();
    let y = lm_bin_count(packing);
    let predicted = k + (k - y).div_ceil(2);
    Eq1Outcome {
        bf: packing.bin_count(),
        k,
        lm_bins: y,
        predicted,
        holds: packing.bin_count() == predicted,
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Theorem1Outcome {
    pub k: usize,
    pub permutations: u128,
    #[serde(serialize_with = "ser_rational")]
    pub expectation: Rational,
    #[serde(serialize_with = "ser_rational")]
    pub bound: Rational,
    pub holds: bool,
    /// `E[X]`.
    #[serde(serialize_with = "ser_rational")]
    pub expected_good_pairs: Rational,
    /// `Pr[(k - X) mod 2 = 1]`.
    #[serde(serialize_with = "ser_rational")]
    pub odd_parity_probability: Rational,
    /// `E[X] = k/2` and the parity probability is `1/2`.
    pub intermediates_hold: bool,
}

impl Theorem1Outcome {
    pub fn ratio(&self) -> Rational {
        &self.expectation / Rational::from_integer(BigInt::from(self.k))
    }
}

fn ser_rational<S: serde::Serializer>(r: &Rational, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(&crate::size::fmt_rational(r))
}

fn rat(n: u128, d: u128) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Exact `E[BF]` over all `(2k)!` arrival orders against `5k/4 + 1/4`.
pub fn theorem1_check(lm: &LmInstance) -> Result<Theorem1Outcome> {
    let n = lm.instance().len();
    let k = lm.k();
    let template = UnitPacker::for_instance(Algorithm::BEST_FIT, lm.instance());
    let pairs = lm.pairs().to_vec();
    let units = lm.instance().units().to_vec();
    // (sum of BF, sum of X, count of odd k - X, permutations)
    let (bf_sum, x_sum, odd, total) = fold_permutations(
        n,
        DEFAULT_ENUMERATION_CAP,
        || (0u128, 0u128, 0u128, 0u128, template.clone(), vec![0usize; n]),
        |acc, order| {
            for (t, &id) in order.iter().enumerate() {
                acc.5[id] = t;
            }
            let x = pairs.iter().filter(|&&(l, m)| acc.5[l] < acc.5[m]).count();
            acc.0 += count_bins(&mut acc.4, &units, order.iter().copied()) as u128;
            acc.1 += x as u128;
            acc.2 += ((k - x) % 2) as u128;
            acc.3 += 1;
        },
        |a, b| (a.0 + b.0, a.1 + b.1, a.2 + b.2, a.3 + b.3, a.4, a.5),
    )
    .map(|a| (a.0, a.1, a.2, a.3))?;
    let expectation = rat(bf_sum, total);
    let bound = rat(5 * k as u128 + 1, 4);
    let expected_good_pairs = rat(x_sum, total);
    let odd_parity_probability = rat(odd, total);
    let half = rat(1, 2);
    let intermediates_hold = expected_good_pairs == rat(k as u128, 2)
        && (k == 0 || odd_parity_probability == half);
    Ok(Theorem1Outcome {
        k,
        permutations: total,
        holds: expectation <= bound,
        expectation,
        bound,
        expected_good_pairs,
        odd_parity_probability,
        intermediates_hold,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ExhaustiveReport {
    pub permutations: u128,
    pub lemma3_violations: u128,
    pub eq1_violations: u128,
    pub first_violation: Option<Permutation>,
}

/// LM-bins >= good-order pairs and the bin-count identity on every arrival order.
pub fn lemma3_exhaustive(lm: &LmInstance, tie: TieBreak) -> Result<ExhaustiveReport> {
    let n = lm.instance().len();
    let merge = |a: ExhaustiveReport, b: ExhaustiveReport| ExhaustiveReport {
        permutations: a.permutations + b.permutations,
        lemma3_violations: a.lemma3_violations + b.lemma3_violations,
        eq1_violations: a.eq1_violations + b.eq1_violations,
        first_violation: match (a.first_violation, b.first_violation) {
            (Some(x), Some(y)) => Some(if y.order() < x.order() { y } else { x }),
            (x, y) => x.or(y),
        },
    };
    fold_permutations(
        n,
        DEFAULT_ENUMERATION_CAP,
        || ExhaustiveReport {
            permutations: 0,
            lemma3_violations: 0,
            eq1_violations: 0,
            first_violation: None,
        },
        |acc, order| {
            let perm = Permutation::new(order.to_vec()).expect("valid");
            let packing = pack_prefix(lm.instance(), &perm, Algorithm::BestFit(tie), n);
            let x = good_order_count(lm, &perm);
            let eq1 = eq1_from_packing(lm, &packing);
            acc.permutations += 1;
            let bad3 = eq1.lm_bins < x;
            acc.lemma3_violations += bad3 as u128;
            acc.eq1_violations += !eq1.holds as u128;
            if (bad3 || !eq1.holds) && acc.first_violation.is_none() {
                acc.first_violation = Some(perm);
            }
        },
        merge,
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct MonotonicityOutcome {
    /// `BF(I) <= BF(I')`.
    pub holds: bool,
    pub bf: usize,
    pub bf_inflated: usize,
    /// Every item of `I` exceeds 1/3, so a failure contradicts monotonicity.
    pub guaranteed: bool,
}

fn check_domination(a: &Instance, b: &Instance) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::Precondition(format!(
            "lists have different lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    if let Some(j) = (0..a.len()).find(|&j| b.size(j) < a.size(j)) {
        return Err(Error::Precondition(format!(
            "item {j} shrinks from {} to {}",
            a.size(j),
            b.size(j)
        )));
    }
    Ok(())
}

/// Best Fit in identity order on `I` and on a dominating `I'`.
pub fn monotonicity_check(original: &Instance, inflated: &Instance) -> Result<MonotonicityOutcome> {
    check_domination(original, inflated)?;
    let bf = bf_identity(original);
    let bf_inflated = bf_identity(inflated);
    Ok(MonotonicityOutcome {
        holds: bf <= bf_inflated,
        bf,
        bf_inflated,
        guaranteed: original.all_larger_than_third(),
    })
}

fn bf_identity(instance: &Instance) -> usize {
    let mut packer = UnitPacker::for_instance(Algorithm::BEST_FIT, instance);
    count_bins(&mut packer, instance.units(), 0..instance.len())
}

/// How the Best Fit packings of `I(t)` and of a single-item inflation
/// `I'(t)` correspond. Bins hold at most two items; 2-bins are closed.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "class")]
pub enum RelationClass {
    /// Equal 1-bin sizes and equal numbers of 2-bins.
    Star1,
    /// As `Star1` except 1-bins `{b}` and `{b'}` with `b < b'`.
    Star2 { b: Size, b_prime: Size },
    /// As `Star1` except an extra 2-bin `c` in `BF(I(t))` and two extra
    /// 1-bins in `BF(I'(t))`.
    Star3 {
        c: (Size, Size),
        b1_prime: Size,
        b2_prime: Size,
    },
    Violation {
        singles: Vec<Size>,
        singles_inflated: Vec<Size>,
        doubles: usize,
        doubles_inflated: usize,
    },
}

impl RelationClass {
    pub fn is_violation(&self) -> bool {
        matches!(self, RelationClass::Violation { .. })
    }
}

/// Multiset difference of two sorted lists.
fn sorted_minus(a: &[Size], b: &[Size]) -> Vec<Size> {
    let mut out = Vec::new();
    let mut j = 0;
    for &x in a {
        while j < b.len() && b[j] < x {
            j += 1;
        }
        if j < b.len() && b[j] == x {
            j += 1;
        } else {
            out.push(x);
        }
    }
    out
}

struct Shape {
    singles: Vec<Size>,
    doubles: Vec<(Size, Size)>,
}

fn shape(packing: &Packing) -> Shape {
    let mut singles = Vec::new();
    let mut doubles = Vec::new();
    for bin in packing.bins() {
        match bin.sizes() {
            [s] => singles.push(*s),
            [a, b] => doubles.push((*a.min(b), *a.max(b))),
            _ => {}
        }
    }
    singles.sort();
    doubles.sort();
    Shape { singles, doubles }
}

/// Classifies `(BF(I(t)), BF(I'(t)))` in identity order.
pub fn relation_classify(original: &Instance, inflated: &Instance, round: usize) -> Result<RelationClass> {
    check_domination(original, inflated)?;
    let changed = (0..original.len())
        .filter(|&j| original.size(j) != inflated.size(j))
        .count();
    if changed > 1 {
        return Err(Error::Precondition(format!("{changed} items differ; expected at most one")));
    }
    if !original.all_larger_than_third() || !inflated.all_larger_than_third() {
        return Err(Error::Precondition("all items must exceed 1/3".into()));
    }
    if round > original.len() {
        return Err(Error::Parameter(format!("round {round} beyond {} items", original.len())));
    }
    let id = Permutation::identity(original.len());
    let a = shape(&pack_prefix(original, &id, Algorithm::BEST_FIT, round));
    let b = shape(&pack_prefix(inflated, &id, Algorithm::BEST_FIT, round));
    Ok(classify_shapes(&a, &b))
}

fn classify_shapes(a: &Shape, b: &Shape) -> RelationClass {
    let only_a = sorted_minus(&a.singles, &b.singles);
    let only_b = sorted_minus(&b.singles, &a.singles);
    let (da, db) = (a.doubles.len(), b.doubles.len());
    if da == db && only_a.is_empty() && only_b.is_empty() {
        return RelationClass::Star1;
    }
    if da == db && only_a.len() == 1 && only_b.len() == 1 && only_a[0] < only_b[0] {
        return RelationClass::Star2 {
            b: only_a[0],
            b_prime: only_b[0],
        };
    }
    if da == db + 1 && only_a.is_empty() && only_b.len() == 2 {
        let extra = a
            .doubles
            .iter()
            .find(|d| !b.doubles.contains(d))
            .or(a.doubles.last())
            .copied()
            .expect("at least one 2-bin");
        return RelationClass::Star3 {
            c: extra,
            b1_prime: only_b[0],
            b2_prime: only_b[1],
        };
    }
    RelationClass::Violation {
        singles: a.singles.clone(),
        singles_inflated: b.singles.clone(),
        doubles: da,
        doubles_inflated: db,
    }
}

/// Denominator of randomly generated sizes.
const FUZZ_DENOM: i64 = 120;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FuzzTarget {
    Monotonicity,
    Lemma3,
    Claims,
    Relation,
}

impl FuzzTarget {
    pub fn name(self) -> &'static str {
        match self {
            FuzzTarget::Monotonicity => "monotonicity",
            FuzzTarget::Lemma3 => "lemma3",
            FuzzTarget::Claims => "claims",
            FuzzTarget::Relation => "relation",
        }
    }
}

impl std::str::FromStr for FuzzTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<FuzzTarget> {
        [
            FuzzTarget::Monotonicity,
            FuzzTarget::Lemma3,
            FuzzTarget::Claims,
            FuzzTarget::Relation,
        ]
        .into_iter()
        .find(|t| t.name() == s)
        .ok_or_else(|| Error::Parameter(format!("unknown fuzz target `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct FuzzConfig {
    pub trials: u64,
    pub seed: u64,
    /// Lists have at most `2 * k_max` items.
    pub k_max: usize,
    /// Monotonicity only: draw items from (1/4, 1] instead of (1/3, 1].
    pub allow_small: bool,
}

impl FuzzConfig {
    pub fn new(trials: u64, seed: u64, k_max: usize) -> FuzzConfig {
        FuzzConfig {
            trials,
            seed,
            k_max,
            allow_small: false,
        }
    }
}

/// A failing case, shrunk. `inflated` is set for two-list checks.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Witness {
    pub trial: u64,
    pub instance: Instance,
    pub inflated: Option<Instance>,
    pub permutation: Permutation,
    pub round: Option<usize>,
    pub detail: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct FuzzReport {
    pub target: FuzzTarget,
    pub config: FuzzConfig,
    /// Individual assertions evaluated.
    pub checks: u64,
    pub violations: u64,
    /// The failure from the lowest-numbered failing trial, shrunk.
    pub witness: Option<Witness>,
}

impl FuzzReport {
    pub fn clean(&self) -> bool {
        self.violations == 0
    }
}

#[derive(Default)]
struct TrialTally {
    checks: u64,
    violations: u64,
    first: Option<Witness>,
}

impl TrialTally {
    fn merge(mut self, other: TrialTally) -> TrialTally {
        self.checks += other.checks;
        self.violations += other.violations;
        self.first = match (self.first, other.first) {
            (Some(a), Some(b)) => Some(if b.trial < a.trial { b } else { a }),
            (a, b) => a.or(b),
        };
        self
    }
}

fn run_trials(config: &FuzzConfig, trial: impl Fn(u64, &mut ChaCha8Rng) -> TrialTally + Sync) -> TrialTally {
    (0..config.trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = shard_rng(config.seed, t);
            trial(t, &mut rng)
        })
        .reduce(TrialTally::default, TrialTally::merge)
}

/// Size `n / FUZZ_DENOM` with `lo < size <= hi`.
fn random_size_between(rng: &mut impl Rng, lo: Ratio<i64>, hi: Ratio<i64>) -> Size {
    let min = (lo * FUZZ_DENOM).floor().to_integer() + 1;
    let max = (hi * FUZZ_DENOM).floor().to_integer();
    Size::new(rng.random_range(min..=max), FUZZ_DENOM).expect("in range")
}

/// Sizes above `floor`, concentrated where Best Fit decisions are fragile:
/// just above a third (and just below it when `floor` allows), between 11/20
/// and 3/4, and exact complements of one or two earlier items, so that bins
/// fill to exactly 1 often enough to matter.
fn random_list(rng: &mut impl Rng, k_max: usize, floor: Ratio<i64>) -> Vec<Size> {
    let n = rng.random_range(1..=2 * k_max.max(1));
    let third = Ratio::new(1, 3);
    let mut out: Vec<Size> = Vec::with_capacity(n);
    while out.len() < n {
        let band = rng.random_range(0..10);
        if band == 9 && !out.is_empty() {
            let a = out[rng.random_range(0..out.len())].value();
            let b = if rng.random_bool(0.5) {
                out[rng.random_range(0..out.len())].value()
            } else {
                Ratio::zero()
            };
            let rest = Ratio::one() - a - b;
            if rest > floor {
                out.push(Size::from_ratio(rest).expect("in range"));
                continue;
            }
        }
        let (lo, hi) = match band {
            0..=1 if floor < third => (floor, third),
            0..=5 => (third.max(floor), Ratio::new(2, 5)),
            6..=8 => (Ratio::new(11, 20), Ratio::new(3, 4)),
            _ => (floor, Ratio::one()),
        };
        out.push(random_size_between(rng, lo, hi));
    }
    out
}

/// A larger size: a step of at most 1/20 or, half the time, uniform in (s, 1].
fn inflate_size(rng: &mut impl Rng, s: Size) -> Size {
    let hi = if rng.random_bool(0.5) {
        (s.value() + Ratio::new(1, 20)).min(Ratio::one())
    } else {
        Ratio::one()
    };
    random_size_between(rng, s.value(), hi)
}

/// Inflates one coordinate; `None` if every item is already 1.
fn inflate_one(rng: &mut impl Rng, items: &[Size]) -> Option<(usize, Vec<Size>)> {
    let candidates: Vec<usize> = (0..items.len()).filter(|&j| items[j] < Size::ONE).collect();
    let &j = candidates.as_slice().choose(rng)?;
    let mut out = items.to_vec();
    out[j] = inflate_size(rng, items[j]);
    Some((j, out))
}

fn inflate_many(rng: &mut impl Rng, items: &[Size]) -> Vec<Size> {
    items
        .iter()
        .map(|&s| {
            if s < Size::ONE && rng.random_bool(0.5) {
                inflate_size(rng, s)
            } else {
                s
            }
        })
        .collect()
}

fn bf_of(items: &[Size]) -> usize {
    bf_identity(&Instance::new(items.to_vec()).expect("bounded denominators"))
}

fn monotone_violation(a: &[Size], b: &[Size]) -> bool {
    bf_of(a) > bf_of(b)
}

/// Greedy shrink of a two-list monotonicity failure: drop positions, then
/// snap each coordinate pair to the coarsest denominator that keeps the
/// failure (preserving domination and the size floor).
pub fn shrink_monotonicity(
    mut a: Vec<Size>,
    mut b: Vec<Size>,
    floor: Ratio<i64>,
    fails: impl Fn(&[Size], &[Size]) -> bool,
) -> (Vec<Size>, Vec<Size>) {
    loop {
        let before = (a.clone(), b.clone());
        // Single drops, then pairs: some failures need two items removed at once.
        let mut progress = true;
        while progress {
            progress = false;
            let n = a.len();
            let candidates = (0..n)
                .rev()
                .map(|j| vec![j])
                .chain((0..n).flat_map(|i| (0..i).map(move |j| vec![i, j])));
            for drop in candidates {
                if drop.len() >= a.len() {
                    continue;
                }
                let keep = |v: &[Size]| -> Vec<Size> {
                    v.iter()
                        .enumerate()
                        .filter(|(i, _)| !drop.contains(i))
                        .map(|(_, &s)| s)
                        .collect()
                };
                let (a2, b2) = (keep(&a), keep(&b));
                if fails(&a2, &b2) {
                    (a, b) = (a2, b2);
                    progress = true;
                    break;
                }
            }
        }
        for j in 0..a.len() {
            let current = a[j].denom().max(b[j].denom());
            'denoms: for d in 2..current {
                for (x, y) in snap_pair(a[j], b[j], d, floor) {
                    let (mut a2, mut b2) = (a.clone(), b.clone());
                    a2[j] = x;
                    b2[j] = y;
                    if fails(&a2, &b2) {
                        (a, b) = (a2, b2);
                        break 'denoms;
                    }
                }
            }
        }
        if (a.clone(), b.clone()) == before {
            return (a, b);
        }
    }
}

/// Nearby sizes with denominator `d`, keeping `x <= y` and `x > floor`.
fn snap_pair(x: Size, y: Size, d: i64, floor: Ratio<i64>) -> Vec<(Size, Size)> {
    let near = |s: Size| {
        let v = s.value() * d;
        [v.floor().to_integer(), v.ceil().to_integer()]
    };
    let mut out = Vec::new();
    for nx in near(x) {
        for ny in near(y) {
            let (Ok(sx), Ok(sy)) = (Size::new(nx, d), Size::new(ny, d)) else {
                continue;
            };
            let same = x == y;
            if sx.value() > floor && sx <= sy && (!same || sx == sy) {
                out.push((sx, sy));
            }
        }
    }
    out
}

/// Random lists above 1/3 (or 1/4 with `allow_small`), inflated in one item
/// and in a random subset; Best Fit must not use fewer bins afterwards.
pub fn monotonicity_fuzz(config: &FuzzConfig) -> FuzzReport {
    let floor = if config.allow_small {
        Ratio::new(1, 4)
    } else {
        Ratio::new(1, 3)
    };
    let tally = run_trials(config, |t, rng| {
        let mut tally = TrialTally::default();
        let items = random_list(rng, config.k_max, floor);
        let mut cases = Vec::new();
        if let Some((_, one)) = inflate_one(rng, &items) {
            cases.push(one);
        }
        cases.push(inflate_many(rng, &items));
        for inflated in cases {
            tally.checks += 1;
            if monotone_violation(&items, &inflated) {
                tally.violations += 1;
                if tally.first.is_none() {
                    let (a, b) = shrink_monotonicity(items.clone(), inflated, floor, monotone_violation);
                    tally.first = Some(Witness {
                        trial: t,
                        detail: format!("BF(I) = {} > {} = BF(I')", bf_of(&a), bf_of(&b)),
                        instance: Instance::new(a.clone()).expect("valid"),
                        inflated: Some(Instance::new(b).expect("valid")),
                        permutation: Permutation::identity(a.len()),
                        round: None,
                    });
                }
            }
        }
        tally
    });
    report(FuzzTarget::Monotonicity, config, tally)
}

fn report(target: FuzzTarget, config: &FuzzConfig, tally: TrialTally) -> FuzzReport {
    FuzzReport {
        target,
        config: *config,
        checks: tally.checks,
        violations: tally.violations,
        witness: tally.first,
    }
}

/// Random LM-pairs with sizes of denominator `denom`: `l` in (1/2, 2/3),
/// `m` in (1/3, min(1/2, 1 - l)]. Requires `denom >= 12`.
pub(crate) fn random_lm_pairs(rng: &mut impl Rng, k: usize, denom: i64) -> Vec<(Size, Size)> {
    let l_lo = denom / 2 + 1;
    let l_hi = num_integer::Integer::div_ceil(&(2 * denom), &3) - 1;
    let m_lo = denom / 3 + 1;
    (0..k)
        .map(|_| {
            let l = rng.random_range(l_lo..=l_hi.min(denom - m_lo));
            let m = rng.random_range(m_lo..=(denom / 2).min(denom - l));
            (
                Size::new(l, denom).expect("in range"),
                Size::new(m, denom).expect("in range"),
            )
        })
        .collect()
}

fn random_lm_case(rng: &mut ChaCha8Rng, k_max: usize) -> (LmInstance, Permutation) {
    let k = rng.random_range(1..=k_max.max(1));
    let pairs = random_lm_pairs(rng, k, FUZZ_DENOM);
    let lm = LmInstance::from_pairs(&pairs).expect("generator yields valid pairs");
    let mut order: Vec<usize> = (0..2 * k).collect();
    order.shuffle(rng);
    (lm, Permutation::new(order).expect("shuffle"))
}

/// Drops LM-pairs (keeping the relative arrival order of the rest) while
/// `fails` still holds.
pub fn shrink_lm(
    mut lm: LmInstance,
    mut perm: Permutation,
    fails: impl Fn(&LmInstance, &Permutation) -> bool,
) -> (LmInstance, Permutation) {
    let mut progress = true;
    while progress && lm.k() > 1 {
        progress = false;
        for drop in (0..lm.k()).rev() {
            let (l, m) = lm.pairs()[drop];
            let keep: Vec<(Size, Size)> = lm
                .pairs()
                .iter()
                .enumerate()
                .filter(|&(i, _)| i != drop)
                .map(|(_, &(l, m))| (lm.instance().size(l), lm.instance().size(m)))
                .collect();
            let k2 = keep.len();
            let remap = |id: usize| {
                let p = lm.pair_of(id);
                let p2 = if p > drop { p - 1 } else { p };
                if lm.is_large(id) {
                    p2
                } else {
                    k2 + p2
                }
            };
            let order: Vec<usize> = perm
                .order()
                .iter()
                .filter(|&&id| id != l && id != m)
                .map(|&id| remap(id))
                .collect();
            let lm2 = LmInstance::from_pairs(&keep).expect("subset of valid pairs");
            let perm2 = Permutation::new(order).expect("relabeled order");
            if fails(&lm2, &perm2) {
                (lm, perm) = (lm2, perm2);
                progress = true;
                break;
            }
        }
    }
    (lm, perm)
}

fn lm_witness(trial: u64, lm: LmInstance, perm: Permutation, round: Option<usize>, detail: String) -> Witness {
    Witness {
        trial,
        instance: lm.instance().clone(),
        inflated: None,
        permutation: perm,
        round,
        detail,
    }
}

/// LM-bins >= good-order pairs under both tie rules plus the bin-count identity on random LM
/// lists in random order.
pub fn lemma3_fuzz(config: &FuzzConfig) -> FuzzReport {
    let fails = |lm: &LmInstance, perm: &Permutation| {
        [TieBreak::EarliestOpened, TieBreak::LatestOpened]
            .into_iter()
            .any(|tie| {
                let l3 = verify_lemma3_with(lm, perm, tie).expect("valid");
                let eq = eq1_accounting_with(lm, perm, tie).expect("valid");
                !l3.holds || !eq.holds
            })
    };
    let tally = run_trials(config, |t, rng| {
        let (lm, perm) = random_lm_case(rng, config.k_max);
        let mut tally = TrialTally {
            checks: 4,
            ..TrialTally::default()
        };
        if fails(&lm, &perm) {
            tally.violations += 1;
            let (lm, perm) = shrink_lm(lm, perm, fails);
            let x = verify_lemma3(&lm, &perm).expect("valid");
            tally.first = Some(lm_witness(
                t,
                lm,
                perm,
                None,
                format!("X = {}, Y = {}", x.good_pairs, x.lm_bins),
            ));
        }
        tally
    });
    report(FuzzTarget::Lemma3, config, tally)
}

/// First round at which the per-component edge count or an alternating path fails.
fn claims_failure(lm: &LmInstance, perm: &Permutation) -> Option<usize> {
    let n = lm.instance().len();
    let mut packing = Packing::new(Algorithm::BEST_FIT);
    for (t, &id) in perm.order().iter().enumerate() {
        packing.place(id, lm.instance().size(id));
        let g = graph_from_packing(lm, perm, t + 1, &packing);
        if !verify_claim1(&g).holds || !verify_claim2(&g).holds {
            return Some(t + 1);
        }
    }
    debug_assert_eq!(packing.rounds(), n);
    None
}

/// Component edge counts and alternating paths at every round of random LM runs.
pub fn claims_fuzz(config: &FuzzConfig) -> FuzzReport {
    let tally = run_trials(config, |t, rng| {
        let (lm, perm) = random_lm_case(rng, config.k_max);
        let mut tally = TrialTally {
            checks: 2 * lm.instance().len() as u64,
            ..TrialTally::default()
        };
        if claims_failure(&lm, &perm).is_some() {
            tally.violations += 1;
            let (lm, perm) = shrink_lm(lm, perm, |l, p| claims_failure(l, p).is_some());
            let round = claims_failure(&lm, &perm);
            tally.first = Some(lm_witness(t, lm, perm, round, "claim failed".into()));
        }
        tally
    });
    report(FuzzTarget::Claims, config, tally)
}

fn relation_failure(a: &[Size], b: &[Size]) -> Option<(usize, RelationClass)> {
    let ia = Instance::new(a.to_vec()).expect("valid");
    let ib = Instance::new(b.to_vec()).expect("valid");
    (0..=a.len()).find_map(|t| {
        let c = relation_classify(&ia, &ib, t).expect("valid inputs");
        c.is_violation().then_some((t, c))
    })
}

/// Round-by-round relation between `BF(I)` and a single-item inflation.
pub fn relation_fuzz(config: &FuzzConfig) -> FuzzReport {
    let third = Ratio::new(1, 3);
    let tally = run_trials(config, |t, rng| {
        let items = random_list(rng, config.k_max, third);
        let Some((_, inflated)) = inflate_one(rng, &items) else {
            return TrialTally::default();
        };
        let mut tally = TrialTally {
            checks: items.len() as u64 + 1,
            ..TrialTally::default()
        };
        if relation_failure(&items, &inflated).is_some() {
            tally.violations += 1;
            let (a, b) = shrink_monotonicity(items, inflated, third, |a, b| {
                relation_failure(a, b).is_some()
            });
            let (round, class) = relation_failure(&a, &b).expect("shrink keeps failure");
            tally.first = Some(Witness {
                trial: t,
                permutation: Permutation::identity(a.len()),
                instance: Instance::new(a).expect("valid"),
                inflated: Some(Instance::new(b).expect("valid")),
                round: Some(round),
                detail: serde_json::to_string(&class).expect("serializable"),
            });
        }
        tally
    });
    report(FuzzTarget::Relation, config, tally)
}

pub fn fuzz(target: FuzzTarget, config: &FuzzConfig) -> FuzzReport {
    match target {
        FuzzTarget::Monotonicity => monotonicity_fuzz(config),
        FuzzTarget::Lemma3 => lemma3_fuzz(config),
        FuzzTarget::Claims => claims_fuzz(config),
        FuzzTarget::Relation => relation_fuzz(config),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::families::{counterexample_monotonicity, example1_sequence, large_lb_instance};
    use proptest::prelude::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::new(BigInt::from(n), BigInt::from(d))
    }

    fn eps() -> Ratio<i64> {
        Ratio::new(1, 100)
    }

    #[test]
    fn fixed_k4_sequence_good_pairs_and_bins() {
        let (lm, perm) = example1_sequence();
        assert_eq!(good_order_count(&lm, &perm), 2);
        let after7 = pack_prefix(lm.instance(), &perm, Algorithm::BEST_FIT, 7);
        assert_eq!(lm_bin_count(&after7), 2);
        let full = verify_lemma3(&lm, &perm).unwrap();
        assert_eq!((full.holds, full.good_pairs, full.lm_bins), (true, 2, 2));
        let eq1 = eq1_accounting(&lm, &perm).unwrap();
        assert_eq!((eq1.bf, eq1.predicted, eq1.holds), (5, 5, true));
    }

    #[test]
    fn fixed_k4_sequence_graph_at_round_seven() {
        let (lm, perm) = example1_sequence();
        let g = build_match_graph(&lm, &perm, 7).unwrap();
        // l2 with m3 and l1 with m4 share bins; m1, m2 form an MM-bin.
        let mut bf = g.bf_edges.clone();
        bf.sort();
        assert_eq!(bf, vec![(0, 7), (1, 6)]);
        let good: Vec<usize> = g.opt_edges.iter().filter(|e| e.good_order).map(|e| e.pair).collect();
        assert_eq!(good, vec![0, 1]);
        assert_eq!(g.opt_edges.len(), 3);
        let c1 = verify_claim1(&g);
        assert!(c1.holds);
        let sizes: Vec<(usize, usize, usize)> = c1
            .per_component
            .iter()
            .map(|c| (c.vertices.len(), c.bf_edges, c.good_opt_edges))
            .collect();
        assert_eq!(sizes, vec![(4, 1, 1), (3, 1, 1)]);
        let c2 = verify_claim2(&g);
        assert!(c2.holds);
        assert!(!c2.paths.is_empty());
    }

    #[test]
    fn first_round_graph() {
        let (lm, perm) = example1_sequence();
        let g = build_match_graph(&lm, &perm, 1).unwrap();
        assert_eq!(g.larges, vec![1]);
        assert!(g.bf_edges.is_empty() && g.opt_edges.is_empty());
        assert!(verify_claim1(&g).holds);
        let c2 = verify_claim2(&g);
        assert_eq!(c2.paths.len(), 1);
        assert_eq!(c2.paths[0].items, vec![1]);
        assert!(build_match_graph(&lm, &perm, 0).is_err());
        assert!(build_match_graph(&lm, &perm, 9).is_err());
    }

    #[test]
    fn extreme_orders() {
        let lm = large_lb_instance(4, eps()).unwrap();
        let larges_first = Permutation::identity(8);
        assert_eq!(good_order_count(&lm, &larges_first), 4);
        let g = build_match_graph(&lm, &larges_first, 8).unwrap();
        assert!(g.opt_edges.iter().all(|e| e.good_order));
        let mediums_first = Permutation::new(vec![4, 5, 6, 7, 0, 1, 2, 3]).unwrap();
        assert_eq!(good_order_count(&lm, &mediums_first), 0);
        let all_lm = verify_lemma3(&lm, &larges_first).unwrap();
        assert_eq!(all_lm.lm_bins, 4);
        assert_eq!(eq1_accounting(&lm, &larges_first).unwrap().bf, 4);
    }

    #[test]
    fn lm_bins_of_simple_packings() {
        let i = Instance::from_strs(&["0.6", "0.4"]).unwrap();
        let p = pack(&i, &Permutation::identity(2), Algorithm::BEST_FIT).unwrap();
        assert_eq!(lm_bin_count(&p), 1);
        let i = Instance::from_strs(&["0.6", "0.7", "0.8"]).unwrap();
        let p = pack(&i, &Permutation::identity(3), Algorithm::BEST_FIT).unwrap();
        assert_eq!(lm_bin_count(&p), 0);
    }

    #[test]
    fn lm_bins_cover_good_pairs_on_every_order() {
        for tie in [TieBreak::EarliestOpened, TieBreak::LatestOpened] {
            for k in 1..=3 {
                let r = lemma3_exhaustive(&large_lb_instance(k, eps()).unwrap(), tie).unwrap();
                assert_eq!(r.lemma3_violations, 0);
                assert_eq!(r.eq1_violations, 0);
                assert!(r.first_violation.is_none());
            }
        }
        let r = lemma3_exhaustive(&large_lb_instance(3, eps()).unwrap(), TieBreak::EarliestOpened).unwrap();
        assert_eq!(r.permutations, 720);
    }

    #[test]
    fn expected_bins_within_five_quarters_bound() {
        let one = theorem1_check(&large_lb_instance(1, eps()).unwrap()).unwrap();
        assert_eq!(one.expectation, q(1, 1));
        assert!(one.holds && one.intermediates_hold);

        let three = theorem1_check(&large_lb_instance(3, eps()).unwrap()).unwrap();
        assert_eq!(three.expectation, q(65, 18));
        assert_eq!(three.bound, q(4, 1));
        assert!(three.holds && three.intermediates_hold);
        assert!(three.ratio() <= q(31, 24));
        assert_eq!(three.expected_good_pairs, q(3, 2));
        assert_eq!(three.odd_parity_probability, q(1, 2));
    }

    #[test]
    fn monotonicity_counterexample() {
        let (a, b) = counterexample_monotonicity();
        let m = monotonicity_check(&a, &b).unwrap();
        assert_eq!((m.holds, m.bf, m.bf_inflated, m.guaranteed), (false, 4, 3, false));
        assert!(monotonicity_check(&a, &a).unwrap().holds);
        assert!(monotonicity_check(&b, &a).is_err());
        let short = Instance::from_strs(&["0.5"]).unwrap();
        assert!(monotonicity_check(&a, &short).is_err());
    }

    #[test]
    fn relation_basics() {
        let a = Instance::from_strs(&["0.6", "0.4", "0.45", "0.5", "0.35"]).unwrap();
        let b = Instance::from_strs(&["0.6", "0.4", "0.45", "0.7", "0.35"]).unwrap();
        for t in 0..=3 {
            assert_eq!(relation_classify(&a, &b, t).unwrap(), RelationClass::Star1);
        }
        for t in 0..=5 {
            assert_eq!(relation_classify(&a, &a, t).unwrap(), RelationClass::Star1);
            assert!(!relation_classify(&a, &b, t).unwrap().is_violation());
        }
        let two = Instance::from_strs(&["0.6", "0.4", "0.45", "0.7", "0.9"]).unwrap();
        assert!(relation_classify(&a, &two, 5).is_err());
        let small = Instance::from_strs(&["0.6", "0.3", "0.45", "0.5", "0.35"]).unwrap();
        assert!(relation_classify(&small, &small, 5).is_err());
    }

    #[test]
    fn relation_patterns() {
        // 0.4 opens a bin; inflated to 0.7 it does too.
        let a = Instance::from_strs(&["0.4"]).unwrap();
        let b = Instance::from_strs(&["0.7"]).unwrap();
        assert!(matches!(relation_classify(&a, &b, 1).unwrap(), RelationClass::Star2 { .. }));
        // 0.4 and 0.44 both join 0.55; 0.45 does but 0.46 does not.
        let a = Instance::from_strs(&["0.55", "0.45"]).unwrap();
        let b = Instance::from_strs(&["0.55", "0.44"]).unwrap();
        let a2 = Instance::from_strs(&["0.55", "0.4"]).unwrap();
        assert_eq!(relation_classify(&a2, &b, 2).unwrap(), RelationClass::Star1);
        let b = Instance::from_strs(&["0.55", "0.46"]).unwrap();
        assert!(matches!(relation_classify(&a, &b, 2).unwrap(), RelationClass::Star3 { .. }));
    }

    #[test]
    fn fuzzers_are_clean_above_a_third() {
        let cfg = FuzzConfig::new(2000, 17, 5);
        for target in [FuzzTarget::Monotonicity, FuzzTarget::Lemma3, FuzzTarget::Claims, FuzzTarget::Relation] {
            let r = fuzz(target, &cfg);
            assert!(r.clean(), "{target:?}: {:?}", r.witness);
            assert!(r.checks > 0);
        }
        let empty = monotonicity_fuzz(&FuzzConfig::new(0, 1, 4));
        assert_eq!((empty.checks, empty.violations), (0, 0));
    }

    #[test]
    fn fuzz_is_deterministic() {
        let cfg = FuzzConfig {
            allow_small: true,
            ..FuzzConfig::new(3000, 5, 5)
        };
        let a = monotonicity_fuzz(&cfg);
        let b = monotonicity_fuzz(&cfg);
        assert_eq!((a.checks, a.violations), (b.checks, b.violations));
        assert_eq!(a.witness, b.witness);
    }

    #[test]
    fn small_items_break_monotonicity() {
        let cfg = FuzzConfig {
            allow_small: true,
            ..FuzzConfig::new(10_000, 0, 8)
        };
        let r = monotonicity_fuzz(&cfg);
        assert!(r.violations > 0);
        let w = r.witness.unwrap();
        let b = w.inflated.unwrap();
        let m = monotonicity_check(&w.instance, &b).unwrap();
        assert!(!m.holds);
        assert!(w.instance.len() <= 10);
    }

    #[test]
    fn shrinker_reduces_the_known_counterexample() {
        let (a, b) = counterexample_monotonicity();
        let (sa, sb) = shrink_monotonicity(
            a.items().to_vec(),
            b.items().to_vec(),
            Ratio::new(1, 4),
            monotone_violation,
        );
        assert!(monotone_violation(&sa, &sb));
        assert!(sa.len() <= 7);
        assert!(sa.iter().zip(&sb).all(|(x, y)| x <= y));
    }

    #[test]
    fn lm_shrinker_keeps_failure() {
        let lm = large_lb_instance(4, eps()).unwrap();
        let perm = Permutation::new(vec![7, 6, 5, 4, 3, 2, 1, 0]).unwrap();
        // Stand-in failure: more than one bin.
        let (s, p) = shrink_lm(lm, perm, |l, p| {
            pack(l.instance(), p, Algorithm::BEST_FIT).unwrap().bin_count() > 1
        });
        // One pair always fits one bin, so two pairs remain.
        assert_eq!(s.k(), 2);
        assert_eq!(p.len(), 4);
    }

    fn arb_lm_case() -> impl Strategy<Value = (LmInstance, Permutation)> {
        (1usize..=5, any::<u64>()).prop_map(|(k, seed)| {
            let mut rng = shard_rng(seed, 0);
            let pairs = random_lm_pairs(&mut rng, k, 60);
            let lm = LmInstance::from_pairs(&pairs).unwrap();
            let mut order: Vec<usize> = (0..2 * k).collect();
            order.shuffle(&mut rng);
            (lm, Permutation::new(order).unwrap())
        })
    }

    proptest! {
        #[test]
        fn lm_bins_and_identity_hold((lm, perm) in arb_lm_case()) {
            for tie in [TieBreak::EarliestOpened, TieBreak::LatestOpened] {
                prop_assert!(verify_lemma3_with(&lm, &perm, tie).unwrap().holds);
                prop_assert!(eq1_accounting_with(&lm, &perm, tie).unwrap().holds);
            }
        }

        #[test]
        fn claims_hold_every_round((lm, perm) in arb_lm_case()) {
            prop_assert_eq!(claims_failure(&lm, &perm), None);
        }

        #[test]
        fn inflation_never_helps(seed in any::<u64>()) {
            let mut rng = shard_rng(seed, 0);
            let items = random_list(&mut rng, 5, Ratio::new(1, 3));
            let many = inflate_many(&mut rng, &items);
            prop_assert!(!monotone_violation(&items, &many));
            if let Some((_, one)) = inflate_one(&mut rng, &items) {
                prop_assert!(relation_failure(&items, &one).is_none());
            }
        }
    }
}
