//! Online packing heuristics over exact sizes.
//!
//! Two execution paths share one placement rule ([`choose_bin`]):
//! [`Packing`] keeps full bin contents with rational loads, and
//! [`UnitPacker`] tracks only integer loads of bins that can still receive
//! an item, for enumeration and simulation hot loops.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{One, Zero};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::instance::{Instance, Permutation};
use crate::opt::OptMethod;
use crate::size::{Size, SizeClass};

/// Which equally loaded feasible bin Best Fit picks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum TieBreak {
    #[default]
    EarliestOpened,
    LatestOpened,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Algorithm {
    BestFit(TieBreak),
    FirstFit,
    NextFit,
}

impl Algorithm {
    pub const BEST_FIT: Algorithm = Algorithm::BestFit(TieBreak::EarliestOpened);

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::BestFit(TieBreak::EarliestOpened) => "best-fit",
            Algorithm::BestFit(TieBreak::LatestOpened) => "best-fit-latest",
            Algorithm::FirstFit => "first-fit",
            Algorithm::NextFit => "next-fit",
        }
    }
}

impl Default for Algorithm {
    fn default() -> Self {
        Algorithm::BEST_FIT
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Algorithm> {
        match s {
            "best-fit" | "bf" => Ok(Algorithm::BEST_FIT),
            "best-fit-latest" => Ok(Algorithm::BestFit(TieBreak::LatestOpened)),
            "first-fit" | "ff" => Ok(Algorithm::FirstFit),
            "next-fit" | "nf" => Ok(Algorithm::NextFit),
            other => Err(Error::Parameter(format!("unknown algorithm `{other}`"))),
        }
    }
}

impl Serialize for Algorithm {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for Algorithm {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Algorithm, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// Picks the bin for the next item among `n_bins` bins in opening order, or
/// `None` when a new bin must be opened.
///
/// Fits are closed at capacity: `load + item <= 1`.
pub fn choose_bin(
    alg: Algorithm,
    n_bins: usize,
    fits: impl Fn(usize) -> bool,
    cmp_load: impl Fn(usize, usize) -> Ordering,
) -> Option<usize> {
    match alg {
        Algorithm::BestFit(tie) => {
            let mut best: Option<usize> = None;
            for i in (0..n_bins).filter(|&i| fits(i)) {
                best = match best {
                    None => Some(i),
                    Some(b) => match (cmp_load(i, b), tie) {
                        (Ordering::Greater, _) | (Ordering::Equal, TieBreak::LatestOpened) => Some(i),
                        _ => Some(b),
                    },
                };
            }
            best
        }
        Algorithm::FirstFit => (0..n_bins).find(|&i| fits(i)),
        Algorithm::NextFit => n_bins.checked_sub(1).filter(|&i| fits(i)),
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Bin {
    items: Vec<usize>,
    #[serde(skip)]
    sizes: Vec<Size>,
    #[serde(serialize_with = "ser_ratio")]
    load: Ratio<i64>,
    opened_at: usize,
}

fn ser_ratio<S: Serializer>(r: &Ratio<i64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(&format_args!("{}/{}", r.numer(), r.denom()))
}

impl Bin {
    pub fn new(opened_at: usize) -> Bin {
        Bin {
            items: Vec::new(),
            sizes: Vec::new(),
            load: Ratio::zero(),
            opened_at,
        }
    }

    pub fn with_items(instance: &Instance, items: Vec<usize>, opened_at: usize) -> Bin {
        let sizes: Vec<Size> = items.iter().map(|&i| instance.size(i)).collect();
        let load = sizes.iter().map(|s| s.value()).sum();
        Bin {
            items,
            sizes,
            load,
            opened_at,
        }
    }

    /// Item ids in arrival order.
    pub fn items(&self) -> &[usize] {
        &self.items
    }

    /// Member sizes, parallel to [`Bin::items`].
    pub fn sizes(&self) -> &[Size] {
        &self.sizes
    }

    pub fn load(&self) -> Ratio<i64> {
        self.load
    }

    /// Round (1-based) in which the bin was opened.
    pub fn opened_at(&self) -> usize {
        self.opened_at
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn fits(&self, size: Size) -> bool {
        self.load + size.value() <= Ratio::one()
    }

    fn push(&mut self, id: usize, size: Size) {
        self.items.push(id);
        self.sizes.push(size);
        self.load += size.value();
    }
}

/// What produced a packing.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Online(Algorithm),
    Offline(OptMethod),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Packing {
    origin: Origin,
    bins: Vec<Bin>,
    #[serde(skip)]
    sizes: Vec<Size>,
    /// `assignment[id]` is the bin index of item `id`, if packed.
    assignment: Vec<Option<usize>>,
    rounds: usize,
}

impl Packing {
    pub fn new(alg: Algorithm) -> Packing {
        Packing {
            origin: Origin::Online(alg),
            bins: Vec::new(),
            sizes: Vec::new(),
            assignment: Vec::new(),
            rounds: 0,
        }
    }

    /// Builds an offline packing from explicit bin contents.
    pub fn from_bins(instance: &Instance, method: OptMethod, bins: Vec<Vec<usize>>) -> Packing {
        let mut assignment = vec![None; instance.len()];
        for (b, items) in bins.iter().enumerate() {
            for &i in items {
                assignment[i] = Some(b);
            }
        }
        Packing {
            origin: Origin::Offline(method),
            bins: bins
                .into_iter()
                .map(|items| Bin::with_items(instance, items, 0))
                .collect(),
            sizes: instance.items().to_vec(),
            assignment,
            rounds: 0,
        }
    }

    pub fn origin(&self) -> Origin {
        self.origin
    }

    pub fn algorithm(&self) -> Option<Algorithm> {
        match self.origin {
            Origin::Online(alg) => Some(alg),
            Origin::Offline(_) => None,
        }
    }

    pub fn bins(&self) -> &[Bin] {
        &self.bins
    }

    pub fn bin_count(&self) -> usize {
        self.bins.len()
    }

    pub fn assignment(&self) -> &[Option<usize>] {
        &self.assignment
    }

    pub fn bin_of(&self, id: usize) -> Option<usize> {
        self.assignment.get(id).copied().flatten()
    }

    /// Size of item `id` as packed.
    pub fn size_of(&self, id: usize) -> Size {
        self.sizes[id]
    }

    pub fn rounds(&self) -> usize {
        self.rounds
    }

    /// Packs item `id` by the online rule and returns its bin index.
    pub fn place(&mut self, id: usize, size: Size) -> usize {
        let alg = self
            .algorithm()
            .expect("online placement on an offline packing");
        self.rounds += 1;
        let bins = &self.bins;
        let chosen = choose_bin(
            alg,
            bins.len(),
            |i| bins[i].fits(size),
            |i, j| bins[i].load.cmp(&bins[j].load),
        );
        let b = chosen.unwrap_or_else(|| {
            self.bins.push(Bin::new(self.rounds));
            self.bins.len() - 1
        });
        self.bins[b].push(id, size);
        if self.sizes.len() <= id {
            self.sizes.resize(id + 1, size);
            self.assignment.resize(id + 1, None);
        }
        self.sizes[id] = size;
        self.assignment[id] = Some(b);
        b
    }

    pub fn configs(&self) -> Vec<BinConfig> {
        self.bins.iter().map(BinConfig::of_nonempty).collect()
    }

    pub fn lm_bin_count(&self) -> usize {
        self.configs().iter().filter(|c| **c == BinConfig::LM).count()
    }

    /// Independent feasibility check: each item of `instance` packed exactly
    /// once and every load (recomputed) at most 1.
    pub fn is_feasible_for(&self, instance: &Instance) -> bool {
        let mut count = vec![0usize; instance.len()];
        for bin in &self.bins {
            let mut load = Ratio::<i64>::zero();
            for &i in &bin.items {
                if i >= instance.len() {
                    return false;
                }
                count[i] += 1;
                load += instance.size(i).value();
            }
            if load > Ratio::one() || load != bin.load {
                return false;
            }
        }
        count.iter().all(|&c| c == 1)
    }
}

/// Runs `alg` over `instance` in `perm` order.
pub fn pack(instance: &Instance, perm: &Permutation, alg: Algorithm) -> Result<Packing> {
    perm.check(instance.len())?;
    Ok(pack_prefix(instance, perm, alg, instance.len()))
}

/// Packing after the first `t` arrivals of `perm` (unchecked).
pub(crate) fn pack_prefix(instance: &Instance, perm: &Permutation, alg: Algorithm, t: usize) -> Packing {
    let mut packing = Packing::new(alg);
    packing.sizes = instance.items().to_vec();
    packing.assignment = vec![None; instance.len()];
    for &id in &perm.order()[..t] {
        packing.place(id, instance.size(id));
    }
    packing
}

pub fn best_fit_pack(instance: &Instance, perm: &Permutation) -> Result<Packing> {
    pack(instance, perm, Algorithm::BEST_FIT)
}

pub fn first_fit_pack(instance: &Instance, perm: &Permutation) -> Result<Packing> {
    pack(instance, perm, Algorithm::FirstFit)
}

pub fn next_fit_pack(instance: &Instance, perm: &Permutation) -> Result<Packing> {
    pack(instance, perm, Algorithm::NextFit)
}

/// Extends `packing` by one item (next id) under its own online rule.
pub fn best_fit_step(packing: &Packing, item: Size) -> Packing {
    let mut next = packing.clone();
    let id = next.assignment.len();
    next.place(id, item);
    next
}

/// Classification of a bin by the classes of its members.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
pub enum BinConfig {
    L,
    M,
    LM,
    MM,
    /// Anything else: bins with small items, 3+ items, or (infeasible) LL.
    Other {
        large: usize,
        medium: usize,
        small: usize,
    },
}

impl BinConfig {
    fn of_nonempty(bin: &Bin) -> BinConfig {
        bin_config(bin).expect("packed bins are nonempty")
    }
}

pub fn bin_config(bin: &Bin) -> Result<BinConfig> {
    if bin.is_empty() {
        return Err(Error::EmptyBin);
    }
    let (mut large, mut medium, mut small) = (0, 0, 0);
    for s in &bin.sizes {
        match s.class() {
            SizeClass::Large => large += 1,
            SizeClass::Medium => medium += 1,
            SizeClass::Small => small += 1,
        }
    }
    Ok(match (large, medium, small) {
        (1, 0, 0) => BinConfig::L,
        (0, 1, 0) => BinConfig::M,
        (1, 1, 0) => BinConfig::LM,
        (0, 2, 0) => BinConfig::MM,
        _ => BinConfig::Other { large, medium, small },
    })
}

impl fmt::Display for BinConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BinConfig::L => f.write_str("L"),
            BinConfig::M => f.write_str("M"),
            BinConfig::LM => f.write_str("LM"),
            BinConfig::MM => f.write_str("MM"),
            BinConfig::Other { large, medium, small } => {
                write!(f, "L{large}M{medium}S{small}")
            }
        }
    }
}

/// Integer-unit packer that only tracks bins able to receive another item.
///
/// A bin whose residual capacity drops below `min_item` can never be chosen
/// again, so dropping it leaves every later decision unchanged, including
/// tie-breaks (the survivors keep their opening order). Next Fit keeps only
/// the current bin.
#[derive(Clone, Debug)]
pub struct UnitPacker {
    alg: Algorithm,
    cap: u64,
    min_item: u64,
    open: Vec<u64>,
    opened: usize,
}

impl UnitPacker {
    pub fn new(alg: Algorithm, cap: u64, min_item: u64) -> UnitPacker {
        UnitPacker {
            alg,
            cap,
            min_item: min_item.max(1),
            open: Vec::with_capacity(8),
            opened: 0,
        }
    }

    pub fn for_instance(alg: Algorithm, instance: &Instance) -> UnitPacker {
        let min = instance.units().iter().copied().min().unwrap_or(1);
        UnitPacker::new(alg, instance.unit(), min)
    }

    /// A packer whose receptive bins already hold `loads`, in opening order.
    pub fn with_open_loads(alg: Algorithm, cap: u64, min_item: u64, loads: &[u64]) -> UnitPacker {
        let mut packer = UnitPacker::new(alg, cap, min_item);
        packer.open.extend_from_slice(loads);
        packer.opened = loads.len();
        packer
    }

    pub fn reset(&mut self) {
        self.open.clear();
        self.opened = 0;
    }

    /// Packs one item; returns `true` if a new bin was opened.
    pub fn push(&mut self, item: u64) -> bool {
        let cap = self.cap;
        let open = &self.open;
        let chosen = choose_bin(
            self.alg,
            open.len(),
            |i| open[i] + item <= cap,
            |i, j| open[i].cmp(&open[j]),
        );
        match chosen {
            Some(i) => {
                self.open[i] += item;
                if cap - self.open[i] < self.min_item {
                    self.open.remove(i);
                }
                false
            }
            None => {
                self.opened += 1;
                if self.alg == Algorithm::NextFit {
                    self.open.clear();
                }
                if cap - item >= self.min_item {
                    self.open.push(item);
                }
                true
            }
        }
    }

    pub fn bins(&self) -> usize {
        self.opened
    }

    /// Loads of bins that can still receive an item, in opening order.
    pub fn open_loads(&self) -> &[u64] {
        &self.open
    }
}

/// Bin count of `alg` on `units` arriving in `order`.
pub fn count_bins(
    packer: &mut UnitPacker,
    units: &[u64],
    order: impl IntoIterator<Item = usize>,
) -> usize {
    packer.reset();
    for i in order {
        packer.push(units[i]);
    }
    packer.bins()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn inst(items: &[&str]) -> Instance {
        Instance::from_strs(items).unwrap()
    }

    fn loads(p: &Packing) -> Vec<String> {
        p.bins()
            .iter()
            .map(|b| format!("{}/{}", b.load().numer(), b.load().denom()))
            .collect()
    }

    #[test]
    fn monotonicity_lists() {
        let i = inst(&["0.36", "0.65", "0.34", "0.38", "0.28", "0.35", "0.62"]);
        let j = inst(&["0.36", "0.65", "0.36", "0.38", "0.28", "0.35", "0.62"]);
        let id = Permutation::identity(7);
        assert_eq!(best_fit_pack(&i, &id).unwrap().bin_count(), 4);
        assert_eq!(best_fit_pack(&j, &id).unwrap().bin_count(), 3);
        let p4 = pack_prefix(&i, &id, Algorithm::BEST_FIT, 4);
        assert_eq!(p4.bins()[0].items(), &[0, 3]);
        assert_eq!(p4.bins()[1].items(), &[1, 2]);
    }

    #[test]
    fn single_item() {
        let i = inst(&["0.7"]);
        let id = Permutation::identity(1);
        for alg in [Algorithm::BEST_FIT, Algorithm::FirstFit, Algorithm::NextFit] {
            assert_eq!(pack(&i, &id, alg).unwrap().bin_count(), 1);
        }
    }

    #[test]
    fn step_examples() {
        let p = best_fit_step(&Packing::new(Algorithm::BEST_FIT), "0.5".parse().unwrap());
        assert_eq!(loads(&p), vec!["1/2"]);

        let mut p = Packing::new(Algorithm::BEST_FIT);
        p.place(0, "0.6".parse().unwrap());
        p.place(1, "0.5".parse().unwrap());
        assert_eq!(p.bin_count(), 2);
        let p = best_fit_step(&p, "0.35".parse().unwrap());
        assert_eq!(p.bins()[0].items(), &[0, 2]);
        assert_eq!(p.bin_count(), 2);

        let mut p = Packing::new(Algorithm::BEST_FIT);
        p.place(0, "0.7".parse().unwrap());
        p.place(1, "0.65".parse().unwrap());
        let p = best_fit_step(&p, "0.4".parse().unwrap());
        assert_eq!(p.bin_count(), 3);
    }

    #[test]
    fn first_and_next_fit() {
        let id = Permutation::identity(4);
        let i = inst(&["0.6", "0.3", "0.3", "0.5"]);
        let ff = first_fit_pack(&i, &id).unwrap();
        assert_eq!(ff.bins()[0].items(), &[0, 1]);
        assert_eq!(ff.bins()[1].items(), &[2, 3]);
        let nf = next_fit_pack(&i, &id).unwrap();
        assert_eq!(nf.bins()[0].items(), &[0, 1]);
        assert_eq!(nf.bins()[1].items(), &[2, 3]);

        let three = inst(&["0.5", "0.5", "0.5"]);
        assert_eq!(first_fit_pack(&three, &Permutation::identity(3)).unwrap().bin_count(), 2);

        let nf = next_fit_pack(&inst(&["0.6", "0.5", "0.3"]), &Permutation::identity(3)).unwrap();
        assert_eq!(nf.bins()[0].items(), &[0]);
        assert_eq!(nf.bins()[1].items(), &[1, 2]);
    }

    #[test]
    fn next_fit_never_revisits() {
        // 0.3 fits the first bin but Next Fit only looks at the newest one.
        let i = inst(&["0.5", "0.6", "0.5", "0.3"]);
        let nf = next_fit_pack(&i, &Permutation::identity(4)).unwrap();
        assert_eq!(nf.bin_count(), 3);
        let ff = first_fit_pack(&i, &Permutation::identity(4)).unwrap();
        assert_eq!(ff.bin_count(), 2);
    }

    #[test]
    fn tie_rules() {
        let tie = inst(&["0.6", "0.6", "0.4"]);
        let id = Permutation::identity(3);
        let e = pack(&tie, &id, Algorithm::BEST_FIT).unwrap();
        let l = pack(&tie, &id, Algorithm::BestFit(TieBreak::LatestOpened)).unwrap();
        assert_eq!(e.bins()[0].items(), &[0, 2]);
        assert_eq!(l.bins()[1].items(), &[1, 2]);
    }

    #[test]
    fn configs() {
        let i = inst(&["0.6", "0.4", "0.45", "0.6", "0.2", "0.1"]);
        let p = Packing::from_bins(&i, OptMethod::BranchBound, vec![vec![0, 1], vec![1, 2], vec![3], vec![4, 5]]);
        let c: Vec<_> = p.bins().iter().map(|b| bin_config(b).unwrap()).collect();
        assert_eq!(c[0], BinConfig::LM);
        assert_eq!(c[2], BinConfig::L);
        assert_eq!(c[3], BinConfig::Other { large: 0, medium: 0, small: 2 });
        let mm = Packing::from_bins(&inst(&["0.4", "0.45"]), OptMethod::BranchBound, vec![vec![0, 1]]);
        assert_eq!(bin_config(&mm.bins()[0]).unwrap(), BinConfig::MM);
        assert!(matches!(bin_config(&Bin::new(1)), Err(Error::EmptyBin)));
        assert_eq!(p.lm_bin_count(), 1);
    }

    #[test]
    fn algorithm_names_round_trip() {
        for alg in [
            Algorithm::BEST_FIT,
            Algorithm::BestFit(TieBreak::LatestOpened),
            Algorithm::FirstFit,
            Algorithm::NextFit,
        ] {
            assert_eq!(alg.name().parse::<Algorithm>().unwrap(), alg);
        }
    }

    fn arb_case(lo: i64) -> impl Strategy<Value = (Instance, Permutation)> {
        prop::collection::vec(lo..=100i64, 1..12)
            .prop_map(|v| {
                let sizes = v.iter().map(|&n| Size::new(n, 100).unwrap()).collect();
                Instance::new(sizes).unwrap()
            })
            .prop_flat_map(|inst| {
                let n = inst.len();
                (Just(inst), Just((0..n).collect::<Vec<_>>()).prop_shuffle())
            })
            .prop_map(|(inst, order)| (inst, Permutation::new(order).unwrap()))
    }

    fn arb_alg() -> impl Strategy<Value = Algorithm> {
        prop_oneof![
            Just(Algorithm::BEST_FIT),
            Just(Algorithm::BestFit(TieBreak::LatestOpened)),
            Just(Algorithm::FirstFit),
            Just(Algorithm::NextFit),
        ]
    }

    proptest! {
        #[test]
        fn packings_are_feasible((inst, perm) in arb_case(1), alg in arb_alg()) {
            let p = pack(&inst, &perm, alg).unwrap();
            prop_assert!(p.is_feasible_for(&inst));
            prop_assert_eq!(pack(&inst, &perm, alg).unwrap(), p);
        }

        #[test]
        fn best_fit_choice_is_fullest_feasible((inst, perm) in arb_case(1)) {
            let p = best_fit_pack(&inst, &perm).unwrap();
            for t in 0..inst.len() {
                let before = pack_prefix(&inst, &perm, Algorithm::BEST_FIT, t);
                let id = perm.order()[t];
                let size = inst.size(id);
                let chosen = p.bin_of(id).unwrap();
                let feasible: Vec<_> = before.bins().iter().filter(|b| b.fits(size)).collect();
                if chosen < before.bin_count() {
                    let max = feasible.iter().map(|b| b.load()).max().unwrap();
                    prop_assert_eq!(before.bins()[chosen].load(), max);
                } else {
                    prop_assert!(feasible.is_empty());
                }
            }
        }

        #[test]
        fn steps_fold_to_batch((inst, perm) in arb_case(1)) {
            let batch = best_fit_pack(&inst, &perm).unwrap();
            let mut folded = Packing::new(Algorithm::BEST_FIT);
            for &id in perm.order() {
                folded = best_fit_step(&folded, inst.size(id));
            }
            let a: Vec<_> = batch.bins().iter().map(|b| b.load()).collect();
            let b: Vec<_> = folded.bins().iter().map(|b| b.load()).collect();
            prop_assert_eq!(a, b);
        }

        #[test]
        fn unit_packer_agrees((inst, perm) in arb_case(1), alg in arb_alg()) {
            let full = pack(&inst, &perm, alg).unwrap().bin_count();
            let mut packer = UnitPacker::for_instance(alg, &inst);
            prop_assert_eq!(count_bins(&mut packer, inst.units(), perm.order().iter().copied()), full);
        }

        #[test]
        fn third_large_bins_hold_two((inst, perm) in arb_case(34), alg in arb_alg()) {
            let p = pack(&inst, &perm, alg).unwrap();
            for c in p.configs() {
                prop_assert!(matches!(c, BinConfig::L | BinConfig::M | BinConfig::LM | BinConfig::MM));
            }
        }
    }
}
