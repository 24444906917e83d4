//! Exact offline optimum.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::instance::Instance;
use crate::packing::Packing;

pub const DEFAULT_EXACT_CAP: usize = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OptMethod {
    BranchBound,
    LargeMatching,
}

#[derive(Clone, Debug)]
pub struct OptResult {
    pub bin_count: usize,
    pub certificate: Packing,
    pub method: OptMethod,
}

/// `ceil(sum of sizes)`.
pub fn size_lower_bound(instance: &Instance) -> usize {
    let total: u128 = instance.units().iter().map(|&u| u as u128).sum();
    total.div_ceil(instance.unit() as u128) as usize
}

/// OPT by the fastest applicable exact method.
pub fn opt(instance: &Instance) -> Result<OptResult> {
    if instance.all_larger_than_third() {
        opt_large_items(instance)
    } else {
        opt_exact(instance)
    }
}

pub fn opt_exact(instance: &Instance) -> Result<OptResult> {
    opt_exact_capped(instance, DEFAULT_EXACT_CAP)
}

/// Branch-and-bound over item-to-bin assignments.
///
/// Items are placed largest first; a new bin may only take the next free
/// index, and among existing bins with equal load only the first is tried.
pub fn opt_exact_capped(instance: &Instance, cap: usize) -> Result<OptResult> {
    let n = instance.len();
    if n > cap {
        return Err(Error::OptTooLarge { n, cap });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by_key(|&i| std::cmp::Reverse(instance.units()[i]));
    let sizes: Vec<u64> = order.iter().map(|&i| instance.units()[i]).collect();

    let mut search = Search {
        cap: instance.unit(),
        sizes: &sizes,
        suffix: suffix_sums(&sizes),
        volume_bound: size_lower_bound(instance),
        loads: Vec::with_capacity(n),
        assign: vec![0; n],
        best: first_fit_decreasing(instance.unit(), &sizes),
    };
    if search.best.0 > search.volume_bound {
        search.dfs(0);
    }

    let (count, assign) = search.best;
    let mut bins = vec![Vec::new(); count];
    for (pos, &b) in assign.iter().enumerate() {
        bins[b].push(order[pos]);
    }
    for bin in &mut bins {
        bin.sort_unstable();
    }
    Ok(OptResult {
        bin_count: count,
        certificate: Packing::from_bins(instance, OptMethod::BranchBound, bins),
        method: OptMethod::BranchBound,
    })
}

fn suffix_sums(sizes: &[u64]) -> Vec<u128> {
    let mut suffix = vec![0u128; sizes.len() + 1];
    for i in (0..sizes.len()).rev() {
        suffix[i] = suffix[i + 1] + sizes[i] as u128;
    }
    suffix
}

fn first_fit_decreasing(cap: u64, sizes: &[u64]) -> (usize, Vec<usize>) {
    let mut loads: Vec<u64> = Vec::new();
    let mut assign = Vec::with_capacity(sizes.len());
    for &s in sizes {
        match loads.iter().position(|&l| l + s <= cap) {
            Some(b) => {
                loads[b] += s;
                assign.push(b);
            }
            None => {
                loads.push(s);
                assign.push(loads.len() - 1);
            }
        }
    }
    (loads.len(), assign)
}

struct Search<'a> {
    cap: u64,
    sizes: &'a [u64],
    suffix: Vec<u128>,
    volume_bound: usize,
    loads: Vec<u64>,
    assign: Vec<usize>,
    best: (usize, Vec<usize>),
}

impl Search<'_> {
    /// Returns `true` once the volume bound is met (nothing better exists).
    fn dfs(&mut self, pos: usize) -> bool {
        if pos == self.sizes.len() {
            if self.loads.len() < self.best.0 {
                self.best = (self.loads.len(), self.assign.clone());
            }
            return self.best.0 <= self.volume_bound;
        }
        if self.lower_bound(pos) >= self.best.0 {
            return false;
        }
        let item = self.sizes[pos];
        for b in 0..self.loads.len() {
            let load = self.loads[b];
            if load + item > self.cap || self.loads[..b].contains(&load) {
                continue;
            }
            self.loads[b] += item;
            self.assign[pos] = b;
            let done = self.dfs(pos + 1);
            self.loads[b] -= item;
            if done {
                return true;
            }
        }
        if self.loads.len() + 1 < self.best.0 {
            self.loads.push(item);
            self.assign[pos] = self.loads.len() - 1;
            let done = self.dfs(pos + 1);
            self.loads.pop();
            if done {
                return true;
            }
        }
        false
    }

    /// Current bins plus the bins needed for remaining volume that does not
    /// fit into residual space usable by the smallest remaining item.
    fn lower_bound(&self, pos: usize) -> usize {
        let smallest = *self.sizes.last().unwrap_or(&0);
        let usable: u128 = self
            .loads
            .iter()
            .map(|&l| self.cap - l)
            .filter(|&r| r >= smallest)
            .map(u128::from)
            .sum();
        let overflow = self.suffix[pos].saturating_sub(usable);
        self.loads.len() + overflow.div_ceil(self.cap as u128) as usize
    }
}

/// OPT for instances whose items all exceed 1/3, where bins hold at most two
/// items: `n - (maximum number of disjoint fitting pairs)`.
///
/// Greedy: the largest remaining item takes the largest remaining partner it
/// fits with, or stays alone.
pub fn opt_large_items(instance: &Instance) -> Result<OptResult> {
    if !instance.all_larger_than_third() {
        return Err(Error::Precondition(
            "opt_large_items requires every item to exceed 1/3".into(),
        ));
    }
    let cap = instance.unit();
    let mut pool: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (id, &u) in instance.units().iter().enumerate() {
        pool.entry(u).or_default().push(id);
    }
    let take = |pool: &mut BTreeMap<u64, Vec<usize>>, key: u64| -> usize {
        let ids = pool.get_mut(&key).expect("key present");
        let id = ids.pop().expect("nonempty bucket");
        if ids.is_empty() {
            pool.remove(&key);
        }
        id
    };
    let mut bins = Vec::new();
    while let Some((&largest, _)) = pool.iter().next_back() {
        let x = take(&mut pool, largest);
        let partner = pool.range(..=cap - largest).next_back().map(|(&k, _)| k);
        match partner {
            Some(k) => {
                let y = take(&mut pool, k);
                bins.push(vec![x.min(y), x.max(y)]);
            }
            None => bins.push(vec![x]),
        }
    }
    bins.sort();
    Ok(OptResult {
        bin_count: bins.len(),
        certificate: Packing::from_bins(instance, OptMethod::LargeMatching, bins),
        method: OptMethod::LargeMatching,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::size::Size;
    use proptest::prelude::*;

    fn inst(items: &[&str]) -> Instance {
        Instance::from_strs(items).unwrap()
    }

    /// Brute force: every assignment of items to at most n bins.
    fn brute_opt(instance: &Instance) -> usize {
        fn go(i: usize, units: &[u64], cap: u64, loads: &mut Vec<u64>, best: &mut usize) {
            if loads.len() >= *best {
                return;
            }
            if i == units.len() {
                *best = loads.len();
                return;
            }
            for b in 0..loads.len() {
                if loads[b] + units[i] <= cap {
                    loads[b] += units[i];
                    go(i + 1, units, cap, loads, best);
                    loads[b] -= units[i];
                }
            }
            loads.push(units[i]);
            go(i + 1, units, cap, loads, best);
            loads.pop();
        }
        let mut best = instance.len();
        go(0, instance.units(), instance.unit(), &mut Vec::new(), &mut best);
        best
    }

    #[test]
    fn volume_bound() {
        assert_eq!(size_lower_bound(&inst(&["0.5", "0.5", "0.5"])), 2);
        assert_eq!(size_lower_bound(&Instance::new(vec![]).unwrap()), 0);
        assert_eq!(size_lower_bound(&inst(&["1/4"; 8])), 2);
    }

    #[test]
    fn empty_and_cap() {
        let r = opt_exact(&Instance::new(vec![]).unwrap()).unwrap();
        assert_eq!(r.bin_count, 0);
        let big = inst(&["0.1"; 21]);
        assert!(matches!(opt_exact(&big), Err(Error::OptTooLarge { n: 21, cap: 20 })));
        assert_eq!(opt_exact_capped(&big, 21).unwrap().bin_count, 3);
    }

    #[test]
    fn large_items() {
        assert_eq!(opt_large_items(&inst(&["0.6", "0.6", "0.6"])).unwrap().bin_count, 3);
        assert_eq!(
            opt_large_items(&inst(&["0.6", "0.4", "0.55", "0.45"])).unwrap().bin_count,
            2
        );
        assert!(matches!(
            opt_large_items(&inst(&["0.6", "1/3"])),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn known_optima() {
        // FFD uses 3 bins here; OPT packs {0.5, 0.3, 0.2} and {0.4, 0.35, 0.25}.
        let i = inst(&["0.5", "0.4", "0.35", "0.3", "0.25", "0.2"]);
        let r = opt_exact(&i).unwrap();
        assert_eq!(r.bin_count, 2);
        assert!(r.certificate.is_feasible_for(&i));
    }

    fn arb_instance(lo: i64, max_len: usize) -> impl Strategy<Value = Instance> {
        prop::collection::vec(lo..=60i64, 0..max_len).prop_map(|v| {
            Instance::new(v.iter().map(|&n| Size::new(n, 60).unwrap()).collect()).unwrap()
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(200))]

        #[test]
        fn branch_bound_matches_brute_force(i in arb_instance(1, 9)) {
            let r = opt_exact(&i).unwrap();
            prop_assert_eq!(r.bin_count, brute_opt(&i));
            prop_assert!(r.certificate.is_feasible_for(&i));
            prop_assert_eq!(r.certificate.bin_count(), r.bin_count);
            prop_assert!(r.bin_count >= size_lower_bound(&i));
        }

        #[test]
        fn matching_equals_exact(i in arb_instance(21, 16)) {
            let m = opt_large_items(&i).unwrap();
            prop_assert!(m.certificate.is_feasible_for(&i));
            prop_assert_eq!(m.bin_count, opt_exact(&i).unwrap().bin_count);
        }
    }
}
