//! Named instances and random instance families.

use num_rational::Ratio;
use num_traits::{One, Zero};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::instance::{Instance, Permutation};
use crate::size::{fmt_ratio, Size};
use crate::structure::{random_lm_pairs, LmInstance};

/// Default perturbation for [`abs_lb_instance`].
pub const ABS_LB_EPSILON: Ratio<i64> = Ratio::new_raw(1, 1000);
/// Default perturbation for [`large_lb_instance`].
pub const LARGE_LB_EPSILON: Ratio<i64> = Ratio::new_raw(1, 100);
pub const DEFAULT_DENOM_BOUND: i64 = 1_000_000;

/// A perturbation `0 < eps <= bound` (or `< bound` when `strict`).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Epsilon {
    value: Ratio<i64>,
    bound: Ratio<i64>,
}

impl Epsilon {
    pub fn new(value: Ratio<i64>, bound: Ratio<i64>, strict: bool) -> Result<Epsilon> {
        let above = if strict { value >= bound } else { value > bound };
        if value <= Ratio::zero() || above {
            let rel = if strict { "<" } else { "<=" };
            return Err(Error::Parameter(format!(
                "epsilon {} must satisfy 0 < epsilon {rel} {}",
                fmt_ratio(&value),
                fmt_ratio(&bound)
            )));
        }
        Ok(Epsilon { value, bound })
    }

    pub fn value(self) -> Ratio<i64> {
        self.value
    }

    pub fn bound(self) -> Ratio<i64> {
        self.bound
    }
}

fn size(r: Ratio<i64>) -> Result<Size> {
    Size::from_ratio(r)
}

fn dec(s: &str) -> Size {
    s.parse().expect("literal size")
}

/// The seven-item pair on which Best Fit uses more bins for the smaller
/// list: `I` has 0.34 in position 3 where `I'` has 0.36.
pub fn counterexample_monotonicity() -> (Instance, Instance) {
    let list = |third: &str| {
        let items = ["0.36", "0.65", third, "0.38", "0.28", "0.35", "0.62"]
            .iter()
            .map(|s| dec(s))
            .collect();
        Instance::new(items).expect("fixed sizes")
    };
    (
        list("0.34").labeled("monotonicity-ce-a"),
        list("0.36").labeled("monotonicity-ce-b"),
    )
}

/// `(a, a, b, b, c)` with `a = 1/3 + 4e`, `b = 1/3 + 16e`, `c = 1/3 - 8e`;
/// `OPT = 2` and `E[BF] = 13/5` for every valid `e <= 1/96`.
pub fn abs_lb_instance(eps: Ratio<i64>) -> Result<Instance> {
    let e = Epsilon::new(eps, Ratio::new(1, 96), false)?.value();
    let third = Ratio::new(1, 3);
    let a = size(third + e * 4)?;
    let b = size(third + e * 16)?;
    let c = size(third - e * 8)?;
    let instance = Instance::new(vec![a, a, b, b, c])?.labeled("lemma7");
    validate_abs_lb(&instance)?;
    Ok(instance)
}

/// Exact inequalities behind the two- and three-bin cases.
pub fn validate_abs_lb(instance: &Instance) -> Result<()> {
    let v: Vec<Ratio<i64>> = instance.items().iter().map(|s| s.value()).collect();
    let [a1, a2, b1, b2, c] = v[..] else {
        return Err(Error::Precondition("expected five items".into()));
    };
    let one = Ratio::one();
    let checks = [
        (a1 == a2 && b1 == b2, "a1 = a2 and b1 = b2"),
        (a1 + a2 + c == one, "a1 + a2 + c = 1"),
        (b1 + b2 <= one, "b1 + b2 <= 1"),
        // A bin holding one b and one of {a, c} cannot take a third item.
        (b1 + c + a1 > one, "b + c + a > 1"),
        (b1 + a1 + c > one && b1 + a1 + a2 > one, "b + a + min(rest) > 1"),
        // Two of {a, a, c} leave no room for a b.
        (a1 + c + b1 > one && a1 + a2 + b1 > one, "two of {a, a, c} + b > 1"),
        (c.numer() > &0, "c > 0"),
    ];
    for (ok, what) in checks {
        if !ok {
            return Err(Error::Precondition(format!("lower-bound instance violates {what}")));
        }
    }
    Ok(())
}

/// `k` pairs `l_i = 1/2 + i e`, `m_i = 1/2 - i e` (ids `l_i = i - 1`,
/// `m_i = k + i - 1`) with `l_i + m_j <= 1` exactly when `i <= j`.
pub fn large_lb_instance(k: usize, eps: Ratio<i64>) -> Result<LmInstance> {
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    let e = Epsilon::new(eps, Ratio::new(1, 6 * k as i64), true)?.value();
    let half = Ratio::new(1, 2);
    let pairs = (1..=k as i64)
        .map(|i| Ok((size(half + e * i)?, size(half - e * i)?)))
        .collect::<Result<Vec<_>>>()?;
    let lm = LmInstance::from_pairs(&pairs)?.labeled(format!("large-lb-k{k}"));
    validate_large_lb(&lm)?;
    Ok(lm)
}

/// `l_i + m_j <= 1 <=> i <= j` over all pairs, all sizes distinct and above 1/3.
pub fn validate_large_lb(lm: &LmInstance) -> Result<()> {
    let inst = lm.instance();
    let pairs = lm.pairs();
    for (i, &(l, _)) in pairs.iter().enumerate() {
        for (j, &(_, m)) in pairs.iter().enumerate() {
            let fits = inst.size(l).value() + inst.size(m).value() <= Ratio::one();
            if fits != (i <= j) {
                return Err(Error::Precondition(format!(
                    "l_{} + m_{} fit relation is wrong",
                    i + 1,
                    j + 1
                )));
            }
        }
    }
    let mut sizes = inst.items().to_vec();
    sizes.sort();
    sizes.dedup();
    if sizes.len() != inst.len() || !inst.all_larger_than_third() {
        return Err(Error::Precondition("sizes must be distinct and above 1/3".into()));
    }
    Ok(())
}

/// The `k = 4` list arriving as `(l2, l1, m3, m4, l4, m1, m2, l3)`.
pub fn example1_sequence() -> (LmInstance, Permutation) {
    let lm = large_lb_instance(4, LARGE_LB_EPSILON)
        .expect("valid parameters")
        .labeled("example1");
    let order = Permutation::new(vec![1, 0, 6, 7, 3, 4, 5, 2]).expect("fixed order");
    (lm, order)
}

/// `k` random LM-pairs with sizes over the common denominator `denom_bound`:
/// `l` in (1/2, 2/3), `m` in (1/3, min(1/2, 1 - l)].
pub fn random_lm_instance(k: usize, seed: u64, denom_bound: i64) -> Result<LmInstance> {
    if k == 0 {
        return Err(Error::Parameter("k must be at least 1".into()));
    }
    if denom_bound < 12 {
        return Err(Error::Parameter(format!(
            "denominator bound {denom_bound} leaves no room for LM-pairs; use at least 12"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = random_lm_pairs(&mut rng, k, denom_bound);
    Ok(LmInstance::from_pairs(&pairs)?.labeled(format!("random-lm-k{k}-s{seed}")))
}

pub const NAMED_INSTANCES: &[&str] = &[
    "lemma7",
    "prop2-k2",
    "prop3-k3",
    "monotonicity-ce",
    "monotonicity-ce-a",
    "monotonicity-ce-b",
    "example1",
];

/// Looks up a registry instance by name.
pub fn named_instance(name: &str) -> Result<Instance> {
    Ok(match name {
        "lemma7" => abs_lb_instance(ABS_LB_EPSILON)?,
        "prop2-k2" => large_lb_instance(2, LARGE_LB_EPSILON)?
            .instance()
            .clone()
            .labeled("prop2-k2"),
        "prop3-k3" => large_lb_instance(3, LARGE_LB_EPSILON)?
            .instance()
            .clone()
            .labeled("prop3-k3"),
        "monotonicity-ce" | "monotonicity-ce-a" => counterexample_monotonicity().0,
        "monotonicity-ce-b" => counterexample_monotonicity().1,
        "example1" => example1_sequence().0.instance().clone(),
        _ => {
            return Err(Error::Parameter(format!(
                "unknown instance `{name}`; known: {}",
                NAMED_INSTANCES.join(", ")
            )))
        }
    })
}

/// The fixed arrival order that goes with a registry instance, if any.
pub fn named_order(name: &str) -> Option<Permutation> {
    (name == "example1").then(|| example1_sequence().1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::opt::{opt, opt_exact, opt_large_items};
    use crate::packing::{best_fit_pack, Algorithm};

    fn r(n: i64, d: i64) -> Ratio<i64> {
        Ratio::new(n, d)
    }

    #[test]
    fn counterexample_lists() {
        let (a, b) = counterexample_monotonicity();
        assert_eq!(a.size(2), Size::new(17, 50).unwrap());
        assert_eq!(b.size(2), Size::new(9, 25).unwrap());
        let differ: Vec<usize> = (0..7).filter(|&j| a.size(j) != b.size(j)).collect();
        assert_eq!(differ, vec![2]);
        let id = Permutation::identity(7);
        assert_eq!(best_fit_pack(&a, &id).unwrap().bin_count(), 4);
        assert_eq!(best_fit_pack(&b, &id).unwrap().bin_count(), 3);
        assert!(opt_exact(&a).unwrap().bin_count <= 3);
    }

    #[test]
    fn abs_lb_range() {
        let i = abs_lb_instance(r(1, 1000)).unwrap();
        assert_eq!(opt(&i).unwrap().bin_count, 2);
        let edge = abs_lb_instance(r(1, 96)).unwrap();
        assert_eq!(edge.size(2).value() + edge.size(3).value(), Ratio::one());
        assert!(abs_lb_instance(r(1, 95)).is_err());
        assert!(abs_lb_instance(r(0, 1)).is_err());
        assert!(abs_lb_instance(r(-1, 100)).is_err());
    }

    #[test]
    fn large_lb_fit_relation() {
        for k in 1..=6 {
            let lm = large_lb_instance(k, r(1, 100)).unwrap();
            assert_eq!(lm.k(), k);
            assert_eq!(opt_large_items(lm.instance()).unwrap().bin_count, k);
        }
        assert!(large_lb_instance(3, r(1, 18)).is_err());
        assert!(large_lb_instance(3, r(1, 19)).is_ok());
        assert!(large_lb_instance(0, r(1, 100)).is_err());
    }

    #[test]
    fn example1_layout() {
        let (lm, order) = example1_sequence();
        assert_eq!(lm.instance().size(1), Size::new(13, 25).unwrap());
        assert_eq!(lm.instance().size(6), Size::new(47, 100).unwrap());
        assert_eq!(order.order(), &[1, 0, 6, 7, 3, 4, 5, 2]);
    }

    #[test]
    fn random_lm_is_valid_and_deterministic() {
        for seed in 0..50 {
            let lm = random_lm_instance(5, seed, DEFAULT_DENOM_BOUND).unwrap();
            assert_eq!(opt_large_items(lm.instance()).unwrap().bin_count, 5);
            assert_eq!(lm, random_lm_instance(5, seed, DEFAULT_DENOM_BOUND).unwrap());
        }
        assert_eq!(random_lm_instance(1, 3, 12).unwrap().k(), 1);
        assert!(random_lm_instance(2, 0, 11).is_err());
        assert!(random_lm_instance(0, 0, 100).is_err());
    }

    #[test]
    fn registry_round_trips() {
        for name in NAMED_INSTANCES {
            let i = named_instance(name).unwrap();
            assert_eq!(Instance::from_json(&i.to_json()).unwrap(), i);
            let id = Permutation::identity(i.len());
            assert!(crate::packing::pack(&i, &id, Algorithm::BEST_FIT).is_ok());
        }
        assert!(named_instance("nope").is_err());
        assert!(named_order("example1").is_some());
    }
}
