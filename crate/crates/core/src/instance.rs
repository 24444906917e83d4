//! Item lists, arrival orders and the instance file format.

use std::fs;
use std::path::Path;

use num_integer::Integer;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::size::Size;

/// Largest common denominator accepted; keeps every bin load and pairwise
/// sum inside `i64`/`u64` arithmetic.
const MAX_UNIT: u64 = 1 << 62;

/// An ordered list of item sizes. Item ids are indices into `items` and stay
/// fixed under permutation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Instance {
    label: Option<String>,
    items: Vec<Size>,
    lm_pairs: Option<Vec<(usize, usize)>>,
    unit: u64,
    units: Vec<u64>,
}

impl Instance {
    pub fn new(items: Vec<Size>) -> Result<Instance> {
        Instance::build(None, items, None)
    }

    pub fn with_pairs(items: Vec<Size>, lm_pairs: Vec<(usize, usize)>) -> Result<Instance> {
        Instance::build(None, items, Some(lm_pairs))
    }

    pub fn build(
        label: Option<String>,
        items: Vec<Size>,
        lm_pairs: Option<Vec<(usize, usize)>>,
    ) -> Result<Instance> {
        let mut unit: u64 = 1;
        for s in &items {
            unit = unit.lcm(&(s.denom() as u64));
            if unit > MAX_UNIT {
                return Err(Error::DenominatorOverflow);
            }
        }
        let units = items
            .iter()
            .map(|s| s.numer() as u64 * (unit / s.denom() as u64))
            .collect();
        if let Some(pairs) = &lm_pairs {
            validate_pairs(&items, pairs)?;
        }
        Ok(Instance {
            label,
            items,
            lm_pairs,
            unit,
            units,
        })
    }

    /// Parses decimal or `num/den` literals.
    pub fn from_strs<S: AsRef<str>>(items: &[S]) -> Result<Instance> {
        let sizes = items
            .iter()
            .map(|s| s.as_ref().parse())
            .collect::<Result<Vec<Size>>>()?;
        Instance::new(sizes)
    }

    pub fn labeled(mut self, label: impl Into<String>) -> Instance {
        self.label = Some(label.into());
        self
    }

    pub fn label(&self) -> Option<&str> {
        self.label.as_deref()
    }

    pub fn items(&self) -> &[Size] {
        &self.items
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn size(&self, id: usize) -> Size {
        self.items[id]
    }

    pub fn lm_pairs(&self) -> Option<&[(usize, usize)]> {
        self.lm_pairs.as_deref()
    }

    /// Common denominator of all sizes: bin capacity in integer units.
    pub fn unit(&self) -> u64 {
        self.unit
    }

    /// Sizes scaled by [`Instance::unit`].
    pub fn units(&self) -> &[u64] {
        &self.units
    }

    pub fn all_larger_than_third(&self) -> bool {
        self.units.iter().all(|&u| 3 * u > self.unit)
    }

    /// The instance with its items listed in `perm` order. Labels carry over;
    /// pair metadata is remapped to the new ids.
    pub fn permuted(&self, perm: &Permutation) -> Result<Instance> {
        perm.check(self.len())?;
        let items = perm.order().iter().map(|&i| self.items[i]).collect();
        let pairs = self.lm_pairs.as_ref().map(|pairs| {
            let mut pos = vec![0; self.len()];
            for (p, &id) in perm.order().iter().enumerate() {
                pos[id] = p;
            }
            pairs.iter().map(|&(l, m)| (pos[l], pos[m])).collect()
        });
        Instance::build(self.label.clone(), items, pairs)
    }
}

fn validate_pairs(items: &[Size], pairs: &[(usize, usize)]) -> Result<()> {
    let mut seen = vec![false; items.len()];
    for &(l, m) in pairs {
        for id in [l, m] {
            if id >= items.len() {
                return Err(Error::InvalidPairs(format!("item id {id} out of range")));
            }
            if std::mem::replace(&mut seen[id], true) {
                return Err(Error::InvalidPairs(format!("item {id} appears twice")));
            }
        }
        if items[l] < items[m] {
            return Err(Error::InvalidPairs(format!(
                "pair ({l}, {m}): large item {} is smaller than medium item {}",
                items[l], items[m]
            )));
        }
        if items[l].value() + items[m].value() > num_rational::Ratio::new(1, 1) {
            return Err(Error::InvalidPairs(format!(
                "pair ({l}, {m}) does not fit one bin: {} + {} > 1",
                items[l], items[m]
            )));
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(Error::InvalidPairs(format!("item {missing} is not covered by any pair")));
    }
    Ok(())
}

/// An arrival order: `order[t]` is the id of the item arriving in round `t + 1`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Permutation(Vec<usize>);

impl Permutation {
    pub fn new(order: Vec<usize>) -> Result<Permutation> {
        let perm = Permutation(order);
        perm.check(perm.0.len())?;
        Ok(perm)
    }

    pub fn identity(n: usize) -> Permutation {
        Permutation((0..n).collect())
    }

    pub fn order(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// `positions()[id]` is the 0-based arrival round of item `id`.
    pub fn positions(&self) -> Vec<usize> {
        let mut pos = vec![0; self.0.len()];
        for (p, &id) in self.0.iter().enumerate() {
            pos[id] = p;
        }
        pos
    }

    pub fn check(&self, n: usize) -> Result<()> {
        if self.0.len() != n {
            return Err(Error::InvalidPermutation(format!(
                "length {} does not match {n} items",
                self.0.len()
            )));
        }
        let mut seen = vec![false; n];
        for &id in &self.0 {
            if id >= n || std::mem::replace(&mut seen[id], true) {
                return Err(Error::InvalidPermutation(format!("id {id} repeated or out of range")));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    #[serde(default)]
    label: Option<String>,
    items: Vec<String>,
    #[serde(default)]
    lm_pairs: Option<Vec<[usize; 2]>>,
}

impl Instance {
    pub fn from_json(text: &str) -> Result<Instance> {
        let file: InstanceFile = serde_json::from_str(text)?;
        let items = file
            .items
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<Size>>>()?;
        let pairs = file
            .lm_pairs
            .map(|ps| ps.into_iter().map(|[l, m]| (l, m)).collect());
        Instance::build(file.label, items, pairs)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("instance serialization is infallible")
    }

    fn to_file(&self) -> InstanceFile {
        InstanceFile {
            label: self.label.clone(),
            items: self.items.iter().map(Size::to_string).collect(),
            lm_pairs: self
                .lm_pairs
                .as_ref()
                .map(|ps| ps.iter().map(|&(l, m)| [l, m]).collect()),
        }
    }
}

impl Serialize for Instance {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_file().serialize(s)
    }
}

pub fn parse_instance(path: impl AsRef<Path>) -> Result<Instance> {
    Instance::from_json(&fs::read_to_string(path)?)
}

pub fn serialize_instance(instance: &Instance, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, instance.to_json())?;
    Ok(())
}
