use std::collections::BTreeMap;

use crate::numerics::Weight;

/// `multiplicity` classes sharing probability `p` (and `q = 1 - p`).
#[derive(Clone, Debug, PartialEq)]
pub struct ClassGroup<T> {
    pub p: T,
    pub q: T,
    pub multiplicity: u64,
}

/// Classes grouped by equal probability. Every per-class sum becomes a
/// per-group sum weighted by multiplicity.
#[derive(Clone, Debug, PartialEq)]
pub struct ClassGroups<T> {
    groups: Vec<ClassGroup<T>>,
}

impl<T: Weight> ClassGroups<T> {
    /// Groups `f64` probabilities by exact value, largest first.
    pub fn from_f64(probs: &[f64]) -> Self {
        let mut by_bits: BTreeMap<u64, u64> = BTreeMap::new();
        for &p in probs {
            *by_bits.entry(p.to_bits()).or_default() += 1;
        }
        // positive floats order like their bit patterns
        let groups = by_bits
            .into_iter()
            .rev()
            .map(|(bits, multiplicity)| {
                let p = f64::from_bits(bits);
                ClassGroup {
                    p: T::from_f64(p),
                    q: T::complement_f64(p),
                    multiplicity,
                }
            })
            .collect();
        ClassGroups { groups }
    }

    /// Groups arbitrary weights by equality, in order of first appearance.
    pub fn from_values(probs: &[T]) -> Self {
        let mut groups: Vec<ClassGroup<T>> = Vec::new();
        for p in probs {
            match groups.iter_mut().find(|g| &g.p == p) {
                Some(g) => g.multiplicity += 1,
                None => groups.push(ClassGroup {
                    p: p.clone(),
                    q: T::one() - p.clone(),
                    multiplicity: 1,
                }),
            }
        }
        ClassGroups { groups }
    }

    /// Builds groups from `(p, multiplicity)` pairs; zero multiplicities are dropped.
    pub fn from_pairs(pairs: impl IntoIterator<Item = (T, u64)>) -> Self {
        let groups = pairs
            .into_iter()
            .filter(|(_, m)| *m > 0)
            .map(|(p, multiplicity)| ClassGroup {
                q: T::one() - p.clone(),
                p,
                multiplicity,
            })
            .collect();
        ClassGroups { groups }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ClassGroup<T>> {
        self.groups.iter()
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn class_count(&self) -> u64 {
        self.groups.iter().map(|g| g.multiplicity).sum()
    }

    pub fn total_probability(&self) -> T {
        T::sum_all(
            self.groups
                .iter()
                .map(|g| T::from_u64(g.multiplicity) * g.p.clone())
                .collect(),
        )
    }

    /// `Σ_x p_x^e`.
    pub fn power_sum(&self, e: u64) -> T {
        T::sum_all(
            self.groups
                .iter()
                .map(|g| T::from_u64(g.multiplicity) * g.p.powi(e))
                .collect(),
        )
    }
}

impl<'a, T> IntoIterator for &'a ClassGroups<T> {
    type Item = &'a ClassGroup<T>;
    type IntoIter = std::slice::Iter<'a, ClassGroup<T>>;

    fn into_iter(self) -> Self::IntoIter {
        self.groups.iter()
    }
}
