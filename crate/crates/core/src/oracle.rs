//! Exhaustive enumeration of the multinomial outcome space at tiny scale.

use crate::error::{domain, Error, Result};
use crate::numerics::Weight;
use crate::par::{par_map, Execution};
use crate::representations::Betas;

/// What one outcome records.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Granularity {
    /// Count vectors; enough for statistics of the full sample.
    Compositions,
    /// Ordered sequences; needed for prefix statistics `Φ_i(j)`, `j < n`.
    Sequences,
}

/// Largest enumerations accepted without an explicit budget.
pub const COMPOSITION_LIMITS: (u64, usize) = (12, 4);
pub const SEQUENCE_LIMITS: (u64, usize) = (8, 4);

#[derive(Clone, Debug, PartialEq)]
pub struct Outcome<T> {
    pub counts: Vec<u32>,
    /// Present in sequence mode.
    pub sequence: Option<Vec<u8>>,
    /// Number of sequences this outcome stands for.
    pub multiplicity: u64,
    /// Probability of the outcome, multiplicity included.
    pub weight: T,
}

impl<T: Weight> Outcome<T> {
    pub fn n(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    /// `Φ_k` of the full sample.
    pub fn phi(&self, k: u64) -> u64 {
        self.counts.iter().filter(|&&c| u64::from(c) == k).count() as u64
    }

    /// `N_x(j)`, the count of class `x` in the first `j` draws.
    pub fn count_at(&self, x: usize, j: u64) -> Result<u64> {
        if j == self.n() {
            return Ok(u64::from(self.counts[x]));
        }
        let seq = self.sequence.as_ref().ok_or(Error::PrefixUnavailable)?;
        Ok(seq[..j as usize].iter().filter(|&&y| y as usize == x).count() as u64)
    }

    /// `Φ_i(j)` of the length-`j` prefix.
    pub fn phi_prefix(&self, i: u64, j: u64) -> Result<u64> {
        if j == self.n() {
            return Ok(self.phi(i));
        }
        let mut n = 0;
        for x in 0..self.counts.len() {
            if self.count_at(x, j)? == i {
                n += 1;
            }
        }
        Ok(n)
    }

    /// `M_k = Σ_x p_x 1(N_x = k)`.
    pub fn mass(&self, probs: &[T], k: u64) -> T {
        T::sum_all(
            self.counts
                .iter()
                .zip(probs)
                .filter(|(&c, _)| u64::from(c) == k)
                .map(|(_, p)| p.clone())
                .collect(),
        )
    }

    /// `Σ β_{i,j} Φ_i(j)`.
    pub fn estimate(&self, betas: &Betas<T>) -> Result<T> {
        let mut terms = Vec::with_capacity(betas.len());
        for &((i, j), ref b) in betas {
            let phi = self.phi_prefix(u64::from(i), u64::from(j))?;
            terms.push(b.clone() * T::from_u64(phi));
        }
        Ok(T::sum_all(terms))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OutcomeTable<T> {
    pub n: u64,
    pub probabilities: Vec<T>,
    pub granularity: Granularity,
    pub outcomes: Vec<Outcome<T>>,
}

impl<T: Weight> OutcomeTable<T> {
    pub fn total_weight(&self) -> T {
        T::sum_all(self.outcomes.iter().map(|o| o.weight.clone()).collect())
    }
}

/// Number of outcomes an enumeration would produce.
pub fn required_outcomes(n: u64, support: usize, granularity: Granularity) -> u128 {
    match granularity {
        Granularity::Compositions => {
            let s = support as u64;
            crate::numerics::binomial_u128(n + s - 1, s - 1).unwrap_or(u128::MAX)
        }
        Granularity::Sequences => (support as u128).checked_pow(n as u32).unwrap_or(u128::MAX),
    }
}

/// Default outcome budget for a granularity: the size at its scale limits.
pub fn default_budget(granularity: Granularity) -> u128 {
    match granularity {
        Granularity::Compositions => required_outcomes(COMPOSITION_LIMITS.0, COMPOSITION_LIMITS.1, granularity),
        Granularity::Sequences => required_outcomes(SEQUENCE_LIMITS.0, SEQUENCE_LIMITS.1, granularity),
    }
}

/// Enumerates every outcome, refusing anything beyond the scale limits
/// (`n ≤ 12, S ≤ 4` for compositions, `n ≤ 8, S ≤ 4` for sequences).
pub fn enumerate<T: Weight>(probs: &[T], n: u64, granularity: Granularity) -> Result<OutcomeTable<T>> {
    let (max_n, max_s) = match granularity {
        Granularity::Compositions => COMPOSITION_LIMITS,
        Granularity::Sequences => SEQUENCE_LIMITS,
    };
    if n > max_n || probs.len() > max_s {
        return Err(Error::BudgetExceeded {
            required: required_outcomes(n, probs.len(), granularity),
            budget: required_outcomes(n.min(max_n), probs.len().min(max_s), granularity),
        });
    }
    enumerate_with_budget(probs, n, granularity, default_budget(granularity))
}

pub fn enumerate_with_budget<T: Weight>(
    probs: &[T],
    n: u64,
    granularity: Granularity,
    budget: u128,
) -> Result<OutcomeTable<T>> {
    if probs.is_empty() {
        return domain("enumeration needs at least one class");
    }
    if granularity == Granularity::Sequences && probs.len() > 256 {
        return domain("sequence mode stores classes as bytes");
    }
    let required = required_outcomes(n, probs.len(), granularity);
    if required > budget {
        return Err(Error::BudgetExceeded { required, budget });
    }
    let outcomes = match granularity {
        Granularity::Compositions => compositions(probs, n),
        Granularity::Sequences => sequences(probs, n),
    };
    Ok(OutcomeTable {
        n,
        probabilities: probs.to_vec(),
        granularity,
        outcomes,
    })
}

fn compositions<T: Weight>(probs: &[T], n: u64) -> Vec<Outcome<T>> {
    fn rec<T: Weight>(probs: &[T], left: u64, counts: &mut Vec<u32>, out: &mut Vec<Outcome<T>>, n: u64) {
        let x = counts.len();
        if x + 1 == probs.len() {
            counts.push(left as u32);
            let mut rest = n;
            let mut mult = 1u64;
            let mut weight = T::one();
            for (c, p) in counts.iter().zip(probs) {
                let c = u64::from(*c);
                mult *= crate::numerics::binomial_u128(rest, c).expect("small") as u64;
                rest -= c;
                weight = weight * p.powi(c);
            }
            out.push(Outcome {
                counts: counts.clone(),
                sequence: None,
                multiplicity: mult,
                weight: T::from_u64(mult) * weight,
            });
            counts.pop();
            return;
        }
        for c in (0..=left).rev() {
            counts.push(c as u32);
            rec(probs, left - c, counts, out, n);
            counts.pop();
        }
    }
    let mut out = Vec::new();
    rec(probs, n, &mut Vec::with_capacity(probs.len()), &mut out, n);
    out
}

fn sequences<T: Weight>(probs: &[T], n: u64) -> Vec<Outcome<T>> {
    let s = probs.len();
    let total = s.pow(n as u32);
    (0..total)
        .map(|mut code| {
            let mut seq = Vec::with_capacity(n as usize);
            let mut counts = vec![0u32; s];
            let mut weight = T::one();
            for _ in 0..n {
                let x = code % s;
                code /= s;
                seq.push(x as u8);
                counts[x] += 1;
                weight = weight * probs[x].clone();
            }
            Outcome {
                counts,
                sequence: Some(seq),
                multiplicity: 1,
                weight,
            }
        })
        .collect()
}

/// `Σ weight · statistic`, accumulated per chunk and merged in order.
pub fn exact_expectation<T, F>(table: &OutcomeTable<T>, exec: Execution, statistic: F) -> T
where
    T: Weight,
    F: Fn(&Outcome<T>) -> T + Sync + Send,
{
    let chunks: Vec<&[Outcome<T>]> = table.outcomes.chunks(256).collect();
    let partial = par_map(exec, &chunks, |chunk| {
        T::sum_all(chunk.iter().map(|o| o.weight.clone() * statistic(o)).collect())
    });
    T::sum_all(partial)
}

/// `E[X Y] - E[X] E[Y]`.
pub fn exact_covariance<T, F, G>(table: &OutcomeTable<T>, exec: Execution, x: F, y: G) -> T
where
    T: Weight,
    F: Fn(&Outcome<T>) -> T + Sync + Send,
    G: Fn(&Outcome<T>) -> T + Sync + Send,
{
    let exy = exact_expectation(table, exec, |o| x(o) * y(o));
    let ex = exact_expectation(table, exec, &x);
    let ey = exact_expectation(table, exec, &y);
    exy - ex * ey
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::{rational, Rational};

    fn half() -> Vec<Rational> {
        vec![rational(1, 2), rational(1, 2)]
    }

    #[test]
    fn small_tables() {
        let t = enumerate(&half(), 2, Granularity::Compositions).unwrap();
        let weights: Vec<Rational> = t.outcomes.iter().map(|o| o.weight.clone()).collect();
        assert_eq!(weights, vec![rational(1, 4), rational(1, 2), rational(1, 4)]);
        let p = vec![rational(1, 2), rational(1, 3), rational(1, 6)];
        let t = enumerate(&p, 1, Granularity::Compositions).unwrap();
        assert_eq!(t.outcomes.len(), 3);
        assert_eq!(t.total_weight(), rational(1, 1));
        let t = enumerate(&p, 5, Granularity::Sequences).unwrap();
        assert_eq!(t.outcomes.len(), 243);
        assert_eq!(t.total_weight(), rational(1, 1));
    }

    #[test]
    fn outcome_counts() {
        let p = vec![rational(1, 4); 4];
        let t = enumerate(&p, 12, Granularity::Compositions).unwrap();
        assert_eq!(t.outcomes.len() as u128, required_outcomes(12, 4, Granularity::Compositions));
        assert_eq!(t.total_weight(), rational(1, 1));
    }

    #[test]
    fn expectations() {
        let t = enumerate(&half(), 2, Granularity::Compositions).unwrap();
        let phi1 = exact_expectation(&t, Execution::Parallel, |o| Rational::from_u64(o.phi(1)));
        assert_eq!(phi1, rational(1, 1));
        let m0 = exact_expectation(&t, Execution::Sequential, |o| o.mass(&t.probabilities, 0));
        assert_eq!(m0, rational(1, 4));
        let one = exact_expectation(&t, Execution::Parallel, |_| Rational::one());
        assert_eq!(one, rational(1, 1));
    }

    #[test]
    fn budget_refusal() {
        let p = vec![rational(1, 5); 5];
        match enumerate(&p, 12, Granularity::Compositions) {
            Err(Error::BudgetExceeded { required, budget }) => {
                assert_eq!(required, 1820);
                assert_eq!(budget, 455);
            }
            other => panic!("expected refusal, got {other:?}"),
        }
        assert!(enumerate(&half(), 9, Granularity::Sequences).is_err());
        assert!(enumerate_with_budget(&half(), 9, Granularity::Sequences, 512).is_ok());
        assert!(enumerate_with_budget(&half(), 9, Granularity::Sequences, 511).is_err());
    }

    #[test]
    fn prefix_statistics() {
        let t = enumerate(&half(), 3, Granularity::Sequences).unwrap();
        let o = &t.outcomes[0b110];
        // sequence 0, 1, 1
        assert_eq!(o.sequence.as_deref(), Some(&[0u8, 1, 1][..]));
        assert_eq!(o.phi_prefix(1, 2).unwrap(), 2);
        assert_eq!(o.phi_prefix(2, 3).unwrap(), 1);
        let c = enumerate(&half(), 3, Granularity::Compositions).unwrap();
        assert!(matches!(c.outcomes[0].phi_prefix(1, 2), Err(Error::PrefixUnavailable)));
    }
}
