//! Expected quantities under a known distribution.
//!
//! Everything is generic over [`Weight`], so the same code runs in log space
//! and in exact rational arithmetic.

use crate::distributions::ClassGroups;
use crate::error::{domain, Result};
use crate::estimators::EstimatorId;
use crate::numerics::Weight;

/// `g_k(n) = Σ_x p_x^k (1 - p_x)^(n-k)`; zero when `k > n`.
pub fn g_value<T: Weight>(groups: &ClassGroups<T>, n: u64, k: u64) -> T {
    if k > n {
        return T::zero();
    }
    T::sum_all(
        groups
            .iter()
            .map(|g| T::from_u64(g.multiplicity) * g.p.powi(k) * g.q.powi(n - k))
            .collect(),
    )
}

/// `f_k(n) = C(n,k) g_k(n) = E[Φ_k]`.
pub fn expected_fk<T: Weight>(groups: &ClassGroups<T>, n: u64, k: u64) -> T {
    if k > n {
        return T::zero();
    }
    T::binomial(n, k) * g_value(groups, n, k)
}

/// `E[M_k] = C(n,k) g_{k+1}(n+1)`.
pub fn expected_mass<T: Weight>(groups: &ClassGroups<T>, n: u64, k: u64) -> T {
    if k > n {
        return T::zero();
    }
    T::binomial(n, k) * g_value(groups, n + 1, k + 1)
}

/// `R_{n,k} = C(n,k) (-1)^(n-k) Σ_x p_x^(n+1)`.
pub fn remainder<T: Weight>(groups: &ClassGroups<T>, n: u64, k: u64) -> T {
    let r = T::binomial(n, k) * groups.power_sum(n + 1);
    if (n - k) % 2 == 1 {
        -r
    } else {
        r
    }
}

/// `E[M_k]` split into a part expressible through `Φ·(n)` and the remainder.
#[derive(Clone, Debug, PartialEq)]
pub struct Decomposition<T> {
    /// `C(n,k) Σ_{i=1}^{n-k} (-1)^(i-1) g_{k+i}(n)`.
    pub series_part: T,
    pub remainder: T,
}

impl<T: Weight> Decomposition<T> {
    pub fn total(&self) -> T {
        self.series_part.clone() + self.remainder.clone()
    }
}

pub fn theorem1_decomposition<T: Weight>(groups: &ClassGroups<T>, n: u64, k: u64) -> Decomposition<T> {
    assert!(k <= n, "k = {k} exceeds n = {n}");
    let c = T::binomial(n, k);
    // one flat sum over (i, group) so cancellation is handled in one place
    let mut terms = Vec::with_capacity((n - k) as usize * groups.len());
    for i in 1..=n - k {
        for g in groups {
            let t = c.clone()
                * T::from_u64(g.multiplicity)
                * g.p.powi(k + i)
                * g.q.powi(n - k - i);
            terms.push(if i % 2 == 1 { t } else { -t });
        }
    }
    Decomposition {
        series_part: T::sum_all(terms),
        remainder: remainder(groups, n, k),
    }
}

/// Signed bias `E[M̂_k] - E[M_k]` of a closed-form estimator.
pub fn analytic_bias<T: Weight>(
    groups: &ClassGroups<T>,
    n: u64,
    k: u64,
    estimator: EstimatorId,
) -> Result<T> {
    if k > n {
        return domain(format!("k = {k} exceeds n = {n}"));
    }
    let c = T::binomial(n, k);
    match estimator {
        EstimatorId::MinimalBias => Ok(-remainder(groups, n, k)),
        EstimatorId::GoodTuringPrime | EstimatorId::GoodTuring if k == n => {
            domain(format!("{estimator} needs k < n (k = {k}, n = {n})"))
        }
        EstimatorId::GoodTuringPrime => Ok(T::sum_all(
            groups
                .iter()
                .map(|g| {
                    c.clone()
                        * T::from_u64(g.multiplicity)
                        * g.p.powi(k + 2)
                        * g.q.powi(n - k - 1)
                })
                .collect(),
        )),
        // (k+1)/n f_{k+1}(n) - C(n,k) g_{k+1}(n+1), per class:
        // C(n,k) p^(k+1) q^(n-k-1) (p - k/n)
        EstimatorId::GoodTuring => Ok(T::sum_all(
            groups
                .iter()
                .map(|g| {
                    c.clone()
                        * T::from_u64(g.multiplicity)
                        * g.p.powi(k + 1)
                        * g.q.powi(n - k - 1)
                        * (g.p.clone() - T::ratio(k, n))
                })
                .collect(),
        )),
    }
}

/// `g_k(n)` and `f_k(n)` for `k = 0..=n`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpectedProfile<T> {
    pub n: u64,
    pub g: Vec<T>,
    pub f: Vec<T>,
}

impl<T: Weight> ExpectedProfile<T> {
    pub fn new(groups: &ClassGroups<T>, n: u64) -> Self {
        let g: Vec<T> = (0..=n).map(|k| g_value(groups, n, k)).collect();
        let f = g
            .iter()
            .enumerate()
            .map(|(k, gk)| T::binomial(n, k as u64) * gk.clone())
            .collect();
        ExpectedProfile { n, g, f }
    }
}
