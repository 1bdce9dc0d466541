//! Estimators computed from a sample alone.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::distributions::{ClassGroups, SampleProfile};
use crate::error::{domain, Error, Result};
use crate::numerics::{compensated_alternating_sum, log_binomial_ratio_chain, LogWeight, Weight};

/// Closed-form estimators of `M_k`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EstimatorId {
    /// `(k+1)/n Φ_{k+1}`.
    #[serde(rename = "GT")]
    GoodTuring,
    /// `(k+1)/(n-k) Φ_{k+1}`.
    #[serde(rename = "GT-prime")]
    GoodTuringPrime,
    /// The alternating-sum minimal-bias estimator.
    #[serde(rename = "B")]
    MinimalBias,
}

impl fmt::Display for EstimatorId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EstimatorId::GoodTuring => "GT",
            EstimatorId::GoodTuringPrime => "GT-prime",
            EstimatorId::MinimalBias => "B",
        })
    }
}

impl FromStr for EstimatorId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "GT" | "gt" => Ok(EstimatorId::GoodTuring),
            "GT-prime" | "gt-prime" | "GT'" => Ok(EstimatorId::GoodTuringPrime),
            "B" | "b" => Ok(EstimatorId::MinimalBias),
            other => domain(format!("unknown estimator `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GtVariant {
    Standard,
    Simple,
}

pub fn good_turing(profile: &SampleProfile, k: u64, variant: GtVariant) -> Result<f64> {
    let n = profile.n();
    if k >= n {
        return domain(format!("Good-Turing needs k < n (k = {k}, n = {n})"));
    }
    let phi = profile.phi(k + 1) as f64;
    let denom = match variant {
        GtVariant::Standard => n,
        GtVariant::Simple => n - k,
    };
    Ok((k + 1) as f64 / denom as f64 * phi)
}

/// `C(n,k) Σ_{i=1}^{n-k} (-1)^(i-1) Φ_{k+i} / C(n,k+i)` in log space.
pub fn minimal_bias_log(profile: &SampleProfile, k: u64) -> Result<LogWeight> {
    let n = profile.n();
    if k > n {
        return domain(format!("k = {k} exceeds n = {n}"));
    }
    let chain = log_binomial_ratio_chain(n, k, n - k)?;
    let terms: Vec<LogWeight> = profile
        .phi_pairs()
        .filter(|&(f, _)| f > k)
        .map(|(f, c)| {
            let i = f - k;
            let t = chain[(i - 1) as usize] * LogWeight::from_f64(c as f64);
            if i % 2 == 1 {
                t
            } else {
                -t
            }
        })
        .collect();
    Ok(compensated_alternating_sum(&terms))
}

/// Minimal-bias estimate of `M_k`; not range-restricted.
pub fn minimal_bias(profile: &SampleProfile, k: u64) -> Result<f64> {
    Ok(minimal_bias_log(profile, k)?.to_f64())
}

/// Chao's estimate of the number of unseen classes.
///
/// With `Φ_2 = 0` the bias-corrected form `Φ_1 (Φ_1 - 1) / 2` is used.
pub fn chao_unseen(profile: &SampleProfile) -> f64 {
    chao_from_counts(profile.n(), profile.phi(1), profile.phi(2))
}

/// [`chao_unseen`] from `n`, `Φ_1` and `Φ_2`.
pub fn chao_from_counts(n: u64, phi1: u64, phi2: u64) -> f64 {
    let n = n as f64;
    let f1 = phi1 as f64;
    let f2 = phi2 as f64;
    if f1 == 0.0 {
        0.0
    } else if f2 == 0.0 {
        f1 * (f1 - 1.0) / 2.0
    } else {
        (n - 1.0) / n * f1 * f1 / (2.0 * f2)
    }
}

/// `M̂_k^G / Φ_k`, the Good-Turing probability of one class seen `k` times.
pub fn natural_estimate(profile: &SampleProfile, k: u64) -> Option<f64> {
    let phi = profile.phi(k);
    if phi == 0 || k >= profile.n() {
        return None;
    }
    let gt = good_turing(profile, k, GtVariant::Standard).ok()?;
    Some(gt / phi as f64)
}

/// Probability estimates for seen classes plus a block of unseen classes.
#[derive(Clone, Debug, PartialEq)]
pub struct EstimatedDistribution {
    /// Estimate per seen class index.
    pub seen: BTreeMap<u32, f64>,
    /// Estimate shared by every class seen exactly `k` times.
    pub by_frequency: BTreeMap<u64, f64>,
    /// Estimated number of unseen classes.
    pub unseen_count: f64,
    /// Estimate per unseen class.
    pub unseen_each: f64,
}

impl EstimatedDistribution {
    pub fn total(&self) -> f64 {
        self.seen.values().sum::<f64>() + self.unseen_count * self.unseen_each
    }

    /// Number of synthetic unseen classes, `⌈f̂_0⌉`.
    pub fn unseen_classes(&self) -> u64 {
        if self.unseen_each > 0.0 {
            self.unseen_count.ceil() as u64
        } else {
            0
        }
    }

    /// Classes grouped by estimate. The unseen block has `⌈f̂_0⌉` classes,
    /// the last one scaled so the block totals `f̂_0 · p̂_y`.
    pub fn groups<T: Weight>(&self, profile: &SampleProfile) -> ClassGroups<T> {
        let mut pairs: Vec<(f64, u64)> = self
            .by_frequency
            .iter()
            .map(|(&k, &p)| (p, profile.phi(k)))
            .collect();
        let u = self.unseen_classes();
        if u > 0 {
            let full = (u - 1) as f64;
            pairs.push((self.unseen_each, u - 1));
            pairs.push(((self.unseen_count - full) * self.unseen_each, 1));
        }
        ClassGroups::from_pairs(
            pairs
                .into_iter()
                .filter(|&(p, m)| p > 0.0 && m > 0)
                .map(|(p, m)| (T::from_f64(p), m)),
        )
    }
}

/// Hybrid of empirical and Good-Turing estimates.
///
/// A class seen `k` times gets `k/n` when `k < Φ_{k+1}`, otherwise
/// `M̂_k^G / Φ_k` (falling back to `k/n` when that is zero). Unseen classes
/// share `M̂_0^G` equally over Chao's `f̂_0`, and seen classes are scaled to
/// fill the rest. When `M̂_0^G ≥ 1` everything is normalized jointly.
pub fn hybrid_phat(profile: &SampleProfile) -> Result<EstimatedDistribution> {
    let n = profile.n();
    if n < 2 {
        return domain("the hybrid estimate needs n >= 2");
    }
    let nf = n as f64;
    let mut raw: BTreeMap<u64, f64> = BTreeMap::new();
    for (k, phi_k) in profile.phi_pairs() {
        let empirical = k as f64 / nf;
        let next = profile.phi(k + 1) as f64;
        let p = if (k as f64) < next {
            empirical
        } else {
            let gt = (k + 1) as f64 / nf * next / phi_k as f64;
            if gt > 0.0 {
                gt
            } else {
                empirical
            }
        };
        raw.insert(k, p);
    }
    let seen_raw: f64 = profile.phi_pairs().map(|(k, c)| raw[&k] * c as f64).sum();
    let m0 = profile.phi(1) as f64 / nf;
    let f0 = chao_unseen(profile);

    let (scale, unseen_count, unseen_each) = if f0 <= 0.0 {
        (1.0 / seen_raw, 0.0, 0.0)
    } else if m0 < 1.0 {
        ((1.0 - m0) / seen_raw, f0, m0 / f0)
    } else {
        let total = seen_raw + m0;
        (1.0 / total, f0, m0 / f0 / total)
    };
    let by_frequency: BTreeMap<u64, f64> = raw.into_iter().map(|(k, p)| (k, p * scale)).collect();
    let seen = profile
        .counts()
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(x, &c)| (x as u32, by_frequency[&u64::from(c)]))
        .collect();
    Ok(EstimatedDistribution {
        seen,
        by_frequency,
        unseen_count,
        unseen_each,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn profile(tokens: &str) -> SampleProfile {
        SampleProfile::from_tokens(tokens.chars().map(String::from))
    }

    /// A profile with the given `(k, Φ_k)` pairs.
    fn with_phi(pairs: &[(u32, u32)], n: u64) -> SampleProfile {
        let mut seq = Vec::new();
        let mut class = 0u32;
        for &(k, c) in pairs {
            for _ in 0..c {
                seq.extend(std::iter::repeat_n(class, k as usize));
                class += 1;
            }
        }
        // pad with one heavy class to reach n
        let rest = n as usize - seq.len();
        seq.extend(std::iter::repeat_n(class, rest));
        SampleProfile::from_sequence(seq)
    }

    #[test]
    fn good_turing_examples() {
        let p = with_phi(&[(1, 3)], 10);
        assert!((good_turing(&p, 0, GtVariant::Standard).unwrap() - 0.3).abs() < 1e-15);
        let p = with_phi(&[(2, 2)], 10);
        assert!((good_turing(&p, 1, GtVariant::Simple).unwrap() - 4.0 / 9.0).abs() < 1e-15);
        assert_eq!(good_turing(&p, 3, GtVariant::Standard).unwrap(), 0.0);
        assert!(good_turing(&p, 10, GtVariant::Standard).is_err());
    }

    #[test]
    fn minimal_bias_examples() {
        assert!((minimal_bias(&profile("ab"), 0).unwrap() - 1.0).abs() < 1e-15);
        assert!((minimal_bias(&profile("aa"), 0).unwrap() + 1.0).abs() < 1e-15);
        assert_eq!(minimal_bias(&profile("aab"), 3).unwrap(), 0.0);
    }

    #[test]
    fn minimal_bias_matches_direct_formula() {
        let p = profile("aaabbcdeefghhhhij");
        let n = p.n();
        for k in 0..n {
            let direct: f64 = (1..=n - k)
                .map(|i| {
                    let c = crate::numerics::exact_binomial(n, k);
                    let d = crate::numerics::exact_binomial(n, k + i);
                    let ratio = num_traits::ToPrimitive::to_f64(&c).unwrap()
                        / num_traits::ToPrimitive::to_f64(&d).unwrap();
                    let sign = if i % 2 == 1 { 1.0 } else { -1.0 };
                    sign * ratio * p.phi(k + i) as f64
                })
                .sum();
            let got = minimal_bias(&p, k).unwrap();
            assert!((got - direct).abs() < 1e-9 * direct.abs().max(1.0), "k={k}");
        }
    }

    #[test]
    fn chao_examples() {
        assert!((chao_from_counts(10, 4, 2) - 3.6).abs() < 1e-12);
        assert!((chao_unseen(&with_phi(&[(1, 4), (2, 2)], 8)) - 3.5).abs() < 1e-12);
        assert_eq!(chao_unseen(&with_phi(&[(3, 2)], 10)), 0.0);
        assert_eq!(chao_unseen(&with_phi(&[(1, 3)], 10)), 3.0);
    }

    #[test]
    fn hybrid_degenerate_branches() {
        let e = hybrid_phat(&profile("aabb")).unwrap();
        assert_eq!(e.seen.len(), 2);
        assert!(e.seen.values().all(|&p| (p - 0.5).abs() < 1e-15));
        assert_eq!(e.unseen_classes(), 0);

        let e = hybrid_phat(&profile("abcd")).unwrap();
        assert!((e.total() - 1.0).abs() < 1e-12);
        assert!(e.unseen_each > 0.0);
        let first = e.seen[&0];
        assert!(e.seen.values().all(|&p| p == first));
    }

    #[test]
    fn hybrid_normalizes() {
        for s in ["aaabbcdeefghhhhij", "abcabcabcdd", "aaaaaaaab", "ab", "abcdefgghhhhhh"] {
            let p = profile(s);
            let e = hybrid_phat(&p).unwrap();
            assert!((e.total() - 1.0).abs() < 1e-9, "{s}");
            assert!(e.unseen_each >= 0.0 && e.seen.values().all(|&v| v >= 0.0));
            let g: ClassGroups<LogWeight> = e.groups(&p);
            assert!((g.total_probability().to_f64() - 1.0).abs() < 1e-9, "{s}");
        }
    }

    #[test]
    fn ids_round_trip() {
        for id in [EstimatorId::GoodTuring, EstimatorId::GoodTuringPrime, EstimatorId::MinimalBias] {
            assert_eq!(id.to_string().parse::<EstimatorId>().unwrap(), id);
        }
        assert!("Q".parse::<EstimatorId>().is_err());
    }
}
