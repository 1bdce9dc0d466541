//! Benchmark distributions, seeded sampling and frequency profiles.

mod groups;
mod profile;
mod seed;

pub use groups::{ClassGroup, ClassGroups};
pub use profile::SampleProfile;
pub use seed::{derive_seed, rng_from_seed, SeedRng};

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution as _;
use rand_distr::Gamma;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Family of a benchmark distribution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum DistributionKind {
    Uniform,
    HalfAndHalf,
    Zipf { s: f64 },
    Dirichlet {
        a: f64,
        #[serde(default)]
        seed: u64,
    },
}

impl DistributionKind {
    /// Short label, e.g. `zipf-0.5` or `diri-1`.
    pub fn label(&self) -> String {
        match self {
            DistributionKind::Uniform => "uniform".into(),
            DistributionKind::HalfAndHalf => "half&half".into(),
            DistributionKind::Zipf { s } => format!("zipf-{s}"),
            DistributionKind::Dirichlet { a, .. } => format!("diri-{a}"),
        }
    }

    /// The six benchmark families; Dirichlet entries carry `seed`.
    pub fn benchmark_set(seed: u64) -> Vec<DistributionKind> {
        vec![
            DistributionKind::Uniform,
            DistributionKind::HalfAndHalf,
            DistributionKind::Zipf { s: 1.0 },
            DistributionKind::Zipf { s: 0.5 },
            DistributionKind::Dirichlet { a: 1.0, seed },
            DistributionKind::Dirichlet { a: 0.5, seed },
        ]
    }

    /// Same family with a fresh Dirichlet seed; other kinds are unchanged.
    pub fn reseeded(&self, seed: u64) -> DistributionKind {
        match self {
            DistributionKind::Dirichlet { a, .. } => DistributionKind::Dirichlet { a: *a, seed },
            other => other.clone(),
        }
    }
}

/// A known probability vector over classes `0..S`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscreteDistribution {
    probabilities: Vec<f64>,
}

impl DiscreteDistribution {
    pub fn new(probabilities: Vec<f64>) -> Result<Self> {
        if probabilities.len() < 2 {
            return domain("a distribution needs at least two classes");
        }
        if probabilities.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return domain("probabilities must lie in (0, 1]");
        }
        let total: f64 = probabilities.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return domain(format!("probabilities sum to {total}, not 1"));
        }
        Ok(DiscreteDistribution { probabilities })
    }

    /// Normalizes positive weights into a distribution.
    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|&w| !(w > 0.0 && w.is_finite())) {
            return domain("weights must be positive and finite");
        }
        let total: f64 = weights.iter().sum();
        Self::new(weights.iter().map(|w| w / total).collect())
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.probabilities
    }

    pub fn support(&self) -> usize {
        self.probabilities.len()
    }

    pub fn p_max(&self) -> f64 {
        self.probabilities.iter().copied().fold(0.0, f64::max)
    }

    pub fn p_min(&self) -> f64 {
        self.probabilities.iter().copied().fold(1.0, f64::min)
    }

    /// Classes grouped by equal probability, in log-space weights.
    pub fn groups(&self) -> ClassGroups<crate::numerics::LogWeight> {
        ClassGroups::from_f64(&self.probabilities)
    }
}

pub fn make_distribution(kind: &DistributionKind, support: usize) -> Result<DiscreteDistribution> {
    if support < 2 {
        return domain("support must be at least 2");
    }
    let weights: Vec<f64> = match *kind {
        DistributionKind::Uniform => vec![1.0; support],
        DistributionKind::HalfAndHalf => {
            let heavy = support.div_ceil(2);
            (0..support).map(|x| if x < heavy { 3.0 } else { 1.0 }).collect()
        }
        DistributionKind::Zipf { s } => {
            if !(s > 0.0 && s.is_finite()) {
                return domain(format!("zipf exponent must be positive, got {s}"));
            }
            (1..=support).map(|r| (r as f64).powf(-s)).collect()
        }
        DistributionKind::Dirichlet { a, seed } => {
            if !(a > 0.0 && a.is_finite()) {
                return domain(format!("dirichlet concentration must be positive, got {a}"));
            }
            let gamma = Gamma::new(a, 1.0).map_err(|e| crate::Error::Domain(e.to_string()))?;
            let mut rng = rng_from_seed(seed);
            // a tiny concentration can produce exact zeros
            (0..support)
                .map(|_| gamma.sample(&mut rng).max(f64::MIN_POSITIVE))
                .collect()
        }
    };
    DiscreteDistribution::from_weights(&weights)
}

/// Draws `n` i.i.d. classes from `dist`.
pub fn draw_sample(dist: &DiscreteDistribution, n: usize, seed: u64) -> Result<SampleProfile> {
    if n == 0 {
        return domain("sample size must be at least 1");
    }
    Ok(SampleProfile::from_sequence(draw_sequence(dist, n, seed)))
}

/// Appends `extra` fresh draws to a sampled profile.
pub fn extend_sample(
    dist: &DiscreteDistribution,
    profile: &SampleProfile,
    extra: usize,
    seed: u64,
) -> Result<SampleProfile> {
    let mut seq = profile
        .sequence()
        .ok_or(crate::Error::PrefixUnavailable)?
        .to_vec();
    if extra > 0 {
        seq.extend(draw_sequence(dist, extra, seed));
    }
    Ok(SampleProfile::from_sequence(seq))
}

fn draw_sequence(dist: &DiscreteDistribution, n: usize, seed: u64) -> Vec<u32> {
    let index = WeightedIndex::new(dist.probabilities()).expect("validated probabilities");
    let mut rng = rng_from_seed(seed);
    (0..n).map(|_| index.sample(&mut rng) as u32).collect()
}

/// `Σ_x p_x 1(N_x = k)` for the classes of `dist`.
pub fn realized_mass(dist: &DiscreteDistribution, profile: &SampleProfile, k: u64) -> f64 {
    let counts = profile.counts();
    dist.probabilities()
        .iter()
        .enumerate()
        .filter(|(x, _)| u64::from(counts.get(*x).copied().unwrap_or(0)) == k)
        .map(|(_, &p)| p)
        .collect::<crate::numerics::NeumaierSum>()
        .value()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: &[f64], b: &[f64]) -> bool {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-15)
    }

    #[test]
    fn constructions() {
        let u = make_distribution(&DistributionKind::Uniform, 4).unwrap();
        assert_eq!(u.probabilities(), &[0.25; 4]);
        let h = make_distribution(&DistributionKind::HalfAndHalf, 4).unwrap();
        assert!(close(h.probabilities(), &[0.375, 0.375, 0.125, 0.125]));
        let z = make_distribution(&DistributionKind::Zipf { s: 1.0 }, 3).unwrap();
        assert!(close(z.probabilities(), &[6.0 / 11.0, 3.0 / 11.0, 2.0 / 11.0]));
        // odd support: the larger half is heavy
        let h = make_distribution(&DistributionKind::HalfAndHalf, 3).unwrap();
        assert!(close(h.probabilities(), &[3.0 / 7.0, 3.0 / 7.0, 1.0 / 7.0]));
    }

    #[test]
    fn invalid_parameters() {
        assert!(make_distribution(&DistributionKind::Uniform, 1).is_err());
        assert!(make_distribution(&DistributionKind::Zipf { s: 0.0 }, 3).is_err());
        assert!(make_distribution(&DistributionKind::Dirichlet { a: -1.0, seed: 1 }, 3).is_err());
        assert!(DiscreteDistribution::new(vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn dirichlet_depends_on_seed() {
        let a = make_distribution(&DistributionKind::Dirichlet { a: 0.5, seed: 1 }, 50).unwrap();
        let b = make_distribution(&DistributionKind::Dirichlet { a: 0.5, seed: 1 }, 50).unwrap();
        let c = make_distribution(&DistributionKind::Dirichlet { a: 0.5, seed: 2 }, 50).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!((a.probabilities().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sampling() {
        let u = make_distribution(&DistributionKind::Uniform, 2).unwrap();
        let one = draw_sample(&u, 1, 9).unwrap();
        assert_eq!(one.phi(1), 1);
        let a = draw_sample(&u, 100_000, 42).unwrap();
        let b = draw_sample(&u, 100_000, 42).unwrap();
        assert_eq!(a.sequence(), b.sequence());
        for &c in a.counts() {
            assert!((f64::from(c) / 100_000.0 - 0.5).abs() < 0.01);
        }
        assert!(draw_sample(&u, 0, 1).is_err());
    }

    #[test]
    fn realized_masses() {
        let u = make_distribution(&DistributionKind::Uniform, 2).unwrap();
        assert_eq!(realized_mass(&u, &SampleProfile::from_sequence(vec![0, 0]), 0), 0.5);
        assert_eq!(realized_mass(&u, &SampleProfile::from_sequence(vec![0, 1]), 0), 0.0);
        let z = make_distribution(&DistributionKind::Zipf { s: 1.0 }, 3).unwrap();
        let m = realized_mass(&z, &SampleProfile::from_sequence(vec![0, 0, 1]), 1);
        assert!((m - 3.0 / 11.0).abs() < 1e-15);
    }

    #[test]
    fn masses_partition_and_coverage_shrinks() {
        let z = make_distribution(&DistributionKind::Zipf { s: 1.0 }, 30).unwrap();
        let s = draw_sample(&z, 60, 3).unwrap();
        let total: f64 = (0..=60).map(|k| realized_mass(&z, &s, k)).sum();
        assert!((total - 1.0).abs() < 1e-12);
        let seq = s.sequence().unwrap();
        let mut prev = 1.0;
        for j in 1..=60 {
            let m0 = realized_mass(&z, &SampleProfile::from_sequence(seq[..j].to_vec()), 0);
            assert!(m0 <= prev);
            prev = m0;
        }
    }

    #[test]
    fn extension_keeps_prefix() {
        let z = make_distribution(&DistributionKind::Zipf { s: 0.5 }, 10).unwrap();
        let s = draw_sample(&z, 20, 5).unwrap();
        let e = extend_sample(&z, &s, 30, 6).unwrap();
        assert_eq!(e.n(), 50);
        assert_eq!(&e.sequence().unwrap()[..20], s.sequence().unwrap());
        for i in 1..=20 {
            assert_eq!(e.phi_at(i, 20).unwrap(), s.phi(i));
        }
    }
}
