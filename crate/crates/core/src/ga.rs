//! Genetic search over representations for a low-MSE estimator.

use std::cmp::Ordering;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::time::Instant;

use dashmap::DashMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::distributions::{derive_seed, rng_from_seed, ClassGroups, SampleProfile, SeedRng};
use crate::error::{domain, Result};
use crate::estimators::hybrid_phat;
use crate::moments::MomentContext;
use crate::par::{par_map_range, Execution};
use crate::representations::{
    apply_split_rewrite, initial_representation, instantiate, validate_representation,
    Representation, Rewrite, TERM_CAP,
};

/// When the generation limit is extended.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExtensionRule {
    /// `(f_g = f_0) ∨ (f_best > factor · f_g)`, as printed. Holds at almost
    /// every checkpoint, so runs usually reach `max_generations`.
    #[default]
    Verbatim,
    /// `(f_g = f_0) ∨ (f_g < factor · f_best)`: extend only after a
    /// substantial improvement since the last checkpoint.
    Stagnation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GaConfig {
    /// Generations per extension step (`G`).
    pub generations: u64,
    pub max_generations: u64,
    pub mutant_size: usize,
    pub tournament_size: usize,
    pub elite_count: usize,
    pub term_cap: usize,
    pub improvement_factor: f64,
    pub seed: u64,
    pub extension_rule: ExtensionRule,
    /// Attempts per mutation before the parent is returned unchanged.
    pub mutation_retries: usize,
    pub execution: Execution,
}

impl Default for GaConfig {
    fn default() -> Self {
        GaConfig {
            generations: 100,
            max_generations: 2000,
            mutant_size: 40,
            tournament_size: 3,
            elite_count: 3,
            term_cap: TERM_CAP,
            improvement_factor: 0.95,
            seed: 0,
            extension_rule: ExtensionRule::Verbatim,
            mutation_retries: 16,
            execution: Execution::default(),
        }
    }
}

impl GaConfig {
    pub fn check(&self) -> Result<()> {
        if self.generations == 0
            || self.max_generations == 0
            || self.mutant_size == 0
            || self.tournament_size == 0
            || self.term_cap == 0
            || self.mutation_retries == 0
        {
            return domain("GA sizes must be positive");
        }
        if !(self.improvement_factor > 0.0 && self.improvement_factor <= 1.0) {
            return domain(format!("improvement factor {} outside (0, 1]", self.improvement_factor));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Individual {
    pub representation: Representation,
    /// Estimated MSE; lower is better.
    pub fitness: f64,
    pub lineage_id: u64,
}

impl Individual {
    /// Fitness, then fewer terms, then older lineage.
    pub fn rank(&self, other: &Individual) -> Ordering {
        self.fitness
            .total_cmp(&other.fitness)
            .then(self.representation.term_count().cmp(&other.representation.term_count()))
            .then(self.lineage_id.cmp(&other.lineage_id))
    }
}

/// MSE of instantiated representations under a fixed distribution,
/// memoized by the estimator's canonical hash.
#[derive(Debug)]
pub struct FitnessModel {
    ctx: MomentContext<f64>,
    k: u64,
    cache: DashMap<u64, f64>,
    evaluations: AtomicU64,
    hits: AtomicU64,
}

impl FitnessModel {
    pub fn new(groups: ClassGroups<f64>, n: u64, k: u64) -> Self {
        FitnessModel {
            ctx: MomentContext::new(groups, n),
            k,
            cache: DashMap::new(),
            evaluations: AtomicU64::new(0),
            hits: AtomicU64::new(0),
        }
    }

    /// Model over the hybrid estimate `p̂` of the sample.
    pub fn estimated(profile: &SampleProfile, k: u64) -> Result<Self> {
        let phat = hybrid_phat(profile)?;
        Ok(Self::new(phat.groups(profile), profile.n(), k))
    }

    pub fn fitness(&self, rep: &Representation) -> f64 {
        let est = instantiate(rep);
        let key = est.canonical_hash();
        if let Some(v) = self.cache.get(&key) {
            self.hits.fetch_add(1, AtomicOrdering::Relaxed);
            return *v;
        }
        self.evaluations.fetch_add(1, AtomicOrdering::Relaxed);
        let mse = self
            .ctx
            .estimator_mse(&est.betas_as::<f64>(), self.k)
            .map(|b| b.mse)
            .unwrap_or(f64::MAX);
        let v = if mse.is_finite() { mse.max(0.0) } else { f64::MAX };
        self.cache.insert(key, v);
        v
    }

    /// (evaluations, cache hits) so far.
    pub fn counters(&self) -> (u64, u64) {
        (
            self.evaluations.load(AtomicOrdering::Relaxed),
            self.hits.load(AtomicOrdering::Relaxed),
        )
    }
}

/// Splits a random term with a uniform `δ ∈ (0, 1)` and rewrites the split
/// part with a random identity. Draws again when the result is out of
/// domain, too long or invalid; gives back the parent after `retries`.
pub fn mutate(rep: &Representation, rng: &mut SeedRng, term_cap: usize, retries: usize) -> Representation {
    let terms: Vec<_> = rep.coeffs().keys().copied().collect();
    if terms.is_empty() {
        return rep.clone();
    }
    for _ in 0..retries {
        let target = terms[rng.random_range(0..terms.len())];
        let delta = loop {
            let d: f64 = rng.random();
            if d > 0.0 {
                break d;
            }
        };
        let rewrite = Rewrite::ALL[rng.random_range(0..Rewrite::ALL.len())];
        if let Ok(child) = apply_split_rewrite(rep, target, delta, rewrite) {
            if child.term_count() <= term_cap && validate_representation(&child).is_valid() {
                return child;
            }
        }
    }
    rep.clone()
}

/// Tournament with replacement: the best of `size` uniform draws.
fn tournament<'a>(pop: &'a [Individual], size: usize, rng: &mut SeedRng) -> &'a Individual {
    let mut best = &pop[rng.random_range(0..pop.len())];
    for _ in 1..size {
        let c = &pop[rng.random_range(0..pop.len())];
        if c.rank(best) == Ordering::Less {
            best = c;
        }
    }
    best
}

#[derive(Clone, Debug)]
pub struct EvolveOutcome {
    pub best: Individual,
    pub initial_fitness: f64,
    /// Best fitness seen after each generation.
    pub history: Vec<f64>,
    pub generations: u64,
    pub evaluations: u64,
    pub cache_hits: u64,
    pub wall_clock_secs: f64,
}

/// Evolves an estimator of `M_k` for the sample, using fitness under `p̂`.
pub fn evolve(profile: &SampleProfile, k: u32, config: &GaConfig) -> Result<EvolveOutcome> {
    let model = FitnessModel::estimated(profile, u64::from(k))?;
    evolve_with(&model, profile.n() as u32, k, config)
}

/// Evolves against an arbitrary fitness model.
pub fn evolve_with(model: &FitnessModel, n: u32, k: u32, config: &GaConfig) -> Result<EvolveOutcome> {
    config.check()?;
    if k > n {
        return domain(format!("k = {k} exceeds n = {n}"));
    }
    let start = Instant::now();
    let r0 = initial_representation(n, k);
    let f0 = model.fitness(&r0);
    let origin = Individual {
        representation: r0,
        fitness: f0,
        lineage_id: 0,
    };
    let mut next_id = 1u64;
    let mut pop = vec![origin.clone()];
    let mut best = origin.clone();
    let mut f_best = f0;
    let mut limit = config.generations.min(config.max_generations);
    let mut history = Vec::new();
    let mut g = 1u64;
    while g <= limit {
        let gen_seed = derive_seed(config.seed, &[g]);
        let mut select = rng_from_seed(derive_seed(gen_seed, &[0]));
        let parents: Vec<&Individual> = (0..config.mutant_size)
            .map(|_| tournament(&pop, config.tournament_size, &mut select))
            .collect();
        let children = par_map_range(config.execution, parents.len(), |idx| {
            let mut rng = rng_from_seed(derive_seed(gen_seed, &[1, idx as u64]));
            let rep = mutate(
                &parents[idx].representation,
                &mut rng,
                config.term_cap,
                config.mutation_retries,
            );
            let fitness = model.fitness(&rep);
            (rep, fitness)
        });
        let mut order: Vec<&Individual> = pop.iter().collect();
        order.sort_by(|a, b| a.rank(b));
        let elite: Vec<Individual> = order.into_iter().take(config.elite_count).cloned().collect();
        let mut next: Vec<Individual> = children
            .into_iter()
            .map(|(representation, fitness)| {
                next_id += 1;
                Individual {
                    representation,
                    fitness,
                    lineage_id: next_id - 1,
                }
            })
            .collect();
        next.push(origin.clone());
        next.extend(elite);
        pop = next;

        let gen_best = pop.iter().min_by(|a, b| a.rank(b)).expect("non-empty population");
        let f_g = gen_best.fitness;
        if gen_best.rank(&best) == Ordering::Less {
            best = gen_best.clone();
        }
        history.push(best.fitness);

        if g == limit {
            let extend = match config.extension_rule {
                ExtensionRule::Verbatim => f_g == f0 || f_best > config.improvement_factor * f_g,
                ExtensionRule::Stagnation => f_g == f0 || f_g < config.improvement_factor * f_best,
            };
            if extend {
                limit = (limit + config.generations).min(config.max_generations);
                f_best = f_g;
            }
        }
        g += 1;
    }
    let (evaluations, cache_hits) = model.counters();
    Ok(EvolveOutcome {
        best,
        initial_fitness: f0,
        generations: history.len() as u64,
        history,
        evaluations,
        cache_hits,
        wall_clock_secs: start.elapsed().as_secs_f64(),
    })
}

/// Run record written next to an evolved representation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: GaConfig,
    pub n: u32,
    pub k: u32,
    pub initial_fitness: f64,
    pub best_fitness: f64,
    pub best_terms: usize,
    pub best_lineage: u64,
    pub generations: u64,
    pub evaluations: u64,
    pub cache_hits: u64,
    pub wall_clock_secs: f64,
    pub history: Vec<f64>,
    pub note: String,
}

impl RunManifest {
    pub fn new(config: &GaConfig, k: u32, outcome: &EvolveOutcome) -> Self {
        let note = match config.extension_rule {
            ExtensionRule::Verbatim => {
                "verbatim extension: extends when f_best > factor * f_g, which nearly always holds"
            }
            ExtensionRule::Stagnation => "stagnation extension: extends only after a substantial improvement",
        };
        RunManifest {
            config: config.clone(),
            n: outcome.best.representation.n(),
            k,
            initial_fitness: outcome.initial_fitness,
            best_fitness: outcome.best.fitness,
            best_terms: outcome.best.representation.term_count(),
            best_lineage: outcome.best.lineage_id,
            generations: outcome.generations,
            evaluations: outcome.evaluations,
            cache_hits: outcome.cache_hits,
            wall_clock_secs: outcome.wall_clock_secs,
            history: outcome.history.clone(),
            note: note.to_string(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{draw_sample, make_distribution, DistributionKind};
    use crate::moments::estimated_mse;

    fn sample(seed: u64) -> SampleProfile {
        let d = make_distribution(&DistributionKind::Uniform, 20).unwrap();
        draw_sample(&d, 20, seed).unwrap()
    }

    fn quick(seed: u64) -> GaConfig {
        GaConfig {
            generations: 20,
            max_generations: 60,
            seed,
            ..GaConfig::default()
        }
    }

    #[test]
    fn defaults() {
        let c = GaConfig::default();
        assert_eq!((c.generations, c.max_generations, c.mutant_size), (100, 2000, 40));
        assert_eq!((c.tournament_size, c.elite_count, c.term_cap), (3, 3, 20));
        assert!(c.check().is_ok());
        assert!(GaConfig { improvement_factor: 1.5, ..c }.check().is_err());
    }

    #[test]
    fn mutation_stays_valid() {
        let mut rng = rng_from_seed(3);
        let mut rep = initial_representation(20, 1);
        for _ in 0..300 {
            rep = mutate(&rep, &mut rng, TERM_CAP, 16);
            assert!(validate_representation(&rep).is_valid());
            assert!(rep.term_count() <= TERM_CAP);
        }
    }

    #[test]
    fn fitness_matches_log_space() {
        let s = sample(4);
        let model = FitnessModel::estimated(&s, 0).unwrap();
        let mut rng = rng_from_seed(9);
        let mut rep = initial_representation(20, 0);
        for _ in 0..10 {
            rep = mutate(&rep, &mut rng, TERM_CAP, 16);
            let f = model.fitness(&rep);
            let l = estimated_mse(&s, &instantiate(&rep), 0).unwrap();
            assert!(((f - l) / l).abs() < 1e-9, "{f} vs {l}");
        }
    }

    #[test]
    fn elitism_and_determinism() {
        let s = sample(1);
        let a = evolve(&s, 0, &quick(5)).unwrap();
        assert!(a.best.fitness <= a.initial_fitness);
        assert!(a.history.windows(2).all(|w| w[1] <= w[0]));
        let b = evolve(&s, 0, &GaConfig { execution: Execution::Sequential, ..quick(5) }).unwrap();
        assert_eq!(a.best, b.best);
        assert_eq!(a.history, b.history);
        assert!(validate_representation(&a.best.representation).is_valid());
    }

    #[test]
    fn extension_rules() {
        let s = sample(2);
        let v = evolve(&s, 0, &quick(1)).unwrap();
        assert_eq!(v.generations, 60);
        let st = evolve(&s, 0, &GaConfig { extension_rule: ExtensionRule::Stagnation, ..quick(1) }).unwrap();
        assert!(st.generations <= 60 && st.generations.is_multiple_of(20));
    }

    #[test]
    fn manifest_round_trip() {
        let c = quick(8);
        let out = evolve(&sample(3), 1, &c).unwrap();
        let m = RunManifest::new(&c, 1, &out);
        let back: RunManifest = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
