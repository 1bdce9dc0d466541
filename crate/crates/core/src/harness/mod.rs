//! Experiment orchestration: declarative specs, runners per mode, Monte
//! Carlo measurement and CSV export.
//!
//! Every random stream is derived from the spec's `master_seed` with
//! [`derive_seed`] and a fixed tag path:
//!
//! | stream                      | tags                        |
//! |-----------------------------|-----------------------------|
//! | Dirichlet draw              | `[1, dist]`                 |
//! | sample at size `n`          | `[2, dist, n, k, rep]`      |
//! | GA seed                     | `[3, dist, n, k, rep]`      |
//! | sample extension            | `[4, dist, n, c, rep, ext]` |
//! | Monte Carlo replications    | `[5, dist, n, k]`, then `[r]` |

mod audit;
mod rows;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use audit::{audit_grid, audit_distribution, run_audit, AuditCheck, AuditReport};
pub use rows::{gnuplot_columns, read_csv, vargha_delaney_a12, write_csv, Method, Metric, ResultRow, RowKey, Target};

use crate::distributions::{
    derive_seed, draw_sample, extend_sample, make_distribution, realized_mass, DiscreteDistribution,
    DistributionKind,
};
use crate::error::{domain, Result};
use crate::estimators::EstimatorId;
use crate::ga::{evolve, GaConfig};
use crate::ground_truth::analytic_bias;
use crate::moments::MomentContext;
use crate::numerics::{LogWeight, NeumaierSum};
use crate::par::{par_map_range, Execution};
use crate::representations::{
    adapt_to_larger_sample, instantiate, validate_representation, AdaptFold, LinearEstimator, Representation,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    BiasCurve,
    MseCompare,
    EvolveCompare,
    AdaptCompare,
    OracleAudit,
}

impl std::str::FromStr for Mode {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .or_else(|_| domain(format!("unknown mode `{s}`")))
    }
}

fn default_k() -> Vec<u64> {
    vec![0]
}

fn default_replications() -> u64 {
    1
}

fn default_estimators() -> Vec<EstimatorId> {
    vec![EstimatorId::GoodTuring, EstimatorId::MinimalBias]
}

fn default_factors() -> Vec<u64> {
    vec![2, 5, 10]
}

/// Declarative description of one experiment grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub id: String,
    pub mode: Mode,
    #[serde(default)]
    pub distributions: Vec<DistributionKind>,
    #[serde(default)]
    pub support: u64,
    pub sample_sizes: Vec<u64>,
    #[serde(default = "default_k")]
    pub target_k: Vec<u64>,
    #[serde(default = "default_replications")]
    pub replications: u64,
    #[serde(default)]
    pub master_seed: u64,
    #[serde(default = "default_estimators")]
    pub estimators: Vec<EstimatorId>,
    /// Extra Monte Carlo replications in `mse-compare`; 0 means exact only.
    #[serde(default)]
    pub monte_carlo_replications: u64,
    #[serde(default)]
    pub ga: GaConfig,
    #[serde(default = "default_factors")]
    pub adapt_factors: Vec<u64>,
    #[serde(default)]
    pub adapt_fold: AdaptFold,
    /// Fresh extensions of each sample in `adapt-compare`.
    #[serde(default = "default_replications")]
    pub extension_replications: u64,
    #[serde(default)]
    pub execution: Execution,
}

impl ExperimentSpec {
    pub fn read(path: &Path) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        spec.check()?;
        Ok(spec)
    }

    pub fn check(&self) -> Result<()> {
        if self.replications == 0 {
            return domain("replications must be at least 1");
        }
        if self.sample_sizes.is_empty() || self.sample_sizes.contains(&0) {
            return domain("sample sizes must be non-empty and positive");
        }
        if self.mode == Mode::OracleAudit {
            return Ok(());
        }
        if self.distributions.is_empty() {
            return domain("no distributions given");
        }
        if self.support < 2 {
            return domain("support must be at least 2");
        }
        if self.target_k.is_empty() {
            return domain("no target k given");
        }
        match self.mode {
            Mode::EvolveCompare | Mode::AdaptCompare if self.sample_sizes.iter().any(|&n| n < 2) => {
                domain("evolution needs n >= 2")
            }
            Mode::AdaptCompare if self.target_k != [0] => domain("adapt-compare supports k = 0 only"),
            Mode::AdaptCompare if self.adapt_factors.contains(&0) => domain("adapt factors must be positive"),
            Mode::AdaptCompare if self.extension_replications == 0 => domain("extension_replications must be at least 1"),
            Mode::EvolveCompare | Mode::AdaptCompare => self.ga.check(),
            _ => Ok(()),
        }
    }

    /// The distribution at grid position `idx`; Dirichlet draws are reseeded
    /// from the master seed.
    pub fn distribution(&self, idx: usize) -> Result<(DistributionKind, DiscreteDistribution)> {
        let kind = self.distributions[idx].reseeded(derive_seed(self.master_seed, &[1, idx as u64]));
        let dist = make_distribution(&kind, self.support as usize)?;
        Ok((kind, dist))
    }

    fn key(&self, kind: &DistributionKind, n: u64, k: u64, seed: u64) -> RowKey {
        RowKey {
            experiment: self.id.clone(),
            distribution: kind.label(),
            support: self.support,
            n,
            k,
            replications: self.replications,
            seed,
        }
    }

    /// `(n, k)` pairs of the grid with `k ≤ n`.
    fn grid(&self) -> Vec<(u64, u64)> {
        let mut out = Vec::new();
        for &n in &self.sample_sizes {
            for &k in &self.target_k {
                if k <= n {
                    out.push((n, k));
                }
            }
        }
        out
    }
}

/// What an experiment produced.
#[derive(Clone, Debug)]
pub enum ExperimentOutput {
    Rows(Vec<ResultRow>),
    Audit(AuditReport),
}

pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutput> {
    spec.check()?;
    Ok(match spec.mode {
        Mode::BiasCurve => ExperimentOutput::Rows(run_bias_curve(spec)?),
        Mode::MseCompare => ExperimentOutput::Rows(run_mse_compare(spec)?),
        Mode::EvolveCompare => ExperimentOutput::Rows(run_evolve_compare(spec)?),
        Mode::AdaptCompare => ExperimentOutput::Rows(run_adapt_compare(spec)?),
        Mode::OracleAudit => ExperimentOutput::Audit(run_audit(&spec.sample_sizes, spec.master_seed, spec.execution)?),
    })
}

/// Closed-form estimator `id` for samples of size `n`.
pub fn closed_form(id: EstimatorId, n: u64, k: u64) -> Result<LinearEstimator> {
    let (n32, k32) = (n as u32, k as u32);
    match id {
        EstimatorId::GoodTuring => LinearEstimator::good_turing(n32, k32),
        EstimatorId::GoodTuringPrime if k < n => {
            LinearEstimator::new(n32, [((k32 + 1, n32), f64::from(k32 + 1) / f64::from(n32 - k32))])
        }
        EstimatorId::GoodTuringPrime => domain("GT-prime needs k < n"),
        EstimatorId::MinimalBias => Ok(LinearEstimator::minimal_bias(n32, k32)),
    }
}

/// Analytic bias over the grid, with log-magnitude columns.
pub fn run_bias_curve(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for idx in 0..spec.distributions.len() {
        let (kind, dist) = spec.distribution(idx)?;
        let groups = dist.groups();
        for (n, k) in spec.grid() {
            let key = spec.key(&kind, n, k, spec.master_seed);
            for &id in &spec.estimators {
                if id != EstimatorId::MinimalBias && k == n {
                    continue;
                }
                let b: LogWeight = analytic_bias(&groups, n, k, id)?;
                rows.push(key.log_row(&id.to_string(), Metric::Bias, b));
            }
        }
    }
    Ok(rows)
}

/// Mean and standard error of a Monte Carlo average.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MonteCarlo {
    pub mean: f64,
    pub std_error: f64,
    pub replications: u64,
}

impl MonteCarlo {
    pub fn from_values(values: &[f64]) -> Self {
        let r = values.len() as f64;
        let mean = values.iter().copied().collect::<NeumaierSum>().value() / r;
        let ss = values.iter().map(|v| (v - mean).powi(2)).collect::<NeumaierSum>().value();
        let var = if values.len() > 1 { ss / (r - 1.0) } else { 0.0 };
        MonteCarlo {
            mean,
            std_error: (var / r).sqrt(),
            replications: values.len() as u64,
        }
    }
}

/// Squared errors `(M̂_k - M_k)^2` over seeded replications.
pub fn squared_errors(
    dist: &DiscreteDistribution,
    est: &LinearEstimator,
    k: u64,
    replications: u64,
    seed: u64,
    exec: Execution,
) -> Result<Vec<f64>> {
    let n = est.n() as usize;
    par_map_range(exec, replications as usize, |r| {
        let sample = draw_sample(dist, n, derive_seed(seed, &[r as u64]))?;
        let e = est.evaluate(&sample)? - realized_mass(dist, &sample, k);
        Ok(e * e)
    })
    .into_iter()
    .collect()
}

pub fn monte_carlo_mse(
    dist: &DiscreteDistribution,
    est: &LinearEstimator,
    k: u64,
    replications: u64,
    seed: u64,
    exec: Execution,
) -> Result<MonteCarlo> {
    Ok(MonteCarlo::from_values(&squared_errors(dist, est, k, replications, seed, exec)?))
}

/// Exact bias, variance and MSE per estimator under both targets, plus
/// Monte Carlo MSE against the realized mass when requested.
///
/// Against `E[M_k]` the variance is `Var(M̂_k)` and the MSE `bias² + Var(M̂_k)`;
/// against `M_k` the MSE is the full decomposition with `Var(M_k)` and the
/// covariance term, and the variance is that MSE minus `bias²`.
pub fn run_mse_compare(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    let mut rows = Vec::new();
    for idx in 0..spec.distributions.len() {
        let (kind, dist) = spec.distribution(idx)?;
        for &n in &spec.sample_sizes {
            let ctx = MomentContext::new(dist.groups(), n);
            for &k in spec.target_k.iter().filter(|&&k| k <= n) {
                let mc_seed = derive_seed(spec.master_seed, &[5, idx as u64, n, k]);
                let key = spec.key(&kind, n, k, mc_seed);
                for &id in &spec.estimators {
                    let Ok(est) = closed_form(id, n, k) else { continue };
                    let b = ctx.estimator_mse(&est.betas_as::<LogWeight>(), k)?;
                    let name = id.to_string();
                    let bias2 = b.bias * b.bias;
                    rows.push(key.log_row(&name, Metric::Bias, b.bias));
                    for (metric, value) in [(Metric::Variance, b.variance), (Metric::Mse, bias2 + b.variance)] {
                        let mut row = key.log_row(&name, metric, value);
                        row.target = Target::Expected;
                        rows.push(row);
                    }
                    rows.push(key.log_row(&name, Metric::Variance, b.mse - bias2));
                    rows.push(key.log_row(&name, Metric::Mse, b.mse));
                    if spec.monte_carlo_replications > 0 {
                        let mc = monte_carlo_mse(&dist, &est, k, spec.monte_carlo_replications, mc_seed, spec.execution)?;
                        let mut row = key.row(&name, Metric::Mse, Method::MonteCarlo, mc.mean);
                        row.std_error = Some(mc.std_error);
                        row.replications = mc.replications;
                        rows.push(row);
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// One evolve-versus-GT replication.
#[derive(Clone, Debug)]
pub struct EvolveCase {
    pub distribution: String,
    pub n: u64,
    pub k: u64,
    pub replication: u64,
    pub ga_seed: u64,
    pub representation: Representation,
    pub initial_fitness: f64,
    pub best_fitness: f64,
    pub history: Vec<f64>,
    /// True MSE of the evolved estimator.
    pub evolved_mse: f64,
    /// True MSE of Good-Turing.
    pub good_turing_mse: f64,
}

/// Runs every replication of an evolve grid. Replications run concurrently;
/// each GA runs sequentially inside.
pub fn evolve_cases(spec: &ExperimentSpec) -> Result<Vec<EvolveCase>> {
    let mut out = Vec::new();
    for idx in 0..spec.distributions.len() {
        let (kind, dist) = spec.distribution(idx)?;
        for (n, k) in spec.grid() {
            if k >= n {
                continue;
            }
            let truth = MomentContext::<LogWeight>::new(dist.groups(), n);
            let gt = closed_form(EstimatorId::GoodTuring, n, k)?;
            let gt_mse = truth.estimator_mse(&gt.betas_as(), k)?.mse.to_f64();
            let cases = par_map_range(spec.execution, spec.replications as usize, |r| {
                let tags = [idx as u64, n, k, r as u64];
                let sample = draw_sample(&dist, n as usize, derive_seed(spec.master_seed, &[&[2], &tags[..]].concat()))?;
                let ga_seed = derive_seed(spec.master_seed, &[&[3], &tags[..]].concat());
                let config = GaConfig {
                    seed: ga_seed,
                    execution: Execution::Sequential,
                    ..spec.ga.clone()
                };
                let run = evolve(&sample, k as u32, &config)?;
                let est = instantiate(&run.best.representation);
                let evolved_mse = truth.estimator_mse(&est.betas_as(), k)?.mse.to_f64();
                Ok::<_, crate::Error>(EvolveCase {
                    distribution: kind.label(),
                    n,
                    k,
                    replication: r as u64,
                    ga_seed,
                    representation: run.best.representation,
                    initial_fitness: run.initial_fitness,
                    best_fitness: run.best.fitness,
                    history: run.history,
                    evolved_mse,
                    good_turing_mse: gt_mse,
                })
            });
            for c in cases {
                out.push(c?);
            }
        }
    }
    Ok(out)
}

/// Per `(distribution, n, k)`: mean true MSE of evolved and GT, `Â12` of
/// the evolved estimator winning (lower MSE), and the mean MSE ratio.
pub fn run_evolve_compare(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    let cases = evolve_cases(spec)?;
    Ok(summarize_evolve(spec, &cases))
}

pub fn summarize_evolve(spec: &ExperimentSpec, cases: &[EvolveCase]) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    let mut groups: Vec<(String, u64, u64)> = Vec::new();
    for c in cases {
        let g = (c.distribution.clone(), c.n, c.k);
        if !groups.contains(&g) {
            groups.push(g);
        }
    }
    for (label, n, k) in groups {
        let sel: Vec<&EvolveCase> = cases.iter().filter(|c| c.distribution == label && c.n == n && c.k == k).collect();
        let evo: Vec<f64> = sel.iter().map(|c| c.evolved_mse).collect();
        let gt: Vec<f64> = sel.iter().map(|c| c.good_turing_mse).collect();
        let ratios: Vec<f64> = sel.iter().map(|c| c.evolved_mse / c.good_turing_mse).collect();
        let key = RowKey {
            experiment: spec.id.clone(),
            distribution: label,
            support: spec.support,
            n,
            k,
            replications: sel.len() as u64,
            seed: spec.master_seed,
        };
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<f64>>();
        let a12 = vargha_delaney_a12(&neg(&evo), &neg(&gt)).unwrap_or(0.5);
        let e = MonteCarlo::from_values(&evo);
        let mut row = key.row("evolved", Metric::Mse, Method::Exact, e.mean);
        row.std_error = Some(e.std_error);
        rows.push(row);
        rows.push(key.row("GT", Metric::Mse, Method::Exact, MonteCarlo::from_values(&gt).mean));
        rows.push(key.row("evolved", Metric::A12, Method::Exact, a12));
        rows.push(key.row("evolved", Metric::MseRatio, Method::Exact, MonteCarlo::from_values(&ratios).mean));
    }
    rows
}

/// One adaptation replication.
#[derive(Clone, Debug)]
pub struct AdaptCase {
    pub distribution: String,
    pub n: u64,
    pub m: u64,
    pub replication: u64,
    pub representation: Representation,
    pub valid: bool,
    /// Mean squared error over the extensions of this replication.
    pub adapted_sq_error: f64,
    pub good_turing_sq_error: f64,
}

/// Evolve at `n`, adapt to `m = c n`, extend the sample to `m` and record
/// the squared errors of the adapted estimator and of GT at `m`.
pub fn adapt_cases(spec: &ExperimentSpec) -> Result<Vec<AdaptCase>> {
    let mut out = Vec::new();
    for idx in 0..spec.distributions.len() {
        let (kind, dist) = spec.distribution(idx)?;
        for &n in &spec.sample_sizes {
            let cases = par_map_range(spec.execution, spec.replications as usize, |r| {
                let tags = [idx as u64, n, 0, r as u64];
                let sample = draw_sample(&dist, n as usize, derive_seed(spec.master_seed, &[&[2], &tags[..]].concat()))?;
                let config = GaConfig {
                    seed: derive_seed(spec.master_seed, &[&[3], &tags[..]].concat()),
                    execution: Execution::Sequential,
                    ..spec.ga.clone()
                };
                let run = evolve(&sample, 0, &config)?;
                let mut cases = Vec::new();
                for &c in &spec.adapt_factors {
                    let m = c * n;
                    let adapted = adapt_to_larger_sample(&run.best.representation, m as u32, spec.adapt_fold)?;
                    let gt = closed_form(EstimatorId::GoodTuring, m, 0)?;
                    let (mut sq_adapted, mut sq_gt) = (NeumaierSum::new(), NeumaierSum::new());
                    for e in 0..spec.extension_replications {
                        let extra = derive_seed(spec.master_seed, &[4, idx as u64, n, c, r as u64, e]);
                        let big = extend_sample(&dist, &sample, (m - n) as usize, extra)?;
                        let truth = realized_mass(&dist, &big, 0);
                        sq_adapted.add((adapted.estimator.evaluate(&big)? - truth).powi(2));
                        sq_gt.add((gt.evaluate(&big)? - truth).powi(2));
                    }
                    let reps = spec.extension_replications as f64;
                    cases.push(AdaptCase {
                        distribution: kind.label(),
                        n,
                        m,
                        replication: r as u64,
                        valid: validate_representation(&adapted.representation).is_valid(),
                        representation: adapted.representation,
                        adapted_sq_error: sq_adapted.value() / reps,
                        good_turing_sq_error: sq_gt.value() / reps,
                    });
                }
                Ok::<_, crate::Error>(cases)
            });
            for c in cases {
                out.extend(c?);
            }
        }
    }
    Ok(out)
}

/// Monte Carlo MSE of adapted and GT estimators at each `m = c n`, their
/// ratio, and `Â12` of the adapted estimator's squared error being smaller.
pub fn run_adapt_compare(spec: &ExperimentSpec) -> Result<Vec<ResultRow>> {
    let cases = adapt_cases(spec)?;
    let mut rows = Vec::new();
    let mut groups: Vec<(String, u64, u64)> = Vec::new();
    for c in &cases {
        let g = (c.distribution.clone(), c.n, c.m);
        if !groups.contains(&g) {
            groups.push(g);
        }
    }
    for (label, n, m) in groups {
        let sel: Vec<&AdaptCase> = cases.iter().filter(|c| c.distribution == label && c.n == n && c.m == m).collect();
        let adapted: Vec<f64> = sel.iter().map(|c| c.adapted_sq_error).collect();
        let gt: Vec<f64> = sel.iter().map(|c| c.good_turing_sq_error).collect();
        let key = RowKey {
            experiment: spec.id.clone(),
            distribution: label,
            support: spec.support,
            n: m,
            k: 0,
            replications: sel.len() as u64,
            seed: spec.master_seed,
        };
        let a = MonteCarlo::from_values(&adapted);
        let g = MonteCarlo::from_values(&gt);
        let neg = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<f64>>();
        for (name, mc) in [("adapted", a), ("GT", g)] {
            let mut row = key.row(name, Metric::Mse, Method::MonteCarlo, mc.mean);
            row.std_error = Some(mc.std_error);
            rows.push(row);
        }
        let ratio = if g.mean > 0.0 { a.mean / g.mean } else { 1.0 };
        rows.push(key.row("adapted", Metric::MseRatio, Method::MonteCarlo, ratio));
        rows.push(key.row(
            "adapted",
            Metric::A12,
            Method::MonteCarlo,
            vargha_delaney_a12(&neg(&adapted), &neg(&gt)).unwrap_or(0.5),
        ));
    }
    Ok(rows)
}
