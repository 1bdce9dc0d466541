//! Cross-checks of the closed forms against exhaustive enumeration, in
//! exact rational arithmetic.

use std::collections::HashMap;
use std::io::Write;

use serde::Serialize;

use crate::distributions::{derive_seed, rng_from_seed, ClassGroups};
use crate::error::Result;
use crate::estimators::EstimatorId;
use crate::ga::mutate;
use crate::ground_truth::{expected_fk, expected_mass, remainder, theorem1_decomposition};
use crate::moments::MomentContext;
use crate::numerics::{rational, Rational, Weight};
use crate::oracle::{enumerate, exact_expectation, Granularity, OutcomeTable};
use crate::par::{par_map, Execution};
use crate::representations::{initial_representation, instantiate_as, Betas, TERM_CAP};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AuditCheck {
    pub check: String,
    pub distribution: String,
    pub n: u64,
    pub cases: u64,
    pub passed: bool,
    pub detail: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AuditReport {
    pub checks: Vec<AuditCheck>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AuditCheck> {
        self.checks.iter().filter(|c| !c.passed)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for c in &self.checks {
            w.serialize(c)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Rational distributions on two and three classes, symmetric and skewed.
pub fn audit_grid() -> Vec<Vec<Rational>> {
    let two = [(1, 2), (1, 3), (1, 4), (1, 5), (2, 5), (1, 10), (3, 7), (1, 6)];
    let three = [
        [(1, 3), (1, 3), (1, 3)],
        [(1, 2), (1, 3), (1, 6)],
        [(1, 2), (1, 4), (1, 4)],
        [(1, 5), (2, 5), (2, 5)],
        [(1, 6), (1, 6), (2, 3)],
        [(1, 10), (3, 10), (3, 5)],
        [(1, 7), (2, 7), (4, 7)],
        [(1, 8), (3, 8), (1, 2)],
        [(1, 12), (1, 4), (2, 3)],
        [(2, 9), (1, 3), (4, 9)],
        [(1, 20), (1, 20), (9, 10)],
        [(3, 10), (3, 10), (2, 5)],
    ];
    let mut out: Vec<Vec<Rational>> = two
        .iter()
        .map(|&(a, b)| vec![rational(a, b), rational(1, 1) - rational(a, b)])
        .collect();
    out.extend(three.iter().map(|row| row.iter().map(|&(a, b)| rational(a, b)).collect()));
    out
}

fn label(probs: &[Rational]) -> String {
    let parts: Vec<String> = probs.iter().map(|p| p.to_string()).collect();
    format!("({})", parts.join(","))
}

struct Tally {
    name: &'static str,
    cases: u64,
    first_failure: Option<String>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Tally {
            name,
            cases: 0,
            first_failure: None,
        }
    }

    fn check(&mut self, got: &Rational, want: &Rational, what: impl FnOnce() -> String) {
        self.cases += 1;
        if got != want && self.first_failure.is_none() {
            self.first_failure = Some(format!("{}: got {got}, oracle {want}", what()));
        }
    }

    fn finish(self, dist: &str, n: u64) -> AuditCheck {
        AuditCheck {
            check: self.name.to_string(),
            distribution: dist.to_string(),
            n,
            cases: self.cases,
            passed: self.first_failure.is_none(),
            detail: self.first_failure.unwrap_or_default(),
        }
    }
}

/// Oracle `P(N_x(j) = i ∧ N_y(m) = l)` for every index combination, from one
/// pass over the sequences.
fn joint_table(table: &OutcomeTable<Rational>, support: usize) -> HashMap<[u64; 6], Rational> {
    let n = table.n as usize;
    let mut out: HashMap<[u64; 6], Rational> = HashMap::new();
    for o in &table.outcomes {
        let seq = o.sequence.as_ref().expect("sequence table");
        // counts[x][j] = N_x(j)
        let mut counts = vec![vec![0u64; n + 1]; support];
        for (t, &c) in seq.iter().enumerate() {
            for (x, row) in counts.iter_mut().enumerate() {
                row[t + 1] = row[t] + u64::from(c as usize == x);
            }
        }
        for x in 0..support {
            for y in 0..support {
                for j in 1..=n {
                    for m in 1..=n {
                        let key = [x as u64, j as u64, counts[x][j], y as u64, m as u64, counts[y][m]];
                        *out.entry(key).or_insert_with(Rational::zero) += o.weight.clone();
                    }
                }
            }
        }
    }
    out
}

/// `Φ_i(j)` for every `1 ≤ i ≤ j ≤ n`, as a flat vector per outcome.
fn prefix_phis(table: &OutcomeTable<Rational>) -> Vec<Vec<u64>> {
    let n = table.n;
    table
        .outcomes
        .iter()
        .map(|o| {
            let mut v = Vec::new();
            for j in 1..=n {
                for i in 1..=j {
                    v.push(o.phi_prefix(i, j).expect("sequence table"));
                }
            }
            v
        })
        .collect()
}

fn oracle_mse(table: &OutcomeTable<Rational>, betas: &Betas<Rational>, k: u64) -> Result<Rational> {
    let mut terms = Vec::with_capacity(table.outcomes.len());
    for o in &table.outcomes {
        let e = o.estimate(betas)? - o.mass(&table.probabilities, k);
        terms.push(o.weight.clone() * e.clone() * e);
    }
    Ok(Rational::sum_all(terms))
}

/// All cross-checks for one distribution at one sample size.
///
/// `random_representations` valid representations are drawn by chains of
/// random mutations from `r0` and compared on MSE as well.
pub fn audit_distribution(probs: &[Rational], n: u64, seed: u64, random_representations: usize) -> Result<Vec<AuditCheck>> {
    let name = label(probs);
    let s = probs.len();
    let comps = enumerate(probs, n, Granularity::Compositions)?;
    let seqs = enumerate(probs, n, Granularity::Sequences)?;
    let exec = Execution::Sequential;
    let grouped = MomentContext::new(ClassGroups::from_values(probs), n);
    let ungrouped = MomentContext::new(ClassGroups::from_pairs(probs.iter().map(|p| (p.clone(), 1))), n);
    let groups = grouped.groups().clone();
    let mut out = Vec::new();

    let mut fk = Tally::new("expected_fk");
    let mut mass = Tally::new("expected_mass");
    let mut decomposition = Tally::new("decomposition");
    let mut var_mass = Tally::new("variance_mass");
    for k in 0..=n {
        let want = exact_expectation(&comps, exec, |o| Rational::from_u64(o.phi(k)));
        fk.check(&expected_fk(&groups, n, k), &want, || format!("k={k}"));
        let em = exact_expectation(&comps, exec, |o| o.mass(&comps.probabilities, k));
        mass.check(&expected_mass(&groups, n, k), &em, || format!("k={k}"));
        let d = theorem1_decomposition(&groups, n, k);
        decomposition.check(&d.total(), &em, || format!("total k={k}"));
        let b: Betas<Rational> = (1..=n - k)
            .map(|i| {
                let c = Rational::binomial(n, k) / Rational::binomial(n, k + i);
                ((k as u32 + i as u32, n as u32), if i % 2 == 1 { c } else { -c })
            })
            .collect();
        let eb = exact_expectation(&seqs, exec, |o| o.estimate(&b).expect("full-sample statistics"));
        decomposition.check(&(eb - em.clone()), &-remainder(&groups, n, k), || format!("bias of B, k={k}"));
        let em2 = exact_expectation(&comps, exec, |o| {
            let m = o.mass(&comps.probabilities, k);
            m.clone() * m
        });
        var_mass.check(&grouped.variance_mass(k), &(em2 - em.clone() * em), || format!("k={k}"));
    }
    out.extend([fk, mass, decomposition, var_mass].map(|t| t.finish(&name, n)));

    let mut var_phi = Tally::new("variance_phi");
    for i in 1..=n {
        let e = exact_expectation(&comps, exec, |o| Rational::from_u64(o.phi(i)));
        let e2 = exact_expectation(&comps, exec, |o| Rational::from_u64(o.phi(i) * o.phi(i)));
        var_phi.check(&grouped.variance_phi(i, n), &(e2 - e.clone() * e), || format!("i={i}"));
    }
    out.push(var_phi.finish(&name, n));

    let mut joint = Tally::new("joint_indicator");
    let table = joint_table(&seqs, s);
    for x in 0..s as u64 {
        for y in 0..s as u64 {
            for j in 1..=n {
                for m in 1..=n {
                    for i in 0..=j {
                        for l in 0..=m {
                            let want = table.get(&[x, j, i, y, m, l]).cloned().unwrap_or_else(Rational::zero);
                            let got = ungrouped.joint_indicator_expectation(x, j, i, y, m, l)?;
                            joint.check(&got, &want, || format!("x={x} j={j} i={i} y={y} m={m} l={l}"));
                        }
                    }
                }
            }
        }
    }
    out.push(joint.finish(&name, n));

    let mut cov = Tally::new("covariance");
    let phis = prefix_phis(&seqs);
    let mut index = Vec::new();
    for j in 1..=n {
        for i in 1..=j {
            index.push((i, j));
        }
    }
    let means: Vec<Rational> = (0..index.len())
        .map(|a| Rational::sum_all(seqs.outcomes.iter().zip(&phis).map(|(o, p)| o.weight.clone() * Rational::from_u64(p[a])).collect()))
        .collect();
    for a in 0..index.len() {
        for b in a..index.len() {
            let e = Rational::sum_all(
                seqs.outcomes
                    .iter()
                    .zip(&phis)
                    .filter(|(_, p)| p[a] * p[b] != 0)
                    .map(|(o, p)| o.weight.clone() * Rational::from_u64(p[a] * p[b]))
                    .collect(),
            );
            let want = e - means[a].clone() * means[b].clone();
            let ((i, j), (l, m)) = (index[a], index[b]);
            cov.check(&grouped.covariance(i, j, l, m), &want, || format!("({i},{j}) ({l},{m})"));
        }
    }
    out.push(cov.finish(&name, n));

    let mut mse = Tally::new("estimator_mse");
    for k in 0..=n {
        for id in [EstimatorId::GoodTuring, EstimatorId::MinimalBias] {
            let Ok(est) = super::closed_form(id, n, k) else { continue };
            let betas = est.betas_as::<Rational>();
            let want = oracle_mse(&seqs, &betas, k)?;
            mse.check(&grouped.estimator_mse(&betas, k)?.mse, &want, || format!("{id} k={k}"));
        }
    }
    let mut rng = rng_from_seed(derive_seed(seed, &[n, s as u64]));
    for r in 0..random_representations {
        let k = r as u64 % n;
        let mut rep = initial_representation(n as u32, k as u32);
        for _ in 0..=(r % 6) {
            rep = mutate(&rep, &mut rng, TERM_CAP, 16);
        }
        let betas = instantiate_as::<Rational>(&rep);
        let want = oracle_mse(&seqs, &betas, k)?;
        mse.check(&grouped.estimator_mse(&betas, k)?.mse, &want, || format!("random #{r} k={k}"));
    }
    out.push(mse.finish(&name, n));
    Ok(out)
}

/// Runs [`audit_distribution`] over [`audit_grid`] at each size.
pub fn run_audit(sizes: &[u64], seed: u64, exec: Execution) -> Result<AuditReport> {
    let mut jobs = Vec::new();
    for probs in audit_grid() {
        for &n in sizes {
            jobs.push((probs.clone(), n));
        }
    }
    let results = par_map(exec, &jobs, |(probs, n)| audit_distribution(probs, *n, seed, 2));
    let mut report = AuditReport::default();
    for r in results {
        report.checks.extend(r?);
    }
    Ok(report)
}
