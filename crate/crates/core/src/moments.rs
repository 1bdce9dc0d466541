//! Exact second moments of `Φ_i(j)` and `M_k` under a known distribution,
//! and the MSE of any linear estimator built from them.
//!
//! All sums run over probability groups rather than classes. Covariances are
//! cached lazily per context, so a search that evaluates many estimators on
//! the same sample only pays for each `(i, j, l, m)` pair once.

use std::sync::OnceLock;

use dashmap::DashMap;

use crate::distributions::{ClassGroup, ClassGroups, SampleProfile};
use crate::error::{domain, Result};
use crate::estimators::hybrid_phat;
use crate::ground_truth::{expected_fk, expected_mass};
use crate::numerics::{LogWeight, Weight};
use crate::representations::{Betas, LinearEstimator};

/// `P(N_x(j) = i)` for one class of the group.
fn marginal<T: Weight>(g: &ClassGroup<T>, i: u64, j: u64) -> T {
    if i > j {
        return T::zero();
    }
    T::binomial(j, i) * g.p.powi(i) * g.q.powi(j - i)
}

/// `P(N_x(j) = i ∧ N_x(m) = l)` for a single class.
fn joint_same<T: Weight>(g: &ClassGroup<T>, i: u64, j: u64, l: u64, m: u64) -> T {
    if m > j {
        return joint_same(g, l, m, i, j);
    }
    if i > j || l > m || l > i || i - l > j - m {
        return T::zero();
    }
    marginal(g, l, m) * marginal(g, i - l, j - m)
}

/// `P(N_x(j) = i ∧ N_y(m) = l)` for two distinct classes.
fn joint_diff<T: Weight>(gx: &ClassGroup<T>, i: u64, j: u64, gy: &ClassGroup<T>, l: u64, m: u64) -> T {
    if m > j {
        return joint_diff(gy, l, m, gx, i, j);
    }
    if i > j || l > m {
        return T::zero();
    }
    let rest = (gx.q.clone() - gy.p.clone()).clamp_nonneg();
    let tail = j - m;
    let lo = i.saturating_sub(tail);
    let hi = i.min(m - l);
    if lo > hi {
        return T::zero();
    }
    // condition on i' occurrences of x among the first m draws
    let terms = (lo..=hi)
        .map(|ip| {
            T::multinomial(m, ip, l)
                * gx.p.powi(ip)
                * gy.p.powi(l)
                * rest.powi(m - ip - l)
                * marginal(gx, i - ip, tail)
        })
        .collect();
    T::sum_all(terms)
}

/// Tables at most this large are allocated densely up front.
const DENSE_LIMIT: usize = 1 << 20;

/// Lazily filled table: dense slots when small, a concurrent map otherwise.
#[derive(Debug)]
enum Memo<T> {
    Dense(Vec<OnceLock<T>>),
    Sparse(DashMap<usize, T>),
}

impl<T: Clone> Memo<T> {
    fn new(size: usize) -> Self {
        if size <= DENSE_LIMIT {
            Memo::Dense((0..size).map(|_| OnceLock::new()).collect())
        } else {
            Memo::Sparse(DashMap::new())
        }
    }

    fn get_or(&self, key: usize, compute: impl FnOnce() -> T) -> T {
        match self {
            Memo::Dense(slots) => slots[key].get_or_init(compute).clone(),
            Memo::Sparse(map) => {
                if let Some(v) = map.get(&key) {
                    return v.clone();
                }
                let v = compute();
                map.insert(key, v.clone());
                v
            }
        }
    }

    fn filled(&self) -> usize {
        match self {
            Memo::Dense(slots) => slots.iter().filter(|s| s.get().is_some()).count(),
            Memo::Sparse(map) => map.len(),
        }
    }
}

/// Position of `(i, j)`, `i ≤ j`, in the triangle of statistics.
fn slot(i: u64, j: u64) -> usize {
    (j * (j + 1) / 2 + i) as usize
}

/// Shared state for moment computations at sample size `n`.
///
/// Safe to share between threads; concurrent callers see identical values
/// whatever order the caches fill in.
#[derive(Debug)]
pub struct MomentContext<T: Weight> {
    groups: ClassGroups<T>,
    n: u64,
    /// Number of `(i, j)` slots, `0 ≤ i ≤ j ≤ n`.
    slots: usize,
    expectations: Memo<T>,
    covariances: Memo<T>,
    mass_covariances: Memo<T>,
    mass_variances: Memo<T>,
}

impl<T: Weight> MomentContext<T> {
    pub fn new(groups: ClassGroups<T>, n: u64) -> Self {
        let slots = slot(0, n + 1);
        let width = n as usize + 1;
        MomentContext {
            groups,
            n,
            slots,
            expectations: Memo::new(slots),
            covariances: Memo::new(slots.saturating_mul(slots)),
            mass_covariances: Memo::new(slots.saturating_mul(width)),
            mass_variances: Memo::new(width),
        }
    }

    pub fn groups(&self) -> &ClassGroups<T> {
        &self.groups
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    pub fn cached_covariances(&self) -> usize {
        self.covariances.filled()
    }

    /// `f_i(j) = E[Φ_i(j)]`, memoized.
    pub fn expected_phi(&self, i: u64, j: u64) -> T {
        if i > j || j > self.n {
            return expected_fk(&self.groups, j, i);
        }
        self.expectations.get_or(slot(i, j), || expected_fk(&self.groups, j, i))
    }

    /// Group holding class `x`, with classes numbered group by group.
    pub fn class_group(&self, x: u64) -> Option<usize> {
        let mut seen = 0;
        for (idx, g) in self.groups.iter().enumerate() {
            seen += g.multiplicity;
            if x < seen {
                return Some(idx);
            }
        }
        None
    }

    /// `P(N_x(j) = i ∧ N_y(m) = l)` for classes `x` and `y`.
    pub fn joint_indicator_expectation(&self, x: u64, j: u64, i: u64, y: u64, m: u64, l: u64) -> Result<T> {
        let (Some(a), Some(b)) = (self.class_group(x), self.class_group(y)) else {
            return domain(format!("class index out of range ({x}, {y})"));
        };
        let groups: Vec<&ClassGroup<T>> = self.groups.iter().collect();
        Ok(if x == y {
            joint_same(groups[a], i, j, l, m)
        } else {
            joint_diff(groups[a], i, j, groups[b], l, m)
        })
    }

    /// `Var(Φ_i(j))`: `f_i(j) - f_i(j)^2` plus the cross-class pair term when `2i ≤ j`.
    pub fn variance_phi(&self, i: u64, j: u64) -> T {
        let mut terms = Vec::new();
        let groups: Vec<&ClassGroup<T>> = self.groups.iter().collect();
        for a in &groups {
            let pa = marginal(a, i, j);
            terms.push(T::from_u64(a.multiplicity) * (pa.clone() - pa.clone() * pa));
        }
        for a in &groups {
            for b in &groups {
                let pairs = pair_count(a, b, std::ptr::eq(*a, *b));
                if pairs == 0 {
                    continue;
                }
                let both = if 2 * i <= j {
                    let rest = (a.q.clone() - b.p.clone()).clamp_nonneg();
                    T::multinomial(j, i, i) * a.p.powi(i) * b.p.powi(i) * rest.powi(j - 2 * i)
                } else {
                    T::zero()
                };
                terms.push(T::from_u64(pairs) * (both - marginal(a, i, j) * marginal(b, i, j)));
            }
        }
        T::sum_all(terms)
    }

    /// `Cov(Φ_i(j), Φ_l(m))`.
    pub fn covariance(&self, i: u64, j: u64, l: u64, m: u64) -> T {
        let (i, j, l, m) = if (i, j) <= (l, m) { (i, j, l, m) } else { (l, m, i, j) };
        if i > j || l > m || m > self.n {
            return T::zero();
        }
        let key = slot(i, j) * self.slots + slot(l, m);
        self.covariances.get_or(key, || self.covariance_uncached(i, j, l, m))
    }

    fn covariance_uncached(&self, i: u64, j: u64, l: u64, m: u64) -> T {
        let groups: Vec<&ClassGroup<T>> = self.groups.iter().collect();
        let mut terms = Vec::new();
        for a in &groups {
            let same = joint_same(a, i, j, l, m) - marginal(a, i, j) * marginal(a, l, m);
            terms.push(T::from_u64(a.multiplicity) * same);
        }
        for a in &groups {
            for b in &groups {
                let pairs = pair_count(a, b, std::ptr::eq(*a, *b));
                if pairs == 0 {
                    continue;
                }
                let diff = joint_diff(a, i, j, b, l, m) - marginal(a, i, j) * marginal(b, l, m);
                terms.push(T::from_u64(pairs) * diff);
            }
        }
        T::sum_all(terms)
    }

    /// `Var(M_k)`.
    pub fn variance_mass(&self, k: u64) -> T {
        if k > self.n {
            return T::zero();
        }
        self.mass_variances.get_or(k as usize, || self.variance_mass_uncached(k))
    }

    fn variance_mass_uncached(&self, k: u64) -> T {
        let n = self.n;
        let groups: Vec<&ClassGroup<T>> = self.groups.iter().collect();
        let mut terms = Vec::new();
        for a in &groups {
            let pa = marginal(a, k, n);
            terms.push(
                T::from_u64(a.multiplicity) * a.p.powi(2) * (pa.clone() - pa.clone() * pa),
            );
        }
        for a in &groups {
            for b in &groups {
                let pairs = pair_count(a, b, std::ptr::eq(*a, *b));
                if pairs == 0 {
                    continue;
                }
                let diff = joint_diff(a, k, n, b, k, n) - marginal(a, k, n) * marginal(b, k, n);
                terms.push(T::from_u64(pairs) * a.p.clone() * b.p.clone() * diff);
            }
        }
        T::sum_all(terms)
    }

    /// `Cov(Φ_i(j), M_k)` with `M_k` taken at the full size `n`.
    pub fn cov_phi_mass(&self, i: u64, j: u64, k: u64) -> T {
        if i > j || j > self.n || k > self.n {
            return T::zero();
        }
        let key = slot(i, j) * (self.n as usize + 1) + k as usize;
        self.mass_covariances.get_or(key, || self.cov_phi_mass_uncached(i, j, k))
    }

    fn cov_phi_mass_uncached(&self, i: u64, j: u64, k: u64) -> T {
        let n = self.n;
        let groups: Vec<&ClassGroup<T>> = self.groups.iter().collect();
        let mut terms = Vec::new();
        for a in &groups {
            let same = joint_same(a, i, j, k, n) - marginal(a, i, j) * marginal(a, k, n);
            terms.push(T::from_u64(a.multiplicity) * a.p.clone() * same);
        }
        for a in &groups {
            for b in &groups {
                let pairs = pair_count(a, b, std::ptr::eq(*a, *b));
                if pairs == 0 {
                    continue;
                }
                let diff = joint_diff(a, i, j, b, k, n) - marginal(a, i, j) * marginal(b, k, n);
                terms.push(T::from_u64(pairs) * b.p.clone() * diff);
            }
        }
        T::sum_all(terms)
    }

    /// MSE of `Σ β_{i,j} Φ_i(j)` as an estimator of `M_k`.
    pub fn estimator_mse(&self, betas: &Betas<T>, k: u64) -> Result<MseBreakdown<T>> {
        if k > self.n {
            return domain(format!("k = {k} exceeds n = {}", self.n));
        }
        for &((i, j), _) in betas {
            if j == 0 || u64::from(j) > self.n || i > j {
                return domain(format!("term ({i}, {j}) is outside the sample of size {}", self.n));
            }
        }
        let expected: Vec<T> = betas
            .iter()
            .map(|((i, j), b)| b.clone() * self.expected_phi(u64::from(*i), u64::from(*j)))
            .collect();
        let bias = T::sum_all(expected) - expected_mass(&self.groups, self.n, k);

        let mut var_terms = Vec::new();
        for (t, ((i, j), bt)) in betas.iter().enumerate() {
            for ((l, m), bu) in &betas[t..] {
                let c = self.covariance(u64::from(*i), u64::from(*j), u64::from(*l), u64::from(*m));
                let w = bt.clone() * bu.clone() * c;
                var_terms.push(if (i, j) == (l, m) { w } else { T::from_u64(2) * w });
            }
        }
        let variance = T::sum_all(var_terms);
        let covariance = T::sum_all(
            betas
                .iter()
                .map(|((i, j), b)| b.clone() * self.cov_phi_mass(u64::from(*i), u64::from(*j), k))
                .collect(),
        );
        let var_mass = self.variance_mass(k);
        let mse = T::sum_all(vec![
            bias.clone() * bias.clone(),
            variance.clone(),
            var_mass.clone(),
            -(T::from_u64(2) * covariance.clone()),
        ]);
        Ok(MseBreakdown {
            mse,
            bias,
            variance,
            covariance,
            var_mass,
        })
    }

    /// `Var(M̂_k^B) = Σ c_i^2 Var(Φ_{k+i}) + Σ_{i≠j} (-1)^(i+j) c_i c_j Cov(Φ_{k+i}, Φ_{k+j})`
    /// with `c_i = C(n,k) / C(n,k+i)`.
    pub fn minimal_bias_variance(&self, k: u64) -> T {
        let n = self.n;
        if k >= n {
            return T::zero();
        }
        let top = T::binomial(n, k);
        let c: Vec<T> = (1..=n - k).map(|i| top.clone() / T::binomial(n, k + i)).collect();
        let mut terms = Vec::new();
        for (a, ca) in c.iter().enumerate() {
            let ia = k + 1 + a as u64;
            terms.push(ca.clone() * ca.clone() * self.variance_phi(ia, n));
            for (b, cb) in c.iter().enumerate().skip(a + 1) {
                let ib = k + 1 + b as u64;
                let w = T::from_u64(2) * ca.clone() * cb.clone() * self.covariance(ia, n, ib, n);
                terms.push(if (a + b) % 2 == 1 { -w } else { w });
            }
        }
        T::sum_all(terms)
    }
}

/// Number of ordered pairs of distinct classes with `x` in `a` and `y` in `b`.
fn pair_count<T>(a: &ClassGroup<T>, b: &ClassGroup<T>, same_group: bool) -> u64 {
    if same_group {
        a.multiplicity * a.multiplicity.saturating_sub(1)
    } else {
        a.multiplicity * b.multiplicity
    }
}

/// The terms of `MSE = bias^2 + variance + var_mass - 2 covariance`.
#[derive(Clone, Debug, PartialEq)]
pub struct MseBreakdown<T> {
    pub mse: T,
    pub bias: T,
    /// Variance of the estimator.
    pub variance: T,
    /// Covariance of the estimator with `M_k`.
    pub covariance: T,
    pub var_mass: T,
}

/// Upper bound `c1 n^(2k+1) c2^(-n)` on `Var(M̂_k^B)`, where
/// `c1 = S (e/k)^(2k)` (just `S` for `k = 0`) and
/// `c2 = min(1/(1-p_min), (1-p_max)/(p_max (1-p_min)))`.
pub fn minimal_bias_variance_bound(support: u64, p_min: f64, p_max: f64, n: u64, k: u64) -> LogWeight {
    let kf = k as f64;
    let ln_c1 = (support as f64).ln() + if k == 0 { 0.0 } else { 2.0 * kf * (1.0 - kf.ln()) };
    let ln_c2 = (-(-p_min).ln_1p()).min((-p_max).ln_1p() - p_max.ln() - (-p_min).ln_1p());
    LogWeight::from_log(ln_c1 + (2.0 * kf + 1.0) * (n as f64).ln() - n as f64 * ln_c2, 1)
}

/// Context over the hybrid estimate `p̂` of a sample.
pub fn estimated_context<T: Weight>(profile: &SampleProfile) -> Result<MomentContext<T>> {
    let phat = hybrid_phat(profile)?;
    Ok(MomentContext::new(phat.groups(profile), profile.n()))
}

/// MSE of `est` for `M_k`, with the unknown distribution replaced by `p̂`.
pub fn estimated_mse(profile: &SampleProfile, est: &LinearEstimator, k: u64) -> Result<f64> {
    let ctx = estimated_context::<LogWeight>(profile)?;
    let mse = ctx.estimator_mse(&est.betas_as::<LogWeight>(), k)?.mse;
    Ok(mse.to_f64().max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{make_distribution, DistributionKind};
    use crate::numerics::{rational, Rational};
    use crate::oracle::{enumerate, Granularity};

    fn uniform2() -> MomentContext<Rational> {
        MomentContext::new(ClassGroups::from_values(&[rational(1, 2), rational(1, 2)]), 2)
    }

    #[test]
    fn joint_examples() {
        let ctx = uniform2();
        assert_eq!(ctx.joint_indicator_expectation(0, 2, 1, 0, 2, 1).unwrap(), rational(1, 2));
        assert_eq!(ctx.joint_indicator_expectation(0, 2, 2, 1, 2, 1).unwrap(), rational(0, 1));
        assert_eq!(ctx.joint_indicator_expectation(0, 2, 2, 0, 1, 1).unwrap(), rational(1, 4));
        assert_eq!(ctx.joint_indicator_expectation(0, 2, 1, 0, 2, 2).unwrap(), rational(0, 1));
        assert!(ctx.joint_indicator_expectation(0, 2, 1, 2, 2, 1).is_err());
    }

    #[test]
    fn variance_examples() {
        let ctx = uniform2();
        assert_eq!(ctx.variance_phi(1, 2), rational(1, 1));
        assert_eq!(ctx.variance_phi(2, 2), rational(1, 4));
        assert_eq!(ctx.variance_mass(0), rational(1, 16));
        assert_eq!(ctx.covariance(1, 2, 1, 2), ctx.variance_phi(1, 2));
    }

    #[test]
    fn good_turing_mse_example() {
        let ctx = uniform2();
        let gt = LinearEstimator::good_turing(2, 0).unwrap();
        let b = ctx.estimator_mse(&gt.betas_as::<Rational>(), 0).unwrap();
        assert_eq!(b.mse, rational(5, 8));
        let zero = ctx.estimator_mse(&Vec::new(), 0).unwrap();
        // E[M_0^2] = 1/2 * 1/4
        assert_eq!(zero.mse, rational(1, 8));
    }

    #[test]
    fn marginalization_and_symmetry() {
        let groups = ClassGroups::from_values(&[rational(1, 2), rational(1, 3), rational(1, 6)]);
        let ctx = MomentContext::new(groups, 6);
        for (x, y) in [(0, 0), (0, 1), (2, 1)] {
            for j in 1..=6 {
                for m in 1..=j {
                    for i in 0..=j {
                        let total = Rational::sum_all(
                            (0..=m).map(|l| ctx.joint_indicator_expectation(x, j, i, y, m, l).unwrap()).collect(),
                        );
                        let g: Vec<_> = ctx.groups().iter().collect();
                        assert_eq!(total, marginal(g[x as usize], i, j));
                        if j == m {
                            for l in 0..=m {
                                assert_eq!(
                                    ctx.joint_indicator_expectation(x, j, i, y, m, l).unwrap(),
                                    ctx.joint_indicator_expectation(y, m, l, x, j, i).unwrap()
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn joint_matches_sequences() {
        let p = vec![rational(1, 2), rational(1, 3), rational(1, 6)];
        let ctx = MomentContext::new(ClassGroups::from_values(&p), 5);
        let table = enumerate(&p, 5, Granularity::Sequences).unwrap();
        for (x, y) in [(0u64, 0u64), (0, 1), (1, 2), (2, 0)] {
            for j in 1..=5 {
                for m in 1..=5 {
                    for i in 0..=j {
                        for l in 0..=m {
                            let want = Rational::sum_all(
                                table
                                    .outcomes
                                    .iter()
                                    .filter(|o| {
                                        o.count_at(x as usize, j).unwrap() == i
                                            && o.count_at(y as usize, m).unwrap() == l
                                    })
                                    .map(|o| o.weight.clone())
                                    .collect(),
                            );
                            let got = ctx.joint_indicator_expectation(x, j, i, y, m, l).unwrap();
                            assert_eq!(got, want, "x={x} j={j} i={i} y={y} m={m} l={l}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn grouping_changes_nothing() {
        let dist = make_distribution(&DistributionKind::Uniform, 100).unwrap();
        let grouped = MomentContext::new(dist.groups(), 30);
        assert_eq!(grouped.groups().len(), 1);
        let split: ClassGroups<LogWeight> =
            ClassGroups::from_pairs([(LogWeight::from_f64(0.01), 40), (LogWeight::from_f64(0.01), 60)]);
        let split = MomentContext::new(split, 30);
        for (i, j, l, m) in [(1, 30, 1, 30), (2, 20, 1, 30), (0, 30, 3, 10)] {
            let a = grouped.covariance(i, j, l, m);
            let b = split.covariance(i, j, l, m);
            assert!(a.rel_diff(&b) < 1e-9, "{a} vs {b}");
        }
        assert!(grouped.variance_mass(0).rel_diff(&split.variance_mass(0)) < 1e-9);
    }

    #[test]
    fn recomposition_and_sign() {
        let dist = make_distribution(&DistributionKind::Zipf { s: 1.0 }, 20).unwrap();
        let ctx = MomentContext::new(dist.groups(), 20);
        for k in [0u64, 1, 3] {
            let est = LinearEstimator::minimal_bias(20, k as u32);
            let b = ctx.estimator_mse(&est.betas_as::<LogWeight>(), k).unwrap();
            let re = b.bias.to_f64().powi(2) + b.variance.to_f64() + b.var_mass.to_f64()
                - 2.0 * b.covariance.to_f64();
            assert!(((re - b.mse.to_f64()) / b.mse.to_f64()).abs() < 1e-12);
            assert!(b.mse.to_f64() >= b.bias.to_f64().powi(2));
            assert!(ctx.variance_mass(k).to_f64() >= 0.0);
            assert!(ctx.variance_phi(k + 1, 20).to_f64() >= 0.0);
        }
    }

    #[test]
    fn minimal_bias_variance_is_the_estimator_variance() {
        let dist = make_distribution(&DistributionKind::HalfAndHalf, 10).unwrap();
        let ctx = MomentContext::new(dist.groups(), 25);
        for k in [0u64, 2] {
            let est = LinearEstimator::minimal_bias(25, k as u32);
            let v = ctx.estimator_mse(&est.betas_as::<LogWeight>(), k).unwrap().variance;
            assert!(v.rel_diff(&ctx.minimal_bias_variance(k)) < 1e-9);
        }
    }

    #[test]
    fn variance_decays_under_bound() {
        let mut last = f64::INFINITY;
        for n in 10..=40 {
            let ctx = MomentContext::new(make_distribution(&DistributionKind::Uniform, 10).unwrap().groups(), n);
            let v = ctx.minimal_bias_variance(0).to_f64();
            let bound = minimal_bias_variance_bound(10, 0.1, 0.1, n, 0).to_f64();
            assert!(v < last && v <= bound, "n={n}: {v} (bound {bound})");
            last = v;
        }
    }

    #[test]
    fn estimated_mse_tracks_truth() {
        let dist = make_distribution(&DistributionKind::Uniform, 4).unwrap();
        // perfect coverage: every class seen exactly n/S times
        let sample = SampleProfile::from_sequence((0..400).map(|t| t % 4).collect());
        let gt = LinearEstimator::good_turing(400, 0).unwrap();
        let est = estimated_mse(&sample, &gt, 0).unwrap();
        let truth = MomentContext::new(dist.groups(), 400)
            .estimator_mse(&gt.betas_as::<LogWeight>(), 0)
            .unwrap()
            .mse
            .to_f64();
        assert!(est >= 0.0);
        assert!(est <= 2.0 * truth && est >= truth / 2.0, "{est} vs {truth}");
    }

    #[test]
    fn estimated_context_without_unseen_block() {
        // every class seen twice: no singletons, so no unseen classes
        let p = SampleProfile::from_sequence(vec![0, 0, 1, 1, 2, 2]);
        let ctx = estimated_context::<LogWeight>(&p).unwrap();
        assert_eq!(ctx.groups().class_count(), 3);
        let gt = LinearEstimator::good_turing(6, 0).unwrap();
        assert!(estimated_mse(&p, &gt, 0).unwrap() >= 0.0);
    }
}
