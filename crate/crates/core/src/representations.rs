//! Coefficient tables over `g_i(j)` that sum to `E[M_k]`, the rewrites that
//! preserve that sum, and their instantiation as linear estimators.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::hash::{Hash, Hasher};
use std::path::Path;

use crate::distributions::SampleProfile;
use crate::error::{domain, Error, Result};
use crate::numerics::{binomial_u128, LogWeight, NeumaierSum, Weight};

/// Index `(i, j)` of `g_i(j)` or `Φ_i(j)`.
pub type Term = (u32, u32);

/// Coefficients dropped after a rewrite when their magnitude falls below this.
pub const MERGE_EPSILON: f64 = 1e-14;

/// Largest term count of a search individual.
pub const TERM_CAP: usize = 20;

/// `C(n, k)` as the nearest `f64`: exact while the integer fits.
fn binomial_f64(n: u64, k: u64) -> f64 {
    match binomial_u128(n, k) {
        Some(c) => c as f64,
        None => <LogWeight as Weight>::binomial(n, k).to_f64(),
    }
}

/// `E[M_k] = Σ α_{i,j} g_i(j)` over `1 ≤ i ≤ j ≤ n+1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Representation {
    n: u32,
    k: u32,
    coeffs: BTreeMap<Term, f64>,
}

impl Representation {
    /// Builds a table, dropping zero coefficients. Indices are checked.
    pub fn new(n: u32, k: u32, coeffs: impl IntoIterator<Item = (Term, f64)>) -> Result<Self> {
        if k > n {
            return domain(format!("k = {k} exceeds n = {n}"));
        }
        let mut map = BTreeMap::new();
        for ((i, j), a) in coeffs {
            if !(1 <= i && i <= j && j <= n + 1) {
                return domain(format!("term ({i}, {j}) outside 1 <= i <= j <= {}", n + 1));
            }
            if !a.is_finite() {
                return domain(format!("non-finite coefficient at ({i}, {j})"));
            }
            *map.entry((i, j)).or_insert(0.0) += a;
        }
        map.retain(|_, a| *a != 0.0);
        Ok(Representation { n, k, coeffs: map })
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn coeffs(&self) -> &BTreeMap<Term, f64> {
        &self.coeffs
    }

    pub fn get(&self, i: u32, j: u32) -> f64 {
        self.coeffs.get(&(i, j)).copied().unwrap_or(0.0)
    }

    pub fn term_count(&self) -> usize {
        self.coeffs.len()
    }

    /// Copy with one coefficient replaced (zero removes the term).
    pub fn with_coefficient(&self, term: Term, value: f64) -> Result<Self> {
        let mut coeffs = self.coeffs.clone();
        coeffs.insert(term, value);
        Representation::new(self.n, self.k, coeffs)
    }

    /// `a·self + b·other` coefficient-wise; both must share `n` and `k`.
    pub fn linear_combination(&self, a: f64, other: &Representation, b: f64) -> Result<Self> {
        if (self.n, self.k) != (other.n, other.k) {
            return domain("representations differ in n or k");
        }
        let terms = self
            .coeffs
            .iter()
            .map(|(&t, &c)| (t, a * c))
            .chain(other.coeffs.iter().map(|(&t, &c)| (t, b * c)));
        Representation::new(self.n, self.k, terms)
    }

    /// Text form: a header `n k`, then one `i j coefficient` line per term.
    pub fn to_text(&self) -> String {
        let mut s = format!("{} {}\n", self.n, self.k);
        for (&(i, j), &a) in &self.coeffs {
            writeln!(s, "{i} {j} {a:.16e}").expect("write to string");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines.next().ok_or_else(|| Error::Parse("empty representation".into()))?;
        let mut h = header.split_whitespace();
        let parse_u32 = |s: Option<&str>, what: &str| -> Result<u32> {
            s.ok_or_else(|| Error::Parse(format!("missing {what}")))?
                .parse()
                .map_err(|e| Error::Parse(format!("bad {what}: {e}")))
        };
        let n = parse_u32(h.next(), "n")?;
        let k = parse_u32(h.next(), "k")?;
        let mut terms = Vec::new();
        for line in lines {
            let mut f = line.split_whitespace();
            let i = parse_u32(f.next(), "i")?;
            let j = parse_u32(f.next(), "j")?;
            let a: f64 = f
                .next()
                .ok_or_else(|| Error::Parse("missing coefficient".into()))?
                .parse()
                .map_err(|e| Error::Parse(format!("bad coefficient: {e}")))?;
            if f.next().is_some() {
                return Err(Error::Parse(format!("trailing fields in `{line}`")));
            }
            terms.push(((i, j), a));
        }
        Representation::new(n, k, terms)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

/// `α_{k+1,n+1} = C(n,k)`.
pub fn initial_representation(n: u32, k: u32) -> Representation {
    assert!(k <= n, "k = {k} exceeds n = {n}");
    let c = binomial_f64(u64::from(n), u64::from(k));
    Representation::new(n, k, [((k + 1, n + 1), c)]).expect("valid indices")
}

/// The table whose instantiation is the minimal-bias estimator:
/// `α_{k+i,n} = (-1)^(i-1) C(n,k)` for `i = 1..=n-k`, plus the remainder
/// term `α_{n+1,n+1} = (-1)^(n-k) C(n,k)`, which has no plug-in statistic.
pub fn minimal_bias_representation(n: u32, k: u32) -> Representation {
    assert!(k <= n, "k = {k} exceeds n = {n}");
    let c = binomial_f64(u64::from(n), u64::from(k));
    let sign = |e: u32| if e.is_multiple_of(2) { 1.0 } else { -1.0 };
    let terms = (1..=n - k)
        .map(|i| ((k + i, n), sign(i - 1) * c))
        .chain(std::iter::once(((n + 1, n + 1), sign(n - k) * c)));
    Representation::new(n, k, terms).expect("valid indices")
}

/// Rewrites of one `g_i(j)` that preserve its value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Rewrite {
    /// `g_i(j) = g_i(j+1) + g_{i+1}(j+1)`.
    Down,
    /// `g_i(j) = g_i(j-1) - g_{i+1}(j)`.
    UpMinus,
    /// `g_i(j) = g_{i-1}(j-1) - g_{i-1}(j)`.
    LeftUp,
}

impl Rewrite {
    pub const ALL: [Rewrite; 3] = [Rewrite::Down, Rewrite::UpMinus, Rewrite::LeftUp];

    /// Replacement terms for one unit of `g_i(j)`, or `None` when out of domain.
    pub fn expand(self, (i, j): Term, n: u32) -> Option<[(Term, f64); 2]> {
        let out = match self {
            Rewrite::Down if j < n + 1 => [((i, j + 1), 1.0), ((i + 1, j + 1), 1.0)],
            Rewrite::UpMinus if j > i => [((i, j - 1), 1.0), ((i + 1, j), -1.0)],
            Rewrite::LeftUp if i >= 2 => [((i - 1, j - 1), 1.0), ((i - 1, j), -1.0)],
            _ => return None,
        };
        // g_{n+1}(n+1) has no plug-in statistic
        if out.iter().any(|&(t, _)| t == (n + 1, n + 1)) {
            return None;
        }
        Some(out)
    }
}

/// One value-preserving identity.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Identity {
    /// `g = (1-δ) g + δ g`; leaves the table unchanged on its own.
    Split(f64),
    Rewrite(Rewrite),
}

/// Applies an identity to the whole coefficient of `target`.
pub fn apply_identity(rep: &Representation, identity: Identity, target: Term) -> Result<Representation> {
    match identity {
        Identity::Split(delta) => {
            if !(delta > 0.0 && delta < 1.0) {
                return domain(format!("split fraction {delta} outside (0, 1)"));
            }
            if rep.get(target.0, target.1) == 0.0 {
                return domain(format!("term {target:?} has no coefficient"));
            }
            Ok(rep.clone())
        }
        Identity::Rewrite(r) => apply_split_rewrite(rep, target, 1.0, r),
    }
}

/// Splits off `portion` of the coefficient at `target` and rewrites it.
pub fn apply_split_rewrite(
    rep: &Representation,
    target: Term,
    portion: f64,
    rewrite: Rewrite,
) -> Result<Representation> {
    let a = rep.get(target.0, target.1);
    if a == 0.0 {
        return domain(format!("term {target:?} has no coefficient"));
    }
    if !(portion > 0.0 && portion <= 1.0) {
        return domain(format!("portion {portion} outside (0, 1]"));
    }
    let Some(parts) = rewrite.expand(target, rep.n) else {
        return domain(format!("{rewrite:?} is out of domain at {target:?}"));
    };
    let moved = a * portion;
    let mut coeffs = rep.coeffs.clone();
    if portion == 1.0 {
        coeffs.remove(&target);
    } else {
        coeffs.insert(target, a - moved);
    }
    for (t, s) in parts {
        *coeffs.entry(t).or_insert(0.0) += s * moved;
    }
    coeffs.retain(|_, c| c.abs() >= MERGE_EPSILON);
    Ok(Representation {
        n: rep.n,
        k: rep.k,
        coeffs,
    })
}

/// A constraint whose left side misses its target.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub k_prime: u32,
    pub expected: f64,
    pub actual: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Relative tolerance on the nonzero constraint.
pub const VALIDATION_RTOL: f64 = 1e-8;
/// Tolerance on the zero constraints, relative to `max(1, Σ|c α|)`.
pub const VALIDATION_ATOL: f64 = 1e-10;

/// Largest `n` validated in plain `f64`; binomials stay far from overflow.
const PLAIN_VALIDATION_MAX_N: u32 = 500;

/// Checks `Σ C(n+1-j, k'-i) α_{i,j} = C(n,k) 1(k' = k+1)` for `k' = 1..=n+1`.
pub fn validate_representation(rep: &Representation) -> ValidationReport {
    if rep.n <= PLAIN_VALIDATION_MAX_N {
        validate_in::<f64>(rep)
    } else {
        validate_in::<LogWeight>(rep)
    }
}

fn validate_in<T: Weight>(rep: &Representation) -> ValidationReport {
    let n = u64::from(rep.n);
    let target = T::binomial(n, u64::from(rep.k));
    let mut violations = Vec::new();
    for kp in 1..=rep.n + 1 {
        let mut terms = Vec::new();
        let mut scale = NeumaierSum::new();
        for (&(i, j), &a) in &rep.coeffs {
            if kp < i || kp - i > rep.n + 1 - j {
                continue;
            }
            let c = T::binomial(n + 1 - u64::from(j), u64::from(kp - i));
            let t = c * T::from_f64(a);
            scale.add(t.to_f64().abs());
            terms.push(t);
        }
        let is_target = kp == rep.k + 1;
        if is_target {
            terms.push(-target.clone());
        }
        let residual = T::sum_all(terms);
        let ok = if is_target {
            (residual.clone() / target.clone()).to_f64().abs() <= VALIDATION_RTOL
        } else {
            residual.to_f64().abs() <= VALIDATION_ATOL * scale.value().max(1.0)
        };
        if !ok {
            let expected = if is_target { target.to_f64() } else { 0.0 };
            violations.push(Violation {
                k_prime: kp,
                expected,
                actual: expected + residual.to_f64(),
            });
        }
    }
    ValidationReport { violations }
}

/// Coefficients `β_{i,j}` on `Φ_i(j)` in a chosen arithmetic.
pub type Betas<T> = Vec<(Term, T)>;

/// `Σ β_{i,j} Φ_i(j)` for samples of size `n`.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearEstimator {
    n: u32,
    betas: BTreeMap<Term, f64>,
}

impl LinearEstimator {
    pub fn new(n: u32, betas: impl IntoIterator<Item = (Term, f64)>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for ((i, j), b) in betas {
            if !(1 <= i && i <= j && j <= n) {
                return domain(format!("statistic Φ_{i}({j}) outside 1 <= i <= j <= {n}"));
            }
            if !b.is_finite() {
                return domain(format!("non-finite coefficient on Φ_{i}({j})"));
            }
            *map.entry((i, j)).or_insert(0.0) += b;
        }
        map.retain(|_, b| *b != 0.0);
        Ok(LinearEstimator { n, betas: map })
    }

    /// `(k+1)/n Φ_{k+1}(n)`.
    pub fn good_turing(n: u32, k: u32) -> Result<Self> {
        if k >= n {
            return domain(format!("Good-Turing needs k < n (k = {k}, n = {n})"));
        }
        Self::new(n, [((k + 1, n), f64::from(k + 1) / f64::from(n))])
    }

    pub fn minimal_bias(n: u32, k: u32) -> Self {
        instantiate(&minimal_bias_representation(n, k))
    }

    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn betas(&self) -> &BTreeMap<Term, f64> {
        &self.betas
    }

    pub fn term_count(&self) -> usize {
        self.betas.len()
    }

    /// Coefficients converted exactly into `T`.
    pub fn betas_as<T: Weight>(&self) -> Betas<T> {
        self.betas.iter().map(|(&t, &b)| (t, T::from_f64(b))).collect()
    }

    /// Applies the estimator to a sample of size `n`.
    pub fn evaluate(&self, profile: &SampleProfile) -> Result<f64> {
        if profile.n() != u64::from(self.n) {
            return domain(format!(
                "estimator for n = {} applied to a sample of size {}",
                self.n,
                profile.n()
            ));
        }
        let mut acc = NeumaierSum::new();
        for (&(i, j), &b) in &self.betas {
            acc.add(b * profile.phi_at(u64::from(i), u64::from(j))? as f64);
        }
        Ok(acc.value())
    }

    /// Hash of the coefficients with the lowest mantissa bits cleared, so
    /// tables that differ only by rounding residue collide.
    pub fn canonical_hash(&self) -> u64 {
        let mut h = std::collections::hash_map::DefaultHasher::new();
        self.n.hash(&mut h);
        for (&t, &b) in &self.betas {
            t.hash(&mut h);
            (b.to_bits() & !0xFFF).hash(&mut h);
        }
        h.finish()
    }
}

/// `β_{i,j} = α_{i,j}/C(j,i)` for `j ≤ n`; column `n+1` folds onto `Φ_i(n)`
/// with `α_{i,n+1}/C(n+1,i)`; `α_{n+1,n+1}` is dropped.
pub fn instantiate(rep: &Representation) -> LinearEstimator {
    let n = rep.n;
    let betas = rep.coeffs.iter().filter(|(&(i, _), _)| i != n + 1).map(|(&(i, j), &a)| {
        let col = j.min(n);
        ((i, col), a / binomial_f64(u64::from(j), u64::from(i)))
    });
    LinearEstimator::new(n, betas).expect("instantiated indices are in range")
}

/// [`instantiate`] in arithmetic `T`, starting from the exact binary
/// value of each coefficient.
pub fn instantiate_as<T: Weight>(rep: &Representation) -> Betas<T> {
    let n = rep.n;
    let mut out: BTreeMap<Term, T> = BTreeMap::new();
    for (&(i, j), &a) in &rep.coeffs {
        if i == n + 1 {
            continue;
        }
        let (col, b) = if j == n + 1 {
            (n, T::from_f64(a) / T::binomial(u64::from(n) + 1, u64::from(i)))
        } else {
            (j, T::from_f64(a) / T::binomial(u64::from(j), u64::from(i)))
        };
        let e = out.entry((i, col)).or_insert_with(T::zero);
        *e = e.clone() + b;
    }
    out.into_iter().filter(|(_, b)| !b.is_zero()).collect()
}

/// How the last column is folded when adapting to a larger sample.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdaptFold {
    /// Shift every column by `m - n` and divide column `m+1` by `C(m+1, i)`.
    #[default]
    Shifted,
    /// Shift columns `≤ n`, but divide the last column by `C(n+1, i)`.
    Verbatim,
}

/// A representation moved to sample size `m` and its estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct Adapted {
    pub representation: Representation,
    pub estimator: LinearEstimator,
}

/// Moves a representation for size `n` to size `m ≥ n` by shifting
/// `j → j + (m - n)`. For `k > 0` coefficients are first scaled by
/// `C(m,k)/C(n,k)`.
pub fn adapt_to_larger_sample(rep: &Representation, m: u32, fold: AdaptFold) -> Result<Adapted> {
    let n = rep.n;
    if m < n {
        return domain(format!("cannot adapt from n = {n} down to m = {m}"));
    }
    let shift = m - n;
    let scale = if rep.k == 0 {
        1.0
    } else {
        (<LogWeight as Weight>::binomial(u64::from(m), u64::from(rep.k))
            / <LogWeight as Weight>::binomial(u64::from(n), u64::from(rep.k)))
        .to_f64()
    };
    let shifted = Representation::new(
        m,
        rep.k,
        rep.coeffs.iter().map(|(&(i, j), &a)| ((i, j + shift), a * scale)),
    )?;
    let estimator = match fold {
        AdaptFold::Shifted => instantiate(&shifted),
        AdaptFold::Verbatim => {
            let betas = shifted.coeffs.iter().filter(|(&(i, _), _)| i != m + 1).map(|(&(i, j), &a)| {
                if j == m + 1 {
                    ((i, m), a / binomial_f64(u64::from(n) + 1, u64::from(i)))
                } else {
                    ((i, j), a / binomial_f64(u64::from(j), u64::from(i)))
                }
            });
            LinearEstimator::new(m, betas)?
        }
    };
    Ok(Adapted {
        representation: shifted,
        estimator,
    })
}
