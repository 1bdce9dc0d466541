use std::sync::{Arc, OnceLock, RwLock};

use super::{LogWeight, NeumaierSum};
use crate::error::{domain, Result};

/// `C(n, k)` as `u128` when every intermediate of the multiplicative formula fits.
pub fn binomial_u128(n: u64, k: u64) -> Option<u128> {
    if k > n {
        return Some(0);
    }
    let k = k.min(n - k);
    let mut r: u128 = 1;
    for i in 0..k {
        // r * (n - i) is divisible by (i + 1) at every step
        r = r.checked_mul(u128::from(n - i))? / u128::from(i + 1);
    }
    Some(r)
}

/// One row `ln C(n, 0..=n)`.
fn ln_binomial_row(n: u64) -> Vec<f64> {
    let len = n as usize + 1;
    let mut row = vec![0.0; len];
    let half = n / 2;
    let mut acc = NeumaierSum::new();
    let mut exact = true;
    for k in 1..=half {
        let v = match binomial_u128(n, k).filter(|_| exact) {
            Some(c) => {
                // restart the recurrence from the exact value
                let v = (c as f64).ln();
                acc = NeumaierSum::new();
                acc.add(v);
                v
            }
            None => {
                exact = false;
                acc.add(((n - k + 1) as f64).ln());
                acc.add(-(k as f64).ln());
                acc.value()
            }
        };
        row[k as usize] = v;
        row[(n - k) as usize] = v;
    }
    row
}

type RowCache = RwLock<Vec<Option<Arc<[f64]>>>>;

fn row_cache() -> &'static RowCache {
    static CACHE: OnceLock<RowCache> = OnceLock::new();
    CACHE.get_or_init(|| RwLock::new(Vec::new()))
}

/// Cached row of `ln C(n, ·)`.
pub fn ln_binomial_row_cached(n: u64) -> Arc<[f64]> {
    let idx = n as usize;
    {
        let cache = row_cache().read().expect("binomial cache poisoned");
        if let Some(Some(row)) = cache.get(idx) {
            return Arc::clone(row);
        }
    }
    let row: Arc<[f64]> = ln_binomial_row(n).into();
    let mut cache = row_cache().write().expect("binomial cache poisoned");
    if cache.len() <= idx {
        cache.resize(idx + 1, None);
    }
    Arc::clone(cache[idx].get_or_insert(row))
}

/// `ln C(n, k)` without range checking; `-inf` when `k > n`.
pub(crate) fn ln_binomial(n: u64, k: u64) -> f64 {
    if k > n {
        return f64::NEG_INFINITY;
    }
    let kk = k.min(n - k);
    if kk == 0 {
        return 0.0;
    }
    if n <= 60 {
        // C(60, 30) < 2^60: exact integer, rounded once
        return (binomial_u128(n, kk).expect("fits") as f64).ln();
    }
    ln_binomial_row_cached(n)[k as usize]
}

/// `C(n, k)` in log space.
pub fn log_binomial(n: u64, k: u64) -> Result<LogWeight> {
    if k > n {
        return domain(format!("binomial({n}, {k}) with k > n"));
    }
    Ok(LogWeight::from_log(ln_binomial(n, k), 1))
}

/// `c_i = C(n,k) / C(n,k+i)` for `i = 1..=i_max`, via the ratio recurrence
/// `c_{i+1} = c_i (k+i+1) / (n-k-i)` carried in log space.
pub fn binomial_ratio_chain(n: u64, k: u64, i_max: u64) -> Result<Vec<f64>> {
    Ok(log_binomial_ratio_chain(n, k, i_max)?
        .into_iter()
        .map(|w| w.to_f64())
        .collect())
}

/// Log-space form of [`binomial_ratio_chain`].
pub fn log_binomial_ratio_chain(
    n: u64,
    k: u64,
    i_max: u64,
) -> Result<Vec<LogWeight>> {
    if k.checked_add(i_max).is_none_or(|s| s > n) {
        return domain(format!(
            "ratio chain needs k + i_max <= n (n={n}, k={k}, i_max={i_max})"
        ));
    }
    let mut out = Vec::with_capacity(i_max as usize);
    let mut acc = NeumaierSum::new();
    for i in 1..=i_max {
        // c_i / c_{i-1} = (k+i) / (n-k-i+1)
        acc.add(((k + i) as f64).ln());
        acc.add(-((n - k - i + 1) as f64).ln());
        out.push(LogWeight::from_log(acc.value(), 1));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_bigint::BigUint;
    use num_traits::{One, ToPrimitive};

    fn big_binomial(n: u64, k: u64) -> BigUint {
        let mut r = BigUint::one();
        for i in 0..k {
            r = r * BigUint::from(n - i) / BigUint::from(i + 1);
        }
        r
    }

    /// ln of a big integer via its top 64 bits and a shift.
    fn big_ln(v: &BigUint) -> f64 {
        let bits = v.bits();
        if bits <= 1000 {
            return v.to_f64().unwrap().ln();
        }
        let shift = bits - 64;
        let top: BigUint = v >> shift;
        top.to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
    }

    #[test]
    fn small_values() {
        assert_eq!(log_binomial(5, 2).unwrap().ln_abs(), 10f64.ln());
        let w = log_binomial(7, 0).unwrap();
        assert_eq!(w.ln_abs(), 0.0);
        assert_eq!(w.sign(), 1);
        assert!(log_binomial(3, 4).is_err());
    }

    #[test]
    fn exact_up_to_thirty() {
        for n in 0..=30u64 {
            for k in 0..=n {
                let exact = binomial_u128(n, k).unwrap() as f64;
                let got = log_binomial(n, k).unwrap().to_f64();
                assert!(((got - exact) / exact).abs() < 1e-12, "C({n},{k})");
            }
        }
    }

    #[test]
    fn matches_big_integer_oracle() {
        for &(n, k) in &[(100u64, 50u64), (150, 75), (300, 7), (2000, 1000), (2000, 3), (1999, 1998)] {
            let want = big_ln(&big_binomial(n, k.min(n - k)));
            let got = log_binomial(n, k).unwrap().ln_abs();
            // absolute error in the log is the relative error in the value
            assert!((got - want).abs() < 1e-12, "C({n},{k}): {got} vs {want}");
        }
    }

    #[test]
    fn ratio_chain_examples() {
        assert_eq!(binomial_ratio_chain(2, 0, 2).unwrap(), vec![0.5, 1.0]);
        assert!(binomial_ratio_chain(9, 3, 0).unwrap().is_empty());
        let c = binomial_ratio_chain(10, 1, 3).unwrap();
        for (got, want) in c.iter().zip([2.0 / 9.0, 1.0 / 12.0, 1.0 / 21.0]) {
            assert!((got - want).abs() < 1e-15);
        }
        assert!(binomial_ratio_chain(4, 2, 3).is_err());
    }

    #[test]
    fn ratio_chain_matches_division() {
        for &n in &[5u64, 40, 333, 2000] {
            for &k in &[0u64, 1, n / 3] {
                let chain = log_binomial_ratio_chain(n, k, n - k).unwrap();
                let base = log_binomial(n, k).unwrap();
                for (i, c) in chain.iter().enumerate() {
                    let direct = base / log_binomial(n, k + i as u64 + 1).unwrap();
                    assert!(c.rel_diff(&direct) < 1e-12, "n={n} k={k} i={}", i + 1);
                }
            }
        }
    }
}
