use std::fmt::Write as _;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::numerics::LogWeight;

/// The quantity an error is measured against: `E[M_k]` or the realized
/// `M_k` of each sample. Bias is the same under both.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Expected,
    Realized,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Bias,
    Variance,
    Mse,
    A12,
    MseRatio,
}

/// How a value was obtained.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Exact,
    MonteCarlo,
}

/// One result cell. `log10_magnitude` keeps values far below the `f64`
/// range readable; `std_error` is set for Monte Carlo means.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub experiment: String,
    pub distribution: String,
    pub support: u64,
    pub n: u64,
    pub k: u64,
    pub estimator: String,
    pub metric: Metric,
    pub method: Method,
    pub target: Target,
    pub value: f64,
    pub log10_magnitude: f64,
    pub std_error: Option<f64>,
    pub replications: u64,
    pub seed: u64,
}

/// Fields that identify a cell, shared by the rows of one grid point.
#[derive(Clone, Debug)]
pub struct RowKey {
    pub experiment: String,
    pub distribution: String,
    pub support: u64,
    pub n: u64,
    pub k: u64,
    pub replications: u64,
    pub seed: u64,
}

impl RowKey {
    pub fn row(&self, estimator: &str, metric: Metric, method: Method, value: f64) -> ResultRow {
        ResultRow {
            experiment: self.experiment.clone(),
            distribution: self.distribution.clone(),
            support: self.support,
            n: self.n,
            k: self.k,
            estimator: estimator.to_string(),
            metric,
            method,
            target: if metric == Metric::Bias { Target::Expected } else { Target::Realized },
            value,
            log10_magnitude: log10_abs(value),
            std_error: None,
            replications: self.replications,
            seed: self.seed,
        }
    }

    /// Row for a log-space value, which may lie below the `f64` range.
    pub fn log_row(&self, estimator: &str, metric: Metric, value: LogWeight) -> ResultRow {
        let mut row = self.row(estimator, metric, Method::Exact, value.to_f64());
        row.log10_magnitude = if value.is_zero() {
            f64::NEG_INFINITY
        } else {
            value.ln_abs() / std::f64::consts::LN_10
        };
        row
    }
}

fn log10_abs(v: f64) -> f64 {
    if v == 0.0 {
        f64::NEG_INFINITY
    } else {
        v.abs().log10()
    }
}

pub fn write_csv<W: Write>(rows: &[ResultRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        if !r.value.is_finite() {
            return domain(format!("non-finite {:?} for {} on {}", r.metric, r.estimator, r.distribution));
        }
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(input);
    let mut rows = Vec::new();
    for rec in r.deserialize() {
        rows.push(rec?);
    }
    Ok(rows)
}

/// Whitespace-separated `n k estimator value log10|value|` lines, one block
/// per distribution, for plotting tools that read column files.
pub fn gnuplot_columns(rows: &[ResultRow]) -> String {
    let mut out = String::new();
    let mut current: Option<&str> = None;
    for r in rows {
        if current != Some(r.distribution.as_str()) {
            if current.is_some() {
                out.push_str("\n\n");
            }
            let _ = writeln!(out, "# {} S={} {:?}", r.distribution, r.support, r.metric);
            let _ = writeln!(out, "# n k estimator value log10_magnitude");
            current = Some(&r.distribution);
        }
        let _ = writeln!(out, "{} {} {} {:e} {}", r.n, r.k, r.estimator, r.value, r.log10_magnitude);
    }
    out
}

/// Vargha-Delaney `Â12`: `P(X > Y) + P(X = Y)/2` over all pairs.
pub fn vargha_delaney_a12(xs: &[f64], ys: &[f64]) -> Result<f64> {
    if xs.is_empty() || ys.is_empty() {
        return domain("A12 needs two non-empty samples");
    }
    let mut score = 0.0;
    for x in xs {
        for y in ys {
            if x > y {
                score += 1.0;
            } else if x == y {
                score += 0.5;
            }
        }
    }
    Ok(score / (xs.len() * ys.len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn key() -> RowKey {
        RowKey {
            experiment: "t".into(),
            distribution: "zipf-1".into(),
            support: 20,
            n: 40,
            k: 0,
            replications: 3,
            seed: 9,
        }
    }

    #[test]
    fn a12_examples() {
        assert_eq!(vargha_delaney_a12(&[3.0, 4.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(vargha_delaney_a12(&[2.0; 5], &[2.0; 3]).unwrap(), 0.5);
        assert_eq!(vargha_delaney_a12(&[1.0, 3.0], &[2.0, 2.0]).unwrap(), 0.5);
        assert!(vargha_delaney_a12(&[], &[1.0]).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let k = key();
        let mut rows = vec![
            k.row("GT", Metric::Mse, Method::Exact, 2.3508e-3),
            k.log_row("B", Metric::Bias, LogWeight::from_log(-200.0 * std::f64::consts::LN_10, -1)),
            k.row("evolved", Metric::A12, Method::MonteCarlo, 0.875),
        ];
        rows[2].std_error = Some(1.0 / 3.0);
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, rows);
        assert!((rows[1].log10_magnitude + 200.0).abs() < 1e-9);
    }

    #[test]
    fn rejects_non_finite() {
        let rows = vec![key().row("GT", Metric::Mse, Method::Exact, f64::NAN)];
        assert!(write_csv(&rows, Vec::new()).is_err());
    }

    #[test]
    fn columns() {
        let k = key();
        let text = gnuplot_columns(&[k.row("GT", Metric::Bias, Method::Exact, 0.5)]);
        assert!(text.contains("40 0 GT 5e-1 -0.30102999"));
    }
}
