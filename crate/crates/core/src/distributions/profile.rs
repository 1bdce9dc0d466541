use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};
use std::path::Path;

use crate::error::{domain, Error, Result};

/// Frequencies of frequencies `Φ_k(j)` for `j = 0..=n`, as sorted `(k, Φ_k)` pairs.
type SparsePhi = Vec<(u32, u32)>;

/// A sample `X^n` with its final class counts and, when the draw order is
/// known, the frequency profile of every prefix.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleProfile {
    sequence: Vec<u32>,
    counts: Vec<u32>,
    labels: Option<Vec<String>>,
    prefixes: Option<Vec<SparsePhi>>,
    last: SparsePhi,
}

fn snapshot(phi: &BTreeMap<u32, u32>) -> SparsePhi {
    phi.iter().map(|(&k, &c)| (k, c)).collect()
}

fn lookup(phi: &SparsePhi, k: u64) -> u64 {
    match u32::try_from(k) {
        Ok(k) => phi
            .binary_search_by_key(&k, |&(f, _)| f)
            .map_or(0, |i| u64::from(phi[i].1)),
        Err(_) => 0,
    }
}

impl SampleProfile {
    /// Profile of an ordered sequence of class indices.
    pub fn from_sequence(sequence: Vec<u32>) -> Self {
        let mut counts: Vec<u32> = Vec::new();
        let mut phi: BTreeMap<u32, u32> = BTreeMap::new();
        let mut prefixes = Vec::with_capacity(sequence.len() + 1);
        prefixes.push(Vec::new());
        for &x in &sequence {
            let x = x as usize;
            if counts.len() <= x {
                counts.resize(x + 1, 0);
            }
            let old = counts[x];
            if old > 0 {
                let e = phi.get_mut(&old).expect("tracked frequency");
                *e -= 1;
                if *e == 0 {
                    phi.remove(&old);
                }
            }
            counts[x] = old + 1;
            *phi.entry(old + 1).or_default() += 1;
            prefixes.push(snapshot(&phi));
        }
        let last = prefixes.last().cloned().unwrap_or_default();
        SampleProfile {
            sequence,
            counts,
            labels: None,
            prefixes: Some(prefixes),
            last,
        }
    }

    /// Interns tokens to class indices in order of first appearance.
    pub fn from_tokens<I, S>(tokens: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut index: HashMap<String, u32> = HashMap::new();
        let mut labels = Vec::new();
        let sequence = tokens
            .into_iter()
            .map(|t| {
                let t = t.as_ref();
                *index.entry(t.to_string()).or_insert_with(|| {
                    labels.push(t.to_string());
                    (labels.len() - 1) as u32
                })
            })
            .collect();
        let mut p = Self::from_sequence(sequence);
        p.labels = Some(labels);
        p
    }

    /// Builds a profile from per-class counts. The draw order is unknown,
    /// so only the full-sample profile `Φ·(n)` is available.
    pub fn from_counts(counts: Vec<(String, u64)>) -> Result<Self> {
        let mut labels = Vec::with_capacity(counts.len());
        let mut seq = Vec::new();
        let mut seen = HashMap::new();
        for (label, c) in counts {
            if seen.insert(label.clone(), ()).is_some() {
                return domain(format!("duplicate class `{label}`"));
            }
            let idx = labels.len() as u32;
            labels.push(label);
            seq.extend(std::iter::repeat_n(idx, c as usize));
        }
        let mut p = Self::from_sequence(seq);
        p.prefixes = None;
        p.labels = Some(labels);
        Ok(p)
    }

    /// Reads one class token per line; blank lines are skipped.
    pub fn read_tokens(path: &Path) -> Result<Self> {
        let file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut tokens = Vec::new();
        for line in file.lines() {
            let line = line?;
            let t = line.trim();
            if !t.is_empty() {
                tokens.push(t.to_string());
            }
        }
        if tokens.is_empty() {
            return domain(format!("{} contains no tokens", path.display()));
        }
        Ok(Self::from_tokens(tokens))
    }

    /// Reads a `class,count` CSV file.
    pub fn read_counts_csv(path: &Path) -> Result<Self> {
        #[derive(serde::Deserialize)]
        struct Row {
            class: String,
            count: u64,
        }
        let mut reader = csv::Reader::from_path(path)?;
        let rows = reader
            .deserialize::<Row>()
            .map(|r| r.map(|r| (r.class, r.count)))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if rows.iter().all(|(_, c)| *c == 0) {
            return domain(format!("{} contains no observations", path.display()));
        }
        Self::from_counts(rows)
    }

    /// Writes the sequence one token per line.
    pub fn write_tokens(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        for &x in &self.sequence {
            writeln!(out, "{}", self.label(x))?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn n(&self) -> u64 {
        self.sequence.len() as u64
    }

    /// The draw order, or `None` when the sample was ingested as counts.
    pub fn sequence(&self) -> Option<&[u32]> {
        self.prefixes.as_ref().map(|_| self.sequence.as_slice())
    }

    /// `N_x` per class index.
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn label(&self, class: u32) -> String {
        self.labels
            .as_ref()
            .and_then(|l| l.get(class as usize).cloned())
            .unwrap_or_else(|| class.to_string())
    }

    pub fn has_prefixes(&self) -> bool {
        self.prefixes.is_some()
    }

    /// Number of distinct classes observed.
    pub fn distinct(&self) -> u64 {
        self.last.iter().map(|&(_, c)| u64::from(c)).sum()
    }

    /// `Φ_k(n)`.
    pub fn phi(&self, k: u64) -> u64 {
        lookup(&self.last, k)
    }

    /// `Φ_i(j)` for the length-`j` prefix.
    pub fn phi_at(&self, i: u64, j: u64) -> Result<u64> {
        if j > self.n() {
            return domain(format!("prefix length {j} exceeds sample size {}", self.n()));
        }
        if j == self.n() {
            return Ok(self.phi(i));
        }
        let prefixes = self.prefixes.as_ref().ok_or(Error::PrefixUnavailable)?;
        Ok(lookup(&prefixes[j as usize], i))
    }

    /// Nonzero `(k, Φ_k(n))` pairs in increasing `k`.
    pub fn phi_pairs(&self) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.last.iter().map(|&(k, c)| (u64::from(k), u64::from(c)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prefix_invariants() {
        let seq = vec![0, 1, 0, 2, 0, 1, 3, 3, 3, 3];
        let p = SampleProfile::from_sequence(seq.clone());
        for j in 0..=p.n() {
            let distinct: u64 = (1..=j).map(|k| p.phi_at(k, j).unwrap()).sum();
            let weighted: u64 = (1..=j).map(|k| k * p.phi_at(k, j).unwrap()).sum();
            let mut classes = seq[..j as usize].to_vec();
            classes.sort_unstable();
            classes.dedup();
            assert_eq!(distinct, classes.len() as u64);
            assert_eq!(weighted, j);
        }
        assert_eq!(p.phi(4), 1);
        assert_eq!(p.phi(3), 1);
        assert_eq!(p.phi(2), 1);
        assert_eq!(p.phi(1), 1);
        assert_eq!(p.distinct(), 4);
    }

    #[test]
    fn tokens_are_interned() {
        let p = SampleProfile::from_tokens(["b", "a", "b"]);
        assert_eq!(p.counts(), &[2, 1]);
        assert_eq!(p.label(0), "b");
        assert_eq!(p.phi(1), 1);
        assert_eq!(p.phi(2), 1);
    }

    #[test]
    fn counts_hide_prefixes() {
        let p = SampleProfile::from_counts(vec![("x".into(), 3), ("y".into(), 1)]).unwrap();
        assert_eq!(p.n(), 4);
        assert_eq!(p.phi(3), 1);
        assert_eq!(p.phi_at(1, 4).unwrap(), 1);
        assert!(matches!(p.phi_at(1, 2), Err(Error::PrefixUnavailable)));
        assert!(p.sequence().is_none());
        assert!(SampleProfile::from_counts(vec![("x".into(), 1), ("x".into(), 1)]).is_err());
    }

    #[test]
    fn file_round_trip() {
        let dir = std::env::temp_dir().join(format!("unseen-profile-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("s.txt");
        let p = SampleProfile::from_tokens(["cat", "dog", "cat", "emu"]);
        p.write_tokens(&path).unwrap();
        assert_eq!(SampleProfile::read_tokens(&path).unwrap(), p);
        let csv_path = dir.join("c.csv");
        std::fs::write(&csv_path, "class,count\ncat,2\ndog,1\nemu,1\n").unwrap();
        let c = SampleProfile::read_counts_csv(&csv_path).unwrap();
        assert_eq!(c.phi(2), 1);
        assert_eq!(c.phi(1), 2);
        std::fs::remove_dir_all(&dir).unwrap();
    }
}
