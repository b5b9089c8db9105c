//! Word-frequency baseline: how often each label occurs in a caption corpus.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use crate::error::{Error, Result};
use crate::vecstore::fold_label;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FrequencyTable {
    counts: HashMap<String, u64>,
    total: u64,
}

/// Splits on every non-alphanumeric codepoint and case-folds.
pub fn tokenize(line: &str) -> impl Iterator<Item = String> + '_ {
    line.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(fold_label)
}

impl FrequencyTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_line(&mut self, line: &str) {
        for tok in tokenize(line) {
            *self.counts.entry(tok).or_insert(0) += 1;
            self.total += 1;
        }
    }

    pub fn from_text(text: &str) -> Self {
        let mut t = Self::new();
        for line in text.lines() {
            t.add_line(line);
        }
        t
    }

    pub fn merge(&mut self, other: &FrequencyTable) {
        for (tok, &n) in &other.counts {
            *self.counts.entry(tok.clone()).or_insert(0) += n;
        }
        self.total += other.total;
    }

    pub fn count(&self, token: &str) -> u64 {
        self.counts.get(&fold_label(token)).copied().unwrap_or(0)
    }

    pub fn total_tokens(&self) -> u64 {
        self.total
    }

    pub fn distinct(&self) -> usize {
        self.counts.len()
    }

    /// `(token, count)` by descending count, then token.
    pub fn sorted(&self) -> Vec<(&str, u64)> {
        let mut v: Vec<(&str, u64)> = self.counts.iter().map(|(k, &n)| (k.as_str(), n)).collect();
        v.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        v
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("token\tcount\n");
        for (tok, n) in self.sorted() {
            writeln!(out, "{tok}\t{n}").unwrap();
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_tsv()).map_err(|e| Error::io(path, e))
    }
}

/// Counts tokens in a one-caption-per-line UTF-8 file.
pub fn count_corpus(path: &Path) -> Result<FrequencyTable> {
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = BufReader::new(file);
    let mut table = FrequencyTable::new();
    let mut buf = Vec::new();
    let mut line_no = 0usize;
    loop {
        buf.clear();
        let n = reader
            .read_until(b'\n', &mut buf)
            .map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        line_no += 1;
        let line = std::str::from_utf8(&buf).map_err(|_| {
            Error::data(format!("{}: line {line_no} is not valid UTF-8", path.display()))
        })?;
        table.add_line(line);
    }
    Ok(table)
}

/// Raw count per label, 0 when the label never occurs. Labels that tokenize
/// to more than one token never match.
pub fn freq_scores(table: &FrequencyTable, labels: &[String]) -> Vec<f64> {
    labels.iter().map(|l| table.count(l) as f64).collect()
}

/// Fraction of labels with a non-zero count.
pub fn freq_coverage(table: &FrequencyTable, labels: &[String]) -> f64 {
    if labels.is_empty() {
        return 0.0;
    }
    let hit = labels.iter().filter(|l| table.count(l) > 0).count();
    hit as f64 / labels.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    #[test]
    fn small_corpus() {
        let t = FrequencyTable::from_text("a beach\na thing");
        assert_eq!((t.count("a"), t.count("beach"), t.count("thing")), (2, 1, 1));
        assert_eq!(t.total_tokens(), 4);
        assert_eq!(t.to_tsv(), "token\tcount\na\t2\nbeach\t1\nthing\t1\n");
    }

    #[test]
    fn tokenizer_splits_and_folds() {
        let toks: Vec<String> = tokenize("Dog's  BEACH-ball, café!").collect();
        assert_eq!(toks, ["dog", "s", "beach", "ball", "café"]);
    }

    #[test]
    fn empty_file_and_bad_utf8() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("empty.txt");
        fs::write(&p, "").unwrap();
        let t = count_corpus(&p).unwrap();
        assert_eq!((t.total_tokens(), t.distinct()), (0, 0));

        let p = dir.path().join("bad.txt");
        let mut f = fs::File::create(&p).unwrap();
        f.write_all(b"fine line\nbad \xff byte\n").unwrap();
        let err = count_corpus(&p).unwrap_err().to_string();
        assert!(err.contains("line 2"), "{err}");
    }

    #[test]
    fn scores_and_coverage() {
        let t = FrequencyTable::from_text("dog dog cat");
        let labels = vec!["Dog".to_string(), "emu".to_string(), "ice cream".to_string()];
        assert_eq!(freq_scores(&t, &labels), vec![2.0, 0.0, 0.0]);
        assert!((freq_coverage(&t, &labels) - 1.0 / 3.0).abs() < 1e-15);
    }
}
