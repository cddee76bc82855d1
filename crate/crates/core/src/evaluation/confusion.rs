use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Column name used for open-set `NewCategory` predictions.
pub const NEW_CATEGORY: &str = "NewCategory";

/// Rows are true classes, columns predicted classes, plus one overflow column
/// counting `NewCategory` verdicts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: Vec<String>,
    counts: Vec<Vec<u64>>,
    new_category: Vec<u64>,
    /// Rows whose class is absent from the gallery; `NewCategory` is correct for them.
    novel: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Mislabel {
    #[serde(rename = "true")]
    pub true_label: String,
    pub predicted: String,
    pub count: u64,
    pub text: String,
}

fn count_word(n: u64) -> String {
    const WORDS: [&str; 11] = [
        "zero", "one", "two", "three", "four", "five", "six", "seven", "eight", "nine", "ten",
    ];
    WORDS
        .get(n as usize)
        .map(|w| w.to_string())
        .unwrap_or_else(|| n.to_string())
}

fn check_unique(classes: &[String]) -> Result<(), EvalError> {
    let mut seen = HashSet::new();
    for c in classes {
        if c.is_empty() {
            return Err(EvalError::Malformed("empty class label".into()));
        }
        if c == NEW_CATEGORY {
            return Err(EvalError::Malformed(format!("{NEW_CATEGORY} is reserved")));
        }
        if !seen.insert(c) {
            return Err(EvalError::Malformed(format!("duplicate class {c}")));
        }
    }
    Ok(())
}

impl ConfusionMatrix {
    /// A zero matrix over closed-set classes.
    pub fn new(classes: Vec<String>) -> Result<Self, EvalError> {
        check_unique(&classes)?;
        let n = classes.len();
        Ok(Self {
            classes,
            counts: vec![vec![0; n]; n],
            new_category: vec![0; n],
            novel: vec![false; n],
        })
    }

    /// Gallery classes first, then query labels unseen in the gallery (sorted,
    /// marked novel).
    pub fn for_open_set<'a>(
        gallery_classes: Vec<String>,
        query_labels: impl IntoIterator<Item = &'a str>,
    ) -> Self {
        let known: HashSet<&str> = gallery_classes.iter().map(String::as_str).collect();
        let mut extra: Vec<String> = query_labels
            .into_iter()
            .filter(|l| !l.is_empty() && !known.contains(l))
            .map(str::to_owned)
            .collect();
        extra.sort();
        extra.dedup();
        let n_known = gallery_classes.len();
        let mut classes: Vec<String> = gallery_classes.into_iter().filter(|c| !c.is_empty()).collect();
        let n_known_nonempty = classes.len();
        debug_assert!(n_known_nonempty <= n_known);
        classes.extend(extra);
        let n = classes.len();
        let mut novel = vec![false; n];
        for flag in novel.iter_mut().skip(n_known_nonempty) {
            *flag = true;
        }
        Self {
            classes,
            counts: vec![vec![0; n]; n],
            new_category: vec![0; n],
            novel,
        }
    }

    /// Closed-set matrix from a square count grid.
    pub fn from_counts(classes: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self, EvalError> {
        let mut m = Self::new(classes)?;
        let n = m.classes.len();
        if counts.len() != n || counts.iter().any(|r| r.len() != n) {
            return Err(EvalError::Malformed(format!("counts must be {n}x{n}")));
        }
        m.counts = counts;
        Ok(m)
    }

    pub fn classes(&self) -> &[String] {
        &self.classes
    }

    fn index_of(&self, label: &str) -> Option<usize> {
        self.classes.iter().position(|c| c == label)
    }

    pub fn is_novel(&self, label: &str) -> Option<bool> {
        self.index_of(label).map(|i| self.novel[i])
    }

    /// Tallies one query. `predicted = None` means `NewCategory`.
    pub fn record(&mut self, true_label: &str, predicted: Option<&str>) -> Result<(), EvalError> {
        let row = self
            .index_of(true_label)
            .ok_or_else(|| EvalError::InvalidArgument(format!("unknown true class {true_label}")))?;
        match predicted {
            None => self.new_category[row] += 1,
            Some(p) => {
                let col = self
                    .index_of(p)
                    .ok_or_else(|| EvalError::InvalidArgument(format!("unknown predicted class {p}")))?;
                self.counts[row][col] += 1;
            }
        }
        Ok(())
    }

    pub fn count(&self, true_label: &str, predicted: &str) -> Option<u64> {
        Some(self.counts[self.index_of(true_label)?][self.index_of(predicted)?])
    }

    pub fn new_category_count(&self, true_label: &str) -> Option<u64> {
        Some(self.new_category[self.index_of(true_label)?])
    }

    pub fn row_total(&self, row: usize) -> u64 {
        self.counts[row].iter().sum::<u64>() + self.new_category[row]
    }

    pub fn total(&self) -> u64 {
        (0..self.classes.len()).map(|r| self.row_total(r)).sum()
    }

    fn row_correct(&self, row: usize) -> u64 {
        if self.novel[row] {
            self.new_category[row]
        } else {
            self.counts[row][row]
        }
    }

    /// Trace (plus correct `NewCategory` verdicts on novel rows).
    pub fn correct(&self) -> u64 {
        (0..self.classes.len()).map(|r| self.row_correct(r)).sum()
    }

    /// `(correct, total)` as exact integers.
    pub fn accuracy_ratio(&self) -> (u64, u64) {
        (self.correct(), self.total())
    }

    pub fn accuracy(&self) -> Result<f64, EvalError> {
        let (c, t) = self.accuracy_ratio();
        if t == 0 {
            return Err(EvalError::EmptyMatrix);
        }
        Ok(c as f64 / t as f64)
    }

    /// `(correct, support)` for one row.
    pub fn row_recall(&self, row: usize) -> (u64, u64) {
        (self.row_correct(row), self.row_total(row))
    }

    /// Off-target cells in row-major order, `NewCategory` column last per row.
    pub fn mislabels(&self) -> Vec<Mislabel> {
        let mut out = Vec::new();
        for (r, t) in self.classes.iter().enumerate() {
            for (c, p) in self.classes.iter().enumerate() {
                let n = self.counts[r][c];
                if n > 0 && (r != c || self.novel[r]) {
                    out.push(Mislabel::new(t, p, n));
                }
            }
            if self.new_category[r] > 0 && !self.novel[r] {
                out.push(Mislabel::new(t, NEW_CATEGORY, self.new_category[r]));
            }
        }
        out
    }

    /// UTF-8 CSV: header row and first column carry class names; the last
    /// column is the `NewCategory` overflow.
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["true\\predicted".to_owned()];
        header.extend(self.classes.iter().cloned());
        header.push(NEW_CATEGORY.to_owned());
        w.write_record(&header).expect("in-memory write");
        for (r, t) in self.classes.iter().enumerate() {
            let mut row = vec![t.clone()];
            row.extend(self.counts[r].iter().map(|n| n.to_string()));
            row.push(self.new_category[r].to_string());
            w.write_record(&row).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("in-memory flush")).expect("labels are UTF-8")
    }

    /// Parses [`ConfusionMatrix::to_csv`] output; the `NewCategory` column is
    /// optional. Novel-row flags are not stored in CSV and come back cleared.
    pub fn from_csv(text: &str) -> Result<Self, EvalError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(text.as_bytes());
        let header = rdr
            .headers()
            .map_err(|e| EvalError::Malformed(e.to_string()))?
            .clone();
        let mut cols: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
        let has_new = cols.last().map(|c| c == NEW_CATEGORY).unwrap_or(false);
        if has_new {
            cols.pop();
        }
        let mut m = Self::new(cols)?;
        let n = m.classes.len();
        let mut seen_rows = 0;
        for (r, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| EvalError::Malformed(e.to_string()))?;
            if r >= n {
                return Err(EvalError::Malformed("more rows than classes".into()));
            }
            if rec.get(0) != Some(m.classes[r].as_str()) {
                return Err(EvalError::Malformed(format!(
                    "row {r} is labeled {:?}, expected {}",
                    rec.get(0),
                    m.classes[r]
                )));
            }
            let parse = |s: &str| {
                s.trim()
                    .parse::<u64>()
                    .map_err(|e| EvalError::Malformed(format!("row {r}: {e}")))
            };
            for c in 0..n {
                m.counts[r][c] = parse(rec.get(c + 1).unwrap_or(""))?;
            }
            if has_new {
                m.new_category[r] = parse(rec.get(n + 1).unwrap_or(""))?;
            }
            seen_rows += 1;
        }
        if seen_rows != n {
            return Err(EvalError::Malformed(format!("{seen_rows} rows for {n} classes")));
        }
        Ok(m)
    }
}

impl Mislabel {
    fn new(true_label: &str, predicted: &str, count: u64) -> Self {
        let verb = if count == 1 { "was" } else { "were" };
        let target = if predicted == NEW_CATEGORY {
            "a new category".to_owned()
        } else {
            format!("a {predicted}")
        };
        Self {
            true_label: true_label.to_owned(),
            predicted: predicted.to_owned(),
            count,
            text: format!("{} {true_label} {verb} mislabeled as {target}", count_word(count)),
        }
    }
}
