//! Corpus ingestion (ISOT and single-file fixtures) and stratified splitting.

use std::collections::HashSet;
use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

/// Class label. Fake news is `0`, real news is `1`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    Fake = 0,
    Real = 1,
}

impl Label {
    pub const ALL: [Label; 2] = [Label::Fake, Label::Real];

    pub fn from_class(class: u8) -> Result<Self> {
        match class {
            0 => Ok(Label::Fake),
            1 => Ok(Label::Real),
            other => Err(Error::Domain(format!("class must be 0 or 1, got {other}"))),
        }
    }

    pub fn class(self) -> u8 {
        self as u8
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDocument {
    pub title: String,
    pub body: String,
    pub subject: String,
    /// Kept verbatim; never parsed.
    pub date: String,
    pub label: Label,
}

impl RawDocument {
    pub fn new(title: impl Into<String>, body: impl Into<String>, label: Label) -> Self {
        Self {
            title: title.into(),
            body: body.into(),
            subject: String::new(),
            date: String::new(),
            label,
        }
    }

    fn has_content(&self) -> bool {
        !self.title.trim().is_empty() || !self.body.trim().is_empty()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelCounts {
    pub fake: usize,
    pub real: usize,
}

impl LabelCounts {
    pub fn get(&self, label: Label) -> usize {
        match label {
            Label::Fake => self.fake,
            Label::Real => self.real,
        }
    }

    fn bump(&mut self, label: Label) {
        match label {
            Label::Fake => self.fake += 1,
            Label::Real => self.real += 1,
        }
    }

    pub fn total(&self) -> usize {
        self.fake + self.real
    }
}

/// Rows removed while loading.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct IngestStats {
    pub dropped_empty: usize,
    pub dropped_duplicates: usize,
}

/// Labelled documents in ingestion order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    documents: Vec<RawDocument>,
    counts: LabelCounts,
    stats: IngestStats,
}

impl Corpus {
    pub fn from_documents(documents: Vec<RawDocument>) -> Self {
        let mut counts = LabelCounts::default();
        for d in &documents {
            counts.bump(d.label);
        }
        Self {
            documents,
            counts,
            stats: IngestStats::default(),
        }
    }

    pub fn documents(&self) -> &[RawDocument] {
        &self.documents
    }

    pub fn counts(&self) -> LabelCounts {
        self.counts
    }

    pub fn stats(&self) -> IngestStats {
        self.stats
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}

/// Split parameters: fraction of each class that goes to the test side, and the seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            test_fraction: 0.2,
            seed: 42,
        }
    }
}

impl SplitSpec {
    pub fn new(test_fraction: f64, seed: u64) -> Result<Self> {
        let spec = Self {
            test_fraction,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Config(format!(
                "test fraction must lie strictly between 0 and 1, got {}",
                self.test_fraction
            )));
        }
        Ok(())
    }
}

fn open_csv(path: &Path) -> Result<csv::Reader<File>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(file))
}

fn column(headers: &csv::StringRecord, name: &str, path: &Path) -> Result<usize> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name))
        .ok_or_else(|| Error::Schema {
            context: path.display().to_string(),
            message: format!("missing required column '{name}'"),
        })
}

fn csv_error(path: &Path, err: csv::Error) -> Error {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    let message = err.to_string();
    match err.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        _ => Error::Parse {
            context: path.display().to_string(),
            line,
            message,
        },
    }
}

fn read_isot_file(path: &Path, label: Label, out: &mut Vec<RawDocument>) -> Result<()> {
    let mut reader = open_csv(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let title = column(&headers, "title", path)?;
    let text = column(&headers, "text", path)?;
    let subject = column(&headers, "subject", path)?;
    let date = column(&headers, "date", path)?;
    for record in reader.records() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let get = |i: usize| record.get(i).unwrap_or_default().to_string();
        out.push(RawDocument {
            title: get(title),
            body: get(text),
            subject: get(subject),
            date: get(date),
            label,
        });
    }
    Ok(())
}

/// Drops empty-content rows and exact `(title, body)` duplicates, keeping the
/// first occurrence in ingestion order.
fn clean(rows: Vec<RawDocument>) -> Corpus {
    let mut stats = IngestStats::default();
    let mut seen: HashSet<(String, String)> = HashSet::with_capacity(rows.len());
    let mut kept = Vec::with_capacity(rows.len());
    for doc in rows {
        if !doc.has_content() {
            stats.dropped_empty += 1;
            continue;
        }
        if !seen.insert((doc.title.clone(), doc.body.clone())) {
            stats.dropped_duplicates += 1;
            continue;
        }
        kept.push(doc);
    }
    let mut corpus = Corpus::from_documents(kept);
    corpus.stats = stats;
    corpus
}

/// Loads the two-file ISOT layout: every row of `real_path` is labelled real,
/// every row of `fake_path` fake. Real rows are ingested first.
pub fn load_isot(real_path: impl AsRef<Path>, fake_path: impl AsRef<Path>) -> Result<Corpus> {
    let mut rows = Vec::new();
    read_isot_file(real_path.as_ref(), Label::Real, &mut rows)?;
    read_isot_file(fake_path.as_ref(), Label::Fake, &mut rows)?;
    Ok(clean(rows))
}

/// Loads a `text,label` fixture file.
pub fn load_fixture(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let text = column(&headers, "text", path)?;
    let label = column(&headers, "label", path)?;
    let mut docs = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let label = parse_label(record.get(label).unwrap_or_default(), row, path)?;
        docs.push(RawDocument::new(
            "",
            record.get(text).unwrap_or_default(),
            label,
        ));
    }
    Ok(Corpus::from_documents(docs))
}

/// Reads a file produced by [`write_labeled_csv`]. Rows are taken as they
/// are: no deduplication, no empty-row filtering.
pub fn load_labeled_csv(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let mut reader = open_csv(path)?;
    let headers = reader.headers().map_err(|e| csv_error(path, e))?.clone();
    let title = column(&headers, "title", path)?;
    let text = column(&headers, "text", path)?;
    let subject = column(&headers, "subject", path)?;
    let date = column(&headers, "date", path)?;
    let label = column(&headers, "label", path)?;
    let mut docs = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record.map_err(|e| csv_error(path, e))?;
        let get = |i: usize| record.get(i).unwrap_or_default().to_string();
        docs.push(RawDocument {
            title: get(title),
            body: get(text),
            subject: get(subject),
            date: get(date),
            label: parse_label(record.get(label).unwrap_or_default(), row, path)?,
        });
    }
    Ok(Corpus::from_documents(docs))
}

fn parse_label(raw: &str, row: usize, path: &Path) -> Result<Label> {
    match raw.trim() {
        "0" => Ok(Label::Fake),
        "1" => Ok(Label::Real),
        other => Err(Error::Schema {
            context: path.display().to_string(),
            message: format!("row {}: label must be 0 or 1, got '{other}'", row + 1),
        }),
    }
}

/// Per-class seeded split. For each label (fake first, then real) the
/// documents of that label are permuted with one shared [`SeededRng`] stream
/// and the first `round(test_fraction * n_label)` go to the test side. Both
/// halves keep the corpus order.
pub fn stratified_split(corpus: &Corpus, spec: &SplitSpec) -> Result<(Corpus, Corpus)> {
    spec.validate()?;
    let mut rng = SeededRng::new(spec.seed);
    let mut in_test = vec![false; corpus.len()];
    for label in Label::ALL {
        let members: Vec<usize> = corpus
            .documents
            .iter()
            .enumerate()
            .filter(|(_, d)| d.label == label)
            .map(|(i, _)| i)
            .collect();
        if members.is_empty() {
            return Err(Error::Precondition(format!(
                "cannot stratify: no documents labelled {label:?}"
            )));
        }
        let n_test = (spec.test_fraction * members.len() as f64).round() as usize;
        let order = rng.permutation(members.len());
        for &k in order.iter().take(n_test) {
            in_test[members[k]] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (doc, t) in corpus.documents.iter().zip(in_test) {
        if t {
            test.push(doc.clone());
        } else {
            train.push(doc.clone());
        }
    }
    Ok((Corpus::from_documents(train), Corpus::from_documents(test)))
}

/// Writes a corpus in the ISOT column layout plus an explicit `label` column.
pub fn write_labeled_csv(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut writer = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    writer
        .write_record(["title", "text", "subject", "date", "label"])
        .map_err(|e| csv_error(path, e))?;
    for d in corpus.documents() {
        let class = d.label.class().to_string();
        writer
            .write_record([&d.title, &d.body, &d.subject, &d.date, &class])
            .map_err(|e| csv_error(path, e))?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
