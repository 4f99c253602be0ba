//! Report and finding-label ingestion, no-finding filtering, group split and
//! cross-group pair enumeration.

use std::collections::{HashMap, HashSet};
use std::fmt;
use std::path::Path;

use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::SplitMix64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The fourteen CheXpert finding names, in label-file column order.
pub const CHEXPERT_FINDINGS: [&str; 14] = [
    "Atelectasis",
    "Cardiomegaly",
    "Consolidation",
    "Edema",
    "Enlarged Cardiomediastinum",
    "Fracture",
    "Lung Lesion",
    "Lung Opacity",
    "No Finding",
    "Pleural Effusion",
    "Pleural Other",
    "Pneumonia",
    "Pneumothorax",
    "Support Devices",
];

pub const DEFAULT_NO_FINDING: &str = "No Finding";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: missing required column `{column}`")]
    MissingColumn { path: String, column: String },
    #[error("{path}: row {row}: duplicate report_id `{id}`")]
    DuplicateReportId {
        path: String,
        row: usize,
        id: String,
    },
    #[error("{path}: row {row}: report `{id}` has empty text")]
    EmptyText {
        path: String,
        row: usize,
        id: String,
    },
    #[error("{path}: row {row}: empty report_id")]
    MissingReportId { path: String, row: usize },
    #[error("{path}: column `{column}` is not part of the finding schema")]
    UnknownLabelColumn { path: String, column: String },
    #[error("{path}: row {row}, column `{column}`: invalid label value `{value}` (expected 1.0, 0.0, -1.0 or blank)")]
    InvalidCellValue {
        path: String,
        row: usize,
        column: String,
        value: String,
    },
    #[error("invalid finding schema: {0}")]
    InvalidSchema(String),
    #[error("corpus is empty")]
    EmptyCorpus,
    #[error("report `{0}` appears in both groups")]
    OverlappingGroups(String),
    #[error("requested {requested} reports per group but only {available} are available")]
    GroupTooLarge { requested: usize, available: usize },
    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Report {
    pub report_id: String,
    pub text: String,
}

/// Ordered finding names; vector positions are derived from this order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FindingSchema {
    #[serde(rename = "finding_names")]
    names: Vec<String>,
    no_finding_name: String,
}

impl Default for FindingSchema {
    fn default() -> Self {
        Self {
            names: CHEXPERT_FINDINGS.iter().map(|s| s.to_string()).collect(),
            no_finding_name: DEFAULT_NO_FINDING.to_string(),
        }
    }
}

impl FindingSchema {
    pub fn new(
        names: Vec<String>,
        no_finding_name: impl Into<String>,
    ) -> Result<Self, CorpusError> {
        let schema = Self {
            names,
            no_finding_name: no_finding_name.into(),
        };
        schema.validate()?;
        Ok(schema)
    }

    /// Parses a schema override such as
    ///
    /// ```toml
    /// finding_names = ["Atelectasis", "No Finding"]
    /// no_finding_name = "No Finding"
    /// ```
    pub fn from_toml_str(s: &str) -> Result<Self, CorpusError> {
        let schema: Self =
            toml::from_str(s).map_err(|e| CorpusError::InvalidSchema(e.to_string()))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn load(path: &Path) -> Result<Self, CorpusError> {
        let text = std::fs::read_to_string(path).map_err(|source| CorpusError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_toml_str(&text)
    }

    fn validate(&self) -> Result<(), CorpusError> {
        if self.names.is_empty() {
            return Err(CorpusError::InvalidSchema("no finding names".into()));
        }
        let mut seen = HashSet::new();
        for name in &self.names {
            if name.trim().is_empty() {
                return Err(CorpusError::InvalidSchema("empty finding name".into()));
            }
            if !seen.insert(name.as_str()) {
                return Err(CorpusError::InvalidSchema(format!(
                    "duplicate finding name `{name}`"
                )));
            }
        }
        if !seen.contains(self.no_finding_name.as_str()) {
            return Err(CorpusError::InvalidSchema(format!(
                "no_finding_name `{}` is not one of the finding names",
                self.no_finding_name
            )));
        }
        Ok(())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn no_finding_name(&self) -> &str {
        &self.no_finding_name
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    fn no_finding_index(&self) -> usize {
        self.index_of(&self.no_finding_name)
            .expect("validated schema contains its no-finding name")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum LabelSource {
    CheXpert,
    NegBio,
}

impl LabelSource {
    pub const ALL: [LabelSource; 2] = [LabelSource::CheXpert, LabelSource::NegBio];

    /// Lowercase key used in file names and CSV headers.
    pub fn key(self) -> &'static str {
        match self {
            LabelSource::CheXpert => "chexpert",
            LabelSource::NegBio => "negbio",
        }
    }
}

impl fmt::Display for LabelSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LabelSource::CheXpert => "CheXpert",
            LabelSource::NegBio => "NegBio",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelState {
    Positive,
    Negative,
    Uncertain,
    Missing,
}

impl LabelState {
    fn parse_cell(cell: &str) -> Option<Self> {
        let cell = cell.trim();
        if cell.is_empty() {
            return Some(LabelState::Missing);
        }
        let value: f64 = cell.parse().ok()?;
        if value == 1.0 {
            Some(LabelState::Positive)
        } else if value == 0.0 {
            Some(LabelState::Negative)
        } else if value == -1.0 {
            Some(LabelState::Uncertain)
        } else {
            None
        }
    }
}

/// Per-report label assignments, one per schema name in schema order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FindingVector {
    pub report_id: String,
    pub source: LabelSource,
    assignments: Vec<LabelState>,
}

impl FindingVector {
    /// Builds a vector from per-name assignments; names absent from `assigned` are Missing.
    pub fn from_assignments(
        report_id: impl Into<String>,
        source: LabelSource,
        schema: &FindingSchema,
        assigned: &[(&str, LabelState)],
    ) -> Result<Self, CorpusError> {
        let mut assignments = vec![LabelState::Missing; schema.len()];
        for (name, state) in assigned {
            let idx = schema
                .index_of(name)
                .ok_or_else(|| CorpusError::InvalidSchema(format!("unknown finding `{name}`")))?;
            assignments[idx] = *state;
        }
        Ok(Self {
            report_id: report_id.into(),
            source,
            assignments,
        })
    }

    /// Assignments in schema order.
    pub fn assignments(&self) -> &[LabelState] {
        &self.assignments
    }

    pub fn get(&self, schema: &FindingSchema, name: &str) -> Option<LabelState> {
        schema
            .index_of(name)
            .and_then(|i| self.assignments.get(i).copied())
    }

    /// True when the only Positive label is the no-finding label and every
    /// other label is Negative or Missing.
    pub fn is_no_finding_only(&self, schema: &FindingSchema) -> bool {
        let nf = schema.no_finding_index();
        self.assignments.iter().enumerate().all(|(i, state)| {
            if i == nf {
                *state == LabelState::Positive
            } else {
                matches!(state, LabelState::Negative | LabelState::Missing)
            }
        })
    }
}

fn normalize_newlines(text: &str) -> String {
    text.replace("\r\n", "\n").replace('\r', "\n")
}

fn open_csv(path: &Path) -> Result<csv::Reader<std::fs::File>, CorpusError> {
    csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)
        .map_err(|source| CorpusError::Csv {
            path: path.display().to_string(),
            source,
        })
}

fn column_index(
    headers: &csv::StringRecord,
    path: &Path,
    column: &str,
) -> Result<usize, CorpusError> {
    headers
        .iter()
        .position(|h| h.trim() == column)
        .ok_or_else(|| CorpusError::MissingColumn {
            path: path.display().to_string(),
            column: column.to_string(),
        })
}

/// Loads `report_id,text` rows. Row numbers in errors are 1-based data rows.
pub fn load_reports(path: &Path) -> Result<Vec<Report>, CorpusError> {
    let p = path.display().to_string();
    let mut reader = open_csv(path)?;
    let headers = reader
        .headers()
        .map_err(|source| CorpusError::Csv {
            path: p.clone(),
            source,
        })?
        .clone();
    let id_col = column_index(&headers, path, "report_id")?;
    let text_col = column_index(&headers, path, "text")?;

    let mut seen = HashSet::new();
    let mut reports = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|source| CorpusError::Csv {
            path: p.clone(),
            source,
        })?;
        let id = record.get(id_col).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(CorpusError::MissingReportId { path: p, row });
        }
        let text = normalize_newlines(record.get(text_col).unwrap_or(""));
        if text.trim().is_empty() {
            return Err(CorpusError::EmptyText { path: p, row, id });
        }
        if !seen.insert(id.clone()) {
            return Err(CorpusError::DuplicateReportId { path: p, row, id });
        }
        reports.push(Report {
            report_id: id,
            text,
        });
    }
    Ok(reports)
}

pub fn write_reports(path: &Path, reports: &[Report]) -> Result<(), CorpusError> {
    let p = path.display().to_string();
    let csv_err = |source| CorpusError::Csv {
        path: p.clone(),
        source,
    };
    let mut writer = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(csv_err)?;
    writer
        .write_record(["report_id", "text"])
        .map_err(csv_err)?;
    for r in reports {
        writer
            .write_record([r.report_id.as_str(), r.text.as_str()])
            .map_err(csv_err)?;
    }
    writer.flush().map_err(|source| CorpusError::Io {
        path: p.clone(),
        source,
    })
}

/// Loads a CheXpert/NegBio-style label file: `report_id` plus one column per
/// schema name, cells `1.0`, `0.0`, `-1.0` or blank.
pub fn load_finding_vectors(
    path: &Path,
    schema: &FindingSchema,
    source: LabelSource,
) -> Result<Vec<FindingVector>, CorpusError> {
    let p = path.display().to_string();
    let mut reader = open_csv(path)?;
    let headers = reader
        .headers()
        .map_err(|source| CorpusError::Csv {
            path: p.clone(),
            source,
        })?
        .clone();
    let id_col = column_index(&headers, path, "report_id")?;

    // header position -> schema position
    let mut columns: Vec<(usize, usize)> = Vec::with_capacity(schema.len());
    for (pos, header) in headers.iter().enumerate() {
        if pos == id_col {
            continue;
        }
        let header = header.trim();
        let idx = schema
            .index_of(header)
            .ok_or_else(|| CorpusError::UnknownLabelColumn {
                path: p.clone(),
                column: header.to_string(),
            })?;
        columns.push((pos, idx));
    }
    for name in schema.names() {
        column_index(&headers, path, name)?;
    }

    let mut vectors = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(|source| CorpusError::Csv {
            path: p.clone(),
            source,
        })?;
        let id = record.get(id_col).unwrap_or("").trim().to_string();
        if id.is_empty() {
            return Err(CorpusError::MissingReportId { path: p, row });
        }
        let mut assignments = vec![LabelState::Missing; schema.len()];
        for &(pos, idx) in &columns {
            let cell = record.get(pos).unwrap_or("");
            assignments[idx] =
                LabelState::parse_cell(cell).ok_or_else(|| CorpusError::InvalidCellValue {
                    path: p.clone(),
                    row,
                    column: schema.names()[idx].clone(),
                    value: cell.to_string(),
                })?;
        }
        vectors.push(FindingVector {
            report_id: id,
            source,
            assignments,
        });
    }
    Ok(vectors)
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterOutcome {
    /// Retained reports in input order.
    pub retained: Vec<Report>,
    /// Reports labeled solely "No Finding" by both sources.
    pub excluded: Vec<String>,
    /// Reports without a label row in at least one source.
    pub missing_labels: Vec<String>,
}

/// Drops reports whose only positive label is the no-finding label in both
/// sources. Reports lacking a vector from either source are dropped with a warning.
pub fn filter_no_finding_only(
    reports: &[Report],
    chexpert: &[FindingVector],
    negbio: &[FindingVector],
    schema: &FindingSchema,
) -> FilterOutcome {
    let chex: HashMap<&str, &FindingVector> =
        chexpert.iter().map(|v| (v.report_id.as_str(), v)).collect();
    let negb: HashMap<&str, &FindingVector> =
        negbio.iter().map(|v| (v.report_id.as_str(), v)).collect();

    let mut out = FilterOutcome::default();
    for report in reports {
        let id = report.report_id.as_str();
        match (chex.get(id), negb.get(id)) {
            (Some(c), Some(n)) => {
                if c.is_no_finding_only(schema) && n.is_no_finding_only(schema) {
                    out.excluded.push(report.report_id.clone());
                } else {
                    out.retained.push(report.clone());
                }
            }
            (c, n) => {
                let missing = match (c.is_none(), n.is_none()) {
                    (true, true) => "CheXpert and NegBio",
                    (true, false) => "CheXpert",
                    _ => "NegBio",
                };
                log::warn!("dropping report {id}: no {missing} label row");
                out.missing_labels.push(report.report_id.clone());
            }
        }
    }
    out
}

/// Two disjoint report groups and, once filled, their cross product.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairSet {
    pub group_a: Vec<String>,
    pub group_b: Vec<String>,
    #[serde(skip)]
    pub pairs: Vec<(String, String)>,
}

/// Shuffles report ids under `seed` and halves them into two groups.
///
/// Ids are sorted first, so the result depends only on the id multiset and
/// the seed. The shuffle is a Fisher-Yates pass drawing `next_u64() % (i + 1)`
/// from SplitMix64. With an odd count the last shuffled id is dropped.
/// `per_group` caps each group's size (taken from the front of the shuffle).
pub fn split_groups<S: AsRef<str>>(
    report_ids: &[S],
    seed: u64,
    per_group: Option<usize>,
) -> Result<PairSet, CorpusError> {
    if report_ids.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let mut ids: Vec<String> = report_ids.iter().map(|s| s.as_ref().to_string()).collect();
    ids.sort();

    let mut rng = SplitMix64::seed_from_u64(seed);
    for i in (1..ids.len()).rev() {
        let j = (rng.next_u64() % (i as u64 + 1)) as usize;
        ids.swap(i, j);
    }

    if ids.len() % 2 == 1 {
        let dropped = ids.pop().expect("non-empty");
        log::warn!("odd report count; dropping {dropped} from the split");
    }
    let mut half = ids.len() / 2;
    if let Some(n) = per_group {
        if n > half {
            return Err(CorpusError::GroupTooLarge {
                requested: n,
                available: half,
            });
        }
        half = n;
    }
    if half == 0 {
        return Err(CorpusError::EmptyCorpus);
    }
    let group_b = ids[half..2 * half].to_vec();
    ids.truncate(half);
    Ok(PairSet {
        group_a: ids,
        group_b,
        pairs: Vec::new(),
    })
}

/// Fills `pairs` with every (a, b) in row-major order over group A then group B.
pub fn cross_pairs(mut set: PairSet) -> Result<PairSet, CorpusError> {
    if set.group_a.is_empty() || set.group_b.is_empty() {
        return Err(CorpusError::EmptyCorpus);
    }
    let a: HashSet<&str> = set.group_a.iter().map(String::as_str).collect();
    if let Some(dup) = set.group_b.iter().find(|id| a.contains(id.as_str())) {
        return Err(CorpusError::OverlappingGroups(dup.clone()));
    }
    set.pairs = set
        .group_a
        .iter()
        .flat_map(|a| set.group_b.iter().map(move |b| (a.clone(), b.clone())))
        .collect();
    Ok(set)
}
