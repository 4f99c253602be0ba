//! Pairwise scoring, mean differences against ground truth and hexagonal
//! binning of (ground truth, prediction) points.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::LabelSource;
use crate::embedding::{similarity, EmbeddingError};
use crate::gt::{gt_similarity, EncodingStore, SimilarityError};
use crate::lexical::{bleu, rouge_l, rouge_n, BleuConfig, MetricError, TokenSequence};
use crate::numfmt::g10;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("report `{0}` has no generated label set")]
    MissingLabelSet(String),
    #[error("report `{0}` has no text")]
    MissingReport(String),
    #[error(transparent)]
    Similarity(#[from] SimilarityError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("no pair has {label_source} ground truth to compare {method} against")]
    NoValidPairs {
        method: Method,
        label_source: LabelSource,
    },
    #[error("need at least 2 values for a percentile band, got {0}")]
    TooFewValues(usize),
    #[error("hex radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("{path}: {reason}")]
    Parse { path: String, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// The five similarity methods compared against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Method {
    GptSim,
    Rouge1F1,
    Rouge2F1,
    RougeLF1,
    Bleu,
}

impl Method {
    pub const ALL: [Method; 5] = [
        Method::GptSim,
        Method::Rouge1F1,
        Method::Rouge2F1,
        Method::RougeLF1,
        Method::Bleu,
    ];

    /// Column name in `scores.csv` and file-name component.
    pub fn key(self) -> &'static str {
        match self {
            Method::GptSim => "gpt_sim",
            Method::Rouge1F1 => "rouge1_f1",
            Method::Rouge2F1 => "rouge2_f1",
            Method::RougeLF1 => "rougel_f1",
            Method::Bleu => "bleu",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::GptSim => "GPT_sim",
            Method::Rouge1F1 => "ROUGE_1_F1",
            Method::Rouge2F1 => "ROUGE_2_F1",
            Method::RougeLF1 => "ROUGE_L_F1",
            Method::Bleu => "BLEU",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub a_id: String,
    pub b_id: String,
    pub gt_chexpert: Option<f64>,
    pub gt_negbio: Option<f64>,
    pub gpt_sim: f64,
    pub rouge1_f1: f64,
    pub rouge2_f1: f64,
    pub rougel_f1: f64,
    pub bleu: f64,
}

impl PairScore {
    pub fn gt(&self, source: LabelSource) -> Option<f64> {
        match source {
            LabelSource::CheXpert => self.gt_chexpert,
            LabelSource::NegBio => self.gt_negbio,
        }
    }

    pub fn score(&self, method: Method) -> f64 {
        match method {
            Method::GptSim => self.gpt_sim,
            Method::Rouge1F1 => self.rouge1_f1,
            Method::Rouge2F1 => self.rouge2_f1,
            Method::RougeLF1 => self.rougel_f1,
            Method::Bleu => self.bleu,
        }
    }
}

/// Everything pair scoring reads: tokenized texts, one label-set vector per
/// report (already embedded) and encoded finding vectors.
#[derive(Debug, Clone)]
pub struct ScoringInputs<'a> {
    pub tokens: HashMap<String, TokenSequence>,
    pub label_vectors: HashMap<String, Vec<f64>>,
    pub encodings: &'a EncodingStore,
    pub bleu: BleuConfig,
}

fn gt_or_absent(
    a: &str,
    b: &str,
    source: LabelSource,
    store: &EncodingStore,
) -> Result<Option<f64>, HarnessError> {
    match gt_similarity(a, b, source, store) {
        Ok(v) => Ok(Some(v)),
        Err(SimilarityError::ZeroVector) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Scores one ordered pair; `a` is the lexical candidate, `b` the reference.
pub fn score_pair(a: &str, b: &str, inputs: &ScoringInputs<'_>) -> Result<PairScore, HarnessError> {
    let ta = inputs
        .tokens
        .get(a)
        .ok_or_else(|| HarnessError::MissingReport(a.into()))?;
    let tb = inputs
        .tokens
        .get(b)
        .ok_or_else(|| HarnessError::MissingReport(b.into()))?;
    let va = inputs
        .label_vectors
        .get(a)
        .ok_or_else(|| HarnessError::MissingLabelSet(a.into()))?;
    let vb = inputs
        .label_vectors
        .get(b)
        .ok_or_else(|| HarnessError::MissingLabelSet(b.into()))?;
    Ok(PairScore {
        a_id: a.to_string(),
        b_id: b.to_string(),
        gt_chexpert: gt_or_absent(a, b, LabelSource::CheXpert, inputs.encodings)?,
        gt_negbio: gt_or_absent(a, b, LabelSource::NegBio, inputs.encodings)?,
        gpt_sim: similarity(va, vb)?,
        rouge1_f1: rouge_n(ta, tb, 1)?.f1,
        rouge2_f1: rouge_n(ta, tb, 2)?.f1,
        rougel_f1: rouge_l(ta, tb).f1,
        bleu: bleu(ta, tb, inputs.bleu)?,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairFailure {
    pub a_id: String,
    pub b_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOutcome {
    /// Successful scores in pair order.
    pub scores: Vec<PairScore>,
    pub failures: Vec<PairFailure>,
}

/// Scores all pairs in parallel; output order follows `pairs`. `threads`
/// of `None` uses rayon's global pool.
pub fn run_all(
    pairs: &[(String, String)],
    inputs: &ScoringInputs<'_>,
    threads: Option<usize>,
) -> RunOutcome {
    let compute = || -> Vec<Result<PairScore, PairFailure>> {
        pairs
            .par_iter()
            .map(|(a, b)| {
                score_pair(a, b, inputs).map_err(|e| PairFailure {
                    a_id: a.clone(),
                    b_id: b.clone(),
                    error: e.to_string(),
                })
            })
            .collect()
    };
    let results = match threads {
        Some(n) => match rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
        {
            Ok(pool) => pool.install(compute),
            Err(e) => {
                log::warn!("could not build a {n}-thread pool ({e}); using the global pool");
                compute()
            }
        },
        None => compute(),
    };
    let mut outcome = RunOutcome::default();
    for r in results {
        match r {
            Ok(s) => outcome.scores.push(s),
            Err(f) => {
                log::warn!("pair ({}, {}) failed: {}", f.a_id, f.b_id, f.error);
                outcome.failures.push(f);
            }
        }
    }
    outcome
}

pub const SCORES_HEADER: &str =
    "a_id,b_id,gt_chexpert,gt_negbio,gpt_sim,rouge1_f1,rouge2_f1,rougel_f1,bleu";

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Renders `scores.csv`: reals with 10 significant digits, absent ground
/// truth as an empty cell.
pub fn render_scores_csv(scores: &[PairScore]) -> String {
    let opt = |v: Option<f64>| v.map(g10).unwrap_or_default();
    let mut out = String::with_capacity(64 * (scores.len() + 1));
    out.push_str(SCORES_HEADER);
    out.push('\n');
    for s in scores {
        let cells = [
            s.a_id.clone(),
            s.b_id.clone(),
            opt(s.gt_chexpert),
            opt(s.gt_negbio),
            g10(s.gpt_sim),
            g10(s.rouge1_f1),
            g10(s.rouge2_f1),
            g10(s.rougel_f1),
            g10(s.bleu),
        ];
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

pub fn write_scores_csv(path: &Path, scores: &[PairScore]) -> Result<(), HarnessError> {
    std::fs::write(path, render_scores_csv(scores)).map_err(io_err(path))
}

pub fn read_scores_csv(path: &Path) -> Result<Vec<PairScore>, HarnessError> {
    let parse_err = |reason: String| HarnessError::Parse {
        path: path.display().to_string(),
        reason,
    };
    let mut reader = csv::Reader::from_path(path).map_err(|e| parse_err(e.to_string()))?;
    let headers = reader
        .headers()
        .map_err(|e| parse_err(e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>().join(",") != SCORES_HEADER {
        return Err(parse_err(format!(
            "unexpected header, expected `{SCORES_HEADER}`"
        )));
    }
    let mut scores = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| parse_err(e.to_string()))?;
        let line = i + 2;
        let real = |idx: usize| -> Result<f64, HarnessError> {
            record[idx]
                .parse::<f64>()
                .map_err(|_| parse_err(format!("line {line}: `{}` is not a number", &record[idx])))
        };
        let opt = |idx: usize| -> Result<Option<f64>, HarnessError> {
            if record[idx].is_empty() {
                Ok(None)
            } else {
                real(idx).map(Some)
            }
        };
        scores.push(PairScore {
            a_id: record[0].to_string(),
            b_id: record[1].to_string(),
            gt_chexpert: opt(2)?,
            gt_negbio: opt(3)?,
            gpt_sim: real(4)?,
            rouge1_f1: real(5)?,
            rouge2_f1: real(6)?,
            rougel_f1: real(7)?,
            bleu: real(8)?,
        });
    }
    Ok(scores)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DifferenceMode {
    #[default]
    Absolute,
    Signed,
}

impl FromStr for DifferenceMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "absolute" => Ok(DifferenceMode::Absolute),
            "signed" => Ok(DifferenceMode::Signed),
            other => Err(format!(
                "unknown difference mode `{other}` (expected absolute or signed)"
            )),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub mean_difference: f64,
    pub pairs_used: usize,
    pub pairs_excluded: usize,
}

/// Mean differences for every method against one source. A pair is used
/// when its ground truth for `source` is present. Differences are
/// `score - gt` (or its absolute value), summed in pair order.
pub fn mean_differences(
    scores: &[PairScore],
    source: LabelSource,
    mode: DifferenceMode,
) -> Result<Vec<(Method, SummaryCell)>, HarnessError> {
    Method::ALL
        .iter()
        .map(|&method| {
            let mut total = 0.0f64;
            let mut used = 0usize;
            for s in scores {
                let Some(gt) = s.gt(source) else { continue };
                let d = s.score(method) - gt;
                total += match mode {
                    DifferenceMode::Absolute => d.abs(),
                    DifferenceMode::Signed => d,
                };
                used += 1;
            }
            if used == 0 {
                return Err(HarnessError::NoValidPairs {
                    method,
                    label_source: source,
                });
            }
            Ok((
                method,
                SummaryCell {
                    mean_difference: total / used as f64,
                    pairs_used: used,
                    pairs_excluded: scores.len() - used,
                },
            ))
        })
        .collect()
}

/// Methods × sources table of mean differences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub mode: DifferenceMode,
    pub cells: BTreeMap<Method, BTreeMap<LabelSource, SummaryCell>>,
}

impl SummaryTable {
    pub fn compute(scores: &[PairScore], mode: DifferenceMode) -> Result<Self, HarnessError> {
        let mut cells: BTreeMap<Method, BTreeMap<LabelSource, SummaryCell>> = BTreeMap::new();
        for source in LabelSource::ALL {
            for (method, cell) in mean_differences(scores, source, mode)? {
                cells.entry(method).or_default().insert(source, cell);
            }
        }
        Ok(Self { mode, cells })
    }

    pub fn get(&self, method: Method, source: LabelSource) -> Option<&SummaryCell> {
        self.cells.get(&method).and_then(|row| row.get(&source))
    }

    /// `method,chexpert,negbio,chexpert_pairs_used,...` with one row per method.
    pub fn render_csv(&self) -> String {
        let mut out = String::from(
            "method,chexpert,negbio,chexpert_pairs_used,negbio_pairs_used,chexpert_pairs_excluded,negbio_pairs_excluded\n",
        );
        for method in Method::ALL {
            let Some(row) = self.cells.get(&method) else {
                continue;
            };
            let cell = |s| row.get(&s);
            let mean = |s| {
                cell(s)
                    .map(|c: &SummaryCell| g10(c.mean_difference))
                    .unwrap_or_default()
            };
            let used = |s| {
                cell(s)
                    .map(|c: &SummaryCell| c.pairs_used.to_string())
                    .unwrap_or_default()
            };
            let excl = |s| {
                cell(s)
                    .map(|c: &SummaryCell| c.pairs_excluded.to_string())
                    .unwrap_or_default()
            };
            let (c, n) = (LabelSource::CheXpert, LabelSource::NegBio);
            out.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                method,
                mean(c),
                mean(n),
                used(c),
                used(n),
                excl(c),
                excl(n)
            ));
        }
        out
    }
}

/// Linear-interpolation percentile of ascending `sorted` values, `p` in
/// [0, 100].
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p / 100.0;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// (P5, P95) of the values.
pub fn percentile_band(values: &[f64]) -> Result<(f64, f64), HarnessError> {
    if values.len() < 2 {
        return Err(HarnessError::TooFewValues(values.len()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok((percentile(&sorted, 5.0), percentile(&sorted, 95.0)))
}

/// Axial coordinates `(q, s)` of the pointy-top hexagon with circumradius
/// `r` containing `(x, y)`; the cell centered at the origin is `(0, 0)`.
pub fn hex_cell(x: f64, y: f64, r: f64) -> (i64, i64) {
    let qf = (3f64.sqrt() / 3.0 * x - y / 3.0) / r;
    let sf = (2.0 / 3.0 * y) / r;
    let zf = -qf - sf;
    let (mut q, mut s, z) = (qf.round(), sf.round(), zf.round());
    let (dq, ds, dz) = ((q - qf).abs(), (s - sf).abs(), (z - zf).abs());
    if dq > ds && dq > dz {
        q = -s - z;
    } else if ds > dz {
        s = -q - z;
    }
    (q as i64, s as i64)
}

pub fn hex_center(q: i64, s: i64, r: f64) -> (f64, f64) {
    (
        3f64.sqrt() * r * (q as f64 + s as f64 / 2.0),
        1.5 * r * s as f64,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HexBin {
    pub q: i64,
    pub s: i64,
    pub x: f64,
    pub y: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HexbinLayer {
    pub method: Method,
    pub source: LabelSource,
    pub hex_radius: f64,
    pub min_count: usize,
    /// Bins with `count > min_count`, ordered by (s, q).
    pub bins: Vec<HexBin>,
    /// GT (P5, P95); absent with fewer than two GT values.
    pub band: Option<(f64, f64)>,
    /// Points binned (pairs with ground truth present).
    pub points: usize,
}

/// Bins (gt, score) points of the pairs whose `source` ground truth is
/// present.
pub fn hexbin(
    scores: &[PairScore],
    method: Method,
    source: LabelSource,
    hex_radius: f64,
    min_count: usize,
) -> Result<HexbinLayer, HarnessError> {
    if !(hex_radius > 0.0 && hex_radius.is_finite()) {
        return Err(HarnessError::InvalidRadius(hex_radius));
    }
    let mut counts: BTreeMap<(i64, i64), usize> = BTreeMap::new();
    let mut gts = Vec::new();
    for s in scores {
        let Some(gt) = s.gt(source) else { continue };
        gts.push(gt);
        let (q, row) = hex_cell(gt, s.score(method), hex_radius);
        *counts.entry((row, q)).or_default() += 1;
    }
    let bins = counts
        .into_iter()
        .filter(|&(_, c)| c > min_count)
        .map(|((s, q), count)| {
            let (x, y) = hex_center(q, s, hex_radius);
            HexBin { q, s, x, y, count }
        })
        .collect();
    Ok(HexbinLayer {
        method,
        source,
        hex_radius,
        min_count,
        bins,
        band: percentile_band(&gts).ok(),
        points: gts.len(),
    })
}

impl HexbinLayer {
    /// `x,y,count` rows preceded by a `#` metadata row.
    pub fn render_csv(&self) -> String {
        let (p5, p95) = match self.band {
            Some((lo, hi)) => (g10(lo), g10(hi)),
            None => (String::new(), String::new()),
        };
        let mut out = format!(
            "# method={} source={} hex_radius={} min_count={} gt_p5={} gt_p95={}\nx,y,count\n",
            self.method.key(),
            self.source.key(),
            g10(self.hex_radius),
            self.min_count,
            p5,
            p95
        );
        for b in &self.bins {
            out.push_str(&format!("{},{},{}\n", g10(b.x), g10(b.y), b.count));
        }
        out
    }

    pub fn file_stem(&self) -> String {
        format!("hexbin_{}_{}", self.method.key(), self.source.key())
    }
}

/// Writes `text` to `path`, creating parent directories.
pub fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(io_err(path))?;
    }
    let mut f = std::fs::File::create(path).map_err(io_err(path))?;
    f.write_all(text.as_bytes()).map_err(io_err(path))
}
