use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, BufReader};
use std::path::Path;
use std::time::Duration;

use radsim_core::corpus::{
    cross_pairs, filter_no_finding_only, load_finding_vectors, load_reports, split_groups,
    FindingSchema, FindingVector, LabelSource, PairSet, Report,
};
use radsim_core::embedding::{
    labelset_to_text, CombineMode, Embedder, EmbeddingCache, EmbeddingProvider, HashedEmbedding,
    HttpEmbeddingProvider, PrecomputedFile,
};
use radsim_core::gt::{encode_vector, EncodingStore};
use radsim_core::harness::{
    hexbin, read_scores_csv, run_all, write_scores_csv, write_text, HarnessError, Method,
    PairFailure, ScoringInputs, SummaryTable,
};
use radsim_core::labeling::{
    generate_tasks, identify_text, label_corpus, select_task, BatchOptions, ChatProvider,
    ChatProviderConfig, GeneratedLabelSet, LabelCache, LabelFailure, LabelingError, Lexicon,
    MockProvider, OpenAiChatProvider, PromptTemplates, RetryPolicy, TaskDefinition,
};
use radsim_core::lexical::tokenize;
use radsim_core::report::{render_hexbin_svg, render_summary_markdown, PlotSpec, ReportError};
use serde::{Deserialize, Serialize};

use crate::config::{ChatKind, EmbedderKind, RunConfig};
use crate::{CliError, EXIT_LABEL_FAILURES};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestCounts {
    pub reports: usize,
    pub retained: usize,
    pub excluded: usize,
    pub missing_labels: usize,
    pub group_a: usize,
    pub group_b: usize,
    pub pairs: usize,
}

/// Output of `ingest`: which reports survive filtering and how they split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub seed: u64,
    pub per_group: Option<usize>,
    pub counts: ManifestCounts,
    pub retained: Vec<String>,
    pub excluded: Vec<String>,
    pub missing_labels: Vec<String>,
    pub group_a: Vec<String>,
    pub group_b: Vec<String>,
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).expect("serializable");
    text.push('\n');
    write_text(path, &text).map_err(CliError::from)
}

fn schema(cfg: &RunConfig) -> Result<FindingSchema, CliError> {
    match &cfg.paths.schema {
        Some(p) => FindingSchema::load(p).map_err(|e| CliError::input(e.to_string())),
        None => Ok(FindingSchema::default()),
    }
}

struct Inputs {
    schema: FindingSchema,
    reports: Vec<Report>,
    chexpert: Vec<FindingVector>,
    negbio: Vec<FindingVector>,
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs, CliError> {
    let schema = schema(cfg)?;
    let input = |e: radsim_core::corpus::CorpusError| CliError::input(e.to_string());
    Ok(Inputs {
        reports: load_reports(&cfg.paths.reports).map_err(input)?,
        chexpert: load_finding_vectors(&cfg.paths.chexpert, &schema, LabelSource::CheXpert)
            .map_err(input)?,
        negbio: load_finding_vectors(&cfg.paths.negbio, &schema, LabelSource::NegBio)
            .map_err(input)?,
        schema,
    })
}

/// Filters the corpus, splits it into two groups and writes `manifest.json`.
pub fn cmd_ingest(cfg: &RunConfig) -> Result<Manifest, CliError> {
    let inputs = load_inputs(cfg)?;
    let outcome = filter_no_finding_only(
        &inputs.reports,
        &inputs.chexpert,
        &inputs.negbio,
        &inputs.schema,
    );
    let retained: Vec<String> = outcome
        .retained
        .iter()
        .map(|r| r.report_id.clone())
        .collect();
    let split = split_groups(&retained, cfg.seed(), cfg.per_group)
        .map_err(|e| CliError::degenerate(e.to_string()))?;
    let manifest = Manifest {
        seed: cfg.seed(),
        per_group: cfg.per_group,
        counts: ManifestCounts {
            reports: inputs.reports.len(),
            retained: retained.len(),
            excluded: outcome.excluded.len(),
            missing_labels: outcome.missing_labels.len(),
            group_a: split.group_a.len(),
            group_b: split.group_b.len(),
            pairs: split.group_a.len() * split.group_b.len(),
        },
        retained,
        excluded: outcome.excluded,
        missing_labels: outcome.missing_labels,
        group_a: split.group_a,
        group_b: split.group_b,
    };
    write_json(&cfg.manifest_path(), &manifest)?;
    Ok(manifest)
}

fn read_manifest(cfg: &RunConfig) -> Result<Manifest, CliError> {
    let path = cfg.manifest_path();
    let text = std::fs::read_to_string(&path).map_err(|_| {
        CliError::prerequisite(format!(
            "{} not found; run `radsim ingest` first",
            path.display()
        ))
    })?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::prerequisite(format!("{}: {e}; rerun `radsim ingest`", path.display()))
    })
}

/// The chat provider named by the config.
pub fn chat_provider(cfg: &RunConfig) -> Result<Box<dyn ChatProvider>, CliError> {
    match cfg.chat.provider {
        ChatKind::Mock => {
            let path = cfg
                .chat
                .lexicon
                .as_ref()
                .ok_or_else(|| CliError::input("mock provider needs chat.lexicon"))?;
            let lexicon = Lexicon::load(path).map_err(|e| CliError::input(e.to_string()))?;
            let mut mock = MockProvider::new(lexicon);
            if let Some(model) = &cfg.chat.model {
                mock = mock.with_model(model.clone());
            }
            Ok(Box::new(mock))
        }
        ChatKind::Http => {
            let provider = OpenAiChatProvider::new(ChatProviderConfig {
                endpoint: cfg.chat.endpoint.clone().unwrap_or_default(),
                model: cfg.chat.model.clone().unwrap_or_default(),
                temperature: cfg.chat.temperature,
                max_retries: cfg.chat.max_retries,
                timeout_secs: cfg.chat.timeout_secs,
                api_key_env: cfg.chat.api_key_env.clone(),
            })
            .map_err(|e| CliError::input(e.to_string()))?;
            Ok(Box::new(provider))
        }
    }
}

fn batch_options(cfg: &RunConfig) -> Result<BatchOptions, CliError> {
    let templates = match &cfg.chat.prompts_dir {
        Some(dir) => PromptTemplates::load_dir(dir).map_err(|e| CliError::input(e.to_string()))?,
        None => PromptTemplates::default(),
    };
    Ok(BatchOptions {
        templates,
        retry: RetryPolicy {
            max_retries: cfg.chat.max_retries,
            base_delay: Duration::from_millis(cfg.chat.retry_base_ms),
            max_delay: Duration::from_secs(30),
        },
        concurrency: cfg.chat.concurrency,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Identification {
    pub report_id: String,
    pub identification: String,
}

/// `pipeline.json`: the audit trail of the prompt stages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineRecord {
    pub model: String,
    pub temperature: f64,
    pub identifications: Vec<Identification>,
    pub tasks: Vec<TaskDefinition>,
    pub task_selector: String,
    pub selected_task: TaskDefinition,
    pub labeled: usize,
    pub failures: Vec<LabelFailure>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabelSummary {
    pub record: PipelineRecord,
    pub cache_hits: usize,
    pub provider_requests: usize,
}

fn labeling_failed(stage: &str, e: LabelingError) -> CliError {
    let code = match e {
        LabelingError::NoMatch(_) | LabelingError::AmbiguousMatch { .. } => crate::EXIT_INPUT,
        LabelingError::Cache { .. } | LabelingError::Template { .. } => crate::EXIT_FAILURE,
        _ => EXIT_LABEL_FAILURES,
    };
    CliError::new(code, format!("{stage}: {e}"))
}

/// Runs identification and task generation on the first group-A reports,
/// selects the task, labels every retained report and writes
/// `labels.jsonl` and `pipeline.json`. Permanent per-report failures leave
/// the successful label sets written and yield exit code 5.
pub fn cmd_label(cfg: &RunConfig, provider: &dyn ChatProvider) -> Result<LabelSummary, CliError> {
    let manifest = read_manifest(cfg)?;
    let reports = load_reports(&cfg.paths.reports).map_err(|e| CliError::input(e.to_string()))?;
    let by_id: HashMap<&str, &Report> = reports.iter().map(|r| (r.report_id.as_str(), r)).collect();
    let pick = |ids: &[String]| -> Result<Vec<Report>, CliError> {
        ids.iter()
            .map(|id| {
                by_id.get(id.as_str()).map(|r| (*r).clone()).ok_or_else(|| {
                    CliError::prerequisite(format!("report `{id}` is in the manifest but not the corpus; rerun `radsim ingest`"))
                })
            })
            .collect()
    };
    let retained = pick(&manifest.retained)?;
    let samples = pick(&manifest.group_a[..cfg.chat.identify_samples.min(manifest.group_a.len())])?;
    if samples.is_empty() {
        return Err(CliError::degenerate(
            "group A is empty; nothing to sample for task generation",
        ));
    }

    let options = batch_options(cfg)?;
    let cache = LabelCache::open(&cfg.cache_dir().join("labels.jsonl"))
        .map_err(|e| CliError::io(e.to_string()))?;
    let identifications = samples
        .iter()
        .map(|r| {
            identify_text(provider, r, &options, Some(&cache)).map(|identification| {
                Identification {
                    report_id: r.report_id.clone(),
                    identification,
                }
            })
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| labeling_failed("identification", e))?;
    let tasks = generate_tasks(provider, &samples, &options, Some(&cache))
        .map_err(|e| labeling_failed("task generation", e))?;
    let task = select_task(&tasks, &cfg.chat.task_selector)
        .map_err(|e| labeling_failed("task selection", e))?;

    let outcome = label_corpus(provider, &retained, &task, &options, Some(&cache))
        .map_err(|e| labeling_failed("labeling", e))?;

    let mut lines = String::new();
    for r in &retained {
        if let Some(set) = outcome.labels.get(&r.report_id) {
            lines.push_str(&serde_json::to_string(set).expect("serializable"));
            lines.push('\n');
        }
    }
    write_text(&cfg.labels_path(), &lines)?;
    let fp = provider.fingerprint();
    let record = PipelineRecord {
        model: fp.model,
        temperature: fp.temperature,
        identifications,
        tasks,
        task_selector: cfg.chat.task_selector.clone(),
        selected_task: task,
        labeled: outcome.labels.len(),
        failures: outcome.failures.clone(),
    };
    write_json(&cfg.pipeline_path(), &record)?;

    if !outcome.failures.is_empty() {
        let ids: Vec<&str> = outcome
            .failures
            .iter()
            .map(|f| f.report_id.as_str())
            .collect();
        return Err(CliError::new(
            EXIT_LABEL_FAILURES,
            format!(
                "{} of {} reports failed labeling ({}); rerun `radsim label` to retry only those",
                ids.len(),
                retained.len(),
                ids.join(", ")
            ),
        ));
    }
    Ok(LabelSummary {
        record,
        cache_hits: outcome.cache_hits,
        provider_requests: outcome.provider_requests,
    })
}

fn read_labels(cfg: &RunConfig) -> Result<BTreeMap<String, GeneratedLabelSet>, CliError> {
    let path = cfg.labels_path();
    let file = std::fs::File::open(&path).map_err(|_| {
        CliError::prerequisite(format!(
            "{} not found; run `radsim label` first",
            path.display()
        ))
    })?;
    let mut sets = BTreeMap::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let set: GeneratedLabelSet = serde_json::from_str(&line).map_err(|e| {
            CliError::prerequisite(format!(
                "{}:{}: {e}; rerun `radsim label`",
                path.display(),
                i + 1
            ))
        })?;
        sets.insert(set.report_id.clone(), set);
    }
    Ok(sets)
}

/// The embedding provider named by the config.
pub fn embedding_provider(cfg: &RunConfig) -> Result<Box<dyn EmbeddingProvider>, CliError> {
    let e = &cfg.embedding;
    Ok(match e.kind {
        EmbedderKind::Hashed => Box::new(
            HashedEmbedding::new(e.dim, e.hash_seed).map_err(|e| CliError::input(e.to_string()))?,
        ),
        EmbedderKind::Http => {
            let url = e
                .url
                .as_deref()
                .ok_or_else(|| CliError::input("embedding.url is required"))?;
            Box::new(
                HttpEmbeddingProvider::connect(url, Duration::from_secs(e.timeout_secs))
                    .map_err(|e| CliError::new(crate::EXIT_FAILURE, e.to_string()))?,
            )
        }
        EmbedderKind::File => {
            let path = e
                .path
                .as_ref()
                .ok_or_else(|| CliError::input("embedding.path is required"))?;
            Box::new(PrecomputedFile::load(path).map_err(|e| CliError::input(e.to_string()))?)
        }
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreSummary {
    pub pairs: usize,
    pub texts_embedded: usize,
    pub failures: Vec<PairFailure>,
}

/// Embeds every grouped report's label set, scores the cross product and
/// writes `scores.csv`. Pairs that fail are left out and yield exit code 4.
pub fn cmd_score<P: EmbeddingProvider>(
    cfg: &RunConfig,
    provider: P,
) -> Result<ScoreSummary, CliError> {
    let manifest = read_manifest(cfg)?;
    let labels = read_labels(cfg)?;
    let grouped: Vec<&String> = manifest.group_a.iter().chain(&manifest.group_b).collect();
    let unlabeled: Vec<&str> = grouped
        .iter()
        .filter(|id| !labels.contains_key(id.as_str()))
        .map(|s| s.as_str())
        .collect();
    if !unlabeled.is_empty() {
        return Err(CliError::prerequisite(format!(
            "no label set for {} report(s) ({}); run `radsim label` first",
            unlabeled.len(),
            unlabeled.join(", ")
        )));
    }

    let inputs = load_inputs(cfg)?;
    let mut encodings = EncodingStore::new();
    for v in inputs.chexpert.iter().chain(&inputs.negbio) {
        if grouped.iter().any(|id| **id == v.report_id) {
            encodings.insert(
                encode_vector(v, &inputs.schema).map_err(|e| CliError::input(e.to_string()))?,
            );
        }
    }
    let texts: HashMap<&str, &str> = inputs
        .reports
        .iter()
        .map(|r| (r.report_id.as_str(), r.text.as_str()))
        .collect();
    let tokens = grouped
        .iter()
        .map(|id| {
            texts
                .get(id.as_str())
                .map(|t| (id.to_string(), tokenize(t)))
                .ok_or_else(|| {
                    CliError::prerequisite(format!(
                        "report `{id}` is no longer in the corpus; rerun `radsim ingest`"
                    ))
                })
        })
        .collect::<Result<HashMap<_, _>, _>>()?;

    let cache = EmbeddingCache::open(&cfg.cache_dir().join("embeddings.jsonl"))
        .map_err(|e| CliError::io(e.to_string()))?;
    let embedder = Embedder::new(provider)
        .with_cache(cache)
        .with_batching(cfg.embedding.batch_size, cfg.embedding.concurrency);
    let mut label_vectors = HashMap::new();
    let degenerate =
        |e: radsim_core::embedding::EmbeddingError| CliError::degenerate(format!("embedding: {e}"));
    match cfg.embedding.combine {
        CombineMode::Join => {
            let joined = grouped
                .iter()
                .map(|id| labelset_to_text(&labels[id.as_str()]))
                .collect::<Result<Vec<_>, _>>()
                .map_err(degenerate)?;
            let refs: Vec<&str> = joined.iter().map(String::as_str).collect();
            let vectors = embedder.embed(&refs).map_err(degenerate)?;
            for (id, v) in grouped.iter().zip(vectors) {
                label_vectors.insert(id.to_string(), v.values);
            }
        }
        CombineMode::MeanPool => {
            for id in &grouped {
                let v = embedder
                    .labelset_vector(&labels[id.as_str()], CombineMode::MeanPool)
                    .map_err(degenerate)?;
                label_vectors.insert(id.to_string(), v);
            }
        }
    }

    let pairs = cross_pairs(PairSet {
        group_a: manifest.group_a.clone(),
        group_b: manifest.group_b.clone(),
        pairs: Vec::new(),
    })
    .map_err(|e| CliError::degenerate(e.to_string()))?;
    let scoring = ScoringInputs {
        tokens,
        label_vectors,
        encodings: &encodings,
        bleu: cfg.metrics.bleu()?,
    };
    let outcome = run_all(&pairs.pairs, &scoring, cfg.metrics.threads);
    write_scores_csv(&cfg.scores_path(), &outcome.scores)?;
    if !outcome.failures.is_empty() {
        let f = &outcome.failures[0];
        return Err(CliError::degenerate(format!(
            "{} pair(s) could not be scored, e.g. ({}, {}): {}",
            outcome.failures.len(),
            f.a_id,
            f.b_id,
            f.error
        )));
    }
    Ok(ScoreSummary {
        pairs: outcome.scores.len(),
        texts_embedded: embedder.texts_requested(),
        failures: outcome.failures,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportSummary {
    pub table: SummaryTable,
    pub svgs: Vec<String>,
    pub empty_layers: Vec<String>,
}

/// Reads `scores.csv` and writes `report/summary.{csv,md}` plus a CSV and,
/// when non-empty, an SVG per method and source.
pub fn cmd_report(cfg: &RunConfig) -> Result<ReportSummary, CliError> {
    let path = cfg.scores_path();
    if !path.exists() {
        return Err(CliError::prerequisite(format!(
            "{} not found; run `radsim score` first",
            path.display()
        )));
    }
    let scores = read_scores_csv(&path)?;
    let table = SummaryTable::compute(&scores, cfg.metrics.difference)?;
    let dir = cfg.report_dir();
    write_text(&dir.join("summary.csv"), &table.render_csv())?;
    let md = render_summary_markdown(&table).map_err(|e| CliError::degenerate(e.to_string()))?;
    write_text(&dir.join("summary.md"), &md)?;

    let mut svgs = Vec::new();
    let mut empty_layers = Vec::new();
    for source in LabelSource::ALL {
        for method in Method::ALL {
            let layer = hexbin(
                &scores,
                method,
                source,
                cfg.metrics.hex_radius,
                cfg.metrics.min_count,
            )?;
            let stem = layer.file_stem();
            write_text(&dir.join(format!("{stem}.csv")), &layer.render_csv())?;
            match render_hexbin_svg(&layer, &PlotSpec::for_layer(&layer)) {
                Ok(svg) => {
                    write_text(&dir.join(format!("{stem}.svg")), &svg)?;
                    svgs.push(format!("{stem}.svg"));
                }
                Err(ReportError::EmptyLayer { .. }) => {
                    log::warn!(
                        "{stem}: no bin exceeds min_count = {}; SVG skipped",
                        cfg.metrics.min_count
                    );
                    let stale = dir.join(format!("{stem}.svg"));
                    if stale.exists() {
                        std::fs::remove_file(&stale)
                            .map_err(|e| CliError::io(format!("{}: {e}", stale.display())))?;
                    }
                    empty_layers.push(stem);
                }
                Err(e) => return Err(CliError::degenerate(e.to_string())),
            }
        }
    }
    Ok(ReportSummary {
        table,
        svgs,
        empty_layers,
    })
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::NoValidPairs { .. } | HarnessError::TooFewValues(_) => {
                CliError::degenerate(e.to_string())
            }
            HarnessError::Parse { .. } => {
                CliError::prerequisite(format!("{e}; rerun `radsim score`"))
            }
            HarnessError::InvalidRadius(_) => CliError::input(e.to_string()),
            other => CliError::io(other.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::EXIT_DEGENERATE;

    #[test]
    fn degenerate_harness_errors_map_to_exit_4() {
        let e: CliError = HarnessError::NoValidPairs {
            method: Method::Bleu,
            label_source: LabelSource::NegBio,
        }
        .into();
        assert_eq!(e.code, EXIT_DEGENERATE);
    }
}
