use std::collections::{BTreeMap, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use serde::{Deserialize, Serialize};

use super::cache::{CacheKey, CacheRecord, LabelCache, PromptStage};
use super::parse::{parse_label_list, parse_tasks};
use super::prompts::PromptTemplates;
use super::provider::{
    complete_with_retry, ChatProvider, ChatRequest, ProviderFingerprint, RetryPolicy,
};
use super::{GeneratedLabelSet, LabelingError, TaskDefinition};
use crate::corpus::Report;

#[derive(Debug, Clone)]
pub struct BatchOptions {
    pub templates: PromptTemplates,
    pub retry: RetryPolicy,
    /// Maximum number of provider requests in flight.
    pub concurrency: usize,
}

impl Default for BatchOptions {
    fn default() -> Self {
        Self {
            templates: PromptTemplates::default(),
            retry: RetryPolicy::default(),
            concurrency: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelFailure {
    pub report_id: String,
    pub error: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BatchOutcome {
    pub labels: BTreeMap<String, GeneratedLabelSet>,
    pub failures: Vec<LabelFailure>,
    pub cache_hits: usize,
    /// Reports that needed a provider round trip (retries not counted).
    pub provider_requests: usize,
}

fn cache_key(
    stage: PromptStage,
    report_id: &str,
    task_id: &str,
    fp: &ProviderFingerprint,
    req: &ChatRequest,
) -> CacheKey {
    CacheKey {
        stage,
        report_id: report_id.to_string(),
        task_id: task_id.to_string(),
        model: fp.model.clone(),
        temperature: fp.temperature.to_string(),
        prompt_sha256: req.prompt_hash(),
    }
}

/// Looks the request up in the cache, otherwise asks the provider. Returns
/// the raw response and whether it came from the cache.
fn cached_completion<P: ChatProvider + ?Sized>(
    provider: &P,
    request: &ChatRequest,
    key: &CacheKey,
    cache: Option<&LabelCache>,
    retry: &RetryPolicy,
) -> Result<(String, bool), LabelingError> {
    if let Some(rec) = cache.and_then(|c| c.get(key)) {
        return Ok((rec.raw_response, true));
    }
    Ok((complete_with_retry(provider, request, retry)?, false))
}

fn non_empty(report: &Report) -> Result<(), LabelingError> {
    if report.text.trim().is_empty() {
        return Err(LabelingError::Precondition(format!(
            "report `{}` has empty text",
            report.report_id
        )));
    }
    Ok(())
}

/// Asks the provider what kind of document the report is, with no context.
/// The answer is kept for audit only.
pub fn identify_text<P: ChatProvider + ?Sized>(
    provider: &P,
    report: &Report,
    options: &BatchOptions,
    cache: Option<&LabelCache>,
) -> Result<String, LabelingError> {
    non_empty(report)?;
    let req = options
        .templates
        .identify_request(&report.report_id, &report.text);
    let key = cache_key(
        PromptStage::Identify,
        &report.report_id,
        "",
        &provider.fingerprint(),
        &req,
    );
    let (raw, hit) = cached_completion(provider, &req, &key, cache, &options.retry)?;
    if let (Some(cache), false) = (cache, hit) {
        cache.append(CacheRecord {
            key,
            labels: None,
            raw_response: raw.clone(),
            error: None,
        })?;
    }
    Ok(raw.trim().to_string())
}

/// Asks the provider for candidate labeling tasks given sample reports.
/// Unparseable responses are written to the cache (flagged, never served) so
/// they can be inspected.
pub fn generate_tasks<P: ChatProvider + ?Sized>(
    provider: &P,
    samples: &[Report],
    options: &BatchOptions,
    cache: Option<&LabelCache>,
) -> Result<Vec<TaskDefinition>, LabelingError> {
    if samples.is_empty() {
        return Err(LabelingError::Precondition(
            "task generation needs at least one sample report".into(),
        ));
    }
    for s in samples {
        non_empty(s)?;
    }
    let texts: Vec<&str> = samples.iter().map(|r| r.text.as_str()).collect();
    let ids: Vec<&str> = samples.iter().map(|r| r.report_id.as_str()).collect();
    let req = options.templates.tasks_request(&texts);
    let key = cache_key(
        PromptStage::Tasks,
        &ids.join(","),
        "",
        &provider.fingerprint(),
        &req,
    );
    let (raw, hit) = cached_completion(provider, &req, &key, cache, &options.retry)?;
    let parsed = parse_tasks(&raw);
    if let (Some(cache), false) = (cache, hit) {
        cache.append(CacheRecord {
            key,
            labels: None,
            raw_response: raw,
            error: parsed.as_ref().err().map(|e| e.to_string()),
        })?;
    }
    parsed
}

/// Picks the single task whose name contains `pattern` (case-insensitive).
pub fn select_task(
    tasks: &[TaskDefinition],
    pattern: &str,
) -> Result<TaskDefinition, LabelingError> {
    if tasks.is_empty() {
        return Err(LabelingError::Precondition(
            "no tasks to select from".into(),
        ));
    }
    let needle = pattern.to_lowercase();
    let matches: Vec<&TaskDefinition> = tasks
        .iter()
        .filter(|t| t.name.to_lowercase().contains(&needle))
        .collect();
    match matches.as_slice() {
        [] => Err(LabelingError::NoMatch(pattern.to_string())),
        [one] => Ok((*one).clone()),
        many => Err(LabelingError::AmbiguousMatch {
            pattern: pattern.to_string(),
            candidates: many.iter().map(|t| t.name.clone()).collect(),
        }),
    }
}

/// Result of one label request before it is committed to the cache.
struct Labeled {
    result: Result<GeneratedLabelSet, LabelingError>,
    hit: bool,
    requested: bool,
    to_append: Option<CacheRecord>,
}

fn label_one<P: ChatProvider + ?Sized>(
    provider: &P,
    report: &Report,
    task: &TaskDefinition,
    options: &BatchOptions,
    cache: Option<&LabelCache>,
) -> Labeled {
    let fail = |e| Labeled {
        result: Err(e),
        hit: false,
        requested: false,
        to_append: None,
    };
    if let Err(e) = non_empty(report) {
        return fail(e);
    }
    let fingerprint = provider.fingerprint();
    let req = options
        .templates
        .labels_request(&report.report_id, &report.text, &task.instruction);
    let key = cache_key(
        PromptStage::Labels,
        &report.report_id,
        &task.task_id,
        &fingerprint,
        &req,
    );
    let set = |labels: Vec<String>, raw_response: String| GeneratedLabelSet {
        report_id: report.report_id.clone(),
        task_id: task.task_id.clone(),
        labels,
        raw_response,
        fingerprint: fingerprint.clone(),
    };

    if let Some(rec) = cache.and_then(|c| c.get(&key)) {
        if let Some(labels) = rec.labels {
            return Labeled {
                result: Ok(set(labels, rec.raw_response)),
                hit: true,
                requested: false,
                to_append: None,
            };
        }
    }
    let raw = match complete_with_retry(provider, &req, &options.retry) {
        Ok(raw) => raw,
        Err(e) => {
            return Labeled {
                requested: true,
                ..fail(e.into())
            }
        }
    };
    let parsed = parse_label_list(&raw).and_then(|labels| {
        if labels.is_empty() {
            Err(LabelingError::EmptyLabelList(report.report_id.clone()))
        } else {
            Ok(labels)
        }
    });
    let record = CacheRecord {
        key,
        labels: parsed.as_ref().ok().cloned(),
        raw_response: raw.clone(),
        error: parsed.as_ref().err().map(|e| e.to_string()),
    };
    Labeled {
        result: parsed.map(|labels| set(labels, raw)),
        hit: false,
        requested: true,
        to_append: Some(record),
    }
}

/// Labels one report under `task`, consulting and updating the cache.
pub fn generate_labels<P: ChatProvider + ?Sized>(
    provider: &P,
    report: &Report,
    task: &TaskDefinition,
    options: &BatchOptions,
    cache: Option<&LabelCache>,
) -> Result<GeneratedLabelSet, LabelingError> {
    let out = label_one(provider, report, task, options, cache);
    if let (Some(cache), Some(rec)) = (cache, out.to_append) {
        cache.append(rec)?;
    }
    out.result
}

/// Labels every report with at most `options.concurrency` requests in
/// flight. A failing report is recorded and the batch carries on. Cache
/// records are appended as soon as they are final, in input order, so the
/// cache file does not depend on thread scheduling.
pub fn label_corpus<P: ChatProvider + ?Sized>(
    provider: &P,
    reports: &[Report],
    task: &TaskDefinition,
    options: &BatchOptions,
    cache: Option<&LabelCache>,
) -> Result<BatchOutcome, LabelingError> {
    let mut outcome = BatchOutcome::default();
    let workers = options.concurrency.max(1).min(reports.len().max(1));
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, Labeled)>();

    std::thread::scope(|scope| -> Result<(), LabelingError> {
        for _ in 0..workers {
            let tx = tx.clone();
            let next = &next;
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(report) = reports.get(i) else { break };
                if tx
                    .send((i, label_one(provider, report, task, options, cache)))
                    .is_err()
                {
                    break;
                }
            });
        }
        drop(tx);

        let mut pending: HashMap<usize, Labeled> = HashMap::new();
        let mut cursor = 0;
        let mut write_error = None;
        for (i, labeled) in rx {
            pending.insert(i, labeled);
            while let Some(done) = pending.remove(&cursor) {
                let report_id = &reports[cursor].report_id;
                cursor += 1;
                if done.hit {
                    outcome.cache_hits += 1;
                }
                if done.requested {
                    outcome.provider_requests += 1;
                }
                if let (Some(cache), Some(rec)) = (cache, done.to_append) {
                    if write_error.is_none() {
                        if let Err(e) = cache.append(rec) {
                            write_error = Some(e);
                        }
                    }
                }
                match done.result {
                    Ok(set) => {
                        outcome.labels.insert(report_id.clone(), set);
                    }
                    Err(e) => {
                        log::warn!("labeling `{report_id}` failed: {e}");
                        outcome.failures.push(LabelFailure {
                            report_id: report_id.clone(),
                            error: e.to_string(),
                        });
                    }
                }
            }
        }
        match write_error {
            Some(e) => Err(e),
            None => Ok(()),
        }
    })?;
    Ok(outcome)
}
