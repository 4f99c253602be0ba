//! Deterministic offline chat provider driven by a keyword lexicon.

use std::collections::{HashMap, HashSet};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};

use super::cache::PromptStage;
use super::provider::{ChatProvider, ChatRequest, ProviderError, ProviderFingerprint};
use super::LabelingError;

pub const MOCK_IDENTIFICATION: &str = "chest radiology report";

/// `(name, instruction, audience)` of the tasks the mock always proposes.
pub const MOCK_TASKS: [(&str, &str, &str); 3] = [
    (
        "Findings-based labeling",
        "List each radiological finding in the report as a short label, stating whether it is present or absent.",
        "radiologists",
    ),
    (
        "Urgency triage labeling",
        "Label the report with the urgency of follow-up it calls for.",
        "nurses and emergency department staff",
    ),
    (
        "Report structure labeling",
        "Label which standard report sections are present.",
        "clinical documentation staff",
    ),
];

/// Ordered `keyword => label` rules plus a fallback (`* => label`).
///
/// Matching runs over the lowercased text. Each rule, in file order, scans its
/// keyword's non-overlapping occurrences left to right and claims those that
/// do not overlap a span claimed by an earlier rule; the rule fires if it
/// claimed anything. Labels come out in rule order, deduplicated
/// case-insensitively.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon {
    rules: Vec<(String, String)>,
    fallback: String,
}

impl Lexicon {
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut rules = Vec::new();
        let mut fallback = None;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, label) = line
                .split_once("=>")
                .ok_or_else(|| format!("line {}: expected `keyword => label`", lineno + 1))?;
            let (key, label) = (key.trim(), label.trim());
            if key.is_empty() || label.is_empty() {
                return Err(format!("line {}: empty keyword or label", lineno + 1));
            }
            if key == "*" {
                fallback = Some(label.to_string());
            } else {
                rules.push((key.to_lowercase(), label.to_string()));
            }
        }
        let fallback = fallback.ok_or("lexicon has no `* => label` fallback rule")?;
        Ok(Self { rules, fallback })
    }

    pub fn load(path: &Path) -> Result<Self, LabelingError> {
        let text = std::fs::read_to_string(path).map_err(|source| LabelingError::Template {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
            .map_err(|reason| LabelingError::Precondition(format!("{}: {reason}", path.display())))
    }

    pub fn labels_for(&self, text: &str) -> Vec<String> {
        let lower = text.to_lowercase();
        let mut claimed: Vec<(usize, usize)> = Vec::new();
        let mut labels: Vec<String> = Vec::new();
        let mut seen = HashSet::new();
        for (key, label) in &self.rules {
            let mut fired = false;
            let mut start = 0;
            while let Some(pos) = lower[start..].find(key.as_str()) {
                let idx = start + pos;
                let end = idx + key.len();
                if claimed.iter().all(|&(a, b)| end <= a || idx >= b) {
                    claimed.push((idx, end));
                    fired = true;
                }
                start = end;
            }
            if fired && seen.insert(label.to_lowercase()) {
                labels.push(label.clone());
            }
        }
        if labels.is_empty() {
            labels.push(self.fallback.clone());
        }
        labels
    }
}

/// Answers identify requests with [`MOCK_IDENTIFICATION`], task requests with
/// [`MOCK_TASKS`] and label requests with the lexicon labels of the report.
/// Counts every call, and can be told to fail for given report ids or to
/// return a canned response for a stage.
#[derive(Debug)]
pub struct MockProvider {
    lexicon: Lexicon,
    model: String,
    fail_on: HashSet<String>,
    overrides: HashMap<PromptStage, String>,
    calls: AtomicUsize,
}

impl MockProvider {
    pub fn new(lexicon: Lexicon) -> Self {
        Self {
            lexicon,
            model: "mock-lexicon".into(),
            fail_on: HashSet::new(),
            overrides: HashMap::new(),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn with_model(mut self, model: impl Into<String>) -> Self {
        self.model = model.into();
        self
    }

    pub fn fail_on<I, S>(mut self, report_ids: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        self.fail_on.extend(report_ids.into_iter().map(Into::into));
        self
    }

    pub fn with_response(mut self, stage: PromptStage, response: impl Into<String>) -> Self {
        self.overrides.insert(stage, response.into());
        self
    }

    pub fn call_count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn reset_calls(&self) {
        self.calls.store(0, Ordering::SeqCst);
    }

    pub fn lexicon(&self) -> &Lexicon {
        &self.lexicon
    }
}

impl ChatProvider for MockProvider {
    fn fingerprint(&self) -> ProviderFingerprint {
        ProviderFingerprint {
            model: self.model.clone(),
            temperature: 0.0,
        }
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        if let Some(id) = &request.report_id {
            if self.fail_on.contains(id) {
                return Err(ProviderError::Injected(format!(
                    "configured to fail on `{id}`"
                )));
            }
        }
        if let Some(canned) = self.overrides.get(&request.stage) {
            return Ok(canned.clone());
        }
        Ok(match request.stage {
            PromptStage::Identify => MOCK_IDENTIFICATION.to_string(),
            PromptStage::Tasks => MOCK_TASKS
                .iter()
                .enumerate()
                .map(|(i, (name, instr, audience))| {
                    format!("{}. {name}: {instr} [audience: {audience}]\n", i + 1)
                })
                .collect(),
            PromptStage::Labels => {
                let text = request.report_text.as_deref().ok_or_else(|| {
                    ProviderError::InvalidResponse(
                        "mock label request carries no report text".into(),
                    )
                })?;
                self.lexicon
                    .labels_for(text)
                    .iter()
                    .enumerate()
                    .map(|(i, l)| format!("{}. {l}\n", i + 1))
                    .collect()
            }
        })
    }
}
