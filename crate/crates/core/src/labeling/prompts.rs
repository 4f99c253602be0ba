use std::path::Path;

use super::cache::PromptStage;
use super::provider::{ChatMessage, ChatRequest};
use super::LabelingError;

const SYSTEM: &str = include_str!("../../prompts/system.txt");
const IDENTIFY: &str = include_str!("../../prompts/identify.txt");
const TASKS: &str = include_str!("../../prompts/tasks.txt");
const LABELS: &str = include_str!("../../prompts/labels.txt");

/// Separator placed between sample reports in the task-generation prompt.
pub(crate) const SAMPLE_SEPARATOR: &str = "\n\n---\n\n";

/// Prompt templates with `{{report_text}}` and `{{task_instruction}}`
/// placeholders. The built-in set is compiled in; a directory holding
/// `identify.txt`, `tasks.txt`, `labels.txt` (and optionally `system.txt`)
/// can override it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplates {
    pub system: String,
    pub identify: String,
    pub tasks: String,
    pub labels: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        Self {
            system: SYSTEM.to_string(),
            identify: IDENTIFY.to_string(),
            tasks: TASKS.to_string(),
            labels: LABELS.to_string(),
        }
    }
}

impl PromptTemplates {
    pub fn load_dir(dir: &Path) -> Result<Self, LabelingError> {
        let read = |name: &str| {
            let path = dir.join(name);
            std::fs::read_to_string(&path).map_err(|source| LabelingError::Template {
                path: path.display().to_string(),
                source,
            })
        };
        let system = if dir.join("system.txt").exists() {
            read("system.txt")?
        } else {
            SYSTEM.to_string()
        };
        Ok(Self {
            system,
            identify: read("identify.txt")?,
            tasks: read("tasks.txt")?,
            labels: read("labels.txt")?,
        })
    }

    fn request(
        &self,
        stage: PromptStage,
        user: String,
        report: Option<(&str, &str)>,
    ) -> ChatRequest {
        ChatRequest {
            stage,
            report_id: report.map(|(id, _)| id.to_string()),
            report_text: report.map(|(_, text)| text.to_string()),
            messages: vec![
                ChatMessage::system(self.system.trim_end()),
                ChatMessage::user(user),
            ],
        }
    }

    pub fn identify_request(&self, report_id: &str, report_text: &str) -> ChatRequest {
        let user = fill(&self.identify, report_text.trim(), "");
        self.request(PromptStage::Identify, user, Some((report_id, report_text)))
    }

    pub fn tasks_request(&self, samples: &[&str]) -> ChatRequest {
        let joined = samples
            .iter()
            .map(|s| s.trim())
            .collect::<Vec<_>>()
            .join(SAMPLE_SEPARATOR);
        let user = fill(&self.tasks, &joined, "");
        self.request(PromptStage::Tasks, user, None)
    }

    pub fn labels_request(
        &self,
        report_id: &str,
        report_text: &str,
        task_instruction: &str,
    ) -> ChatRequest {
        let user = fill(&self.labels, report_text.trim(), task_instruction.trim());
        self.request(PromptStage::Labels, user, Some((report_id, report_text)))
    }
}

fn fill(template: &str, report_text: &str, task_instruction: &str) -> String {
    template
        .trim_end()
        .replace("{{task_instruction}}", task_instruction)
        .replace("{{report_text}}", report_text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_templates_carry_placeholders() {
        let t = PromptTemplates::default();
        assert!(t.identify.contains("{{report_text}}"));
        assert!(t.tasks.contains("{{report_text}}"));
        assert!(t.labels.contains("{{report_text}}"));
        assert!(t.labels.contains("{{task_instruction}}"));
    }

    #[test]
    fn placeholders_are_filled() {
        let t = PromptTemplates::default();
        let req = t.labels_request("r1", "  Heart is enlarged.\n", "List findings.");
        let user = &req.messages[1].content;
        assert!(user.contains("Heart is enlarged."));
        assert!(user.starts_with("List findings."));
        assert!(!user.contains("{{"));
        assert_eq!(req.report_id.as_deref(), Some("r1"));
    }

    #[test]
    fn prompt_hash_tracks_content() {
        let t = PromptTemplates::default();
        let a = t.labels_request("r1", "text a", "x");
        let b = t.labels_request("r2", "text a", "x");
        let c = t.labels_request("r1", "text b", "x");
        // the hash covers the prompt only; the report id is part of the cache key
        assert_eq!(a.prompt_hash(), b.prompt_hash());
        assert_ne!(a.prompt_hash(), c.prompt_hash());
        assert_eq!(a.prompt_hash().len(), 64);
    }
}
