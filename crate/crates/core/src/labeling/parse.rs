//! Parsers for the list-shaped response contract.

use std::collections::HashSet;

use super::{LabelingError, TaskDefinition};

pub const MAX_LABEL_CHARS: usize = 120;

/// Strips a list marker (`1.`, `1)`, `-`, `*`, `•`) and returns the rest, or
/// `None` when the line is not a list item.
fn strip_marker(line: &str) -> Option<&str> {
    let line = line.trim_start();
    let mut chars = line.char_indices();
    let (_, first) = chars.next()?;
    if matches!(first, '-' | '*' | '•') {
        let rest = &line[first.len_utf8()..];
        // "**bold**" and "---" rules are not list items
        if rest.starts_with(first) {
            return None;
        }
        return Some(rest.trim());
    }
    if first.is_ascii_digit() {
        for (idx, c) in chars {
            if c.is_ascii_digit() {
                continue;
            }
            if c == '.' || c == ')' {
                return Some(line[idx + 1..].trim());
            }
            return None;
        }
    }
    None
}

fn clean_item(item: &str) -> String {
    let item = item.trim().trim_matches('*').trim();
    if item.chars().count() > MAX_LABEL_CHARS {
        item.chars()
            .take(MAX_LABEL_CHARS)
            .collect::<String>()
            .trim_end()
            .to_string()
    } else {
        item.to_string()
    }
}

/// Extracts labels from a numbered or bulleted list. Non-list lines (preamble,
/// closing remarks) are ignored. Labels are trimmed, capped at
/// [`MAX_LABEL_CHARS`] characters and deduplicated case-insensitively.
pub fn parse_label_list(raw: &str) -> Result<Vec<String>, LabelingError> {
    let items: Vec<&str> = raw.lines().filter_map(strip_marker).collect();
    if items.is_empty() {
        return Err(LabelingError::UnparseableResponse {
            reason: "no list items found".into(),
            raw_response: raw.to_string(),
        });
    }
    let mut seen = HashSet::new();
    let mut labels = Vec::new();
    for item in items {
        let label = clean_item(item);
        if label.is_empty() {
            continue;
        }
        if seen.insert(label.to_lowercase()) {
            labels.push(label);
        }
    }
    Ok(labels)
}

fn slugify(name: &str) -> String {
    let mut slug = String::new();
    for c in name.to_lowercase().chars() {
        if c.is_alphanumeric() {
            slug.push(c);
        } else if !slug.is_empty() && !slug.ends_with('-') {
            slug.push('-');
        }
    }
    while slug.ends_with('-') {
        slug.pop();
    }
    if slug.is_empty() {
        slug.push_str("task");
    }
    slug
}

/// Parses `N. <name>: <instruction> [audience: <who>]` lines. At least one
/// task name must mention findings.
pub fn parse_tasks(raw: &str) -> Result<Vec<TaskDefinition>, LabelingError> {
    let unparseable = |reason: &str| LabelingError::UnparseableResponse {
        reason: reason.to_string(),
        raw_response: raw.to_string(),
    };

    let mut tasks: Vec<TaskDefinition> = Vec::new();
    for item in raw.lines().filter_map(strip_marker) {
        let mut body = item.trim();
        let mut audience = None;
        if body.ends_with(']') {
            if let Some(open) = body.rfind('[') {
                let inner = &body[open + 1..body.len() - 1];
                if let Some((key, value)) = inner.split_once(':') {
                    if key.trim().eq_ignore_ascii_case("audience") {
                        audience = Some(value.trim().to_string()).filter(|s| !s.is_empty());
                        body = body[..open].trim();
                    }
                }
            }
        }
        let (name, instruction) = match body.split_once(':') {
            Some((n, i)) if !i.trim().is_empty() => (n.trim(), i.trim()),
            _ => (body, body),
        };
        let name = name.trim_matches('*').trim();
        if name.is_empty() || instruction.is_empty() {
            continue;
        }
        let base = slugify(name);
        let mut task_id = base.clone();
        let mut n = 2;
        while tasks.iter().any(|t| t.task_id == task_id) {
            task_id = format!("{base}-{n}");
            n += 1;
        }
        tasks.push(TaskDefinition {
            task_id,
            name: name.to_string(),
            instruction: instruction.to_string(),
            audience,
        });
    }
    if tasks.is_empty() {
        return Err(unparseable("no numbered tasks found"));
    }
    if !tasks
        .iter()
        .any(|t| t.name.to_lowercase().contains("finding"))
    {
        return Err(unparseable("no findings-oriented task in the list"));
    }
    Ok(tasks)
}
