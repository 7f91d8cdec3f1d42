//! Versioned prompt templates with literal `[Placeholder]` substitution.

use std::sync::OnceLock;

use serde::Deserialize;
use thiserror::Error;

/// Placeholders understood by the reasoning prompts.
pub const VOT_PLACEHOLDERS: &[&str] = &[
    "Observation and Implication",
    "Observations",
    "Question",
    "Answer",
    "Target",
    "Letter",
    "Scores",
    "Count",
    "Video",
    "STSG",
];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PromptError {
    #[error("template {template}: no value for [{placeholder}]")]
    MissingValue { template: String, placeholder: String },
    #[error("prompt asset: {0}")]
    Asset(String),
}

/// Replaces each `[Name]` token of `template` whose name is in `names`.
///
/// Substituted values are never rescanned, so a value that happens to
/// contain `[Question]` is left alone.
pub fn render(
    template_name: &str,
    template: &str,
    names: &[&str],
    values: &[(&str, &str)],
) -> Result<String, PromptError> {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(open) = rest.find('[') {
        out.push_str(&rest[..open]);
        let tail = &rest[open..];
        let hit = names.iter().find(|name| {
            tail.len() >= name.len() + 2
                && tail[1..].starts_with(**name)
                && tail[1 + name.len()..].starts_with(']')
        });
        match hit {
            Some(name) => {
                let value = values
                    .iter()
                    .find(|(k, _)| k == name)
                    .map(|(_, v)| *v)
                    .ok_or_else(|| PromptError::MissingValue {
                        template: template_name.to_string(),
                        placeholder: name.to_string(),
                    })?;
                out.push_str(value);
                rest = &tail[name.len() + 2..];
            }
            None => {
                out.push('[');
                rest = &tail[1..];
            }
        }
    }
    out.push_str(rest);
    Ok(out)
}

/// Placeholder tokens from `names` still present in `text`.
pub fn residue<'a>(text: &str, names: &[&'a str]) -> Vec<&'a str> {
    names
        .iter()
        .copied()
        .filter(|name| text.contains(&format!("[{name}]")))
        .collect()
}

#[derive(Debug, Clone, Deserialize)]
pub struct PromptSet {
    pub version: String,
    pub step1_multi_choice: String,
    pub step1_open_ended: String,
    pub step2: String,
    pub step2_with_stsg: String,
    pub step3: String,
    pub step4_pre: String,
    pub step4_score: String,
    pub step4_rank: String,
    pub step5: String,
}

const BUILTIN: &str = include_str!("../assets/prompts.toml");

impl PromptSet {
    pub fn from_toml(text: &str) -> Result<Self, PromptError> {
        toml::from_str(text).map_err(|e| PromptError::Asset(e.to_string()))
    }

    /// The templates shipped in `assets/prompts.toml`.
    pub fn builtin() -> &'static PromptSet {
        static SET: OnceLock<PromptSet> = OnceLock::new();
        SET.get_or_init(|| Self::from_toml(BUILTIN).expect("bundled prompt asset parses"))
    }

    pub fn templates(&self) -> [(&'static str, &str); 9] {
        [
            ("step1_multi_choice", &self.step1_multi_choice),
            ("step1_open_ended", &self.step1_open_ended),
            ("step2", &self.step2),
            ("step2_with_stsg", &self.step2_with_stsg),
            ("step3", &self.step3),
            ("step4_pre", &self.step4_pre),
            ("step4_score", &self.step4_score),
            ("step4_rank", &self.step4_rank),
            ("step5", &self.step5),
        ]
    }

    pub fn render(&self, name: &str, values: &[(&str, &str)]) -> Result<String, PromptError> {
        let template = self
            .templates()
            .into_iter()
            .find(|(n, _)| *n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| PromptError::Asset(format!("no template named {name}")))?;
        render(name, template.trim(), VOT_PLACEHOLDERS, values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn double_brackets_keep_value_bracketed() {
        let out = render("t", "Given the question: [[Question]], ok", VOT_PLACEHOLDERS, &[("Question", "Why?")]).unwrap();
        assert_eq!(out, "Given the question: [Why?], ok");
    }

    #[test]
    fn values_are_not_rescanned() {
        let out = render("t", "[Answer]", VOT_PLACEHOLDERS, &[("Answer", "[Question]")]).unwrap();
        assert_eq!(out, "[Question]");
    }

    #[test]
    fn unknown_brackets_pass_through() {
        let out = render("t", "[x] [Answer] [", VOT_PLACEHOLDERS, &[("Answer", "a")]).unwrap();
        assert_eq!(out, "[x] a [");
    }

    #[test]
    fn missing_value_is_reported() {
        let err = render("step2", "[Target]", VOT_PLACEHOLDERS, &[]).unwrap_err();
        assert_eq!(
            err,
            PromptError::MissingValue {
                template: "step2".into(),
                placeholder: "Target".into()
            }
        );
    }

    #[test]
    fn longest_name_wins() {
        let out = render(
            "t",
            "[Observation and Implication] / [Observations]",
            VOT_PLACEHOLDERS,
            &[("Observation and Implication", "o1"), ("Observations", "o2")],
        )
        .unwrap();
        assert_eq!(out, "o1 / o2");
    }

    #[test]
    fn builtin_asset_loads_and_is_versioned() {
        let set = PromptSet::builtin();
        assert_eq!(set.version, "vot-prompts/1");
        for (name, text) in set.templates() {
            assert!(!text.trim().is_empty(), "{name}");
        }
        assert!(set.step4_score.contains("score the rationality of this answer with a 1-10 scale"));
    }
}
