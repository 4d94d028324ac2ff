//! Three-stage prompt assembly (task description, demonstrations, task input)
//! and the reverse direction, reading a yes/no decision out of a completion.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{BinaryLabel, EntityPair};

pub const LEFT_PLACEHOLDER: &str = "{left}";
pub const RIGHT_PLACEHOLDER: &str = "{right}";

pub const DEFAULT_TASK_DESCRIPTION: &str = include_str!("../templates/task_description.txt");
pub const DEFAULT_INPUT_TEMPLATE: &str = include_str!("../templates/input_template.txt");
pub const DEFAULT_ANSWER_INSTRUCTION: &str = include_str!("../templates/answer_instruction.txt");
pub const DEFAULT_REASONING_INSTRUCTION: &str =
    include_str!("../templates/reasoning_instruction.txt");

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PromptError {
    #[error("input template is missing placeholder `{0}`")]
    MissingPlaceholder(&'static str),
    #[error("task description must be nonempty")]
    EmptyTaskDescription,
    #[error("explanation must be nonempty when present")]
    EmptyExplanation,
    #[error("demonstration iteration must be at least 1")]
    InvalidIteration,
}

/// An annotated pair used as a few-shot example.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Demonstration {
    pub pair: EntityPair,
    pub label: BinaryLabel,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    pub annotated_at_iteration: u32,
}

impl Demonstration {
    pub fn new(
        pair: EntityPair,
        label: BinaryLabel,
        explanation: Option<String>,
        annotated_at_iteration: u32,
    ) -> Result<Self, PromptError> {
        if annotated_at_iteration == 0 {
            return Err(PromptError::InvalidIteration);
        }
        if matches!(&explanation, Some(e) if e.trim().is_empty()) {
            return Err(PromptError::EmptyExplanation);
        }
        Ok(Demonstration {
            pair,
            label,
            explanation,
            annotated_at_iteration,
        })
    }
}

/// Prompt texts from which a [`PromptSpec`] is built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplates {
    pub task_description: String,
    pub input_template: String,
    /// Used when no demonstration carries an explanation.
    pub answer_instruction: String,
    /// Used once any demonstration carries an explanation.
    pub reasoning_instruction: String,
}

impl Default for PromptTemplates {
    fn default() -> Self {
        PromptTemplates {
            task_description: DEFAULT_TASK_DESCRIPTION.trim_end().to_string(),
            input_template: DEFAULT_INPUT_TEMPLATE.trim_end().to_string(),
            answer_instruction: DEFAULT_ANSWER_INSTRUCTION.trim_end().to_string(),
            reasoning_instruction: DEFAULT_REASONING_INSTRUCTION.trim_end().to_string(),
        }
    }
}

impl PromptTemplates {
    pub fn validate(&self) -> Result<(), PromptError> {
        if self.task_description.trim().is_empty() {
            return Err(PromptError::EmptyTaskDescription);
        }
        check_placeholders(&self.input_template)
    }

    pub fn prompt_spec(&self, demonstrations: Vec<Demonstration>) -> Result<PromptSpec, PromptError> {
        let instruction = if demonstrations.iter().any(|d| d.explanation.is_some()) {
            &self.reasoning_instruction
        } else {
            &self.answer_instruction
        };
        PromptSpec::new(
            self.task_description.clone(),
            demonstrations,
            self.input_template.clone(),
            instruction.clone(),
        )
    }
}

fn check_placeholders(template: &str) -> Result<(), PromptError> {
    for placeholder in [LEFT_PLACEHOLDER, RIGHT_PLACEHOLDER] {
        if !template.contains(placeholder) {
            return Err(PromptError::MissingPlaceholder(placeholder));
        }
    }
    Ok(())
}

/// A fully specified prompt. Demonstrations are kept sorted by
/// `(annotated_at_iteration, pair id)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptSpec {
    task_description: String,
    demonstrations: Vec<Demonstration>,
    input_template: String,
    answer_instruction: String,
}

impl PromptSpec {
    pub fn new(
        task_description: impl Into<String>,
        mut demonstrations: Vec<Demonstration>,
        input_template: impl Into<String>,
        answer_instruction: impl Into<String>,
    ) -> Result<Self, PromptError> {
        let task_description = task_description.into();
        if task_description.trim().is_empty() {
            return Err(PromptError::EmptyTaskDescription);
        }
        let input_template = input_template.into();
        check_placeholders(&input_template)?;
        demonstrations.sort_by(|a, b| {
            (a.annotated_at_iteration, &a.pair.id).cmp(&(b.annotated_at_iteration, &b.pair.id))
        });
        Ok(PromptSpec {
            task_description,
            demonstrations,
            input_template,
            answer_instruction: answer_instruction.into(),
        })
    }

    pub fn demonstrations(&self) -> &[Demonstration] {
        &self.demonstrations
    }

    pub fn demonstration_pairs(&self) -> Vec<EntityPair> {
        self.demonstrations.iter().map(|d| d.pair.clone()).collect()
    }

    pub fn task_description(&self) -> &str {
        &self.task_description
    }

    pub fn answer_instruction(&self) -> &str {
        &self.answer_instruction
    }

    fn fill(&self, left: &str, right: &str) -> String {
        let mut out = String::with_capacity(self.input_template.len() + left.len() + right.len());
        let mut rest = self.input_template.as_str();
        while let Some(pos) = rest.find('{') {
            out.push_str(&rest[..pos]);
            let tail = &rest[pos..];
            if let Some(after) = tail.strip_prefix(LEFT_PLACEHOLDER) {
                out.push_str(left);
                rest = after;
            } else if let Some(after) = tail.strip_prefix(RIGHT_PLACEHOLDER) {
                out.push_str(right);
                rest = after;
            } else {
                out.push('{');
                rest = &tail[1..];
            }
        }
        out.push_str(rest);
        out
    }

    fn render_pair(&self, pair: &EntityPair) -> String {
        self.fill(&pair.left.to_lines(), &pair.right.to_lines())
    }

    fn render_with_input(&self, input: &str) -> String {
        let mut out = String::new();
        out.push_str(self.task_description.trim_end());
        out.push_str("\n\n");
        for (i, demo) in self.demonstrations.iter().enumerate() {
            out.push_str(&format!("Example {}:\n", i + 1));
            out.push_str(&self.render_pair(&demo.pair));
            out.push('\n');
            if let Some(explanation) = &demo.explanation {
                out.push_str("Explanation: ");
                out.push_str(explanation.trim());
                out.push('\n');
            }
            out.push_str("Answer: ");
            out.push_str(demo.label.answer_word());
            out.push_str("\n\n");
        }
        out.push_str("Input:\n");
        out.push_str(input);
        out.push('\n');
        out.push_str(self.answer_instruction.trim_end());
        out.push('\n');
        out
    }

    /// The full, byte-deterministic prompt for `target`.
    pub fn render(&self, target: &EntityPair) -> String {
        self.render_with_input(&self.render_pair(target))
    }

    /// The prompt with the input template left unfilled, for previews.
    pub fn render_preview(&self) -> String {
        self.render_with_input(&self.input_template)
    }
}

pub fn render_prompt(spec: &PromptSpec, target: &EntityPair) -> String {
    spec.render(target)
}

/// Outcome of reading a completion.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "Option<BinaryLabel>", into = "Option<BinaryLabel>")]
pub enum ParsedLabel {
    Label(BinaryLabel),
    Unparseable,
}

impl ParsedLabel {
    pub fn label(self) -> Option<BinaryLabel> {
        match self {
            ParsedLabel::Label(l) => Some(l),
            ParsedLabel::Unparseable => None,
        }
    }
}

impl From<Option<BinaryLabel>> for ParsedLabel {
    fn from(value: Option<BinaryLabel>) -> Self {
        value.map_or(ParsedLabel::Unparseable, ParsedLabel::Label)
    }
}

impl From<ParsedLabel> for Option<BinaryLabel> {
    fn from(value: ParsedLabel) -> Self {
        value.label()
    }
}

// Checked in this order at every position; multi-word negatives come before "match".
const DECISION_TOKENS: [(&str, BinaryLabel); 5] = [
    ("not a match", BinaryLabel::NonMatch),
    ("non-match", BinaryLabel::NonMatch),
    ("match", BinaryLabel::Match),
    ("yes", BinaryLabel::Match),
    ("no", BinaryLabel::NonMatch),
];

const ANSWER_MARKER: &str = "answer:";

/// Reads the first standalone decision token. When the completion contains an
/// `Answer:` line (as requested by the reasoning instruction), the text after
/// the last such marker is scanned first.
pub fn parse_label(completion: &str) -> ParsedLabel {
    let lowered = completion.to_lowercase();
    if let Some(pos) = lowered.rfind(ANSWER_MARKER) {
        if let Some(label) = first_token(&lowered[pos + ANSWER_MARKER.len()..]) {
            return ParsedLabel::Label(label);
        }
    }
    first_token(&lowered).into()
}

fn first_token(text: &str) -> Option<BinaryLabel> {
    let is_word = |c: char| c.is_alphanumeric();
    for (pos, _) in text.char_indices() {
        if text[..pos].chars().next_back().is_some_and(is_word) {
            continue;
        }
        let rest = &text[pos..];
        for (token, label) in DECISION_TOKENS {
            if let Some(after) = rest.strip_prefix(token) {
                if !after.chars().next().is_some_and(is_word) {
                    return Some(label);
                }
            }
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::EntityRecord;
    use proptest::prelude::*;

    fn pair(id: &str, title: &str) -> EntityPair {
        EntityPair::new(
            id,
            EntityRecord::new([("title", title), ("year", "2001")]).unwrap(),
            EntityRecord::new([("title", title)]).unwrap(),
        )
    }

    fn demo(id: &str, iteration: u32, label: BinaryLabel, explanation: Option<&str>) -> Demonstration {
        Demonstration::new(pair(id, id), label, explanation.map(str::to_string), iteration).unwrap()
    }

    fn spec(demos: Vec<Demonstration>) -> PromptSpec {
        PromptTemplates::default().prompt_spec(demos).unwrap()
    }

    #[test]
    fn zero_shot_contains_task_and_target_only() {
        let s = spec(vec![]);
        let text = s.render(&pair("t", "Target Paper"));
        assert!(text.starts_with(DEFAULT_TASK_DESCRIPTION.trim_end()));
        assert!(!text.contains("Example"));
        assert!(text.contains("Entity A:\ntitle: Target Paper\nyear: 2001\nEntity B:\ntitle: Target Paper"));
        assert!(text.ends_with(&format!("{}\n", DEFAULT_ANSWER_INSTRUCTION.trim_end())));
    }

    #[test]
    fn demonstrations_in_iteration_then_id_order() {
        let s = spec(vec![
            demo("zeta", 1, BinaryLabel::Match, None),
            demo("beta", 2, BinaryLabel::NonMatch, None),
            demo("alpha", 2, BinaryLabel::Match, None),
        ]);
        let text = s.render(&pair("t", "target"));
        let z = text.find("title: zeta").unwrap();
        let a = text.find("title: alpha").unwrap();
        let b = text.find("title: beta").unwrap();
        let target = text.find("title: target").unwrap();
        assert!(z < a && a < b && b < target);
    }

    #[test]
    fn explanation_sits_between_pair_and_label() {
        let s = spec(vec![demo("d", 1, BinaryLabel::Match, Some("Same title and year."))]);
        let text = s.render(&pair("t", "target"));
        let block = "title: d\nExplanation: Same title and year.\nAnswer: yes\n";
        assert!(text.contains(block), "{text}");
        assert!(text.contains(DEFAULT_REASONING_INSTRUCTION.trim_end()));
    }

    #[test]
    fn missing_placeholder_is_named() {
        let err = PromptSpec::new("task", vec![], "A: {left}", "answer").unwrap_err();
        assert_eq!(err, PromptError::MissingPlaceholder(RIGHT_PLACEHOLDER));
        let err = PromptSpec::new("task", vec![], "B: {right}", "answer").unwrap_err();
        assert_eq!(err, PromptError::MissingPlaceholder(LEFT_PLACEHOLDER));
        assert_eq!(
            PromptSpec::new(" ", vec![], "{left}{right}", "a").unwrap_err(),
            PromptError::EmptyTaskDescription
        );
    }

    #[test]
    fn values_containing_braces_are_not_substituted_twice() {
        let s = PromptSpec::new("task", vec![], "{left} | {right}", "?").unwrap();
        let p = EntityPair::new(
            "x",
            EntityRecord::new([("t", "{right}")]).unwrap(),
            EntityRecord::new([("t", "{x}")]).unwrap(),
        );
        assert!(s.render(&p).contains("t: {right} | t: {x}"));
    }

    #[test]
    fn demonstration_validation() {
        assert_eq!(
            Demonstration::new(pair("a", "a"), BinaryLabel::Match, Some("  ".into()), 1),
            Err(PromptError::EmptyExplanation)
        );
        assert_eq!(
            Demonstration::new(pair("a", "a"), BinaryLabel::Match, None, 0),
            Err(PromptError::InvalidIteration)
        );
    }

    #[test]
    fn parse_examples() {
        use BinaryLabel::*;
        assert_eq!(parse_label("Yes, they refer to the same paper."), ParsedLabel::Label(Match));
        assert_eq!(parse_label("These are not a match."), ParsedLabel::Label(NonMatch));
        assert_eq!(parse_label("I cannot determine this."), ParsedLabel::Unparseable);
        assert_eq!(parse_label("NO"), ParsedLabel::Label(NonMatch));
        assert_eq!(parse_label("non-match"), ParsedLabel::Label(NonMatch));
        assert_eq!(parse_label("It is a match"), ParsedLabel::Label(Match));
        assert_eq!(parse_label("nobody knows; matches"), ParsedLabel::Unparseable);
        assert_eq!(parse_label(""), ParsedLabel::Unparseable);
    }

    #[test]
    fn answer_line_wins_over_reasoning() {
        let text = "The venues are not the same, no doubt Entity B is abbreviated.\nAnswer: yes";
        assert_eq!(parse_label(text), ParsedLabel::Label(BinaryLabel::Match));
        assert_eq!(parse_label("Answer: unsure. No."), ParsedLabel::Label(BinaryLabel::NonMatch));
    }

    #[test]
    fn parsed_label_serde() {
        assert_eq!(serde_json::to_string(&ParsedLabel::Unparseable).unwrap(), "null");
        assert_eq!(serde_json::to_string(&ParsedLabel::Label(BinaryLabel::Match)).unwrap(), "1");
    }

    proptest! {
        #[test]
        fn label_words_round_trip(is_match: bool, explained: bool) {
            let label = BinaryLabel::from(is_match);
            let d = demo("d", 1, label, explained.then_some("because"));
            let text = spec(vec![d]).render(&pair("t", "t"));
            let start = text.find("Answer: ").unwrap() + "Answer: ".len();
            let word = text[start..].lines().next().unwrap();
            prop_assert_eq!(parse_label(word), ParsedLabel::Label(label));
        }

        #[test]
        fn adding_demonstrations_keeps_prefix_and_grows(n in 0usize..6) {
            let demos: Vec<_> = (0..=n)
                .map(|i| demo(&format!("d{i}"), i as u32 + 1, BinaryLabel::from(i % 2 == 0), None))
                .collect();
            let target = pair("t", "target");
            let smaller = spec(demos[..n].to_vec()).render(&target);
            let larger = spec(demos.clone()).render(&target);
            prop_assert!(larger.len() > smaller.len());
            let cut = smaller.find("Input:\n").unwrap();
            prop_assert!(larger.starts_with(&smaller[..cut]));
        }
    }
}
