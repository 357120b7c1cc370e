use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{CompleterError, Result};
use crate::world::{Category, Subgoal, SubgoalAction};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompletionResponse {
    pub reasoning: String,
    pub subgoals: Vec<Subgoal>,
}

impl CompletionResponse {
    /// Renders the response in the line-structured reply format.
    pub fn to_text(&self) -> String {
        let mut s = format!("Reason: {}\nPlan:\n", self.reasoning);
        for (i, g) in self.subgoals.iter().enumerate() {
            let _ = writeln!(s, "{}. {}", i + 1, g);
        }
        s
    }
}

fn strip_label<'a>(line: &'a str, label: &str) -> Option<&'a str> {
    let t = line.trim_start();
    let t = t.trim_start_matches(['*', '#', ' ']);
    if t.len() >= label.len() && t[..label.len()].eq_ignore_ascii_case(label) {
        let rest = t[label.len()..].trim_start_matches('*');
        rest.strip_prefix(':').map(|r| r.trim_start_matches('*').trim())
    } else {
        None
    }
}

/// Drops a leading `12.`, `12)`, `-` or `*` list marker.
fn strip_marker(line: &str) -> Option<&str> {
    let t = line.trim();
    if let Some(r) = t.strip_prefix('-').or_else(|| t.strip_prefix('*')) {
        return Some(r.trim());
    }
    let digits = t.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits == 0 {
        return None;
    }
    let r = &t[digits..];
    r.strip_prefix('.')
        .or_else(|| r.strip_prefix(')'))
        .or_else(|| r.strip_prefix(':'))
        .map(str::trim)
}

fn clean_word(w: &str) -> &str {
    w.trim_matches(|c: char| !c.is_ascii_alphanumeric())
}

/// Parses a `Reason: ... / Plan: 1. <Action> <Object> ...` reply.
///
/// Every object must be in `possible` and the last step must match
/// `current`; any violation is an error so callers can fall back to the
/// sparse instruction.
pub fn parse_response(text: &str, possible: &[Category], current: &Subgoal) -> Result<CompletionResponse> {
    let lines: Vec<&str> = text.lines().collect();
    let plan_at = lines
        .iter()
        .position(|l| strip_label(l, "plan").is_some())
        .ok_or_else(|| CompleterError::Malformed("no Plan section".into()))?;

    let mut reasoning = Vec::new();
    let mut in_reason = false;
    for l in &lines[..plan_at] {
        if let Some(r) = strip_label(l, "reason") {
            in_reason = true;
            if !r.is_empty() {
                reasoning.push(r.to_string());
            }
        } else if in_reason && !l.trim().is_empty() {
            reasoning.push(l.trim().to_string());
        }
    }

    let mut step_lines: Vec<&str> = Vec::new();
    if let Some(inline) = strip_label(lines[plan_at], "plan").filter(|s| !s.is_empty()) {
        step_lines.push(inline);
    }
    step_lines.extend(lines[plan_at + 1..].iter().copied());

    let mut subgoals = Vec::new();
    for raw in step_lines {
        if raw.trim().is_empty() {
            continue;
        }
        let body = strip_marker(raw).unwrap_or(raw.trim());
        let words: Vec<&str> = body
            .split_whitespace()
            .map(clean_word)
            .filter(|w| !w.is_empty())
            .collect();
        if words.len() != 2 {
            if subgoals.is_empty() {
                return Err(CompleterError::Malformed(format!("bad plan line {raw:?}")));
            }
            // Trailing prose after the list ends the plan.
            break;
        }
        let action = SubgoalAction::parse(words[0])
            .ok_or_else(|| CompleterError::Malformed(format!("unknown action {:?}", words[0])))?;
        let object = Category::parse(words[1])
            .filter(|c| possible.contains(c))
            .ok_or_else(|| CompleterError::HallucinatedObject(words[1].to_string()))?;
        subgoals.push(Subgoal::new(action, object));
    }

    let last = subgoals
        .last()
        .ok_or_else(|| CompleterError::Malformed("empty plan".into()))?;
    if !last.same_step(current) {
        return Err(CompleterError::MissingTerminalSubgoal {
            expected: *current,
            found: last.to_string(),
        });
    }
    Ok(CompletionResponse {
        reasoning: reasoning.join(" "),
        subgoals,
    })
}
