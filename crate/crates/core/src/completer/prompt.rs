use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{CompleterError, Result};
use crate::mapper::ObservedLandmark;
use crate::world::{Category, RoomType, Subgoal, SubgoalAction, TaskSpec};

pub const TEMPLATE_VERSION: u32 = 1;

const SYSTEM_TEMPLATE: &str = include_str!("../../templates/system.v1.txt");
const AGENT_TEMPLATE: &str = include_str!("../../templates/agent.v1.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    pub system: String,
    pub agent: String,
}

impl Default for Templates {
    fn default() -> Self {
        Self {
            system: SYSTEM_TEMPLATE.to_string(),
            agent: AGENT_TEMPLATE.to_string(),
        }
    }
}

impl Templates {
    /// Loads `system.v1.txt` and `agent.v1.txt` from a directory.
    pub fn from_dir(dir: &Path) -> std::io::Result<Self> {
        Ok(Self {
            system: std::fs::read_to_string(dir.join(format!("system.v{TEMPLATE_VERSION}.txt")))?,
            agent: std::fs::read_to_string(dir.join(format!("agent.v{TEMPLATE_VERSION}.txt")))?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptBundle {
    pub system_message: String,
    pub agent_message: String,
}

impl PromptBundle {
    /// Hex SHA-256 of both messages; keys scripted fixtures.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.system_message.as_bytes());
        h.update(b"\n\n");
        h.update(self.agent_message.as_bytes());
        hex::encode(h.finalize())
    }
}

/// Where the controller stands in its subgoal list.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskProgress {
    pub completed: Vec<Subgoal>,
    pub current: Subgoal,
    pub remaining: Vec<Subgoal>,
}

/// Fills every `{{name}}` marker from `values`. A marker without a value is
/// an error; unused values are ignored.
pub fn render(template: &str, values: &BTreeMap<&str, String>) -> Result<String> {
    let mut out = String::with_capacity(template.len() + 256);
    let mut rest = template;
    while let Some(start) = rest.find("{{") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find("}}")
            .ok_or_else(|| CompleterError::TemplateMissingPlaceholder(after.chars().take(20).collect()))?;
        let name = after[..end].trim();
        let v = values
            .get(name)
            .ok_or_else(|| CompleterError::TemplateMissingPlaceholder(name.to_string()))?;
        out.push_str(v);
        rest = &after[end + 2..];
    }
    out.push_str(rest);
    Ok(out)
}

fn quote(s: &str) -> String {
    format!("'{}'", s.replace('\\', "\\\\").replace('\'', "\\'"))
}

fn py_list<I: IntoIterator<Item = S>, S: AsRef<str>>(items: I) -> String {
    let v: Vec<String> = items.into_iter().map(|s| quote(s.as_ref())).collect();
    format!("[{}]", v.join(", "))
}

fn primitive_actions() -> String {
    let mut s = String::new();
    for a in SubgoalAction::ALL {
        if a != SubgoalAction::GotoLocation {
            let _ = writeln!(s, "- {} <Object>", a.name());
        }
    }
    let _ = write!(s, "- {} <Object>", SubgoalAction::GotoLocation.name());
    s
}

/// Renders the system and agent messages. Pure: identical inputs give
/// identical bytes.
#[allow(clippy::too_many_arguments)]
pub fn build_prompt(
    templates: &Templates,
    room: RoomType,
    task: &TaskSpec,
    progress: &TaskProgress,
    observed: &[ObservedLandmark],
    possible: &[Category],
    last_message: Option<&str>,
) -> Result<PromptBundle> {
    let mut sys = BTreeMap::new();
    sys.insert("room_type", room.name().to_string());
    sys.insert("primitive_actions", primitive_actions());

    let completed_n = progress.completed.len();
    let numbered =
        |offset: usize, v: &[Subgoal]| py_list(v.iter().enumerate().map(|(i, g)| format!("{}. {}", offset + i + 1, g)));
    let positions = if observed.is_empty() {
        "None".to_string()
    } else {
        observed
            .iter()
            .map(|l| format!("{} {}", l.category, l.cell))
            .collect::<Vec<_>>()
            .join("; ")
    };
    let mut agent = BTreeMap::new();
    agent.insert("goal_statement", task.goal_statement.clone());
    agent.insert("step_instructions", py_list(&task.step_instructions));
    agent.insert("possible_landmarks", py_list(possible.iter().map(|c| c.name())));
    agent.insert("completed_subgoals", numbered(0, &progress.completed));
    agent.insert("current_subgoal", format!("{}. {}", completed_n + 1, progress.current));
    agent.insert("remaining_subgoals", numbered(completed_n + 1, &progress.remaining));
    agent.insert(
        "observed_landmarks",
        py_list(observed.iter().map(|l| l.category.name())),
    );
    agent.insert("observed_positions", positions);
    agent.insert(
        "last_message",
        last_message.filter(|m| !m.is_empty()).unwrap_or("None").to_string(),
    );

    Ok(PromptBundle {
        system_message: render(&templates.system, &sys)?,
        agent_message: render(&templates.agent, &agent)?,
    })
}
