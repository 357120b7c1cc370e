//! Instruction completion: prompt rendering, completion backends, and a
//! validating parser for the recovered subgoal list.

mod backend;
mod oracle;
mod parse;
mod prompt;

use thiserror::Error;

use crate::world::{Category, Subgoal};

pub use crate::world::SubgoalAction;
pub use backend::{complete, Backend, GroundTruth, HttpBackend, HttpConfig, ScriptedBackend, ScriptedEntry};
pub use oracle::oracle_complete;
pub use parse::{parse_response, CompletionResponse};
pub use prompt::{build_prompt, render, PromptBundle, TaskProgress, Templates, TEMPLATE_VERSION};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CompleterError {
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("hallucinated object {0:?}")]
    HallucinatedObject(String),
    #[error("plan must end with {expected}, found {found}")]
    MissingTerminalSubgoal { expected: Subgoal, found: String },
    #[error("template placeholder {{{{{0}}}}} has no value")]
    TemplateMissingPlaceholder(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("scripted fixture exhausted")]
    FixtureExhausted,
    #[error("fixture: {0}")]
    Fixture(String),
    #[error("no instance of {0} in the scene")]
    TargetAbsent(Category),
}

pub type Result<T> = std::result::Result<T, CompleterError>;
