use std::fmt;

use serde::{Deserialize, Serialize};

use super::{ActionKind, Category, Cell};

/// High-level plan step: navigate to, or interact with, an object category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SubgoalAction {
    GotoLocation,
    PickupObject,
    PutObject,
    OpenObject,
    CloseObject,
    ToggleObjectOn,
    ToggleObjectOff,
    SliceObject,
}

impl SubgoalAction {
    pub const ALL: [SubgoalAction; 8] = [
        SubgoalAction::GotoLocation,
        SubgoalAction::PickupObject,
        SubgoalAction::PutObject,
        SubgoalAction::OpenObject,
        SubgoalAction::CloseObject,
        SubgoalAction::ToggleObjectOn,
        SubgoalAction::ToggleObjectOff,
        SubgoalAction::SliceObject,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SubgoalAction::GotoLocation => "GotoLocation",
            SubgoalAction::PickupObject => "PickupObject",
            SubgoalAction::PutObject => "PutObject",
            SubgoalAction::OpenObject => "OpenObject",
            SubgoalAction::CloseObject => "CloseObject",
            SubgoalAction::ToggleObjectOn => "ToggleObjectOn",
            SubgoalAction::ToggleObjectOff => "ToggleObjectOff",
            SubgoalAction::SliceObject => "SliceObject",
        }
    }

    /// Accepts the canonical names case-insensitively, plus the short forms
    /// without the `Object` suffix (`Pickup`, `Open`, `Goto`, ...).
    pub fn parse(s: &str) -> Option<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        let key = key.strip_suffix("object").unwrap_or(&key).to_string();
        Some(match key.as_str() {
            "gotolocation" | "goto" | "gotoloc" | "navigate" => SubgoalAction::GotoLocation,
            "pickup" | "take" => SubgoalAction::PickupObject,
            "put" | "place" => SubgoalAction::PutObject,
            "open" => SubgoalAction::OpenObject,
            "close" => SubgoalAction::CloseObject,
            "toggleon" | "toggleobjecton" => SubgoalAction::ToggleObjectOn,
            "toggleoff" | "toggleobjectoff" => SubgoalAction::ToggleObjectOff,
            "slice" => SubgoalAction::SliceObject,
            _ => return None,
        })
    }

    /// The primitive interaction this subgoal ends with; `None` for navigation.
    pub fn interaction(self) -> Option<ActionKind> {
        Some(match self {
            SubgoalAction::GotoLocation => return None,
            SubgoalAction::PickupObject => ActionKind::PickupObject,
            SubgoalAction::PutObject => ActionKind::PutObject,
            SubgoalAction::OpenObject => ActionKind::OpenObject,
            SubgoalAction::CloseObject => ActionKind::CloseObject,
            SubgoalAction::ToggleObjectOn => ActionKind::ToggleObjectOn,
            SubgoalAction::ToggleObjectOff => ActionKind::ToggleObjectOff,
            SubgoalAction::SliceObject => ActionKind::SliceObject,
        })
    }
}

impl fmt::Display for SubgoalAction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One plan step `(action, object, position)`; the position is filled in
/// once a target has been localized.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Subgoal {
    pub action: SubgoalAction,
    pub object: Category,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolved_position: Option<Cell>,
}

impl Subgoal {
    pub fn new(action: SubgoalAction, object: Category) -> Self {
        Self {
            action,
            object,
            resolved_position: None,
        }
    }

    /// Equality on action and object, ignoring any resolved position.
    pub fn same_step(&self, other: &Subgoal) -> bool {
        self.action == other.action && self.object == other.object
    }

    /// Parses `"Pickup Mug"`, `"PickupObject mug"` and similar.
    pub fn parse(s: &str) -> Option<Self> {
        let mut it = s.split_whitespace();
        let action = SubgoalAction::parse(it.next()?)?;
        let object = Category::parse(it.next()?)?;
        it.next().is_none().then(|| Subgoal::new(action, object))
    }
}

impl fmt::Display for Subgoal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.action, self.object)
    }
}
