//! Template-based parsing of step instructions into subgoals.

use crate::world::{Category, Subgoal, SubgoalAction};

fn categories(sentence: &str) -> Vec<(usize, Category)> {
    sentence
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .enumerate()
        .filter_map(|(i, w)| Category::parse(w).map(|c| (i, c)))
        .collect()
}

fn words(sentence: &str) -> Vec<String> {
    sentence
        .split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_ascii_lowercase)
        .collect()
}

/// Subgoals for one instruction sentence; empty when no template matches.
pub fn parse_instruction(sentence: &str) -> Vec<Subgoal> {
    use SubgoalAction::*;
    let w = words(sentence);
    let cats = categories(sentence);
    let Some(verb) = w.first() else { return Vec::new() };
    let first = cats.first().map(|&(_, c)| c);
    // Category named right after the first "in"/"on"/"to".
    let after_prep = || {
        let p = w.iter().position(|x| x == "in" || x == "on" || x == "to")?;
        cats.iter().find(|&&(i, _)| i > p).map(|&(_, c)| c)
    };
    let sg = |a, c| Subgoal::new(a, c);
    match verb.as_str() {
        "take" | "pick" | "grab" => first.map(|c| vec![sg(PickupObject, c)]).unwrap_or_default(),
        "put" | "place" => after_prep().map(|c| vec![sg(PutObject, c)]).unwrap_or_default(),
        "move" => match (first, after_prep()) {
            (Some(y), Some(z)) => vec![sg(PickupObject, y), sg(PutObject, z)],
            _ => Vec::new(),
        },
        "slice" | "cut" => first.map(|c| vec![sg(SliceObject, c)]).unwrap_or_default(),
        "turn" | "switch" => cats
            .last()
            .map(|&(_, c)| vec![sg(ToggleObjectOn, c)])
            .unwrap_or_default(),
        "heat" | "rinse" | "clean" | "wash" => match (first, after_prep()) {
            (Some(x), Some(app)) => vec![sg(PutObject, app), sg(ToggleObjectOn, app), sg(PickupObject, x)],
            _ => Vec::new(),
        },
        "chill" | "cool" => match (first, after_prep()) {
            (Some(x), Some(app)) => vec![sg(PutObject, app), sg(PickupObject, x)],
            _ => Vec::new(),
        },
        _ => Vec::new(),
    }
}

/// Subgoals for a whole instruction list, each tagged with its sentence index.
pub fn parse_instructions(steps: &[String]) -> Vec<(Subgoal, usize)> {
    steps
        .iter()
        .enumerate()
        .flat_map(|(i, s)| parse_instruction(s).into_iter().map(move |g| (g, i)))
        .collect()
}
