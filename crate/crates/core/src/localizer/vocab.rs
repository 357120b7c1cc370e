use std::collections::{BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::world::{Category, SubgoalAction};

pub const UNK: &str = "<unk>";

/// Lowercased alphanumeric runs.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_ascii_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(|w| w.to_ascii_lowercase())
        .collect()
}

/// Fixed token table; index 0 is `<unk>`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(mut tokens: Vec<String>) -> Self {
        if tokens.first().map(String::as_str) != Some(UNK) {
            tokens.retain(|t| t != UNK);
            tokens.insert(0, UNK.to_string());
        }
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Self { tokens, index }
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    /// Every category and action word plus the tokens of `texts`, sorted.
    pub fn build<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let mut set: BTreeSet<String> = BTreeSet::new();
        for c in Category::ALL {
            set.insert(c.word());
        }
        for a in SubgoalAction::ALL {
            set.insert(a.name().to_ascii_lowercase());
        }
        for t in texts {
            set.extend(tokenize(t));
        }
        let mut tokens = vec![UNK.to_string()];
        tokens.extend(set);
        tokens.into()
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.index.get(token).copied().unwrap_or(0)
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    /// Token ids of `text`; an empty text encodes as a single `<unk>`.
    pub fn encode(&self, text: &str) -> Vec<usize> {
        let ids: Vec<usize> = tokenize(text).iter().map(|t| self.id(t)).collect();
        if ids.is_empty() {
            vec![0]
        } else {
            ids
        }
    }
}
