//! Keyword curation of clip descriptions.

use serde::{Deserialize, Serialize};

use super::MotionLibrary;

/// Include keywords, verbatim (the misspelling "strech" is intentional).
pub const DEFAULT_INCLUDE: [&str; 25] = [
    "walk",
    "navigate",
    "basketball",
    "dance",
    "punch",
    "fight",
    "push",
    "pull",
    "throw",
    "catch",
    "crawl",
    "wave",
    "high five",
    "hug",
    "drink",
    "wash",
    "signal",
    "balance",
    "strech",
    "leg",
    "bend",
    "squat",
    "traffic",
    "high-five",
    "low-five",
];

pub const DEFAULT_EXCLUDE: [&str; 14] = [
    "ladder",
    "suitcase",
    "uneven",
    "terrain",
    "stair",
    "stairway",
    "stairwell",
    "clean",
    "box",
    "climb",
    "backflip",
    "handstand",
    "sit",
    "hang",
];

pub fn default_include_keywords() -> Vec<String> {
    DEFAULT_INCLUDE.iter().map(|s| s.to_string()).collect()
}

pub fn default_exclude_keywords() -> Vec<String> {
    DEFAULT_EXCLUDE.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationDecision {
    pub id: String,
    pub description: String,
    pub included: bool,
    pub matched_include: Vec<String>,
    pub matched_exclude: Vec<String>,
}

impl CurationDecision {
    /// Case-insensitive substring matching against both keyword lists.
    pub fn evaluate(id: &str, description: &str, include: &[String], exclude: &[String]) -> Self {
        let text = description.to_lowercase();
        let hits = |list: &[String]| -> Vec<String> {
            list.iter()
                .filter(|k| !k.is_empty() && text.contains(&k.to_lowercase()))
                .cloned()
                .collect()
        };
        let matched_include = hits(include);
        let matched_exclude = hits(exclude);
        CurationDecision {
            id: id.to_string(),
            description: description.to_string(),
            included: !matched_include.is_empty() && matched_exclude.is_empty(),
            matched_include,
            matched_exclude,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurationReport {
    pub include: Vec<String>,
    pub exclude: Vec<String>,
    pub decisions: Vec<CurationDecision>,
}

impl CurationReport {
    pub fn retained(&self) -> impl Iterator<Item = &CurationDecision> {
        self.decisions.iter().filter(|d| d.included)
    }
}

/// Keeps clips whose description matches at least one include keyword and
/// no exclude keyword. The report covers every clip of the input library.
pub fn curate(mut library: MotionLibrary, include: &[String], exclude: &[String]) -> MotionLibrary {
    let decisions: Vec<CurationDecision> = library
        .clips()
        .map(|c| {
            let m = c.meta();
            CurationDecision::evaluate(&m.id, &m.description, include, exclude)
        })
        .collect();
    let keep: std::collections::BTreeSet<String> = decisions
        .iter()
        .filter(|d| d.included)
        .map(|d| d.id.clone())
        .collect();
    library.retain(|c| keep.contains(&c.meta().id));
    library.report = CurationReport {
        include: include.to_vec(),
        exclude: exclude.to_vec(),
        decisions,
    };
    library
}
