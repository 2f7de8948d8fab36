//! Directory layout for a corpus of skeleton/motion files.
//!
//! A corpus directory holds `index.toml` plus the files it names:
//!
//! ```toml
//! [[clip]]
//! id = "01_01"
//! description = "walk forward"
//! category = "walk"
//! skeleton = "01.asf"
//! motion = "01_01.amc"
//! ```

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{parse_motion, parse_skeleton, Category, Clip, MotionLibrary, SkeletonDef};
use crate::error::{read_to_string, Error, Result};

pub const INDEX_FILE: &str = "index.toml";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusEntry {
    pub id: String,
    pub description: String,
    pub category: Category,
    pub skeleton: String,
    pub motion: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusIndex {
    #[serde(default)]
    pub clip: Vec<CorpusEntry>,
}

impl CorpusIndex {
    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }
}

/// Parses every clip listed in `dir/index.toml` into a library of raw clips.
pub fn load_corpus(dir: &Path) -> Result<MotionLibrary> {
    let index: CorpusIndex = toml::from_str(&read_to_string(&dir.join(INDEX_FILE))?)?;
    let mut skeletons: HashMap<String, SkeletonDef> = HashMap::new();
    let mut lib = MotionLibrary::new();
    for e in &index.clip {
        if !skeletons.contains_key(&e.skeleton) {
            let s = parse_skeleton(&read_to_string(&dir.join(&e.skeleton))?)?;
            skeletons.insert(e.skeleton.clone(), s);
        }
        let mut clip = parse_motion(&read_to_string(&dir.join(&e.motion))?, &skeletons[&e.skeleton])
            .map_err(|err| Error::Validation(format!("{}: {err}", e.motion)))?;
        clip.meta.id = e.id.clone();
        clip.meta.description = e.description.clone();
        clip.meta.category = e.category;
        lib.insert(Clip::Raw(clip))?;
    }
    Ok(lib)
}
