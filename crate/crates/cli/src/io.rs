//! Directory helpers for clip sets and JSON reports.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::Serialize;

use exbody::goals::MotionSet;
use exbody::mocap::canonical::{load_file, save_file};
use exbody::mocap::corpus::INDEX_FILE;
use exbody::mocap::{load_corpus, Clip, MotionLibrary};

pub const CLIP_SUFFIX: &str = ".clip.json";

/// Canonical clip files in `dir`, sorted by name.
fn clip_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut files = Vec::new();
    for entry in std::fs::read_dir(dir).with_context(|| format!("reading {}", dir.display()))? {
        let path = entry?.path();
        if path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with(CLIP_SUFFIX)) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// A corpus directory (with `index.toml`) or a directory of canonical clips.
pub fn load_library(dir: &Path) -> Result<MotionLibrary> {
    if dir.join(INDEX_FILE).is_file() {
        return Ok(load_corpus(dir)?);
    }
    let files = clip_files(dir)?;
    if files.is_empty() {
        bail!("{} holds neither {INDEX_FILE} nor *{CLIP_SUFFIX} files", dir.display());
    }
    let clips = files
        .iter()
        .map(|p| load_file(p).with_context(|| format!("loading {}", p.display())))
        .collect::<Result<Vec<_>>>()?;
    Ok(MotionLibrary::from_clips(clips)?)
}

/// Retargeted clips of `dir` in file-name order.
pub fn load_motions(dir: &Path) -> Result<MotionSet> {
    let lib = load_library(dir)?;
    let clips: Vec<_> = lib.retargeted().cloned().collect();
    if clips.len() != lib.len() {
        bail!("{} contains clips that are not retargeted; run `exbody retarget` first", dir.display());
    }
    Ok(MotionSet::new(clips)?)
}

pub fn write_clip(dir: &Path, clip: &Clip) -> Result<()> {
    Ok(save_file(&dir.join(format!("{}{CLIP_SUFFIX}", clip.meta().id)), clip)?)
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    std::fs::write(path, serde_json::to_string_pretty(value)?).with_context(|| format!("writing {}", path.display()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
}

/// One keyword per line; blank lines and `#` comments are skipped.
pub fn read_keywords(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(|l| l.split('#').next().unwrap_or("").trim().to_lowercase())
        .filter(|l| !l.is_empty())
        .collect())
}
