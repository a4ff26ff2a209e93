use std::collections::HashMap;
use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::VisualFeatureStore;

/// Which part of a [`ClassSplit`] to draw classes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Section {
    Base,
    Val,
    Novel,
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Section::Base => "base",
            Section::Val => "val",
            Section::Novel => "novel",
        })
    }
}

impl FromStr for Section {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "base" => Ok(Section::Base),
            "val" => Ok(Section::Val),
            "novel" => Ok(Section::Novel),
            other => Err(Error::InvalidInput(format!(
                "unknown split section `{other}` (expected base, val or novel)"
            ))),
        }
    }
}

/// Disjoint base / validation / novel class lists.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClassSplit {
    pub base: Vec<String>,
    pub val: Vec<String>,
    pub novel: Vec<String>,
}

impl ClassSplit {
    /// Checks pairwise disjointness, uniqueness and non-empty base/novel.
    pub fn new(base: Vec<String>, val: Vec<String>, novel: Vec<String>) -> Result<Self> {
        let split = ClassSplit { base, val, novel };
        split.validate()?;
        Ok(split)
    }

    pub fn validate(&self) -> Result<()> {
        if self.base.is_empty() {
            return Err(Error::Split("base class list is empty".into()));
        }
        if self.novel.is_empty() {
            return Err(Error::Split("novel class list is empty".into()));
        }
        let mut owner: HashMap<&str, Section> = HashMap::new();
        for section in [Section::Base, Section::Val, Section::Novel] {
            for class in self.section(section) {
                if let Some(prev) = owner.insert(class.as_str(), section) {
                    return Err(Error::Split(if prev == section {
                        format!("class `{class}` listed twice in {section}")
                    } else {
                        format!("class `{class}` appears in both {prev} and {section}")
                    }));
                }
            }
        }
        Ok(())
    }

    pub fn section(&self, section: Section) -> &[String] {
        match section {
            Section::Base => &self.base,
            Section::Val => &self.val,
            Section::Novel => &self.novel,
        }
    }

    /// Every split class must have at least one assigned image.
    pub fn validate_against(&self, store: &VisualFeatureStore) -> Result<()> {
        for section in [Section::Base, Section::Val, Section::Novel] {
            for class in self.section(section) {
                if !store.has_class(class) {
                    return Err(Error::Split(format!(
                        "{section} class `{class}` has no assigned images"
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn all_classes(&self) -> impl Iterator<Item = &String> {
        self.base.iter().chain(&self.val).chain(&self.novel)
    }
}

pub fn load_split(path: impl AsRef<Path>) -> Result<ClassSplit> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let split: ClassSplit = serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
    split.validate()?;
    Ok(split)
}

pub fn write_split(split: &ClassSplit, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(split).expect("split serializes");
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

/// Reads a synsets file: JSON object mapping class → list of names. Entry
/// order follows the file.
pub fn load_synsets(path: impl AsRef<Path>) -> Result<IndexMap<String, Vec<String>>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let map: IndexMap<String, Vec<String>> =
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e))?;
    Ok(map)
}
