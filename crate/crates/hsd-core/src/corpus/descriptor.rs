//! Per-dataset descriptor files.
//!
//! A descriptor is a TOML document mapping file columns to roles and
//! enumerating the canonical label space of each subtask. The six descriptors
//! shipped under `descriptors/` are user-editable: public copies of these
//! datasets drift (takedowns, re-exports), so column names, label codes and
//! declared sizes are data, not code.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{DatasetId, TaskSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct DatasetDescriptor {
    pub dataset: String,
    /// "tsv" or "csv"
    pub format: String,
    pub id_column: String,
    pub text_column: String,
    /// declared split sizes; checked with a warning on mismatch
    #[serde(default)]
    pub splits: BTreeMap<String, usize>,
    #[serde(rename = "subtask")]
    pub subtasks: Vec<SubtaskDescriptor>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", deny_unknown_fields)]
pub struct SubtaskDescriptor {
    pub id: String,
    pub column: String,
    pub labels: Vec<String>,
    /// optional raw-cell -> canonical-label aliases (e.g. numeric codes)
    #[serde(default)]
    pub aliases: BTreeMap<String, String>,
}

/// Role -> column mapping handed to the loader. Column names of the form
/// `#N` refer to the N-th column (0-based) for files with unnamed headers.
#[derive(Debug, Clone)]
pub struct ColumnMap {
    pub id: String,
    pub text: String,
    /// subtask id -> (column name, raw-value aliases)
    pub labels: BTreeMap<String, (String, BTreeMap<String, String>)>,
    /// field delimiter, from the descriptor's declared format
    pub delimiter: u8,
}

impl ColumnMap {
    pub fn tab_separated(id: &str, text: &str, label_columns: &[(&str, &str)]) -> Self {
        ColumnMap {
            id: id.to_string(),
            text: text.to_string(),
            labels: label_columns
                .iter()
                .map(|(subtask, column)| {
                    (subtask.to_string(), (column.to_string(), BTreeMap::new()))
                })
                .collect(),
            delimiter: b'\t',
        }
    }
}

impl DatasetDescriptor {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::config(format!("cannot read descriptor {}: {e}", path.display()))
        })?;
        let desc: DatasetDescriptor = toml::from_str(&text).map_err(|e| {
            Error::config(format!("cannot parse descriptor {}: {e}", path.display()))
        })?;
        desc.validate()?;
        Ok(desc)
    }

    pub fn validate(&self) -> Result<()> {
        DatasetId::from_str(&self.dataset)?;
        if self.format != "tsv" && self.format != "csv" {
            return Err(Error::config(format!(
                "descriptor format must be tsv or csv, got {:?}",
                self.format
            )));
        }
        if self.subtasks.is_empty() {
            return Err(Error::config("descriptor declares no subtasks".to_string()));
        }
        let mut seen = std::collections::BTreeSet::new();
        for st in &self.subtasks {
            if !seen.insert(&st.id) {
                return Err(Error::config(format!("duplicate subtask id {:?}", st.id)));
            }
            self.task_spec(&st.id)?.validate()?;
        }
        Ok(())
    }

    pub fn dataset_id(&self) -> DatasetId {
        DatasetId::from_str(&self.dataset).expect("validated on load")
    }

    pub fn delimiter(&self) -> u8 {
        if self.format == "tsv" {
            b'\t'
        } else {
            b','
        }
    }

    pub fn subtask(&self, id: &str) -> Result<&SubtaskDescriptor> {
        self.subtasks.iter().find(|s| s.id == id).ok_or_else(|| {
            let known: Vec<&str> = self.subtasks.iter().map(|s| s.id.as_str()).collect();
            Error::config(format!(
                "subtask {id:?} not declared for dataset {}; known: {}",
                self.dataset,
                known.join(", ")
            ))
        })
    }

    /// Build the [`TaskSpec`] for one subtask.
    pub fn task_spec(&self, subtask_id: &str) -> Result<TaskSpec> {
        let st = self.subtask(subtask_id)?;
        Ok(TaskSpec {
            dataset: DatasetId::from_str(&self.dataset)?,
            subtask: st.id.clone(),
            label_space: st.labels.clone(),
            declared_split_sizes: self.splits.clone(),
        })
    }

    /// Column map covering the id, the text, and every subtask label column.
    pub fn column_map(&self) -> ColumnMap {
        ColumnMap {
            id: self.id_column.clone(),
            text: self.text_column.clone(),
            labels: self
                .subtasks
                .iter()
                .map(|s| (s.id.clone(), (s.column.clone(), s.aliases.clone())))
                .collect(),
            delimiter: self.delimiter(),
        }
    }
}
