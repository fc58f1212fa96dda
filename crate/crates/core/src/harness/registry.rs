use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dataset::{clip_labels, load_csv, Dataset, FeatureSpec, LabelSpec, Schema};
use crate::error::{Error, Result};
use crate::trainer::Task;

/// Entry of the dataset registry. Paths are relative to the registry file.
/// Label column, bounds and task default to the schema's.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegistryEntry {
    pub csv: PathBuf,
    pub schema: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_column: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_bounds: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    #[serde(default)]
    pub source: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Registry {
    #[serde(skip)]
    root: PathBuf,
    pub datasets: BTreeMap<String, RegistryEntry>,
}

/// A dataset ready to load: resolved paths, features and label.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSource {
    pub name: String,
    pub csv: PathBuf,
    pub features: Vec<FeatureSpec<f64>>,
    pub label: LabelSpec<f64>,
    pub task: Task,
}

impl Registry {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut registry: Registry = serde_json::from_str(&text)?;
        registry.root = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(registry)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.datasets.keys().map(String::as_str)
    }

    pub fn resolve(&self, name: &str) -> Result<DatasetSource> {
        let entry = self.datasets.get(name).ok_or_else(|| {
            Error::invalid(format!(
                "dataset `{name}` is not in the registry (known: {})",
                self.names().collect::<Vec<_>>().join(", ")
            ))
        })?;
        let schema_path = self.root.join(&entry.schema);
        let schema = Schema::<f64>::load(&schema_path)?;
        let column = entry
            .label_column
            .clone()
            .or_else(|| schema.label.as_ref().map(|l| l.column.clone()))
            .ok_or_else(|| Error::Schema(format!("`{name}`: no label column")))?;
        let (min, max) = entry
            .label_bounds
            .or_else(|| schema.label.as_ref().map(|l| (l.min, l.max)))
            .ok_or_else(|| Error::Schema(format!("`{name}`: no label bounds")))?;
        let task = entry
            .task
            .or(schema.task)
            .ok_or_else(|| Error::Schema(format!("`{name}`: no task")))?;
        Ok(DatasetSource {
            name: name.to_string(),
            csv: self.root.join(&entry.csv),
            features: schema.features,
            label: LabelSpec { column, min, max },
            task,
        })
    }
}

impl DatasetSource {
    /// Reads the CSV and clips labels to the public bounds.
    pub fn load(&self) -> Result<Dataset<f64>> {
        if !self.csv.exists() {
            return Err(Error::invalid(format!(
                "data file {} for `{}` is missing; see datasets/README.md for how to fetch it",
                self.csv.display(),
                self.name
            )));
        }
        let data = load_csv(&self.csv, &self.features, &self.label.column)?;
        clip_labels(data, self.label.min, self.label.max)
    }
}
