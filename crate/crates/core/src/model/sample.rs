use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use super::{label_union, ComponentSpec, LabelSet, ModelError, TransformSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BuildStatus {
    Ok,
    Failed,
}

/// A generated sample and its ground-truth labels.
#[derive(Clone, Debug, PartialEq)]
pub struct SampleRecord {
    pub id: String,
    pub component_ids: Vec<String>,
    pub labels: LabelSet,
    pub artifact_path: PathBuf,
    pub build_status: BuildStatus,
}

impl SampleRecord {
    /// A not-yet-built sample whose labels are the union of its components'.
    pub fn planned(id: impl Into<String>, components: &[&ComponentSpec]) -> Result<Self, ModelError> {
        Ok(Self {
            id: id.into(),
            component_ids: components.iter().map(|c| c.id().to_owned()).collect(),
            labels: label_union(components.iter().copied())?,
            artifact_path: PathBuf::new(),
            build_status: BuildStatus::Failed,
        })
    }

    /// Adds the tags of an applied transform. The component list is untouched.
    pub fn record_transform(&mut self, transform: &TransformSpec) {
        self.labels.extend_from(transform.labels());
    }
}
