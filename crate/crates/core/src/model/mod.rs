//! Components, blueprints, transforms and the label algebra over them.
//!
//! A sample's ground truth is the union of the label sets of everything that
//! went into it, and two samples are as similar as the Jaccard index of their
//! label sets.

mod blueprint;
mod component;
mod label;
mod sample;
mod transform;

use thiserror::Error;

pub use blueprint::{build_project, render_blueprint, ArchiveSource, Blueprint, BuildOutcome, ProjectDir};
pub use component::{stub_source_for, stub_symbol_for, ArchiveRef, ComponentSpec};
pub use label::{Label, LabelSet};
pub use sample::{BuildStatus, SampleRecord};
pub use transform::{apply_transform, TransformAction, TransformKind, TransformSpec, TransformTarget};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid label `{0}`")]
    InvalidLabel(String),
    #[error("invalid component {id}: {reason}")]
    InvalidComponent { id: String, reason: String },
    #[error("no components")]
    NoComponents,
    #[error("undefined similarity: both label sets are empty")]
    UndefinedSimilarity,
    #[error("duplicate component id `{0}`")]
    DuplicateComponent(String),
    #[error("missing archive content for component `{component}` ({reference})")]
    MissingArchive { component: String, reference: String },
    #[error("transform `{transform}` is a {expected:?} transform but the target is a {actual:?}")]
    KindMismatch {
        transform: String,
        expected: TransformKind,
        actual: TransformKind,
    },
    #[error("blueprint `{0}` is missing a required placeholder: {1}")]
    BadBlueprint(String, &'static str),
    #[error("tool `{command}` could not be run: {source}")]
    ToolMissing {
        command: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{tool} failed: {log}")]
    ToolFailed { tool: String, log: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Union of the label sets of `components`.
pub fn label_union<'a, I>(components: I) -> Result<LabelSet, ModelError>
where
    I: IntoIterator<Item = &'a ComponentSpec>,
{
    let mut iter = components.into_iter().peekable();
    if iter.peek().is_none() {
        return Err(ModelError::NoComponents);
    }
    let mut out = LabelSet::new();
    for c in iter {
        out.extend_from(c.labels());
    }
    Ok(out)
}

/// Jaccard index `|a ∩ b| / |a ∪ b|` of two label sets.
pub fn ground_truth_similarity(a: &LabelSet, b: &LabelSet) -> Result<f64, ModelError> {
    let union = a.union_len(b);
    if union == 0 {
        return Err(ModelError::UndefinedSimilarity);
    }
    Ok(a.intersection_len(b) as f64 / union as f64)
}
