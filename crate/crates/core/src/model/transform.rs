use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{Label, LabelSet, ModelError};
use crate::toolchain::{describe, run_with_timeout, ToolError, ToolchainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    /// Operates on a built binary.
    Artifact,
    /// Operates on a rendered project directory.
    Source,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TransformAction {
    Identity,
    /// Removes the symbol table and debug information.
    StripSymbols,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TransformSpec {
    id: String,
    kind: TransformKind,
    labels: LabelSet,
    action: TransformAction,
}

impl TransformSpec {
    pub fn new(id: impl Into<String>, kind: TransformKind, labels: LabelSet, action: TransformAction) -> Self {
        Self {
            id: id.into(),
            kind,
            labels,
            action,
        }
    }

    /// Symbol stripping of built binaries, tagged `transform-strip`.
    pub fn strip() -> Self {
        let labels = std::iter::once(Label::new("transform", "strip").expect("valid label")).collect();
        Self::new("strip", TransformKind::Artifact, labels, TransformAction::StripSymbols)
    }

    /// A transform of the given kind that copies its target unchanged.
    pub fn identity(kind: TransformKind) -> Self {
        Self::new("identity", kind, LabelSet::new(), TransformAction::Identity)
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum TransformTarget {
    Source(PathBuf),
    Artifact(PathBuf),
}

impl TransformTarget {
    pub fn kind(&self) -> TransformKind {
        match self {
            TransformTarget::Source(_) => TransformKind::Source,
            TransformTarget::Artifact(_) => TransformKind::Artifact,
        }
    }

    pub fn path(&self) -> &Path {
        match self {
            TransformTarget::Source(p) | TransformTarget::Artifact(p) => p,
        }
    }
}

/// Applies `transform` to `target`, writing the result to `dest`.
///
/// The caller records the transform's labels on the owning sample with
/// [`super::SampleRecord::record_transform`].
pub fn apply_transform(
    transform: &TransformSpec,
    target: &TransformTarget,
    dest: &Path,
    toolchain: &ToolchainConfig,
) -> Result<TransformTarget, ModelError> {
    if transform.kind != target.kind() {
        return Err(ModelError::KindMismatch {
            transform: transform.id.clone(),
            expected: transform.kind,
            actual: target.kind(),
        });
    }
    match (transform.action, target) {
        (TransformAction::Identity, TransformTarget::Source(dir)) => {
            crate::toolchain::copy_dir(dir, dest)?;
        }
        (TransformAction::Identity, TransformTarget::Artifact(file)) => {
            fs::copy(file, dest)?;
        }
        (TransformAction::StripSymbols, TransformTarget::Artifact(file)) => {
            let mut cmd = toolchain.objcopy();
            cmd.arg("--strip-all").arg(file).arg(dest);
            let out = run_with_timeout(&mut cmd, toolchain.timeout()).map_err(|e| match e {
                ToolError::Missing { command, source } => ModelError::ToolMissing { command, source },
                ToolError::Io(e) => ModelError::Io(e),
            })?;
            if !out.success() {
                return Err(ModelError::ToolFailed {
                    tool: describe(&cmd),
                    log: out.log,
                });
            }
        }
        (TransformAction::StripSymbols, TransformTarget::Source(_)) => {
            return Err(ModelError::KindMismatch {
                transform: transform.id.clone(),
                expected: TransformKind::Artifact,
                actual: TransformKind::Source,
            });
        }
    }
    Ok(match target {
        TransformTarget::Source(_) => TransformTarget::Source(dest.to_path_buf()),
        TransformTarget::Artifact(_) => TransformTarget::Artifact(dest.to_path_buf()),
    })
}
