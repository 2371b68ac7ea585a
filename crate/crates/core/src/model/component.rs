use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{Label, LabelSet, ModelError};

/// Content address of a renamed library archive (hex SHA-256).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArchiveRef(String);

impl ArchiveRef {
    pub fn from_bytes(bytes: &[u8]) -> Self {
        Self(hex::encode(Sha256::digest(bytes)))
    }

    pub fn from_hex(hex: impl Into<String>) -> Self {
        Self(hex.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ArchiveRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// One labeled slice of a library, with the C stub that calls into it.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ComponentSpec {
    id: String,
    library_id: String,
    seed_function: String,
    export_name: String,
    labels: LabelSet,
    stub_source: String,
    archive_ref: ArchiveRef,
}

impl ComponentSpec {
    /// `seed_function` is the export's original name; `export_name` is the
    /// symbol it carries in the renamed archive.
    pub fn new(
        id: impl Into<String>,
        library_id: impl Into<String>,
        seed_function: impl Into<String>,
        export_name: impl Into<String>,
        labels: LabelSet,
        stub_source: String,
        archive_ref: ArchiveRef,
    ) -> Result<Self, ModelError> {
        let spec = Self {
            id: id.into(),
            library_id: library_id.into(),
            seed_function: seed_function.into(),
            export_name: export_name.into(),
            labels,
            stub_source,
            archive_ref,
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), ModelError> {
        let invalid = |reason: String| ModelError::InvalidComponent {
            id: self.id.clone(),
            reason,
        };
        let seed = Label::new(&self.library_id, &self.seed_function)?;
        if !self.labels.contains(&seed) {
            return Err(invalid(format!("labels lack the seed label {seed}")));
        }
        if let Some(l) = self.labels.iter().find(|l| l.library() != self.library_id) {
            return Err(invalid(format!(
                "label {l} does not belong to library {}",
                self.library_id
            )));
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn library_id(&self) -> &str {
        &self.library_id
    }

    pub fn seed_function(&self) -> &str {
        &self.seed_function
    }

    pub fn export_name(&self) -> &str {
        &self.export_name
    }

    pub fn labels(&self) -> &LabelSet {
        &self.labels
    }

    pub fn stub_source(&self) -> &str {
        &self.stub_source
    }

    pub fn archive_ref(&self) -> &ArchiveRef {
        &self.archive_ref
    }

    /// Name of the C function defined by the stub.
    pub fn stub_symbol(&self) -> String {
        stub_symbol_for(&self.export_name)
    }
}

pub fn stub_symbol_for(export_name: &str) -> String {
    format!("call_{export_name}")
}

/// C source of the call stub for a (renamed) export.
///
/// The export is declared without parameters and called through a cast, so
/// argument values are unspecified at run time.
pub fn stub_source_for(export_name: &str) -> String {
    let stub = stub_symbol_for(export_name);
    format!(
        "extern void {export_name}(void);\n\
         \n\
         void {stub}(void)\n\
         {{\n    ((void (*)(void)){export_name})();\n}}\n"
    )
}
