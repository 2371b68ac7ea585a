//! On-disk component archives.
//!
//! One directory per library:
//!
//! ```text
//! <root>/<library>/library.json    metadata, component list, discarded exports
//! <root>/<library>/lib<library>.a  archive with renamed symbols
//! <root>/<library>/<id>.stub.c     call stub per component
//! <root>/<library>/<id>.labels     one label per line, sorted
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::model::{ArchiveRef, ArchiveSource, ComponentSpec, Label, LabelSet, ModelError};
use crate::slicer::Extraction;

pub const LIBRARY_FILE: &str = "library.json";

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{}: {reason}", path.display())]
    Invalid { path: PathBuf, reason: String },
    #[error("{} already exists (pass --force to overwrite)", .0.display())]
    Exists(PathBuf),
    #[error("no component libraries under {}", .0.display())]
    Empty(PathBuf),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct ComponentEntry {
    id: String,
    seed_function: String,
    export_name: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DiscardedExport {
    pub export: String,
    pub reason: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
struct LibraryFile {
    name: String,
    version: String,
    prefix: String,
    source_sha256: String,
    archive: String,
    archive_sha256: String,
    components: Vec<ComponentEntry>,
    discarded: Vec<DiscardedExport>,
}

/// Components of one library together with their shared archive.
#[derive(Clone, Debug)]
pub struct ComponentLibrary {
    pub name: String,
    pub version: String,
    pub prefix: String,
    pub dir: PathBuf,
    pub archive_path: PathBuf,
    pub archive_ref: ArchiveRef,
    pub components: Vec<ComponentSpec>,
    pub discarded: Vec<DiscardedExport>,
}

fn invalid(path: &Path, reason: impl Into<String>) -> CorpusError {
    CorpusError::Invalid {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Writes an extraction result under `root/<library>`. An existing
/// directory is replaced only when `overwrite` is set.
pub fn write_component_archive(extraction: &Extraction, root: &Path, overwrite: bool) -> Result<PathBuf, CorpusError> {
    let name = &extraction.library.name;
    let dir = root.join(name);
    if dir.exists() {
        if !overwrite {
            return Err(CorpusError::Exists(dir));
        }
        fs::remove_dir_all(&dir)?;
    }
    fs::create_dir_all(&dir)?;

    let archive = format!("lib{name}.a");
    fs::write(dir.join(&archive), &extraction.renamed_archive)?;
    let mut entries = Vec::with_capacity(extraction.components.len());
    for c in &extraction.components {
        fs::write(dir.join(format!("{}.stub.c", c.id())), c.stub_source())?;
        let mut labels = c.labels().to_strings().join("\n");
        labels.push('\n');
        fs::write(dir.join(format!("{}.labels", c.id())), labels)?;
        entries.push(ComponentEntry {
            id: c.id().to_owned(),
            seed_function: c.seed_function().to_owned(),
            export_name: c.export_name().to_owned(),
        });
    }
    let file = LibraryFile {
        name: name.clone(),
        version: extraction.library.version.clone(),
        prefix: extraction.prefix.clone(),
        source_sha256: extraction.source_ref.to_string(),
        archive,
        archive_sha256: ArchiveRef::from_bytes(&extraction.renamed_archive).to_string(),
        components: entries,
        discarded: extraction
            .discarded()
            .map(|(export, reason)| DiscardedExport {
                export: export.to_owned(),
                reason: reason.to_owned(),
            })
            .collect(),
    };
    let mut json = serde_json::to_string_pretty(&file).expect("library metadata serializes");
    json.push('\n');
    fs::write(dir.join(LIBRARY_FILE), json)?;
    Ok(dir)
}

impl ComponentLibrary {
    pub fn load(dir: &Path) -> Result<Self, CorpusError> {
        let meta_path = dir.join(LIBRARY_FILE);
        let text = fs::read_to_string(&meta_path)?;
        let file: LibraryFile = serde_json::from_str(&text).map_err(|e| invalid(&meta_path, e.to_string()))?;

        let archive_path = dir.join(&file.archive);
        let bytes = fs::read(&archive_path)?;
        let archive_ref = ArchiveRef::from_bytes(&bytes);
        if archive_ref.as_str() != file.archive_sha256 {
            return Err(invalid(&archive_path, "archive hash does not match library.json"));
        }

        let mut components = Vec::with_capacity(file.components.len());
        for entry in &file.components {
            let stub = fs::read_to_string(dir.join(format!("{}.stub.c", entry.id)))?;
            let labels_path = dir.join(format!("{}.labels", entry.id));
            let labels = fs::read_to_string(&labels_path)?
                .lines()
                .filter(|l| !l.trim().is_empty())
                .map(|l| l.trim().parse::<Label>())
                .collect::<Result<LabelSet, _>>()
                .map_err(|e| invalid(&labels_path, e.to_string()))?;
            components.push(ComponentSpec::new(
                entry.id.clone(),
                file.name.clone(),
                entry.seed_function.clone(),
                entry.export_name.clone(),
                labels,
                stub,
                archive_ref.clone(),
            )?);
        }
        if components.is_empty() {
            return Err(invalid(&meta_path, "library has no components"));
        }
        components.sort_by(|a, b| a.id().cmp(b.id()));

        Ok(Self {
            name: file.name,
            version: file.version,
            prefix: file.prefix,
            dir: dir.to_path_buf(),
            archive_path,
            archive_ref,
            components,
            discarded: file.discarded,
        })
    }
}

/// Every component library under one directory, sorted by name.
#[derive(Clone, Debug)]
pub struct Corpus {
    pub root: PathBuf,
    pub libraries: Vec<ComponentLibrary>,
    archives: BTreeMap<ArchiveRef, PathBuf>,
}

impl Corpus {
    pub fn load(root: &Path) -> Result<Self, CorpusError> {
        let mut dirs: Vec<PathBuf> = fs::read_dir(root)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.join(LIBRARY_FILE).is_file())
            .collect();
        dirs.sort();
        let libraries = dirs
            .iter()
            .map(|d| ComponentLibrary::load(d))
            .collect::<Result<Vec<_>, _>>()?;
        Self::from_libraries(root, libraries)
    }

    pub fn from_libraries(root: &Path, mut libraries: Vec<ComponentLibrary>) -> Result<Self, CorpusError> {
        if libraries.is_empty() {
            return Err(CorpusError::Empty(root.to_path_buf()));
        }
        libraries.sort_by(|a, b| a.name.cmp(&b.name));
        for pair in libraries.windows(2) {
            if pair[0].name == pair[1].name {
                return Err(invalid(root, format!("library `{}` appears twice", pair[0].name)));
            }
        }
        let archives = libraries
            .iter()
            .map(|l| (l.archive_ref.clone(), l.archive_path.clone()))
            .collect();
        Ok(Self {
            root: root.to_path_buf(),
            libraries,
            archives,
        })
    }

    /// Number of components per library, in library order.
    pub fn library_sizes(&self) -> Vec<usize> {
        self.libraries.iter().map(|l| l.components.len()).collect()
    }

    pub fn component_count(&self) -> usize {
        self.libraries.iter().map(|l| l.components.len()).sum()
    }

    pub fn component(&self, library: usize, index: usize) -> &ComponentSpec {
        &self.libraries[library].components[index]
    }

    pub fn find(&self, id: &str) -> Option<&ComponentSpec> {
        self.libraries.iter().flat_map(|l| &l.components).find(|c| c.id() == id)
    }
}

impl ArchiveSource for Corpus {
    fn archive_path(&self, reference: &ArchiveRef) -> Option<PathBuf> {
        self.archives.get(reference).cloned()
    }
}

/// Hash over every library's archive and every component's id and labels.
pub fn corpus_fingerprint(corpus: &Corpus) -> String {
    let mut h = Sha256::new();
    for lib in &corpus.libraries {
        h.update(lib.name.as_bytes());
        h.update([0]);
        h.update(lib.archive_ref.as_str().as_bytes());
        h.update([0]);
        for c in &lib.components {
            h.update(c.id().as_bytes());
            h.update([0]);
            for l in c.labels().iter() {
                h.update(l.to_string().as_bytes());
                h.update([0]);
            }
        }
    }
    hex::encode(h.finalize())
}
