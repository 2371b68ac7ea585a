//! Declarative library recipes.
//!
//! ```toml
//! name = "tinymath"
//! version = "0.1.0"
//! # either a prebuilt archive ...
//! archive = "prebuilt/libtinymath.a"
//! # ... or a command that produces one
//! build_cmd = "$CC $CFLAGS -c $SRC_DIR/tinymath.c -o t.o && $AR rcsD libtinymath.a t.o"
//! artifact = "libtinymath.a"
//! headers = "include"
//! ```
//!
//! Relative paths resolve against the recipe file's directory. A build
//! command runs under `sh -c` in a scratch directory with `CC`, `AR`,
//! `CFLAGS` (the slicing strategy's compile flags) and `SRC_DIR` (the recipe
//! directory) set; `artifact` is relative to that scratch directory.

use std::path::{Path, PathBuf};
use std::process::Command;

use serde::{Deserialize, Serialize};

use crate::slicer::SliceError;
use crate::toolchain::{run_with_timeout, ToolchainConfig};

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RecipeFile {
    name: String,
    version: Option<String>,
    archive: Option<PathBuf>,
    build_cmd: Option<String>,
    artifact: Option<PathBuf>,
    headers: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub enum RecipeSource {
    Archive(PathBuf),
    Build { cmd: String, artifact: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Recipe {
    pub name: String,
    pub version: String,
    pub source: RecipeSource,
    pub headers: Option<PathBuf>,
    pub dir: PathBuf,
}

/// A library ready for slicing: a named archive on disk.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct LibraryRecipe {
    pub name: String,
    pub version: String,
    pub archive_path: PathBuf,
    pub header_dir: Option<PathBuf>,
}

impl LibraryRecipe {
    pub fn new(name: impl Into<String>, archive_path: impl Into<PathBuf>) -> Result<Self, SliceError> {
        let name = name.into();
        validate_name(&name).map_err(|reason| SliceError::Recipe {
            path: PathBuf::from(&name),
            reason,
        })?;
        Ok(Self {
            name,
            version: "0".into(),
            archive_path: archive_path.into(),
            header_dir: None,
        })
    }
}

/// Library names become label prefixes and file names: C-identifier
/// characters only.
pub fn validate_name(name: &str) -> Result<(), String> {
    let mut chars = name.chars();
    let ok_first = chars.next().is_some_and(|c| c.is_ascii_alphabetic() || c == '_');
    if ok_first && chars.all(|c| c.is_ascii_alphanumeric() || c == '_') {
        Ok(())
    } else {
        Err(format!("library name `{name}` must be a C identifier"))
    }
}

impl Recipe {
    pub fn load(path: &Path) -> Result<Self, SliceError> {
        let err = |reason: String| SliceError::Recipe {
            path: path.to_path_buf(),
            reason,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let file: RecipeFile = toml::from_str(&text).map_err(|e| err(e.to_string()))?;
        validate_name(&file.name).map_err(err)?;
        let dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        let dir = std::fs::canonicalize(&dir).unwrap_or(dir);
        let source = match (file.archive, file.build_cmd, file.artifact) {
            (Some(archive), None, None) => RecipeSource::Archive(dir.join(archive)),
            (None, Some(cmd), Some(artifact)) => RecipeSource::Build { cmd, artifact },
            _ => {
                return Err(err(
                    "expected either `archive` or both `build_cmd` and `artifact`".into(),
                ))
            }
        };
        Ok(Self {
            name: file.name,
            version: file.version.unwrap_or_else(|| "0".into()),
            source,
            headers: file.headers.map(|h| dir.join(h)),
            dir,
        })
    }

    /// Resolves the recipe to an archive, running its build command inside
    /// `work_dir` when it has one.
    pub fn prepare(&self, toolchain: &ToolchainConfig, work_dir: &Path) -> Result<LibraryRecipe, SliceError> {
        let archive_path = match &self.source {
            RecipeSource::Archive(path) => path.clone(),
            RecipeSource::Build { cmd, artifact } => {
                std::fs::create_dir_all(work_dir)?;
                let mut command = Command::new("sh");
                command.arg("-c").arg(cmd).current_dir(work_dir);
                for (key, value) in toolchain.library_env() {
                    command.env(key, value);
                }
                command.env("SRC_DIR", &self.dir);
                let out = run_with_timeout(&mut command, toolchain.timeout() * 10)?;
                if !out.success() {
                    return Err(SliceError::RecipeBuild {
                        name: self.name.clone(),
                        log: out.log,
                    });
                }
                work_dir.join(artifact)
            }
        };
        if !archive_path.is_file() {
            return Err(SliceError::Recipe {
                path: archive_path,
                reason: "archive does not exist".into(),
            });
        }
        Ok(LibraryRecipe {
            name: self.name.clone(),
            version: self.version.clone(),
            archive_path,
            header_dir: self.headers.clone(),
        })
    }
}
